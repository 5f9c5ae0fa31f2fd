use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use lmssn::lolimot::{LolimotConfig, ValidationPolicy, DEFAULT_K_SIGMA};
use lmssn::optimize::OptimizerConfig;
use lmssn::regularization::PenaltyMode;
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    None,
    Psi2,
    Target,
}

/// Everything a `train` or `sweep` run depends on. Written back as
/// `config.json` in the run directory with all defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub n_x: usize,
    pub mode: Mode,
    pub lambda: f64,
    /// Target for `mode = target`; the initial model's psi_p when absent.
    pub psi_target: Option<f64>,
    /// Train on standardized signals (RMSE still reported in data units).
    pub normalize: bool,
    pub optimizer: OptimizerConfig,
    pub max_splits: usize,
    pub patience: usize,
    pub threshold: f64,
    pub snr_db: f64,
    pub k_sigma: f64,
    pub grid_m: usize,
    /// KLD/CHV every n-th optimizer iteration; endpoints only when absent.
    pub indicator_every: Option<usize>,
    /// Strength grid for `sweep`; the mode's default decades when absent.
    pub lambdas: Option<Vec<f64>>,
    /// Split dimension studied by `sweep`; the unregularized choice when absent.
    pub split_dim: Option<usize>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let policy = ValidationPolicy::default();
        Self {
            train: None,
            val: None,
            test: None,
            n_x: 2,
            mode: Mode::None,
            lambda: 0.0,
            psi_target: None,
            normalize: false,
            optimizer: OptimizerConfig::default(),
            max_splits: 8,
            patience: policy.patience,
            threshold: policy.threshold,
            snr_db: policy.snr_db,
            k_sigma: DEFAULT_K_SIGMA,
            grid_m: 5,
            indicator_every: None,
            lambdas: None,
            split_dim: None,
            seed: 0,
            out: None,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Run configuration (JSON)
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub psi_target: Option<f64>,
    #[arg(long)]
    pub max_splits: Option<usize>,
    #[arg(long)]
    pub grid_m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training data CSV
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Validation data CSV
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Test data CSV
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub n_x: Option<usize>,
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads the config file (if any), applies overrides and validates.
    /// Relative dataset paths in a file resolve against the file's directory.
    pub fn load(ov: &Overrides) -> Result<Self> {
        let cwd = std::env::current_dir()?;
        let mut cfg = match &ov.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
                let mut c: RunConfig = serde_json::from_str(&text)
                    .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
                let base = absolute(&cwd, path.parent().unwrap_or(Path::new(".")));
                for p in [&mut c.train, &mut c.val, &mut c.test, &mut c.out].into_iter().flatten() {
                    *p = absolute(&base, p);
                }
                c
            }
            None => RunConfig::default(),
        };
        let abs = |p: &PathBuf| absolute(&cwd, p);
        if let Some(v) = ov.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = ov.mode {
            cfg.mode = v;
        }
        if let Some(v) = ov.psi_target {
            cfg.psi_target = Some(v);
        }
        if let Some(v) = ov.max_splits {
            cfg.max_splits = v;
        }
        if let Some(v) = ov.grid_m {
            cfg.grid_m = v;
        }
        if let Some(v) = ov.seed {
            cfg.seed = v;
        }
        if let Some(v) = ov.n_x {
            cfg.n_x = v;
        }
        if let Some(v) = &ov.out {
            cfg.out = Some(abs(v));
        }
        if let Some(v) = &ov.train {
            cfg.train = Some(abs(v));
        }
        if let Some(v) = &ov.val {
            cfg.val = Some(abs(v));
        }
        if let Some(v) = &ov.test {
            cfg.test = Some(abs(v));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 {
            bail!(UsageError("n_x must be >= 1".into()));
        }
        self.lolimot(self.penalty(0.0))
            .validate()
            .map_err(|e| UsageError(e.to_string()))?;
        Ok(())
    }

    /// Penalty of the run; `initial_psi` fills a missing target.
    pub fn penalty(&self, initial_psi: f64) -> PenaltyMode {
        match self.mode {
            Mode::None => PenaltyMode::None,
            Mode::Psi2 => PenaltyMode::PsiSquared { lambda: self.lambda },
            Mode::Target => PenaltyMode::TargetDeviation {
                lambda: self.lambda,
                target: self.psi_target.unwrap_or(initial_psi),
            },
        }
    }

    pub fn lolimot(&self, penalty: PenaltyMode) -> LolimotConfig {
        LolimotConfig {
            k_sigma: self.k_sigma,
            max_splits: self.max_splits,
            grid_m: self.grid_m,
            penalty,
            optimizer: self.optimizer,
            policy: ValidationPolicy {
                threshold: self.threshold,
                patience: self.patience,
                snr_db: self.snr_db,
            },
            indicator_every: self.indicator_every,
            ..LolimotConfig::default()
        }
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| UsageError("no output directory (--out)".into()).into())
    }

    pub fn dataset(&self, which: &str) -> Result<&Path> {
        let p = match which {
            "train" => &self.train,
            "val" => &self.val,
            _ => &self.test,
        };
        p.as_deref()
            .ok_or_else(|| UsageError(format!("no {which} dataset given")).into())
    }

    pub fn write_snapshot(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("config.json"), text).context("writing config snapshot")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"n_x": 2, "lamda": 1}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"mode": "psi2", "lambda": 10}"#).unwrap();
        assert_eq!(c.penalty(0.0), PenaltyMode::PsiSquared { lambda: 10.0 });
    }

    #[test]
    fn snapshot_round_trip() {
        let c = RunConfig {
            mode: Mode::Target,
            psi_target: Some(0.25),
            lambdas: Some(vec![0.1, 1.0]),
            ..RunConfig::default()
        };
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_values_fail_validation() {
        let c = RunConfig {
            threshold: 1.5,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        let c = RunConfig {
            mode: Mode::Psi2,
            lambda: -1.0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
