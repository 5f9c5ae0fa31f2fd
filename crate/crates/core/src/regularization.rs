//! Space-filling penalties and lambda studies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::TerminationReason;

/// Penalty added to the sum of squared output errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PenaltyMode {
    #[default]
    None,
    /// `lambda * psi_p^2`
    PsiSquared { lambda: f64 },
    /// `lambda * (psi_p - target)^2`
    TargetDeviation { lambda: f64, target: f64 },
}

impl PenaltyMode {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::None => true,
            Self::PsiSquared { lambda } => lambda >= 0.0 && lambda.is_finite(),
            Self::TargetDeviation { lambda, target } => {
                lambda >= 0.0 && lambda.is_finite() && target >= 0.0 && target.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid penalty {self:?}")))
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Self::None => 0.0,
            Self::PsiSquared { lambda } | Self::TargetDeviation { lambda, .. } => lambda,
        }
    }

    /// Same mode with a different strength.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        match *self {
            Self::None => Self::None,
            Self::PsiSquared { .. } => Self::PsiSquared { lambda },
            Self::TargetDeviation { target, .. } => Self::TargetDeviation { lambda, target },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::PsiSquared { .. } => "psi2",
            Self::TargetDeviation { .. } => "target",
        }
    }

    pub fn penalty(&self, psi: f64) -> f64 {
        match *self {
            Self::None => 0.0,
            Self::PsiSquared { lambda } => lambda * psi * psi,
            Self::TargetDeviation { lambda, target } => lambda * (psi - target) * (psi - target),
        }
    }

    /// `d penalty / d psi`
    pub fn derivative(&self, psi: f64) -> f64 {
        match *self {
            Self::None => 0.0,
            Self::PsiSquared { lambda } => 2.0 * lambda * psi,
            Self::TargetDeviation { lambda, target } => 2.0 * lambda * (psi - target),
        }
    }
}

/// Log-spaced grid `10^from, 10^(from+1), ..., 10^to`.
pub fn decade_grid(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|e| 10f64.powi(e)).collect()
}

/// Default strengths for the `psi^2` study.
pub fn default_psi_squared_grid() -> Vec<f64> {
    decade_grid(-4, 4)
}

/// Default strengths for the target-deviation study.
pub fn default_target_grid() -> Vec<f64> {
    decade_grid(-1, 6)
}

/// Result of one optimization inside a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub final_loss: f64,
    pub final_psi_p: f64,
    pub iterations: usize,
    pub reason: TerminationReason,
    /// Spectral radius per local state model.
    pub pole_radii: Vec<f64>,
}

impl SweepRow {
    pub fn all_stable(&self) -> bool {
        !self.pole_radii.is_empty() && self.pole_radii.iter().all(|&r| r < 1.0)
    }

    pub fn diverged(&self) -> bool {
        self.reason == TerminationReason::Divergence
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub mode: &'static str,
    pub target: Option<f64>,
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_HEADER: &str = "lambda,J,psi_p,psi_dev,iterations,reason,max_pole_radius";

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(SWEEP_HEADER);
        s.push('\n');
        for r in &self.rows {
            let dev = self.target.map_or(f64::NAN, |t| (r.final_psi_p - t).abs());
            let max_pole = r.pole_radii.iter().copied().fold(f64::NAN, f64::max);
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.lambda, r.final_loss, r.final_psi_p, dev, r.iterations, r.reason, max_pole
            ));
        }
        s
    }
}

/// Runs one independent optimization per strength in `lambdas` (in
/// parallel) and returns rows sorted by strength. Individual failures are
/// recorded as divergent rows.
pub fn lambda_sweep<F>(lambdas: &[f64], base: PenaltyMode, run: F) -> Result<SweepResult>
where
    F: Fn(PenaltyMode) -> Result<SweepRow> + Sync,
{
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument("lambda values must be finite and >= 0".into()));
    }
    if matches!(base, PenaltyMode::None) {
        return Err(Error::InvalidArgument("a sweep needs a penalty mode".into()));
    }
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rows = sorted
        .par_iter()
        .map(|&lambda| {
            run(base.with_lambda(lambda)).unwrap_or_else(|e| {
                log::warn!("sweep run at lambda = {lambda} failed: {e}");
                SweepRow {
                    lambda,
                    final_loss: f64::INFINITY,
                    final_psi_p: f64::NAN,
                    iterations: 0,
                    reason: TerminationReason::Divergence,
                    pole_radii: Vec::new(),
                }
            })
        })
        .collect();
    let target = match base {
        PenaltyMode::TargetDeviation { target, .. } => Some(target),
        _ => None,
    };
    Ok(SweepResult {
        mode: base.name(),
        target,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaRecommendation {
    pub lambda: f64,
    pub warning: Option<String>,
}

/// Smallest `lambda > 1` whose final `psi_p` is at or below `psi_reference`;
/// otherwise the row whose `psi_p` is closest to the reference, with a warning.
pub fn recommend_lambda(sweep: &SweepResult, psi_reference: f64) -> Result<LambdaRecommendation> {
    let usable: Vec<&SweepRow> = sweep
        .rows
        .iter()
        .filter(|r| !r.diverged() && r.final_psi_p.is_finite())
        .collect();
    if usable.is_empty() {
        return Err(Error::InvalidArgument("sweep has no usable rows".into()));
    }
    if let Some(r) = usable
        .iter()
        .filter(|r| r.lambda > 1.0 && r.final_psi_p <= psi_reference)
        .min_by(|a, b| a.lambda.total_cmp(&b.lambda))
    {
        return Ok(LambdaRecommendation {
            lambda: r.lambda,
            warning: None,
        });
    }
    let best = usable
        .iter()
        .min_by(|a, b| {
            (a.final_psi_p - psi_reference)
                .abs()
                .total_cmp(&(b.final_psi_p - psi_reference).abs())
        })
        .expect("non-empty");
    let warning = format!(
        "no lambda > 1 reached psi_p <= {psi_reference}; using closest match lambda = {} (psi_p = {})",
        best.lambda, best.final_psi_p
    );
    log::warn!("{warning}");
    Ok(LambdaRecommendation {
        lambda: best.lambda,
        warning: Some(warning),
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidArgument("spearman needs two equal-length series (n >= 2)".into()));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(lambda: f64, psi: f64) -> SweepRow {
        SweepRow {
            lambda,
            final_loss: lambda,
            final_psi_p: psi,
            iterations: 10,
            reason: TerminationReason::LossTol,
            pole_radii: vec![0.5],
        }
    }

    fn sweep(rows: Vec<SweepRow>) -> SweepResult {
        SweepResult {
            mode: "psi2",
            target: None,
            rows,
        }
    }

    #[test]
    fn zero_lambda_adds_nothing() {
        for mode in [
            PenaltyMode::PsiSquared { lambda: 0.0 },
            PenaltyMode::TargetDeviation { lambda: 0.0, target: 0.3 },
        ] {
            assert_eq!(mode.penalty(0.7), 0.0);
            assert_eq!(mode.derivative(0.7), 0.0);
        }
    }

    #[test]
    fn zero_deviation_adds_nothing() {
        let m = PenaltyMode::TargetDeviation { lambda: 1e3, target: 0.23 };
        assert_eq!(m.penalty(0.23), 0.0);
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(default_psi_squared_grid().len(), 9);
        assert_eq!(default_target_grid().len(), 8);
        assert_eq!(default_psi_squared_grid()[0], 1e-4);
        assert_eq!(*default_target_grid().last().unwrap(), 1e6);
    }

    #[test]
    fn sweep_rows_are_sorted_and_failures_recorded() {
        let res = lambda_sweep(&[10.0, 0.1, 1.0], PenaltyMode::PsiSquared { lambda: 0.0 }, |m| {
            if m.lambda() == 1.0 {
                Err(Error::Divergence { step: 3, magnitude: 1e7 })
            } else {
                Ok(row(m.lambda(), 0.3))
            }
        })
        .unwrap();
        let l: Vec<f64> = res.rows.iter().map(|r| r.lambda).collect();
        assert_eq!(l, vec![0.1, 1.0, 10.0]);
        assert!(res.rows[1].diverged());
    }

    #[test]
    fn empty_grid_is_rejected() {
        assert!(lambda_sweep(&[], PenaltyMode::PsiSquared { lambda: 0.0 }, |m| Ok(row(m.lambda(), 0.1)))
            .is_err());
    }

    #[test]
    fn recommendation_at_crossing() {
        let s = sweep(vec![
            row(0.1, 0.31),
            row(1.0, 0.29),
            row(10.0, 0.22),
            row(100.0, 0.16),
        ]);
        let r = recommend_lambda(&s, 0.23).unwrap();
        assert!(r.lambda > 1.0 && r.lambda <= 10.0);
        assert!(r.warning.is_none());
    }

    #[test]
    fn all_below_reference_picks_smallest_above_one() {
        let s = sweep(vec![row(0.1, 0.1), row(1.0, 0.1), row(10.0, 0.1), row(100.0, 0.1)]);
        assert_eq!(recommend_lambda(&s, 0.23).unwrap().lambda, 10.0);
    }

    #[test]
    fn fallback_warns() {
        let s = sweep(vec![row(0.1, 0.5), row(10.0, 0.4), row(100.0, 0.35)]);
        let r = recommend_lambda(&s, 0.23).unwrap();
        assert_eq!(r.lambda, 100.0);
        assert!(r.warning.is_some());
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        // one adjacent swap among 5: 1 - 6*2/(5*24) = 0.9
        assert!((spearman(&[1., 2., 3., 4., 5.], &[1., 2., 4., 3., 5.]).unwrap() - 0.9).abs() < 1e-12);
    }
}
