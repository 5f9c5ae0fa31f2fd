//! Benchmark data: the second-order nonlinear-feedback demo process, a
//! Bouc-Wen hysteretic oscillator, multisine excitation and CSV storage.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// States beyond this magnitude abort an integration.
const BLOW_UP: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    /// Sample time in seconds.
    pub ts: f64,
    pub split: Split,
}

impl Dataset {
    pub fn new(u: Vec<f64>, y: Vec<f64>, ts: f64, split: Split) -> Result<Self> {
        if u.len() != y.len() {
            return Err(Error::Dimension {
                expected: u.len(),
                actual: y.len(),
                context: "dataset output length",
            });
        }
        if !(ts > 0.0) {
            return Err(Error::InvalidArgument(format!("sample time must be positive, got {ts}")));
        }
        Ok(Self { u, y, ts, split })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Root mean square of the output.
    pub fn output_rms(&self) -> f64 {
        (self.y.iter().map(|v| v * v).sum::<f64>() / self.len().max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Nonlinear feedback `f(y)` of the demo process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Feedback {
    /// `(exp(rate * y) - 1) / rate`; `rate = 1` gives `exp(y) - 1`.
    ExpMinusOne { rate: f64 },
    Linear,
}

impl Default for Feedback {
    fn default() -> Self {
        Self::ExpMinusOne { rate: 1.0 }
    }
}

impl Feedback {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            Self::ExpMinusOne { rate } => (rate * y).exp_m1() / rate,
            Self::Linear => y,
        }
    }
}

/// `y'' + a1 y' + a0 f(y) = b0 u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoProcessParams {
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub feedback: Feedback,
    pub ts: f64,
    /// RK4 steps per sample.
    pub oversample: usize,
}

impl Default for DemoProcessParams {
    fn default() -> Self {
        Self {
            a0: 15.0,
            a1: 3.0,
            b0: 15.0,
            feedback: Feedback::default(),
            ts: 0.05,
            oversample: 10,
        }
    }
}

/// `m y'' + c y' + k y + z = u`, `z' = alpha y' - beta (gamma |y'| |z|^(nu-1) z + delta y' |z|^nu)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoucWenParams {
    pub mass: f64,
    pub damping: f64,
    pub stiffness: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub nu: f64,
    pub ts: f64,
    #[serde(default = "default_oversample")]
    pub oversample: usize,
}

fn default_oversample() -> usize {
    10
}

#[derive(Deserialize)]
struct BoucWenFile {
    schema_version: u32,
    #[allow(dead_code)]
    source: String,
    #[serde(flatten)]
    params: BoucWenParams,
}

const BOUCWEN_V1: &str = include_str!("../data/boucwen_v1.json");

impl BoucWenParams {
    /// Parses a versioned parameter file.
    pub fn from_json(text: &str) -> Result<Self> {
        let f: BoucWenFile = serde_json::from_str(text)?;
        if f.schema_version != 1 {
            return Err(Error::Format(format!(
                "unsupported Bouc-Wen parameter schema {}",
                f.schema_version
            )));
        }
        f.params.validate()?;
        Ok(f.params)
    }

    pub fn benchmark() -> Self {
        Self::from_json(BOUCWEN_V1).expect("bundled Bouc-Wen parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !(self.ts > 0.0) || self.oversample == 0 {
            return Err(Error::InvalidArgument("Bouc-Wen mass, ts and oversample must be positive".into()));
        }
        Ok(())
    }
}

impl DemoProcessParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ts > 0.0) || self.oversample == 0 {
            return Err(Error::InvalidArgument("demo ts and oversample must be positive".into()));
        }
        Ok(())
    }
}

/// Fixed-step RK4 with zero-order-hold input; returns the state sampled at
/// every `ts` (before the input of that sample acts).
fn integrate<const N: usize>(
    u: &[f64],
    ts: f64,
    oversample: usize,
    x0: [f64; N],
    rhs: impl Fn(&[f64; N], f64) -> [f64; N],
) -> Result<Vec<[f64; N]>> {
    let h = ts / oversample as f64;
    let mut x = x0;
    let mut out = Vec::with_capacity(u.len());
    let axpy = |x: &[f64; N], k: &[f64; N], s: f64| -> [f64; N] {
        let mut r = *x;
        for i in 0..N {
            r[i] += s * k[i];
        }
        r
    };
    for (n, &uk) in u.iter().enumerate() {
        out.push(x);
        for sub in 0..oversample {
            let k1 = rhs(&x, uk);
            let k2 = rhs(&axpy(&x, &k1, h / 2.0), uk);
            let k3 = rhs(&axpy(&x, &k2, h / 2.0), uk);
            let k4 = rhs(&axpy(&x, &k3, h), uk);
            for i in 0..N {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if x.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP) {
                return Err(Error::IntegrationBlowUp {
                    time: n as f64 * ts + (sub + 1) as f64 * h,
                });
            }
        }
    }
    Ok(out)
}

/// Demo process response to a sampled input, starting from rest.
pub fn simulate_demo_process(params: &DemoProcessParams, u: &[f64]) -> Result<Vec<f64>> {
    params.validate()?;
    let p = *params;
    let states = integrate(u, p.ts, p.oversample, [0.0, 0.0], move |x, u| {
        [x[1], p.b0 * u - p.a1 * x[1] - p.a0 * p.feedback.eval(x[0])]
    })?;
    Ok(states.iter().map(|x| x[0]).collect())
}

/// Bouc-Wen displacement response from rest.
pub fn simulate_boucwen(params: &BoucWenParams, u: &[f64]) -> Result<Vec<f64>> {
    simulate_boucwen_from(params, u, [0.0; 3])
}

/// Bouc-Wen response from state `[y, y', z]`.
pub fn simulate_boucwen_from(params: &BoucWenParams, u: &[f64], x0: [f64; 3]) -> Result<Vec<f64>> {
    Ok(boucwen_states(params, u, x0)?.iter().map(|x| x[0]).collect())
}

/// Sampled `[y, y', z]` trajectory.
pub fn boucwen_states(params: &BoucWenParams, u: &[f64], x0: [f64; 3]) -> Result<Vec<[f64; 3]>> {
    params.validate()?;
    let p = *params;
    integrate(u, p.ts, p.oversample, x0, move |x, u| {
        let (y, v, z) = (x[0], x[1], x[2]);
        // |z|^(nu-1) z written as sign(z) |z|^nu to stay finite at z = 0
        let sign = if z == 0.0 { 0.0 } else { z.signum() };
        let znu = z.abs().powf(p.nu);
        let zdot = p.alpha * v - p.beta * (p.gamma * v.abs() * sign * znu + p.delta * v * znu);
        [v, (u - p.damping * v - p.stiffness * y - z) / p.mass, zdot]
    })
}

/// Random-phase multisine over one period of `n` samples with equal line
/// amplitudes on `[f_min, f_max]` Hz and the requested RMS value.
pub fn multisine(n: usize, ts: f64, f_min: f64, f_max: f64, rms: f64, seed: u64) -> Result<Vec<f64>> {
    if n == 0 || !(ts > 0.0) || !(f_max >= f_min) || f_min < 0.0 || rms < 0.0 {
        return Err(Error::InvalidArgument("invalid multisine specification".into()));
    }
    let df = 1.0 / (n as f64 * ts);
    let nyquist = n / 2;
    let lines: Vec<usize> = (1..=nyquist)
        .filter(|&k| {
            let f = k as f64 * df;
            f >= f_min && f <= f_max && !(n % 2 == 0 && k == nyquist)
        })
        .collect();
    if lines.is_empty() {
        return Ok(vec![0.0; n]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<f64> = lines.iter().map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let amp = rms * (2.0 / lines.len() as f64).sqrt();
    Ok((0..n)
        .map(|t| {
            lines
                .iter()
                .zip(&phases)
                .map(|(&k, ph)| (2.0 * PI * (k * t) as f64 / n as f64 + ph).cos())
                .sum::<f64>()
                * amp
        })
        .collect())
}

/// Adds white Gaussian noise at the given signal-to-noise ratio.
pub fn add_noise(y: &mut [f64], snr_db: f64, seed: u64) {
    let rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len().max(1) as f64).sqrt();
    let sd = rms * 10f64.powf(-snr_db / 20.0);
    if !(sd > 0.0) {
        return;
    }
    let normal = Normal::new(0.0, sd).expect("positive standard deviation");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in y.iter_mut() {
        *v += normal.sample(&mut rng);
    }
}

/// Excitation and split sizes for the generated benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Peak deviation from `offset` (demo) or RMS (Bouc-Wen).
    pub amplitude: f64,
    pub offset: f64,
    /// Additive output noise, if any.
    pub snr_db: Option<f64>,
}

impl ExcitationConfig {
    pub fn demo() -> Self {
        Self {
            n_train: 2000,
            n_val: 1000,
            n_test: 1000,
            f_min: 0.01,
            f_max: 1.5,
            amplitude: 0.5,
            offset: 0.5,
            snr_db: None,
        }
    }

    pub fn boucwen() -> Self {
        Self {
            n_train: 2000,
            n_val: 1000,
            n_test: 1000,
            f_min: 5.0,
            f_max: 150.0,
            amplitude: 50.0,
            offset: 0.0,
            snr_db: None,
        }
    }
}

/// Multisine rescaled to `offset +- amplitude` peak.
pub fn demo_excitation(n: usize, ts: f64, cfg: &ExcitationConfig, seed: u64) -> Result<Vec<f64>> {
    let base = multisine(n, ts, cfg.f_min, cfg.f_max, 1.0, seed)?;
    let peak = base.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { cfg.amplitude / peak } else { 0.0 };
    Ok(base.into_iter().map(|v| cfg.offset + scale * v).collect())
}

/// Seeds of the three splits derived from one user seed.
fn split_seeds(seed: u64) -> [u64; 3] {
    [seed.wrapping_mul(3), seed.wrapping_mul(3) + 1, seed.wrapping_mul(3) + 2]
}

pub fn generate_demo(params: &DemoProcessParams, cfg: &ExcitationConfig, seed: u64) -> Result<DatasetSplits> {
    let make = |n: usize, s: u64, split: Split| -> Result<Dataset> {
        let u = demo_excitation(n, params.ts, cfg, s)?;
        let mut y = simulate_demo_process(params, &u)?;
        if let Some(snr) = cfg.snr_db {
            add_noise(&mut y, snr, s ^ 0x5eed);
        }
        Dataset::new(u, y, params.ts, split)
    };
    let [a, b, c] = split_seeds(seed);
    Ok(DatasetSplits {
        train: make(cfg.n_train, a, Split::Train)?,
        val: make(cfg.n_val, b, Split::Val)?,
        test: make(cfg.n_test, c, Split::Test)?,
    })
}

pub fn generate_boucwen(params: &BoucWenParams, cfg: &ExcitationConfig, seed: u64) -> Result<DatasetSplits> {
    let make = |n: usize, s: u64, split: Split| -> Result<Dataset> {
        let u: Vec<f64> = multisine(n, params.ts, cfg.f_min, cfg.f_max, cfg.amplitude, s)?
            .into_iter()
            .map(|v| v + cfg.offset)
            .collect();
        let mut y = simulate_boucwen(params, &u)?;
        if let Some(snr) = cfg.snr_db {
            add_noise(&mut y, snr, s ^ 0x5eed);
        }
        Dataset::new(u, y, params.ts, split)
    };
    let [a, b, c] = split_seeds(seed);
    Ok(DatasetSplits {
        train: make(cfg.n_train, a, Split::Train)?,
        val: make(cfg.n_val, b, Split::Val)?,
        test: make(cfg.n_test, c, Split::Test)?,
    })
}

/// JSON sidecar stored next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub ts: f64,
    pub split: Split,
    pub generator: String,
    pub seed: Option<u64>,
    #[serde(default)]
    pub config: serde_json::Value,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn dataset_to_csv(d: &Dataset) -> String {
    let mut s = String::with_capacity(32 * (d.len() + 1));
    s.push_str("k,u,y\n");
    for (k, (u, y)) in d.u.iter().zip(&d.y).enumerate() {
        s.push_str(&format!("{k},{u},{y}\n"));
    }
    s
}

/// Parses `k,u,y` CSV text (columns located by header name).
pub fn dataset_from_csv(text: &str, ts: f64, split: Split) -> Result<Dataset> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Format("empty dataset file".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Format(format!("dataset is missing column {name:?}")))
    };
    let (ck, cu, cy) = (col("k")?, col("u")?, col("y")?);
    let mut u = Vec::new();
    let mut y = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |c: usize| -> Result<f64> {
            f.get(c)
                .ok_or_else(|| Error::Format(format!("line {} is too short", n + 2)))?
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("line {}: cannot parse {:?}", n + 2, f.get(c))))
        };
        let k = get(ck)?;
        if k != n as f64 {
            return Err(Error::Format(format!("line {}: expected k = {n}, found {k}", n + 2)));
        }
        u.push(get(cu)?);
        y.push(get(cy)?);
    }
    Dataset::new(u, y, ts, split)
}

pub fn write_dataset(path: &Path, d: &Dataset, meta: &DatasetMeta) -> Result<()> {
    std::fs::write(path, dataset_to_csv(d))?;
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

/// Reads a dataset CSV and its sidecar (which supplies the sample time).
pub fn read_dataset(path: &Path) -> Result<(Dataset, DatasetMeta)> {
    let text = std::fs::read_to_string(path)?;
    let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    Ok((dataset_from_csv(&text, meta.ts, meta.split)?, meta))
}
