//! Training of the local model parameters on the (possibly regularized)
//! simulation error, with per-iteration indicator logging.

mod bfgs;
mod objective;
mod runlog;

pub use bfgs::{minimize, IterationInfo, Minimum, Objective, OptimizerConfig, TerminationReason};
pub use objective::{ObjectiveSpec, ObjectiveValue};
pub use runlog::{RunLog, RunLogRow, TerminationReport};

use crate::error::Result;
use crate::metrics::{chv, kld_uniform, TrajectoryCloud};
use crate::model::LmssnModel;

/// Which iterations get the (more expensive) KLD and CHV indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndicatorTracking {
    /// Every `n`-th iteration plus the first and last.
    Every(usize),
    /// Only the initial and final iterate.
    Endpoints,
}

impl Default for IndicatorTracking {
    fn default() -> Self {
        Self::Every(1)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub theta: Vec<f64>,
    pub model: LmssnModel,
    pub log: RunLog,
    pub report: TerminationReport,
}

struct SpecObjective<'a>(&'a ObjectiveSpec);

impl Objective for SpecObjective<'_> {
    fn value_and_gradient(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (v, g) = self.0.value_and_gradient(x).ok().flatten()?;
        Some((v.value, g))
    }
}

/// Indicators of the scaled trajectory of `theta`: `(kld, chv)`.
fn expensive_indicators(spec: &ObjectiveSpec, theta: &[f64]) -> (f64, f64) {
    let run = || -> Result<(f64, f64)> {
        let model = spec.model(theta)?;
        let traj = model.simulate_with_guard(&spec.u, spec.guard)?;
        let cloud = TrajectoryCloud::new(model.scaling.scale_points(&traj.points), traj.dim)?;
        Ok((kld_uniform(&cloud, &spec.grid)?, chv(&cloud)?.volume))
    };
    run().unwrap_or((f64::NAN, f64::NAN))
}

/// Runs BFGS from `theta0` and records one log row per accepted iterate.
pub fn train(
    spec: &ObjectiveSpec,
    theta0: &[f64],
    config: &OptimizerConfig,
    tracking: IndicatorTracking,
) -> Result<TrainOutcome> {
    let mut log = RunLog::default();
    let mut pending: Vec<(usize, Vec<f64>)> = Vec::new();
    let min = minimize(&mut SpecObjective(spec), theta0, config, |info| {
        let parts = spec.evaluate(info.x).ok();
        log.rows.push(RunLogRow {
            iteration: info.iteration,
            loss: parts.map_or(f64::NAN, |p| p.loss),
            psi_p: parts.map_or(f64::NAN, |p| p.psi_p),
            kld: f64::NAN,
            chv: f64::NAN,
            objective: info.value,
            grad_norm: info.grad_norm,
            step: info.step,
        });
        let track = match tracking {
            IndicatorTracking::Every(n) => info.iteration % n.max(1) == 0,
            IndicatorTracking::Endpoints => info.iteration == 0,
        };
        if track {
            pending.push((log.rows.len() - 1, info.x.to_vec()));
        }
    })?;
    // final iterate always carries the full indicator set
    if let Some(last_row) = log.rows.len().checked_sub(1) {
        if pending.last().map(|(i, _)| *i) != Some(last_row) {
            pending.push((last_row, min.x.clone()));
        }
    }
    for (row, theta) in pending {
        let (kld, vol) = expensive_indicators(spec, &theta);
        log.rows[row].kld = kld;
        log.rows[row].chv = vol;
    }
    let model = spec.model(&min.x)?;
    let final_parts = if min.value.is_finite() {
        spec.evaluate(&min.x)?
    } else {
        ObjectiveValue {
            value: f64::INFINITY,
            loss: f64::INFINITY,
            psi_p: f64::NAN,
            diverged: true,
        }
    };
    let report = TerminationReport {
        reason: min.reason,
        iterations: min.iterations,
        evaluations: min.evaluations,
        final_objective: min.value,
        final_loss: final_parts.loss,
        final_psi_p: final_parts.psi_p,
    };
    Ok(TrainOutcome {
        theta: min.x,
        model,
        log,
        report,
    })
}
