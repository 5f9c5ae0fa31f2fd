//! Reproducible studies built from the library pieces: a single split of the
//! linear initial model optimized under different penalties, strength
//! sweeps over that split, and tree growth on normalized data.

use serde::Serialize;

use crate::datasets::{Dataset, DatasetSplits};
use crate::error::{Error, Result};
use crate::lolimot::{apply_split, lolimot_train, propose_splits, split_adapt, worst_region, LolimotConfig, LolimotResult, PartitionTree};
use crate::metrics::{space_filling_report, SpaceFillingReport, TrajectoryCloud, UniformGrid};
use crate::model::LmssnModel;
use crate::optimize::{train, IndicatorTracking, ObjectiveSpec, OptimizerConfig, TrainOutcome};
use crate::regularization::{lambda_sweep, PenaltyMode, SweepResult, SweepRow};

/// Indicators of a model's own trajectory under `u`, scaled by its frozen
/// transform.
pub fn trajectory_indicators(model: &LmssnModel, u: &[f64], grid: &UniformGrid) -> Result<SpaceFillingReport> {
    let traj = model.simulate(u)?;
    let cloud = TrajectoryCloud::new(model.scaling.scale_points(&traj.points), traj.dim)?;
    space_filling_report(&cloud, grid)
}

/// The initial model split once along `dim`, with the scaling adapted to the
/// initial trajectory. Every penalty variant starts from this skeleton.
#[derive(Debug, Clone)]
pub struct FirstSplitStudy {
    pub initial: LmssnModel,
    pub skeleton: LmssnModel,
    pub partition: PartitionTree,
    pub leaf: usize,
    pub dim: usize,
    pub train: Dataset,
    pub grid: UniformGrid,
}

impl FirstSplitStudy {
    pub fn new(initial: &LmssnModel, train: &Dataset, dim: usize, grid_m: usize, k_sigma: f64) -> Result<Self> {
        let tree = PartitionTree::new(initial.ext_dim());
        let adapted = split_adapt(initial, &tree, &train.u, k_sigma)?;
        let leaf = worst_region(&adapted, &train.u, &train.y)?;
        let cand = propose_splits(leaf, tree.leaf_region(leaf))?
            .into_iter()
            .find(|c| c.dim == dim)
            .ok_or_else(|| Error::InvalidArgument(format!("no split dimension {dim}")))?;
        let (skeleton, partition) = apply_split(&adapted, &tree, &cand, k_sigma)?;
        Ok(Self {
            initial: adapted,
            skeleton,
            partition,
            leaf,
            dim,
            train: train.clone(),
            grid: UniformGrid::new(initial.ext_dim(), grid_m)?,
        })
    }

    pub fn spec(&self, penalty: PenaltyMode) -> Result<ObjectiveSpec> {
        ObjectiveSpec::new(
            self.skeleton.clone(),
            self.train.u.clone(),
            self.train.y.clone(),
            penalty,
            self.grid.clone(),
        )
    }

    /// `psi_p` of the (unoptimized) split model, equal to that of the
    /// initial model since spawning does not change the trajectory.
    pub fn initial_psi(&self) -> Result<f64> {
        let spec = self.spec(PenaltyMode::None)?;
        Ok(spec.evaluate(&spec.initial_parameters())?.psi_p)
    }

    pub fn run(&self, penalty: PenaltyMode, config: &OptimizerConfig, tracking: IndicatorTracking) -> Result<TrainOutcome> {
        let spec = self.spec(penalty)?;
        train(&spec, &spec.initial_parameters(), config, tracking)
    }

    /// One optimization per strength, in parallel, sorted by strength.
    pub fn sweep(&self, lambdas: &[f64], base: PenaltyMode, config: &OptimizerConfig) -> Result<SweepResult> {
        lambda_sweep(lambdas, base, |penalty| {
            let out = self.run(penalty, config, IndicatorTracking::Endpoints)?;
            Ok(SweepRow {
                lambda: penalty.lambda(),
                final_loss: out.report.final_loss,
                final_psi_p: out.report.final_psi_p,
                iterations: out.report.iterations,
                reason: out.report.reason,
                pole_radii: out.model.local_pole_radii()?,
            })
        })
    }
}

/// Affine map applied to inputs and outputs before training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Normalization {
    pub u_mean: f64,
    pub u_std: f64,
    pub y_mean: f64,
    pub y_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len().max(1) as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

impl Normalization {
    /// Zero mean and unit standard deviation on `train`.
    pub fn fit(train: &Dataset) -> Result<Self> {
        let (u_mean, u_std) = mean_std(&train.u);
        let (y_mean, y_std) = mean_std(&train.y);
        if !(u_std > 0.0 && y_std > 0.0) {
            return Err(Error::InvalidArgument("cannot normalize a constant signal".into()));
        }
        Ok(Self {
            u_mean,
            u_std,
            y_mean,
            y_std,
        })
    }

    pub fn apply(&self, d: &Dataset) -> Dataset {
        Dataset {
            u: d.u.iter().map(|v| (v - self.u_mean) / self.u_std).collect(),
            y: d.y.iter().map(|v| (v - self.y_mean) / self.y_std).collect(),
            ts: d.ts,
            split: d.split,
        }
    }

    pub fn apply_splits(&self, s: &DatasetSplits) -> DatasetSplits {
        DatasetSplits {
            train: self.apply(&s.train),
            val: self.apply(&s.val),
            test: self.apply(&s.test),
        }
    }
}

/// Tree growth from the balanced linear model of the training data. With
/// `normalize`, the model is trained on standardized signals and RMSE values
/// are reported in original output units.
pub fn grow_from_linear(
    data: &DatasetSplits,
    n_x: usize,
    config: &LolimotConfig,
    normalize: bool,
) -> Result<(LolimotResult, Option<Normalization>)> {
    let (splits, norm) = if normalize {
        let n = Normalization::fit(&data.train)?;
        (n.apply_splits(data), Some(n))
    } else {
        (data.clone(), None)
    };
    let mut cfg = config.clone();
    if let Some(n) = norm {
        cfg.rmse_scale = config.rmse_scale * n.y_std;
    }
    let initial = crate::linear::initial_model(&splits.train.u, &splits.train.y, n_x, splits.train.ts, cfg.k_sigma)?;
    let result = lolimot_train(&initial, &splits.train, &splits.val, Some(&splits.test), &cfg)?;
    Ok((result, norm))
}

/// Target-deviation penalty centred on the initial model's `psi_p`.
pub fn target_from_initial(initial: &LmssnModel, u: &[f64], grid: &UniformGrid, lambda: f64) -> Result<PenaltyMode> {
    let psi = trajectory_indicators(initial, u, grid)?.psi_p;
    Ok(PenaltyMode::TargetDeviation { lambda, target: psi })
}
