//! Local linear model tree growth: axis-orthogonal halving of the unit cube
//! of the scaled extended input/state space, with candidate optimization
//! and validation-based termination.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::metrics::UniformGrid;
use crate::model::{
    rmse, GaussianValidity, LmssnModel, NrbfNetwork, ScalingTransform, DEFAULT_DIVERGENCE_GUARD,
};
use crate::optimize::{train, IndicatorTracking, ObjectiveSpec, OptimizerConfig, RunLog, TerminationReason};
use crate::regularization::PenaltyMode;

/// Standard proportionality between validity width and region edge.
pub const DEFAULT_K_SIGMA: f64 = 1.0 / 3.0;

/// Axis-aligned box in the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Dimension {
                expected: lower.len(),
                actual: upper.len(),
                context: "region bounds",
            });
        }
        let ok = lower
            .iter()
            .zip(&upper)
            .all(|(l, u)| 0.0 <= *l && l < u && *u <= 1.0);
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "region bounds must satisfy 0 <= lower < upper <= 1: {lower:?} {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| l <= v && v <= u)
    }

    /// Cuts the box at `lower + ratio * edge` along `dim`.
    pub fn split(&self, dim: usize, ratio: f64) -> Result<(Region, Region)> {
        if dim >= self.dim() {
            return Err(Error::InvalidArgument(format!(
                "split dimension {dim} out of range for a {}-D region",
                self.dim()
            )));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidArgument(format!("split ratio must be in (0, 1), got {ratio}")));
        }
        let cut = self.lower[dim] + ratio * (self.upper[dim] - self.lower[dim]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[dim] = cut;
        right.lower[dim] = cut;
        Ok((left, right))
    }

    /// Gaussian centred on the midpoint with `sigma_i = k_sigma * edge_i`.
    pub fn to_validity(&self, k_sigma: f64) -> Result<GaussianValidity> {
        if !(k_sigma > 0.0) || !k_sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("k_sigma must be positive, got {k_sigma}")));
        }
        let sigma = self.lower.iter().zip(&self.upper).map(|(l, u)| k_sigma * (u - l)).collect();
        GaussianValidity::new(self.midpoint(), sigma)
    }
}

pub fn region_to_validity(region: &Region, k_sigma: f64) -> Result<GaussianValidity> {
    region.to_validity(k_sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    Leaf { lm: usize },
    Split { dim: usize, children: [usize; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub region: Region,
    pub kind: NodeKind,
}

/// Binary partition of the unit cube. Each leaf owns one local model of
/// both the state and the output network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionTree {
    nodes: Vec<Node>,
    /// node index of the leaf owning local model `j`
    leaf_of: Vec<usize>,
}

impl PartitionTree {
    pub fn new(dim: usize) -> Self {
        Self {
            nodes: vec![Node {
                region: Region::unit(dim),
                kind: NodeKind::Leaf { lm: 0 },
            }],
            leaf_of: vec![0],
        }
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].region.dim()
    }

    pub fn n_lm(&self) -> usize {
        self.leaf_of.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_region(&self, lm: usize) -> &Region {
        &self.nodes[self.leaf_of[lm]].region
    }

    /// Leaf regions in local model order.
    pub fn leaf_regions(&self) -> Vec<&Region> {
        self.leaf_of.iter().map(|&n| &self.nodes[n].region).collect()
    }

    /// Splits the leaf of local model `lm`. The lower child keeps `lm`, the
    /// upper child gets the next free index.
    pub fn split(&self, lm: usize, dim: usize, ratio: f64) -> Result<Self> {
        if lm >= self.n_lm() {
            return Err(Error::InvalidArgument(format!("no local model {lm}")));
        }
        let parent = self.leaf_of[lm];
        let (left, right) = self.nodes[parent].region.split(dim, ratio)?;
        let mut out = self.clone();
        let l = out.nodes.len();
        let new_lm = out.n_lm();
        out.nodes.push(Node {
            region: left,
            kind: NodeKind::Leaf { lm },
        });
        out.nodes.push(Node {
            region: right,
            kind: NodeKind::Leaf { lm: new_lm },
        });
        out.nodes[parent].kind = NodeKind::Split {
            dim,
            children: [l, l + 1],
        };
        out.leaf_of[lm] = l;
        out.leaf_of.push(l + 1);
        Ok(out)
    }

    pub fn validity_network(&self, k_sigma: f64) -> Result<NrbfNetwork> {
        let members = self
            .leaf_regions()
            .into_iter()
            .map(|r| r.to_validity(k_sigma))
            .collect::<Result<Vec<_>>>()?;
        NrbfNetwork::new(members)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    /// Local model whose region is split.
    pub leaf: usize,
    pub dim: usize,
    pub ratio: f64,
    pub children: (Region, Region),
}

/// One halving per dimension.
pub fn propose_splits(leaf: usize, region: &Region) -> Result<Vec<SplitCandidate>> {
    (0..region.dim())
        .map(|dim| {
            Ok(SplitCandidate {
                leaf,
                dim,
                ratio: 0.5,
                children: region.split(dim, 0.5)?,
            })
        })
        .collect()
}

/// Refits the scaling transform to the min/max of the current trajectory and
/// re-places every validity function from its region.
pub fn split_adapt(model: &LmssnModel, partition: &PartitionTree, u: &[f64], k_sigma: f64) -> Result<LmssnModel> {
    check_partition(model, partition)?;
    let traj = model.simulate(u)?;
    let mut out = model.clone();
    out.scaling = ScalingTransform::from_points(&traj.points, traj.dim)?;
    let net = partition.validity_network(k_sigma)?;
    out.state_validity = net.clone();
    out.output_validity = net;
    Ok(out)
}

fn check_partition(model: &LmssnModel, partition: &PartitionTree) -> Result<()> {
    if partition.n_lm() != model.state_lms.len() || partition.n_lm() != model.output_lms.len() {
        return Err(Error::Dimension {
            expected: partition.n_lm(),
            actual: model.state_lms.len(),
            context: "local models per partition leaf",
        });
    }
    if partition.dim() != model.ext_dim() {
        return Err(Error::Dimension {
            expected: model.ext_dim(),
            actual: partition.dim(),
            context: "partition dimension",
        });
    }
    Ok(())
}

/// Appends copies of local model `leaf` (state and output) so the blend is
/// unchanged once the partition is split accordingly.
pub fn spawn_children(model: &LmssnModel, leaf: usize) -> Result<LmssnModel> {
    if leaf >= model.state_lms.len() {
        return Err(Error::InvalidArgument(format!("no local model {leaf}")));
    }
    let mut out = model.clone();
    out.state_lms.push(model.state_lms[leaf].clone());
    out.output_lms.push(model.output_lms[leaf].clone());
    Ok(out)
}

/// Model and partition after applying `cand`, with validity functions
/// placed in the model's current unit-cube coordinates.
pub fn apply_split(
    model: &LmssnModel,
    partition: &PartitionTree,
    cand: &SplitCandidate,
    k_sigma: f64,
) -> Result<(LmssnModel, PartitionTree)> {
    check_partition(model, partition)?;
    let tree = partition.split(cand.leaf, cand.dim, cand.ratio)?;
    let mut m = spawn_children(model, cand.leaf)?;
    let net = tree.validity_network(k_sigma)?;
    m.state_validity = net.clone();
    m.output_validity = net;
    m.validate()?;
    Ok((m, tree))
}

/// Validity-weighted squared output error per local model.
pub fn region_errors(model: &LmssnModel, u: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    crate::error::check_len(u.len(), y.len(), "output sequence")?;
    let traj = model.simulate(u)?;
    let n_lm = model.output_validity.len();
    let mut z = vec![0.0; traj.dim];
    let mut phi = vec![0.0; n_lm];
    let mut err = vec![0.0; n_lm];
    for k in 0..traj.len() {
        model.scaling.scale_into(traj.point(k), &mut z);
        model.output_validity.evaluate_into(&z, &mut phi);
        let e = y[k] - traj.outputs[k];
        for j in 0..n_lm {
            err[j] += phi[j] * e * e;
        }
    }
    Ok(err)
}

/// Local model with the largest validity-weighted error; ties go to the
/// lowest index.
pub fn worst_region(model: &LmssnModel, u: &[f64], y: &[f64]) -> Result<usize> {
    let err = region_errors(model, u, y)?;
    let mut best = 0;
    for (j, &e) in err.iter().enumerate() {
        if e > err[best] {
            best = j;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationPolicy {
    /// Required improvement as a fraction of the reference RMSE.
    pub threshold: f64,
    pub patience: usize,
    /// Signal-to-noise ratio defining the reference RMSE.
    pub snr_db: f64,
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        Self {
            threshold: 0.25,
            patience: 3,
            snr_db: 40.0,
        }
    }
}

impl ValidationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) || self.patience == 0 || !self.snr_db.is_finite() {
            return Err(Error::InvalidArgument(
                "validation policy needs threshold in (0, 1), patience >= 1 and a finite SNR".into(),
            ));
        }
        Ok(())
    }

    /// Noise floor implied by the SNR relative to the RMS of `y`.
    pub fn reference_rmse(&self, y: &[f64]) -> f64 {
        let rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len().max(1) as f64).sqrt();
        rms * 10f64.powf(-self.snr_db / 20.0)
    }
}

/// Counts consecutive outer iterations without sufficient validation gain.
#[derive(Debug, Clone)]
pub struct PatienceTracker {
    margin: f64,
    patience: usize,
    best: f64,
    stagnant: usize,
}

impl PatienceTracker {
    pub fn new(policy: &ValidationPolicy, reference_rmse: f64) -> Self {
        Self {
            margin: policy.threshold * reference_rmse,
            patience: policy.patience,
            best: f64::INFINITY,
            stagnant: 0,
        }
    }

    /// Records one validation RMSE; returns `true` once patience runs out.
    pub fn observe(&mut self, rmse: f64) -> bool {
        if rmse.is_finite() && (self.best.is_infinite() || rmse < self.best - self.margin) {
            self.best = rmse;
            self.stagnant = 0;
        } else {
            if rmse < self.best {
                self.best = rmse;
            }
            self.stagnant += 1;
        }
        self.stagnant >= self.patience
    }

    pub fn stagnant(&self) -> usize {
        self.stagnant
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LolimotConfig {
    pub k_sigma: f64,
    pub split_ratio: f64,
    pub max_splits: usize,
    pub grid_m: usize,
    pub penalty: PenaltyMode,
    pub optimizer: OptimizerConfig,
    pub policy: ValidationPolicy,
    /// KLD/CHV logged every n-th optimizer iteration; `None` logs only the endpoints.
    pub indicator_every: Option<usize>,
    /// Restricts split candidates to these dimensions.
    pub split_dims: Option<Vec<usize>>,
    /// Separate state and output partitions (not supported yet).
    pub independent_partitions: bool,
    /// Factor applied to reported RMSE values (undoes output normalization).
    pub rmse_scale: f64,
}

impl Default for LolimotConfig {
    fn default() -> Self {
        Self {
            k_sigma: DEFAULT_K_SIGMA,
            split_ratio: 0.5,
            max_splits: 8,
            grid_m: 5,
            penalty: PenaltyMode::None,
            optimizer: OptimizerConfig::default(),
            policy: ValidationPolicy::default(),
            indicator_every: None,
            split_dims: None,
            independent_partitions: false,
            rmse_scale: 1.0,
        }
    }
}

impl LolimotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.independent_partitions {
            return Err(Error::InvalidArgument(
                "independent state/output partitions are not supported".into(),
            ));
        }
        if !(self.k_sigma > 0.0) || !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::InvalidArgument("k_sigma must be positive and split_ratio in (0, 1)".into()));
        }
        if self.grid_m < 2 || !(self.rmse_scale > 0.0) {
            return Err(Error::InvalidArgument("grid_m must be >= 2 and rmse_scale positive".into()));
        }
        self.penalty.validate()?;
        self.optimizer.validate()?;
        self.policy.validate()
    }

    fn tracking(&self) -> IndicatorTracking {
        match self.indicator_every {
            Some(n) => IndicatorTracking::Every(n),
            None => IndicatorTracking::Endpoints,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSummary {
    pub dim: usize,
    /// Training loss at the spawned (pre-optimization) parameters.
    pub loss_before: f64,
    pub final_loss: f64,
    pub final_objective: f64,
    pub final_psi_p: f64,
    pub iterations: usize,
    pub reason: TerminationReason,
    pub val_rmse: f64,
    /// Simulation on validation data diverged.
    pub val_unstable: bool,
}

/// Model after one outer iteration (iteration 0 is the initial model).
#[derive(Debug, Clone)]
pub struct LolimotStep {
    pub split: usize,
    pub model: LmssnModel,
    pub partition: PartitionTree,
    /// `(leaf, dim)` of the accepted split.
    pub chosen: Option<(usize, usize)>,
    pub candidates: Vec<CandidateSummary>,
    /// Optimizer log per candidate, same order as `candidates`.
    pub logs: Vec<RunLog>,
    pub train_loss: f64,
    pub train_rmse: f64,
    pub val_rmse: f64,
    pub test_rmse: Option<f64>,
    pub max_pole_radius: f64,
    pub val_unstable: bool,
}

impl LolimotStep {
    pub fn n_lm(&self) -> usize {
        self.partition.n_lm()
    }

    pub fn chosen_candidate(&self) -> Option<&CandidateSummary> {
        let (_, dim) = self.chosen?;
        self.candidates.iter().find(|c| c.dim == dim)
    }

    pub fn chosen_log(&self) -> Option<&RunLog> {
        let (_, dim) = self.chosen?;
        self.candidates.iter().position(|c| c.dim == dim).map(|i| &self.logs[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSplits,
    Patience,
    /// Every candidate of an outer iteration failed to train.
    NoViableCandidate,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::MaxSplits => "max_splits",
            Self::Patience => "patience",
            Self::NoViableCandidate => "no_viable_candidate",
        })
    }
}

#[derive(Debug, Clone)]
pub struct LolimotResult {
    pub steps: Vec<LolimotStep>,
    /// Index into `steps` of the selected model, if any is stable on validation.
    pub best: Option<usize>,
    pub stop: StopReason,
    /// Reference RMSE of the validation rule, in reported units.
    pub reference_rmse: f64,
}

pub const SPLIT_SUMMARY_HEADER: &str =
    "split,n_lm,leaf,dim,train_J,train_rmse,val_rmse,test_rmse,max_pole_radius,stable,val_unstable,best";

impl LolimotResult {
    pub fn best_step(&self) -> Option<&LolimotStep> {
        self.best.map(|i| &self.steps[i])
    }

    /// Number of accepted splits.
    pub fn accepted_splits(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn split_summary_csv(&self) -> String {
        let mut s = String::from(SPLIT_SUMMARY_HEADER);
        s.push('\n');
        for (i, st) in self.steps.iter().enumerate() {
            let (leaf, dim) = st
                .chosen
                .map_or((String::new(), String::new()), |(l, d)| (l.to_string(), d.to_string()));
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                st.split,
                st.n_lm(),
                leaf,
                dim,
                st.train_loss,
                st.train_rmse,
                st.val_rmse,
                st.test_rmse.map_or("NaN".to_string(), |v| v.to_string()),
                st.max_pole_radius,
                st.max_pole_radius < 1.0,
                st.val_unstable,
                self.best == Some(i),
            );
        }
        s
    }
}

fn sim_rmse(model: &LmssnModel, d: &Dataset) -> f64 {
    match model.simulate_with_guard(&d.u, DEFAULT_DIVERGENCE_GUARD) {
        Ok(t) => rmse(&d.y, &t.outputs).unwrap_or(f64::INFINITY),
        Err(_) => f64::INFINITY,
    }
}

fn max_radius(model: &LmssnModel) -> f64 {
    model
        .local_pole_radii()
        .map(|r| r.into_iter().fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY)
}

fn make_step(
    split: usize,
    model: LmssnModel,
    partition: PartitionTree,
    chosen: Option<(usize, usize)>,
    candidates: Vec<CandidateSummary>,
    logs: Vec<RunLog>,
    data: (&Dataset, &Dataset, Option<&Dataset>),
    scale: f64,
) -> LolimotStep {
    let (train, val, test) = data;
    let train_rmse = sim_rmse(&model, train);
    let val_rmse = sim_rmse(&model, val);
    LolimotStep {
        split,
        train_loss: train_rmse * train_rmse * train.len() as f64,
        train_rmse: train_rmse * scale,
        val_rmse: val_rmse * scale,
        test_rmse: test.map(|t| sim_rmse(&model, t) * scale),
        max_pole_radius: max_radius(&model),
        val_unstable: !val_rmse.is_finite(),
        model,
        partition,
        chosen,
        candidates,
        logs,
    }
}

/// Grows `initial` (a single local model) by repeated splitting.
pub fn lolimot_train(
    initial: &LmssnModel,
    train_data: &Dataset,
    val: &Dataset,
    test: Option<&Dataset>,
    config: &LolimotConfig,
) -> Result<LolimotResult> {
    config.validate()?;
    let d = initial.ext_dim();
    let mut partition = PartitionTree::new(d);
    if initial.state_lms.len() != 1 {
        return Err(Error::InvalidArgument("growth starts from a single local model".into()));
    }
    let grid = UniformGrid::new(d, config.grid_m)?;
    let scale = config.rmse_scale;
    let reference = config.policy.reference_rmse(&train_data.y) * scale;
    let data = (train_data, val, test);

    let first = make_step(0, initial.clone(), partition.clone(), None, vec![], vec![], data, scale);
    let mut tracker = PatienceTracker::new(&config.policy, reference);
    tracker.observe(first.val_rmse);
    let mut steps = vec![first];
    let mut stop = StopReason::MaxSplits;
    let mut model = initial.clone();

    for split in 1..=config.max_splits {
        // Re-placing the validity functions changes the model function and can
        // make a marginal model diverge; the previous scaling is kept then.
        let adapted = split_adapt(&model, &partition, &train_data.u, config.k_sigma)
            .and_then(|m| worst_region(&m, &train_data.u, &train_data.y).map(|leaf| (m, leaf)));
        let (adapted, leaf) = match adapted {
            Ok(v) => v,
            Err(e) => {
                log::warn!("split {split}: scaling adaption failed ({e}); keeping previous scaling");
                let leaf = worst_region(&model, &train_data.u, &train_data.y)?;
                (model.clone(), leaf)
            }
        };
        let mut cands = propose_splits(leaf, partition.leaf_region(leaf))?;
        for c in &mut cands {
            c.ratio = config.split_ratio;
            c.children = partition.leaf_region(leaf).split(c.dim, c.ratio)?;
        }
        if let Some(dims) = &config.split_dims {
            cands.retain(|c| dims.contains(&c.dim));
        }
        let outcomes: Vec<Result<(CandidateSummary, RunLog, LmssnModel, PartitionTree)>> = cands
            .par_iter()
            .map(|cand| {
                let (m, tree) = apply_split(&adapted, &partition, cand, config.k_sigma)?;
                let spec = ObjectiveSpec::new(
                    m.clone(),
                    train_data.u.clone(),
                    train_data.y.clone(),
                    config.penalty,
                    grid.clone(),
                )?;
                let theta0 = spec.initial_parameters();
                let loss_before = spec.evaluate(&theta0)?.loss;
                let out = train(&spec, &theta0, &config.optimizer, config.tracking())?;
                let val_rmse = sim_rmse(&out.model, val) * scale;
                let summary = CandidateSummary {
                    dim: cand.dim,
                    loss_before,
                    final_loss: out.report.final_loss,
                    final_objective: out.report.final_objective,
                    final_psi_p: out.report.final_psi_p,
                    iterations: out.report.iterations,
                    reason: out.report.reason,
                    val_rmse,
                    val_unstable: !val_rmse.is_finite(),
                };
                Ok((summary, out.log, out.model, tree))
            })
            .collect();

        let mut summaries = Vec::new();
        let mut logs = Vec::new();
        let mut chosen: Option<(f64, usize, LmssnModel, PartitionTree)> = None;
        for (cand, res) in cands.iter().zip(outcomes) {
            match res {
                Ok((summary, log, m, tree)) => {
                    let j = summary.final_loss;
                    if j.is_finite() && chosen.as_ref().is_none_or(|(best, ..)| j < *best) {
                        chosen = Some((j, cand.dim, m, tree));
                    }
                    summaries.push(summary);
                    logs.push(log);
                }
                Err(e) => log::warn!("split {split}, dim {}: candidate failed: {e}", cand.dim),
            }
        }
        let Some((_, dim, m, tree)) = chosen else {
            stop = StopReason::NoViableCandidate;
            break;
        };
        log::info!("split {split}: leaf {leaf} halved along dimension {dim}");
        model = m.clone();
        partition = tree.clone();
        let step = make_step(split, m, tree, Some((leaf, dim)), summaries, logs, data, scale);
        let exhausted = tracker.observe(step.val_rmse);
        steps.push(step);
        if exhausted {
            stop = StopReason::Patience;
            break;
        }
    }

    let best = select_best(&steps, config.policy.threshold * reference);
    Ok(LolimotResult {
        steps,
        best,
        stop,
        reference_rmse: reference,
    })
}

/// Simplest model whose validation RMSE is within `band` of the best one.
fn select_best(steps: &[LolimotStep], band: f64) -> Option<usize> {
    let best = steps
        .iter()
        .filter(|s| !s.val_unstable)
        .map(|s| s.val_rmse)
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    steps
        .iter()
        .position(|s| !s.val_unstable && s.val_rmse <= best + band)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReactivationRow {
    pub lm: usize,
    pub max_weight: f64,
    /// No trajectory point is dominated by this local model.
    pub interpolation_only: bool,
}

/// Largest state-network validity weight each local model reaches along the
/// trajectory driven by `u`.
pub fn reactivation_report(model: &LmssnModel, u: &[f64]) -> Result<Vec<ReactivationRow>> {
    let traj = model.simulate(u)?;
    let n_lm = model.state_validity.len();
    let mut max_w = vec![0.0f64; n_lm];
    let mut z = vec![0.0; traj.dim];
    let mut phi = vec![0.0; n_lm];
    for k in 0..traj.len() {
        model.scaling.scale_into(traj.point(k), &mut z);
        model.state_validity.evaluate_into(&z, &mut phi);
        for (m, p) in max_w.iter_mut().zip(&phi) {
            *m = m.max(*p);
        }
    }
    Ok(max_w
        .into_iter()
        .enumerate()
        .map(|(lm, max_weight)| ReactivationRow {
            lm,
            max_weight,
            interpolation_only: max_weight < 0.5,
        })
        .collect())
}
