use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use lmssn::datasets::{
    generate_boucwen, generate_demo, read_dataset, write_dataset, BoucWenParams, Dataset, DatasetMeta, DatasetSplits,
    DemoProcessParams, ExcitationConfig,
};
use lmssn::experiment::{trajectory_indicators, FirstSplitStudy, Normalization};
use lmssn::lolimot::{lolimot_train, LolimotResult};
use lmssn::metrics::{space_filling_report, TrajectoryCloud, UniformGrid};
use lmssn::model::LmssnModel;
use lmssn::optimize::RunLog;
use lmssn::regularization::{
    default_psi_squared_grid, default_target_grid, recommend_lambda, PenaltyMode, SweepResult,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Mode, Overrides, RunConfig};
use crate::{Generator, UsageError, EXIT_UNSTABLE};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenConfig {
    process: Option<serde_json::Value>,
    excitation: Option<ExcitationConfig>,
}

fn parse_process<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T, UsageError> {
    serde_json::from_value(v).map_err(|e| UsageError(format!("invalid process: {e}")))
}

pub fn gen_data(generator: Generator, seed: u64, out: &Path, config: Option<&Path>) -> Result<u8> {
    let gen_cfg: Option<GenConfig> = match config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| UsageError(format!("cannot read {}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| UsageError(format!("invalid generator config: {e}")))?)
        }
        None => None,
    };
    let (process, excitation) = match &gen_cfg {
        Some(c) => (c.process.clone(), c.excitation),
        None => (None, None),
    };
    let (splits, name, process_json, exc) = match generator {
        Generator::Demo => {
            let p: DemoProcessParams = process.map(parse_process).transpose()?.unwrap_or_default();
            let exc = excitation.unwrap_or_else(ExcitationConfig::demo);
            (generate_demo(&p, &exc, seed)?, "demo", serde_json::to_value(p)?, exc)
        }
        Generator::Boucwen => {
            let p: BoucWenParams = process.map(parse_process).transpose()?.unwrap_or_else(BoucWenParams::benchmark);
            let exc = excitation.unwrap_or_else(ExcitationConfig::boucwen);
            (generate_boucwen(&p, &exc, seed)?, "boucwen", serde_json::to_value(p)?, exc)
        }
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (file, d) in [("train.csv", &splits.train), ("val.csv", &splits.val), ("test.csv", &splits.test)] {
        let meta = DatasetMeta {
            ts: d.ts,
            split: d.split,
            generator: name.to_string(),
            seed: Some(seed),
            config: json!({ "process": process_json, "excitation": exc }),
        };
        write_dataset(&out.join(file), d, &meta)?;
    }
    println!("wrote {name} data (seed {seed}) to {}", out.display());
    Ok(0)
}

fn load(path: &Path) -> Result<Dataset> {
    if !path.is_file() {
        return Err(UsageError(format!("dataset {} not found", path.display())).into());
    }
    Ok(read_dataset(path).with_context(|| format!("reading {}", path.display()))?.0)
}

fn load_splits(cfg: &RunConfig) -> Result<(DatasetSplits, bool)> {
    let train = load(cfg.dataset("train")?)?;
    let val = load(cfg.dataset("val")?)?;
    let (test, has_test) = match &cfg.test {
        Some(p) => (load(p)?, true),
        None => (val.clone(), false),
    };
    Ok((DatasetSplits { train, val, test }, has_test))
}

/// Normalizes when configured; returns the data the model is trained on.
fn prepare(cfg: &RunConfig, data: &DatasetSplits) -> Result<(DatasetSplits, Option<Normalization>)> {
    if cfg.normalize {
        let n = Normalization::fit(&data.train)?;
        Ok((n.apply_splits(data), Some(n)))
    } else {
        Ok((data.clone(), None))
    }
}

fn initial(cfg: &RunConfig, train: &Dataset) -> Result<LmssnModel> {
    Ok(lmssn::linear::initial_model(&train.u, &train.y, cfg.n_x, train.ts, cfg.k_sigma)?)
}

#[derive(Serialize)]
struct TrainSummary {
    mode: &'static str,
    penalty: PenaltyMode,
    accepted_splits: usize,
    best_split: Option<usize>,
    best_n_lm: Option<usize>,
    stop: String,
    reference_rmse: f64,
    best_val_rmse: Option<f64>,
    best_test_rmse: Option<f64>,
    best_max_pole_radius: Option<f64>,
    normalization: Option<Normalization>,
    seed: u64,
    exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'static str>,
}

fn candidate_csv(res: &LolimotResult) -> String {
    let mut s = String::from("split,dim,chosen,J_before,J,objective,psi_p,iterations,reason,val_rmse,val_unstable\n");
    for st in &res.steps[1..] {
        for c in &st.candidates {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                st.split,
                c.dim,
                st.chosen.map(|(_, d)| d) == Some(c.dim),
                c.loss_before,
                c.final_loss,
                c.final_objective,
                c.final_psi_p,
                c.iterations,
                c.reason,
                c.val_rmse,
                c.val_unstable
            );
        }
    }
    s
}

fn trajectory_csv(model: &LmssnModel, u: &[f64]) -> Result<String> {
    let traj = model.simulate(u)?;
    let z = model.scaling.scale_points(&traj.points);
    let mut s = (1..=model.n_x).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
    s.push_str(",u\n");
    for row in z.chunks(traj.dim) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    Ok(s)
}

pub fn train(ov: &Overrides) -> Result<u8> {
    let mut cfg = RunConfig::load(ov)?;
    let out = cfg.out_dir()?.to_path_buf();
    let (raw, has_test) = load_splits(&cfg)?;
    let (data, norm) = prepare(&cfg, &raw)?;
    let init = initial(&cfg, &data.train)?;
    let grid = UniformGrid::new(init.ext_dim(), cfg.grid_m)?;
    if cfg.mode == Mode::Target && cfg.psi_target.is_none() {
        cfg.psi_target = Some(trajectory_indicators(&init, &data.train.u, &grid)?.psi_p);
    }
    let penalty = cfg.penalty(0.0);
    let mut lcfg = cfg.lolimot(penalty);
    if let Some(n) = norm {
        lcfg.rmse_scale = n.y_std;
    }
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    cfg.write_snapshot(&out)?;

    let test = has_test.then_some(&data.test);
    let res = lolimot_train(&init, &data.train, &data.val, test, &lcfg)?;

    fs::write(out.join("split_summary.csv"), res.split_summary_csv())?;
    fs::write(out.join("candidates.csv"), candidate_csv(&res))?;
    for st in &res.steps[1..] {
        if let Some(log) = st.chosen_log() {
            log.write_csv(out.join(format!("runlog_split{}.csv", st.split)))?;
        }
    }
    let best = res.best_step();
    let chosen = best.unwrap_or_else(|| res.steps.last().expect("initial step"));
    chosen.model.save(out.join("model.json"))?;
    match trajectory_csv(&chosen.model, &data.train.u) {
        Ok(text) => fs::write(out.join("trajectory.csv"), text)?,
        Err(e) => log::warn!("trajectory.csv skipped: {e}"),
    }

    let code = if best.is_some() { 0 } else { EXIT_UNSTABLE };
    let summary = TrainSummary {
        mode: penalty.name(),
        penalty,
        accepted_splits: res.accepted_splits(),
        best_split: best.map(|b| b.split),
        best_n_lm: best.map(|b| b.n_lm()),
        stop: res.stop.to_string(),
        reference_rmse: res.reference_rmse,
        best_val_rmse: best.map(|b| b.val_rmse),
        best_test_rmse: best.and_then(|b| b.test_rmse),
        best_max_pole_radius: best.map(|b| b.max_pole_radius),
        normalization: norm,
        seed: cfg.seed,
        exit_code: code,
        note: best.is_none().then_some("no model was stable on validation data; model.json holds the last one"),
    };
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    match best {
        Some(b) => println!(
            "best model: split {} ({} local models), validation RMSE {:e}",
            b.split,
            b.n_lm(),
            b.val_rmse
        ),
        None => eprintln!("no model was stable on validation data"),
    }
    Ok(code)
}

pub fn sweep(ov: &Overrides, lambdas: Option<Vec<f64>>) -> Result<u8> {
    let mut cfg = RunConfig::load(ov)?;
    if let Some(l) = lambdas {
        cfg.lambdas = Some(l);
    }
    if cfg.mode == Mode::None {
        return Err(UsageError("sweep needs --mode psi2 or --mode target".into()).into());
    }
    let grid_values = cfg.lambdas.clone().unwrap_or_else(|| match cfg.mode {
        Mode::Target => default_target_grid(),
        _ => default_psi_squared_grid(),
    });
    if grid_values.is_empty() {
        return Err(UsageError("lambda grid is empty".into()).into());
    }
    if grid_values.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(UsageError("lambda values must be finite and >= 0".into()).into());
    }
    let out = cfg.out_dir()?.to_path_buf();
    let (raw, _) = load_splits(&cfg)?;
    let (data, _) = prepare(&cfg, &raw)?;
    let init = initial(&cfg, &data.train)?;

    let dim = match cfg.split_dim {
        Some(d) => d,
        None => {
            let mut probe = cfg.lolimot(PenaltyMode::None);
            probe.max_splits = 1;
            let res = lolimot_train(&init, &data.train, &data.val, None, &probe)?;
            res.steps
                .get(1)
                .and_then(|s| s.chosen)
                .map(|(_, d)| d)
                .ok_or_else(|| UsageError("no viable first split".into()))?
        }
    };
    cfg.split_dim = Some(dim);
    let study = FirstSplitStudy::new(&init, &data.train, dim, cfg.grid_m, cfg.k_sigma)?;
    let psi0 = study.initial_psi()?;
    if cfg.mode == Mode::Target && cfg.psi_target.is_none() {
        cfg.psi_target = Some(psi0);
    }
    cfg.lambdas = Some(grid_values.clone());
    fs::create_dir_all(&out)?;
    cfg.write_snapshot(&out)?;

    let result: SweepResult = study.sweep(&grid_values, cfg.penalty(psi0).with_lambda(1.0), &cfg.optimizer)?;
    fs::write(out.join("sweep.csv"), result.to_csv())?;
    let rec = if cfg.mode == Mode::Psi2 {
        recommend_lambda(&result, psi0).ok()
    } else {
        None
    };
    let summary = json!({
        "mode": result.mode,
        "split_dim": dim,
        "initial_psi_p": psi0,
        "target": result.target,
        "recommended_lambda": rec.as_ref().map(|r| r.lambda),
        "recommendation_warning": rec.as_ref().and_then(|r| r.warning.clone()),
        "rows": result.rows.len(),
    });
    fs::write(out.join("sweep_summary.json"), serde_json::to_string_pretty(&summary)?)?;
    println!("{} rows written to {}", result.rows.len(), out.join("sweep.csv").display());
    Ok(0)
}

/// Numeric CSV with a header line; returns `(points, dim)`.
fn read_points(path: &Path) -> Result<(Vec<f64>, usize)> {
    let text = fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let dim = lines
        .next()
        .ok_or_else(|| UsageError("empty point file".into()))?
        .split(',')
        .count();
    let mut pts = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| UsageError(format!("line {}: not a number", i + 2)))?;
        if row.len() != dim {
            return Err(UsageError(format!("line {}: expected {dim} values", i + 2)).into());
        }
        pts.extend(row);
    }
    Ok((pts, dim))
}

pub fn metrics(file: &Path, grid_m: usize, out: Option<&Path>) -> Result<u8> {
    let (pts, dim) = read_points(file)?;
    let cloud = TrajectoryCloud::new(pts, dim).map_err(|e| UsageError(e.to_string()))?;
    let grid = UniformGrid::new(dim, grid_m).map_err(|e| UsageError(e.to_string()))?;
    let rep = space_filling_report(&cloud, &grid)?;
    let doc = json!({
        "psi_p": rep.psi_p,
        "kld": rep.kld,
        "chv": rep.chv,
        "chv_degenerate": rep.chv_degenerate,
        "points": cloud.len(),
        "dim": dim,
        "grid_m": grid_m,
    });
    let text = serde_json::to_string_pretty(&doc)?;
    match out {
        Some(p) => fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(0)
}

fn max_finite(v: impl Iterator<Item = f64>) -> f64 {
    v.filter(|x| x.is_finite()).fold(f64::NAN, f64::max)
}

fn indicator_report(log: &RunLog) -> String {
    let r = &log.rows;
    let mj = max_finite(r.iter().map(|x| x.loss));
    let mp = max_finite(r.iter().map(|x| x.psi_p));
    let mk = max_finite(r.iter().map(|x| x.kld));
    let mc = max_finite(r.iter().map(|x| x.chv));
    let mut s = String::from("iteration,J,psi_p,kld,chv,J_norm,psi_p_norm,kld_norm,chv_norm\n");
    for x in r {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            x.iteration,
            x.loss,
            x.psi_p,
            x.kld,
            x.chv,
            x.loss / mj,
            x.psi_p / mp,
            x.kld / mk,
            x.chv / mc
        );
    }
    s
}

/// Columns `split,n_lm,train_rmse,val_rmse,test_rmse` of a split summary.
fn rmse_report(summary: &str) -> Result<String> {
    let mut lines = summary.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let want = ["split", "n_lm", "train_rmse", "val_rmse", "test_rmse"];
    let idx: Vec<usize> = want
        .iter()
        .map(|w| {
            header
                .iter()
                .position(|h| h == w)
                .ok_or_else(|| UsageError(format!("split summary lacks column {w}")))
        })
        .collect::<Result<_, _>>()?;
    let mut s = want.join(",");
    s.push('\n');
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let row: Vec<&str> = idx.iter().map(|&i| f.get(i).copied().unwrap_or("")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    Ok(s)
}

pub fn report(dir: &Path) -> Result<u8> {
    if !dir.is_dir() {
        return Err(UsageError(format!("{} is not a directory", dir.display())).into());
    }
    let mut runlogs: Vec<(usize, std::path::PathBuf)> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let k = name.strip_prefix("runlog_split")?.strip_suffix(".csv")?.parse().ok()?;
            Some((k, e.path()))
        })
        .collect();
    runlogs.sort();
    let summary = dir.join("split_summary.csv");
    let sweep = dir.join("sweep.csv");
    if runlogs.is_empty() && !summary.is_file() && !sweep.is_file() {
        return Err(UsageError(format!("{} contains no run output", dir.display())).into());
    }
    let rep = dir.join("report");
    fs::create_dir_all(&rep)?;
    let mut written = Vec::new();
    for (k, path) in &runlogs {
        let log = RunLog::from_csv(&fs::read_to_string(path)?)?;
        let name = format!("indicators_split{k}.csv");
        fs::write(rep.join(&name), indicator_report(&log))?;
        written.push(name);
    }
    if summary.is_file() {
        fs::write(rep.join("rmse_per_split.csv"), rmse_report(&fs::read_to_string(&summary)?)?)?;
        written.push("rmse_per_split.csv".into());
    }
    if sweep.is_file() {
        fs::copy(&sweep, rep.join("lambda_sweep.csv"))?;
        written.push("lambda_sweep.csv".into());
    }
    for w in &written {
        println!("{}", rep.join(w).display());
    }
    Ok(0)
}
