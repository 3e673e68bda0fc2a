//! One function per subcommand. Each writes its artifacts through an
//! [`OutputDir`] and draws all randomness from the config seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dncl::data::{gen_scalar_toy, gen_spirals, load_csv, split, Column, Dataset, ScalarToySpec, Standardizer};
use dncl::diagnostics::{
    bvc_decompose, pairwise_diversity, rademacher_group_ratio, regression_metrics, sign_accuracy,
};
use dncl::ensemble::{mean_pairwise_spread, scalar_descent, train, NclEnsemble};
use dncl::netcore::{OptimState, Rng, Tensor};
use dncl::Error;
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ExperimentConfig, ExperimentKind, FeatureLayout};
use crate::error::{CliError, Result, StageExt};
use crate::manifest::{OutputDir, RunManifest};

pub const CHECKPOINT_FILE: &str = "model.ncl";
pub const SCALER_FILE: &str = "scaler.json";

/// Independent sub-seeds, one per purpose.
mod stream {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const HELD_OUT: u64 = 3;
    pub const INIT: u64 = 10;
    pub const SHUFFLE: u64 = 1_000;
    pub const FEATURES: u64 = 2_000;
    pub const SIGNS: u64 = 3_000;
}

pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    Rng::derive(seed, stream).next_u64()
}

/// Runs `cfg` (already resolved) and writes the manifest, also on failure.
/// Returns the manifest together with the outcome of the experiment.
pub fn execute(cfg: &ExperimentConfig) -> Result<(RunManifest, Result<()>)> {
    let kind = cfg
        .experiment
        .ok_or_else(|| CliError::Config("experiment kind not resolved".into()))?;
    let mut out = OutputDir::create(&cfg.out)?;
    info!("running `{kind}` into {}", cfg.out.display());
    let result = match kind {
        ExperimentKind::Dynamics => run_dynamics(cfg, &mut out),
        ExperimentKind::Surface => run_surface(cfg, &mut out),
        ExperimentKind::Train => run_train(cfg, &mut out),
        ExperimentKind::Eval => run_eval(cfg, &mut out),
        ExperimentKind::Decompose => run_decompose(cfg, &mut out),
        ExperimentKind::Rademacher => run_rademacher(cfg, &mut out),
        ExperimentKind::GenData => run_gen_data(cfg, &mut out),
    };
    let manifest = out.finish(cfg, &result)?;
    Ok((manifest, result))
}

// --- dynamics --------------------------------------------------------------

pub const DYNAMICS_HEADER: &str = "regime,iteration,regressor,value";

/// Trajectory CSV for one regime, followed by `final_mean_error` and
/// `final_spread` summary rows.
pub fn dynamics_csv(regime: &str, trajectory: &[Vec<f64>], target: f64) -> String {
    let mut s = String::from(DYNAMICS_HEADER);
    s.push('\n');
    for (it, row) in trajectory.iter().enumerate() {
        for (r, v) in row.iter().enumerate() {
            let _ = writeln!(s, "{regime},{it},{r},{v}");
        }
    }
    let last = trajectory.last().expect("at least the initial row");
    let n = trajectory.len() - 1;
    let mean = last.iter().sum::<f64>() / last.len() as f64;
    let _ = writeln!(s, "{regime},{n},final_mean_error,{}", (mean - target).abs());
    let _ = writeln!(s, "{regime},{n},final_spread,{}", mean_pairwise_spread(last));
    s
}

fn run_dynamics(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<()> {
    let d = &cfg.dynamics;
    let toy = gen_scalar_toy(&ScalarToySpec {
        target: d.target,
        regressors: d.regressors,
        iterations: d.iterations,
        lr: d.lr,
        init_low: d.init_low,
        init_high: d.init_high,
        seed: cfg.seed,
    })
    .stage("dynamics")?;
    for (regime, lambda) in [("conventional", 0.0), ("ncl", d.lambda)] {
        let traj = scalar_descent(&toy.inits, d.target, d.lr, d.iterations, lambda).stage("dynamics")?;
        out.write(&format!("dynamics_{regime}.csv"), dynamics_csv(regime, &traj, d.target).as_bytes())?;
    }
    Ok(())
}

// --- data ------------------------------------------------------------------

/// Feature preprocessing fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Option<Vec<f64>>,
    pub std: Option<Vec<f64>>,
    pub scale: f64,
}

impl Scaler {
    pub fn fit(cfg: &ExperimentConfig, train: &Tensor) -> Self {
        let (mean, std) = if cfg.data.standardize {
            let s = Standardizer::fit(train);
            (Some(s.mean), Some(s.std))
        } else {
            (None, None)
        };
        Self {
            mean,
            std,
            scale: cfg.data.input_scale,
        }
    }

    pub fn transform(&self, x: &Tensor) -> dncl::Result<Tensor> {
        let mut t = match (&self.mean, &self.std) {
            (Some(mean), Some(std)) => Standardizer {
                mean: mean.clone(),
                std: std.clone(),
            }
            .transform(x)?,
            _ => x.clone(),
        };
        t.data_mut().iter_mut().for_each(|v| *v *= self.scale);
        Ok(t)
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match cfg.data.source {
        DataSource::Spirals => {
            gen_spirals(&cfg.data.spirals.spec(sub_seed(cfg.seed, stream::DATA))).stage("data")
        }
        DataSource::Csv => {
            let path = cfg.data.path.as_ref().expect("validated");
            let cols = |v: &[String]| -> Vec<Column> { v.iter().map(|c| c.parse().expect("infallible")).collect() };
            load_csv(path, &cols(&cfg.data.features), &cols(&cfg.data.targets)).stage("data")
        }
    }
}

pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub scaler: Scaler,
}

/// Loads, splits and scales the configured dataset.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let data = load_dataset(cfg)?;
    let (mut train, mut test) =
        split(&data, cfg.data.test_fraction, sub_seed(cfg.seed, stream::SPLIT)).stage("split")?;
    if train.is_empty() {
        return Err(CliError::Stage {
            stage: "split",
            source: Error::EmptyDataset,
        });
    }
    let scaler = Scaler::fit(cfg, &train.features);
    train.features = scaler.transform(&train.features).stage("preprocess")?;
    if !test.is_empty() {
        test.features = scaler.transform(&test.features).stage("preprocess")?;
    }
    Ok(Prepared { train, test, scaler })
}

pub fn build_model(cfg: &ExperimentConfig, input_dim: usize, out_dim: usize, lambda: f64, trial: u64) -> Result<NclEnsemble> {
    NclEnsemble::new(
        input_dim,
        &cfg.model.trunk_specs(input_dim),
        cfg.model.k,
        out_dim,
        lambda,
        cfg.model.weighted,
        &mut Rng::new(sub_seed(cfg.seed, stream::INIT + trial)),
    )
    .stage("model")
}

/// Trains `model` with the configured schedule. Divergence leaves a
/// `diverged.ncl` checkpoint behind.
fn fit(
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
    model: &mut NclEnsemble,
    data: &Dataset,
    lambda: f64,
    trial: u64,
) -> Result<dncl::ensemble::TrainOutcome> {
    let tc = cfg
        .train
        .to_train_config(lambda, sub_seed(cfg.seed, stream::SHUFFLE + trial));
    match train(model, data, &tc) {
        Err(Error::Diverged { epoch, step, what, checkpoint }) => {
            out.write("diverged.ncl", &checkpoint)?;
            Err(CliError::Stage {
                stage: "train",
                source: Error::Diverged {
                    epoch,
                    step,
                    what,
                    checkpoint: Vec::new(),
                },
            })
        }
        other => other.stage("train"),
    }
}

// --- reports ---------------------------------------------------------------

pub const METRICS_HEADER: &str = "split,samples,mae,rmse,ensemble_mse,sign_accuracy,diversity";

#[derive(Debug, Clone, PartialEq)]
pub struct SplitMetrics {
    pub samples: usize,
    pub mae: f64,
    pub rmse: f64,
    pub sign_accuracy: f64,
    pub diversity: f64,
}

pub fn split_metrics(model: &NclEnsemble, data: &Dataset) -> Result<SplitMetrics> {
    let pred = model.predict(&data.features).stage("evaluate")?;
    let m = regression_metrics(pred.data(), data.targets.data()).stage("evaluate")?;
    let acc = sign_accuracy(pred.data(), data.targets.data()).stage("evaluate")?;
    let diversity = if model.k() >= 2 {
        let heads = model.forward(&data.features).stage("evaluate")?;
        pairwise_diversity(&heads.as_matrix()).stage("evaluate")?.mean_pairwise()
    } else {
        0.0
    };
    Ok(SplitMetrics {
        samples: data.len(),
        mae: m.mae,
        rmse: m.rmse,
        sign_accuracy: acc,
        diversity,
    })
}

fn metrics_csv(model: &NclEnsemble, splits: &[(&str, &Dataset)]) -> Result<String> {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for (name, data) in splits {
        if data.is_empty() {
            continue;
        }
        let m = split_metrics(model, data)?;
        let _ = writeln!(
            s,
            "{name},{},{},{},{},{},{}",
            m.samples,
            m.mae,
            m.rmse,
            m.rmse * m.rmse,
            m.sign_accuracy,
            m.diversity
        );
    }
    Ok(s)
}

/// `split,sample,head,value`; `head` is a head index or `ensemble`.
fn predictions_csv(model: &NclEnsemble, splits: &[(&str, &Dataset)]) -> Result<String> {
    let mut s = String::from("split,sample,output,head,value\n");
    for (name, data) in splits {
        if data.is_empty() {
            continue;
        }
        let heads = model.forward(&data.features).stage("predict")?;
        let agg = model.predict(&data.features).stage("predict")?;
        let o = heads.outputs();
        for n in 0..heads.samples() {
            for j in 0..o {
                for k in 0..heads.k() {
                    let _ = writeln!(s, "{name},{n},{j},{k},{}", heads.head(k)[n * o + j]);
                }
                let _ = writeln!(s, "{name},{n},{j},ensemble,{}", agg.data()[n * o + j]);
            }
        }
    }
    Ok(s)
}

fn run_train(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<()> {
    let p = prepare(cfg)?;
    let mut model = build_model(cfg, p.train.feature_dim(), p.train.target_dim(), cfg.train.lambda, 0)?;
    let outcome = fit(cfg, out, &mut model, &p.train, cfg.train.lambda, 0)?;
    out.write(CHECKPOINT_FILE, &model.to_checkpoint(&outcome.state))?;
    out.write(SCALER_FILE, &serde_json::to_vec_pretty(&p.scaler).expect("serializable"))?;
    out.write("train_log.csv", outcome.log.to_csv().as_bytes())?;
    let splits = [("train", &p.train), ("test", &p.test)];
    out.write("metrics.csv", metrics_csv(&model, &splits)?.as_bytes())?;
    let probe = if p.test.is_empty() { &p.train } else { &p.test };
    if model.k() >= 2 {
        let heads = model.forward(&probe.features).stage("diversity")?;
        let d = pairwise_diversity(&heads.as_matrix()).stage("diversity")?;
        out.write("diversity.csv", d.to_csv().as_bytes())?;
    }
    out.write("predictions.csv", predictions_csv(&model, &splits)?.as_bytes())?;
    Ok(())
}

fn run_eval(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<()> {
    let ckpt: PathBuf = cfg
        .eval
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out.join(CHECKPOINT_FILE));
    let read = |p: &Path| {
        std::fs::read(p).map_err(|source| CliError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let (model, _) = NclEnsemble::from_checkpoint(&read(&ckpt)?).stage("load checkpoint")?;
    let scaler_path = ckpt.with_file_name(SCALER_FILE);
    let scaler: Scaler = serde_json::from_slice(&read(&scaler_path)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", scaler_path.display())))?;

    let data = load_dataset(cfg)?;
    let (mut train, mut test) =
        split(&data, cfg.data.test_fraction, sub_seed(cfg.seed, stream::SPLIT)).stage("split")?;
    for d in [&mut train, &mut test] {
        if !d.is_empty() {
            d.features = scaler.transform(&d.features).stage("preprocess")?;
        }
    }
    let splits = [("train", &train), ("test", &test)];
    out.write("eval_metrics.csv", metrics_csv(&model, &splits)?.as_bytes())?;
    out.write("eval_predictions.csv", predictions_csv(&model, &splits)?.as_bytes())?;
    Ok(())
}

// --- decomposition ---------------------------------------------------------

fn run_decompose(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<()> {
    let t = cfg.decompose.trials;
    if t < 2 {
        return Err(CliError::Stage {
            stage: "decompose",
            source: Error::InvalidArgument(format!(
                "need >= 2 trials to estimate variance, got {t}"
            )),
        });
    }
    let p = prepare(cfg)?;
    let probe = if p.test.is_empty() { &p.train } else { &p.test };
    let k = cfg.model.k;
    // samples are (row, output) pairs, flattened row-major
    let n = probe.targets.len();
    let mut preds = Vec::with_capacity(t * k * n);
    let mut dump = String::from("trial,head,sample,value\n");
    for trial in 0..t {
        let mut model = build_model(cfg, p.train.feature_dim(), p.train.target_dim(), cfg.train.lambda, trial as u64)?;
        fit(cfg, out, &mut model, &p.train, cfg.train.lambda, trial as u64)?;
        let heads = model.forward(&probe.features).stage("decompose")?;
        for h in 0..k {
            for (i, v) in heads.head(h).iter().enumerate() {
                let _ = writeln!(dump, "{trial},{h},{i},{v}");
            }
            preds.extend_from_slice(heads.head(h));
        }
    }
    let targets = probe.targets.data();
    let tensor = Tensor::new(vec![t, k, n], preds).stage("decompose")?;
    let r = bvc_decompose(&tensor, targets).stage("decompose")?;
    out.write("decompose_predictions.csv", dump.as_bytes())?;
    let mut ts = String::from("sample,target\n");
    for (i, y) in targets.iter().enumerate() {
        let _ = writeln!(ts, "{i},{y}");
    }
    out.write("decompose_targets.csv", ts.as_bytes())?;
    let report = format!(
        "bias_sq,variance,covariance,mse_of_mean,residual,trials,heads,samples\n{},{},{},{},{},{},{},{}\n",
        r.bias_sq, r.variance, r.covariance, r.mse_of_mean, r.residual(), r.trials, r.heads, r.samples
    );
    out.write("decomposition.csv", report.as_bytes())?;
    Ok(())
}

// --- decision surfaces -----------------------------------------------------

pub const REGIMES: [&str; 2] = ["conventional", "ncl"];

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeResult {
    pub regime: &'static str,
    pub lambda: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub diversity: f64,
    pub model: NclEnsemble,
    pub state: OptimState,
    pub log: dncl::ensemble::TrainLog,
}

pub struct SurfaceRun {
    pub train: Dataset,
    pub test: Dataset,
    pub scaler: Scaler,
    pub regimes: Vec<RegimeResult>,
}

/// Trains the conventional (λ = 0) and NCL ensembles on the same spirals
/// with the same initialization and batch order, and scores both on an
/// independently drawn held-out set.
pub fn compare_regimes(cfg: &ExperimentConfig, out: Option<&mut OutputDir>) -> Result<SurfaceRun> {
    if cfg.data.source != DataSource::Spirals {
        return Err(CliError::Config("surface needs data.source = \"spirals\"".into()));
    }
    let mut train = load_dataset(cfg)?;
    let mut held_out_spec = cfg.data.spirals.spec(sub_seed(cfg.seed, stream::HELD_OUT));
    held_out_spec.points_per_arm = cfg.surface.test_points_per_arm;
    let mut test = gen_spirals(&held_out_spec).stage("data")?;
    let scaler = Scaler::fit(cfg, &train.features);
    train.features = scaler.transform(&train.features).stage("preprocess")?;
    test.features = scaler.transform(&test.features).stage("preprocess")?;

    let mut scratch;
    let out = match out {
        Some(o) => o,
        None => {
            scratch = OutputDir::detached();
            &mut scratch
        }
    };
    let mut regimes = Vec::with_capacity(2);
    for (regime, lambda) in REGIMES.into_iter().zip([0.0, cfg.surface.lambda]) {
        let mut model = build_model(cfg, 2, 1, lambda, 0)?;
        let outcome = fit(cfg, out, &mut model, &train, lambda, 0)?;
        let tr = split_metrics(&model, &train)?;
        let te = split_metrics(&model, &test)?;
        info!(
            "{regime}: train accuracy {:.4}, held-out accuracy {:.4}",
            tr.sign_accuracy, te.sign_accuracy
        );
        regimes.push(RegimeResult {
            regime,
            lambda,
            train_accuracy: tr.sign_accuracy,
            test_accuracy: te.sign_accuracy,
            diversity: te.diversity,
            model,
            state: outcome.state,
            log: outcome.log,
        });
    }
    Ok(SurfaceRun {
        train,
        test,
        scaler,
        regimes,
    })
}

/// Bounding box `[xmin, xmax, ymin, ymax]` of raw 2-D points, widened by
/// `margin` times the extent on each side.
pub fn bounding_box(points: &Tensor, margin: f64) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for r in 0..points.rows() {
        let p = points.row(r);
        b[0] = b[0].min(p[0]);
        b[1] = b[1].max(p[0]);
        b[2] = b[2].min(p[1]);
        b[3] = b[3].max(p[1]);
    }
    let (dx, dy) = ((b[1] - b[0]) * margin, (b[3] - b[2]) * margin);
    [b[0] - dx, b[1] + dx, b[2] - dy, b[3] + dy]
}

/// Lattice of `resolution²` points over `bbox`, x varying fastest, with
/// per-head and ensemble outputs: `x,y,head_0,..,head_{K-1},ensemble`.
pub fn surface_grid(model: &NclEnsemble, scaler: &Scaler, bbox: [f64; 4], resolution: usize) -> Result<String> {
    let coord = |lo: f64, hi: f64, i: usize| {
        if resolution == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (resolution - 1) as f64
        }
    };
    let mut raw = Vec::with_capacity(2 * resolution * resolution);
    for j in 0..resolution {
        for i in 0..resolution {
            raw.push(coord(bbox[0], bbox[1], i));
            raw.push(coord(bbox[2], bbox[3], j));
        }
    }
    let raw = Tensor::new(vec![resolution * resolution, 2], raw).stage("surface")?;
    let heads = model.forward(&scaler.transform(&raw).stage("surface")?).stage("surface")?;
    let ens = dncl::ensemble::aggregate(&heads, model.aggregator()).stage("surface")?;
    let mut s = String::from("x,y");
    for k in 0..heads.k() {
        let _ = write!(s, ",head_{k}");
    }
    s.push_str(",ensemble\n");
    for r in 0..raw.rows() {
        let p = raw.row(r);
        let _ = write!(s, "{},{}", p[0], p[1]);
        for k in 0..heads.k() {
            let _ = write!(s, ",{}", heads.head(k)[r]);
        }
        let _ = writeln!(s, ",{}", ens.data()[r]);
    }
    Ok(s)
}

pub const SURFACE_SUMMARY_HEADER: &str = "regime,lambda,train_accuracy,test_accuracy,test_diversity";

fn run_surface(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<()> {
    let run = compare_regimes(cfg, Some(out))?;
    let raw_train = load_dataset(cfg)?;
    let bbox = bounding_box(&raw_train.features, cfg.surface.margin);
    out.write("spirals_train.csv", raw_train.to_csv().as_bytes())?;
    let mut summary = String::from(SURFACE_SUMMARY_HEADER);
    summary.push('\n');
    for r in &run.regimes {
        let grid = surface_grid(&r.model, &run.scaler, bbox, cfg.surface.resolution)?;
        out.write(&format!("surface_{}.csv", r.regime), grid.as_bytes())?;
        out.write(&format!("train_log_{}.csv", r.regime), r.log.to_csv().as_bytes())?;
        out.write(&format!("model_{}.ncl", r.regime), &r.model.to_checkpoint(&r.state))?;
        let _ = writeln!(
            summary,
            "{},{},{},{},{}",
            r.regime, r.lambda, r.train_accuracy, r.test_accuracy, r.diversity
        );
    }
    out.write("surface_summary.csv", summary.as_bytes())?;
    Ok(())
}

// --- Rademacher probe ------------------------------------------------------

pub const RADEMACHER_HEADER: &str =
    "k,samples,features,trials,full,full_mc_std,group,group_mc_std,ratio,ratio_mc_std,lower,upper";

/// Synthetic trunk features `N × (K·block_dim)` in the configured layout.
pub fn probe_features(layout: FeatureLayout, samples: usize, k: usize, block_dim: usize, seed: u64) -> Tensor {
    let f = k * block_dim;
    let mut rng = Rng::new(seed);
    let mut data = vec![0.0; samples * f];
    for r in 0..samples {
        let cols = match layout {
            FeatureLayout::Isotropic => f,
            FeatureLayout::SingleBlock => block_dim,
        };
        for c in 0..cols {
            data[r * f + c] = rng.normal();
        }
    }
    Tensor::new(vec![samples, f], data).expect("consistent dims")
}

fn run_rademacher(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<()> {
    let rc = &cfg.rademacher;
    let mut s = String::from(RADEMACHER_HEADER);
    s.push('\n');
    for &k in &rc.ks {
        let phi = probe_features(rc.layout, rc.samples, k, rc.block_dim, sub_seed(cfg.seed, stream::FEATURES + k as u64));
        let r = rademacher_group_ratio(&phi, k, rc.bound, rc.trials, sub_seed(cfg.seed, stream::SIGNS + k as u64))
            .stage("rademacher")?;
        let kf = k as f64;
        let _ = writeln!(
            s,
            "{k},{},{},{},{},{},{},{},{},{},{},{}",
            rc.samples,
            phi.cols(),
            rc.trials,
            r.full.value,
            r.full.mc_std,
            r.group.value,
            r.group.mc_std,
            r.ratio,
            r.ratio_mc_std,
            1.0 / kf,
            1.0 / kf.sqrt()
        );
    }
    out.write("rademacher.csv", s.as_bytes())?;
    Ok(())
}

// --- data export -----------------------------------------------------------

fn run_gen_data(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<()> {
    let spirals = gen_spirals(&cfg.data.spirals.spec(sub_seed(cfg.seed, stream::DATA))).stage("data")?;
    out.write("spirals.csv", spirals.to_csv().as_bytes())?;
    let d = &cfg.dynamics;
    let toy = gen_scalar_toy(&ScalarToySpec {
        target: d.target,
        regressors: d.regressors,
        iterations: d.iterations,
        lr: d.lr,
        init_low: d.init_low,
        init_high: d.init_high,
        seed: cfg.seed,
    })
    .stage("data")?;
    let mut s = String::from("regressor,init\n");
    for (i, v) in toy.inits.iter().enumerate() {
        let _ = writeln!(s, "{i},{v}");
    }
    out.write("scalar_toy_inits.csv", s.as_bytes())?;
    Ok(())
}
