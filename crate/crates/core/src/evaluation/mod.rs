//! Autoregressive rollouts, the relative L² error and result tables.

mod heatmap;

pub use heatmap::{emit_heatmaps, read_grid_csv, GridRecord};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experiment::Experiment;
use crate::graph::GraphTopology;
use crate::datasets::{generate_split, ExperimentData};
use crate::experiment::Split;
use crate::model::{Model, ModelConfig, ModelInput, ModelKind};
use crate::training::{train, TrainConfig};
use crate::nn::{ParamStore, Real};
use crate::solvers::{SampleGrid, Trajectory};

/// A predicted trajectory: ground truth for the first K steps, model output after.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub trajectory: Trajectory,
    pub calls: usize,
    /// Set when a model call produced a non-finite value; later steps are NaN.
    pub diverged: bool,
}

/// Number of model calls needed to cover steps `K..n_t`.
pub fn rollout_calls(n_t: usize, window: usize) -> usize {
    if window == 0 || n_t <= window {
        0
    } else {
        (n_t - window).div_ceil(window)
    }
}

/// Unrolls the model from the ground-truth seed window, feeding every
/// prediction back in as the next input.
pub fn unroll<T: Real>(model: &Model, params: &ParamStore<T>, traj: &Trajectory, graph: &GraphTopology) -> Result<Rollout> {
    let k = model.config().window;
    if traj.n_t < k {
        return Err(Error::InvalidArgument(format!("trajectory has {} steps, fewer than K = {k}", traj.n_t)));
    }
    unroll_with(traj, k, |input| model.predict(params, graph, input))
}

/// Rollout driver shared by [`unroll`] and test oracles: `step` maps one
/// input window to the next window (both time-major).
pub fn unroll_with<F>(traj: &Trajectory, window: usize, mut step: F) -> Result<Rollout>
where
    F: FnMut(&ModelInput<'_>) -> Result<Vec<f64>>,
{
    let frame = traj.n_x * traj.n_ch;
    let mut out = traj.clone();
    let calls = rollout_calls(traj.n_t, window);
    let mut diverged = false;
    for call in 0..calls {
        let start = call * window;
        let next = start + window;
        if diverged {
            out.u[next * frame..].fill(f64::NAN);
            break;
        }
        let times: Vec<f64> = (start..next).map(|s| traj.t(s)).collect();
        let input_vals = out.steps(start, window).to_vec();
        let input = ModelInput {
            window: &input_vals,
            times: &times,
            dt: traj.dt(),
            eta: &traj.eta,
            final_time: traj.final_time,
        };
        let pred = step(&input)?;
        if pred.len() != window * frame {
            return Err(Error::ShapeMismatch {
                op: "rollout step",
                left: vec![pred.len()],
                right: vec![window, traj.n_x, traj.n_ch],
            });
        }
        let keep = (traj.n_t - next).min(window) * frame;
        out.u[next * frame..next * frame + keep].copy_from_slice(&pred[..keep]);
        if pred.iter().any(|v| !v.is_finite()) {
            diverged = true;
            out.u[next * frame..].fill(f64::NAN);
        }
    }
    Ok(Rollout {
        trajectory: out,
        calls,
        diverged,
    })
}

/// `sqrt(Δt·Δx·Σ v²)` over steps `from..n_t` of `values` laid out like `traj`.
pub fn l2_norm(traj: &Trajectory, values: &[f64], from: usize) -> f64 {
    let frame = traj.n_x * traj.n_ch;
    let sum: f64 = values[from * frame..].iter().map(|v| v * v).sum();
    (traj.dt() * traj.dx() * sum).sqrt()
}

/// Ratio of the mean error norm to the mean solution norm.
pub fn relative_error_from_norms(error_norms: &[f64], truth_norms: &[f64]) -> Result<f64> {
    if error_norms.is_empty() || error_norms.len() != truth_norms.len() {
        return Err(Error::InvalidArgument(format!(
            "need matching non-empty norm lists, got {} and {}",
            error_norms.len(),
            truth_norms.len()
        )));
    }
    let n = error_norms.len() as f64;
    let err = error_norms.iter().sum::<f64>() / n;
    let truth = truth_norms.iter().sum::<f64>() / n;
    if truth == 0.0 {
        return Err(Error::InvalidArgument("reference solutions have zero norm".into()));
    }
    Ok(err / truth)
}

/// Relative L² error over the predicted steps `from..n_t` of every sample.
pub fn relative_error(preds: &[Trajectory], truths: &[Trajectory], from: usize) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} reference trajectories",
            preds.len(),
            truths.len()
        )));
    }
    let mut err = Vec::with_capacity(preds.len());
    let mut norm = Vec::with_capacity(preds.len());
    for (p, t) in preds.iter().zip(truths) {
        if (p.n_t, p.n_x, p.n_ch) != (t.n_t, t.n_x, t.n_ch) {
            return Err(Error::ShapeMismatch {
                op: "relative error",
                left: vec![p.n_t, p.n_x, p.n_ch],
                right: vec![t.n_t, t.n_x, t.n_ch],
            });
        }
        if from > t.n_t {
            return Err(Error::InvalidArgument(format!("start step {from} beyond {} steps", t.n_t)));
        }
        let diff: Vec<f64> = p.u.iter().zip(&t.u).map(|(a, b)| a - b).collect();
        err.push(l2_norm(t, &diff, from));
        norm.push(l2_norm(t, &t.u, from));
    }
    relative_error_from_norms(&err, &norm)
}

/// Test-set outcome of one trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub relative_error: f64,
    pub diverged: usize,
    pub rollouts: Vec<Rollout>,
}

/// Unrolls every trajectory (in parallel) and scores the predicted part.
pub fn evaluate<T: Real>(model: &Model, params: &ParamStore<T>, trajs: &[Trajectory]) -> Result<Evaluation> {
    let rollouts = trajs
        .par_iter()
        .map(|t| {
            let graph = crate::graph::graph_for(t)?;
            unroll(model, params, t, &graph)
        })
        .collect::<Result<Vec<_>>>()?;
    let preds: Vec<Trajectory> = rollouts.iter().map(|r| r.trajectory.clone()).collect();
    let k = model.config().window;
    let relative_error = relative_error(&preds, trajs, k)?;
    Ok(Evaluation {
        relative_error,
        diverged: rollouts.iter().filter(|r| r.diverged).count(),
        rollouts,
    })
}

/// Per-fold test errors of one (experiment, model) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub experiment: Experiment,
    pub model: ModelKind,
    pub folds: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator, 0 for a single fold).
    pub std: f64,
}

impl RunResult {
    pub fn from_folds(experiment: Experiment, model: ModelKind, folds: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&folds);
        Self {
            experiment,
            model,
            folds,
            mean,
            std,
        }
    }

    pub fn median(&self) -> f64 {
        median(&self.folds)
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Median with NaN (diverged runs) ordered above every finite value.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v: Vec<f64> = values.iter().map(|&x| if x.is_nan() { f64::INFINITY } else { x }).collect();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// CSV with one row per fold: `experiment,model,fold,re`.
pub fn results_csv(results: &[RunResult]) -> String {
    let mut s = String::from("experiment,model,fold,re\n");
    for r in results {
        for (i, re) in r.folds.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{}", r.experiment, r.model, i, re);
        }
    }
    s
}

/// Models as rows, experiments as columns, cells `mean ± std` in percent.
pub fn summary_table(results: &[RunResult]) -> String {
    let mut experiments: Vec<Experiment> = Vec::new();
    let mut models: Vec<ModelKind> = Vec::new();
    for r in results {
        if !experiments.contains(&r.experiment) {
            experiments.push(r.experiment);
        }
        if !models.contains(&r.model) {
            models.push(r.model);
        }
    }
    let mut s = String::from("model");
    for e in &experiments {
        let _ = write!(s, ",{e}");
    }
    s.push('\n');
    for m in &models {
        s.push_str(m.name());
        for e in &experiments {
            match results.iter().find(|r| r.model == *m && r.experiment == *e) {
                Some(r) => {
                    let _ = write!(s, ",{:.2}% ± {:.2}%", 100.0 * r.mean, 100.0 * r.std);
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

pub fn write_results(dir: &Path, results: &[RunResult]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("results.csv");
    fs::write(&csv, results_csv(results)).map_err(|e| Error::io(&csv, e))?;
    let table = dir.join("summary.csv");
    fs::write(&table, summary_table(results)).map_err(|e| Error::io(&table, e))
}

/// Architecture size and training settings shared by every cell of a run matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixSpec {
    pub models: Vec<ModelKind>,
    pub folds: usize,
    pub n_hid: usize,
    pub n_layers: usize,
    pub window: usize,
    pub train: TrainConfig,
    /// Master seed the data was generated with. When set, fold `f > 0`
    /// trains and validates on splits regenerated with seed `data_seed + f`;
    /// the test set stays fixed. When unset every fold shares the given splits.
    pub data_seed: Option<u64>,
}

/// Train and valid splits of one fold, regenerated on the grid of `d`.
fn fold_splits(d: &ExperimentData, seed: u64) -> Result<(Vec<Trajectory>, Vec<Trajectory>)> {
    let Some(first) = d.train.first().or(d.valid.first()) else {
        return Ok((Vec::new(), Vec::new()));
    };
    let grid = SampleGrid {
        n_t: first.n_t,
        n_x: 2 * first.n_x,
        final_time: first.final_time,
    };
    Ok((
        generate_split(d.experiment, Split::Train, d.train.len(), seed, grid)?,
        generate_split(d.experiment, Split::Valid, d.valid.len(), seed, grid)?,
    ))
}

/// Trains and tests every (experiment, model, fold). Fold `f` uses seed
/// `train.seed + f` for initialization and sample order, and fresh
/// train/valid data when `data_seed` is set. A fold whose training or
/// rollout blows up is recorded as NaN.
pub fn run_matrix<T: Real>(
    data: &[ExperimentData],
    spec: &MatrixSpec,
    mut progress: impl FnMut(&str),
) -> Result<Vec<RunResult>> {
    let mut results = Vec::new();
    for d in data {
        let models = spec
            .models
            .iter()
            .map(|&kind| Model::new(ModelConfig::paper(kind, d.experiment).with_size(spec.n_hid, spec.n_layers, spec.window)?))
            .collect::<Result<Vec<_>>>()?;
        let mut folds = vec![Vec::with_capacity(spec.folds); models.len()];
        for fold in 0..spec.folds {
            let regenerated = match spec.data_seed {
                Some(seed) if fold > 0 => Some(fold_splits(d, seed + fold as u64)?),
                _ => None,
            };
            let (train_set, valid_set) = match &regenerated {
                Some((t, v)) => (t.as_slice(), v.as_slice()),
                None => (d.train.as_slice(), d.valid.as_slice()),
            };
            let cfg = TrainConfig {
                seed: spec.train.seed + fold as u64,
                ..spec.train.clone()
            };
            for (model, out) in models.iter().zip(folds.iter_mut()) {
                let re = match train(model, model.init_params::<T>(cfg.seed), train_set, valid_set, &cfg, |_| {}) {
                    Ok(outcome) => {
                        let eval = evaluate(model, &outcome.best_params, &d.test)?;
                        if eval.diverged > 0 {
                            f64::NAN
                        } else {
                            eval.relative_error
                        }
                    }
                    Err(Error::NonFinite(_)) => f64::NAN,
                    Err(e) => return Err(e),
                };
                progress(&format!("{} {} fold {fold}: RE {re:.4}", d.experiment, model.config().kind()));
                out.push(re);
            }
        }
        for (model, f) in models.iter().zip(folds) {
            results.push(RunResult::from_folds(d.experiment, model.config().kind(), f));
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests;
