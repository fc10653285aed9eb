//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use msmp_core::datasets::{generate_experiment, read_dataset, split_path, write_experiment, ExperimentData};
use msmp_core::evaluation::{emit_heatmaps, evaluate, relative_error, run_matrix, write_results, MatrixSpec, RunResult};
use msmp_core::model::{grad_check_model, load_checkpoint, save_checkpoint, tiny_grad_check, Model, ModelConfig, ModelKind};
use msmp_core::nn::{ParamStore, Real};
use msmp_core::training::{metrics_log, train, TrainConfig};
use msmp_core::{Experiment, Split, SplitSizes};

use crate::config::FileConfig;
use crate::{
    CliError, Command, DataSizeArgs, EvaluateArgs, GenerateArgs, GradCheckArgs, ModelSizeArgs, OptimArgs, PlotArgs,
    Precision, RunMatrixArgs, TrainArgs,
};

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Plot(a) => plot(a),
        Command::GradCheck(a) => grad_check(a),
        Command::RunMatrix(a) => matrix(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        Some(p) => FileConfig::load(p).map_err(CliError::Usage),
        None => Ok(FileConfig::default()),
    }
}

fn parse_name<T: std::str::FromStr>(value: Option<&String>, what: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .map(|s| s.parse::<T>().map_err(|e| CliError::Usage(format!("config {what}: {e}"))))
        .transpose()
}

fn experiment_of(flag: Option<Experiment>, cfg: &FileConfig) -> Result<Experiment> {
    Ok(flag
        .or(parse_name(cfg.run.experiment.as_ref(), "experiment")?)
        .unwrap_or(Experiment::E1))
}

fn sizes_of(exp: Experiment, flags: &DataSizeArgs, cfg: &FileConfig) -> SplitSizes {
    let d = exp.default_sizes();
    SplitSizes {
        train: flags.n_train.or(cfg.data.train).unwrap_or(d.train),
        valid: flags.n_valid.or(cfg.data.valid).unwrap_or(d.valid),
        test: flags.n_test.or(cfg.data.test).unwrap_or(d.test),
    }
}

fn model_config(kind: ModelKind, exp: Experiment, flags: &ModelSizeArgs, cfg: &FileConfig) -> Result<ModelConfig> {
    let paper = ModelConfig::paper(kind, exp);
    let n_hid = flags.n_hid.or(cfg.model.n_hid).unwrap_or(paper.n_hid);
    let n_layers = flags.n_layers.or(cfg.model.n_layers).unwrap_or(paper.n_layers);
    let window = flags.window.or(cfg.model.window).unwrap_or(paper.window);
    let mut config = paper.with_size(n_hid, n_layers, window)?;
    if let Some(dt) = cfg.model.lem_dt {
        config.lem_dt = dt;
        config.validate()?;
    }
    Ok(config)
}

fn train_config(flags: &OptimArgs, cfg: &FileConfig, seed: u64) -> Result<(TrainConfig, Precision)> {
    let d = TrainConfig::default();
    let t = &cfg.train;
    let precision = match (flags.precision, t.precision.as_deref()) {
        (Some(p), _) => p,
        (None, Some("f32")) | (None, None) => Precision::F32,
        (None, Some("f64")) => Precision::F64,
        (None, Some(other)) => return Err(CliError::Usage(format!("config precision: unknown value '{other}'"))),
    };
    let tc = TrainConfig {
        epochs: flags.epochs.or(t.epochs).unwrap_or(d.epochs),
        batch_size: flags.batch_size.or(t.batch_size).unwrap_or(d.batch_size),
        lr0: flags.lr.or(t.lr0).unwrap_or(d.lr0),
        lr_decay: flags.lr_decay.or(t.lr_decay).unwrap_or(d.lr_decay),
        decay_every: flags.decay_every.or(t.decay_every).unwrap_or(d.decay_every),
        max_unroll: flags.max_unroll.or(t.max_unroll).unwrap_or(d.max_unroll),
        weight_decay: flags.weight_decay.or(t.weight_decay).unwrap_or(d.weight_decay),
        samples_per_trajectory: flags.samples_per_trajectory.or(t.samples_per_trajectory),
        seed,
        ..d
    };
    tc.validate()?;
    Ok((tc, precision))
}

fn generate(a: GenerateArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let exp = experiment_of(a.experiment, &cfg)?;
    let seed = a.seed.or(cfg.run.seed).unwrap_or(0);
    let sizes = sizes_of(exp, &a.sizes, &cfg);
    let data = generate_experiment(exp, seed, sizes)?;
    for p in write_experiment(&a.out, &data)? {
        println!("{}", p.display());
    }
    println!(
        "{exp}: {} train, {} valid, {} test trajectories",
        sizes.train, sizes.valid, sizes.test
    );
    Ok(())
}

fn read_split(dir: &Path, exp: Experiment, split: Split) -> Result<Vec<msmp_core::solvers::Trajectory>> {
    let path = split_path(dir, exp, split);
    let ds = read_dataset(&path)?;
    if ds.experiment != exp {
        return Err(CliError::Runtime(format!(
            "{} holds {} data, expected {exp}",
            path.display(),
            ds.experiment
        )));
    }
    if ds.trajectories.is_empty() {
        return Err(CliError::Runtime(format!("{} contains no trajectories", path.display())));
    }
    Ok(ds.trajectories)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let exp = experiment_of(a.experiment, &cfg)?;
    let kind = match a.model {
        Some(k) => k,
        None => parse_name(cfg.run.model.as_ref(), "model")?.unwrap_or(ModelKind::MsmpPde),
    };
    let seed = a.seed.or(cfg.run.seed).unwrap_or(0);
    let config = model_config(kind, exp, &a.size, &cfg)?;
    let (tc, precision) = train_config(&a.optim, &cfg, seed)?;
    let train_set = read_split(&a.data, exp, Split::Train)?;
    let valid_set = read_split(&a.data, exp, Split::Valid)?;
    let model = Model::new(config)?;
    let stem = format!("{exp}_{kind}_s{seed}");
    println!("{stem}: {} parameters", model.param_count());
    match precision {
        Precision::F32 => train_and_save::<f32>(&model, &train_set, &valid_set, &tc, &a.out, &stem),
        Precision::F64 => train_and_save::<f64>(&model, &train_set, &valid_set, &tc, &a.out, &stem),
    }
}

fn train_and_save<T: Real>(
    model: &Model,
    train_set: &[msmp_core::solvers::Trajectory],
    valid_set: &[msmp_core::solvers::Trajectory],
    tc: &TrainConfig,
    out: &Path,
    stem: &str,
) -> Result<()> {
    let outcome = train(model, model.init_params::<T>(tc.seed), train_set, valid_set, tc, |m| {
        println!(
            "epoch {:>3}  lr {:.2e}  train loss {:.6}  valid RE {:.6}",
            m.epoch, m.lr, m.train_loss, m.valid_re
        );
    })?;
    let ckpt = out.join(format!("{stem}.msmc"));
    save_checkpoint(&ckpt, model.config(), &outcome.best_params)?;
    let log = out.join(format!("{stem}.log"));
    fs::write(&log, metrics_log(&outcome.history)).map_err(|e| CliError::Runtime(format!("{}: {e}", log.display())))?;
    println!(
        "best epoch {} (valid RE {:.6}); wrote {} and {}",
        outcome.best_epoch,
        outcome.best_valid_re,
        ckpt.display(),
        log.display()
    );
    Ok(())
}

/// The experiment whose channel count and parameter dimension match a checkpoint.
fn infer_experiment(config: &ModelConfig) -> Result<Experiment> {
    Experiment::ALL
        .into_iter()
        .find(|e| e.n_channels() == config.n_ch && e.eta_dim() == config.d_eta)
        .ok_or_else(|| CliError::Runtime("checkpoint matches no experiment".into()))
}

fn load_for_data(
    checkpoint: &Path,
    experiment: Option<Experiment>,
) -> Result<(Model, ParamStore<f64>, Experiment, String)> {
    let (model, params) = load_checkpoint(checkpoint)?;
    let exp = match experiment {
        Some(e) => e,
        None => infer_experiment(model.config())?,
    };
    if exp.n_channels() != model.config().n_ch || exp.eta_dim() != model.config().d_eta {
        return Err(CliError::Usage(format!("checkpoint does not fit {exp} data")));
    }
    let stem = checkpoint
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    Ok((model, params, exp, stem))
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let (model, params, exp, stem) = load_for_data(&a.checkpoint, a.experiment)?;
    let trajs = read_split(&a.data, exp, a.split)?;
    let eval = evaluate(&model, &params, &trajs)?;
    println!(
        "{exp} {} {}: relative error {:.6} over {} trajectories ({} diverged)",
        model.config().kind(),
        a.split.name(),
        eval.relative_error,
        trajs.len(),
        eval.diverged
    );
    let result = RunResult::from_folds(exp, model.config().kind(), vec![eval.relative_error]);
    let dir = a.out.join(format!("{stem}_{}", a.split.name()));
    write_results(&dir, &[result])?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn plot(a: PlotArgs) -> Result<()> {
    let (model, params, exp, stem) = load_for_data(&a.checkpoint, a.experiment)?;
    let trajs = read_split(&a.data, exp, a.split)?;
    let truth = trajs
        .get(a.index)
        .ok_or_else(|| CliError::Usage(format!("index {} out of range ({} trajectories)", a.index, trajs.len())))?;
    let eval = evaluate(&model, &params, std::slice::from_ref(truth))?;
    let pred = &eval.rollouts[0].trajectory;
    let re = relative_error(std::slice::from_ref(pred), std::slice::from_ref(truth), model.config().window)?;
    let files = emit_heatmaps(pred, truth, &a.out, &format!("{stem}_{}{}", a.split.name(), a.index), re)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn grad_check(a: GradCheckArgs) -> Result<()> {
    let report = if a.tiny {
        tiny_grad_check(a.model, a.experiment, a.per_tensor, a.seed)?
    } else {
        grad_check_model(ModelConfig::paper(a.model, a.experiment), 100, a.per_tensor, a.seed)?
    };
    println!(
        "{} on {}: max relative error {:.3e} over {} coordinates",
        a.model, a.experiment, report.max_rel_error, report.coords_checked
    );
    if let Some((name, idx, an, num)) = &report.worst {
        println!("worst: {name}[{idx}] analytic {an:.6e} numeric {num:.6e}");
    }
    if !(report.max_rel_error < a.tolerance) {
        return Err(CliError::Runtime(format!(
            "gradient mismatch {:.3e} exceeds tolerance {:.1e}",
            report.max_rel_error, a.tolerance
        )));
    }
    Ok(())
}

fn load_or_generate(dir: &Path, exp: Experiment, seed: u64, sizes: SplitSizes) -> Result<ExperimentData> {
    let paths: Vec<PathBuf> = Split::ALL.iter().map(|&s| split_path(dir, exp, s)).collect();
    if paths.iter().all(|p| p.exists()) {
        return Ok(ExperimentData {
            experiment: exp,
            train: read_split(dir, exp, Split::Train)?,
            valid: read_split(dir, exp, Split::Valid)?,
            test: read_split(dir, exp, Split::Test)?,
        });
    }
    println!("generating {exp} data in {}", dir.display());
    let data = generate_experiment(exp, seed, sizes)?;
    write_experiment(dir, &data)?;
    Ok(data)
}

fn matrix(a: RunMatrixArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let experiments = match a.experiments {
        Some(e) => e,
        None => match parse_name::<Experiment>(cfg.run.experiment.as_ref(), "experiment")? {
            Some(e) => vec![e],
            None => Experiment::ALL.to_vec(),
        },
    };
    let models = match a.models {
        Some(m) => m,
        None => match parse_name::<ModelKind>(cfg.run.model.as_ref(), "model")? {
            Some(m) => vec![m],
            None => ModelKind::ALL.to_vec(),
        },
    };
    let seed = a.seed.or(cfg.run.seed).unwrap_or(0);
    let (tc, precision) = train_config(&a.optim, &cfg, seed)?;
    let probe = model_config(ModelKind::MpPde, experiments[0], &a.size, &cfg)?;
    let spec = MatrixSpec {
        models,
        folds: a.folds,
        n_hid: probe.n_hid,
        n_layers: probe.n_layers,
        window: probe.window,
        train: tc,
        data_seed: Some(seed),
    };
    let data = experiments
        .iter()
        .map(|&e| load_or_generate(&a.data, e, seed, sizes_of(e, &a.sizes, &cfg)))
        .collect::<Result<Vec<_>>>()?;
    let progress = |line: &str| println!("{line}");
    let results = match precision {
        Precision::F32 => run_matrix::<f32>(&data, &spec, progress)?,
        Precision::F64 => run_matrix::<f64>(&data, &spec, progress)?,
    };
    for r in &results {
        println!(
            "{:<8} {:<10} mean {:.4} ± {:.4}  median {:.4}",
            r.experiment.name(),
            r.model.name(),
            r.mean,
            r.std,
            r.median()
        );
    }
    write_results(&a.out, &results)?;
    println!("wrote {}", a.out.join("results.csv").display());
    Ok(())
}
