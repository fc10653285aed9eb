//! Autoregressive training with pushforward truncation and AdamW.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::graph::{graph_for, GraphTopology};
use crate::model::{Model, ModelInput};
use crate::nn::{Gradients, ParamId, ParamStore, Real, Tape, Var};
use crate::solvers::Trajectory;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    /// Multiplicative learning-rate decay applied every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    /// Largest unroll depth r; the first r − 1 calls carry no gradient.
    pub max_unroll: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Training samples drawn per trajectory and epoch; `None` uses the
    /// number of K-step blocks after the first.
    pub samples_per_trajectory: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            lr0: 1e-4,
            lr_decay: 0.4,
            decay_every: 5,
            max_unroll: 2,
            weight_decay: 1e-8,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            samples_per_trajectory: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.max_unroll == 0 {
            return bad("max_unroll must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.decay_every == 0 {
            return bad("decay_every must be positive");
        }
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) || !(self.lr_decay > 0.0) {
            return bad("learning rate and decay must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("AdamW needs betas in [0, 1) and a positive epsilon");
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        Ok(())
    }

    /// `lr0 · decay^⌊epoch / decay_every⌋`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_decay.powi((epoch / self.decay_every) as i32)
    }
}

/// First and second moments of AdamW, shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Real> OptState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<T>> = params.tensors().map(|(_, d)| vec![T::zero(); d.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One AdamW update with decoupled weight decay:
/// `θ ← θ − lr·(m̂ / (√v̂ + ε) + λθ)`.
pub fn adamw_step<T: Real>(
    params: &mut ParamStore<T>,
    grads: &Gradients<T>,
    state: &mut OptState<T>,
    lr: f64,
    cfg: &TrainConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::from_f64_lossy(cfg.beta1), T::from_f64_lossy(cfg.beta2));
    let (ob1, ob2) = (T::from_f64_lossy(1.0 - cfg.beta1), T::from_f64_lossy(1.0 - cfg.beta2));
    let (c1, c2) = (T::from_f64_lossy(c1), T::from_f64_lossy(c2));
    let eps = T::from_f64_lossy(cfg.eps);
    let wd = T::from_f64_lossy(cfg.weight_decay);
    let lr = T::from_f64_lossy(lr);
    for (i, g) in grads.tensors.iter().enumerate() {
        let theta = params.get_mut(ParamId(i));
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..g.len() {
            m[j] = b1 * m[j] + ob1 * g[j];
            v[j] = b2 * v[j] + ob2 * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            theta[j] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * theta[j]);
        }
    }
}

/// `sqrt(mean((pred − target)²))` as a scalar tape node.
pub fn rmse_loss<T: Real>(tape: &mut Tape<'_, T>, pred: Var, target: Var) -> Result<Var> {
    let diff = tape.sub(pred, target)?;
    let ms = tape.mean_square(diff);
    Ok(tape.sqrt(ms))
}

/// One training example: trajectory, input block and unroll depth.
///
/// The input is the ground-truth block `block` (steps `block·K ..
/// (block+1)·K`); the target is block `block + unroll`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sample {
    pub trajectory: usize,
    pub block: usize,
    pub unroll: usize,
}

/// Number of complete K-step blocks in `n_t` steps.
pub fn block_count(n_t: usize, window: usize) -> usize {
    n_t / window
}

/// Draws an unroll depth `r ∈ {1..=max_unroll}` (capped so a target exists)
/// and then a start block uniformly among those with a full target window.
pub fn draw_sample(rng: &mut impl Rng, trajectory: usize, n_blocks: usize, max_unroll: usize) -> Sample {
    debug_assert!(n_blocks >= 2);
    let r_max = max_unroll.min(n_blocks - 1);
    let unroll = rng.gen_range(1..=r_max);
    let block = rng.gen_range(0..n_blocks - unroll);
    Sample {
        trajectory,
        block,
        unroll,
    }
}

/// Loss and parameter gradient of one sample. Only the last of the `unroll`
/// model calls is recorded; earlier calls run on their own tapes.
pub fn sample_gradient<T: Real>(
    model: &Model,
    params: &ParamStore<T>,
    graph: &GraphTopology,
    traj: &Trajectory,
    sample: Sample,
) -> Result<(f64, Gradients<T>)> {
    let k = model.config().window;
    let times_of = |block: usize| -> Vec<f64> { (block * k..(block + 1) * k).map(|s| traj.t(s)).collect() };
    let target_block = sample.block + sample.unroll;
    if sample.unroll == 0 || (target_block + 1) * k > traj.n_t {
        return Err(Error::InvalidArgument(format!(
            "sample {sample:?} reaches past step {} (K = {k})",
            traj.n_t
        )));
    }
    let mut input = traj.steps(sample.block * k, k).to_vec();
    for j in 0..sample.unroll - 1 {
        let times = times_of(sample.block + j);
        input = model.predict(
            params,
            graph,
            &ModelInput {
                window: &input,
                times: &times,
                dt: traj.dt(),
                eta: &traj.eta,
                final_time: traj.final_time,
            },
        )?;
    }
    let times = times_of(target_block - 1);
    let mut tape = Tape::new(params);
    let pred = model.forward(
        &mut tape,
        graph,
        &ModelInput {
            window: &input,
            times: &times,
            dt: traj.dt(),
            eta: &traj.eta,
            final_time: traj.final_time,
        },
    )?;
    let target = model.to_node_major(traj.steps(target_block * k, k), traj.n_x);
    let (rows, cols) = tape.shape(pred);
    let target = tape.constant(rows, cols, target.into_iter().map(T::from_f64_lossy).collect())?;
    let loss = rmse_loss(&mut tape, pred, target)?;
    let value = tape.scalar(loss).as_f64();
    Ok((value, tape.backward(loss)?))
}

/// Parameters and optimizer state for step-wise training.
pub struct Trainer<'m, T: Real> {
    pub model: &'m Model,
    pub params: ParamStore<T>,
    pub opt: OptState<T>,
    pub config: TrainConfig,
}

impl<'m, T: Real> Trainer<'m, T> {
    pub fn new(model: &'m Model, params: ParamStore<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        model.check_params(&params)?;
        let opt = OptState::new(&params);
        Ok(Self {
            model,
            params,
            opt,
            config,
        })
    }

    /// Mean loss and mean gradient over `batch`; per-sample work runs in
    /// parallel and is summed in batch order.
    pub fn batch_gradient(
        &self,
        trajs: &[Trajectory],
        graphs: &[GraphTopology],
        batch: &[Sample],
    ) -> Result<(f64, Gradients<T>)> {
        let parts = batch
            .par_iter()
            .map(|s| sample_gradient(self.model, &self.params, &graphs[s.trajectory], &trajs[s.trajectory], *s))
            .collect::<Result<Vec<_>>>()?;
        let mut total = Gradients::zeros_like(&self.params);
        let mut loss = 0.0;
        for (l, g) in &parts {
            loss += l;
            total.add_assign(g);
        }
        let n = batch.len().max(1) as f64;
        total.scale(T::from_f64_lossy(1.0 / n));
        Ok((loss / n, total))
    }

    /// One optimizer step; returns the batch loss before the update.
    pub fn step(&mut self, trajs: &[Trajectory], graphs: &[GraphTopology], batch: &[Sample], lr: f64) -> Result<f64> {
        let (loss, grads) = self.batch_gradient(trajs, graphs, batch)?;
        if !loss.is_finite() || !grads.all_finite() {
            return Err(Error::NonFinite(format!("training loss {loss}")));
        }
        adamw_step(&mut self.params, &grads, &mut self.opt, lr, &self.config);
        Ok(loss)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub valid_re: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameters of the epoch with the lowest validation error.
    pub best_params: ParamStore<T>,
    pub best_epoch: usize,
    pub best_valid_re: f64,
    pub history: Vec<EpochMetrics>,
}

/// Shuffled per-epoch sample plan, reproducible from `(seed, epoch)`.
pub fn epoch_plan(cfg: &TrainConfig, epoch: usize, n_trajs: usize, n_blocks: usize) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(epoch as u64);
    let per = cfg.samples_per_trajectory.unwrap_or(n_blocks.saturating_sub(1)).max(1);
    let mut order: Vec<usize> = (0..n_trajs).flat_map(|i| std::iter::repeat_n(i, per)).collect();
    order.shuffle(&mut rng);
    order
        .into_iter()
        .map(|i| draw_sample(&mut rng, i, n_blocks, cfg.max_unroll))
        .collect()
}

/// Trains for `cfg.epochs`, scoring the validation set after every epoch
/// and keeping the best parameters. `on_epoch` sees each epoch's metrics.
pub fn train<T: Real>(
    model: &Model,
    init: ParamStore<T>,
    train_set: &[Trajectory],
    valid_set: &[Trajectory],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome<T>> {
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::InvalidArgument("training needs non-empty train and valid sets".into()));
    }
    let k = model.config().window;
    let n_t = train_set[0].n_t;
    if train_set.iter().any(|t| t.n_t != n_t || t.n_x != train_set[0].n_x) {
        return Err(Error::InvalidArgument("training trajectories must share one grid".into()));
    }
    let n_blocks = block_count(n_t, k);
    if n_blocks < 2 {
        return Err(Error::InvalidArgument(format!("{n_t} steps hold fewer than two windows of {k}")));
    }
    let graphs = train_set.iter().map(graph_for).collect::<Result<Vec<_>>>()?;
    let mut trainer = Trainer::new(model, init, cfg.clone())?;
    let mut best: Option<(usize, f64, ParamStore<T>)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let plan = epoch_plan(cfg, epoch, train_set.len(), n_blocks);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, batch) in plan.chunks(cfg.batch_size).enumerate() {
            let loss = trainer.step(train_set, &graphs, batch, lr).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("{m} at epoch {epoch}, batch {b}")),
                other => other,
            })?;
            loss_sum += loss;
            batches += 1;
        }
        let valid_re = evaluate(model, &trainer.params, valid_set)?.relative_error;
        let metrics = EpochMetrics {
            epoch,
            lr,
            train_loss: loss_sum / batches.max(1) as f64,
            valid_re,
        };
        on_epoch(&metrics);
        history.push(metrics);
        if valid_re.is_finite() && best.as_ref().is_none_or(|(_, re, _)| valid_re < *re) {
            best = Some((epoch, valid_re, trainer.params.clone()));
        }
    }
    let (best_epoch, best_valid_re, best_params) = match best {
        Some(b) => b,
        None if cfg.epochs == 0 => (0, f64::NAN, trainer.params),
        None => return Err(Error::NonFinite("validation error never finite".into())),
    };
    Ok(TrainOutcome {
        best_params,
        best_epoch,
        best_valid_re,
        history,
    })
}

/// Tab-separated per-epoch log.
pub fn metrics_log(history: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch\tlr\ttrain_loss\tvalid_re\n");
    for m in history {
        let _ = writeln!(s, "{}\t{:e}\t{}\t{}", m.epoch, m.lr, m.train_loss, m.valid_re);
    }
    s
}

#[cfg(test)]
mod tests;
