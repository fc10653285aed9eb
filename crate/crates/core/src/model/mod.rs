//! Encode-process-decode networks mapping a K-step window to the next K steps.

mod checkpoint;
mod config;
pub mod layers;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{DecoderSpec, EncoderKind, ModelConfig, ModelKind};

use layers::{Conv, Decoder, Dense, GraphInputs, LemCell, LstmCell, Mlp2, Mpnn, ProcessorLayer};

use crate::error::{Error, Result};
use crate::graph::GraphTopology;
use crate::nn::{ParamLayout, ParamStore, Real, Tape, Var};

/// One window of solution history on the graph nodes.
///
/// `window` is time-major, `[K][n_nodes][n_ch]`, matching the trajectory
/// storage order. `times` holds the K absolute times of those steps and `dt`
/// the uniform step used by the additive update.
#[derive(Clone, Copy, Debug)]
pub struct ModelInput<'a> {
    pub window: &'a [f64],
    pub times: &'a [f64],
    pub dt: f64,
    pub eta: &'a [f64],
    /// Time horizon used to scale absolute times to `[0, 1]`.
    pub final_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Encoder {
    Ffn(Mlp2),
    Lstm { cell: LstmCell, head: Mlp2 },
    Lem { cell: LemCell, head: Mlp2 },
}

/// Tape handles of the intermediate stages of one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardParts {
    /// Encoder output `X⁰`, `[n_nodes, n_hid]`.
    pub encoded: Var,
    /// Last processor output `X^L`.
    pub features: Var,
    /// Decoded differences `d`, `[n_nodes, n_ch·K]` channel-major.
    pub differences: Var,
    /// Predicted next window, same layout as `differences`.
    pub prediction: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    layout: ParamLayout,
    pub encoder: Encoder,
    pub processor: Vec<ProcessorLayer>,
    pub decoder: Decoder,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut layout = ParamLayout::new();
        let h = config.n_hid;
        let encoder = match config.encoder {
            EncoderKind::Ffn => Encoder::Ffn(Mlp2::register(&mut layout, "encoder", config.ffn_input_dim(), h, h, true)),
            EncoderKind::Lstm => Encoder::Lstm {
                cell: LstmCell::register(&mut layout, "encoder.lstm", config.recurrent_input_dim(), h),
                head: Mlp2::register(&mut layout, "encoder.head", h, h, h, true),
            },
            EncoderKind::Lem => Encoder::Lem {
                cell: LemCell::register(&mut layout, "encoder.lem", config.recurrent_input_dim(), h, config.lem_dt),
                head: Mlp2::register(&mut layout, "encoder.head", h, h, h, true),
            },
        };
        let (msg, upd) = (config.message_input_dim(), config.update_input_dim());
        let processor = (0..config.n_layers)
            .map(|l| {
                let update = Mpnn::register(&mut layout, &format!("processor.{l}.f"), h, msg, upd);
                if config.gated {
                    let gate = Mpnn::register(&mut layout, &format!("processor.{l}.gate"), h, msg, upd);
                    ProcessorLayer::Gated { update, gate }
                } else {
                    ProcessorLayer::Plain(update)
                }
            })
            .collect();
        let decoder = if config.n_ch == 1 {
            let (a, b) = config.decoder.scalar_convs();
            Decoder::Scalar {
                first: Conv::register(&mut layout, "decoder.conv0", a),
                second: Conv::register(&mut layout, "decoder.conv1", b),
            }
        } else {
            let (a, b) = config.decoder.system_convs(config.n_ch);
            Decoder::System {
                project: Dense::register(&mut layout, "decoder.linear", h, config.n_ch * config.window),
                first: Conv::register(&mut layout, "decoder.conv0", a),
                second: Conv::register(&mut layout, "decoder.conv1", b),
            }
        };
        Ok(Self {
            config,
            layout,
            encoder,
            processor,
            decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.total_count()
    }

    pub fn init_params<T: Real>(&self, seed: u64) -> ParamStore<T> {
        ParamStore::init(&self.layout, seed)
    }

    /// Checks that `params` were laid out by this model.
    pub fn check_params<T: Real>(&self, params: &ParamStore<T>) -> Result<()> {
        if params.layout() != &self.layout {
            return Err(Error::Config(format!(
                "parameter layout ({} values) does not match the {} model ({} values)",
                params.total_count(),
                self.config.kind(),
                self.param_count()
            )));
        }
        Ok(())
    }

    fn check_input(&self, graph: &GraphTopology, input: &ModelInput<'_>) -> Result<()> {
        let c = &self.config;
        let n = graph.n_nodes;
        if input.window.len() != c.window * n * c.n_ch {
            return Err(Error::ShapeMismatch {
                op: "model input",
                left: vec![input.window.len()],
                right: vec![c.window, n, c.n_ch],
            });
        }
        if input.times.len() != c.window {
            return Err(Error::ShapeMismatch {
                op: "model times",
                left: vec![input.times.len()],
                right: vec![c.window],
            });
        }
        if input.eta.len() != c.d_eta {
            return Err(Error::ShapeMismatch {
                op: "model eta",
                left: vec![input.eta.len()],
                right: vec![c.d_eta],
            });
        }
        if !(input.final_time > 0.0) || !(graph.length > 0.0) {
            return Err(Error::InvalidArgument("domain length and final time must be positive".into()));
        }
        Ok(())
    }

    /// Records a full forward pass and returns the predicted window,
    /// `[n_nodes, n_ch·K]` channel-major.
    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, graph: &GraphTopology, input: &ModelInput<'_>) -> Result<Var> {
        Ok(self.forward_parts(tape, graph, input)?.prediction)
    }

    pub fn forward_parts<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        graph: &GraphTopology,
        input: &ModelInput<'_>,
    ) -> Result<ForwardParts> {
        self.check_input(graph, input)?;
        let encoded = self.encode(tape, graph, input)?;
        let inputs = self.graph_inputs(tape, graph, input)?;
        let mut x = encoded;
        for layer in &self.processor {
            x = layer.forward(tape, x, &graph.src, &graph.dst, &inputs)?;
        }
        let differences = self.decoder.forward(tape, x)?;
        let prediction = self.apply_update(tape, graph.n_nodes, input, differences)?;
        Ok(ForwardParts {
            encoded,
            features: x,
            differences,
            prediction,
        })
    }

    /// Evaluates on a private tape and returns the prediction time-major,
    /// `[K][n_nodes][n_ch]`, in f64.
    pub fn predict<T: Real>(&self, params: &ParamStore<T>, graph: &GraphTopology, input: &ModelInput<'_>) -> Result<Vec<f64>> {
        let mut tape = Tape::new(params);
        let out = self.forward(&mut tape, graph, input)?;
        Ok(self.to_time_major(tape.value(out), graph.n_nodes))
    }

    /// Reorders a time-major window into the node-row, channel-major layout used on the tape.
    pub fn to_node_major(&self, window: &[f64], n_nodes: usize) -> Vec<f64> {
        let (k, c) = (self.config.window, self.config.n_ch);
        let mut out = vec![0.0; window.len()];
        for l in 0..k {
            for i in 0..n_nodes {
                for ch in 0..c {
                    out[i * c * k + ch * k + l] = window[(l * n_nodes + i) * c + ch];
                }
            }
        }
        out
    }

    pub fn to_time_major<T: Real>(&self, values: &[T], n_nodes: usize) -> Vec<f64> {
        let (k, c) = (self.config.window, self.config.n_ch);
        let mut out = vec![0.0; values.len()];
        for i in 0..n_nodes {
            for ch in 0..c {
                for l in 0..k {
                    out[(l * n_nodes + i) * c + ch] = values[i * c * k + ch * k + l].as_f64();
                }
            }
        }
        out
    }

    fn constant<T: Real>(tape: &mut Tape<'_, T>, rows: usize, cols: usize, data: &[f64]) -> Result<Var> {
        tape.constant(rows, cols, data.iter().map(|&v| T::from_f64_lossy(v)).collect())
    }

    fn encode<T: Real>(&self, tape: &mut Tape<'_, T>, graph: &GraphTopology, input: &ModelInput<'_>) -> Result<Var> {
        let c = &self.config;
        let n = graph.n_nodes;
        let (k, nch) = (c.window, c.n_ch);
        let x_scaled: Vec<f64> = graph.x.iter().map(|&x| x / graph.length).collect();
        match &self.encoder {
            Encoder::Ffn(mlp) => {
                let dim = c.ffn_input_dim();
                let node_major = self.to_node_major(input.window, n);
                let t_k = input.times[k - 1] / input.final_time;
                let mut data = Vec::with_capacity(n * dim);
                for i in 0..n {
                    data.extend_from_slice(&node_major[i * nch * k..(i + 1) * nch * k]);
                    data.push(x_scaled[i]);
                    data.push(t_k);
                    data.extend_from_slice(input.eta);
                }
                let x = Self::constant(tape, n, dim, &data)?;
                mlp.forward(tape, x)
            }
            Encoder::Lstm { cell, head } => {
                let mut state = cell.zero_state(tape, n);
                for l in 0..k {
                    let u = self.step_input(tape, n, l, &x_scaled, input)?;
                    state = cell.step(tape, state, u)?;
                }
                head.forward(tape, state.h)
            }
            Encoder::Lem { cell, head } => {
                let mut state = cell.zero_state(tape, n);
                for l in 0..k {
                    let u = self.step_input(tape, n, l, &x_scaled, input)?;
                    state = cell.step(tape, state, u)?;
                }
                head.forward(tape, state.y)
            }
        }
    }

    /// Recurrent input of step `l`: `[u (n_ch), x_i, t_l, η]` per node.
    fn step_input<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        n: usize,
        l: usize,
        x_scaled: &[f64],
        input: &ModelInput<'_>,
    ) -> Result<Var> {
        let c = &self.config;
        let dim = c.recurrent_input_dim();
        let t = input.times[l] / input.final_time;
        let mut data = Vec::with_capacity(n * dim);
        for (i, &xi) in x_scaled.iter().enumerate() {
            let base = (l * n + i) * c.n_ch;
            data.extend_from_slice(&input.window[base..base + c.n_ch]);
            data.push(xi);
            data.push(t);
            data.extend_from_slice(input.eta);
        }
        Self::constant(tape, n, dim, &data)
    }

    fn graph_inputs<T: Real>(&self, tape: &mut Tape<'_, T>, graph: &GraphTopology, input: &ModelInput<'_>) -> Result<GraphInputs> {
        let c = &self.config;
        let n = graph.n_nodes;
        let w = c.n_ch * c.window;
        let dim = w + 1 + c.d_eta;
        let node_major = self.to_node_major(input.window, n);
        let mut data = Vec::with_capacity(graph.n_edges() * dim);
        for e in 0..graph.n_edges() {
            let (i, j) = (graph.dst[e], graph.src[e]);
            let ui = &node_major[i * w..(i + 1) * w];
            let uj = &node_major[j * w..(j + 1) * w];
            data.extend(ui.iter().zip(uj).map(|(a, b)| a - b));
            data.push(graph.relative_position(e) / graph.length);
            data.extend_from_slice(input.eta);
        }
        let edge_features = Self::constant(tape, graph.n_edges(), dim, &data)?;
        let node_eta = if c.d_eta > 0 {
            let eta: Vec<f64> = (0..n).flat_map(|_| input.eta.iter().copied()).collect();
            Some(Self::constant(tape, n, c.d_eta, &eta)?)
        } else {
            None
        };
        Ok(GraphInputs {
            edge_features,
            node_eta,
            n_nodes: n,
        })
    }

    /// `u^{ℓ} = u_last + ℓ·Δt·d^ℓ` for ℓ = 1..K, with `u_last` the final input step.
    fn apply_update<T: Real>(&self, tape: &mut Tape<'_, T>, n: usize, input: &ModelInput<'_>, d: Var) -> Result<Var> {
        let (k, nch) = (self.config.window, self.config.n_ch);
        let last = &input.window[(k - 1) * n * nch..];
        let mut base = Vec::with_capacity(n * nch * k);
        let mut coef = Vec::with_capacity(n * nch * k);
        for i in 0..n {
            for ch in 0..nch {
                for l in 0..k {
                    base.push(last[i * nch + ch]);
                    coef.push((l + 1) as f64 * input.dt);
                }
            }
        }
        let base = Self::constant(tape, n, nch * k, &base)?;
        let coef = Self::constant(tape, n, nch * k, &coef)?;
        let step = tape.mul(coef, d)?;
        tape.add(base, step)
    }
}

/// Grid of the gradient-check profile: 12 nodes, 12 time steps.
pub const TINY_NODES: usize = 12;

/// Checks reverse-mode gradients of the tiny `kind` model (n_hid 8, two
/// layers, K 4, f64, 12 nodes) against central differences.
pub fn tiny_grad_check(
    kind: ModelKind,
    experiment: crate::Experiment,
    per_tensor: usize,
    seed: u64,
) -> Result<crate::nn::GradCheckReport> {
    grad_check_model(ModelConfig::tiny(kind, experiment), TINY_NODES, per_tensor, seed)
}

/// Gradient check of an RMSE loss on random data for any configuration.
pub fn grad_check_model(
    config: ModelConfig,
    n_nodes: usize,
    per_tensor: usize,
    seed: u64,
) -> Result<crate::nn::GradCheckReport> {
    use rand::{Rng, SeedableRng};

    let model = Model::new(config)?;
    let params: ParamStore<f64> = model.init_params(seed);
    let graph = crate::graph::build_graph(n_nodes, crate::solvers::DOMAIN_LENGTH, crate::graph::NEIGHBORS)?;
    let c = model.config();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let len = c.window * n_nodes * c.n_ch;
    let window: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let target: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let eta: Vec<f64> = (0..c.d_eta).map(|_| rng.gen_range(0.1..1.0)).collect();
    let dt = crate::solvers::FINAL_TIME / (crate::solvers::N_T - 1) as f64;
    let times: Vec<f64> = (0..c.window).map(|l| (l + 4) as f64 * dt).collect();
    let target = model.to_node_major(&target, n_nodes);
    let input = ModelInput {
        window: &window,
        times: &times,
        dt,
        eta: &eta,
        final_time: crate::solvers::FINAL_TIME,
    };
    crate::nn::grad_check(
        &params,
        |tape| {
            let pred = model.forward(tape, &graph, &input)?;
            let (r, k) = tape.shape(pred);
            let t = tape.constant(r, k, target.clone())?;
            crate::training::rmse_loss(tape, pred, t)
        },
        per_tensor,
        seed,
    )
}
