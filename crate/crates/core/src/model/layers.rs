//! Building blocks recorded on a [`Tape`].

use std::sync::Arc;

use crate::error::Result;
use crate::nn::{Conv1dSpec, ParamId, ParamLayout, Real, Tape, Var};

/// `x · W + b` with `W: [in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn register(layout: &mut ParamLayout, name: &str, in_dim: usize, out_dim: usize) -> Self {
        Self {
            w: layout.add(format!("{name}.w"), &[in_dim, out_dim], in_dim),
            b: layout.add(format!("{name}.b"), &[out_dim], in_dim),
            in_dim,
            out_dim,
        }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        tape.affine(x, w, b)
    }
}

/// Linear-Swish-Linear, optionally followed by a final Swish.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp2 {
    pub first: Dense,
    pub second: Dense,
    pub final_swish: bool,
}

impl Mlp2 {
    pub fn register(layout: &mut ParamLayout, name: &str, in_dim: usize, hid: usize, out_dim: usize, final_swish: bool) -> Self {
        Self {
            first: Dense::register(layout, &format!("{name}.0"), in_dim, hid),
            second: Dense::register(layout, &format!("{name}.1"), hid, out_dim),
            final_swish,
        }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let h = self.first.forward(tape, x)?;
        let h = tape.swish(h);
        self.hidden_to_output(tape, h)
    }

    /// Second layer (and optional activation) applied to an already activated hidden state.
    pub fn hidden_to_output<T: Real>(&self, tape: &mut Tape<'_, T>, h: Var) -> Result<Var> {
        let y = self.second.forward(tape, h)?;
        Ok(if self.final_swish { tape.swish(y) } else { y })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LemState {
    pub z: Var,
    pub y: Var,
}

/// Long expressive memory cell.
///
/// ```text
/// Δt_n  = Δt σ̂(W1 y + V1 u + b1)
/// Δt̄_n  = Δt σ̂(W2 y + V2 u + b2)
/// z_n   = (1 - Δt_n) ⊙ z + Δt_n ⊙ tanh(Wz y + Vz u + bz)
/// y_n   = (1 - Δt̄_n) ⊙ y + Δt̄_n ⊙ tanh(Wy z_n + Vy u + by)
/// ```
///
/// Weight tensors are indexed `[1, 2, z, y]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LemCell {
    pub w: [ParamId; 4],
    pub v: [ParamId; 4],
    pub b: [ParamId; 4],
    pub n_in: usize,
    pub n_hid: usize,
    pub dt: f64,
}

impl LemCell {
    pub fn register(layout: &mut ParamLayout, name: &str, n_in: usize, n_hid: usize, dt: f64) -> Self {
        let tags = ["1", "2", "z", "y"];
        let w = tags.map(|t| layout.add(format!("{name}.w{t}"), &[n_hid, n_hid], n_hid));
        let v = tags.map(|t| layout.add(format!("{name}.v{t}"), &[n_in, n_hid], n_in));
        let b = tags.map(|t| layout.add(format!("{name}.b{t}"), &[n_hid], n_in));
        Self { w, v, b, n_in, n_hid, dt }
    }

    fn pre<T: Real>(&self, tape: &mut Tape<'_, T>, gate: usize, h: Var, u: Var) -> Result<Var> {
        let w = tape.param(self.w[gate]);
        let v = tape.param(self.v[gate]);
        let b = tape.param(self.b[gate]);
        let a = tape.matmul(h, w)?;
        let c = tape.matmul(u, v)?;
        let s = tape.add(a, c)?;
        tape.add_bias(s, b)
    }

    pub fn zero_state<T: Real>(&self, tape: &mut Tape<'_, T>, rows: usize) -> LemState {
        LemState {
            z: tape.zeros(rows, self.n_hid),
            y: tape.zeros(rows, self.n_hid),
        }
    }

    pub fn step<T: Real>(&self, tape: &mut Tape<'_, T>, state: LemState, u: Var) -> Result<LemState> {
        let dt = T::from_f64_lossy(self.dt);
        let g1 = self.pre(tape, 0, state.y, u)?;
        let g1 = tape.sigmoid(g1);
        let dt_n = tape.scale(g1, dt);
        let g2 = self.pre(tape, 1, state.y, u)?;
        let g2 = tape.sigmoid(g2);
        let dt_bar = tape.scale(g2, dt);

        let cz = self.pre(tape, 2, state.y, u)?;
        let cz = tape.tanh(cz);
        let keep = tape.one_minus(dt_n);
        let kept = tape.mul(keep, state.z)?;
        let moved = tape.mul(dt_n, cz)?;
        let z = tape.add(kept, moved)?;

        let cy = self.pre(tape, 3, z, u)?;
        let cy = tape.tanh(cy);
        let keep = tape.one_minus(dt_bar);
        let kept = tape.mul(keep, state.y)?;
        let moved = tape.mul(dt_bar, cy)?;
        let y = tape.add(kept, moved)?;
        Ok(LemState { z, y })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// LSTM cell with separate input-side and hidden-side biases per gate.
/// Gate tensors are indexed `[i, f, g, o]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    pub w_in: [ParamId; 4],
    pub w_hid: [ParamId; 4],
    pub b_in: [ParamId; 4],
    pub b_hid: [ParamId; 4],
    pub n_in: usize,
    pub n_hid: usize,
}

impl LstmCell {
    pub fn register(layout: &mut ParamLayout, name: &str, n_in: usize, n_hid: usize) -> Self {
        let tags = ["i", "f", "g", "o"];
        // uniform bound 1/sqrt(n_hid) for every LSTM tensor
        let w_in = tags.map(|t| layout.add(format!("{name}.w_in_{t}"), &[n_in, n_hid], n_hid));
        let w_hid = tags.map(|t| layout.add(format!("{name}.w_hid_{t}"), &[n_hid, n_hid], n_hid));
        let b_in = tags.map(|t| layout.add(format!("{name}.b_in_{t}"), &[n_hid], n_hid));
        let b_hid = tags.map(|t| layout.add(format!("{name}.b_hid_{t}"), &[n_hid], n_hid));
        Self {
            w_in,
            w_hid,
            b_in,
            b_hid,
            n_in,
            n_hid,
        }
    }

    fn gate<T: Real>(&self, tape: &mut Tape<'_, T>, g: usize, state: LstmState, u: Var) -> Result<Var> {
        let wi = tape.param(self.w_in[g]);
        let wh = tape.param(self.w_hid[g]);
        let bi = tape.param(self.b_in[g]);
        let bh = tape.param(self.b_hid[g]);
        let a = tape.matmul(u, wi)?;
        let a = tape.add_bias(a, bi)?;
        let h = tape.matmul(state.h, wh)?;
        let h = tape.add_bias(h, bh)?;
        tape.add(a, h)
    }

    pub fn zero_state<T: Real>(&self, tape: &mut Tape<'_, T>, rows: usize) -> LstmState {
        LstmState {
            h: tape.zeros(rows, self.n_hid),
            c: tape.zeros(rows, self.n_hid),
        }
    }

    pub fn step<T: Real>(&self, tape: &mut Tape<'_, T>, state: LstmState, u: Var) -> Result<LstmState> {
        let i = self.gate(tape, 0, state, u)?;
        let i = tape.sigmoid(i);
        let f = self.gate(tape, 1, state, u)?;
        let f = tape.sigmoid(f);
        let g = self.gate(tape, 2, state, u)?;
        let g = tape.tanh(g);
        let o = self.gate(tape, 3, state, u)?;
        let o = tape.sigmoid(o);
        let fc = tape.mul(f, state.c)?;
        let ig = tape.mul(i, g)?;
        let c = tape.add(fc, ig)?;
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok(LstmState { h, c })
    }
}

/// Per-forward constants shared by every processor layer.
#[derive(Clone, Copy, Debug)]
pub struct GraphInputs {
    /// `[n_edges, n_ch·K + 1 + d_eta]`: `[u_i - u_j, x_i - x_j, η]` per edge `j → i`.
    pub edge_features: Var,
    /// `[n_nodes, d_eta]`, absent when there are no PDE parameters.
    pub node_eta: Option<Var>,
    pub n_nodes: usize,
}

/// One message passing network F(X, G):
/// `m_ij = φ([X_i, X_j, u_i - u_j, x_i - x_j, η])`,
/// `F_i = ψ([X_i, Σ_j m_ij, η])`.
///
/// φ is Linear-Swish-Linear-Swish; ψ is Linear-Swish-Linear so that its
/// output is unbounded (it feeds tanh and the gate sigmoid).
#[derive(Clone, Debug, PartialEq)]
pub struct Mpnn {
    pub message: Mlp2,
    pub update: Mlp2,
    pub n_hid: usize,
}

impl Mpnn {
    pub fn register(layout: &mut ParamLayout, name: &str, n_hid: usize, message_in: usize, update_in: usize) -> Self {
        Self {
            message: Mlp2::register(layout, &format!("{name}.phi"), message_in, n_hid, n_hid, true),
            update: Mlp2::register(layout, &format!("{name}.psi"), update_in, n_hid, n_hid, false),
            n_hid,
        }
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        x: Var,
        src: &Arc<[usize]>,
        dst: &Arc<[usize]>,
        inputs: &GraphInputs,
    ) -> Result<Var> {
        let hid = self.n_hid;
        // first message layer split by input block: X_i and X_j rows act at node level
        let w1 = tape.param(self.message.first.w);
        let b1 = tape.param(self.message.first.b);
        let xi = tape.matmul_rows(x, w1, 0)?;
        let xj = tape.matmul_rows(x, w1, hid)?;
        let e = tape.matmul_rows(inputs.edge_features, w1, 2 * hid)?;
        let xi = tape.gather(xi, dst.clone())?;
        let xj = tape.gather(xj, src.clone())?;
        let h = tape.add(xi, xj)?;
        let h = tape.add(h, e)?;
        let h = tape.add_bias(h, b1)?;
        let h = tape.swish(h);
        let messages = self.message.hidden_to_output(tape, h)?;
        let aggregated = tape.segment_sum(messages, dst.clone(), inputs.n_nodes)?;

        let w2 = tape.param(self.update.first.w);
        let b2 = tape.param(self.update.first.b);
        let mut p = tape.matmul_rows(x, w2, 0)?;
        let agg = tape.matmul_rows(aggregated, w2, hid)?;
        p = tape.add(p, agg)?;
        if let Some(eta) = inputs.node_eta {
            let pe = tape.matmul_rows(eta, w2, 2 * hid)?;
            p = tape.add(p, pe)?;
        }
        let p = tape.add_bias(p, b2)?;
        let p = tape.swish(p);
        self.update.hidden_to_output(tape, p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProcessorLayer {
    /// `X^n = F(X^{n-1})`.
    Plain(Mpnn),
    /// `X^n = (1 - σ̂(F̂(X))) ⊙ X + σ̂(F̂(X)) ⊙ tanh(F(X))`.
    Gated { update: Mpnn, gate: Mpnn },
}

impl ProcessorLayer {
    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        x: Var,
        src: &Arc<[usize]>,
        dst: &Arc<[usize]>,
        inputs: &GraphInputs,
    ) -> Result<Var> {
        match self {
            ProcessorLayer::Plain(f) => f.forward(tape, x, src, dst, inputs),
            ProcessorLayer::Gated { update, gate } => {
                let f = update.forward(tape, x, src, dst, inputs)?;
                let g = gate.forward(tape, x, src, dst, inputs)?;
                gate_combine(tape, x, g, f)
            }
        }
    }
}

/// `(1 - σ̂(gate)) ⊙ previous + σ̂(gate) ⊙ tanh(candidate)`, with the gate evaluated once.
pub fn gate_combine<T: Real>(tape: &mut Tape<'_, T>, previous: Var, gate: Var, candidate: Var) -> Result<Var> {
    let s = tape.sigmoid(gate);
    let c = tape.tanh(candidate);
    let keep = tape.one_minus(s);
    let kept = tape.mul(keep, previous)?;
    let moved = tape.mul(s, c)?;
    tape.add(kept, moved)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub spec: Conv1dSpec,
}

impl Conv {
    pub fn register(layout: &mut ParamLayout, name: &str, spec: Conv1dSpec) -> Self {
        let fan_in = spec.c_in * spec.kernel;
        Self {
            w: layout.add(format!("{name}.w"), &[spec.c_out, spec.c_in, spec.kernel], fan_in),
            b: layout.add(format!("{name}.b"), &[spec.c_out], fan_in),
            spec,
        }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        tape.conv1d(x, w, b, self.spec)
    }
}

/// Maps final node features to per-node differences `d_i` laid out
/// channel-major (`[n_nodes, n_ch·K]`).
#[derive(Clone, Debug, PartialEq)]
pub enum Decoder {
    Scalar { first: Conv, second: Conv },
    System { project: Dense, first: Conv, second: Conv },
}

impl Decoder {
    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        match self {
            Decoder::Scalar { first, second } => {
                let h = first.forward(tape, x)?;
                let h = tape.swish(h);
                second.forward(tape, h)
            }
            Decoder::System { project, first, second } => {
                let h = project.forward(tape, x)?;
                let h = first.forward(tape, h)?;
                let h = tape.swish(h);
                second.forward(tape, h)
            }
        }
    }

    /// Parameters of the last convolution (zeroing them yields persistence).
    pub fn last_conv(&self) -> &Conv {
        match self {
            Decoder::Scalar { second, .. } | Decoder::System { second, .. } => second,
        }
    }
}
