//! Reverse-mode differentiation over row-major matrices.
//!
//! Every value on a [`Tape`] is a `rows × cols` matrix. Parameters are
//! borrowed from a [`ParamStore`] and never copied; constants are owned by
//! the tape. Calling [`Tape::backward`] on a scalar output walks the
//! recorded operations in reverse and returns one gradient buffer per
//! parameter tensor. Parameters that never entered the tape get zeros, which
//! is how a forward pass evaluated on a separate tape is detached from the
//! gradient.

use std::sync::Arc;

use super::params::{matrix_dims, ParamId, ParamStore};
use super::Real;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Geometry of a batched 1D convolution. Each row of the input holds one
/// sample laid out channel-major (`c_in` blocks of `len` values).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv1dSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1dSpec {
    pub fn output_len(&self, len_in: usize) -> Option<usize> {
        let padded = len_in + 2 * self.padding;
        if self.stride == 0 || self.kernel == 0 || padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Constant,
    Param(ParamId),
    MatMul { a: Var, w: Var, row_offset: usize },
    AddBias { a: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Scale(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Swish(Var),
    Concat(Vec<Var>),
    Gather { a: Var, index: Arc<[usize]> },
    SegmentSum { a: Var, index: Arc<[usize]> },
    Conv1d { x: Var, w: Var, b: Var, spec: Conv1dSpec, len_in: usize, len_out: usize },
    MeanSquare(Var),
    Sqrt(Var),
}

#[derive(Clone, Debug)]
struct Node<T> {
    rows: usize,
    cols: usize,
    value: Vec<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Per-parameter gradient buffers aligned with the store's layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(params: &ParamStore<T>) -> Self {
        Self {
            tensors: params.tensors().map(|(_, d)| vec![T::zero(); d.len()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.tensors[id.0]
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.tensors.iter().flatten().copied().collect()
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for v in self.tensors.iter_mut().flatten() {
            *v *= factor;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }
}

pub struct Tape<'p, T: Real> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of distinct parameter tensors recorded on this tape.
    pub fn recorded_params(&self) -> usize {
        self.param_vars.iter().filter(|v| v.is_some()).count()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<T>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &[T] {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.get(id),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> T {
        self.value(v)[0]
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let (rows, cols) = matrix_dims(&self.params.spec(id).shape);
        let v = self.push(rows, cols, Vec::new(), Op::Param(id), true);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<T>) -> Result<Var> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "constant",
                left: vec![data.len()],
                right: vec![rows, cols],
            });
        }
        Ok(self.push(rows, cols, data, Op::Constant, false))
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.push(rows, cols, vec![T::zero(); rows * cols], Op::Constant, false)
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> Error {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        Error::ShapeMismatch {
            op,
            left: vec![ar, ac],
            right: vec![br, bc],
        }
    }

    pub fn matmul(&mut self, a: Var, w: Var) -> Result<Var> {
        self.matmul_rows(a, w, 0)
    }

    /// `a · w[row_offset .. row_offset + a.cols, :]`.
    ///
    /// Lets one weight matrix act on a concatenated input without
    /// materializing the concatenation.
    pub fn matmul_rows(&mut self, a: Var, w: Var, row_offset: usize) -> Result<Var> {
        let (n, m) = self.shape(a);
        let (wr, wc) = self.shape(w);
        if row_offset + m > wr {
            return Err(self.mismatch("matmul", a, w));
        }
        let mut out = vec![T::zero(); n * wc];
        T::gemm(
            n,
            m,
            wc,
            T::one(),
            self.value(a),
            (m, 1),
            &self.value(w)[row_offset * wc..],
            (wc, 1),
            T::zero(),
            &mut out,
            (wc, 1),
        );
        let rg = self.rg(a) || self.rg(w);
        Ok(self.push(n, wc, out, Op::MatMul { a, w, row_offset }, rg))
    }

    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, c) = self.shape(a);
        if self.value(b).len() != c {
            return Err(self.mismatch("add_bias", a, b));
        }
        let bias = self.value(b);
        let mut out = self.value(a).to_vec();
        for row in out.chunks_mut(c.max(1)) {
            for (o, bv) in row.iter_mut().zip(bias) {
                *o += *bv;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(n, c, out, Op::AddBias { a, b }, rg))
    }

    /// `x · w + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<(Vec<T>, usize, usize)> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch(name, a, b));
        }
        let (r, c) = self.shape(a);
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok((out, r, c))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, r, c) = self.binary("add", a, b, |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, r, c) = self.binary("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, r, c) = self.binary("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(r, c, out, Op::Mul(a, b), rg))
    }

    fn unary(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let rg = self.rg(a);
        self.push(r, c, out, op, rg)
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        self.unary(a, Op::OneMinus(a), |x| T::one() - x)
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        self.unary(a, Op::Scale(a, factor), |x| x * factor)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), T::tanh)
    }

    /// `x · sigmoid(x)`.
    pub fn swish(&mut self, a: Var) -> Var {
        self.unary(a, Op::Swish(a), |x| x * sigmoid(x))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        };
        let rows = self.shape(first).0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(self.mismatch("concat", first, p));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(rows, cols, out, Op::Concat(parts.to_vec()), rg))
    }

    /// Row gather: `out[r] = a[index[r]]`.
    pub fn gather(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        let mut out = Vec::with_capacity(index.len() * cols);
        let src = self.value(a);
        for &i in index.iter() {
            if i >= rows {
                return Err(Error::ShapeMismatch {
                    op: "gather",
                    left: vec![rows, cols],
                    right: vec![i],
                });
            }
            out.extend_from_slice(&src[i * cols..(i + 1) * cols]);
        }
        let rg = self.rg(a);
        Ok(self.push(index.len(), cols, out, Op::Gather { a, index }, rg))
    }

    /// Row scatter-add: `out[index[r]] += a[r]` into `n_out` rows.
    pub fn segment_sum(&mut self, a: Var, index: Arc<[usize]>, n_out: usize) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if index.len() != rows {
            return Err(Error::ShapeMismatch {
                op: "segment_sum",
                left: vec![rows, cols],
                right: vec![index.len()],
            });
        }
        let mut out = vec![T::zero(); n_out * cols];
        let src = self.value(a);
        for (r, &dst) in index.iter().enumerate() {
            if dst >= n_out {
                return Err(Error::ShapeMismatch {
                    op: "segment_sum",
                    left: vec![n_out, cols],
                    right: vec![dst],
                });
            }
            let row = &src[r * cols..(r + 1) * cols];
            for (o, v) in out[dst * cols..(dst + 1) * cols].iter_mut().zip(row) {
                *o += *v;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(n_out, cols, out, Op::SegmentSum { a, index }, rg))
    }

    /// Batched 1D cross-correlation; `w` holds `[c_out, c_in, kernel]`, `b` holds `[c_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, spec: Conv1dSpec) -> Result<Var> {
        let (rows, cols) = self.shape(x);
        let bad = || Error::ShapeMismatch {
            op: "conv1d",
            left: vec![rows, cols],
            right: vec![spec.c_out, spec.c_in, spec.kernel],
        };
        if spec.c_in == 0 || cols % spec.c_in != 0 {
            return Err(bad());
        }
        if self.value(w).len() != spec.c_out * spec.c_in * spec.kernel || self.value(b).len() != spec.c_out {
            return Err(bad());
        }
        let len_in = cols / spec.c_in;
        let len_out = spec.output_len(len_in).ok_or_else(bad)?;
        let out_cols = spec.c_out * len_out;
        let mut out = vec![T::zero(); rows * out_cols];
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let pad = spec.padding as isize;
        for r in 0..rows {
            let xr = &xv[r * cols..(r + 1) * cols];
            let orow = &mut out[r * out_cols..(r + 1) * out_cols];
            for co in 0..spec.c_out {
                for o in 0..len_out {
                    let mut acc = bv[co];
                    let start = (o * spec.stride) as isize - pad;
                    for ci in 0..spec.c_in {
                        let wk = &wv[(co * spec.c_in + ci) * spec.kernel..][..spec.kernel];
                        let xc = &xr[ci * len_in..(ci + 1) * len_in];
                        for (kk, &wval) in wk.iter().enumerate() {
                            let pos = start + kk as isize;
                            if pos >= 0 && (pos as usize) < len_in {
                                acc += wval * xc[pos as usize];
                            }
                        }
                    }
                    orow[co * len_out + o] = acc;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(rows, out_cols, out, Op::Conv1d { x, w, b, spec, len_in, len_out }, rg))
    }

    /// Mean of squared entries, as a `1×1` node.
    pub fn mean_square(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let n = T::from_usize(v.len().max(1)).expect("length fits");
        let s = v.iter().fold(T::zero(), |acc, &x| acc + x * x) / n;
        let rg = self.rg(a);
        self.push(1, 1, vec![s], Op::MeanSquare(a), rg)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), T::sqrt)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, out: Var) -> Result<Gradients<T>> {
        let (r, c) = self.shape(out);
        if (r, c) != (1, 1) {
            return Err(Error::NotScalar(vec![r, c]));
        }
        if !self.rg(out) {
            return Err(Error::NotConnected);
        }
        let mut result = Gradients::zeros_like(self.params);
        let mut grads: Vec<Option<Vec<T>>> = vec![None; out.0 + 1];
        grads[out.0] = Some(vec![T::one()]);

        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    for (d, v) in result.tensors[id.0].iter_mut().zip(&g) {
                        *d += *v;
                    }
                }
                Op::MatMul { a, w, row_offset } => {
                    let (n, m) = self.shape(*a);
                    let wc = node.cols;
                    if self.rg(*a) {
                        let da = slot(&mut grads, *a, n * m);
                        T::gemm(n, wc, m, T::one(), &g, (wc, 1), &self.value(*w)[row_offset * wc..], (1, wc), T::one(), da, (m, 1));
                    }
                    if self.rg(*w) {
                        let len = self.value(*w).len();
                        let dw = slot(&mut grads, *w, len);
                        T::gemm(m, n, wc, T::one(), self.value(*a), (1, m), &g, (wc, 1), T::one(), &mut dw[row_offset * wc..], (wc, 1));
                    }
                }
                Op::AddBias { a, b } => {
                    if self.rg(*a) {
                        add_into(slot(&mut grads, *a, g.len()), &g);
                    }
                    if self.rg(*b) {
                        let c = node.cols;
                        let db = slot(&mut grads, *b, c);
                        for row in g.chunks(c.max(1)) {
                            add_into(db, row);
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if self.rg(v) {
                            add_into(slot(&mut grads, v, g.len()), &g);
                        }
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*a) {
                        add_into(slot(&mut grads, *a, g.len()), &g);
                    }
                    if self.rg(*b) {
                        for (d, v) in slot(&mut grads, *b, g.len()).iter_mut().zip(&g) {
                            *d -= *v;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        let bv = self.value(*b);
                        for ((d, gv), y) in slot(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(bv) {
                            *d += *gv * *y;
                        }
                    }
                    if self.rg(*b) {
                        let av = self.value(*a);
                        for ((d, gv), x) in slot(&mut grads, *b, g.len()).iter_mut().zip(&g).zip(av) {
                            *d += *gv * *x;
                        }
                    }
                }
                Op::OneMinus(a) => {
                    for (d, v) in slot(&mut grads, *a, g.len()).iter_mut().zip(&g) {
                        *d -= *v;
                    }
                }
                Op::Scale(a, f) => {
                    for (d, v) in slot(&mut grads, *a, g.len()).iter_mut().zip(&g) {
                        *d += *v * *f;
                    }
                }
                Op::Sigmoid(a) => {
                    for ((d, gv), y) in slot(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(&node.value) {
                        *d += *gv * *y * (T::one() - *y);
                    }
                }
                Op::Tanh(a) => {
                    for ((d, gv), y) in slot(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(&node.value) {
                        *d += *gv * (T::one() - *y * *y);
                    }
                }
                Op::Swish(a) => {
                    let xs = self.value(*a);
                    for ((d, gv), x) in slot(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(xs) {
                        let s = sigmoid(*x);
                        *d += *gv * s * (T::one() + *x * (T::one() - s));
                    }
                }
                Op::Concat(parts) => {
                    let cols = node.cols;
                    let mut offset = 0;
                    for &p in parts {
                        let (pr, pc) = self.shape(p);
                        if self.rg(p) {
                            let dp = slot(&mut grads, p, pr * pc);
                            for r in 0..pr {
                                add_into(&mut dp[r * pc..(r + 1) * pc], &g[r * cols + offset..r * cols + offset + pc]);
                            }
                        }
                        offset += pc;
                    }
                }
                Op::Gather { a, index } => {
                    let (ar, ac) = self.shape(*a);
                    let da = slot(&mut grads, *a, ar * ac);
                    for (r, &src) in index.iter().enumerate() {
                        add_into(&mut da[src * ac..(src + 1) * ac], &g[r * ac..(r + 1) * ac]);
                    }
                }
                Op::SegmentSum { a, index } => {
                    let (ar, ac) = self.shape(*a);
                    let da = slot(&mut grads, *a, ar * ac);
                    for (r, &dst) in index.iter().enumerate() {
                        add_into(&mut da[r * ac..(r + 1) * ac], &g[dst * ac..(dst + 1) * ac]);
                    }
                }
                Op::Conv1d { x, w, b, spec, len_in, len_out } => {
                    self.conv1d_backward(&mut grads, &g, *x, *w, *b, *spec, *len_in, *len_out);
                }
                Op::MeanSquare(a) => {
                    let av = self.value(*a);
                    let n = T::from_usize(av.len().max(1)).expect("length fits");
                    let two = T::one() + T::one();
                    let scale = g[0] * two / n;
                    for (d, x) in slot(&mut grads, *a, av.len()).iter_mut().zip(av) {
                        *d += scale * *x;
                    }
                }
                Op::Sqrt(a) => {
                    let two = T::one() + T::one();
                    for ((d, gv), y) in slot(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(&node.value) {
                        // d sqrt(x) at x = 0 is taken as 0 (zero loss has no descent direction)
                        if *y > T::zero() {
                            *d += *gv / (two * *y);
                        }
                    }
                }
            }
        }
        Ok(result)
    }

    #[allow(clippy::too_many_arguments)]
    fn conv1d_backward(
        &self,
        grads: &mut [Option<Vec<T>>],
        g: &[T],
        x: Var,
        w: Var,
        b: Var,
        spec: Conv1dSpec,
        len_in: usize,
        len_out: usize,
    ) {
        let (rows, cols) = self.shape(x);
        let out_cols = spec.c_out * len_out;
        let pad = spec.padding as isize;
        let (xv, wv) = (self.value(x), self.value(w));
        if self.rg(b) {
            let db = slot(grads, b, spec.c_out);
            for r in 0..rows {
                for co in 0..spec.c_out {
                    for o in 0..len_out {
                        db[co] += g[r * out_cols + co * len_out + o];
                    }
                }
            }
        }
        let visit = |f: &mut dyn FnMut(usize, usize, T)| {
            for r in 0..rows {
                for co in 0..spec.c_out {
                    for o in 0..len_out {
                        let gv = g[r * out_cols + co * len_out + o];
                        let start = (o * spec.stride) as isize - pad;
                        for ci in 0..spec.c_in {
                            for kk in 0..spec.kernel {
                                let pos = start + kk as isize;
                                if pos >= 0 && (pos as usize) < len_in {
                                    let xi = r * cols + ci * len_in + pos as usize;
                                    let wi = (co * spec.c_in + ci) * spec.kernel + kk;
                                    f(xi, wi, gv);
                                }
                            }
                        }
                    }
                }
            }
        };
        if self.rg(w) {
            let dw = slot(grads, w, wv.len());
            visit(&mut |xi, wi, gv| dw[wi] += gv * xv[xi]);
        }
        if self.rg(x) {
            let dx = slot(grads, x, rows * cols);
            visit(&mut |xi, wi, gv| dx[xi] += gv * wv[wi]);
        }
    }
}

fn slot<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}
