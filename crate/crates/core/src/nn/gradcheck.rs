//! Central finite-difference verification of tape gradients (f64 only).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Gradients, ParamId, ParamStore, Tape, Var};
use crate::error::Result;

/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-4;

/// Gradients below this magnitude are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// (tensor name, index, analytic, numeric) at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// `|a - b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Every bias coordinate plus up to `per_tensor` random coordinates of every
/// other tensor (all of them when the tensor is smaller).
pub fn sample_coordinates(params: &ParamStore<f64>, per_tensor: usize, seed: u64) -> Vec<(ParamId, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::new();
    for (i, (spec, data)) in params.tensors().enumerate() {
        let id = ParamId(i);
        if spec.is_bias() || data.len() <= per_tensor {
            coords.extend((0..data.len()).map(|j| (id, j)));
        } else {
            let mut picked = sample(&mut rng, data.len(), per_tensor).into_vec();
            picked.sort_unstable();
            coords.extend(picked.into_iter().map(|j| (id, j)));
        }
    }
    coords
}

pub fn analytic_gradient<F>(params: &ParamStore<f64>, f: &F) -> Result<Gradients<f64>>
where
    F: Fn(&mut Tape<f64>) -> Result<Var>,
{
    let mut tape = Tape::new(params);
    let out = f(&mut tape)?;
    tape.backward(out)
}

fn evaluate<F>(params: &ParamStore<f64>, f: &F) -> Result<f64>
where
    F: Fn(&mut Tape<f64>) -> Result<Var>,
{
    let mut tape = Tape::new(params);
    let out = f(&mut tape)?;
    Ok(tape.scalar(out))
}

pub fn finite_difference<F>(params: &ParamStore<f64>, f: &F, coords: &[(ParamId, usize)], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&mut Tape<f64>) -> Result<Var>,
{
    let mut work = params.clone();
    coords
        .iter()
        .map(|&(id, j)| {
            let orig = work.get(id)[j];
            work.get_mut(id)[j] = orig + h;
            let plus = evaluate(&work, f)?;
            work.get_mut(id)[j] = orig - h;
            let minus = evaluate(&work, f)?;
            work.get_mut(id)[j] = orig;
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}

pub fn compare(
    params: &ParamStore<f64>,
    analytic: &Gradients<f64>,
    coords: &[(ParamId, usize)],
    numeric: &[f64],
) -> GradCheckReport {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: coords.len(),
        worst: None,
    };
    for (&(id, j), &n) in coords.iter().zip(numeric) {
        let a = analytic.get(id)[j];
        let e = relative_error(a, n);
        if e > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(e);
            report.worst = Some((params.spec(id).name.clone(), j, a, n));
        }
    }
    report
}

/// Compares reverse-mode gradients of `f` with central differences on the
/// coordinates chosen by [`sample_coordinates`].
pub fn grad_check<F>(params: &ParamStore<f64>, f: F, per_tensor: usize, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>) -> Result<Var>,
{
    let analytic = analytic_gradient(params, &f)?;
    let coords = sample_coordinates(params, per_tensor, seed);
    let numeric = finite_difference(params, &f, &coords, FD_STEP)?;
    Ok(compare(params, &analytic, &coords, &numeric))
}
