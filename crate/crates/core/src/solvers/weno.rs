//! Fifth-order WENO reconstruction (Jiang–Shu smoothness indicators).

/// Regularization in the nonlinear weights.
pub const WENO_EPS: f64 = 1e-6;

const LINEAR_WEIGHTS: [f64; 3] = [0.1, 0.6, 0.3];

/// Value at the right interface of the centre cell of `v = [v_{i-2}, …, v_{i+2}]`,
/// biased to the left (upwind for positive speed).
pub fn weno5_reconstruct(v: [f64; 5]) -> f64 {
    let [v0, v1, v2, v3, v4] = v;
    // candidate values written as corrections to v2 so a constant stencil is reproduced exactly
    let d0 = (2.0 * (v0 - v1) - 5.0 * (v1 - v2)) / 6.0;
    let d1 = ((v2 - v1) + 2.0 * (v3 - v2)) / 6.0;
    let d2 = (4.0 * (v3 - v2) - (v4 - v3)) / 6.0;

    let b0 = 13.0 / 12.0 * (v0 - 2.0 * v1 + v2).powi(2) + 0.25 * (v0 - 4.0 * v1 + 3.0 * v2).powi(2);
    let b1 = 13.0 / 12.0 * (v1 - 2.0 * v2 + v3).powi(2) + 0.25 * (v1 - v3).powi(2);
    let b2 = 13.0 / 12.0 * (v2 - 2.0 * v3 + v4).powi(2) + 0.25 * (3.0 * v2 - 4.0 * v3 + v4).powi(2);

    let a0 = LINEAR_WEIGHTS[0] / (WENO_EPS + b0).powi(2);
    let a1 = LINEAR_WEIGHTS[1] / (WENO_EPS + b1).powi(2);
    let a2 = LINEAR_WEIGHTS[2] / (WENO_EPS + b2).powi(2);
    let sum = a0 + a1 + a2;

    v2 + (a0 * d0 + a1 * d1 + a2 * d2) / sum
}

/// Numerical flux divergence `(F_{i+1/2} - F_{i-1/2}) / dx` on a periodic grid
/// with global Lax–Friedrichs splitting `f± = (f ± alpha u) / 2`.
pub fn flux_divergence(u: &[f64], flux: &[f64], alpha: f64, dx: f64, out: &mut [f64]) {
    let n = u.len();
    let plus: Vec<f64> = u.iter().zip(flux).map(|(&u, &f)| 0.5 * (f + alpha * u)).collect();
    let minus: Vec<f64> = u.iter().zip(flux).map(|(&u, &f)| 0.5 * (f - alpha * u)).collect();
    let at = |v: &[f64], i: isize| v[i.rem_euclid(n as isize) as usize];

    // interface i+1/2 for i in 0..n
    let interface: Vec<f64> = (0..n as isize)
        .map(|i| {
            let fp = weno5_reconstruct([at(&plus, i - 2), at(&plus, i - 1), at(&plus, i), at(&plus, i + 1), at(&plus, i + 2)]);
            let fm = weno5_reconstruct([at(&minus, i + 3), at(&minus, i + 2), at(&minus, i + 1), at(&minus, i), at(&minus, i - 1)]);
            fp + fm
        })
        .collect();
    for i in 0..n {
        let left = interface[(i + n - 1) % n];
        out[i] = (interface[i] - left) / dx;
    }
}
