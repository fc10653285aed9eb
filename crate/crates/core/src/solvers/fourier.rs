use std::f64::consts::PI;

use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourierMode {
    pub amplitude: f64,
    /// Temporal frequency.
    pub omega: f64,
    /// Integer spatial wave number.
    pub ell: u32,
    pub phase: f64,
}

/// `f(t, x) = Σ_j A_j sin(ω_j t + 2π ℓ_j x / L + φ_j)`, periodic in `x` with period `L`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierSeries {
    pub modes: Vec<FourierMode>,
    pub length: f64,
}

impl FourierSeries {
    /// A ~ U[-1/2, 1/2], ω ~ U[-0.4, 0.4] (or 0), φ ~ U[0, 2π], ℓ ~ U{1, 2, 3}.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, n_modes: usize, with_omega: bool, length: f64) -> Self {
        let modes = (0..n_modes.max(1))
            .map(|_| {
                let amplitude = rng.gen_range(-0.5..=0.5);
                let omega = if with_omega { rng.gen_range(-0.4..=0.4) } else { 0.0 };
                let phase = rng.gen_range(0.0..=2.0 * PI);
                let ell = rng.gen_range(1..=3);
                FourierMode {
                    amplitude,
                    omega,
                    ell,
                    phase,
                }
            })
            .collect();
        Self { modes, length }
    }

    pub fn single(amplitude: f64, omega: f64, ell: u32, phase: f64, length: f64) -> Self {
        Self {
            modes: vec![FourierMode {
                amplitude,
                omega,
                ell,
                phase,
            }],
            length,
        }
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let k = 2.0 * PI / self.length;
        self.modes
            .iter()
            .map(|m| m.amplitude * (m.omega * t + k * f64::from(m.ell) * x + m.phase).sin())
            .sum()
    }
}
