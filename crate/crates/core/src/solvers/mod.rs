//! Ground-truth trajectory generation for the three benchmarks.

mod advection;
mod burgers;
mod downsample;
mod fourier;
pub mod weno;

pub use advection::{characteristic_solution, solve_advection, AdvectionConfig};
pub use burgers::{integrate_conservation_law, solve_burgers, BurgersConfig, ConservationLaw, Flux, CFL};
pub use downsample::downsample;
pub use fourier::{FourierMode, FourierSeries};
pub use weno::weno5_reconstruct;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::experiment::{Experiment, Split};

/// Domain length.
pub const DOMAIN_LENGTH: f64 = 16.0;
/// Final time.
pub const FINAL_TIME: f64 = 4.0;
/// Stored snapshots per trajectory.
pub const N_T: usize = 250;
/// Ground-truth spatial resolution.
pub const N_X_FINE: usize = 200;
/// Fourier modes in initial data and forcing.
pub const N_MODES: usize = 5;

/// A solution field `u[t][x][channel]` on a uniform periodic grid.
///
/// `x_j = j L / n_x` for `j < n_x` and `t_k = k T / (n_t - 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub n_t: usize,
    pub n_x: usize,
    pub n_ch: usize,
    pub length: f64,
    pub final_time: f64,
    /// PDE parameters (empty for E1, `[β]` for E2, `[a, b]` for MS-wave).
    pub eta: Vec<f64>,
    /// Row-major `[n_t][n_x][n_ch]`.
    pub u: Vec<f64>,
}

impl Trajectory {
    pub fn zeros(n_t: usize, n_x: usize, n_ch: usize, length: f64, final_time: f64, eta: Vec<f64>) -> Self {
        Self {
            n_t,
            n_x,
            n_ch,
            length,
            final_time,
            eta,
            u: vec![0.0; n_t * n_x * n_ch],
        }
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_x as f64
    }

    pub fn dt(&self) -> f64 {
        if self.n_t > 1 {
            self.final_time / (self.n_t - 1) as f64
        } else {
            0.0
        }
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.length / self.n_x as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        if self.n_t > 1 {
            k as f64 * self.final_time / (self.n_t - 1) as f64
        } else {
            0.0
        }
    }

    pub fn x_coords(&self) -> Vec<f64> {
        (0..self.n_x).map(|j| self.x(j)).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_t).map(|k| self.t(k)).collect()
    }

    #[inline]
    pub fn index(&self, t: usize, x: usize, c: usize) -> usize {
        (t * self.n_x + x) * self.n_ch + c
    }

    pub fn get(&self, t: usize, x: usize, c: usize) -> f64 {
        self.u[self.index(t, x, c)]
    }

    pub fn set(&mut self, t: usize, x: usize, c: usize, v: f64) {
        let i = self.index(t, x, c);
        self.u[i] = v;
    }

    /// Snapshot block `[start, start + len)` in `[t][x][c]` order.
    pub fn steps(&self, start: usize, len: usize) -> &[f64] {
        let per_step = self.n_x * self.n_ch;
        &self.u[start * per_step..(start + len) * per_step]
    }

    pub fn all_finite(&self) -> bool {
        self.u.iter().all(|v| v.is_finite())
    }
}

/// Stream id of one sample: experiment, split and index packed so that
/// distinct samples never share a random stream.
pub fn sample_stream(experiment: Experiment, split: Split, index: usize) -> u64 {
    (u64::from(experiment.id()) << 56) | (split.tag() << 48) | index as u64
}

/// Resolution of generated ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleGrid {
    pub n_t: usize,
    pub n_x: usize,
    pub final_time: f64,
}

impl Default for SampleGrid {
    fn default() -> Self {
        Self {
            n_t: N_T,
            n_x: N_X_FINE,
            final_time: FINAL_TIME,
        }
    }
}

/// Generates one fine-grid (250 × 200) ground-truth sample.
///
/// The result depends only on `(experiment, split, index, master_seed)`.
pub fn generate_sample(experiment: Experiment, split: Split, index: usize, master_seed: u64) -> Result<Trajectory> {
    generate_sample_on(experiment, split, index, master_seed, SampleGrid::default())
}

pub fn generate_sample_on(
    experiment: Experiment,
    split: Split,
    index: usize,
    master_seed: u64,
    grid: SampleGrid,
) -> Result<Trajectory> {
    let stream = sample_stream(experiment, split, index);
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    match experiment {
        Experiment::E1 => {
            let series = FourierSeries::sample(&mut rng, N_MODES, true, DOMAIN_LENGTH);
            let cfg = BurgersConfig { n_t: grid.n_t, n_x: grid.n_x, final_time: grid.final_time, ..BurgersConfig::e1() };
            solve_burgers(&cfg, &series, stream)
        }
        Experiment::E2 => {
            let series = FourierSeries::sample(&mut rng, N_MODES, true, DOMAIN_LENGTH);
            let beta = rng.gen_range(0.0..=0.2);
            let cfg = BurgersConfig { n_t: grid.n_t, n_x: grid.n_x, final_time: grid.final_time, ..BurgersConfig::e2(beta) };
            solve_burgers(&cfg, &series, stream)
        }
        Experiment::MsWave => {
            let first = FourierSeries::sample(&mut rng, N_MODES, false, DOMAIN_LENGTH);
            let second = FourierSeries::sample(&mut rng, N_MODES, false, DOMAIN_LENGTH);
            let a = rng.gen_range(0.1..=1.0);
            let b = rng.gen_range(1.0..=10.0);
            let cfg = AdvectionConfig { n_t: grid.n_t, n_x: grid.n_x, final_time: grid.final_time, ..AdvectionConfig::new(a, b) };
            solve_advection(&cfg, &[first, second])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_generation_is_deterministic() {
        let a = generate_sample(Experiment::MsWave, Split::Train, 3, 42).unwrap();
        let b = generate_sample(Experiment::MsWave, Split::Train, 3, 42).unwrap();
        let c = generate_sample(Experiment::MsWave, Split::Train, 4, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.eta, c.eta);
        assert_eq!((a.n_t, a.n_x, a.n_ch), (250, 200, 2));
    }

    #[test]
    fn e2_sample_has_viscosity() {
        let s = generate_sample(Experiment::E2, Split::Valid, 0, 1).unwrap();
        assert_eq!(s.eta.len(), 1);
        assert!((0.0..=0.2).contains(&s.eta[0]));
        assert!(s.all_finite());
    }

    #[test]
    fn grid_metadata() {
        let t = Trajectory::zeros(250, 200, 1, 16.0, 4.0, vec![]);
        assert_eq!(t.dx(), 0.08);
        assert!((t.dt() - 4.0 / 249.0).abs() < 1e-15);
        assert_eq!(t.t(249), 4.0);
        assert!(t.x(199) < 16.0);
    }
}
