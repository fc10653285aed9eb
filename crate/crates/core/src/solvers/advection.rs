use super::{FourierSeries, Trajectory, DOMAIN_LENGTH, FINAL_TIME, N_T, N_X_FINE};
use crate::error::{Error, Result};

/// `u_t + A u_x = 0` with `A = [[a+b, b-a], [b-a, a+b]]`, whose eigenvalues
/// `2a` and `2b` give a slow and a fast transport speed.
#[derive(Clone, Debug, PartialEq)]
pub struct AdvectionConfig {
    pub slow: f64,
    pub fast: f64,
    pub length: f64,
    pub final_time: f64,
    pub n_t: usize,
    pub n_x: usize,
}

impl AdvectionConfig {
    pub fn new(slow: f64, fast: f64) -> Self {
        Self {
            slow,
            fast,
            length: DOMAIN_LENGTH,
            final_time: FINAL_TIME,
            n_t: N_T,
            n_x: N_X_FINE,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.1..=1.0).contains(&self.slow) || !(1.0..=10.0).contains(&self.fast) {
            return Err(Error::Config(format!(
                "advection speeds a = {}, b = {} outside [0.1, 1] x [1, 10]",
                self.slow, self.fast
            )));
        }
        Ok(())
    }
}

/// Exact solution at one point: characteristic variables
/// `w = R⁻¹ u` are transported with speeds `2a` and `2b`, then `u = R w`
/// with `R = [[-1, 1], [1, 1]]`.
pub fn characteristic_solution(cfg: &AdvectionConfig, u0: &[FourierSeries; 2], t: f64, x: f64) -> [f64; 2] {
    let wrap = |y: f64| y.rem_euclid(cfg.length);
    let foot_slow = wrap(x - 2.0 * cfg.slow * t);
    let foot_fast = wrap(x - 2.0 * cfg.fast * t);
    let w_slow = 0.5 * (u0[1].eval(0.0, foot_slow) - u0[0].eval(0.0, foot_slow));
    let w_fast = 0.5 * (u0[0].eval(0.0, foot_fast) + u0[1].eval(0.0, foot_fast));
    [w_fast - w_slow, w_slow + w_fast]
}

pub fn solve_advection(cfg: &AdvectionConfig, u0: &[FourierSeries; 2]) -> Result<Trajectory> {
    cfg.validate()?;
    let mut traj = Trajectory::zeros(cfg.n_t, cfg.n_x, 2, cfg.length, cfg.final_time, vec![cfg.slow, cfg.fast]);
    for k in 0..cfg.n_t {
        let t = traj.t(k);
        for j in 0..cfg.n_x {
            let [u1, u2] = characteristic_solution(cfg, u0, t, traj.x(j));
            traj.set(k, j, 0, u1);
            traj.set(k, j, 1, u2);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn g(scale: f64) -> FourierSeries {
        FourierSeries::single(scale, 0.0, 1, 0.0, 16.0)
    }

    #[test]
    fn symmetric_data_moves_with_fast_speed() {
        let cfg = AdvectionConfig::new(0.3, 7.0);
        let traj = solve_advection(&cfg, &[g(1.0), g(1.0)]).unwrap();
        for &(k, j) in &[(0, 0), (10, 17), (249, 199), (120, 55)] {
            let expect = (2.0 * PI * (traj.x(j) - 2.0 * 7.0 * traj.t(k)) / 16.0).sin();
            assert!((traj.get(k, j, 0) - expect).abs() < 1e-12);
            assert!((traj.get(k, j, 1) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn antisymmetric_data_moves_with_slow_speed() {
        let cfg = AdvectionConfig::new(0.3, 7.0);
        let traj = solve_advection(&cfg, &[g(-1.0), g(1.0)]).unwrap();
        for &(k, j) in &[(0, 3), (99, 150), (249, 10)] {
            let expect = (2.0 * PI * (traj.x(j) - 2.0 * 0.3 * traj.t(k)) / 16.0).sin();
            assert!((traj.get(k, j, 0) + expect).abs() < 1e-12);
            assert!((traj.get(k, j, 1) - expect).abs() < 1e-12);
        }
        assert_eq!(traj.eta, vec![0.3, 7.0]);
    }

    #[test]
    fn characteristic_means_are_time_invariant() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let u0 = [
            FourierSeries::sample(&mut rng, 5, false, 16.0),
            FourierSeries::sample(&mut rng, 5, false, 16.0),
        ];
        let traj = solve_advection(&AdvectionConfig::new(0.55, 3.3), &u0).unwrap();
        let means = |k: usize| {
            let (mut s, mut f) = (0.0, 0.0);
            for j in 0..traj.n_x {
                let (u1, u2) = (traj.get(k, j, 0), traj.get(k, j, 1));
                s += 0.5 * (u2 - u1);
                f += 0.5 * (u1 + u2);
            }
            (s / traj.n_x as f64, f / traj.n_x as f64)
        };
        let (s0, f0) = means(0);
        for k in [1, 50, 249] {
            let (s, f) = means(k);
            assert!((s - s0).abs() < 1e-12 && (f - f0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_out_of_range_speeds() {
        assert!(solve_advection(&AdvectionConfig::new(2.0, 5.0), &[g(1.0), g(1.0)]).is_err());
    }
}
