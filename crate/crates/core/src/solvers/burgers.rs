use super::weno::flux_divergence;
use super::{FourierSeries, Trajectory, DOMAIN_LENGTH, FINAL_TIME, N_T, N_X_FINE};
use crate::error::{Error, Result};

/// Courant number of the step controller.
pub const CFL: f64 = 0.4;

const DIFFUSION_EPS: f64 = 1e-12;
const MIN_STEP: f64 = 1e-10;

/// `u_t + (u^2 - β u_x)_x = α f(t, x)` on a periodic domain.
#[derive(Clone, Debug, PartialEq)]
pub struct BurgersConfig {
    /// Forcing switch α (0 or 1).
    pub forcing: f64,
    /// Viscosity β.
    pub viscosity: f64,
    pub length: f64,
    pub final_time: f64,
    pub n_t: usize,
    pub n_x: usize,
}

impl BurgersConfig {
    pub fn e1() -> Self {
        Self {
            forcing: 0.0,
            viscosity: 0.0,
            length: DOMAIN_LENGTH,
            final_time: FINAL_TIME,
            n_t: N_T,
            n_x: N_X_FINE,
        }
    }

    pub fn e2(viscosity: f64) -> Self {
        Self {
            forcing: 1.0,
            viscosity,
            ..Self::e1()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=0.2).contains(&self.viscosity) {
            return Err(Error::Config(format!("viscosity {} outside [0, 0.2]", self.viscosity)));
        }
        if self.n_x < 5 || self.n_t < 2 {
            return Err(Error::Config(format!("grid ({}, {}) too small", self.n_t, self.n_x)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Flux {
    /// `f(u) = u²`.
    Burgers,
    /// `f(u) = c u` with the splitting speed frozen at `|c|`.
    Linear(f64),
}

impl Flux {
    fn eval(self, u: f64) -> f64 {
        match self {
            Flux::Burgers => u * u,
            Flux::Linear(c) => c * u,
        }
    }

    fn max_speed(self, u: &[f64]) -> f64 {
        match self {
            Flux::Burgers => u.iter().fold(0.0f64, |m, &v| m.max((2.0 * v).abs())),
            Flux::Linear(c) => c.abs(),
        }
    }
}

/// Semi-discrete periodic conservation law: WENO5 convection, fourth-order
/// central diffusion and an optional source term.
#[derive(Clone, Debug)]
pub struct ConservationLaw<'a> {
    pub flux: Flux,
    pub viscosity: f64,
    pub source: Option<(f64, &'a FourierSeries)>,
    pub dx: f64,
}

impl ConservationLaw<'_> {
    fn rhs(&self, t: f64, u: &[f64], alpha: f64, out: &mut [f64]) {
        let n = u.len();
        let flux: Vec<f64> = u.iter().map(|&v| self.flux.eval(v)).collect();
        flux_divergence(u, &flux, alpha, self.dx, out);
        for v in out.iter_mut() {
            *v = -*v;
        }
        if self.viscosity > 0.0 {
            let c = self.viscosity / (12.0 * self.dx * self.dx);
            for i in 0..n {
                let at = |k: isize| u[(i as isize + k).rem_euclid(n as isize) as usize];
                out[i] += c * (-at(-2) + 16.0 * at(-1) - 30.0 * u[i] + 16.0 * at(1) - at(2));
            }
        }
        if let Some((scale, series)) = self.source {
            if scale != 0.0 {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += scale * series.eval(t, i as f64 * self.dx);
                }
            }
        }
    }

    fn stable_step(&self, alpha: f64, cfl: f64) -> f64 {
        let convective = if alpha > 0.0 { self.dx / alpha } else { f64::INFINITY };
        let diffusive = self.dx * self.dx / (2.0 * self.viscosity + DIFFUSION_EPS);
        cfl * convective.min(diffusive)
    }

    fn rk4_step(&self, t: f64, dt: f64, u: &mut [f64]) {
        let n = u.len();
        // splitting speed frozen over the step
        let alpha = self.flux.max_speed(u);
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut stage = vec![0.0; n];
        self.rhs(t, u, alpha, &mut k1);
        for i in 0..n {
            stage[i] = u[i] + 0.5 * dt * k1[i];
        }
        self.rhs(t + 0.5 * dt, &stage, alpha, &mut k2);
        for i in 0..n {
            stage[i] = u[i] + 0.5 * dt * k2[i];
        }
        self.rhs(t + 0.5 * dt, &stage, alpha, &mut k3);
        for i in 0..n {
            stage[i] = u[i] + dt * k3[i];
        }
        self.rhs(t + dt, &stage, alpha, &mut k4);
        for i in 0..n {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Classical RK4 with a CFL-limited step, landing exactly on every output time.
///
/// Returns one state per entry of `output_times` (which must start at 0).
pub fn integrate_conservation_law(
    law: &ConservationLaw<'_>,
    u0: Vec<f64>,
    output_times: &[f64],
    cfl: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut u = u0;
    let mut t = 0.0;
    let mut out = Vec::with_capacity(output_times.len());
    for &target in output_times {
        while target - t > 1e-12 * target.max(1.0) {
            let alpha = law.flux.max_speed(&u);
            let dt = law.stable_step(alpha, cfl).min(target - t);
            if !(dt >= MIN_STEP || dt >= target - t) {
                return Err(Error::NonFinite(format!("time step collapsed to {dt:e} at t = {t}")));
            }
            law.rk4_step(t, dt, &mut u);
            t = if target - (t + dt) <= 1e-12 * target.max(1.0) { target } else { t + dt };
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("state diverged at t = {t}")));
        }
        out.push(u.clone());
    }
    Ok(out)
}

/// Solves the Burgers problem with `u(0, x) = f(0, x)` and source `α f(t, x)`.
///
/// `seed` only labels the sample in error messages.
pub fn solve_burgers(cfg: &BurgersConfig, series: &FourierSeries, seed: u64) -> Result<Trajectory> {
    cfg.validate()?;
    let eta = if cfg.forcing != 0.0 || cfg.viscosity != 0.0 { vec![cfg.viscosity] } else { vec![] };
    let mut traj = Trajectory::zeros(cfg.n_t, cfg.n_x, 1, cfg.length, cfg.final_time, eta);
    let dx = traj.dx();
    let u0: Vec<f64> = (0..cfg.n_x).map(|j| series.eval(0.0, j as f64 * dx)).collect();
    let law = ConservationLaw {
        flux: Flux::Burgers,
        viscosity: cfg.viscosity,
        source: Some((cfg.forcing, series)),
        dx,
    };
    let states = integrate_conservation_law(&law, u0, &traj.times(), CFL).map_err(|e| Error::Generation {
        seed,
        reason: e.to_string(),
    })?;
    for (k, state) in states.iter().enumerate() {
        traj.u[k * cfg.n_x..(k + 1) * cfg.n_x].copy_from_slice(state);
    }
    Ok(traj)
}
