use super::Trajectory;
use crate::error::{Error, Result};

/// Spatial 2:1 reduction with the box kernel (1/2, 1/2) at stride 2.
///
/// Coarse node `j` holds the mean of fine nodes `2j` and `2j + 1`; time and
/// channels are untouched.
pub fn downsample(traj: &Trajectory) -> Result<Trajectory> {
    if !traj.n_x.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("cannot downsample odd n_x = {}", traj.n_x)));
    }
    let n_x = traj.n_x / 2;
    let mut out = Trajectory::zeros(traj.n_t, n_x, traj.n_ch, traj.length, traj.final_time, traj.eta.clone());
    for k in 0..traj.n_t {
        for j in 0..n_x {
            for c in 0..traj.n_ch {
                let v = 0.5 * (traj.get(k, 2 * j, c) + traj.get(k, 2 * j + 1, c));
                out.set(k, j, c, v);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    #[test]
    fn constant_field_is_preserved() {
        let mut t = Trajectory::zeros(3, 200, 2, 16.0, 4.0, vec![]);
        t.u.iter_mut().for_each(|v| *v = 1.75);
        let d = downsample(&t).unwrap();
        assert_eq!((d.n_t, d.n_x, d.n_ch), (3, 100, 2));
        assert!(d.u.iter().all(|&v| v == 1.75));
    }

    #[test]
    fn odd_grid_is_rejected() {
        assert!(downsample(&Trajectory::zeros(2, 7, 1, 16.0, 4.0, vec![])).is_err());
    }

    #[test]
    fn pure_mode_is_damped_and_shifted() {
        for ell in 1..=3u32 {
            let mut t = Trajectory::zeros(1, 200, 1, 16.0, 4.0, vec![]);
            let k = 2.0 * PI * f64::from(ell) / 16.0;
            for j in 0..200 {
                let x = t.x(j);
                t.set(0, j, 0, (k * x).sin());
            }
            let d = downsample(&t).unwrap();
            let damping = (PI * f64::from(ell) / 200.0).cos();
            let half_cell = 0.5 * t.dx();
            for j in 0..100 {
                let expect = damping * (k * (d.x(j) + half_cell)).sin();
                assert!((d.get(0, j, 0) - expect).abs() < 1e-14);
            }
        }
    }
}
