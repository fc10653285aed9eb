//! Binary trajectory files, K-lagged windows and split generation.
//!
//! File layout (little-endian): magic `MSMP`, version `u32`, experiment id
//! `u8`, then `n_traj, n_t, n_x, n_ch, d_eta` as `u32`, `L` and `T` as `f64`,
//! then per trajectory `d_eta` `f64` parameters followed by `n_t·n_x·n_ch`
//! `f32` values in `[t][x][c]` order.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experiment::{Experiment, Split, SplitSizes};
use crate::solvers::{downsample, generate_sample_on, SampleGrid, Trajectory};

pub const DATASET_MAGIC: [u8; 4] = *b"MSMP";
pub const DATASET_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 5 * 4 + 2 * 8;

/// Window length (time steps per model call).
pub const WINDOW: usize = 25;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub experiment: Experiment,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

pub fn encode_dataset(experiment: Experiment, trajs: &[Trajectory]) -> Result<Vec<u8>> {
    let first = trajs.first();
    let (n_t, n_x, n_ch, d_eta) = first.map_or((0, 0, experiment.n_channels(), experiment.eta_dim()), |t| {
        (t.n_t, t.n_x, t.n_ch, t.eta.len())
    });
    let (length, final_time) = first.map_or((0.0, 0.0), |t| (t.length, t.final_time));
    for t in trajs {
        if (t.n_t, t.n_x, t.n_ch, t.eta.len()) != (n_t, n_x, n_ch, d_eta) || t.length != length || t.final_time != final_time {
            return Err(Error::InvalidArgument("trajectories in one dataset must share grid metadata".into()));
        }
    }
    let per_traj = d_eta * 8 + n_t * n_x * n_ch * 4;
    let mut buf = Vec::with_capacity(HEADER_LEN + trajs.len() * per_traj);
    buf.extend_from_slice(&DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.push(experiment.id());
    for v in [trajs.len(), n_t, n_x, n_ch, d_eta] {
        let v = u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("dimension {v} exceeds u32")))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&length.to_le_bytes());
    buf.extend_from_slice(&final_time.to_le_bytes());
    for t in trajs {
        for e in &t.eta {
            buf.extend_from_slice(&e.to_le_bytes());
        }
        for &v in &t.u {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(self.path, format!("truncated: need {n} bytes at offset {}, have {}", self.pos, self.bytes.len()))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_dataset(bytes: &[u8], path: &Path) -> Result<Dataset> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != DATASET_MAGIC {
        return Err(Error::format(path, "bad magic (expected MSMP)"));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::format(path, format!("unsupported version {version} (expected {DATASET_VERSION})")));
    }
    let id = r.take(1)?[0];
    let experiment = Experiment::from_id(id).ok_or_else(|| Error::format(path, format!("unknown experiment id {id}")))?;
    let n_traj = r.u32()? as usize;
    let n_t = r.u32()? as usize;
    let n_x = r.u32()? as usize;
    let n_ch = r.u32()? as usize;
    let d_eta = r.u32()? as usize;
    let length = r.f64()?;
    let final_time = r.f64()?;

    let n_values = n_t
        .checked_mul(n_x)
        .and_then(|v| v.checked_mul(n_ch))
        .ok_or_else(|| Error::format(path, "grid size overflows"))?;
    let expected = n_values
        .checked_mul(4)
        .and_then(|v| v.checked_add(d_eta * 8))
        .and_then(|v| v.checked_mul(n_traj))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format(path, "declared size overflows"))?;
    if expected != bytes.len() {
        return Err(Error::format(
            path,
            format!("declared sizes imply {expected} bytes but file has {}", bytes.len()),
        ));
    }

    let mut trajectories = Vec::with_capacity(n_traj);
    for _ in 0..n_traj {
        let eta = (0..d_eta).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let raw = r.take(n_values * 4)?;
        let u = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        trajectories.push(Trajectory {
            n_t,
            n_x,
            n_ch,
            length,
            final_time,
            eta,
            u,
        });
    }
    Ok(Dataset { experiment, trajectories })
}

pub fn write_dataset(path: impl AsRef<Path>, experiment: Experiment, trajs: &[Trajectory]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_dataset(experiment, trajs)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes, path)
}

/// A K-lagged input block and the K steps that follow it.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowPair {
    /// `[K][n_x][n_ch]`, steps `k - K .. k`.
    pub input: Vec<f64>,
    /// `[K][n_x][n_ch]`, steps `k .. k + K`.
    pub target: Vec<f64>,
    /// First target step `k`.
    pub k_index: usize,
    /// Time of the last input step.
    pub t_k: f64,
}

/// Non-overlapping windows with `k ∈ {K, 2K, …}` and `k + K ≤ n_t`.
pub fn make_windows(traj: &Trajectory, window: usize) -> Vec<WindowPair> {
    if window == 0 {
        return Vec::new();
    }
    (1..)
        .map(|m| m * window)
        .take_while(|&k| k + window <= traj.n_t)
        .map(|k| WindowPair {
            input: traj.steps(k - window, window).to_vec(),
            target: traj.steps(k, window).to_vec(),
            k_index: k,
            t_k: traj.t(k - 1),
        })
        .collect()
}

/// Generates `count` downsampled trajectories of one split.
pub fn generate_split(
    experiment: Experiment,
    split: Split,
    count: usize,
    master_seed: u64,
    grid: SampleGrid,
) -> Result<Vec<Trajectory>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let fine = generate_sample_on(experiment, split, i, master_seed, grid).map_err(|e| match e {
                Error::Generation { seed, reason } => Error::Generation {
                    seed,
                    reason: format!("{} sample {i}: {reason}", split.name()),
                },
                other => other,
            })?;
            downsample(&fine)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentData {
    pub experiment: Experiment,
    pub train: Vec<Trajectory>,
    pub valid: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

impl ExperimentData {
    pub fn split(&self, split: Split) -> &[Trajectory] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }
}

/// Train/valid/test sets on the (250, 100) grid.
pub fn generate_experiment(experiment: Experiment, master_seed: u64, sizes: SplitSizes) -> Result<ExperimentData> {
    generate_experiment_on(experiment, master_seed, sizes, SampleGrid::default())
}

pub fn generate_experiment_on(
    experiment: Experiment,
    master_seed: u64,
    sizes: SplitSizes,
    grid: SampleGrid,
) -> Result<ExperimentData> {
    Ok(ExperimentData {
        experiment,
        train: generate_split(experiment, Split::Train, sizes.train, master_seed, grid)?,
        valid: generate_split(experiment, Split::Valid, sizes.valid, master_seed, grid)?,
        test: generate_split(experiment, Split::Test, sizes.test, master_seed, grid)?,
    })
}

pub fn split_path(dir: &Path, experiment: Experiment, split: Split) -> PathBuf {
    dir.join(format!("{}_{}.msmp", experiment.name(), split.name()))
}

/// Writes the three split files into `dir` and returns their paths.
pub fn write_experiment(dir: &Path, data: &ExperimentData) -> Result<Vec<PathBuf>> {
    Split::ALL
        .iter()
        .map(|&s| {
            let p = split_path(dir, data.experiment, s);
            write_dataset(&p, data.experiment, data.split(s))?;
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::sample_stream;

    fn ramp(n_t: usize, n_x: usize, n_ch: usize) -> Trajectory {
        let mut t = Trajectory::zeros(n_t, n_x, n_ch, 16.0, 4.0, vec![0.125]);
        for (i, v) in t.u.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        t
    }

    #[test]
    fn round_trip_is_bitwise_on_f32_payload() {
        let t = ramp(250, 100, 1);
        let bytes = encode_dataset(Experiment::E2, std::slice::from_ref(&t)).unwrap();
        let back = decode_dataset(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back.experiment, Experiment::E2);
        let again = encode_dataset(Experiment::E2, &back.trajectories).unwrap();
        assert_eq!(bytes, again);
        let r = &back.trajectories[0];
        assert_eq!(r.eta, t.eta);
        for (a, b) in r.u.iter().zip(&t.u) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-30) + f64::from(f32::MIN_POSITIVE));
        }
    }

    #[test]
    fn truncated_and_corrupt_files_are_errors() {
        let bytes = encode_dataset(Experiment::E1, &[ramp(10, 8, 1)]).unwrap();
        for cut in [0, 3, 20, HEADER_LEN, bytes.len() - 1] {
            assert!(decode_dataset(&bytes[..cut], Path::new("x")).is_err(), "cut {cut}");
        }
        let mut bad_version = bytes.clone();
        bad_version[4] = 9;
        let err = decode_dataset(&bad_version, Path::new("x")).unwrap_err();
        assert!(err.to_string().contains("version"));
        let mut bad_magic = bytes;
        bad_magic[0] = b'X';
        assert!(decode_dataset(&bad_magic, Path::new("x")).is_err());
    }

    #[test]
    fn mixed_grids_are_rejected() {
        assert!(encode_dataset(Experiment::E1, &[ramp(10, 8, 1), ramp(10, 6, 1)]).is_err());
    }

    #[test]
    fn windows_for_paper_grid() {
        let t = ramp(250, 4, 1);
        let w = make_windows(&t, 25);
        assert_eq!(w.len(), 9);
        assert_eq!(w[0].k_index, 25);
        assert_eq!(w[0].input, t.steps(0, 25));
        assert_eq!(w[0].target, t.steps(25, 25));
        assert_eq!(w[0].t_k, t.t(24));
        // targets tile steps 25..250 exactly once
        let tiled: Vec<f64> = w.iter().flat_map(|p| p.target.iter().copied()).collect();
        assert_eq!(tiled, t.steps(25, 225));
    }

    #[test]
    fn window_boundaries() {
        assert_eq!(make_windows(&ramp(50, 2, 1), 25).len(), 1);
        assert_eq!(make_windows(&ramp(49, 2, 1), 25).len(), 0);
    }

    #[test]
    fn small_generation_is_reproducible_and_disjoint() {
        let sizes = SplitSizes { train: 4, valid: 2, test: 2 };
        let a = generate_experiment(Experiment::MsWave, 7, sizes).unwrap();
        let b = generate_experiment(Experiment::MsWave, 7, sizes).unwrap();
        let enc = |d: &ExperimentData| encode_dataset(d.experiment, &d.train).unwrap();
        assert_eq!(enc(&a), enc(&b));
        assert_eq!((a.train[0].n_t, a.train[0].n_x, a.train[0].n_ch), (250, 100, 2));
        assert_eq!(a.train[0].eta.len(), 2);

        let mut streams = std::collections::HashSet::new();
        for (split, n) in [(Split::Train, 4), (Split::Valid, 2), (Split::Test, 2)] {
            for i in 0..n {
                assert!(streams.insert(sample_stream(Experiment::MsWave, split, i)));
            }
        }
        assert_ne!(a.train[0].eta, a.valid[0].eta);
    }

    #[test]
    fn header_carries_split_metadata() {
        let sizes = SplitSizes { train: 3, valid: 1, test: 1 };
        let d = generate_experiment(Experiment::E2, 1, sizes).unwrap();
        let bytes = encode_dataset(Experiment::E2, &d.train).unwrap();
        let field = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        assert_eq!(bytes[8], 2);
        assert_eq!((field(9), field(13), field(17), field(21), field(25)), (3, 250, 100, 1, 1));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/e1.msmp");
        write_dataset(&p, Experiment::E1, &[ramp(5, 4, 1)]).unwrap();
        let d = read_dataset(&p).unwrap();
        assert_eq!(d.len(), 1);
        assert!(read_dataset(dir.path().join("missing.msmp")).is_err());
    }
}
