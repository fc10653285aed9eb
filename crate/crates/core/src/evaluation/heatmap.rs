//! Space-time heatmaps (x horizontal, t increasing upwards) and raw grid dumps.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::solvers::Trajectory;

/// Pixels per grid cell in each direction.
const SCALE: usize = 2;

fn color(v: f64, lo: f64, hi: f64) -> [u8; 3] {
    // blue → white → red
    let s = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
    let s = if s.is_nan() { 0.5 } else { s };
    let (r, g, b) = if s < 0.5 {
        let a = s / 0.5;
        (a, a, 1.0)
    } else {
        let a = (1.0 - s) / 0.5;
        (1.0, a, a)
    };
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8]
}

fn write_png(path: &Path, grid: &[f64], n_t: usize, n_x: usize, lo: f64, hi: f64) -> Result<()> {
    let (w, h) = (n_x * SCALE, n_t * SCALE);
    let mut pixels = Vec::with_capacity(w * h * 3);
    for row in 0..h {
        let t = n_t - 1 - row / SCALE;
        for col in 0..w {
            pixels.extend(color(grid[t * n_x + col / SCALE], lo, hi));
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let io = |e: png::EncodingError| Error::format(path, e.to_string());
    let mut writer = enc.write_header().map_err(io)?;
    writer.write_image_data(&pixels).map_err(io)?;
    writer.finish().map_err(io)
}

fn channel(traj: &Trajectory, c: usize) -> Vec<f64> {
    (0..traj.n_t * traj.n_x).map(|i| traj.u[i * traj.n_ch + c]).collect()
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Writes truth, prediction and pointwise error images for every channel
/// plus one CSV of the raw grids. `re` is embedded in every file name.
pub fn emit_heatmaps(pred: &Trajectory, truth: &Trajectory, dir: &Path, stem: &str, re: f64) -> Result<Vec<PathBuf>> {
    if (pred.n_t, pred.n_x, pred.n_ch) != (truth.n_t, truth.n_x, truth.n_ch) {
        return Err(Error::ShapeMismatch {
            op: "heatmap",
            left: vec![pred.n_t, pred.n_x, pred.n_ch],
            right: vec![truth.n_t, truth.n_x, truth.n_ch],
        });
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tag = format!("{stem}_re{:.2}pct", 100.0 * re);
    let mut written = Vec::new();
    for c in 0..truth.n_ch {
        let t = channel(truth, c);
        let p = channel(pred, c);
        let err: Vec<f64> = p.iter().zip(&t).map(|(a, b)| a - b).collect();
        let (lo, hi) = range(t.iter().chain(&p).copied());
        let amp = range(err.iter().map(|v| v.abs())).1.max(0.0);
        let amp = if amp.is_finite() && amp > 0.0 { amp } else { 1.0 };
        for (name, grid, lo, hi) in [("truth", &t, lo, hi), ("pred", &p, lo, hi), ("error", &err, -amp, amp)] {
            let path = dir.join(format!("{tag}_c{c}_{name}.png"));
            write_png(&path, grid, truth.n_t, truth.n_x, lo, hi)?;
            written.push(path);
        }
    }
    let mut csv = String::from("channel,t_index,x_index,t,x,truth,pred,error\n");
    for k in 0..truth.n_t {
        for j in 0..truth.n_x {
            for c in 0..truth.n_ch {
                let (a, b) = (truth.get(k, j, c), pred.get(k, j, c));
                let _ = writeln!(csv, "{c},{k},{j},{},{},{a},{b},{}", truth.t(k), truth.x(j), b - a);
            }
        }
    }
    let path = dir.join(format!("{tag}_grid.csv"));
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridRecord {
    pub channel: usize,
    pub t_index: usize,
    pub x_index: usize,
    pub truth: f64,
    pub pred: f64,
    pub error: f64,
}

pub fn read_grid_csv(path: &Path) -> Result<Vec<GridRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::format(path, format!("line {}: expected 8 fields", n + 1)));
        }
        let bad = |_| Error::format(path, format!("line {}: bad number", n + 1));
        out.push(GridRecord {
            channel: f[0].parse().map_err(|_| Error::format(path, format!("line {}: bad index", n + 1)))?,
            t_index: f[1].parse().map_err(|_| Error::format(path, format!("line {}: bad index", n + 1)))?,
            x_index: f[2].parse().map_err(|_| Error::format(path, format!("line {}: bad index", n + 1)))?,
            truth: f[5].parse().map_err(bad)?,
            pred: f[6].parse().map_err(bad)?,
            error: f[7].parse().map_err(bad)?,
        });
    }
    Ok(out)
}
