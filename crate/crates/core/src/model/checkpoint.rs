//! Model checkpoints: a small header describing the architecture followed
//! by the parameters as little-endian `f32` in layout order.
//!
//! Header: magic `MSMC`, version `u32`, encoder `u8`, gated `u8`, then
//! `n_hid, n_layers, window, n_ch, d_eta` and the four decoder geometry
//! values as `u32`, `lem_dt` as `f64`, and the parameter count as `u64`.

use std::fs;
use std::path::Path;

use super::{DecoderSpec, EncoderKind, Model, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::{ParamStore, Real};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"MSMC";
pub const CHECKPOINT_VERSION: u32 = 1;

fn encoder_id(kind: EncoderKind) -> u8 {
    match kind {
        EncoderKind::Ffn => 0,
        EncoderKind::Lstm => 1,
        EncoderKind::Lem => 2,
    }
}

pub fn encode_checkpoint<T: Real>(config: &ModelConfig, params: &ParamStore<T>) -> Vec<u8> {
    let flat = params.to_flat();
    let mut out = Vec::with_capacity(64 + flat.len() * 4);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(encoder_id(config.encoder));
    out.push(u8::from(config.gated));
    let d = config.decoder;
    for v in [
        config.n_hid,
        config.n_layers,
        config.window,
        config.n_ch,
        config.d_eta,
        d.channels,
        d.kernel1,
        d.stride1,
        d.kernel2,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&config.lem_dt.to_le_bytes());
    out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in flat {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::format(self.path, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

/// Parses a checkpoint and rebuilds the model it describes.
pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<(Model, ParamStore<f64>)> {
    let mut c = Cursor { bytes, pos: 0, path };
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "bad magic (expected MSMC)"));
    }
    let version = c.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(path, format!("unsupported version {version} (expected {CHECKPOINT_VERSION})")));
    }
    let head = c.take(2)?;
    let encoder = match head[0] {
        0 => EncoderKind::Ffn,
        1 => EncoderKind::Lstm,
        2 => EncoderKind::Lem,
        other => return Err(Error::format(path, format!("unknown encoder id {other}"))),
    };
    let gated = match head[1] {
        0 => false,
        1 => true,
        other => return Err(Error::format(path, format!("bad gated flag {other}"))),
    };
    let mut dims = [0usize; 9];
    for d in &mut dims {
        *d = c.u32()?;
    }
    let lem_dt = f64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
    let n_params = u64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes")) as usize;
    let config = ModelConfig {
        encoder,
        gated,
        n_hid: dims[0],
        n_layers: dims[1],
        window: dims[2],
        n_ch: dims[3],
        d_eta: dims[4],
        decoder: DecoderSpec {
            channels: dims[5],
            kernel1: dims[6],
            stride1: dims[7],
            kernel2: dims[8],
        },
        lem_dt,
    };
    let model = Model::new(config).map_err(|e| Error::format(path, e.to_string()))?;
    if model.param_count() != n_params {
        return Err(Error::format(
            path,
            format!("header declares {n_params} parameters, architecture has {}", model.param_count()),
        ));
    }
    if bytes.len() - c.pos != n_params * 4 {
        return Err(Error::format(
            path,
            format!("expected {} parameter bytes, found {}", n_params * 4, bytes.len() - c.pos),
        ));
    }
    let flat: Vec<f64> = c
        .take(n_params * 4)?
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
        .collect();
    let params = ParamStore::from_flat(model.layout(), &flat)?;
    Ok((model, params))
}

pub fn save_checkpoint<T: Real>(path: impl AsRef<Path>, config: &ModelConfig, params: &ParamStore<T>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode_checkpoint(config, params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model, ParamStore<f64>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
