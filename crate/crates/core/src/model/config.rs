use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiment::Experiment;
use crate::nn::Conv1dSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    /// Two-layer feedforward network on the flattened window.
    Ffn,
    Lstm,
    Lem,
}

/// The six encoder × processor combinations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    MpPde,
    Lstm,
    Lem,
    Gated,
    LstmGated,
    MsmpPde,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::MpPde,
        ModelKind::Lstm,
        ModelKind::Lem,
        ModelKind::Gated,
        ModelKind::LstmGated,
        ModelKind::MsmpPde,
    ];

    pub fn encoder(self) -> EncoderKind {
        match self {
            ModelKind::MpPde | ModelKind::Gated => EncoderKind::Ffn,
            ModelKind::Lstm | ModelKind::LstmGated => EncoderKind::Lstm,
            ModelKind::Lem | ModelKind::MsmpPde => EncoderKind::Lem,
        }
    }

    pub fn gated(self) -> bool {
        matches!(self, ModelKind::Gated | ModelKind::LstmGated | ModelKind::MsmpPde)
    }

    pub fn from_parts(encoder: EncoderKind, gated: bool) -> Self {
        match (encoder, gated) {
            (EncoderKind::Ffn, false) => ModelKind::MpPde,
            (EncoderKind::Lstm, false) => ModelKind::Lstm,
            (EncoderKind::Lem, false) => ModelKind::Lem,
            (EncoderKind::Ffn, true) => ModelKind::Gated,
            (EncoderKind::Lstm, true) => ModelKind::LstmGated,
            (EncoderKind::Lem, true) => ModelKind::MsmpPde,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::MpPde => "mp-pde",
            ModelKind::Lstm => "lstm",
            ModelKind::Lem => "lem",
            ModelKind::Gated => "gated",
            ModelKind::LstmGated => "lstmgated",
            ModelKind::MsmpPde => "msmp-pde",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown model '{s}' (expected mp-pde, lstm, lem, gated, lstmgated or msmp-pde)"
                ))
            })
    }
}

/// Convolutional decoder geometry.
///
/// Scalar problems read the `n_hid` features of a node as a 1-channel signal:
/// `conv(1 → channels, kernel1, stride1)`, swish, `conv(channels → 1, kernel2)`
/// must produce exactly `K` values. Systems first map features to `N·K` with a
/// linear layer and then apply two same-padded convolutions of width `kernel2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoderSpec {
    pub channels: usize,
    pub kernel1: usize,
    pub stride1: usize,
    pub kernel2: usize,
}

impl DecoderSpec {
    /// 128 → 29 → 25.
    pub const PAPER: DecoderSpec = DecoderSpec {
        channels: 8,
        kernel1: 16,
        stride1: 4,
        kernel2: 5,
    };

    /// A scalar decoder geometry mapping `n_hid` features to `window` outputs.
    pub fn fit(n_hid: usize, window: usize) -> Result<Self> {
        if Self::PAPER.scalar_output_len(n_hid) == Some(window) {
            return Ok(Self::PAPER);
        }
        for min_kernel in [2, 1] {
            for kernel2 in [5, 3, 1] {
                let mid = window + kernel2 - 1;
                for stride1 in [4, 3, 2, 1] {
                    let span = (mid - 1) * stride1;
                    if n_hid > span && n_hid - span >= min_kernel {
                        return Ok(Self {
                            channels: 8,
                            kernel1: n_hid - span,
                            stride1,
                            kernel2,
                        });
                    }
                }
            }
        }
        Err(Error::Config(format!("no decoder geometry maps {n_hid} features to {window} steps")))
    }

    pub fn scalar_convs(&self) -> (Conv1dSpec, Conv1dSpec) {
        (
            Conv1dSpec {
                c_in: 1,
                c_out: self.channels,
                kernel: self.kernel1,
                stride: self.stride1,
                padding: 0,
            },
            Conv1dSpec {
                c_in: self.channels,
                c_out: 1,
                kernel: self.kernel2,
                stride: 1,
                padding: 0,
            },
        )
    }

    pub fn system_convs(&self, n_ch: usize) -> (Conv1dSpec, Conv1dSpec) {
        let pad = self.kernel2 / 2;
        (
            Conv1dSpec {
                c_in: n_ch,
                c_out: self.channels,
                kernel: self.kernel2,
                stride: 1,
                padding: pad,
            },
            Conv1dSpec {
                c_in: self.channels,
                c_out: n_ch,
                kernel: self.kernel2,
                stride: 1,
                padding: pad,
            },
        )
    }

    pub fn scalar_output_len(&self, n_hid: usize) -> Option<usize> {
        let (a, b) = self.scalar_convs();
        a.output_len(n_hid).and_then(|l| b.output_len(l))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    pub gated: bool,
    pub n_hid: usize,
    pub n_layers: usize,
    /// Time steps per input/output window (K).
    pub window: usize,
    pub n_ch: usize,
    pub d_eta: usize,
    pub decoder: DecoderSpec,
    /// Δt of the LEM cell.
    pub lem_dt: f64,
}

impl ModelConfig {
    /// n_hid = 128, 6 processor layers, K = 25.
    pub fn paper(kind: ModelKind, experiment: Experiment) -> Self {
        Self {
            encoder: kind.encoder(),
            gated: kind.gated(),
            n_hid: 128,
            n_layers: 6,
            window: 25,
            n_ch: experiment.n_channels(),
            d_eta: experiment.eta_dim(),
            decoder: DecoderSpec::PAPER,
            lem_dt: 1.0,
        }
    }

    /// n_hid = 8, 2 processor layers, K = 4: for gradient checks and smoke runs.
    pub fn tiny(kind: ModelKind, experiment: Experiment) -> Self {
        Self::paper(kind, experiment)
            .with_size(8, 2, 4)
            .expect("tiny geometry is valid")
    }

    /// Same variant with a different width, depth and window; refits the decoder.
    pub fn with_size(mut self, n_hid: usize, n_layers: usize, window: usize) -> Result<Self> {
        self.n_hid = n_hid;
        self.n_layers = n_layers;
        self.window = window;
        self.decoder = DecoderSpec::fit(n_hid, window)?;
        self.validate()?;
        Ok(self)
    }

    pub fn kind(&self) -> ModelKind {
        ModelKind::from_parts(self.encoder, self.gated)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_hid == 0 || self.window == 0 || self.n_ch == 0 {
            return Err(Error::Config("n_hid, window and channel count must be positive".into()));
        }
        if !(self.lem_dt > 0.0 && self.lem_dt <= 1.0) {
            return Err(Error::Config(format!("LEM dt {} outside (0, 1]", self.lem_dt)));
        }
        if self.n_ch == 1 {
            match self.decoder.scalar_output_len(self.n_hid) {
                Some(k) if k == self.window => {}
                other => {
                    return Err(Error::Config(format!(
                        "decoder {:?} maps {} features to {other:?} steps, expected {}",
                        self.decoder, self.n_hid, self.window
                    )))
                }
            }
        } else if self.decoder.kernel2.is_multiple_of(2) {
            return Err(Error::Config("system decoder needs an odd kernel for same padding".into()));
        }
        Ok(())
    }

    /// Width of the feedforward encoder input `[u window, x, t, η]`.
    pub fn ffn_input_dim(&self) -> usize {
        self.n_ch * self.window + 2 + self.d_eta
    }

    /// Width of one recurrent encoder step `[u, x, t, η]`.
    pub fn recurrent_input_dim(&self) -> usize {
        self.n_ch + 2 + self.d_eta
    }

    /// Width of the message network input `[X_i, X_j, Δu, Δx, η]`.
    pub fn message_input_dim(&self) -> usize {
        2 * self.n_hid + self.n_ch * self.window + 1 + self.d_eta
    }

    /// Width of the update network input `[X_i, Σ m_ij, η]`.
    pub fn update_input_dim(&self) -> usize {
        2 * self.n_hid + self.d_eta
    }
}
