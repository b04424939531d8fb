//! Positional encodings for series positions.
//!
//! Sinusoidal vectors multiply a neighbor's representation elementwise;
//! the rotary variant instead rotates consecutive pairs of the vector
//! by position-dependent angles (see [`crate::tensor::Tape::rotary`]).

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PositionalKind {
    #[default]
    Sinusoidal,
    Rotary,
    /// All-ones mask (the encoding becomes a no-op). Diagnostic only;
    /// not selectable from run configuration.
    Ones,
}

impl PositionalKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sinusoidal" => Ok(PositionalKind::Sinusoidal),
            "rotary" => Ok(PositionalKind::Rotary),
            other => Err(Error::Config(format!(
                "unknown positional encoding '{other}' (expected sinusoidal|rotary)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PositionalKind::Sinusoidal => "sinusoidal",
            PositionalKind::Rotary => "rotary",
            PositionalKind::Ones => "ones",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PositionalEncoder {
    pub kind: PositionalKind,
    pub d: usize,
}

impl PositionalEncoder {
    pub fn new(kind: PositionalKind, d: usize) -> Result<Self> {
        if d < 2 || !d.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "positional encoding needs an even dimension >= 2, got {d}"
            )));
        }
        Ok(PositionalEncoder { kind, d })
    }

    /// The multiplicative mask for a 1-based series position. For the
    /// rotary kind there is no mask (rotation is applied instead), so
    /// this is only valid for `Sinusoidal` and `Ones`.
    pub fn mask(&self, position: usize) -> Vec<f64> {
        match self.kind {
            PositionalKind::Sinusoidal => encode_sinusoidal(position, self.d),
            PositionalKind::Ones => vec![1.0; self.d],
            PositionalKind::Rotary => vec![1.0; self.d],
        }
    }
}

/// `P[2k] = sin(p / 10000^(2k/d))`, `P[2k+1] = cos(p / 10000^(2k/d))`.
pub fn encode_sinusoidal(position: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for k in 0..d / 2 {
        let angle = position as f64 * 10000f64.powf(-2.0 * k as f64 / d as f64);
        out[2 * k] = angle.sin();
        out[2 * k + 1] = angle.cos();
    }
    out
}

/// Rotate consecutive pairs of `h` by `p * 10000^(-2k/d)`; norm-preserving.
pub fn encode_rotary(h: &[f64], position: f64) -> Result<Vec<f64>> {
    let d = h.len();
    if !d.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "rotary encoding needs an even dimension, got {d}"
        )));
    }
    let mut out = vec![0.0; d];
    for k in 0..d / 2 {
        let theta = position * 10000f64.powf(-2.0 * k as f64 / d as f64);
        let (sin, cos) = theta.sin_cos();
        out[2 * k] = h[2 * k] * cos - h[2 * k + 1] * sin;
        out[2 * k + 1] = h[2 * k] * sin + h[2 * k + 1] * cos;
    }
    Ok(out)
}
