//! Sinusoidal positional encodings and coordinate normalization.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PosEncodingConfig {
    pub position_frequencies: usize,
    pub direction_frequencies: usize,
    pub include_raw_input: bool,
}

impl Default for PosEncodingConfig {
    fn default() -> Self {
        PosEncodingConfig {
            position_frequencies: 10,
            direction_frequencies: 4,
            include_raw_input: true,
        }
    }
}

impl PosEncodingConfig {
    pub fn position_width(&self) -> usize {
        encoded_width(3, self.position_frequencies, self.include_raw_input)
    }

    pub fn direction_width(&self) -> usize {
        encoded_width(3, self.direction_frequencies, self.include_raw_input)
    }
}

pub fn encoded_width(dim: usize, frequencies: usize, include_raw: bool) -> usize {
    dim * (2 * frequencies + include_raw as usize)
}

/// `[x, sin(2⁰πx), cos(2⁰πx), …, sin(2^{K−1}πx), cos(2^{K−1}πx)]`, where each
/// sin/cos block spans every input dimension.
pub fn positional_encode(x: &[f64], frequencies: usize, include_raw: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_width(x.len(), frequencies, include_raw));
    encode_into(x, frequencies, include_raw, &mut out);
    out
}

pub(crate) fn encode_into(x: &[f64], frequencies: usize, include_raw: bool, out: &mut Vec<f64>) {
    if include_raw {
        out.extend_from_slice(x);
    }
    let mut scale = std::f64::consts::PI;
    for _ in 0..frequencies {
        out.extend(x.iter().map(|v| (scale * v).sin()));
        out.extend(x.iter().map(|v| (scale * v).cos()));
        scale *= 2.0;
    }
}

/// Maps a pixel coordinate and plane depth to `[−1, 1]³`.
///
/// `x` and `y` are continuous pixel coordinates (pixel centers at `k + 0.5`)
/// scaled by the image extent; depth is placed linearly in disparity so that
/// `near ↦ −1` and `far ↦ 1`.
pub fn normalize_position(x: f64, y: f64, depth: f64, size: usize, near: f64, far: f64) -> [f64; 3] {
    let s = size as f64;
    let t = (1.0 / depth - 1.0 / near) / (1.0 / far - 1.0 / near);
    [2.0 * x / s - 1.0, 2.0 * y / s - 1.0, 2.0 * t - 1.0]
}

/// Rejects coordinates outside `[−1, 1]³` (with `1e-9` slack) or non-finite.
pub fn check_normalized(q: &[f64; 3]) -> Result<()> {
    if q.iter().all(|v| v.is_finite() && v.abs() <= 1.0 + 1e-9) {
        Ok(())
    } else {
        Err(Error::invalid("position_coefficients", format!("coordinate {q:?} is outside [-1, 1]^3")))
    }
}
