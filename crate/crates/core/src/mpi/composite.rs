//! Compositing weights and alpha compositing.
//!
//! Plane 0 is nearest to the camera. The weight of plane `i` is its alpha
//! times the transmittance through every nearer plane,
//! `A_i = α_i · Π_{j<i} (1 − α_j)`, which makes `Σ_i A_i C_i` identical to
//! back-to-front "over" compositing onto a black background.

use rayon::prelude::*;

use crate::diffcore::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Per-plane, per-pixel compositing weights `[L, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaWeights {
    weights: Tensor,
}

impl AlphaWeights {
    pub fn tensor(&self) -> &Tensor {
        &self.weights
    }

    pub fn into_tensor(self) -> Tensor {
        self.weights
    }

    pub fn planes(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn get(&self, plane: usize, row: usize, col: usize) -> f64 {
        self.weights.data()[(plane * self.height() + row) * self.width() + col]
    }

    /// Wraps precomputed weights after checking shape and range.
    pub fn from_tensor(weights: Tensor) -> Result<Self> {
        if weights.ndim() != 3 {
            return Err(Error::invalid("AlphaWeights", "weights must be [L, H, W]"));
        }
        if weights.data().iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(Error::invalid("AlphaWeights", "weights must lie in [0, 1]"));
        }
        Ok(AlphaWeights { weights })
    }

    /// Per-pixel sum over planes, `[H, W]`.
    pub fn coverage(&self) -> Vec<f64> {
        let n = self.height() * self.width();
        let mut out = vec![0.0; n];
        for plane in self.weights.data().chunks(n) {
            for (o, a) in out.iter_mut().zip(plane) {
                *o += a;
            }
        }
        out
    }
}

fn check_alphas(alphas: &Tensor) -> Result<(usize, usize)> {
    if alphas.ndim() != 3 || alphas.shape()[0] == 0 {
        return Err(Error::invalid("compositing_weights", format!("alphas must be [L, H, W], got {:?}", alphas.shape())));
    }
    if let Some(bad) = alphas.data().iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::invalid("compositing_weights", format!("alpha {bad} outside [0, 1]")));
    }
    let s = alphas.shape();
    Ok((s[0], s[1] * s[2]))
}

fn weights_forward(alphas: &Tensor, planes: usize, pixels: usize) -> Tensor {
    let mut out = Tensor::zeros(alphas.shape());
    let mut transmittance = vec![1.0; pixels];
    let a = alphas.data();
    let dst = out.data_mut();
    for l in 0..planes {
        let plane_a = &a[l * pixels..(l + 1) * pixels];
        let plane_w = &mut dst[l * pixels..(l + 1) * pixels];
        plane_w
            .par_iter_mut()
            .zip(transmittance.par_iter_mut())
            .zip(plane_a.par_iter())
            .for_each(|((w, t), &alpha)| {
                *w = alpha * *t;
                *t *= 1.0 - alpha;
            });
    }
    out
}

/// `A_i = α_i · Π_{j<i}(1 − α_j)` for alphas `[L, H, W]` in `[0, 1]`.
pub fn compositing_weights(alphas: &Tensor) -> Result<AlphaWeights> {
    let (planes, pixels) = check_alphas(alphas)?;
    Ok(AlphaWeights {
        weights: weights_forward(alphas, planes, pixels),
    })
}

/// Gradient of `Σ g · A(α)` with respect to `α`; no division by `1 − α`.
pub fn compositing_weights_vjp(alphas: &Tensor, grad_weights: &Tensor) -> Tensor {
    let s = alphas.shape();
    let (planes, pixels) = (s[0], s[1] * s[2]);
    let a = alphas.data();
    let g = grad_weights.data();
    let mut out = Tensor::zeros(s);
    let dst = out.data_mut();
    for p in 0..pixels {
        // transmittance in front of each plane
        let mut t = vec![1.0; planes];
        for l in 1..planes {
            t[l] = t[l - 1] * (1.0 - a[(l - 1) * pixels + p]);
        }
        // behind = Σ_{i>l} g_i α_i Π_{l<j<i} (1 − α_j)
        let mut behind = 0.0;
        for l in (0..planes).rev() {
            let idx = l * pixels + p;
            dst[idx] = t[l] * (g[idx] - behind);
            behind = g[idx] * a[idx] + (1.0 - a[idx]) * behind;
        }
    }
    out
}

pub fn compositing_weights_on(tape: &mut Tape, alphas: Var) -> Result<Var> {
    let weights = compositing_weights(tape.value(alphas))?.into_tensor();
    Ok(tape.custom(
        &[alphas],
        weights,
        Box::new(|g, inputs| vec![compositing_weights_vjp(inputs[0], g)]),
    ))
}

fn check_composite(colors: &Tensor, weights: &Tensor) -> Result<(usize, usize, usize)> {
    let ws = weights.shape();
    if ws.len() != 3 {
        return Err(Error::invalid("composite", "weights must be [L, H, W]"));
    }
    let cs = colors.shape();
    if cs.len() != 4 || cs[..3] != ws[..] {
        return Err(Error::shape("composite", &[ws[0], ws[1], ws[2], 3], cs));
    }
    Ok((ws[0], ws[1] * ws[2], cs[3]))
}

fn composite_forward(colors: &Tensor, weights: &Tensor, planes: usize, pixels: usize, k: usize, width: usize) -> Tensor {
    let height = pixels / width.max(1);
    let mut out = Tensor::zeros(&[height, width, k]);
    let c = colors.data();
    let w = weights.data();
    let row_len = width * k;
    if row_len == 0 {
        return out;
    }
    out.data_mut().par_chunks_mut(row_len).enumerate().for_each(|(row, dst)| {
        for l in 0..planes {
            for col in 0..width {
                let p = row * width + col;
                let a = w[l * pixels + p];
                let base = (l * pixels + p) * k;
                for ch in 0..k {
                    dst[col * k + ch] += a * c[base + ch];
                }
            }
        }
    });
    out
}

/// `I(x, y) = Σ_i A_i(x, y) · C_i(x, y)` for colors `[L, H, W, k]`.
pub fn composite(colors: &Tensor, weights: &AlphaWeights) -> Result<Tensor> {
    composite_raw(colors, weights.tensor())
}

pub(crate) fn composite_raw(colors: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let (planes, pixels, k) = check_composite(colors, weights)?;
    Ok(composite_forward(colors, weights, planes, pixels, k, weights.shape()[2]))
}

/// Gradients of `⟨g, composite(C, A)⟩` with respect to `C` and `A`.
pub fn composite_vjp(colors: &Tensor, weights: &Tensor, grad_image: &Tensor) -> (Tensor, Tensor) {
    let ws = weights.shape();
    let (planes, pixels, k) = (ws[0], ws[1] * ws[2], colors.shape()[3]);
    let c = colors.data();
    let w = weights.data();
    let g = grad_image.data();
    let mut gc = Tensor::zeros(colors.shape());
    let mut gw = Tensor::zeros(ws);
    for l in 0..planes {
        for p in 0..pixels {
            let a = w[l * pixels + p];
            let base = (l * pixels + p) * k;
            let mut acc = 0.0;
            for ch in 0..k {
                gc.data_mut()[base + ch] = a * g[p * k + ch];
                acc += c[base + ch] * g[p * k + ch];
            }
            gw.data_mut()[l * pixels + p] = acc;
        }
    }
    (gc, gw)
}

pub fn composite_on(tape: &mut Tape, colors: Var, weights: Var) -> Result<Var> {
    let out = composite_raw(tape.value(colors), tape.value(weights))?;
    Ok(tape.custom(
        &[colors, weights],
        out,
        Box::new(|g, inputs| {
            let (gc, gw) = composite_vjp(inputs[0], inputs[1], g);
            vec![gc, gw]
        }),
    ))
}
