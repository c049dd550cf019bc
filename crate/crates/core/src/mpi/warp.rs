//! Backward warping with bilinear interpolation.
//!
//! Each output pixel center is mapped through the homography into the source
//! image and sampled bilinearly between the four surrounding source pixel
//! centers. Neighbors outside the source contribute zero, so the
//! result fades to zero across the last half pixel at the border.

use nalgebra::Matrix3;
use rayon::prelude::*;

use super::homography::apply_homography;
use crate::diffcore::{Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Taps {
    index: [usize; 4],
    weight: [f64; 4],
}

const EMPTY: Taps = Taps {
    index: [0; 4],
    weight: [0.0; 4],
};

/// Precomputed bilinear taps for one homography and image size.
#[derive(Debug, Clone)]
pub struct WarpPlan {
    height: usize,
    width: usize,
    taps: Vec<Taps>,
    positions: Vec<Option<(f64, f64)>>,
}

/// Bilinear weights for sampling `(u, v)` in a `height × width` grid.
pub(crate) fn bilinear_taps(u: f64, v: f64, height: usize, width: usize) -> ([usize; 4], [f64; 4]) {
    let fx = u - 0.5;
    let fy = v - 0.5;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let ax = fx - x0;
    let ay = fy - y0;
    let corners = [(x0, y0), (x0 + 1.0, y0), (x0, y0 + 1.0), (x0 + 1.0, y0 + 1.0)];
    let weights = [(1.0 - ax) * (1.0 - ay), ax * (1.0 - ay), (1.0 - ax) * ay, ax * ay];
    let mut index = [0usize; 4];
    let mut weight = [0.0; 4];
    for k in 0..4 {
        let (cx, cy) = corners[k];
        if cx >= 0.0 && cy >= 0.0 && cx < width as f64 && cy < height as f64 {
            index[k] = cy as usize * width + cx as usize;
            weight[k] = weights[k];
        }
    }
    (index, weight)
}

impl WarpPlan {
    /// `homography` maps output pixel coordinates to source pixel coordinates.
    pub fn new(homography: &Matrix3<f64>, height: usize, width: usize) -> Self {
        let mut taps = Vec::with_capacity(height * width);
        let mut positions = Vec::with_capacity(height * width);
        for row in 0..height {
            for col in 0..width {
                let pos = apply_homography(homography, col as f64 + 0.5, row as f64 + 0.5)
                    .filter(|(u, v)| u.is_finite() && v.is_finite());
                positions.push(pos);
                taps.push(match pos {
                    Some((u, v)) => {
                        let (index, weight) = bilinear_taps(u, v, height, width);
                        Taps { index, weight }
                    }
                    None => EMPTY,
                });
            }
        }
        WarpPlan {
            height,
            width,
            taps,
            positions,
        }
    }

    pub fn identity(height: usize, width: usize) -> Self {
        Self::new(&Matrix3::identity(), height, width)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Source-image coordinate sampled for the output pixel `(row, col)`.
    pub fn source_position(&self, row: usize, col: usize) -> Option<(f64, f64)> {
        self.positions[row * self.width + col]
    }

    /// True when every bilinear neighbor of the output pixel is inside the source.
    pub fn is_interior(&self, row: usize, col: usize) -> bool {
        match self.source_position(row, col) {
            Some((u, v)) => {
                u >= 0.5 && v >= 0.5 && u <= self.width as f64 - 0.5 && v <= self.height as f64 - 0.5
            }
            None => false,
        }
    }

    fn channels(&self, image: &Tensor) -> Result<usize> {
        let s = image.shape();
        if s.len() < 2 || s[0] != self.height || s[1] != self.width {
            return Err(Error::shape("warp_image", &[self.height, self.width], s));
        }
        Ok(s[2..].iter().product())
    }

    /// Warps an `[H, W, ...]` image; trailing dimensions are channels.
    pub fn apply(&self, image: &Tensor) -> Result<Tensor> {
        let k = self.channels(image)?;
        let src = image.data();
        let mut out = Tensor::zeros(image.shape());
        let row_len = self.width * k;
        if row_len == 0 {
            return Ok(out);
        }
        out.data_mut()
            .par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(row, dst)| {
                for col in 0..self.width {
                    let t = &self.taps[row * self.width + col];
                    for c in 0..k {
                        let mut acc = 0.0;
                        for n in 0..4 {
                            acc += t.weight[n] * src[t.index[n] * k + c];
                        }
                        dst[col * k + c] = acc;
                    }
                }
            });
        Ok(out)
    }

    /// Gradient with respect to the source image given the output gradient.
    pub fn vjp(&self, grad_out: &Tensor) -> Result<Tensor> {
        let k = self.channels(grad_out)?;
        let g = grad_out.data();
        let mut grad_src = Tensor::zeros(grad_out.shape());
        let dst = grad_src.data_mut();
        for (p, t) in self.taps.iter().enumerate() {
            for n in 0..4 {
                if t.weight[n] != 0.0 {
                    for c in 0..k {
                        dst[t.index[n] * k + c] += t.weight[n] * g[p * k + c];
                    }
                }
            }
        }
        Ok(grad_src)
    }

    /// Records the warp of `image` on a tape.
    pub fn apply_on(&self, tape: &mut Tape, image: Var) -> Result<Var> {
        let out = self.apply(tape.value(image))?;
        let plan = self.clone();
        Ok(tape.custom(
            &[image],
            out,
            Box::new(move |g, _| vec![plan.vjp(g).expect("shape checked in forward")]),
        ))
    }
}

/// Backward-warps an `[H, W, ...]` image through `homography`.
pub fn warp_image(image: &Tensor, homography: &Matrix3<f64>) -> Result<Tensor> {
    let s = image.shape();
    if s.len() < 2 {
        return Err(Error::invalid("warp_image", "image needs at least two dimensions"));
    }
    WarpPlan::new(homography, s[0], s[1]).apply(image)
}
