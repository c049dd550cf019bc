//! Rendering an MPI at a target pose: warp every plane to the target frame
//! with its depth's homography, then composite front to back.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::camera::CameraPose;
use super::composite::{composite, compositing_weights, AlphaWeights};
use super::homography::{apply_homography, plane_homography};
use super::types::Mpi;
use super::warp::{bilinear_taps, WarpPlan};
use crate::diffcore::Tensor;
use crate::{Error, Result};

/// Renders `mpi` at `pose` into an `[H, H, 3]` image.
///
/// Streams over planes per output row, so memory stays proportional to one
/// image. The result is bit-identical to building a [`TargetView`] and
/// compositing its warped planes.
pub fn render_mpi(mpi: &Mpi, pose: &CameraPose) -> Result<Tensor> {
    let size = mpi.size();
    render_planes(mpi.alphas(), mpi.depths(), pose, size, |plane, pixel, rgb| {
        let src = mpi.plane_rgb(plane);
        rgb.copy_from_slice(&src[pixel * 3..pixel * 3 + 3]);
    })
}

/// Streaming renderer over arbitrary plane colors.
///
/// `color(plane, pixel, out)` writes the canonical-frame RGB of `pixel`
/// (row-major index) on `plane`.
pub fn render_planes<F>(alphas: &Tensor, depths: &[f64], pose: &CameraPose, size: usize, color: F) -> Result<Tensor>
where
    F: Fn(usize, usize, &mut [f64; 3]) + Sync,
{
    let planes = depths.len();
    alphas.expect_shape("render_planes", &[planes, size, size])?;
    let homographies = depths
        .iter()
        .map(|&d| plane_homography(pose, d))
        .collect::<Result<Vec<Matrix3<f64>>>>()?;
    let n = size * size;
    let a = alphas.data();
    let mut out = Tensor::zeros(&[size, size, 3]);
    out.data_mut().par_chunks_mut(size * 3).enumerate().for_each(|(row, dst)| {
        let mut transmittance = vec![1.0; size];
        let mut rgb = [0.0; 3];
        for (l, h) in homographies.iter().enumerate() {
            let plane_alpha = &a[l * n..(l + 1) * n];
            for col in 0..size {
                let Some((u, v)) = apply_homography(h, col as f64 + 0.5, row as f64 + 0.5)
                    .filter(|(u, v)| u.is_finite() && v.is_finite())
                else {
                    // no contribution; transmittance unchanged (α = 0)
                    continue;
                };
                let (index, weight) = bilinear_taps(u, v, size, size);
                let mut alpha = 0.0;
                for k in 0..4 {
                    alpha += weight[k] * plane_alpha[index[k]];
                }
                // interpolation rounding can overshoot 1 by an ulp
                let alpha = alpha.min(1.0);
                let mut c = [0.0; 3];
                for k in 0..4 {
                    color(l, index[k], &mut rgb);
                    for ch in 0..3 {
                        c[ch] += weight[k] * rgb[ch];
                    }
                }
                let t = &mut transmittance[col];
                let w = alpha * *t;
                *t *= 1.0 - alpha;
                for ch in 0..3 {
                    dst[col * 3 + ch] += w * c[ch];
                }
            }
        }
    });
    Ok(out)
}

/// All planes of an MPI warped into one target frame.
#[derive(Debug, Clone)]
pub struct TargetView {
    pose: CameraPose,
    homographies: Vec<Matrix3<f64>>,
    plans: Vec<WarpPlan>,
    /// `[L, H, W, 3]`
    rgb: Tensor,
    /// `[L, H, W]`
    alpha: Tensor,
    weights: AlphaWeights,
}

impl TargetView {
    pub fn new(mpi: &Mpi, pose: &CameraPose) -> Result<Self> {
        let (l, h) = (mpi.planes(), mpi.size());
        let homographies = mpi
            .depths()
            .iter()
            .map(|&d| plane_homography(pose, d))
            .collect::<Result<Vec<_>>>()?;
        let plans: Vec<WarpPlan> = homographies.iter().map(|m| WarpPlan::new(m, h, h)).collect();
        let mut rgb = Vec::with_capacity(l * h * h * 3);
        let mut alpha = Vec::with_capacity(l * h * h);
        for (i, plan) in plans.iter().enumerate() {
            let src_rgb = Tensor::from_vec(&[h, h, 3], mpi.plane_rgb(i).to_vec())?;
            rgb.extend_from_slice(plan.apply(&src_rgb)?.data());
            let src_a = Tensor::from_vec(&[h, h], mpi.plane_alpha(i).to_vec())?;
            alpha.extend(plan.apply(&src_a)?.data().iter().map(|a| a.min(1.0)));
        }
        let rgb = Tensor::from_vec(&[l, h, h, 3], rgb)?;
        let alpha = Tensor::from_vec(&[l, h, h], alpha)?;
        let weights = compositing_weights(&alpha)?;
        Ok(TargetView {
            pose: *pose,
            homographies,
            plans,
            rgb,
            alpha,
            weights,
        })
    }

    pub fn pose(&self) -> &CameraPose {
        &self.pose
    }

    pub fn homography(&self, plane: usize) -> &Matrix3<f64> {
        &self.homographies[plane]
    }

    pub fn plan(&self, plane: usize) -> &WarpPlan {
        &self.plans[plane]
    }

    pub fn size(&self) -> usize {
        self.alpha.shape()[1]
    }

    pub fn planes(&self) -> usize {
        self.alpha.shape()[0]
    }

    /// Warped plane colors `[L, H, W, 3]`.
    pub fn rgb(&self) -> &Tensor {
        &self.rgb
    }

    /// Warped plane alphas `[L, H, W]`.
    pub fn alpha(&self) -> &Tensor {
        &self.alpha
    }

    pub fn weights(&self) -> &AlphaWeights {
        &self.weights
    }

    /// Warped RGB of `plane` at target pixel `(row, col)`.
    pub fn rgb_at(&self, plane: usize, row: usize, col: usize) -> [f64; 3] {
        let h = self.size();
        let base = ((plane * h + row) * h + col) * 3;
        let d = self.rgb.data();
        [d[base], d[base + 1], d[base + 2]]
    }

    pub fn image(&self) -> Result<Tensor> {
        composite(&self.rgb, &self.weights)
    }

    /// Canonical pixel coordinate seen through target pixel `(row, col)` on `plane`.
    pub fn canonical_position(&self, plane: usize, row: usize, col: usize) -> Option<(f64, f64)> {
        self.plans[plane].source_position(row, col)
    }

    /// Composited 3D point (canonical coordinates) seen through each target
    /// pixel, weighted by the compositing weights. `None` where nothing is hit.
    pub fn expected_points(&self, depths: &[f64]) -> Vec<Option<Vector3<f64>>> {
        let h = self.size();
        let k = self.pose.intrinsics();
        let origin = self.pose.center();
        let rt = self.pose.rotation().transpose();
        let mut out = Vec::with_capacity(h * h);
        for row in 0..h {
            for col in 0..h {
                let dir = rt * k.unproject(col as f64 + 0.5, row as f64 + 0.5);
                let mut acc = Vector3::zeros();
                let mut total = 0.0;
                for (l, &d) in depths.iter().enumerate() {
                    let a = self.weights.get(l, row, col);
                    if a > 0.0 && dir.z.abs() > 1e-12 {
                        let s = (d - origin.z) / dir.z;
                        acc += (origin + dir * s) * a;
                        total += a;
                    }
                }
                out.push((total > 0.0).then(|| acc / total));
            }
        }
        out
    }
}

/// Source-pixel coordinate of each target pixel's composited point.
fn reprojected_positions(source_pose: &CameraPose, target: &TargetView, depths: &[f64]) -> Result<Vec<Option<(f64, f64)>>> {
    if depths.len() != target.planes() {
        return Err(Error::shape("reproject_image depths", &[target.planes()], &[depths.len()]));
    }
    let k = source_pose.intrinsics();
    Ok(target
        .expected_points(depths)
        .iter()
        .map(|point| {
            let cam = source_pose.rotation() * (*point)? + source_pose.translation();
            (cam.z > 1e-12).then(|| k.project(&cam))
        })
        .collect())
}

/// Warps an image rendered at `source_pose` into the frame of `target` using
/// the target view's composited geometry, sampling bilinearly with zero fill.
pub fn reproject_image(image: &Tensor, source_pose: &CameraPose, target: &TargetView, depths: &[f64]) -> Result<Tensor> {
    let h = target.size();
    image.expect_shape("reproject_image", &[h, h, 3])?;
    let src = image.data();
    let mut out = Tensor::zeros(&[h, h, 3]);
    for (p, pos) in reprojected_positions(source_pose, target, depths)?.into_iter().enumerate() {
        let Some((u, v)) = pos else { continue };
        let (index, weight) = bilinear_taps(u, v, h, h);
        for ch in 0..3 {
            let mut acc = 0.0;
            for n in 0..4 {
                acc += weight[n] * src[index[n] * 3 + ch];
            }
            out.data_mut()[p * 3 + ch] = acc;
        }
    }
    Ok(out)
}

/// Target pixels whose reprojection lands where all four bilinear taps lie
/// inside the source image.
pub fn reprojection_mask(source_pose: &CameraPose, target: &TargetView, depths: &[f64]) -> Result<Vec<bool>> {
    let hi = target.size() as f64 - 0.5;
    Ok(reprojected_positions(source_pose, target, depths)?
        .into_iter()
        .map(|pos| pos.is_some_and(|(u, v)| (0.5..=hi).contains(&u) && (0.5..=hi).contains(&v)))
        .collect())
}
