//! Plane-induced homographies for fronto-parallel canonical planes.

use nalgebra::{Matrix3, Vector3};

use super::camera::CameraPose;
use crate::{Error, Result};

/// Homography taking target-view pixel coordinates to canonical-view pixel
/// coordinates for the canonical plane `z = depth` (backward warp).
///
/// A canonical point on the plane satisfies `nᵀX = depth` with `n = ẑ`, so the
/// forward map is `K (R + t nᵀ / depth) K⁻¹`; this returns its inverse. The
/// target and canonical cameras share the pose's intrinsics.
pub fn plane_homography(pose: &CameraPose, depth: f64) -> Result<Matrix3<f64>> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::invalid("plane_homography", format!("depth must be positive, got {depth}")));
    }
    if pose.is_identity() {
        return Ok(Matrix3::identity());
    }
    let k = pose.intrinsics().matrix();
    let k_inv = pose.intrinsics().inverse_matrix();
    let forward_metric = pose.rotation() + pose.translation() * Vector3::z().transpose() / depth;
    let forward = k * forward_metric * k_inv;
    let det = forward.determinant();
    if !(det.abs() >= 1e-12) {
        return Err(Error::SingularHomography(det.abs()));
    }
    let inverse = forward.try_inverse().ok_or(Error::SingularHomography(det.abs()))?;
    // Scale so the bottom-right entry is 1 where possible; purely cosmetic.
    let s = inverse[(2, 2)];
    Ok(if s.abs() > 1e-12 { inverse / s } else { inverse })
}

/// Applies a homography to a pixel coordinate. `None` when the point maps to
/// or behind the plane at infinity.
pub fn apply_homography(h: &Matrix3<f64>, x: f64, y: f64) -> Option<(f64, f64)> {
    let p = h * Vector3::new(x, y, 1.0);
    if p.z <= 1e-12 {
        return None;
    }
    Some((p.x / p.z, p.y / p.z))
}

#[cfg(test)]
mod tests {
    use super::super::camera::Intrinsics;
    use super::*;
    use nalgebra::Rotation3;

    /// Target pixel -> canonical pixel by intersecting the target ray with `z = depth`.
    fn ray_plane(pose: &CameraPose, depth: f64, x: f64, y: f64) -> (f64, f64) {
        let k = pose.intrinsics();
        let dir_cam = k.unproject(x, y);
        let dir = pose.rotation().transpose() * dir_cam;
        let origin = pose.center();
        let s = (depth - origin.z) / dir.z;
        let hit = origin + dir * s;
        k.project(&hit)
    }

    #[test]
    fn identity_pose_gives_identity() {
        let pose = CameraPose::identity(Intrinsics::default_for(16));
        assert_eq!(plane_homography(&pose, 1.3).unwrap(), Matrix3::identity());
    }

    #[test]
    fn x_translation_shifts_by_focal_over_depth() {
        let k = Intrinsics {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
        };
        let pose = CameraPose::new(Matrix3::identity(), Vector3::new(0.1, 0.0, 0.0), k).unwrap();
        let h = plane_homography(&pose, 1.0).unwrap();
        for &(x, y) in &[(0.0, 0.0), (0.3, -0.2), (-1.0, 0.5)] {
            let (u, v) = apply_homography(&h, x, y).unwrap();
            // the target camera sits at x = -0.1 in canonical space, so target
            // pixel x sees canonical pixel x - 0.1 · f / d
            assert!((u - (x - 0.1)).abs() < 1e-12);
            assert!((v - y).abs() < 1e-12);
            let (ou, ov) = ray_plane(&pose, 1.0, x, y);
            assert!((u - ou).abs() < 1e-12 && (v - ov).abs() < 1e-12);
        }
    }

    #[test]
    fn yaw_rotation_matches_ray_intersection() {
        let k = Intrinsics::default_for(32);
        let r = Rotation3::from_axis_angle(&Vector3::y_axis(), 5f64.to_radians()).into_inner();
        let pose = CameraPose::new(r, Vector3::zeros(), k).unwrap();
        let h = plane_homography(&pose, 1.0).unwrap();
        for row in 0..32 {
            for col in 0..32 {
                let (x, y) = (col as f64 + 0.5, row as f64 + 0.5);
                let (u, v) = apply_homography(&h, x, y).unwrap();
                let (ou, ov) = ray_plane(&pose, 1.0, x, y);
                assert!((u - ou).abs() < 1e-5 && (v - ov).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn rejects_non_positive_depth() {
        let pose = CameraPose::identity(Intrinsics::default_for(4));
        assert!(plane_homography(&pose, 0.0).is_err());
        assert!(plane_homography(&pose, -1.0).is_err());
    }

    #[test]
    fn degenerate_plane_is_flagged() {
        // Camera translated onto the plane itself: R + t ẑᵀ/d is singular.
        let k = Intrinsics::default_for(4);
        let pose = CameraPose::new(Matrix3::identity(), Vector3::new(0.0, 0.0, -1.0), k).unwrap();
        assert!(matches!(plane_homography(&pose, 1.0), Err(Error::SingularHomography(_))));
    }
}
