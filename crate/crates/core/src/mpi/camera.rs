//! Pinhole intrinsics and rigid camera poses.
//!
//! Pixel coordinates put the origin at the top-left corner of the image with
//! pixel `(col, row)` centered at `(col + 0.5, row + 0.5)`. Poses map canonical
//! coordinates into the camera: `X_cam = R · X_canonical + t`. The canonical
//! camera has `R = I`, `t = 0` and looks down `+z`.

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Focal length equal to the image size, principal point at the center.
    pub fn default_for(size: usize) -> Self {
        let s = size as f64;
        Intrinsics {
            fx: s,
            fy: s,
            cx: s / 2.0,
            cy: s / 2.0,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Camera-space ray direction (z = 1) through a pixel coordinate.
    pub fn unproject(&self, x: f64, y: f64) -> Vector3<f64> {
        Vector3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }

    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    intrinsics: Intrinsics,
}

impl CameraPose {
    /// Validates orthonormality (RᵀR = I and det R = 1 within 1e-6) and focal lengths.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>, intrinsics: Intrinsics) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(ortho <= 1e-6) {
            return Err(Error::invalid("CameraPose", format!("rotation is not orthonormal (|RᵀR - I| = {ortho:e})")));
        }
        let det = rotation.determinant();
        if !((det - 1.0).abs() <= 1e-6) {
            return Err(Error::invalid("CameraPose", format!("rotation determinant is {det}, expected +1")));
        }
        if !(intrinsics.fx > 0.0 && intrinsics.fy > 0.0) {
            return Err(Error::invalid("CameraPose", "focal lengths must be positive"));
        }
        if !translation.iter().all(|v| v.is_finite()) || !intrinsics.cx.is_finite() || !intrinsics.cy.is_finite() {
            return Err(Error::NonFinite("CameraPose"));
        }
        Ok(CameraPose {
            rotation,
            translation,
            intrinsics,
        })
    }

    pub fn identity(intrinsics: Intrinsics) -> Self {
        CameraPose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            intrinsics,
        }
    }

    /// A camera orbiting the canonical point `(0, 0, center_depth)`.
    ///
    /// Positive yaw swings the camera toward `+x`, positive pitch toward `-y`
    /// (up in image space); the camera keeps looking at the orbit center.
    pub fn orbit(yaw_deg: f64, pitch_deg: f64, center_depth: f64, intrinsics: Intrinsics) -> Result<Self> {
        if yaw_deg == 0.0 && pitch_deg == 0.0 {
            return Ok(Self::identity(intrinsics));
        }
        // Camera-to-canonical rotation: yaw about y, then pitch about x.
        let to_canonical = Rotation3::from_axis_angle(&Vector3::y_axis(), -yaw_deg.to_radians())
            * Rotation3::from_axis_angle(&Vector3::x_axis(), -pitch_deg.to_radians());
        let rotation = to_canonical.inverse().into_inner();
        let center = Vector3::new(0.0, 0.0, center_depth);
        let translation = center - rotation * center;
        Self::new(rotation, translation, intrinsics)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vector3::zeros()
    }

    /// Camera center in canonical coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Unit vector from the scene toward the camera along the optical axis,
    /// in canonical coordinates. `(0, 0, -1)` for the canonical pose.
    pub fn view_direction(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * Vector3::z()).normalize()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let k = Intrinsics::default_for(8);
        let r = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraPose::new(r, Vector3::zeros(), k).is_err());
        let reflect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(CameraPose::new(reflect, Vector3::zeros(), k).is_err());
        let bad_k = Intrinsics { fx: 0.0, ..k };
        assert!(CameraPose::new(Matrix3::identity(), Vector3::zeros(), bad_k).is_err());
    }

    #[test]
    fn orbit_keeps_center_fixed_and_looks_at_it() {
        let k = Intrinsics::default_for(64);
        let pose = CameraPose::orbit(20.0, -10.0, 1.0, k).unwrap();
        let center = Vector3::new(0.0, 0.0, 1.0);
        let in_cam = pose.rotation() * center + pose.translation();
        assert!((in_cam - center).norm() < 1e-12);
        // view direction points from the orbit center to the camera
        let to_cam = (pose.center() - center).normalize();
        assert!((to_cam - pose.view_direction()).norm() < 1e-12);
        // positive yaw moves the camera toward +x
        assert!(pose.center().x > 0.0);
    }

    #[test]
    fn canonical_view_direction() {
        let pose = CameraPose::identity(Intrinsics::default_for(4));
        assert_eq!(pose.view_direction(), Vector3::new(0.0, 0.0, -1.0));
        assert!(pose.is_identity());
    }
}
