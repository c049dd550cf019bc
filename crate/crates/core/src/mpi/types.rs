use crate::diffcore::Tensor;
use crate::{Error, Result};

/// Planes used while fitting.
pub const TRAIN_PLANES: usize = 32;
/// Planes used for inference renders.
pub const INFERENCE_PLANES: usize = 96;

/// Plane colors: one texture reused by every plane, or one texture per plane.
#[derive(Debug, Clone, PartialEq)]
pub enum PlaneColors {
    /// `[H, W, 3]`
    Shared(Tensor),
    /// `[L, H, W, 3]`
    PerPlane(Tensor),
}

/// A multiplane image: `L` fronto-parallel RGBA planes at increasing depths.
#[derive(Debug, Clone, PartialEq)]
pub struct Mpi {
    colors: PlaneColors,
    alphas: Tensor,
    depths: Vec<f64>,
    near: f64,
    far: f64,
}

/// `L` depths from `near` to `far`, equally spaced in disparity.
pub fn plane_depths(planes: usize, near: f64, far: f64) -> Result<Vec<f64>> {
    if planes == 0 {
        return Err(Error::invalid("plane_depths", "need at least one plane"));
    }
    if !(near > 0.0 && near < far && far.is_finite()) {
        return Err(Error::invalid("plane_depths", format!("need 0 < near < far, got {near}, {far}")));
    }
    if planes == 1 {
        return Ok(vec![near]);
    }
    let (dn, df) = (1.0 / near, 1.0 / far);
    let last = (planes - 1) as f64;
    Ok((0..planes)
        .map(|i| match i {
            0 => near,
            i if i == planes - 1 => far,
            i => 1.0 / (dn + (df - dn) * i as f64 / last),
        })
        .collect())
}

fn check_unit(t: &Tensor, what: &str) -> Result<()> {
    if let Some(v) = t.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid("Mpi", format!("{what} value {v} outside [0, 1]")));
    }
    Ok(())
}

impl Mpi {
    /// Validates shapes, value ranges and strictly increasing depths. The
    /// depth range used for normalization defaults to the first and last depth.
    pub fn new(colors: PlaneColors, alphas: Tensor, depths: Vec<f64>) -> Result<Self> {
        let (near, far) = match (depths.first(), depths.last()) {
            (Some(&n), Some(&f)) => (n, f),
            _ => return Err(Error::invalid("Mpi", "need at least one plane")),
        };
        Self::with_range(colors, alphas, depths, near, far)
    }

    pub fn with_range(colors: PlaneColors, alphas: Tensor, depths: Vec<f64>, near: f64, far: f64) -> Result<Self> {
        let s = alphas.shape();
        if s.len() != 3 || s[0] == 0 || s[1] == 0 || s[1] != s[2] {
            return Err(Error::invalid("Mpi", format!("alphas must be [L, H, H], got {s:?}")));
        }
        let (planes, size) = (s[0], s[1]);
        if depths.len() != planes {
            return Err(Error::shape("Mpi depths", &[planes], &[depths.len()]));
        }
        if depths.iter().any(|d| !(*d > 0.0 && d.is_finite())) || depths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("Mpi", "depths must be positive and strictly increasing"));
        }
        if !(near > 0.0 && near <= depths[0] && far >= depths[planes - 1]) {
            return Err(Error::invalid("Mpi", "depth range must enclose the plane depths"));
        }
        match &colors {
            PlaneColors::Shared(c) => c.expect_shape("Mpi colors", &[size, size, 3])?,
            PlaneColors::PerPlane(c) => c.expect_shape("Mpi colors", &[planes, size, size, 3])?,
        }
        check_unit(&alphas, "alpha")?;
        match &colors {
            PlaneColors::Shared(c) | PlaneColors::PerPlane(c) => check_unit(c, "color")?,
        }
        Ok(Mpi {
            colors,
            alphas,
            depths,
            near,
            far,
        })
    }

    /// Sets the farthest plane's alpha to exactly 1 everywhere.
    pub fn with_far_plane_opaque(mut self) -> Self {
        let n = self.size() * self.size();
        let l = self.planes();
        self.alphas.data_mut()[(l - 1) * n..].iter_mut().for_each(|a| *a = 1.0);
        self
    }

    pub fn far_plane_opaque(&self) -> bool {
        let n = self.size() * self.size();
        self.alphas.data()[(self.planes() - 1) * n..].iter().all(|&a| a == 1.0)
    }

    pub fn planes(&self) -> usize {
        self.alphas.shape()[0]
    }

    /// Image side length `H`.
    pub fn size(&self) -> usize {
        self.alphas.shape()[1]
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn near(&self) -> f64 {
        self.near
    }

    pub fn far(&self) -> f64 {
        self.far
    }

    pub fn alphas(&self) -> &Tensor {
        &self.alphas
    }

    pub fn colors(&self) -> &PlaneColors {
        &self.colors
    }

    pub fn is_shared_texture(&self) -> bool {
        matches!(self.colors, PlaneColors::Shared(_))
    }

    /// RGB of plane `plane` as `[H, W, 3]` data.
    pub fn plane_rgb(&self, plane: usize) -> &[f64] {
        match &self.colors {
            PlaneColors::Shared(c) => c.data(),
            PlaneColors::PerPlane(c) => {
                let n = self.size() * self.size() * 3;
                &c.data()[plane * n..(plane + 1) * n]
            }
        }
    }

    /// Plane colors expanded to `[L, H, W, 3]`.
    pub fn color_volume(&self) -> Tensor {
        match &self.colors {
            PlaneColors::PerPlane(c) => c.clone(),
            PlaneColors::Shared(c) => {
                let (l, h) = (self.planes(), self.size());
                let data = (0..l).flat_map(|_| c.data().iter().copied()).collect();
                Tensor::from_vec(&[l, h, h, 3], data).expect("consistent shapes")
            }
        }
    }

    pub fn plane_alpha(&self, plane: usize) -> &[f64] {
        let n = self.size() * self.size();
        &self.alphas.data()[plane * n..(plane + 1) * n]
    }
}
