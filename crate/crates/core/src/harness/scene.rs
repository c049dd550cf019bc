//! Procedural view-dependent scene: a layered dome over an opaque
//! background, shaded with a Lambertian term plus a Phong lobe.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::Tensor;
use crate::mpi::{plane_depths, render_mpi, CameraPose, Intrinsics, Mpi, PlaneColors, TRAIN_PLANES};
use crate::{Error, Result};

/// Dome radius as a fraction of the image size.
const DOME_RADIUS: f64 = 0.35;
/// Normalized plane range (0 = near, 1 = far) spanned by the dome.
const DOME_FRONT: f64 = 0.2;
const DOME_BACK: f64 = 0.7;
const ALBEDO_WAVES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub resolution: usize,
    pub planes: usize,
    pub near: f64,
    pub far: f64,
    pub specular_strength: f64,
    pub shininess: f64,
    /// Unit vector from the surface toward the light, canonical coordinates.
    pub light_direction: Vector3<f64>,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            resolution: 64,
            planes: TRAIN_PLANES,
            near: 0.95,
            far: 1.12,
            specular_strength: 0.5,
            shininess: 16.0,
            light_direction: Vector3::new(0.3, -0.3, -1.0).normalize(),
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let h = self.resolution;
        if h == 0 || !h.is_power_of_two() || h > 1024 {
            return Err(Error::invalid("SceneSpec", format!("resolution must be a power of two, got {h}")));
        }
        if self.planes < 2 {
            return Err(Error::invalid("SceneSpec", "need at least two planes"));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::invalid("SceneSpec", "need 0 < near < far"));
        }
        if !(self.shininess >= 1.0) || !(self.specular_strength >= 0.0) {
            return Err(Error::invalid("SceneSpec", "need shininess >= 1 and specular strength >= 0"));
        }
        if !((self.light_direction.norm() - 1.0).abs() <= 1e-6) {
            return Err(Error::invalid("SceneSpec", "light direction must be unit length"));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::default_for(self.resolution)
    }

    pub fn depths(&self) -> Result<Vec<f64>> {
        plane_depths(self.planes, self.near, self.far)
    }

    /// Orbit center: the depth halfway between near and far in disparity.
    pub fn orbit_depth(&self) -> f64 {
        2.0 / (1.0 / self.near + 1.0 / self.far)
    }

    pub fn pose(&self, yaw_deg: f64, pitch_deg: f64) -> Result<CameraPose> {
        CameraPose::orbit(yaw_deg, pitch_deg, self.orbit_depth(), self.intrinsics())
    }
}

/// Material and orientation of the surface seen through one canonical pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub albedo: [f64; 3],
    pub normal: Vector3<f64>,
}

/// `albedo · max(0, n·l) + k_s · max(0, r·v)^shininess` with `r = 2(n·l)n − l`.
pub fn synthetic_radiance(scene: &SceneSpec, q: &SurfacePoint, v: &Vector3<f64>) -> [f64; 3] {
    let spec = specular(scene, &q.normal, v);
    let d = diffuse_factor(scene, &q.normal);
    q.albedo.map(|a| a * d + spec)
}

fn diffuse_factor(scene: &SceneSpec, n: &Vector3<f64>) -> f64 {
    n.dot(&scene.light_direction).max(0.0)
}

/// The view-dependent part of [`synthetic_radiance`].
pub fn specular(scene: &SceneSpec, n: &Vector3<f64>, v: &Vector3<f64>) -> f64 {
    if scene.specular_strength == 0.0 {
        return 0.0;
    }
    let l = &scene.light_direction;
    let r = n * (2.0 * n.dot(l)) - l;
    scene.specular_strength * r.dot(v).max(0.0).powf(scene.shininess)
}

/// The built scene: shared diffuse texture, alphas, and per-pixel surface data.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub mpi: Mpi,
    surface: Vec<SurfacePoint>,
}

struct Albedo {
    waves: Vec<([f64; 2], [f64; 3], [f64; 3])>,
}

impl Albedo {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..ALBEDO_WAVES)
            .map(|_| {
                let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let freq: f64 = rng.random_range(2.0..6.0);
                let phase = [0; 3].map(|_| rng.random_range(0.0..std::f64::consts::TAU));
                let amp = [0; 3].map(|_| rng.random_range(0.5..1.0));
                ([freq * angle.cos(), freq * angle.sin()], phase, amp)
            })
            .collect();
        Albedo { waves }
    }

    /// Smooth color in `[0.15, 0.5]` at normalized image coordinates.
    fn at(&self, x: f64, y: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for ch in 0..3 {
            let mut acc = 0.0;
            let mut total = 0.0;
            for (k, phase, amp) in &self.waves {
                acc += amp[ch] * (std::f64::consts::PI * (k[0] * x + k[1] * y) + phase[ch]).sin();
                total += amp[ch];
            }
            out[ch] = 0.15 + 0.35 * (0.5 + 0.5 * acc / total);
        }
        out
    }
}

fn dome_normal(dx: f64, dy: f64, radius: f64) -> Vector3<f64> {
    let (px, py) = (dx / radius, dy / radius);
    let rho2 = px * px + py * py;
    if rho2 >= 1.0 {
        return Vector3::new(0.0, 0.0, -1.0);
    }
    Vector3::new(px, py, -(1.0 - rho2).sqrt())
}

/// Builds the MPI and the surface description for `spec`.
pub fn build_synthetic_mpi(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let (h, l) = (spec.resolution, spec.planes);
    let depths = spec.depths()?;
    let radius = DOME_RADIUS * h as f64;
    let center = h as f64 / 2.0;
    let albedo = Albedo::new(spec.seed);

    let mut surface = Vec::with_capacity(h * h);
    let mut rgb = Vec::with_capacity(h * h * 3);
    for row in 0..h {
        for col in 0..h {
            let (x, y) = (col as f64 + 0.5, row as f64 + 0.5);
            let normal = dome_normal(x - center, y - center, radius);
            let a = albedo.at(x / h as f64, y / h as f64);
            let q = SurfacePoint { albedo: a, normal };
            rgb.extend(a.map(|v| v * diffuse_factor(spec, &normal)));
            surface.push(q);
        }
    }

    let mut alphas = vec![0.0; l * h * h];
    for (i, a_plane) in alphas.chunks_mut(h * h).enumerate() {
        if i == l - 1 {
            a_plane.fill(1.0);
            continue;
        }
        let t = i as f64 / (l - 1) as f64;
        if !(DOME_FRONT..=DOME_BACK).contains(&t) {
            continue;
        }
        // dome cross-section: zero radius at the front, full radius at the back
        let s = (DOME_BACK - t) / (DOME_BACK - DOME_FRONT);
        let r = radius * (1.0 - s * s).max(0.0).sqrt();
        for row in 0..h {
            for col in 0..h {
                let dist = ((col as f64 + 0.5 - center).powi(2) + (row as f64 + 0.5 - center).powi(2)).sqrt();
                a_plane[row * h + col] = (r - dist + 0.5).clamp(0.0, 1.0);
            }
        }
    }

    let mpi = Mpi::with_range(
        PlaneColors::Shared(Tensor::from_vec(&[h, h, 3], rgb)?),
        Tensor::from_vec(&[l, h, h], alphas)?,
        depths,
        spec.near,
        spec.far,
    )?
    .with_far_plane_opaque();
    Ok(SyntheticScene {
        spec: spec.clone(),
        mpi,
        surface,
    })
}

impl SyntheticScene {
    pub fn size(&self) -> usize {
        self.spec.resolution
    }

    pub fn surface(&self, pixel: usize) -> &SurfacePoint {
        &self.surface[pixel]
    }

    /// Specular residual of every canonical pixel for view direction `v`.
    pub fn specular_texture(&self, v: &Vector3<f64>) -> Vec<f64> {
        self.surface.iter().map(|q| specular(&self.spec, &q.normal, v)).collect()
    }

    /// Full radiance texture `[H, H, 3]` for view direction `v`, clamped to `[0, 1]`.
    pub fn radiance_texture(&self, v: &Vector3<f64>) -> Tensor {
        let data = self
            .surface
            .iter()
            .flat_map(|q| synthetic_radiance(&self.spec, q, v).map(|c| c.clamp(0.0, 1.0)))
            .collect();
        Tensor::from_vec(&[self.size(), self.size(), 3], data).expect("consistent shape")
    }

    /// The scene's MPI with view-dependent colors for `v`.
    pub fn ground_truth_mpi(&self, v: &Vector3<f64>) -> Result<Mpi> {
        Mpi::with_range(
            PlaneColors::Shared(self.radiance_texture(v)),
            self.mpi.alphas().clone(),
            self.mpi.depths().to_vec(),
            self.mpi.near(),
            self.mpi.far(),
        )
    }

    /// Ground-truth image at `pose`, shaded for the pose's viewing direction.
    pub fn ground_truth_render(&self, pose: &CameraPose) -> Result<Tensor> {
        render_mpi(&self.ground_truth_mpi(&pose.view_direction())?, pose)
    }
}
