//! Fitting the view-dependent model to a synthetic scene.
//!
//! Each step draws a pose pair `(p1, p2)`, samples pixels by compositing
//! weight at `p1`, regresses the predicted colors onto the ground-truth
//! radiance, and adds `λ · L_vc` between the corrected render at `p1` and the
//! `p2` render reprojected into `p1`. The adversarial signal of a full
//! generator is replaced by this regression.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle::svd_rank_oracle;
use super::scene::SyntheticScene;
use crate::diffcore::{Adam, AdamConfig, Tape, Tensor, Var, DEFAULT_LEARNING_RATE};
use crate::losses::{view_consistency_loss, view_consistency_on, SsimConfig, DEFAULT_DELTA, DEFAULT_LAMBDA};
use crate::mpi::{bilinear_taps, render_mpi, reproject_image, reprojection_mask, CameraPose, TargetView};
use crate::sampling::{candidate_mask, sample_pixels, SampleBatch, DEFAULT_SAMPLING_RATE};
use crate::vdr::{
    color_representation_on, normalize_position, prepare_batch, PositionField, PositionFrame, VdRConfig, VdRModel,
    ViewContext,
};
use crate::{Error, Result};

/// Abort when the loss exceeds this multiple of the first step's loss.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

/// Step-size schedule over the fitting run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LrSchedule {
    Constant,
    /// Half-cosine from the base rate down to zero at the last step.
    #[default]
    Cosine,
}

impl LrSchedule {
    pub fn name(self) -> &'static str {
        match self {
            LrSchedule::Constant => "constant",
            LrSchedule::Cosine => "cosine",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant" => Some(LrSchedule::Constant),
            "cosine" => Some(LrSchedule::Cosine),
            _ => None,
        }
    }

    pub fn rate(self, base: f64, step: usize, steps: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let t = step as f64 / steps.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub rank: usize,
    pub rate: f64,
    pub steps: usize,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub lambda: f64,
    pub delta: f64,
    /// Poses are drawn with yaw in `[−yaw_range, yaw_range]` degrees.
    pub yaw_range: f64,
    pub pitch_range: f64,
    pub w_dim: usize,
    pub position_hidden: usize,
    pub position_layers: usize,
    pub view_hidden: usize,
    pub view_layers: usize,
    pub frame: PositionFrame,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            rank: 8,
            rate: DEFAULT_SAMPLING_RATE,
            steps: 2000,
            learning_rate: DEFAULT_LEARNING_RATE,
            schedule: LrSchedule::Cosine,
            lambda: DEFAULT_LAMBDA,
            delta: DEFAULT_DELTA,
            yaw_range: 30.0,
            pitch_range: 15.0,
            w_dim: 8,
            position_hidden: 384,
            position_layers: 4,
            view_hidden: 64,
            view_layers: 3,
            frame: PositionFrame::Canonical,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.steps == 0 {
            return Err(Error::invalid("FitConfig", "rank and steps must be at least 1"));
        }
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::invalid("FitConfig", "rate must be in (0, 1]"));
        }
        if !(self.learning_rate > 0.0) || !(self.lambda >= 0.0) || !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::invalid("FitConfig", "need lr > 0, lambda >= 0 and delta in [0, 1]"));
        }
        if !(self.yaw_range >= 0.0 && self.pitch_range >= 0.0 && self.yaw_range < 90.0 && self.pitch_range < 90.0) {
            return Err(Error::invalid("FitConfig", "pose ranges must lie in [0, 90) degrees"));
        }
        Ok(())
    }

    pub fn model_config(&self, scene: &SyntheticScene) -> VdRConfig {
        self.model_config_for(scene.mpi.near(), scene.mpi.far())
    }

    pub fn model_config_for(&self, near: f64, far: f64) -> VdRConfig {
        VdRConfig {
            rank: self.rank,
            w_dim: self.w_dim,
            position_hidden: self.position_hidden,
            position_layers: self.position_layers,
            view_hidden: self.view_hidden,
            view_layers: self.view_layers,
            near,
            far,
            frame: self.frame,
            seed: self.seed,
            ..VdRConfig::default()
        }
    }

    pub fn draw_pose(&self, scene: &SyntheticScene, rng: &mut ChaCha8Rng) -> Result<CameraPose> {
        let yaw = rng.random_range(-1.0..=1.0) * self.yaw_range;
        let pitch = rng.random_range(-1.0..=1.0) * self.pitch_range;
        scene.spec.pose(yaw, pitch)
    }
}

/// The conditioning vector `w` used for a scene: uniform in `[−1, 1]`.
pub fn scene_conditioning(scene_seed: u64, w_dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed ^ 0x5eed_c0de);
    (0..w_dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub step: usize,
    pub mse: f64,
    pub lvc: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub records: Vec<MetricRecord>,
}

impl MetricsLog {
    pub const HEADER: &'static str = "step mse lvc grad_norm";

    /// Fixed header then one whitespace-separated record per step; values use
    /// the shortest representation that round-trips.
    pub fn to_text(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(out, "{} {} {} {}", r.step, r.mse, r.lvc, r.grad_norm);
        }
        out
    }

    pub fn last(&self) -> Option<&MetricRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: VdRModel,
    pub log: MetricsLog,
    pub conditioning: Vec<f64>,
}

/// Bilinear sample of an `[H, H, 3]` texture at a canonical pixel coordinate.
fn sample_texture(texture: &[f64], size: usize, u: f64, v: f64) -> [f64; 3] {
    let (index, weight) = bilinear_taps(u, v, size, size);
    let mut out = [0.0; 3];
    for k in 0..4 {
        for ch in 0..3 {
            out[ch] += weight[k] * texture[index[k] * 3 + ch];
        }
    }
    out
}

/// Ground-truth radiance for every batch entry: the view-dependent texture
/// warped exactly like the canonical colors.
fn batch_targets(scene: &SyntheticScene, view: &TargetView, batch: &SampleBatch, v: &Vector3<f64>) -> Result<Tensor> {
    let texture = scene.radiance_texture(v);
    let size = scene.size();
    let mut out = Vec::with_capacity(batch.len() * 3);
    for e in &batch.entries {
        let rgb = match view.canonical_position(e.plane, e.y, e.x) {
            Some((u, w)) => sample_texture(texture.data(), size, u, w),
            None => [0.0; 3],
        };
        out.extend_from_slice(&rgb);
    }
    Tensor::from_vec(&[batch.len(), 3], out)
}

/// Adds each entry's weighted correction into an `[H, H, 3]` image.
fn scatter_on(tape: &mut Tape, corr: Var, batch: &SampleBatch, size: usize) -> Var {
    let targets: Vec<(usize, f64)> = batch.entries.iter().map(|e| (e.y * size + e.x, e.weight)).collect();
    let mut img = Tensor::zeros(&[size, size, 3]);
    let c = tape.value(corr).data();
    for (i, &(p, w)) in targets.iter().enumerate() {
        for ch in 0..3 {
            img.data_mut()[p * 3 + ch] += w * c[i * 3 + ch];
        }
    }
    let n = targets.len();
    tape.custom(
        &[corr],
        img,
        Box::new(move |g, _| {
            let mut d = Tensor::zeros(&[n, 3]);
            for (i, &(p, w)) in targets.iter().enumerate() {
                for ch in 0..3 {
                    d.data_mut()[i * 3 + ch] = w * g.data()[p * 3 + ch];
                }
            }
            vec![d]
        }),
    )
}

fn mask_image(valid: &[bool], size: usize, on: bool) -> Tensor {
    let mut out = Tensor::zeros(&[size, size, 3]);
    for (p, &v) in valid.iter().enumerate() {
        if v == on {
            out.data_mut()[p * 3..p * 3 + 3].fill(1.0);
        }
    }
    out
}

/// `image` where `valid`, `fallback` elsewhere.
fn fill_invalid(mut image: Tensor, fallback: &Tensor, valid: &[bool]) -> Tensor {
    for (p, &v) in valid.iter().enumerate() {
        if !v {
            image.data_mut()[p * 3..p * 3 + 3].copy_from_slice(&fallback.data()[p * 3..p * 3 + 3]);
        }
    }
    image
}

/// Runs the fitting loop. Deterministic for a given scene and config.
pub fn fit_vdr(scene: &SyntheticScene, cfg: &FitConfig) -> Result<FitResult> {
    fit_vdr_with(scene, cfg, |_| {})
}

/// [`fit_vdr`] with a callback invoked after every logged step.
pub fn fit_vdr_with(scene: &SyntheticScene, cfg: &FitConfig, mut on_step: impl FnMut(&MetricRecord)) -> Result<FitResult> {
    cfg.validate()?;
    let mut model = VdRModel::new(&cfg.model_config(scene))?;
    let w = scene_conditioning(scene.spec.seed, cfg.w_dim);
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
        model.params(),
    );
    let ssim_cfg = SsimConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mpi = &scene.mpi;
    let size = scene.size();
    let mut log = MetricsLog::default();
    let mut initial_loss = None;

    for step in 0..cfg.steps {
        let p1 = cfg.draw_pose(scene, &mut rng)?;
        let p2 = cfg.draw_pose(scene, &mut rng)?;
        let sample_seed: u64 = rng.random();
        let (v1, v2) = (p1.view_direction(), p2.view_direction());

        let view1 = TargetView::new(mpi, &p1)?;
        let batch = sample_pixels(view1.weights(), mpi.depths(), cfg.rate, sample_seed)?;
        let prepared = prepare_batch(&model, &batch, &view1)?;
        let targets = batch_targets(scene, &view1, &batch, &v1)?;
        let base1 = view1.image()?;
        let base2 = render_mpi(mpi, &p2)?;
        let valid = reprojection_mask(&p2, &view1, mpi.depths())?;
        let psi_base = fill_invalid(reproject_image(&base2, &p2, &view1, mpi.depths())?, &base1, &valid);

        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let encoded = tape.leaf(model.encode_positions(&prepared.positions)?);
        let g = bound.position_forward(&mut tape, encoded)?;
        let in1 = tape.leaf(model.view_input(&v1, &w)?);
        let in2 = tape.leaf(model.view_input(&v2, &w)?);
        let h1 = bound.view_forward(&mut tape, in1)?;
        let h2 = bound.view_forward(&mut tape, in2)?;
        let zeros = tape.leaf(Tensor::zeros(&[batch.len(), 3]));
        let corr1 = color_representation_on(&mut tape, g, h1, zeros)?;
        let corr2 = color_representation_on(&mut tape, g, h2, zeros)?;

        let g0 = tape.leaf(prepared.g0.clone());
        let pred = tape.add(corr1, g0)?;
        let gt = tape.leaf(targets);
        let mse = if batch.is_empty() {
            tape.leaf(Tensor::scalar(0.0))
        } else {
            tape.mse(pred, gt)?
        };

        let s1 = scatter_on(&mut tape, corr1, &batch, size);
        let s2 = scatter_on(&mut tape, corr2, &batch, size);
        let b1 = tape.leaf(base1);
        let b2 = tape.leaf(psi_base);
        let i1 = tape.add(b1, s1)?;
        // pixels without a valid reprojection copy I_p1, so they cancel in L_vc
        let keep = tape.leaf(mask_image(&valid, size, true));
        let fill = tape.leaf(mask_image(&valid, size, false));
        let s2 = tape.mul(keep, s2)?;
        let s1_fill = tape.mul(fill, s1)?;
        let s2 = tape.add(s2, s1_fill)?;
        let ipsi = tape.add(b2, s2)?;
        let lvc = view_consistency_on(&mut tape, i1, ipsi, cfg.delta, &ssim_cfg)?;
        let weighted = tape.scale(lvc, cfg.lambda);
        let loss = tape.add(mse, weighted)?;

        let (mse_v, lvc_v, loss_v) = (
            tape.value(mse).data()[0],
            tape.value(lvc).data()[0],
            tape.value(loss).data()[0],
        );
        let reference = *initial_loss.get_or_insert(loss_v);
        let limit = DIVERGENCE_FACTOR * reference;
        if !loss_v.is_finite() || loss_v > limit {
            return Err(Error::Divergence {
                step,
                loss: loss_v,
                limit,
            });
        }
        let grads = tape.backward(loss)?;
        model.zero_grad();
        model.accumulate_grads(&bound, &grads)?;
        let grad_norm = model.params().map(|p| p.grad.squared_norm()).sum::<f64>().sqrt();
        let record = MetricRecord {
            step,
            mse: mse_v,
            lvc: lvc_v,
            grad_norm,
        };
        on_step(&record);
        log.records.push(record);
        adam.set_lr(cfg.schedule.rate(cfg.learning_rate, step, cfg.steps));
        adam.step(&mut model.params_mut())?;
    }
    Ok(FitResult {
        model,
        log,
        conditioning: w,
    })
}

/// Model predictions against ground truth on points and views not used for fitting.
#[derive(Debug, Clone)]
pub struct HeldOutReport {
    /// Rows: points × RGB channels, columns: views.
    pub truth: DMatrix<f64>,
    pub prediction: DMatrix<f64>,
    pub model_mse: f64,
    /// Best rank-`N` error on `truth`, per entry.
    pub oracle_mse: f64,
}

/// Canonical points visible at the canonical pose: pixel centers on the
/// plane with the largest compositing weight.
pub fn visible_points(scene: &SyntheticScene, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let mpi = &scene.mpi;
    let n = scene.size() * scene.size();
    let weights = crate::mpi::compositing_weights(mpi.alphas())?;
    let mask = candidate_mask(&weights);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = rand::seq::index::sample(&mut rng, n, count.min(n)).into_vec();
    let mut out = Vec::with_capacity(pixels.len());
    for p in pixels {
        let mut best = (0, f64::NEG_INFINITY);
        for plane in 0..mpi.planes() {
            let a = weights.tensor().data()[plane * n + p];
            if mask[plane * n + p] && a > best.1 {
                best = (plane, a);
            }
        }
        out.push((p, best.0));
    }
    Ok(out)
}

/// Ground-truth residuals `R(q, v_k) − g0(q)` on visible canonical points
/// (rows: point × RGB) and views drawn from the fit's pose sampler (columns).
#[derive(Debug, Clone)]
pub struct ResidualSamples {
    /// `(pixel, plane)` per point.
    pub points: Vec<(usize, usize)>,
    pub poses: Vec<CameraPose>,
    pub matrix: DMatrix<f64>,
}

pub fn residual_samples(scene: &SyntheticScene, cfg: &FitConfig, points: usize, views: usize, seed: u64) -> Result<ResidualSamples> {
    if points == 0 || views == 0 {
        return Err(Error::invalid("residual_samples", "need at least one point and one view"));
    }
    let pts = visible_points(scene, points, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed_beef);
    let poses: Vec<CameraPose> = (0..views).map(|_| cfg.draw_pose(scene, &mut rng)).collect::<Result<_>>()?;
    let base = scene.mpi.plane_rgb(0);
    let mut matrix = DMatrix::zeros(pts.len() * 3, views);
    for (k, pose) in poses.iter().enumerate() {
        let texture = scene.radiance_texture(&pose.view_direction());
        for (i, &(p, _)) in pts.iter().enumerate() {
            for ch in 0..3 {
                matrix[(i * 3 + ch, k)] = texture.data()[p * 3 + ch] - base[p * 3 + ch];
            }
        }
    }
    Ok(ResidualSamples {
        points: pts,
        poses,
        matrix,
    })
}

/// Model predictions against the residual matrix of [`residual_samples`].
pub fn heldout_evaluation(
    scene: &SyntheticScene,
    model: &VdRModel,
    cfg: &FitConfig,
    w: &[f64],
    points: usize,
    views: usize,
    seed: u64,
) -> Result<HeldOutReport> {
    let samples = residual_samples(scene, cfg, points, views, seed)?;
    let size = scene.size();
    let positions: Vec<[f64; 3]> = samples
        .points
        .iter()
        .map(|&(p, plane)| {
            let (x, y) = ((p % size) as f64 + 0.5, (p / size) as f64 + 0.5);
            normalize_position(x, y, scene.mpi.depths()[plane], size, model.near(), model.far())
        })
        .collect();
    let g = model.position_coefficients_batch(&positions)?;
    let rank = model.rank();
    let truth = samples.matrix;
    let mut prediction = DMatrix::zeros(truth.nrows(), truth.ncols());
    for (k, pose) in samples.poses.iter().enumerate() {
        let mut ctx = ViewContext::new(pose.view_direction(), w.to_vec())?;
        let h = ctx.h(model)?;
        for i in 0..samples.points.len() {
            let gi = &g.data()[i * 3 * rank..(i + 1) * 3 * rank];
            for ch in 0..3 {
                prediction[(i * 3 + ch, k)] = (0..rank).map(|n| gi[n * 3 + ch] * h[n]).sum::<f64>();
            }
        }
    }
    let entries = truth.len() as f64;
    let model_mse = (&prediction - &truth).norm_squared() / entries;
    let oracle_mse = svd_rank_oracle(&truth, rank)? / entries;
    Ok(HeldOutReport {
        truth,
        prediction,
        model_mse,
        oracle_mse,
    })
}

/// `L_vc` between the full view-dependent render at `p1` and the `p2` render
/// reprojected into `p1`.
pub fn pair_consistency(
    scene: &SyntheticScene,
    model: &VdRModel,
    field: &PositionField,
    w: &[f64],
    p1: &CameraPose,
    p2: &CameraPose,
    delta: f64,
) -> Result<f64> {
    let mpi = &scene.mpi;
    let h1 = ViewContext::new(p1.view_direction(), w.to_vec())?.h(model)?.to_vec();
    let h2 = ViewContext::new(p2.view_direction(), w.to_vec())?.h(model)?.to_vec();
    let i1 = field.render(mpi, &h1, p1)?;
    let i2 = field.render(mpi, &h2, p2)?;
    let view1 = TargetView::new(mpi, p1)?;
    let valid = reprojection_mask(p2, &view1, mpi.depths())?;
    let psi = fill_invalid(reproject_image(&i2, p2, &view1, mpi.depths())?, &i1, &valid);
    view_consistency_loss(&i1, &psi, delta, &SsimConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scene::{build_synthetic_mpi, SceneSpec};

    fn small() -> (SyntheticScene, FitConfig) {
        let scene = build_synthetic_mpi(&SceneSpec {
            resolution: 16,
            planes: 6,
            ..SceneSpec::default()
        })
        .unwrap();
        let cfg = FitConfig {
            steps: 8,
            rank: 2,
            position_hidden: 12,
            position_layers: 2,
            view_hidden: 6,
            view_layers: 2,
            ..FitConfig::default()
        };
        (scene, cfg)
    }

    #[test]
    fn cosine_schedule_runs_from_base_to_zero() {
        let s = LrSchedule::Cosine;
        assert_eq!(s.rate(2e-3, 0, 100), 2e-3);
        assert!((s.rate(2e-3, 50, 100) - 1e-3).abs() < 1e-15);
        assert!(s.rate(2e-3, 100, 100).abs() < 1e-18);
        assert_eq!(LrSchedule::Constant.rate(2e-3, 70, 100), 2e-3);
        assert_eq!(LrSchedule::parse(s.name()), Some(s));
    }

    #[test]
    fn log_has_one_record_per_step() {
        let (scene, cfg) = small();
        let fit = fit_vdr(&scene, &cfg).unwrap();
        let text = fit.log.to_text();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(MetricsLog::HEADER));
        assert_eq!(lines.count(), cfg.steps);
        assert!(fit.log.records.iter().all(|r| r.mse.is_finite() && r.lvc >= 0.0));
    }

    #[test]
    fn huge_step_size_reports_divergence() {
        let (scene, mut cfg) = small();
        cfg.steps = 200;
        cfg.learning_rate = 1e4;
        cfg.schedule = LrSchedule::Constant;
        assert!(matches!(fit_vdr(&scene, &cfg), Err(Error::Divergence { .. })));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            FitConfig { rank: 0, ..FitConfig::default() },
            FitConfig { rate: 0.0, ..FitConfig::default() },
            FitConfig { delta: 1.5, ..FitConfig::default() },
            FitConfig { yaw_range: 95.0, ..FitConfig::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
        assert!(FitConfig::default().validate().is_ok());
    }

    #[test]
    fn conditioning_is_seeded() {
        assert_eq!(scene_conditioning(3, 8), scene_conditioning(3, 8));
        assert_ne!(scene_conditioning(3, 8), scene_conditioning(4, 8));
        assert!(scene_conditioning(3, 8).iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
