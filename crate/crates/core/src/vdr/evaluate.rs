//! Evaluating the rank-N color representation on sampled pixels and over
//! whole MPIs.

use rayon::prelude::*;

use super::encoding::normalize_position;
use super::model::{BoundVdR, PositionFrame, ViewContext, VdRModel};
use crate::diffcore::{Tape, Tensor, Var};
use crate::mpi::{render_planes, CameraPose, Mpi, TargetView};
use crate::sampling::SampleBatch;
use crate::{Error, Result};

/// Rows per position-network call when evaluating whole planes.
const CHUNK_ROWS: usize = 1024;

/// `s_c = g0_c + Σ_n g[n·C + c] · h[n]` for `C = g0.len()` channels.
pub fn color_representation(g0: &[f64], g: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    let c = g0.len();
    if g.len() != h.len() * c {
        return Err(Error::shape("color_representation", &[h.len() * c], &[g.len()]));
    }
    Ok((0..c).map(|ch| g0[ch] + correction(g, h, c, ch)).collect())
}

#[inline]
fn correction(g: &[f64], h: &[f64], channels: usize, ch: usize) -> f64 {
    let mut acc = 0.0;
    for (n, hn) in h.iter().enumerate() {
        acc += g[n * channels + ch] * hn;
    }
    acc
}

/// Inference-time color: the representation clamped to `[0, 1]`.
#[inline]
fn corrected_rgb(rgb: &[f64], g: &[f64], h: &[f64], out: &mut [f64; 3]) {
    for ch in 0..3 {
        out[ch] = (rgb[ch] + correction(g, h, 3, ch)).clamp(0.0, 1.0);
    }
}

/// Normalized positions and `g0` values for a batch sampled in a target view.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub positions: Vec<[f64; 3]>,
    /// `[n, 3]`
    pub g0: Tensor,
}

impl PreparedBatch {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Looks up `g0` (the warped canonical RGB) for every entry and computes the
/// position-network query point in the model's frame.
pub fn prepare_batch(model: &VdRModel, batch: &SampleBatch, view: &TargetView) -> Result<PreparedBatch> {
    let size = view.size();
    let s = size as f64;
    let mut positions = Vec::with_capacity(batch.len());
    let mut g0 = Vec::with_capacity(batch.len() * 3);
    for e in &batch.entries {
        if e.plane >= view.planes() || e.x >= size || e.y >= size {
            return Err(Error::invalid("evaluate_batch", format!("entry {e:?} is outside the target view")));
        }
        let pixel = (e.x as f64 + 0.5, e.y as f64 + 0.5);
        let (x, y) = match model.frame() {
            PositionFrame::Target => pixel,
            PositionFrame::Canonical => match view.canonical_position(e.plane, e.y, e.x) {
                Some((u, v)) => (u.clamp(0.0, s), v.clamp(0.0, s)),
                None => pixel,
            },
        };
        positions.push(normalize_position(x, y, e.depth, size, model.near(), model.far()));
        g0.extend_from_slice(&view.rgb_at(e.plane, e.y, e.x));
    }
    let n = positions.len();
    Ok(PreparedBatch {
        positions,
        g0: Tensor::from_vec(&[n, 3], g0)?,
    })
}

/// `[n, 3]` colors from prepared entries and view coefficients `h`.
pub fn evaluate_prepared(model: &VdRModel, prepared: &PreparedBatch, h: &[f64]) -> Result<Tensor> {
    let n = prepared.len();
    if n == 0 {
        return Ok(Tensor::zeros(&[0, 3]));
    }
    let g = model.position_coefficients_batch(&prepared.positions)?;
    let width = 3 * model.rank();
    let mut out = Vec::with_capacity(n * 3);
    for (row, g0) in g.data().chunks(width).zip(prepared.g0.data().chunks(3)) {
        out.extend(color_representation(g0, row, h)?);
    }
    Tensor::from_vec(&[n, 3], out)
}

/// Per-entry `s^q(v)` with one shared `h` from `ctx` and per-entry `g`.
pub fn evaluate_batch(model: &VdRModel, batch: &SampleBatch, ctx: &mut ViewContext, view: &TargetView) -> Result<Tensor> {
    let prepared = prepare_batch(model, batch, view)?;
    let h = ctx.h(model)?.to_vec();
    evaluate_prepared(model, &prepared, &h)
}

/// Records `s = g0 + Σ_n g_n h_n` with `g: [n, 3N]`, `h: [1, N]`, `g0: [n, 3]`.
pub fn color_representation_on(tape: &mut Tape, g: Var, h: Var, g0: Var) -> Result<Var> {
    let (gs, hs, g0s) = (tape.value(g).shape(), tape.value(h).shape(), tape.value(g0).shape());
    let rank = hs.last().copied().unwrap_or(0);
    let n = g0s.first().copied().unwrap_or(0);
    if hs.iter().product::<usize>() != rank || gs != [n, 3 * rank] || g0s != [n, 3] {
        return Err(Error::invalid(
            "color_representation",
            format!("incompatible shapes g {gs:?}, h {hs:?}, g0 {g0s:?}"),
        ));
    }
    let (gv, hv, g0v) = (tape.value(g), tape.value(h), tape.value(g0));
    let mut out = Vec::with_capacity(n * 3);
    for (row, base) in gv.data().chunks(3 * rank).zip(g0v.data().chunks(3)) {
        out.extend(color_representation(base, row, hv.data())?);
    }
    let value = Tensor::from_vec(&[n, 3], out)?;
    Ok(tape.custom(
        &[g, h, g0],
        value,
        Box::new(move |grad, inputs| {
            let (gv, hv) = (inputs[0], inputs[1]);
            let gs = grad.data();
            let mut dg = Tensor::zeros(gv.shape());
            let mut dh = Tensor::zeros(hv.shape());
            for i in 0..n {
                for k in 0..rank {
                    for c in 0..3 {
                        let idx = i * 3 * rank + k * 3 + c;
                        dg.data_mut()[idx] = gs[i * 3 + c] * hv.data()[k];
                        dh.data_mut()[k] += gs[i * 3 + c] * gv.data()[idx];
                    }
                }
            }
            vec![dg, dh, grad.clone()]
        }),
    ))
}

/// Recorded batch evaluation; gradients reach both networks.
///
/// `view_input` is the encoded direction and conditioning row from
/// [`VdRModel::view_input`].
pub fn evaluate_on(tape: &mut Tape, model: &VdRModel, bound: &BoundVdR, prepared: &PreparedBatch, view_input: &Tensor) -> Result<Var> {
    let encoded = tape.leaf(model.encode_positions(&prepared.positions)?);
    let g = bound.position_forward(tape, encoded)?;
    let vin = tape.leaf(view_input.clone());
    let h = bound.view_forward(tape, vin)?;
    let g0 = tape.leaf(prepared.g0.clone());
    color_representation_on(tape, g, h, g0)
}

/// Image-agnostic position coefficients for every canonical pixel of every
/// plane, `[L, H, W, 3N]`. Computed once per model and MPI geometry.
#[derive(Debug, Clone)]
pub struct PositionField {
    planes: usize,
    size: usize,
    rank: usize,
    revision: u64,
    g: Vec<f64>,
}

fn canonical_points(model: &VdRModel, mpi: &Mpi) -> Vec<[f64; 3]> {
    let size = mpi.size();
    let mut pts = Vec::with_capacity(mpi.planes() * size * size);
    for &d in mpi.depths() {
        for row in 0..size {
            for col in 0..size {
                pts.push(normalize_position(
                    col as f64 + 0.5,
                    row as f64 + 0.5,
                    d,
                    size,
                    model.near(),
                    model.far(),
                ));
            }
        }
    }
    pts
}

impl PositionField {
    pub fn new(model: &VdRModel, mpi: &Mpi) -> Result<Self> {
        let pts = canonical_points(model, mpi);
        let chunks: Vec<Tensor> = pts
            .par_chunks(CHUNK_ROWS)
            .map(|c| model.position_coefficients_batch(c))
            .collect::<Result<_>>()?;
        let g = chunks.into_iter().flat_map(Tensor::into_data).collect();
        Ok(PositionField {
            planes: mpi.planes(),
            size: mpi.size(),
            rank: model.rank(),
            revision: model.revision(),
            g,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// The model revision this field was computed from.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Coefficients of canonical pixel `pixel` (row-major) on `plane`.
    pub fn coefficients(&self, plane: usize, pixel: usize) -> &[f64] {
        let w = 3 * self.rank;
        let base = (plane * self.size * self.size + pixel) * w;
        &self.g[base..base + w]
    }

    fn check(&self, mpi: &Mpi, h: &[f64]) -> Result<()> {
        if mpi.planes() != self.planes || mpi.size() != self.size {
            return Err(Error::shape("PositionField", &[self.planes, self.size], &[mpi.planes(), mpi.size()]));
        }
        if h.len() != self.rank {
            return Err(Error::shape("PositionField", &[self.rank], &[h.len()]));
        }
        Ok(())
    }

    /// `C'(x, y, i) = clamp(C(x, y) + Σ_n g_n(x, y, d_i) h_n)` as `[L, H, W, 3]`.
    pub fn expand(&self, mpi: &Mpi, h: &[f64]) -> Result<Tensor> {
        self.check(mpi, h)?;
        let n = self.size * self.size;
        let mut out = Tensor::zeros(&[self.planes, self.size, self.size, 3]);
        out.data_mut().par_chunks_mut(n * 3).enumerate().for_each(|(plane, dst)| {
            let rgb = mpi.plane_rgb(plane);
            let mut c = [0.0; 3];
            for p in 0..n {
                corrected_rgb(&rgb[p * 3..p * 3 + 3], self.coefficients(plane, p), h, &mut c);
                dst[p * 3..p * 3 + 3].copy_from_slice(&c);
            }
        });
        Ok(out)
    }

    /// Renders the expanded MPI at `pose` without materializing the volume.
    /// Bit-identical to rendering the output of [`PositionField::expand`].
    pub fn render(&self, mpi: &Mpi, h: &[f64], pose: &CameraPose) -> Result<Tensor> {
        self.check(mpi, h)?;
        render_planes(mpi.alphas(), mpi.depths(), pose, mpi.size(), |plane, pixel, out| {
            let rgb = mpi.plane_rgb(plane);
            corrected_rgb(&rgb[pixel * 3..pixel * 3 + 3], self.coefficients(plane, pixel), h, out);
        })
    }
}

/// The view-dependent color volume for `ctx`, `[L, H, W, 3]`.
pub fn expand_view_dependent_mpi(model: &VdRModel, mpi: &Mpi, ctx: &mut ViewContext) -> Result<Tensor> {
    let h = ctx.h(model)?.to_vec();
    PositionField::new(model, mpi)?.expand(mpi, &h)
}

/// Expansion followed by rendering at `pose`.
pub fn render_view_dependent(model: &VdRModel, mpi: &Mpi, ctx: &mut ViewContext, pose: &CameraPose) -> Result<Tensor> {
    let h = ctx.h(model)?.to_vec();
    PositionField::new(model, mpi)?.render(mpi, &h, pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpi::{compositing_weights, composite, Intrinsics, PlaneColors};
    use crate::sampling::sample_pixels;
    use crate::vdr::VdRConfig;
    use nalgebra::Vector3;

    #[test]
    fn zero_view_coefficients_leave_g0() {
        assert_eq!(color_representation(&[0.1, 0.2, 0.3], &[5.0; 6], &[0.0, 0.0]).unwrap(), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn scalar_sum_of_products() {
        let s = color_representation(&[0.5], &[0.2, -0.1], &[1.0, 2.0]).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15);
        assert_eq!(color_representation(&[0.0], &[1.0], &[0.25]).unwrap(), vec![0.25]);
        assert!(color_representation(&[0.0], &[1.0, 2.0], &[0.25]).is_err());
    }

    fn tiny_config() -> VdRConfig {
        VdRConfig {
            rank: 2,
            w_dim: 2,
            position_hidden: 6,
            position_layers: 2,
            view_hidden: 5,
            view_layers: 2,
            near: 1.0,
            far: 2.0,
            seed: 3,
            ..VdRConfig::default()
        }
    }

    fn tiny_mpi() -> Mpi {
        let h = 4;
        let rgb = (0..h * h * 3).map(|i| (i % 7) as f64 / 6.0).collect();
        let alpha = (0..2 * h * h).map(|i| ((i * 3) % 5) as f64 / 4.0).collect();
        Mpi::new(
            PlaneColors::Shared(Tensor::from_vec(&[h, h, 3], rgb).unwrap()),
            Tensor::from_vec(&[2, h, h], alpha).unwrap(),
            vec![1.0, 2.0],
        )
        .unwrap()
        .with_far_plane_opaque()
    }

    #[test]
    fn zero_model_expansion_replicates_colors() {
        let mpi = tiny_mpi();
        let model = VdRModel::zeros(&tiny_config()).unwrap();
        let mut ctx = ViewContext::new(Vector3::new(0.0, 0.0, -1.0), vec![0.3, 0.1]).unwrap();
        let vol = expand_view_dependent_mpi(&model, &mpi, &mut ctx).unwrap();
        assert_eq!(vol, mpi.color_volume());
    }

    #[test]
    fn streamed_render_matches_expanded_render() {
        let mpi = tiny_mpi();
        let model = VdRModel::new(&tiny_config()).unwrap();
        let mut ctx = ViewContext::new(Vector3::new(0.0, 0.6, -0.8), vec![0.3, 0.1]).unwrap();
        let pose = CameraPose::identity(Intrinsics::default_for(4));
        let vol = expand_view_dependent_mpi(&model, &mpi, &mut ctx).unwrap();
        let direct = composite(&vol, &compositing_weights(mpi.alphas()).unwrap()).unwrap();
        assert_eq!(render_view_dependent(&model, &mpi, &mut ctx, &pose).unwrap(), direct);
    }

    #[test]
    fn zero_model_batch_returns_g0() {
        let mpi = tiny_mpi();
        let model = VdRModel::zeros(&tiny_config()).unwrap();
        let pose = CameraPose::orbit(5.0, 0.0, 1.3, Intrinsics::default_for(4)).unwrap();
        let view = TargetView::new(&mpi, &pose).unwrap();
        let batch = sample_pixels(view.weights(), mpi.depths(), 1.0, 0).unwrap();
        let mut ctx = ViewContext::new(Vector3::new(0.0, 0.0, -1.0), vec![0.0, 0.0]).unwrap();
        let out = evaluate_batch(&model, &batch, &mut ctx, &view).unwrap();
        for (e, row) in batch.entries.iter().zip(out.data().chunks(3)) {
            assert_eq!(row, view.rgb_at(e.plane, e.y, e.x));
        }
        let empty = SampleBatch {
            entries: vec![],
            rate: 1.0,
            seed: 0,
        };
        assert_eq!(evaluate_batch(&model, &empty, &mut ctx, &view).unwrap().shape(), &[0, 3]);
    }
}
