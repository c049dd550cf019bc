//! The two coefficient networks and the per-view context.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::Vector3;

use super::encoding::{check_normalized, encode_into, PosEncodingConfig};
use crate::diffcore::checkpoint::{get_mlp_spec, put_mlp_spec, read_checkpoint, write_checkpoint};
use crate::diffcore::{BoundMlp, Gradients, Mlp, MlpSpec, ParamArray, Tape, Tensor, Var};
use crate::kv::KeyValues;
use crate::{Error, Result};

pub const CHECKPOINT_KIND: &str = "vdr-model";

/// Frame in which the position network is queried.
///
/// `Canonical` evaluates `T_θ` at the canonical-frame point a target pixel
/// sees on its plane, so fitting and inference-time expansion query the same
/// function. `Target` feeds target-frame pixel coordinates directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PositionFrame {
    #[default]
    Canonical,
    Target,
}

impl PositionFrame {
    pub fn name(self) -> &'static str {
        match self {
            PositionFrame::Canonical => "canonical",
            PositionFrame::Target => "target",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "canonical" => Some(PositionFrame::Canonical),
            "target" => Some(PositionFrame::Target),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VdRConfig {
    pub rank: usize,
    pub encoding: PosEncodingConfig,
    pub w_dim: usize,
    pub position_hidden: usize,
    pub position_layers: usize,
    pub view_hidden: usize,
    pub view_layers: usize,
    pub near: f64,
    pub far: f64,
    pub frame: PositionFrame,
    pub seed: u64,
}

impl Default for VdRConfig {
    fn default() -> Self {
        VdRConfig {
            rank: 8,
            encoding: PosEncodingConfig::default(),
            w_dim: 8,
            position_hidden: 384,
            position_layers: 4,
            view_hidden: 64,
            view_layers: 3,
            near: 0.95,
            far: 1.12,
            frame: PositionFrame::Canonical,
            seed: 0,
        }
    }
}

impl VdRConfig {
    pub fn position_spec(&self) -> MlpSpec {
        MlpSpec::uniform(
            self.encoding.position_width(),
            self.position_hidden,
            3 * self.rank,
            self.position_layers,
            self.seed,
        )
    }

    pub fn view_spec(&self) -> MlpSpec {
        MlpSpec::uniform(
            self.encoding.direction_width() + self.w_dim,
            self.view_hidden,
            self.rank,
            self.view_layers,
            self.seed.wrapping_add(1),
        )
    }
}

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

/// Position network `T_θ` (encoded `q` to `N × 3` coefficients) and view
/// network `M_φ` (encoded `v` ⧺ `w` to `N` coefficients).
#[derive(Debug, Clone)]
pub struct VdRModel {
    rank: usize,
    encoding: PosEncodingConfig,
    w_dim: usize,
    near: f64,
    far: f64,
    frame: PositionFrame,
    position_net: Mlp,
    view_net: Mlp,
    stamp: u64,
}

impl VdRModel {
    pub fn new(config: &VdRConfig) -> Result<Self> {
        Self::from_nets(config, Mlp::new(config.position_spec())?, Mlp::new(config.view_spec())?)
    }

    /// All weights and biases zero: every coefficient is zero.
    pub fn zeros(config: &VdRConfig) -> Result<Self> {
        Self::from_nets(config, Mlp::zeros(config.position_spec())?, Mlp::zeros(config.view_spec())?)
    }

    /// Assembles a model from existing networks; widths must match `config`.
    pub fn from_nets(config: &VdRConfig, position_net: Mlp, view_net: Mlp) -> Result<Self> {
        if config.rank == 0 {
            return Err(Error::invalid("VdRModel", "rank must be positive"));
        }
        if !(config.near > 0.0 && config.near < config.far) {
            return Err(Error::invalid("VdRModel", "need 0 < near < far"));
        }
        let p = position_net.spec();
        let v = view_net.spec();
        if p.input_width() != config.encoding.position_width() || p.output_width() != 3 * config.rank {
            return Err(Error::invalid(
                "VdRModel",
                format!(
                    "position net must map {} -> {}, got {} -> {}",
                    config.encoding.position_width(),
                    3 * config.rank,
                    p.input_width(),
                    p.output_width()
                ),
            ));
        }
        if v.input_width() != config.encoding.direction_width() + config.w_dim || v.output_width() != config.rank {
            return Err(Error::invalid(
                "VdRModel",
                format!(
                    "view net must map {} -> {}, got {} -> {}",
                    config.encoding.direction_width() + config.w_dim,
                    config.rank,
                    v.input_width(),
                    v.output_width()
                ),
            ));
        }
        Ok(VdRModel {
            rank: config.rank,
            encoding: config.encoding,
            w_dim: config.w_dim,
            near: config.near,
            far: config.far,
            frame: config.frame,
            position_net,
            view_net,
            stamp: fresh_stamp(),
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn encoding(&self) -> &PosEncodingConfig {
        &self.encoding
    }

    pub fn w_dim(&self) -> usize {
        self.w_dim
    }

    pub fn near(&self) -> f64 {
        self.near
    }

    pub fn far(&self) -> f64 {
        self.far
    }

    pub fn frame(&self) -> PositionFrame {
        self.frame
    }

    pub fn position_net(&self) -> &Mlp {
        &self.position_net
    }

    pub fn view_net(&self) -> &Mlp {
        &self.view_net
    }

    /// Identifies the current parameter values; changes on every mutable access.
    pub fn revision(&self) -> u64 {
        self.stamp
    }

    pub fn position_net_mut(&mut self) -> &mut Mlp {
        self.stamp = fresh_stamp();
        &mut self.position_net
    }

    pub fn view_net_mut(&mut self) -> &mut Mlp {
        self.stamp = fresh_stamp();
        &mut self.view_net
    }

    /// Every trainable array of both networks, position net first.
    pub fn params_mut(&mut self) -> Vec<&mut ParamArray> {
        self.stamp = fresh_stamp();
        self.position_net
            .params_mut()
            .iter_mut()
            .chain(self.view_net.params_mut().iter_mut())
            .collect()
    }

    pub fn params(&self) -> impl Iterator<Item = &ParamArray> {
        self.position_net.params().iter().chain(self.view_net.params())
    }

    pub fn zero_grad(&mut self) {
        self.position_net.zero_grad();
        self.view_net.zero_grad();
    }

    pub fn config(&self) -> VdRConfig {
        let p = self.position_net.spec();
        let v = self.view_net.spec();
        VdRConfig {
            rank: self.rank,
            encoding: self.encoding,
            w_dim: self.w_dim,
            position_hidden: p.layer_widths.get(1).copied().unwrap_or(0),
            position_layers: p.num_layers(),
            view_hidden: v.layer_widths.get(1).copied().unwrap_or(0),
            view_layers: v.num_layers(),
            near: self.near,
            far: self.far,
            frame: self.frame,
            seed: p.seed,
        }
    }

    /// Encoded position rows `[n, position_width]`; every `q` must be normalized.
    pub fn encode_positions(&self, q: &[[f64; 3]]) -> Result<Tensor> {
        let width = self.encoding.position_width();
        let mut data = Vec::with_capacity(q.len() * width);
        for p in q {
            check_normalized(p)?;
            encode_into(p, self.encoding.position_frequencies, self.encoding.include_raw_input, &mut data);
        }
        Tensor::from_vec(&[q.len(), width], data)
    }

    /// `g` for each `q` as `[n, 3N]`, coefficient `n` of channel `c` at `n·3 + c`.
    pub fn position_coefficients_batch(&self, q: &[[f64; 3]]) -> Result<Tensor> {
        self.position_net.forward(&self.encode_positions(q)?)
    }

    pub fn position_coefficients(&self, q: [f64; 3]) -> Result<Vec<f64>> {
        Ok(self.position_coefficients_batch(&[q])?.into_data())
    }

    /// Encoded `v` ⧺ `w` as a single row.
    pub fn view_input(&self, direction: &Vector3<f64>, w: &[f64]) -> Result<Tensor> {
        check_direction(direction)?;
        if w.len() != self.w_dim {
            return Err(Error::shape("view_coefficients", &[self.w_dim], &[w.len()]));
        }
        let mut data = Vec::with_capacity(self.encoding.direction_width() + w.len());
        encode_into(
            direction.as_slice(),
            self.encoding.direction_frequencies,
            self.encoding.include_raw_input,
            &mut data,
        );
        data.extend_from_slice(w);
        let width = data.len();
        Tensor::from_vec(&[1, width], data)
    }

    /// `h = M_φ(encode(v) ⧺ w)`, evaluated without caching.
    pub fn view_coefficients(&self, direction: &Vector3<f64>, w: &[f64]) -> Result<Vec<f64>> {
        Ok(self.view_net.forward(&self.view_input(direction, w)?)?.into_data())
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundVdR {
        BoundVdR {
            position: self.position_net.bind(tape),
            view: self.view_net.bind(tape),
        }
    }

    pub fn accumulate_grads(&mut self, bound: &BoundVdR, grads: &Gradients) -> Result<()> {
        self.position_net.accumulate_grads(&bound.position, grads)?;
        self.view_net.accumulate_grads(&bound.view, grads)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut header = KeyValues::new();
        header.set("kind", CHECKPOINT_KIND);
        header.set("rank", self.rank);
        header.set("position_frequencies", self.encoding.position_frequencies);
        header.set("direction_frequencies", self.encoding.direction_frequencies);
        header.set("include_raw_input", self.encoding.include_raw_input);
        header.set("w_dim", self.w_dim);
        header.set("near", self.near);
        header.set("far", self.far);
        header.set("position_frame", self.frame.name());
        put_mlp_spec(&mut header, "position_net.", self.position_net.spec());
        put_mlp_spec(&mut header, "view_net.", self.view_net.spec());
        let arrays: Vec<&Tensor> = self.params().map(|p| &p.value).collect();
        write_checkpoint(path, &header, &arrays)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, arrays) = read_checkpoint(path)?;
        if header.get("kind") != Some(CHECKPOINT_KIND) {
            return Err(Error::format("checkpoint", path, "not a model checkpoint"));
        }
        let frame_name = header.require("position_frame", path)?;
        let frame = PositionFrame::parse(frame_name)
            .ok_or_else(|| Error::format("checkpoint", path, format!("unknown position frame {frame_name:?}")))?;
        let pspec = get_mlp_spec(&header, "position_net.", path)?;
        let vspec = get_mlp_spec(&header, "view_net.", path)?;
        let np = 2 * pspec.num_layers();
        if arrays.len() != np + 2 * vspec.num_layers() {
            return Err(Error::format("checkpoint", path, "array count does not match the network specs"));
        }
        let mut arrays = arrays;
        let view_arrays = arrays.split_off(np);
        let bad = |e: Error| Error::format("checkpoint", path, e.to_string());
        let position_net = Mlp::from_params(pspec.clone(), arrays).map_err(bad)?;
        let view_net = Mlp::from_params(vspec.clone(), view_arrays).map_err(bad)?;
        let config = VdRConfig {
            rank: header.parse_value("rank", path)?,
            encoding: PosEncodingConfig {
                position_frequencies: header.parse_value("position_frequencies", path)?,
                direction_frequencies: header.parse_value("direction_frequencies", path)?,
                include_raw_input: header.parse_value("include_raw_input", path)?,
            },
            w_dim: header.parse_value("w_dim", path)?,
            position_hidden: pspec.layer_widths.get(1).copied().unwrap_or(0),
            position_layers: pspec.num_layers(),
            view_hidden: vspec.layer_widths.get(1).copied().unwrap_or(0),
            view_layers: vspec.num_layers(),
            near: header.parse_value("near", path)?,
            far: header.parse_value("far", path)?,
            frame,
            seed: pspec.seed,
        };
        Self::from_nets(&config, position_net, view_net).map_err(bad)
    }
}

fn check_direction(v: &Vector3<f64>) -> Result<()> {
    let norm = v.norm();
    if !((norm - 1.0).abs() <= 1e-6) {
        return Err(Error::invalid("view_coefficients", format!("direction must be unit length, |v| = {norm}")));
    }
    Ok(())
}

/// Both networks' parameters recorded on a tape.
#[derive(Debug, Clone)]
pub struct BoundVdR {
    pub position: BoundMlp,
    pub view: BoundMlp,
}

impl BoundVdR {
    pub fn position_forward(&self, tape: &mut Tape, encoded: Var) -> Result<Var> {
        self.position.forward(tape, encoded)
    }

    pub fn view_forward(&self, tape: &mut Tape, view_input: Var) -> Result<Var> {
        self.view.forward(tape, view_input)
    }
}

/// A viewing direction, conditioning vector and the cached view coefficients.
#[derive(Debug, Clone)]
pub struct ViewContext {
    direction: Vector3<f64>,
    w: Vec<f64>,
    cached: Option<(u64, Vec<f64>)>,
}

impl ViewContext {
    /// Rejects directions that are not unit length within `1e-6`.
    pub fn new(direction: Vector3<f64>, w: Vec<f64>) -> Result<Self> {
        check_direction(&direction)?;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ViewContext"));
        }
        Ok(ViewContext {
            direction,
            w,
            cached: None,
        })
    }

    pub fn direction(&self) -> &Vector3<f64> {
        &self.direction
    }

    pub fn conditioning(&self) -> &[f64] {
        &self.w
    }

    pub fn cached_h(&self) -> Option<&[f64]> {
        self.cached.as_ref().map(|(_, h)| h.as_slice())
    }

    /// View coefficients for `model`, reusing the cache while the model's
    /// parameters are unchanged.
    pub fn h(&mut self, model: &VdRModel) -> Result<&[f64]> {
        let stale = !matches!(&self.cached, Some((rev, _)) if *rev == model.revision());
        if stale {
            let h = model.view_coefficients(&self.direction, &self.w)?;
            self.cached = Some((model.revision(), h));
        }
        Ok(self.cached.as_ref().map(|(_, h)| h.as_slice()).unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(rank: usize, w_dim: usize) -> VdRConfig {
        VdRConfig {
            rank,
            w_dim,
            position_hidden: 5,
            position_layers: 2,
            view_hidden: 4,
            view_layers: 2,
            near: 1.0,
            far: 2.0,
            seed: 7,
            ..VdRConfig::default()
        }
    }

    #[test]
    fn default_shapes() {
        let cfg = VdRConfig::default();
        assert_eq!(cfg.position_spec().layer_widths, vec![63, 384, 384, 384, 24]);
        assert_eq!(cfg.view_spec().layer_widths, vec![35, 64, 64, 8]);
    }

    #[test]
    fn zero_model_gives_zero_coefficients() {
        let m = VdRModel::zeros(&tiny(3, 2)).unwrap();
        assert!(m.position_coefficients([0.1, -0.3, 0.5]).unwrap().iter().all(|&g| g == 0.0));
        let h = m.view_coefficients(&Vector3::new(0.0, 0.0, -1.0), &[0.5, 0.5]).unwrap();
        assert_eq!(h, vec![0.0; 3]);
    }

    #[test]
    fn rejects_unnormalized_inputs() {
        let m = VdRModel::new(&tiny(2, 1)).unwrap();
        assert!(m.position_coefficients([1.5, 0.0, 0.0]).is_err());
        assert!(m.view_coefficients(&Vector3::new(0.0, 0.0, -2.0), &[0.0]).is_err());
        assert!(m.view_coefficients(&Vector3::new(0.0, 0.0, -1.0), &[0.0, 1.0]).is_err());
        assert!(ViewContext::new(Vector3::new(0.1, 0.0, 0.0), vec![]).is_err());
    }

    #[test]
    fn cache_matches_fresh_evaluation_and_tracks_updates() {
        let mut m = VdRModel::new(&tiny(2, 2)).unwrap();
        let v = Vector3::new(0.6, 0.0, -0.8);
        let mut ctx = ViewContext::new(v, vec![0.2, -0.4]).unwrap();
        let first = ctx.h(&m).unwrap().to_vec();
        assert_eq!(first, m.view_coefficients(&v, &[0.2, -0.4]).unwrap());
        assert_eq!(ctx.h(&m).unwrap(), first.as_slice());
        m.view_net_mut().params_mut()[1].value.data_mut()[0] += 1.0;
        let updated = ctx.h(&m).unwrap().to_vec();
        assert_ne!(updated, first);
        assert_eq!(updated, m.view_coefficients(&v, &[0.2, -0.4]).unwrap());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let m = VdRModel::new(&VdRConfig {
            frame: PositionFrame::Target,
            ..tiny(3, 2)
        })
        .unwrap();
        m.save(&path).unwrap();
        let back = VdRModel::load(&path).unwrap();
        assert_eq!(back.config(), m.config());
        let q = [0.25, -0.5, 0.1];
        let a = m.position_coefficients(q).unwrap();
        let b = back.position_coefficients(q).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}
