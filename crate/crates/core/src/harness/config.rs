//! Flat `key = value` configuration files for scenes and fitting runs.
//!
//! Scene keys: `resolution planes near far specular_strength shininess
//! light_direction scene_seed`. Fit keys: `rank rate steps learning_rate
//! lr_schedule lambda delta yaw_range pitch_range w_dim position_hidden
//! position_layers view_hidden view_layers position_frame seed`.
//! Unknown keys are rejected.

use std::path::Path;

use nalgebra::Vector3;

use super::fit::{FitConfig, LrSchedule};
use super::scene::SceneSpec;
use crate::kv::KeyValues;
use crate::vdr::PositionFrame;
use crate::{Error, Result};

const SCENE_KEYS: &[&str] = &[
    "resolution",
    "planes",
    "near",
    "far",
    "specular_strength",
    "shininess",
    "light_direction",
    "scene_seed",
];

const FIT_KEYS: &[&str] = &[
    "rank",
    "rate",
    "steps",
    "learning_rate",
    "lr_schedule",
    "lambda",
    "delta",
    "yaw_range",
    "pitch_range",
    "w_dim",
    "position_hidden",
    "position_layers",
    "view_hidden",
    "view_layers",
    "position_frame",
    "seed",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub scene: SceneSpec,
    pub fit: FitConfig,
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply(&KeyValues::read(path)?, path)?;
        Ok(cfg)
    }

    /// Defaults, overridden by `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::read(p),
            None => Ok(Self::default()),
        }
    }

    pub fn apply(&mut self, kv: &KeyValues, path: &Path) -> Result<()> {
        if let Some(bad) = kv.keys().find(|k| !SCENE_KEYS.contains(k) && !FIT_KEYS.contains(k)) {
            return Err(Error::format("config", path, format!("unknown key `{bad}`")));
        }
        let s = &mut self.scene;
        macro_rules! take {
            ($target:expr, $key:literal) => {
                if let Some(v) = kv.parse_optional($key, path)? {
                    $target = v;
                }
            };
        }
        take!(s.resolution, "resolution");
        take!(s.planes, "planes");
        take!(s.near, "near");
        take!(s.far, "far");
        take!(s.specular_strength, "specular_strength");
        take!(s.shininess, "shininess");
        take!(s.seed, "scene_seed");
        if kv.get("light_direction").is_some() {
            let l: Vec<f64> = kv.parse_list("light_direction", path)?;
            if l.len() != 3 {
                return Err(Error::format("config", path, "light_direction needs three values"));
            }
            let v = Vector3::new(l[0], l[1], l[2]);
            if !(v.norm() > 0.0) {
                return Err(Error::format("config", path, "light_direction must be nonzero"));
            }
            s.light_direction = v.normalize();
        }

        let f = &mut self.fit;
        take!(f.rank, "rank");
        take!(f.rate, "rate");
        take!(f.steps, "steps");
        take!(f.learning_rate, "learning_rate");
        take!(f.lambda, "lambda");
        take!(f.delta, "delta");
        take!(f.yaw_range, "yaw_range");
        take!(f.pitch_range, "pitch_range");
        take!(f.w_dim, "w_dim");
        take!(f.position_hidden, "position_hidden");
        take!(f.position_layers, "position_layers");
        take!(f.view_hidden, "view_hidden");
        take!(f.view_layers, "view_layers");
        take!(f.seed, "seed");
        if let Some(name) = kv.get("lr_schedule") {
            f.schedule = LrSchedule::parse(name)
                .ok_or_else(|| Error::format("config", path, format!("unknown lr_schedule {name:?}")))?;
        }
        if let Some(name) = kv.get("position_frame") {
            f.frame = PositionFrame::parse(name)
                .ok_or_else(|| Error::format("config", path, format!("unknown position_frame {name:?}")))?;
        }
        Ok(())
    }

    /// Sets both the fit seed and the scene seed.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(seed) = seed {
            self.fit.seed = seed;
            self.scene.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.fit.validate()
    }

    pub fn to_kv(&self) -> KeyValues {
        let (s, f) = (&self.scene, &self.fit);
        let mut kv = KeyValues::new();
        kv.set("resolution", s.resolution);
        kv.set("planes", s.planes);
        kv.set("near", s.near);
        kv.set("far", s.far);
        kv.set("specular_strength", s.specular_strength);
        kv.set("shininess", s.shininess);
        kv.set_list("light_direction", s.light_direction.as_slice());
        kv.set("scene_seed", s.seed);
        kv.set("rank", f.rank);
        kv.set("rate", f.rate);
        kv.set("steps", f.steps);
        kv.set("learning_rate", f.learning_rate);
        kv.set("lr_schedule", f.schedule.name());
        kv.set("lambda", f.lambda);
        kv.set("delta", f.delta);
        kv.set("yaw_range", f.yaw_range);
        kv.set("pitch_range", f.pitch_range);
        kv.set("w_dim", f.w_dim);
        kv.set("position_hidden", f.position_hidden);
        kv.set("position_layers", f.position_layers);
        kv.set("view_hidden", f.view_hidden);
        kv.set("view_layers", f.view_layers);
        kv.set("position_frame", f.frame.name());
        kv.set("seed", f.seed);
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let mut cfg = RunConfig::default();
        cfg.scene.shininess = 40.0;
        cfg.fit.rank = 3;
        cfg.fit.schedule = LrSchedule::Constant;
        cfg.fit.frame = PositionFrame::Target;
        let text = cfg.to_kv().to_text();
        let mut back = RunConfig::default();
        back.apply(&KeyValues::parse(&text, Path::new("c")).unwrap(), Path::new("c")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_is_a_data_error() {
        let kv = KeyValues::parse("rnak = 3\n", Path::new("c")).unwrap();
        let err = RunConfig::default().apply(&kv, Path::new("c")).unwrap_err();
        assert!(err.is_data_error());
    }

    #[test]
    fn seed_sets_scene_and_fit() {
        let cfg = RunConfig::default().with_seed(Some(9));
        assert_eq!((cfg.fit.seed, cfg.scene.seed), (9, 9));
    }
}
