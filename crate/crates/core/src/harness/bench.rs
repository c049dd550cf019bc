//! Renderer throughput at a fixed resolution over plane and worker counts.

use std::fmt::Write as _;
use std::time::Instant;

use super::fit::scene_conditioning;
use super::scene::{build_synthetic_mpi, SceneSpec};
use crate::diffcore::Tensor;
use crate::mpi::render_mpi;
use crate::vdr::{PositionField, VdRConfig, VdRModel, ViewContext};
use crate::{Error, Result};

/// Worker count needed before the parallel speedup is checked.
pub const SPEEDUP_MIN_CORES: usize = 8;
pub const SPEEDUP_TARGET: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub resolution: usize,
    pub planes: Vec<usize>,
    pub threads: Vec<usize>,
    /// Views rendered per measurement.
    pub frames: usize,
    pub rank: usize,
    pub position_hidden: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            resolution: 128,
            planes: vec![32, 96],
            threads: vec![1, 8],
            frames: 4,
            rank: 8,
            position_hidden: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRecord {
    pub planes: usize,
    pub threads: usize,
    /// Seconds to evaluate the position network over every plane pixel.
    pub setup_seconds: f64,
    pub render_fps: f64,
    pub expand_render_fps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupCheck {
    pub speedup: Option<f64>,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub resolution: usize,
    pub cores: usize,
    pub records: Vec<BenchRecord>,
    /// Whether every worker count produced bit-identical frames.
    pub pixel_identical: bool,
}

impl BenchReport {
    fn find(&self, planes: usize, threads: usize) -> Option<&BenchRecord> {
        self.records.iter().find(|r| r.planes == planes && r.threads == threads)
    }

    /// `render_fps(low) / render_fps(high)` at the smallest worker count.
    pub fn plane_ratio(&self, low: usize, high: usize) -> Option<f64> {
        let t = self.records.iter().map(|r| r.threads).min()?;
        Some(self.find(low, t)?.render_fps / self.find(high, t)?.render_fps)
    }

    pub fn speedup_check(&self, planes: usize) -> SpeedupCheck {
        let max_t = self.records.iter().map(|r| r.threads).max().unwrap_or(1);
        if self.cores < SPEEDUP_MIN_CORES || max_t < SPEEDUP_MIN_CORES {
            return SpeedupCheck {
                speedup: None,
                message: format!(
                    "skipped: parallel speedup needs >= {SPEEDUP_MIN_CORES} cores and workers, have {} cores",
                    self.cores
                ),
            };
        }
        match (self.find(planes, 1), self.find(planes, max_t)) {
            (Some(one), Some(many)) => {
                let s = many.render_fps / one.render_fps;
                SpeedupCheck {
                    speedup: Some(s),
                    message: format!("speedup {s:.2}x with {max_t} workers (target {SPEEDUP_TARGET}x)"),
                }
            }
            _ => SpeedupCheck {
                speedup: None,
                message: "skipped: no single-worker measurement".into(),
            },
        }
    }

    /// Tab-separated records with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("resolution\tplanes\tthreads\tsetup_s\trender_fps\texpand_render_fps\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{:.3}\t{:.3}",
                self.resolution, r.planes, r.threads, r.setup_seconds, r.render_fps, r.expand_render_fps
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("bench {}x{} on {} core(s)\n", self.resolution, self.resolution, self.cores);
        for r in &self.records {
            let _ = writeln!(
                out,
                "  L={:<3} workers={:<2} render {:>8.2} fps  expand+render {:>8.2} fps  setup {:.3}s",
                r.planes, r.threads, r.render_fps, r.expand_render_fps, r.setup_seconds
            );
        }
        let _ = writeln!(out, "  outputs identical across workers: {}", self.pixel_identical);
        let mut planes: Vec<usize> = self.records.iter().map(|r| r.planes).collect();
        planes.dedup();
        if let (Some(&lo), Some(&hi)) = (planes.iter().min(), planes.iter().max()) {
            if lo != hi {
                if let Some(ratio) = self.plane_ratio(lo, hi) {
                    let _ = writeln!(out, "  fps ratio L={lo} / L={hi}: {ratio:.2}");
                }
            }
            let _ = writeln!(out, "  {}", self.speedup_check(lo).message);
        }
        out
    }
}

fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.planes.is_empty() || cfg.threads.is_empty() || cfg.frames == 0 {
        return Err(Error::invalid("bench", "need plane counts, worker counts and at least one frame"));
    }
    if cfg.threads.contains(&0) {
        return Err(Error::invalid("bench", "worker counts must be positive"));
    }
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut records = Vec::new();
    let mut pixel_identical = true;
    for &planes in &cfg.planes {
        let spec = SceneSpec {
            resolution: cfg.resolution,
            planes,
            seed: cfg.seed,
            ..SceneSpec::default()
        };
        let scene = build_synthetic_mpi(&spec)?;
        let model = VdRModel::new(&VdRConfig {
            rank: cfg.rank,
            position_hidden: cfg.position_hidden,
            near: spec.near,
            far: spec.far,
            seed: cfg.seed,
            ..VdRConfig::default()
        })?;
        let w = scene_conditioning(cfg.seed, model.w_dim());
        let poses = (0..cfg.frames)
            .map(|k| {
                let t = if cfg.frames == 1 { 0.0 } else { k as f64 / (cfg.frames - 1) as f64 };
                spec.pose(-20.0 + 40.0 * t, 10.0 - 20.0 * t)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut reference: Option<Vec<Vec<u64>>> = None;
        for &threads in &cfg.threads {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::invalid("bench", e.to_string()))?;
            let (record, frames) = pool.install(|| -> Result<(BenchRecord, Vec<Vec<u64>>)> {
                let t0 = Instant::now();
                let field = PositionField::new(&model, &scene.mpi)?;
                let setup_seconds = t0.elapsed().as_secs_f64();

                let mut frames = Vec::new();
                let t0 = Instant::now();
                for pose in &poses {
                    frames.push(bits(&render_mpi(&scene.mpi, pose)?));
                }
                let render_fps = poses.len() as f64 / t0.elapsed().as_secs_f64();

                let t0 = Instant::now();
                for pose in &poses {
                    let h = ViewContext::new(pose.view_direction(), w.clone())?.h(&model)?.to_vec();
                    frames.push(bits(&field.render(&scene.mpi, &h, pose)?));
                }
                let expand_render_fps = poses.len() as f64 / t0.elapsed().as_secs_f64();
                Ok((
                    BenchRecord {
                        planes,
                        threads,
                        setup_seconds,
                        render_fps,
                        expand_render_fps,
                    },
                    frames,
                ))
            })?;
            match &reference {
                None => reference = Some(frames),
                Some(r) => pixel_identical &= *r == frames,
            }
            records.push(record);
        }
    }
    Ok(BenchReport {
        resolution: cfg.resolution,
        cores,
        records,
        pixel_identical,
    })
}
