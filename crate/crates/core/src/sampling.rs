//! Alpha-guided pixel sampling.
//!
//! A pixel of plane `i` is a candidate when its compositing weight is
//! strictly positive, i.e. the plane has some opacity there and no nearer
//! plane is fully opaque. Each plane then contributes `⌈ρ·n_i⌉` of its `n_i`
//! candidates, drawn uniformly without replacement from a stream derived
//! from `(seed, i)`.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::mpi::io::save_mask_png;
use crate::mpi::AlphaWeights;
use crate::{Error, Result};

/// Fraction of candidates sampled per plane at 256² and 512².
pub const DEFAULT_SAMPLING_RATE: f64 = 0.06;
/// Fraction used at 1024².
pub const HIGH_RES_SAMPLING_RATE: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleEntry {
    pub x: usize,
    pub y: usize,
    pub plane: usize,
    pub depth: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub entries: Vec<SampleEntry>,
    pub rate: f64,
    pub seed: u64,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry counts per plane.
    pub fn plane_counts(&self, planes: usize) -> Vec<usize> {
        let mut counts = vec![0; planes];
        for e in &self.entries {
            counts[e.plane] += 1;
        }
        counts
    }

    /// One `i x y d_i A_i` line per entry.
    pub fn to_debug_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{} {} {} {} {}", e.plane, e.x, e.y, e.depth, e.weight);
        }
        out
    }
}

/// `mask[(i·H + y)·W + x] = A_i(x, y) > 0`.
pub fn candidate_mask(weights: &AlphaWeights) -> Vec<bool> {
    weights.tensor().data().iter().map(|&a| a > 0.0).collect()
}

/// `⌈rate · n⌉`, tolerant of rounding in the product (`0.06 · 100` is 6).
pub fn plane_sample_count(candidates: usize, rate: f64) -> usize {
    if candidates == 0 {
        return 0;
    }
    let raw = (rate * candidates as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(candidates)
}

fn check_rate(rate: f64) -> Result<()> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::invalid("sample_pixels", format!("rate must be in (0, 1], got {rate}")));
    }
    Ok(())
}

/// Draws a balanced per-plane subset of the candidates of `weights`.
pub fn sample_pixels(weights: &AlphaWeights, depths: &[f64], rate: f64, seed: u64) -> Result<SampleBatch> {
    check_rate(rate)?;
    let (planes, h, w) = (weights.planes(), weights.height(), weights.width());
    if depths.len() != planes {
        return Err(Error::shape("sample_pixels depths", &[planes], &[depths.len()]));
    }
    let n = h * w;
    let data = weights.tensor().data();
    let per_plane: Vec<Vec<SampleEntry>> = (0..planes)
        .into_par_iter()
        .map(|plane| {
            let plane_w = &data[plane * n..(plane + 1) * n];
            let candidates: Vec<usize> = (0..n).filter(|&p| plane_w[p] > 0.0).collect();
            let k = plane_sample_count(candidates.len(), rate);
            let mut picked: Vec<usize> = if k == candidates.len() {
                (0..k).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(plane as u64);
                rand::seq::index::sample(&mut rng, candidates.len(), k).into_vec()
            };
            picked.sort_unstable();
            picked
                .into_iter()
                .map(|j| {
                    let p = candidates[j];
                    SampleEntry {
                        x: p % w,
                        y: p / w,
                        plane,
                        depth: depths[plane],
                        weight: plane_w[p],
                    }
                })
                .collect()
        })
        .collect();
    Ok(SampleBatch {
        entries: per_plane.into_iter().flatten().collect(),
        rate,
        seed,
    })
}

/// Writes `mask_####.png` per plane into `dir`.
pub fn save_candidate_masks(dir: &Path, weights: &AlphaWeights) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mask = candidate_mask(weights);
    let (h, w) = (weights.height(), weights.width());
    for (plane, m) in mask.chunks(h * w).enumerate() {
        save_mask_png(&dir.join(format!("mask_{plane:04}.png")), m, h, w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;
    use crate::mpi::compositing_weights;

    fn weights(alphas: Vec<f64>, l: usize, h: usize) -> AlphaWeights {
        compositing_weights(&Tensor::from_vec(&[l, h, h], alphas).unwrap()).unwrap()
    }

    #[test]
    fn empty_scene_has_no_candidates() {
        let w = weights(vec![0.0; 32], 2, 4);
        assert!(candidate_mask(&w).iter().all(|&m| !m));
        assert!(sample_pixels(&w, &[1.0, 2.0], 0.5, 1).unwrap().is_empty());
    }

    #[test]
    fn opaque_front_plane_is_the_only_candidate() {
        let mut a = vec![1.0; 16];
        a.extend(vec![0.7; 16]);
        let mask = candidate_mask(&weights(a, 2, 4));
        assert!(mask[..16].iter().all(|&m| m));
        assert!(mask[16..].iter().all(|&m| !m));
    }

    #[test]
    fn mask_matches_exclusion_rules() {
        let a: Vec<f64> = (0..32).map(|i| [0.0, 0.3, 1.0, 0.6][(i * 7 + i / 5) % 4]).collect();
        let mask = candidate_mask(&weights(a.clone(), 2, 4));
        for p in 0..16 {
            assert_eq!(mask[p], a[p] > 0.0);
            assert_eq!(mask[16 + p], a[16 + p] > 0.0 && a[p] != 1.0);
        }
    }

    #[test]
    fn counts_round_up() {
        assert_eq!(plane_sample_count(100, 0.06), 6);
        assert_eq!(plane_sample_count(10, 0.06), 1);
        assert_eq!(plane_sample_count(101, 0.06), 7);
        assert_eq!(plane_sample_count(0, 0.06), 0);
        assert_eq!(plane_sample_count(7, 1.0), 7);
    }

    #[test]
    fn full_rate_takes_every_candidate() {
        let a: Vec<f64> = (0..32).map(|i| (i % 3) as f64 / 2.0).collect();
        let w = weights(a, 2, 4);
        let batch = sample_pixels(&w, &[1.0, 2.0], 1.0, 9).unwrap();
        assert_eq!(batch.len(), candidate_mask(&w).iter().filter(|&&m| m).count());
    }

    #[test]
    fn rejects_bad_rates() {
        let w = weights(vec![0.5; 16], 1, 4);
        for r in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(sample_pixels(&w, &[1.0], r, 0).is_err());
        }
    }

    #[test]
    fn seeds_are_reproducible_and_distinct() {
        let w = weights(vec![0.5; 64], 1, 8);
        let a = sample_pixels(&w, &[1.0], 0.25, 3).unwrap();
        assert_eq!(a, sample_pixels(&w, &[1.0], 0.25, 3).unwrap());
        assert_ne!(a.entries, sample_pixels(&w, &[1.0], 0.25, 4).unwrap().entries);
        assert_eq!(a.to_debug_text().lines().count(), 16);
    }
}
