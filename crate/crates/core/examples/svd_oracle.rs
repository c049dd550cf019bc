//! Best achievable error of a rank-N view-dependent residual, from the SVD of
//! sampled ground truth.
//!
//! `cargo run --release --example svd_oracle`

use mpivdr::harness::{build_synthetic_mpi, residual_samples, svd_rank_oracle, FitConfig, SceneSpec};

fn main() -> mpivdr::Result<()> {
    let cfg = FitConfig::default();
    for shininess in [4.0, 16.0, 64.0] {
        let spec = SceneSpec {
            shininess,
            ..SceneSpec::default()
        };
        let scene = build_synthetic_mpi(&spec)?;
        let samples = residual_samples(&scene, &cfg, 256, 32, 0)?;
        let entries = samples.matrix.len() as f64;
        print!("shininess {shininess:>4}:");
        for n in [0, 1, 2, 4, 8] {
            print!("  N={n} {:.2e}", svd_rank_oracle(&samples.matrix, n)? / entries);
        }
        println!();
    }
    Ok(())
}
