//! Fits the view-dependent model to a small synthetic scene and reports
//! held-out error against the best rank-N approximation.
//!
//! `cargo run --release --example fit_scene -- [steps]`

use mpivdr::harness::{build_synthetic_mpi, fit_vdr_with, heldout_evaluation, FitConfig, SceneSpec};

fn main() -> mpivdr::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let spec = SceneSpec {
        resolution: 32,
        planes: 16,
        ..SceneSpec::default()
    };
    let scene = build_synthetic_mpi(&spec)?;
    let cfg = FitConfig {
        steps,
        rank: 4,
        position_hidden: 64,
        position_layers: 3,
        view_hidden: 32,
        ..FitConfig::default()
    };
    let every = (steps / 10).max(1);
    let fit = fit_vdr_with(&scene, &cfg, |r| {
        if r.step % every == 0 {
            println!("step {:>5}  mse {:.3e}  L_vc {:.3e}  |grad| {:.3e}", r.step, r.mse, r.lvc, r.grad_norm);
        }
    })?;
    let report = heldout_evaluation(&scene, &fit.model, &cfg, &fit.conditioning, 128, 16, 17)?;
    println!(
        "held-out mse {:.3e}, rank-{} oracle {:.3e}",
        report.model_mse, cfg.rank, report.oracle_mse
    );
    Ok(())
}
