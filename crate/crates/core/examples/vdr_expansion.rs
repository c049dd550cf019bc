//! Expands an MPI into view-dependent planes with a (randomly initialized)
//! low-rank model and checks the rendered image against per-sample colors.
//!
//! `cargo run --release --example vdr_expansion`

use mpivdr::harness::{build_synthetic_mpi, scene_conditioning, SceneSpec};
use mpivdr::mpi::TargetView;
use mpivdr::sampling::sample_pixels;
use mpivdr::vdr::{evaluate_batch, PositionField, VdRConfig, VdRModel, ViewContext};

fn main() -> mpivdr::Result<()> {
    let spec = SceneSpec {
        resolution: 32,
        planes: 16,
        ..SceneSpec::default()
    };
    let scene = build_synthetic_mpi(&spec)?;
    let model = VdRModel::new(&VdRConfig {
        rank: 4,
        position_hidden: 64,
        near: spec.near,
        far: spec.far,
        ..VdRConfig::default()
    })?;
    let w = scene_conditioning(spec.seed, model.w_dim());

    // g is per plane pixel and computed once; h is per view
    let field = PositionField::new(&model, &scene.mpi)?;
    for yaw in [-15.0, 0.0, 15.0] {
        let pose = spec.pose(yaw, 5.0)?;
        let mut ctx = ViewContext::new(pose.view_direction(), w.clone())?;
        let h = ctx.h(&model)?.to_vec();
        let image = field.render(&scene.mpi, &h, &pose)?;

        let view = TargetView::new(&scene.mpi, &pose)?;
        let batch = sample_pixels(view.weights(), scene.mpi.depths(), 0.05, 1)?;
        let colors = evaluate_batch(&model, &batch, &mut ctx, &view)?;
        println!(
            "yaw {yaw:>5}: h = [{}], image mean {:.4}, {} sampled colors, mean {:.4}",
            h.iter().map(|v| format!("{v:+.3}")).collect::<Vec<_>>().join(", "),
            image.sum() / image.numel() as f64,
            batch.len(),
            colors.sum() / colors.numel() as f64
        );
    }
    Ok(())
}
