//! SSIM, the view-consistency loss and the adversarial loss on small inputs.
//!
//! `cargo run --release --example losses`

use mpivdr::diffcore::Tensor;
use mpivdr::harness::{build_synthetic_mpi, SceneSpec};
use mpivdr::losses::{gan_loss_with_r1, ssim, view_consistency_loss, GanLossConfig, GanObjective, SsimConfig};
use mpivdr::mpi::render_mpi;

fn main() -> mpivdr::Result<()> {
    let spec = SceneSpec {
        resolution: 32,
        planes: 16,
        ..SceneSpec::default()
    };
    let scene = build_synthetic_mpi(&spec)?;
    let cfg = SsimConfig::default();
    let a = scene.ground_truth_render(&spec.pose(0.0, 0.0)?)?;
    println!("ssim(a, a) = {:.6}", ssim(&a, &a, &cfg)?);
    for yaw in [2.0, 8.0, 20.0] {
        let b = scene.ground_truth_render(&spec.pose(yaw, 0.0)?)?;
        println!(
            "yaw {yaw:>4}: ssim {:.4}  L_vc {:.4}",
            ssim(&a, &b, &cfg)?,
            view_consistency_loss(&a, &b, 0.85, &cfg)?
        );
    }
    let plain = render_mpi(&scene.mpi, &spec.pose(0.0, 0.0)?)?;
    println!("shaded vs plain L_vc {:.4}", view_consistency_loss(&a, &plain, 0.85, &cfg)?);

    let fake = [-1.0, 0.5];
    let real = [2.0, 1.5];
    let grads = vec![Tensor::full(&[4], 0.1), Tensor::full(&[4], -0.2)];
    for objective in [GanObjective::Printed, GanObjective::NonSaturating] {
        let loss = gan_loss_with_r1(&fake, &real, &grads, 0.1, &GanLossConfig { objective, ..GanLossConfig::default() })?;
        println!("{objective:?}: {:.5}  d_fake {:?}", loss.value, loss.d_fake);
    }
    Ok(())
}
