//! Alpha-guided sampling: which plane pixels a target view can see, and a
//! balanced subset of them.
//!
//! `cargo run --release --example sampling`

use mpivdr::harness::{build_synthetic_mpi, SceneSpec};
use mpivdr::mpi::TargetView;
use mpivdr::sampling::{candidate_mask, sample_pixels};

fn main() -> mpivdr::Result<()> {
    let spec = SceneSpec {
        resolution: 64,
        planes: 32,
        ..SceneSpec::default()
    };
    let scene = build_synthetic_mpi(&spec)?;
    let view = TargetView::new(&scene.mpi, &spec.pose(15.0, -5.0)?)?;

    let mask = candidate_mask(view.weights());
    let n = spec.resolution * spec.resolution;
    let batch = sample_pixels(view.weights(), scene.mpi.depths(), 0.06, 7)?;
    let counts = batch.plane_counts(spec.planes);
    println!("plane  candidates  sampled");
    for (i, &k) in counts.iter().enumerate() {
        let c = mask[i * n..(i + 1) * n].iter().filter(|&&m| m).count();
        if c > 0 {
            println!("{i:>5}  {c:>10}  {k:>7}");
        }
    }
    println!("{} samples out of {} candidates", batch.len(), mask.iter().filter(|&&m| m).count());

    // same seed, same batch
    assert_eq!(sample_pixels(view.weights(), scene.mpi.depths(), 0.06, 7)?.entries, batch.entries);
    Ok(())
}
