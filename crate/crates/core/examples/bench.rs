//! Render throughput over plane and worker counts.
//!
//! `cargo run --release --example bench`

use mpivdr::harness::{run_bench, BenchConfig};

fn main() -> mpivdr::Result<()> {
    let report = run_bench(&BenchConfig {
        frames: 8,
        ..BenchConfig::default()
    })?;
    print!("{}", report.to_text());
    Ok(())
}
