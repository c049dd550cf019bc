use mpivdr::harness::{run_bench, BenchConfig};

// Timing check; lives in its own test binary so nothing else competes for cores.
#[test]
fn frame_rate_falls_roughly_with_plane_count() {
    let report = run_bench(&BenchConfig {
        resolution: 128,
        planes: vec![32, 96],
        threads: vec![1],
        frames: 8,
        rank: 2,
        position_hidden: 8,
        seed: 0,
    })
    .unwrap();
    let ratio = report.plane_ratio(32, 96).unwrap();
    assert!((2.0..=4.0).contains(&ratio), "fps ratio L=32/L=96 {ratio}");
    assert!(report.speedup_check(32).message.contains("skipped") || report.cores >= 8);
}
