//! Synthetic scenes, the fitting loop, the rank oracle, benchmarks and the
//! command implementations behind the `mpivdr` binary.

pub mod bench;
pub mod cli;
pub mod config;
pub mod fit;
pub mod oracle;
pub mod scene;

pub use fit::{
    fit_vdr, fit_vdr_with, heldout_evaluation, pair_consistency, residual_samples, scene_conditioning, visible_points, FitConfig,
    FitResult, HeldOutReport, LrSchedule, MetricRecord, MetricsLog, ResidualSamples, DIVERGENCE_FACTOR,
};
pub use oracle::{squared_singular_values, svd_rank_oracle, tail_sums};
pub use scene::{build_synthetic_mpi, specular, synthetic_radiance, SceneSpec, SurfacePoint, SyntheticScene};
pub use bench::{run_bench, BenchConfig, BenchRecord, BenchReport, SpeedupCheck};
pub use config::RunConfig;
