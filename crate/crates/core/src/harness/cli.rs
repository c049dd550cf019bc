//! The `mpivdr` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 divergence.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::bench::{run_bench, BenchConfig};
use super::config::RunConfig;
use super::fit::{fit_vdr_with, heldout_evaluation, residual_samples, scene_conditioning};
use super::oracle::svd_rank_oracle;
use super::scene::build_synthetic_mpi;
use crate::mpi::io::{read_mpi_dir, save_rgb_png, write_mpi_dir, PlaneEncoding};
use crate::mpi::{CameraPose, Mpi, TargetView, INFERENCE_PLANES};
use crate::sampling::{sample_pixels, save_candidate_masks};
use crate::vdr::{PositionField, VdRModel, ViewContext};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mpivdr", version, about = "Multiplane-image rendering with low-rank view-dependent color")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed for the scene, model initialization and samplers.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `key = value` file with scene and fit settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PoseArgs {
    /// Degrees about the vertical axis through the scene center.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub yaw: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub pitch: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the view-dependent model to the synthetic scene.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Output directory for metrics, checkpoint and effective config.
        #[arg(long, default_value = "fit-out")]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
    /// Render an MPI, optionally with a fitted model, to a PNG.
    Render {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pose: PoseArgs,
        /// Model checkpoint; a zero model when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        /// MPI directory; the synthetic scene when omitted.
        #[arg(long)]
        mpi: Option<PathBuf>,
        /// Plane count for the synthetic scene.
        #[arg(long, default_value_t = INFERENCE_PLANES)]
        planes: usize,
        /// Also write the MPI used to this directory.
        #[arg(long)]
        export_mpi: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write per-plane candidate masks and a sample dump for one pose.
    SampleVis {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pose: PoseArgs,
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long, default_value = "samples-out")]
        out: PathBuf,
    },
    /// Measure render and expand+render throughput.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [32, 96])]
        planes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 8])]
        threads: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        frames: usize,
        /// Tab-separated results file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Best rank-N error of the scene's view-dependent residuals.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 256)]
        points: usize,
        #[arg(long, default_value_t = 32)]
        views: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4, 8])]
        ranks: Vec<usize>,
        /// Also report this checkpoint's error on the same matrix.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        e if e.is_data_error() => EXIT_DATA,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let cfg = RunConfig::load(common.config.as_deref())?.with_seed(common.seed);
    cfg.validate()?;
    Ok(cfg)
}

fn check_pose(pose: &PoseArgs) -> Result<()> {
    if !(pose.yaw.abs() < 90.0 && pose.pitch.abs() < 90.0) {
        return Err(Error::invalid("pose", format!("yaw and pitch must be within (-90, 90), got {} {}", pose.yaw, pose.pitch)));
    }
    Ok(())
}

/// Orbit about the disparity midpoint of the MPI's depth range.
fn orbit_pose(mpi: &Mpi, capture: &CameraPose, pose: &PoseArgs) -> Result<CameraPose> {
    check_pose(pose)?;
    let center = 2.0 / (1.0 / mpi.near() + 1.0 / mpi.far());
    CameraPose::orbit(pose.yaw, pose.pitch, center, *capture.intrinsics())
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit { common, out, steps, quiet } => {
            let mut cfg = load_config(&common)?;
            if let Some(s) = steps {
                cfg.fit.steps = s;
            }
            cfg.validate()?;
            create_dir(&out)?;
            write(&out.join("config.txt"), &cfg.to_kv().to_text())?;
            let scene = build_synthetic_mpi(&cfg.scene)?;
            let result = fit_vdr_with(&scene, &cfg.fit, |r| {
                if !quiet && r.step % 100 == 0 {
                    eprintln!("step {} mse {:.4e} lvc {:.4e} grad {:.3e}", r.step, r.mse, r.lvc, r.grad_norm);
                }
            })?;
            write(&out.join("metrics.txt"), &result.log.to_text())?;
            result.model.save(&out.join("model.ckpt"))?;
            let report = heldout_evaluation(&scene, &result.model, &cfg.fit, &result.conditioning, 256, 32, cfg.fit.seed ^ 1)?;
            if let Some(last) = result.log.last() {
                println!("final step {} mse {:.6e} lvc {:.6e}", last.step, last.mse, last.lvc);
            }
            println!(
                "held-out mse {:.6e}  rank-{} oracle {:.6e}",
                report.model_mse,
                cfg.fit.rank,
                report.oracle_mse
            );
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Render {
            common,
            pose,
            model,
            mpi,
            planes,
            export_mpi,
            out,
        } => {
            let mut cfg = load_config(&common)?;
            let (mpi, capture) = match &mpi {
                Some(dir) => read_mpi_dir(dir)?,
                None => {
                    cfg.scene.planes = planes;
                    cfg.validate()?;
                    let scene = build_synthetic_mpi(&cfg.scene)?;
                    (scene.mpi, CameraPose::identity(cfg.scene.intrinsics()))
                }
            };
            let target = orbit_pose(&mpi, &capture, &pose)?;
            let model = match &model {
                Some(path) => VdRModel::load(path)?,
                None => {
                    // every output is zero, so the hidden widths do not matter
                    let mut mc = cfg.fit.model_config_for(mpi.near(), mpi.far());
                    mc.position_hidden = 8;
                    mc.view_hidden = 8;
                    VdRModel::zeros(&mc)?
                }
            };
            let w = scene_conditioning(cfg.scene.seed, model.w_dim());
            let h = ViewContext::new(target.view_direction(), w)?.h(&model)?.to_vec();
            let image = PositionField::new(&model, &mpi)?.render(&mpi, &h, &target)?;
            if let Some(dir) = &export_mpi {
                write_mpi_dir(dir, &mpi, &capture, PlaneEncoding::Raw32)?;
            }
            save_rgb_png(&out, &image)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::SampleVis { common, pose, rate, out } => {
            let cfg = load_config(&common)?;
            let rate = rate.unwrap_or(cfg.fit.rate);
            let scene = build_synthetic_mpi(&cfg.scene)?;
            let target = orbit_pose(&scene.mpi, &CameraPose::identity(cfg.scene.intrinsics()), &pose)?;
            let view = TargetView::new(&scene.mpi, &target)?;
            let batch = sample_pixels(view.weights(), scene.mpi.depths(), rate, cfg.fit.seed)?;
            save_candidate_masks(&out, view.weights())?;
            write(&out.join("samples.txt"), &batch.to_debug_text())?;
            let counts = batch.plane_counts(scene.mpi.planes());
            println!("{} samples at rate {rate}", batch.len());
            println!(
                "per plane: {}",
                counts.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
            );
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Bench {
            common,
            resolution,
            planes,
            threads,
            frames,
            out,
        } => {
            let cfg = load_config(&common)?;
            let report = run_bench(&BenchConfig {
                resolution,
                planes,
                threads,
                frames,
                rank: cfg.fit.rank,
                seed: cfg.fit.seed,
                ..BenchConfig::default()
            })?;
            print!("{}", report.to_text());
            if let Some(path) = &out {
                write(path, &report.to_tsv())?;
            }
            Ok(())
        }
        Command::Oracle {
            common,
            points,
            views,
            ranks,
            model,
        } => {
            let cfg = load_config(&common)?;
            let scene = build_synthetic_mpi(&cfg.scene)?;
            let samples = residual_samples(&scene, &cfg.fit, points, views, cfg.fit.seed)?;
            let entries = samples.matrix.len() as f64;
            println!("residual matrix {}x{}", samples.matrix.nrows(), samples.matrix.ncols());
            let mut ranks = ranks;
            ranks.sort_unstable();
            ranks.dedup();
            let mut prev = f64::INFINITY;
            let mut monotone = true;
            for &n in &ranks {
                let e = svd_rank_oracle(&samples.matrix, n)?;
                monotone &= e <= prev;
                prev = e;
                println!("N={n:<3} squared error {e:.6e}  mse {:.6e}", e / entries);
            }
            println!("non-increasing: {monotone}");
            if let Some(path) = &model {
                let model = VdRModel::load(path)?;
                let w = scene_conditioning(cfg.scene.seed, model.w_dim());
                let report = heldout_evaluation(&scene, &model, &cfg.fit, &w, points, views, cfg.fit.seed)?;
                println!(
                    "model mse {:.6e}  rank-{} oracle {:.6e}  ratio {:.3}",
                    report.model_mse,
                    model.rank(),
                    report.oracle_mse,
                    report.model_mse / report.oracle_mse
                );
            }
            Ok(())
        }
    }
}
