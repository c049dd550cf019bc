mod common;

use std::fs;
use std::path::Path;

use common::*;
use mpivdr::harness::cli::{run_cli, EXIT_DATA, EXIT_DIVERGENCE, EXIT_OK, EXIT_USAGE};
use mpivdr::harness::{build_synthetic_mpi, SceneSpec};
use mpivdr::mpi::io::{load_rgb_png, read_mpi_dir, to_u8, write_mpi_dir, PlaneEncoding};
use mpivdr::mpi::{render_mpi, CameraPose, Intrinsics};
use tempfile::TempDir;

const SMALL: &str = "resolution = 16\nplanes = 6\nrank = 2\nposition_hidden = 16\nposition_layers = 2\nview_hidden = 8\nview_layers = 2\nw_dim = 2\n";

fn cli(args: &[&str]) -> i32 {
    run_cli(std::iter::once("mpivdr").chain(args.iter().copied()))
}

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path.to_str().unwrap().to_owned()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cli(&[]), EXIT_USAGE);
    assert_eq!(cli(&["explode"]), EXIT_USAGE);
    assert_eq!(cli(&["render"]), EXIT_USAGE);
    assert_eq!(cli(&["fit", "--seed", "abc"]), EXIT_USAGE);
    let dir = TempDir::new().unwrap();
    let out = p(dir.path(), "x.png");
    assert_eq!(cli(&["render", "--yaw", "120", "--out", &out]), EXIT_USAGE);
    assert_eq!(cli(&["sample-vis", "--rate", "0", "--out", &out]), EXIT_USAGE);
    assert_eq!(cli(&["--help"]), EXIT_OK);
}

#[test]
fn bad_inputs_exit_two() {
    let dir = TempDir::new().unwrap();
    let out = p(dir.path(), "x.png");
    assert_eq!(cli(&["render", "--config", &p(dir.path(), "missing.cfg"), "--out", &out]), EXIT_DATA);
    let cfg = small_config(dir.path(), "shinyness = 3\n");
    assert_eq!(cli(&["oracle", "--config", &cfg]), EXIT_DATA);
    fs::create_dir(dir.path().join("mpi")).unwrap();
    fs::write(dir.path().join("mpi/manifest"), "format = something-else\n").unwrap();
    assert_eq!(cli(&["render", "--mpi", &p(dir.path(), "mpi"), "--out", &out]), EXIT_DATA);
    fs::write(dir.path().join("bad.ckpt"), b"not a checkpoint").unwrap();
    let cfg = small_config(dir.path(), "");
    assert_eq!(
        cli(&["render", "--config", &cfg, "--model", &p(dir.path(), "bad.ckpt"), "--out", &out]),
        EXIT_DATA
    );
}

#[test]
fn runaway_learning_rate_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "learning_rate = 1e4\nlr_schedule = constant\n");
    let out = p(dir.path(), "fit");
    assert_eq!(cli(&["fit", "--config", &cfg, "--steps", "200", "--quiet", "--out", &out]), EXIT_DIVERGENCE);
}

#[test]
fn render_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    let (a, b) = (p(dir.path(), "a.png"), p(dir.path(), "b.png"));
    for out in [&a, &b] {
        let args = ["render", "--config", &cfg, "--seed", "4", "--yaw", "12", "--pitch", "-7", "--out", out];
        assert_eq!(cli(&args), EXIT_OK);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn zero_model_render_is_the_plain_composite() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = p(dir.path(), "r.png");
    let args = ["render", "--config", &cfg, "--planes", "6", "--yaw", "-9", "--pitch", "4", "--out", &out];
    assert_eq!(cli(&args), EXIT_OK);
    let spec = SceneSpec {
        resolution: 16,
        planes: 6,
        ..SceneSpec::default()
    };
    let scene = build_synthetic_mpi(&spec).unwrap();
    let center = 2.0 / (1.0 / spec.near + 1.0 / spec.far);
    let pose = CameraPose::orbit(-9.0, 4.0, center, spec.intrinsics()).unwrap();
    let want = render_mpi(&scene.mpi, &pose).unwrap();
    let got = load_rgb_png(Path::new(&out)).unwrap();
    for (g, w) in got.data().iter().zip(want.data()) {
        assert_eq!((g * 255.0).round() as u8, to_u8(*w));
    }
}

#[test]
fn exported_mpi_renders_the_same() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    let (a, b, mpi) = (p(dir.path(), "a.png"), p(dir.path(), "b.png"), p(dir.path(), "mpi"));
    assert_eq!(cli(&["render", "--config", &cfg, "--planes", "6", "--yaw", "5", "--export-mpi", &mpi, "--out", &a]), EXIT_OK);
    assert_eq!(cli(&["render", "--mpi", &mpi, "--config", &cfg, "--yaw", "5", "--out", &b]), EXIT_OK);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn fit_writes_artifacts_that_oracle_and_render_accept() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = p(dir.path(), "fit");
    assert_eq!(cli(&["fit", "--config", &cfg, "--steps", "5", "--quiet", "--out", &out]), EXIT_OK);
    let metrics = fs::read_to_string(dir.path().join("fit/metrics.txt")).unwrap();
    assert_eq!(metrics.lines().count(), 6);
    assert!(dir.path().join("fit/config.txt").exists());
    let ckpt = p(dir.path(), "fit/model.ckpt");
    assert_eq!(cli(&["oracle", "--config", &cfg, "--points", "16", "--views", "8", "--model", &ckpt]), EXIT_OK);
    let png = p(dir.path(), "m.png");
    assert_eq!(cli(&["render", "--config", &cfg, "--model", &ckpt, "--yaw", "3", "--out", &png]), EXIT_OK);
}

#[test]
fn sample_vis_and_bench_write_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = p(dir.path(), "samples");
    assert_eq!(cli(&["sample-vis", "--config", &cfg, "--yaw", "10", "--out", &out]), EXIT_OK);
    assert!(dir.path().join("samples/mask_0000.png").exists());
    assert!(dir.path().join("samples/samples.txt").exists());
    let tsv = p(dir.path(), "bench.tsv");
    let args = ["bench", "--resolution", "16", "--planes", "4,8", "--threads", "1,2", "--frames", "1", "--out", &tsv];
    assert_eq!(cli(&args), EXIT_OK);
    assert_eq!(fs::read_to_string(&tsv).unwrap().lines().count(), 5);
}

#[test]
fn mpi_directories_round_trip() {
    let mut r = rng(21);
    let mpi = random_mpi(&mut r, 3, 8);
    let capture = CameraPose::identity(Intrinsics::default_for(8));
    let dir = TempDir::new().unwrap();

    write_mpi_dir(&dir.path().join("raw"), &mpi, &capture, PlaneEncoding::Raw32).unwrap();
    let (back, pose) = read_mpi_dir(&dir.path().join("raw")).unwrap();
    assert_eq!(pose, capture);
    assert_eq!(back.depths(), mpi.depths());
    assert!(back.alphas().max_abs_diff(mpi.alphas()) < 1e-7);
    assert!(back.color_volume().max_abs_diff(&mpi.color_volume()) < 1e-7);

    write_mpi_dir(&dir.path().join("png"), &mpi, &capture, PlaneEncoding::Png8).unwrap();
    let (back, _) = read_mpi_dir(&dir.path().join("png")).unwrap();
    assert!(back.alphas().max_abs_diff(mpi.alphas()) <= 0.5 / 255.0 + 1e-12);

    let raw = dir.path().join("raw/plane_0001.raw");
    let bytes = fs::read(&raw).unwrap();
    fs::write(&raw, &bytes[..bytes.len() - 4]).unwrap();
    assert!(read_mpi_dir(&dir.path().join("raw")).unwrap_err().is_data_error());
}
