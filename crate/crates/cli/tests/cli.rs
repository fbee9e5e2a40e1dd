//! End-to-end tests of the `patchflow` binary on a desk-mini experiment.

use std::path::Path;
use std::process::{Command, Output};

fn config_text() -> &'static str {
    r#"
seed = 11

[dataset]
kind = "diffusion-reaction"
extents = [16, 16]
lengths = [1.0, 1.0]
dt = 0.01
steps = 10
train_samples = 2
test_samples = 1
store_every = 2

[ae]
patch = 8
latent = 4
widths = [4, 8]
activation = "tanh"
epochs = 2
batch = 16
steps_per_epoch = 8

[ti]
history = 3
gamma = 8
unroll = 2
spatial_hidden = [8]
temporal_hidden = [8]
activation = "relu"
neighbor_policy = ["zero", "zero"]
epochs = 2
windows_per_epoch = 8

[ti.schedule]
warmup = 1
eps_min = 0.0
"#
}

fn patchflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchflow"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str], dir: &Path) -> String {
    let out = patchflow(args, dir);
    assert!(
        out.status.success(),
        "command {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn full_command_sequence_produces_reports() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), config_text()).unwrap();
    let common = ["--config", "exp.toml", "--out", "run"];

    run_ok(&[&["generate"][..], &common].concat(), dir.path());
    assert!(dir.path().join("run/data/train_001.cmls").is_file());

    // training order is enforced: TI before AE fails with exit code 1
    let out = patchflow(&[&["train-ti"][..], &common].concat(), dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train-ae"));

    run_ok(&[&["train-ae"][..], &common].concat(), dir.path());
    run_ok(&[&["train-ti"][..], &common].concat(), dir.path());
    run_ok(&[&["rollout"][..], &common].concat(), dir.path());
    let stdout = run_ok(&[&["eval"][..], &common].concat(), dir.path());

    // aggregate and baseline side by side
    assert!(stdout.contains("aggregate nRMSE"), "got: {stdout}");
    assert!(stdout.contains("persistence baseline"), "got: {stdout}");
    let report = std::fs::read_to_string(dir.path().join("run/eval/report.csv")).unwrap();
    assert!(report.contains("baseline_aggregate"));
    let curve = std::fs::read_to_string(dir.path().join("run/eval/per_timestep.csv")).unwrap();
    assert!(curve.starts_with("timestep,nrmse,baseline_nrmse"));
}

#[test]
fn seed_override_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), config_text()).unwrap();
    run_ok(&["generate", "--config", "exp.toml", "--out", "a"], dir.path());
    run_ok(
        &["generate", "--config", "exp.toml", "--out", "b", "--seed", "99"],
        dir.path(),
    );
    run_ok(&["generate", "--config", "exp.toml", "--out", "c"], dir.path());
    let a = std::fs::read(dir.path().join("a/data/train_000.cmls")).unwrap();
    let b = std::fs::read(dir.path().join("b/data/train_000.cmls")).unwrap();
    let c = std::fs::read(dir.path().join("c/data/train_000.cmls")).unwrap();
    assert_ne!(a, b);
    assert_eq!(a, c); // same config + seed -> bit-identical container
}

#[test]
fn invalid_config_exits_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = config_text().replace("extents = [16, 16]", "extents = [20, 16]");
    std::fs::write(dir.path().join("exp.toml"), bad).unwrap();
    let out = patchflow(
        &["generate", "--config", "exp.toml", "--out", "run"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("divisible"));
}

#[test]
fn rollout_dumps_final_frame_pgm_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_text().to_string()
        + r#"
[rollout]
dump_pgm = true
"#;
    std::fs::write(dir.path().join("exp.toml"), cfg).unwrap();
    let common = ["--config", "exp.toml", "--out", "run"];
    run_ok(&[&["generate"][..], &common].concat(), dir.path());
    run_ok(&[&["train-ae"][..], &common].concat(), dir.path());
    run_ok(&[&["train-ti"][..], &common].concat(), dir.path());
    run_ok(&[&["rollout"][..], &common].concat(), dir.path());
    // horizon = steps - th = 7, so the final decoded timestep is t = 9
    let frames = dir.path().join("run/pred/frames");
    assert!(frames.join("u_000_t0009.pgm").is_file());
    assert!(frames.join("v_000_t0009.pgm").is_file());
}

#[test]
fn sweep_subcommand_writes_comparison_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_text().to_string()
        + r#"
[sweep]
axis = "history"
values = [2, 3]
"#;
    std::fs::write(dir.path().join("exp.toml"), cfg).unwrap();
    let stdout = run_ok(
        &["sweep", "--config", "exp.toml", "--out", "run"],
        dir.path(),
    );
    assert!(stdout.contains("comparison written"));
    let table = std::fs::read_to_string(dir.path().join("run/sweep/sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(dir.path().join("run/sweep/history_2/models/ti.cmls").is_file());
    assert!(dir.path().join("run/sweep/history_3/models/ti.cmls").is_file());
}
