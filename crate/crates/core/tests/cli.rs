use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use shepherd::cli::formats::{read_csv_rows, read_trajectory, CONTAINMENT_HEADER, METRICS_HEADER};

fn shepherd(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_shepherd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    out.status.code().expect("exited normally")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn repo_config(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .display()
        .to_string()
}

const SMALL_RUN: &str = "seed = 4\n\
[agents]\ntargets = 40\nherders = 16\n\
[sim]\nhorizon = 1.0\n\
[grids]\ncontrol = 32\ndeconvolution = 13\n\
[output]\nmetrics_every = 10\nsnapshot_every = 10\n";

#[test]
fn feasibility_reports_the_reference_herder_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f");
    let code = shepherd(&["feasibility", "--config", &repo_config("reference.toml"), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let summary = fs::read_to_string(out.join("feasibility.toml")).unwrap();
    assert!(summary.contains("herder_count = 263"), "{summary}");
    for f in ["target_density.field", "desired_velocity.field", "deconvolution.field", "herder_density.field"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn infeasible_scenario_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "hot.toml",
        "[von_mises]\nconcentration = 3.0\n[sim]\ndiffusion = 0.05\n[grids]\ndeconvolution = 13\ncontrol = 32\n",
    );
    let out = dir.path().join("o");
    for cmd in ["feasibility", "simulate", "continuum"] {
        let code = shepherd(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, 2, "{cmd}");
    }
}

#[test]
fn errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(shepherd(&["feasibility", "--config", "/nonexistent/cfg.toml"]), 1);
    let typo = write_config(dir.path(), "typo.toml", "[sim]\ndifusion = 0.01\n");
    assert_eq!(shepherd(&["feasibility", "--config", typo.to_str().unwrap()]), 1);
    let bad = write_config(dir.path(), "bad.toml", "[sim]\ndt = -1.0\n");
    assert_eq!(shepherd(&["simulate", "--config", bad.to_str().unwrap()]), 1);
    assert_eq!(shepherd(&["bogus"]), 1);
    assert_eq!(shepherd(&["analyze", "--trajectory", "/nonexistent/t.csv"]), 1);
}

#[test]
fn analyze_reproduces_simulated_containment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL_RUN);
    let out = dir.path().join("sim");
    let out_s = out.to_str().unwrap();
    assert_eq!(shepherd(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out_s]), 0);
    let traj = out.join("trajectory.csv");
    assert_eq!(
        shepherd(&["analyze", "--config", cfg.to_str().unwrap(), "--out", out_s, "--trajectory", traj.to_str().unwrap()]),
        0
    );
    let metrics = read_csv_rows(&out.join("metrics.csv"), METRICS_HEADER).unwrap();
    let analyzed = read_csv_rows(&out.join("containment.csv"), CONTAINMENT_HEADER).unwrap();
    let pick = |rows: &[Vec<String>]| rows.iter().map(|r| (r[0].clone(), r[1].clone(), r[2].clone())).collect::<Vec<_>>();
    assert_eq!(pick(&metrics), pick(&analyzed));
    assert_eq!(analyzed.len(), 11);
}

#[test]
fn seed_flag_controls_the_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL_RUN);
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        assert_eq!(
            shepherd(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]),
            0
        );
        fs::read_to_string(out.join("trajectory.csv")).unwrap()
    };
    let a = run("9", "a");
    let b = run("9", "b");
    let c = run("10", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.contains("# seed 9\n"));
}

#[test]
fn rescaled_arena_outputs_stay_in_the_arena() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL_RUN);
    let out = dir.path().join("arena");
    let out_s = out.to_str().unwrap();
    assert_eq!(
        shepherd(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out_s, "--rescale-arena", "1.0"]),
        0
    );
    let traj = read_trajectory(&out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.arena.half_width(), 1.0);
    for snap in &traj.snapshots {
        for p in snap.herders.iter().chain(&snap.targets) {
            assert!((-1.0..1.0).contains(&p[0]) && (-1.0..1.0).contains(&p[1]), "{p:?}");
        }
    }
    // containment is computed back in Ω, so it matches the unscaled run
    let plain = dir.path().join("plain");
    assert_eq!(shepherd(&["simulate", "--config", cfg.to_str().unwrap(), "--out", plain.to_str().unwrap()]), 0);
    let chi = |p: &Path| {
        read_csv_rows(&p.join("metrics.csv"), METRICS_HEADER)
            .unwrap()
            .into_iter()
            .map(|r| r[1].clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(chi(&out), chi(&plain));
    let traj_path = out.join("trajectory.csv");
    assert_eq!(
        shepherd(&[
            "analyze",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_s,
            "--trajectory",
            traj_path.to_str().unwrap()
        ]),
        0
    );
    let analyzed: Vec<String> = read_csv_rows(&out.join("containment.csv"), CONTAINMENT_HEADER)
        .unwrap()
        .into_iter()
        .map(|r| r[1].clone())
        .collect();
    let reference = chi(&plain);
    assert_eq!(analyzed.len(), reference.len());
    for (a, b) in analyzed.iter().zip(&reference) {
        let (a, b): (f64, f64) = (a.parse().unwrap(), b.parse().unwrap());
        // positions pass through the arena and back, which may move a boundary target
        assert!((a - b).abs() <= 100.0 / 40.0 + 1e-12, "{a} vs {b}");
    }
}

#[test]
fn continuum_and_sweep_commands_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cont = dir.path().join("cont");
    let cfg = write_config(
        dir.path(),
        "herders.toml",
        "[continuum]\nmode = \"herders\"\ngrid = 13\nhorizon = 0.2\nsample_interval = 0.01\n",
    );
    assert_eq!(shepherd(&["continuum", "--config", cfg.to_str().unwrap(), "--out", cont.to_str().unwrap()]), 0);
    let decay = fs::read_to_string(cont.join("decay.csv")).unwrap();
    assert_eq!(decay.lines().filter(|l| !l.starts_with('#')).count(), 1 + 21);

    let sweep = dir.path().join("sweep");
    let cfg = write_config(
        dir.path(),
        "sweep.toml",
        "[grids]\ndeconvolution = 13\ncontrol = 32\n[sweep]\nconcentrations = [0.5, 3.0]\ndiffusions = [0.01, 0.05]\n",
    );
    assert_eq!(shepherd(&["sweep", "--config", cfg.to_str().unwrap(), "--out", sweep.to_str().unwrap()]), 0);
    let map = fs::read_to_string(sweep.join("feasibility_map.csv")).unwrap();
    let rows: Vec<&str> = map.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[2].ends_with(",1"), "{}", rows[2]);
}

#[test]
fn help_exits_with_zero() {
    assert_eq!(shepherd(&["--help"]), 0);
    assert_eq!(shepherd(&["simulate", "--help"]), 0);
}
