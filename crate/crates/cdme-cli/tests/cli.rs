//! End-to-end checks of the binary: exit codes, output schemas and the
//! documented shapes of the emitted tables.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn cdme() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cdme"))
}

fn run(args: &[&str]) -> Output {
    cdme().args(args).output().expect("binary runs")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    let mut comments = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') {
            comments.push(line.to_string());
        } else {
            rows.push(line.split(',').map(str::to_string).collect());
        }
    }
    (comments, rows)
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_key = 7\n").unwrap();
    let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no_such_key"), "stderr: {stderr}");
}

#[test]
fn unknown_scenario_exits_one() {
    let out = run(&["solve", "--scenario", "warp-drive"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn nonpositive_degradation_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("zero.toml");
    std::fs::write(&cfg, "[lambda_d]\nkind = \"constant\"\nvalue = 0.0\n").unwrap();
    let out = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

/// Tightening a tolerance to zero is the negative control for `validate`.
#[test]
fn impossible_tolerance_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.toml");
    std::fs::write(
        &cfg,
        "n_trunc = 16\ngrid = 501\n[validate]\npde_residual_tol = 0.0\nwith_fd_check = false\n",
    )
    .unwrap();
    let out = run(&[
        "validate",
        "--scenario",
        "constant",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("pde-residual"), "stderr: {stderr}");
}

#[test]
fn solve_constant_emits_uniform_rho1() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "solve",
        "--scenario",
        "constant",
        "--n-trunc",
        "16",
        "--grid",
        "501",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let (comments, rows) = read_csv(&out_dir.join("rho1.csv"));
    assert!(comments.iter().any(|c| c.starts_with("# config_hash=0x")));
    assert!(comments.iter().any(|c| c.starts_with("# seed=")));
    assert_eq!(rows[0], vec!["t", "x", "rho1"]);

    // group by t: the density must not vary with x
    let mut by_t: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in &rows[1..] {
        by_t.entry(row[0].clone())
            .or_default()
            .push(row[2].parse().unwrap());
    }
    for (t, values) in by_t {
        let max = values.iter().cloned().fold(f64::MIN, f64::max);
        let min = values.iter().cloned().fold(f64::MAX, f64::min);
        assert!(
            max - min <= 1e-12,
            "rho1 varies in x at t={t}: {}",
            max - min
        );
    }
}

#[test]
fn solve_dirac_half_is_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "solve",
        "--scenario",
        "dirac-half",
        "--n-trunc",
        "400",
        "--grid",
        "501",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let (_, rows) = read_csv(&out_dir.join("rho1.csv"));
    let mut by_tx: BTreeMap<(String, String), f64> = BTreeMap::new();
    for row in &rows[1..] {
        by_tx.insert((row[0].clone(), row[1].clone()), row[2].parse().unwrap());
    }
    for ((t, x), value) in &by_tx {
        let mirrored = format!("{}", 1.0 - x.parse::<f64>().unwrap());
        if let Some(other) = by_tx.get(&(t.clone(), mirrored)) {
            assert!((value - other).abs() <= 1e-12, "asymmetry at t={t}, x={x}");
        }
    }
}

#[test]
fn convergence_table_is_decreasing() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "convergence",
        "--scenario",
        "dirac0",
        "--grid",
        "1001",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let (_, rows) = read_csv(&out_dir.join("convergence.csv"));
    assert_eq!(rows[0], vec!["n", "l2_diff"]);
    let diffs: Vec<f64> = rows[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(diffs.len(), 6);
    for w in diffs.windows(2) {
        assert!(w[1] < w[0], "not decreasing: {diffs:?}");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg,
        "scenario = \"constant\"\nseed = 1\nn_trunc = 8\ngrid = 101\n",
    )
    .unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    // same config, different seeds via flag: headers must differ
    for (seed, out_dir) in [("5", &a), ("6", &b)] {
        let out = run(&[
            "solve",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let (ca, _) = read_csv(&a.join("rho0.csv"));
    let (cb, _) = read_csv(&b.join("rho0.csv"));
    assert!(ca.contains(&"# seed=5".to_string()));
    assert!(cb.contains(&"# seed=6".to_string()));
    assert_ne!(ca, cb, "config hash should change with the seed");
}

#[test]
fn tabulated_field_requires_matching_grid() {
    let dir = tempfile::tempdir().unwrap();
    let rates = dir.path().join("rates.csv");
    std::fs::write(&rates, "x,value\n0,0.5\n0.5,0.5\n1,0.5\n").unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg,
        format!(
            "grid = 101\n[lambda_c]\nkind = \"tabulated\"\npath = \"{}\"\n",
            rates.display()
        ),
    )
    .unwrap();
    let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("3 samples"), "stderr: {stderr}");
}

#[test]
fn tabulated_field_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let rates = dir.path().join("rates.csv");
    // smooth creation field on a 101-node grid
    let mut body = String::from("x,value\n");
    for i in 0..101 {
        let x = i as f64 / 100.0;
        body.push_str(&format!(
            "{x},{}\n",
            0.5 * (1.0 + (std::f64::consts::PI * x).cos())
        ));
    }
    std::fs::write(&rates, body).unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg,
        format!(
            "grid = 101\nn_trunc = 16\n[lambda_c]\nkind = \"tabulated\"\npath = \"{}\"\n",
            rates.display()
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("rho1.csv").exists());
}
