//! End-to-end tests of the `dwgf` binary: exit codes, stderr diagnostics,
//! artifact layout, and the output-directory override.

use std::path::Path;
use std::process::{Command, Output};

const EXE: &str = env!("CARGO_BIN_EXE_dwgf");

/// A 2-pixel identity problem whose γ=0 flow contracts every particle
/// onto y: 1000 Euler steps at 0.1 leave a residual of order (0.9)^1000.
const IDENTITY: &str = r#"
[prior]
components = [{ weight = 1.0, mean = [0.0, 0.0], cov = [[1.0, 0.0], [0.0, 1.0]] }]

[autoencoder]
rho = 1e-6
encoder = "exact"
decoder = { kind = "explicit", w = [[1.0, 0.0], [0.0, 1.0]], b = [0.0, 0.0] }

[observation]
kind = "identity"
sigma_y = 1.0
y = { values = [0.8, -0.4] }

[flow]
gamma = 0.0
lambda_hat = 0.0
n_particles = 3
seed = 42
optimizer = { kind = "euler", step_size = 0.1 }
"#;

fn run(dir: &Path, args: &[&str], output_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(EXE);
    cmd.args(args).current_dir(dir);
    if let Some(out) = output_dir {
        cmd.env("DWGF_OUTPUT_DIR", out);
    } else {
        cmd.env_remove("DWGF_OUTPUT_DIR");
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let headers: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    let mut rows = vec![headers];
    for record in reader.records() {
        rows.push(record.unwrap().iter().map(String::from).collect());
    }
    rows
}

#[test]
fn run_converges_to_y_on_the_identity_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "identity.toml", IDENTITY);
    let out_dir = tmp.path().join("artifacts");
    let output = run(tmp.path(), &["run", &config], Some(&out_dir));
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    let decoded = read_csv(&out_dir.join("particles_decoded.csv"));
    assert_eq!(decoded[0], ["particle", "x_0", "x_1"]);
    assert_eq!(decoded.len(), 4);
    for row in &decoded[1..] {
        let x0: f64 = row[1].parse().unwrap();
        let x1: f64 = row[2].parse().unwrap();
        assert!(
            (x0 - 0.8).abs() < 1e-3 && (x1 + 0.4).abs() < 1e-3,
            "row {row:?}"
        );
    }

    // No ground truth → metrics.csv exists but carries no PSNR rows.
    let metrics = read_csv(&out_dir.join("metrics.csv"));
    assert_eq!(metrics[0], ["metric", "value"]);
    assert!(metrics[1..].iter().all(|r| !r[0].starts_with("psnr")));
    assert!(metrics[1..].iter().any(|r| r[0] == "ensemble_spread"));
}

#[test]
fn run_reports_dimension_mismatches_by_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    let broken = IDENTITY.replace(
        r#"kind = "identity""#,
        "kind = \"mask\"\nkeep = [true, false, true]",
    );
    let config = write_config(tmp.path(), "broken.toml", &broken);
    let output = run(tmp.path(), &["run", &config], None);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("observation.keep") && stderr.contains("autoencoder.decoder"),
        "stderr should name both mismatched fields: {stderr}"
    );
}

#[test]
fn verify_reports_suites_and_rejects_unknown_names() {
    let tmp = tempfile::tempdir().unwrap();
    let output = run(tmp.path(), &["verify", "reparam"], None);
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("suite reparam: PASS"), "stdout: {stdout}");
    assert!(
        stdout.contains("[PASS] reparam/zero-gradient"),
        "stdout: {stdout}"
    );

    let output = run(tmp.path(), &["verify", "nonsense"], None);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("nonsense") && stderr.contains("theorem1"),
        "stderr: {stderr}"
    );
}

#[test]
fn sweep_writes_one_subdirectory_per_value_plus_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "identity.toml", IDENTITY);
    let out_dir = tmp.path().join("sweep");
    let output = run(
        tmp.path(),
        &["sweep", &config, "--param", "gamma", "--values", "0,0.1"],
        Some(&out_dir),
    );
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    for value in ["0", "0.1"] {
        let sub = out_dir.join(format!("flow.gamma={value}"));
        assert!(
            sub.join("particles_decoded.csv").is_file(),
            "missing artifacts in {sub:?}"
        );
    }
    let summary = read_csv(&out_dir.join("sweep_summary.csv"));
    assert_eq!(
        summary[0],
        ["param", "value", "psnr_mean", "psnr_std", "ensemble_spread"]
    );
    assert_eq!(summary.len(), 3);
    assert_eq!(summary[1][..2], ["flow.gamma".to_string(), "0".to_string()]);
    // Identity problem ships no ground truth, so the PSNR cells stay empty.
    assert_eq!(summary[1][2], "");
}

#[test]
fn sweep_rejects_unknown_params_and_empty_value_lists() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "identity.toml", IDENTITY);

    let output = run(
        tmp.path(),
        &["sweep", &config, "--param", "bogus", "--values", "1"],
        None,
    );
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("bogus") && stderr.contains("flow.gamma"),
        "stderr: {stderr}"
    );

    let output = run(
        tmp.path(),
        &["sweep", &config, "--param", "gamma", "--values", ""],
        None,
    );
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("at least one value"), "stderr: {stderr}");
}

#[test]
fn sweep_over_the_particle_count_accepts_a_single_particle() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "identity.toml", IDENTITY);
    let out_dir = tmp.path().join("sweep_n");
    let output = run(
        tmp.path(),
        &[
            "sweep",
            &config,
            "--param",
            "n_particles",
            "--values",
            "1,4",
        ],
        Some(&out_dir),
    );
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    // One particle has no sample covariance: the spread column reads 0
    // and the metrics file omits covariance rows rather than faking them.
    let summary = read_csv(&out_dir.join("sweep_summary.csv"));
    assert_eq!(summary[1][1], "1");
    assert_eq!(summary[1][4].parse::<f64>().unwrap(), 0.0);
    let metrics = read_csv(&out_dir.join("flow.n_particles=1").join("metrics.csv"));
    assert!(metrics[1..].iter().all(|r| !r[0].starts_with("latent_cov")));
}

#[test]
fn usage_errors_for_missing_arguments_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let output = run(tmp.path(), &["run"], None);
    assert_eq!(output.status.code(), Some(2));
    let output = run(tmp.path(), &["frobnicate"], None);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn run_on_a_missing_config_exits_with_code_1_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let output = run(tmp.path(), &["run", "no_such_file.toml"], None);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("no_such_file.toml"), "stderr: {stderr}");
}
