//! `dwgf` command-line interface.
//!
//! Three subcommands: `run` executes one experiment from a TOML config and
//! writes CSV artifacts, `verify` runs a built-in property suite, and
//! `sweep` re-runs an experiment across several values of one parameter.
//!
//! Exit codes: 0 on success, 1 on configuration or numerical failure,
//! 2 on usage errors (unknown suite or sweep parameter, empty value list).
//! `DWGF_OUTPUT_DIR` overrides the config's output directory.

use clap::{Parser, Subcommand};
use dwgf::artifacts::{self, SweepRow};
use dwgf::config::ExperimentConfig;
use dwgf::error::{Error, Result};
use dwgf::{flow, verify};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Environment variable that overrides `output.dir` from the config.
const OUTPUT_DIR_ENV: &str = "DWGF_OUTPUT_DIR";

#[derive(Parser)]
#[command(
    name = "dwgf",
    version,
    about = "Particle flow solver for linear-Gaussian inverse problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config and write CSV artifacts.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
    },
    /// Run a built-in verification suite and report each property.
    Verify {
        /// One of `reparam`, `gradients`, `theorem1`, `fixedpoint`, or `all`.
        suite: String,
    },
    /// Re-run an experiment for each value of one parameter.
    Sweep {
        /// Path to the experiment config.
        config: PathBuf,
        /// Parameter to vary, e.g. `flow.gamma` (or just `gamma`).
        #[arg(long)]
        param: String,
        /// Comma-separated values to substitute.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Verify { suite } => cmd_verify(&suite),
        Command::Sweep {
            config,
            param,
            values,
        } => cmd_sweep(&config, &param, &values),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

const USAGE_EXIT: u8 = 2;

/// Loads a config, applies the output-directory override, and returns the
/// parsed config together with the directory CSV paths resolve against.
fn load_config(path: &Path) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::load(path)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        config.output.dir = dir;
    }
    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((config, base_dir))
}

/// Runs one experiment into `dir` and prints the artifact paths.
fn run_into(
    config: &ExperimentConfig,
    base_dir: &Path,
    dir: &Path,
) -> Result<artifacts::RunSummary> {
    let experiment = config.build(base_dir)?;
    let result = flow::run(&experiment.problem, &experiment.flow)?;
    let summary = artifacts::write_run_artifacts(
        dir,
        &result,
        experiment.x_true.as_ref(),
        &experiment.output,
    )?;
    println!("wrote {}", dir.join("particles_latent.csv").display());
    println!("wrote {}", dir.join("particles_decoded.csv").display());
    println!("wrote {}", dir.join("metrics.csv").display());
    if result.trace.is_some() {
        println!("wrote {}", dir.join("trace.csv").display());
    }
    if let Some(psnr) = summary.psnr_mean {
        println!("psnr_mean = {psnr:.4} dB");
    }
    println!("ensemble_spread = {:.6e}", summary.ensemble_spread);
    Ok(summary)
}

fn cmd_run(path: &Path) -> Result<ExitCode> {
    let (config, base_dir) = load_config(path)?;
    let dir = PathBuf::from(&config.output.dir);
    run_into(&config, &base_dir, &dir)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(suite: &str) -> Result<ExitCode> {
    let suites: Vec<&str> = if suite == "all" {
        verify::SUITE_NAMES.to_vec()
    } else if verify::SUITE_NAMES.contains(&suite) {
        vec![suite]
    } else {
        eprintln!(
            "error: unknown suite {suite:?}; valid suites: {}, all",
            verify::SUITE_NAMES.join(", ")
        );
        return Ok(ExitCode::from(USAGE_EXIT));
    };
    let mut all_passed = true;
    for name in suites {
        let report = verify::run_suite(name)?;
        println!("{report}");
        all_passed &= report.passed();
    }
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

/// Sweepable parameters: maps both the dotted field path and the bare field
/// name onto a setter over the parsed config.
fn apply_sweep_param(config: &mut ExperimentConfig, param: &str, raw: &str) -> Result<()> {
    fn parse<T: std::str::FromStr>(param: &str, raw: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        raw.trim()
            .parse()
            .map_err(|e| Error::config(format!("sweep value {raw:?} for {param}: {e}")))
    }
    match param {
        "flow.gamma" | "gamma" => config.flow.gamma = parse(param, raw)?,
        "flow.lambda_hat" | "lambda_hat" => config.flow.lambda_hat = parse(param, raw)?,
        "flow.n_particles" | "n_particles" => config.flow.n_particles = parse(param, raw)?,
        "flow.seed" | "seed" => config.flow.seed = parse(param, raw)?,
        "schedule.c" | "c" => config.schedule.c = parse(param, raw)?,
        "autoencoder.rho" | "rho" => config.autoencoder.rho = parse(param, raw)?,
        "observation.sigma_y" | "sigma_y" => match config.observation.as_mut() {
            Some(obs) => obs.sigma_y = parse(param, raw)?,
            None => {
                return Err(Error::config(
                    "sweep over observation.sigma_y: the config has no observation block",
                ))
            }
        },
        _ => unreachable!("parameter validated by the caller"),
    }
    Ok(())
}

const SWEEPABLE: [&str; 7] = [
    "flow.gamma",
    "flow.lambda_hat",
    "flow.n_particles",
    "flow.seed",
    "schedule.c",
    "autoencoder.rho",
    "observation.sigma_y",
];

fn cmd_sweep(path: &Path, param: &str, values: &[String]) -> Result<ExitCode> {
    let canonical = SWEEPABLE
        .iter()
        .find(|full| **full == param || full.rsplit('.').next() == Some(param))
        .copied();
    let Some(canonical) = canonical else {
        eprintln!(
            "error: unknown sweep parameter {param:?}; valid parameters: {}",
            SWEEPABLE.join(", ")
        );
        return Ok(ExitCode::from(USAGE_EXIT));
    };
    let values: Vec<&str> = values
        .iter()
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        eprintln!("error: sweep needs at least one value (--values v1,v2,...)");
        return Ok(ExitCode::from(USAGE_EXIT));
    }

    let (config, base_dir) = load_config(path)?;
    let sweep_dir = PathBuf::from(&config.output.dir);
    let mut rows = Vec::with_capacity(values.len());
    for value in values {
        let mut variant = config.clone();
        apply_sweep_param(&mut variant, canonical, value)?;
        let dir = sweep_dir.join(format!("{canonical}={value}"));
        println!("sweep {canonical} = {value}");
        let summary = run_into(&variant, &base_dir, &dir)?;
        rows.push(SweepRow {
            param: canonical.to_string(),
            value: value.to_string(),
            psnr_mean: summary.psnr_mean,
            psnr_std: summary.psnr_std,
            ensemble_spread: summary.ensemble_spread,
        });
    }
    let summary_path = sweep_dir.join("sweep_summary.csv");
    artifacts::write_sweep_summary_csv(&summary_path, &rows)?;
    println!("wrote {}", summary_path.display());
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [prior]
        components = [{ weight = 1.0, mean = [0.0], cov = [[1.0]] }]

        [autoencoder]
        rho = 0.001
        decoder = { kind = "explicit", w = [[1.0]], b = [0.0] }
    "#;

    #[test]
    fn sweep_params_parse_with_the_right_types() {
        let mut config = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        apply_sweep_param(&mut config, "flow.gamma", "0.5").unwrap();
        assert_eq!(config.flow.gamma, 0.5);
        apply_sweep_param(&mut config, "flow.n_particles", "64").unwrap();
        assert_eq!(config.flow.n_particles, 64);
        apply_sweep_param(&mut config, "flow.seed", "12").unwrap();
        assert_eq!(config.flow.seed, 12);
        let err = apply_sweep_param(&mut config, "flow.n_particles", "2.5").unwrap_err();
        assert!(err.to_string().contains("flow.n_particles"), "{err}");
    }

    #[test]
    fn bare_names_resolve_to_dotted_paths() {
        for (bare, full) in [("gamma", "flow.gamma"), ("sigma_y", "observation.sigma_y")] {
            let found = SWEEPABLE
                .iter()
                .find(|f| **f == bare || f.rsplit('.').next() == Some(bare))
                .copied();
            assert_eq!(found, Some(full));
        }
    }
}
