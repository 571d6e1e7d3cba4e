//! Experiment runner: each verb reads one JSON config and writes a CSV and a
//! JSON report. Exit codes: 0 on success, 2 on config errors, 3 on numerical
//! failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lsdr::harness::{
    build_configured_rule, eigen_summary_csv, run_estimate, run_matrix_convergence,
    run_mc_mode_comparison, run_quadrature_convergence, run_slice_comparison, ConvergenceReport,
    ExperimentConfig,
};

#[derive(Parser)]
#[command(
    name = "lsdr",
    version,
    about = "Quadrature-based sufficient dimension reduction experiments"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Build the configured quadrature rule and write it as JSON.
    Quadrature { config: PathBuf },
    /// Run one estimator; write the matrix JSON and an eigenvalue CSV.
    Estimate { config: PathBuf },
    /// Output-space quadrature convergence on nested Clenshaw-Curtis grids.
    ConvergeQuad { config: PathBuf },
    /// Matrix convergence over node-count and Lanczos-iteration grids.
    ConvergeMatrix { config: PathBuf },
    /// Slice-count comparison of SIR/SAVE against LSIR/LSAVE references.
    CompareSlices { config: PathBuf },
    /// Monte Carlo mode comparison of SIR and LSIR on shared samples.
    CompareMc { config: PathBuf },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn read_config(path: &PathBuf) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("cannot parse config {}: {e}", path.display()))
}

fn write_text(path: &str, text: &str) -> Result<(), String> {
    use std::io::Write;
    let mut file = lsdr::harness::create_with_parents(path)
        .map_err(|e| format!("cannot create {path}: {e}"))?;
    file.write_all(text.as_bytes())
        .map_err(|e| format!("cannot write {path}: {e}"))
}

fn finish_report(report: ConvergenceReport, config: &ExperimentConfig) -> ExitCode {
    if let Err(e) = report.write_outputs(&config.output) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_NUMERICAL);
    }
    for slope in &report.slopes {
        println!(
            "{}: slope {:.4} (residual {:.2e}, {} points)",
            slope.metric, slope.slope, slope.residual, slope.points
        );
    }
    println!("{}: {} rows", report.study, report.rows.len());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let (path, runner): (
        &PathBuf,
        fn(&ExperimentConfig) -> lsdr::Result<ConvergenceReport>,
    ) = match &cli.verb {
        Verb::Quadrature { config } => {
            return run_simple(config, |cfg| {
                let rule = build_configured_rule(cfg)?;
                let json = serde_json::to_string_pretty(&rule)?;
                if let Some(path) = &cfg.output.json {
                    write_text(path, &json).map_err(lsdr::Error::Config)?;
                } else {
                    println!("{json}");
                }
                if let Some(path) = &cfg.output.csv {
                    let mut csv = String::from("index,weight\n");
                    for (i, w) in rule.weights().iter().enumerate() {
                        csv.push_str(&format!("{i},{w}\n"));
                    }
                    write_text(path, &csv).map_err(lsdr::Error::Config)?;
                }
                println!("rule: {} nodes in dim {}", rule.len(), rule.dim());
                Ok(())
            });
        }
        Verb::Estimate { config } => {
            return run_simple(config, |cfg| {
                let matrix = run_estimate(cfg)?;
                let json = serde_json::to_string_pretty(&matrix.to_json())?;
                if let Some(path) = &cfg.output.json {
                    write_text(path, &json).map_err(lsdr::Error::Config)?;
                } else {
                    println!("{json}");
                }
                if let Some(path) = &cfg.output.csv {
                    write_text(path, &eigen_summary_csv(&matrix)).map_err(lsdr::Error::Config)?;
                }
                println!(
                    "{}: {}x{} matrix, rank {}",
                    matrix.estimator(),
                    matrix.m(),
                    matrix.m(),
                    matrix.numerical_rank()
                );
                Ok(())
            });
        }
        Verb::ConvergeQuad { config } => (config, run_quadrature_convergence),
        Verb::ConvergeMatrix { config } => (config, run_matrix_convergence),
        Verb::CompareSlices { config } => (config, run_slice_comparison),
        Verb::CompareMc { config } => (config, run_mc_mode_comparison),
    };

    let config = match read_config(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match runner(&config) {
        Ok(report) => finish_report(report, &config),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run_simple(path: &PathBuf, f: impl Fn(&ExperimentConfig) -> lsdr::Result<()>) -> ExitCode {
    let config = match read_config(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match f(&config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &lsdr::Error) -> u8 {
    match e {
        lsdr::Error::Config(_) | lsdr::Error::InvalidArgument(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}
