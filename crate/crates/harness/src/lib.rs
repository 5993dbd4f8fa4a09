//! Experiment commands behind the `saa` binary.
//!
//! Each command takes a resolved [`HarnessConfig`], does its work
//! single-threaded and returns a typed result; the binary turns results into
//! CSV output and exit codes.

pub mod commands;
pub mod config;

use thiserror::Error;

pub use commands::{
    bench, cluster, compare, equivalence, sweep_ratio, BenchRecord, EquivalenceReport, SweepResult, SweepRow,
};
pub use config::{HarnessConfig, Settings, SyntheticSpec, TokenSource};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Io(String),

    #[error(transparent)]
    Core(#[from] saa_core::Error),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

/// Commands accepted by the binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Cluster,
    Equivalence,
    SweepRatio,
    Bench,
    Compare,
}

/// Runs `command` and writes its report. `Ok(false)` means a failed check.
pub fn run(command: Command, cfg: &HarnessConfig) -> Result<bool, HarnessError> {
    match command {
        Command::Cluster => {
            let r = cluster(cfg)?;
            eprintln!("clustered {} tokens into {} clusters", r.assignment.len(), r.cluster_count());
            Ok(true)
        }
        Command::Equivalence => {
            let report = equivalence(cfg)?;
            for (n, err) in &report.per_size {
                println!("N={n} max_relative_error={err:e}");
            }
            let pass = report.passes();
            println!("max_relative_error={:e} {}", report.max_error(), if pass { "PASS" } else { "FAIL" });
            Ok(pass)
        }
        Command::SweepRatio => {
            let result = sweep_ratio(cfg)?;
            for (ratio, mean) in result.mean_error_by_ratio() {
                eprintln!("keep_ratio={ratio} mean_frobenius_error={mean:.6}");
            }
            commands::with_output(cfg, |w| result.write_csv(w))?;
            Ok(true)
        }
        Command::Bench => {
            let records = bench(cfg)?;
            commands::with_output(cfg, |w| commands::write_bench_csv(w, &records))?;
            Ok(true)
        }
        Command::Compare => {
            let reports = compare(cfg)?;
            commands::with_output(cfg, |w| Ok(saa_core::oracles::write_reports_csv(w, &reports)?))?;
            Ok(true)
        }
    }
}
