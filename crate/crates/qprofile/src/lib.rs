//! Benchmark harness: runs the QAOA Max-Cut workload against a control
//! cluster, records phase timings and writes reports.

use std::io;
use std::path::Path;

use thiserror::Error;

pub mod bench;
pub mod studies;

pub use bench::{run_benchmark, BenchmarkConfig, BenchmarkResult, CellResult, ClusterTarget, RunSummary};
pub use studies::{load_reports, run_extrapolation, run_swap_study, select_reports};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot reach the cluster: {0}")]
    Startup(#[source] io::Error),
    #[error(transparent)]
    Client(#[from] qprofile_stack::ClientError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error(transparent)]
    Circuit(#[from] qprofile_core::circuit::CircuitError),
    #[error(transparent)]
    Compile(#[from] qprofile_core::compiler::CompileError),
    #[error(transparent)]
    Problem(#[from] qprofile_core::problem::ProblemError),
    #[error(transparent)]
    Simulation(#[from] qprofile_core::statevector::SimError),
    #[error(transparent)]
    Optimizer(#[from] qprofile_core::optimizer::OptimizerError),
    #[error(transparent)]
    Profile(#[from] qprofile_core::profiler::ProfileError),
    #[error(transparent)]
    Router(#[from] qprofile_core::router::RouterError),
}

impl HarnessError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// True for failures talking to the cluster.
    pub fn is_transport(&self) -> bool {
        matches!(self, HarnessError::Startup(_) | HarnessError::Client(_))
    }
}

pub mod reference {
    //! Baseline per-iteration phase means measured at 4 qubits, 1000 shots, in ms.

    use qprofile_core::profiler::{AggregateReport, Phase};

    pub const BASELINE_4Q: [(Phase, f64); 6] = [
        (Phase::Stop, 19.5),
        (Phase::Prepare, 207.2),
        (Phase::Start, 57.1),
        (Phase::WaitDone, 56.3),
        (Phase::Retrieve, 58.9),
        (Phase::Schedule, 211.7),
    ];

    pub const PARALLEL_PREPARE_MS: f64 = 73.9;

    #[derive(Debug, Clone, PartialEq)]
    pub struct Comparison {
        pub phase: Phase,
        pub expected: f64,
        pub actual: f64,
        pub ok: bool,
    }

    /// Compares report means against `refs` within a relative tolerance.
    pub fn compare(report: &AggregateReport, refs: &[(Phase, f64)], rel_tol: f64) -> Vec<Comparison> {
        refs.iter()
            .map(|&(phase, expected)| {
                let actual = report.mean(phase);
                Comparison {
                    phase,
                    expected,
                    actual,
                    ok: (actual - expected).abs() <= rel_tol * expected,
                }
            })
            .collect()
    }
}

/// Parses `4,6,8`, `4..14` (inclusive) or `4..14:2`.
pub fn parse_qubits(s: &str) -> Result<Vec<usize>, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("not a qubit count: {t:?}"));
    if let Some((lo, rest)) = s.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((h, st)) => (num(h)?, num(st)?),
            None => (num(rest)?, 1),
        };
        let lo = num(lo)?;
        if step == 0 || lo > hi {
            return Err(format!("empty range {s:?}"));
        }
        return Ok((lo..=hi).step_by(step).collect());
    }
    s.split(',').map(num).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qubit_lists_and_ranges() {
        assert_eq!(parse_qubits("4,6").unwrap(), vec![4, 6]);
        assert_eq!(parse_qubits("4..7").unwrap(), vec![4, 5, 6, 7]);
        assert_eq!(parse_qubits("4..14:2").unwrap(), vec![4, 6, 8, 10, 12, 14]);
        assert!(parse_qubits("9..4").is_err());
        assert!(parse_qubits("4,x").is_err());
    }
}
