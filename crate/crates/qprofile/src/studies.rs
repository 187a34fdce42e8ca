//! SWAP-scaling study and extrapolation of measured reports.

use std::collections::BTreeMap;
use std::path::Path;

use qprofile_core::profiler::{extrapolate, AggregateReport, ExtrapolationTable, SwapOverhead};
use qprofile_core::router::{swap_scaling_experiment, PowerLawFit, SwapScaling};
use qprofile_core::{PrepareMode, ResetMode, TimingModel};

use crate::HarnessError;

/// Mean SWAP counts per size over generated instances, plus the power-law fit.
pub fn run_swap_study(ns: &[usize], instances: usize, layers: usize, seed: u64) -> Result<SwapScaling, HarnessError> {
    if instances == 0 {
        return Err(HarnessError::Config("need at least one instance per size".into()));
    }
    if let Some(n) = ns.iter().find(|&&n| n < 2) {
        return Err(HarnessError::Config(format!("cannot route {n} qubits")));
    }
    Ok(swap_scaling_experiment(ns, instances, layers, seed)?)
}

/// Loads every `*.report.json` in `dir`.
pub fn load_reports(dir: &Path) -> Result<Vec<AggregateReport>, HarnessError> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.file_name().and_then(|f| f.to_str()).is_some_and(|f| f.ends_with(".report.json")))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
            AggregateReport::from_json(&text)
                .map_err(|e| HarnessError::Config(format!("{} is not a report: {e}", p.display())))
        })
        .collect()
}

/// Picks one (reset, prepare) configuration out of a mixed report set. Without a
/// preference, a single configuration is used as is; otherwise active reset
/// with parallel prepare is preferred.
pub fn select_reports(
    reports: Vec<AggregateReport>,
    want: Option<(ResetMode, PrepareMode)>,
) -> Result<Vec<AggregateReport>, HarnessError> {
    let mut groups: BTreeMap<(String, String), Vec<AggregateReport>> = BTreeMap::new();
    for r in reports {
        groups
            .entry((r.meta.reset.to_string(), r.meta.prepare.to_string()))
            .or_default()
            .push(r);
    }
    let key = |(r, p): (ResetMode, PrepareMode)| (r.to_string(), p.to_string());
    let chosen = match want {
        Some(w) => groups.remove(&key(w)),
        None if groups.len() == 1 => groups.into_values().next(),
        None => groups.remove(&key((ResetMode::Active, PrepareMode::Parallel))),
    };
    chosen.ok_or_else(|| HarnessError::Config("no reports for the requested configuration".into()))
}

/// Linear extrapolation of the measured phase means to `target` qubits, with the
/// SWAP overhead added to the schedule phase when a fit is given.
pub fn run_extrapolation(
    reports: &[AggregateReport],
    target: usize,
    swap_fit: Option<PowerLawFit>,
    timing: &TimingModel,
) -> Result<ExtrapolationTable, HarnessError> {
    let first = reports
        .first()
        .ok_or_else(|| HarnessError::Config("no reports to extrapolate".into()))?;
    if reports.iter().any(|r| r.meta.shots != first.meta.shots) {
        return Err(HarnessError::Config("reports mix shot counts".into()));
    }
    let swap = swap_fit.map(|fit| SwapOverhead {
        fit,
        shots: first.meta.shots,
        gate_2q: timing.gate_2q,
    });
    Ok(extrapolate(reports, target, swap.as_ref())?)
}
