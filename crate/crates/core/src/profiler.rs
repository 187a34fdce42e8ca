//! Phase records, pooled statistics, speedups and linear extrapolation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::router::PowerLawFit;
use crate::timing::{ResetMode, TimingModel};

/// Allowed shortfall of a record's total against the sum of its phases.
pub const TOTAL_SLACK_MS: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("negative duration for {phase}: {value}")]
    Negative { phase: &'static str, value: f64 },
    #[error("no records to aggregate")]
    Empty,
    #[error("records mix configurations: {0}")]
    Mixed(String),
    #[error("reports differ in {0}")]
    Incomparable(&'static str),
    #[error("variant mean of {0} is zero")]
    ZeroVariant(&'static str),
    #[error("need at least {need} distinct sizes, got {got}")]
    TooFewSizes { need: usize, got: usize },
    #[error("report for n = {n} is missing phase {phase}")]
    MissingPhase { n: usize, phase: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Compile,
    Stop,
    Prepare,
    Start,
    WaitDone,
    Schedule,
    Retrieve,
    Optimizer,
    Total,
}

impl Phase {
    pub const ALL: [Phase; 9] = [
        Phase::Compile,
        Phase::Stop,
        Phase::Prepare,
        Phase::Start,
        Phase::WaitDone,
        Phase::Schedule,
        Phase::Retrieve,
        Phase::Optimizer,
        Phase::Total,
    ];

    /// Every phase except the total.
    pub const PARTS: [Phase; 8] = [
        Phase::Compile,
        Phase::Stop,
        Phase::Prepare,
        Phase::Start,
        Phase::WaitDone,
        Phase::Schedule,
        Phase::Retrieve,
        Phase::Optimizer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Compile => "compile",
            Phase::Stop => "stop",
            Phase::Prepare => "prepare",
            Phase::Start => "start",
            Phase::WaitDone => "wait_done",
            Phase::Schedule => "schedule",
            Phase::Retrieve => "retrieve",
            Phase::Optimizer => "optimizer",
            Phase::Total => "total",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrepareMode {
    Sequential,
    Parallel,
}

impl fmt::Display for PrepareMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrepareMode::Sequential => "sequential",
            PrepareMode::Parallel => "parallel",
        })
    }
}

impl std::str::FromStr for PrepareMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(PrepareMode::Sequential),
            "parallel" => Ok(PrepareMode::Parallel),
            other => Err(format!("unknown prepare mode {other:?} (expected sequential|parallel)")),
        }
    }
}

/// Raw host-side timings of one control-stack round, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTimings {
    /// Both safety stops (before upload and after retrieval).
    pub stop_ms: f64,
    pub prepare_ms: f64,
    pub start_ms: f64,
    /// From start acknowledgement until the cluster reports done, schedule included.
    pub wait_done_wall_ms: f64,
    pub retrieve_ms: f64,
    pub schedule_nominal_ms: f64,
    /// Multiplier the cluster applied to the schedule when sleeping it.
    pub dilation: f64,
    pub prepare_mode: PrepareMode,
    pub reset_mode: ResetMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordIndex {
    pub run: usize,
    pub iteration: usize,
    pub qubits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub run: usize,
    pub iteration: usize,
    pub qubits: usize,
    pub reset: ResetMode,
    pub prepare_mode: PrepareMode,
    pub compile_ms: f64,
    pub stop_ms: f64,
    pub prepare_ms: f64,
    pub start_ms: f64,
    pub wait_done_net_ms: f64,
    pub schedule_ms: f64,
    pub retrieve_ms: f64,
    pub optimizer_ms: f64,
    pub total_ms: f64,
}

impl PhaseRecord {
    pub fn get(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Compile => self.compile_ms,
            Phase::Stop => self.stop_ms,
            Phase::Prepare => self.prepare_ms,
            Phase::Start => self.start_ms,
            Phase::WaitDone => self.wait_done_net_ms,
            Phase::Schedule => self.schedule_ms,
            Phase::Retrieve => self.retrieve_ms,
            Phase::Optimizer => self.optimizer_ms,
            Phase::Total => self.total_ms,
        }
    }

    pub fn parts_sum(&self) -> f64 {
        Phase::PARTS.iter().map(|&p| self.get(p)).sum()
    }
}

/// Turns raw timings into a phase record.
///
/// The wait-done phase is netted of the slept schedule time and clamped at zero.
/// The schedule phase is always the nominal (virtual) duration, and the total
/// swaps the slept schedule share of `wall_total_ms` for the nominal one, so
/// dilation never shows in the breakdown. Without a wall total the sum of the
/// phases is used.
pub fn record_iteration(
    index: RecordIndex,
    timings: &IterationTimings,
    compile_ms: f64,
    optimizer_ms: f64,
    wall_total_ms: Option<f64>,
) -> Result<PhaseRecord, ProfileError> {
    let checks = [
        ("stop", timings.stop_ms),
        ("prepare", timings.prepare_ms),
        ("start", timings.start_ms),
        ("wait_done", timings.wait_done_wall_ms),
        ("retrieve", timings.retrieve_ms),
        ("schedule", timings.schedule_nominal_ms),
        ("dilation", timings.dilation),
        ("compile", compile_ms),
        ("optimizer", optimizer_ms),
        ("total", wall_total_ms.unwrap_or(0.0)),
    ];
    if let Some(&(phase, value)) = checks.iter().find(|c| !(c.1 >= 0.0)) {
        return Err(ProfileError::Negative { phase, value });
    }
    let slept = timings.schedule_nominal_ms * timings.dilation;
    let mut rec = PhaseRecord {
        run: index.run,
        iteration: index.iteration,
        qubits: index.qubits,
        reset: timings.reset_mode,
        prepare_mode: timings.prepare_mode,
        compile_ms,
        stop_ms: timings.stop_ms,
        prepare_ms: timings.prepare_ms,
        start_ms: timings.start_ms,
        wait_done_net_ms: (timings.wait_done_wall_ms - slept).max(0.0),
        schedule_ms: timings.schedule_nominal_ms,
        retrieve_ms: timings.retrieve_ms,
        optimizer_ms,
        total_ms: 0.0,
    };
    rec.total_ms = match wall_total_ms {
        Some(wall) => (wall - slept).max(0.0) + timings.schedule_nominal_ms,
        None => rec.parts_sum(),
    };
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub mean_ms: f64,
    /// Root-mean-square deviation from the mean (population standard deviation).
    pub std_ms: f64,
    pub count: usize,
}

impl PhaseStats {
    pub fn from_samples(xs: &[f64]) -> Self {
        let k = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / k;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / k;
        PhaseStats {
            mean_ms: mean,
            std_ms: var.sqrt(),
            count: xs.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub qubits: usize,
    pub shots: u64,
    pub reset: ResetMode,
    pub prepare: PrepareMode,
    pub runs: usize,
    pub seed: u64,
    pub profile: String,
    #[serde(default)]
    pub dilation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub meta: ReportMeta,
    pub phases: BTreeMap<Phase, PhaseStats>,
}

impl AggregateReport {
    pub fn mean(&self, phase: Phase) -> f64 {
        self.phases.get(&phase).map_or(0.0, |s| s.mean_ms)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("phase,mean_ms,std_ms\n");
        for p in Phase::ALL {
            if let Some(s) = self.phases.get(&p) {
                out.push_str(&format!("{},{:.6},{:.6}\n", p, s.mean_ms, s.std_ms));
            }
        }
        out
    }

    /// Sum of all non-total phase means.
    pub fn parts_mean_sum(&self) -> f64 {
        Phase::PARTS.iter().map(|&p| self.mean(p)).sum()
    }
}

/// Pools records across runs into per-phase mean and RMS deviation.
pub fn aggregate(records: &[PhaseRecord], meta: ReportMeta) -> Result<AggregateReport, ProfileError> {
    if records.is_empty() {
        return Err(ProfileError::Empty);
    }
    if let Some(r) = records
        .iter()
        .find(|r| r.qubits != meta.qubits || r.reset != meta.reset || r.prepare_mode != meta.prepare)
    {
        return Err(ProfileError::Mixed(format!(
            "record (run {}, iteration {}) is {} qubits/{}/{}, report is {} qubits/{}/{}",
            r.run, r.iteration, r.qubits, r.reset, r.prepare_mode, meta.qubits, meta.reset, meta.prepare
        )));
    }
    let phases = Phase::ALL
        .iter()
        .map(|&p| {
            let xs: Vec<f64> = records.iter().map(|r| r.get(p)).collect();
            (p, PhaseStats::from_samples(&xs))
        })
        .collect();
    Ok(AggregateReport { meta, phases })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Speedup {
    pub total: f64,
    pub phases: BTreeMap<Phase, f64>,
}

/// Ratio of baseline to variant means, overall and per phase. Phases whose
/// variant mean is zero are left out of the per-phase map.
pub fn compute_speedup(baseline: &AggregateReport, variant: &AggregateReport) -> Result<Speedup, ProfileError> {
    if baseline.meta.qubits != variant.meta.qubits {
        return Err(ProfileError::Incomparable("qubits"));
    }
    if baseline.meta.shots != variant.meta.shots {
        return Err(ProfileError::Incomparable("shots"));
    }
    let vt = variant.mean(Phase::Total);
    if vt == 0.0 {
        return Err(ProfileError::ZeroVariant("total"));
    }
    let phases = Phase::PARTS
        .iter()
        .filter(|&&p| variant.mean(p) != 0.0)
        .map(|&p| (p, baseline.mean(p) / variant.mean(p)))
        .collect();
    Ok(Speedup {
        total: baseline.mean(Phase::Total) / vt,
        phases,
    })
}

/// Speedup of `baseline`'s total if only `phase` were replaced by the variant's value.
pub fn isolated_speedup(baseline: &AggregateReport, variant: &AggregateReport, phase: Phase) -> Result<f64, ProfileError> {
    let base = baseline.mean(Phase::Total);
    let reduced = base - (baseline.mean(phase) - variant.mean(phase));
    if reduced <= 0.0 {
        return Err(ProfileError::ZeroVariant(phase.name()));
    }
    Ok(base / reduced)
}

/// Schedule speedup of active over passive reset for a given per-shot circuit time.
/// Shot count cancels out.
pub fn schedule_speedup(t: &TimingModel, circuit_time: f64, shots: u64) -> f64 {
    let s = shots as f64;
    s * (t.passive_reset + circuit_time) / (s * (t.active_reset + circuit_time))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl LinearFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Ordinary least squares line. R² is 1 for data with zero variance.
pub fn fit_linear(points: &[(f64, f64)]) -> Result<LinearFit, ProfileError> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 2 {
        return Err(ProfileError::TooFewSizes { need: 2, got: xs.len() });
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        let ss_res: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
        1.0 - ss_res / syy
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Extra schedule time from routing SWAPs: each SWAP is three two-qubit gates, every shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapOverhead {
    pub fit: PowerLawFit,
    pub shots: u64,
    pub gate_2q: f64,
}

impl SwapOverhead {
    pub fn seconds_at(&self, n: f64) -> f64 {
        self.shots as f64 * self.fit.eval(n) * 3.0 * self.gate_2q
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationRow {
    pub phase: Phase,
    pub runtime_s: f64,
    pub fit: Option<LinearFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationTable {
    pub target: usize,
    /// Target lies inside the measured range.
    pub interpolated: bool,
    pub swap_overhead_s: f64,
    pub rows: Vec<ExtrapolationRow>,
}

impl ExtrapolationTable {
    pub fn get(&self, phase: Phase) -> Option<f64> {
        self.rows.iter().find(|r| r.phase == phase).map(|r| r.runtime_s)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("phase,runtime_s_at_target\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:.6}\n", r.phase, r.runtime_s));
        }
        s
    }
}

/// Fits a line through each phase mean versus qubit count and evaluates it at
/// `target`. The schedule row additionally carries the SWAP overhead; the total
/// row is the sum of the phase rows.
pub fn extrapolate(
    reports: &[AggregateReport],
    target: usize,
    swap: Option<&SwapOverhead>,
) -> Result<ExtrapolationTable, ProfileError> {
    let mut sizes: Vec<usize> = reports.iter().map(|r| r.meta.qubits).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(ProfileError::TooFewSizes { need: 3, got: sizes.len() });
    }
    let swap_s = swap.map_or(0.0, |s| s.seconds_at(target as f64));
    let mut rows = Vec::with_capacity(Phase::ALL.len());
    for phase in Phase::PARTS {
        let points = reports
            .iter()
            .map(|r| {
                r.phases
                    .get(&phase)
                    .map(|s| (r.meta.qubits as f64, s.mean_ms / 1e3))
                    .ok_or(ProfileError::MissingPhase {
                        n: r.meta.qubits,
                        phase: phase.name(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let fit = fit_linear(&points)?;
        let mut runtime_s = fit.eval(target as f64);
        if phase == Phase::Schedule {
            runtime_s += swap_s;
        }
        rows.push(ExtrapolationRow {
            phase,
            runtime_s,
            fit: Some(fit),
        });
    }
    let total = rows.iter().map(|r| r.runtime_s).sum();
    rows.push(ExtrapolationRow {
        phase: Phase::Total,
        runtime_s: total,
        fit: None,
    });
    Ok(ExtrapolationTable {
        target,
        interpolated: target <= *sizes.last().expect("non-empty"),
        swap_overhead_s: swap_s,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn timings(wait: f64, sched: f64, dilation: f64) -> IterationTimings {
        IterationTimings {
            stop_ms: 19.5,
            prepare_ms: 207.2,
            start_ms: 57.1,
            wait_done_wall_ms: wait,
            retrieve_ms: 58.9,
            schedule_nominal_ms: sched,
            dilation,
            prepare_mode: PrepareMode::Sequential,
            reset_mode: ResetMode::Passive,
        }
    }

    fn idx() -> RecordIndex {
        RecordIndex {
            run: 0,
            iteration: 0,
            qubits: 4,
        }
    }

    fn meta(qubits: usize) -> ReportMeta {
        ReportMeta {
            qubits,
            shots: 1000,
            reset: ResetMode::Passive,
            prepare: PrepareMode::Sequential,
            runs: 1,
            seed: 0,
            profile: "test".into(),
            dilation: 1.0,
        }
    }

    fn rec_with(total: f64) -> PhaseRecord {
        let mut r = record_iteration(idx(), &timings(268.0, 211.7, 1.0), 1.0, 0.5, None).unwrap();
        r.total_ms = total;
        r
    }

    #[test]
    fn wait_done_netting() {
        let r = record_iteration(idx(), &timings(268.0, 211.7, 1.0), 0.0, 0.0, None).unwrap();
        assert!((r.wait_done_net_ms - 56.3).abs() < 1e-9);
        assert_eq!(r.schedule_ms, 211.7);

        let r = record_iteration(idx(), &timings(56.0, 211.7, 0.0), 0.0, 0.0, None).unwrap();
        assert_eq!(r.wait_done_net_ms, 56.0);
        assert_eq!(r.schedule_ms, 211.7);

        let r = record_iteration(idx(), &timings(200.0, 211.7, 1.0), 0.0, 0.0, None).unwrap();
        assert_eq!(r.wait_done_net_ms, 0.0);
    }

    #[test]
    fn total_uses_nominal_schedule() {
        let r = record_iteration(idx(), &timings(56.3, 211.7, 0.0), 2.0, 0.5, Some(400.0)).unwrap();
        assert!((r.total_ms - 611.7).abs() < 1e-9);
        let r = record_iteration(idx(), &timings(268.0, 211.7, 1.0), 2.0, 0.5, Some(700.0)).unwrap();
        assert!((r.total_ms - 700.0).abs() < 1e-9);
    }

    #[test]
    fn negative_input_rejected() {
        let err = record_iteration(idx(), &timings(-1.0, 1.0, 1.0), 0.0, 0.0, None).unwrap_err();
        assert_eq!(err, ProfileError::Negative { phase: "wait_done", value: -1.0 });
        assert!(record_iteration(idx(), &timings(1.0, 1.0, 1.0), -0.1, 0.0, None).is_err());
    }

    #[test]
    fn population_statistics() {
        let r = aggregate(&[rec_with(10.0), rec_with(20.0)], meta(4)).unwrap();
        let t = r.phases[&Phase::Total];
        assert_eq!((t.mean_ms, t.std_ms, t.count), (15.0, 5.0, 2));
        let r = aggregate(&[rec_with(10.0)], meta(4)).unwrap();
        assert_eq!(r.phases[&Phase::Total].std_ms, 0.0);
    }

    #[test]
    fn aggregate_rejects_mixed_or_empty() {
        assert_eq!(aggregate(&[], meta(4)).unwrap_err(), ProfileError::Empty);
        assert!(matches!(aggregate(&[rec_with(1.0)], meta(6)), Err(ProfileError::Mixed(_))));
    }

    fn synthetic(qubits: usize, reset: ResetMode, prepare: PrepareMode, values: &[(Phase, f64)]) -> AggregateReport {
        AggregateReport {
            meta: ReportMeta {
                reset,
                prepare,
                ..meta(qubits)
            },
            phases: values
                .iter()
                .map(|&(p, v)| (p, PhaseStats { mean_ms: v, std_ms: 0.0, count: 1 }))
                .collect(),
        }
    }

    #[test]
    fn table_speedups() {
        use Phase::*;
        let base = synthetic(4, ResetMode::Passive, PrepareMode::Sequential, &[(Total, 694.8), (Prepare, 207.2)]);
        let active = synthetic(4, ResetMode::Active, PrepareMode::Sequential, &[(Total, 495.7), (Prepare, 207.2)]);
        let parallel = synthetic(4, ResetMode::Active, PrepareMode::Parallel, &[(Total, 348.8), (Prepare, 73.9)]);

        let s = compute_speedup(&base, &active).unwrap();
        assert_eq!(format!("{:.2}", s.total), "1.40");
        let s = compute_speedup(&active, &parallel).unwrap();
        assert_eq!(format!("{:.2}", s.total), "1.42");
        let iso = isolated_speedup(&active, &parallel, Prepare).unwrap();
        assert_eq!(format!("{iso:.2}"), "1.37");
        assert_eq!(compute_speedup(&base, &base).unwrap().total, 1.0);

        let zero = synthetic(4, ResetMode::Active, PrepareMode::Sequential, &[(Total, 0.0)]);
        assert_eq!(compute_speedup(&base, &zero).unwrap_err(), ProfileError::ZeroVariant("total"));
        let other = synthetic(6, ResetMode::Active, PrepareMode::Sequential, &[(Total, 1.0)]);
        assert!(compute_speedup(&base, &other).is_err());
    }

    #[test]
    fn schedule_speedup_examples() {
        let t = TimingModel::default();
        let s = schedule_speedup(&t, 11.7e-6, 1000);
        assert!((s - 211.7 / 12.7).abs() < 1e-9);
        assert_eq!(format!("{s:.2}"), "16.67");
        let same = TimingModel {
            active_reset: t.passive_reset,
            ..t
        };
        assert_eq!(schedule_speedup(&same, 11.7e-6, 1000), 1.0);
        let long = schedule_speedup(&t, 1.0, 1000);
        assert!(long > 1.0 && long < 1.001);
        assert!(schedule_speedup(&t, 1e-3, 1) > schedule_speedup(&t, 1e-2, 1));
    }

    #[test]
    fn linear_fits() {
        let f = fit_linear(&[(4.0, 1.0), (14.0, 2.0)]).unwrap();
        assert!((f.eval(50.0) - 5.6).abs() < 1e-12);
        let f = fit_linear(&[(4.0, 3.0), (6.0, 3.0), (8.0, 3.0)]).unwrap();
        assert_eq!((f.slope, f.r_squared), (0.0, 1.0));
        assert_eq!(
            fit_linear(&[(4.0, 1.0), (4.0, 2.0)]).unwrap_err(),
            ProfileError::TooFewSizes { need: 2, got: 1 }
        );
    }

    #[test]
    fn swap_term_formula() {
        let s = SwapOverhead {
            fit: PowerLawFit {
                coefficient: 0.1,
                exponent: 1.7,
                residual: 0.0,
            },
            shots: 1000,
            gate_2q: 100e-9,
        };
        let direct = 0.1 * 50f64.powf(1.7) * 3.0 * 100e-9 * 1000.0;
        assert!((s.seconds_at(50.0) - direct).abs() < 1e-15);
        assert!((s.seconds_at(50.0) - 0.02319).abs() < 1e-5);
    }

    #[test]
    fn extrapolation_needs_three_sizes() {
        let r = synthetic(4, ResetMode::Active, PrepareMode::Parallel, &[]);
        let err = extrapolate(&[r.clone(), r], 50, None).unwrap_err();
        assert_eq!(err, ProfileError::TooFewSizes { need: 3, got: 1 });
    }

    #[test]
    fn csv_shapes() {
        let r = aggregate(&[rec_with(10.0)], meta(4)).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("phase,mean_ms,std_ms\ncompile,"));
        assert_eq!(csv.lines().count(), 10);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert!(json["phases"]["wait_done"]["mean_ms"].is_number());
        assert_eq!(json["meta"]["qubits"], 4);
    }
}
