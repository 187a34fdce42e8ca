//! The QAOA benchmark loop: compile, run on the cluster, substitute simulated
//! measurements, update parameters, record every phase.

use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use qprofile_core::compiler::{compile, DeviceMap, Topology};
use qprofile_core::optimizer::{minimize, qaoa_objective, OptimizerConfig, Termination};
use qprofile_core::problem::{best_observed, brute_force_max_cut, BRUTE_FORCE_LIMIT};
use qprofile_core::profiler::{aggregate, record_iteration, AggregateReport, PhaseRecord, RecordIndex, ReportMeta};
use qprofile_core::statevector::{derive_seed, sample, simulate, MAX_QUBITS};
use qprofile_core::{
    build_qaoa, generate_instance, simplify, PrepareMode, ProblemGraph, QaoaParams, ResetMode, ShotCounts, TimingModel,
};
use qprofile_stack::{serve, ClusterConfig, ClusterServer, StackClient};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClusterTarget {
    /// Launch a cluster in-process on a loopback port.
    Embedded,
    Remote(String),
}

impl std::str::FromStr for ClusterTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "embedded" => Ok(ClusterTarget::Embedded),
            addr if addr.contains(':') => Ok(ClusterTarget::Remote(addr.to_owned())),
            other => Err(format!("expected `embedded` or host:port, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub qubits: Vec<usize>,
    pub shots: u64,
    pub runs: usize,
    pub layers: usize,
    pub reset: ResetMode,
    pub prepare: PrepareMode,
    /// Overrides the profile's dilation when set.
    pub dilation: Option<f64>,
    pub seed: u64,
    pub cluster_config: ClusterConfig,
    /// Label stored in report metadata, usually the profile file name.
    pub profile_name: String,
    pub cluster: ClusterTarget,
    pub out: Option<PathBuf>,
    pub timing: TimingModel,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            qubits: vec![4, 6, 8, 10, 12, 14],
            shots: 1000,
            runs: 40,
            layers: 2,
            reset: ResetMode::Passive,
            prepare: PrepareMode::Sequential,
            dilation: None,
            seed: 0,
            cluster_config: ClusterConfig::default(),
            profile_name: "default".into(),
            cluster: ClusterTarget::Embedded,
            out: None,
            timing: TimingModel::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.qubits.is_empty() {
            return bad("no qubit counts given".into());
        }
        if let Some(n) = self.qubits.iter().find(|&&n| !(2..=MAX_QUBITS).contains(&n)) {
            return bad(format!("qubit count {n} outside 2..={MAX_QUBITS}"));
        }
        if self.shots == 0 {
            return bad("shots must be at least 1".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.layers == 0 {
            return bad("at least one QAOA layer is required".into());
        }
        if let Some(d) = self.dilation {
            if !(d >= 0.0 && d.is_finite()) {
                return bad(format!("dilation must be finite and non-negative, got {d}"));
            }
        }
        self.cluster_config.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let max_n = self.qubits.iter().copied().max().unwrap_or(0);
        let capacity = DeviceMap::from_topology(&self.cluster_config.topology, max_n).qubits.len();
        if capacity < max_n {
            return bad(format!("cluster topology maps {capacity} qubits, {max_n} requested"));
        }
        self.timing.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    /// Grows a default-sized topology to fit the largest requested qubit count.
    pub fn fit_topology(&mut self) {
        let max_n = self.qubits.iter().copied().max().unwrap_or(0);
        if self.cluster_config.topology == Topology::default() && max_n > 14 {
            self.cluster_config.topology = Topology::for_qubits(max_n);
        }
    }

    fn effective_cluster_config(&self) -> ClusterConfig {
        let mut c = self.cluster_config.clone();
        if let Some(d) = self.dilation {
            c.profile.dilation = d;
        }
        c
    }
}

/// Outcome of one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub iterations: usize,
    pub best_params: Vec<f64>,
    pub best_value: f64,
    pub terminated_by: Termination,
    /// Highest-cut bitstring among the shots sampled at the best parameters.
    pub best_bitstring: String,
    pub best_cut: usize,
    pub max_cut: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run: usize,
    pub iteration: usize,
    pub error: String,
}

/// Results for one qubit count.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub report: AggregateReport,
    pub records: Vec<PhaseRecord>,
    pub runs: Vec<RunSummary>,
    pub failures: Vec<RunFailure>,
}

impl CellResult {
    pub fn file_stem(&self) -> String {
        let m = &self.report.meta;
        format!("q{}_{}_{}", m.qubits, m.reset, m.prepare)
    }

    /// Writes `<stem>.report.json`, `.csv`, `.records.json` and `.runs.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let stem = self.file_stem();
        let files = [
            ("report.json", self.report.to_json()),
            ("csv", self.report.to_csv()),
            ("records.json", serde_json::to_string_pretty(&self.records).expect("records serialize")),
            (
                "runs.json",
                serde_json::to_string_pretty(&serde_json::json!({"runs": self.runs, "failures": self.failures}))
                    .expect("runs serialize"),
            ),
        ];
        for (ext, body) in files {
            let p = dir.join(format!("{stem}.{ext}"));
            std::fs::write(&p, body).map_err(|e| HarnessError::io(&p, e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkResult {
    pub cells: Vec<CellResult>,
}

impl BenchmarkResult {
    pub fn cell(&self, n: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.report.meta.qubits == n)
    }
}

/// Runs every configured qubit count, one after another.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkResult, HarnessError> {
    cfg.validate()?;
    let cluster_cfg = cfg.effective_cluster_config();
    // keep the embedded server alive for the whole benchmark
    let (_server, addr): (Option<ClusterServer>, String) = match &cfg.cluster {
        ClusterTarget::Embedded => {
            let s = serve("127.0.0.1:0", cluster_cfg.clone()).map_err(HarnessError::Startup)?;
            let a = s.addr().to_string();
            (Some(s), a)
        }
        ClusterTarget::Remote(a) => (None, a.clone()),
    };
    let mut client = StackClient::connect(&addr).map_err(HarnessError::Startup)?;

    let mut cells = Vec::with_capacity(cfg.qubits.len());
    for &n in &cfg.qubits {
        log::info!("benchmarking {n} qubits ({} runs, {}, {})", cfg.runs, cfg.reset, cfg.prepare);
        let cell = run_cell(cfg, &cluster_cfg, &mut client, n)?;
        if let Some(dir) = &cfg.out {
            cell.write(dir)?;
        }
        cells.push(cell);
    }
    Ok(BenchmarkResult { cells })
}

struct Iteration {
    record: PhaseRecord,
    counts: ShotCounts,
}

fn run_cell(
    cfg: &BenchmarkConfig,
    cluster_cfg: &ClusterConfig,
    client: &mut StackClient,
    n: usize,
) -> Result<CellResult, HarnessError> {
    let graph = generate_instance(n, cfg.seed)?;
    let device = DeviceMap::from_topology(&cluster_cfg.topology, n);
    let max_cut = (n <= BRUTE_FORCE_LIMIT)
        .then(|| brute_force_max_cut(&graph).map(|(c, _)| c))
        .transpose()?;

    let mut records = Vec::new();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for run in 0..cfg.runs {
        match run_once(cfg, cluster_cfg, client, &graph, &device, run) {
            Ok((iters, summary)) => {
                records.extend(iters.into_iter().map(|i| i.record));
                runs.push(RunSummary { max_cut, ..summary });
            }
            Err((iteration, e)) => {
                log::warn!("run {run} ({n} qubits) failed at iteration {iteration}: {e}");
                failures.push(RunFailure {
                    run,
                    iteration,
                    error: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    if records.is_empty() {
        return Err(first_error.unwrap_or(HarnessError::Config("no runs".into())));
    }
    let meta = ReportMeta {
        qubits: n,
        shots: cfg.shots,
        reset: cfg.reset,
        prepare: cfg.prepare,
        runs: cfg.runs,
        seed: cfg.seed,
        profile: cfg.profile_name.clone(),
        dilation: cluster_cfg.profile.dilation,
    };
    let report = aggregate(&records, meta)?;
    Ok(CellResult {
        report,
        records,
        runs,
        failures,
    })
}

type RunOutput = (Vec<Iteration>, RunSummary);

fn run_once(
    cfg: &BenchmarkConfig,
    cluster_cfg: &ClusterConfig,
    client: &mut StackClient,
    graph: &ProblemGraph,
    device: &DeviceMap,
    run: usize,
) -> Result<RunOutput, (usize, HarnessError)> {
    let n = graph.n();
    let profile = &cluster_cfg.profile;
    let virtual_time = profile.virtual_time;
    let compile_overhead_ms = profile.compile_overhead_ms(n);

    let mut iters: Vec<Iteration> = Vec::new();
    let mut failure: Option<HarnessError> = None;
    let mut last_return = Instant::now();

    let mut objective = |x: &[f64]| -> f64 {
        let entered = Instant::now();
        let index = RecordIndex {
            run,
            iteration: iters.len(),
            qubits: n,
        };
        let mut step = || -> Result<f64, HarnessError> {
            let params = QaoaParams::from_flat(x)?;
            let circuit = simplify(&build_qaoa(graph, &params));
            let job = compile(&circuit, cfg.shots, cfg.reset, &cfg.timing, device)?;
            let compile_ms = if virtual_time {
                compile_overhead_ms
            } else {
                sleep_ms(compile_overhead_ms);
                ms_since(entered)
            };

            let outcome = client.run_iteration(&job, cfg.prepare)?;
            // the cluster's acquisition is noise; the optimizer sees simulated shots instead
            drop(outcome.acquisitions);
            let substitution = Instant::now();
            let state = simulate(&circuit)?;
            let counts = sample(&state, cfg.shots, derive_seed(cfg.seed, run as u64, index.iteration as u64))?;
            let substitution_ms = ms_since(substitution);

            let objective_start = Instant::now();
            let value = qaoa_objective(graph, &counts)?;
            let optimizer_ms = if virtual_time {
                0.0
            } else {
                entered.duration_since(last_return).as_secs_f64() * 1e3 + ms_since(objective_start)
            };
            let wall_total = (!virtual_time).then(|| {
                entered.duration_since(last_return).as_secs_f64() * 1e3 + ms_since(entered) - substitution_ms
            });
            let record = record_iteration(index, &outcome.timings, compile_ms, optimizer_ms, wall_total)?;
            iters.push(Iteration { record, counts });
            Ok(value)
        };
        let value = match step() {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::NAN
            }
        };
        last_return = Instant::now();
        value
    };

    let opt_cfg = OptimizerConfig::for_angles(2 * cfg.layers, derive_seed(cfg.seed, run as u64, u64::MAX));
    let result = minimize(&mut objective, &opt_cfg);
    let at = iters.len();
    if let Some(e) = failure {
        return Err((at, e));
    }
    let trace = result.map_err(|e| (at, HarnessError::from(e)))?;

    let best_index = trace
        .evaluations
        .iter()
        .position(|e| e.value == trace.best_value)
        .expect("best value comes from an evaluation");
    let (best_cut, best_bitstring) = best_observed(graph, &iters[best_index].counts).map_err(|e| (at, e.into()))?;
    let summary = RunSummary {
        run,
        iterations: trace.iterations,
        best_params: trace.best_params.clone(),
        best_value: trace.best_value,
        terminated_by: trace.terminated_by,
        best_bitstring,
        best_cut,
        max_cut: None,
    };
    Ok((iters, summary))
}

fn sleep_ms(ms: f64) {
    if ms > 0.0 {
        thread::sleep(Duration::from_secs_f64(ms / 1e3));
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}
