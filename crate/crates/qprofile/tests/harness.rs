use std::process::Command;

use qprofile::{load_reports, run_benchmark, run_extrapolation, run_swap_study, select_reports, BenchmarkConfig};
use qprofile_core::profiler::Phase;
use qprofile_core::{PrepareMode, ResetMode, TimingModel};
use qprofile_stack::{ClusterConfig, LatencyProfile};

fn virtual_config(qubits: Vec<usize>, runs: usize, seed: u64) -> BenchmarkConfig {
    BenchmarkConfig {
        qubits,
        runs,
        seed,
        cluster_config: ClusterConfig::with_profile(LatencyProfile {
            virtual_time: true,
            ..LatencyProfile::default()
        }),
        ..BenchmarkConfig::default()
    }
}

#[test]
fn virtual_runs_are_reproducible() {
    let cfg = virtual_config(vec![4], 2, 11);
    let a = run_benchmark(&cfg).unwrap();
    let b = run_benchmark(&cfg).unwrap();
    assert_eq!(a.cells[0].report.to_json(), b.cells[0].report.to_json());
    assert_eq!(a.cells[0].runs, b.cells[0].runs);

    let c = run_benchmark(&virtual_config(vec![4], 2, 12)).unwrap();
    assert_ne!(a.cells[0].runs[0].best_params, c.cells[0].runs[0].best_params);
}

#[test]
fn virtual_means_are_the_nominal_latencies() {
    let cfg = virtual_config(vec![4], 1, 3);
    let p = &cfg.cluster_config.profile;
    let cell = &run_benchmark(&cfg).unwrap().cells[0];
    let r = &cell.report;
    let eq = |phase: Phase, want: f64| {
        let got = r.mean(phase);
        assert!((got - want).abs() < 1e-9, "{phase}: {got} vs {want}");
        assert!(r.phases[&phase].std_ms < 1e-9);
    };
    eq(Phase::Compile, p.compile_base_ms + 4.0 * p.compile_per_qubit_ms);
    eq(Phase::Stop, 2.0 * p.stop_ms);
    eq(Phase::Prepare, 8.0 * (p.prepare_serial_ms + p.prepare_concurrent_ms));
    eq(Phase::Start, p.start_ms);
    eq(Phase::WaitDone, p.done_finalize_ms);
    eq(Phase::Retrieve, p.retrieve_ms);
    assert!((r.mean(Phase::Total) - r.parts_mean_sum()).abs() < 1e-9);
    assert_eq!(r.phases[&Phase::Total].count, cell.runs[0].iterations);
}

#[test]
fn active_reset_shortens_only_the_schedule() {
    let passive = run_benchmark(&virtual_config(vec![4], 1, 5)).unwrap();
    let active = run_benchmark(&BenchmarkConfig {
        reset: ResetMode::Active,
        ..virtual_config(vec![4], 1, 5)
    })
    .unwrap();
    let (p, a) = (&passive.cells[0].report, &active.cells[0].report);
    // 1000 shots × (200 µs − 1 µs)
    assert!((p.mean(Phase::Schedule) - a.mean(Phase::Schedule) - 199.0).abs() < 1e-6);
    assert_eq!(p.mean(Phase::Prepare), a.mean(Phase::Prepare));
}

#[test]
fn reports_round_trip_through_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BenchmarkConfig {
        out: Some(dir.path().to_owned()),
        prepare: PrepareMode::Parallel,
        reset: ResetMode::Active,
        ..virtual_config(vec![4, 5, 6], 1, 2)
    };
    let result = run_benchmark(&cfg).unwrap();
    for stem in ["q4_active_parallel", "q5_active_parallel", "q6_active_parallel"] {
        for ext in ["report.json", "csv", "records.json", "runs.json"] {
            assert!(dir.path().join(format!("{stem}.{ext}")).exists(), "{stem}.{ext}");
        }
    }
    let reports = select_reports(load_reports(dir.path()).unwrap(), None).unwrap();
    assert_eq!(reports.len(), 3);
    assert_eq!(reports[0], result.cells[0].report);

    let table = run_extrapolation(&reports, 50, None, &TimingModel::default()).unwrap();
    assert_eq!(table.rows.len(), Phase::ALL.len());
    assert!(!table.interpolated);
    let inside = run_extrapolation(&reports, 5, None, &TimingModel::default()).unwrap();
    assert!(inside.interpolated);
    assert!(select_reports(reports, Some((ResetMode::Passive, PrepareMode::Sequential))).is_err());
}

#[test]
fn swap_study_is_deterministic_and_needs_three_sizes() {
    let a = run_swap_study(&[4, 6, 8, 10], 5, 2, 9).unwrap();
    let b = run_swap_study(&[4, 6, 8, 10], 5, 2, 9).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.to_csv().starts_with("n,mean_swaps,std_swaps\n"));
    assert!(run_swap_study(&[6], 5, 2, 0).is_err());
    assert!(run_swap_study(&[6, 6, 6], 5, 2, 0).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        BenchmarkConfig { shots: 0, ..BenchmarkConfig::default() },
        BenchmarkConfig { runs: 0, ..BenchmarkConfig::default() },
        BenchmarkConfig { qubits: vec![1], ..BenchmarkConfig::default() },
        BenchmarkConfig { qubits: vec![25], ..BenchmarkConfig::default() },
        BenchmarkConfig { qubits: vec![20], ..BenchmarkConfig::default() },
        BenchmarkConfig { dilation: Some(-1.0), ..BenchmarkConfig::default() },
    ] {
        let e = run_benchmark(&cfg).unwrap_err();
        assert!(matches!(e, qprofile::HarnessError::Config(_)), "{e}");
    }
    let mut grown = BenchmarkConfig { qubits: vec![20], ..BenchmarkConfig::default() };
    grown.fit_topology();
    assert!(grown.validate().is_ok());
}

fn qprofile() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qprofile"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let s = qprofile().args(["run", "--qubits", "4,x"]).status().unwrap();
    assert_eq!(s.code(), Some(2));

    let s = qprofile()
        .args(["run", "--qubits", "4", "--runs", "1", "--cluster", "127.0.0.1:1"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(s.code(), Some(3));

    let good = dir.path().join("virtual.json");
    std::fs::write(&good, r#"{"virtual_time": true}"#).unwrap();
    let s = qprofile()
        .args(["run", "--qubits", "4", "--runs", "1", "--check", "--profile"])
        .arg(&good)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(s.code(), Some(0));

    let off = dir.path().join("off.json");
    std::fs::write(&off, r#"{"virtual_time": true, "stop_ms": 1.0}"#).unwrap();
    let s = qprofile()
        .args(["run", "--qubits", "4", "--runs", "1", "--check", "--profile"])
        .arg(&off)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(s.code(), Some(4));

    let csv = dir.path().join("swaps.csv");
    let s = qprofile()
        .args(["swaps", "--qubits", "4..8", "--instances", "3", "--out"])
        .arg(&csv)
        .status()
        .unwrap();
    assert_eq!(s.code(), Some(0));
    assert!(dir.path().join("swaps.fit.json").exists());

    let ex = dir.path().join("ex.csv");
    let s = qprofile()
        .args(["extrapolate", "--target", "50", "--in"])
        .arg(&out)
        .arg("--out")
        .arg(&ex)
        .status()
        .unwrap();
    // a single measured size is not enough to fit lines
    assert_eq!(s.code(), Some(2));
}
