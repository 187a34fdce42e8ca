use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use qprofile::reference::{compare, BASELINE_4Q};
use qprofile::{
    load_reports, parse_qubits, run_benchmark, run_extrapolation, run_swap_study, select_reports, BenchmarkConfig,
    ClusterTarget, HarnessError,
};
use qprofile_core::router::PowerLawFit;
use qprofile_core::{PrepareMode, ResetMode, TimingModel};
use qprofile_stack::{serve, ClusterConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_TRANSPORT: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "qprofile", version, about = "Phase-resolved QAOA benchmark for quantum control stacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the QAOA benchmark and write per-qubit reports.
    Run(RunArgs),
    /// Serve a virtual control cluster.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7700")]
        bind: String,
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Measure SWAP counts on a square grid and fit a power law.
    Swaps {
        #[arg(long, default_value = "4..14")]
        qubits: String,
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output; the fit is written next to it as `<stem>.fit.json`.
        #[arg(long, default_value = "swaps.csv")]
        out: PathBuf,
    },
    /// Extrapolate measured reports linearly to a larger qubit count.
    Extrapolate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 50)]
        target: usize,
        #[arg(long, default_value = "extrapolation.csv")]
        out: PathBuf,
        /// Power-law fit JSON from `qprofile swaps`; computed over 4..14 when omitted.
        #[arg(long)]
        swaps: Option<PathBuf>,
        /// Leave the SWAP overhead out of the schedule phase.
        #[arg(long)]
        no_swaps: bool,
        #[arg(long)]
        reset: Option<ResetMode>,
        #[arg(long)]
        prepare: Option<PrepareMode>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "4,6,8,10,12,14")]
    qubits: String,
    #[arg(long, default_value_t = 1000)]
    shots: u64,
    #[arg(long, default_value_t = 40)]
    runs: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value = "passive")]
    reset: ResetMode,
    #[arg(long, default_value = "sequential")]
    prepare: PrepareMode,
    #[arg(long)]
    dilation: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long, default_value = "embedded")]
    cluster: ClusterTarget,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Fail with exit code 4 unless the 4-qubit phase means are within 10% of the baseline reference.
    #[arg(long)]
    check: bool,
}

enum Failure {
    Config(anyhow::Error),
    Transport(anyhow::Error),
    Check(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_transport() {
            Failure::Transport(e.into())
        } else {
            Failure::Config(e.into())
        }
    }
}

fn load_cluster_config(path: Option<&PathBuf>) -> Result<(ClusterConfig, String), Failure> {
    match path {
        Some(p) => {
            let cfg = ClusterConfig::load(p).map_err(|e| Failure::Config(e.into()))?;
            let name = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            Ok((cfg, name))
        }
        None => Ok((ClusterConfig::default(), "default".into())),
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let qubits = parse_qubits(&args.qubits).map_err(|e| Failure::Config(anyhow::anyhow!(e)))?;
    let (cluster_config, profile_name) = load_cluster_config(args.profile.as_ref())?;
    let mut cfg = BenchmarkConfig {
        qubits,
        shots: args.shots,
        runs: args.runs,
        layers: args.layers,
        reset: args.reset,
        prepare: args.prepare,
        dilation: args.dilation,
        seed: args.seed,
        cluster_config,
        profile_name,
        cluster: args.cluster,
        out: Some(args.out.clone()),
        timing: TimingModel::default(),
    };
    if args.profile.is_none() {
        cfg.fit_topology();
    }
    let result = run_benchmark(&cfg)?;
    for cell in &result.cells {
        let r = &cell.report;
        println!(
            "{:>2} qubits: total {:.1} ± {:.1} ms over {} iterations ({} failed runs)",
            r.meta.qubits,
            r.mean(qprofile_core::Phase::Total),
            r.phases[&qprofile_core::Phase::Total].std_ms,
            r.phases[&qprofile_core::Phase::Total].count,
            cell.failures.len()
        );
    }
    println!("reports written to {}", args.out.display());

    if args.check {
        let cell = result
            .cell(4)
            .filter(|c| c.report.meta.reset == ResetMode::Passive && c.report.meta.prepare == PrepareMode::Sequential)
            .ok_or_else(|| Failure::Config(anyhow::anyhow!("--check needs a 4-qubit passive sequential cell")))?;
        let rows = compare(&cell.report, &BASELINE_4Q, 0.10);
        for c in &rows {
            println!(
                "{} {:<10} {:>8.2} ms (reference {:.1})",
                if c.ok { "PASS" } else { "FAIL" },
                c.phase.name(),
                c.actual,
                c.expected
            );
        }
        if rows.iter().any(|c| !c.ok) {
            return Err(Failure::Check("baseline phases outside tolerance".into()));
        }
    }
    Ok(())
}

fn swaps(qubits: &str, instances: usize, layers: usize, seed: u64, out: PathBuf) -> Result<(), Failure> {
    let ns = parse_qubits(qubits).map_err(|e| Failure::Config(anyhow::anyhow!(e)))?;
    let s = run_swap_study(&ns, instances, layers, seed)?;
    std::fs::write(&out, s.to_csv())
        .with_context(|| format!("writing {}", out.display()))
        .map_err(Failure::Config)?;
    let fit_path = out.with_extension("fit.json");
    std::fs::write(&fit_path, serde_json::to_string_pretty(&s.fit).expect("fit serializes"))
        .with_context(|| format!("writing {}", fit_path.display()))
        .map_err(Failure::Config)?;
    println!(
        "swaps ≈ {:.4} · n^{:.3} (log residual {:.4}); wrote {} and {}",
        s.fit.coefficient,
        s.fit.exponent,
        s.fit.residual,
        out.display(),
        fit_path.display()
    );
    Ok(())
}

struct ExtrapolateArgs {
    input: PathBuf,
    target: usize,
    out: PathBuf,
    swaps: Option<PathBuf>,
    no_swaps: bool,
    want: Option<(ResetMode, PrepareMode)>,
}

fn extrapolate(a: ExtrapolateArgs) -> Result<(), Failure> {
    let reports = select_reports(load_reports(&a.input)?, a.want)?;
    let fit: Option<PowerLawFit> = match (&a.swaps, a.no_swaps) {
        (_, true) => None,
        (Some(p), false) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .map_err(Failure::Config)?;
            Some(
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", p.display()))
                    .map_err(Failure::Config)?,
            )
        }
        (None, false) => Some(run_swap_study(&(4..=14).collect::<Vec<_>>(), 20, 2, 0)?.fit),
    };
    let table = run_extrapolation(&reports, a.target, fit, &TimingModel::default())?;
    std::fs::write(&a.out, table.to_csv())
        .with_context(|| format!("writing {}", a.out.display()))
        .map_err(Failure::Config)?;
    print!("{}", table.to_csv());
    if table.interpolated {
        println!("note: target {} lies inside the measured range (interpolation)", a.target);
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::Serve { bind, profile } => {
            let (cfg, _) = load_cluster_config(profile.as_ref())?;
            let server = serve(bind.as_str(), cfg)
                .with_context(|| format!("binding {bind}"))
                .map_err(Failure::Transport)?;
            println!("cluster listening on {}", server.addr());
            server.wait();
            Ok(())
        }
        Command::Swaps {
            qubits,
            instances,
            layers,
            seed,
            out,
        } => swaps(&qubits, instances, layers, seed, out),
        Command::Extrapolate {
            input,
            target,
            out,
            swaps,
            no_swaps,
            reset,
            prepare,
        } => {
            let want = match (reset, prepare) {
                (None, None) => None,
                (r, p) => Some((r.unwrap_or(ResetMode::Active), p.unwrap_or(PrepareMode::Parallel))),
            };
            extrapolate(ExtrapolateArgs {
                input,
                target,
                out,
                swaps,
                no_swaps,
                want,
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Transport(e)) => {
            eprintln!("transport error: {e:#}");
            ExitCode::from(EXIT_TRANSPORT)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(EXIT_CHECK)
        }
    }
}
