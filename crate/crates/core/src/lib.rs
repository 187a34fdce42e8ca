//! Building blocks for profiling a quantum control stack with a QAOA Max-Cut workload.
//!
//! The host side of a benchmark iteration is covered here: problem instances,
//! circuit construction and simplification, simulation, compilation to
//! sequencer programs, grid routing, parameter optimization and phase
//! statistics. The control-stack service and its driver live in `qprofile-stack`.

pub mod asm;
pub mod circuit;
pub mod compiler;
pub mod optimizer;
pub mod problem;
pub mod profiler;
pub mod router;
pub mod statevector;
pub mod timing;

pub use circuit::{build_qaoa, circuit_duration, simplify, Circuit, Gate, QaoaParams};
pub use compiler::{compile, measure_job_size, schedule_duration, CompiledJob, DeviceMap, Topology};
pub use optimizer::{minimize, OptimizationTrace, OptimizerConfig};
pub use problem::{brute_force_max_cut, cut_value, expected_cut, generate_instance, ProblemGraph, ShotCounts};
pub use profiler::{AggregateReport, IterationTimings, Phase, PhaseRecord, PrepareMode};
pub use router::{grid_layout, route, GridLayout, PowerLawFit};
pub use statevector::{sample, simulate, StateVector};
pub use timing::{ResetMode, TimingModel};
