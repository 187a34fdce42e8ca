//! Circuit to sequencer-program compilation.
//!
//! Every qubit gets one control program (single-qubit pulses, virtual phase
//! updates, idle waits) and one readout program (readout pulse plus
//! acquisition). Two-qubit gates have no pulses of their own; they only take
//! up time in the schedule. Programs are plain text: a `# waveforms` JSON block
//! followed by a `# schedule` block of instructions, see [`crate::asm`].

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{asap_schedule_ns, circuit_duration, Circuit, Gate};
use crate::timing::{ResetMode, TimingError, TimingModel};

/// Sequencers available on each module of the default cluster.
pub const SEQUENCERS_PER_MODULE: usize = 6;

/// Samples per single-qubit pulse envelope.
pub const PULSE_SAMPLES: usize = 40;

pub const SHOT_REGISTER: &str = "R0";
pub const SHOT_LABEL: &str = "shot";

#[derive(Debug, Error, PartialEq)]
pub enum CompileError {
    #[error("qubit {0} has no sequencer in the device map")]
    UnmappedQubit(usize),
    #[error("shot count must be at least 1")]
    NoShots,
    #[error(transparent)]
    Timing(#[from] TimingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleKind {
    Control,
    Readout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleSpec {
    pub id: usize,
    pub kind: ModuleKind,
    pub sequencers: usize,
}

/// Module layout of a control cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub modules: Vec<ModuleSpec>,
}

impl Topology {
    /// Enough control and readout modules of six sequencers each for `qubits` qubits.
    /// Control modules come first, then readout modules.
    pub fn for_qubits(qubits: usize) -> Self {
        let per_kind = qubits.div_ceil(SEQUENCERS_PER_MODULE).max(1);
        let modules = [ModuleKind::Control, ModuleKind::Readout]
            .into_iter()
            .flat_map(|kind| std::iter::repeat_n(kind, per_kind))
            .enumerate()
            .map(|(id, kind)| ModuleSpec {
                id,
                kind,
                sequencers: SEQUENCERS_PER_MODULE,
            })
            .collect();
        Topology { modules }
    }

    pub fn module(&self, id: usize) -> Option<&ModuleSpec> {
        self.modules.iter().find(|m| m.id == id)
    }

    pub fn count(&self, kind: ModuleKind) -> usize {
        self.modules.iter().filter(|m| m.kind == kind).count()
    }

    fn slots(&self, kind: ModuleKind) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.modules
            .iter()
            .filter(move |m| m.kind == kind)
            .flat_map(|m| (0..m.sequencers).map(move |s| (m.id, s)))
    }
}

impl Default for Topology {
    /// Three control and three readout modules, enough for fourteen qubits.
    fn default() -> Self {
        Topology::for_qubits(14)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub module: usize,
    pub sequencer: usize,
}

/// Qubit → (control slot, readout slot).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceMap {
    pub qubits: Vec<(Slot, Slot)>,
}

impl DeviceMap {
    /// Fills sequencers in module order. Qubits beyond the topology's capacity are left unmapped.
    pub fn from_topology(topology: &Topology, n: usize) -> Self {
        let slot = |(module, sequencer)| Slot { module, sequencer };
        let qubits = topology
            .slots(ModuleKind::Control)
            .zip(topology.slots(ModuleKind::Readout))
            .take(n)
            .map(|(c, r)| (slot(c), slot(r)))
            .collect();
        DeviceMap { qubits }
    }

    pub fn for_qubits(n: usize) -> Self {
        Self::from_topology(&Topology::for_qubits(n), n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProgramRole {
    Control,
    Readout,
}

/// One uploadable sequencer program.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramFile {
    pub qubit: usize,
    pub role: ProgramRole,
    pub slot: Slot,
    pub waveforms: BTreeMap<String, Vec<f64>>,
    pub text: String,
}

impl ProgramFile {
    pub fn name(&self) -> String {
        let role = match self.role {
            ProgramRole::Control => "control",
            ProgramRole::Readout => "readout",
        };
        format!("q{}_{}.asm", self.qubit, role)
    }

    pub fn bytes(&self) -> &[u8] {
        self.text.as_bytes()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledJob {
    pub n: usize,
    pub files: Vec<ProgramFile>,
    pub shots: u64,
    pub reset: ResetMode,
    pub reset_duration: f64,
    /// One shot without reset, seconds.
    pub circuit_duration: f64,
    /// All shots including reset, seconds.
    pub schedule_duration: f64,
}

impl CompiledJob {
    pub fn control_files(&self) -> impl Iterator<Item = &ProgramFile> {
        self.files.iter().filter(|f| f.role == ProgramRole::Control)
    }

    pub fn readout_files(&self) -> impl Iterator<Item = &ProgramFile> {
        self.files.iter().filter(|f| f.role == ProgramRole::Readout)
    }

    /// Distinct readout modules holding acquisitions, ascending.
    pub fn readout_modules(&self) -> Vec<usize> {
        let mut m: Vec<usize> = self.readout_files().map(|f| f.slot.module).collect();
        m.sort_unstable();
        m.dedup();
        m
    }
}

/// Converts seconds to whole nanoseconds.
pub fn to_ns(seconds: f64) -> u64 {
    (seconds * 1e9).round() as u64
}

fn gaussian_envelope(amplitude: f64) -> (Vec<f64>, Vec<f64>) {
    let sigma = PULSE_SAMPLES as f64 / 5.0;
    let mid = (PULSE_SAMPLES as f64 - 1.0) / 2.0;
    let i: Vec<f64> = (0..PULSE_SAMPLES)
        .map(|k| {
            let x = (k as f64 - mid) / sigma;
            round6(amplitude * (-0.5 * x * x).exp())
        })
        .collect();
    // DRAG quadrature: scaled derivative of the in-phase envelope
    let q = (0..PULSE_SAMPLES)
        .map(|k| {
            let x = (k as f64 - mid) / sigma;
            round6(-0.5 * amplitude * x / sigma * (-0.5 * x * x).exp())
        })
        .collect();
    (i, q)
}

fn readout_envelope(samples: usize) -> (Vec<f64>, Vec<f64>) {
    let rise = (samples / 20).max(1);
    let i = (0..samples)
        .map(|k| {
            let edge = k.min(samples - 1 - k);
            if edge < rise {
                round6(0.3 * (edge as f64 + 1.0) / rise as f64)
            } else {
                0.3
            }
        })
        .collect();
    (i, vec![0.0; samples])
}

fn round6(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Schedule text builder that merges consecutive idle waits.
struct Emitter {
    lines: Vec<String>,
    pending_wait: u64,
}

impl Emitter {
    fn new() -> Self {
        Emitter {
            lines: Vec::new(),
            pending_wait: 0,
        }
    }

    fn wait(&mut self, ns: u64) {
        self.pending_wait += ns;
    }

    fn op(&mut self, line: String) {
        self.flush();
        self.lines.push(line);
    }

    fn flush(&mut self) {
        if self.pending_wait > 0 {
            self.lines.push(format!("wait {}", self.pending_wait));
            self.pending_wait = 0;
        }
    }
}

fn render(waveforms: &BTreeMap<String, Vec<f64>>, body: Vec<String>) -> String {
    let mut text = String::from("# waveforms\n");
    text.push_str(&serde_json::to_string(waveforms).expect("waveforms serialize"));
    text.push_str("\n# schedule\n");
    for line in body {
        text.push_str(&line);
        text.push('\n');
    }
    text
}

fn wrap_program(shots: u64, reset_ns: u64, mut em: Emitter) -> Vec<String> {
    em.flush();
    let mut body = vec![
        format!("move {SHOT_REGISTER},{shots}"),
        format!("{SHOT_LABEL}:"),
        format!("wait {reset_ns}"),
    ];
    body.extend(em.lines);
    body.push(format!("loop {SHOT_LABEL},{SHOT_REGISTER}"));
    body.push("stop".to_owned());
    body
}

fn pulse_name(gate: &Gate) -> Option<String> {
    match *gate {
        Gate::H(_) => Some("h".to_owned()),
        Gate::Rx(_, theta) => Some(format!("rx_{:.0}", theta.to_degrees() * 1000.0)),
        _ => None,
    }
}

fn pulse_amplitude(gate: &Gate) -> f64 {
    match *gate {
        Gate::H(_) => 0.25,
        Gate::Rx(_, theta) => round6(theta / (2.0 * PI)),
        _ => 0.0,
    }
}

/// Compiles a (simplified) circuit for `shots` repetitions.
pub fn compile(
    c: &Circuit,
    shots: u64,
    reset: ResetMode,
    t: &TimingModel,
    device: &DeviceMap,
) -> Result<CompiledJob, CompileError> {
    if shots == 0 {
        return Err(CompileError::NoShots);
    }
    t.validate()?;
    if device.qubits.len() < c.n() {
        return Err(CompileError::UnmappedQubit(device.qubits.len()));
    }

    let (starts, makespan) = asap_schedule_ns(c, t);
    // (start, gate index) per qubit, in program order
    let mut timeline = vec![Vec::new(); c.n()];
    for (gi, g) in c.gates().iter().enumerate() {
        for q in g.qubits() {
            timeline[q].push((starts[gi], gi));
        }
    }

    let reset_ns = to_ns(t.reset(reset));
    let pulse_ns = to_ns(t.gate_1q);
    let meas_ns = to_ns(t.measurement);
    let mut files = Vec::with_capacity(2 * c.n());

    for q in 0..c.n() {
        let (control_slot, readout_slot) = device.qubits[q];

        let mut waveforms = BTreeMap::new();
        let mut em = Emitter::new();
        let mut phase_deg = 0.0f64;
        em.op("set_phase 0".to_owned());
        let mut cursor = 0;
        for &(start, gi) in &timeline[q] {
            em.wait(start - cursor);
            let gate = &c.gates()[gi];
            let dur = to_ns(gate.duration(t));
            cursor = start + dur;
            match gate {
                Gate::H(_) | Gate::Rx(..) => {
                    let name = pulse_name(gate).expect("pulse gate");
                    let (wi, wq) = (format!("{name}_i"), format!("{name}_q"));
                    if !waveforms.contains_key(&wi) {
                        let (i, qd) = gaussian_envelope(pulse_amplitude(gate));
                        waveforms.insert(wi.clone(), i);
                        waveforms.insert(wq.clone(), qd);
                    }
                    em.op(format!("play {wi},{wq},{pulse_ns}"));
                    em.wait(dur - pulse_ns.min(dur));
                }
                Gate::Rz(_, theta) => {
                    phase_deg = (phase_deg + theta.to_degrees()).rem_euclid(360.0);
                    em.op(format!("set_phase {phase_deg:.3}"));
                    em.wait(dur);
                }
                Gate::Cnot { .. } | Gate::Measure(_) => em.wait(dur),
            }
        }
        em.wait(makespan - cursor);
        files.push(ProgramFile {
            qubit: q,
            role: ProgramRole::Control,
            slot: control_slot,
            text: render(&waveforms, wrap_program(shots, reset_ns, em)),
            waveforms,
        });

        let mut ro_waveforms = BTreeMap::new();
        let mut em = Emitter::new();
        let mut cursor = 0;
        for &(start, gi) in &timeline[q] {
            let gate = &c.gates()[gi];
            if !matches!(gate, Gate::Measure(_)) {
                continue;
            }
            em.wait(start - cursor);
            if ro_waveforms.is_empty() {
                let (i, qd) = readout_envelope(meas_ns as usize);
                ro_waveforms.insert("ro_i".to_owned(), i);
                ro_waveforms.insert("ro_q".to_owned(), qd);
            }
            em.op("play ro_i,ro_q,0".to_owned());
            em.op(format!("acquire 0,{meas_ns}"));
            cursor = start + meas_ns;
        }
        em.wait(makespan - cursor);
        files.push(ProgramFile {
            qubit: q,
            role: ProgramRole::Readout,
            slot: readout_slot,
            text: render(&ro_waveforms, wrap_program(shots, reset_ns, em)),
            waveforms: ro_waveforms,
        });
    }

    let circuit_time = circuit_duration(c, t);
    let reset_time = t.reset(reset);
    Ok(CompiledJob {
        n: c.n(),
        files,
        shots,
        reset,
        reset_duration: reset_time,
        circuit_duration: circuit_time,
        schedule_duration: schedule_time(shots, reset_time, circuit_time),
    })
}

fn schedule_time(shots: u64, reset: f64, circuit: f64) -> f64 {
    shots as f64 * (reset + circuit)
}

/// Total schedule execution time of the job in seconds.
pub fn schedule_duration(j: &CompiledJob) -> f64 {
    schedule_time(j.shots, j.reset_duration, j.circuit_duration)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileSize {
    pub name: String,
    pub bytes: usize,
    pub waveform_bytes: usize,
    pub schedule_bytes: usize,
    pub waveform_fraction: f64,
    pub schedule_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSizeReport {
    pub files: Vec<FileSize>,
    pub total_bytes: usize,
    pub bytes_per_qubit: f64,
}

impl JobSizeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Byte counts of every program file, split at the `# schedule` header.
pub fn measure_job_size(j: &CompiledJob) -> JobSizeReport {
    let files: Vec<FileSize> = j
        .files
        .iter()
        .map(|f| {
            let bytes = f.text.len();
            let split = f.text.find("# schedule").unwrap_or(bytes);
            let (waveform_bytes, schedule_bytes) = (split, bytes - split);
            FileSize {
                name: f.name(),
                bytes,
                waveform_bytes,
                schedule_bytes,
                waveform_fraction: waveform_bytes as f64 / bytes as f64,
                schedule_fraction: schedule_bytes as f64 / bytes as f64,
            }
        })
        .collect();
    let total_bytes = files.iter().map(|f| f.bytes).sum();
    JobSizeReport {
        files,
        total_bytes,
        bytes_per_qubit: if j.n == 0 { 0.0 } else { total_bytes as f64 / j.n as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm;
    use crate::circuit::{build_qaoa, simplify, QaoaParams};
    use crate::problem::{generate_instance, ProblemGraph};

    fn k4_job(shots: u64, reset: ResetMode) -> CompiledJob {
        let g = ProblemGraph::complete(4).unwrap();
        let p = QaoaParams::new(vec![0.4, 1.1], vec![0.3, 2.0]).unwrap();
        let c = simplify(&build_qaoa(&g, &p));
        compile(&c, shots, reset, &TimingModel::default(), &DeviceMap::for_qubits(4)).unwrap()
    }

    #[test]
    fn one_control_and_one_readout_per_qubit() {
        let j = k4_job(1000, ResetMode::Passive);
        assert_eq!(j.files.len(), 8);
        assert_eq!(j.control_files().count(), 4);
        assert_eq!(j.readout_files().count(), 4);
        assert_eq!(j.readout_modules(), vec![1]);
    }

    #[test]
    fn table_schedule_durations() {
        let sched = |shots, reset: f64, circuit| schedule_time(shots, reset, circuit);
        assert!((sched(1000, 200e-6, 11.7e-6) - 211.7e-3).abs() < 1e-12);
        assert!((sched(1000, 1e-6, 11.7e-6) - 12.7e-3).abs() < 1e-12);
        assert!((sched(1, 1e-6, 14.8e-6) - 15.8e-6).abs() < 1e-15);
    }

    #[test]
    fn schedule_duration_matches_compile_record() {
        for reset in [ResetMode::Passive, ResetMode::Active] {
            let j = k4_job(1000, reset);
            assert_eq!(schedule_duration(&j), j.schedule_duration);
            let t = TimingModel::default();
            assert_eq!(j.schedule_duration, 1000.0 * (t.reset(reset) + j.circuit_duration));
        }
    }

    #[test]
    fn zero_shots_rejected() {
        let c = Circuit::new(1);
        let err = compile(&c, 0, ResetMode::Active, &TimingModel::default(), &DeviceMap::for_qubits(1));
        assert_eq!(err.unwrap_err(), CompileError::NoShots);
    }

    #[test]
    fn unmapped_qubit_rejected() {
        let c = Circuit::new(3);
        let device = DeviceMap::for_qubits(2);
        let err = compile(&c, 10, ResetMode::Active, &TimingModel::default(), &device);
        assert_eq!(err.unwrap_err(), CompileError::UnmappedQubit(2));
    }

    #[test]
    fn programs_parse_and_reference_known_waveforms() {
        let j = k4_job(100, ResetMode::Active);
        for f in &j.files {
            let prog = asm::parse_program(&f.text).unwrap_or_else(|e| panic!("{}: {e}", f.name()));
            assert_eq!(prog.waveforms, f.waveforms);
        }
    }

    #[test]
    fn interpreted_program_time_equals_schedule() {
        let j = k4_job(50, ResetMode::Passive);
        let expect = to_ns(j.reset_duration) * 50 + to_ns(j.circuit_duration) * 50;
        for f in &j.files {
            let prog = asm::parse_program(&f.text).unwrap();
            assert_eq!(prog.run_time_ns().unwrap(), expect, "{}", f.name());
        }
    }

    #[test]
    fn deterministic_output() {
        assert_eq!(k4_job(1000, ResetMode::Active), k4_job(1000, ResetMode::Active));
    }

    #[test]
    fn empty_single_qubit_sizes() {
        let j = compile(&Circuit::new(1), 1, ResetMode::Active, &TimingModel::default(), &DeviceMap::for_qubits(1)).unwrap();
        let r = measure_job_size(&j);
        assert_eq!(r.files.len(), 2);
        for f in &r.files {
            assert!(f.bytes > 0);
            assert_eq!(f.waveform_bytes + f.schedule_bytes, f.bytes);
            assert!((f.waveform_fraction + f.schedule_fraction - 1.0).abs() < 1e-12);
        }
        assert_eq!(j.schedule_duration, 1e-6);
    }

    #[test]
    fn size_doubles_with_qubits() {
        let size = |n| {
            let g = generate_instance(n, 2).unwrap();
            let p = QaoaParams::new(vec![0.4, 1.1], vec![0.3, 2.0]).unwrap();
            let c = simplify(&build_qaoa(&g, &p));
            let j = compile(&c, 1000, ResetMode::Active, &TimingModel::default(), &DeviceMap::for_qubits(n)).unwrap();
            measure_job_size(&j).total_bytes as f64
        };
        let ratio = size(12) / size(6);
        assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn readout_is_waveform_dominated() {
        let j = k4_job(1000, ResetMode::Active);
        let r = measure_job_size(&j);
        let ro = r.files.iter().find(|f| f.name == "q0_readout.asm").unwrap();
        assert!(ro.waveform_fraction > 0.8);
    }

    #[test]
    fn default_topology_has_three_of_each() {
        let t = Topology::default();
        assert_eq!(t.count(ModuleKind::Control), 3);
        assert_eq!(t.count(ModuleKind::Readout), 3);
        assert!(t.modules.iter().all(|m| m.sequencers == 6));
        let d = DeviceMap::from_topology(&t, 14);
        assert_eq!(d.qubits.len(), 14);
        assert_eq!(d.qubits[13].0, Slot { module: 2, sequencer: 1 });
        assert_eq!(d.qubits[13].1, Slot { module: 5, sequencer: 1 });
    }
}
