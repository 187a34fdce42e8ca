//! Gate-level circuit IR, QAOA construction and peephole simplification.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::ProblemGraph;
use crate::timing::TimingModel;

/// Rotations closer than this to a multiple of 2π are treated as identity.
pub const ZERO_ANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CircuitError {
    #[error("gate {gate} touches qubit {qubit} but the circuit has {n} qubits")]
    QubitOutOfRange { gate: String, qubit: usize, n: usize },
    #[error("CNOT control and target are both qubit {0}")]
    SameQubits(usize),
    #[error("qubit {0} is measured twice")]
    DoubleMeasure(usize),
    #[error("gate {0} follows a measurement")]
    GateAfterMeasure(String),
    #[error("invalid QAOA parameters: {0}")]
    BadParams(String),
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

fn is_zero_angle(theta: f64) -> bool {
    theta < ZERO_ANGLE_TOL || TAU - theta < ZERO_ANGLE_TOL
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    H(usize),
    Rx(usize, f64),
    Rz(usize, f64),
    Cnot { control: usize, target: usize },
    Measure(usize),
}

impl Gate {
    pub fn rx(q: usize, theta: f64) -> Self {
        Gate::Rx(q, wrap_angle(theta))
    }

    pub fn rz(q: usize, theta: f64) -> Self {
        Gate::Rz(q, wrap_angle(theta))
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate::Cnot { control, target }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Gate::H(_) => "h",
            Gate::Rx(..) => "rx",
            Gate::Rz(..) => "rz",
            Gate::Cnot { .. } => "cnot",
            Gate::Measure(_) => "measure",
        }
    }

    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::H(q) | Gate::Rx(q, _) | Gate::Rz(q, _) | Gate::Measure(q) => vec![q],
            Gate::Cnot { control, target } => vec![control, target],
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Rx(_, t) | Gate::Rz(_, t) => Some(t),
            _ => None,
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self, Gate::Cnot { .. })
    }

    pub fn duration(&self, t: &TimingModel) -> f64 {
        match self {
            Gate::H(_) | Gate::Rx(..) | Gate::Rz(..) => t.gate_1q,
            Gate::Cnot { .. } => t.gate_2q,
            Gate::Measure(_) => t.measurement,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GateRepr {
    g: String,
    q: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    theta: Option<f64>,
}

impl Serialize for Gate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GateRepr {
            g: self.kind().to_owned(),
            q: self.qubits(),
            theta: self.angle(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Gate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = GateRepr::deserialize(d)?;
        let theta = || r.theta.ok_or_else(|| D::Error::custom("missing theta"));
        match (r.g.as_str(), r.q.as_slice()) {
            ("h", &[q]) => Ok(Gate::H(q)),
            ("rx", &[q]) => Ok(Gate::rx(q, theta()?)),
            ("rz", &[q]) => Ok(Gate::rz(q, theta()?)),
            ("cnot", &[c, t]) => Ok(Gate::cnot(c, t)),
            ("measure", &[q]) => Ok(Gate::Measure(q)),
            (g, q) => Err(D::Error::custom(format!("bad gate {g} on {q:?}"))),
        }
    }
}

/// An ordered gate list over `n` qubits. Measurements, if present, form a trailing suffix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Circuit {
    n: usize,
    gates: Vec<Gate>,
    #[serde(skip)]
    measured: Vec<bool>,
}

impl Circuit {
    pub fn new(n: usize) -> Self {
        Circuit {
            n,
            gates: Vec::new(),
            measured: vec![false; n],
        }
    }

    pub fn from_gates(n: usize, gates: impl IntoIterator<Item = Gate>) -> Result<Self, CircuitError> {
        let mut c = Circuit::new(n);
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    /// Parses the JSON gate-list form.
    pub fn from_json(n: usize, json: &str) -> Result<Self, Box<dyn std::error::Error>> {
        let gates: Vec<Gate> = serde_json::from_str(json)?;
        Ok(Self::from_gates(n, gates)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.gates).expect("gates serialize")
    }

    pub fn push(&mut self, gate: Gate) -> Result<(), CircuitError> {
        let qubits = gate.qubits();
        if let Some(&q) = qubits.iter().find(|&&q| q >= self.n) {
            return Err(CircuitError::QubitOutOfRange {
                gate: gate.kind().to_owned(),
                qubit: q,
                n: self.n,
            });
        }
        if let Gate::Cnot { control, target } = gate {
            if control == target {
                return Err(CircuitError::SameQubits(control));
            }
        }
        let any_measured = self.measured.iter().any(|&m| m);
        match gate {
            Gate::Measure(q) if self.measured[q] => return Err(CircuitError::DoubleMeasure(q)),
            Gate::Measure(q) => self.measured[q] = true,
            _ if any_measured => return Err(CircuitError::GateAfterMeasure(gate.kind().to_owned())),
            _ => {}
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn two_qubit_count(&self) -> usize {
        self.gates.iter().filter(|g| g.is_two_qubit()).count()
    }
}

/// Layer count and angles for a QAOA ansatz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaoaParams {
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl QaoaParams {
    pub fn new(gammas: Vec<f64>, betas: Vec<f64>) -> Result<Self, CircuitError> {
        if gammas.is_empty() {
            return Err(CircuitError::BadParams("at least one layer required".into()));
        }
        if gammas.len() != betas.len() {
            return Err(CircuitError::BadParams(format!(
                "{} gammas but {} betas",
                gammas.len(),
                betas.len()
            )));
        }
        if let Some(a) = gammas.iter().chain(&betas).find(|a| !(0.0..=TAU).contains(*a)) {
            return Err(CircuitError::BadParams(format!("angle {a} outside [0, 2π]")));
        }
        Ok(QaoaParams { gammas, betas })
    }

    /// Interprets a flat optimizer vector as `[γ_1..γ_p, β_1..β_p]`.
    pub fn from_flat(x: &[f64]) -> Result<Self, CircuitError> {
        if !x.len().is_multiple_of(2) {
            return Err(CircuitError::BadParams(format!("odd parameter count {}", x.len())));
        }
        let (g, b) = x.split_at(x.len() / 2);
        Self::new(g.to_vec(), b.to_vec())
    }

    pub fn layers(&self) -> usize {
        self.gammas.len()
    }
}

/// Gate count of [`build_qaoa`] before simplification.
pub fn qaoa_gate_count(n: usize, edges: usize, layers: usize) -> usize {
    n + layers * (3 * edges + n) + n
}

/// Builds the Max-Cut QAOA circuit: Hadamards, then per layer a CNOT·RZ(γ)·CNOT
/// block for every edge and RX(2β) on every qubit, then measurement of every qubit.
pub fn build_qaoa(g: &ProblemGraph, params: &QaoaParams) -> Circuit {
    let n = g.n();
    let mut gates = Vec::with_capacity(qaoa_gate_count(n, g.edges().len(), params.layers()));
    gates.extend((0..n).map(Gate::H));
    for (&gamma, &beta) in params.gammas.iter().zip(&params.betas) {
        for &(i, j) in g.edges() {
            gates.push(Gate::cnot(i, j));
            gates.push(Gate::rz(j, gamma));
            gates.push(Gate::cnot(i, j));
        }
        gates.extend((0..n).map(|q| Gate::rx(q, 2.0 * beta)));
    }
    gates.extend((0..n).map(Gate::Measure));
    Circuit::from_gates(n, gates).expect("QAOA construction respects circuit invariants")
}

/// Merges adjacent RZ rotations, drops identity rotations and cancels back-to-back
/// identical CNOTs, repeating until nothing changes.
pub fn simplify(c: &Circuit) -> Circuit {
    let mut gates = c.gates.clone();
    loop {
        let (next, changed) = simplify_pass(c.n, &gates);
        gates = next;
        if !changed {
            break;
        }
    }
    Circuit::from_gates(c.n, gates).expect("simplification preserves invariants")
}

fn simplify_pass(n: usize, gates: &[Gate]) -> (Vec<Gate>, bool) {
    let mut out: Vec<Option<Gate>> = Vec::with_capacity(gates.len());
    // per-qubit stack of indices into `out` of the live gates on that qubit
    let mut stacks: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut changed = false;

    let remove = |out: &mut Vec<Option<Gate>>, stacks: &mut Vec<Vec<usize>>, idx: usize| {
        for q in out[idx].expect("live gate").qubits() {
            let popped = stacks[q].pop();
            debug_assert_eq!(popped, Some(idx));
        }
        out[idx] = None;
    };

    for &gate in gates {
        match gate {
            Gate::Rx(_, t) | Gate::Rz(_, t) if is_zero_angle(t) => {
                changed = true;
                continue;
            }
            Gate::Rz(q, t) => {
                if let Some(&top) = stacks[q].last() {
                    if let Some(Gate::Rz(_, prev)) = out[top] {
                        changed = true;
                        let merged = wrap_angle(prev + t);
                        if is_zero_angle(merged) {
                            remove(&mut out, &mut stacks, top);
                        } else {
                            out[top] = Some(Gate::Rz(q, merged));
                        }
                        continue;
                    }
                }
            }
            Gate::Cnot { control, target } => {
                let (a, b) = (stacks[control].last(), stacks[target].last());
                if let (Some(&ia), Some(&ib)) = (a, b) {
                    if ia == ib && out[ia] == Some(gate) {
                        changed = true;
                        remove(&mut out, &mut stacks, ia);
                        continue;
                    }
                }
            }
            _ => {}
        }
        let idx = out.len();
        for q in gate.qubits() {
            stacks[q].push(idx);
        }
        out.push(Some(gate));
    }
    (out.into_iter().flatten().collect(), changed)
}

/// ASAP start time of every gate, in nanoseconds: a gate starts as soon as all
/// of its qubits are free. Returns the start times and the makespan.
pub fn asap_schedule_ns(c: &Circuit, t: &TimingModel) -> (Vec<u64>, u64) {
    let mut free = vec![0u64; c.n];
    let mut starts = Vec::with_capacity(c.gates.len());
    let mut makespan = 0;
    for g in &c.gates {
        let qs = g.qubits();
        let start = qs.iter().map(|&q| free[q]).max().unwrap_or(0);
        let end = start + crate::compiler::to_ns(g.duration(t));
        for q in qs {
            free[q] = end;
        }
        makespan = makespan.max(end);
        starts.push(start);
    }
    (starts, makespan)
}

/// Wall duration of one shot (excluding reset) under ASAP scheduling, in seconds.
/// Qubits run in parallel, so this is the length of the critical path.
pub fn circuit_duration(c: &Circuit, t: &TimingModel) -> f64 {
    let mut free = vec![0.0f64; c.n];
    for g in &c.gates {
        let qs = g.qubits();
        let end = qs.iter().map(|&q| free[q]).fold(0.0, f64::max) + g.duration(t);
        for q in qs {
            free[q] = end;
        }
    }
    free.into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-15
    }

    #[test]
    fn qaoa_gate_counts() {
        let k4 = ProblemGraph::complete(4).unwrap();
        let p = QaoaParams::new(vec![0.3, 0.5], vec![0.2, 0.7]).unwrap();
        assert_eq!(build_qaoa(&k4, &p).len(), 52);

        let tri = ProblemGraph::complete(3).unwrap();
        let p1 = QaoaParams::new(vec![0.3], vec![0.2]).unwrap();
        assert_eq!(build_qaoa(&tri, &p1).len(), 18);
        assert_eq!(qaoa_gate_count(3, 3, 1), 18);
    }

    #[test]
    fn single_edge_zero_angles_layout() {
        let g = ProblemGraph::complete(2).unwrap();
        let p = QaoaParams::new(vec![0.0], vec![0.0]).unwrap();
        let c = build_qaoa(&g, &p);
        assert_eq!(
            c.gates(),
            &[
                Gate::H(0),
                Gate::H(1),
                Gate::cnot(0, 1),
                Gate::Rz(1, 0.0),
                Gate::cnot(0, 1),
                Gate::Rx(0, 0.0),
                Gate::Rx(1, 0.0),
                Gate::Measure(0),
                Gate::Measure(1),
            ]
        );
        assert_eq!(simplify(&c).gates(), &[Gate::H(0), Gate::H(1), Gate::Measure(0), Gate::Measure(1)]);
    }

    #[test]
    fn params_validation() {
        assert!(QaoaParams::new(vec![], vec![]).is_err());
        assert!(QaoaParams::new(vec![1.0], vec![]).is_err());
        assert!(QaoaParams::new(vec![7.0], vec![0.0]).is_err());
        assert!(QaoaParams::new(vec![TAU], vec![0.0]).is_ok());
        let p = QaoaParams::from_flat(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(p.gammas, vec![0.1, 0.2]);
        assert_eq!(p.betas, vec![0.3, 0.4]);
    }

    #[test]
    fn rz_merge() {
        let c = Circuit::from_gates(1, [Gate::rz(0, 0.3), Gate::rz(0, 0.4)]).unwrap();
        let s = simplify(&c);
        assert_eq!(s.len(), 1);
        match s.gates()[0] {
            Gate::Rz(0, t) => assert!((t - 0.7).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rz_merge_wraps_to_identity() {
        let c = Circuit::from_gates(1, [Gate::rz(0, PI), Gate::rz(0, PI), Gate::H(0)]).unwrap();
        assert_eq!(simplify(&c).gates(), &[Gate::H(0)]);
    }

    #[test]
    fn cnot_pair_cancels_after_zero_removal() {
        let c = Circuit::from_gates(2, [Gate::cnot(0, 1), Gate::rz(1, 0.0), Gate::cnot(0, 1)]).unwrap();
        assert!(simplify(&c).is_empty());
    }

    #[test]
    fn cascading_cancellation() {
        let c = Circuit::from_gates(
            2,
            [Gate::cnot(0, 1), Gate::cnot(1, 0), Gate::cnot(1, 0), Gate::cnot(0, 1)],
        )
        .unwrap();
        assert!(simplify(&c).is_empty());
    }

    #[test]
    fn reversed_cnot_does_not_cancel() {
        let c = Circuit::from_gates(2, [Gate::cnot(0, 1), Gate::cnot(1, 0)]).unwrap();
        assert_eq!(simplify(&c), c);
    }

    #[test]
    fn intervening_gate_blocks_cancel() {
        let c = Circuit::from_gates(2, [Gate::cnot(0, 1), Gate::H(0), Gate::cnot(0, 1)]).unwrap();
        assert_eq!(simplify(&c).len(), 3);
    }

    #[test]
    fn no_rule_leaves_circuit_unchanged() {
        let c = Circuit::from_gates(1, [Gate::H(0), Gate::rx(0, PI)]).unwrap();
        assert_eq!(simplify(&c), c);
    }

    #[test]
    fn durations() {
        let t = TimingModel::default();
        let one = Circuit::from_gates(2, [Gate::H(0)]).unwrap();
        assert!(close(circuit_duration(&one, &t), 40e-9));
        let hm = Circuit::from_gates(1, [Gate::H(0), Gate::Measure(0)]).unwrap();
        assert!(close(circuit_duration(&hm, &t), 540e-9));
        let par = Circuit::from_gates(2, [Gate::H(0), Gate::H(1)]).unwrap();
        assert!(close(circuit_duration(&par, &t), 40e-9));
        let chain = Circuit::from_gates(2, [Gate::H(0), Gate::cnot(0, 1), Gate::H(1)]).unwrap();
        assert!(close(circuit_duration(&chain, &t), 180e-9));
        assert_eq!(circuit_duration(&Circuit::new(3), &t), 0.0);
    }

    #[test]
    fn invariants_enforced() {
        let mut c = Circuit::new(2);
        assert!(matches!(c.push(Gate::H(2)), Err(CircuitError::QubitOutOfRange { .. })));
        assert_eq!(c.push(Gate::cnot(1, 1)), Err(CircuitError::SameQubits(1)));
        c.push(Gate::Measure(0)).unwrap();
        assert_eq!(c.push(Gate::Measure(0)), Err(CircuitError::DoubleMeasure(0)));
        assert!(matches!(c.push(Gate::H(1)), Err(CircuitError::GateAfterMeasure(_))));
        c.push(Gate::Measure(1)).unwrap();
    }

    #[test]
    fn angles_are_wrapped() {
        assert!(close(Gate::rz(0, -PI / 2.0).angle().unwrap(), 1.5 * PI));
        assert_eq!(Gate::rx(0, TAU).angle().unwrap(), 0.0);
    }

    #[test]
    fn json_form() {
        let c = Circuit::from_gates(2, [Gate::H(0), Gate::rz(1, 0.5), Gate::cnot(0, 1), Gate::Measure(0)]).unwrap();
        let json = c.to_json();
        assert_eq!(
            json,
            r#"[{"g":"h","q":[0]},{"g":"rz","q":[1],"theta":0.5},{"g":"cnot","q":[0,1]},{"g":"measure","q":[0]}]"#
        );
        assert_eq!(Circuit::from_json(2, &json).unwrap(), c);
        assert!(Circuit::from_json(2, r#"[{"g":"rz","q":[0]}]"#).is_err());
    }
}
