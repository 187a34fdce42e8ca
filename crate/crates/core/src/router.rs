//! SWAP insertion onto a square-grid coupling map and SWAP-count scaling fits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{build_qaoa, Circuit, Gate, QaoaParams};
use crate::problem::{generate_instance, ProblemError};
use crate::statevector::{derive_seed, StateVector};

#[derive(Debug, Error, PartialEq)]
pub enum RouterError {
    #[error("need at least 3 distinct sizes for a power-law fit, got {0}")]
    TooFewPoints(usize),
    #[error("power-law fit needs positive values, got y = {y} at n = {n}")]
    NonPositive { n: f64, y: f64 },
    #[error("circuit has {n} qubits but the layout holds {capacity}")]
    TooSmall { n: usize, capacity: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Logical qubit placement on a `rows × cols` grid. Physical index is `row * cols + col`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    /// `physical[logical]`
    pub physical: Vec<usize>,
}

impl GridLayout {
    pub fn capacity(&self) -> usize {
        self.rows * self.cols
    }

    pub fn coords(&self, phys: usize) -> (usize, usize) {
        (phys / self.cols, phys % self.cols)
    }

    pub fn distance(&self, a: usize, b: usize) -> usize {
        let ((ra, ca), (rb, cb)) = (self.coords(a), self.coords(b));
        ra.abs_diff(rb) + ca.abs_diff(cb)
    }

    pub fn diameter(&self) -> usize {
        self.rows + self.cols - 2
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.distance(a, b) == 1
    }
}

/// Row-major placement of `n` logical qubits on a ⌈√n⌉ × ⌈√n⌉ grid.
pub fn grid_layout(n: usize) -> GridLayout {
    let side = (1..).find(|s| s * s >= n).expect("some side fits");
    GridLayout {
        rows: side,
        cols: side,
        physical: (0..n).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutedCircuit {
    /// Circuit over all physical grid positions; every SWAP is spelled as three CNOTs.
    pub circuit: Circuit,
    pub swaps: usize,
    pub final_layout: GridLayout,
}

/// Greedy router: for each two-qubit gate whose endpoints are not adjacent, the
/// endpoint with the smaller logical index walks toward the other (row first,
/// then column) until adjacent, one SWAP per step.
pub fn route(c: &Circuit, layout: &GridLayout) -> Result<RoutedCircuit, RouterError> {
    if c.n() > layout.physical.len() || layout.physical.len() > layout.capacity() {
        return Err(RouterError::TooSmall {
            n: c.n(),
            capacity: layout.physical.len().min(layout.capacity()),
        });
    }
    let mut phys = layout.physical.clone();
    let mut logical_at: Vec<Option<usize>> = vec![None; layout.capacity()];
    for (l, &p) in phys.iter().enumerate() {
        logical_at[p] = Some(l);
    }

    let mut out = Circuit::new(layout.capacity());
    let mut swaps = 0;
    let push = |out: &mut Circuit, g: Gate| out.push(g).expect("routed gate stays in range");

    for gate in c.gates() {
        match *gate {
            Gate::Cnot { control, target } => {
                let mover = control.min(target);
                let other = control.max(target);
                while layout.distance(phys[mover], phys[other]) > 1 {
                    let (r, col) = layout.coords(phys[mover]);
                    let (tr, tc) = layout.coords(phys[other]);
                    let (nr, nc) = if r != tr {
                        (if tr > r { r + 1 } else { r - 1 }, col)
                    } else {
                        (r, if tc > col { col + 1 } else { col - 1 })
                    };
                    let (from, to) = (phys[mover], nr * layout.cols + nc);
                    push(&mut out, Gate::cnot(from, to));
                    push(&mut out, Gate::cnot(to, from));
                    push(&mut out, Gate::cnot(from, to));
                    if let Some(displaced) = logical_at[to] {
                        phys[displaced] = from;
                    }
                    logical_at.swap(from, to);
                    phys[mover] = to;
                    swaps += 1;
                }
                push(&mut out, Gate::cnot(phys[control], phys[target]));
            }
            Gate::H(q) => push(&mut out, Gate::H(phys[q])),
            Gate::Rx(q, t) => push(&mut out, Gate::Rx(phys[q], t)),
            Gate::Rz(q, t) => push(&mut out, Gate::Rz(phys[q], t)),
            Gate::Measure(q) => push(&mut out, Gate::Measure(phys[q])),
        }
    }
    Ok(RoutedCircuit {
        circuit: out,
        swaps,
        final_layout: GridLayout {
            physical: phys,
            ..layout.clone()
        },
    })
}

/// Reads the logical state out of a physical-register state, assuming unused
/// positions are back in `|0⟩`.
pub fn logical_state(physical: &StateVector, layout: &GridLayout) -> StateVector {
    let n = layout.physical.len();
    let amps = (0..1usize << n)
        .map(|z| {
            let idx = (0..n)
                .filter(|&q| (z >> q) & 1 == 1)
                .fold(0usize, |acc, q| acc | 1 << layout.physical[q]);
            physical.amplitudes()[idx]
        })
        .collect();
    StateVector::from_amplitudes(amps)
}

/// `y = a · n^b`, fitted in log-log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub coefficient: f64,
    pub exponent: f64,
    /// RMS residual of the log-space fit.
    pub residual: f64,
}

impl PowerLawFit {
    pub fn eval(&self, n: f64) -> f64 {
        self.coefficient * n.powf(self.exponent)
    }
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit, RouterError> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(RouterError::TooFewPoints(xs.len()));
    }
    if let Some(&(n, y)) = points.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(RouterError::NonPositive { n, y });
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let b = sxy / sxx;
    let ln_a = my - b * mx;
    let residual = (logs.iter().map(|p| (p.1 - ln_a - b * p.0).powi(2)).sum::<f64>() / k).sqrt();
    Ok(PowerLawFit {
        coefficient: ln_a.exp(),
        exponent: b,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapStats {
    pub n: usize,
    pub mean_swaps: f64,
    pub std_swaps: f64,
    pub samples: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapScaling {
    pub stats: Vec<SwapStats>,
    pub fit: PowerLawFit,
}

impl SwapScaling {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,mean_swaps,std_swaps\n");
        for st in &self.stats {
            s.push_str(&format!("{},{:.6},{:.6}\n", st.n, st.mean_swaps, st.std_swaps));
        }
        s
    }
}

/// SWAP count of one generated QAOA instance routed on its square grid.
pub fn instance_swaps(n: usize, layers: usize, seed: u64) -> Result<usize, RouterError> {
    let g = generate_instance(n, seed)?;
    // routing only depends on the two-qubit structure; any non-zero angles do
    let params = QaoaParams::new(vec![0.5; layers], vec![0.5; layers]).expect("valid angles");
    let c = build_qaoa(&g, &params);
    Ok(route(&c, &grid_layout(n))?.swaps)
}

/// Mean SWAP counts over `instances` generated QAOA circuits (`layers` deep) per
/// size, with a power-law fit through the means. Sizes run on scoped threads and
/// are merged in input order.
pub fn swap_scaling_experiment(
    ns: &[usize],
    instances: usize,
    layers: usize,
    seed: u64,
) -> Result<SwapScaling, RouterError> {
    let mut distinct = ns.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(RouterError::TooFewPoints(distinct.len()));
    }
    let stats: Vec<Result<SwapStats, RouterError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ns
            .iter()
            .map(|&n| {
                scope.spawn(move || {
                    let samples = (0..instances)
                        .map(|i| instance_swaps(n, layers, derive_seed(seed, n as u64, i as u64)))
                        .collect::<Result<Vec<_>, _>>()?;
                    let k = samples.len().max(1) as f64;
                    let mean = samples.iter().sum::<usize>() as f64 / k;
                    let var = samples.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / k;
                    Ok(SwapStats {
                        n,
                        mean_swaps: mean,
                        std_swaps: var.sqrt(),
                        samples,
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("swap worker panicked")).collect()
    });
    let stats = stats.into_iter().collect::<Result<Vec<_>, _>>()?;
    let points: Vec<(f64, f64)> = stats.iter().map(|s| (s.n as f64, s.mean_swaps)).collect();
    let fit = fit_power_law(&points)?;
    Ok(SwapScaling { stats, fit })
}
