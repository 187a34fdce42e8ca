//! Dense noiseless state-vector simulation and shot sampling.
//!
//! Basis index bit `q` holds qubit `q`; in sampled bitstrings qubit 0 is the
//! leftmost character.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::circuit::{Circuit, Gate};
use crate::problem::ShotCounts;

pub const MAX_QUBITS: usize = 24;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("{0} qubits exceeds the dense simulator limit of {MAX_QUBITS}")]
    TooManyQubits(usize),
    #[error("shot count must be at least 1")]
    NoShots,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `n` qubits.
    pub fn zero(n: usize) -> Result<Self, SimError> {
        if n > MAX_QUBITS {
            return Err(SimError::TooManyQubits(n));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector { n, amps })
    }

    pub fn basis(n: usize, index: usize) -> Result<Self, SimError> {
        let mut s = Self::zero(n)?;
        s.amps[0] = Complex64::new(0.0, 0.0);
        s.amps[index] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Self {
        assert!(amps.len().is_power_of_two(), "amplitude count must be a power of two");
        StateVector {
            n: amps.len().trailing_zeros() as usize,
            amps,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Largest elementwise deviation after aligning global phase on the largest amplitude.
    pub fn distance_up_to_phase(&self, other: &StateVector) -> f64 {
        assert_eq!(self.n, other.n);
        let pivot = (0..self.amps.len())
            .max_by(|&a, &b| self.amps[a].norm_sqr().total_cmp(&self.amps[b].norm_sqr()))
            .unwrap_or(0);
        let phase = if other.amps[pivot].norm() > 0.0 {
            let r = self.amps[pivot] / other.amps[pivot];
            r / r.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b * phase).norm())
            .fold(0.0, f64::max)
    }

    fn apply_1q(&mut self, q: usize, m: [[Complex64; 2]; 2]) {
        let stride = 1 << q;
        for base in (0..self.amps.len()).step_by(stride << 1) {
            for i in base..base + stride {
                let (a0, a1) = (self.amps[i], self.amps[i + stride]);
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i + stride] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let (cm, tm) = (1usize << control, 1usize << target);
        for i in 0..self.amps.len() {
            if i & cm != 0 && i & tm == 0 {
                self.amps.swap(i, i | tm);
            }
        }
    }

    pub fn apply(&mut self, gate: &Gate) {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        match *gate {
            Gate::H(q) => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                self.apply_1q(q, [[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]]);
            }
            Gate::Rx(q, theta) => {
                let (s, co) = (theta / 2.0).sin_cos();
                self.apply_1q(q, [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]]);
            }
            Gate::Rz(q, theta) => {
                let (s, co) = (theta / 2.0).sin_cos();
                self.apply_1q(q, [[c(co, -s), c(0.0, 0.0)], [c(0.0, 0.0), c(co, s)]]);
            }
            Gate::Cnot { control, target } => self.apply_cnot(control, target),
            Gate::Measure(_) => {}
        }
    }
}

/// Evolves `|0…0⟩` through every non-measurement gate of `c`.
pub fn simulate(c: &Circuit) -> Result<StateVector, SimError> {
    let mut s = StateVector::zero(c.n())?;
    for g in c.gates() {
        s.apply(g);
    }
    Ok(s)
}

/// Draws `shots` independent measurement outcomes from `|a_i|²`.
pub fn sample(s: &StateVector, shots: u64, seed: u64) -> Result<ShotCounts, SimError> {
    if shots == 0 {
        return Err(SimError::NoShots);
    }
    let mut cdf = Vec::with_capacity(s.amps.len());
    let mut acc = 0.0;
    for a in &s.amps {
        acc += a.norm_sqr();
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = vec![0u64; cdf.len()];
    for _ in 0..shots {
        let u = rng.gen::<f64>() * acc;
        // first index whose cumulative mass exceeds u; zero-mass outcomes are never chosen
        let idx = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        hits[idx] += 1;
    }
    let mut counts = ShotCounts::new(s.n);
    for (idx, &h) in hits.iter().enumerate() {
        counts.add_mask(idx as u64, h);
    }
    Ok(counts)
}

/// Mixes a master seed with run and iteration indices into an independent stream seed.
pub fn derive_seed(master: u64, run: u64, iteration: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    splitmix(splitmix(splitmix(master) ^ run) ^ iteration.rotate_left(32))
}
