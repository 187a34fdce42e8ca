//! Max-Cut problem instances and their exact classical oracles.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vertex degree held constant across instance sizes.
pub const DEGREE: usize = 4;

/// Largest instance the exhaustive oracle will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 24;

const PAIRING_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProblemError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("bitstring has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("bitstring contains non-binary character {0:?}")]
    BadBit(char),
    #[error("refusing to enumerate 2^{0} assignments (limit is 2^{BRUTE_FORCE_LIMIT})")]
    TooLarge(usize),
    #[error("shot counts are empty")]
    NoShots,
}

/// A Max-Cut instance: `n` vertices (one per qubit) and unweighted constraint edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct ProblemGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    edges: Vec<[usize; 2]>,
    seed: u64,
}

impl TryFrom<GraphRepr> for ProblemGraph {
    type Error = ProblemError;

    fn try_from(repr: GraphRepr) -> Result<Self, Self::Error> {
        ProblemGraph::new(repr.n, repr.edges.iter().map(|e| (e[0], e[1])), repr.seed)
    }
}

impl From<ProblemGraph> for GraphRepr {
    fn from(g: ProblemGraph) -> Self {
        GraphRepr {
            n: g.n,
            edges: g.edges.iter().map(|&(i, j)| [i, j]).collect(),
            seed: g.seed,
        }
    }
}

impl ProblemGraph {
    /// Builds a graph from an edge list. Edges are normalized to `(min, max)` and sorted.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        seed: u64,
    ) -> Result<Self, ProblemError> {
        if n < 2 {
            return Err(ProblemError::InvalidInstance(format!("n = {n} < 2")));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(ProblemError::InvalidInstance(format!("self-loop on {a}")));
            }
            if a >= n || b >= n {
                return Err(ProblemError::InvalidInstance(format!(
                    "edge ({a},{b}) out of range for n = {n}"
                )));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(ProblemError::InvalidInstance(format!("duplicate edge ({a},{b})")));
            }
        }
        Ok(ProblemGraph {
            n,
            edges: set.into_iter().collect(),
            seed,
        })
    }

    pub fn complete(n: usize) -> Result<Self, ProblemError> {
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        Self::new(n, edges, 0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as `(i, j)` with `i < j`, sorted lexicographically.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(i, j)| i == v || j == v).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }
}

/// Generates a benchmark instance with four constraints per qubit.
///
/// For `n >= 5` this samples a simple 4-regular graph with the pairing model,
/// rejecting draws with loops or repeated edges. Smaller instances cannot be
/// 4-regular and fall back to the complete graph.
pub fn generate_instance(n: usize, seed: u64) -> Result<ProblemGraph, ProblemError> {
    if n < 2 {
        return Err(ProblemError::InvalidInstance(format!("n = {n} < 2")));
    }
    if n <= DEGREE {
        let mut g = ProblemGraph::complete(n)?;
        g.seed = seed;
        return Ok(g);
    }

    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, DEGREE)).collect();
    for reseed in 0u64.. {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(reseed);
        'attempt: for _ in 0..PAIRING_ATTEMPTS {
            stubs.shuffle(&mut rng);
            let mut edges = BTreeSet::new();
            for pair in stubs.chunks_exact(2) {
                let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
                if a == b || !edges.insert((a, b)) {
                    continue 'attempt;
                }
            }
            return ProblemGraph::new(n, edges, seed);
        }
    }
    unreachable!("pairing model retries are unbounded")
}

fn parse_bits(bits: &str, n: usize) -> Result<u64, ProblemError> {
    if bits.len() != n {
        return Err(ProblemError::LengthMismatch {
            expected: n,
            got: bits.len(),
        });
    }
    let mut mask = 0u64;
    for (q, ch) in bits.chars().enumerate() {
        match ch {
            '0' => {}
            '1' => mask |= 1 << q,
            other => return Err(ProblemError::BadBit(other)),
        }
    }
    Ok(mask)
}

/// Cut size of the assignment whose bit `q` is `(mask >> q) & 1`.
fn cut_of_mask(g: &ProblemGraph, mask: u64) -> usize {
    g.edges
        .iter()
        .filter(|&&(i, j)| ((mask >> i) ^ (mask >> j)) & 1 == 1)
        .count()
}

/// Number of edges whose endpoints carry different bits. Character `q` of `z` is qubit `q`.
pub fn cut_value(g: &ProblemGraph, z: &str) -> Result<usize, ProblemError> {
    Ok(cut_of_mask(g, parse_bits(z, g.n)?))
}

/// Exhaustive maximum cut. Returns the value and the first maximizing bitstring
/// in enumeration order.
pub fn brute_force_max_cut(g: &ProblemGraph) -> Result<(usize, String), ProblemError> {
    if g.n > BRUTE_FORCE_LIMIT {
        return Err(ProblemError::TooLarge(g.n));
    }
    let (best_mask, best) = (0..1u64 << g.n)
        .map(|m| (m, cut_of_mask(g, m)))
        .fold((0, 0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    Ok((best, mask_to_bits(best_mask, g.n)))
}

pub(crate) fn mask_to_bits(mask: u64, n: usize) -> String {
    (0..n)
        .map(|q| if (mask >> q) & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Histogram of measured bitstrings. Keys have one character per qubit, qubit 0 leftmost.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotCounts {
    n: usize,
    counts: BTreeMap<String, u64>,
}

impl ShotCounts {
    pub fn new(n: usize) -> Self {
        ShotCounts {
            n,
            counts: BTreeMap::new(),
        }
    }

    pub fn from_pairs<'a>(
        n: usize,
        pairs: impl IntoIterator<Item = (&'a str, u64)>,
    ) -> Result<Self, ProblemError> {
        let mut counts = ShotCounts::new(n);
        for (bits, c) in pairs {
            counts.add(bits, c)?;
        }
        Ok(counts)
    }

    pub fn add(&mut self, bits: &str, count: u64) -> Result<(), ProblemError> {
        parse_bits(bits, self.n)?;
        if count > 0 {
            *self.counts.entry(bits.to_owned()).or_default() += count;
        }
        Ok(())
    }

    pub(crate) fn add_mask(&mut self, mask: u64, count: u64) {
        if count > 0 {
            *self.counts.entry(mask_to_bits(mask, self.n)).or_default() += count;
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn get(&self, bits: &str) -> u64 {
        self.counts.get(bits).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, &v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Most frequent bitstring; ties resolve to the lexicographically smallest.
    pub fn mode(&self) -> Option<&str> {
        self.counts
            .iter()
            .fold(None, |best: Option<(&String, u64)>, (k, &v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((k, v)),
            })
            .map(|(k, _)| k.as_str())
    }
}

/// Shot-averaged cut value.
pub fn expected_cut(g: &ProblemGraph, counts: &ShotCounts) -> Result<f64, ProblemError> {
    if counts.n != g.n {
        return Err(ProblemError::LengthMismatch {
            expected: g.n,
            got: counts.n,
        });
    }
    let total = counts.total();
    if total == 0 {
        return Err(ProblemError::NoShots);
    }
    let mut acc = 0u64;
    for (bits, c) in counts.iter() {
        acc += cut_value(g, bits)? as u64 * c;
    }
    Ok(acc as f64 / total as f64)
}

/// Highest cut among the observed bitstrings.
pub fn best_observed(g: &ProblemGraph, counts: &ShotCounts) -> Result<(usize, String), ProblemError> {
    let mut best: Option<(usize, &str)> = None;
    for (bits, _) in counts.iter() {
        let cut = cut_value(g, bits)?;
        if best.is_none_or(|(b, _)| cut > b) {
            best = Some((cut, bits));
        }
    }
    best.map(|(c, b)| (c, b.to_owned())).ok_or(ProblemError::NoShots)
}
