use std::collections::{HashMap, VecDeque};

use qprofile_core::circuit::{build_qaoa, Circuit, Gate, QaoaParams};
use qprofile_core::problem::ProblemGraph;
use qprofile_core::router::{grid_layout, route, GridLayout};

/// Minimum total SWAPs to execute the two-qubit gates of `c` in order on `layout`,
/// found by exhaustive search over placements (logical → physical permutations).
fn optimal_swaps(c: &Circuit, layout: &GridLayout) -> usize {
    let cap = layout.capacity();
    let edges: Vec<(usize, usize)> = (0..cap)
        .flat_map(|a| (a + 1..cap).map(move |b| (a, b)))
        .filter(|&(a, b)| layout.adjacent(a, b))
        .collect();
    // placements[physical] = logical or usize::MAX
    let start: Vec<usize> = {
        let mut p = vec![usize::MAX; cap];
        for (l, &ph) in layout.physical.iter().enumerate() {
            p[ph] = l;
        }
        p
    };
    let mut frontier: HashMap<Vec<usize>, usize> = HashMap::from([(start, 0)]);
    for gate in c.gates() {
        let Gate::Cnot { control, target } = *gate else { continue };
        // all placements reachable from the frontier, with cheapest cost
        let mut best: HashMap<Vec<usize>, usize> = frontier.clone();
        let mut queue: VecDeque<Vec<usize>> = frontier.keys().cloned().collect();
        while let Some(p) = queue.pop_front() {
            let cost = best[&p];
            for &(a, b) in &edges {
                let mut q = p.clone();
                q.swap(a, b);
                if best.get(&q).is_none_or(|&c| c > cost + 1) {
                    best.insert(q.clone(), cost + 1);
                    queue.push_back(q);
                }
            }
        }
        frontier = best
            .into_iter()
            .filter(|(p, _)| {
                let pc = p.iter().position(|&l| l == control).unwrap();
                let pt = p.iter().position(|&l| l == target).unwrap();
                layout.adjacent(pc, pt)
            })
            .collect();
    }
    frontier.values().copied().min().unwrap()
}

#[test]
fn greedy_matches_exhaustive_on_k4() {
    let k4 = ProblemGraph::complete(4).unwrap();
    let edges: Vec<_> = k4.edges().to_vec();
    assert_eq!(edges, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
    let c = build_qaoa(&k4, &QaoaParams::new(vec![0.5], vec![0.5]).unwrap());
    let layout = grid_layout(4);
    let greedy = route(&c, &layout).unwrap().swaps;
    let optimal = optimal_swaps(&c, &layout);
    assert_eq!(optimal, 2);
    assert_eq!(greedy, optimal);
}

#[test]
fn greedy_never_beats_exhaustive() {
    for seed in 0..4 {
        let g = qprofile_core::generate_instance(5, seed).unwrap();
        let c = build_qaoa(&g, &QaoaParams::new(vec![0.5], vec![0.5]).unwrap());
        let mut layout = grid_layout(5);
        layout.physical = (0..5).collect();
        let greedy = route(&c, &layout).unwrap().swaps;
        assert!(greedy >= optimal_swaps(&c, &layout));
    }
}
