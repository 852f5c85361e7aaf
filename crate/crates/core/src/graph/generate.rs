use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{wl_hash, Features, MolecularGraph, DEFAULT_WL_ROUNDS};

/// Categorical vocabulary sizes for the four feature fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub atom: usize,
    pub chirality: usize,
    pub bond: usize,
    pub direction: usize,
}

impl Default for Vocab {
    fn default() -> Self {
        Self {
            atom: 120,
            chirality: 3,
            bond: 6,
            direction: 3,
        }
    }
}

/// Connected random graph with `|V|` uniform in `node_range` and maximum
/// degree at most `degree_cap`. With `degree_cap == 1` the only connected
/// option is a single edge, so `|V|` is pinned to 2.
pub fn random_molecular_graph(
    rng_seed: u64,
    node_range: (usize, usize),
    degree_cap: usize,
    vocab: &Vocab,
) -> MolecularGraph {
    let (lo, hi) = node_range;
    assert!(
        lo >= 2 && lo <= hi,
        "node range must satisfy 2 <= min <= max"
    );
    assert!(degree_cap >= 1, "degree cap must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n = if degree_cap == 1 {
        2
    } else {
        rng.gen_range(lo..=hi)
    };
    let (edges, _) = random_topology(&mut rng, n, degree_cap, true);
    let node_features = (0..n)
        .map(|_| {
            [
                rng.gen_range(0..vocab.atom),
                rng.gen_range(0..vocab.chirality),
            ]
        })
        .collect();
    let edge_features = (0..edges.len())
        .map(|_| {
            [
                rng.gen_range(0..vocab.bond),
                rng.gen_range(0..vocab.direction),
            ]
        })
        .collect();
    MolecularGraph::new(node_features, edges, edge_features).expect("generator emits valid graphs")
}

/// Random spanning tree plus (optionally) a few chords, all under the cap.
/// Returns sorted canonical edges and the degree vector.
fn random_topology(
    rng: &mut ChaCha8Rng,
    n: usize,
    cap: usize,
    chords: bool,
) -> (Vec<(usize, usize)>, Vec<usize>) {
    let mut deg = vec![0usize; n];
    let mut edges = Vec::with_capacity(n + n / 3);
    let mut open = Vec::with_capacity(n);
    for v in 1..n {
        open.clear();
        open.extend((0..v).filter(|&u| deg[u] < cap));
        let u = *open.choose(rng).expect("a leaf always has spare degree");
        edges.push((u, v));
        deg[u] += 1;
        deg[v] += 1;
    }
    if chords && n >= 4 {
        let extra = rng.gen_range(0..=n / 3);
        for _ in 0..extra * 4 {
            if edges.len() >= n - 1 + extra {
                break;
            }
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            let e = (u.min(v), u.max(v));
            if u == v || deg[u] >= cap || deg[v] >= cap || edges.contains(&e) {
                continue;
            }
            edges.push(e);
            deg[u] += 1;
            deg[v] += 1;
        }
    }
    edges.sort_unstable();
    (edges, deg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HardNegativeMode {
    /// One topology, two arrangements of the same node-feature multiset.
    SameStructure,
    /// Two topologies carrying the same node-feature multiset.
    DifferentStructure,
}

/// Produces two graphs that differ as attributed graphs (distinct WL digests)
/// yet have identical node- and edge-feature multisets, so any sum pooling
/// over raw one-hot features cannot tell them apart.
pub fn make_hard_negative_pair(
    topology_seed: u64,
    mode: HardNegativeMode,
) -> (MolecularGraph, MolecularGraph) {
    let mut rng = ChaCha8Rng::seed_from_u64(topology_seed ^ 0x48a4_d5e9_c0ff_ee00);
    let vocab = Vocab::default();
    loop {
        let n = rng.gen_range(4..=9);
        let green = rng.gen_range(0..vocab.atom);
        let blue = (green + rng.gen_range(1..vocab.atom)) % vocab.atom;
        let blues = rng.gen_range(1..n);
        let mut palette: Vec<Features> = (0..n)
            .map(|i| if i < blues { [blue, 0] } else { [green, 0] })
            .collect();
        palette.shuffle(&mut rng);

        let (left_edges, _) = random_topology(&mut rng, n, 4, true);
        let bond: Features = [
            rng.gen_range(0..vocab.bond),
            rng.gen_range(0..vocab.direction),
        ];
        let left = MolecularGraph::new(
            palette.clone(),
            left_edges.clone(),
            vec![bond; left_edges.len()],
        )
        .expect("valid left graph");
        let left_hash = wl_hash(&left, DEFAULT_WL_ROUNDS);

        for _ in 0..16 {
            let right_edges = match mode {
                HardNegativeMode::SameStructure => left_edges.clone(),
                HardNegativeMode::DifferentStructure => {
                    let (e, _) = random_topology(&mut rng, n, 4, false);
                    // keep the edge-feature multiset equal as well
                    if e.len() != left_edges.len() || e == left_edges {
                        continue;
                    }
                    e
                }
            };
            let mut arrangement = palette.clone();
            arrangement.shuffle(&mut rng);
            let right = MolecularGraph::new(
                arrangement,
                right_edges.clone(),
                vec![bond; right_edges.len()],
            )
            .expect("valid right graph");
            if wl_hash(&right, DEFAULT_WL_ROUNDS) != left_hash {
                return (left, right);
            }
        }
    }
}

/// The star `K1,leaves` with the hub at node 0.
pub fn star_graph(leaves: usize) -> MolecularGraph {
    MolecularGraph::new(
        vec![[0, 0]; leaves + 1],
        (1..=leaves).map(|i| (0, i)).collect(),
        vec![[0, 0]; leaves],
    )
    .expect("star is a valid graph")
}
