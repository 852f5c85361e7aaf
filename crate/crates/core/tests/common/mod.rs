#![allow(dead_code)]

use std::collections::BTreeSet;

use lemon_core::batch::Batch;
use lemon_core::encoder::{encode_dual, DualHelixParams, EncoderConfig};
use lemon_core::graph::{random_molecular_graph, MolecularGraph, Vocab};
use lemon_core::tensor::{Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn corpus(n: u64, nodes: (usize, usize), cap: usize) -> Vec<MolecularGraph> {
    let v = Vocab::default();
    (0..n)
        .map(|s| random_molecular_graph(s, nodes, cap, &v))
        .collect()
}

pub fn small_encoder(depth: usize, hidden: usize) -> EncoderConfig {
    EncoderConfig {
        depth,
        hidden,
        ..EncoderConfig::desk()
    }
}

pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    p
}

/// Off-tape snapshot of an encoding.
pub struct Encoded {
    pub graph_layers: Vec<Tensor>,
    pub line_layers: Vec<Tensor>,
    pub graph_nodes: Tensor,
    pub line_nodes: Tensor,
    pub graph_repr: Tensor,
    pub line_repr: Tensor,
    pub edge_pairs: Tensor,
}

pub fn encode(params: &DualHelixParams, batch: &Batch) -> Encoded {
    let tape = Tape::new();
    let bound = params.bind(&tape, false);
    let e = encode_dual(&tape, &bound, batch).unwrap();
    let v = |x| tape.value(x).clone();
    Encoded {
        graph_layers: e.graph_layers.iter().map(|&x| v(x)).collect(),
        line_layers: e.line_layers.iter().map(|&x| v(x)).collect(),
        graph_nodes: v(e.graph_nodes),
        line_nodes: v(e.line_nodes),
        graph_repr: v(e.graph_repr),
        line_repr: v(e.line_repr),
        edge_pairs: v(e.edge_pairs),
    }
}

/// Quadratic reference: every pair of edges sharing an endpoint, with the
/// shared node, as `(i, j, shared)` with `i < j`.
pub fn brute_force_adjacency(g: &MolecularGraph) -> BTreeSet<(usize, usize, usize)> {
    let e = g.edges();
    let mut out = BTreeSet::new();
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            let (a, b) = (e[i], e[j]);
            for x in [a.0, a.1] {
                if x == b.0 || x == b.1 {
                    out.insert((i, j, x));
                }
            }
        }
    }
    out
}
