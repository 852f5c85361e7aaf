mod common;

use std::collections::BTreeSet;

use common::{brute_force_adjacency, corpus, permutation};
use lemon_core::graph::{
    line_edge_count, random_molecular_graph, star_graph, to_line_graph, wl_hash, MolecularGraph,
    Vocab, DEFAULT_WL_ROUNDS,
};
use proptest::prelude::*;

fn assert_matches_oracle(g: &MolecularGraph) {
    let lg = to_line_graph(g).unwrap();
    assert_eq!(lg.graph.num_nodes(), g.num_edges());
    assert_eq!(lg.node_origin, (0..g.num_edges()).collect::<Vec<_>>());
    let got: BTreeSet<_> = lg
        .graph
        .edges()
        .iter()
        .zip(&lg.edge_origin)
        .map(|(&(a, b), &s)| (a, b, s))
        .collect();
    assert_eq!(got.len(), lg.graph.num_edges(), "no duplicate line-edges");
    assert_eq!(got, brute_force_adjacency(g));
    for (i, f) in lg.graph.node_features().iter().enumerate() {
        assert_eq!(*f, g.edge_features()[lg.node_origin[i]]);
    }
    for (k, f) in lg.graph.edge_features().iter().enumerate() {
        assert_eq!(*f, g.node_features()[lg.edge_origin[k]]);
    }
}

#[test]
fn matches_pairwise_oracle_on_random_graphs() {
    for g in corpus(1000, (2, 40), 6) {
        assert_matches_oracle(&g);
        assert_eq!(
            to_line_graph(&g).unwrap().graph.num_edges(),
            line_edge_count(&g)
        );
    }
}

#[test]
fn star_blowup_is_quadratic() {
    for e in 2..=32 {
        assert_eq!(
            to_line_graph(&star_graph(e)).unwrap().graph.num_edges(),
            e * (e - 1) / 2
        );
    }
}

#[test]
fn line_graph_hash_is_relabeling_invariant() {
    for (k, g) in corpus(200, (2, 30), 4).into_iter().enumerate() {
        let p = permutation(g.num_nodes(), 1000 + k as u64);
        let a = wl_hash(&to_line_graph(&g).unwrap().graph, DEFAULT_WL_ROUNDS);
        let b = wl_hash(
            &to_line_graph(&g.permuted(&p)).unwrap().graph,
            DEFAULT_WL_ROUNDS,
        );
        assert_eq!(a, b, "graph {k}");
    }
}

#[test]
fn transformation_is_pure() {
    for g in corpus(50, (2, 20), 4) {
        let before = g.clone();
        let a = to_line_graph(&g).unwrap();
        let b = to_line_graph(&g).unwrap();
        assert_eq!(g, before);
        assert_eq!(a, b);
    }
}

#[test]
fn generator_respects_degree_cap() {
    let v = Vocab::default();
    for s in 0..10_000 {
        let g = random_molecular_graph(s, (2, 20), 4, &v);
        assert!(g.degrees().into_iter().max().unwrap() <= 4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn oracle_agreement(seed in any::<u64>(), lo in 2usize..10, extra in 0usize..25, cap in 1usize..7) {
        let g = random_molecular_graph(seed, (lo, lo + extra), cap, &Vocab::default());
        assert_matches_oracle(&g);
    }

    #[test]
    fn count_formula_and_view_consistency(seed in any::<u64>(), cap in 2usize..7) {
        let g = random_molecular_graph(seed, (2, 30), cap, &Vocab::default());
        let lg = to_line_graph(&g).unwrap();
        prop_assert!(lg.matches(&g));
        let direct: usize = g.degrees().iter().map(|&d| d * d.saturating_sub(1) / 2).sum();
        prop_assert_eq!(lg.graph.num_edges(), direct);
    }

    #[test]
    fn whitney_direction(seed in any::<u64>(), pseed in any::<u64>()) {
        let g = random_molecular_graph(seed, (2, 25), 4, &Vocab::default());
        let p = permutation(g.num_nodes(), pseed);
        let a = wl_hash(&to_line_graph(&g).unwrap().graph, DEFAULT_WL_ROUNDS);
        let b = wl_hash(&to_line_graph(&g.permuted(&p)).unwrap().graph, DEFAULT_WL_ROUNDS);
        prop_assert_eq!(a, b);
    }
}
