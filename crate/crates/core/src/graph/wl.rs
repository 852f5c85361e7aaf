use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::MolecularGraph;

pub const DEFAULT_WL_ROUNDS: usize = 3;

/// Weisfeiler-Lehman colour-refinement digest. Equal for isomorphic
/// attributed graphs; unequal digests prove non-isomorphism, equal ones
/// prove nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WlHash {
    pub digest: u64,
    pub rounds: usize,
}

fn mix(words: impl IntoIterator<Item = u64>) -> u64 {
    let mut h = FnvHasher::default();
    for w in words {
        h.write_u64(w);
    }
    h.finish()
}

pub fn wl_hash(g: &MolecularGraph, rounds: usize) -> WlHash {
    assert!(rounds > 0, "wl_hash needs at least one round");
    let n = g.num_nodes();
    let mut colors: Vec<u64> = g
        .node_features()
        .iter()
        .map(|f| mix([f[0] as u64, f[1] as u64]))
        .collect();
    let edge_colors: Vec<u64> = g
        .edge_features()
        .iter()
        .map(|f| mix([0xE, f[0] as u64, f[1] as u64]))
        .collect();
    let mut neighbors: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
    for (&(u, v), &c) in g.edges().iter().zip(&edge_colors) {
        neighbors[u].push((v, c));
        neighbors[v].push((u, c));
    }

    // Digest accumulates the sorted colour histogram of every round so that
    // refinement history, not just the last partition, contributes.
    let mut history = Vec::with_capacity(rounds + 1);
    history.push(histogram_digest(&colors));
    let mut signature = Vec::new();
    for _ in 0..rounds {
        let next: Vec<u64> = (0..n)
            .map(|v| {
                signature.clear();
                signature.extend(neighbors[v].iter().map(|&(u, edge)| mix([colors[u], edge])));
                signature.sort_unstable();
                mix(std::iter::once(colors[v]).chain(signature.iter().copied()))
            })
            .collect();
        colors = next;
        history.push(histogram_digest(&colors));
    }
    WlHash {
        digest: mix(history.into_iter().chain([n as u64, g.num_edges() as u64])),
        rounds,
    }
}

fn histogram_digest(colors: &[u64]) -> u64 {
    let mut sorted = colors.to_vec();
    sorted.sort_unstable();
    mix(sorted)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::{star, triangle};
    use super::*;

    fn blank(g: &MolecularGraph) -> MolecularGraph {
        MolecularGraph::new(
            vec![[0, 0]; g.num_nodes()],
            g.edges().to_vec(),
            vec![[0, 0]; g.num_edges()],
        )
        .unwrap()
    }

    #[test]
    fn permutation_invariant() {
        let g = star(4);
        let p = g.permuted(&[3, 1, 4, 0, 2]);
        assert_eq!(wl_hash(&g, 3), wl_hash(&p, 3));
    }

    #[test]
    fn separates_triangle_and_star() {
        assert_ne!(
            wl_hash(&blank(&triangle()), 3),
            wl_hash(&blank(&star(3)), 3)
        );
    }

    #[test]
    fn sensitive_to_node_features() {
        let g = triangle();
        let mut nodes = g.node_features().to_vec();
        nodes[1] = [9, 2];
        let h = MolecularGraph::new(nodes, g.edges().to_vec(), g.edge_features().to_vec()).unwrap();
        assert_ne!(wl_hash(&g, 3), wl_hash(&h, 3));
    }
}
