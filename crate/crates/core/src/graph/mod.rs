//! Attributed undirected graphs, the line-graph transformation and
//! structural helpers (WL hashing, synthetic generators).

mod generate;
mod line_graph;
mod wl;

pub use generate::{
    make_hard_negative_pair, random_molecular_graph, star_graph, HardNegativeMode, Vocab,
};
pub use line_graph::{line_edge_count, to_line_graph, LineGraphView};
pub use wl::{wl_hash, WlHash, DEFAULT_WL_ROUNDS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A pair of categorical indices. For atoms this is (atomic number, chirality),
/// for bonds (bond type, bond direction).
pub type Features = [usize; 2];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph has no edges")]
    EmptyEdgeSet,
    #[error("edge {edge} endpoint {node} out of range for {nodes} nodes")]
    EndpointOutOfRange {
        edge: usize,
        node: usize,
        nodes: usize,
    },
    #[error("edge {edge} is a self-loop on node {node}")]
    SelfLoop { edge: usize, node: usize },
    #[error("edge {edge} is not stored in canonical order ({u}, {v}); expected u < v")]
    NonCanonicalEdge { edge: usize, u: usize, v: usize },
    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: usize, v: usize },
    #[error("{edges} edges but {features} edge feature rows")]
    FeatureCountMismatch { edges: usize, features: usize },
}

/// Undirected attributed graph. Edges are stored once with `u < v`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MolecularGraph {
    node_features: Vec<Features>,
    edges: Vec<(usize, usize)>,
    edge_features: Vec<Features>,
}

impl MolecularGraph {
    /// Builds a graph after checking every structural invariant.
    pub fn new(
        node_features: Vec<Features>,
        edges: Vec<(usize, usize)>,
        edge_features: Vec<Features>,
    ) -> Result<Self, GraphError> {
        let graph = Self {
            node_features,
            edges,
            edge_features,
        };
        graph.validate()?;
        Ok(graph)
    }

    /// Like [`MolecularGraph::new`] but accepts edges in either orientation and
    /// stores them canonically. Feature rows follow their edges.
    pub fn from_unordered(
        node_features: Vec<Features>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        edge_features: Vec<Features>,
    ) -> Result<Self, GraphError> {
        let edges = edges
            .into_iter()
            .map(|(u, v)| if u <= v { (u, v) } else { (v, u) })
            .collect();
        Self::new(node_features, edges, edge_features)
    }

    fn validate(&self) -> Result<(), GraphError> {
        let nodes = self.node_features.len();
        if self.edge_features.len() != self.edges.len() {
            return Err(GraphError::FeatureCountMismatch {
                edges: self.edges.len(),
                features: self.edge_features.len(),
            });
        }
        let mut seen = std::collections::HashSet::with_capacity(self.edges.len());
        for (edge, &(u, v)) in self.edges.iter().enumerate() {
            for node in [u, v] {
                if node >= nodes {
                    return Err(GraphError::EndpointOutOfRange { edge, node, nodes });
                }
            }
            if u == v {
                return Err(GraphError::SelfLoop { edge, node: u });
            }
            if u > v {
                return Err(GraphError::NonCanonicalEdge { edge, u, v });
            }
            if !seen.insert((u, v)) {
                return Err(GraphError::DuplicateEdge { u, v });
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.node_features.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_features(&self) -> &[Features] {
        &self.node_features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_features(&self) -> &[Features] {
        &self.edge_features
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes()];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Incident edge indices per node, each list in ascending edge order.
    pub fn incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.num_nodes()];
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            inc[u].push(e);
            inc[v].push(e);
        }
        inc
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`. Edges are
    /// re-canonicalized and sorted, carrying their features along.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.num_nodes(), "permutation length");
        let mut node_features = vec![[0, 0]; self.num_nodes()];
        for (old, &new) in perm.iter().enumerate() {
            node_features[new] = self.node_features[old];
        }
        let mut edges: Vec<((usize, usize), Features)> = self
            .edges
            .iter()
            .zip(&self.edge_features)
            .map(|(&(u, v), &f)| {
                let (a, b) = (perm[u], perm[v]);
                ((a.min(b), a.max(b)), f)
            })
            .collect();
        edges.sort();
        Self {
            node_features,
            edges: edges.iter().map(|e| e.0).collect(),
            edge_features: edges.iter().map(|e| e.1).collect(),
        }
    }

    /// Checks that every categorical index fits the given vocabulary.
    pub fn check_vocab(&self, vocab: &Vocab) -> Result<(), (usize, usize)> {
        for f in &self.node_features {
            if f[0] >= vocab.atom {
                return Err((f[0], vocab.atom));
            }
            if f[1] >= vocab.chirality {
                return Err((f[1], vocab.chirality));
            }
        }
        for f in &self.edge_features {
            if f[0] >= vocab.bond {
                return Err((f[0], vocab.bond));
            }
            if f[1] >= vocab.direction {
                return Err((f[1], vocab.direction));
            }
        }
        Ok(())
    }
}

/// One JSON Lines record: `{"nodes": [[a,c],...], "edges": [[u,v,bt,bd],...]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct GraphRecord {
    pub nodes: Vec<[usize; 2]>,
    pub edges: Vec<[usize; 4]>,
}

impl From<&MolecularGraph> for GraphRecord {
    fn from(g: &MolecularGraph) -> Self {
        Self {
            nodes: g.node_features.clone(),
            edges: g
                .edges
                .iter()
                .zip(&g.edge_features)
                .map(|(&(u, v), f)| [u, v, f[0], f[1]])
                .collect(),
        }
    }
}

impl TryFrom<GraphRecord> for MolecularGraph {
    type Error = GraphError;

    fn try_from(rec: GraphRecord) -> Result<Self, GraphError> {
        let (edges, edge_features) = rec
            .edges
            .into_iter()
            .map(|[u, v, bt, bd]| ((u, v), [bt, bd]))
            .unzip();
        MolecularGraph::new(rec.nodes, edges, edge_features)
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_edges() {
        let nf = vec![[0, 0]; 3];
        assert_eq!(
            MolecularGraph::new(nf.clone(), vec![(0, 3)], vec![[0, 0]]),
            Err(GraphError::EndpointOutOfRange {
                edge: 0,
                node: 3,
                nodes: 3
            })
        );
        assert_eq!(
            MolecularGraph::new(nf.clone(), vec![(1, 1)], vec![[0, 0]]),
            Err(GraphError::SelfLoop { edge: 0, node: 1 })
        );
        assert_eq!(
            MolecularGraph::new(nf.clone(), vec![(2, 1)], vec![[0, 0]]),
            Err(GraphError::NonCanonicalEdge {
                edge: 0,
                u: 2,
                v: 1
            })
        );
        assert_eq!(
            MolecularGraph::new(nf.clone(), vec![(0, 1), (0, 1)], vec![[0, 0]; 2]),
            Err(GraphError::DuplicateEdge { u: 0, v: 1 })
        );
        assert_eq!(
            MolecularGraph::new(nf, vec![(0, 1)], vec![]),
            Err(GraphError::FeatureCountMismatch {
                edges: 1,
                features: 0
            })
        );
    }

    #[test]
    fn permutation_keeps_features_attached() {
        let g = fixtures::triangle();
        let p = g.permuted(&[2, 0, 1]);
        assert_eq!(p.node_features()[2], [6, 0]);
        assert_eq!(p.node_features()[0], [7, 0]);
        // old edge (0,1) -> (2,0) -> canonical (0,2)
        let idx = p.edges().iter().position(|&e| e == (0, 2)).unwrap();
        assert_eq!(p.edge_features()[idx], [0, 0]);
    }

    #[test]
    fn record_round_trip() {
        let g = fixtures::star(3);
        let rec = GraphRecord::from(&g);
        let json = serde_json::to_string(&rec).unwrap();
        let back: GraphRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(MolecularGraph::try_from(back).unwrap(), g);
    }
}
