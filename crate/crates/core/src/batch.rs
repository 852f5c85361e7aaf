//! Disjoint-union batching of graphs and their line graphs.

use crate::graph::{to_line_graph, Features, LineGraphView, MolecularGraph, Vocab};
use crate::{Error, Result};

/// Several graphs glued into one disconnected graph, with the matching union
/// of their line graphs. Line-node `i` of the batch is source edge `i` of the
/// batch, so both views share `edge_offsets`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub num_graphs: usize,
    pub node_features: Vec<Features>,
    /// Graph index of every node.
    pub node_graph: Vec<usize>,
    /// `node_offsets[g]..node_offsets[g + 1]` are the nodes of graph `g`.
    pub node_offsets: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    pub edge_features: Vec<Features>,
    /// Graph index of every edge (equivalently every line-node).
    pub edge_graph: Vec<usize>,
    pub edge_offsets: Vec<usize>,
    /// Line-graph edges between batch edge indices.
    pub line_edges: Vec<(usize, usize)>,
    pub line_edge_features: Vec<Features>,
    /// Batch node shared by the two edges of each line-edge.
    pub line_edge_origin: Vec<usize>,
}

impl Batch {
    pub fn new(pairs: &[(&MolecularGraph, &LineGraphView)]) -> Result<Self> {
        let mut b = Batch {
            num_graphs: pairs.len(),
            node_features: Vec::new(),
            node_graph: Vec::new(),
            node_offsets: vec![0],
            edges: Vec::new(),
            edge_features: Vec::new(),
            edge_graph: Vec::new(),
            edge_offsets: vec![0],
            line_edges: Vec::new(),
            line_edge_features: Vec::new(),
            line_edge_origin: Vec::new(),
        };
        for (gi, &(g, lg)) in pairs.iter().enumerate() {
            if g.num_nodes() == 0 {
                return Err(Error::EmptyGraph { graph: gi });
            }
            if !lg.matches(g) {
                return Err(Error::ViewMismatch { graph: gi });
            }
            let (n0, e0) = (b.node_features.len(), b.edges.len());
            b.node_features.extend_from_slice(g.node_features());
            b.node_graph.extend(std::iter::repeat_n(gi, g.num_nodes()));
            b.edges
                .extend(g.edges().iter().map(|&(u, v)| (u + n0, v + n0)));
            b.edge_features.extend_from_slice(g.edge_features());
            b.edge_graph.extend(std::iter::repeat_n(gi, g.num_edges()));
            for ((&(x, y), &f), &shared) in lg
                .graph
                .edges()
                .iter()
                .zip(lg.graph.edge_features())
                .zip(&lg.edge_origin)
            {
                let (a, c) = (lg.node_origin[x], lg.node_origin[y]);
                b.line_edges.push((a.min(c) + e0, a.max(c) + e0));
                b.line_edge_features.push(f);
                b.line_edge_origin.push(shared + n0);
            }
            b.node_offsets.push(b.node_features.len());
            b.edge_offsets.push(b.edges.len());
        }
        Ok(b)
    }

    /// Convenience: transform each graph and batch the result.
    pub fn from_graphs(graphs: &[MolecularGraph]) -> Result<Self> {
        let views = graphs
            .iter()
            .map(to_line_graph)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let pairs: Vec<_> = graphs.iter().zip(&views).collect();
        Self::new(&pairs)
    }

    pub fn num_nodes(&self) -> usize {
        self.node_features.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes_in(&self, graph: usize) -> usize {
        self.node_offsets[graph + 1] - self.node_offsets[graph]
    }

    pub fn edges_in(&self, graph: usize) -> usize {
        self.edge_offsets[graph + 1] - self.edge_offsets[graph]
    }

    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        let check = |field, value: usize, size| {
            if value < size {
                Ok(())
            } else {
                Err(Error::VocabOutOfRange { field, value, size })
            }
        };
        for f in &self.node_features {
            check("atomic number", f[0], vocab.atom)?;
            check("chirality", f[1], vocab.chirality)?;
        }
        for f in &self.edge_features {
            check("bond type", f[0], vocab.bond)?;
            check("bond direction", f[1], vocab.direction)?;
        }
        Ok(())
    }
}
