use super::{GraphError, MolecularGraph};

/// The line graph `L(G)` together with provenance back to `G`.
///
/// Line-node `i` is source edge `node_origin[i]` (always `i`, kept explicit so
/// consumers can check provenance). Line-edge `k` joins two source edges that
/// meet at source node `edge_origin[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineGraphView {
    pub graph: MolecularGraph,
    pub node_origin: Vec<usize>,
    pub edge_origin: Vec<usize>,
}

impl LineGraphView {
    /// True when this view's provenance and attributes are consistent with `source`.
    pub fn matches(&self, source: &MolecularGraph) -> bool {
        let lg = &self.graph;
        if lg.num_nodes() != source.num_edges()
            || self.node_origin.len() != lg.num_nodes()
            || self.edge_origin.len() != lg.num_edges()
        {
            return false;
        }
        let nodes_ok = self.node_origin.iter().enumerate().all(|(i, &e)| {
            e < source.num_edges() && lg.node_features()[i] == source.edge_features()[e]
        });
        if !nodes_ok {
            return false;
        }
        lg.edges()
            .iter()
            .zip(&self.edge_origin)
            .zip(lg.edge_features())
            .all(|((&(a, b), &shared), feat)| {
                let ea = source.edges()[self.node_origin[a]];
                let eb = source.edges()[self.node_origin[b]];
                let touches = |(u, v): (usize, usize)| u == shared || v == shared;
                shared < source.num_nodes()
                    && touches(ea)
                    && touches(eb)
                    && *feat == source.node_features()[shared]
            })
    }
}

/// Number of line-graph edges: every node of degree `d` yields `d(d-1)/2`.
pub fn line_edge_count(g: &MolecularGraph) -> usize {
    g.degrees()
        .iter()
        .map(|&d| d * d.saturating_sub(1) / 2)
        .sum()
}

/// Transforms `g` into its line graph with attribute transfer.
///
/// Line-nodes follow source-edge order. Line-edges are grouped by shared
/// source node in ascending order; within a group, pairs are lexicographic
/// in line-node index. Runs in `O(|V| + Σ deg(v)²)`.
pub fn to_line_graph(g: &MolecularGraph) -> Result<LineGraphView, GraphError> {
    if g.num_edges() == 0 {
        return Err(GraphError::EmptyEdgeSet);
    }
    let incidence = g.incidence();
    let total = line_edge_count(g);
    let mut edges = Vec::with_capacity(total);
    let mut edge_features = Vec::with_capacity(total);
    let mut edge_origin = Vec::with_capacity(total);
    for (v, inc) in incidence.iter().enumerate() {
        for (i, &a) in inc.iter().enumerate() {
            for &b in &inc[i + 1..] {
                edges.push((a, b));
                edge_features.push(g.node_features()[v]);
                edge_origin.push(v);
            }
        }
    }
    let graph = MolecularGraph {
        node_features: g.edge_features().to_vec(),
        edges,
        edge_features,
    };
    Ok(LineGraphView {
        graph,
        node_origin: (0..g.num_edges()).collect(),
        edge_origin,
    })
}
