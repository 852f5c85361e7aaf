//! Dual-helix encoder: categorical embeddings, GIN layers with edge
//! attributes over `G` and `L(G)` in lockstep, edge-attribute fusion between
//! the two, mean readout, projection head and the edge-pair MLP.

mod params;

pub use params::{layout, BoundParams, DualHelixParams, Helix};

use serde::{Deserialize, Serialize};

use crate::batch::Batch;
use crate::graph::{Features, Vocab};
use crate::tensor::{Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Number of message-passing layers per helix.
    pub depth: usize,
    pub hidden: usize,
    pub vocab: Vocab,
    /// Feed each helix's node states to the other as edge attributes from
    /// layer 1 on. When off, every layer embeds raw edge categories.
    pub edge_fusion: bool,
}

impl EncoderConfig {
    /// Small preset used by tests and the default CLI configuration.
    pub fn desk() -> Self {
        Self {
            depth: 5,
            hidden: 32,
            vocab: Vocab::default(),
            edge_fusion: true,
        }
    }

    /// Full-width preset: five layers, 300 hidden units.
    pub fn paper() -> Self {
        Self {
            hidden: 300,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if self.hidden < 2 {
            return Err(Error::Config("hidden width must be at least 2".into()));
        }
        let v = &self.vocab;
        if [v.atom, v.chirality, v.bond, v.direction].contains(&0) {
            return Err(Error::Config("vocabulary sizes must be positive".into()));
        }
        Ok(())
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Two-layer perceptron handles: `relu(x·w1 + b1)·w2 + b2`.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl Mlp {
    pub fn apply(&self, tape: &Tape, x: Var) -> Result<Var> {
        let hidden = tape.affine(x, self.w1, self.b1)?;
        let hidden = tape.relu(hidden)?;
        Ok(tape.affine(hidden, self.w2, self.b2)?)
    }
}

/// Everything the losses and readout consume, recorded on one tape.
#[derive(Debug, Clone)]
pub struct BatchEncoding {
    /// Per-layer node states of the graph helix (`layer c` output at index `c`).
    pub graph_layers: Vec<Var>,
    /// Per-layer node states of the line helix.
    pub line_layers: Vec<Var>,
    /// Final node embeddings `ΣV×d`.
    pub graph_nodes: Var,
    /// Final line-node embeddings `ΣE×d`.
    pub line_nodes: Var,
    /// Mean-pooled graph representations `N×d`, one per view.
    pub graph_repr: Var,
    pub line_repr: Var,
    /// Projection-head outputs used only by the graph-level loss.
    pub graph_proj: Var,
    pub line_proj: Var,
    /// `MLP([h_u, h_v])` for every source edge, `ΣE×d`.
    pub edge_pairs: Var,
}

/// Sum of the two categorical lookups.
pub fn embed(tape: &Tape, tables: [Var; 2], features: &[Features]) -> Result<Var> {
    let f0: Vec<usize> = features.iter().map(|f| f[0]).collect();
    let f1: Vec<usize> = features.iter().map(|f| f[1]).collect();
    let a = tape.gather(tables[0], &f0)?;
    let b = tape.gather(tables[1], &f1)?;
    Ok(tape.add(a, b)?)
}

/// One GIN layer with edge attributes:
/// `relu(MLP(h_v + Σ_{u∈N(v)} h_u + Σ_{e∋v} a_e + s))`, where `s` is the
/// self-loop attribute. Each undirected edge contributes once to each end.
pub fn gin_layer(
    tape: &Tape,
    h: Var,
    edges: &[(usize, usize)],
    edge_attrs: Option<Var>,
    self_loop: Var,
    mlp: &Mlp,
) -> Result<Var> {
    let n = tape.value(h).rows();
    let mut agg = tape.add(h, self_loop)?;
    if !edges.is_empty() {
        let us: Vec<usize> = edges.iter().map(|e| e.0).collect();
        let vs: Vec<usize> = edges.iter().map(|e| e.1).collect();
        let src: Vec<usize> = us.iter().chain(&vs).copied().collect();
        let dst: Vec<usize> = vs.iter().chain(&us).copied().collect();
        let msgs = tape.gather(h, &src)?;
        let neigh = tape.scatter_add(msgs, &dst, n)?;
        agg = tape.add(agg, neigh)?;
        let attrs = edge_attrs.expect("edge attributes for a non-empty edge set");
        let at_u = tape.scatter_add(attrs, &us, n)?;
        let at_v = tape.scatter_add(attrs, &vs, n)?;
        agg = tape.add(agg, at_u)?;
        agg = tape.add(agg, at_v)?;
    }
    let out = mlp.apply(tape, agg)?;
    Ok(tape.relu(out)?)
}

/// Per-graph mean of node embeddings.
pub fn readout(tape: &Tape, nodes: Var, node_graph: &[usize], num_graphs: usize) -> Result<Var> {
    let d = tape.value(nodes).cols();
    let mut counts = vec![0usize; num_graphs];
    for &g in node_graph {
        counts[g] += 1;
    }
    if let Some(graph) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyGraph { graph });
    }
    let sums = tape.scatter_add(nodes, node_graph, num_graphs)?;
    let denom = Tensor::matrix(
        num_graphs,
        d,
        counts
            .iter()
            .flat_map(|&c| std::iter::repeat_n(c as f64, d))
            .collect(),
    )?;
    let denom = tape.constant(denom);
    Ok(tape.div(sums, denom)?)
}

/// Projection head `relu(h·W1)·W2`.
pub fn project(tape: &Tape, h: Var, w1: Var, w2: Var) -> Result<Var> {
    let hidden = tape.matmul(h, w1)?;
    let hidden = tape.relu(hidden)?;
    Ok(tape.matmul(hidden, w2)?)
}

/// `MLP([h_u, h_v])` per edge, using the stored `u < v` orientation.
pub fn edge_pair_representation(
    tape: &Tape,
    nodes: Var,
    edges: &[(usize, usize)],
    mlp: &Mlp,
) -> Result<Var> {
    let us: Vec<usize> = edges.iter().map(|e| e.0).collect();
    let vs: Vec<usize> = edges.iter().map(|e| e.1).collect();
    let hu = tape.gather(nodes, &us)?;
    let hv = tape.gather(nodes, &vs)?;
    let cat = tape.concat(hu, hv)?;
    mlp.apply(tape, cat)
}

fn layer_mlp(p: &BoundParams<'_>, helix: Helix, layer: usize) -> Mlp {
    Mlp {
        w1: p.var(&params::layer_mlp(helix, layer, "w1")),
        b1: p.var(&params::layer_mlp(helix, layer, "b1")),
        w2: p.var(&params::layer_mlp(helix, layer, "w2")),
        b2: p.var(&params::layer_mlp(helix, layer, "b2")),
    }
}

fn edge_tables(p: &BoundParams<'_>, helix: Helix, layer: usize) -> [Var; 2] {
    [
        p.var(&params::edge_table(helix, layer, 0)),
        p.var(&params::edge_table(helix, layer, 1)),
    ]
}

/// Initial node states of both helices: graph nodes embed (atomic number,
/// chirality), line-nodes embed their source edge's (bond type, direction).
pub fn embed_inputs(tape: &Tape, p: &BoundParams<'_>, batch: &Batch) -> Result<(Var, Var)> {
    batch.check_vocab(&p.config().vocab)?;
    let tables = |h| {
        [
            p.var(&params::node_table(h, 0)),
            p.var(&params::node_table(h, 1)),
        ]
    };
    let hg = embed(tape, tables(Helix::Graph), &batch.node_features)?;
    let hl = embed(tape, tables(Helix::Line), &batch.edge_features)?;
    Ok((hg, hl))
}

/// Runs both helices in lockstep and derives every representation used by
/// the losses.
///
/// Layer `c` of the graph helix reads edge attributes from embedded bond
/// categories when `c = 0` (or when fusion is off) and otherwise from the
/// line helix's node states after layer `c - 1`; symmetrically, line-edge
/// attributes come from the graph helix state of the shared atom.
pub fn encode_dual(tape: &Tape, p: &BoundParams<'_>, batch: &Batch) -> Result<BatchEncoding> {
    let cfg = *p.config();
    let (mut hg, mut hl) = embed_inputs(tape, p, batch)?;
    let mut graph_layers = Vec::with_capacity(cfg.depth);
    let mut line_layers = Vec::with_capacity(cfg.depth);
    for layer in 0..cfg.depth {
        let (graph_attrs, line_attrs) = if layer == 0 || !cfg.edge_fusion {
            let table_layer = if cfg.edge_fusion { 0 } else { layer };
            let ga = (!batch.edges.is_empty())
                .then(|| {
                    embed(
                        tape,
                        edge_tables(p, Helix::Graph, table_layer),
                        &batch.edge_features,
                    )
                })
                .transpose()?;
            let la = (!batch.line_edges.is_empty())
                .then(|| {
                    embed(
                        tape,
                        edge_tables(p, Helix::Line, table_layer),
                        &batch.line_edge_features,
                    )
                })
                .transpose()?;
            (ga, la)
        } else {
            let la = (!batch.line_edges.is_empty())
                .then(|| tape.gather(hg, &batch.line_edge_origin))
                .transpose()?;
            (Some(hl), la)
        };
        let next_g = gin_layer(
            tape,
            hg,
            &batch.edges,
            graph_attrs,
            p.var(&params::self_loop(Helix::Graph, layer)),
            &layer_mlp(p, Helix::Graph, layer),
        )?;
        let next_l = gin_layer(
            tape,
            hl,
            &batch.line_edges,
            line_attrs,
            p.var(&params::self_loop(Helix::Line, layer)),
            &layer_mlp(p, Helix::Line, layer),
        )?;
        hg = next_g;
        hl = next_l;
        graph_layers.push(hg);
        line_layers.push(hl);
    }

    let graph_repr = readout(tape, hg, &batch.node_graph, batch.num_graphs)?;
    let line_repr = readout(tape, hl, &batch.edge_graph, batch.num_graphs)?;
    let (w1, w2) = (p.var("head.w1"), p.var("head.w2"));
    let graph_proj = project(tape, graph_repr, w1, w2)?;
    let line_proj = project(tape, line_repr, w1, w2)?;
    let edge_mlp = Mlp {
        w1: p.var("edge_mlp.w1"),
        b1: p.var("edge_mlp.b1"),
        w2: p.var("edge_mlp.w2"),
        b2: p.var("edge_mlp.b2"),
    };
    let edge_pairs = edge_pair_representation(tape, hg, &batch.edges, &edge_mlp)?;
    Ok(BatchEncoding {
        graph_layers,
        line_layers,
        graph_nodes: hg,
        line_nodes: hl,
        graph_repr,
        line_repr,
        graph_proj,
        line_proj,
        edge_pairs,
    })
}

/// Off-tape convenience: graph-view representations `h_G` (pre-projection)
/// for every graph in `batch`.
pub fn graph_representations(params: &DualHelixParams, batch: &Batch) -> Result<Tensor> {
    let tape = Tape::new();
    let bound = params.bind(&tape, false);
    let enc = encode_dual(&tape, &bound, batch)?;
    let out = tape.value(enc.graph_repr).clone();
    Ok(out)
}
