//! Graph-level NT-Xent, intra-graph and cross-graph edge contrast, and their
//! weighted combination.
//!
//! All three share one shape: a square similarity matrix whose diagonal holds
//! the positive pairs, a mask choosing which off-diagonal entries act as
//! negatives, and a set of anchor rows. Each anchor contributes
//! `log Σ_neg exp(s/τ) − s_pos/τ`. By default the positive is *not* part of
//! the denominator, so a term can be negative.

use serde::{Deserialize, Serialize};

use crate::tensor::{Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// Negatives only (`j ≠ i`).
    Strict,
    /// Negatives plus the positive pair, as in the usual NT-Xent.
    Inclusive,
}

/// What to do with graphs that have a single edge in the intra-graph loss
/// (no negative exists there).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingleEdgePolicy {
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub tau: f64,
    /// Weight of the cross-graph (inter-local) loss.
    pub alpha: f64,
    /// Weight of the intra-graph (intra-local) loss.
    pub beta: f64,
    pub denominator: Denominator,
    pub single_edge_policy: SingleEdgePolicy,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            alpha: 1.0,
            beta: 1.0,
            denominator: Denominator::Strict,
            single_edge_policy: SingleEdgePolicy::Skip,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be non-negative, got {w}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_graph: f64,
    pub l_intra: f64,
    pub l_inter: f64,
    pub l_total: f64,
    pub graph_anchors: usize,
    pub intra_anchors: usize,
    pub inter_anchors: usize,
}

/// A loss as the sum of its anchor terms plus how many anchors contributed.
#[derive(Debug, Clone, Copy)]
pub struct AnchorSum {
    pub sum: Option<Var>,
    pub count: usize,
}

impl AnchorSum {
    const EMPTY: AnchorSum = AnchorSum {
        sum: None,
        count: 0,
    };

    fn merge(self, other: AnchorSum, tape: &Tape) -> Result<AnchorSum> {
        let sum = match (self.sum, other.sum) {
            (Some(a), Some(b)) => Some(tape.add(a, b)?),
            (a, b) => a.or(b),
        };
        Ok(AnchorSum {
            sum,
            count: self.count + other.count,
        })
    }

    /// Mean over anchors as a `1×1` var, or `None` when nothing contributed.
    pub fn mean(self, tape: &Tape) -> Result<Option<Var>> {
        match self.sum {
            Some(s) if self.count > 0 => Ok(Some(tape.scale(s, 1.0 / self.count as f64)?)),
            _ => Ok(None),
        }
    }
}

/// Sum over `anchors` of `log Σ_{j: negative(i,j)} exp(S_ij/τ) − S_ii/τ`.
///
/// Logits are shifted by their (constant) row maximum before
/// exponentiation; the shift cancels analytically.
fn contrast(
    tape: &Tape,
    sim: Var,
    tau: f64,
    denominator: Denominator,
    anchors: &[usize],
    negative: impl Fn(usize, usize) -> bool,
) -> Result<AnchorSum> {
    if anchors.is_empty() {
        return Ok(AnchorSum::EMPTY);
    }
    let (n, m, shift) = {
        let s = tape.value(sim);
        if !s.is_finite() {
            return Err(Error::NonFinite { what: "similarity" });
        }
        let (n, m) = (s.rows(), s.cols());
        let mut shift = Vec::with_capacity(n * m);
        for i in 0..n {
            let max = s.row(i).iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) / tau;
            shift.extend(std::iter::repeat_n(-max, m));
        }
        (n, m, shift)
    };
    let mut neg_mask = vec![0.0; n * m];
    let mut pos_mask = vec![0.0; n * m];
    for i in 0..n {
        pos_mask[i * m + i] = 1.0;
        for j in 0..m {
            let include = negative(i, j) || (denominator == Denominator::Inclusive && i == j);
            if include {
                neg_mask[i * m + j] = 1.0;
            }
        }
    }
    let logits = tape.scale(sim, 1.0 / tau)?;
    let shift = tape.constant(Tensor::matrix(n, m, shift)?);
    let shifted = tape.add(logits, shift)?;
    let e = tape.exp(shifted)?;
    let neg_mask = tape.constant(Tensor::matrix(n, m, neg_mask)?);
    let masked = tape.mul(e, neg_mask)?;
    let denom = tape.row_sum(masked)?;
    let log_denom = tape.log(denom)?;
    let pos_mask = tape.constant(Tensor::matrix(n, m, pos_mask)?);
    let pos = tape.mul(shifted, pos_mask)?;
    let pos = tape.row_sum(pos)?;
    let terms = tape.sub(log_denom, pos)?;
    let picked = tape.gather(terms, anchors)?;
    let sum = tape.sum_all(picked)?;
    if !tape.value(sum).is_finite() {
        return Err(Error::NonFinite {
            what: "contrastive term",
        });
    }
    Ok(AnchorSum {
        sum: Some(sum),
        count: anchors.len(),
    })
}

fn square(tape: &Tape, a: Var, b: Var) -> Result<usize> {
    let (ra, rb) = (tape.value(a).rows(), tape.value(b).rows());
    if ra != rb {
        return Err(crate::tensor::TensorError::ShapeMismatch {
            op: "contrastive views",
            left: tape.value(a).shape().to_vec(),
            right: tape.value(b).shape().to_vec(),
        }
        .into());
    }
    Ok(ra)
}

/// Graph-level NT-Xent over `N` paired views, both directions, averaged over
/// all `2N` anchor terms.
pub fn nt_xent(tape: &Tape, z1: Var, z2: Var, cfg: &LossConfig) -> Result<AnchorSum> {
    let n = square(tape, z1, z2)?;
    if n < 2 {
        return Err(Error::BatchTooSmall {
            graphs: n,
            needed: 2,
        });
    }
    let anchors: Vec<usize> = (0..n).collect();
    let sim = tape.cosine_sim(z1, z2)?;
    let forward = contrast(tape, sim, cfg.tau, cfg.denominator, &anchors, |i, j| i != j)?;
    let sim_t = tape.transpose(sim)?;
    let backward = contrast(tape, sim_t, cfg.tau, cfg.denominator, &anchors, |i, j| {
        i != j
    })?;
    forward.merge(backward, tape)
}

/// Intra-graph edge contrast from a precomputed `ΣE×ΣE` similarity between
/// edge-pair representations (rows) and line-node embeddings (columns).
/// Only edge anchors, only negatives from the same graph; graphs with a
/// single edge contribute nothing.
pub fn intra_local_from_sim(
    tape: &Tape,
    sim: Var,
    edge_graph: &[usize],
    cfg: &LossConfig,
) -> Result<AnchorSum> {
    let mut per_graph = std::collections::HashMap::<usize, usize>::new();
    for &g in edge_graph {
        *per_graph.entry(g).or_default() += 1;
    }
    let anchors: Vec<usize> = (0..edge_graph.len())
        .filter(|&i| per_graph[&edge_graph[i]] >= 2)
        .collect();
    contrast(tape, sim, cfg.tau, cfg.denominator, &anchors, |i, j| {
        i != j && edge_graph[i] == edge_graph[j]
    })
}

/// Cross-graph edge contrast: each edge's positive is its own line-node,
/// negatives are every line-node of every other graph in the batch; the same
/// is done with line-node anchors against other graphs' edge representations.
pub fn inter_local_from_sim(
    tape: &Tape,
    sim: Var,
    edge_graph: &[usize],
    cfg: &LossConfig,
) -> Result<AnchorSum> {
    let first = edge_graph.first().copied();
    if edge_graph.iter().all(|&g| Some(g) == first) {
        let graphs = usize::from(first.is_some());
        return Err(Error::BatchTooSmall { graphs, needed: 2 });
    }
    let anchors: Vec<usize> = (0..edge_graph.len()).collect();
    let other = |i: usize, j: usize| edge_graph[i] != edge_graph[j];
    let forward = contrast(tape, sim, cfg.tau, cfg.denominator, &anchors, other)?;
    let sim_t = tape.transpose(sim)?;
    let backward = contrast(tape, sim_t, cfg.tau, cfg.denominator, &anchors, other)?;
    forward.merge(backward, tape)
}

pub fn intra_local(
    tape: &Tape,
    edge_pairs: Var,
    line_nodes: Var,
    edge_graph: &[usize],
    cfg: &LossConfig,
) -> Result<AnchorSum> {
    square(tape, edge_pairs, line_nodes)?;
    let sim = tape.cosine_sim(edge_pairs, line_nodes)?;
    intra_local_from_sim(tape, sim, edge_graph, cfg)
}

pub fn inter_local(
    tape: &Tape,
    edge_pairs: Var,
    line_nodes: Var,
    edge_graph: &[usize],
    cfg: &LossConfig,
) -> Result<AnchorSum> {
    square(tape, edge_pairs, line_nodes)?;
    let sim = tape.cosine_sim(edge_pairs, line_nodes)?;
    inter_local_from_sim(tape, sim, edge_graph, cfg)
}

/// `l_total = l_graph + α·l_inter + β·l_intra`.
pub fn combine(
    l_graph: f64,
    l_intra: f64,
    l_inter: f64,
    counts: [usize; 3],
    cfg: &LossConfig,
) -> Result<LossReport> {
    let l_total = l_graph + cfg.alpha * l_inter + cfg.beta * l_intra;
    if ![l_graph, l_intra, l_inter, l_total]
        .iter()
        .all(|x| x.is_finite())
    {
        return Err(Error::NonFinite {
            what: "loss combination",
        });
    }
    Ok(LossReport {
        l_graph,
        l_intra,
        l_inter,
        l_total,
        graph_anchors: counts[0],
        intra_anchors: counts[1],
        inter_anchors: counts[2],
    })
}
