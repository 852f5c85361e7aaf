//! The full pre-training objective for one mini-batch.

use crate::batch::Batch;
use crate::encoder::{encode_dual, BatchEncoding, BoundParams};
use crate::losses::{self, LossConfig, LossReport};
use crate::tensor::{Tape, Var};
use crate::Result;

pub struct Objective {
    /// `1×1` total loss on the tape.
    pub total: Var,
    pub report: LossReport,
    pub encoding: BatchEncoding,
}

/// Encodes `batch` and evaluates `L_G + α·L_inter + β·L_intra`.
///
/// A component whose weight is exactly zero is not evaluated and reports 0.
pub fn batch_objective(
    tape: &Tape,
    params: &BoundParams<'_>,
    batch: &Batch,
    cfg: &LossConfig,
) -> Result<Objective> {
    cfg.validate()?;
    let enc = encode_dual(tape, params, batch)?;

    let need_local = cfg.alpha != 0.0 || cfg.beta != 0.0;
    let edge_sim = if need_local {
        Some(tape.cosine_sim(enc.edge_pairs, enc.line_nodes)?)
    } else {
        None
    };
    let intra = match edge_sim {
        Some(sim) if cfg.beta != 0.0 => {
            losses::intra_local_from_sim(tape, sim, &batch.edge_graph, cfg)?
        }
        _ => losses::AnchorSum {
            sum: None,
            count: 0,
        },
    };
    let inter = match edge_sim {
        Some(sim) if cfg.alpha != 0.0 => {
            losses::inter_local_from_sim(tape, sim, &batch.edge_graph, cfg)?
        }
        _ => losses::AnchorSum {
            sum: None,
            count: 0,
        },
    };
    let graph = losses::nt_xent(tape, enc.graph_proj, enc.line_proj, cfg)?;

    let graph_mean = graph.mean(tape)?.expect("nt_xent always has anchors");
    let intra_mean = intra.mean(tape)?;
    let inter_mean = inter.mean(tape)?;
    let value = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());

    let mut total = graph_mean;
    if let Some(v) = inter_mean {
        let w = tape.scale(v, cfg.alpha)?;
        total = tape.add(total, w)?;
    }
    if let Some(v) = intra_mean {
        let w = tape.scale(v, cfg.beta)?;
        total = tape.add(total, w)?;
    }
    let report = losses::combine(
        value(Some(graph_mean)),
        value(intra_mean),
        value(inter_mean),
        [graph.count, intra.count, inter.count],
        cfg,
    )?;
    Ok(Objective {
        total,
        report,
        encoding: enc,
    })
}
