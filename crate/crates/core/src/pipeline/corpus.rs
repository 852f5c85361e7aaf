use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::graph::{line_edge_count, to_line_graph, GraphRecord, LineGraphView, MolecularGraph};
use crate::{Error, Result};

/// Result of reading a JSONL corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub graphs: Vec<MolecularGraph>,
    /// 1-based line numbers of graphs dropped for having no edges.
    pub rejected_empty: Vec<usize>,
}

/// Reads one graph per non-blank line. Malformed JSON and invariant
/// violations abort with the offending line number; edgeless graphs are
/// skipped and listed in [`Corpus::rejected_empty`].
pub fn read_corpus(reader: impl BufRead) -> Result<Corpus> {
    let mut graphs = Vec::new();
    let mut rejected_empty = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GraphRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let g = MolecularGraph::try_from(rec).map_err(|source| Error::InvariantViolation {
            line: lineno,
            source,
        })?;
        if g.num_edges() == 0 {
            log::warn!("line {lineno}: graph without edges skipped");
            rejected_empty.push(lineno);
            continue;
        }
        graphs.push(g);
    }
    Ok(Corpus {
        graphs,
        rejected_empty,
    })
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    read_corpus(BufReader::new(File::open(path)?))
}

pub fn write_corpus(mut writer: impl Write, graphs: &[MolecularGraph]) -> Result<()> {
    for g in graphs {
        serde_json::to_writer(&mut writer, &GraphRecord::from(g)).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_corpus(path: impl AsRef<Path>, graphs: &[MolecularGraph]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_corpus(&mut w, graphs)?;
    w.flush()?;
    Ok(())
}

/// Line graph of every corpus graph, in corpus order. With `threads > 1`
/// the work fans out over a dedicated pool; output order is unchanged.
pub fn transform_corpus(graphs: &[MolecularGraph], threads: usize) -> Result<Vec<LineGraphView>> {
    if threads <= 1 {
        return Ok(graphs
            .iter()
            .map(to_line_graph)
            .collect::<std::result::Result<_, _>>()?);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        graphs
            .par_iter()
            .map(to_line_graph)
            .collect::<std::result::Result<Vec<_>, _>>()
    })?)
}

/// JSONL record of a transformed graph with its provenance maps.
#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct LineGraphRecord {
    pub nodes: Vec<[usize; 2]>,
    pub edges: Vec<[usize; 4]>,
    pub node_origin: Vec<usize>,
    pub edge_origin: Vec<usize>,
}

impl From<&LineGraphView> for LineGraphRecord {
    fn from(v: &LineGraphView) -> Self {
        let base = GraphRecord::from(&v.graph);
        Self {
            nodes: base.nodes,
            edges: base.edges,
            node_origin: v.node_origin.clone(),
            edge_origin: v.edge_origin.clone(),
        }
    }
}

pub fn write_line_graphs(mut writer: impl Write, views: &[LineGraphView]) -> Result<()> {
    for v in views {
        serde_json::to_writer(&mut writer, &LineGraphRecord::from(v))
            .map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Corpus-level transformation statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformStats {
    pub graphs: usize,
    pub total_edges: usize,
    pub total_line_edges: usize,
    /// `total_line_edges / total_edges`, or 0 for an empty corpus.
    pub mean_blowup: f64,
}

pub fn transform_stats(graphs: &[MolecularGraph], views: &[LineGraphView]) -> TransformStats {
    let total_edges: usize = graphs.iter().map(MolecularGraph::num_edges).sum();
    let total_line_edges: usize = views.iter().map(|v| v.graph.num_edges()).sum();
    debug_assert_eq!(
        total_line_edges,
        graphs.iter().map(line_edge_count).sum::<usize>()
    );
    TransformStats {
        graphs: graphs.len(),
        total_edges,
        total_line_edges,
        mean_blowup: if total_edges == 0 {
            0.0
        } else {
            total_line_edges as f64 / total_edges as f64
        },
    }
}
