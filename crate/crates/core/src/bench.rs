//! Timing harnesses behind `lemon bench`.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::graph::{random_molecular_graph, star_graph, to_line_graph, MolecularGraph, Vocab};
use crate::pipeline::{transform_corpus, TrainConfig, Trainer};
use crate::Result;

#[derive(Debug, Clone, Serialize)]
pub struct TransformPoint {
    pub graphs: usize,
    pub total_edges: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StarCheck {
    pub degree: usize,
    pub line_edges: usize,
    pub expected: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransformBench {
    pub degree_cap: usize,
    pub points: Vec<TransformPoint>,
    /// Least-squares slope of log time against log |E|.
    pub exponent: f64,
    pub stars: Vec<StarCheck>,
}

#[derive(Debug, Clone, Copy)]
pub struct TransformBenchOptions {
    pub sizes: [usize; 3],
    pub degree_cap: usize,
    pub nodes: (usize, usize),
    pub repeats: usize,
    pub seed: u64,
}

impl Default for TransformBenchOptions {
    fn default() -> Self {
        Self {
            sizes: [10_000, 20_000, 40_000],
            degree_cap: 4,
            nodes: (10, 30),
            repeats: 5,
            seed: 0,
        }
    }
}

pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

fn corpus(n: usize, opts: &TransformBenchOptions) -> Vec<MolecularGraph> {
    let vocab = Vocab::default();
    (0..n as u64)
        .map(|k| {
            random_molecular_graph(
                opts.seed.wrapping_add(k),
                opts.nodes,
                opts.degree_cap,
                &vocab,
            )
        })
        .collect()
}

/// Times single-threaded corpus transformation at each size, keeping the
/// fastest of `repeats` runs. Generation is outside the timed region.
pub fn bench_transform(opts: &TransformBenchOptions) -> Result<TransformBench> {
    let mut points = Vec::new();
    for &n in &opts.sizes {
        let graphs = corpus(n, opts);
        let total_edges = graphs.iter().map(MolecularGraph::num_edges).sum();
        let mut best = Duration::MAX;
        for _ in 0..opts.repeats.max(1) {
            let t = Instant::now();
            let views = transform_corpus(&graphs, 1)?;
            best = best.min(t.elapsed());
            drop(views);
        }
        points.push(TransformPoint {
            graphs: n,
            total_edges,
            seconds: best.as_secs_f64(),
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.total_edges as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds).collect();
    let stars = [8, 16, 32]
        .into_iter()
        .map(|e| {
            let lg = to_line_graph(&star_graph(e))?;
            Ok(StarCheck {
                degree: e,
                line_edges: lg.graph.num_edges(),
                expected: e * (e - 1) / 2,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransformBench {
        degree_cap: opts.degree_cap,
        exponent: loglog_slope(&xs, &ys),
        points,
        stars,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainStepBench {
    pub corpus: usize,
    pub steps: usize,
    pub transform_passes: usize,
    pub transform_seconds: f64,
    pub forward_seconds: f64,
    pub backward_seconds: f64,
    pub optimizer_seconds: f64,
}

impl TrainStepBench {
    pub fn step_seconds(&self) -> f64 {
        (self.forward_seconds + self.backward_seconds + self.optimizer_seconds)
            / self.steps.max(1) as f64
    }
}

/// Runs `steps` optimization steps on a synthetic corpus and splits the
/// time into the one-off transformation and per-step phases.
pub fn bench_train_step(
    corpus_size: usize,
    steps: usize,
    cfg: &TrainConfig,
) -> Result<TrainStepBench> {
    let vocab = cfg.encoder.vocab;
    let graphs: Vec<_> = (0..corpus_size as u64)
        .map(|k| random_molecular_graph(cfg.seed.wrapping_add(k), (5, 25), 4, &vocab))
        .collect();
    let mut trainer = Trainer::new(graphs, *cfg)?;
    let mut out = TrainStepBench {
        corpus: corpus_size,
        steps: 0,
        transform_passes: 0,
        transform_seconds: trainer.transform_time().as_secs_f64(),
        forward_seconds: 0.0,
        backward_seconds: 0.0,
        optimizer_seconds: 0.0,
    };
    let mut epoch = 0;
    'outer: loop {
        for indices in trainer.epoch_batches(epoch) {
            if out.steps == steps {
                break 'outer;
            }
            let (_, t) = trainer.train_step(&indices)?;
            out.forward_seconds += t.forward.as_secs_f64();
            out.backward_seconds += t.backward.as_secs_f64();
            out.optimizer_seconds += t.optimizer.as_secs_f64();
            out.steps += 1;
        }
        epoch += 1;
    }
    out.transform_passes = trainer.transform_passes();
    Ok(out)
}
