use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::transform_corpus;
use crate::batch::Batch;
use crate::checkpoint::Checkpoint;
use crate::encoder::{graph_representations, DualHelixParams, EncoderConfig};
use crate::graph::{LineGraphView, MolecularGraph};
use crate::losses::{LossConfig, LossReport};
use crate::objective::batch_objective;
use crate::tensor::{AdamConfig, AdamState, Tape};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub shuffle: bool,
    pub loss: LossConfig,
    pub encoder: EncoderConfig,
}

impl TrainConfig {
    /// 20 epochs, batch 16, width 32.
    pub fn desk() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            adam: AdamConfig::default(),
            seed: 0,
            shuffle: true,
            loss: LossConfig::default(),
            encoder: EncoderConfig::desk(),
        }
    }

    /// 100 epochs, batch 256, width 300, five layers, τ = 0.1.
    pub fn paper() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            encoder: EncoderConfig::paper(),
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.adam.learning_rate.is_nan() || self.adam.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        self.loss.validate()?;
        self.encoder.validate()
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u64,
    #[serde(flatten)]
    pub report: LossReport,
}

/// Wall-clock split of one optimization step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepTiming {
    pub forward: Duration,
    pub backward: Duration,
    pub optimizer: Duration,
}

/// Owns the static views and all mutable training state.
pub struct Trainer {
    cfg: TrainConfig,
    params: DualHelixParams,
    adam: AdamState,
    step: u64,
    epochs_done: u64,
    graphs: Vec<MolecularGraph>,
    views: Vec<LineGraphView>,
    transform_passes: usize,
    transform_time: Duration,
}

fn transform_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get().min(8))
}

impl Trainer {
    /// Initializes parameters from `cfg.seed` and transforms the corpus once.
    pub fn new(graphs: Vec<MolecularGraph>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let params = DualHelixParams::init(cfg.encoder, cfg.seed)?;
        let adam = AdamState::new(cfg.adam, params.tensors());
        Self::assemble(graphs, cfg, params, adam, 0, 0)
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`]. The
    /// encoder configuration and seed must match.
    pub fn resume(graphs: Vec<MolecularGraph>, cfg: TrainConfig, ckpt: Checkpoint) -> Result<Self> {
        cfg.validate()?;
        if *ckpt.params.config() != cfg.encoder {
            return Err(Error::ConfigMismatch(
                "checkpoint encoder configuration differs from the requested one".into(),
            ));
        }
        if ckpt.params.seed() != cfg.seed {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint seed {} differs from configured seed {}",
                ckpt.params.seed(),
                cfg.seed
            )));
        }
        let mut adam = ckpt
            .adam
            .unwrap_or_else(|| AdamState::new(cfg.adam, ckpt.params.tensors()));
        adam.config = cfg.adam;
        Self::assemble(graphs, cfg, ckpt.params, adam, ckpt.step, ckpt.epochs_done)
    }

    fn assemble(
        graphs: Vec<MolecularGraph>,
        cfg: TrainConfig,
        params: DualHelixParams,
        adam: AdamState,
        step: u64,
        epochs_done: u64,
    ) -> Result<Self> {
        if graphs.len() < cfg.batch_size {
            return Err(Error::BatchTooSmall {
                graphs: graphs.len(),
                needed: cfg.batch_size,
            });
        }
        for g in &graphs {
            g.check_vocab(&cfg.encoder.vocab)
                .map_err(|(value, size)| Error::VocabOutOfRange {
                    field: "corpus feature",
                    value,
                    size,
                })?;
        }
        let started = Instant::now();
        let views = transform_corpus(&graphs, transform_threads())?;
        let transform_time = started.elapsed();
        log::info!(
            "transformed {} graphs into line graphs in {:?}",
            graphs.len(),
            transform_time
        );
        Ok(Self {
            cfg,
            params,
            adam,
            step,
            epochs_done,
            graphs,
            views,
            transform_passes: 1,
            transform_time,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn params(&self) -> &DualHelixParams {
        &self.params
    }

    pub fn into_params(self) -> DualHelixParams {
        self.params
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn epochs_done(&self) -> u64 {
        self.epochs_done
    }

    /// How many times the corpus has been turned into line graphs. Stays at 1.
    pub fn transform_passes(&self) -> usize {
        self.transform_passes
    }

    pub fn transform_time(&self) -> Duration {
        self.transform_time
    }

    pub fn corpus_len(&self) -> usize {
        self.graphs.len()
    }

    /// Mini-batches of epoch `epoch`: a permutation drawn from ChaCha stream
    /// `epoch + 1` of `seed` (identity when shuffling is off), with the last
    /// incomplete batch dropped.
    pub fn epoch_batches(&self, epoch: u64) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.graphs.len()).collect();
        if self.cfg.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
            rng.set_stream(epoch + 1);
            order.shuffle(&mut rng);
        }
        order
            .chunks_exact(self.cfg.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }

    pub fn make_batch(&self, indices: &[usize]) -> Result<Batch> {
        let pairs: Vec<_> = indices
            .iter()
            .map(|&i| (&self.graphs[i], &self.views[i]))
            .collect();
        Batch::new(&pairs)
    }

    /// Loss of a batch at the current parameters, without updating them.
    pub fn evaluate(&self, indices: &[usize]) -> Result<LossReport> {
        let batch = self.make_batch(indices)?;
        let tape = Tape::new();
        let bound = self.params.bind(&tape, false);
        Ok(batch_objective(&tape, &bound, &batch, &self.cfg.loss)?.report)
    }

    /// Forward, backward and one Adam update on the given corpus indices.
    pub fn train_step(&mut self, indices: &[usize]) -> Result<(LossReport, StepTiming)> {
        let batch = self.make_batch(indices)?;
        let step = self.step;
        let nonfinite = |e: Error| match e {
            Error::NonFinite { .. } => Error::NonFiniteAtStep { step },
            other => other,
        };

        let t0 = Instant::now();
        let tape = Tape::new();
        let bound = self.params.bind(&tape, true);
        let obj = batch_objective(&tape, &bound, &batch, &self.cfg.loss).map_err(nonfinite)?;
        if !obj.report.l_total.is_finite() {
            return Err(Error::NonFiniteAtStep { step });
        }
        let t1 = Instant::now();
        let grads = tape.backward(obj.total)?;
        let grads = bound
            .vars()
            .iter()
            .map(|&v| grads.wrt(v))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if !grads.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFiniteAtStep { step });
        }
        drop(bound);
        drop(tape);
        let t2 = Instant::now();
        self.adam.update(self.params.tensors_mut(), &grads)?;
        let t3 = Instant::now();
        self.step += 1;
        Ok((
            obj.report,
            StepTiming {
                forward: t1 - t0,
                backward: t2 - t1,
                optimizer: t3 - t2,
            },
        ))
    }

    /// Runs one epoch, handing every step's record to `sink`.
    pub fn run_epoch(
        &mut self,
        sink: &mut dyn FnMut(&StepRecord) -> Result<()>,
    ) -> Result<Vec<StepRecord>> {
        let epoch = self.epochs_done;
        let mut records = Vec::new();
        for indices in self.epoch_batches(epoch) {
            let step = self.step;
            let (report, _) = self.train_step(&indices)?;
            let rec = StepRecord {
                step,
                epoch,
                report,
            };
            sink(&rec)?;
            records.push(rec);
        }
        self.epochs_done += 1;
        Ok(records)
    }

    /// Trains until `cfg.epochs` epochs are complete in total.
    pub fn run(
        &mut self,
        sink: &mut dyn FnMut(&StepRecord) -> Result<()>,
    ) -> Result<Vec<StepRecord>> {
        let mut all = Vec::new();
        while self.epochs_done < self.cfg.epochs as u64 {
            all.extend(self.run_epoch(sink)?);
        }
        Ok(all)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            step: self.step,
            epochs_done: self.epochs_done,
            adam: Some(self.adam.clone()),
        }
    }
}

pub struct TrainOutcome {
    pub params: DualHelixParams,
    pub checkpoint: Checkpoint,
    pub metrics: Vec<StepRecord>,
    pub transform_passes: usize,
}

/// Full pre-training run from scratch.
pub fn pretrain(graphs: &[MolecularGraph], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(graphs.to_vec(), *cfg)?;
    let metrics = trainer.run(&mut |_| Ok(()))?;
    let checkpoint = trainer.checkpoint();
    let transform_passes = trainer.transform_passes();
    Ok(TrainOutcome {
        params: trainer.into_params(),
        checkpoint,
        metrics,
        transform_passes,
    })
}

/// Mean of `l_total` over each epoch's steps, in epoch order.
pub fn epoch_means(metrics: &[StepRecord]) -> Vec<(u64, f64)> {
    let mut out: Vec<(u64, f64, usize)> = Vec::new();
    for r in metrics {
        match out.last_mut() {
            Some((e, sum, n)) if *e == r.epoch => {
                *sum += r.report.l_total;
                *n += 1;
            }
            _ => out.push((r.epoch, r.report.l_total, 1)),
        }
    }
    out.into_iter().map(|(e, s, n)| (e, s / n as f64)).collect()
}

/// Trailing moving average of `l_total` with the given window, one value
/// per step.
pub fn moving_average(metrics: &[StepRecord], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..metrics.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let slice = &metrics[lo..=i];
            slice.iter().map(|r| r.report.l_total).sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// Graph-view representations `h_G` (no projection head) for every graph,
/// in corpus order. Graphs are encoded in chunks of `chunk` as disjoint
/// unions; results do not depend on the chunking.
pub fn embed_corpus(
    graphs: &[MolecularGraph],
    params: &DualHelixParams,
    chunk: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(graphs.len());
    for part in graphs.chunks(chunk.max(1)) {
        let batch = Batch::from_graphs(part)?;
        out.extend(graph_representations(params, &batch)?.to_rows());
    }
    Ok(out)
}
