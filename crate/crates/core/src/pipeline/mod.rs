//! Corpus I/O, the one-time line-graph transformation, the pre-training
//! loop and embedding export.

mod corpus;
mod train;

pub use corpus::{
    load_corpus, read_corpus, save_corpus, transform_corpus, transform_stats, write_corpus,
    write_line_graphs, Corpus, LineGraphRecord, TransformStats,
};
pub use train::{
    embed_corpus, epoch_means, moving_average, pretrain, StepRecord, StepTiming, TrainConfig,
    TrainOutcome, Trainer,
};
