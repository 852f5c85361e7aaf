//! Line-graph contrastive pre-training for attributed molecular graphs.
//!
//! A molecule `G` and its line graph `L(G)` serve as two static contrastive
//! views. A dual-helix encoder runs message passing over both in lockstep,
//! feeding each view's node states to the other as edge attributes, and is
//! trained with a graph-level NT-Xent loss plus two edge-level losses
//! (intra-graph and cross-graph).
//!
//! Everything runs on a small reverse-mode tape in [`tensor`] so every
//! gradient can be checked against finite differences ([`gradcheck`]).

pub mod batch;
pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod encoder;
mod error;
pub mod gradcheck;
pub mod graph;
pub mod losses;
pub mod objective;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
