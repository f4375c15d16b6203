//! Preprocessing and evaluation toolkit for Vietnamese masked language model
//! pre-training: corpus cleaning, word segmentation, BPE, block packing,
//! dynamic masking, fine-tuning helpers, dependency decoding and metrics.

pub mod bpe;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod finetune;
pub mod metrics;
pub mod parser;
pub mod pretrain;
pub mod segmenter;

pub use error::{Error, Result};
