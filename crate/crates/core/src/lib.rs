//! Dropout prediction from MOOC clickstreams.
//!
//! Raw click logs are reduced to labeled week sequences ([`clickstream`]),
//! summarized by the scores of the most discriminative n-gram actions
//! ([`miner`]), optionally refined by a two-layer representation learner
//! ([`replearn`]) and fed to a margin-ranking dropout classifier
//! ([`predictor`]). [`metrics`] holds the evaluation and t-test
//! characterization, [`synth`] a synthetic log generator and [`pipeline`]
//! the file-level stages driven by the CLI.

pub mod clickstream;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod miner;
pub mod pipeline;
pub mod predictor;
pub mod replearn;
pub mod synth;

pub use error::{Error, Result};
