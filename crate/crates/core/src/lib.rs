//! Fast preference adaptation of query embeddings.
//!
//! A query embedding `x` is nudged toward items a user preferred by gradient
//! descent on the Bradley-Terry negative log-likelihood of their pairwise
//! choices, with item embeddings and the encoders that produced them left
//! untouched. Alongside the math ([`bt`]) the crate provides the PEMB/JSONL
//! file formats ([`dataio`]), the accuracy protocol and learning curves
//! ([`eval`]), a synthetic ground-truth generator ([`simulator`]) and a
//! gradient checker ([`gradcheck`]).
//!
//! Batch work (protocol cells, gradcheck trials) runs on rayon when the
//! `parallel` feature is enabled; see [`Execution`].

pub mod bt;
pub mod dataio;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod exec;
pub mod gradcheck;
pub mod seed;
pub mod simulator;

pub use bt::{
    adapt, adapt_step, batch_gradient, batch_loss, bt_probability, finite_diff_grad, pair_outcome, positive_adapt,
    predict_preferred, rank_candidates, similarity, AdaptConfig, AdaptTrace, BtOutcome, Choice, PreferencePair,
    StepRecord,
};
pub use dataio::{EmbeddingTable, IndexedPair, PreferenceDataset, RowMeta};
pub use embedding::{normalize, Embedding};
pub use error::{Error, ErrorClass, Result};
pub use eval::{pairwise_accuracy, run_protocol, win_rate, EvalReport, ProtocolOptions, ReportFormat, Variant, Vote};
pub use exec::Execution;
pub use simulator::GroundTruth;
