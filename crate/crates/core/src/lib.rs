//! Desk-scale laboratory for improving the pre-training data of small
//! on-device language models.
//!
//! The pipeline mirrors a two-stage production recipe:
//!
//! 1. synthesize "private-like" public data with a prompted completion
//!    backend ([`synth`], [`backend`]) and pre-train a one-layer LSTM
//!    next-word-prediction model on it ([`model`]);
//! 2. fine-tune that model with federated averaging under DP-FTRL tree
//!    aggregation ([`fl`]), account the privacy cost ([`privacy`]), and
//!    optionally refine the synthetic corpus with the privately trained
//!    model's scores ([`refine`]).
//!
//! [`experiment`] chains the stages behind a single configuration file and
//! is what the `proxylm` binary drives.

pub mod backend;
pub mod corpus;
pub mod experiment;
pub mod fl;
pub mod model;
pub mod par;
pub mod privacy;
pub mod refine;
pub mod rng;
pub mod synth;

pub use corpus::{Corpus, Example, Source, TokenizedExample, Vocabulary};
pub use model::{ModelConfig, ModelParameters};
