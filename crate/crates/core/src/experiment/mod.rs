//! Configuration-driven orchestration: typed config, per-stage functions,
//! run manifests, the end-to-end comparison and the sweep helper.

mod config;
mod end_to_end;
mod manifest;
mod stages;
mod sweep;

pub use config::{
    BackendKind, BackendSection, EvalSection, ExperimentConfig, FlSection, ModelSection, PretrainSection,
    PrivacySection, PrivateSection, RefineSection, SweepSection, SynthesisSection, VocabSection,
};
pub use end_to_end::{curves_csv, run_end_to_end, CurveRow, EndToEnd, RefineComparison};
pub use manifest::{file_sha256, Manifest, MANIFEST_VERSION};
pub use stages::*;
pub use sweep::{pretrain_grid, sweep_pretrain, SweepPoint};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("input {path}: {message}")]
    Input { path: String, message: String },
    #[error("output {path}: {message}")]
    Output { path: String, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Backend(#[from] crate::backend::BackendError),
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Fl(#[from] crate::fl::FlError),
    #[error(transparent)]
    Privacy(#[from] crate::privacy::PrivacyError),
    #[error(transparent)]
    Refine(#[from] crate::refine::RefineError),
}

impl ExperimentError {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentError::Config(_) => "config",
            ExperimentError::Input { .. } => "missing_input",
            ExperimentError::Output { .. } => "output",
            ExperimentError::Manifest(_) => "manifest",
            ExperimentError::Corpus(_) => "corpus",
            ExperimentError::Backend(_) => "backend",
            ExperimentError::Synth(crate::synth::SynthError::Backend(_)) => "backend",
            ExperimentError::Synth(_) => "synthesis",
            ExperimentError::Model(_) => "model",
            ExperimentError::Fl(_) => "federated",
            ExperimentError::Privacy(_) => "privacy",
            ExperimentError::Refine(_) => "refine",
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;
