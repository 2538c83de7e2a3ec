use super::{ExperimentError, Result};
use crate::backend::{RemoteConfig, SamplingParams, Style};
use crate::fl::{EvalConfig, RoundConfig};
use crate::model::{ModelConfig, PretrainConfig};
use crate::refine::{MinScore, RefineThresholds};
use crate::rng::sha256_hex;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    /// Register of the mock LLM used for synthesis.
    pub style: Style,
    /// Fraction of web-register content slots filled with chat words.
    pub vocab_skew: f64,
    pub top_k: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    pub remote: Option<RemoteConfig>,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: BackendKind::Mock,
            style: Style::ChatLike,
            vocab_skew: 0.5,
            top_k: 40,
            temperature: 1.0,
            max_tokens: 256,
            remote: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSection {
    /// Documents in the simulated public web corpus.
    pub raw_documents: u64,
    /// Variable assignments sampled from the grid for direct synthesis.
    pub assignments: usize,
    pub receivers_per_assignment: usize,
    pub topics_per_receiver: usize,
    pub transform_fraction: f64,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        SynthesisSection {
            raw_documents: 3000,
            assignments: 400,
            receivers_per_assignment: 2,
            topics_per_receiver: 2,
            transform_fraction: 0.2,
        }
    }
}

/// The simulated private population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivateSection {
    pub conversations: u64,
    pub clients: usize,
    pub holdout_clients: usize,
    /// Probability a conversation lands on its topic's client.
    pub partition_skew: f64,
}

impl Default for PrivateSection {
    fn default() -> Self {
        PrivateSection {
            conversations: 3000,
            clients: 500,
            holdout_clients: 100,
            partition_skew: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSection {
    pub size: usize,
}

impl Default for VocabSection {
    fn default() -> Self {
        VocabSection { size: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_seq_len: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            embed_dim: 16,
            hidden_dim: 32,
            max_seq_len: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub eps: f64,
}

impl Default for PretrainSection {
    fn default() -> Self {
        PretrainSection {
            steps: 600,
            batch_size: 32,
            lr: 1e-2,
            eps: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlSection {
    pub clients_per_round: usize,
    pub client_lr: f64,
    pub server_lr: f64,
    pub momentum: f64,
    pub rounds: u64,
    pub noise_multiplier: f64,
    pub clip_norm: f64,
    pub min_separation: u64,
    pub local_epochs: u64,
    pub local_batch_size: usize,
    /// Federated evaluation cadence in rounds (0 = off).
    pub eval_every: u64,
}

impl Default for FlSection {
    fn default() -> Self {
        FlSection {
            clients_per_round: 20,
            client_lr: 0.03,
            server_lr: 1.0,
            momentum: 0.9,
            rounds: 200,
            noise_multiplier: 0.1,
            clip_norm: 1.0,
            min_separation: 10,
            local_epochs: 1,
            local_batch_size: 8,
            eval_every: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub runs: u64,
    pub rounds: u64,
    pub clients_per_round: usize,
    pub min_separation: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            runs: 3,
            rounds: 4,
            clients_per_round: 20,
            min_separation: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacySection {
    /// Declared participation bound `k`; `None` uses `⌈T/s⌉`.
    pub max_participations: Option<u64>,
    pub target_delta: f64,
    /// Account for this ρ directly instead of deriving it from the run.
    pub rho: Option<f64>,
}

impl Default for PrivacySection {
    fn default() -> Self {
        PrivacySection {
            max_participations: None,
            target_delta: crate::privacy::DEFAULT_DELTA,
            rho: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineSection {
    pub max_oov: f64,
    pub min_fine_score: MinScore,
    pub require_fine_ge_pre: bool,
    /// Extra fine-score bounds to report retention for.
    pub sweep: Vec<f64>,
}

impl Default for RefineSection {
    fn default() -> Self {
        let th = RefineThresholds::default();
        RefineSection {
            max_oov: th.max_oov,
            min_fine_score: th.min_fine_score,
            require_fine_ge_pre: th.require_fine_ge_pre,
            sweep: Vec::new(),
        }
    }
}

/// Grids for the hyperparameter sweep helper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub lr: Vec<f64>,
    pub eps: Vec<f64>,
    pub refine_thresholds: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            lr: vec![1e-4, 1e-3, 1e-2],
            eps: vec![1e-7, 1e-8, 1e-9],
            refine_thresholds: vec![6.0, 5.0, 4.0],
        }
    }
}

/// Everything a run depends on. Thread count is deliberately absent:
/// results never depend on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub backend: BackendSection,
    pub synthesis: SynthesisSection,
    pub private: PrivateSection,
    pub vocab: VocabSection,
    pub model: ModelSection,
    pub pretrain: PretrainSection,
    pub fl: FlSection,
    pub eval: EvalSection,
    pub privacy: PrivacySection,
    pub refine: RefineSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            backend: BackendSection::default(),
            synthesis: SynthesisSection::default(),
            private: PrivateSection::default(),
            vocab: VocabSection::default(),
            model: ModelSection::default(),
            pretrain: PretrainSection::default(),
            fl: FlSection::default(),
            eval: EvalSection::default(),
            privacy: PrivacySection::default(),
            refine: RefineSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Input {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    /// Canonical TOML text; the manifest hash is taken over this.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if !(0.0..=1.0).contains(&self.backend.vocab_skew) {
            return bad(format!("backend.vocab_skew {} outside [0, 1]", self.backend.vocab_skew));
        }
        self.sampling().validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        if self.backend.kind == BackendKind::Remote && self.backend.remote.is_none() {
            return bad("backend.kind = \"remote\" needs a [backend.remote] section".into());
        }
        if !(0.0..=1.0).contains(&self.synthesis.transform_fraction) {
            return bad("synthesis.transform_fraction outside [0, 1]".into());
        }
        if self.private.holdout_clients >= self.private.clients {
            return bad("private.holdout_clients must be smaller than private.clients".into());
        }
        if !(0.0..=1.0).contains(&self.private.partition_skew) {
            return bad("private.partition_skew outside [0, 1]".into());
        }
        if self.vocab.size < 2 {
            return bad("vocab.size must be at least 2".into());
        }
        self.model_config(self.vocab.size)
            .validate()
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        if self.pretrain.batch_size == 0 {
            return bad("pretrain.batch_size must be at least 1".into());
        }
        self.round_config().validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        if self.eval.runs == 0 || self.eval.rounds == 0 || self.eval.clients_per_round == 0 {
            return bad("eval.runs, eval.rounds and eval.clients_per_round must be positive".into());
        }
        let d = self.privacy.target_delta;
        if !(d > 0.0 && d < 1.0) {
            return bad(format!("privacy.target_delta {d} outside (0, 1)"));
        }
        if let Some(rho) = self.privacy.rho {
            if !(rho >= 0.0) {
                return bad("privacy.rho must be non-negative".into());
            }
        }
        self.thresholds().validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn sampling(&self) -> SamplingParams {
        SamplingParams {
            top_k: self.backend.top_k,
            temperature: self.backend.temperature,
            max_tokens: self.backend.max_tokens,
            seed: self.seed,
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.model.embed_dim,
            hidden_dim: self.model.hidden_dim,
            max_seq_len: self.model.max_seq_len,
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            steps: self.pretrain.steps,
            batch_size: self.pretrain.batch_size,
            lr: self.pretrain.lr,
            eps: self.pretrain.eps,
            seed: self.seed,
        }
    }

    pub fn round_config(&self) -> RoundConfig {
        let f = &self.fl;
        RoundConfig {
            clients_per_round: f.clients_per_round,
            client_lr: f.client_lr,
            server_lr: f.server_lr,
            momentum: f.momentum,
            rounds: f.rounds,
            noise_multiplier: f.noise_multiplier,
            clip_norm: f.clip_norm,
            min_separation: f.min_separation,
            local_epochs: f.local_epochs,
            local_batch_size: f.local_batch_size,
            seed: self.seed,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            runs: self.eval.runs,
            rounds: self.eval.rounds,
            clients_per_round: self.eval.clients_per_round,
            min_separation: self.eval.min_separation,
            seed: self.seed,
        }
    }

    pub fn thresholds(&self) -> RefineThresholds {
        RefineThresholds {
            max_oov: self.refine.max_oov,
            min_fine_score: self.refine.min_fine_score,
            require_fine_ge_pre: self.refine.require_fine_ge_pre,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.sha256(), cfg.sha256());
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 7\n[fl]\nrounds = 3\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.fl.rounds, 3);
        assert_eq!(cfg.fl.clients_per_round, FlSection::default().clients_per_round);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("sed = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[fl]\nround = 3\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_toml("[privacy]\ntarget_delta = 1.5\n").is_err());
        assert!(ExperimentConfig::from_toml("[fl]\nclip_norm = 0.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[backend]\nkind = \"remote\"\n").is_err());
        assert!(ExperimentConfig::from_toml("[refine]\nmin_fine_score = { percentile = 140.0 }\n").is_err());
    }

    #[test]
    fn threshold_forms() {
        let cfg = ExperimentConfig::from_toml("[refine]\nmin_fine_score = { fixed = -3.5 }\nsweep = [6, 5, 4]\n").unwrap();
        assert_eq!(cfg.refine.min_fine_score, MinScore::Fixed(-3.5));
        assert_eq!(cfg.refine.sweep, vec![6.0, 5.0, 4.0]);
    }
}
