use std::path::Path;

use cgmrag_numerics::checkpoint::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::data::DEFAULT_MAX_GAP;
use crate::error::{CoreError, Result};
use crate::model::{ModelConfig, PatchConfig, TranslatorMode};
use crate::retrieval::AdapterConfig;

/// Encoder architecture. Loss weights and ablation flags live in [`TrainConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub patch_len: usize,
    pub patch_stride: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub text_dim: usize,
    pub translator: TranslatorMode,
    pub translator_hidden: usize,
}

impl From<&ModelConfig> for ArchConfig {
    fn from(m: &ModelConfig) -> Self {
        Self {
            patch_len: m.patch.patch_len,
            patch_stride: m.patch.stride,
            d_model: m.d_model,
            n_layers: m.n_layers,
            n_heads: m.n_heads,
            d_ff: m.d_ff,
            dropout: m.dropout,
            lstm_layers: m.lstm_layers,
            lstm_hidden: m.lstm_hidden,
            text_dim: m.text_dim,
            translator: m.translator,
            translator_hidden: m.translator_hidden,
        }
    }
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::from(&ModelConfig::default())
    }
}

/// Every knob of a training run. Read from TOML; unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub lr: f64,
    pub epochs_pretrain: usize,
    pub epochs_finetune: usize,
    pub batch_size: usize,
    /// Window stride for training windows. Test windows always use stride 1.
    pub stride: usize,
    pub max_gap: usize,
    /// Chronological tail of each patient's training windows held out.
    pub val_fraction: f64,
    pub use_rag: bool,
    pub use_context_attention: bool,
    pub use_translation_loss: bool,
    pub translation_weight: f64,
    pub huber_delta: f64,
    /// Registered text embedder name.
    pub embedder: String,
    pub model: ArchConfig,
    pub adapter: AdapterConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            lr: 1e-3,
            epochs_pretrain: 100,
            epochs_finetune: 50,
            batch_size: 32,
            stride: 1,
            max_gap: DEFAULT_MAX_GAP,
            val_fraction: 0.15,
            use_rag: true,
            use_context_attention: true,
            use_translation_loss: true,
            translation_weight: 0.1,
            huber_delta: 1.0,
            embedder: "hashed".into(),
            model: ArchConfig::default(),
            adapter: AdapterConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Seconds-scale settings used by the tests and the smoke pipeline.
    pub fn toy() -> Self {
        Self {
            lr: 3e-3,
            epochs_pretrain: 30,
            epochs_finetune: 30,
            stride: 6,
            model: ArchConfig {
                d_model: 16,
                d_ff: 32,
                lstm_hidden: 8,
                translator_hidden: 16,
                ..ArchConfig::from(&ModelConfig::toy())
            },
            adapter: AdapterConfig::toy(),
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(CoreError::MissingArtifact(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn model_config(&self) -> ModelConfig {
        let a = &self.model;
        ModelConfig {
            patch: PatchConfig::new(a.patch_len, a.patch_stride),
            d_model: a.d_model,
            n_layers: a.n_layers,
            n_heads: a.n_heads,
            d_ff: a.d_ff,
            dropout: a.dropout,
            lstm_layers: a.lstm_layers,
            lstm_hidden: a.lstm_hidden,
            text_dim: a.text_dim,
            translator: a.translator,
            translator_hidden: a.translator_hidden,
            translation_weight: if self.use_translation_loss { self.translation_weight } else { 0.0 },
            huber_delta: self.huber_delta,
            context_attention: self.use_context_attention,
            translation_loss: self.use_translation_loss,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        if self.batch_size == 0 || self.stride == 0 {
            return Err(CoreError::Config("batch_size and stride must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(CoreError::Config(format!("lr {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(CoreError::Config(format!("val_fraction {} outside [0, 1)", self.val_fraction)));
        }
        if self.adapter.k == 0 || self.adapter.m_heads == 0 {
            return Err(CoreError::Config("adapter k and m_heads must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    /// Flags as `(rag, ca, ctl)`.
    pub fn flags(&self) -> (bool, bool, bool) {
        (self.use_rag, self.use_context_attention, self.use_translation_loss)
    }

    pub fn with_flags(&self, rag: bool, ca: bool, ctl: bool) -> Self {
        Self {
            use_rag: rag,
            use_context_attention: ca,
            use_translation_loss: ctl,
            ..self.clone()
        }
    }
}

/// The five ablation rows as `(rag, ca, ctl)`: full, RAG + CA, RAG + CTL,
/// CA + CTL without retrieval, glucose only.
pub const ABLATION_ROWS: [(bool, bool, bool); 5] = [
    (true, true, true),
    (true, true, false),
    (true, false, true),
    (false, true, true),
    (false, false, false),
];
