use serde::{Deserialize, Serialize};

use crate::data::{HORIZON, WINDOW_LEN};
use crate::error::{CoreError, Result};

/// Patch length and stride, both in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchConfig {
    pub patch_len: usize,
    pub stride: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self { patch_len: 6, stride: 3 }
    }
}

impl PatchConfig {
    pub fn new(patch_len: usize, stride: usize) -> Self {
        Self { patch_len, stride }
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.stride == 0 || self.stride > self.patch_len || self.patch_len > len {
            return Err(CoreError::Config(format!(
                "patch config needs 1 <= stride <= patch_len <= {len}, got patch_len {} stride {}",
                self.patch_len, self.stride
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslatorMode {
    Mlp,
    Linear,
}

/// Architecture and loss settings of the multimodal encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub window_len: usize,
    pub horizon: usize,
    pub patch: PatchConfig,
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
    pub translation_weight: f64,
    pub huber_delta: f64,
    /// Two-token attention fusion (CA). Off means concatenation + linear.
    pub context_attention: bool,
    /// Cross-translation loss (CTL).
    pub translation_loss: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            window_len: WINDOW_LEN,
            horizon: HORIZON,
            patch: PatchConfig::default(),
            d_model: 512,
            n_layers: 3,
            n_heads: 4,
            d_ff: 2048,
            dropout: 0.05,
            lstm_layers: 2,
            lstm_hidden: 256,
            text_dim: 768,
            translator: TranslatorMode::Mlp,
            translator_hidden: 512,
            translation_weight: 0.1,
            huber_delta: 1.0,
            context_attention: true,
            translation_loss: true,
        }
    }
}

impl ModelConfig {
    /// Small enough to train in seconds.
    pub fn toy() -> Self {
        Self {
            d_model: 8,
            n_layers: 1,
            n_heads: 1,
            d_ff: 16,
            lstm_layers: 1,
            lstm_hidden: 4,
            translator_hidden: 8,
            ..Self::default()
        }
    }

    /// The context token enters the model when either context component is on.
    pub fn uses_context(&self) -> bool {
        self.context_attention || self.translation_loss
    }

    pub fn n_patches(&self) -> usize {
        super::patch_count(self.window_len, self.patch.patch_len, self.patch.stride)
    }

    pub fn validate(&self) -> Result<()> {
        self.patch.validate(self.window_len)?;
        let positive = [
            ("window_len", self.window_len),
            ("horizon", self.horizon),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("lstm_layers", self.lstm_layers),
            ("lstm_hidden", self.lstm_hidden),
            ("text_dim", self.text_dim),
            ("translator_hidden", self.translator_hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(CoreError::Config(format!("{name} must be positive")));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(CoreError::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CoreError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.huber_delta > 0.0) {
            return Err(CoreError::Config("huber_delta must be positive".into()));
        }
        if !(self.translation_weight >= 0.0) {
            return Err(CoreError::Config("translation_weight must be non-negative".into()));
        }
        Ok(())
    }
}
