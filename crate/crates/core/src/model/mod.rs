//! Multimodal encoder: patch embedding, transformer blocks, two-token
//! fusion with the context embedding, cross-translation loss and the LSTM
//! forecast head.
//!
//! Parameter names:
//!
//! | prefix | contents |
//! |---|---|
//! | `enc.w_bgl` | patch embedding `[patch_len, d]` |
//! | `enc.block{l}` | `ln1`, `attn`, `ln2`, `ff.0`, `ff.1` |
//! | `ctx.w_text` | text projection `[text_dim, d]` |
//! | `fuse.attn` | two-token attention (CA on) |
//! | `fuse.cat` | concatenation + linear `[2d, d]` (CA off, context on) |
//! | `trans.b2c`, `trans.c2b` | translators (CTL on) |
//! | `head.lstm`, `head.out` | forecast head |

mod config;
mod patch;

use std::path::Path;

use cgmrag_numerics::checkpoint::{encode_params, read_sidecar, save_params, load_params, sha256_hex, write_sidecar};
use cgmrag_numerics::nn::{self, AttentionShape};
use cgmrag_numerics::{concat_cols, concat_rows, Bindings, ParamStore, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{ModelConfig, PatchConfig, TranslatorMode};
pub use patch::{patch_count, patch_starts, patchify};

use crate::error::{CoreError, Result};

/// Prefixes of every pretrained parameter.
pub const ENCODER_PREFIXES: [&str; 5] = ["enc.", "ctx.", "fuse.", "trans.", "head."];

pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.d_model;
    let mut s = ParamStore::new();
    s.init_uniform("enc.w_bgl", cfg.patch.patch_len, d, &mut rng);
    let shape = AttentionShape::split(d, cfg.n_heads)?;
    for l in 0..cfg.n_layers {
        let p = format!("enc.block{l}");
        nn::init_layer_norm(&mut s, &format!("{p}.ln1"), d);
        nn::init_attention(&mut s, &format!("{p}.attn"), shape, &mut rng);
        nn::init_layer_norm(&mut s, &format!("{p}.ln2"), d);
        nn::init_mlp(&mut s, &format!("{p}.ff"), &[d, cfg.d_ff, d], &mut rng);
    }
    if cfg.uses_context() {
        s.init_uniform("ctx.w_text", cfg.text_dim, d, &mut rng);
        if cfg.context_attention {
            nn::init_attention(&mut s, "fuse.attn", shape, &mut rng);
        } else {
            nn::init_linear(&mut s, "fuse.cat", 2 * d, d, &mut rng);
        }
    }
    nn::init_lstm(&mut s, "head.lstm", d, cfg.lstm_hidden, cfg.lstm_layers, &mut rng);
    nn::init_linear(&mut s, "head.out", cfg.lstm_hidden + d, cfg.horizon, &mut rng);
    if cfg.translation_loss {
        let dims = translator_dims(cfg);
        nn::init_mlp(&mut s, "trans.b2c", &dims, &mut rng);
        nn::init_mlp(&mut s, "trans.c2b", &dims, &mut rng);
    }
    Ok(s)
}

fn translator_dims(cfg: &ModelConfig) -> Vec<usize> {
    let d = cfg.d_model;
    match cfg.translator {
        TranslatorMode::Mlp => vec![d, cfg.translator_hidden, cfg.translator_hidden, d],
        TranslatorMode::Linear => vec![d, d],
    }
}

/// Everything a forward pass produces. Row vectors are `[1, d]`.
pub struct Forward<'t> {
    pub y_hat: Var<'t>,
    pub z: Var<'t>,
    pub z_bgl: Var<'t>,
    pub z_ctx: Option<Var<'t>>,
    /// `[2, d]` when the attention fusion ran.
    pub fused_tokens: Option<Var<'t>>,
    pub patch_states: Var<'t>,
}

pub struct PretrainLoss<'t> {
    pub total: Var<'t>,
    pub forecast: Var<'t>,
    /// Zero constant when the translation loss is off.
    pub trans: Var<'t>,
}

/// Pre-norm transformer block.
pub fn encoder_block<'t>(
    cfg: &ModelConfig,
    b: &Bindings<'t, '_>,
    prefix: &str,
    h: Var<'t>,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Var<'t>> {
    let shape = AttentionShape::split(cfg.d_model, cfg.n_heads)?;
    let a = nn::layer_norm(b, &format!("{prefix}.ln1"), h);
    let a = nn::multi_head_attention(b, &format!("{prefix}.attn"), a, a, shape);
    let h = h.add(nn::dropout(a, cfg.dropout, training, rng)?);
    let f = nn::layer_norm(b, &format!("{prefix}.ln2"), h);
    let f = nn::mlp(b, &format!("{prefix}.ff"), f, 2);
    Ok(h.add(nn::dropout(f, cfg.dropout, training, rng)?))
}

/// Patch states `[N, d]` after the encoder blocks and their mean `[1, d]`.
pub fn encode_bgl<'t>(
    cfg: &ModelConfig,
    b: &Bindings<'t, '_>,
    x: &[f64],
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Var<'t>, Var<'t>)> {
    if x.len() != cfg.window_len {
        return Err(CoreError::Dimension {
            what: "window",
            expected: cfg.window_len,
            found: x.len(),
        });
    }
    let tape = b.tape();
    let patches = tape.constant(patchify(x, cfg.patch)?);
    let pe = tape.constant(nn::sinusoidal_pe(patches.shape()[0], cfg.d_model));
    let mut h = patches.matmul(b.param("enc.w_bgl")).add(pe);
    for l in 0..cfg.n_layers {
        h = encoder_block(cfg, b, &format!("enc.block{l}"), h, training, rng)?;
    }
    Ok((h, h.mean_rows()))
}

/// Two-token attention with a residual path. Returns the fused tokens `[2, d]`.
pub fn fuse_two_token<'t>(
    cfg: &ModelConfig,
    b: &Bindings<'t, '_>,
    z_bgl: Var<'t>,
    z_ctx: Var<'t>,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Var<'t>> {
    let shape = AttentionShape::split(cfg.d_model, cfg.n_heads)?;
    let tokens = concat_rows(&[z_bgl, z_ctx]);
    let a = nn::multi_head_attention(b, "fuse.attn", tokens, tokens, shape);
    Ok(tokens.add(nn::dropout(a, cfg.dropout, training, rng)?))
}

fn translate<'t>(cfg: &ModelConfig, b: &Bindings<'t, '_>, prefix: &str, x: Var<'t>) -> Var<'t> {
    nn::mlp(b, prefix, x, translator_dims(cfg).len() - 1)
}

/// `|T_b2c(e_bgl) - e_ctx|^2 + |T_c2b(e_ctx) - e_bgl|^2` with both targets detached.
pub fn cross_translation_loss<'t>(cfg: &ModelConfig, b: &Bindings<'t, '_>, e_bgl: Var<'t>, e_ctx: Var<'t>) -> Var<'t> {
    let to_ctx = translate(cfg, b, "trans.b2c", e_bgl).sub(e_ctx.detach()).sum_squares();
    let to_bgl = translate(cfg, b, "trans.c2b", e_ctx).sub(e_bgl.detach()).sum_squares();
    to_ctx.add(to_bgl)
}

/// LSTM over the patch states, last hidden state joined with `z`, linear to the horizon.
pub fn forecast_head<'t>(cfg: &ModelConfig, b: &Bindings<'t, '_>, patch_states: Var<'t>, z: Var<'t>) -> Var<'t> {
    let (_, h) = nn::lstm_forward(b, "head.lstm", patch_states, cfg.lstm_layers, cfg.lstm_hidden);
    nn::linear(b, "head.out", concat_cols(&[h, z]))
}

/// Full pass from a normalized window and optional raw text embedding.
pub fn forward<'t>(
    cfg: &ModelConfig,
    b: &Bindings<'t, '_>,
    x: &[f64],
    text: Option<&[f64]>,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Forward<'t>> {
    let (patch_states, z_bgl) = encode_bgl(cfg, b, x, training, rng)?;
    let mut z_ctx = None;
    let mut fused_tokens = None;
    let z = if cfg.uses_context() {
        let text = text.ok_or_else(|| CoreError::Config("model uses context but no text embedding was given".into()))?;
        if text.len() != cfg.text_dim {
            return Err(CoreError::Dimension {
                what: "text embedding",
                expected: cfg.text_dim,
                found: text.len(),
            });
        }
        let ctx = b.tape().constant(Tensor::row(text)).matmul(b.param("ctx.w_text"));
        z_ctx = Some(ctx);
        if cfg.context_attention {
            let tokens = fuse_two_token(cfg, b, z_bgl, ctx, training, rng)?;
            fused_tokens = Some(tokens);
            tokens.mean_rows()
        } else {
            nn::linear(b, "fuse.cat", concat_cols(&[z_bgl, ctx]))
        }
    } else {
        z_bgl
    };
    let y_hat = forecast_head(cfg, b, patch_states, z);
    Ok(Forward {
        y_hat,
        z,
        z_bgl,
        z_ctx,
        fused_tokens,
        patch_states,
    })
}

/// `L = huber(y_hat, target) + lambda * L_trans`.
pub fn pretrain_loss<'t>(
    cfg: &ModelConfig,
    b: &Bindings<'t, '_>,
    x: &[f64],
    text: Option<&[f64]>,
    target: &[f64],
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Forward<'t>, PretrainLoss<'t>)> {
    if target.len() != cfg.horizon {
        return Err(CoreError::Dimension {
            what: "target",
            expected: cfg.horizon,
            found: target.len(),
        });
    }
    let out = forward(cfg, b, x, text, training, rng)?;
    let tape = b.tape();
    let forecast = cgmrag_numerics::loss::huber_loss(out.y_hat, tape.constant(Tensor::row(target)), cfg.huber_delta);
    let trans = match (cfg.translation_loss, out.z_ctx) {
        (true, Some(ctx)) => cross_translation_loss(cfg, b, out.z_bgl, ctx),
        _ => tape.constant(Tensor::scalar(0.0)),
    };
    let total = forecast.add(trans.scale(cfg.translation_weight));
    Ok((out, PretrainLoss { total, forecast, trans }))
}

/// Eval-mode outputs as plain vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub y_hat: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model: ModelConfig,
    pub seed: u64,
    pub config_hash: String,
}

/// Pretrained parameters with their configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn predict(&self, x: &[f64], text: Option<&[f64]>) -> Result<Prediction> {
        let tape = Tape::new();
        let b = Bindings::new(&tape, &self.params);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = forward(&self.config, &b, x, text, false, &mut rng)?;
        Ok(Prediction {
            y_hat: out.y_hat.value().into_data(),
            z: out.z.value().into_data(),
        })
    }

    /// SHA-256 of the serialized parameters.
    pub fn hash(&self) -> String {
        sha256_hex(&encode_params(&self.params))
    }

    pub fn save(&self, path: &Path, seed: u64, config_hash: &str) -> Result<()> {
        save_params(path, &self.params)?;
        write_sidecar(
            path,
            &ModelMeta {
                model: self.config.clone(),
                seed,
                config_hash: config_hash.to_string(),
            },
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, ModelMeta)> {
        if !path.exists() {
            return Err(CoreError::MissingArtifact(path.to_path_buf()));
        }
        let params = load_params(path)?;
        let meta: ModelMeta = read_sidecar(path)?;
        let expected = init_params(&meta.model, 0)?;
        for (name, t) in expected.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                _ => return Err(CoreError::Config(format!("checkpoint does not match its configuration at `{name}`"))),
            }
        }
        Ok((
            Self {
                config: meta.model.clone(),
                params,
            },
            meta,
        ))
    }
}
