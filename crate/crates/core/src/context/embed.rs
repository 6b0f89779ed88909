use super::remote::{RemoteConfig, RemoteEmbedder};
use crate::error::{CoreError, Result};
use crate::registry::Registry;
use cgmrag_numerics::Tensor;

/// Width of the raw text vector.
pub const TEXT_DIM: usize = 768;

/// Maps summary text to a fixed-width vector.
pub trait TextEmbedder: Send + Sync {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone)]
pub struct EmbedderConfig {
    pub dim: usize,
    pub remote: RemoteConfig,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            dim: TEXT_DIM,
            remote: RemoteConfig::default(),
        }
    }
}

/// `hashed` and `remote`.
pub fn embedder_registry() -> Registry<dyn TextEmbedder, EmbedderConfig> {
    let mut r: Registry<dyn TextEmbedder, EmbedderConfig> = Registry::new("text embedder");
    r.register("hashed", |cfg| Ok(Box::new(HashedEmbedder::new(cfg.dim))));
    r.register("remote", |cfg| Ok(Box::new(RemoteEmbedder::new(cfg.remote.clone(), cfg.dim)?)));
    r
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of lowercase alphanumeric tokens, L2-normalized.
/// Bucket is `hash % dim`; the sign comes from the top hash bit.
#[derive(Debug, Clone, Copy)]
pub struct HashedEmbedder {
    dim: usize,
}

impl HashedEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding width must be positive");
        Self { dim }
    }
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self::new(TEXT_DIM)
    }
}

impl TextEmbedder for HashedEmbedder {
    fn name(&self) -> &'static str {
        "hashed"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let lower = text.to_lowercase();
        let mut v = vec![0.0; self.dim];
        let mut tokens = 0;
        for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let h = fnv1a64(token.as_bytes());
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign;
            tokens += 1;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if tokens == 0 || norm == 0.0 {
            return Err(CoreError::EmptyText);
        }
        Ok(v.into_iter().map(|x| x / norm).collect())
    }
}

/// `raw · W_text` outside of any tape.
pub fn project_context(raw: &[f64], w_text: &Tensor) -> Result<Vec<f64>> {
    if w_text.shape().len() != 2 || w_text.rows() != raw.len() {
        return Err(CoreError::Dimension {
            what: "context projection",
            expected: w_text.rows(),
            found: raw.len(),
        });
    }
    let cols = w_text.cols();
    let mut out = vec![0.0; cols];
    for (i, r) in raw.iter().enumerate() {
        for (o, w) in out.iter_mut().zip(w_text.row_slice(i)) {
            *o += r * w;
        }
    }
    Ok(out)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
