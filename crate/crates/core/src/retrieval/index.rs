use std::cmp::Ordering;
use std::path::Path;

use cgmrag_numerics::checkpoint::{decode_params, encode_params, read_sidecar, sha256_hex, write_atomic, write_sidecar};
use cgmrag_numerics::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub window_ref: String,
}

impl IndexEntry {
    /// Patient part of `patient@start`.
    pub fn patient_id(&self) -> &str {
        self.window_ref.rsplit_once('@').map_or(self.window_ref.as_str(), |(p, _)| p)
    }
}

/// Entries skipped by a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exclude<'a> {
    #[default]
    Nothing,
    Window(&'a str),
    Patient(&'a str),
}

impl Exclude<'_> {
    fn skips(&self, e: &IndexEntry) -> bool {
        match self {
            Exclude::Nothing => false,
            Exclude::Window(r) => e.window_ref == *r,
            Exclude::Patient(p) => e.patient_id() == *p,
        }
    }
}

/// Neighbor positions in the index, most similar first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub indices: Vec<usize>,
    pub similarities: Vec<f64>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Descending similarity, then ascending insertion index.
pub fn rank_order(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub count: usize,
    pub dim: usize,
    pub horizon: usize,
    pub encoder_hash: String,
    pub window_refs: Vec<String>,
}

/// Exact cosine-similarity index over fused window embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    dim: usize,
    horizon: usize,
    encoder_hash: String,
    entries: Vec<IndexEntry>,
    norms: Vec<f64>,
}

impl RetrievalIndex {
    pub fn new(dim: usize, horizon: usize, encoder_hash: impl Into<String>) -> Self {
        Self {
            dim,
            horizon,
            encoder_hash: encoder_hash.into(),
            entries: Vec::new(),
            norms: Vec::new(),
        }
    }

    /// Rejects wrong widths, non-finite values and zero embeddings.
    pub fn push(&mut self, entry: IndexEntry) -> Result<()> {
        if entry.z.len() != self.dim {
            return Err(CoreError::Dimension {
                what: "index embedding",
                expected: self.dim,
                found: entry.z.len(),
            });
        }
        if entry.y.len() != self.horizon {
            return Err(CoreError::Dimension {
                what: "index target",
                expected: self.horizon,
                found: entry.y.len(),
            });
        }
        if !entry.z.iter().chain(&entry.y).all(|v| v.is_finite()) {
            return Err(CoreError::Data {
                row: self.entries.len() + 1,
                message: format!("non-finite index entry {}", entry.window_ref),
            });
        }
        let norm = l2_norm(&entry.z);
        if norm == 0.0 {
            return Err(CoreError::ZeroVector);
        }
        self.norms.push(norm);
        self.entries.push(entry);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn encoder_hash(&self) -> &str {
        &self.encoder_hash
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &IndexEntry {
        &self.entries[i]
    }

    /// Cosine similarity of `z` to every entry, in insertion order.
    pub fn similarities(&self, z: &[f64]) -> Result<Vec<f64>> {
        if self.entries.is_empty() {
            return Err(CoreError::EmptyIndex);
        }
        if z.len() != self.dim {
            return Err(CoreError::Dimension {
                what: "query",
                expected: self.dim,
                found: z.len(),
            });
        }
        let qn = l2_norm(z);
        if qn == 0.0 || !qn.is_finite() {
            return Err(CoreError::ZeroVector);
        }
        Ok(self
            .entries
            .iter()
            .zip(&self.norms)
            .map(|(e, n)| dot(z, &e.z) / (qn * n))
            .collect())
    }

    /// Exact top-`k` scan. Ties go to the earlier entry.
    pub fn query_top_k(&self, z: &[f64], k: usize, exclude: Exclude<'_>) -> Result<NeighborSet> {
        let sims = self.similarities(z)?;
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, &s) in sims.iter().enumerate() {
            if k == 0 || exclude.skips(&self.entries[i]) {
                continue;
            }
            if best.len() == k && rank_order((s, i), best[k - 1]) != Ordering::Less {
                continue;
            }
            let at = best.partition_point(|&b| rank_order(b, (s, i)) == Ordering::Less);
            best.insert(at, (s, i));
            best.truncate(k);
        }
        Ok(NeighborSet {
            similarities: best.iter().map(|b| b.0).collect(),
            indices: best.iter().map(|b| b.1).collect(),
        })
    }

    fn to_store(&self) -> Result<ParamStore> {
        let n = self.entries.len();
        let mut s = ParamStore::new();
        s.insert(
            "z",
            Tensor::new(vec![n, self.dim], self.entries.iter().flat_map(|e| e.z.iter().copied()).collect())?,
        );
        s.insert(
            "y",
            Tensor::new(vec![n, self.horizon], self.entries.iter().flat_map(|e| e.y.iter().copied()).collect())?,
        );
        Ok(s)
    }

    pub fn meta(&self) -> IndexMeta {
        IndexMeta {
            count: self.entries.len(),
            dim: self.dim,
            horizon: self.horizon,
            encoder_hash: self.encoder_hash.clone(),
            window_refs: self.entries.iter().map(|e| e.window_ref.clone()).collect(),
        }
    }

    /// Serialized matrices. Their SHA-256 identifies the index.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(encode_params(&self.to_store()?))
    }

    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_bytes()?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)?;
        write_sidecar(path, &self.meta())?;
        Ok(())
    }

    /// Loads an index and, when given, checks it was built by `encoder_hash`.
    pub fn load(path: &Path, encoder_hash: Option<&str>) -> Result<Self> {
        if !path.exists() {
            return Err(CoreError::MissingArtifact(path.to_path_buf()));
        }
        let store = decode_params(&std::fs::read(path)?)?;
        let meta: IndexMeta = read_sidecar(path)?;
        if let Some(expected) = encoder_hash {
            if expected != meta.encoder_hash {
                return Err(CoreError::HashMismatch {
                    artifact: path.display().to_string(),
                    expected: expected.to_string(),
                    found: meta.encoder_hash,
                });
            }
        }
        let (Some(z), Some(y)) = (store.get("z"), store.get("y")) else {
            return Err(CoreError::Config(format!("{} lacks z/y matrices", path.display())));
        };
        if z.shape() != [meta.count, meta.dim] || y.shape() != [meta.count, meta.horizon] || meta.window_refs.len() != meta.count {
            return Err(CoreError::Config(format!("{} disagrees with its sidecar", path.display())));
        }
        let mut index = Self::new(meta.dim, meta.horizon, meta.encoder_hash.clone());
        for (i, r) in meta.window_refs.into_iter().enumerate() {
            index.push(IndexEntry {
                z: z.data()[i * meta.dim..(i + 1) * meta.dim].to_vec(),
                y: y.data()[i * meta.horizon..(i + 1) * meta.horizon].to_vec(),
                window_ref: r,
            })?;
        }
        Ok(index)
    }
}
