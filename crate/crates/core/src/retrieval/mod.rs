//! Embedding database over training windows and the retrieval adapter.

mod adapter;
mod index;

use std::path::Path;

use cgmrag_numerics::checkpoint::{load_params, read_sidecar, save_params, write_sidecar};
use cgmrag_numerics::{Bindings, ParamStore, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adapter::{aggregator_registry, Adapter, AdapterConfig, Aggregator, LstmAggregator, MeanAggregator, SoftmaxAggregator};
pub use index::{dot, l2_norm, rank_order, Exclude, IndexEntry, IndexMeta, NeighborSet, RetrievalIndex};

use crate::data::Split;
use crate::dataset::Sample;
use crate::error::{CoreError, Result};
use crate::model::{forward, Model, ENCODER_PREFIXES};

/// One entry per training sample, in sample order.
pub fn build_index(model: &Model, samples: &[Sample]) -> Result<RetrievalIndex> {
    if let Some(s) = samples.iter().find(|s| s.split != Split::Train) {
        return Err(CoreError::Provenance(format!("window {} is not from the training split", s.window_ref)));
    }
    let zs: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| model.predict(&s.x, s.text.as_deref()).map(|p| p.z))
        .collect::<Result<_>>()?;
    let mut index = RetrievalIndex::new(model.config.d_model, model.config.horizon, model.hash());
    for (s, z) in samples.iter().zip(zs) {
        index.push(IndexEntry {
            z,
            y: s.y.clone(),
            window_ref: s.window_ref.clone(),
        })?;
    }
    Ok(index)
}

/// Top-K rows for `z` under the adapter's K and exclusion rules.
pub fn neighbor_set(
    index: &RetrievalIndex,
    adapter: &AdapterConfig,
    z: &[f64],
    window_ref: &str,
    patient_id: &str,
    exclude_self: bool,
) -> Result<NeighborSet> {
    let exclude = if adapter.exclude_same_patient {
        Exclude::Patient(patient_id)
    } else if exclude_self {
        Exclude::Window(window_ref)
    } else {
        Exclude::Nothing
    };
    let set = index.query_top_k(z, adapter.k, exclude)?;
    if set.is_empty() {
        return Err(CoreError::EmptyIndex);
    }
    Ok(set)
}

/// Neighbor embeddings of `z`, see [`neighbor_set`].
pub fn neighbors_for<'i>(
    index: &'i RetrievalIndex,
    adapter: &AdapterConfig,
    z: &[f64],
    window_ref: &str,
    patient_id: &str,
    exclude_self: bool,
) -> Result<Vec<&'i [f64]>> {
    let set = neighbor_set(index, adapter, z, window_ref, patient_id, exclude_self)?;
    Ok(set.indices.iter().map(|&i| index.entry(i).z.as_slice()).collect())
}

/// Retrieval forecast from the raw window with the pretrained parameters
/// bound as constants. `params` holds both the model and adapter parameters.
pub fn rag_forward_frozen<'t>(
    model: &Model,
    adapter: &Adapter,
    b: &Bindings<'t, '_>,
    sample: &Sample,
    index: &RetrievalIndex,
    exclude_self: bool,
) -> Result<Var<'t>> {
    for p in ENCODER_PREFIXES {
        if !b.is_frozen(p) {
            return Err(CoreError::Config(format!("encoder prefix `{p}` must be frozen")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = forward(&model.config, b, &sample.x, sample.text.as_deref(), false, &mut rng)?;
    let z = out.z.value().into_data();
    let neighbors = neighbors_for(index, &adapter.config, &z, &sample.window_ref, &sample.patient_id, exclude_self)?;
    let tape = b.tape();
    let n: Vec<Var<'t>> = neighbors.iter().map(|v| tape.constant(Tensor::row(v))).collect();
    adapter.forecast(b, out.z, &n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterMeta {
    pub adapter: AdapterConfig,
    pub d_model: usize,
    pub horizon: usize,
    pub seed: u64,
    pub config_hash: String,
    pub encoder_hash: String,
    pub index_hash: String,
}

pub fn save_adapter(path: &Path, params: &ParamStore, meta: &AdapterMeta) -> Result<()> {
    save_params(path, params)?;
    write_sidecar(path, meta)?;
    Ok(())
}

pub fn load_adapter(path: &Path) -> Result<(Adapter, ParamStore, AdapterMeta)> {
    if !path.exists() {
        return Err(CoreError::MissingArtifact(path.to_path_buf()));
    }
    let params = load_params(path)?;
    let meta: AdapterMeta = read_sidecar(path)?;
    let adapter = Adapter::new(meta.adapter.clone(), meta.d_model, meta.horizon)?;
    Ok((adapter, params, meta))
}
