//! Two-stage training, run directories, forecasting and the ablation suite.
//!
//! Stage one pretrains the encoder on `huber + lambda * L_trans`. Stage two
//! freezes it, indexes the fused embeddings of the training windows and fits
//! the retrieval adapter with each window's own entry excluded from its
//! neighbors.

mod config;
mod report;
mod run;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use cgmrag_numerics::loss::huber_loss;
use cgmrag_numerics::optim::Adam;
use cgmrag_numerics::{Bindings, ParamStore, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{ArchConfig, TrainConfig, ABLATION_ROWS};
pub use report::{evaluate_tables, EvaluationReport, ForecastRow, ForecastTable};
pub use run::{
    ablation_csv, forecast_run, run_ablation, train_run, AblationRow, ArtifactRecord, RunManifest, StageRecord, TrainSummary, TrainedRun,
    PREDICTION_CLAMP,
};

use crate::dataset::Sample;
use crate::error::{CoreError, Result};
use crate::model::{pretrain_loss, Model};
use crate::retrieval::{build_index, neighbor_set, Adapter, RetrievalIndex};

/// Mean losses over one epoch. Fine-tuning logs zero translation loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_forecast: f64,
    pub loss_trans: f64,
}

/// `epoch,loss_total,loss_forecast,loss_trans`.
pub fn loss_csv(log: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,loss_total,loss_forecast,loss_trans\n");
    for e in log {
        writeln!(out, "{},{},{},{}", e.epoch, e.loss_total, e.loss_forecast, e.loss_trans).unwrap();
    }
    out
}

/// Batches of sample indices for one epoch, shuffled by `(seed, epoch)`.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    order.shuffle(&mut rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Dropout stream of one sample in one epoch.
fn sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

/// Sums per-sample gradients in batch order and divides by the batch size.
fn mean_gradients(parts: Vec<BTreeMap<String, Tensor>>) -> BTreeMap<String, Tensor> {
    let n = parts.len() as f64;
    let mut acc: BTreeMap<String, Tensor> = BTreeMap::new();
    for part in parts {
        for (name, g) in part {
            match acc.get_mut(&name) {
                Some(a) => a.data_mut().iter_mut().zip(g.data()).for_each(|(a, g)| *a += g),
                None => {
                    acc.insert(name, g);
                }
            }
        }
    }
    for g in acc.values_mut() {
        g.data_mut().iter_mut().for_each(|v| *v /= n);
    }
    acc
}

struct StepOut {
    grads: BTreeMap<String, Tensor>,
    total: f64,
    forecast: f64,
    trans: f64,
}

fn check_texts(cfg: &TrainConfig, samples: &[Sample]) -> Result<()> {
    if cfg.model_config().uses_context() {
        if let Some(s) = samples.iter().find(|s| s.text.is_none()) {
            return Err(CoreError::MissingSummary(s.window_ref.clone()));
        }
    }
    Ok(())
}

/// Pretrains a fresh encoder with Adam. Per-sample passes run in parallel;
/// the result does not depend on the thread count.
pub fn pretrain(cfg: &TrainConfig, samples: &[Sample]) -> Result<(Model, Vec<EpochLoss>)> {
    cfg.validate()?;
    check_texts(cfg, samples)?;
    if samples.is_empty() {
        return Err(CoreError::Data {
            row: 0,
            message: "no training windows".into(),
        });
    }
    let mut model = Model::new(cfg.model_config(), cfg.seed)?;
    let mut adam = Adam::new(cfg.lr);
    let mut log = Vec::with_capacity(cfg.epochs_pretrain);
    for epoch in 0..cfg.epochs_pretrain {
        let (mut total, mut forecast, mut trans) = (0.0, 0.0, 0.0);
        for batch in epoch_batches(samples.len(), cfg.batch_size, cfg.seed, epoch) {
            let outs: Vec<StepOut> = batch
                .par_iter()
                .map(|&i| {
                    let s = &samples[i];
                    let tape = Tape::new();
                    let b = Bindings::new(&tape, &model.params);
                    let mut rng = sample_rng(cfg.seed, epoch, i);
                    let (_, loss) = pretrain_loss(&model.config, &b, &s.x, s.text.as_deref(), &s.y, true, &mut rng)?;
                    let grads = b.gradients(&tape.backward(loss.total)?);
                    Ok(StepOut {
                        grads,
                        total: loss.total.item(),
                        forecast: loss.forecast.item(),
                        trans: loss.trans.item(),
                    })
                })
                .collect::<Result<_>>()?;
            let mut grads = Vec::with_capacity(outs.len());
            for o in outs {
                total += o.total;
                forecast += o.forecast;
                trans += o.trans;
                grads.push(o.grads);
            }
            adam.step(&mut model.params, &mean_gradients(grads));
        }
        let n = samples.len() as f64;
        log.push(EpochLoss {
            epoch: epoch + 1,
            loss_total: total / n,
            loss_forecast: forecast / n,
            loss_trans: trans / n,
        });
    }
    Ok((model, log))
}

/// Builds the index from a frozen encoder and checks that indexing left
/// its parameters untouched.
pub fn freeze_and_index(model: &Model, samples: &[Sample]) -> Result<RetrievalIndex> {
    let before = model.params.checksum("");
    let index = build_index(model, samples)?;
    let after = model.params.checksum("");
    if before != after {
        return Err(CoreError::HashMismatch {
            artifact: "encoder".into(),
            expected: before,
            found: after,
        });
    }
    Ok(index)
}

/// Query embeddings and neighbor row indices, computed once with the frozen
/// encoder in eval mode.
struct Retrieved {
    z: Vec<f64>,
    neighbors: Vec<usize>,
}

fn retrieve_all(model: &Model, adapter: &Adapter, index: &RetrievalIndex, samples: &[Sample], exclude_self: bool) -> Result<Vec<Retrieved>> {
    samples
        .par_iter()
        .map(|s| {
            let z = model.predict(&s.x, s.text.as_deref())?.z;
            let neighbors = neighbor_set(index, &adapter.config, &z, &s.window_ref, &s.patient_id, exclude_self)?.indices;
            Ok(Retrieved { z, neighbors })
        })
        .collect()
}

fn adapter_loss(adapter: &Adapter, params: &ParamStore, index: &RetrievalIndex, r: &Retrieved, y: &[f64], delta: f64) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let tape = Tape::new();
    let b = Bindings::new(&tape, params);
    let neighbors: Vec<&[f64]> = r.neighbors.iter().map(|&i| index.entry(i).z.as_slice()).collect();
    let y_hat = adapter.forecast_from(&b, &r.z, &neighbors)?;
    let loss = huber_loss(y_hat, tape.constant(Tensor::row(y)), delta);
    let grads = b.gradients(&tape.backward(loss)?);
    Ok((loss.item(), grads))
}

/// Fits a fresh adapter on top of a frozen encoder. Only adapter parameters
/// are ever bound to a tape.
pub fn finetune_adapter(cfg: &TrainConfig, model: &Model, index: &RetrievalIndex, samples: &[Sample]) -> Result<(Adapter, ParamStore, Vec<EpochLoss>)> {
    let encoder_hash = model.hash();
    if index.encoder_hash() != encoder_hash {
        return Err(CoreError::HashMismatch {
            artifact: "retrieval index".into(),
            expected: encoder_hash,
            found: index.encoder_hash().to_string(),
        });
    }
    check_texts(cfg, samples)?;
    let adapter = Adapter::new(cfg.adapter.clone(), model.config.d_model, model.config.horizon)?;
    let mut params = adapter.init_params(cfg.seed);
    let retrieved = retrieve_all(model, &adapter, index, samples, true)?;
    let mut adam = Adam::new(cfg.lr);
    let mut log = Vec::with_capacity(cfg.epochs_finetune);
    for epoch in 0..cfg.epochs_finetune {
        let mut total = 0.0;
        for batch in epoch_batches(samples.len(), cfg.batch_size, cfg.seed, epoch) {
            let outs: Vec<(f64, BTreeMap<String, Tensor>)> = batch
                .par_iter()
                .map(|&i| adapter_loss(&adapter, &params, index, &retrieved[i], &samples[i].y, cfg.huber_delta))
                .collect::<Result<_>>()?;
            let mut grads = Vec::with_capacity(outs.len());
            for (l, g) in outs {
                total += l;
                grads.push(g);
            }
            adam.step(&mut params, &mean_gradients(grads));
        }
        let mean = total / samples.len() as f64;
        log.push(EpochLoss {
            epoch: epoch + 1,
            loss_total: mean,
            loss_forecast: mean,
            loss_trans: 0.0,
        });
    }
    if model.hash() != encoder_hash {
        return Err(CoreError::HashMismatch {
            artifact: "encoder".into(),
            expected: encoder_hash,
            found: model.hash(),
        });
    }
    Ok((adapter, params, log))
}

/// Normalized forecasts from the pretrain head.
pub fn predict_pretrain(model: &Model, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    samples
        .par_iter()
        .map(|s| model.predict(&s.x, s.text.as_deref()).map(|p| p.y_hat))
        .collect()
}

/// Normalized forecasts from the retrieval head.
pub fn predict_rag(model: &Model, adapter: &Adapter, params: &ParamStore, index: &RetrievalIndex, samples: &[Sample], exclude_self: bool) -> Result<Vec<Vec<f64>>> {
    let retrieved = retrieve_all(model, adapter, index, samples, exclude_self)?;
    retrieved
        .par_iter()
        .map(|r| {
            let tape = Tape::new();
            let b = Bindings::new(&tape, params);
            let neighbors: Vec<&[f64]> = r.neighbors.iter().map(|&i| index.entry(i).z.as_slice()).collect();
            Ok(adapter.forecast_from(&b, &r.z, &neighbors)?.value().into_data())
        })
        .collect()
}
