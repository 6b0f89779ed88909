//! Run directories: every artifact of one training run plus a manifest of
//! file hashes that later stages verify before loading anything.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cgmrag_numerics::checkpoint::{file_sha256, write_atomic};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{evaluate_tables, ForecastRow, ForecastTable};
use super::{finetune_adapter, freeze_and_index, loss_csv, predict_pretrain, predict_rag, pretrain, TrainConfig, ABLATION_ROWS};
use crate::context::{embedder_registry, EmbedderConfig, RemoteConfig, SummaryStore};
use crate::data::{CgmWindow, NormTable, PatientSeries};
use crate::dataset::{embed_summaries, prepare_samples, split_validation, to_mg_dl, windows_from_series, Sample};
use crate::error::{CoreError, Result};
use crate::model::Model;
use crate::retrieval::{load_adapter, save_adapter, Adapter, AdapterMeta, RetrievalIndex};
use cgmrag_numerics::ParamStore;

/// Denormalized forecasts are clipped to this range in mg/dL.
pub const PREDICTION_CLAMP: (f64, f64) = (40.0, 400.0);

pub const CONFIG_FILE: &str = "config.toml";
pub const NORM_FILE: &str = "norm.json";
pub const PRETRAIN_FILE: &str = "pretrain.ckpt";
pub const INDEX_FILE: &str = "index.bin";
pub const ADAPTER_FILE: &str = "adapter.ckpt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "train_summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the run directory.
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub complete: bool,
    pub artifacts: Vec<ArtifactRecord>,
}

/// Stages in execution order: `prepare`, `pretrain`, `index`, `finetune`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_file: String,
    pub config_hash: String,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    fn new(config_hash: String) -> Self {
        Self {
            config_file: CONFIG_FILE.into(),
            config_hash,
            stages: Vec::new(),
        }
    }

    /// Hashes `files` in `dir` and appends a completed stage.
    fn complete(&mut self, dir: &Path, stage: &str, files: &[&str]) -> Result<()> {
        let artifacts = files
            .iter()
            .map(|f| {
                let path = dir.join(f);
                if !path.exists() {
                    return Err(CoreError::MissingArtifact(path));
                }
                Ok(ArtifactRecord {
                    file: f.to_string(),
                    sha256: file_sha256(&path)?,
                })
            })
            .collect::<Result<_>>()?;
        self.stages.push(StageRecord {
            stage: stage.into(),
            complete: true,
            artifacts,
        });
        self.save(dir)
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(CoreError::MissingArtifact(path));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name && s.complete)
    }

    /// Every recorded file exists and still has its recorded hash.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for a in self.stages.iter().flat_map(|s| &s.artifacts) {
            let path = dir.join(&a.file);
            if !path.exists() {
                return Err(CoreError::MissingArtifact(path));
            }
            let found = file_sha256(&path)?;
            if found != a.sha256 {
                return Err(CoreError::HashMismatch {
                    artifact: a.file.clone(),
                    expected: a.sha256.clone(),
                    found,
                });
            }
        }
        Ok(())
    }
}

/// Validation RMSE in mg/dL of both heads, pooled over all steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub train_windows: usize,
    pub fit_windows: usize,
    pub val_windows: usize,
    pub pretrain_final_loss: f64,
    pub val_rmse_pretrain: Option<f64>,
    pub val_rmse_rag: Option<f64>,
}

/// Everything needed to forecast, loaded and cross-checked.
pub struct TrainedRun {
    pub config: TrainConfig,
    pub norms: NormTable,
    pub model: Model,
    pub rag: Option<(Adapter, ParamStore, RetrievalIndex)>,
}

impl TrainedRun {
    /// Normalized forecasts from the head the configuration selects.
    pub fn predict_normalized(&self, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
        match &self.rag {
            Some((adapter, params, index)) => predict_rag(&self.model, adapter, params, index, samples, false),
            None => predict_pretrain(&self.model, samples),
        }
    }

    /// Forecasts in mg/dL, clamped to [`PREDICTION_CLAMP`].
    pub fn forecast(&self, samples: &[Sample]) -> Result<ForecastTable> {
        let normalized = self.predict_normalized(samples)?;
        let rows = samples
            .iter()
            .zip(normalized)
            .map(|(s, y)| {
                let values = to_mg_dl(&y, &s.patient_id, &self.norms)?
                    .into_iter()
                    .map(|v| v.clamp(PREDICTION_CLAMP.0, PREDICTION_CLAMP.1))
                    .collect();
                Ok(ForecastRow {
                    patient_id: s.patient_id.clone(),
                    start_time: s.start_time,
                    values,
                })
            })
            .collect::<Result<_>>()?;
        Ok(ForecastTable { rows })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = RunManifest::load(dir)?;
        manifest.verify(dir)?;
        for stage in ["prepare", "pretrain"] {
            if manifest.stage(stage).is_none() {
                return Err(CoreError::MissingArtifact(dir.join(stage)));
            }
        }
        let config = TrainConfig::load(&dir.join(&manifest.config_file))?;
        check_hash("config", &manifest.config_hash, &config.hash())?;
        let norms: NormTable = serde_json::from_str(&std::fs::read_to_string(dir.join(NORM_FILE))?)?;
        let (model, meta) = Model::load(&dir.join(PRETRAIN_FILE))?;
        check_hash(PRETRAIN_FILE, &manifest.config_hash, &meta.config_hash)?;
        let rag = if config.use_rag {
            if manifest.stage("finetune").is_none() {
                return Err(CoreError::MissingArtifact(dir.join(ADAPTER_FILE)));
            }
            let index = RetrievalIndex::load(&dir.join(INDEX_FILE), Some(&model.hash()))?;
            let (adapter, params, meta) = load_adapter(&dir.join(ADAPTER_FILE))?;
            check_hash(ADAPTER_FILE, &manifest.config_hash, &meta.config_hash)?;
            check_hash(ADAPTER_FILE, &model.hash(), &meta.encoder_hash)?;
            check_hash(ADAPTER_FILE, &index.hash()?, &meta.index_hash)?;
            Some((adapter, params, index))
        } else {
            None
        };
        Ok(Self { config, norms, model, rag })
    }
}

fn check_hash(artifact: &str, expected: &str, found: &str) -> Result<()> {
    if expected != found {
        return Err(CoreError::HashMismatch {
            artifact: artifact.into(),
            expected: expected.into(),
            found: found.into(),
        });
    }
    Ok(())
}

/// Text embeddings of each window's summary, or `None` for glucose-only
/// configurations, which never look at summaries.
fn texts_for(cfg: &TrainConfig, windows: &[CgmWindow], summaries: Option<&SummaryStore>) -> Result<Option<Vec<Vec<f64>>>> {
    if !cfg.model_config().uses_context() {
        return Ok(None);
    }
    let store = summaries.ok_or_else(|| match windows.first() {
        Some(w) => CoreError::MissingSummary(w.window_ref()),
        None => CoreError::Config("context configuration without summaries".into()),
    })?;
    let embedder = embedder_registry().build(
        &cfg.embedder,
        &EmbedderConfig {
            dim: cfg.model.text_dim,
            remote: RemoteConfig::from_env(),
        },
    )?;
    embed_summaries(windows, store, embedder.as_ref()).map(Some)
}

fn rmse_mg_dl(preds: &[Vec<f64>], samples: &[Sample], norms: &NormTable) -> Result<Option<f64>> {
    if samples.is_empty() {
        return Ok(None);
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, s) in preds.iter().zip(samples) {
        let p = to_mg_dl(p, &s.patient_id, norms)?;
        let y = to_mg_dl(&s.y, &s.patient_id, norms)?;
        for (a, b) in p.iter().zip(&y) {
            sum += (a.clamp(PREDICTION_CLAMP.0, PREDICTION_CLAMP.1) - b).powi(2);
            n += 1;
        }
    }
    Ok(Some((sum / n as f64).sqrt()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Pretrain, index and fine-tune into `out_dir`. Glucose-only
/// configurations skip the summaries; RAG-off configurations stop after
/// pretraining.
pub fn train_run(cfg: &TrainConfig, train: &[PatientSeries], summaries: Option<&SummaryStore>, out_dir: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let config_hash = cfg.hash();
    let mut manifest = RunManifest::new(config_hash.clone());

    let norms = NormTable::fit(train)?;
    write_text(&out_dir.join(CONFIG_FILE), &cfg.to_toml())?;
    write_json(&out_dir.join(NORM_FILE), &norms)?;
    manifest.complete(out_dir, "prepare", &[CONFIG_FILE, NORM_FILE])?;

    let windows = windows_from_series(train, cfg.stride, cfg.max_gap);
    let texts = texts_for(cfg, &windows, summaries)?;
    let samples = prepare_samples(&windows, &norms, texts.as_deref())?;
    let n_windows = samples.len();
    let (fit, val) = split_validation(samples, cfg.val_fraction);

    let (model, pre_log) = pretrain(cfg, &fit)?;
    model.save(&out_dir.join(PRETRAIN_FILE), cfg.seed, &config_hash)?;
    write_text(&out_dir.join("loss_pretrain.csv"), &loss_csv(&pre_log))?;
    manifest.complete(out_dir, "pretrain", &[PRETRAIN_FILE, "pretrain.ckpt.json", "loss_pretrain.csv"])?;

    let val_rmse_pretrain = rmse_mg_dl(&predict_pretrain(&model, &val)?, &val, &norms)?;
    let mut val_rmse_rag = None;
    if cfg.use_rag {
        let index = freeze_and_index(&model, &fit)?;
        index.save(&out_dir.join(INDEX_FILE))?;
        manifest.complete(out_dir, "index", &[INDEX_FILE, "index.bin.json"])?;

        let (adapter, params, ft_log) = finetune_adapter(cfg, &model, &index, &fit)?;
        let meta = AdapterMeta {
            adapter: adapter.config.clone(),
            d_model: model.config.d_model,
            horizon: model.config.horizon,
            seed: cfg.seed,
            config_hash: config_hash.clone(),
            encoder_hash: model.hash(),
            index_hash: index.hash()?,
        };
        save_adapter(&out_dir.join(ADAPTER_FILE), &params, &meta)?;
        write_text(&out_dir.join("loss_finetune.csv"), &loss_csv(&ft_log))?;
        manifest.complete(out_dir, "finetune", &[ADAPTER_FILE, "adapter.ckpt.json", "loss_finetune.csv"])?;
        val_rmse_rag = rmse_mg_dl(&predict_rag(&model, &adapter, &params, &index, &val, false)?, &val, &norms)?;
    }

    let summary = TrainSummary {
        config_hash,
        train_windows: n_windows,
        fit_windows: fit.len(),
        val_windows: val.len(),
        pretrain_final_loss: pre_log.last().map_or(f64::NAN, |e| e.loss_total),
        val_rmse_pretrain,
        val_rmse_rag,
    };
    write_json(&out_dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Forecasts every stride-1 window of `series` with a trained run. Returns
/// predictions and the matching reference trajectories, both in mg/dL.
pub fn forecast_run(run_dir: &Path, series: &[PatientSeries], summaries: Option<&SummaryStore>) -> Result<(ForecastTable, ForecastTable)> {
    let run = TrainedRun::load(run_dir)?;
    let windows = windows_from_series(series, 1, run.config.max_gap);
    if windows.is_empty() {
        return Err(CoreError::Data {
            row: 0,
            message: "no complete windows to forecast".into(),
        });
    }
    let texts = texts_for(&run.config, &windows, summaries)?;
    let samples = prepare_samples(&windows, &run.norms, texts.as_deref())?;
    let preds = run.forecast(&samples)?;
    let refs = ForecastTable {
        rows: windows
            .iter()
            .map(|w| ForecastRow {
                patient_id: w.patient_id.clone(),
                start_time: w.start_time,
                values: w.trajectory.clone(),
            })
            .collect(),
    };
    Ok((preds, refs))
}

/// RMSE and MAE at 5, 30 and 60 minutes for one flag combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub rag: bool,
    pub ca: bool,
    pub ctl: bool,
    pub rmse: [f64; 3],
    pub mae: [f64; 3],
}

impl AblationRow {
    /// Glucose only: every component off.
    pub fn bgl(&self) -> bool {
        !(self.rag || self.ca || self.ctl)
    }

    pub fn dir_name(&self) -> String {
        format!("rag{}_ca{}_ctl{}", u8::from(self.rag), u8::from(self.ca), u8::from(self.ctl))
    }
}

/// `rag,ca,ctl,bgl,rmse_5,rmse_30,rmse_60,mae_5,mae_30,mae_60`.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("rag,ca,ctl,bgl,rmse_5,rmse_30,rmse_60,mae_5,mae_30,mae_60\n");
    for r in rows {
        let b = |v: bool| u8::from(v);
        write!(out, "{},{},{},{}", b(r.rag), b(r.ca), b(r.ctl), b(r.bgl())).unwrap();
        for v in r.rmse.iter().chain(&r.mae) {
            write!(out, ",{v:.4}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Trains and evaluates the five canonical rows in parallel, one run
/// directory each under `out_dir`, and writes `ablation.csv`.
pub fn run_ablation(base: &TrainConfig, train: &[PatientSeries], test: &[PatientSeries], summaries: Option<&SummaryStore>, out_dir: &Path) -> Result<Vec<AblationRow>> {
    let rows = ABLATION_ROWS
        .par_iter()
        .map(|&(rag, ca, ctl)| {
            let cfg = base.with_flags(rag, ca, ctl);
            let mut row = AblationRow {
                rag,
                ca,
                ctl,
                rmse: [0.0; 3],
                mae: [0.0; 3],
            };
            let dir: PathBuf = out_dir.join(row.dir_name());
            let store = if cfg.model_config().uses_context() { summaries } else { None };
            train_run(&cfg, train, store, &dir)?;
            let (preds, refs) = forecast_run(&dir, test, store)?;
            let report = evaluate_tables(&preds, &refs)?;
            report.save(&dir)?;
            for (i, h) in report.horizons.iter().take(3).enumerate() {
                row.rmse[i] = h.pooled.rmse;
                row.mae[i] = h.pooled.mae;
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    write_text(&out_dir.join("ablation.csv"), &ablation_csv(&rows))?;
    Ok(rows)
}
