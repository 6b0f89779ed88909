//! Normalized model inputs built from windows and their summaries.

use rayon::prelude::*;

use crate::context::{SummaryStore, TextEmbedder};
use crate::data::{denormalize, impute_gaps, make_windows, normalize, CgmWindow, NormTable, PatientSeries, Split};
use crate::error::{CoreError, Result};

/// One window in normalized units with its optional raw text embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub window_ref: String,
    pub patient_id: String,
    pub split: Split,
    pub start_time: i64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub text: Option<Vec<f64>>,
}

/// Imputes every series and cuts windows, patients in input order.
pub fn windows_from_series(series: &[PatientSeries], stride: usize, max_gap: usize) -> Vec<CgmWindow> {
    series
        .par_iter()
        .map(|s| make_windows(&impute_gaps(s, max_gap), stride))
        .collect::<Vec<_>>()
        .concat()
}

/// Raw text embedding of each window's stored summary.
pub fn embed_summaries(windows: &[CgmWindow], store: &SummaryStore, embedder: &dyn TextEmbedder) -> Result<Vec<Vec<f64>>> {
    windows
        .par_iter()
        .map(|w| embedder.embed(&store.get(w)?.text))
        .collect()
}

pub fn prepare_samples(windows: &[CgmWindow], norms: &NormTable, texts: Option<&[Vec<f64>]>) -> Result<Vec<Sample>> {
    if let Some(t) = texts {
        if t.len() != windows.len() {
            return Err(CoreError::Dimension {
                what: "text embeddings",
                expected: windows.len(),
                found: t.len(),
            });
        }
    }
    windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let stats = norms.get(&w.patient_id)?;
            Ok(Sample {
                window_ref: w.window_ref(),
                patient_id: w.patient_id.clone(),
                split: w.split,
                start_time: w.start_time,
                x: normalize(&w.x, stats)?,
                y: normalize(&w.trajectory, stats)?,
                text: texts.map(|t| t[i].clone()),
            })
        })
        .collect()
}

/// Back to mg/dL with the patient's training statistics.
pub fn to_mg_dl(values: &[f64], patient_id: &str, norms: &NormTable) -> Result<Vec<f64>> {
    denormalize(values, norms.get(patient_id)?)
}

/// Holds out the chronologically last `fraction` of every patient's samples.
pub fn split_validation(samples: Vec<Sample>, fraction: f64) -> (Vec<Sample>, Vec<Sample>) {
    let mut counts: std::collections::BTreeMap<String, usize> = Default::default();
    for s in &samples {
        *counts.entry(s.patient_id.clone()).or_default() += 1;
    }
    let mut seen: std::collections::BTreeMap<String, usize> = Default::default();
    let mut fit = Vec::new();
    let mut val = Vec::new();
    for s in samples {
        let n = counts[&s.patient_id];
        let n_val = (n as f64 * fraction).floor() as usize;
        let i = seen.entry(s.patient_id.clone()).or_default();
        if *i >= n - n_val {
            val.push(s);
        } else {
            fit.push(s);
        }
        *i += 1;
    }
    (fit, val)
}
