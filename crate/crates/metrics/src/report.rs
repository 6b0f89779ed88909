use serde::{Deserialize, Serialize};

use crate::cgega::{cg_ega_runs, CgEgaReport};
use crate::clarke::{clarke_report, ClarkeReport};
use crate::error::Result;
use crate::glycemia::{event_sensitivity, tir_deviation, EventBand, Sensitivity};
use crate::regression::{mae, pearson, rmse};
use crate::series::PairedSeries;

/// Every metric for one set of paired points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub n: usize,
    pub rmse: f64,
    pub mae: f64,
    pub pearson: Option<f64>,
    pub clarke: ClarkeReport,
    pub cg_ega: Option<CgEgaReport>,
    pub tir_dev: f64,
    pub sens_hypo: Sensitivity,
    pub sens_hyper: Sensitivity,
}

impl MetricSet {
    /// Pools contiguous runs. Pointwise metrics use the concatenation, CG-EGA
    /// uses each run separately and is `None` if no run has two points.
    pub fn from_runs(runs: &[PairedSeries]) -> Result<Self> {
        let all = PairedSeries::concat(runs)?;
        Ok(Self {
            n: all.len(),
            rmse: rmse(&all),
            mae: mae(&all),
            pearson: pearson(&all),
            clarke: clarke_report(&all),
            cg_ega: cg_ega_runs(runs).ok(),
            tir_dev: tir_deviation(all.reference(), all.predicted())?,
            sens_hypo: event_sensitivity(&all, EventBand::Hypo),
            sens_hyper: event_sensitivity(&all, EventBand::Hyper),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientMetrics {
    pub patient_id: String,
    #[serde(flatten)]
    pub metrics: MetricSet,
}

/// Metrics at one prediction horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonReport {
    pub horizon_min: u32,
    pub per_patient: Vec<PatientMetrics>,
    pub pooled: MetricSet,
}
