//! Forecast tables on disk and the metrics computed from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use cgmrag_metrics::{ClarkeZone, GlycemicBand, HorizonReport, MetricSet, PairedSeries, PatientMetrics};
use cgmrag_numerics::checkpoint::write_atomic;
use serde::{Deserialize, Serialize};

use crate::data::{SAMPLE_INTERVAL_S, TARGET_STEPS};
use crate::error::{CoreError, Result};

/// One window's 12-step values in mg/dL.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub patient_id: String,
    pub start_time: i64,
    pub values: Vec<f64>,
}

/// Rows in patient, then start-time order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForecastTable {
    pub rows: Vec<ForecastRow>,
}

impl ForecastTable {
    pub fn horizon(&self) -> usize {
        self.rows.first().map_or(0, |r| r.values.len())
    }

    pub fn to_csv(&self) -> String {
        let h = self.horizon();
        let mut out = String::from("patient_id,start_time");
        for i in 1..=h {
            write!(out, ",step_{i}").unwrap();
        }
        out.push('\n');
        for r in &self.rows {
            write!(out, "{},{}", r.patient_id, r.start_time).unwrap();
            for v in &r.values {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(CoreError::MissingArtifact(path.to_path_buf()));
        }
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "patient_id" || &headers[1] != "start_time" {
            return Err(CoreError::MissingColumn("patient_id,start_time,step_1..".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let bad = |message: String| CoreError::Data { row: i + 1, message };
            let start_time = rec[1].parse::<i64>().map_err(|e| bad(format!("start_time: {e}")))?;
            let values = (2..rec.len())
                .map(|c| {
                    rec[c]
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| bad(format!("column {}: not a number", &headers[c])))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(ForecastRow {
                patient_id: rec[0].to_string(),
                start_time,
                values,
            });
        }
        Ok(Self { rows })
    }
}

/// Metrics at 5, 30 and 60 minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub horizons: Vec<HorizonReport>,
}

impl EvaluationReport {
    pub fn horizon(&self, minutes: u32) -> Option<&HorizonReport> {
        self.horizons.iter().find(|h| h.horizon_min == minutes)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "horizon_min,patient_id,n,rmse,mae,pearson,clarke_a,clarke_b,clarke_c,clarke_d,clarke_e,\
             ap_hypo,be_hypo,ep_hypo,ap_eu,be_eu,ep_eu,ap_hyper,be_hyper,ep_hyper,tir_dev,sens_hypo,sens_hyper\n",
        );
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for h in &self.horizons {
            let rows = h
                .per_patient
                .iter()
                .map(|p| (p.patient_id.as_str(), &p.metrics))
                .chain([("pooled", &h.pooled)]);
            for (id, m) in rows {
                write!(out, "{},{id},{},{},{},{}", h.horizon_min, m.n, m.rmse, m.mae, opt(m.pearson)).unwrap();
                for z in [ClarkeZone::A, ClarkeZone::B, ClarkeZone::C, ClarkeZone::D, ClarkeZone::E] {
                    write!(out, ",{}", m.clarke.percent(z)).unwrap();
                }
                for band in GlycemicBand::ALL {
                    let r = m.cg_ega.as_ref().and_then(|c| c.band(band));
                    write!(
                        out,
                        ",{},{},{}",
                        opt(r.map(|r| r.ap)),
                        opt(r.map(|r| r.be)),
                        opt(r.map(|r| r.ep))
                    )
                    .unwrap();
                }
                writeln!(out, ",{},{},{}", m.tir_dev, opt(m.sens_hypo.percent), opt(m.sens_hyper.percent)).unwrap();
            }
        }
        out
    }

    /// `report.json` and `report.csv` in `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("report.json"), self.to_json().as_bytes())?;
        write_atomic(&dir.join("report.csv"), self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Consecutive windows (5 minutes apart) of one patient form a run.
fn runs_for(rows: &[(&ForecastRow, &ForecastRow)], step: usize) -> Result<Vec<PairedSeries>> {
    let mut runs = Vec::new();
    let mut refs = Vec::new();
    let mut preds = Vec::new();
    let mut last: Option<i64> = None;
    for (p, r) in rows {
        if last.is_some_and(|t| r.start_time - t != SAMPLE_INTERVAL_S) && !refs.is_empty() {
            runs.push(PairedSeries::new(std::mem::take(&mut refs), std::mem::take(&mut preds))?);
        }
        refs.push(r.values[step - 1]);
        preds.push(p.values[step - 1]);
        last = Some(r.start_time);
    }
    if !refs.is_empty() {
        runs.push(PairedSeries::new(refs, preds)?);
    }
    Ok(runs)
}

/// Per-patient and pooled metrics for predictions against references.
/// Both tables must list the same windows in the same order.
pub fn evaluate_tables(predictions: &ForecastTable, references: &ForecastTable) -> Result<EvaluationReport> {
    if predictions.rows.len() != references.rows.len() || predictions.rows.is_empty() {
        return Err(CoreError::Data {
            row: 0,
            message: format!(
                "{} prediction rows against {} reference rows",
                predictions.rows.len(),
                references.rows.len()
            ),
        });
    }
    let horizon = references.horizon();
    let mut by_patient: BTreeMap<&str, Vec<(&ForecastRow, &ForecastRow)>> = BTreeMap::new();
    for (i, (p, r)) in predictions.rows.iter().zip(&references.rows).enumerate() {
        if p.patient_id != r.patient_id || p.start_time != r.start_time || p.values.len() != r.values.len() || r.values.len() != horizon {
            return Err(CoreError::Data {
                row: i + 1,
                message: format!("prediction {}@{} does not line up with its reference", p.patient_id, p.start_time),
            });
        }
        by_patient.entry(&p.patient_id).or_default().push((p, r));
    }
    for rows in by_patient.values_mut() {
        rows.sort_by_key(|(_, r)| r.start_time);
    }
    let mut horizons = Vec::new();
    for &step in TARGET_STEPS.iter().filter(|&&s| s <= horizon) {
        let mut pooled = Vec::new();
        let mut per_patient = Vec::new();
        for (id, rows) in &by_patient {
            let runs = runs_for(rows, step)?;
            per_patient.push(PatientMetrics {
                patient_id: id.to_string(),
                metrics: MetricSet::from_runs(&runs)?,
            });
            pooled.extend(runs);
        }
        horizons.push(HorizonReport {
            horizon_min: (step as i64 * SAMPLE_INTERVAL_S / 60) as u32,
            per_patient,
            pooled: MetricSet::from_runs(&pooled)?,
        });
    }
    Ok(EvaluationReport { horizons })
}
