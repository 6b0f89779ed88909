use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CgmRecord, PatientSeries, Split, HORIZON, TARGET_STEPS, WINDOW_LEN};
use crate::context::{features_from, WindowSummaryFeatures};

/// Therapy annotations of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Therapy {
    pub carbs: f64,
    pub bolus_total: f64,
    pub bolus_food: f64,
    pub bolus_correction: f64,
    pub bolus_other: f64,
}

impl From<&CgmRecord> for Therapy {
    fn from(r: &CgmRecord) -> Self {
        Self {
            carbs: r.carbs,
            bolus_total: r.bolus_total,
            bolus_food: r.bolus_food,
            bolus_correction: r.bolus_correction,
            bolus_other: r.bolus_other,
        }
    }
}

/// 36 input readings, the 12 readings that follow, and therapy data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgmWindow {
    pub patient_id: String,
    pub split: Split,
    pub start_time: i64,
    pub x: Vec<f64>,
    pub trajectory: Vec<f64>,
    pub targets: BTreeMap<usize, f64>,
    pub therapy: Vec<Therapy>,
    pub features: WindowSummaryFeatures,
}

impl CgmWindow {
    pub fn new(patient_id: &str, split: Split, start_time: i64, x: Vec<f64>, trajectory: Vec<f64>, therapy: Vec<Therapy>) -> Self {
        assert_eq!(x.len(), WINDOW_LEN, "window input length");
        assert_eq!(trajectory.len(), HORIZON, "window horizon length");
        assert_eq!(therapy.len(), WINDOW_LEN, "window therapy length");
        let targets = TARGET_STEPS.iter().map(|&h| (h, trajectory[h - 1])).collect();
        let features = features_from(&x, &therapy);
        Self {
            patient_id: patient_id.to_string(),
            split,
            start_time,
            x,
            trajectory,
            targets,
            therapy,
            features,
        }
    }

    /// `patient@start_time`, unique within a cohort.
    pub fn window_ref(&self) -> String {
        format!("{}@{}", self.patient_id, self.start_time)
    }

    /// Reading `h` steps after the last input sample.
    pub fn target(&self, h: usize) -> f64 {
        self.trajectory[h - 1]
    }

    /// SHA-256 over the patient, start time, inputs and therapy.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.patient_id.as_bytes());
        h.update(self.start_time.to_le_bytes());
        for v in &self.x {
            h.update(v.to_le_bytes());
        }
        for t in &self.therapy {
            for v in [t.carbs, t.bolus_total, t.bolus_food, t.bolus_correction, t.bolus_other] {
                h.update(v.to_le_bytes());
            }
        }
        cgmrag_numerics::checkpoint::hex_digest(&h.finalize())
    }
}

/// Sliding windows over each imputed segment, advancing by `stride`.
pub fn make_windows(series: &PatientSeries, stride: usize) -> Vec<CgmWindow> {
    assert!(stride >= 1, "stride must be positive");
    let span = WINDOW_LEN + HORIZON;
    let mut out = Vec::new();
    for seg in &series.segments {
        let mut s = seg.start;
        while s + span <= seg.end {
            let recs = &series.records[s..s + span];
            let values: Vec<f64> = recs.iter().map(|r| r.glucose.expect("segment has glucose")).collect();
            out.push(CgmWindow::new(
                &series.patient_id,
                series.split,
                recs[0].timestamp,
                values[..WINDOW_LEN].to_vec(),
                values[WINDOW_LEN..].to_vec(),
                recs[..WINDOW_LEN].iter().map(Therapy::from).collect(),
            ));
            s += stride;
        }
    }
    out
}
