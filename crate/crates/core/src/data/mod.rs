//! CGM records, gap imputation, sliding windows, per-patient normalization
//! and a synthetic cohort generator.

mod impute;
mod ingest;
mod norm;
mod synth;
mod window;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use impute::{impute_gaps, DEFAULT_MAX_GAP};
pub use ingest::{ingest_csv, ingest_reader, write_csv, CSV_HEADER};
pub use norm::{denormalize, fit_norm, normalize, NormStats, NormTable};
pub use synth::{generate_synthetic_cohort, split_by_days, SynthConfig, SYNTH_BASE_EPOCH};
pub use window::{make_windows, CgmWindow, Therapy};

/// Input samples per window (3 hours).
pub const WINDOW_LEN: usize = 36;
/// Future samples per window (1 hour).
pub const HORIZON: usize = 12;
/// Evaluated horizons in steps: 5, 30 and 60 minutes.
pub const TARGET_STEPS: [usize; 3] = [1, 6, 12];
/// CGM sampling interval in seconds.
pub const SAMPLE_INTERVAL_S: i64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceMode {
    Regular,
    Sleep,
    Exercise,
    #[default]
    Unknown,
}

impl DeviceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceMode::Regular => "regular",
            DeviceMode::Sleep => "sleep",
            DeviceMode::Exercise => "exercise",
            DeviceMode::Unknown => "unknown",
        }
    }
}

impl FromStr for DeviceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "" | "unknown" => Ok(DeviceMode::Unknown),
            "regular" => Ok(DeviceMode::Regular),
            "sleep" => Ok(DeviceMode::Sleep),
            "exercise" => Ok(DeviceMode::Exercise),
            other => Err(format!("unknown device mode `{other}`")),
        }
    }
}

/// One CGM reading with therapy annotations. `glucose` is `None` for a
/// missing reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgmRecord {
    pub timestamp: i64,
    pub glucose: Option<f64>,
    pub carbs: f64,
    pub bolus_total: f64,
    pub bolus_food: f64,
    pub bolus_correction: f64,
    pub bolus_other: f64,
    pub device_mode: DeviceMode,
}

impl CgmRecord {
    pub fn reading(timestamp: i64, glucose: f64) -> Self {
        Self {
            timestamp,
            glucose: Some(glucose),
            ..Self::missing(timestamp)
        }
    }

    pub fn missing(timestamp: i64) -> Self {
        Self {
            timestamp,
            glucose: None,
            carbs: 0.0,
            bolus_total: 0.0,
            bolus_food: 0.0,
            bolus_correction: 0.0,
            bolus_other: 0.0,
            device_mode: DeviceMode::Unknown,
        }
    }
}

/// All records of one patient in one split. After [`impute_gaps`] the
/// records lie on a 300 s grid and `segments` lists the index ranges with
/// complete glucose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSeries {
    pub patient_id: String,
    pub split: Split,
    pub records: Vec<CgmRecord>,
    pub segments: Vec<Range<usize>>,
    pub norm_stats: Option<NormStats>,
}

impl PatientSeries {
    pub fn new(patient_id: impl Into<String>, split: Split, records: Vec<CgmRecord>) -> Self {
        Self {
            patient_id: patient_id.into(),
            split,
            records,
            segments: Vec::new(),
            norm_stats: None,
        }
    }

    pub fn glucose_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().filter_map(|r| r.glucose)
    }
}
