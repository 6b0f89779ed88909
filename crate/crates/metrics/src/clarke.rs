//! Clarke error grid.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};
use crate::series::PairedSeries;
use crate::table::DecisionTable;

pub const CLARKE_TABLE_CSV: &str = include_str!("../data/clarke_zones.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClarkeZone {
    A,
    B,
    C,
    D,
    E,
}

impl ClarkeZone {
    pub const ALL: [ClarkeZone; 5] = [ClarkeZone::A, ClarkeZone::B, ClarkeZone::C, ClarkeZone::D, ClarkeZone::E];

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|z| z.to_string() == label)
    }
}

impl fmt::Display for ClarkeZone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ClarkeZone::A => "A",
            ClarkeZone::B => "B",
            ClarkeZone::C => "C",
            ClarkeZone::D => "D",
            ClarkeZone::E => "E",
        };
        f.write_str(s)
    }
}

/// The shipped Clarke table over variables `(ref, pred)`.
pub fn clarke_table() -> &'static DecisionTable {
    static TABLE: OnceLock<DecisionTable> = OnceLock::new();
    TABLE.get_or_init(|| DecisionTable::parse(CLARKE_TABLE_CSV, &["ref", "pred"]).expect("bundled Clarke table"))
}

fn check_positive(reference: f64, predicted: f64) -> Result<()> {
    if reference > 0.0 && predicted > 0.0 && reference.is_finite() && predicted.is_finite() {
        Ok(())
    } else {
        Err(MetricsError::NonPositive { reference, predicted })
    }
}

/// Clarke zone by direct evaluation of the decision table.
pub fn clarke_zone_table(reference: f64, predicted: f64) -> Result<ClarkeZone> {
    check_positive(reference, predicted)?;
    let label = clarke_table().classify(&[reference, predicted])?;
    Ok(ClarkeZone::from_label(label).expect("table zones are A-E"))
}

/// Clarke zone of one (reference, prediction) pair in mg/dL.
pub fn clarke_zone(reference: f64, predicted: f64) -> Result<ClarkeZone> {
    check_positive(reference, predicted)?;
    let (r, p) = (reference, predicted);
    let zone = if (r < 70.0 && p < 70.0) || (p >= 0.8 * r && p <= 1.2 * r) {
        ClarkeZone::A
    } else if (r >= 180.0 && p <= 70.0) || (r <= 70.0 && p >= 180.0) {
        ClarkeZone::E
    } else if (r > 70.0 && r < 290.0 && p >= r + 110.0) || (r > 130.0 && r < 180.0 && p < 1.4 * r - 182.0) {
        ClarkeZone::C
    } else if (r > 240.0 && p > 70.0 && p <= 180.0) || (r < 70.0 && p >= 70.0 && p < 180.0) {
        ClarkeZone::D
    } else {
        ClarkeZone::B
    };
    Ok(zone)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarkeReport {
    pub n: usize,
    pub zone_percent: BTreeMap<ClarkeZone, f64>,
}

impl ClarkeReport {
    pub fn percent(&self, zone: ClarkeZone) -> f64 {
        self.zone_percent.get(&zone).copied().unwrap_or(0.0)
    }

    /// Share of points in zones A and B.
    pub fn a_plus_b(&self) -> f64 {
        self.percent(ClarkeZone::A) + self.percent(ClarkeZone::B)
    }
}

pub fn clarke_report(p: &PairedSeries) -> ClarkeReport {
    let mut counts = [0usize; 5];
    for (r, y) in p.pairs() {
        let z = clarke_zone(r, y).expect("guard band keeps values positive");
        counts[z as usize] += 1;
    }
    let n = p.len();
    let zone_percent = ClarkeZone::ALL
        .into_iter()
        .map(|z| (z, 100.0 * counts[z as usize] as f64 / n as f64))
        .collect();
    ClarkeReport { n, zone_percent }
}
