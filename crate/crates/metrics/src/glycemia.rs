use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};
use crate::series::{GlycemiaBands, PairedSeries};

/// Percent of readings inside the inclusive range [70, 180] mg/dL.
pub fn tir(series: &[f64]) -> Result<f64> {
    if series.is_empty() {
        return Err(MetricsError::Empty);
    }
    let bands = GlycemiaBands::default();
    let inside = series.iter().filter(|v| bands.in_range(**v)).count();
    Ok(100.0 * inside as f64 / series.len() as f64)
}

/// `|TIR(reference) - TIR(prediction)|` in percentage points.
pub fn tir_deviation(reference: &[f64], predicted: &[f64]) -> Result<f64> {
    Ok((tir(reference)? - tir(predicted)?).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventBand {
    Hypo,
    Hyper,
}

/// Pointwise sensitivity. `percent` is `None` when the reference has no
/// points in the band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub percent: Option<f64>,
    pub positives: usize,
    pub detected: usize,
}

pub fn event_sensitivity(p: &PairedSeries, band: EventBand) -> Sensitivity {
    let bands = GlycemiaBands::default();
    let inside = |v: f64| match band {
        EventBand::Hypo => v <= bands.hypo_threshold,
        EventBand::Hyper => v >= bands.hyper_threshold,
    };
    let (mut positives, mut detected) = (0, 0);
    for (r, y) in p.pairs() {
        if inside(r) {
            positives += 1;
            if inside(y) {
                detected += 1;
            }
        }
    }
    Sensitivity {
        percent: (positives > 0).then(|| 100.0 * detected as f64 / positives as f64),
        positives,
        detected,
    }
}
