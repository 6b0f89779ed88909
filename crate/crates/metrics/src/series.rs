use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};

/// Seconds between consecutive CGM readings.
pub const CGM_INTERVAL_S: f64 = 300.0;

const GUARD_LOW: f64 = 1.0;
const GUARD_HIGH: f64 = 1000.0;

/// Reference and predicted glucose in mg/dL, aligned point by point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSeries {
    reference: Vec<f64>,
    predicted: Vec<f64>,
    interval_s: f64,
}

impl PairedSeries {
    pub fn new(reference: Vec<f64>, predicted: Vec<f64>) -> Result<Self> {
        Self::with_interval(reference, predicted, CGM_INTERVAL_S)
    }

    pub fn with_interval(reference: Vec<f64>, predicted: Vec<f64>, interval_s: f64) -> Result<Self> {
        if reference.len() != predicted.len() {
            return Err(MetricsError::LengthMismatch {
                reference: reference.len(),
                predicted: predicted.len(),
            });
        }
        if reference.is_empty() {
            return Err(MetricsError::Empty);
        }
        if !(interval_s > 0.0 && interval_s.is_finite()) {
            return Err(MetricsError::Interval(interval_s));
        }
        for (index, &value) in reference.iter().chain(&predicted).enumerate() {
            if !(GUARD_LOW..=GUARD_HIGH).contains(&value) {
                return Err(MetricsError::OutOfGuardBand {
                    index: index % reference.len(),
                    value,
                });
            }
        }
        Ok(Self {
            reference,
            predicted,
            interval_s,
        })
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }

    pub fn interval_s(&self) -> f64 {
        self.interval_s
    }

    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.reference.iter().copied().zip(self.predicted.iter().copied())
    }

    /// Concatenates several series point-wise. Rates are not meaningful
    /// across the joins, so CG-EGA should be run on the parts instead.
    pub fn concat(parts: &[PairedSeries]) -> Result<Self> {
        let reference: Vec<f64> = parts.iter().flat_map(|p| p.reference.iter().copied()).collect();
        let predicted: Vec<f64> = parts.iter().flat_map(|p| p.predicted.iter().copied()).collect();
        let interval = parts.first().map_or(CGM_INTERVAL_S, |p| p.interval_s);
        Self::with_interval(reference, predicted, interval)
    }
}

/// Glycemic thresholds in mg/dL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlycemiaBands {
    pub hypo_threshold: f64,
    pub hyper_threshold: f64,
    pub tir_low: f64,
    pub tir_high: f64,
}

impl Default for GlycemiaBands {
    fn default() -> Self {
        Self {
            hypo_threshold: 70.0,
            hyper_threshold: 180.0,
            tir_low: 70.0,
            tir_high: 180.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlycemicBand {
    Hypo,
    Eu,
    Hyper,
}

impl GlycemicBand {
    pub const ALL: [GlycemicBand; 3] = [GlycemicBand::Hypo, GlycemicBand::Eu, GlycemicBand::Hyper];

    pub fn name(self) -> &'static str {
        match self {
            GlycemicBand::Hypo => "hypo",
            GlycemicBand::Eu => "eu",
            GlycemicBand::Hyper => "hyper",
        }
    }
}

impl GlycemiaBands {
    /// `<= hypo` is hypo, `>= hyper` is hyper, anything between is eu.
    pub fn band_of(&self, value: f64) -> GlycemicBand {
        if value <= self.hypo_threshold {
            GlycemicBand::Hypo
        } else if value >= self.hyper_threshold {
            GlycemicBand::Hyper
        } else {
            GlycemicBand::Eu
        }
    }

    pub fn in_range(&self, value: f64) -> bool {
        value >= self.tir_low && value <= self.tir_high
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_lengths_and_guard_band() {
        assert_eq!(PairedSeries::new(vec![], vec![]), Err(MetricsError::Empty));
        assert!(matches!(
            PairedSeries::new(vec![100.0], vec![100.0, 90.0]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            PairedSeries::new(vec![100.0, 0.5], vec![100.0, 90.0]),
            Err(MetricsError::OutOfGuardBand { index: 1, .. })
        ));
        assert!(matches!(
            PairedSeries::new(vec![100.0], vec![f64::NAN]),
            Err(MetricsError::OutOfGuardBand { index: 0, .. })
        ));
        assert!(PairedSeries::new(vec![1.0, 1000.0], vec![1000.0, 1.0]).is_ok());
    }

    #[test]
    fn band_edges() {
        let b = GlycemiaBands::default();
        assert_eq!(b.band_of(70.0), GlycemicBand::Hypo);
        assert_eq!(b.band_of(70.5), GlycemicBand::Eu);
        assert_eq!(b.band_of(179.9), GlycemicBand::Eu);
        assert_eq!(b.band_of(180.0), GlycemicBand::Hyper);
        assert!(b.in_range(70.0) && b.in_range(180.0) && !b.in_range(180.1));
    }
}
