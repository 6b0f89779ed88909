use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{CgmWindow, Therapy};

/// Change over the last 30 minutes that counts as rising or falling, mg/dL.
pub const TREND_THRESHOLD: f64 = 10.0;
/// Samples in the 30-minute summary span.
pub const SUMMARY_SPAN: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Rising,
    Falling,
    Stable,
}

impl Trend {
    pub const ALL: [Trend; 3] = [Trend::Rising, Trend::Falling, Trend::Stable];

    pub fn as_str(self) -> &'static str {
        match self {
            Trend::Rising => "rising",
            Trend::Falling => "falling",
            Trend::Stable => "stable",
        }
    }
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSummaryFeatures {
    pub carbs_30min: f64,
    pub bolus_total_30min: f64,
    pub bolus_food_30min: f64,
    pub bolus_correction_30min: f64,
    pub bolus_other_30min: f64,
    pub current_bgl: f64,
    pub tir_window: f64,
    pub trend: Trend,
}

impl WindowSummaryFeatures {
    pub fn therapy_present(&self) -> bool {
        self.carbs_30min > 0.0 || self.bolus_total_30min > 0.0
    }
}

pub fn features_from(x: &[f64], therapy: &[Therapy]) -> WindowSummaryFeatures {
    let n = x.len();
    let tail = &therapy[therapy.len().saturating_sub(SUMMARY_SPAN)..];
    let sum = |f: fn(&Therapy) -> f64| tail.iter().map(f).sum::<f64>();
    let delta = x[n - 1] - x[n.saturating_sub(SUMMARY_SPAN + 1)];
    let trend = if delta > TREND_THRESHOLD {
        Trend::Rising
    } else if delta < -TREND_THRESHOLD {
        Trend::Falling
    } else {
        Trend::Stable
    };
    let in_range = x.iter().filter(|v| (70.0..=180.0).contains(*v)).count();
    WindowSummaryFeatures {
        carbs_30min: sum(|t| t.carbs),
        bolus_total_30min: sum(|t| t.bolus_total),
        bolus_food_30min: sum(|t| t.bolus_food),
        bolus_correction_30min: sum(|t| t.bolus_correction),
        bolus_other_30min: sum(|t| t.bolus_other),
        current_bgl: x[n - 1],
        tir_window: 100.0 * in_range as f64 / n as f64,
        trend,
    }
}

pub fn extract_prompt_features(window: &CgmWindow) -> WindowSummaryFeatures {
    features_from(&window.x, &window.therapy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::WINDOW_LEN;

    fn run(x: &[f64], therapy: &[Therapy]) -> WindowSummaryFeatures {
        features_from(x, therapy)
    }

    #[test]
    fn flat_window() {
        let f = run(&[120.0; WINDOW_LEN], &[Therapy::default(); WINDOW_LEN]);
        assert_eq!(f.trend, Trend::Stable);
        assert_eq!(f.tir_window, 100.0);
        assert_eq!(f.carbs_30min, 0.0);
        assert!(!f.therapy_present());
    }

    #[test]
    fn trend_uses_thirty_minute_lookback() {
        let mut x = [100.0; WINDOW_LEN];
        x[35] = 140.0;
        assert_eq!(run(&x, &[Therapy::default(); WINDOW_LEN]).trend, Trend::Rising);
        x[35] = 110.0;
        assert_eq!(run(&x, &[Therapy::default(); WINDOW_LEN]).trend, Trend::Stable);
        x[35] = 89.0;
        assert_eq!(run(&x, &[Therapy::default(); WINDOW_LEN]).trend, Trend::Falling);
        x[29] = 200.0;
        x[35] = 100.0;
        assert_eq!(run(&x, &[Therapy::default(); WINDOW_LEN]).trend, Trend::Falling);
    }

    #[test]
    fn sums_only_last_six_samples() {
        let mut t = [Therapy::default(); WINDOW_LEN];
        t[29].carbs = 50.0;
        t[31].carbs = 20.0;
        t[34].carbs = 15.0;
        t[33].bolus_correction = 1.5;
        t[33].bolus_total = 1.5;
        let f = run(&[120.0; WINDOW_LEN], &t);
        assert_eq!(f.carbs_30min, 35.0);
        assert_eq!(f.bolus_correction_30min, 1.5);
        assert!(f.therapy_present());
    }

    #[test]
    fn tir_counts_inclusive_bounds() {
        let mut x = [100.0; WINDOW_LEN];
        x[0] = 70.0;
        x[1] = 180.0;
        x[2] = 181.0;
        x[3] = 69.0;
        let f = run(&x, &[Therapy::default(); WINDOW_LEN]);
        assert!((f.tir_window - 100.0 * 34.0 / 36.0).abs() < 1e-12);
    }
}
