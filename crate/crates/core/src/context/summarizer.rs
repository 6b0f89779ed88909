use serde::{Deserialize, Serialize};

use super::features::{Trend, WindowSummaryFeatures};
use super::remote::{RemoteConfig, RemoteSummarizer};
use crate::error::Result;
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryBackend {
    RuleBased,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSummary {
    pub window_ref: String,
    pub text: String,
    pub backend: SummaryBackend,
    pub sentence_count: usize,
}

impl ContextSummary {
    pub fn new(window_ref: &str, text: String, backend: SummaryBackend) -> Self {
        let sentence_count = count_sentences(&text);
        Self {
            window_ref: window_ref.to_string(),
            text,
            backend,
            sentence_count,
        }
    }
}

pub fn count_sentences(text: &str) -> usize {
    text.split_terminator(['.', '!', '?'])
        .filter(|s| !s.trim().is_empty())
        .count()
}

/// Produces the textual morphology summary of one window.
pub trait Summarizer: Send + Sync {
    fn name(&self) -> &'static str;
    fn summarize(&self, window_ref: &str, features: &WindowSummaryFeatures, x: &[f64]) -> Result<ContextSummary>;
}

#[derive(Debug, Clone, Default)]
pub struct SummarizerConfig {
    pub remote: RemoteConfig,
}

/// `rule` and `remote`.
pub fn summarizer_registry() -> Registry<dyn Summarizer, SummarizerConfig> {
    let mut r: Registry<dyn Summarizer, SummarizerConfig> = Registry::new("summarizer");
    r.register("rule", |_| Ok(Box::new(RuleSummarizer)));
    r.register("remote", |cfg| Ok(Box::new(RemoteSummarizer::new(cfg.remote.clone())?)));
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TirBand {
    Mostly,
    Partly,
    Rarely,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlopeBand {
    Gentle,
    Moderate,
    Steep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Risk {
    Hypo,
    Hyper,
    Low,
}

/// Which therapy was recorded in the last 30 minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TherapyFlags {
    pub carbs: bool,
    pub food_bolus: bool,
    pub correction: bool,
    pub other_bolus: bool,
}

impl TherapyFlags {
    pub fn any(&self) -> bool {
        self.carbs || self.food_bolus || self.correction || self.other_bolus
    }

    fn insulin(&self) -> bool {
        self.food_bolus || self.correction || self.other_bolus
    }
}

/// One row of the rule summarizer's decision table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RuleRow {
    pub trend: Trend,
    pub tir: TirBand,
    pub slope: SlopeBand,
    pub risk: Risk,
    pub therapy: TherapyFlags,
}

impl RuleRow {
    pub fn classify(f: &WindowSummaryFeatures, x: &[f64]) -> Self {
        let tir = if f.tir_window >= 70.0 {
            TirBand::Mostly
        } else if f.tir_window >= 30.0 {
            TirBand::Partly
        } else {
            TirBand::Rarely
        };
        let max_step = x.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        let slope = if max_step > 10.0 {
            SlopeBand::Steep
        } else if max_step >= 5.0 {
            SlopeBand::Moderate
        } else {
            SlopeBand::Gentle
        };
        let risk = if f.current_bgl < 90.0 && f.trend == Trend::Falling {
            Risk::Hypo
        } else if f.current_bgl > 200.0 && f.trend == Trend::Rising {
            Risk::Hyper
        } else {
            Risk::Low
        };
        Self {
            trend: f.trend,
            tir,
            slope,
            risk,
            therapy: TherapyFlags {
                carbs: f.carbs_30min > 0.0,
                food_bolus: f.bolus_food_30min > 0.0,
                correction: f.bolus_correction_30min > 0.0,
                other_bolus: f.bolus_other_30min > 0.0,
            },
        }
    }

    pub fn sentences(&self) -> Vec<String> {
        let trend = match self.trend {
            Trend::Rising => "rising",
            Trend::Falling => "falling",
            Trend::Stable => "stable",
        };
        let slope = match self.slope {
            SlopeBand::Gentle => "gentle",
            SlopeBand::Moderate => "moderate",
            SlopeBand::Steep => "steep",
        };
        let tir = match self.tir {
            TirBand::Mostly => "mostly within the target range",
            TirBand::Partly => "only partly within the target range",
            TirBand::Rarely => "largely outside the target range",
        };
        let mut out = vec![format!(
            "Over the past three hours glucose has been {trend} with {slope} swings and stayed {tir}."
        )];

        let t = self.therapy;
        if t.any() {
            let impact = match (t.carbs, t.food_bolus, t.correction, t.other_bolus) {
                (true, true, true, _) => "A covered meal and a correction bolus in the last half hour are both shaping the current course.",
                (true, true, false, _) => "A recent meal covered by a food bolus is driving the current course.",
                (true, false, true, _) => "Recent carbohydrates are being offset by a correction bolus.",
                (true, false, false, true) => "Recent carbohydrates arrived with only a small unplanned insulin dose.",
                (true, false, false, false) => "Recent carbohydrates without matching insulin are pushing glucose upward.",
                (false, _, true, _) => "A recent correction bolus is acting to bring glucose down.",
                (false, true, false, _) => "A food bolus without recorded carbohydrates is pulling glucose lower.",
                (false, false, false, _) => "Recent unplanned insulin delivery is acting to lower glucose.",
            };
            out.push(impact.to_string());
        }

        let carbs_only = t.carbs && !t.insulin();
        let insulin_only = t.insulin() && !t.carbs;
        let direction = match (self.trend, carbs_only, insulin_only) {
            (Trend::Rising, _, true) => "Glucose is likely to level off and then ease lower over the next hour.",
            (Trend::Rising, _, false) => "Glucose is likely to keep rising over the next hour.",
            (Trend::Falling, true, _) => "Glucose is likely to stabilize as the carbohydrates are absorbed.",
            (Trend::Falling, false, _) => "Glucose is likely to keep falling over the next hour.",
            (Trend::Stable, true, _) => "Glucose is likely to rise over the next hour.",
            (Trend::Stable, false, true) => "Glucose is likely to drift lower over the next hour.",
            (Trend::Stable, false, false) => "Glucose is likely to remain stable over the next hour.",
        };
        out.push(direction.to_string());

        out.push(
            match self.risk {
                Risk::Hypo => "There is a risk of hypoglycemia if the decline continues.",
                Risk::Hyper => "There is a risk of sustained hyperglycemia.",
                Risk::Low => "The near-term risk of hypoglycemia or hyperglycemia appears low.",
            }
            .to_string(),
        );

        if t.any() {
            let note = match (t.carbs, t.insulin()) {
                (true, true) => "Insulin on board and the remaining carbohydrate effect should both be weighed before further dosing.",
                (false, true) => "Insulin on board should be considered before any further dosing.",
                _ => "Unabsorbed carbohydrates may continue to raise glucose in the coming hour.",
            };
            out.push(note.to_string());
        }
        out
    }

    pub fn render(&self) -> String {
        self.sentences().join(" ")
    }
}

/// Deterministic summarizer driven by [`RuleRow`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleSummarizer;

pub fn summarize_rule_based(window_ref: &str, features: &WindowSummaryFeatures, x: &[f64]) -> ContextSummary {
    ContextSummary::new(window_ref, RuleRow::classify(features, x).render(), SummaryBackend::RuleBased)
}

impl Summarizer for RuleSummarizer {
    fn name(&self) -> &'static str {
        "rule"
    }

    fn summarize(&self, window_ref: &str, features: &WindowSummaryFeatures, x: &[f64]) -> Result<ContextSummary> {
        Ok(summarize_rule_based(window_ref, features, x))
    }
}
