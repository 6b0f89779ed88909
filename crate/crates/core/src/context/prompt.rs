use super::features::WindowSummaryFeatures;

pub const SYSTEM_ROLE: &str = "You are a medical assistant specializing in diabetes management and glucose monitoring. Your job is to analyze time-series glucose data along with carbohydrate intake and insulin delivery information to predict future trends and assist in managing the patient's blood sugar levels.";

pub const USER_TASK: &str = "Your task is to analyze glucose level readings recorded at 5-minute intervals over the last 3 hours, along with associated carbohydrate intake and insulin administration data.";

pub const OUTPUT_REQUIREMENTS: &str = "Based on this comprehensive data including glucose readings, carbohydrate intake, and insulin delivery patterns, write a concise medical summary that analyzes the patient's blood sugar trends and forecasts the likely trend for the next 60 minutes (twelve readings). Your report should be limited to five sentences, describing: Past glucose trends, The impact of recent carbohydrate intake and insulin administration, Predicted future direction (e.g., likely to rise, fall, or stabilize), Potential health impacts (e.g., risk of hypoglycemia or hyperglycemia), Brief consideration of insulin-on-board and carbohydrate effects.";

pub const QUALITATIVE_NOTE: &str = "Use qualitative descriptions rather than exact numerical values in the summary.";

/// Two-message chat prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    /// Both parts as one document.
    pub fn render(&self) -> String {
        format!("System Role: {}\n\n{}", self.system, self.user)
    }
}

/// Shortest decimal that round-trips, without a trailing `.0`.
fn num(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v}")
}

pub fn data_summary(f: &WindowSummaryFeatures) -> String {
    format!(
        "Carbohydrate Intake: {} g, Total Insulin Bolus: {} U, Food Bolus: {} U, Correction Bolus: {} U, Other Bolus: {} U, Current BGL: {} mg/dL, Time In Range: {}%, Trend: {}",
        num(f.carbs_30min),
        num(f.bolus_total_30min),
        num(f.bolus_food_30min),
        num(f.bolus_correction_30min),
        num(f.bolus_other_30min),
        num(f.current_bgl),
        num((f.tir_window * 10.0).round() / 10.0),
        f.trend,
    )
}

pub fn build_prompt(features: &WindowSummaryFeatures, x: &[f64]) -> Prompt {
    let history: Vec<String> = x.iter().map(|v| num(*v)).collect();
    let user = format!(
        "User Task: {USER_TASK}\n\nData Summary in last 30 minutes: {}\n\nHistorical CGM values: {}\n\nOutput Requirements: {OUTPUT_REQUIREMENTS}\n\n{QUALITATIVE_NOTE}",
        data_summary(features),
        history.join("|"),
    );
    Prompt {
        system: SYSTEM_ROLE.to_string(),
        user,
    }
}
