//! Forecast accuracy metrics for CGM predictions.
//!
//! Regression scores (RMSE, MAE, Pearson r), the Clarke error grid, the
//! continuous glucose error grid (CG-EGA), time in range and pointwise
//! dysglycemia sensitivity. Grid boundaries are loaded from the CSV decision
//! tables under `data/`, see [`table`] for the grammar.

pub mod cgega;
pub mod clarke;
mod error;
pub mod glycemia;
pub mod regression;
pub mod report;
mod series;
pub mod table;

pub use cgega::{cg_ega, cg_ega_points, cg_ega_runs, BandRates, CgEgaClass, CgEgaPoint, CgEgaReport};
pub use clarke::{clarke_report, clarke_zone, ClarkeReport, ClarkeZone};
pub use error::{MetricsError, Result};
pub use glycemia::{event_sensitivity, tir, tir_deviation, EventBand, Sensitivity};
pub use regression::{mae, pearson, rmse};
pub use report::{HorizonReport, MetricSet, PatientMetrics};
pub use series::{GlycemiaBands, GlycemicBand, PairedSeries, CGM_INTERVAL_S};
