//! Per-window forecast plots: a CSV of the series and a static SVG.

use std::fmt::Write as _;
use std::path::Path;

use cgmrag::train::{ForecastRow, ForecastTable};
use cgmrag::{CoreError, Result};
use cgmrag_numerics::checkpoint::write_atomic;

const HYPO: f64 = 70.0;
const HYPER: f64 = 180.0;
const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 280.0;
const MARGIN: f64 = 40.0;

/// `minutes,reference,prediction,hypo,hyper`, one line per step.
pub fn window_csv(pred: &ForecastRow, reference: &ForecastRow) -> String {
    let mut out = String::from("minutes,reference,prediction,hypo,hyper\n");
    for (i, (r, p)) in reference.values.iter().zip(&pred.values).enumerate() {
        writeln!(out, "{},{r},{p},{HYPO},{HYPER}", 5 * (i + 1)).unwrap();
    }
    out
}

fn polyline(points: &[(f64, f64)], style: &str) -> String {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
    format!("<polyline fill=\"none\" {style} points=\"{}\"/>\n", pts.join(" "))
}

/// Reference and prediction against minutes ahead, with the 70 and 180
/// mg/dL lines dashed.
pub fn window_svg(pred: &ForecastRow, reference: &ForecastRow) -> String {
    let all = reference.values.iter().chain(&pred.values);
    let lo = all.clone().fold(HYPO, |a, &b| a.min(b)) - 10.0;
    let hi = all.fold(HYPER, |a, &b| a.max(b)) + 10.0;
    let n = reference.values.len().max(2);
    let x = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (n - 1) as f64;
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"20\" font-family=\"sans-serif\" font-size=\"12\">{} @ {}</text>\n",
        pred.patient_id, pred.start_time
    );
    for band in [HYPO, HYPER] {
        writeln!(
            svg,
            "<line x1=\"{MARGIN}\" x2=\"{:.1}\" y1=\"{1:.1}\" y2=\"{1:.1}\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>",
            WIDTH - MARGIN,
            y(band)
        )
        .unwrap();
    }
    let series = |v: &[f64]| v.iter().enumerate().map(|(i, &g)| (x(i), y(g))).collect::<Vec<_>>();
    svg += &polyline(&series(&reference.values), "stroke=\"black\" stroke-width=\"2\"");
    svg += &polyline(&series(&pred.values), "stroke=\"crimson\" stroke-width=\"2\"");
    for (i, label) in [(0, "5"), (5, "30"), (n - 1, "60")] {
        writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{label} min</text>",
            x(i),
            HEIGHT - MARGIN / 2.0
        )
        .unwrap();
    }
    svg += "</svg>\n";
    svg
}

/// Writes `max_windows` evenly spaced windows (all when 0). Returns the
/// number written.
pub fn write_plots(preds: &ForecastTable, refs: &ForecastTable, out: &Path, max_windows: usize) -> Result<usize> {
    if preds.rows.len() != refs.rows.len() {
        return Err(CoreError::Data {
            row: 0,
            message: format!("{} predictions against {} references", preds.rows.len(), refs.rows.len()),
        });
    }
    let n = preds.rows.len();
    let take = if max_windows == 0 { n } else { max_windows.min(n) };
    for j in 0..take {
        let i = if take <= 1 { 0 } else { j * (n - 1) / (take - 1) };
        let (p, r) = (&preds.rows[i], &refs.rows[i]);
        if p.patient_id != r.patient_id || p.start_time != r.start_time {
            return Err(CoreError::Data {
                row: i + 1,
                message: "prediction and reference rows do not line up".into(),
            });
        }
        let stem = format!("{}_{}", p.patient_id, p.start_time);
        write_atomic(&out.join(format!("{stem}.csv")), window_csv(p, r).as_bytes())?;
        write_atomic(&out.join(format!("{stem}.svg")), window_svg(p, r).as_bytes())?;
    }
    Ok(take)
}
