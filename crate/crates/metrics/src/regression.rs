use crate::series::PairedSeries;

pub fn rmse(p: &PairedSeries) -> f64 {
    let sse: f64 = p.pairs().map(|(r, y)| (y - r) * (y - r)).sum();
    (sse / p.len() as f64).sqrt()
}

pub fn mae(p: &PairedSeries) -> f64 {
    p.pairs().map(|(r, y)| (y - r).abs()).sum::<f64>() / p.len() as f64
}

/// Pearson correlation between reference and prediction. `None` when either
/// series is constant.
pub fn pearson(p: &PairedSeries) -> Option<f64> {
    let n = p.len() as f64;
    let mean_r = p.reference().iter().sum::<f64>() / n;
    let mean_y = p.predicted().iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (r, y) in p.pairs() {
        let (dr, dy) = (r - mean_r, y - mean_y);
        sxy += dr * dy;
        sxx += dr * dr;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
