//! Continuous glucose error grid analysis.
//!
//! Each point after the first of a contiguous run gets a point zone from the
//! P-EGA table and a rate zone from the R-EGA table. Rates are differences of
//! consecutive readings in mg/dL/min. The P-EGA boundaries widen with the
//! reference rate: by 10 mg/dL when `1 <= |rate| <= 2` and by 20 mg/dL above
//! that, on the upper edges (`up`) when glucose falls and on the lower edges
//! (`lo`) when it rises. The (band, P-zone, R-zone) triple is looked up in the
//! combination matrix to give AP, BE or EP.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};
use crate::series::{GlycemiaBands, GlycemicBand, PairedSeries};
use crate::table::DecisionTable;

pub const PEGA_TABLE_CSV: &str = include_str!("../data/pega_zones.csv");
pub const REGA_TABLE_CSV: &str = include_str!("../data/rega_zones.csv");
pub const CGEGA_MATRIX_CSV: &str = include_str!("../data/cgega_matrix.csv");

pub const P_ZONES: [&str; 5] = ["A", "B", "C", "D", "E"];
pub const R_ZONES: [&str; 8] = ["A", "B", "uC", "lC", "uD", "lD", "uE", "lE"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CgEgaClass {
    AP,
    BE,
    EP,
}

impl CgEgaClass {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "AP" => Some(CgEgaClass::AP),
            "BE" => Some(CgEgaClass::BE),
            "EP" => Some(CgEgaClass::EP),
            _ => None,
        }
    }
}

/// P-EGA table over `(ref, pred, up, lo)`.
pub fn pega_table() -> &'static DecisionTable {
    static TABLE: OnceLock<DecisionTable> = OnceLock::new();
    TABLE.get_or_init(|| DecisionTable::parse(PEGA_TABLE_CSV, &["ref", "pred", "up", "lo"]).expect("bundled P-EGA table"))
}

/// R-EGA table over `(ref, pred)` rates in mg/dL/min.
pub fn rega_table() -> &'static DecisionTable {
    static TABLE: OnceLock<DecisionTable> = OnceLock::new();
    TABLE.get_or_init(|| DecisionTable::parse(REGA_TABLE_CSV, &["ref", "pred"]).expect("bundled R-EGA table"))
}

/// Per-band lookup from (P-zone, R-zone) to accuracy class.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix {
    entries: BTreeMap<(GlycemicBand, String, String), CgEgaClass>,
}

impl CombinationMatrix {
    /// Parses CSV with header `band,p_zone,r_zone,class`; every band, P-zone
    /// and R-zone combination must be present exactly once.
    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| MetricsError::Table { line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == "band,p_zone,r_zone,class" => {}
            _ => return Err(err(1, "expected header `band,p_zone,r_zone,class`".into())),
        }
        let mut entries = BTreeMap::new();
        for (i, l) in lines {
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(err(i + 1, "expected four fields".into()));
            }
            let band = match f[0] {
                "hypo" => GlycemicBand::Hypo,
                "eu" => GlycemicBand::Eu,
                "hyper" => GlycemicBand::Hyper,
                other => return Err(err(i + 1, format!("unknown band `{other}`"))),
            };
            if !P_ZONES.contains(&f[1]) || !R_ZONES.contains(&f[2]) {
                return Err(err(i + 1, format!("unknown zone pair {}/{}", f[1], f[2])));
            }
            let class = CgEgaClass::parse(f[3]).ok_or_else(|| err(i + 1, format!("unknown class `{}`", f[3])))?;
            if entries.insert((band, f[1].to_string(), f[2].to_string()), class).is_some() {
                return Err(err(i + 1, "duplicate entry".into()));
            }
        }
        let m = Self { entries };
        for band in GlycemicBand::ALL {
            for p in P_ZONES {
                for r in R_ZONES {
                    m.lookup(band, p, r)?;
                }
            }
        }
        Ok(m)
    }

    pub fn lookup(&self, band: GlycemicBand, p_zone: &str, r_zone: &str) -> Result<CgEgaClass> {
        self.entries
            .get(&(band, p_zone.to_string(), r_zone.to_string()))
            .copied()
            .ok_or_else(|| MetricsError::MissingCombination {
                band: band.name().to_string(),
                p_zone: p_zone.to_string(),
                r_zone: r_zone.to_string(),
            })
    }
}

pub fn cgega_matrix() -> &'static CombinationMatrix {
    static MATRIX: OnceLock<CombinationMatrix> = OnceLock::new();
    MATRIX.get_or_init(|| CombinationMatrix::parse(CGEGA_MATRIX_CSV).expect("bundled CG-EGA matrix"))
}

/// `(up, lo)` boundary shifts in mg/dL for a reference rate in mg/dL/min.
pub fn pega_expansion(ref_rate: f64) -> (f64, f64) {
    let magnitude = ref_rate.abs();
    let shift = if magnitude > 2.0 {
        20.0
    } else if magnitude >= 1.0 {
        10.0
    } else {
        0.0
    };
    if ref_rate < 0.0 {
        (shift, 0.0)
    } else {
        (0.0, shift)
    }
}

pub fn pega_zone(reference: f64, predicted: f64, ref_rate: f64) -> Result<&'static str> {
    let (up, lo) = pega_expansion(ref_rate);
    pega_table().classify(&[reference, predicted, up, lo])
}

pub fn rega_zone(ref_rate: f64, pred_rate: f64) -> Result<&'static str> {
    rega_table().classify(&[ref_rate, pred_rate])
}

/// Classification trace of one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CgEgaPoint {
    pub index: usize,
    pub band: GlycemicBand,
    pub ref_rate: f64,
    pub pred_rate: f64,
    pub p_zone: &'static str,
    pub r_zone: &'static str,
    pub class: CgEgaClass,
}

/// Classifies every point of `p` except the first.
pub fn cg_ega_points(p: &PairedSeries) -> Result<Vec<CgEgaPoint>> {
    if p.len() < 2 {
        return Err(MetricsError::TooShort { len: p.len(), min: 2 });
    }
    let bands = GlycemiaBands::default();
    let minutes = p.interval_s() / 60.0;
    let (r, y) = (p.reference(), p.predicted());
    (1..p.len())
        .map(|i| {
            let ref_rate = (r[i] - r[i - 1]) / minutes;
            let pred_rate = (y[i] - y[i - 1]) / minutes;
            let p_zone = pega_zone(r[i], y[i], ref_rate)?;
            let r_zone = rega_zone(ref_rate, pred_rate)?;
            let band = bands.band_of(r[i]);
            let class = cgega_matrix().lookup(band, p_zone, r_zone)?;
            Ok(CgEgaPoint {
                index: i,
                band,
                ref_rate,
                pred_rate,
                p_zone,
                r_zone,
                class,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRates {
    pub n: usize,
    pub ap: f64,
    pub be: f64,
    pub ep: f64,
}

/// AP/BE/EP percentages per band; bands with no points are `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CgEgaReport {
    pub hypo: Option<BandRates>,
    pub eu: Option<BandRates>,
    pub hyper: Option<BandRates>,
}

impl CgEgaReport {
    pub fn band(&self, band: GlycemicBand) -> Option<&BandRates> {
        match band {
            GlycemicBand::Hypo => self.hypo.as_ref(),
            GlycemicBand::Eu => self.eu.as_ref(),
            GlycemicBand::Hyper => self.hyper.as_ref(),
        }
    }

    fn from_points<'a>(points: impl IntoIterator<Item = &'a CgEgaPoint>) -> Self {
        let mut counts = [[0usize; 3]; 3];
        for pt in points {
            counts[pt.band as usize][pt.class as usize] += 1;
        }
        let rates = |c: [usize; 3]| {
            let n: usize = c.iter().sum();
            (n > 0).then(|| {
                let pct = |k: usize| 100.0 * c[k] as f64 / n as f64;
                BandRates {
                    n,
                    ap: pct(0),
                    be: pct(1),
                    ep: pct(2),
                }
            })
        };
        Self {
            hypo: rates(counts[0]),
            eu: rates(counts[1]),
            hyper: rates(counts[2]),
        }
    }
}

pub fn cg_ega(p: &PairedSeries) -> Result<CgEgaReport> {
    Ok(CgEgaReport::from_points(&cg_ega_points(p)?))
}

/// Pools several contiguous runs. Runs shorter than two points are skipped;
/// it is an error if every run is.
pub fn cg_ega_runs(runs: &[PairedSeries]) -> Result<CgEgaReport> {
    let mut points = Vec::new();
    for run in runs.iter().filter(|r| r.len() >= 2) {
        points.extend(cg_ega_points(run)?);
    }
    if points.is_empty() {
        return Err(MetricsError::TooShort {
            len: runs.iter().map(PairedSeries::len).max().unwrap_or(0),
            min: 2,
        });
    }
    Ok(CgEgaReport::from_points(&points))
}
