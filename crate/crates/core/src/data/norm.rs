use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{PatientSeries, Split};
use crate::error::{CoreError, Result};

/// Per-patient z-score parameters. `source` records which split they were
/// fitted on; only training statistics may be applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
    pub source: Split,
}

impl NormStats {
    pub fn from_values(values: &[f64], source: Split) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (var > 0.0).then(|| Self {
            mean,
            std: var.sqrt(),
            source,
        })
    }

    fn check(&self) -> Result<()> {
        if self.source != Split::Train {
            return Err(CoreError::Provenance(format!(
                "normalization statistics fitted on the {} split",
                self.source
            )));
        }
        Ok(())
    }
}

/// Population mean and standard deviation of every glucose reading.
pub fn fit_norm(series: &PatientSeries) -> Result<NormStats> {
    let values: Vec<f64> = series.glucose_values().collect();
    NormStats::from_values(&values, series.split).ok_or_else(|| CoreError::Degenerate(series.patient_id.clone()))
}

pub fn normalize(x: &[f64], stats: &NormStats) -> Result<Vec<f64>> {
    stats.check()?;
    Ok(x.iter().map(|v| (v - stats.mean) / stats.std).collect())
}

pub fn denormalize(z: &[f64], stats: &NormStats) -> Result<Vec<f64>> {
    stats.check()?;
    Ok(z.iter().map(|v| v * stats.std + stats.mean).collect())
}

/// Training statistics keyed by patient id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NormTable(pub BTreeMap<String, NormStats>);

impl NormTable {
    pub fn fit(train: &[PatientSeries]) -> Result<Self> {
        let mut table = BTreeMap::new();
        for s in train {
            if s.split != Split::Train {
                return Err(CoreError::Provenance(format!(
                    "patient {} series is from the {} split",
                    s.patient_id, s.split
                )));
            }
            table.insert(s.patient_id.clone(), fit_norm(s)?);
        }
        Ok(Self(table))
    }

    pub fn get(&self, patient_id: &str) -> Result<&NormStats> {
        self.0
            .get(patient_id)
            .ok_or_else(|| CoreError::Provenance(format!("no training statistics for patient {patient_id}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CgmRecord;

    fn series(values: &[f64], split: Split) -> PatientSeries {
        let records = values
            .iter()
            .enumerate()
            .map(|(i, v)| CgmRecord::reading(300 * i as i64, *v))
            .collect();
        PatientSeries::new("p", split, records)
    }

    #[test]
    fn symmetric_pair() {
        let stats = fit_norm(&series(&[0.0, 2.0], Split::Train)).unwrap();
        assert_eq!((stats.mean, stats.std), (1.0, 1.0));
        assert_eq!(normalize(&[0.0, 2.0], &stats).unwrap(), vec![-1.0, 1.0]);
    }

    #[test]
    fn roundtrip() {
        let stats = fit_norm(&series(&[80.0, 120.0, 300.0, 95.0], Split::Train)).unwrap();
        let x = [80.0, 120.0, 300.0];
        let back = denormalize(&normalize(&x, &stats).unwrap(), &stats).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!(((a - b) / a).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_and_provenance() {
        assert!(matches!(
            fit_norm(&series(&[100.0, 100.0, 100.0], Split::Train)),
            Err(CoreError::Degenerate(_))
        ));
        let test_stats = fit_norm(&series(&[90.0, 110.0], Split::Test)).unwrap();
        assert!(matches!(normalize(&[100.0], &test_stats), Err(CoreError::Provenance(_))));
        assert!(matches!(denormalize(&[0.0], &test_stats), Err(CoreError::Provenance(_))));
        assert!(NormTable::fit(&[series(&[90.0, 110.0], Split::Test)]).is_err());
        let table = NormTable::fit(&[series(&[90.0, 110.0], Split::Train)]).unwrap();
        assert!(table.get("p").is_ok());
        assert!(table.get("q").is_err());
    }
}
