use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{CgmRecord, DeviceMode, PatientSeries, Split};
use crate::error::{CoreError, Result};

pub const CSV_HEADER: [&str; 9] = [
    "patient_id",
    "timestamp",
    "glucose_mg_dl",
    "carbs_g",
    "bolus_total_u",
    "bolus_food_u",
    "bolus_correction_u",
    "bolus_other_u",
    "device_mode",
];

const REQUIRED: [&str; 3] = ["patient_id", "timestamp", "glucose_mg_dl"];

pub fn ingest_csv(path: &Path, split: Split) -> Result<Vec<PatientSeries>> {
    if !path.exists() {
        return Err(CoreError::MissingArtifact(path.to_path_buf()));
    }
    ingest_reader(File::open(path)?, split)
}

/// Parses the CGM CSV schema. Rows are numbered from 1, header excluded.
pub fn ingest_reader(reader: impl Read, split: Split) -> Result<Vec<PatientSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    for name in REQUIRED {
        if col(name).is_none() {
            return Err(CoreError::MissingColumn(name.to_string()));
        }
    }
    let idx: Vec<Option<usize>> = CSV_HEADER.iter().map(|n| col(n)).collect();

    let mut by_patient: BTreeMap<String, Vec<CgmRecord>> = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| CoreError::Data {
            row: row_no,
            message: e.to_string(),
        })?;
        let field = |k: usize| idx[k].and_then(|c| row.get(c)).unwrap_or("");
        let bad = |message: String| CoreError::Data { row: row_no, message };

        let patient = field(0);
        if patient.is_empty() {
            return Err(bad("empty patient_id".into()));
        }
        let timestamp: i64 = field(1)
            .parse()
            .map_err(|_| bad(format!("timestamp `{}` is not an integer", field(1))))?;
        let glucose = match field(2) {
            "" => None,
            s => match s.parse::<f64>() {
                Ok(v) if v.is_finite() && v > 0.0 => Some(v),
                _ => return Err(bad(format!("glucose `{s}` is not a positive number"))),
            },
        };
        let amount = |k: usize| -> Result<f64> {
            match field(k) {
                "" => Ok(0.0),
                s => match s.parse::<f64>() {
                    Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
                    _ => Err(bad(format!("{} `{s}` is not a non-negative number", CSV_HEADER[k]))),
                },
            }
        };
        let record = CgmRecord {
            timestamp,
            glucose,
            carbs: amount(3)?,
            bolus_total: amount(4)?,
            bolus_food: amount(5)?,
            bolus_correction: amount(6)?,
            bolus_other: amount(7)?,
            device_mode: field(8).parse::<DeviceMode>().map_err(bad)?,
        };
        let records = by_patient.entry(patient.to_string()).or_default();
        if let Some(prev) = records.last() {
            if timestamp <= prev.timestamp {
                return Err(CoreError::NonMonotone {
                    patient: patient.to_string(),
                    row: row_no,
                    timestamp,
                });
            }
        }
        records.push(record);
    }
    Ok(by_patient
        .into_iter()
        .map(|(id, records)| PatientSeries::new(id, split, records))
        .collect())
}

fn fmt_amount(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

/// Writes records in the ingest schema, patients in the given order.
pub fn write_csv(series: &[PatientSeries], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(CSV_HEADER)?;
    for s in series {
        for r in &s.records {
            out.write_record([
                s.patient_id.clone(),
                r.timestamp.to_string(),
                r.glucose.map(|g| format!("{g}")).unwrap_or_default(),
                fmt_amount(r.carbs),
                fmt_amount(r.bolus_total),
                fmt_amount(r.bolus_food),
                fmt_amount(r.bolus_correction),
                fmt_amount(r.bolus_other),
                r.device_mode.as_str().to_string(),
            ])?;
        }
    }
    let bytes = out.into_inner().map_err(|e| CoreError::Io(e.into_error()))?;
    let mut f = File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}
