use super::{CgmRecord, DeviceMode, PatientSeries, SAMPLE_INTERVAL_S};

/// Longest gap, in samples, that is filled rather than split (30 min).
pub const DEFAULT_MAX_GAP: usize = 6;

fn merge_into(slot: &mut CgmRecord, r: &CgmRecord) {
    if slot.glucose.is_none() {
        slot.glucose = r.glucose;
    }
    slot.carbs += r.carbs;
    slot.bolus_total += r.bolus_total;
    slot.bolus_food += r.bolus_food;
    slot.bolus_correction += r.bolus_correction;
    slot.bolus_other += r.bolus_other;
    if slot.device_mode == DeviceMode::Unknown {
        slot.device_mode = r.device_mode;
    }
}

/// Places records on the 300 s grid anchored at the first timestamp and
/// fills missing glucose. Interior gaps of at most `max_gap` samples are
/// interpolated linearly, leading and trailing gaps of at most `max_gap`
/// repeat the nearest reading. Longer gaps stay empty and separate segments.
/// Records that round to the same grid slot are merged, therapy summed.
pub fn impute_gaps(series: &PatientSeries, max_gap: usize) -> PatientSeries {
    let mut out = PatientSeries {
        records: Vec::new(),
        segments: Vec::new(),
        ..series.clone()
    };
    let Some(first) = series.records.first() else {
        return out;
    };
    let t0 = first.timestamp;
    let slot_of = |t: i64| ((t - t0) as f64 / SAMPLE_INTERVAL_S as f64).round() as usize;
    let n = slot_of(series.records.last().unwrap().timestamp) + 1;
    let mut grid: Vec<CgmRecord> = (0..n)
        .map(|k| CgmRecord::missing(t0 + k as i64 * SAMPLE_INTERVAL_S))
        .collect();
    let mut filled = vec![false; n];
    for r in &series.records {
        let k = slot_of(r.timestamp);
        if filled[k] {
            merge_into(&mut grid[k], r);
        } else {
            let ts = grid[k].timestamp;
            grid[k] = CgmRecord { timestamp: ts, ..r.clone() };
            filled[k] = true;
        }
    }

    let observed: Vec<usize> = (0..n).filter(|&k| grid[k].glucose.is_some()).collect();
    if let (Some(&lo), Some(&hi)) = (observed.first(), observed.last()) {
        if lo <= max_gap {
            let v = grid[lo].glucose;
            for r in &mut grid[..lo] {
                r.glucose = v;
            }
        }
        if n - 1 - hi <= max_gap {
            let v = grid[hi].glucose;
            for r in &mut grid[hi + 1..] {
                r.glucose = v;
            }
        }
        for pair in observed.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let gap = b - a - 1;
            if gap == 0 || gap > max_gap {
                continue;
            }
            let (va, vb) = (grid[a].glucose.unwrap(), grid[b].glucose.unwrap());
            for k in a + 1..b {
                let frac = (k - a) as f64 / (b - a) as f64;
                grid[k].glucose = Some(va + (vb - va) * frac);
            }
        }
    }

    let mut start = None;
    for k in 0..=n {
        let present = k < n && grid[k].glucose.is_some();
        match (start, present) {
            (None, true) => start = Some(k),
            (Some(s), false) => {
                out.segments.push(s..k);
                start = None;
            }
            _ => {}
        }
    }
    out.records = grid;
    out
}
