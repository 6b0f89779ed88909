//! Synthetic type-1 cohort on a 5-minute grid.
//!
//! | quantity | value |
//! |---|---|
//! | basal glucose | U(110, 150) mg/dL per patient |
//! | meals | breakfast 07:30 ±45 min, 30-60 g; lunch 12:30 ±45 min, 45-80 g; dinner 19:00 ±60 min, 55-95 g |
//! | snack | 15:30 ±30 min with p = 0.3, 10-25 g, no bolus |
//! | carb gain | U(3.2, 4.2) mg/dL per g at peak |
//! | meal kernel | bi-exponential, rise 25 min, decay 90 min (peak near 45 min) |
//! | food bolus | carbs / U(8, 15) g/U, skipped with p = 0.15, offsets U(0.35, 0.6) of the meal peak |
//! | insulin kernel | bi-exponential, rise 55 min, decay 100 min |
//! | correction | above 250 mg/dL, at most every 3 h, (g - 150) / U(35, 60) U, lowers 0.9 (g - 150) |
//! | other bolus | p = 0.1 per day, 0.5-1.5 U |
//! | exercise | p = 0.2 per day at 17:00 ±30 min, 1 h, lowers up to 30 mg/dL |
//! | overnight dip | 03:00 ±60 min with p = 0.35, always on days with `day % 4 == 1`, pulls glucose to U(50, 65) |
//! | drift | AR(1), coefficient 0.985, innovation sd 1.5 |
//! | sensor noise | N(0, 5) then clamp to [40, 400] and round to 1 mg/dL |
//! | short gaps | p = 0.3 per day, 1-4 empty glucose cells |
//! | long gaps | p = 0.08 per day, 12-36 rows dropped |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CgmRecord, DeviceMode, PatientSeries, Split, SAMPLE_INTERVAL_S};

/// 2020-01-01T00:00:00Z.
pub const SYNTH_BASE_EPOCH: i64 = 1_577_836_800;
const STEPS_PER_DAY: usize = 288;
const DAY_S: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub days: usize,
    pub seed: u64,
}

#[derive(Clone, Copy)]
struct Kernel {
    rise: f64,
    decay: f64,
    peak: f64,
}

impl Kernel {
    fn new(rise: f64, decay: f64) -> Self {
        let t_peak = (decay / rise).ln() * rise * decay / (decay - rise);
        let peak = (-t_peak / decay).exp() - (-t_peak / rise).exp();
        Self { rise, decay, peak }
    }

    /// Unit-peak response `minutes` after onset.
    fn at(&self, minutes: f64) -> f64 {
        if minutes <= 0.0 {
            return 0.0;
        }
        ((-minutes / self.decay).exp() - (-minutes / self.rise).exp()) / self.peak
    }
}

struct Effect {
    step: usize,
    amplitude: f64,
    kernel: Kernel,
}

fn round_to(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

fn minute_of_day(rng: &mut ChaCha8Rng, center_min: f64, spread_min: f64) -> usize {
    ((center_min + rng.random_range(-spread_min..=spread_min)) / 5.0).round() as usize
}

fn generate_patient(index: usize, days: usize, seed: u64) -> PatientSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    let meal_kernel = Kernel::new(25.0, 90.0);
    let insulin_kernel = Kernel::new(55.0, 100.0);
    let exercise_kernel = Kernel::new(15.0, 40.0);
    let noise = Normal::new(0.0, 5.0).unwrap();
    let innovation = Normal::new(0.0, 1.5).unwrap();

    let basal = rng.random_range(110.0..150.0);
    let carb_gain = rng.random_range(3.2..4.2);
    let carb_ratio = rng.random_range(8.0..15.0);
    let coverage = rng.random_range(0.35..0.6);
    let sensitivity = rng.random_range(35.0..60.0);

    let n = days * STEPS_PER_DAY;
    let mut records: Vec<CgmRecord> = (0..n)
        .map(|k| {
            let minute = (k % STEPS_PER_DAY) * 5;
            let mode = if !(360..1380).contains(&minute) {
                DeviceMode::Sleep
            } else {
                DeviceMode::Regular
            };
            CgmRecord {
                device_mode: mode,
                ..CgmRecord::missing(SYNTH_BASE_EPOCH + k as i64 * SAMPLE_INTERVAL_S)
            }
        })
        .collect();
    let mut effects: Vec<Effect> = Vec::new();
    let mut dips: Vec<(usize, f64)> = Vec::new();

    for day in 0..days {
        let base = day * STEPS_PER_DAY;
        let meals = [(450.0, 45.0, 30.0, 60.0), (750.0, 45.0, 45.0, 80.0), (1140.0, 60.0, 55.0, 95.0)];
        for (center, spread, lo, hi) in meals {
            let step = base + minute_of_day(&mut rng, center, spread);
            let carbs = rng.random_range::<f64, _>(lo..hi).round();
            let rise = carbs * carb_gain;
            records[step].carbs += carbs;
            effects.push(Effect {
                step,
                amplitude: rise,
                kernel: meal_kernel,
            });
            if rng.random::<f64>() >= 0.15 {
                let units = round_to(carbs / carb_ratio, 0.1);
                records[step].bolus_food += units;
                records[step].bolus_total += units;
                effects.push(Effect {
                    step,
                    amplitude: -coverage * rise,
                    kernel: insulin_kernel,
                });
            }
        }
        if rng.random::<f64>() < 0.3 {
            let step = base + minute_of_day(&mut rng, 930.0, 30.0);
            let carbs = rng.random_range::<f64, _>(10.0..25.0).round();
            records[step].carbs += carbs;
            effects.push(Effect {
                step,
                amplitude: carbs * carb_gain,
                kernel: meal_kernel,
            });
        }
        if rng.random::<f64>() < 0.1 {
            let step = base + minute_of_day(&mut rng, 660.0, 120.0);
            let units = round_to(rng.random_range(0.5..1.5), 0.1);
            records[step].bolus_other += units;
            records[step].bolus_total += units;
            effects.push(Effect {
                step,
                amplitude: -0.5 * units * sensitivity,
                kernel: insulin_kernel,
            });
        }
        if rng.random::<f64>() < 0.2 {
            let step = base + minute_of_day(&mut rng, 1020.0, 30.0);
            for r in &mut records[step..(step + 12).min(n)] {
                r.device_mode = DeviceMode::Exercise;
            }
            effects.push(Effect {
                step,
                amplitude: -30.0,
                kernel: exercise_kernel,
            });
        }
        let forced = day % 4 == 1;
        if forced || rng.random::<f64>() < 0.35 {
            let step = base + minute_of_day(&mut rng, 180.0, 60.0);
            dips.push((step, rng.random_range(50.0..65.0)));
        }
    }

    let mut drift = 0.0;
    let mut last_correction: Option<usize> = None;
    for k in 0..n {
        drift = 0.985 * drift + innovation.sample(&mut rng);
        let mut g = basal + drift;
        for e in effects.iter().filter(|e| e.step <= k && k - e.step < 120) {
            g += e.amplitude * e.kernel.at(((k - e.step) * 5) as f64);
        }
        for &(center, target) in &dips {
            let z = (k as f64 - center as f64) / 8.0;
            if z.abs() < 4.0 {
                let w = (-0.5 * z * z).exp();
                g = g * (1.0 - w) + target * w;
            }
        }
        if g > 250.0 && last_correction.is_none_or(|c| k - c >= 36) {
            let units = round_to((g - 150.0) / sensitivity, 0.1);
            records[k].bolus_correction += units;
            records[k].bolus_total += units;
            effects.push(Effect {
                step: k,
                amplitude: -0.9 * (g - 150.0),
                kernel: insulin_kernel,
            });
            last_correction = Some(k);
        }
        records[k].glucose = Some((g + noise.sample(&mut rng)).clamp(40.0, 400.0).round());
    }
    for r in &mut records {
        r.bolus_total = round_to(r.bolus_total, 0.1);
    }

    let mut keep = vec![true; n];
    for day in 0..days {
        let base = day * STEPS_PER_DAY;
        if rng.random::<f64>() < 0.3 {
            let start = base + rng.random_range(0..STEPS_PER_DAY);
            let len = rng.random_range(1..=4);
            for r in &mut records[start..(start + len).min(n)] {
                r.glucose = None;
                r.device_mode = DeviceMode::Unknown;
            }
        }
        if rng.random::<f64>() < 0.08 {
            let start = base + rng.random_range(1..STEPS_PER_DAY);
            let len = rng.random_range(12..=36);
            for flag in &mut keep[start..(start + len).min(n - 1)] {
                *flag = false;
            }
        }
    }
    let records = records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect();
    PatientSeries::new(format!("s{:03}", index + 1), Split::Train, records)
}

/// Deterministic cohort of `n_patients` series, each `days` long, all
/// tagged as training data. Use [`split_by_days`] for a held-out tail.
pub fn generate_synthetic_cohort(n_patients: usize, days: usize, seed: u64) -> Vec<PatientSeries> {
    assert!(n_patients >= 1 && days >= 1, "cohort needs at least one patient and one day");
    (0..n_patients).map(|i| generate_patient(i, days, seed)).collect()
}

/// Moves the last `test_days` calendar days of each series into a test split.
pub fn split_by_days(series: &[PatientSeries], test_days: usize) -> (Vec<PatientSeries>, Vec<PatientSeries>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for s in series {
        let Some(last) = s.records.last() else { continue };
        let cut = last.timestamp - last.timestamp.rem_euclid(DAY_S) - (test_days as i64 - 1) * DAY_S;
        let (head, tail): (Vec<_>, Vec<_>) = if test_days == 0 {
            (s.records.clone(), Vec::new())
        } else {
            s.records.iter().cloned().partition(|r| r.timestamp < cut)
        };
        train.push(PatientSeries::new(s.patient_id.clone(), Split::Train, head));
        if !tail.is_empty() {
            test.push(PatientSeries::new(s.patient_id.clone(), Split::Test, tail));
        }
    }
    (train, test)
}
