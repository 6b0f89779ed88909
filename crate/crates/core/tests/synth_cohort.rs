use cgmrag::data::generate_synthetic_cohort;

#[test]
fn every_patient_visits_all_bands_for_seeds_0_to_9() {
    let mut all = Vec::new();
    for seed in 0..10 {
        for p in generate_synthetic_cohort(4, 10, seed) {
            let g: Vec<f64> = p.records.iter().filter_map(|r| r.glucose).collect();
            let low = g.iter().filter(|&&v| v < 70.0).count();
            let high = g.iter().filter(|&&v| v > 180.0).count();
            let mid = g.len() - low - high;
            eprintln!("seed {seed} {}: n={} low={low} mid={mid} high={high}", p.patient_id, g.len());
            assert!(low > 0 && mid > 0 && high > 0, "seed {seed} {}", p.patient_id);
            assert!(g.iter().all(|v| (40.0..=400.0).contains(v)));
            all.extend(g);
        }
    }
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    eprintln!("cohort mean {mean:.1}");
    assert!((120.0..=200.0).contains(&mean), "mean {mean}");
}
