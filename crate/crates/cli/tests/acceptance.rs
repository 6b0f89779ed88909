//! Acceptance suite. One line per criterion; exits nonzero if any hard
//! criterion fails or runs over its time budget.

#[path = "../../core/tests/common/mock_server.rs"]
mod mock_server;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use cgmrag::context::{
    build_prompt, summarize_rule_based, summarize_windows, HashedEmbedder, RemoteConfig, RemoteEmbedder, RemoteSummarizer,
    RuleSummarizer, Summarizer, SummaryBackend, SummaryStore, TextEmbedder, SYSTEM_ROLE,
};
use cgmrag::data::{generate_synthetic_cohort, ingest_csv, NormTable, Split, DEFAULT_MAX_GAP};
use cgmrag::dataset::{embed_summaries, prepare_samples, windows_from_series, Sample};
use cgmrag::model::{init_params, patch_count, patch_starts, pretrain_loss, ModelConfig, PatchConfig, TranslatorMode, ENCODER_PREFIXES};
use cgmrag::retrieval::{build_index, rag_forward_frozen, Adapter, AdapterConfig, Exclude, IndexEntry, RetrievalIndex};
use cgmrag::train::{
    evaluate_tables, finetune_adapter, forecast_run, freeze_and_index, pretrain, run_ablation, train_run, TrainConfig,
};
use cgmrag_metrics::clarke::{clarke_table, clarke_zone_table};
use cgmrag_metrics::{cg_ega, cg_ega_points, clarke_zone, CgEgaClass, ClarkeZone, GlycemicBand, PairedSeries};
use cgmrag_numerics::gradcheck::{grad_check, grad_check_frozen, grad_check_params};
use cgmrag_numerics::loss::huber_value;
use cgmrag_numerics::nn::{self, AttentionShape};
use cgmrag_numerics::{concat_cols, concat_rows, Bindings, ParamStore, Tape, Tensor};
use mock_server::{MockServer, Reply};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-r..r)).collect()
}

// 1 -----------------------------------------------------------------------

const EPS: f64 = 1e-5;
const GRAD_FLOOR: f64 = 1e-6;

fn tiny(ca: bool, ctl: bool) -> ModelConfig {
    ModelConfig {
        patch: PatchConfig::new(9, 9),
        d_model: 4,
        n_layers: 1,
        n_heads: 2,
        d_ff: 6,
        dropout: 0.0,
        lstm_layers: 1,
        lstm_hidden: 3,
        text_dim: 5,
        translator_hidden: 4,
        context_attention: ca,
        translation_loss: ctl,
        ..ModelConfig::default()
    }
}

fn random_samples(rng: &mut ChaCha8Rng, n: usize, text_dim: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| Sample {
            window_ref: format!("p{}@{}", i % 3, i * 300),
            patient_id: format!("p{}", i % 3),
            split: Split::Train,
            start_time: i as i64 * 300,
            x: rand_vec(rng, 36, 1.5),
            y: rand_vec(rng, 12, 1.5),
            text: Some(rand_vec(rng, text_dim, 1.5)),
        })
        .collect()
}

fn gradients() -> Check {
    let mut worst_elem = 0f64;
    let mut worst_rel = 0f64;
    let mut worst_abs = 0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&mut rng, 3, 4);
        let b = random(&mut rng, 3, 4);
        let w = random(&mut rng, 4, 2);
        let bias = Tensor::new(vec![4], rand_vec(&mut rng, 4, 1.0)).unwrap();
        let away: Vec<f64> = (0..6)
            .map(|i| {
                let m = if i % 2 == 0 { rng.random_range(0.1..0.9) } else { rng.random_range(1.1..3.0) };
                if rng.random::<bool>() { m } else { -m }
            })
            .collect();
        let elementary = [
            ("add", grad_check(|_, v| v[0].add(v[1]).square().sum(), &[a.clone(), b.clone()], EPS)),
            ("sub", grad_check(|_, v| v[0].sub(v[1]).square().mean(), &[a.clone(), b.clone()], EPS)),
            ("mul", grad_check(|_, v| v[0].mul(v[1]).sum(), &[a.clone(), b.clone()], EPS)),
            ("scale", grad_check(|_, v| v[0].scale(-1.7).square().sum(), &[a.clone()], EPS)),
            ("matmul", grad_check(|_, v| v[0].matmul(v[1]).square().sum(), &[a.clone(), w.clone()], EPS)),
            ("transpose", grad_check(|_, v| v[0].transpose().matmul(v[1]).square().sum(), &[a.clone(), b.clone()], EPS)),
            ("add_row", grad_check(|_, v| v[0].add_row(v[1]).square().sum(), &[a.clone(), bias.clone()], EPS)),
            ("mul_row", grad_check(|_, v| v[0].mul_row(v[1]).square().sum(), &[a.clone(), bias.clone()], EPS)),
            ("softmax", grad_check(|_, v| v[0].softmax_rows().mul(v[1]).sum(), &[a.clone(), b.clone()], EPS)),
            ("sigmoid", grad_check(|_, v| v[0].sigmoid().mul(v[1]).sum(), &[a.clone(), b.clone()], EPS)),
            ("tanh", grad_check(|_, v| v[0].tanh().mul(v[1]).sum(), &[a.clone(), b.clone()], EPS)),
            ("gelu", grad_check(|_, v| v[0].gelu().mul(v[1]).sum(), &[a.clone(), b.clone()], EPS)),
            ("mean_rows", grad_check(|_, v| v[0].mean_rows().square().sum(), &[a.clone()], EPS)),
            ("concat_cols", grad_check(|_, v| concat_cols(&[v[0], v[1]]).square().sum(), &[a.clone(), b.clone()], EPS)),
            ("concat_rows", grad_check(|_, v| concat_rows(&[v[0], v[1]]).gelu().sum(), &[a.clone(), b.clone()], EPS)),
            ("slice", grad_check(|_, v| v[0].slice_cols(1, 2).slice_rows(1, 2).square().sum(), &[a.clone()], EPS)),
            ("layer_norm", grad_check(|_, v| v[0].layer_norm_rows(1e-12).mul(v[1]).sum(), &[a.clone(), b.clone()], EPS)),
            (
                "huber",
                grad_check(|t, v| v[0].huber(t.constant(Tensor::zeros(&[1, 6])), 1.0), &[Tensor::row(&away)], EPS),
            ),
        ];
        for (name, r) in elementary {
            ensure(r.max_rel_err < 1e-5, || format!("seed {seed} {name}: rel {:e}", r.max_rel_err))?;
            worst_elem = worst_elem.max(r.max_rel_err);
        }

        let mut composed = Vec::new();
        let shape = AttentionShape::split(4, 2).unwrap();
        let mut store = ParamStore::new();
        nn::init_attention(&mut store, "att", shape, &mut rng);
        nn::init_lstm(&mut store, "lstm", 4, 2, 2, &mut rng);
        nn::init_mlp(&mut store, "mlp", &[4, 5, 3], &mut rng);
        store.insert("x", random(&mut rng, 3, 4));
        composed.push((
            "layers".to_string(),
            grad_check_params(
                &store,
                &[],
                |b| {
                    let x = b.param("x");
                    let h = nn::multi_head_attention(b, "att", x, x, shape).tanh();
                    let (out, last) = nn::lstm_forward(b, "lstm", h, 2, 2);
                    out.square().sum().add(last.sum()).add(nn::mlp(b, "mlp", h, 2).square().mean())
                },
                EPS,
            ),
        ));
        for (ca, ctl) in [(true, true), (false, true), (false, false)] {
            let cfg = ModelConfig {
                translation_weight: 0.0,
                ..tiny(ca, ctl)
            };
            let store = init_params(&cfg, seed).unwrap();
            let mut r = ChaCha8Rng::seed_from_u64(1000 + seed);
            let (x, text, y) = (rand_vec(&mut r, 36, 1.5), rand_vec(&mut r, cfg.text_dim, 1.5), rand_vec(&mut r, 12, 1.5));
            let report = grad_check_params(
                &store,
                &[],
                |b| {
                    let mut rng = ChaCha8Rng::seed_from_u64(0);
                    pretrain_loss(&cfg, b, &x, Some(&text), &y, false, &mut rng).unwrap().1.total
                },
                EPS,
            );
            composed.push((format!("pretrain ca={ca} ctl={ctl}"), report));
        }
        for mode in [TranslatorMode::Mlp, TranslatorMode::Linear] {
            let cfg = ModelConfig {
                translation_weight: 0.1,
                translator: mode,
                ..tiny(true, true)
            };
            let store = init_params(&cfg, seed).unwrap();
            let mut r = ChaCha8Rng::seed_from_u64(1000 + seed);
            let (x, text, y) = (rand_vec(&mut r, 36, 1.5), rand_vec(&mut r, cfg.text_dim, 1.5), rand_vec(&mut r, 12, 1.5));
            let report = grad_check_params(
                &store,
                &["trans."],
                |b| {
                    let mut rng = ChaCha8Rng::seed_from_u64(0);
                    pretrain_loss(&cfg, b, &x, Some(&text), &y, false, &mut rng).unwrap().1.total
                },
                EPS,
            );
            composed.push((format!("translator {mode:?}"), report));
        }
        let cfg = ModelConfig {
            text_dim: 6,
            ..tiny(true, true)
        };
        let model = cgmrag::model::Model::new(cfg, seed).unwrap();
        let train = random_samples(&mut rng, 8, 6);
        let index = build_index(&model, &train).unwrap();
        let adapter = Adapter::new(
            AdapterConfig {
                m_heads: 2,
                head_hidden: vec![5, 4],
                agg_hidden: 3,
                ..AdapterConfig::default()
            },
            4,
            12,
        )
        .unwrap();
        let mut store = model.params.clone();
        store.extend(adapter.init_params(seed));
        let query = &train[(seed % 8) as usize];
        composed.push((
            "adapter".into(),
            grad_check_frozen(
                &store,
                &["rag."],
                &ENCODER_PREFIXES,
                |b| {
                    let y = rag_forward_frozen(&model, &adapter, b, query, &index, true).unwrap();
                    y.huber(b.tape().constant(Tensor::row(&query.y)), 1.0)
                },
                EPS,
            ),
        ));
        for (name, r) in composed {
            ensure(r.checked > 0, || format!("{name}: nothing checked"))?;
            let (rel, abs) = r.split_at(GRAD_FLOOR);
            ensure(rel < 1e-4 && abs < 1e-10, || format!("seed {seed} {name}: rel {rel:e} abs {abs:e}"))?;
            worst_rel = worst_rel.max(rel);
            worst_abs = worst_abs.max(abs);
        }
    }
    Ok(format!(
        "elementary max rel {worst_elem:.1e}; composed max rel {worst_rel:.1e}, abs {worst_abs:.1e} below |g| {GRAD_FLOOR:e}"
    ))
}

// 2 -----------------------------------------------------------------------

fn patches() -> Check {
    let mut cases = 0;
    for len in 1..=64usize {
        for lp in 1..=len {
            for ls in 1..=lp {
                let mut starts = Vec::new();
                let mut s = 0;
                while s + lp < len {
                    starts.push(s);
                    s += ls;
                }
                starts.push(len - lp);
                let n = patch_count(len, lp, ls);
                ensure(n == starts.len(), || format!("L={len} Lp={lp} Ls={ls}: {n} vs {}", starts.len()))?;
                let got = patch_starts(len, PatchConfig::new(lp, ls)).map_err(|e| e.to_string())?;
                ensure(got == starts, || format!("L={len} Lp={lp} Ls={ls}: starts differ"))?;
                cases += 1;
            }
        }
    }
    let (a, b) = (patch_count(36, 6, 3), patch_count(36, 4, 4));
    ensure(a == 11 && b == 9, || format!("(6,3) -> {a}, (4,4) -> {b}"))?;
    Ok(format!("{cases} configurations; (6,3) -> 11, (4,4) -> 9"))
}

// 3 -----------------------------------------------------------------------

fn huber() -> Check {
    ensure(huber_value(0.5, 1.0) == 0.125, || format!("l(0.5) = {}", huber_value(0.5, 1.0)))?;
    ensure(huber_value(2.0, 1.0) == 1.5, || format!("l(2) = {}", huber_value(2.0, 1.0)))?;
    ensure(huber_value(-2.0, 1.0) == 1.5, || "l(-2) != 1.5".into())?;
    let mut worst = 0f64;
    for delta in [0.25, 1.0, 3.0, 17.5] {
        for sign in [1.0, -1.0] {
            let at = huber_value(sign * delta, delta);
            let linear = delta * (delta - 0.5 * delta);
            let quad = 0.5 * delta * delta;
            let below = huber_value(sign * delta * (1.0 - 1e-15), delta);
            let above = huber_value(sign * delta * (1.0 + 1e-15), delta);
            for v in [linear, quad, below, above] {
                worst = worst.max((v - at).abs());
            }
        }
    }
    ensure(worst < 1e-12, || format!("jump {worst:e} at |e| = delta"))?;
    Ok(format!("bit-exact; max jump at |e| = delta {worst:.1e}"))
}

// 4 -----------------------------------------------------------------------

fn brute_force(idx: &RetrievalIndex, q: &[f64], k: usize) -> Vec<usize> {
    let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut all: Vec<(f64, usize)> = idx
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let dot: f64 = q.iter().zip(&e.z).map(|(a, b)| a * b).sum();
            let n: f64 = e.z.iter().map(|v| v * v).sum::<f64>().sqrt();
            (dot / (qn * n), i)
        })
        .collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|x| x.1).collect()
}

fn retrieval() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_self = 0f64;
    for trial in 0..1000 {
        let n = rng.random_range(1..=500);
        let dim = rng.random_range(2..=16);
        let mut idx = RetrievalIndex::new(dim, 1, "enc");
        for j in 0..n {
            idx.push(IndexEntry {
                z: rand_vec(&mut rng, dim, 1.0),
                y: vec![0.0],
                window_ref: format!("p@{j}"),
            })
            .map_err(|e| e.to_string())?;
        }
        let q = rand_vec(&mut rng, dim, 1.0);
        let c = rng.random_range(0.001..1000.0);
        let scaled: Vec<f64> = q.iter().map(|v| v * c).collect();
        for k in [1, 3, 10] {
            let got = idx.query_top_k(&q, k, Exclude::Nothing).map_err(|e| e.to_string())?;
            ensure(got.indices == brute_force(&idx, &q, k), || format!("trial {trial} k {k}: top-k differs"))?;
            let again = idx.query_top_k(&scaled, k, Exclude::Nothing).map_err(|e| e.to_string())?;
            ensure(again.indices == got.indices, || format!("trial {trial} k {k}: scaled query by {c} differs"))?;
        }
        let j = rng.random_range(0..n);
        let own = idx.entry(j).z.clone();
        let sims = idx.similarities(&own).map_err(|e| e.to_string())?;
        worst_self = worst_self.max((sims[j] - 1.0).abs());
    }
    ensure(worst_self <= 1e-12, || format!("self similarity off by {worst_self:e}"))?;
    Ok(format!("1000 databases; self-similarity within {worst_self:.1e}"))
}

// 5 -----------------------------------------------------------------------

fn clarke() -> Check {
    let table = clarke_table();
    let mut counts = [0usize; 5];
    for r in 20..=400 {
        for p in 20..=400 {
            let (r, p) = (r as f64, p as f64);
            let oracle = clarke_zone_table(r, p).map_err(|e| format!("({r}, {p}): {e}"))?;
            let zone = clarke_zone(r, p).map_err(|e| e.to_string())?;
            ensure(zone == oracle, || format!("ref {r} pred {p}: {zone:?} vs table {oracle:?}"))?;
            let zones: std::collections::BTreeSet<&str> = table.matching(&[r, p]).iter().map(|row| row.zone.as_str()).collect();
            // no explicit row means the fallback zone
            ensure(zones.len() <= 1, || format!("ref {r} pred {p}: zones {zones:?}"))?;
            counts[zone as usize] += 1;
        }
        ensure(clarke_zone(r as f64, r as f64).ok() == Some(ClarkeZone::A), || format!("pred = ref = {r} not in A"))?;
    }
    Ok(format!("381x381 points, A..E counts {counts:?}"))
}

// 6 -----------------------------------------------------------------------

fn paired(r: &[f64], p: &[f64]) -> PairedSeries {
    PairedSeries::new(r.to_vec(), p.to_vec()).unwrap()
}

fn cgega() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0f64;
    for trial in 0..100 {
        let n = rng.random_range(2..120);
        let mut g: f64 = rng.random_range(50.0..300.0);
        let (mut r, mut p) = (Vec::new(), Vec::new());
        for _ in 0..n {
            g = (g + rng.random_range(-15.0..15.0)).clamp(40.0, 400.0);
            r.push(g);
            p.push((g + rng.random_range(-60.0..60.0)).clamp(40.0, 400.0));
        }
        let report = cg_ega(&paired(&r, &p)).map_err(|e| e.to_string())?;
        let mut total = 0;
        for band in GlycemicBand::ALL {
            if let Some(b) = report.band(band) {
                let err = (b.ap + b.be + b.ep - 100.0).abs();
                ensure(err <= 1e-9, || format!("trial {trial} {band:?}: sums to {}", b.ap + b.be + b.ep))?;
                worst = worst.max(err);
                total += b.n;
            }
        }
        ensure(total == n - 1, || format!("trial {trial}: {total} points for {n} readings"))?;
    }

    // identity: every band all AP
    let r = [55.0, 60.0, 68.0, 90.0, 140.0, 185.0, 230.0, 260.0, 240.0, 150.0];
    let id = cg_ega(&paired(&r, &r)).map_err(|e| e.to_string())?;
    for band in GlycemicBand::ALL {
        let b = id.band(band).ok_or(format!("{band:?} empty"))?;
        ensure((b.ap, b.be, b.ep) == (100.0, 0.0, 0.0), || format!("identity {band:?}: {b:?}"))?;
    }
    // constant offset of 1 mg/dL at 100: euglycemic only, all AP
    let off = cg_ega(&paired(&[100.0; 6], &[101.0; 6])).map_err(|e| e.to_string())?;
    let eu = off.eu.ok_or("offset: no eu band")?;
    ensure(off.hypo.is_none() && off.hyper.is_none() && eu.n == 5 && eu.ap == 100.0, || format!("offset: {eu:?}"))?;
    // inverted rates: point zone A, rate zone lE, EP
    let inv = paired(&[100.0, 110.0, 120.0, 130.0], &[125.0, 115.0, 105.0, 95.0]);
    for pt in cg_ega_points(&inv).map_err(|e| e.to_string())? {
        ensure(
            (pt.ref_rate, pt.pred_rate, pt.p_zone, pt.r_zone, pt.class) == (2.0, -2.0, "A", "lE", CgEgaClass::EP),
            || format!("inverted: {pt:?}"),
        )?;
    }
    let eu = cg_ega(&inv).map_err(|e| e.to_string())?.eu.ok_or("inverted: no eu band")?;
    ensure((eu.ap, eu.be, eu.ep) == (0.0, 0.0, 100.0), || format!("inverted: {eu:?}"))?;
    Ok(format!("100 series, max band-sum error {worst:.1e}; 3 traced examples exact"))
}

// 7, 9 --------------------------------------------------------------------

/// `n` toy samples with rule-based text from two synthetic patients.
fn toy_samples(n: usize) -> Vec<Sample> {
    let series = generate_synthetic_cohort(2, 3, 11);
    let windows: Vec<_> = windows_from_series(&series, 6, DEFAULT_MAX_GAP).into_iter().step_by(2).take(n).collect();
    assert_eq!(windows.len(), n);
    let store = SummaryStore::from_summaries(&windows, summarize_windows(&RuleSummarizer, &windows, 1).unwrap());
    let texts = embed_summaries(&windows, &store, &HashedEmbedder::new(768)).unwrap();
    let norms = NormTable::fit(&series).unwrap();
    prepare_samples(&windows, &norms, Some(&texts)).unwrap()
}

fn freeze() -> Check {
    let data = toy_samples(32);
    let cfg = TrainConfig {
        epochs_pretrain: 2,
        epochs_finetune: 2,
        batch_size: 8,
        ..TrainConfig::toy()
    };
    let (model, _) = pretrain(&cfg, &data).map_err(|e| e.to_string())?;
    let before = model.params.checksum("");
    let index = freeze_and_index(&model, &data).map_err(|e| e.to_string())?;
    let (adapter, params, _) = finetune_adapter(&cfg, &model, &index, &data).map_err(|e| e.to_string())?;
    let after = model.params.checksum("");
    ensure(before == after, || format!("encoder checksum {before} -> {after}"))?;

    let mut all = model.params.clone();
    all.extend(params);
    let tape = Tape::new();
    let b = ENCODER_PREFIXES.iter().fold(Bindings::new(&tape, &all), |b, p| b.freeze(*p));
    let y = rag_forward_frozen(&model, &adapter, &b, &data[3], &index, true).map_err(|e| e.to_string())?;
    let grads = b.gradients(&tape.backward(y.sum()).map_err(|e| e.to_string())?);
    let stray: Vec<&String> = grads.keys().filter(|k| !k.starts_with("rag.")).collect();
    ensure(stray.is_empty(), || format!("encoder gradients present: {stray:?}"))?;
    let nonzero = grads.values().filter(|g| g.data().iter().any(|v| *v != 0.0)).count();
    ensure(nonzero > 0, || "all adapter gradients are zero".into())?;
    Ok(format!("checksum {}; {nonzero}/{} adapter tensors with nonzero gradient", &before[..12], grads.len()))
}

fn loss_halving() -> Check {
    let data = toy_samples(64);
    let cfg = TrainConfig {
        epochs_pretrain: 50,
        batch_size: 32,
        ..TrainConfig::toy()
    };
    let (_, log) = pretrain(&cfg, &data).map_err(|e| e.to_string())?;
    let steps = cfg.epochs_pretrain * data.len().div_ceil(cfg.batch_size);
    let (first, last) = (log[0].loss_total, log.last().unwrap().loss_total);
    ensure(steps <= 200, || format!("{steps} steps"))?;
    ensure(last <= 0.5 * first, || format!("loss {first:.4} -> {last:.4} in {steps} steps"))?;
    Ok(format!("loss {first:.4} -> {last:.4} in {steps} steps"))
}

// 8 -----------------------------------------------------------------------

fn cgmrag(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cgmrag"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("cgmrag {} failed: {}", args[0], String::from_utf8_lossy(&out.stderr).trim())
    })
}

fn pipeline(root: &Path) -> Result<(), String> {
    let p = |f: &str| root.join(f).to_string_lossy().into_owned();
    cgmrag(&["synth", "--patients", "4", "--days", "10", "--seed", "42", "--out", &p("")])?;
    cgmrag(&["contextualize", "--train", &p("train.csv"), "--test", &p("test.csv"), "--out", &p("summaries.json")])?;
    cgmrag(&["train", "--toy", "--seed", "42", "--train", &p("train.csv"), "--summaries", &p("summaries.json"), "--out", &p("run")])?;
    cgmrag(&[
        "forecast",
        "--run",
        &p("run"),
        "--data",
        &p("test.csv"),
        "--summaries",
        &p("summaries.json"),
        "--out",
        &p("predictions.csv"),
        "--references",
        &p("references.csv"),
    ])?;
    cgmrag(&["eval", "--predictions", &p("predictions.csv"), "--references", &p("references.csv"), "--out", &p("report")])
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn reproducibility(a: &Path, b: &Path) -> Check {
    pipeline(a)?;
    pipeline(b)?;
    let (fa, fb) = (files_under(a), files_under(b));
    ensure(fa.keys().eq(fb.keys()), || format!("file sets differ: {:?} vs {:?}", fa.keys(), fb.keys()))?;
    for (name, bytes) in &fa {
        ensure(&fb[name] == bytes, || format!("{} differs", name.display()))?;
    }
    ensure(fa.contains_key(Path::new("report/report.json")), || "no report".into())?;
    let bytes: usize = fa.values().map(Vec::len).sum();
    Ok(format!("{} artifacts, {bytes} bytes, identical", fa.len()))
}

// 9, 10 -------------------------------------------------------------------

struct Cohort {
    train: Vec<cgmrag::data::PatientSeries>,
    test: Vec<cgmrag::data::PatientSeries>,
    store: SummaryStore,
}

fn load_cohort(dir: &Path) -> Cohort {
    Cohort {
        train: ingest_csv(&dir.join("train.csv"), Split::Train).unwrap(),
        test: ingest_csv(&dir.join("test.csv"), Split::Test).unwrap(),
        store: SummaryStore::load(&dir.join("summaries.json")).unwrap(),
    }
}

fn held_out(c: &Cohort) -> Check {
    let windows = windows_from_series(&c.test, 1, DEFAULT_MAX_GAP);
    let sq: f64 = windows.iter().map(|w| (w.trajectory[0] - w.x[w.x.len() - 1]).powi(2)).sum();
    let baseline = (sq / windows.len() as f64).sqrt();
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig::toy().with_flags(false, true, true);
    train_run(&cfg, &c.train, Some(&c.store), dir.path()).map_err(|e| e.to_string())?;
    let (preds, refs) = forecast_run(dir.path(), &c.test, Some(&c.store)).map_err(|e| e.to_string())?;
    ensure(preds.rows.len() == windows.len(), || "window count differs".into())?;
    let report = evaluate_tables(&preds, &refs).map_err(|e| e.to_string())?;
    let rmse = report.horizon(5).ok_or("no 5-min horizon")?.pooled.rmse;
    ensure(rmse.is_finite() && rmse < baseline, || format!("5-min rmse {rmse:.3} vs last value {baseline:.3}"))?;
    Ok(format!("5-min rmse {rmse:.3} < last value {baseline:.3} on {} windows", windows.len()))
}

fn learnability(c: &Cohort) -> Check {
    Ok(format!("{}; {}", loss_halving()?, held_out(c)?))
}

fn ablation(c: &Cohort) -> Check {
    let dir = tempfile::tempdir().unwrap();
    let rows = run_ablation(&TrainConfig::toy(), &c.train, &c.test, Some(&c.store), dir.path()).map_err(|e| e.to_string())?;
    let full = rows.iter().find(|r| r.rag && r.ca && r.ctl).ok_or("no full row")?;
    let bgl = rows.iter().find(|r| r.bgl()).ok_or("no BGL-only row")?;
    let table: Vec<String> = rows.iter().map(|r| format!("{} {:.2}", r.dir_name(), r.rmse[2])).collect();
    let detail = format!("60-min rmse full {:.3} vs BGL-only {:.3} [{}]", full.rmse[2], bgl.rmse[2], table.join(", "));
    if full.rmse[2] <= bgl.rmse[2] {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 11 ----------------------------------------------------------------------

fn remote() -> Check {
    let server = MockServer::start(Reply::Ok {
        text: "TEST SUMMARY.".into(),
        dim: 768,
    });
    let cache = tempfile::tempdir().unwrap();
    let config = |server: &MockServer, cache: &Path| RemoteConfig {
        chat_url: Some(format!("{}/chat", server.url)),
        embed_url: Some(format!("{}/embed", server.url)),
        token: Some("secret".into()),
        cache_dir: cache.to_path_buf(),
        backoff_ms: 5,
        timeout_ms: 5_000,
        ..RemoteConfig::default()
    };
    let w = windows_from_series(&generate_synthetic_cohort(1, 1, 9), 12, DEFAULT_MAX_GAP).swap_remove(5);
    let s = RemoteSummarizer::new(config(&server, cache.path())).map_err(|e| e.to_string())?;
    let out = s.summarize("w", &w.features, &w.x).map_err(|e| e.to_string())?;
    ensure(out.text == "TEST SUMMARY." && out.backend == SummaryBackend::Remote, || format!("{out:?}"))?;
    let (path, body, auth) = server.requests()[0].clone();
    let prompt = build_prompt(&w.features, &w.x);
    ensure(path == "/chat" && auth.as_deref() == Some("Bearer secret"), || format!("{path} {auth:?}"))?;
    ensure(body["model"] == "gpt-4", || format!("model {}", body["model"]))?;
    ensure(
        body["messages"][0]["role"] == "system"
            && body["messages"][0]["content"] == SYSTEM_ROLE
            && body["messages"][1]["role"] == "user"
            && body["messages"][1]["content"] == prompt.user.as_str(),
        || "chat messages differ from the prompt".into(),
    )?;
    // warm cache
    let again = RemoteSummarizer::new(config(&server, cache.path()))
        .and_then(|s| s.summarize("w", &w.features, &w.x))
        .map_err(|e| e.to_string())?;
    ensure(again == out && server.hits() == 1, || format!("cache replay made {} requests", server.hits()))?;

    // three 500s then the rule-based fallback, nothing cached
    let failing = MockServer::start(Reply::Status(500));
    let empty = tempfile::tempdir().unwrap();
    let fb = RemoteSummarizer::new(config(&failing, empty.path()))
        .and_then(|s| s.summarize("w", &w.features, &w.x))
        .map_err(|e| e.to_string())?;
    ensure(failing.hits() == 3, || format!("{} attempts", failing.hits()))?;
    ensure(fb == summarize_rule_based("w", &w.features, &w.x), || "fallback is not the rule summary".into())?;
    ensure(std::fs::read_dir(empty.path()).unwrap().count() == 0, || "failure was cached".into())?;
    let hard = RemoteSummarizer::new(RemoteConfig {
        fail_hard: true,
        ..config(&failing, empty.path())
    })
    .map_err(|e| e.to_string())?;
    ensure(hard.summarize("w", &w.features, &w.x).is_err(), || "fail_hard returned a summary".into())?;

    // embeddings
    let e = RemoteEmbedder::new(config(&server, cache.path()), 768).map_err(|e| e.to_string())?;
    let v = e.embed("glucose rising").map_err(|e| e.to_string())?;
    let reqs = server.requests();
    ensure(v.len() == 768 && reqs[1].0 == "/embed", || "embedding request".into())?;
    ensure(reqs[1].1 == serde_json::json!({"input": "glucose rising"}), || format!("body {}", reqs[1].1))?;
    ensure(e.embed("glucose rising").ok() == Some(v) && server.hits() == 2, || "embedding cache missed".into())?;
    let narrow = RemoteEmbedder::new(config(&server, empty.path()), 16).map_err(|e| e.to_string())?;
    let fallback = narrow.embed("glucose falling").map_err(|e| e.to_string())?;
    ensure(server.hits() == 5, || format!("{} requests after malformed width", server.hits()))?;
    ensure(fallback == HashedEmbedder::new(16).embed("glucose falling").unwrap(), || "no hashed fallback".into())?;
    Ok(format!("{} mock requests, cache and fallback as documented", server.hits() + failing.hits()))
}

// -------------------------------------------------------------------------

struct Outcome {
    pass: bool,
    hard: bool,
}

fn run(id: u32, name: &str, budget: Duration, hard: bool, f: impl FnOnce() -> Check) -> Outcome {
    let t0 = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or("panic".into()))
    });
    let took = t0.elapsed();
    let over = took > budget;
    let pass = result.is_ok() && !over;
    let tag = match (pass, hard) {
        (true, _) => "PASS",
        (false, true) => "FAIL",
        (false, false) => "WARN",
    };
    let detail = match &result {
        Ok(s) | Err(s) => s.as_str(),
    };
    let timing = if over { "over budget " } else { "" };
    println!(
        "[{tag}] {id:>2} {name}: {detail} ({timing}{:.1}s / {}s)",
        took.as_secs_f64(),
        budget.as_secs()
    );
    Outcome { pass, hard }
}

fn main() {
    // libtest flags such as --nocapture or a filter are accepted and ignored
    let secs = Duration::from_secs;
    let mut outcomes = vec![
        run(1, "gradient correctness", secs(120), true, gradients),
        run(2, "patch formula", secs(10), true, patches),
        run(3, "huber exactness", secs(1), true, huber),
        run(4, "retrieval oracle", secs(30), true, retrieval),
        run(5, "clarke grid totality", secs(30), true, clarke),
        run(6, "cg-ega consistency", secs(30), true, cgega),
        run(7, "freeze contract", secs(60), true, freeze),
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    outcomes.push(run(8, "reproducibility", secs(600), true, || reproducibility(a.path(), b.path())));
    let cohort = a.path().join("train.csv").exists().then(|| load_cohort(a.path()));
    let missing = || Err::<String, _>("no pipeline output to reuse".to_string());
    outcomes.push(run(9, "learnability", secs(300), true, || cohort.as_ref().map_or_else(missing, learnability)));
    outcomes.push(run(10, "directional ablation (soft)", secs(600), false, || {
        cohort.as_ref().map_or_else(missing, ablation)
    }));
    outcomes.push(run(11, "remote contract", secs(30), true, remote));

    let failed = outcomes.iter().filter(|o| o.hard && !o.pass).count();
    let soft = outcomes.iter().filter(|o| !o.hard && !o.pass).count();
    println!("\n{} hard criteria failed, {soft} soft warnings", failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
