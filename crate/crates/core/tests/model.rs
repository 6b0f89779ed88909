use cgmrag::model::{
    cross_translation_loss, encoder_block, forward, init_params, patch_count, patch_starts, patchify, pretrain_loss,
    Model, ModelConfig, PatchConfig, TranslatorMode,
};
use cgmrag_numerics::gradcheck::grad_check_params;
use cgmrag_numerics::{Bindings, ParamStore, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()
}

fn zero(store: &mut ParamStore, name: &str) {
    let shape = store.get(name).unwrap().shape().to_vec();
    store.set(name, Tensor::zeros(&shape)).unwrap();
}

fn matvec_oracle(x: &[f64], rows: usize, w: &Tensor) -> Vec<f64> {
    let cols = w.cols();
    let inner = w.rows();
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            for k in 0..inner {
                out[r * cols + c] += x[r * inner + k] * w.get(k, c);
            }
        }
    }
    out
}

#[test]
fn patch_count_matches_start_enumeration() {
    for len in 1..=64 {
        for lp in 1..=len {
            for ls in 1..=lp {
                let mut starts = Vec::new();
                let mut s = 0;
                loop {
                    if s + lp >= len {
                        starts.push(len - lp);
                        break;
                    }
                    starts.push(s);
                    s += ls;
                }
                assert_eq!(patch_count(len, lp, ls), starts.len(), "L={len} Lp={lp} Ls={ls}");
                assert_eq!(patch_starts(len, PatchConfig::new(lp, ls)).unwrap(), starts);
            }
        }
    }
    assert_eq!(patch_count(36, 6, 3), 11);
    assert_eq!(patch_count(36, 4, 4), 9);
    let whole: Vec<f64> = (0..36).map(f64::from).collect();
    assert_eq!(patchify(&whole, PatchConfig::new(36, 36)).unwrap().data(), whole.as_slice());
}

#[test]
fn patch_embedding_matches_loop_oracle() {
    let cfg = ModelConfig::toy();
    let store = init_params(&cfg, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_vec(&mut rng, 36);
    let patches = patchify(&x, cfg.patch).unwrap();
    let w = store.get("enc.w_bgl").unwrap();
    let tape = Tape::new();
    let got = tape.constant(patches.clone()).matmul(tape.constant(w.clone())).value();
    let want = matvec_oracle(patches.data(), patches.rows(), w);
    for (a, b) in got.data().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
    let zero_w = tape.constant(Tensor::zeros(w.shape()));
    assert!(tape.constant(patches).matmul(zero_w).value().data().iter().all(|&v| v == 0.0));
}

#[test]
fn encoder_block_with_zero_outputs_is_identity() {
    let cfg = ModelConfig::toy();
    let mut store = init_params(&cfg, 5).unwrap();
    zero(&mut store, "enc.block0.attn.w_o");
    zero(&mut store, "enc.block0.ff.1.w");
    zero(&mut store, "enc.block0.ff.1.b");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tokens = Tensor::matrix(5, cfg.d_model, rand_vec(&mut rng, 5 * cfg.d_model)).unwrap();
    let tape = Tape::new();
    let b = Bindings::new(&tape, &store);
    let out = encoder_block(&cfg, &b, "enc.block0", tape.constant(tokens.clone()), false, &mut rng).unwrap();
    assert_eq!(out.value(), tokens);
}

#[test]
fn encoder_block_is_permutation_equivariant_without_pe() {
    let cfg = ModelConfig {
        n_heads: 2,
        ..ModelConfig::toy()
    };
    let store = init_params(&cfg, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 4;
    let d = cfg.d_model;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| rand_vec(&mut rng, d)).collect();
    let perm = [2, 0, 3, 1];
    let run = |order: &[usize]| {
        let data: Vec<f64> = order.iter().flat_map(|&i| rows[i].clone()).collect();
        let tape = Tape::new();
        let b = Bindings::new(&tape, &store);
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let x = tape.constant(Tensor::matrix(n, d, data).unwrap());
        encoder_block(&cfg, &b, "enc.block0", x, false, &mut r).unwrap().value()
    };
    let base = run(&[0, 1, 2, 3]);
    let permuted = run(&perm);
    for (k, &i) in perm.iter().enumerate() {
        for c in 0..d {
            assert!((permuted.get(k, c) - base.get(i, c)).abs() < 1e-12);
        }
    }
}

fn fusion_outputs(cfg: &ModelConfig, store: &ParamStore, zb: &[f64], zc: &[f64]) -> (Tensor, Tensor) {
    let tape = Tape::new();
    let b = Bindings::new(&tape, store);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let tokens = cgmrag::model::fuse_two_token(
        cfg,
        &b,
        tape.constant(Tensor::row(zb)),
        tape.constant(Tensor::row(zc)),
        false,
        &mut rng,
    )
    .unwrap();
    (tokens.value(), tokens.mean_rows().value())
}

#[test]
fn fusion_symmetric_and_residual_cases() {
    let cfg = ModelConfig::toy();
    let mut store = init_params(&cfg, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let v = rand_vec(&mut rng, cfg.d_model);
    let (tokens, z) = fusion_outputs(&cfg, &store, &v, &v);
    assert_eq!(tokens.row_slice(0), tokens.row_slice(1));
    assert_eq!(z.data(), tokens.row_slice(0));

    zero(&mut store, "fuse.attn.w_v");
    zero(&mut store, "fuse.attn.w_o");
    let w = rand_vec(&mut rng, cfg.d_model);
    let (_, z) = fusion_outputs(&cfg, &store, &v, &w);
    for i in 0..cfg.d_model {
        assert!((z.data()[i] - 0.5 * (v[i] + w[i])).abs() < 1e-15);
    }
}

#[test]
fn fusion_matches_scalar_hand_roll() {
    let cfg = ModelConfig {
        d_model: 2,
        n_heads: 1,
        ..ModelConfig::toy()
    };
    let mut store = init_params(&cfg, 0).unwrap();
    let wq = [0.5, -0.25, 0.75, 1.0];
    let wk = [1.0, 0.5, -0.5, 0.25];
    let wv = [0.3, 0.1, -0.2, 0.4];
    let wo = [1.0, 0.0, 0.5, -1.0];
    for (name, w) in [("w_q", wq), ("w_k", wk), ("w_v", wv), ("w_o", wo)] {
        store.set(&format!("fuse.attn.{name}"), Tensor::matrix(2, 2, w.to_vec()).unwrap()).unwrap();
    }
    let zb = [1.0, 2.0];
    let zc = [-1.0, 0.5];
    let toks = [zb, zc];
    let mul = |x: [f64; 2], w: [f64; 4]| [x[0] * w[0] + x[1] * w[2], x[0] * w[1] + x[1] * w[3]];
    let q: Vec<[f64; 2]> = toks.iter().map(|t| mul(*t, wq)).collect();
    let k: Vec<[f64; 2]> = toks.iter().map(|t| mul(*t, wk)).collect();
    let v: Vec<[f64; 2]> = toks.iter().map(|t| mul(*t, wv)).collect();
    let mut want = [[0.0; 2]; 2];
    for i in 0..2 {
        let s: Vec<f64> = (0..2)
            .map(|j| (q[i][0] * k[j][0] + q[i][1] * k[j][1]) / 2f64.sqrt())
            .collect();
        let e0 = s[0].exp();
        let e1 = s[1].exp();
        let (a0, a1) = (e0 / (e0 + e1), e1 / (e0 + e1));
        let a = [a0 * v[0][0] + a1 * v[1][0], a0 * v[0][1] + a1 * v[1][1]];
        let o = mul(a, wo);
        want[i] = [toks[i][0] + o[0], toks[i][1] + o[1]];
    }
    let (tokens, _) = fusion_outputs(&cfg, &store, &zb, &zc);
    for i in 0..2 {
        for c in 0..2 {
            assert!((tokens.get(i, c) - want[i][c]).abs() < 1e-12);
        }
    }
}

fn identity_translators(d: usize) -> (ModelConfig, ParamStore) {
    let cfg = ModelConfig {
        d_model: d,
        n_heads: 1,
        translator: TranslatorMode::Linear,
        ..ModelConfig::toy()
    };
    let mut store = init_params(&cfg, 0).unwrap();
    for p in ["trans.b2c.0", "trans.c2b.0"] {
        store.set(&format!("{p}.w"), Tensor::identity(d)).unwrap();
        zero(&mut store, &format!("{p}.b"));
    }
    (cfg, store)
}

fn ctl_value(cfg: &ModelConfig, store: &ParamStore, eb: &[f64], ec: &[f64]) -> f64 {
    let tape = Tape::new();
    let b = Bindings::new(&tape, store);
    cross_translation_loss(cfg, &b, tape.constant(Tensor::row(eb)), tape.constant(Tensor::row(ec))).item()
}

#[test]
fn translation_loss_cases() {
    let (cfg, store) = identity_translators(8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let v = rand_vec(&mut rng, 8);
    assert_eq!(ctl_value(&cfg, &store, &v, &v), 0.0);
    let mut e0 = vec![0.0; 8];
    e0[0] = 1.0;
    assert_eq!(ctl_value(&cfg, &store, &e0, &[0.0; 8]), 2.0);

    let cfg = ModelConfig::toy();
    let store = init_params(&cfg, 4).unwrap();
    let eb = rand_vec(&mut rng, 8);
    let ec = rand_vec(&mut rng, 8);
    let apply = |prefix: &str, x: &[f64]| {
        let mut h = x.to_vec();
        for l in 0..3 {
            let w = store.get(&format!("{prefix}.{l}.w")).unwrap();
            let bias = store.get(&format!("{prefix}.{l}.b")).unwrap();
            let mut out = bias.data().to_vec();
            for (c, o) in out.iter_mut().enumerate() {
                for (k, hk) in h.iter().enumerate() {
                    *o += hk * w.get(k, c);
                }
            }
            if l < 2 {
                out = out
                    .iter()
                    .map(|&u| 0.5 * u * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (u + 0.044715 * u.powi(3))).tanh()))
                    .collect();
            }
            h = out;
        }
        h
    };
    let tb = apply("trans.b2c", &eb);
    let tc = apply("trans.c2b", &ec);
    let want: f64 = tb.iter().zip(&ec).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        + tc.iter().zip(&eb).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let got = ctl_value(&cfg, &store, &eb, &ec);
    assert!((got - want).abs() < 1e-12 * want.max(1.0), "{got} vs {want}");
    assert!(got >= 0.0);
}

#[test]
fn zero_head_emits_bias() {
    let cfg = ModelConfig::toy();
    let mut store = init_params(&cfg, 2).unwrap();
    let names: Vec<String> = store.names().filter(|n| n.starts_with("head.")).map(String::from).collect();
    for n in names {
        zero(&mut store, &n);
    }
    let bias: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
    store.set("head.out.b", Tensor::new(vec![12], bias.clone()).unwrap()).unwrap();
    let model = Model { config: cfg.clone(), params: store };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p = model.predict(&rand_vec(&mut rng, 36), Some(&rand_vec(&mut rng, 768))).unwrap();
    assert_eq!(p.y_hat, bias);
}

#[test]
fn zero_lambda_total_equals_forecast() {
    let cfg = ModelConfig {
        translation_weight: 0.0,
        ..ModelConfig::toy()
    };
    let store = init_params(&cfg, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_vec(&mut rng, 36);
    let text = rand_vec(&mut rng, 768);
    let y = rand_vec(&mut rng, 12);
    let tape = Tape::new();
    let b = Bindings::new(&tape, &store);
    let (_, loss) = pretrain_loss(&cfg, &b, &x, Some(&text), &y, true, &mut rng).unwrap();
    assert!(loss.trans.item() > 0.0);
    assert_eq!(loss.total.item(), loss.forecast.item());
}

#[test]
fn eval_mode_is_deterministic_and_ignores_dropout_seed() {
    let cfg = ModelConfig {
        dropout: 0.3,
        ..ModelConfig::toy()
    };
    let store = init_params(&cfg, 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_vec(&mut rng, 36);
    let text = rand_vec(&mut rng, 768);
    let run = |seed: u64, training: bool| {
        let tape = Tape::new();
        let b = Bindings::new(&tape, &store);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let out = forward(&cfg, &b, &x, Some(&text), training, &mut r).unwrap();
        (out.y_hat.value(), out.z.value())
    };
    assert_eq!(run(1, false), run(2, false));
    assert_eq!(run(1, true), run(1, true));
    assert_ne!(run(1, true), run(2, true));
}

#[test]
fn context_toggle_controls_text_dependence() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = rand_vec(&mut rng, 36);
    let t1 = rand_vec(&mut rng, 768);
    let t2 = rand_vec(&mut rng, 768);
    let off = Model::new(
        ModelConfig {
            context_attention: false,
            translation_loss: false,
            ..ModelConfig::toy()
        },
        0,
    )
    .unwrap();
    assert!(!off.params.names().any(|n| n.starts_with("ctx.") || n.starts_with("fuse.")));
    assert_eq!(off.predict(&x, Some(&t1)).unwrap().z, off.predict(&x, Some(&t2)).unwrap().z);
    assert_eq!(off.predict(&x, None).unwrap().z, off.predict(&x, Some(&t2)).unwrap().z);
    for (ca, ctl) in [(true, true), (true, false), (false, true)] {
        let on = Model::new(
            ModelConfig {
                context_attention: ca,
                translation_loss: ctl,
                ..ModelConfig::toy()
            },
            0,
        )
        .unwrap();
        assert_ne!(on.predict(&x, Some(&t1)).unwrap().z, on.predict(&x, Some(&t2)).unwrap().z);
        assert!(on.predict(&x, None).is_err());
    }
}

/// Below this magnitude central differences at eps 1e-5 are dominated by
/// rounding, so those coordinates are compared by absolute error.
const GRAD_FLOOR: f64 = 1e-6;

fn inputs(seed: u64, cfg: &ModelConfig) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    (rand_vec(&mut rng, 36), rand_vec(&mut rng, cfg.text_dim), rand_vec(&mut rng, 12))
}

#[test]
fn composed_loss_gradients_without_translation_weight() {
    for (ca, ctl) in [(true, true), (false, true), (false, false)] {
        for seed in 0..20 {
            let cfg = ModelConfig {
                translation_weight: 0.0,
                ..tiny(ca, ctl)
            };
            let store = init_params(&cfg, seed).unwrap();
            let (x, text, y) = inputs(seed, &cfg);
            let report = grad_check_params(
                &store,
                &[],
                |b| {
                    let mut rng = ChaCha8Rng::seed_from_u64(0);
                    pretrain_loss(&cfg, b, &x, Some(&text), &y, false, &mut rng).unwrap().1.total
                },
                1e-5,
            );
            let (rel, abs) = report.split_at(GRAD_FLOOR);
            assert!(rel < 1e-4 && abs < 1e-10, "ca={ca} ctl={ctl} seed {seed}: rel {rel:e} abs {abs:e}");
        }
    }
}

#[test]
fn composed_loss_gradients_for_translators() {
    for mode in [TranslatorMode::Mlp, TranslatorMode::Linear] {
        for seed in 0..20 {
            let cfg = ModelConfig {
                translation_weight: 0.1,
                translator: mode,
                ..tiny(true, true)
            };
            let store = init_params(&cfg, seed).unwrap();
            let (x, text, y) = inputs(seed, &cfg);
            let report = grad_check_params(
                &store,
                &["trans."],
                |b| {
                    let mut rng = ChaCha8Rng::seed_from_u64(0);
                    pretrain_loss(&cfg, b, &x, Some(&text), &y, false, &mut rng).unwrap().1.total
                },
                1e-5,
            );
            assert!(report.checked > 0);
            let (rel, abs) = report.split_at(GRAD_FLOOR);
            assert!(rel < 1e-4 && abs < 1e-10, "{mode:?} seed {seed}: rel {rel:e} abs {abs:e}");
        }
    }
}

#[test]
fn checkpoint_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let model = Model::new(ModelConfig::toy(), 21).unwrap();
    model.save(&path, 21, "abc").unwrap();
    let (back, meta) = Model::load(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(meta.config_hash, "abc");
    assert_eq!(back.hash(), model.hash());
    assert!(Model::load(&dir.path().join("missing.ckpt")).is_err());
}
