//! Layers built on the tape: linear, layer norm, dropout, positional
//! encoding, MLP, LSTM and multi-head attention.
//!
//! Each layer has an `init_*` function that creates its parameters in a
//! [`ParamStore`] under a name prefix, and a forward function that reads
//! them back through [`Bindings`].

use rand::Rng;

use crate::error::{NumericsError, Result};
use crate::params::{Bindings, ParamStore};
use crate::tape::{concat_cols, concat_rows, Var};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-12;

pub fn init_linear(store: &mut ParamStore, prefix: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) {
    store.init_uniform(&format!("{prefix}.w"), d_in, d_out, rng);
    store.init_zeros(&format!("{prefix}.b"), &[d_out]);
}

/// `x W + b` applied to every row of `x`.
pub fn linear<'t>(b: &Bindings<'t, '_>, prefix: &str, x: Var<'t>) -> Var<'t> {
    x.matmul(b.param(&format!("{prefix}.w")))
        .add_row(b.param(&format!("{prefix}.b")))
}

pub fn init_layer_norm(store: &mut ParamStore, prefix: &str, d: usize) {
    store.init_full(&format!("{prefix}.gain"), &[d], 1.0);
    store.init_zeros(&format!("{prefix}.bias"), &[d]);
}

pub fn layer_norm<'t>(b: &Bindings<'t, '_>, prefix: &str, x: Var<'t>) -> Var<'t> {
    x.layer_norm_rows(LAYER_NORM_EPS)
        .mul_row(b.param(&format!("{prefix}.gain")))
        .add_row(b.param(&format!("{prefix}.bias")))
}

/// Inverted dropout. Identity when `training` is false or `p == 0`.
pub fn dropout<'t>(x: Var<'t>, p: f64, training: bool, rng: &mut impl Rng) -> Result<Var<'t>> {
    if !(0.0..1.0).contains(&p) {
        return Err(NumericsError::DropoutProbability(p));
    }
    if !training || p == 0.0 {
        return Ok(x);
    }
    let shape = x.shape();
    let n: usize = shape.iter().product();
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let mask = x.tape().constant(Tensor::new(shape, mask).unwrap());
    Ok(x.mul(mask))
}

/// Sinusoidal positional encoding `[n_positions, d]`: sin on even columns,
/// cos on odd columns, frequencies `1 / 10000^(2i/d)`.
pub fn sinusoidal_pe(n_positions: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; n_positions * d];
    for pos in 0..n_positions {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d as f64);
            data[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::matrix(n_positions, d, data).unwrap()
}

/// MLP with layer widths `dims` (input first). GELU between layers, none after the last.
pub fn init_mlp(store: &mut ParamStore, prefix: &str, dims: &[usize], rng: &mut impl Rng) {
    for (i, pair) in dims.windows(2).enumerate() {
        init_linear(store, &format!("{prefix}.{i}"), pair[0], pair[1], rng);
    }
}

pub fn mlp<'t>(b: &Bindings<'t, '_>, prefix: &str, x: Var<'t>, n_layers: usize) -> Var<'t> {
    let mut h = x;
    for i in 0..n_layers {
        h = linear(b, &format!("{prefix}.{i}"), h);
        if i + 1 < n_layers {
            h = h.gelu();
        }
    }
    h
}

/// Stacked LSTM parameters. Gate order in the packed matrices is
/// input, forget, candidate, output. Forget-gate bias starts at 1.
pub fn init_lstm(
    store: &mut ParamStore,
    prefix: &str,
    d_in: usize,
    hidden: usize,
    layers: usize,
    rng: &mut impl Rng,
) {
    for l in 0..layers {
        let input = if l == 0 { d_in } else { hidden };
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut uniform = |rows: usize| {
            let data = (0..rows * 4 * hidden).map(|_| rng.random_range(-bound..bound)).collect();
            Tensor::matrix(rows, 4 * hidden, data).unwrap()
        };
        store.insert(format!("{prefix}.{l}.w_ih"), uniform(input));
        store.insert(format!("{prefix}.{l}.w_hh"), uniform(hidden));
        let mut bias = vec![0.0; 4 * hidden];
        for v in &mut bias[hidden..2 * hidden] {
            *v = 1.0;
        }
        store.insert(format!("{prefix}.{l}.b"), Tensor::new(vec![4 * hidden], bias).unwrap());
    }
}

/// One LSTM cell step. `x` is `[1, d_in]`; returns `(h, c)`.
pub fn lstm_cell<'t>(
    b: &Bindings<'t, '_>,
    layer_prefix: &str,
    x: Var<'t>,
    h: Var<'t>,
    c: Var<'t>,
    hidden: usize,
) -> (Var<'t>, Var<'t>) {
    let gates = x
        .matmul(b.param(&format!("{layer_prefix}.w_ih")))
        .add(h.matmul(b.param(&format!("{layer_prefix}.w_hh"))))
        .add_row(b.param(&format!("{layer_prefix}.b")));
    let i = gates.slice_cols(0, hidden).sigmoid();
    let f = gates.slice_cols(hidden, hidden).sigmoid();
    let g = gates.slice_cols(2 * hidden, hidden).tanh();
    let o = gates.slice_cols(3 * hidden, hidden).sigmoid();
    let c_next = f.mul(c).add(i.mul(g));
    let h_next = o.mul(c_next.tanh());
    (h_next, c_next)
}

/// Runs a stacked LSTM over `seq` (`[T, d_in]`), zero initial state.
/// Returns the top layer outputs `[T, hidden]` and its final hidden state `[1, hidden]`.
pub fn lstm_forward<'t>(
    b: &Bindings<'t, '_>,
    prefix: &str,
    seq: Var<'t>,
    layers: usize,
    hidden: usize,
) -> (Var<'t>, Var<'t>) {
    let tape = b.tape();
    let steps = seq.shape()[0];
    assert!(steps >= 1, "lstm needs at least one time step");
    let mut inputs: Vec<Var<'t>> = (0..steps).map(|t| seq.slice_rows(t, 1)).collect();
    for l in 0..layers {
        let layer_prefix = format!("{prefix}.{l}");
        let mut h = tape.constant(Tensor::zeros(&[1, hidden]));
        let mut c = tape.constant(Tensor::zeros(&[1, hidden]));
        let mut outputs = Vec::with_capacity(steps);
        for x in &inputs {
            let (hn, cn) = lstm_cell(b, &layer_prefix, *x, h, c, hidden);
            h = hn;
            c = cn;
            outputs.push(h);
        }
        inputs = outputs;
    }
    let last = *inputs.last().unwrap();
    (concat_rows(&inputs), last)
}

/// Head layout of a multi-head attention block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionShape {
    pub d_model: usize,
    pub n_heads: usize,
    pub head_dim: usize,
}

impl AttentionShape {
    /// Heads split the model width: `head_dim = d_model / n_heads`.
    pub fn split(d_model: usize, n_heads: usize) -> Result<Self> {
        if n_heads == 0 || d_model % n_heads != 0 {
            return Err(NumericsError::IndivisibleWidth {
                width: d_model,
                heads: n_heads,
            });
        }
        Ok(Self {
            d_model,
            n_heads,
            head_dim: d_model / n_heads,
        })
    }

    /// Every head projects to the full model width.
    pub fn full_width(d_model: usize, n_heads: usize) -> Self {
        Self {
            d_model,
            n_heads,
            head_dim: d_model,
        }
    }

    pub fn inner(&self) -> usize {
        self.n_heads * self.head_dim
    }
}

/// Query/key/value projections `[d, H*head_dim]` (head `h` owns columns
/// `h*head_dim..(h+1)*head_dim`) and output projection `[H*head_dim, d]`. No biases.
pub fn init_attention(store: &mut ParamStore, prefix: &str, shape: AttentionShape, rng: &mut impl Rng) {
    let inner = shape.inner();
    store.init_uniform(&format!("{prefix}.w_q"), shape.d_model, inner, rng);
    store.init_uniform(&format!("{prefix}.w_k"), shape.d_model, inner, rng);
    store.init_uniform(&format!("{prefix}.w_v"), shape.d_model, inner, rng);
    store.init_uniform(&format!("{prefix}.w_o"), inner, shape.d_model, rng);
}

/// Scaled dot-product attention per head, softmax(Q K^T / sqrt(head_dim)) V,
/// heads concatenated and projected by `w_o`.
pub fn multi_head_attention<'t>(
    b: &Bindings<'t, '_>,
    prefix: &str,
    query: Var<'t>,
    key_value: Var<'t>,
    shape: AttentionShape,
) -> Var<'t> {
    let q = query.matmul(b.param(&format!("{prefix}.w_q")));
    let k = key_value.matmul(b.param(&format!("{prefix}.w_k")));
    let v = key_value.matmul(b.param(&format!("{prefix}.w_v")));
    let scale = 1.0 / (shape.head_dim as f64).sqrt();
    let heads: Vec<Var<'t>> = (0..shape.n_heads)
        .map(|h| {
            let start = h * shape.head_dim;
            let qh = q.slice_cols(start, shape.head_dim);
            let kh = k.slice_cols(start, shape.head_dim);
            let vh = v.slice_cols(start, shape.head_dim);
            let weights = qh.matmul(kh.transpose()).scale(scale).softmax_rows();
            weights.matmul(vh)
        })
        .collect();
    let joined = if heads.len() == 1 { heads[0] } else { concat_cols(&heads) };
    joined.matmul(b.param(&format!("{prefix}.w_o")))
}
