use cgmrag_numerics::nn;
use cgmrag_numerics::{concat_cols, concat_rows, Bindings, ParamStore, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::registry::Registry;

/// Retrieval adapter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterConfig {
    /// Neighbors per query.
    pub k: usize,
    /// Heads per cross-attention branch.
    pub m_heads: usize,
    /// Registered aggregator name.
    pub aggregator: String,
    /// Hidden widths of the forecast MLP.
    pub head_hidden: Vec<usize>,
    /// LSTM width of the `lstm` aggregator.
    pub agg_hidden: usize,
    /// Skip neighbors from the query's own patient.
    pub exclude_same_patient: bool,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            k: 3,
            m_heads: 4,
            aggregator: "mean".into(),
            head_hidden: vec![512, 256],
            agg_hidden: 256,
            exclude_same_patient: false,
        }
    }
}

impl AdapterConfig {
    pub fn toy() -> Self {
        Self {
            m_heads: 1,
            head_hidden: vec![16, 8],
            agg_hidden: 8,
            ..Self::default()
        }
    }
}

/// Combines the K branch outputs `[1, d]` into `z_rag`.
pub trait Aggregator: Send + Sync {
    fn name(&self) -> &'static str;
    fn init(&self, store: &mut ParamStore, d: usize, k: usize, rng: &mut ChaCha8Rng);
    fn aggregate<'t>(&self, b: &Bindings<'t, '_>, branches: &[Var<'t>]) -> Var<'t>;
}

pub struct MeanAggregator;

impl Aggregator for MeanAggregator {
    fn name(&self) -> &'static str {
        "mean"
    }

    fn init(&self, _: &mut ParamStore, _: usize, _: usize, _: &mut ChaCha8Rng) {}

    fn aggregate<'t>(&self, _: &Bindings<'t, '_>, branches: &[Var<'t>]) -> Var<'t> {
        concat_rows(branches).mean_rows()
    }
}

/// Learned weights `softmax(rag.agg.logits)`, uniform at init.
pub struct SoftmaxAggregator;

impl Aggregator for SoftmaxAggregator {
    fn name(&self) -> &'static str {
        "softmax"
    }

    fn init(&self, store: &mut ParamStore, _: usize, k: usize, _: &mut ChaCha8Rng) {
        store.init_zeros("rag.agg.logits", &[1, k]);
    }

    fn aggregate<'t>(&self, b: &Bindings<'t, '_>, branches: &[Var<'t>]) -> Var<'t> {
        let w = b.param("rag.agg.logits").slice_cols(0, branches.len()).softmax_rows();
        w.matmul(concat_rows(branches))
    }
}

/// LSTM over the branches in similarity order, last state projected to `d`.
pub struct LstmAggregator {
    pub hidden: usize,
}

impl Aggregator for LstmAggregator {
    fn name(&self) -> &'static str {
        "lstm"
    }

    fn init(&self, store: &mut ParamStore, d: usize, _: usize, rng: &mut ChaCha8Rng) {
        nn::init_lstm(store, "rag.agg.lstm", d, self.hidden, 1, rng);
        nn::init_linear(store, "rag.agg.out", self.hidden, d, rng);
    }

    fn aggregate<'t>(&self, b: &Bindings<'t, '_>, branches: &[Var<'t>]) -> Var<'t> {
        let (_, h) = nn::lstm_forward(b, "rag.agg.lstm", concat_rows(branches), 1, self.hidden);
        nn::linear(b, "rag.agg.out", h)
    }
}

pub fn aggregator_registry() -> Registry<dyn Aggregator, AdapterConfig> {
    let mut r: Registry<dyn Aggregator, AdapterConfig> = Registry::new("aggregator");
    r.register("mean", |_| Ok(Box::new(MeanAggregator)));
    r.register("softmax", |_| Ok(Box::new(SoftmaxAggregator)));
    r.register("lstm", |c| Ok(Box::new(LstmAggregator { hidden: c.agg_hidden })));
    r
}

/// K cross-attention branches, an aggregator and the forecast MLP.
pub struct Adapter {
    pub config: AdapterConfig,
    pub d: usize,
    pub horizon: usize,
    aggregator: Box<dyn Aggregator>,
}

impl Adapter {
    pub fn new(config: AdapterConfig, d: usize, horizon: usize) -> Result<Self> {
        if config.k == 0 || config.m_heads == 0 {
            return Err(CoreError::Config("adapter needs k >= 1 and m_heads >= 1".into()));
        }
        let aggregator = aggregator_registry().build(&config.aggregator, &config)?;
        Ok(Self {
            config,
            d,
            horizon,
            aggregator,
        })
    }

    pub fn aggregator(&self) -> &dyn Aggregator {
        self.aggregator.as_ref()
    }

    fn head_dims(&self) -> Vec<usize> {
        let mut dims = vec![2 * self.d];
        dims.extend(&self.config.head_hidden);
        dims.push(self.horizon);
        dims
    }

    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let d = self.d;
        let inner = self.config.m_heads * d;
        for i in 0..self.config.k {
            for w in ["w_q", "w_k", "w_v"] {
                s.init_uniform(&format!("rag.branch{i}.attn.{w}"), d, inner, &mut rng);
            }
            s.init_uniform(&format!("rag.branch{i}.w_h"), inner, d, &mut rng);
        }
        self.aggregator.init(&mut s, d, self.config.k, &mut rng);
        nn::init_mlp(&mut s, "rag.head", &self.head_dims(), &mut rng);
        s
    }

    /// Query `[1, d]` attends to one neighbor `[1, d]` in every head; heads
    /// are joined and projected by `w_h`.
    pub fn branch<'t>(&self, b: &Bindings<'t, '_>, i: usize, z_query: Var<'t>, z_neighbor: Var<'t>) -> Var<'t> {
        let d = self.d;
        let p = format!("rag.branch{i}");
        let q = z_query.matmul(b.param(&format!("{p}.attn.w_q")));
        let k = z_neighbor.matmul(b.param(&format!("{p}.attn.w_k")));
        let v = z_neighbor.matmul(b.param(&format!("{p}.attn.w_v")));
        let scale = 1.0 / (d as f64).sqrt();
        let heads: Vec<Var<'t>> = (0..self.config.m_heads)
            .map(|h| {
                let qh = q.slice_cols(h * d, d);
                let kh = k.slice_cols(h * d, d);
                let vh = v.slice_cols(h * d, d);
                qh.matmul(kh.transpose()).scale(scale).softmax_rows().matmul(vh)
            })
            .collect();
        let joined = if heads.len() == 1 { heads[0] } else { concat_cols(&heads) };
        joined.matmul(b.param(&format!("{p}.w_h")))
    }

    pub fn aggregate<'t>(&self, b: &Bindings<'t, '_>, z_query: Var<'t>, neighbors: &[Var<'t>]) -> Result<Var<'t>> {
        if neighbors.is_empty() || neighbors.len() > self.config.k {
            return Err(CoreError::Config(format!(
                "adapter takes 1..={} neighbors, got {}",
                self.config.k,
                neighbors.len()
            )));
        }
        let branches: Vec<Var<'t>> = neighbors
            .iter()
            .enumerate()
            .map(|(i, zj)| self.branch(b, i, z_query, *zj))
            .collect();
        Ok(self.aggregator.aggregate(b, &branches))
    }

    /// `f_MLP([z_query ; z_rag])`, `[1, horizon]`.
    pub fn forecast<'t>(&self, b: &Bindings<'t, '_>, z_query: Var<'t>, neighbors: &[Var<'t>]) -> Result<Var<'t>> {
        let z_rag = self.aggregate(b, z_query, neighbors)?;
        let n_layers = self.config.head_hidden.len() + 1;
        Ok(nn::mlp(b, "rag.head", concat_cols(&[z_query, z_rag]), n_layers))
    }

    /// Forecast from plain vectors; neighbors are constants.
    pub fn forecast_from<'t>(&self, b: &Bindings<'t, '_>, z_query: &[f64], neighbors: &[&[f64]]) -> Result<Var<'t>> {
        let tape = b.tape();
        let q = tape.constant(Tensor::row(z_query));
        let n: Vec<Var<'t>> = neighbors.iter().map(|z| tape.constant(Tensor::row(z))).collect();
        self.forecast(b, q, &n)
    }
}
