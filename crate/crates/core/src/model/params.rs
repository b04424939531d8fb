//! Learnable parameters: embedding tables, per-layer transforms,
//! relative-order tables, fusion weights, and the prediction matrix.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoding::PositionalKind;
use crate::error::{Error, Result};
use crate::tensor::{Tape, TensorId};

/// How the three item representations (long-term, short-term, sequel)
/// are combined into one vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FusionStrategy {
    #[default]
    Sum,
    Mean,
    Concat,
    SemanticAttention,
}

impl FusionStrategy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(FusionStrategy::Sum),
            "mean" => Ok(FusionStrategy::Mean),
            "concat" => Ok(FusionStrategy::Concat),
            "semantic" => Ok(FusionStrategy::SemanticAttention),
            other => Err(Error::Config(format!(
                "unknown fusion strategy '{other}' (expected sum|mean|concat|semantic)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FusionStrategy::Sum => "sum",
            FusionStrategy::Mean => "mean",
            FusionStrategy::Concat => "concat",
            FusionStrategy::SemanticAttention => "semantic",
        }
    }

    pub const ALL: [FusionStrategy; 4] = [
        FusionStrategy::Sum,
        FusionStrategy::Mean,
        FusionStrategy::Concat,
        FusionStrategy::SemanticAttention,
    ];
}

/// Message-passing rule: the attention-based propagation, or the plain
/// mean-aggregation baseline (no attention, fusion, or sequel messages).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Propagation {
    #[default]
    Attention,
    GcnBaseline,
}

impl Propagation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(Propagation::Attention),
            "gcn" => Ok(Propagation::GcnBaseline),
            other => Err(Error::Config(format!(
                "unknown propagation '{other}' (expected attention|gcn)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Propagation::Attention => "attention",
            Propagation::GcnBaseline => "gcn",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Embedding dimension (even).
    pub d: usize,
    /// Number of propagation layers L.
    pub layers: usize,
    /// Size of the relative-order embedding tables; order ranks clamp
    /// to this.
    pub max_order: usize,
    pub n_users: usize,
    pub n_items: usize,
    pub fusion: FusionStrategy,
    pub positional: PositionalKind,
    pub propagation: Propagation,
}

impl ModelConfig {
    fn validate(&self) -> Result<()> {
        if self.d < 2 || !self.d.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "embedding dimension must be even and >= 2, got {}",
                self.d
            )));
        }
        if self.max_order == 0 || self.n_users == 0 || self.n_items == 0 {
            return Err(Error::Config(
                "max_order, n_users and n_items must all be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Param {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// All learnable weights in a stable order (the order fixes both the
/// optimizer-state layout and the checkpoint layout).
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub cfg: ModelConfig,
    params: Vec<Param>,
    by_name: BTreeMap<String, usize>,
}

fn declared_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.d;
    let mut out = vec![
        ("user_embeddings".to_string(), vec![cfg.n_users, d]),
        ("item_embeddings".to_string(), vec![cfg.n_items, d]),
    ];
    for l in 1..=cfg.layers {
        out.push((format!("layer{l}.w_item_transform"), vec![d, d]));
        out.push((format!("layer{l}.w_user_transform"), vec![d, d]));
        out.push((format!("layer{l}.w_item_update"), vec![d, 2 * d]));
        out.push((format!("layer{l}.w_user_update"), vec![d, 3 * d]));
    }
    out.push(("order_emb_item_in_user".to_string(), vec![cfg.max_order, d]));
    out.push(("order_emb_user_in_item".to_string(), vec![cfg.max_order, d]));
    out.push(("agg_mlp_weight".to_string(), vec![d, 2 * d]));
    out.push(("agg_mlp_bias".to_string(), vec![d]));
    out.push(("w_concat_fusion".to_string(), vec![d, 3 * d]));
    out.push(("semantic_proj".to_string(), vec![d, d]));
    out.push(("semantic_gate".to_string(), vec![3]));
    out.push(("prediction".to_string(), vec![(cfg.layers + 1) * d, d]));
    out
}

impl ModelParams {
    /// All weights drawn i.i.d. Normal(0, 0.01^2); bit-identical per seed.
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.01).expect("valid stddev");
        let mut params = Vec::new();
        let mut by_name = BTreeMap::new();
        for (name, shape) in declared_shapes(&cfg) {
            let n: usize = shape.iter().product();
            let values: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
            by_name.insert(name.clone(), params.len());
            params.push(Param { name, shape, values });
        }
        Ok(ModelParams { cfg, params, by_name })
    }

    /// Rebuild from externally supplied tensors (checkpoint loading).
    /// Shapes must match the config's declared layout exactly.
    pub fn from_parts(cfg: ModelConfig, parts: Vec<Param>) -> Result<Self> {
        cfg.validate()?;
        let declared = declared_shapes(&cfg);
        if parts.len() != declared.len() {
            return Err(Error::Data(format!(
                "expected {} parameter tensors, got {}",
                declared.len(),
                parts.len()
            )));
        }
        let mut by_name = BTreeMap::new();
        for (i, (p, (name, shape))) in parts.iter().zip(&declared).enumerate() {
            if &p.name != name || &p.shape != shape || p.values.len() != p.numel() {
                return Err(Error::Data(format!(
                    "parameter {i}: expected '{name}' with shape {shape:?}, got '{}' {:?}",
                    p.name, p.shape
                )));
            }
            by_name.insert(p.name.clone(), i);
        }
        Ok(ModelParams { cfg, params: parts, by_name })
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.params.iter().map(Param::numel).collect()
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(Param::numel).sum()
    }

    pub fn index_of(&self, name: &str) -> usize {
        self.by_name[name]
    }

    pub fn param(&self, name: &str) -> &Param {
        &self.params[self.by_name[name]]
    }

    pub fn values_mut(&mut self, name: &str) -> &mut [f64] {
        let idx = self.by_name[name];
        &mut self.params[idx].values
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    /// Push every parameter onto a tape as a leaf tensor.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Result<TapeBinding> {
        let mut ids = Vec::with_capacity(self.params.len());
        for p in &self.params {
            ids.push(tape.leaf_from(&p.values, &p.shape, requires_grad)?);
        }
        Ok(TapeBinding { ids })
    }
}

/// Tape handles of all parameters, aligned with the parameter order.
pub struct TapeBinding {
    ids: Vec<TensorId>,
}

impl TapeBinding {
    pub fn id(&self, params: &ModelParams, name: &str) -> TensorId {
        self.ids[params.index_of(name)]
    }

    pub fn ids(&self) -> &[TensorId] {
        &self.ids
    }

    /// Collect gradients per parameter after a backward pass; missing
    /// gradients come back as zeros.
    pub fn read_grads(&self, tape: &Tape, params: &ModelParams) -> Vec<Vec<f64>> {
        self.ids
            .iter()
            .zip(params.iter())
            .map(|(&id, p)| match tape.grad(id) {
                Some(g) => g.to_vec(),
                None => vec![0.0; p.numel()],
            })
            .collect()
    }
}
