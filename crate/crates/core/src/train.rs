//! Training loop: per-example sub-graph sampling, forward/backward,
//! gradient accumulation over mini-batches, Adam updates, per-epoch
//! validation Hit@K, and early stopping on validation patience.
//!
//! Every interaction in a user's train slice with at least one earlier
//! interaction is a training example (predict it from its prefix).
//! Runs are single-threaded and bit-deterministic given the seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{AdamParam, AdamState, WeightDecayMode};
use crate::data::{leave_one_out, Dataset};
use crate::encoding::PositionalKind;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, EvalTarget};
use crate::graph::{ItemId, Timestamp, UserId};
use crate::model::{
    example_loss_and_grads_on, FusionStrategy, ModelConfig, ModelParams, Propagation,
};
use crate::sampling::{history_at, sample_subgraph, SamplingConfig};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub d: usize,
    pub layers: usize,
    pub m: usize,
    pub recent_n: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub decoupled_weight_decay: bool,
    pub epochs: usize,
    /// Early-stop after this many epochs without validation improvement;
    /// `None` trains for exactly `epochs` epochs.
    pub patience: Option<usize>,
    pub fusion: FusionStrategy,
    pub positional: PositionalKind,
    pub propagation: Propagation,
    pub seed: u64,
    /// Drop the series catalog before building the graph.
    pub ablate_sequels: bool,
    /// K for the per-epoch validation metric.
    pub val_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 50,
            layers: 3,
            m: 4,
            recent_n: 50,
            lr: 0.01,
            batch_size: 50,
            weight_decay: 1e-4,
            decoupled_weight_decay: false,
            epochs: 30,
            patience: Some(5),
            fusion: FusionStrategy::Sum,
            positional: PositionalKind::Sinusoidal,
            propagation: Propagation::Attention,
            seed: 1,
            ablate_sequels: false,
            val_k: 10,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self, n_users: usize, n_items: usize) -> ModelConfig {
        ModelConfig {
            d: self.d,
            layers: self.layers,
            max_order: self.recent_n,
            n_users,
            n_items,
            fusion: self.fusion,
            positional: self.positional,
            propagation: self.propagation,
        }
    }

    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            m: self.m,
            recent_n: self.recent_n,
            truncate_expansion: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_hit: f64,
    pub val_ndcg: f64,
    pub examples: usize,
    pub skipped: usize,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Set when training aborted on numeric divergence; `params` then
    /// holds the last good (end-of-epoch) state.
    pub aborted: Option<String>,
}

/// One (user, snapshot time, target item) training example.
fn training_targets(split_train: &[Vec<(ItemId, Timestamp)>]) -> Vec<(UserId, Timestamp, ItemId)> {
    let mut out = Vec::new();
    for (user, items) in split_train.iter().enumerate() {
        for &(item, t) in items.iter().skip(1) {
            out.push((user, t, item));
        }
    }
    out
}

pub fn train(
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Config("batch_size and epochs must be >= 1".into()));
    }
    let graph = if cfg.ablate_sequels {
        dataset.build_graph_ablated()?
    } else {
        dataset.build_graph()?
    };
    let split = leave_one_out(dataset);
    let mut targets = training_targets(&split.train);
    if targets.is_empty() {
        return Err(Error::Data(
            "no trainable examples (every user has fewer than 2 train interactions)".into(),
        ));
    }

    let mut params = ModelParams::init(cfg.model_config(dataset.n_users, dataset.n_items), cfg.seed)?;
    let mut adam = AdamState::new(&params.sizes(), cfg.lr, cfg.weight_decay);
    if cfg.decoupled_weight_decay {
        adam.mode = WeightDecayMode::Decoupled;
    }
    let sampling = cfg.sampling();
    let val_cfg = EvalConfig {
        ks: vec![cfg.val_k],
        exclude_seen: true,
        sampling,
        per_user: false,
        ..EvalConfig::default()
    };

    let mut shuffle_rng = ChaCha12Rng::seed_from_u64(cfg.seed ^ 0x5EED_5EED_5EED_5EED);
    let mut tape = crate::tensor::Tape::new();
    let mut log: Vec<EpochRecord> = Vec::new();
    let mut best_epoch = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    let mut best_params: Option<ModelParams> = None;
    let mut last_good = params.clone();
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        targets.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut n_examples = 0usize;
        let mut n_skipped = 0usize;

        for chunk in targets.chunks(cfg.batch_size) {
            let mut grad_accum: Vec<Vec<f64>> =
                params.iter().map(|p| vec![0.0; p.numel()]).collect();
            let mut batch_n = 0usize;
            for &(user, t_k, target) in chunk {
                let view = graph.snapshot(t_k);
                let history = history_at(&view, user, cfg.recent_n)?;
                if history.is_empty() {
                    // Timestamp ties can empty a strict-time prefix.
                    n_skipped += 1;
                    continue;
                }
                let sub = sample_subgraph(&view, user, &history, &sampling)?;
                match example_loss_and_grads_on(&mut tape, &params, &graph, &sub, target) {
                    Ok((loss, grads)) => {
                        epoch_loss += loss;
                        batch_n += 1;
                        for (acc, g) in grad_accum.iter_mut().zip(grads) {
                            for (a, v) in acc.iter_mut().zip(g) {
                                *a += v;
                            }
                        }
                    }
                    Err(Error::Numeric(msg)) => {
                        return Ok(TrainOutcome {
                            params: last_good,
                            log,
                            best_epoch,
                            stopped_early,
                            aborted: Some(format!("epoch {epoch}: {msg}")),
                        });
                    }
                    Err(other) => return Err(other),
                }
            }
            if batch_n == 0 {
                continue;
            }
            n_examples += batch_n;
            let scale = 1.0 / batch_n as f64;
            for acc in &mut grad_accum {
                for v in acc.iter_mut() {
                    *v *= scale;
                }
            }
            let step = adam.step(params.params_mut().iter_mut().zip(&grad_accum).map(
                |(p, g)| AdamParam {
                    name: &p.name,
                    values: &mut p.values,
                    grad: g,
                },
            ));
            match step {
                Ok(()) => {}
                Err(Error::Numeric(msg)) => {
                    return Ok(TrainOutcome {
                        params: last_good,
                        log,
                        best_epoch,
                        stopped_early,
                        aborted: Some(format!("epoch {epoch}: {msg}")),
                    });
                }
                Err(other) => return Err(other),
            }
        }

        if n_examples == 0 {
            return Err(Error::Data(
                "every training example was skipped (timestamp ties empty all strict-time prefixes)"
                    .into(),
            ));
        }
        let val = evaluate(&params, &graph, &split, EvalTarget::Validation, &val_cfg)?;
        let record = EpochRecord {
            epoch,
            train_loss: epoch_loss / n_examples as f64,
            val_hit: val.hit[&cfg.val_k],
            val_ndcg: val.ndcg[&cfg.val_k],
            examples: n_examples,
            skipped: n_skipped,
        };
        on_epoch(&record);
        log.push(record);
        last_good = params.clone();

        let val_hit = log.last().unwrap().val_hit;
        if val_hit > best_val {
            best_val = val_hit;
            best_epoch = epoch;
            best_params = Some(params.clone());
        } else if let Some(p) = cfg.patience {
            if epoch - best_epoch >= p {
                stopped_early = true;
                break;
            }
        }
    }

    let final_params = match (cfg.patience, best_params) {
        (Some(_), Some(best)) => best,
        _ => params,
    };
    Ok(TrainOutcome {
        params: final_params,
        log,
        best_epoch,
        stopped_early,
        aborted: None,
    })
}
