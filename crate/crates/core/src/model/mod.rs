//! The sequel-aware recommendation model: layered propagation over a
//! sampled sub-graph, bilinear scoring against the item table, and a
//! softmax binary cross-entropy loss.

mod forward;
mod params;

pub use forward::{attention_pool, forward, ForwardOutput};
pub use params::{FusionStrategy, ModelConfig, ModelParams, Param, Propagation, TapeBinding};

use crate::error::{Error, Result};
use crate::graph::{ItemId, SequelAwareGraph};
use crate::sampling::SubGraph;
use crate::tensor::{Tape, TensorId};

/// Scores for every item in the vocabulary: `s_i = (h_u^T W_P) e_i`.
pub fn score_all_items(
    tape: &mut Tape,
    params: &ModelParams,
    binding: &TapeBinding,
    user_final: TensorId,
) -> Result<TensorId> {
    let width = tape.shape(user_final)[0];
    let h = tape.reshape(user_final, vec![1, width])?;
    let w_p = binding.id(params, "prediction");
    let proj = tape.matmul(h, w_p)?;
    let proj_col = tape.reshape(proj, vec![params.cfg.d, 1])?;
    let e_items = binding.id(params, "item_embeddings");
    let scores2 = tape.matmul(e_items, proj_col)?;
    let n = params.cfg.n_items;
    tape.reshape(scores2, vec![n])
}

/// Scores for an explicit candidate list, in candidate order.
pub fn score_candidates(
    tape: &mut Tape,
    params: &ModelParams,
    binding: &TapeBinding,
    user_final: TensorId,
    candidates: &[ItemId],
) -> Result<TensorId> {
    let width = tape.shape(user_final)[0];
    let h = tape.reshape(user_final, vec![1, width])?;
    let w_p = binding.id(params, "prediction");
    let proj = tape.matmul(h, w_p)?;
    let proj_col = tape.reshape(proj, vec![params.cfg.d, 1])?;
    let e_items = binding.id(params, "item_embeddings");
    let rows = tape.gather(e_items, candidates)?;
    let scores2 = tape.matmul(rows, proj_col)?;
    tape.reshape(scores2, vec![candidates.len()])
}

/// Binary cross-entropy over softmax-normalized scores with a one-hot
/// target: `-[log p_t + sum_{i != t} log(1 - p_i)]`, log arguments
/// clamped away from 0 and 1. The L2 term enters through the optimizer.
pub fn bce_loss(tape: &mut Tape, scores: TensorId, target: ItemId) -> Result<TensorId> {
    let n = tape.shape(scores)[0];
    if target >= n {
        return Err(Error::Contract(format!(
            "loss target {target} outside vocabulary of {n}"
        )));
    }
    if tape.values(scores).iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score entering the loss".into()));
    }
    let probs = tape.softmax(scores)?;
    let mut one_hot = vec![0.0; n];
    one_hot[target] = 1.0;
    let y = tape.vector(one_hot.clone())?;
    let y_inv = tape.vector(one_hot.iter().map(|v| 1.0 - v).collect())?;

    let log_p = tape.ln_clamped(probs);
    let hit_term = tape.mul(y, log_p)?;
    let one_minus_p = tape.affine(probs, -1.0, 1.0);
    let log_miss = tape.ln_clamped(one_minus_p);
    let miss_term = tape.mul(y_inv, log_miss)?;
    let total = tape.add(hit_term, miss_term)?;
    let sum = tape.sum_all(total);
    Ok(tape.affine(sum, -1.0, 0.0))
}

/// Argmax with ties broken toward the lowest item id.
pub fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Loss value and per-parameter gradients for one training example.
/// Resets and reuses the caller's tape.
pub fn example_loss_and_grads_on(
    tape: &mut Tape,
    params: &ModelParams,
    graph: &SequelAwareGraph,
    sub: &SubGraph,
    target: ItemId,
) -> Result<(f64, Vec<Vec<f64>>)> {
    tape.reset();
    let binding = params.bind(tape, true)?;
    let out = forward(tape, params, &binding, sub, graph)?;
    let scores = score_all_items(tape, params, &binding, out.user_final)?;
    let loss = bce_loss(tape, scores, target)?;
    let loss_value = tape.values(loss)[0];
    if !loss_value.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss for user {}", sub.anchor_user
        )));
    }
    tape.backward(loss)?;
    let grads = binding.read_grads(tape, params);
    Ok((loss_value, grads))
}

/// Loss value and per-parameter gradients for one training example.
pub fn example_loss_and_grads(
    params: &ModelParams,
    graph: &SequelAwareGraph,
    sub: &SubGraph,
    target: ItemId,
) -> Result<(f64, Vec<Vec<f64>>)> {
    example_loss_and_grads_on(&mut Tape::new(), params, graph, sub, target)
}

/// Forward + full-vocabulary scoring without gradients, reusing the
/// caller's tape.
pub fn predict_scores_on(
    tape: &mut Tape,
    params: &ModelParams,
    graph: &SequelAwareGraph,
    sub: &SubGraph,
) -> Result<Vec<f64>> {
    tape.reset();
    let binding = params.bind(tape, false)?;
    let out = forward(tape, params, &binding, sub, graph)?;
    let scores = score_all_items(tape, params, &binding, out.user_final)?;
    Ok(tape.values(scores).to_vec())
}

/// Forward + full-vocabulary scoring without gradients.
pub fn predict_scores(
    params: &ModelParams,
    graph: &SequelAwareGraph,
    sub: &SubGraph,
) -> Result<Vec<f64>> {
    predict_scores_on(&mut Tape::new(), params, graph, sub)
}

/// The predicted next item: argmax over the whole vocabulary.
pub fn predict_next(
    params: &ModelParams,
    graph: &SequelAwareGraph,
    sub: &SubGraph,
) -> Result<ItemId> {
    Ok(argmax_lowest(&predict_scores(params, graph, sub)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::PositionalKind;
    use crate::graph::{build_graph, Series};
    use crate::sampling::{history_at, sample_subgraph, SamplingConfig};

    pub(crate) fn toy_graph() -> SequelAwareGraph {
        // 3 users, 4 items, 1 series (items 1 -> 2).
        let interactions = vec![
            (0, 0, 1),
            (0, 1, 2),
            (0, 3, 3),
            (1, 1, 1),
            (1, 2, 2),
            (2, 0, 1),
            (2, 3, 2),
        ];
        let catalog = vec![Series { id: 0, items: vec![1, 2] }];
        build_graph(3, 4, &interactions, &catalog).unwrap()
    }

    pub(crate) fn toy_config(fusion: FusionStrategy, layers: usize) -> ModelConfig {
        ModelConfig {
            d: 4,
            layers,
            max_order: 5,
            n_users: 3,
            n_items: 4,
            fusion,
            positional: PositionalKind::Sinusoidal,
            propagation: Propagation::Attention,
        }
    }

    fn toy_subgraph(graph: &SequelAwareGraph) -> crate::sampling::SubGraph {
        let view = graph.snapshot(100);
        let cfg = SamplingConfig { m: 2, recent_n: 10, truncate_expansion: true };
        let history = history_at(&view, 0, cfg.recent_n).unwrap();
        sample_subgraph(&view, 0, &history, &cfg).unwrap()
    }

    #[test]
    fn zero_layers_final_state_is_user_embedding() {
        let graph = toy_graph();
        let sub = toy_subgraph(&graph);
        let params = ModelParams::init(toy_config(FusionStrategy::Sum, 0), 3).unwrap();
        let mut tape = Tape::new();
        let binding = params.bind(&mut tape, false).unwrap();
        let out = forward(&mut tape, &params, &binding, &sub, &graph).unwrap();
        let e_u = &params.param("user_embeddings").values[0..4];
        assert_eq!(tape.values(out.user_final), e_u);
    }

    #[test]
    fn final_state_width_is_layers_plus_one_times_d() {
        let graph = toy_graph();
        let sub = toy_subgraph(&graph);
        for layers in [0, 1, 2, 3] {
            let params = ModelParams::init(toy_config(FusionStrategy::Sum, layers), 5).unwrap();
            let mut tape = Tape::new();
            let binding = params.bind(&mut tape, false).unwrap();
            let out = forward(&mut tape, &params, &binding, &sub, &graph).unwrap();
            assert_eq!(tape.shape(out.user_final), &[(layers + 1) * 4]);
        }
    }

    #[test]
    fn all_fusion_strategies_produce_d_wide_states() {
        let graph = toy_graph();
        let sub = toy_subgraph(&graph);
        for fusion in FusionStrategy::ALL {
            let params = ModelParams::init(toy_config(fusion, 2), 7).unwrap();
            let mut tape = Tape::new();
            let binding = params.bind(&mut tape, false).unwrap();
            let out = forward(&mut tape, &params, &binding, &sub, &graph).unwrap();
            for &state in &out.item_states {
                assert_eq!(tape.shape(state)[1], 4, "{fusion:?}");
            }
        }
    }

    #[test]
    fn item_updates_stay_inside_tanh_range() {
        let graph = toy_graph();
        let sub = toy_subgraph(&graph);
        let params = ModelParams::init(toy_config(FusionStrategy::Concat, 2), 11).unwrap();
        let mut tape = Tape::new();
        let binding = params.bind(&mut tape, false).unwrap();
        let out = forward(&mut tape, &params, &binding, &sub, &graph).unwrap();
        for &state in out.item_states.iter().skip(1).chain(out.user_states.iter().skip(1)) {
            for &v in tape.values(state) {
                assert!(v > -1.0 && v < 1.0);
            }
        }
    }

    #[test]
    fn zero_update_weights_zero_states() {
        let graph = toy_graph();
        let sub = toy_subgraph(&graph);
        let mut params = ModelParams::init(toy_config(FusionStrategy::Sum, 1), 13).unwrap();
        params.values_mut("layer1.w_item_update").fill(0.0);
        params.values_mut("layer1.w_user_update").fill(0.0);
        let mut tape = Tape::new();
        let binding = params.bind(&mut tape, false).unwrap();
        let out = forward(&mut tape, &params, &binding, &sub, &graph).unwrap();
        assert!(tape.values(out.item_states[1]).iter().all(|&v| v == 0.0));
        assert!(tape.values(out.user_states[1]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn attention_weights_sum_to_one() {
        let graph = toy_graph();
        let sub = toy_subgraph(&graph);
        let params = ModelParams::init(toy_config(FusionStrategy::Sum, 2), 17).unwrap();
        let mut tape = Tape::new();
        let binding = params.bind(&mut tape, false).unwrap();
        let out = forward(&mut tape, &params, &binding, &sub, &graph).unwrap();
        assert!(!out.attention_ids.is_empty());
        for &w in &out.attention_ids {
            let vals = tape.values(w);
            let sum: f64 = vals.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(vals.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn attention_pool_singleton_and_symmetry() {
        let mut tape = Tape::new();
        // One neighbor: weight 1, pooled equals the message.
        let q = tape.vector(vec![0.3, -0.2]).unwrap();
        let msg = tape.leaf(vec![1.5, 2.5], vec![1, 2], false).unwrap();
        let (w, pooled) = attention_pool(&mut tape, q, msg).unwrap();
        assert_eq!(tape.values(w), &[1.0]);
        assert_eq!(tape.values(pooled), &[1.5, 2.5]);

        // Two identical neighbors split the weight evenly.
        let q = tape.vector(vec![0.7, 0.1]).unwrap();
        let msgs = tape.leaf(vec![2.0, 1.0, 2.0, 1.0], vec![2, 2], false).unwrap();
        let (w, pooled) = attention_pool(&mut tape, q, msgs).unwrap();
        let wv = tape.values(w);
        assert!((wv[0] - 0.5).abs() < 1e-12 && (wv[1] - 0.5).abs() < 1e-12);
        assert_eq!(tape.values(pooled), &[2.0, 1.0]);
    }

    #[test]
    fn attention_prefers_aligned_key() {
        // Query aligned with one of two orthogonal keys puts > 0.5 on it.
        let mut tape = Tape::new();
        let q = tape.vector(vec![1.0, 0.0]).unwrap();
        let msgs = tape.leaf(vec![1.0, 0.0, 0.0, 1.0], vec![2, 2], false).unwrap();
        let (w, _) = attention_pool(&mut tape, q, msgs).unwrap();
        let wv = tape.values(w);
        assert!(wv[0] > 0.5 && wv[1] < 0.5);
    }

    #[test]
    fn semantic_fusion_of_equal_inputs_is_projection() {
        let params =
            ModelParams::init(toy_config(FusionStrategy::SemanticAttention, 1), 19).unwrap();
        let mut tape = Tape::new();
        let binding = params.bind(&mut tape, false).unwrap();
        let h = tape
            .leaf(vec![0.5, -0.25, 1.0, 2.0, 0.1, 0.2, 0.3, 0.4], vec![2, 4], false)
            .unwrap();
        let (fused, _) = forward::fuse_items(
            &mut tape,
            &params,
            &binding,
            FusionStrategy::SemanticAttention,
            h,
            h,
            h,
        )
        .unwrap();
        // Expected: W_sem applied to each row, independent of the gate.
        let w = &params.param("semantic_proj").values;
        let d = 4;
        let hv = [
            [0.5, -0.25, 1.0, 2.0],
            [0.1, 0.2, 0.3, 0.4],
        ];
        for (r, row) in hv.iter().enumerate() {
            for out_i in 0..d {
                let expected: f64 = (0..d).map(|j| w[out_i * d + j] * row[j]).sum();
                let got = tape.values(fused)[r * d + out_i];
                assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
            }
        }
    }

    #[test]
    fn sequel_message_values() {
        // One user consumed both entries of a 2-item series plus the
        // head of a 3-item series; recover each item's sequel message
        // as (fused - mlp_aggregate) under Sum fusion.
        let interactions = vec![(0, 0, 1), (0, 1, 2), (0, 2, 3), (0, 3, 4)];
        let catalog = vec![
            Series { id: 0, items: vec![0, 1] },
            Series { id: 1, items: vec![2, 3, 4] },
        ];
        let graph = build_graph(1, 5, &interactions, &catalog).unwrap();
        let view = graph.snapshot(100);
        let scfg = SamplingConfig { m: 1, recent_n: 10, truncate_expansion: true };
        let history = history_at(&view, 0, scfg.recent_n).unwrap();
        let sub = sample_subgraph(&view, 0, &history, &scfg).unwrap();
        assert!(sub.contains_item(4)); // pulled in by sequel closure

        let seq_messages = |positional: PositionalKind| -> Vec<Vec<f64>> {
            let cfg = ModelConfig {
                d: 4,
                layers: 1,
                max_order: 5,
                n_users: 1,
                n_items: 5,
                fusion: FusionStrategy::Sum,
                positional,
                propagation: Propagation::Attention,
            };
            let params = ModelParams::init(cfg, 3).unwrap();
            let mut tape = Tape::new();
            let binding = params.bind(&mut tape, false).unwrap();
            let out = forward(&mut tape, &params, &binding, &sub, &graph).unwrap();
            let fused = tape.values(out.item_fused[0]).to_vec();
            let agg = tape.values(out.item_mlp_agg[0].unwrap()).to_vec();
            (0..5)
                .map(|row| {
                    (0..4)
                        .map(|c| fused[row * 4 + c] - agg[row * 4 + c])
                        .collect()
                })
                .collect()
        };

        // Identity mask: a single successor passes through unchanged.
        let params = ModelParams::init(
            ModelConfig {
                d: 4,
                layers: 1,
                max_order: 5,
                n_users: 1,
                n_items: 5,
                fusion: FusionStrategy::Sum,
                positional: PositionalKind::Ones,
                propagation: Propagation::Attention,
            },
            3,
        )
        .unwrap();
        let e = |item: usize| params.param("item_embeddings").values[item * 4..(item + 1) * 4].to_vec();
        let msgs = seq_messages(PositionalKind::Ones);
        for (a, b) in msgs[0].iter().zip(e(1)) {
            assert!((a - b).abs() < 1e-12, "single successor with identity mask");
        }
        // Last entries of their series have no successors: zero message.
        assert!(msgs[1].iter().all(|&v| v == 0.0));
        assert!(msgs[4].iter().all(|&v| v == 0.0));

        // Sinusoidal mask over two successors: hand-computed mean of the
        // two masked embedding rows (series positions 2 and 3).
        let msgs = seq_messages(PositionalKind::Sinusoidal);
        let p2 = crate::encoding::encode_sinusoidal(2, 4);
        let p3 = crate::encoding::encode_sinusoidal(3, 4);
        for c in 0..4 {
            let expected = 0.5 * (e(3)[c] * p2[c] + e(4)[c] * p3[c]);
            assert!(
                (msgs[2][c] - expected).abs() < 1e-12,
                "masked mean at {c}: {} vs {expected}",
                msgs[2][c]
            );
        }
    }

    #[test]
    fn score_zero_prediction_matrix_ties_to_lowest_id() {
        let graph = toy_graph();
        let sub = toy_subgraph(&graph);
        let mut params = ModelParams::init(toy_config(FusionStrategy::Sum, 1), 23).unwrap();
        params.values_mut("prediction").fill(0.0);
        let scores = predict_scores(&params, &graph, &sub).unwrap();
        assert!(scores.iter().all(|&s| s == 0.0));
        assert_eq!(argmax_lowest(&scores), 0);
    }

    #[test]
    fn global_item_rescale_scales_scores_linearly() {
        // Scoring is bilinear: with the user representation held fixed,
        // scaling the whole item table by c > 0 scales every score by c,
        // so the argmax is unchanged. (A per-item rescale would not be.)
        let graph = toy_graph();
        let sub = toy_subgraph(&graph);
        let mut params = ModelParams::init(toy_config(FusionStrategy::Sum, 0), 29).unwrap();
        let s0 = predict_scores(&params, &graph, &sub).unwrap();
        for v in params.values_mut("item_embeddings") {
            *v *= 3.0;
        }
        let s1 = predict_scores(&params, &graph, &sub).unwrap();
        for (a, b) in s0.iter().zip(&s1) {
            assert!((3.0 * a - b).abs() < 1e-12);
        }
        assert_eq!(argmax_lowest(&s0), argmax_lowest(&s1));
    }

    #[test]
    fn score_hand_computation_l0_d2() {
        // d=2, L=0: s_ui = e_u^T W_P e_i, all values set by hand.
        let cfg = ModelConfig {
            d: 2,
            layers: 0,
            max_order: 2,
            n_users: 1,
            n_items: 2,
            fusion: FusionStrategy::Sum,
            positional: PositionalKind::Sinusoidal,
            propagation: Propagation::Attention,
        };
        let mut params = ModelParams::init(cfg, 0).unwrap();
        params.values_mut("user_embeddings").copy_from_slice(&[1.0, 2.0]);
        params
            .values_mut("item_embeddings")
            .copy_from_slice(&[0.5, -1.0, 2.0, 1.0]);
        params
            .values_mut("prediction")
            .copy_from_slice(&[1.0, 0.0, 0.0, 1.0]); // identity
        let graph = build_graph(1, 2, &[(0, 0, 1)], &[]).unwrap();
        let view = graph.snapshot(10);
        let scfg = SamplingConfig { m: 0, recent_n: 5, truncate_expansion: true };
        let sub = sample_subgraph(&view, 0, &[0], &scfg).unwrap();
        let scores = predict_scores(&params, &graph, &sub).unwrap();
        // h_u^T W_P = [1, 2]; scores: [1*0.5 + 2*(-1), 1*2 + 2*1] = [-1.5, 4].
        assert!((scores[0] + 1.5).abs() < 1e-12);
        assert!((scores[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn bce_loss_uniform_two_items() {
        let mut tape = Tape::new();
        let scores = tape.vector(vec![0.0, 0.0]).unwrap();
        let loss = bce_loss(&mut tape, scores, 0).unwrap();
        let expected = 2.0 * std::f64::consts::LN_2;
        assert!((tape.values(loss)[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn bce_loss_perfect_prediction_tends_to_zero() {
        let mut tape = Tape::new();
        let scores = tape.vector(vec![60.0, 0.0, 0.0]).unwrap();
        let loss = bce_loss(&mut tape, scores, 0).unwrap();
        assert!(tape.values(loss)[0] < 1e-9);
        assert!(tape.values(loss)[0] >= 0.0);
    }

    #[test]
    fn bce_loss_rejects_bad_targets_and_scores() {
        let mut tape = Tape::new();
        let scores = tape.vector(vec![0.0, 1.0]).unwrap();
        assert!(matches!(bce_loss(&mut tape, scores, 5), Err(Error::Contract(_))));
        let bad = tape.vector(vec![f64::INFINITY, 0.0]).unwrap();
        assert!(matches!(bce_loss(&mut tape, bad, 0), Err(Error::Numeric(_))));
    }

    #[test]
    fn bce_loss_grad_matches_fd() {
        let xs = vec![0.4, -0.3, 0.9, 0.05];
        let eval = |scores: &[f64]| {
            let mut tape = Tape::new();
            let s = tape.vector(scores.to_vec()).unwrap();
            let loss = bce_loss(&mut tape, s, 2).unwrap();
            tape.values(loss)[0]
        };
        let mut tape = Tape::new();
        let s = tape.leaf(xs.clone(), vec![4], true).unwrap();
        let loss = bce_loss(&mut tape, s, 2).unwrap();
        tape.backward(loss).unwrap();
        let g = tape.grad(s).unwrap().to_vec();
        let h = 1e-5;
        for i in 0..xs.len() {
            let mut up = xs.clone();
            up[i] += h;
            let mut dn = xs.clone();
            dn[i] -= h;
            let fd = (eval(&up) - eval(&dn)) / (2.0 * h);
            let denom = g[i].abs().max(fd.abs()).max(1e-8);
            assert!((g[i] - fd).abs() / denom < 1e-4, "{} vs {}", g[i], fd);
        }
    }

    #[test]
    fn sum_fusion_with_zero_sequel_equals_mlp_aggregate() {
        // Remove the series: every sequel message is exactly zero and
        // Sum fusion must reproduce the MLP aggregate bit for bit,
        // for every item in every layer.
        let interactions = vec![
            (0, 0, 1),
            (0, 1, 2),
            (0, 3, 3),
            (1, 1, 1),
            (1, 2, 2),
            (2, 0, 1),
            (2, 3, 2),
        ];
        let graph = build_graph(3, 4, &interactions, &[]).unwrap();
        let view = graph.snapshot(100);
        let scfg = SamplingConfig { m: 2, recent_n: 10, truncate_expansion: true };
        let history = history_at(&view, 0, scfg.recent_n).unwrap();
        let sub = sample_subgraph(&view, 0, &history, &scfg).unwrap();
        let params = ModelParams::init(toy_config(FusionStrategy::Sum, 2), 31).unwrap();

        let mut tape = Tape::new();
        let binding = params.bind(&mut tape, false).unwrap();
        let out = forward(&mut tape, &params, &binding, &sub, &graph).unwrap();
        assert_eq!(out.item_fused.len(), 2);
        for (fused, agg) in out.item_fused.iter().zip(&out.item_mlp_agg) {
            let agg = agg.expect("sum fusion records its aggregate");
            assert_eq!(tape.values(*fused), tape.values(agg));
        }

        // With sequel edges present the two differ.
        let graph2 = toy_graph();
        let sub2 = {
            let view = graph2.snapshot(100);
            let history = history_at(&view, 0, scfg.recent_n).unwrap();
            sample_subgraph(&view, 0, &history, &scfg).unwrap()
        };
        let mut tape2 = Tape::new();
        let binding2 = params.bind(&mut tape2, false).unwrap();
        let out2 = forward(&mut tape2, &params, &binding2, &sub2, &graph2).unwrap();
        let differs = out2
            .item_fused
            .iter()
            .zip(&out2.item_mlp_agg)
            .any(|(f, a)| tape2.values(*f) != tape2.values(a.unwrap()));
        assert!(differs);
    }

    #[test]
    fn mean_fusion_is_half_of_sum() {
        let params = ModelParams::init(toy_config(FusionStrategy::Mean, 1), 37).unwrap();
        let mut tape = Tape::new();
        let binding = params.bind(&mut tape, false).unwrap();
        let h_l = tape.leaf(vec![0.3, -0.2, 0.8, 0.9], vec![1, 4], false).unwrap();
        let h_s = tape.leaf(vec![0.1, 0.4, -0.5, 0.0], vec![1, 4], false).unwrap();
        let h_q = tape.leaf(vec![0.25, 0.5, 0.75, 1.0], vec![1, 4], false).unwrap();
        let (sum, _) =
            forward::fuse_items(&mut tape, &params, &binding, FusionStrategy::Sum, h_l, h_s, h_q)
                .unwrap();
        let (mean, _) =
            forward::fuse_items(&mut tape, &params, &binding, FusionStrategy::Mean, h_l, h_s, h_q)
                .unwrap();
        for (m, s) in tape.values(mean).iter().zip(tape.values(sum)) {
            assert!((m - 0.5 * s).abs() < 1e-15);
        }
    }

    #[test]
    fn gcn_baseline_runs_and_differs_from_attention() {
        let graph = toy_graph();
        let sub = toy_subgraph(&graph);
        let mut cfg = toy_config(FusionStrategy::Sum, 2);
        cfg.propagation = Propagation::GcnBaseline;
        let params = ModelParams::init(cfg, 41).unwrap();
        let gcn_scores = predict_scores(&params, &graph, &sub).unwrap();

        let params_attn =
            ModelParams::init(toy_config(FusionStrategy::Sum, 2), 41).unwrap();
        let attention_scores = predict_scores(&params_attn, &graph, &sub).unwrap();
        assert_eq!(gcn_scores.len(), attention_scores.len());
        assert_ne!(gcn_scores, attention_scores);
    }

    #[test]
    fn forward_is_deterministic() {
        let graph = toy_graph();
        let sub = toy_subgraph(&graph);
        let params = ModelParams::init(toy_config(FusionStrategy::Sum, 2), 43).unwrap();
        let a = predict_scores(&params, &graph, &sub).unwrap();
        let b = predict_scores(&params, &graph, &sub).unwrap();
        assert_eq!(a, b);
    }
}
