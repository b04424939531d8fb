//! Layered message passing over a sampled sub-graph.
//!
//! Each layer computes, from the previous layer's node states: sequel
//! messages per item (mean over series successors of the successor
//! state masked, or rotated, by its series position), long-term
//! aggregates (scaled dot-product attention over transformed neighbor
//! messages plus relative-order embeddings, query = the node's
//! previous-layer state), and short-term aggregates (attention over raw
//! neighbor states, query = the most recent neighbor's previous-layer
//! state); it then fuses the three item representations and updates
//! every node through a tanh transform of the concatenated inputs.
//! Empty neighborhoods contribute zero vectors instead of erroring;
//! only the anchor user is required to be non-isolated.

use crate::encoding::{PositionalEncoder, PositionalKind};
use crate::error::{Error, Result};
use crate::graph::{ItemId, ItemKind, UserId};
use crate::model::params::{FusionStrategy, ModelParams, Propagation, TapeBinding};
use crate::sampling::SubGraph;
use crate::tensor::{Tape, TensorId};

pub struct ForwardOutput {
    /// Concatenation of the anchor user's states across layers 0..=L.
    pub user_final: TensorId,
    /// Per-layer node state matrices ([n_users, d] / [n_items, d]).
    pub user_states: Vec<TensorId>,
    pub item_states: Vec<TensorId>,
    /// Fused item representations per layer, and the MLP aggregate they
    /// were built from (Sum/Mean fusion only). Diagnostic handles.
    pub item_fused: Vec<TensorId>,
    pub item_mlp_agg: Vec<Option<TensorId>>,
    /// Softmax outputs of every attention pool, for diagnostics.
    pub attention_ids: Vec<TensorId>,
    pub isolated_users: usize,
    pub isolated_items: usize,
}

/// Scaled dot-product attention of one query over a [k, d] message
/// matrix (query: any tensor with d values). Returns
/// (weights [k], pooled [d]).
pub fn attention_pool(
    tape: &mut Tape,
    query: TensorId,
    messages: TensorId,
) -> Result<(TensorId, TensorId)> {
    let d = tape.shape(messages)[1];
    let logits = tape.mat_vec_scaled(messages, query, 1.0 / (d as f64).sqrt())?;
    let weights = tape.softmax(logits)?;
    let pooled = tape.weighted_rows(messages, weights)?;
    Ok((weights, pooled))
}

/// Stack `n` d-vectors into an [n, d] matrix.
fn stack_rows(tape: &mut Tape, rows: &[TensorId], d: usize) -> Result<TensorId> {
    let flat = tape.concat(rows)?;
    tape.reshape(flat, vec![rows.len(), d])
}

/// Repeat a d-vector as the rows of an [n, d] matrix.
fn repeat_row(tape: &mut Tape, row: TensorId, n: usize, d: usize) -> Result<TensorId> {
    let copies = vec![row; n];
    stack_rows(tape, &copies, d)
}

/// Combine long-term, short-term, and sequel item representations.
/// Returns the fused matrix and, for Sum/Mean, the MLP aggregate it was
/// built from.
pub(crate) fn fuse_items(
    tape: &mut Tape,
    params: &ModelParams,
    binding: &TapeBinding,
    fusion: FusionStrategy,
    h_long: TensorId,
    h_short: TensorId,
    h_seq: TensorId,
) -> Result<(TensorId, Option<TensorId>)> {
    match fusion {
        FusionStrategy::Sum | FusionStrategy::Mean => {
            let agg = aggregate_mlp(tape, params, binding, h_long, h_short)?;
            let sum = tape.add(agg, h_seq)?;
            let fused = match fusion {
                FusionStrategy::Mean => tape.affine(sum, 0.5, 0.0),
                _ => sum,
            };
            Ok((fused, Some(agg)))
        }
        FusionStrategy::Concat => {
            let cat = tape.concat(&[h_long, h_short, h_seq])?;
            let w = binding.id(params, "w_concat_fusion");
            let wt = tape.transpose(w)?;
            let lin = tape.matmul(cat, wt)?;
            Ok((tape.relu(lin), None))
        }
        FusionStrategy::SemanticAttention => {
            // One shared projection for all three semantic vectors, so a
            // convex combination of equal inputs reproduces the common
            // projected vector exactly.
            let w = binding.id(params, "semantic_proj");
            let wt = tape.transpose(w)?;
            let gate_logits = binding.id(params, "semantic_gate");
            let gate = tape.softmax(gate_logits)?;
            let mut fused: Option<TensorId> = None;
            for (slot, h) in [h_long, h_short, h_seq].into_iter().enumerate() {
                let proj = tape.matmul(h, wt)?;
                let g = tape.gather(gate, &[slot])?;
                let scaled = tape.scale_by(proj, g)?;
                fused = Some(match fused {
                    Some(acc) => tape.add(acc, scaled)?,
                    None => scaled,
                });
            }
            Ok((fused.expect("three fusion inputs"), None))
        }
    }
}

/// `ReLU(W [h_long || h_short] + b)`, rows batched over items.
pub(crate) fn aggregate_mlp(
    tape: &mut Tape,
    params: &ModelParams,
    binding: &TapeBinding,
    h_long: TensorId,
    h_short: TensorId,
) -> Result<TensorId> {
    let d = params.cfg.d;
    let n = tape.shape(h_long)[0];
    let cat = tape.concat(&[h_long, h_short])?;
    let w = binding.id(params, "agg_mlp_weight");
    let wt = tape.transpose(w)?;
    let lin = tape.matmul(cat, wt)?;
    let bias = binding.id(params, "agg_mlp_bias");
    let bias_rows = repeat_row(tape, bias, n, d)?;
    let aff = tape.add(lin, bias_rows)?;
    Ok(tape.relu(aff))
}

/// Reverse-chronological rank of each edge, clamped to `max_order`,
/// as 0-based indices into an order-embedding table.
fn order_ranks(k: usize, max_order: usize) -> Vec<usize> {
    (0..k).map(|j| (k - j).min(max_order) - 1).collect()
}

/// Neighborhood access pattern of one node, identical in every layer.
struct NodePlan {
    /// Sub-graph positions of the node's neighbors, ascending by time.
    rows: Vec<usize>,
    /// Order-embedding table indices aligned with `rows`.
    ranks: Vec<usize>,
    /// Position of the most recent neighbor (meaningful when non-empty).
    recent: usize,
}

/// Everything the layer loop needs, resolved once per forward pass.
struct ForwardPlan {
    users: Vec<UserId>,
    items: Vec<ItemId>,
    anchor_pos: usize,
    user_plans: Vec<NodePlan>,
    item_plans: Vec<NodePlan>,
    /// Per item: sequel successors present in the sub-graph, as
    /// (sub-graph position, 1-based series position).
    successors: Vec<Vec<(usize, usize)>>,
}

impl ForwardPlan {
    fn new(
        sub: &SubGraph,
        graph: &crate::graph::SequelAwareGraph,
        max_order: usize,
    ) -> Result<ForwardPlan> {
        let mut upos = vec![usize::MAX; graph.n_users()];
        for (p, &u) in sub.users.iter().enumerate() {
            upos[u] = p;
        }
        let mut ipos = vec![usize::MAX; graph.n_items()];
        for (p, &i) in sub.items.iter().enumerate() {
            ipos[i] = p;
        }
        let anchor_pos = upos[sub.anchor_user];

        let user_plans = sub
            .users
            .iter()
            .map(|u| {
                let nb = &sub.edges_by_user[u];
                let rows: Vec<usize> = nb.iter().map(|e| ipos[e.item]).collect();
                NodePlan {
                    recent: *rows.last().unwrap_or(&0),
                    ranks: order_ranks(rows.len(), max_order),
                    rows,
                }
            })
            .collect();
        let item_plans = sub
            .items
            .iter()
            .map(|i| {
                let nb = &sub.edges_by_item[i];
                let rows: Vec<usize> = nb.iter().map(|e| upos[e.user]).collect();
                NodePlan {
                    recent: *rows.last().unwrap_or(&0),
                    ranks: order_ranks(rows.len(), max_order),
                    rows,
                }
            })
            .collect();

        let mut successors = Vec::with_capacity(sub.items.len());
        for &i in &sub.items {
            let mut out = Vec::new();
            for succ in graph.sequel_successors(i)? {
                if ipos[succ] != usize::MAX {
                    let series_pos = match graph.item_kind(succ)? {
                        ItemKind::Sequel { position, .. } => position,
                        ItemKind::Standalone => unreachable!("successors are sequel items"),
                    };
                    out.push((ipos[succ], series_pos));
                }
            }
            successors.push(out);
        }

        Ok(ForwardPlan {
            users: sub.users.clone(),
            items: sub.items.clone(),
            anchor_pos,
            user_plans,
            item_plans,
            successors,
        })
    }
}

/// Run the full layered forward pass for the sub-graph's anchor user.
pub fn forward(
    tape: &mut Tape,
    params: &ModelParams,
    binding: &TapeBinding,
    sub: &SubGraph,
    graph: &crate::graph::SequelAwareGraph,
) -> Result<ForwardOutput> {
    let cfg = &params.cfg;
    let d = cfg.d;
    let encoder = PositionalEncoder::new(cfg.positional, d)?;
    for &i in &sub.items {
        if i >= cfg.n_items {
            return Err(Error::Lookup(format!("item {i} outside the embedding table")));
        }
    }
    for &u in &sub.users {
        if u >= cfg.n_users {
            return Err(Error::Lookup(format!("user {u} outside the embedding table")));
        }
    }
    if !sub.contains_user(sub.anchor_user) {
        return Err(Error::Contract("anchor user missing from sub-graph".into()));
    }
    if sub
        .edges_by_user
        .get(&sub.anchor_user)
        .is_none_or(Vec::is_empty)
    {
        return Err(Error::Contract(format!(
            "anchor user {} has no neighbors in the sub-graph",
            sub.anchor_user
        )));
    }
    let plan = ForwardPlan::new(sub, graph, cfg.max_order)?;

    let e_users = binding.id(params, "user_embeddings");
    let e_items = binding.id(params, "item_embeddings");
    let h_users0 = tape.gather(e_users, &plan.users)?;
    let h_items0 = tape.gather(e_items, &plan.items)?;

    let mut user_states = vec![h_users0];
    let mut item_states = vec![h_items0];
    let mut item_fused_states = Vec::new();
    let mut item_agg_states = Vec::new();
    let mut attention_ids = Vec::new();
    let mut isolated_users = 0;
    let mut isolated_items = 0;
    let mut zero_vec: Option<TensorId> = None;

    for l in 1..=cfg.layers {
        let h_users_prev = user_states[l - 1];
        let h_items_prev = item_states[l - 1];
        let w_item = binding.id(params, &format!("layer{l}.w_item_transform"));
        let w_user = binding.id(params, &format!("layer{l}.w_user_transform"));
        let w_item_t = tape.transpose(w_item)?;
        let w_user_t = tape.transpose(w_user)?;
        // Rows: transformed previous-layer states for the whole sub-graph.
        let t_items = tape.matmul(h_items_prev, w_item_t)?;
        let t_users = tape.matmul(h_users_prev, w_user_t)?;

        let mut zero = |tape: &mut Tape| -> Result<TensorId> {
            if let Some(z) = zero_vec {
                Ok(z)
            } else {
                let z = tape.zeros(vec![d])?;
                zero_vec = Some(z);
                Ok(z)
            }
        };

        match cfg.propagation {
            Propagation::GcnBaseline => {
                // Plain mean aggregation of transformed neighbor states.
                let mut user_rows = Vec::with_capacity(plan.users.len());
                for node in &plan.user_plans {
                    if node.rows.is_empty() {
                        user_rows.push(zero(tape)?);
                        continue;
                    }
                    let msgs = tape.gather(t_items, &node.rows)?;
                    user_rows.push(tape.mean_axis(msgs, 0)?);
                }
                let mut item_rows = Vec::with_capacity(plan.items.len());
                for node in &plan.item_plans {
                    if node.rows.is_empty() {
                        item_rows.push(zero(tape)?);
                        continue;
                    }
                    let msgs = tape.gather(t_users, &node.rows)?;
                    item_rows.push(tape.mean_axis(msgs, 0)?);
                }
                user_states.push(stack_rows(tape, &user_rows, d)?);
                item_states.push(stack_rows(tape, &item_rows, d)?);
                continue;
            }
            Propagation::Attention => {}
        }

        let order_iu = binding.id(params, "order_emb_item_in_user");
        let order_ui = binding.id(params, "order_emb_user_in_item");

        // ---- item side -------------------------------------------------
        let mut item_long = Vec::with_capacity(plan.items.len());
        let mut item_short = Vec::with_capacity(plan.items.len());
        let mut item_seq = Vec::with_capacity(plan.items.len());
        for (pos, node) in plan.item_plans.iter().enumerate() {
            if node.rows.is_empty() {
                isolated_items += 1;
                let z = zero(tape)?;
                item_long.push(z);
                item_short.push(z);
            } else {
                let msgs = tape.gather_add_rows(t_users, &node.rows, order_ui, &node.ranks)?;
                let q = tape.gather(h_items_prev, &[pos])?;
                let (w, pooled) = attention_pool(tape, q, msgs)?;
                attention_ids.push(w);
                item_long.push(pooled);

                let vals = tape.gather(h_users_prev, &node.rows)?;
                let qs = tape.gather(h_users_prev, &[node.recent])?;
                let (ws, pooled_s) = attention_pool(tape, qs, vals)?;
                attention_ids.push(ws);
                item_short.push(pooled_s);
            }

            let succ = &plan.successors[pos];
            if succ.is_empty() {
                item_seq.push(zero(tape)?);
            } else {
                let rows: Vec<usize> = succ.iter().map(|&(p, _)| p).collect();
                let states = tape.gather(h_items_prev, &rows)?;
                let masked = match cfg.positional {
                    PositionalKind::Rotary => {
                        let positions: Vec<f64> =
                            succ.iter().map(|&(_, sp)| sp as f64).collect();
                        tape.rotary(states, &positions)?
                    }
                    _ => {
                        let mut mask = Vec::with_capacity(rows.len() * d);
                        for &(_, sp) in succ {
                            mask.extend_from_slice(&encoder.mask(sp));
                        }
                        let mask = tape.leaf(mask, vec![rows.len(), d], false)?;
                        tape.mul(states, mask)?
                    }
                };
                item_seq.push(tape.mean_axis(masked, 0)?);
            }
        }
        let h_long_items = stack_rows(tape, &item_long, d)?;
        let h_short_items = stack_rows(tape, &item_short, d)?;
        let h_seq_items = stack_rows(tape, &item_seq, d)?;
        let (fused, agg) = fuse_items(
            tape,
            params,
            binding,
            cfg.fusion,
            h_long_items,
            h_short_items,
            h_seq_items,
        )?;
        item_fused_states.push(fused);
        item_agg_states.push(agg);
        let w_item_update = binding.id(params, &format!("layer{l}.w_item_update"));
        let cat = tape.concat(&[fused, h_items_prev])?;
        let wt = tape.transpose(w_item_update)?;
        let lin = tape.matmul(cat, wt)?;
        item_states.push(tape.tanh(lin));

        // ---- user side -------------------------------------------------
        let mut user_long = Vec::with_capacity(plan.users.len());
        let mut user_short = Vec::with_capacity(plan.users.len());
        for (pos, node) in plan.user_plans.iter().enumerate() {
            if node.rows.is_empty() {
                isolated_users += 1;
                let z = zero(tape)?;
                user_long.push(z);
                user_short.push(z);
                continue;
            }
            let msgs = tape.gather_add_rows(t_items, &node.rows, order_iu, &node.ranks)?;
            let q = tape.gather(h_users_prev, &[pos])?;
            let (w, pooled) = attention_pool(tape, q, msgs)?;
            attention_ids.push(w);
            user_long.push(pooled);

            let vals = tape.gather(h_items_prev, &node.rows)?;
            let qs = tape.gather(h_items_prev, &[node.recent])?;
            let (ws, pooled_s) = attention_pool(tape, qs, vals)?;
            attention_ids.push(ws);
            user_short.push(pooled_s);
        }
        let h_long_users = stack_rows(tape, &user_long, d)?;
        let h_short_users = stack_rows(tape, &user_short, d)?;
        let w_user_update = binding.id(params, &format!("layer{l}.w_user_update"));
        let cat = tape.concat(&[h_long_users, h_short_users, h_users_prev])?;
        let wt = tape.transpose(w_user_update)?;
        let lin = tape.matmul(cat, wt)?;
        user_states.push(tape.tanh(lin));
    }

    // Final representation: the anchor's state at every layer, concatenated.
    let mut anchor_rows = Vec::with_capacity(user_states.len());
    for &state in &user_states {
        let row = tape.gather(state, &[plan.anchor_pos])?;
        anchor_rows.push(tape.reshape(row, vec![d])?);
    }
    let user_final = tape.concat(&anchor_rows)?;

    Ok(ForwardOutput {
        user_final,
        user_states,
        item_states,
        item_fused: item_fused_states,
        item_mlp_agg: item_agg_states,
        attention_ids,
        isolated_users,
        isolated_items,
    })
}
