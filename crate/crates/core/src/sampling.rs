//! Sequel-aware m-order sub-graph sampling.
//!
//! Starting from a user's (truncated) history, the sampler closes the
//! item set under sequel successors, then alternates item→user and
//! user→item frontier expansions for up to `m` rounds, re-applying the
//! sequel closure to every newly reached user's neighborhood and
//! breaking early on an empty frontier. `m = 0` performs only the
//! initialization (history plus its sequel closure). All snapshot edges
//! with both endpoints sampled are retained as the induced sub-graph.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::error::{Error, Result};
use crate::graph::{GraphView, ItemId, SequelAwareGraph, SequelEdge, Timestamp, UserId, UserItemEdge};

#[derive(Clone, Copy, Debug)]
pub struct SamplingConfig {
    /// Sub-graph order: number of expansion rounds.
    pub m: usize,
    /// Per-user cap on historical interactions (most recent first).
    pub recent_n: usize,
    /// Apply `recent_n` to second-order user expansions as well as the
    /// anchor history. Disabled by the brute-force oracle tests.
    pub truncate_expansion: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            m: 4,
            recent_n: 50,
            truncate_expansion: true,
        }
    }
}

/// The sampled neighborhood of one user at one snapshot time, with the
/// induced user-item and sequel edges.
#[derive(Clone, Debug)]
pub struct SubGraph {
    pub anchor_user: UserId,
    pub t_k: Timestamp,
    /// Sorted sampled node sets.
    pub users: Vec<UserId>,
    pub items: Vec<ItemId>,
    /// Induced adjacency, ascending by timestamp.
    pub edges_by_user: BTreeMap<UserId, Vec<UserItemEdge>>,
    pub edges_by_item: BTreeMap<ItemId, Vec<UserItemEdge>>,
    /// Induced sequel edges keyed by source item.
    pub sequel_out: BTreeMap<ItemId, Vec<SequelEdge>>,
}

impl SubGraph {
    pub fn contains_item(&self, item: ItemId) -> bool {
        self.items.binary_search(&item).is_ok()
    }

    pub fn contains_user(&self, user: UserId) -> bool {
        self.users.binary_search(&user).is_ok()
    }

    pub fn n_edges(&self) -> usize {
        self.edges_by_user.values().map(Vec::len).sum()
    }

    /// Edge-list text dump for inspection.
    pub fn write_text_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# subgraph anchor_user {} t_k {} users {} items {}",
            self.anchor_user,
            self.t_k,
            self.users.len(),
            self.items.len()
        )?;
        for edges in self.edges_by_user.values() {
            for e in edges {
                writeln!(w, "user_item {} {} {}", e.user, e.item, e.timestamp)?;
            }
        }
        for edges in self.sequel_out.values() {
            for e in edges {
                writeln!(w, "sequel {} {} {} {}", e.from_item, e.to_item, e.series, e.position)?;
            }
        }
        Ok(())
    }
}

/// Add `item` and, when it is a sequel, all of its series successors.
fn insert_with_sequel_closure(
    graph: &SequelAwareGraph,
    item: ItemId,
    into: &mut BTreeSet<ItemId>,
) -> Result<()> {
    if into.insert(item) && graph.item_kind(item)?.is_sequel() {
        for succ in graph.sequel_successors(item)? {
            into.insert(succ);
        }
    }
    Ok(())
}

/// Sample the m-order sub-graph of `anchor` from a snapshot view.
///
/// `history` is the anchor's interaction history before the snapshot
/// time, already truncated to the most recent `recent_n` items; every
/// entry must have an edge from the anchor in the view.
pub fn sample_subgraph(
    view: &GraphView<'_>,
    anchor: UserId,
    history: &[ItemId],
    cfg: &SamplingConfig,
) -> Result<SubGraph> {
    let graph = view.graph();
    if history.is_empty() {
        return Err(Error::Contract(format!(
            "user {anchor} has no interactions before t {} (empty history)",
            view.t_k()
        )));
    }
    let anchor_edges = view.user_edges(anchor)?;
    for &item in history {
        if !anchor_edges.iter().any(|e| e.item == item) {
            return Err(Error::Contract(format!(
                "history item {item} has no edge from user {anchor} in the snapshot"
            )));
        }
    }

    let mut users: BTreeSet<UserId> = BTreeSet::new();
    users.insert(anchor);
    let mut items: BTreeSet<ItemId> = BTreeSet::new();
    for &i in history {
        insert_with_sequel_closure(graph, i, &mut items)?;
    }

    let mut item_frontier: BTreeSet<ItemId> = items.clone();

    for _round in 0..cfg.m {
        // Item -> user expansion over the current item frontier.
        let mut new_users: BTreeSet<UserId> = BTreeSet::new();
        for &i in &item_frontier {
            for e in view.item_edges(i)? {
                if !users.contains(&e.user) {
                    new_users.insert(e.user);
                }
            }
        }
        users.extend(new_users.iter().copied());
        if new_users.is_empty() {
            break;
        }

        // User -> item expansion with sequel closure, partitioning each
        // neighborhood into standalone/sequel halves (only the sequel
        // half drives extra expansion).
        let mut reached: BTreeSet<ItemId> = BTreeSet::new();
        for &u in &new_users {
            let edges = view.user_edges(u)?;
            let edges = if cfg.truncate_expansion && edges.len() > cfg.recent_n {
                &edges[edges.len() - cfg.recent_n..]
            } else {
                edges
            };
            for e in edges {
                insert_with_sequel_closure(graph, e.item, &mut reached)?;
            }
        }
        let new_items: BTreeSet<ItemId> = reached.difference(&items).copied().collect();
        items.extend(new_items.iter().copied());
        if new_items.is_empty() {
            break;
        }

        item_frontier = new_items;
    }

    // Induced edges: every snapshot edge with both endpoints sampled.
    let mut edges_by_user: BTreeMap<UserId, Vec<UserItemEdge>> = BTreeMap::new();
    let mut edges_by_item: BTreeMap<ItemId, Vec<UserItemEdge>> = BTreeMap::new();
    for &u in &users {
        let kept: Vec<UserItemEdge> = view
            .user_edges(u)?
            .iter()
            .filter(|e| items.contains(&e.item))
            .copied()
            .collect();
        edges_by_user.insert(u, kept);
    }
    for &i in &items {
        let kept: Vec<UserItemEdge> = view
            .item_edges(i)?
            .iter()
            .filter(|e| users.contains(&e.user))
            .copied()
            .collect();
        edges_by_item.insert(i, kept);
    }
    let mut sequel_out: BTreeMap<ItemId, Vec<SequelEdge>> = BTreeMap::new();
    for &i in &items {
        let kept: Vec<SequelEdge> = graph
            .sequel_edges_from(i)?
            .iter()
            .filter(|e| items.contains(&e.to_item))
            .copied()
            .collect();
        if !kept.is_empty() {
            sequel_out.insert(i, kept);
        }
    }

    Ok(SubGraph {
        anchor_user: anchor,
        t_k: view.t_k(),
        users: users.into_iter().collect(),
        items: items.into_iter().collect(),
        edges_by_user,
        edges_by_item,
        sequel_out,
    })
}

/// Derive the (truncated) history of `user` at the view's snapshot time.
pub fn history_at(view: &GraphView<'_>, user: UserId, recent_n: usize) -> Result<Vec<ItemId>> {
    let edges = view.user_edges(user)?;
    let edges = if edges.len() > recent_n {
        &edges[edges.len() - recent_n..]
    } else {
        edges
    };
    Ok(edges.iter().map(|e| e.item).collect())
}

/// Snapshot + sample for a list of (user, t_k) prediction points.
/// Deterministic; errors are annotated with the failing point.
pub fn batch_sample(
    graph: &SequelAwareGraph,
    points: &[(UserId, Timestamp)],
    cfg: &SamplingConfig,
) -> Result<Vec<SubGraph>> {
    points
        .iter()
        .map(|&(u, t_k)| {
            let view = graph.snapshot(t_k);
            let history = history_at(&view, u, cfg.recent_n)
                .and_then(|h| sample_subgraph(&view, u, &h, cfg));
            history.map_err(|e| {
                Error::Contract(format!("sampling point (user {u}, t {t_k}): {e}"))
            })
        })
        .collect()
}
