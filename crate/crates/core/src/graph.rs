//! The sequel-aware heterogeneous dynamic graph: users, standalone and
//! sequel items, timestamped user-item edges, and ordered sequel edges.
//!
//! The graph is immutable after [`build_graph`]; temporal snapshots are
//! cheap views that filter user-item edges by `t < t_k`. Sequel edges
//! are timeless and survive every snapshot.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use crate::error::{Error, Result};

pub type UserId = usize;
pub type ItemId = usize;
pub type SeriesId = usize;
pub type Timestamp = i64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ItemKind {
    Standalone,
    /// `position` is 1-based within the series.
    Sequel { series: SeriesId, position: usize },
}

impl ItemKind {
    pub fn is_sequel(&self) -> bool {
        matches!(self, ItemKind::Sequel { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Series {
    pub id: SeriesId,
    pub items: Vec<ItemId>,
}

/// One timestamped user-item interaction with both order attributes:
/// `pos_in_user` is the 1-based rank of the item within the user's
/// sequence, `pos_in_item` the 1-based rank of the user among users who
/// interacted with the item (by first interaction time).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UserItemEdge {
    pub user: UserId,
    pub item: ItemId,
    pub timestamp: Timestamp,
    pub pos_in_user: usize,
    pub pos_in_item: usize,
}

/// Directed edge between consecutive series positions; `position` is
/// the 1-based series position of `to_item`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SequelEdge {
    pub from_item: ItemId,
    pub to_item: ItemId,
    pub series: SeriesId,
    pub position: usize,
}

#[derive(Clone, Debug)]
pub struct SequelAwareGraph {
    n_users: usize,
    items: Vec<ItemKind>,
    by_user: Vec<Vec<UserItemEdge>>,
    by_item: Vec<Vec<UserItemEdge>>,
    sequel_out: Vec<Vec<SequelEdge>>,
    series_catalog: Vec<Series>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Node {
    User(UserId),
    Item(ItemId),
}

/// Validate a series catalog against an item universe: lengths >= 2, no
/// item in two series, all item ids in range. Returns item -> kind.
pub fn item_kinds(n_items: usize, catalog: &[Series]) -> Result<Vec<ItemKind>> {
    let mut kinds = vec![ItemKind::Standalone; n_items];
    for series in catalog {
        if series.items.len() < 2 {
            return Err(Error::Catalog(format!(
                "series {} has {} items, need at least 2",
                series.id,
                series.items.len()
            )));
        }
        for (idx, &item) in series.items.iter().enumerate() {
            if item >= n_items {
                return Err(Error::Catalog(format!(
                    "series {} references item {item} outside the universe of {n_items}",
                    series.id
                )));
            }
            if kinds[item].is_sequel() {
                return Err(Error::Catalog(format!(
                    "item {item} appears in more than one series"
                )));
            }
            kinds[item] = ItemKind::Sequel {
                series: series.id,
                position: idx + 1,
            };
        }
    }
    Ok(kinds)
}

/// Build the graph from raw interactions and a series catalog.
///
/// Ties within a user are broken by input order; `pos_in_item` ranks
/// users by (first interaction time, user id).
pub fn build_graph(
    n_users: usize,
    n_items: usize,
    interactions: &[(UserId, ItemId, Timestamp)],
    catalog: &[Series],
) -> Result<SequelAwareGraph> {
    let items = item_kinds(n_items, catalog)?;

    let mut by_user: Vec<Vec<(ItemId, Timestamp, usize)>> = vec![Vec::new(); n_users];
    let mut seen = BTreeSet::new();
    for (order, &(u, i, t)) in interactions.iter().enumerate() {
        if u >= n_users {
            return Err(Error::Lookup(format!("user {u} outside universe of {n_users}")));
        }
        if i >= n_items {
            return Err(Error::Lookup(format!("item {i} outside universe of {n_items}")));
        }
        if !seen.insert((u, i, t)) {
            return Err(Error::Data(format!(
                "duplicate interaction (user {u}, item {i}, t {t})"
            )));
        }
        by_user[u].push((i, t, order));
    }

    // Per-user temporal order; p_iu follows it.
    let mut user_edges: Vec<Vec<UserItemEdge>> = Vec::with_capacity(n_users);
    for (u, mut edges) in by_user.into_iter().enumerate() {
        edges.sort_by_key(|&(_, t, order)| (t, order));
        user_edges.push(
            edges
                .into_iter()
                .enumerate()
                .map(|(k, (i, t, _))| UserItemEdge {
                    user: u,
                    item: i,
                    timestamp: t,
                    pos_in_user: k + 1,
                    pos_in_item: 0, // filled below
                })
                .collect(),
        );
    }

    // Rank users per item by first interaction time, then user id.
    let mut first_touch: Vec<BTreeMap<UserId, Timestamp>> = vec![BTreeMap::new(); n_items];
    for edges in &user_edges {
        for e in edges {
            first_touch[e.item]
                .entry(e.user)
                .and_modify(|t| *t = (*t).min(e.timestamp))
                .or_insert(e.timestamp);
        }
    }
    let mut user_rank: Vec<BTreeMap<UserId, usize>> = vec![BTreeMap::new(); n_items];
    for (i, touches) in first_touch.iter().enumerate() {
        let mut order: Vec<(Timestamp, UserId)> =
            touches.iter().map(|(&u, &t)| (t, u)).collect();
        order.sort();
        for (rank, &(_, u)) in order.iter().enumerate() {
            user_rank[i].insert(u, rank + 1);
        }
    }
    for edges in &mut user_edges {
        for e in edges.iter_mut() {
            e.pos_in_item = user_rank[e.item][&e.user];
        }
    }

    // Item adjacency sorted by time (stable across users via user id).
    let mut by_item: Vec<Vec<UserItemEdge>> = vec![Vec::new(); n_items];
    for edges in &user_edges {
        for e in edges {
            by_item[e.item].push(*e);
        }
    }
    for edges in &mut by_item {
        edges.sort_by_key(|e| (e.timestamp, e.user, e.pos_in_user));
    }

    // Sequel edges: exactly the consecutive pairs of every series.
    let mut sequel_out: Vec<Vec<SequelEdge>> = vec![Vec::new(); n_items];
    for series in catalog {
        for w in series.items.windows(2) {
            let pos = match items[w[1]] {
                ItemKind::Sequel { position, .. } => position,
                ItemKind::Standalone => unreachable!(),
            };
            sequel_out[w[0]].push(SequelEdge {
                from_item: w[0],
                to_item: w[1],
                series: series.id,
                position: pos,
            });
        }
    }

    Ok(SequelAwareGraph {
        n_users,
        items,
        by_user: user_edges,
        by_item,
        sequel_out,
        series_catalog: catalog.to_vec(),
    })
}

impl SequelAwareGraph {
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn item_kind(&self, item: ItemId) -> Result<ItemKind> {
        self.items
            .get(item)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("item {item}")))
    }

    pub fn series_catalog(&self) -> &[Series] {
        &self.series_catalog
    }

    pub fn user_edges_all(&self, user: UserId) -> Result<&[UserItemEdge]> {
        self.by_user
            .get(user)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Lookup(format!("user {user}")))
    }

    pub fn item_edges_all(&self, item: ItemId) -> Result<&[UserItemEdge]> {
        self.by_item
            .get(item)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Lookup(format!("item {item}")))
    }

    /// Stored forward sequel edges leaving `item` (to position + 1).
    pub fn sequel_edges_from(&self, item: ItemId) -> Result<&[SequelEdge]> {
        self.sequel_out
            .get(item)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Lookup(format!("item {item}")))
    }

    /// All items after `item` in its series, in series order; empty for
    /// standalone items and for the last item of a series.
    pub fn sequel_successors(&self, item: ItemId) -> Result<Vec<ItemId>> {
        match self.item_kind(item)? {
            ItemKind::Standalone => Ok(Vec::new()),
            ItemKind::Sequel { series, position } => {
                let s = self
                    .series_catalog
                    .iter()
                    .find(|s| s.id == series)
                    .expect("catalog entry for sequel item");
                Ok(s.items[position..].to_vec())
            }
        }
    }

    /// Temporal view containing user-item edges strictly before `t_k`
    /// and every sequel edge.
    pub fn snapshot(&self, t_k: Timestamp) -> GraphView<'_> {
        GraphView { graph: self, t_k }
    }

    /// Snapshot containing every edge.
    pub fn full_view(&self) -> GraphView<'_> {
        self.snapshot(Timestamp::MAX)
    }

    /// Line-oriented text dump for inspection; not a stable format.
    pub fn write_text_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# users {} items {}", self.n_users, self.items.len())?;
        for edges in &self.by_user {
            for e in edges {
                writeln!(
                    w,
                    "user_item {} {} {} {} {}",
                    e.user, e.item, e.timestamp, e.pos_in_user, e.pos_in_item
                )?;
            }
        }
        for edges in &self.sequel_out {
            for e in edges {
                writeln!(
                    w,
                    "sequel {} {} {} {}",
                    e.from_item, e.to_item, e.series, e.position
                )?;
            }
        }
        Ok(())
    }
}

/// Cheap temporal view; shares the graph's storage.
#[derive(Clone, Copy)]
pub struct GraphView<'g> {
    graph: &'g SequelAwareGraph,
    t_k: Timestamp,
}

impl<'g> GraphView<'g> {
    pub fn graph(&self) -> &'g SequelAwareGraph {
        self.graph
    }

    pub fn t_k(&self) -> Timestamp {
        self.t_k
    }

    /// The user's interactions with `t < t_k`, ascending by time.
    pub fn user_edges(&self, user: UserId) -> Result<&'g [UserItemEdge]> {
        let edges = self.graph.user_edges_all(user)?;
        let cut = edges.partition_point(|e| e.timestamp < self.t_k);
        Ok(&edges[..cut])
    }

    /// The item's interactions with `t < t_k`, ascending by time.
    pub fn item_edges(&self, item: ItemId) -> Result<&'g [UserItemEdge]> {
        let edges = self.graph.item_edges_all(item)?;
        let cut = edges.partition_point(|e| e.timestamp < self.t_k);
        Ok(&edges[..cut])
    }

    /// First-order neighbors of a node. With `limit_recent_n`, the n
    /// edges with the largest timestamps, still in ascending order.
    pub fn neighbors(&self, node: Node, limit_recent_n: Option<usize>) -> Result<Vec<UserItemEdge>> {
        let edges = match node {
            Node::User(u) => self.user_edges(u)?,
            Node::Item(i) => self.item_edges(i)?,
        };
        let edges = match limit_recent_n {
            Some(n) if edges.len() > n => &edges[edges.len() - n..],
            _ => edges,
        };
        Ok(edges.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The worked construction example: one user, four interactions,
    /// series A = (1, 4, 6) and B = (2, 5) over items 0..=6.
    pub(crate) fn example_graph() -> SequelAwareGraph {
        // i1..i7 map to ids 0..6; u1 is id 0.
        let interactions = vec![(0, 0, 10), (0, 1, 20), (0, 2, 30), (0, 3, 40)];
        let catalog = vec![
            Series { id: 0, items: vec![1, 4, 6] }, // A = (i2, i5, i7)
            Series { id: 1, items: vec![2, 5] },    // B = (i3, i6)
        ];
        build_graph(1, 7, &interactions, &catalog).unwrap()
    }

    #[test]
    fn example_edges_exact() {
        let g = example_graph();
        let mut sequels: Vec<SequelEdge> = (0..7)
            .flat_map(|i| g.sequel_edges_from(i).unwrap().to_vec())
            .collect();
        sequels.sort();
        assert_eq!(
            sequels,
            vec![
                SequelEdge { from_item: 1, to_item: 4, series: 0, position: 2 },
                SequelEdge { from_item: 2, to_item: 5, series: 1, position: 2 },
                SequelEdge { from_item: 4, to_item: 6, series: 0, position: 3 },
            ]
        );
        let edges = g.user_edges_all(0).unwrap();
        let got: Vec<(ItemId, Timestamp, usize, usize)> = edges
            .iter()
            .map(|e| (e.item, e.timestamp, e.pos_in_user, e.pos_in_item))
            .collect();
        assert_eq!(got, vec![(0, 10, 1, 1), (1, 20, 2, 1), (2, 30, 3, 1), (3, 40, 4, 1)]);
    }

    #[test]
    fn empty_catalog_all_standalone() {
        let g = build_graph(1, 3, &[(0, 0, 1), (0, 1, 2)], &[]).unwrap();
        for i in 0..3 {
            assert_eq!(g.item_kind(i).unwrap(), ItemKind::Standalone);
            assert!(g.sequel_edges_from(i).unwrap().is_empty());
        }
    }

    #[test]
    fn second_user_gets_pos_in_item_two() {
        let g = build_graph(2, 1, &[(0, 0, 5), (1, 0, 9)], &[]).unwrap();
        let edges = g.item_edges_all(0).unwrap();
        assert_eq!(edges[0].pos_in_item, 1);
        assert_eq!(edges[1].pos_in_item, 2);
        assert_eq!(edges[1].user, 1);
    }

    #[test]
    fn duplicate_triple_rejected() {
        let err = build_graph(1, 1, &[(0, 0, 1), (0, 0, 1)], &[]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn item_in_two_series_rejected() {
        let catalog = vec![
            Series { id: 0, items: vec![0, 1] },
            Series { id: 1, items: vec![1, 2] },
        ];
        let err = build_graph(1, 3, &[], &catalog).unwrap_err();
        assert!(matches!(err, Error::Catalog(_)));
    }

    #[test]
    fn short_series_rejected() {
        let catalog = vec![Series { id: 0, items: vec![0] }];
        assert!(build_graph(1, 1, &[], &catalog).is_err());
    }

    #[test]
    fn sequel_successors_cases() {
        let g = example_graph();
        assert_eq!(g.sequel_successors(1).unwrap(), vec![4, 6]); // i2 -> [i5, i7]
        assert_eq!(g.sequel_successors(6).unwrap(), Vec::<ItemId>::new()); // last of A
        assert_eq!(g.sequel_successors(0).unwrap(), Vec::<ItemId>::new()); // standalone
        assert!(g.sequel_successors(99).is_err());
    }

    #[test]
    fn snapshot_filters_strictly() {
        let g = example_graph();
        // At t_k = t3 (=30) only the first two interactions are visible.
        let view = g.snapshot(30);
        let items: Vec<ItemId> = view.user_edges(0).unwrap().iter().map(|e| e.item).collect();
        assert_eq!(items, vec![0, 1]);

        // At or below the minimum timestamp the view has no user-item
        // edges but still all sequel edges.
        let view = g.snapshot(10);
        assert!(view.user_edges(0).unwrap().is_empty());
        assert_eq!(g.sequel_edges_from(1).unwrap().len(), 1);

        // Unbounded snapshot equals the full graph.
        let view = g.full_view();
        assert_eq!(view.user_edges(0).unwrap().len(), 4);
    }

    #[test]
    fn neighbors_recent_limit() {
        let g = example_graph();
        let view = g.full_view();
        let recent = view.neighbors(Node::User(0), Some(2)).unwrap();
        assert_eq!(recent.len(), 2);
        assert_eq!(recent[0].item, 2);
        assert_eq!(recent[1].item, 3);
        assert!(recent[0].timestamp <= recent[1].timestamp);

        // Limit above the degree returns everything.
        let all = view.neighbors(Node::User(0), Some(10)).unwrap();
        assert_eq!(all.len(), 4);

        assert!(view.neighbors(Node::User(7), None).is_err());
    }

    #[test]
    fn degree_sums_match_interaction_count() {
        let interactions = vec![(0, 0, 1), (0, 1, 2), (1, 0, 3), (2, 2, 1), (2, 0, 7)];
        let g = build_graph(3, 3, &interactions, &[]).unwrap();
        let user_sum: usize = (0..3).map(|u| g.user_edges_all(u).unwrap().len()).sum();
        let item_sum: usize = (0..3).map(|i| g.item_edges_all(i).unwrap().len()).sum();
        assert_eq!(user_sum, interactions.len());
        assert_eq!(item_sum, interactions.len());
    }

    #[test]
    fn series_of_length_n_has_n_minus_1_edges() {
        let catalog = vec![Series { id: 7, items: vec![0, 1, 2, 3, 4] }];
        let g = build_graph(1, 5, &[], &catalog).unwrap();
        let count: usize = (0..5).map(|i| g.sequel_edges_from(i).unwrap().len()).sum();
        assert_eq!(count, 4);
    }

    #[test]
    fn text_dump_roundtrips_line_count() {
        let g = example_graph();
        let mut buf = Vec::new();
        g.write_text_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("user_item")).count(), 4);
        assert_eq!(text.lines().filter(|l| l.starts_with("sequel")).count(), 3);
    }
}
