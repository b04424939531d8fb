//! Datasets: synthetic simulation, file ingestion, series catalogs,
//! and the leave-one-out split.
//!
//! Canonical on-disk layout of a dataset directory:
//!   interactions.csv  headerless `user,item,timestamp` rows
//!   series.csv        `series_id,item_1,item_2,...` rows (may be empty)
//!   user_ids.tsv      `dense_id<TAB>original_label`
//!   item_ids.tsv      `dense_id<TAB>original_label`

mod ingest;
mod synthetic;
mod titles;

pub use ingest::{load_interactions, IngestReport, InteractionFormat};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticMode, ZipfSampler};
pub use titles::infer_series_by_title;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{build_graph, ItemId, SequelAwareGraph, Series, Timestamp, UserId};

#[derive(Clone, Debug)]
pub struct Dataset {
    pub n_users: usize,
    pub n_items: usize,
    /// Grouped per user, ascending timestamps within a user.
    pub interactions: Vec<(UserId, ItemId, Timestamp)>,
    pub series: Vec<Series>,
    pub user_labels: Vec<String>,
    pub item_labels: Vec<String>,
}

impl Dataset {
    pub fn build_graph(&self) -> Result<SequelAwareGraph> {
        build_graph(self.n_users, self.n_items, &self.interactions, &self.series)
    }

    /// Graph with every sequel edge removed (all items standalone).
    pub fn build_graph_ablated(&self) -> Result<SequelAwareGraph> {
        build_graph(self.n_users, self.n_items, &self.interactions, &[])
    }

    pub fn sequel_item_count(&self) -> usize {
        self.series.iter().map(|s| s.items.len()).sum()
    }

    /// Attach a series catalog from `series.csv`-formatted text; labels
    /// unknown to the item dictionary get fresh dense ids.
    pub fn attach_series_text(&mut self, text: &str) -> Result<()> {
        let mut label_to_id: BTreeMap<String, ItemId> = self
            .item_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        let mut series = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let sid: usize = fields
                .next()
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| {
                    Error::Catalog(format!("line {}: missing series id", lineno + 1))
                })?;
            let mut items = Vec::new();
            for label in fields {
                let label = label.trim();
                if label.is_empty() {
                    continue;
                }
                let id = *label_to_id.entry(label.to_string()).or_insert_with(|| {
                    self.item_labels.push(label.to_string());
                    self.item_labels.len() - 1
                });
                items.push(id);
            }
            if items.len() < 2 {
                return Err(Error::Catalog(format!(
                    "line {}: series {sid} has fewer than 2 items",
                    lineno + 1
                )));
            }
            series.push(Series { id: sid, items });
        }
        self.n_items = self.item_labels.len();
        // Catalog invariants (overlap, bounds) are enforced here too.
        crate::graph::item_kinds(self.n_items, &series)?;
        self.series = series;
        Ok(())
    }

    pub fn series_to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.series {
            out.push_str(&s.id.to_string());
            for &item in &s.items {
                out.push(',');
                out.push_str(&self.item_labels[item]);
            }
            out.push('\n');
        }
        out
    }

    /// Write the canonical dataset directory.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut interactions = String::new();
        for &(u, i, t) in &self.interactions {
            interactions.push_str(&format!(
                "{},{},{}\n",
                self.user_labels[u], self.item_labels[i], t
            ));
        }
        let write = |name: &str, text: &str| -> Result<()> {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(path, e))
        };
        write("interactions.csv", &interactions)?;
        write("series.csv", &self.series_to_text())?;
        let ids = |labels: &[String]| {
            labels
                .iter()
                .enumerate()
                .map(|(i, l)| format!("{i}\t{l}\n"))
                .collect::<String>()
        };
        write("user_ids.tsv", &ids(&self.user_labels))?;
        write("item_ids.tsv", &ids(&self.item_labels))?;
        Ok(())
    }

    /// Read a canonical dataset directory back.
    pub fn read_dir(dir: &Path) -> Result<Dataset> {
        let read = |name: &str| -> Result<String> {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::io(path, e))
        };
        let parse_ids = |text: &str, what: &str| -> Result<Vec<String>> {
            let mut labels = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                if line.is_empty() {
                    continue;
                }
                let (id, label) = line.split_once('\t').ok_or_else(|| {
                    Error::Data(format!("{what} line {}: expected id<TAB>label", lineno + 1))
                })?;
                let id: usize = id
                    .parse()
                    .map_err(|_| Error::Data(format!("{what} line {}: bad id", lineno + 1)))?;
                if id != labels.len() {
                    return Err(Error::Data(format!(
                        "{what} line {}: ids must be dense and ordered",
                        lineno + 1
                    )));
                }
                labels.push(label.to_string());
            }
            Ok(labels)
        };
        let user_labels = parse_ids(&read("user_ids.tsv")?, "user_ids.tsv")?;
        let item_labels = parse_ids(&read("item_ids.tsv")?, "item_ids.tsv")?;
        let user_ids: BTreeMap<&str, usize> = user_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let item_ids: BTreeMap<&str, usize> = item_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();

        let mut interactions = Vec::new();
        for (lineno, line) in read("interactions.csv")?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut f = line.split(',');
            let (u, i, t) = match (f.next(), f.next(), f.next(), f.next()) {
                (Some(u), Some(i), Some(t), None) => (u.trim(), i.trim(), t.trim()),
                _ => {
                    return Err(Error::Data(format!(
                        "interactions.csv line {}: expected user,item,timestamp",
                        lineno + 1
                    )))
                }
            };
            let u = *user_ids.get(u).ok_or_else(|| {
                Error::Data(format!("interactions.csv line {}: unknown user '{u}'", lineno + 1))
            })?;
            let i = *item_ids.get(i).ok_or_else(|| {
                Error::Data(format!("interactions.csv line {}: unknown item '{i}'", lineno + 1))
            })?;
            let t: Timestamp = t.parse().map_err(|_| {
                Error::Data(format!("interactions.csv line {}: bad timestamp", lineno + 1))
            })?;
            interactions.push((u, i, t));
        }

        let mut ds = Dataset {
            n_users: user_labels.len(),
            n_items: item_labels.len(),
            interactions,
            series: Vec::new(),
            user_labels,
            item_labels,
        };
        let series_text = read("series.csv")?;
        if !series_text.trim().is_empty() {
            ds.attach_series_text(&series_text)?;
        }
        Ok(ds)
    }
}

/// Load a series catalog file against an existing item dictionary.
pub fn load_series(path: &Path, dataset: &mut Dataset) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    dataset.attach_series_text(&text)
}

/// Per-user leave-one-out assignment: last interaction to test, second
/// to last to validation, the rest to train. Users with fewer than 3
/// interactions are train-only and excluded from evaluation.
#[derive(Clone, Debug)]
pub struct Split {
    pub train: Vec<Vec<(ItemId, Timestamp)>>,
    pub val: Vec<Option<(ItemId, Timestamp)>>,
    pub test: Vec<Option<(ItemId, Timestamp)>>,
}

impl Split {
    /// Items the user has in train+validation (excluded from ranking
    /// candidates at test time).
    pub fn seen_items(&self, user: UserId) -> std::collections::BTreeSet<ItemId> {
        let mut out: std::collections::BTreeSet<ItemId> =
            self.train[user].iter().map(|&(i, _)| i).collect();
        if let Some((i, _)) = self.val[user] {
            out.insert(i);
        }
        out
    }

    pub fn n_eval_users(&self) -> usize {
        self.test.iter().filter(|t| t.is_some()).count()
    }
}

pub fn leave_one_out(ds: &Dataset) -> Split {
    let mut per_user: Vec<Vec<(ItemId, Timestamp)>> = vec![Vec::new(); ds.n_users];
    for &(u, i, t) in &ds.interactions {
        per_user[u].push((i, t));
    }
    let mut train = Vec::with_capacity(ds.n_users);
    let mut val = Vec::with_capacity(ds.n_users);
    let mut test = Vec::with_capacity(ds.n_users);
    for mut items in per_user {
        items.sort_by_key(|&(_, t)| t); // stable: input order breaks ties
        if items.len() < 3 {
            train.push(items);
            val.push(None);
            test.push(None);
        } else {
            let t = items.pop().unwrap();
            let v = items.pop().unwrap();
            train.push(items);
            val.push(Some(v));
            test.push(Some(t));
        }
    }
    Split { train, val, test }
}
