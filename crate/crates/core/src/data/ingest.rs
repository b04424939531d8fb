//! Interaction-log ingestion: headerless CSV and the tab-separated
//! ratings layout (user, item, rating, timestamp; rating dropped).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InteractionFormat {
    /// `user,item,timestamp`
    Csv,
    /// `user<TAB>item<TAB>rating<TAB>timestamp`
    MovieLens,
}

impl InteractionFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(InteractionFormat::Csv),
            "movielens" => Ok(InteractionFormat::MovieLens),
            other => Err(Error::Config(format!(
                "unknown interaction format '{other}' (expected csv|movielens)"
            ))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct IngestReport {
    pub total_rows: usize,
    pub parsed_rows: usize,
    /// (1-based line number, reason) for each malformed row.
    pub malformed: Vec<(usize, String)>,
    pub sampled_users: Option<usize>,
}

impl IngestReport {
    pub fn sidecar_text(&self) -> String {
        let mut out = format!(
            "total_rows {}\nparsed_rows {}\nmalformed_rows {}\n",
            self.total_rows,
            self.parsed_rows,
            self.malformed.len()
        );
        for (line, reason) in &self.malformed {
            out.push_str(&format!("line {line}: {reason}\n"));
        }
        out
    }
}

fn parse_row(
    line: &str,
    format: InteractionFormat,
) -> std::result::Result<(&str, &str, Timestamp), String> {
    match format {
        InteractionFormat::Csv => {
            let mut f = line.split(',');
            match (f.next(), f.next(), f.next(), f.next()) {
                (Some(u), Some(i), Some(t), None) => {
                    let t: Timestamp = t
                        .trim()
                        .parse()
                        .map_err(|_| format!("bad timestamp '{}'", t.trim()))?;
                    Ok((u.trim(), i.trim(), t))
                }
                _ => Err("expected user,item,timestamp".into()),
            }
        }
        InteractionFormat::MovieLens => {
            let mut f = line.split_whitespace();
            match (f.next(), f.next(), f.next(), f.next(), f.next()) {
                (Some(u), Some(i), Some(_rating), Some(t), None) => {
                    let t: Timestamp =
                        t.parse().map_err(|_| format!("bad timestamp '{t}'"))?;
                    Ok((u, i, t))
                }
                _ => Err("expected user item rating timestamp".into()),
            }
        }
    }
}

/// Parse an interaction log into a dataset without series information.
///
/// Malformed rows are counted and reported; the load fails once their
/// fraction exceeds `tolerance`. Duplicate (user, item, timestamp)
/// triples are rejected. With `sample_users`, only the N most active
/// users are kept (ties by first appearance), reproducing sampled-subset
/// evaluation on large logs.
pub fn load_interactions(
    path: &Path,
    format: InteractionFormat,
    tolerance: f64,
    sample_users: Option<usize>,
) -> Result<(Dataset, IngestReport)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut report = IngestReport::default();
    let mut rows: Vec<(String, String, Timestamp, usize)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        report.total_rows += 1;
        match parse_row(line, format) {
            Ok((u, i, t)) => {
                if u.is_empty() || i.is_empty() {
                    report.malformed.push((idx + 1, "empty user or item".into()));
                } else {
                    rows.push((u.to_string(), i.to_string(), t, idx + 1));
                }
            }
            Err(reason) => report.malformed.push((idx + 1, reason)),
        }
    }
    report.parsed_rows = rows.len();
    if !report.malformed.is_empty() {
        let frac = report.malformed.len() as f64 / report.total_rows.max(1) as f64;
        if frac > tolerance {
            let (line, reason) = &report.malformed[0];
            return Err(Error::Data(format!(
                "{} malformed rows (tolerance {tolerance}), first at line {line}: {reason}",
                report.malformed.len()
            )));
        }
    }

    if let Some(n) = sample_users {
        let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new(); // -> (count, first line)
        for (u, _, _, lineno) in &rows {
            let e = counts.entry(u).or_insert((0, *lineno));
            e.0 += 1;
        }
        let mut ranked: Vec<(&str, usize, usize)> =
            counts.iter().map(|(&u, &(c, first))| (u, c, first)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        let keep: std::collections::BTreeSet<String> = ranked
            .into_iter()
            .take(n)
            .map(|(u, _, _)| u.to_string())
            .collect();
        rows.retain(|(u, _, _, _)| keep.contains(u));
        report.sampled_users = Some(keep.len());
    }

    // Dense ids in first-appearance order.
    let mut user_ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut item_ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut user_labels = Vec::new();
    let mut item_labels = Vec::new();
    let mut interactions = Vec::with_capacity(rows.len());
    let mut seen = std::collections::BTreeSet::new();
    for (u, i, t, lineno) in &rows {
        let uid = *user_ids.entry(u.clone()).or_insert_with(|| {
            user_labels.push(u.clone());
            user_labels.len() - 1
        });
        let iid = *item_ids.entry(i.clone()).or_insert_with(|| {
            item_labels.push(i.clone());
            item_labels.len() - 1
        });
        if !seen.insert((uid, iid, *t)) {
            return Err(Error::Data(format!(
                "line {lineno}: duplicate interaction ({u}, {i}, {t})"
            )));
        }
        interactions.push((uid, iid, *t, *lineno));
    }

    // Per-user temporal order, file order breaking ties.
    interactions.sort_by_key(|&(u, _, t, lineno)| (u, t, lineno));
    let interactions = interactions.into_iter().map(|(u, i, t, _)| (u, i, t)).collect();

    Ok((
        Dataset {
            n_users: user_labels.len(),
            n_items: item_labels.len(),
            interactions,
            series: Vec::new(),
            user_labels,
            item_labels,
        },
        report,
    ))
}
