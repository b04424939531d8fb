//! Conservative series inference from item titles.
//!
//! Recognized part markers, tried in order on the end of a title:
//!   1. "(Part N)"          e.g. "Movie X (Part 2)"
//!   2. "Part N"            e.g. "Movie X: Part 2"
//!   3. a bare integer N    e.g. "Movie X 2", only for 1 <= N <= 20 so
//!      trailing years are never mistaken for markers
//!
//! A title with no marker acts as part 1 of its group. Groups with
//! fewer than two members, duplicate markers, or both a bare title and
//! an explicit part 1 are left standalone.

use std::collections::BTreeMap;

use regex::Regex;

use crate::graph::{ItemId, Series};

fn split_marker(title: &str, patterns: &[Regex]) -> (String, Option<u32>) {
    for re in patterns {
        if let Some(caps) = re.captures(title) {
            let base = caps.get(1).map(|m| m.as_str().trim()).unwrap_or("");
            if base.is_empty() {
                continue;
            }
            if let Ok(n) = caps[2].parse::<u32>() {
                if (1..=20).contains(&n) {
                    return (base.to_string(), Some(n));
                }
            }
        }
    }
    (title.trim().to_string(), None)
}

/// Group titles that share a base name with trailing part markers into
/// ordered series. Best effort; ambiguous titles stay standalone.
pub fn infer_series_by_title(titles: &BTreeMap<ItemId, String>) -> Vec<Series> {
    let patterns = [
        Regex::new(r"(?i)^(.*?)[\s:]*\(part\s+(\d+)\)\s*$").unwrap(),
        Regex::new(r"(?i)^(.*?)[\s:]+part\s+(\d+)\s*$").unwrap(),
        Regex::new(r"^(.*?)\s+(\d{1,2})\s*$").unwrap(),
    ];

    let mut groups: BTreeMap<String, Vec<(u32, ItemId)>> = BTreeMap::new();
    for (&item, title) in titles {
        let (base, marker) = split_marker(title, &patterns);
        groups.entry(base).or_default().push((marker.unwrap_or(1), item));
    }

    let mut series = Vec::new();
    for (_, mut members) in groups {
        if members.len() < 2 {
            continue;
        }
        members.sort();
        let distinct = members
            .windows(2)
            .all(|w| w[0].0 != w[1].0);
        if !distinct {
            continue; // duplicate markers: ambiguous, leave standalone
        }
        series.push(Series {
            id: series.len(),
            items: members.into_iter().map(|(_, item)| item).collect(),
        });
    }
    series
}
