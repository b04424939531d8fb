//! Full-ranking leave-one-out evaluation: Hit@K and NDCG@K with a
//! single relevant item per user (IDCG = 1).

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::error::{Error, Result};
use crate::graph::{ItemId, SequelAwareGraph, UserId};
use crate::model::{predict_scores_on, ModelParams};
use crate::sampling::{history_at, sample_subgraph, SamplingConfig};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PerUserRank {
    pub user: UserId,
    pub rank: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RankingReport {
    pub ks: Vec<usize>,
    pub hit: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    pub n_evaluated: usize,
    pub n_skipped: usize,
    pub wall_clock_secs: f64,
    #[serde(default)]
    pub dataset: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub config_echo: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_user: Option<Vec<PerUserRank>>,
}

impl RankingReport {
    /// Aligned text table with one row per metric.
    pub fn render_text(&self) -> String {
        let mut out = String::from("metric        value\n");
        for &k in &self.ks {
            out.push_str(&format!("Hit@{:<9} {:.4}\n", k, self.hit[&k]));
        }
        for &k in &self.ks {
            out.push_str(&format!("NDCG@{:<8} {:.4}\n", k, self.ndcg[&k]));
        }
        out.push_str(&format!("evaluated     {}\n", self.n_evaluated));
        out.push_str(&format!("skipped       {}\n", self.n_skipped));
        out
    }
}

/// 1-based rank of the target among non-excluded items; ties broken
/// toward the lowest item id (same rule as the model's argmax).
pub fn rank_of_target(
    scores: &[f64],
    target: ItemId,
    excluded: &std::collections::BTreeSet<ItemId>,
) -> Result<usize> {
    if excluded.contains(&target) {
        return Err(Error::Contract(format!(
            "rank target {target} is in the excluded set"
        )));
    }
    if target >= scores.len() {
        return Err(Error::Contract(format!(
            "rank target {target} outside the {}-item score vector",
            scores.len()
        )));
    }
    let ts = scores[target];
    let mut rank = 1;
    for (i, &s) in scores.iter().enumerate() {
        if i == target || excluded.contains(&i) {
            continue;
        }
        if s > ts || (s == ts && i < target) {
            rank += 1;
        }
    }
    Ok(rank)
}

pub fn hit_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

/// Single-relevant-item NDCG: 1/log2(rank+1) inside the cut, else 0.
pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// Which held-out interaction to rank.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalTarget {
    Validation,
    Test,
}

#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    /// Remove the user's train(+validation) items from the candidate set.
    pub exclude_seen: bool,
    pub sampling: SamplingConfig,
    /// Keep the per-user rank dump in the report.
    pub per_user: bool,
    /// Rank the target against this many sampled candidates instead of
    /// the full vocabulary (for large catalogs). Seeded per user;
    /// `None` means full ranking.
    pub candidate_sample: Option<usize>,
    pub candidate_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: vec![5, 10, 20],
            exclude_seen: true,
            sampling: SamplingConfig::default(),
            per_user: false,
            candidate_sample: None,
            candidate_seed: 1,
        }
    }
}

/// Rank every held-out interaction of the split against the full item
/// vocabulary. Users whose pre-target history is empty are skipped and
/// counted.
pub fn evaluate(
    params: &ModelParams,
    graph: &SequelAwareGraph,
    split: &Split,
    which: EvalTarget,
    cfg: &EvalConfig,
) -> Result<RankingReport> {
    let started = Instant::now();
    let mut ranks: Vec<PerUserRank> = Vec::new();
    let mut skipped = 0;
    let mut tape = crate::tensor::Tape::new();

    for user in 0..split.test.len() {
        let held = match which {
            EvalTarget::Validation => split.val[user],
            EvalTarget::Test => split.test[user],
        };
        let Some((target, t_k)) = held else { continue };
        let view = graph.snapshot(t_k);
        let history = history_at(&view, user, cfg.sampling.recent_n)?;
        if history.is_empty() {
            skipped += 1;
            continue;
        }
        let sub = sample_subgraph(&view, user, &history, &cfg.sampling)?;
        let scores = predict_scores_on(&mut tape, params, graph, &sub)?;
        let mut excluded = std::collections::BTreeSet::new();
        if cfg.exclude_seen {
            excluded = split.seen_items(user);
            match which {
                EvalTarget::Validation => {
                    if let Some((v, _)) = split.val[user] {
                        excluded.remove(&v);
                    }
                }
                EvalTarget::Test => {}
            }
            excluded.remove(&target);
        }
        if let Some(n) = cfg.candidate_sample {
            // Shrink the pool to the target plus n sampled negatives.
            use rand::Rng;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(
                cfg.candidate_seed ^ (user as u64).wrapping_mul(0x9E3779B97F4A7C15),
            );
            let n_items = scores.len();
            let mut keep = std::collections::BTreeSet::new();
            keep.insert(target);
            let eligible = n_items - excluded.len() - 1;
            let want = n.min(eligible);
            let mut guard = 0usize;
            while keep.len() < want + 1 && guard < 100 * n_items {
                guard += 1;
                let i = rng.random_range(0..n_items);
                if i != target && !excluded.contains(&i) {
                    keep.insert(i);
                }
            }
            for i in 0..n_items {
                if !keep.contains(&i) {
                    excluded.insert(i);
                }
            }
        }
        let rank = rank_of_target(&scores, target, &excluded)?;
        ranks.push(PerUserRank { user, rank });
    }

    let n = ranks.len();
    let mut hit = BTreeMap::new();
    let mut ndcg = BTreeMap::new();
    for &k in &cfg.ks {
        let h: f64 = ranks.iter().map(|r| hit_at_k(r.rank, k)).sum();
        let d: f64 = ranks.iter().map(|r| ndcg_at_k(r.rank, k)).sum();
        hit.insert(k, if n > 0 { h / n as f64 } else { 0.0 });
        ndcg.insert(k, if n > 0 { d / n as f64 } else { 0.0 });
    }

    Ok(RankingReport {
        ks: cfg.ks.clone(),
        hit,
        ndcg,
        n_evaluated: n,
        n_skipped: skipped,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        dataset: String::new(),
        seed: 0,
        config_echo: String::new(),
        per_user: if cfg.per_user { Some(ranks) } else { None },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn rank_basics() {
        let scores = vec![0.1, 0.9, 0.5];
        assert_eq!(rank_of_target(&scores, 1, &BTreeSet::new()).unwrap(), 1);
        assert_eq!(rank_of_target(&scores, 2, &BTreeSet::new()).unwrap(), 2);
        assert_eq!(rank_of_target(&scores, 0, &BTreeSet::new()).unwrap(), 3);
    }

    #[test]
    fn all_equal_scores_lowest_id_wins() {
        let scores = vec![0.5; 4];
        let excluded: BTreeSet<usize> = [0].into_iter().collect();
        // Item 1 is the smallest non-excluded id -> rank 1.
        assert_eq!(rank_of_target(&scores, 1, &excluded).unwrap(), 1);
        assert_eq!(rank_of_target(&scores, 3, &excluded).unwrap(), 3);
    }

    #[test]
    fn excluded_target_is_contract_error() {
        let excluded: BTreeSet<usize> = [1].into_iter().collect();
        assert!(matches!(
            rank_of_target(&[0.0, 0.0], 1, &excluded),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn exclusion_shrinks_rank() {
        let scores = vec![0.9, 0.8, 0.1];
        let excluded: BTreeSet<usize> = [0, 1].into_iter().collect();
        assert_eq!(rank_of_target(&scores, 2, &excluded).unwrap(), 1);
    }

    #[test]
    fn metric_closed_forms() {
        assert_eq!(hit_at_k(1, 10), 1.0);
        assert_eq!(ndcg_at_k(1, 10), 1.0);
        assert!((ndcg_at_k(3, 10) - 0.5).abs() < 1e-12);
        assert_eq!(hit_at_k(11, 10), 0.0);
        assert_eq!(ndcg_at_k(11, 10), 0.0);
    }

    #[test]
    fn rank_matches_sort_oracle_on_random_vectors() {
        // Naive oracle: sort non-excluded ids by (-score, id) and find
        // the target's position.
        let mut state = 0x12345678u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for trial in 0..1000 {
            let n = 3 + (trial % 37);
            let scores: Vec<f64> = (0..n).map(|_| (next() * 8.0).round() / 8.0).collect();
            let excluded: BTreeSet<usize> =
                (0..n).filter(|_| next() > 0.3).collect();
            let target = match (0..n).find(|i| !excluded.contains(i)) {
                Some(t) => t,
                None => continue,
            };
            let mut order: Vec<usize> = (0..n).filter(|i| !excluded.contains(i)).collect();
            order.sort_by(|&a, &b| {
                scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b))
            });
            let oracle = order.iter().position(|&i| i == target).unwrap() + 1;
            let got = rank_of_target(&scores, target, &excluded).unwrap();
            assert_eq!(got, oracle, "trial {trial}");
        }
    }

    #[test]
    fn report_means_equal_per_user_dump_means() {
        use crate::data::{generate_synthetic, leave_one_out, SyntheticConfig, SyntheticMode};
        use crate::model::{ModelConfig, ModelParams};

        let ds = generate_synthetic(&SyntheticConfig {
            n_users: 30,
            n_items: 24,
            items_per_user: (4, 6),
            n_sequential_items: 12,
            n_series: (3, 3),
            max_interactions_per_user: 6,
            mode: SyntheticMode::Mixed,
            popularity_exponent: 1.5,
            continuation_prob: 0.8,
            seed: 5,
        })
        .unwrap();
        let graph = ds.build_graph().unwrap();
        let split = leave_one_out(&ds);
        let params = ModelParams::init(
            ModelConfig {
                d: 8,
                layers: 1,
                max_order: 6,
                n_users: ds.n_users,
                n_items: ds.n_items,
                fusion: crate::model::FusionStrategy::Sum,
                positional: crate::encoding::PositionalKind::Sinusoidal,
                propagation: crate::model::Propagation::Attention,
            },
            3,
        )
        .unwrap();
        let cfg = EvalConfig {
            ks: vec![5, 10],
            exclude_seen: true,
            sampling: crate::sampling::SamplingConfig {
                m: 1,
                recent_n: 6,
                truncate_expansion: true,
            },
            per_user: true,
            ..EvalConfig::default()
        };
        let report = evaluate(&params, &graph, &split, EvalTarget::Test, &cfg).unwrap();
        let per_user = report.per_user.as_ref().unwrap();
        assert_eq!(per_user.len(), report.n_evaluated);
        for &k in &report.ks {
            let hit_mean: f64 = per_user.iter().map(|r| hit_at_k(r.rank, k)).sum::<f64>()
                / per_user.len() as f64;
            let ndcg_mean: f64 = per_user.iter().map(|r| ndcg_at_k(r.rank, k)).sum::<f64>()
                / per_user.len() as f64;
            assert!((report.hit[&k] - hit_mean).abs() < 1e-12);
            assert!((report.ndcg[&k] - ndcg_mean).abs() < 1e-12);
        }
        // Determinism of the metric fields.
        let again = evaluate(&params, &graph, &split, EvalTarget::Test, &cfg).unwrap();
        assert_eq!(report.hit, again.hit);
        assert_eq!(report.ndcg, again.ndcg);
    }

    #[test]
    fn candidate_sampling_shrinks_the_pool_deterministically() {
        use crate::data::{generate_synthetic, leave_one_out, SyntheticConfig, SyntheticMode};
        use crate::model::{ModelConfig, ModelParams};

        let ds = generate_synthetic(&SyntheticConfig {
            n_users: 25,
            n_items: 60,
            items_per_user: (4, 6),
            n_sequential_items: 20,
            n_series: (4, 4),
            max_interactions_per_user: 6,
            mode: SyntheticMode::Mixed,
            popularity_exponent: 1.5,
            continuation_prob: 0.8,
            seed: 11,
        })
        .unwrap();
        let graph = ds.build_graph().unwrap();
        let split = leave_one_out(&ds);
        let params = ModelParams::init(
            ModelConfig {
                d: 8,
                layers: 1,
                max_order: 6,
                n_users: ds.n_users,
                n_items: ds.n_items,
                fusion: crate::model::FusionStrategy::Sum,
                positional: crate::encoding::PositionalKind::Sinusoidal,
                propagation: crate::model::Propagation::Attention,
            },
            2,
        )
        .unwrap();
        let base = EvalConfig {
            ks: vec![10],
            sampling: crate::sampling::SamplingConfig {
                m: 1,
                recent_n: 6,
                truncate_expansion: true,
            },
            per_user: true,
            ..EvalConfig::default()
        };
        let full = evaluate(&params, &graph, &split, EvalTarget::Test, &base).unwrap();
        let sampled_cfg = EvalConfig {
            candidate_sample: Some(15),
            candidate_seed: 9,
            ..base.clone()
        };
        let sampled = evaluate(&params, &graph, &split, EvalTarget::Test, &sampled_cfg).unwrap();
        // Ranks within a 16-item pool, and never worse than full ranking.
        for (s, f) in sampled
            .per_user
            .as_ref()
            .unwrap()
            .iter()
            .zip(full.per_user.as_ref().unwrap())
        {
            assert!(s.rank <= 16, "rank {} too large for the pool", s.rank);
            assert!(s.rank <= f.rank);
        }
        assert!(sampled.hit[&10] >= full.hit[&10]);
        let again = evaluate(&params, &graph, &split, EvalTarget::Test, &sampled_cfg).unwrap();
        assert_eq!(sampled.per_user, again.per_user);
    }

    #[test]
    fn forced_top_rank_gives_perfect_report() {
        use crate::data::{leave_one_out, Dataset};
        use crate::model::{ModelConfig, ModelParams};

        // Single evaluated user; rig the parameters so the held-out test
        // item scores far above everything else.
        let ds = Dataset {
            n_users: 1,
            n_items: 4,
            interactions: vec![(0, 0, 1), (0, 1, 2), (0, 2, 3)],
            series: vec![],
            user_labels: vec!["u".into()],
            item_labels: (0..4).map(|i| i.to_string()).collect(),
        };
        let graph = ds.build_graph().unwrap();
        let split = leave_one_out(&ds);
        assert_eq!(split.test[0], Some((2, 3)));
        let mut params = ModelParams::init(
            ModelConfig {
                d: 2,
                layers: 0,
                max_order: 3,
                n_users: 1,
                n_items: 4,
                fusion: crate::model::FusionStrategy::Sum,
                positional: crate::encoding::PositionalKind::Sinusoidal,
                propagation: crate::model::Propagation::Attention,
            },
            0,
        )
        .unwrap();
        params.values_mut("user_embeddings").copy_from_slice(&[1.0, 0.0]);
        params
            .values_mut("prediction")
            .copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let mut items = vec![0.0; 8];
        items[2 * 2] = 100.0; // target item id 2 aligned with the user
        params.values_mut("item_embeddings").copy_from_slice(&items);

        let cfg = EvalConfig {
            ks: vec![5, 10, 20],
            exclude_seen: true,
            sampling: crate::sampling::SamplingConfig {
                m: 0,
                recent_n: 5,
                truncate_expansion: true,
            },
            per_user: false,
            ..EvalConfig::default()
        };
        let report = evaluate(&params, &graph, &split, EvalTarget::Test, &cfg).unwrap();
        assert_eq!(report.n_evaluated, 1);
        for &k in &report.ks {
            assert_eq!(report.hit[&k], 1.0);
            assert_eq!(report.ndcg[&k], 1.0);
        }
    }

    #[test]
    fn metrics_monotone_in_k() {
        for rank in 1..30 {
            let mut last_hit = 0.0;
            let mut last_ndcg = 0.0;
            for k in [5, 10, 20] {
                let h = hit_at_k(rank, k);
                let d = ndcg_at_k(rank, k);
                assert!(h >= last_hit);
                assert!(d >= last_ndcg);
                assert!(d <= h); // single-relevant-item bound
                last_hit = h;
                last_ndcg = d;
            }
        }
    }
}
