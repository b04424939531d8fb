//! Synthetic interaction simulation: Zipf item popularity, per-user
//! integer timestamps, and series-ordered sequel consumption.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::Series;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticMode {
    /// 50% of interactions on sequel items, 50% on standalone items.
    Mixed,
    /// Only sequel items, consumed in series order.
    Sequential,
    /// Only standalone items.
    Standalone,
}

impl SyntheticMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mixed" => Ok(SyntheticMode::Mixed),
            "sequential" => Ok(SyntheticMode::Sequential),
            "standalone" => Ok(SyntheticMode::Standalone),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected mixed|sequential|standalone)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SyntheticMode::Mixed => "mixed",
            SyntheticMode::Sequential => "sequential",
            SyntheticMode::Standalone => "standalone",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    /// Inclusive range of interactions per user.
    pub items_per_user: (usize, usize),
    pub n_sequential_items: usize,
    /// Inclusive range for the number of series.
    pub n_series: (usize, usize),
    pub max_interactions_per_user: usize,
    pub mode: SyntheticMode,
    pub popularity_exponent: f64,
    /// Probability of continuing an active series on the next draw
    /// (mixed mode; sequential mode always continues).
    pub continuation_prob: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_users: 10_000,
            n_items: 500,
            items_per_user: (10, 15),
            n_sequential_items: 250,
            n_series: (20, 30),
            max_interactions_per_user: 15,
            mode: SyntheticMode::Mixed,
            popularity_exponent: 1.5,
            continuation_prob: 0.8,
            seed: 1,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.items_per_user;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!(
                "items_per_user range ({lo}, {hi}) is empty"
            )));
        }
        if self.n_sequential_items > self.n_items {
            return Err(Error::Config(format!(
                "{} sequential items exceed the {}-item universe",
                self.n_sequential_items, self.n_items
            )));
        }
        let (s_lo, s_hi) = self.n_series;
        let needs_series = !matches!(self.mode, SyntheticMode::Standalone);
        if needs_series {
            if s_lo == 0 || s_lo > s_hi {
                return Err(Error::Config(format!("n_series range ({s_lo}, {s_hi}) is empty")));
            }
            if 2 * s_hi > self.n_sequential_items {
                return Err(Error::Config(format!(
                    "{} series of length >= 2 cannot cover {} sequential items",
                    s_hi, self.n_sequential_items
                )));
            }
        }
        let cap = self.effective_max_per_user();
        let standalone = self.n_items - self.n_sequential_items;
        match self.mode {
            SyntheticMode::Standalone if standalone < cap => Err(Error::Config(format!(
                "standalone mode needs at least {cap} standalone items, have {standalone}"
            ))),
            SyntheticMode::Sequential if self.n_sequential_items < cap => {
                Err(Error::Config(format!(
                    "sequential mode needs at least {cap} sequential items, have {}",
                    self.n_sequential_items
                )))
            }
            SyntheticMode::Mixed if standalone < cap || self.n_sequential_items == 0 => {
                Err(Error::Config(
                    "mixed mode needs both standalone and sequential items".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    fn effective_max_per_user(&self) -> usize {
        self.items_per_user.1.min(self.max_interactions_per_user)
    }
}

/// Exact Zipf sampling over ranks 0..n by CDF inversion, with
/// P(rank r) proportional to (r + 1)^-s.
pub struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    pub fn new(n: usize, exponent: f64) -> Self {
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for r in 1..=n {
            acc += (r as f64).powf(-exponent);
            cdf.push(acc);
        }
        let total = acc;
        for c in &mut cdf {
            *c /= total;
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        ZipfSampler { cdf }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c < u)
    }
}

/// Split `total` items into `n_series` ordered series of length two or
/// more, sizes evened out round-robin. Item ids 0..total are assigned
/// to series in order.
fn partition_series(total: usize, n_series: usize) -> Vec<Series> {
    let mut sizes = vec![2usize; n_series];
    let mut rest = total - 2 * n_series;
    let mut s = 0;
    while rest > 0 {
        sizes[s] += 1;
        rest -= 1;
        s = (s + 1) % n_series;
    }
    let mut series = Vec::with_capacity(n_series);
    let mut next = 0;
    for (id, size) in sizes.into_iter().enumerate() {
        series.push(Series {
            id,
            items: (next..next + size).collect(),
        });
        next += size;
    }
    series
}

/// Draw an unused rank from the sampler; falls back to the most
/// popular unused entry if rejection sampling runs long.
fn draw_unused(
    zipf: &ZipfSampler,
    rng: &mut impl Rng,
    pool_len: usize,
    used: impl Fn(usize) -> bool,
) -> usize {
    for _ in 0..100 {
        let r = zipf.sample(rng);
        if !used(r) {
            return r;
        }
    }
    (0..pool_len).find(|&r| !used(r)).expect("pool exhausted")
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);

    let (series, n_series) = if matches!(cfg.mode, SyntheticMode::Standalone) {
        (Vec::new(), 0)
    } else {
        let n = rng.random_range(cfg.n_series.0..=cfg.n_series.1);
        (partition_series(cfg.n_sequential_items, n), n)
    };
    let n_sequel_items = if series.is_empty() { 0 } else { cfg.n_sequential_items };
    let n_standalone = cfg.n_items - n_sequel_items;

    let series_zipf = ZipfSampler::new(n_series.max(1), cfg.popularity_exponent);
    let standalone_zipf = ZipfSampler::new(n_standalone.max(1), cfg.popularity_exponent);
    let standalone_base = n_sequel_items; // standalone ids come after sequel ids

    let cap = cfg.effective_max_per_user();
    let lo = cfg.items_per_user.0.min(cap);

    let mut interactions = Vec::new();
    let mut sequel_total: u64 = 0;
    let mut standalone_total: u64 = 0;

    for user in 0..cfg.n_users {
        let k = rng.random_range(lo..=cap);
        let mut used: BTreeSet<usize> = BTreeSet::new();
        let mut started: BTreeSet<usize> = BTreeSet::new();
        // (series index, 0-based offset of the next unseen position)
        let mut active: Option<(usize, usize)> = None;

        for step in 0..k {
            let draw_standalone = |rng: &mut ChaCha12Rng, used: &BTreeSet<usize>| {
                let r = draw_unused(&standalone_zipf, rng, n_standalone, |r| {
                    used.contains(&(standalone_base + r))
                });
                standalone_base + r
            };
            let start_series = |rng: &mut ChaCha12Rng, started: &BTreeSet<usize>| {
                let s = draw_unused(&series_zipf, rng, n_series, |s| started.contains(&s));
                (s, series[s].items[0])
            };

            let item = match cfg.mode {
                SyntheticMode::Standalone => draw_standalone(&mut rng, &used),
                SyntheticMode::Sequential => match active {
                    Some((s, next)) if next < series[s].items.len() => {
                        active = Some((s, next + 1));
                        series[s].items[next]
                    }
                    _ => {
                        let (s, item) = start_series(&mut rng, &started);
                        started.insert(s);
                        active = Some((s, 1));
                        item
                    }
                },
                SyntheticMode::Mixed => {
                    let continued = match active {
                        Some((s, next))
                            if next < series[s].items.len()
                                && rng.random::<f64>() < cfg.continuation_prob =>
                        {
                            active = Some((s, next + 1));
                            Some(series[s].items[next])
                        }
                        _ => None,
                    };
                    match continued {
                        Some(item) => item,
                        None => {
                            active = None;
                            // Greedy balance toward the 50/50 sequel target.
                            let want_sequel =
                                sequel_total <= standalone_total && started.len() < n_series;
                            if want_sequel {
                                let (s, item) = start_series(&mut rng, &started);
                                started.insert(s);
                                active = Some((s, 1));
                                item
                            } else {
                                draw_standalone(&mut rng, &used)
                            }
                        }
                    }
                }
            };

            used.insert(item);
            if item < n_sequel_items {
                sequel_total += 1;
            } else {
                standalone_total += 1;
            }
            interactions.push((user, item, (step + 1) as i64));
        }
    }

    Ok(Dataset {
        n_users: cfg.n_users,
        n_items: cfg.n_items,
        interactions,
        series,
        user_labels: (0..cfg.n_users).map(|u| u.to_string()).collect(),
        item_labels: (0..cfg.n_items).map(|i| i.to_string()).collect(),
    })
}
