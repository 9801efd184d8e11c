//! Synthetic data with known ground truth: seed networks, and transaction
//! streams that the link filter turns back into known intervals.

use std::collections::{BTreeMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Zipf};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::rng::mix;
use crate::engine::{run, EngineConfig, FirmRecord, History};
use crate::error::{Error, Result};
use crate::graph::{FirmId, NetworkState, SectorId};
use crate::linkfilter::{FilterRule, LinkInterval, TransactionRecord};
use crate::params::ModelParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedRecipe {
    /// Directed configuration model. Total degrees follow p(k) ∝ k^(−exponent)
    /// on 1..=max_degree, each stub pair becomes one directed link.
    Configuration { exponent: f64, max_degree: usize },
    /// Engine burn-in from a sparse random graph of `n_firms` firms.
    BurnIn { params: Box<ModelParams>, steps: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub params: ModelParams,
    pub seed: u64,
    pub recipe: String,
}

fn sector_sampler(sector_dist: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(sector_dist).map_err(|e| Error::InvalidParameter(format!("sector distribution: {e}")))
}

/// Builds a synthetic starting network with firm ids 0..n_firms.
pub fn seed_network(n_firms: usize, sector_dist: &[f64], recipe: &SeedRecipe, seed: u64) -> Result<NetworkState> {
    if n_firms < 100 {
        return Err(Error::InvalidParameter(format!("seed network needs at least 100 firms, got {n_firms}")));
    }
    let sectors = sector_sampler(sector_dist)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x5EED, 0));
    let mut state = NetworkState::new(sector_dist.len());
    for _ in 0..n_firms {
        state.add_firm(SectorId(sectors.sample(&mut rng) as u16))?;
    }
    match recipe {
        SeedRecipe::Configuration { exponent, max_degree } => {
            let zipf = Zipf::new((*max_degree).max(1) as f64, *exponent)
                .map_err(|e| Error::InvalidParameter(format!("degree law: {e}")))?;
            let mut stubs: Vec<u64> = Vec::new();
            for i in 0..n_firms as u64 {
                let k = zipf.sample(&mut rng) as usize;
                stubs.extend(std::iter::repeat_n(i, k));
            }
            if stubs.len() % 2 == 1 {
                stubs.pop();
            }
            stubs.shuffle(&mut rng);
            for pair in stubs.chunks_exact(2) {
                state.add_edge(FirmId(pair[0]), FirmId(pair[1]))?;
            }
            Ok(state)
        }
        SeedRecipe::BurnIn { params, steps } => {
            let n = n_firms as u64;
            for _ in 0..n {
                let a = rng.random_range(0..n);
                let b = rng.random_range(0..n);
                state.add_edge(FirmId(a), FirmId(b))?;
            }
            for id in state.isolated_firms() {
                state.remove_firm(id)?;
            }
            let cfg = EngineConfig::new((**params).clone(), mix(seed, 0xB0B, 1), *steps);
            Ok(run(&state, &cfg)?.final_state)
        }
    }
}

/// Rewrites intervals into the form a transaction stream can reproduce:
/// runs shorter than the filter's minimum are lengthened to it, and runs of
/// the same pair separated by gaps the filter would bridge are merged.
pub fn canonical_intervals(intervals: &[LinkInterval], rule: FilterRule) -> Vec<LinkInterval> {
    let min_len = rule.min_transactions as i64;
    let bridge = rule.window - rule.min_transactions as i64 + 1;
    let mut by_pair: BTreeMap<(FirmId, FirmId), Vec<(i64, i64)>> = BTreeMap::new();
    for iv in intervals {
        let exit = iv.exit_month.max(iv.entry_month + min_len);
        by_pair.entry((iv.supplier, iv.buyer)).or_default().push((iv.entry_month, exit));
    }
    let mut out = Vec::with_capacity(intervals.len());
    for ((supplier, buyer), mut spans) in by_pair {
        spans.sort_unstable();
        let mut cur = spans[0];
        for &(a, b) in &spans[1..] {
            if a - cur.1 < bridge {
                cur.1 = cur.1.max(b);
            } else {
                out.push(LinkInterval { supplier, buyer, entry_month: cur.0, exit_month: cur.1 });
                cur = (a, b);
            }
        }
        out.push(LinkInterval { supplier, buyer, entry_month: cur.0, exit_month: cur.1 });
    }
    out
}

/// `n_pairs` distinct random pairs among firms 0..n_firms, each with one or
/// more on/off runs inside `months`, returned in canonical form. Run
/// lengths of 1-24 months and gaps of 1-8 months exercise both the
/// lengthening and the merging of the canonical form.
pub fn random_link_intervals(n_pairs: usize, n_firms: u64, months: std::ops::Range<i64>, seed: u64) -> Result<Vec<LinkInterval>> {
    let rule = FilterRule::default();
    let min_len = rule.min_transactions as i64;
    if months.end - months.start < min_len {
        return Err(Error::InvalidParameter("month range shorter than a minimal link".into()));
    }
    if n_firms < 2 || (n_pairs as u128) > (n_firms as u128) * (n_firms as u128 - 1) / 2 {
        return Err(Error::InvalidParameter("not enough firms for the requested pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 4, 0));
    let mut pairs = HashSet::with_capacity(n_pairs);
    let mut raw = Vec::new();
    while pairs.len() < n_pairs {
        let s = FirmId(rng.random_range(0..n_firms));
        let b = FirmId(rng.random_range(0..n_firms));
        if s == b || !pairs.insert((s, b)) {
            continue;
        }
        let mut m = rng.random_range(months.start..=months.end - min_len);
        loop {
            let len = rng.random_range(1..=24).min(months.end - m);
            raw.push(LinkInterval { supplier: s, buyer: b, entry_month: m, exit_month: m + len });
            m += len + rng.random_range(1..=8);
            if m > months.end - min_len || rng.random_bool(0.4) {
                break;
            }
        }
    }
    Ok(canonical_intervals(&raw, rule))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransactionConfig {
    /// Pairs that never form a link but trade occasionally.
    pub noise_pairs: usize,
    /// Transactions per noise pair, spaced so no window reaches the threshold.
    pub noise_per_pair: usize,
    pub amount_mu: f64,
    pub amount_sigma: f64,
}

impl Default for TransactionConfig {
    fn default() -> Self {
        Self {
            noise_pairs: 0,
            noise_per_pair: 2,
            amount_mu: 10.0,
            amount_sigma: 1.0,
        }
    }
}

/// One transaction in every month of every interval plus sub-threshold
/// noise on pairs that are never linked. `intervals` should already be
/// canonical; `firms` and `months` bound where noise can land.
pub fn generate_transactions(
    intervals: &[LinkInterval],
    firms: &[FirmId],
    months: std::ops::Range<i64>,
    cfg: &TransactionConfig,
    seed: u64,
) -> Result<Vec<TransactionRecord>> {
    let amounts = LogNormal::new(cfg.amount_mu, cfg.amount_sigma)
        .map_err(|e| Error::InvalidParameter(format!("amount law: {e}")))?;
    let mut out: Vec<TransactionRecord> = intervals
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, iv)| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 1, i as u64));
            (iv.entry_month..iv.exit_month)
                .map(|month| TransactionRecord {
                    supplier: iv.supplier,
                    buyer: iv.buyer,
                    month,
                    amount: Some(amounts.sample(&mut rng)),
                })
                .collect::<Vec<_>>()
        })
        .collect();

    if cfg.noise_pairs > 0 && cfg.noise_per_pair > 0 {
        let spacing = 3i64;
        let span = (cfg.noise_per_pair as i64 - 1) * spacing + 1;
        if firms.len() < 2 || months.end - months.start < span {
            return Err(Error::InvalidParameter("noise does not fit the firm set or month range".into()));
        }
        let linked: HashSet<(FirmId, FirmId)> = intervals.iter().map(|iv| (iv.supplier, iv.buyer)).collect();
        let mut used = HashSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 2, 0));
        let mut attempts = 0usize;
        while used.len() < cfg.noise_pairs {
            attempts += 1;
            if attempts > 100 * cfg.noise_pairs + 1000 {
                return Err(Error::InvalidParameter("cannot find enough unlinked pairs for noise".into()));
            }
            let s = firms[rng.random_range(0..firms.len())];
            let b = firms[rng.random_range(0..firms.len())];
            if s == b || linked.contains(&(s, b)) || !used.insert((s, b)) {
                continue;
            }
            let start = rng.random_range(months.start..=months.end - span);
            for j in 0..cfg.noise_per_pair as i64 {
                out.push(TransactionRecord {
                    supplier: s,
                    buyer: b,
                    month: start + j * spacing,
                    amount: Some(amounts.sample(&mut rng)),
                });
            }
        }
    }
    Ok(out)
}

/// Engine run with full history, plus the transaction stream that encodes
/// it.
#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub truth: GroundTruth,
    pub history: History,
    /// Canonical intervals the filter must reproduce.
    pub intervals: Vec<LinkInterval>,
    pub firms: Vec<FirmRecord>,
    pub transactions: Vec<TransactionRecord>,
}

pub fn simulate_dataset(
    initial: &NetworkState,
    cfg: &EngineConfig,
    tx: &TransactionConfig,
    recipe: &str,
) -> Result<SyntheticDataset> {
    let mut cfg = cfg.clone();
    cfg.record_history = true;
    let out = run(initial, &cfg)?;
    let history = out.history.expect("history was requested");
    let intervals = canonical_intervals(&history.intervals, FilterRule::default());
    let ids: Vec<FirmId> = history.firms.iter().map(|f| f.id).collect();
    let months = history.start_month..history.end_month + 1;
    let transactions = generate_transactions(&intervals, &ids, months, tx, mix(cfg.seed, 3, 0))?;
    Ok(SyntheticDataset {
        truth: GroundTruth {
            params: cfg.params.clone(),
            seed: cfg.seed,
            recipe: recipe.to_string(),
        },
        firms: history.firms.clone(),
        history,
        intervals,
        transactions,
    })
}
