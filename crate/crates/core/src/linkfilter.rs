//! Reduction of monthly transaction records to stable supply links.
//!
//! A pair is linked while some window of `window` consecutive months holds at
//! least `min_transactions` distinct transaction months. Each satisfying
//! window activates the span from its first to its last transaction month;
//! overlapping or adjacent spans merge, and the link exits in the month
//! after the last active month.

use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::FirmId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub supplier: FirmId,
    pub buyer: FirmId,
    pub month: i64,
    pub amount: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkInterval {
    pub supplier: FirmId,
    pub buyer: FirmId,
    pub entry_month: i64,
    /// Exclusive.
    pub exit_month: i64,
}

impl LinkInterval {
    pub fn is_active(&self, month: i64) -> bool {
        self.entry_month <= month && month < self.exit_month
    }

    pub fn len(&self) -> i64 {
        self.exit_month - self.entry_month
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterRule {
    pub min_transactions: usize,
    pub window: i64,
}

impl Default for FilterRule {
    fn default() -> Self {
        Self {
            min_transactions: 3,
            window: 6,
        }
    }
}

impl FilterRule {
    /// Active spans `[entry, exit)` for one pair. `months` must be sorted and
    /// free of duplicates.
    pub fn spans(&self, months: &[i64]) -> Vec<(i64, i64)> {
        let mut out: Vec<(i64, i64)> = Vec::new();
        if self.min_transactions == 0 || months.len() < self.min_transactions {
            return out;
        }
        let mut j = 0;
        for i in 0..months.len() {
            // every satisfying window is covered by the window opening at its
            // first transaction month
            let last_allowed = months[i] + self.window - 1;
            if j < i {
                j = i;
            }
            while j + 1 < months.len() && months[j + 1] <= last_allowed {
                j += 1;
            }
            if j + 1 - i >= self.min_transactions {
                let (start, end) = (months[i], months[j] + 1);
                match out.last_mut() {
                    Some(last) if start <= last.1 => last.1 = last.1.max(end),
                    _ => out.push((start, end)),
                }
            }
        }
        out
    }
}

/// Stable-link intervals for every pair, sorted by (supplier, buyer, entry).
/// Self-transactions are ignored and same-month records collapse.
pub fn filter_stable_links(records: &[TransactionRecord]) -> Vec<LinkInterval> {
    filter_with_rule(records, FilterRule::default())
}

pub fn filter_with_rule(records: &[TransactionRecord], rule: FilterRule) -> Vec<LinkInterval> {
    let mut rows: Vec<(FirmId, FirmId, i64)> = records
        .iter()
        .filter(|r| r.supplier != r.buyer)
        .map(|r| (r.supplier, r.buyer, r.month))
        .collect();
    rows.par_sort_unstable();
    rows.dedup();

    let mut groups: Vec<Range<usize>> = Vec::new();
    let mut start = 0;
    for i in 1..=rows.len() {
        if i == rows.len() || (rows[i].0, rows[i].1) != (rows[start].0, rows[start].1) {
            groups.push(start..i);
            start = i;
        }
    }

    groups
        .into_par_iter()
        .flat_map_iter(|g| {
            let (supplier, buyer) = (rows[g.start].0, rows[g.start].1);
            let months: Vec<i64> = rows[g].iter().map(|r| r.2).collect();
            rule.spans(&months)
                .into_iter()
                .map(move |(entry_month, exit_month)| LinkInterval {
                    supplier,
                    buyer,
                    entry_month,
                    exit_month,
                })
        })
        .collect()
}

/// Mean transaction amount of each interval, from the records falling inside
/// it. Intervals without priced records get `None`.
pub fn interval_weights(intervals: &[LinkInterval], records: &[TransactionRecord]) -> Vec<Option<f64>> {
    let mut by_pair: BTreeMap<(FirmId, FirmId), Vec<(i64, f64)>> = BTreeMap::new();
    for r in records {
        if let Some(a) = r.amount {
            by_pair.entry((r.supplier, r.buyer)).or_default().push((r.month, a));
        }
    }
    intervals
        .iter()
        .map(|iv| {
            let rows = by_pair.get(&(iv.supplier, iv.buyer))?;
            let (mut sum, mut n) = (0.0, 0usize);
            for &(m, a) in rows {
                if iv.is_active(m) {
                    sum += a;
                    n += 1;
                }
            }
            (n > 0).then(|| sum / n as f64)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub months: Vec<i64>,
    pub links: Vec<usize>,
    pub firms: Vec<usize>,
}

/// Monthly link count L(t) and firm count N(t) over `range`.
///
/// A firm counts from its first appearance in any interval until its last
/// active month, whether or not it has an active link in between.
pub fn activity_timeline(intervals: &[LinkInterval], range: Range<i64>) -> Timeline {
    let len = (range.end - range.start).max(0) as usize;
    let mut link_diff = vec![0i64; len + 1];
    let mut spans: BTreeMap<FirmId, (i64, i64)> = BTreeMap::new();

    let clamp = |m: i64| (m.clamp(range.start, range.end) - range.start) as usize;
    for iv in intervals {
        link_diff[clamp(iv.entry_month)] += 1;
        link_diff[clamp(iv.exit_month)] -= 1;
        for f in [iv.supplier, iv.buyer] {
            let e = spans.entry(f).or_insert((iv.entry_month, iv.exit_month));
            e.0 = e.0.min(iv.entry_month);
            e.1 = e.1.max(iv.exit_month);
        }
    }
    let mut firm_diff = vec![0i64; len + 1];
    for (first, last_exit) in spans.values() {
        firm_diff[clamp(*first)] += 1;
        firm_diff[clamp(*last_exit)] -= 1;
    }

    let prefix = |diff: &[i64]| -> Vec<usize> {
        let mut acc = 0i64;
        diff[..len]
            .iter()
            .map(|d| {
                acc += d;
                acc as usize
            })
            .collect()
    };
    Timeline {
        months: range.collect(),
        links: prefix(&link_diff),
        firms: prefix(&firm_diff),
    }
}
