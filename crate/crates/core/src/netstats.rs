//! Structural statistics of network snapshots: degree CCDFs, power-law tail
//! fits, nearest-neighbour degree and clustering curves, and size
//! time-series moments.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::StepReport;
use crate::error::{Error, Result};
use crate::graph::{FirmId, NetworkState};
use crate::olsfit::{ols, sample_variance, t_critical};

/// Points (x, P(X ≥ x)) at every distinct value, ascending.
pub fn ccdf(values: &[usize]) -> Vec<(usize, f64)> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        out.push((x, (sorted.len() - i) as f64 / n));
        while i < sorted.len() && sorted[i] == x {
            i += 1;
        }
    }
    out
}

/// Hurwitz zeta ζ(s, q) = Σ_{n≥0} (q + n)^(−s) for s > 1, q > 0, by
/// Euler–Maclaurin summation.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    const N: usize = 12;
    // B_2j / (2j)!
    const B: [f64; 6] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
    ];
    let mut sum: f64 = (0..N).map(|n| (q + n as f64).powf(-s)).sum();
    let a = q + N as f64;
    sum += a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
    let mut rising = s; // s(s+1)…(s+2j−2)
    let mut pow = a.powf(-s - 1.0);
    for (j, b) in B.iter().enumerate() {
        sum += b * rising * pow;
        let m = 2.0 * j as f64;
        rising *= (s + m + 1.0) * (s + m + 2.0);
        pow /= a * a;
    }
    sum
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// Density exponent γ of p(k) ∝ k^(−γ), k ≥ k_min.
    pub exponent: f64,
    /// Half width of the 90 % confidence interval.
    pub ci90: f64,
    pub k_min: usize,
    pub n_tail: usize,
    /// Kolmogorov–Smirnov distance between the tail and the fitted law.
    pub ks: f64,
}

impl TailFit {
    pub fn contains(&self, value: f64) -> bool {
        (self.exponent - value).abs() <= self.ci90
    }
}

pub const MIN_TAIL_POINTS: usize = 100;

fn ln_zeta(s: f64, q: f64) -> f64 {
    hurwitz_zeta(s, q).ln()
}

/// Discrete maximum-likelihood fit of the tail above `k_min`, with the
/// confidence interval from the observed Fisher information.
pub fn fit_tail_exponent(values: &[usize], k_min: usize) -> Result<TailFit> {
    if k_min == 0 {
        return Err(Error::InvalidParameter("k_min must be at least 1".into()));
    }
    let tail: Vec<usize> = values.iter().copied().filter(|&v| v >= k_min).collect();
    let n = tail.len();
    if n < MIN_TAIL_POINTS {
        return Err(Error::insufficient("tail fit", format!("{n} values ≥ {k_min}, need {MIN_TAIL_POINTS}")));
    }
    if tail.iter().all(|&v| v == tail[0]) {
        return Err(Error::insufficient("tail fit", "all tail values are equal"));
    }
    let q = k_min as f64;
    let sum_ln: f64 = tail.iter().map(|&v| (v as f64).ln()).sum();
    let nf = n as f64;
    let nll = |g: f64| nf * ln_zeta(g, q) + g * sum_ln;

    // golden-section search on the convex negative log-likelihood
    let (mut a, mut b) = (1.0001, 8.0);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (nll(c), nll(d));
    while b - a > 1e-9 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = nll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = nll(d);
        }
    }
    let g = 0.5 * (a + b);
    if !(1.001..7.999).contains(&g) {
        return Err(Error::Numerical(format!("tail exponent estimate {g} at search boundary")));
    }
    let h = 1e-4;
    let d2 = (ln_zeta(g + h, q) - 2.0 * ln_zeta(g, q) + ln_zeta(g - h, q)) / (h * h);
    let se = 1.0 / (nf * d2).sqrt();
    let ks = tail_ks(&tail, g, q);
    Ok(TailFit {
        exponent: g,
        ci90: t_critical(0.90, usize::MAX) * se,
        k_min,
        n_tail: n,
        ks,
    })
}

fn tail_ks(tail: &[usize], g: f64, q: f64) -> f64 {
    let mut sorted = tail.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let z = hurwitz_zeta(g, q);
    let mut worst = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let model_ge = hurwitz_zeta(g, x as f64) / z;
        let emp_ge = (sorted.len() - i) as f64 / n;
        worst = worst.max((model_ge - emp_ge).abs());
        while i < sorted.len() && sorted[i] == x {
            i += 1;
        }
    }
    worst
}

/// Tail fit with k_min chosen to minimise the Kolmogorov–Smirnov distance
/// among candidates that leave at least the minimum number of tail points.
pub fn fit_tail_auto(values: &[usize]) -> Result<TailFit> {
    let mut candidates: Vec<usize> = values.iter().copied().filter(|&v| v >= 1).collect();
    candidates.sort_unstable();
    candidates.dedup();
    let fits: Vec<TailFit> = candidates
        .par_iter()
        .filter_map(|&k| fit_tail_exponent(values, k).ok())
        .collect();
    fits.into_iter()
        .min_by(|a, b| a.ks.total_cmp(&b.ks).then(a.k_min.cmp(&b.k_min)))
        .ok_or_else(|| Error::insufficient("tail fit", "no k_min leaves enough tail points"))
}

/// Least-squares slope of the log-log CCDF above k_min, reported as a
/// density exponent (1 − slope).
pub fn fit_tail_ccdf_ols(values: &[usize], k_min: usize) -> Result<f64> {
    let pts: Vec<(f64, f64)> = ccdf(values)
        .into_iter()
        .filter(|&(x, _)| x >= k_min.max(1))
        .map(|(x, p)| ((x as f64).ln(), p.ln()))
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Ok(1.0 - ols(&x, &y)?.slope)
}

/// Degree bins: one per degree for k ≤ 10, five logarithmic bins per decade
/// above. A pure function of the largest degree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinLayout {
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
}

pub const LINEAR_LIMIT: usize = 10;
const LOG_BINS_PER_DECADE: f64 = 5.0;

fn log_bin_upper(j: usize) -> usize {
    let edge = (LINEAR_LIMIT as f64) * 10f64.powf((j + 1) as f64 / LOG_BINS_PER_DECADE);
    // guard against 99.99999 style rounding of exact powers of ten
    (edge + 1e-9).floor() as usize
}

impl BinLayout {
    pub fn for_max_degree(max_degree: usize) -> Self {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for k in 1..=LINEAR_LIMIT.min(max_degree) {
            lower.push(k);
            upper.push(k);
        }
        let mut lo = LINEAR_LIMIT + 1;
        let mut j = 0;
        while lo <= max_degree {
            let hi = log_bin_upper(j);
            if hi >= lo {
                lower.push(lo);
                upper.push(hi);
                lo = hi + 1;
            }
            j += 1;
        }
        Self { lower, upper }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn bin_of(&self, k: usize) -> Option<usize> {
        if k == 0 {
            return None;
        }
        let i = self.upper.partition_point(|&u| u < k);
        (i < self.len() && self.lower[i] <= k).then_some(i)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedCurve {
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
    pub means: Vec<Option<f64>>,
    pub std_errors: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

impl BinnedCurve {
    /// Bins (k, value) points on the layout for their largest k.
    pub fn from_points(points: &[(usize, f64)]) -> Self {
        let max_k = points.iter().map(|p| p.0).max().unwrap_or(0);
        let layout = BinLayout::for_max_degree(max_k);
        let mut groups: Vec<Vec<f64>> = vec![Vec::new(); layout.len()];
        for &(k, v) in points {
            if let Some(b) = layout.bin_of(k) {
                groups[b].push(v);
            }
        }
        let mut means = Vec::with_capacity(layout.len());
        let mut ses = Vec::with_capacity(layout.len());
        let mut counts = Vec::with_capacity(layout.len());
        for g in &groups {
            counts.push(g.len());
            if g.is_empty() {
                means.push(None);
                ses.push(None);
            } else {
                let m = g.iter().sum::<f64>() / g.len() as f64;
                means.push(Some(m));
                ses.push((g.len() > 1).then(|| (sample_variance(g) / g.len() as f64).sqrt()));
            }
        }
        Self {
            lower: layout.lower,
            upper: layout.upper,
            means,
            std_errors: ses,
            counts,
        }
    }
}

/// Undirected projection with firms renumbered 0..N in id order and sorted
/// neighbour lists.
#[derive(Clone, Debug)]
pub struct UndirectedView {
    pub ids: Vec<FirmId>,
    pub neighbors: Vec<Vec<u32>>,
}

impl UndirectedView {
    pub fn new(state: &NetworkState) -> Self {
        let ids = state.firm_ids();
        let pos: HashMap<FirmId, u32> = ids.iter().enumerate().map(|(i, &id)| (id, i as u32)).collect();
        let neighbors = ids
            .par_iter()
            .map(|&id| {
                let mut v: Vec<u32> = state
                    .undirected_neighbors(id)
                    .expect("live firm")
                    .into_iter()
                    .map(|n| pos[&n])
                    .collect();
                v.sort_unstable();
                v
            })
            .collect();
        Self { ids, neighbors }
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }
}

/// Per-firm (undirected degree, mean neighbour degree), isolated firms
/// skipped.
pub fn knn_values(view: &UndirectedView) -> Vec<(usize, f64)> {
    view.neighbors
        .par_iter()
        .filter(|n| !n.is_empty())
        .map(|n| {
            let s: usize = n.iter().map(|&j| view.degree(j as usize)).sum();
            (n.len(), s as f64 / n.len() as f64)
        })
        .collect()
}

fn sorted_intersection(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// Per-firm (undirected degree, local clustering 2t/(k(k−1))) for k ≥ 2.
pub fn clustering_values(view: &UndirectedView) -> Vec<(usize, f64)> {
    view.neighbors
        .par_iter()
        .filter(|n| n.len() >= 2)
        .map(|n| {
            let twice_t: usize = n
                .iter()
                .map(|&j| sorted_intersection(n, &view.neighbors[j as usize]))
                .sum();
            let k = n.len() as f64;
            (n.len(), twice_t as f64 / (k * (k - 1.0)))
        })
        .collect()
}

pub fn knn_curve(state: &NetworkState) -> BinnedCurve {
    BinnedCurve::from_points(&knn_values(&UndirectedView::new(state)))
}

pub fn clustering_curve(state: &NetworkState) -> BinnedCurve {
    BinnedCurve::from_points(&clustering_values(&UndirectedView::new(state)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendTest {
    /// Slope of the value against log10 k.
    pub slope: f64,
    pub se: f64,
    /// Upper end of the one-sided confidence bound on the slope.
    pub upper_bound: f64,
    pub decreasing: bool,
    pub n: usize,
}

/// One-sided test that the values behind the log bins fall with degree:
/// regresses per-firm values on log10 k over firms with k > `k_above` and
/// accepts when the one-sided upper confidence bound of the slope is below 0.
pub fn decreasing_trend(points: &[(usize, f64)], k_above: usize, level: f64) -> Result<TrendTest> {
    let sel: Vec<&(usize, f64)> = points.iter().filter(|p| p.0 > k_above).collect();
    let x: Vec<f64> = sel.iter().map(|p| (p.0 as f64).log10()).collect();
    let y: Vec<f64> = sel.iter().map(|p| p.1).collect();
    let fit = ols(&x, &y)?;
    if fit.n < 3 {
        return Err(Error::insufficient("trend test", format!("{} points above k = {k_above}", fit.n)));
    }
    // one-sided level ↔ two-sided 2·level − 1
    let t = t_critical(2.0 * level - 1.0, fit.n - 2);
    let upper_bound = fit.slope + t * fit.se_slope;
    Ok(TrendTest {
        slope: fit.slope,
        se: fit.se_slope,
        upper_bound,
        decreasing: upper_bound < 0.0,
        n: fit.n,
    })
}

/// Sample variances of N and L over the trailing `window` reports.
pub fn timeseries_moments(reports: &[StepReport], window: usize) -> Result<(f64, f64)> {
    if window < 2 || window > reports.len() {
        return Err(Error::InvalidParameter(format!(
            "window {window} needs 2 ≤ window ≤ {} reports",
            reports.len()
        )));
    }
    let tail = &reports[reports.len() - window..];
    let n: Vec<f64> = tail.iter().map(|r| r.n as f64).collect();
    let l: Vec<f64> = tail.iter().map(|r| r.l as f64).collect();
    Ok((sample_variance(&n), sample_variance(&l)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotStats {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    /// 2L/N.
    pub mean_degree: f64,
    pub ccdf_k: Vec<(usize, f64)>,
    pub ccdf_in: Vec<(usize, f64)>,
    pub ccdf_out: Vec<(usize, f64)>,
    pub tail_k: Option<TailFit>,
    pub tail_in: Option<TailFit>,
    pub tail_out: Option<TailFit>,
    pub knn: BinnedCurve,
    pub clustering: BinnedCurve,
    pub sigma2_n: Option<f64>,
    pub sigma2_l: Option<f64>,
}

pub struct DegreeSequences {
    pub total: Vec<usize>,
    pub in_deg: Vec<usize>,
    pub out_deg: Vec<usize>,
}

pub fn degree_sequences(state: &NetworkState) -> DegreeSequences {
    let ids = state.firm_ids();
    let in_deg: Vec<usize> = ids.iter().map(|&i| state.in_degree(i).expect("live firm")).collect();
    let out_deg: Vec<usize> = ids.iter().map(|&i| state.out_degree(i).expect("live firm")).collect();
    let total = in_deg.iter().zip(&out_deg).map(|(a, b)| a + b).collect();
    DegreeSequences { total, in_deg, out_deg }
}

/// Full statistics of one snapshot; tail fits are omitted when the tail is
/// too thin. `reports` supplies the size variances when given.
pub fn snapshot_stats(state: &NetworkState, reports: Option<(&[StepReport], usize)>) -> SnapshotStats {
    let deg = degree_sequences(state);
    let view = UndirectedView::new(state);
    let (sigma2_n, sigma2_l) = match reports.map(|(r, w)| timeseries_moments(r, w)) {
        Some(Ok((a, b))) => (Some(a), Some(b)),
        _ => (None, None),
    };
    SnapshotStats {
        n: state.firm_count(),
        l: state.link_count(),
        mean_degree: state.mean_degree(),
        ccdf_k: ccdf(&deg.total),
        ccdf_in: ccdf(&deg.in_deg),
        ccdf_out: ccdf(&deg.out_deg),
        tail_k: fit_tail_auto(&deg.total).ok(),
        tail_in: fit_tail_auto(&deg.in_deg).ok(),
        tail_out: fit_tail_auto(&deg.out_deg).ok(),
        knn: BinnedCurve::from_points(&knn_values(&view)),
        clustering: BinnedCurve::from_points(&clustering_values(&view)),
        sigma2_n,
        sigma2_l,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SectorId;
    use proptest::prelude::*;
    use rand::distr::Distribution;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(n: u64, edges: &[(u64, u64)]) -> NetworkState {
        let mut s = NetworkState::new(1);
        for _ in 0..n {
            s.add_firm(SectorId(0)).unwrap();
        }
        for &(a, b) in edges {
            s.add_edge(FirmId(a), FirmId(b)).unwrap();
        }
        s
    }

    #[test]
    fn ccdf_by_hand() {
        assert_eq!(ccdf(&[1, 1, 2]), vec![(1, 1.0), (2, 1.0 / 3.0)]);
        assert_eq!(ccdf(&[4, 4, 4]), vec![(4, 1.0)]);
        assert!(ccdf(&[]).is_empty());
    }

    #[test]
    fn hurwitz_zeta_known_values() {
        // ζ(2) = π²/6, ζ(2, 2) = π²/6 − 1, ζ(3) = 1.2020569…
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((hurwitz_zeta(2.0, 1.0) - pi2_6).abs() < 1e-12);
        assert!((hurwitz_zeta(2.0, 2.0) - (pi2_6 - 1.0)).abs() < 1e-12);
        assert!((hurwitz_zeta(3.0, 1.0) - 1.202_056_903_159_594).abs() < 1e-12);
        // direct summation with an integral tail correction
        let s = 2.5;
        let q = 5.0;
        let direct: f64 = (0..200_000).map(|n| (q + n as f64).powf(-s)).sum::<f64>()
            + (q + 200_000.0f64).powf(1.0 - s) / (s - 1.0);
        assert!((hurwitz_zeta(s, q) - direct).abs() < 1e-9);
    }

    #[test]
    fn pareto_ccdf_slope() {
        // continuous Pareto with density exponent 2.5 → CCDF slope −1.5
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vals: Vec<usize> = (0..100_000)
            .map(|_| {
                let u: f64 = rng.random();
                (1000.0 * (1.0 - u).powf(-1.0 / 1.5)) as usize
            })
            .collect();
        let pts: Vec<(f64, f64)> = ccdf(&vals)
            .into_iter()
            .filter(|&(x, p)| x >= 1000 && p > 1e-3)
            .map(|(x, p)| ((x as f64).ln(), p.ln()))
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let slope = ols(&x, &y).unwrap().slope;
        assert!((slope + 1.5).abs() < 0.05, "{slope}");
    }

    #[test]
    fn zipf_tail_recovered() {
        let z = rand_distr::Zipf::new(1e7, 2.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let vals: Vec<usize> = (0..100_000).map(|_| z.sample(&mut rng) as usize).collect();
        let fit = fit_tail_exponent(&vals, 5).unwrap();
        assert!((fit.exponent - 2.5).abs() < 0.05, "{fit:?}");
        assert!(fit.ci90 > 0.0 && fit.ci90 < 0.05);
    }

    #[test]
    fn degenerate_tail_is_an_error() {
        assert!(fit_tail_exponent(&[3; 500], 1).is_err());
        assert!(fit_tail_exponent(&[1, 2, 3], 1).is_err());
    }

    #[test]
    fn bin_layout() {
        let b = BinLayout::for_max_degree(120);
        assert_eq!(&b.lower[..10], &(1..=10).collect::<Vec<_>>()[..]);
        assert_eq!(b.lower[10], 11);
        assert_eq!(b.upper[10], 15);
        assert_eq!(b.lower[11], 16);
        assert_eq!(b.upper[11], 25);
        // bin covering 100 closes exactly at 100
        let i = b.bin_of(100).unwrap();
        assert_eq!(b.upper[i], 100);
        assert_eq!(b.bin_of(101), Some(i + 1));
        assert_eq!(b.bin_of(0), None);
        for k in 1..=120 {
            let i = b.bin_of(k).unwrap();
            assert!(b.lower[i] <= k && k <= b.upper[i]);
        }
    }

    #[test]
    fn star_knn_and_clustering() {
        let m = 6;
        let edges: Vec<(u64, u64)> = (1..=m).map(|i| (0, i)).collect();
        let s = graph(m + 1, &edges);
        let view = UndirectedView::new(&s);
        let knn = knn_values(&view);
        assert!(knn.contains(&(m as usize, 1.0)));
        assert_eq!(knn.iter().filter(|p| *p == &(1, m as f64)).count(), m as usize);
        assert!(clustering_values(&view).iter().all(|p| p.1 == 0.0));
    }

    #[test]
    fn triangle_and_ring() {
        let t = graph(3, &[(0, 1), (1, 2), (2, 0)]);
        let c = clustering_values(&UndirectedView::new(&t));
        assert_eq!(c, vec![(2, 1.0); 3]);
        // 4-regular ring: knn = 4 for every firm
        let n = 20;
        let mut e = Vec::new();
        for i in 0..n {
            e.push((i, (i + 1) % n));
            e.push((i, (i + 2) % n));
        }
        let r = graph(n, &e);
        let curve = knn_curve(&r);
        let b = curve.lower.iter().position(|&l| l == 4).unwrap();
        assert_eq!(curve.means[b], Some(4.0));
        assert_eq!(curve.counts[b], 20);
        assert!(curve.means.iter().enumerate().all(|(i, m)| i == b || m.is_none()));
    }

    fn brute_force(n: usize, edges: &[(u64, u64)]) -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
        let mut adj = vec![vec![false; n]; n];
        for &(a, b) in edges {
            if a != b {
                adj[a as usize][b as usize] = true;
                adj[b as usize][a as usize] = true;
            }
        }
        let deg: Vec<usize> = adj.iter().map(|r| r.iter().filter(|x| **x).count()).collect();
        let mut knn = Vec::new();
        let mut cl = Vec::new();
        for i in 0..n {
            if deg[i] == 0 {
                continue;
            }
            let s: usize = (0..n).filter(|&j| adj[i][j]).map(|j| deg[j]).sum();
            knn.push((deg[i], s as f64 / deg[i] as f64));
            if deg[i] >= 2 {
                let mut t = 0;
                for j in 0..n {
                    for k in (j + 1)..n {
                        if adj[i][j] && adj[i][k] && adj[j][k] {
                            t += 1;
                        }
                    }
                }
                cl.push((deg[i], 2.0 * t as f64 / (deg[i] * (deg[i] - 1)) as f64));
            }
        }
        (knn, cl)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn curves_match_brute_force(n in 3usize..300, density in 0.5f64..4.0, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = (density * n as f64) as usize;
            let edges: Vec<(u64, u64)> = (0..m)
                .map(|_| (rng.random_range(0..n as u64), rng.random_range(0..n as u64)))
                .filter(|(a, b)| a != b)
                .collect();
            let s = graph(n as u64, &edges);
            let view = UndirectedView::new(&s);
            let (knn, cl) = brute_force(n, &edges);
            let got_knn = knn_values(&view);
            let got_cl = clustering_values(&view);
            prop_assert_eq!(got_knn.len(), knn.len());
            for (a, b) in got_knn.iter().zip(&knn) {
                prop_assert_eq!(a.0, b.0);
                prop_assert!((a.1 - b.1).abs() < 1e-12);
            }
            prop_assert_eq!(got_cl.len(), cl.len());
            for (a, b) in got_cl.iter().zip(&cl) {
                prop_assert_eq!(a.0, b.0);
                prop_assert!((a.1 - b.1).abs() < 1e-12);
            }
            // CCDF against a direct count
            let degs: Vec<usize> = (0..n).map(|i| view.degree(i)).collect();
            for (x, p) in ccdf(&degs) {
                let c = degs.iter().filter(|&&d| d >= x).count();
                prop_assert!((p - c as f64 / n as f64).abs() < 1e-12);
            }
            let c = ccdf(&degs);
            prop_assert_eq!(c[0].1, 1.0);
            prop_assert!(c.windows(2).all(|w| w[1].1 <= w[0].1));
        }
    }

    #[test]
    fn variance_of_constant_and_alternating_series() {
        let mk = |n: usize| StepReport { n, l: 2 * n, ..Default::default() };
        let flat: Vec<StepReport> = (0..20).map(|_| mk(100)).collect();
        assert_eq!(timeseries_moments(&flat, 12).unwrap(), (0.0, 0.0));
        // alternating 100 ± 3 over an even window: mean 100, Σ(x−m)² = 12·9
        let alt: Vec<StepReport> = (0..24).map(|i| mk(if i % 2 == 0 { 103 } else { 97 })).collect();
        let (vn, vl) = timeseries_moments(&alt, 12).unwrap();
        assert!((vn - 12.0 * 9.0 / 11.0).abs() < 1e-12);
        assert!((vl - 4.0 * 12.0 * 9.0 / 11.0).abs() < 1e-12);
        assert!(timeseries_moments(&alt, 30).is_err());
    }

    #[test]
    fn trend_test_detects_decline() {
        let pts: Vec<(usize, f64)> = (11..200).map(|k| (k, 100.0 - 20.0 * (k as f64).log10() + (k % 3) as f64)).collect();
        let t = decreasing_trend(&pts, 10, 0.9).unwrap();
        assert!(t.decreasing);
        let flat: Vec<(usize, f64)> = (11..200).map(|k| (k, (k % 7) as f64)).collect();
        assert!(!decreasing_trend(&flat, 10, 0.9).unwrap().decreasing);
    }
}
