//! Parameter estimation from link intervals: entry rates, link decay,
//! supplier-turnover scaling, attachment kernel, sector matrix, entry
//! degrees, exit probability, and the stationarity correction.

use std::collections::{BTreeMap, HashMap};

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Discrete, Poisson};

use crate::engine::{EngineConfig, Simulation};
use crate::error::{Error, Result};
use crate::graph::{FirmId, NetworkState, SectorId};
use crate::linkfilter::LinkInterval;
use crate::month::month_of_year;
use crate::olsfit::{mean, ols, ols_through_origin, t_critical, LineFit};
use crate::params::{EntryDegreeDistribution, ModelParams, SectorAttachmentMatrix};

const LEVEL: f64 = 0.90;

/// Twelve Poisson rates x(τ) = β₀ + β₁τ, τ = 1 (January) … 12.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeasonalRateModel {
    pub beta0: f64,
    pub beta1: f64,
    pub month_rates: [f64; 12],
    pub se_beta0: f64,
    pub se_beta1: f64,
    pub observations: usize,
}

impl SeasonalRateModel {
    /// Mean of the equal-weight mixture of the twelve Poisson laws.
    pub fn mean(&self) -> f64 {
        self.month_rates.iter().sum::<f64>() / 12.0
    }

    pub fn pmf(&self, x: u64) -> f64 {
        self.month_rates
            .iter()
            .map(|&r| Poisson::new(r).map(|p| p.pmf(x)).unwrap_or(0.0))
            .sum::<f64>()
            / 12.0
    }

    /// Standard error of the mixture mean β₀ + 6.5β₁.
    pub fn mean_se(&self, counts: &[(i64, f64)]) -> f64 {
        let x: Vec<f64> = counts.iter().map(|&(m, _)| month_of_year(m) as f64).collect();
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let s = self.se_beta1 * sxx.sqrt();
        s * (1.0 / n + (6.5 - mx).powi(2) / sxx).sqrt()
    }
}

/// OLS of monthly counts on month of year.
pub fn fit_seasonal_poisson(counts: &[(i64, f64)]) -> Result<SeasonalRateModel> {
    if counts.len() < 12 {
        return Err(Error::insufficient("seasonal rate", format!("{} months, need 12", counts.len())));
    }
    let x: Vec<f64> = counts.iter().map(|&(m, _)| month_of_year(m) as f64).collect();
    let y: Vec<f64> = counts.iter().map(|&(_, c)| c).collect();
    let fit = ols(&x, &y)?;
    let mut month_rates = [0.0; 12];
    for (tau, r) in month_rates.iter_mut().enumerate() {
        *r = fit.intercept + fit.slope * (tau + 1) as f64;
        if *r <= 0.0 {
            return Err(Error::Numerical("non-positive seasonal rate".into()));
        }
    }
    Ok(SeasonalRateModel {
        beta0: fit.intercept,
        beta1: fit.slope,
        month_rates,
        se_beta0: fit.se_intercept,
        se_beta1: fit.se_slope,
        observations: counts.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub lambda: f64,
    /// e^(−λ).
    pub survival: f64,
    pub se_lambda: f64,
    pub dt_max: i64,
    pub cohort: usize,
    /// Δt values skipped because no link was left.
    pub dropped: Vec<i64>,
}

/// Exponential fit of cohort survival. `lifetimes[i]` is the number of
/// months link i stays alive after t₀ (alive at t₀ + Δt iff lifetime > Δt).
pub fn fit_link_decay(lifetimes: &[i64], dt_max: i64) -> Result<DecayFit> {
    if lifetimes.is_empty() {
        return Err(Error::insufficient("link decay", "empty cohort"));
    }
    let n = lifetimes.len() as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = Vec::new();
    for dt in 1..=dt_max {
        let alive = lifetimes.iter().filter(|&&l| l > dt).count();
        if alive == 0 {
            log::warn!("link decay: no survivors at Δt = {dt}, point dropped");
            dropped.push(dt);
            continue;
        }
        xs.push(dt as f64);
        ys.push((alive as f64 / n).ln());
    }
    if xs.len() < 3 {
        return Err(Error::insufficient("link decay", format!("{} usable Δt points, need 3", xs.len())));
    }
    let (b, se) = ols_through_origin(&xs, &ys)?;
    let lambda = (-b).max(0.0);
    Ok(DecayFit {
        lambda,
        survival: (-lambda).exp(),
        se_lambda: se,
        dt_max,
        cohort: lifetimes.len(),
        dropped,
    })
}

/// Remaining lifetimes of the links active at `t0`.
pub fn cohort_lifetimes(intervals: &[LinkInterval], t0: i64) -> Vec<i64> {
    intervals
        .iter()
        .filter(|iv| iv.is_active(t0))
        .map(|iv| iv.exit_month - t0)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupDecay {
    pub size: usize,
    /// Absent when the group is below the minimum size.
    pub fit: Option<DecayFit>,
    pub low_confidence: bool,
}

pub const MIN_GROUP_SIZE: usize = 30;

/// Independent decay fits per group; groups under `min_size` are flagged
/// and not fitted, empty groups are dropped.
pub fn fit_decay_by_group<K: Ord + Clone>(
    groups: &BTreeMap<K, Vec<i64>>,
    dt_max: i64,
    min_size: usize,
) -> BTreeMap<K, GroupDecay> {
    groups
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(k, v)| {
            let small = v.len() < min_size;
            let fit = if small { None } else { fit_link_decay(v, dt_max).ok() };
            let g = GroupDecay {
                size: v.len(),
                low_confidence: small || fit.is_none(),
                fit,
            };
            (k.clone(), g)
        })
        .collect()
}

/// Bucket index (0..n) of each weight by empirical quantile.
pub fn quantile_buckets(weights: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(a.cmp(&b)));
    let mut out = vec![0; weights.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank * n / weights.len().max(1);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub prefactor: f64,
    pub exponent: f64,
    pub prefactor_ci: [f64; 2],
    pub exponent_ci: [f64; 2],
    /// Degree buckets in the fit.
    pub points: usize,
    /// Underlying firm-months or events.
    pub observations: usize,
}

impl ScalingFit {
    fn from_line(fit: &LineFit, observations: usize) -> Self {
        let t = if fit.n > 2 { t_critical(LEVEL, fit.n - 2) } else { f64::INFINITY };
        let ci = |v: f64, se: f64| {
            if se.is_finite() {
                [v - t * se, v + t * se]
            } else {
                [f64::NEG_INFINITY, f64::INFINITY]
            }
        };
        let a = ci(fit.intercept, fit.se_intercept);
        Self {
            prefactor: fit.intercept.exp(),
            exponent: fit.slope,
            prefactor_ci: [a[0].exp(), a[1].exp()],
            exponent_ci: ci(fit.slope, fit.se_slope),
            points: fit.n,
            observations,
        }
    }

    /// Whether `value` lies outside the 90 % interval of the exponent.
    pub fn exponent_differs_from(&self, value: f64) -> bool {
        value < self.exponent_ci[0] || value > self.exponent_ci[1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScalingMode {
    Free,
    /// Exponent held fixed; only the prefactor is fitted.
    FixedExponent(f64),
}

pub const MIN_BUCKET_EXPOSURE: usize = 30;

/// Power-law fit ⟨N^{s+}⟩ = α₀k^α from (k, new supplier count) pairs, one
/// per firm-month. Degrees with fewer than `min_obs` observations or a zero
/// mean are left out.
pub fn fit_new_supplier_scaling(obs: &[(usize, usize)], mode: ScalingMode, min_obs: usize) -> Result<ScalingFit> {
    let mut by_k: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for &(k, c) in obs.iter().filter(|o| o.0 >= 1) {
        let e = by_k.entry(k).or_default();
        e.0 += 1;
        e.1 += c;
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut used = 0;
    for (&k, &(n, total)) in &by_k {
        if n < min_obs.max(1) || total == 0 {
            continue;
        }
        xs.push((k as f64).ln());
        ys.push((total as f64 / n as f64).ln());
        used += n;
    }
    match mode {
        ScalingMode::Free => {
            if xs.len() < 2 {
                return Err(Error::insufficient("supplier scaling", format!("{} usable degrees", xs.len())));
            }
            Ok(ScalingFit::from_line(&ols(&xs, &ys)?, used))
        }
        ScalingMode::FixedExponent(alpha) => {
            if xs.is_empty() {
                return Err(Error::insufficient("supplier scaling", "no usable degrees"));
            }
            let r: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - alpha * x).collect();
            let m = mean(&r);
            let n = r.len();
            let se = if n > 1 {
                (crate::olsfit::sample_variance(&r) / n as f64).sqrt()
            } else {
                f64::INFINITY
            };
            let t = if n > 1 { t_critical(LEVEL, n - 1) } else { f64::INFINITY };
            Ok(ScalingFit {
                prefactor: m.exp(),
                exponent: alpha,
                prefactor_ci: [(m - t * se).exp(), (m + t * se).exp()],
                exponent_ci: [alpha, alpha],
                points: n,
                observations: used,
            })
        }
    }
}

/// Pooled node-month counts n(k, s) of potential suppliers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DegreeCensus {
    counts: BTreeMap<(usize, u16), u64>,
}

impl DegreeCensus {
    pub fn add(&mut self, k: usize, sector: SectorId, n: u64) {
        *self.counts.entry((k, sector.0)).or_default() += n;
    }

    pub fn get(&self, k: usize, sector: SectorId) -> u64 {
        self.counts.get(&(k, sector.0)).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, SectorId, u64)> + '_ {
        self.counts.iter().map(|(&(k, s), &n)| (k, SectorId(s), n))
    }

    pub fn total_at(&self, k: usize) -> u64 {
        self.counts.range((k, 0)..=(k, u16::MAX)).map(|(_, n)| n).sum()
    }

    pub fn restrict(&self, sector: SectorId) -> Self {
        Self {
            counts: self.counts.iter().filter(|((_, s), _)| *s == sector.0).map(|(&k, &v)| (k, v)).collect(),
        }
    }
}

/// A new supply link seen from the supplier side: its degree before the
/// link appeared and its sector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelEvent {
    pub k: usize,
    pub sector: SectorId,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMethod {
    /// Each event weighted by 1/n(k, s).
    InverseCensus,
    /// Events per degree divided by the exposure Σ_s n(k,s)·E_s/Z_s, with the
    /// per-sector normaliser Z_s = Σ_k n(k,s)·A(k) iterated to a fixed point.
    #[default]
    SectorNormalized,
}

fn check_events(events: &[KernelEvent], census: &DegreeCensus) -> Result<()> {
    for e in events {
        if census.get(e.k, e.sector) == 0 {
            return Err(Error::Inconsistent(format!(
                "attachment event at degree {} in sector {} has no census entry",
                e.k, e.sector.0
            )));
        }
    }
    Ok(())
}

fn kernel_line(weights: &BTreeMap<usize, f64>, census: &DegreeCensus, min_obs: usize) -> Result<LineFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&k, &w) in weights {
        if k == 0 || w <= 0.0 || census.total_at(k) < min_obs as u64 {
            continue;
        }
        xs.push((k as f64).ln());
        ys.push(w.ln());
    }
    if xs.len() < 2 {
        return Err(Error::insufficient("attachment kernel", format!("{} usable degrees", xs.len())));
    }
    ols(&xs, &ys)
}

/// Fit of A(k) = β₀k^β from supplier-side link events and the census of
/// potential suppliers.
pub fn estimate_attachment_kernel(
    events: &[KernelEvent],
    census: &DegreeCensus,
    method: KernelMethod,
    min_obs: usize,
) -> Result<ScalingFit> {
    check_events(events, census)?;
    let events: Vec<KernelEvent> = events.iter().copied().filter(|e| e.k >= 1).collect();
    let weights: BTreeMap<usize, f64> = match method {
        KernelMethod::InverseCensus => {
            let mut w = BTreeMap::new();
            for e in &events {
                *w.entry(e.k).or_insert(0.0) += 1.0 / census.get(e.k, e.sector) as f64;
            }
            w
        }
        KernelMethod::SectorNormalized => sector_normalized_weights(&events, census, min_obs)?,
    };
    let line = kernel_line(&weights, census, min_obs)?;
    Ok(ScalingFit::from_line(&line, events.len()))
}

fn sector_normalized_weights(
    events: &[KernelEvent],
    census: &DegreeCensus,
    min_obs: usize,
) -> Result<BTreeMap<usize, f64>> {
    let mut per_k: BTreeMap<usize, f64> = BTreeMap::new();
    let mut per_s: BTreeMap<u16, f64> = BTreeMap::new();
    for e in events {
        *per_k.entry(e.k).or_default() += 1.0;
        *per_s.entry(e.sector.0).or_default() += 1.0;
    }
    let mut beta = 1.0;
    let mut prefactor = 1.0;
    let mut weights = BTreeMap::new();
    for _ in 0..100 {
        let a = |k: usize| prefactor * (k as f64).powf(beta);
        let mut z: BTreeMap<u16, f64> = BTreeMap::new();
        for (k, s, n) in census.iter().filter(|c| c.0 >= 1) {
            *z.entry(s.0).or_default() += n as f64 * a(k);
        }
        let mut exposure: BTreeMap<usize, f64> = BTreeMap::new();
        for (k, s, n) in census.iter().filter(|c| c.0 >= 1) {
            let es = per_s.get(&s.0).copied().unwrap_or(0.0);
            let zs = z.get(&s.0).copied().unwrap_or(0.0);
            if zs > 0.0 {
                *exposure.entry(k).or_default() += n as f64 * es / zs;
            }
        }
        weights = per_k
            .iter()
            .filter_map(|(&k, &c)| exposure.get(&k).filter(|&&x| x > 0.0).map(|x| (k, c / x)))
            .collect();
        let line = kernel_line(&weights, census, min_obs)?;
        let done = (line.slope - beta).abs() < 1e-9;
        beta = line.slope;
        prefactor = line.intercept.exp();
        if done {
            break;
        }
    }
    Ok(weights)
}

/// Column-normalised counts of (supplier sector, customer sector) events.
/// Customer sectors without events get an all-zero column.
pub fn estimate_sector_matrix(events: &[(SectorId, SectorId)], sector_count: usize) -> Result<SectorAttachmentMatrix> {
    let mut probs = vec![vec![0.0; sector_count]; sector_count];
    let mut col = vec![0.0; sector_count];
    for &(s1, s2) in events {
        if s1.index() >= sector_count || s2.index() >= sector_count {
            return Err(Error::SectorOutOfRange {
                sector: s1.index().max(s2.index()),
                count: sector_count,
            });
        }
        probs[s1.index()][s2.index()] += 1.0;
        col[s2.index()] += 1.0;
    }
    for row in probs.iter_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            if col[c] > 0.0 {
                *v /= col[c];
            }
        }
    }
    Ok(SectorAttachmentMatrix { probs })
}

/// Joint table of (k_in, k_out) at entry, truncated at `k_cap` and
/// renormalised.
pub fn estimate_entry_degrees(events: &[(usize, usize)], k_cap: usize) -> Result<EntryDegreeDistribution> {
    let mut table = vec![vec![0.0; k_cap + 1]; k_cap + 1];
    let mut kept = 0usize;
    for &(i, o) in events {
        if i <= k_cap && o <= k_cap {
            table[i][o] += 1.0;
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(Error::insufficient("entry degrees", "no entry events within the cap"));
    }
    for v in table.iter_mut().flatten() {
        *v /= kept as f64;
    }
    Ok(EntryDegreeDistribution { k_cap, table })
}

/// Uniform exit probability once exits caused by losing every link are
/// taken out: p_ex = p_exit_emp − Σ_k p(k)·p_remove^k.
pub fn calibrate_exit_probability(p_exit_empirical: f64, degree_dist: &[(usize, f64)], p_remove: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p_remove) {
        return Err(Error::InvalidParameter(format!("p_remove = {p_remove} outside [0, 1)")));
    }
    let total: f64 = degree_dist.iter().map(|d| d.1).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("degree distribution sums to {total}")));
    }
    let cascade: f64 = degree_dist.iter().map(|&(k, p)| p * p_remove.powi(k as i32)).sum();
    let p_ex = p_exit_empirical - cascade;
    if p_ex < 0.0 {
        return Err(Error::Numerical("link-removal cascade alone exceeds empirical exit rate".into()));
    }
    Ok(p_ex)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityResult {
    pub params: ModelParams,
    pub mean_delta_n: f64,
    pub evaluations: usize,
}

fn mean_delta_n(params: &ModelParams, state: &NetworkState, seed: u64, trial_steps: usize) -> Result<f64> {
    let mut sim = Simulation::new(state.clone(), EngineConfig::new(params.clone(), seed, trial_steps))?;
    let start = state.firm_count() as f64;
    for _ in 0..trial_steps {
        sim.step()?;
    }
    Ok((sim.state().firm_count() as f64 - start) / trial_steps as f64)
}

/// Bisects p_node_exit until the mean monthly change in N over
/// `trial_steps` months is within 1 % of the entry rate. Every trial uses the
/// same seed, so trials differ only through p_node_exit.
pub fn stationarity_adjust(
    params: &ModelParams,
    state: &NetworkState,
    seed: u64,
    trial_steps: usize,
) -> Result<StationarityResult> {
    if trial_steps == 0 {
        return Err(Error::InvalidParameter("trial_steps must be positive".into()));
    }
    params.validate()?;
    let tol = 0.01 * params.n_entry_mean;
    let eval = |p: f64| -> Result<f64> {
        let mut q = params.clone();
        q.p_node_exit = p;
        mean_delta_n(&q, state, seed, trial_steps)
    };
    let mut evaluations = 1;
    let d0 = eval(params.p_node_exit)?;
    if d0.abs() < tol {
        return Ok(StationarityResult {
            params: params.clone(),
            mean_delta_n: d0,
            evaluations,
        });
    }
    let (mut lo, mut hi) = (0.0, params.p_node_exit.max(0.1));
    let (f_lo, f_hi) = (eval(lo)?, eval(hi)?);
    evaluations += 2;
    if f_lo < -tol || f_hi > tol {
        return Err(Error::Numerical(format!(
            "no stationary exit probability in [{lo}, {hi}]: mean ΔN ranges {f_hi:.2} … {f_lo:.2}"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let d = eval(mid)?;
        evaluations += 1;
        if d.abs() < tol {
            let mut q = params.clone();
            q.p_node_exit = mid;
            return Ok(StationarityResult {
                params: q,
                mean_delta_n: d,
                evaluations,
            });
        }
        if d > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numerical("stationarity bisection did not converge".into()))
}

/// One estimated scalar with its 90 % interval and sample size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci90: [f64; 2],
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub kernel_method: KernelMethod,
    pub min_bucket_obs: usize,
    pub k_cap: usize,
    /// Cohort month for the decay fit; first observed month when absent.
    pub decay_t0: Option<i64>,
    pub decay_dt_max: i64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            kernel_method: KernelMethod::default(),
            min_bucket_obs: MIN_BUCKET_EXPOSURE,
            k_cap: 3,
            decay_t0: None,
            decay_dt_max: 24,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub params: ModelParams,
    pub first_month: i64,
    pub last_month: i64,
    pub n_entry: Estimate,
    pub seasonal: SeasonalRateModel,
    pub p_term: Estimate,
    pub decay: DecayFit,
    pub p_exit_empirical: Estimate,
    pub p_node_exit: f64,
    pub new_suppliers: ScalingFit,
    pub kernel: ScalingFit,
    pub warnings: Vec<String>,
}

/// Per-month observation panel derived from link intervals.
#[derive(Clone, Debug, Default)]
pub struct Panel {
    pub first_month: i64,
    pub last_month: i64,
    pub entries: Vec<(i64, f64)>,
    pub exits: usize,
    pub firm_months_at_risk: usize,
    pub supplier_obs: Vec<(usize, usize)>,
    pub kernel_events: Vec<KernelEvent>,
    pub sector_events: Vec<(SectorId, SectorId)>,
    pub census: DegreeCensus,
    pub entry_degrees: Vec<(usize, usize)>,
    pub degree_months: BTreeMap<usize, u64>,
    pub term_at_risk: usize,
    pub term_events: usize,
}

/// Sweeps the observation window month by month. Firms exist from their
/// first to their last active month; the first month only seeds the state
/// and the last exit month is treated as censored.
pub fn build_panel(intervals: &[LinkInterval], sectors: &HashMap<FirmId, SectorId>) -> Result<Panel> {
    if intervals.is_empty() {
        return Err(Error::insufficient("calibration", "no link intervals"));
    }
    for iv in intervals {
        for f in [iv.supplier, iv.buyer] {
            if !sectors.contains_key(&f) {
                return Err(Error::Inconsistent(format!("firm {f} has no sector")));
            }
        }
    }
    let first = intervals.iter().map(|i| i.entry_month).min().unwrap();
    let last = intervals.iter().map(|i| i.exit_month).max().unwrap() - 1;

    let mut span: HashMap<FirmId, (i64, i64)> = HashMap::new();
    for iv in intervals {
        for f in [iv.supplier, iv.buyer] {
            let e = span.entry(f).or_insert((iv.entry_month, iv.exit_month - 1));
            e.0 = e.0.min(iv.entry_month);
            e.1 = e.1.max(iv.exit_month - 1);
        }
    }

    let mut starts: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    let mut ends: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, iv) in intervals.iter().enumerate() {
        starts.entry(iv.entry_month).or_default().push(i);
        ends.entry(iv.exit_month).or_default().push(i);
    }

    let mut panel = Panel {
        first_month: first,
        last_month: last,
        ..Default::default()
    };

    let mut entry_counts: BTreeMap<i64, usize> = (first + 1..=last).map(|m| (m, 0)).collect();
    for &(a, b) in span.values() {
        if a > first {
            *entry_counts.get_mut(&a).expect("month in range") += 1;
            panel.entry_degrees.push((0, 0));
        }
        let lo = a.max(first);
        let hi = b.min(last - 1);
        if hi >= lo {
            panel.firm_months_at_risk += (hi - lo + 1) as usize;
        }
        if b < last {
            panel.exits += 1;
        }
    }
    panel.entries = entry_counts.into_iter().map(|(m, c)| (m, c as f64)).collect();
    panel.entry_degrees.clear();

    let mut active: IndexSet<usize> = IndexSet::new();
    let mut deg_in: HashMap<FirmId, usize> = HashMap::new();
    let mut deg_out: HashMap<FirmId, usize> = HashMap::new();
    let deg = |din: &HashMap<FirmId, usize>, dout: &HashMap<FirmId, usize>, f: FirmId| {
        din.get(&f).copied().unwrap_or(0) + dout.get(&f).copied().unwrap_or(0)
    };
    let empty = Vec::new();

    for t in first..=last {
        let ending = ends.get(&t).unwrap_or(&empty);
        let starting = starts.get(&t).unwrap_or(&empty);

        if t > first {
            // degrees at t−1 are in deg_in/deg_out
            // established links: active at t−1, entered by t−3, still active at t
            let ending_set: std::collections::HashSet<usize> = ending.iter().copied().collect();
            let established = |i: usize| intervals[i].entry_month <= t - 3 && !ending_set.contains(&i);
            let mut anchors: HashMap<FirmId, usize> = HashMap::new();
            for &i in active.iter().filter(|&&i| established(i)) {
                *anchors.entry(intervals[i].supplier).or_default() += 1;
                *anchors.entry(intervals[i].buyer).or_default() += 1;
            }
            let anchor = |f: FirmId| anchors.get(&f).copied().unwrap_or(0);
            for &i in &active {
                let iv = &intervals[i];
                let own = usize::from(established(i));
                if anchor(iv.supplier) > own && anchor(iv.buyer) > own {
                    panel.term_at_risk += 1;
                    if ending_set.contains(&i) {
                        panel.term_events += 1;
                    }
                }
            }

            let mut new_in: HashMap<FirmId, usize> = HashMap::new();
            for &i in starting {
                let iv = &intervals[i];
                *new_in.entry(iv.buyer).or_default() += 1;
                let k = deg(&deg_in, &deg_out, iv.supplier);
                if k >= 1 {
                    let s1 = sectors[&iv.supplier];
                    panel.kernel_events.push(KernelEvent { k, sector: s1 });
                    panel.sector_events.push((s1, sectors[&iv.buyer]));
                }
            }
            let mut firms: Vec<FirmId> = deg_in.keys().chain(deg_out.keys()).copied().collect();
            firms.sort_unstable();
            firms.dedup();
            for f in firms {
                let k = deg(&deg_in, &deg_out, f);
                if k == 0 {
                    continue;
                }
                panel.census.add(k, sectors[&f], 1);
                *panel.degree_months.entry(k).or_default() += 1;
                if span[&f].1 >= t {
                    panel.supplier_obs.push((k, new_in.get(&f).copied().unwrap_or(0)));
                }
            }
        }

        for &i in ending {
            active.swap_remove(&i);
            let iv = &intervals[i];
            dec(&mut deg_out, iv.supplier);
            dec(&mut deg_in, iv.buyer);
        }
        for &i in starting {
            active.insert(i);
            let iv = &intervals[i];
            *deg_out.entry(iv.supplier).or_default() += 1;
            *deg_in.entry(iv.buyer).or_default() += 1;
        }

        if t > first {
            let mut entrants: Vec<FirmId> = starting
                .iter()
                .flat_map(|&i| [intervals[i].supplier, intervals[i].buyer])
                .filter(|f| span[f].0 == t)
                .collect();
            entrants.sort_unstable();
            entrants.dedup();
            for f in entrants {
                panel.entry_degrees.push((
                    deg_in.get(&f).copied().unwrap_or(0),
                    deg_out.get(&f).copied().unwrap_or(0),
                ));
            }
        }
    }
    Ok(panel)
}

fn dec(map: &mut HashMap<FirmId, usize>, f: FirmId) {
    if let Some(v) = map.get_mut(&f) {
        *v -= 1;
        if *v == 0 {
            map.remove(&f);
        }
    }
}

fn proportion(events: usize, n: usize) -> Estimate {
    let p = if n > 0 { events as f64 / n as f64 } else { f64::NAN };
    let se = (p * (1.0 - p) / n.max(1) as f64).sqrt();
    let z = t_critical(LEVEL, usize::MAX);
    Estimate {
        value: p,
        ci90: [p - z * se, p + z * se],
        n,
    }
}

/// Estimates a full parameter set from link intervals and firm sectors.
pub fn calibrate(
    intervals: &[LinkInterval],
    sectors: &HashMap<FirmId, SectorId>,
    sector_labels: &[String],
    opts: &CalibrationOptions,
) -> Result<CalibrationReport> {
    let sector_count = sector_labels.len();
    if let Some(bad) = sectors.values().find(|s| s.index() >= sector_count) {
        return Err(Error::SectorOutOfRange {
            sector: bad.index(),
            count: sector_count,
        });
    }
    let panel = build_panel(intervals, sectors)?;
    let mut warnings = Vec::new();

    let seasonal = fit_seasonal_poisson(&panel.entries)?;
    let entry_se = seasonal.mean_se(&panel.entries);
    let z = t_critical(LEVEL, panel.entries.len().saturating_sub(2).max(1));
    let n_entry = Estimate {
        value: seasonal.mean(),
        ci90: [seasonal.mean() - z * entry_se, seasonal.mean() + z * entry_se],
        n: panel.entries.len(),
    };

    if panel.term_at_risk == 0 {
        return Err(Error::insufficient("p_term", "no links at risk"));
    }
    let p_term = proportion(panel.term_events, panel.term_at_risk);

    let t0 = opts.decay_t0.unwrap_or(panel.first_month);
    let dt_max = opts.decay_dt_max.min(panel.last_month - t0);
    let decay = fit_link_decay(&cohort_lifetimes(intervals, t0), dt_max)?;

    if panel.firm_months_at_risk == 0 {
        return Err(Error::insufficient("p_node_exit", "no firm-months at risk"));
    }
    let p_exit_empirical = proportion(panel.exits, panel.firm_months_at_risk);
    let total_dm: u64 = panel.degree_months.values().sum();
    let degree_dist: Vec<(usize, f64)> = panel
        .degree_months
        .iter()
        .map(|(&k, &n)| (k, n as f64 / total_dm as f64))
        .collect();
    let p_remove = 1.0 - decay.survival;
    let p_node_exit = match calibrate_exit_probability(p_exit_empirical.value, &degree_dist, p_remove) {
        Ok(p) => p,
        Err(e) => {
            warnings.push(format!("exit probability: {e}; set to 0"));
            0.0
        }
    };

    let new_suppliers = fit_new_supplier_scaling(&panel.supplier_obs, ScalingMode::Free, opts.min_bucket_obs)?;
    let kernel = estimate_attachment_kernel(&panel.kernel_events, &panel.census, opts.kernel_method, opts.min_bucket_obs)?;
    let sector_matrix = estimate_sector_matrix(&panel.sector_events, sector_count)?;
    for (c, label) in sector_labels.iter().enumerate().take(sector_count) {
        if sector_matrix.column_sum(c) == 0.0 {
            warnings.push(format!("no attachment events for customer sector {label}"));
        }
    }
    let entry_degrees = estimate_entry_degrees(&panel.entry_degrees, opts.k_cap)?;

    let mut sector_dist = vec![0.0; sector_count];
    let mut live = 0usize;
    let mut span: HashMap<FirmId, i64> = HashMap::new();
    for iv in intervals {
        for f in [iv.supplier, iv.buyer] {
            let e = span.entry(f).or_insert(iv.exit_month - 1);
            *e = (*e).max(iv.exit_month - 1);
        }
    }
    for (f, &end) in &span {
        if end == panel.last_month {
            sector_dist[sectors[f].index()] += 1.0;
            live += 1;
        }
    }
    for v in sector_dist.iter_mut() {
        *v /= live.max(1) as f64;
    }

    for (name, n) in [("entry degrees", panel.entry_degrees.len()), ("attachment events", panel.kernel_events.len())] {
        if n < MIN_GROUP_SIZE {
            warnings.push(format!("{name}: only {n} observations"));
        }
    }

    let params = ModelParams {
        n_entry_mean: n_entry.value,
        p_node_exit,
        alpha0: new_suppliers.prefactor,
        alpha: new_suppliers.exponent,
        beta: kernel.exponent,
        p_term: p_term.value,
        sector_labels: sector_labels.to_vec(),
        sector_dist,
        sector_matrix,
        entry_degrees,
    };
    Ok(CalibrationReport {
        params,
        first_month: panel.first_month,
        last_month: panel.last_month,
        n_entry,
        seasonal,
        p_term,
        decay,
        p_exit_empirical,
        p_node_exit,
        new_suppliers,
        kernel,
        warnings,
    })
}
