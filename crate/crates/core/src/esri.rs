//! Simplified Economic Systemic Risk Index on unweighted networks.
//!
//! A firm's default sets its production ψ to zero. Customers lose the
//! affected share of their inputs (Leontief over essential input sectors,
//! linear over the rest), suppliers lose the affected share of their sales.
//! ESRI_i is the mean production loss over all firms.

use std::collections::HashMap;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FirmId, NetworkState};
use crate::params::is_manufacturing_section;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputClass {
    Essential,
    NonEssential,
    NotUsed,
}

impl InputClass {
    pub fn as_str(self) -> &'static str {
        match self {
            InputClass::Essential => "essential",
            InputClass::NonEssential => "non-essential",
            InputClass::NotUsed => "not-used",
        }
    }
}

impl FromStr for InputClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "essential" => Ok(InputClass::Essential),
            "non-essential" => Ok(InputClass::NonEssential),
            "not-used" => Ok(InputClass::NotUsed),
            other => Err(Error::InvalidParameter(format!("unknown input class `{other}`"))),
        }
    }
}

/// `classes[input][firm]`: how a firm in sector `firm` uses inputs from
/// sector `input`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EssentialnessTable {
    pub labels: Vec<String>,
    pub classes: Vec<Vec<InputClass>>,
}

impl EssentialnessTable {
    pub fn uniform(labels: &[String], class: InputClass) -> Self {
        Self {
            labels: labels.to_vec(),
            classes: vec![vec![class; labels.len()]; labels.len()],
        }
    }

    /// Primary and manufacturing inputs (sections A-F) essential, all other
    /// inputs non-essential. Labels outside the section scheme count as
    /// non-essential.
    pub fn default_for(labels: &[String]) -> Self {
        let classes = labels
            .iter()
            .map(|input| {
                let class = if is_manufacturing_section(input) {
                    InputClass::Essential
                } else {
                    InputClass::NonEssential
                };
                vec![class; labels.len()]
            })
            .collect();
        Self {
            labels: labels.to_vec(),
            classes,
        }
    }

    pub fn sector_count(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, input: usize, firm: usize) -> InputClass {
        self.classes[input][firm]
    }

    pub fn set(&mut self, input: usize, firm: usize, class: InputClass) {
        self.classes[input][firm] = class;
    }

    pub fn validate(&self, sector_count: usize) -> Result<()> {
        if self.labels.len() != sector_count
            || self.classes.len() != sector_count
            || self.classes.iter().any(|r| r.len() != sector_count)
        {
            return Err(Error::Inconsistent(format!(
                "essentialness table covers {} sectors, network has {sector_count}",
                self.labels.len()
            )));
        }
        Ok(())
    }
}

/// How supply and demand shocks travel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Propagation {
    /// A downstream pass over customers and an upstream pass over
    /// suppliers, each started from the default alone; ψ is the smaller of
    /// the two results.
    #[default]
    Separate,
    /// Both factors in one iteration, so shocks bounce between customers
    /// and suppliers.
    Coupled,
    /// Downstream pass only.
    SupplyOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsriConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub propagation: Propagation,
}

impl Default for EsriConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 1000,
            propagation: Propagation::default(),
        }
    }
}

struct InputGroup {
    essential: bool,
    suppliers: Vec<u32>,
}

/// Compact index form of a network for repeated cascades.
pub struct CascadeGraph {
    ids: Vec<FirmId>,
    inputs: Vec<Vec<InputGroup>>,
    suppliers: Vec<Vec<u32>>,
    customers: Vec<Vec<u32>>,
}

impl CascadeGraph {
    pub fn new(state: &NetworkState, ess: &EssentialnessTable) -> Result<Self> {
        ess.validate(state.sector_count())?;
        let ids = state.firm_ids();
        let pos: HashMap<FirmId, u32> = ids.iter().enumerate().map(|(i, &f)| (f, i as u32)).collect();
        let n = ids.len();
        let mut suppliers = vec![Vec::new(); n];
        let mut customers = vec![Vec::new(); n];
        for (s, b) in state.edges() {
            let (s, b) = (pos[&s], pos[&b]);
            suppliers[b as usize].push(s);
            customers[s as usize].push(b);
        }
        let sector: Vec<usize> = ids.iter().map(|&f| state.sector(f).map(|s| s.index())).collect::<Result<_>>()?;
        let inputs = (0..n)
            .map(|j| {
                let mut groups: Vec<(usize, InputGroup)> = Vec::new();
                for &u in &suppliers[j] {
                    let s = sector[u as usize];
                    let class = ess.get(s, sector[j]);
                    if class == InputClass::NotUsed {
                        continue;
                    }
                    match groups.iter_mut().find(|g| g.0 == s) {
                        Some(g) => g.1.suppliers.push(u),
                        None => groups.push((
                            s,
                            InputGroup {
                                essential: class == InputClass::Essential,
                                suppliers: vec![u],
                            },
                        )),
                    }
                }
                groups.sort_by_key(|g| g.0);
                groups.into_iter().map(|g| g.1).collect()
            })
            .collect();
        Ok(Self {
            ids,
            inputs,
            suppliers,
            customers,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[FirmId] {
        &self.ids
    }

    fn supply_factor(&self, j: usize, psi: &[f64]) -> f64 {
        let mut ess = 1.0f64;
        let mut lin_sum = 0.0;
        let mut lin_n = 0usize;
        for g in &self.inputs[j] {
            let avail = g.suppliers.iter().map(|&u| psi[u as usize]).sum::<f64>() / g.suppliers.len() as f64;
            if g.essential {
                ess = ess.min(avail);
            } else {
                lin_sum += avail;
                lin_n += 1;
            }
        }
        let lin = if lin_n > 0 { lin_sum / lin_n as f64 } else { 1.0 };
        ess * lin
    }

    fn demand_factor(&self, j: usize, psi: &[f64]) -> f64 {
        let c = &self.customers[j];
        if c.is_empty() {
            1.0
        } else {
            c.iter().map(|&u| psi[u as usize]).sum::<f64>() / c.len() as f64
        }
    }
}

/// Production levels after one firm's default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductionLevels {
    pub psi: Vec<f64>,
    pub rounds: usize,
    pub max_delta: f64,
    pub converged: bool,
}

impl ProductionLevels {
    pub fn loss(&self) -> f64 {
        self.psi.iter().map(|p| 1.0 - p).sum::<f64>() / self.psi.len() as f64
    }
}

/// Runs the cascade from the default of firm `source` (compact index).
pub fn cascade(g: &CascadeGraph, source: usize, cfg: &EsriConfig) -> ProductionLevels {
    match cfg.propagation {
        Propagation::Coupled => pass(g, source, cfg, true, true),
        Propagation::SupplyOnly => pass(g, source, cfg, true, false),
        Propagation::Separate => {
            let mut down = pass(g, source, cfg, true, false);
            let up = pass(g, source, cfg, false, true);
            for (d, u) in down.psi.iter_mut().zip(&up.psi) {
                *d = d.min(*u);
            }
            ProductionLevels {
                psi: down.psi,
                rounds: down.rounds.max(up.rounds),
                max_delta: down.max_delta.max(up.max_delta),
                converged: down.converged && up.converged,
            }
        }
    }
}

// Each round recomputes the firms next to last round's changes; a change
// below `tol` is not propagated further.
fn pass(g: &CascadeGraph, source: usize, cfg: &EsriConfig, supply: bool, demand: bool) -> ProductionLevels {
    let n = g.len();
    let mut psi = vec![1.0; n];
    psi[source] = 0.0;
    let mut mark = vec![u32::MAX; n];
    let mut frontier = vec![source as u32];
    let mut rounds = 0;
    let mut max_delta = 1.0;
    while !frontier.is_empty() && rounds < cfg.max_iter {
        rounds += 1;
        let mut next: Vec<u32> = Vec::new();
        let tag = rounds as u32;
        for &c in &frontier {
            let c = c as usize;
            let down = g.customers[c].iter().filter(|_| supply);
            let up = g.suppliers[c].iter().filter(|_| demand);
            for &j in down.chain(up) {
                if j as usize != source && mark[j as usize] != tag {
                    mark[j as usize] = tag;
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        max_delta = 0.0f64;
        let mut changed = Vec::new();
        for &j in &next {
            let j = j as usize;
            let mut v = 1.0f64;
            if supply {
                v = v.min(g.supply_factor(j, &psi));
            }
            if demand {
                v = v.min(g.demand_factor(j, &psi));
            }
            debug_assert!(v <= psi[j] + 1e-12, "production rose during cascade");
            let v = v.min(psi[j]).max(0.0);
            let d = psi[j] - v;
            if d > 0.0 {
                psi[j] = v;
                max_delta = max_delta.max(d);
                if d >= cfg.tol {
                    changed.push(j as u32);
                }
            }
        }
        frontier = changed;
    }
    let converged = frontier.is_empty();
    ProductionLevels {
        psi,
        rounds,
        max_delta,
        converged,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsriResult {
    pub firms: Vec<FirmId>,
    pub esri: Vec<f64>,
    pub rounds: Vec<usize>,
    /// Firms whose cascade hit the iteration limit.
    pub non_converged: Vec<FirmId>,
}

impl EsriResult {
    pub fn profile(&self) -> EsriProfile {
        let mut order: Vec<usize> = (0..self.firms.len()).collect();
        order.sort_by(|&a, &b| self.esri[b].total_cmp(&self.esri[a]).then(self.firms[a].cmp(&self.firms[b])));
        EsriProfile {
            firms: order.iter().map(|&i| self.firms[i]).collect(),
            values: order.iter().map(|&i| self.esri[i]).collect(),
        }
    }

    pub fn get(&self, firm: FirmId) -> Option<f64> {
        self.firms.binary_search(&firm).ok().map(|i| self.esri[i])
    }
}

/// ESRI of every firm, cascades run in parallel.
pub fn compute_esri(state: &NetworkState, ess: &EssentialnessTable, cfg: &EsriConfig) -> Result<EsriResult> {
    if cfg.tol.is_nan() || cfg.tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("tol = {}", cfg.tol)));
    }
    let g = CascadeGraph::new(state, ess)?;
    let levels: Vec<(f64, usize, bool)> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let p = cascade(&g, i, cfg);
            (p.loss(), p.rounds, p.converged)
        })
        .collect();
    let non_converged: Vec<FirmId> = levels.iter().zip(g.ids()).filter(|(l, _)| !l.2).map(|(_, &f)| f).collect();
    for f in &non_converged {
        log::warn!("ESRI cascade of firm {f} did not converge");
    }
    Ok(EsriResult {
        firms: g.ids.clone(),
        esri: levels.iter().map(|l| l.0).collect(),
        rounds: levels.iter().map(|l| l.1).collect(),
        non_converged,
    })
}

/// ESRI values in descending order with the firm at each rank.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsriProfile {
    pub firms: Vec<FirmId>,
    pub values: Vec<f64>,
}

impl EsriProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// value at rank 1 over value at `rank` (1-based), in decades.
    pub fn decades_to(&self, rank: usize) -> Option<f64> {
        let top = *self.values.first()?;
        let v = *self.values.get(rank.checked_sub(1)?)?;
        Some((top / v).log10())
    }
}

/// Rank-wise ratio a/b over the common length.
pub fn compare_profiles(a: &EsriProfile, b: &EsriProfile) -> Vec<f64> {
    a.values.iter().zip(&b.values).map(|(x, y)| x / y).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileEnvelope {
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Per-rank mean, minimum and maximum over profiles, truncated to the
/// shortest one.
pub fn profile_envelope(profiles: &[EsriProfile]) -> Result<ProfileEnvelope> {
    let len = profiles.iter().map(|p| p.len()).min().unwrap_or(0);
    if len == 0 {
        return Err(Error::insufficient("profile envelope", "no non-empty profiles"));
    }
    let mut env = ProfileEnvelope {
        mean: vec![0.0; len],
        min: vec![f64::INFINITY; len],
        max: vec![f64::NEG_INFINITY; len],
    };
    for p in profiles {
        for (r, &v) in p.values[..len].iter().enumerate() {
            env.mean[r] += v / profiles.len() as f64;
            env.min[r] = env.min[r].min(v);
            env.max[r] = env.max[r].max(v);
        }
    }
    Ok(env)
}
