//! Monthly five-step evolution of the firm network.
//!
//! Each step: (1) firms enter with sector and entry-degree quotas, (2) links
//! vanish independently, (3) firms exit uniformly and firms left isolated are
//! dropped, (4) surviving firms draw in-stubs, (5) stubs are wired to
//! suppliers, entrants' out-quotas first, then by sector matrix and
//! attachment kernel.

pub mod attachment;
pub mod rng;
pub mod sumtree;

use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FirmId, NetworkState, SectorId};
use crate::linkfilter::LinkInterval;
use crate::params::{EntryDegreeSampler, ModelParams};

pub use attachment::AttachmentIndex;
use rng::{keyed_unit, stage_rng, Stage};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StubLaw {
    /// Binomial(k, α₀k^(α−1)), mean α₀k^α and at most k stubs.
    #[default]
    Binomial,
    /// Poisson(α₀k^α).
    Poisson,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectorMode {
    /// Entrant sectors follow the live network's n(s)/N.
    #[default]
    Current,
    /// Entrant sectors follow the fixed `sector_dist` of the parameters.
    Frozen,
}

fn default_max_resample() -> u32 {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub params: ModelParams,
    pub seed: u64,
    #[serde(default = "default_max_resample")]
    pub max_resample: u32,
    pub steps: usize,
    /// First step at which a snapshot is taken.
    #[serde(default)]
    pub burn_in: usize,
    /// Snapshot cadence after burn-in; 0 disables periodic snapshots.
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default)]
    pub stub_law: StubLaw,
    #[serde(default)]
    pub sector_mode: SectorMode,
    /// Keep a full link/firm history for re-estimation.
    #[serde(default)]
    pub record_history: bool,
}

impl EngineConfig {
    pub fn new(params: ModelParams, seed: u64, steps: usize) -> Self {
        Self {
            params,
            seed,
            max_resample: default_max_resample(),
            steps,
            burn_in: 0,
            snapshot_every: 0,
            stub_law: StubLaw::default(),
            sector_mode: SectorMode::default(),
            record_history: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_resample < 1 {
            return Err(Error::InvalidParameter("max_resample must be at least 1".into()));
        }
        self.params.validate()
    }

    /// Steps (counted from 1) after which a snapshot is kept.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let mut out = Vec::new();
        if self.snapshot_every > 0 {
            let mut s = self.burn_in.max(1);
            while s <= self.steps {
                out.push(s);
                s += self.snapshot_every;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub firms_in: usize,
    pub firms_out: usize,
    pub links_in: usize,
    pub links_out: usize,
    pub isolated_removed: usize,
    pub month: i64,
    /// Of `links_out`, the links removed spontaneously in step 2.
    pub links_terminated: usize,
    pub stubs: usize,
    pub discarded_stubs: usize,
    /// Links created to fill entrants' out-quotas left open by the stubs.
    pub extra_links: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewFirmQuota {
    pub id: FirmId,
    pub k_in0: usize,
    pub k_out0: usize,
}

/// In-stubs drawn in step 4 and the entrants' quotas.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StubLedger {
    pub in_stubs: Vec<(FirmId, usize)>,
    pub quotas: Vec<NewFirmQuota>,
}

impl StubLedger {
    pub fn total_stubs(&self) -> usize {
        self.in_stubs.iter().map(|(_, n)| n).sum()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConnectOutcome {
    pub links_in: usize,
    pub discarded: usize,
    pub extra_links: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirmRecord {
    pub id: FirmId,
    pub sector: SectorId,
    pub entry_month: i64,
    /// First month in which the firm is no longer present.
    pub exit_month: Option<i64>,
}

/// Ground-truth record of a run: every link lifetime and every firm.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub intervals: Vec<LinkInterval>,
    pub firms: Vec<FirmRecord>,
    pub start_month: i64,
    pub end_month: i64,
}

#[derive(Clone, Debug)]
struct HistoryRecorder {
    open: HashMap<(FirmId, FirmId), i64>,
    closed: Vec<LinkInterval>,
    firms: BTreeMap<FirmId, FirmRecord>,
    start_month: i64,
}

impl HistoryRecorder {
    fn new(state: &NetworkState) -> Self {
        let month = state.month();
        let firms = state
            .firm_ids()
            .into_iter()
            .map(|id| {
                let rec = FirmRecord {
                    id,
                    sector: state.sector(id).expect("live firm"),
                    entry_month: month,
                    exit_month: None,
                };
                (id, rec)
            })
            .collect();
        let open = state.edges().into_iter().map(|e| (e, month)).collect();
        Self {
            open,
            closed: Vec::new(),
            firms,
            start_month: month,
        }
    }

    fn close(&mut self, supplier: FirmId, buyer: FirmId, month: i64) {
        if let Some(entry_month) = self.open.remove(&(supplier, buyer)) {
            if entry_month < month {
                self.closed.push(LinkInterval {
                    supplier,
                    buyer,
                    entry_month,
                    exit_month: month,
                });
            }
        }
    }

    fn finish(&self, end_month: i64) -> History {
        let mut intervals = self.closed.clone();
        intervals.extend(self.open.iter().map(|(&(supplier, buyer), &entry_month)| LinkInterval {
            supplier,
            buyer,
            entry_month,
            exit_month: end_month + 1,
        }));
        intervals.sort_unstable();
        History {
            intervals,
            firms: self.firms.values().cloned().collect(),
            start_month: self.start_month,
            end_month,
        }
    }
}

/// A network under evolution together with its sampling index.
#[derive(Clone, Debug)]
pub struct Simulation {
    state: NetworkState,
    index: AttachmentIndex,
    cfg: EngineConfig,
    entry_sampler: EntryDegreeSampler,
    columns: Vec<Option<WeightedIndex<f64>>>,
    steps_done: usize,
    history: Option<HistoryRecorder>,
}

impl Simulation {
    pub fn new(state: NetworkState, cfg: EngineConfig) -> Result<Self> {
        cfg.validate()?;
        if state.sector_count() != cfg.params.sector_count() {
            return Err(Error::InvalidParameter(format!(
                "network has {} sectors, parameters {}",
                state.sector_count(),
                cfg.params.sector_count()
            )));
        }
        let index = AttachmentIndex::from_state(&state, cfg.params.beta);
        let entry_sampler = cfg.params.entry_degrees.sampler()?;
        let columns = (0..cfg.params.sector_count())
            .map(|c| WeightedIndex::new(cfg.params.sector_matrix.column(c)).ok())
            .collect();
        let history = cfg.record_history.then(|| HistoryRecorder::new(&state));
        Ok(Self {
            state,
            index,
            cfg,
            entry_sampler,
            columns,
            steps_done: 0,
            history,
        })
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn into_state(self) -> NetworkState {
        self.state
    }

    pub fn index(&self) -> &AttachmentIndex {
        &self.index
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.cfg.params
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn history(&self) -> Option<History> {
        self.history.as_ref().map(|h| h.finish(self.state.month()))
    }

    fn link(&mut self, supplier: FirmId, buyer: FirmId) -> Result<bool> {
        if !self.state.add_edge(supplier, buyer)? {
            return Ok(false);
        }
        self.index.update(supplier, self.state.degree(supplier)?);
        self.index.update(buyer, self.state.degree(buyer)?);
        if let Some(h) = self.history.as_mut() {
            h.open.insert((supplier, buyer), self.state.month());
        }
        Ok(true)
    }

    fn unlink(&mut self, supplier: FirmId, buyer: FirmId) -> Result<bool> {
        if !self.state.remove_edge(supplier, buyer)? {
            return Ok(false);
        }
        self.index.update(supplier, self.state.degree(supplier)?);
        self.index.update(buyer, self.state.degree(buyer)?);
        let month = self.state.month();
        if let Some(h) = self.history.as_mut() {
            h.close(supplier, buyer, month);
        }
        Ok(true)
    }

    fn drop_firm(&mut self, id: FirmId) -> Result<usize> {
        let suppliers: Vec<FirmId> = self.state.suppliers(id)?.collect();
        let customers: Vec<FirmId> = self.state.customers(id)?.collect();
        let removed = self.state.remove_firm(id)?;
        self.index.remove(id);
        for &n in suppliers.iter().chain(&customers) {
            self.index.update(n, self.state.degree(n)?);
        }
        let month = self.state.month();
        if let Some(h) = self.history.as_mut() {
            for &s in &suppliers {
                h.close(s, id, month);
            }
            for &c in &customers {
                h.close(id, c, month);
            }
            if let Some(rec) = h.firms.get_mut(&id) {
                rec.exit_month = Some(month);
            }
        }
        Ok(removed)
    }

    fn add_new_firm(&mut self, sector: SectorId) -> Result<FirmId> {
        let id = self.state.add_firm(sector)?;
        self.index.insert(id, sector, 0);
        let month = self.state.month();
        if let Some(h) = self.history.as_mut() {
            h.firms.insert(
                id,
                FirmRecord {
                    id,
                    sector,
                    entry_month: month,
                    exit_month: None,
                },
            );
        }
        Ok(id)
    }

    /// Step 1: Poisson number of entrants with sector and entry quotas.
    pub fn step1_add_firms<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<NewFirmQuota>> {
        let p = &self.cfg.params;
        let count = if p.n_entry_mean > 0.0 {
            Poisson::new(p.n_entry_mean)
                .map_err(|e| Error::InvalidParameter(format!("entry rate: {e}")))?
                .sample(rng) as usize
        } else {
            0
        };
        if count == 0 {
            return Ok(Vec::new());
        }
        let weights: Vec<f64> = match self.cfg.sector_mode {
            SectorMode::Current if self.state.firm_count() > 0 => {
                self.state.sector_counts().iter().map(|&n| n as f64).collect()
            }
            _ => p.sector_dist.clone(),
        };
        let sectors = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidParameter(format!("sector distribution: {e}")))?;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let sector = SectorId(sectors.sample(rng) as u16);
            let (k_in0, k_out0) = self.entry_sampler.sample(rng);
            let id = self.add_new_firm(sector)?;
            out.push(NewFirmQuota { id, k_in0, k_out0 });
        }
        Ok(out)
    }

    /// Step 2: every link is removed independently with probability p_term.
    pub fn step2_remove_links<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        let p = self.cfg.params.p_term;
        if p <= 0.0 {
            return Ok(0);
        }
        let mut removed = 0;
        for (s, b) in self.state.edges() {
            if rng.random::<f64>() < p && self.unlink(s, b)? {
                removed += 1;
            }
        }
        Ok(removed)
    }

    /// Step 3: uniform exits among firms older than this step, then removal
    /// of every isolated pre-existing firm. Returns (uniform exits, isolated
    /// removals, links lost).
    pub fn step3_remove_firms(&mut self, entrants: &[NewFirmQuota]) -> Result<(usize, usize, usize)> {
        let step = self.steps_done as u64 + 1;
        let seed = self.cfg.seed;
        let p = self.cfg.params.p_node_exit;
        let mut fresh: Vec<FirmId> = entrants.iter().map(|q| q.id).collect();
        fresh.sort_unstable();
        let is_fresh = |id: &FirmId| fresh.binary_search(id).is_ok();

        let mut exits = 0;
        let mut links_lost = 0;
        if p > 0.0 {
            for id in self.state.firm_ids() {
                if !is_fresh(&id) && keyed_unit(seed, step, id.0) < p {
                    links_lost += self.drop_firm(id)?;
                    exits += 1;
                }
            }
        }
        let mut isolated = 0;
        for id in self.state.isolated_firms() {
            if !is_fresh(&id) {
                self.drop_firm(id)?;
                isolated += 1;
            }
        }
        Ok((exits, isolated, links_lost))
    }

    /// Step 4: in-stubs for every surviving firm with k ≥ 1; entrants get
    /// their in-quota.
    pub fn step4_create_stubs<R: Rng + ?Sized>(&mut self, entrants: &[NewFirmQuota], rng: &mut R) -> Result<StubLedger> {
        let p = &self.cfg.params;
        let mut in_stubs = Vec::new();
        if p.alpha0 > 0.0 {
            for id in self.state.firm_ids() {
                let k = self.state.degree(id)?;
                if k == 0 {
                    continue;
                }
                let kf = k as f64;
                let n = match self.cfg.stub_law {
                    StubLaw::Binomial => {
                        let prob = (p.alpha0 * kf.powf(p.alpha - 1.0)).clamp(0.0, 1.0);
                        Binomial::new(k as u64, prob)
                            .map_err(|e| Error::Numerical(format!("binomial stubs: {e}")))?
                            .sample(rng) as usize
                    }
                    StubLaw::Poisson => {
                        let mean = p.alpha0 * kf.powf(p.alpha);
                        Poisson::new(mean)
                            .map_err(|e| Error::Numerical(format!("poisson stubs: {e}")))?
                            .sample(rng) as usize
                    }
                };
                if n > 0 {
                    in_stubs.push((id, n));
                }
            }
        }
        for q in entrants {
            if q.k_in0 > 0 && self.state.contains(q.id) {
                in_stubs.push((q.id, q.k_in0));
            }
        }
        Ok(StubLedger {
            in_stubs,
            quotas: entrants.to_vec(),
        })
    }

    fn draw_supplier_sector<R: Rng + ?Sized>(&self, customer_sector: usize, rng: &mut R) -> Option<usize> {
        if let Some(col) = &self.columns[customer_sector] {
            return Some(col.sample(rng));
        }
        // customer sector never observed: fall back to the kernel mass of
        // every sector
        let totals: Vec<f64> = (0..self.state.sector_count())
            .map(|s| self.index.sector_total(s))
            .collect();
        WeightedIndex::new(&totals).ok().map(|w| w.sample(rng))
    }

    /// Step 5: wires every in-stub in random order.
    pub fn step5_connect<R: Rng + ?Sized>(&mut self, ledger: &StubLedger, rng: &mut R) -> Result<ConnectOutcome> {
        let max_resample = self.cfg.max_resample;
        let mut stubs: Vec<FirmId> = ledger
            .in_stubs
            .iter()
            .flat_map(|&(id, n)| std::iter::repeat_n(id, n))
            .collect();
        stubs.shuffle(rng);

        let mut open_out: Vec<NewFirmQuota> = ledger
            .quotas
            .iter()
            .copied()
            .filter(|q| q.k_out0 > 0 && self.state.contains(q.id))
            .collect();
        let mut outcome = ConnectOutcome::default();

        for customer in stubs {
            let mut done = false;
            if !open_out.is_empty() {
                for _ in 0..max_resample {
                    let pos = rng.random_range(0..open_out.len());
                    let supplier = open_out[pos].id;
                    if supplier != customer && self.link(supplier, customer)? {
                        open_out[pos].k_out0 -= 1;
                        if open_out[pos].k_out0 == 0 {
                            open_out.swap_remove(pos);
                        }
                        done = true;
                        break;
                    }
                }
            }
            if !done {
                let csec = self.state.sector(customer)?.index();
                for _ in 0..max_resample {
                    let Some(s1) = self.draw_supplier_sector(csec, rng) else {
                        break;
                    };
                    let Some(supplier) = self.index.sample(s1, rng) else {
                        continue;
                    };
                    if supplier != customer && self.link(supplier, customer)? {
                        done = true;
                        break;
                    }
                }
            }
            if done {
                outcome.links_in += 1;
            } else {
                outcome.discarded += 1;
            }
        }

        if !open_out.is_empty() {
            let fresh: Vec<FirmId> = {
                let mut v: Vec<FirmId> = ledger.quotas.iter().map(|q| q.id).collect();
                v.sort_unstable();
                v
            };
            let mut pool: Vec<FirmId> = self
                .state
                .firm_ids()
                .into_iter()
                .filter(|id| fresh.binary_search(id).is_err())
                .collect();
            if pool.is_empty() {
                pool = self.state.firm_ids();
            }
            for q in open_out {
                for _ in 0..q.k_out0 {
                    for _ in 0..max_resample {
                        let customer = pool[rng.random_range(0..pool.len())];
                        if customer != q.id && self.link(q.id, customer)? {
                            outcome.links_in += 1;
                            outcome.extra_links += 1;
                            break;
                        }
                    }
                }
            }
        }
        Ok(outcome)
    }

    /// Advances one month.
    pub fn step(&mut self) -> Result<StepReport> {
        let step = self.steps_done as u64 + 1;
        let seed = self.cfg.seed;
        let month = self.state.month() + 1;
        self.state.set_month(month);

        let entrants = self.step1_add_firms(&mut stage_rng(seed, step, Stage::AddFirms))?;
        let terminated = self.step2_remove_links(&mut stage_rng(seed, step, Stage::RemoveLinks))?;
        let (exits, isolated, lost) = self.step3_remove_firms(&entrants)?;
        let ledger = self.step4_create_stubs(&entrants, &mut stage_rng(seed, step, Stage::CreateStubs))?;
        let outcome = self.step5_connect(&ledger, &mut stage_rng(seed, step, Stage::Connect))?;
        self.steps_done += 1;

        Ok(StepReport {
            step: self.steps_done,
            month,
            n: self.state.firm_count(),
            l: self.state.link_count(),
            firms_in: entrants.len(),
            firms_out: exits + isolated,
            links_in: outcome.links_in,
            links_out: terminated + lost,
            isolated_removed: isolated,
            links_terminated: terminated,
            stubs: ledger.total_stubs(),
            discarded_stubs: outcome.discarded,
            extra_links: outcome.extra_links,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub step: usize,
    pub state: NetworkState,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub snapshots: Vec<Snapshot>,
    pub reports: Vec<StepReport>,
    pub history: Option<History>,
    pub final_state: NetworkState,
}

/// Runs `cfg.steps` months from `initial`. Snapshots follow the configured
/// schedule; when the schedule is empty the final state is the only
/// snapshot.
pub fn run(initial: &NetworkState, cfg: &EngineConfig) -> Result<RunOutput> {
    let schedule = cfg.snapshot_steps();
    let mut sim = Simulation::new(initial.clone(), cfg.clone())?;
    let mut snapshots = Vec::with_capacity(schedule.len().max(1));
    let mut reports = Vec::with_capacity(cfg.steps);
    let mut next = schedule.iter().peekable();
    for _ in 0..cfg.steps {
        let report = sim.step()?;
        reports.push(report);
        if next.peek().is_some_and(|&&s| s == report.step) {
            next.next();
            snapshots.push(Snapshot {
                step: report.step,
                state: sim.state().clone(),
            });
        }
    }
    if snapshots.is_empty() {
        snapshots.push(Snapshot {
            step: sim.steps_done(),
            state: sim.state().clone(),
        });
    }
    let history = sim.history();
    Ok(RunOutput {
        snapshots,
        reports,
        history,
        final_state: sim.into_state(),
    })
}
