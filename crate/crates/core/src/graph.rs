//! Directed firm network with cached degrees.
//!
//! Edges run supplier -> buyer. The graph is simple: no self-loops and no
//! parallel edges. Firm ids are handed out monotonically and never reused.

use std::fmt;

use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FirmId(pub u64);

impl fmt::Display for FirmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SectorId(pub u16);

impl SectorId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug)]
struct Firm {
    sector: SectorId,
    suppliers: IndexSet<FirmId>,
    customers: IndexSet<FirmId>,
}

#[derive(Clone, Debug)]
pub struct NetworkState {
    sector_count: usize,
    firms: IndexMap<FirmId, Firm>,
    sector_counts: Vec<usize>,
    links: usize,
    next_id: u64,
    month: i64,
}

impl NetworkState {
    pub fn new(sector_count: usize) -> Self {
        Self {
            sector_count,
            firms: IndexMap::new(),
            sector_counts: vec![0; sector_count],
            links: 0,
            next_id: 0,
            month: 0,
        }
    }

    fn check_sector(&self, sector: SectorId) -> Result<()> {
        if sector.index() >= self.sector_count {
            return Err(Error::SectorOutOfRange {
                sector: sector.index(),
                count: self.sector_count,
            });
        }
        Ok(())
    }

    pub fn add_firm(&mut self, sector: SectorId) -> Result<FirmId> {
        self.check_sector(sector)?;
        let id = FirmId(self.next_id);
        self.next_id += 1;
        self.firms.insert(
            id,
            Firm {
                sector,
                suppliers: IndexSet::new(),
                customers: IndexSet::new(),
            },
        );
        self.sector_counts[sector.index()] += 1;
        Ok(id)
    }

    /// Inserts a firm under an explicit id, used when loading snapshots.
    /// Ids below the internal counter are only accepted if never issued by
    /// `add_firm`, so the no-reuse rule holds for generated ids.
    pub fn insert_firm(&mut self, id: FirmId, sector: SectorId) -> Result<()> {
        self.check_sector(sector)?;
        if self.firms.contains_key(&id) {
            return Err(Error::Inconsistent(format!("duplicate firm id {id}")));
        }
        self.firms.insert(
            id,
            Firm {
                sector,
                suppliers: IndexSet::new(),
                customers: IndexSet::new(),
            },
        );
        self.sector_counts[sector.index()] += 1;
        self.next_id = self.next_id.max(id.0 + 1);
        Ok(())
    }

    pub fn add_edge(&mut self, supplier: FirmId, buyer: FirmId) -> Result<bool> {
        if !self.firms.contains_key(&supplier) {
            return Err(Error::UnknownFirm(supplier));
        }
        if !self.firms.contains_key(&buyer) {
            return Err(Error::UnknownFirm(buyer));
        }
        if supplier == buyer {
            return Ok(false);
        }
        if !self.firms[&supplier].customers.insert(buyer) {
            return Ok(false);
        }
        self.firms[&buyer].suppliers.insert(supplier);
        self.links += 1;
        Ok(true)
    }

    pub fn remove_edge(&mut self, supplier: FirmId, buyer: FirmId) -> Result<bool> {
        if !self.firms.contains_key(&buyer) {
            return Err(Error::UnknownFirm(buyer));
        }
        let firm = self
            .firms
            .get_mut(&supplier)
            .ok_or(Error::UnknownFirm(supplier))?;
        if !firm.customers.swap_remove(&buyer) {
            return Ok(false);
        }
        self.firms[&buyer].suppliers.swap_remove(&supplier);
        self.links -= 1;
        Ok(true)
    }

    /// Removes a firm with all of its in- and out-links. Returns the number
    /// of links removed.
    pub fn remove_firm(&mut self, id: FirmId) -> Result<usize> {
        let firm = self.firms.swap_remove(&id).ok_or(Error::UnknownFirm(id))?;
        for s in &firm.suppliers {
            self.firms[s].customers.swap_remove(&id);
        }
        for c in &firm.customers {
            self.firms[c].suppliers.swap_remove(&id);
        }
        let removed = firm.suppliers.len() + firm.customers.len();
        self.links -= removed;
        self.sector_counts[firm.sector.index()] -= 1;
        Ok(removed)
    }

    /// Live firms with total degree zero, in ascending id order.
    pub fn isolated_firms(&self) -> Vec<FirmId> {
        let mut out: Vec<FirmId> = self
            .firms
            .iter()
            .filter(|(_, f)| f.suppliers.is_empty() && f.customers.is_empty())
            .map(|(id, _)| *id)
            .collect();
        out.sort_unstable();
        out
    }

    pub fn contains(&self, id: FirmId) -> bool {
        self.firms.contains_key(&id)
    }

    pub fn has_edge(&self, supplier: FirmId, buyer: FirmId) -> bool {
        self.firms
            .get(&supplier)
            .is_some_and(|f| f.customers.contains(&buyer))
    }

    fn firm(&self, id: FirmId) -> Result<&Firm> {
        self.firms.get(&id).ok_or(Error::UnknownFirm(id))
    }

    pub fn sector(&self, id: FirmId) -> Result<SectorId> {
        Ok(self.firm(id)?.sector)
    }

    pub fn in_degree(&self, id: FirmId) -> Result<usize> {
        Ok(self.firm(id)?.suppliers.len())
    }

    pub fn out_degree(&self, id: FirmId) -> Result<usize> {
        Ok(self.firm(id)?.customers.len())
    }

    /// Total degree k = k_in + k_out.
    pub fn degree(&self, id: FirmId) -> Result<usize> {
        let f = self.firm(id)?;
        Ok(f.suppliers.len() + f.customers.len())
    }

    pub fn suppliers(&self, id: FirmId) -> Result<impl Iterator<Item = FirmId> + '_> {
        Ok(self.firm(id)?.suppliers.iter().copied())
    }

    pub fn customers(&self, id: FirmId) -> Result<impl Iterator<Item = FirmId> + '_> {
        Ok(self.firm(id)?.customers.iter().copied())
    }

    /// Neighbours in the undirected projection, sorted and deduplicated.
    pub fn undirected_neighbors(&self, id: FirmId) -> Result<Vec<FirmId>> {
        let f = self.firm(id)?;
        let mut out: Vec<FirmId> = f.suppliers.iter().chain(f.customers.iter()).copied().collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn firm_count(&self) -> usize {
        self.firms.len()
    }

    pub fn link_count(&self) -> usize {
        self.links
    }

    pub fn sector_count(&self) -> usize {
        self.sector_count
    }

    /// n(s) for every sector.
    pub fn sector_counts(&self) -> &[usize] {
        &self.sector_counts
    }

    pub fn month(&self) -> i64 {
        self.month
    }

    pub fn set_month(&mut self, month: i64) {
        self.month = month;
    }

    pub fn next_firm_id(&self) -> FirmId {
        FirmId(self.next_id)
    }

    /// Mean total degree 2L/N (zero on an empty network).
    pub fn mean_degree(&self) -> f64 {
        if self.firms.is_empty() {
            0.0
        } else {
            2.0 * self.links as f64 / self.firms.len() as f64
        }
    }

    pub fn firm_ids(&self) -> Vec<FirmId> {
        let mut ids: Vec<FirmId> = self.firms.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    /// All edges as (supplier, buyer), sorted.
    pub fn edges(&self) -> Vec<(FirmId, FirmId)> {
        let mut out = Vec::with_capacity(self.links);
        for (id, f) in &self.firms {
            out.extend(f.customers.iter().map(|c| (*id, *c)));
        }
        out.sort_unstable();
        out
    }

    /// Recomputes every cached counter from the adjacency sets and checks
    /// the structural invariants.
    pub fn check_consistency(&self) -> Result<()> {
        let mut counts = vec![0usize; self.sector_count];
        let mut in_sum = 0;
        let mut out_sum = 0;
        for (id, f) in &self.firms {
            counts[f.sector.index()] += 1;
            in_sum += f.suppliers.len();
            out_sum += f.customers.len();
            if f.customers.contains(id) || f.suppliers.contains(id) {
                return Err(Error::Inconsistent(format!("self-loop at {id}")));
            }
            for c in &f.customers {
                let other = self
                    .firms
                    .get(c)
                    .ok_or_else(|| Error::Inconsistent(format!("dangling edge {id}->{c}")))?;
                if !other.suppliers.contains(id) {
                    return Err(Error::Inconsistent(format!("asymmetric edge {id}->{c}")));
                }
            }
        }
        if in_sum != self.links || out_sum != self.links {
            return Err(Error::Inconsistent(format!(
                "degree sums {in_sum}/{out_sum} differ from link count {}",
                self.links
            )));
        }
        if counts != self.sector_counts {
            return Err(Error::Inconsistent("sector counts drifted".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(i: u16) -> SectorId {
        SectorId(i)
    }

    #[test]
    fn add_firm_counts() {
        let mut g = NetworkState::new(3);
        let a = g.add_firm(s(2)).unwrap();
        assert_eq!(g.firm_count(), 1);
        assert_eq!(g.sector_counts()[2], 1);
        assert_eq!(g.degree(a).unwrap(), 0);
        g.add_firm(s(2)).unwrap();
        assert_eq!(g.sector_counts()[2], 2);
        assert!(g.add_firm(s(3)).is_err());
    }

    #[test]
    fn batch_of_entrants() {
        let mut g = NetworkState::new(1);
        for _ in 0..357 {
            g.add_firm(s(0)).unwrap();
        }
        assert_eq!(g.firm_count(), 357);
    }

    #[test]
    fn edges_are_simple() {
        let mut g = NetworkState::new(1);
        let a = g.add_firm(s(0)).unwrap();
        let b = g.add_firm(s(0)).unwrap();
        assert!(g.add_edge(a, b).unwrap());
        assert_eq!(g.link_count(), 1);
        assert_eq!(g.out_degree(a).unwrap(), 1);
        assert_eq!(g.in_degree(b).unwrap(), 1);
        assert!(!g.add_edge(a, a).unwrap());
        assert!(!g.add_edge(a, b).unwrap());
        assert_eq!(g.link_count(), 1);
        assert!(matches!(g.add_edge(a, FirmId(99)), Err(Error::UnknownFirm(_))));
    }

    #[test]
    fn star_hub_removal() {
        let mut g = NetworkState::new(1);
        let hub = g.add_firm(s(0)).unwrap();
        let leaves: Vec<_> = (0..3).map(|_| g.add_firm(s(0)).unwrap()).collect();
        for &l in &leaves {
            g.add_edge(hub, l).unwrap();
        }
        let lone = g.add_firm(s(0)).unwrap();
        assert_eq!(g.isolated_firms(), vec![lone]);
        assert_eq!(g.remove_firm(hub).unwrap(), 3);
        assert_eq!(g.link_count(), 0);
        let mut expected = leaves.clone();
        expected.push(lone);
        assert_eq!(g.isolated_firms(), expected);
        assert_eq!(g.remove_firm(lone).unwrap(), 0);
        assert!(g.remove_firm(hub).is_err());
    }

    #[test]
    fn hub_with_five_links() {
        let mut g = NetworkState::new(1);
        let hub = g.add_firm(s(0)).unwrap();
        for i in 0..5 {
            let o = g.add_firm(s(0)).unwrap();
            if i % 2 == 0 {
                g.add_edge(hub, o).unwrap();
            } else {
                g.add_edge(o, hub).unwrap();
            }
        }
        let before = g.link_count();
        assert_eq!(g.remove_firm(hub).unwrap(), 5);
        assert_eq!(g.link_count(), before - 5);
    }

    #[test]
    fn in_edge_is_not_isolated() {
        let mut g = NetworkState::new(1);
        let a = g.add_firm(s(0)).unwrap();
        let b = g.add_firm(s(0)).unwrap();
        g.add_edge(a, b).unwrap();
        assert!(g.isolated_firms().is_empty());
    }

    #[test]
    fn ids_are_not_reused() {
        let mut g = NetworkState::new(1);
        let a = g.add_firm(s(0)).unwrap();
        g.remove_firm(a).unwrap();
        let b = g.add_firm(s(0)).unwrap();
        assert_ne!(a, b);
    }

    #[derive(Debug, Clone)]
    enum Op {
        AddFirm(u16),
        AddEdge(usize, usize),
        RemoveEdge(usize, usize),
        RemoveFirm(usize),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            2 => (0u16..3).prop_map(Op::AddFirm),
            4 => (0usize..64, 0usize..64).prop_map(|(a, b)| Op::AddEdge(a, b)),
            1 => (0usize..64, 0usize..64).prop_map(|(a, b)| Op::RemoveEdge(a, b)),
            1 => (0usize..64).prop_map(Op::RemoveFirm),
        ]
    }

    proptest! {
        #[test]
        fn cached_degrees_match_edges(ops in proptest::collection::vec(op(), 100)) {
            let mut g = NetworkState::new(3);
            for o in ops {
                let ids = g.firm_ids();
                let pick = |i: usize| ids.get(i % ids.len().max(1)).copied();
                match o {
                    Op::AddFirm(sec) => { g.add_firm(SectorId(sec)).unwrap(); }
                    Op::AddEdge(a, b) => if let (Some(a), Some(b)) = (pick(a), pick(b)) {
                        let had = g.has_edge(a, b);
                        let added = g.add_edge(a, b).unwrap();
                        prop_assert_eq!(added, a != b && !had);
                    },
                    Op::RemoveEdge(a, b) => if let (Some(a), Some(b)) = (pick(a), pick(b)) {
                        g.remove_edge(a, b).unwrap();
                    },
                    Op::RemoveFirm(a) => if let Some(a) = pick(a) {
                        let k = g.degree(a).unwrap();
                        prop_assert_eq!(g.remove_firm(a).unwrap(), k);
                    },
                }
                prop_assert!(g.check_consistency().is_ok());
            }
            let edges = g.edges();
            prop_assert_eq!(edges.len(), g.link_count());
            for id in g.firm_ids() {
                let kin = edges.iter().filter(|e| e.1 == id).count();
                let kout = edges.iter().filter(|e| e.0 == id).count();
                prop_assert_eq!(g.in_degree(id).unwrap(), kin);
                prop_assert_eq!(g.out_degree(id).unwrap(), kout);
            }
            let total: usize = g.sector_counts().iter().sum();
            prop_assert_eq!(total, g.firm_count());
        }
    }
}
