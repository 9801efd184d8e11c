//! Per-sector weighted sampling of suppliers with weight k^β.

use std::collections::HashMap;

use rand::Rng;

use super::sumtree::SumTree;
use crate::graph::{FirmId, NetworkState, SectorId};

#[derive(Clone, Debug)]
struct SectorPool {
    tree: SumTree,
    members: Vec<Option<FirmId>>,
    free: Vec<usize>,
}

impl SectorPool {
    fn new() -> Self {
        Self {
            tree: SumTree::new(16),
            members: Vec::new(),
            free: Vec::new(),
        }
    }
}

/// Dynamic weighted index over live firms, one pool per sector. Insert,
/// remove, reweight and draw are all O(log n) in the pool size.
#[derive(Clone, Debug)]
pub struct AttachmentIndex {
    beta: f64,
    pools: Vec<SectorPool>,
    slots: HashMap<FirmId, (u16, usize)>,
}

impl AttachmentIndex {
    pub fn new(sector_count: usize, beta: f64) -> Self {
        Self {
            beta,
            pools: (0..sector_count).map(|_| SectorPool::new()).collect(),
            slots: HashMap::new(),
        }
    }

    pub fn from_state(state: &NetworkState, beta: f64) -> Self {
        let mut index = Self::new(state.sector_count(), beta);
        for id in state.firm_ids() {
            let sector = state.sector(id).expect("live firm");
            let k = state.degree(id).expect("live firm");
            index.insert(id, sector, k);
        }
        index
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Kernel weight A(k) = k^β. With β = 0 every firm, including k = 0,
    /// has weight 1.
    pub fn kernel(&self, degree: usize) -> f64 {
        (degree as f64).powf(self.beta)
    }

    pub fn insert(&mut self, firm: FirmId, sector: SectorId, degree: usize) {
        let w = self.kernel(degree);
        let pool = &mut self.pools[sector.index()];
        let slot = match pool.free.pop() {
            Some(s) => {
                pool.members[s] = Some(firm);
                s
            }
            None => {
                pool.members.push(Some(firm));
                pool.members.len() - 1
            }
        };
        pool.tree.set(slot, w);
        self.slots.insert(firm, (sector.0, slot));
    }

    pub fn remove(&mut self, firm: FirmId) {
        if let Some((sector, slot)) = self.slots.remove(&firm) {
            let pool = &mut self.pools[sector as usize];
            pool.tree.set(slot, 0.0);
            pool.members[slot] = None;
            pool.free.push(slot);
        }
    }

    pub fn update(&mut self, firm: FirmId, degree: usize) {
        if let Some(&(sector, slot)) = self.slots.get(&firm) {
            let w = self.kernel(degree);
            self.pools[sector as usize].tree.set(slot, w);
        }
    }

    pub fn weight(&self, firm: FirmId) -> Option<f64> {
        let &(sector, slot) = self.slots.get(&firm)?;
        Some(self.pools[sector as usize].tree.get(slot))
    }

    pub fn sector_total(&self, sector: usize) -> f64 {
        self.pools[sector].tree.total()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Draws a firm of `sector` with probability proportional to its weight.
    pub fn sample<R: Rng + ?Sized>(&self, sector: usize, rng: &mut R) -> Option<FirmId> {
        let pool = &self.pools[sector];
        let total = pool.tree.total();
        if total <= 0.0 {
            return None;
        }
        for _ in 0..4 {
            let u = rng.random::<f64>() * total;
            if let Some(slot) = pool.tree.find(u) {
                return pool.members[slot];
            }
        }
        None
    }

    /// Largest deviation between stored weights and k^β recomputed from the
    /// graph, plus the largest relative gap between a pool total and the sum
    /// of its member weights. Firms missing from either side count as
    /// infinite deviation.
    pub fn audit(&self, state: &NetworkState) -> (f64, f64) {
        let mut worst = 0.0f64;
        if self.slots.len() != state.firm_count() {
            worst = f64::INFINITY;
        }
        for id in state.firm_ids() {
            match self.weight(id) {
                Some(w) => {
                    let k = state.degree(id).unwrap_or(0);
                    worst = worst.max((w - self.kernel(k)).abs());
                }
                None => worst = f64::INFINITY,
            }
        }
        let mut total_gap = 0.0f64;
        for pool in &self.pools {
            let sum: f64 = pool
                .members
                .iter()
                .enumerate()
                .filter(|(_, m)| m.is_some())
                .map(|(s, _)| pool.tree.get(s))
                .sum();
            let total = pool.tree.total();
            let gap = (sum - total).abs() / total.max(1.0);
            total_gap = total_gap.max(gap);
        }
        (worst, total_gap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn draws_follow_weights() {
        let mut idx = AttachmentIndex::new(1, 1.0);
        idx.insert(FirmId(0), SectorId(0), 1);
        idx.insert(FirmId(1), SectorId(0), 3);
        idx.insert(FirmId(2), SectorId(0), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 3];
        for _ in 0..40_000 {
            counts[idx.sample(0, &mut rng).unwrap().0 as usize] += 1;
        }
        assert_eq!(counts[2], 0);
        let share = counts[1] as f64 / 40_000.0;
        assert!((share - 0.75).abs() < 0.01, "{share}");
    }

    #[test]
    fn remove_and_reuse_slots() {
        let mut idx = AttachmentIndex::new(2, 1.08);
        idx.insert(FirmId(0), SectorId(1), 2);
        idx.remove(FirmId(0));
        assert_eq!(idx.sector_total(1), 0.0);
        idx.insert(FirmId(5), SectorId(1), 4);
        assert!((idx.sector_total(1) - 4f64.powf(1.08)).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(idx.sample(1, &mut rng), Some(FirmId(5)));
        assert_eq!(idx.sample(0, &mut rng), None);
    }

    #[test]
    fn zero_beta_is_uniform_including_isolated() {
        let idx = AttachmentIndex::new(1, 0.0);
        assert_eq!(idx.kernel(0), 1.0);
        assert_eq!(idx.kernel(17), 1.0);
    }
}
