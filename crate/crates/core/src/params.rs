//! Model parameter set and the distributions it carries.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// NACE sections used by the bundled fixtures. Section T (households) never
/// appears as a reporting firm and is left out.
pub const NACE_SECTIONS: [&str; 20] = [
    "A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L", "M", "N", "O", "P", "Q", "R", "S", "U",
];

/// Sections A-F form the manufacturing block, the rest the service block.
pub fn is_manufacturing_section(label: &str) -> bool {
    matches!(label, "A" | "B" | "C" | "D" | "E" | "F")
}

/// Supplier attachment matrix: `probs[s1][s2]` is the probability that a
/// customer in sector s2 picks a supplier in sector s1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorAttachmentMatrix {
    pub probs: Vec<Vec<f64>>,
}

impl SectorAttachmentMatrix {
    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![vec![1.0 / n as f64; n]; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut probs = vec![vec![0.0; n]; n];
        for (i, row) in probs.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { probs }
    }

    pub fn sector_count(&self) -> usize {
        self.probs.len()
    }

    pub fn get(&self, supplier: usize, customer: usize) -> f64 {
        self.probs[supplier][customer]
    }

    /// Supplier-sector distribution for one customer sector.
    pub fn column(&self, customer: usize) -> Vec<f64> {
        self.probs.iter().map(|row| row[customer]).collect()
    }

    pub fn column_sum(&self, customer: usize) -> f64 {
        self.probs.iter().map(|row| row[customer]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.probs.len();
        for row in &self.probs {
            if row.len() != n {
                return Err(Error::InvalidParameter("sector matrix is not square".into()));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidParameter("sector matrix entry outside [0,1]".into()));
            }
        }
        for c in 0..n {
            let s = self.column_sum(c);
            if s != 0.0 && (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "sector matrix column {c} sums to {s}"
                )));
            }
        }
        Ok(())
    }

    /// Synthetic matrix with the qualitative layout of the empirical one: a
    /// strong diagonal, a few sectors that supply everybody, and denser
    /// manufacturing/service blocks. Columns are normalised.
    pub fn hungarian_like(labels: &[&str], prevalence: &[f64]) -> Self {
        let n = labels.len();
        let mut probs = vec![vec![0.0; n]; n];
        for c in 0..n {
            for s in 0..n {
                let mut w = prevalence[s];
                if s == c {
                    w *= 6.0;
                }
                if matches!(labels[s], "G" | "D" | "L") {
                    w *= 2.5;
                }
                let block = match (is_manufacturing_section(labels[s]), is_manufacturing_section(labels[c])) {
                    (true, true) | (false, false) => 1.3,
                    (true, false) => 1.0,
                    (false, true) => 0.4,
                };
                probs[s][c] = w * block;
            }
            let total: f64 = (0..n).map(|s| probs[s][c]).sum();
            for row in probs.iter_mut() {
                row[c] /= total;
            }
        }
        Self { probs }
    }
}

/// Joint distribution of (k_in0, k_out0) at firm entry, `table[k_in][k_out]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryDegreeDistribution {
    pub k_cap: usize,
    pub table: Vec<Vec<f64>>,
}

impl EntryDegreeDistribution {
    pub fn point(k_cap: usize, k_in: usize, k_out: usize) -> Self {
        let mut table = vec![vec![0.0; k_cap + 1]; k_cap + 1];
        table[k_in][k_out] = 1.0;
        Self { k_cap, table }
    }

    /// Default table: marginal means 0.35 (in) and 0.71 (out), mostly a
    /// single link, (1,1) under-represented and no (0,0) mass.
    pub fn period_a() -> Self {
        let mut table = vec![vec![0.0; 4]; 4];
        table[0][1] = 0.6575;
        table[0][2] = 0.01;
        table[0][3] = 0.005;
        table[1][0] = 0.2975;
        table[2][0] = 0.01;
        table[3][0] = 0.005;
        table[1][1] = 0.01;
        table[1][2] = 0.0025;
        table[2][1] = 0.0025;
        Self { k_cap: 3, table }
    }

    pub fn mean_in(&self) -> f64 {
        self.table
            .iter()
            .enumerate()
            .map(|(i, row)| i as f64 * row.iter().sum::<f64>())
            .sum()
    }

    pub fn mean_out(&self) -> f64 {
        self.table
            .iter()
            .flat_map(|row| row.iter().enumerate().map(|(j, p)| j as f64 * p))
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.table.iter().flatten().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.table.len() != self.k_cap + 1 || self.table.iter().any(|r| r.len() != self.k_cap + 1) {
            return Err(Error::InvalidParameter("entry-degree table shape".into()));
        }
        if self.table.iter().flatten().any(|p| *p < 0.0) || (self.total() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("entry-degree table is not a distribution".into()));
        }
        Ok(())
    }

    pub fn sampler(&self) -> Result<EntryDegreeSampler> {
        let cells: Vec<(usize, usize)> = (0..=self.k_cap)
            .flat_map(|i| (0..=self.k_cap).map(move |j| (i, j)))
            .collect();
        let weights: Vec<f64> = cells.iter().map(|&(i, j)| self.table[i][j]).collect();
        let index = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidParameter(format!("entry-degree table: {e}")))?;
        Ok(EntryDegreeSampler { cells, index })
    }
}

#[derive(Clone, Debug)]
pub struct EntryDegreeSampler {
    cells: Vec<(usize, usize)>,
    index: WeightedIndex<f64>,
}

impl EntryDegreeSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        self.cells[self.index.sample(rng)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Mean number of entering firms per month.
    pub n_entry_mean: f64,
    /// Uniform monthly firm removal probability p^ex.
    pub p_node_exit: f64,
    pub alpha0: f64,
    pub alpha: f64,
    /// Attachment kernel exponent.
    pub beta: f64,
    /// Monthly spontaneous link removal probability.
    pub p_term: f64,
    pub sector_labels: Vec<String>,
    pub sector_dist: Vec<f64>,
    pub sector_matrix: SectorAttachmentMatrix,
    pub entry_degrees: EntryDegreeDistribution,
}

/// Rough sector prevalence for the bundled fixtures (sums to 1).
pub const DEFAULT_PREVALENCE: [f64; 20] = [
    0.04, 0.005, 0.14, 0.01, 0.01, 0.09, 0.26, 0.05, 0.03, 0.05, 0.01, 0.05, 0.12, 0.05, 0.005, 0.01,
    0.01, 0.01, 0.02, 0.03,
];

impl ModelParams {
    fn with_rates(n_entry_mean: f64, p_node_exit: f64, alpha0: f64, alpha: f64, beta: f64, p_term: f64) -> Self {
        let labels: Vec<String> = NACE_SECTIONS.iter().map(|s| s.to_string()).collect();
        Self {
            n_entry_mean,
            p_node_exit,
            alpha0,
            alpha,
            beta,
            p_term,
            sector_matrix: SectorAttachmentMatrix::hungarian_like(&NACE_SECTIONS, &DEFAULT_PREVALENCE),
            sector_labels: labels,
            sector_dist: DEFAULT_PREVALENCE.to_vec(),
            entry_degrees: EntryDegreeDistribution::period_a(),
        }
    }

    /// 2015-2017 calibration.
    pub fn period_a() -> Self {
        Self::with_rates(357.0, 0.0049, 0.0108, 1.0369, 1.08, 0.0214)
    }

    pub fn period_b() -> Self {
        Self::with_rates(605.0, 0.0051, 0.0118, 0.9955, 1.08, 0.0195)
    }

    pub fn period_c() -> Self {
        Self::with_rates(904.0, 0.0046, 0.0160, 0.9711, 1.06, 0.0338)
    }

    /// Single-sector variant with trivial sector structure.
    pub fn single_sector(mut self) -> Self {
        self.sector_labels = vec!["X".into()];
        self.sector_dist = vec![1.0];
        self.sector_matrix = SectorAttachmentMatrix::uniform(1);
        self
    }

    pub fn sector_count(&self) -> usize {
        self.sector_dist.len()
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [("p_node_exit", self.p_node_exit), ("p_term", self.p_term)];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} = {p} outside [0,1]")));
            }
        }
        if self.n_entry_mean < 0.0 || self.alpha0 < 0.0 || !self.n_entry_mean.is_finite() {
            return Err(Error::InvalidParameter("negative rate".into()));
        }
        let n = self.sector_dist.len();
        if n == 0 || self.sector_labels.len() != n || self.sector_matrix.sector_count() != n {
            return Err(Error::InvalidParameter("sector tables disagree in size".into()));
        }
        let total: f64 = self.sector_dist.iter().sum();
        if self.sector_dist.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("sector distribution does not sum to 1".into()));
        }
        self.sector_matrix.validate()?;
        self.entry_degrees.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_entry_table_marginals() {
        let e = EntryDegreeDistribution::period_a();
        e.validate().unwrap();
        assert!((e.mean_in() - 0.35).abs() < 1e-12);
        assert!((e.mean_out() - 0.71).abs() < 1e-12);
        assert_eq!(e.table[0][0], 0.0);
    }

    #[test]
    fn period_a_is_valid() {
        let p = ModelParams::period_a();
        p.validate().unwrap();
        assert_eq!(p.n_entry_mean, 357.0);
        assert_eq!(p.p_term, 0.0214);
        let total: f64 = DEFAULT_PREVALENCE.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        ModelParams::period_b().validate().unwrap();
        ModelParams::period_c().single_sector().validate().unwrap();
    }

    #[test]
    fn hungarian_like_layout() {
        let m = SectorAttachmentMatrix::hungarian_like(&NACE_SECTIONS, &DEFAULT_PREVALENCE);
        m.validate().unwrap();
        // wholesale supplies every sector more than a small service sector does
        let g = 6;
        let o = 14;
        for c in 0..20 {
            if c != o {
                assert!(m.get(g, c) > m.get(o, c));
            }
        }
    }
}
