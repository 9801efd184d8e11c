/// Complete binary tree of non-negative weights where every inner node holds
/// the sum of its children. Parents are recomputed from their children on
/// each update, so totals never accumulate rounding drift.
#[derive(Clone, Debug)]
pub struct SumTree {
    tree: Vec<f64>,
    capacity: usize,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1).next_power_of_two();
        Self {
            tree: vec![0.0; 2 * capacity],
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.tree[1]
    }

    pub fn get(&self, ix: usize) -> f64 {
        self.tree[self.capacity + ix]
    }

    /// Doubles capacity until `ix` fits.
    fn grow_to(&mut self, ix: usize) {
        if ix < self.capacity {
            return;
        }
        let leaves: Vec<f64> = self.tree[self.capacity..].to_vec();
        let capacity = (ix + 1).next_power_of_two();
        let mut tree = vec![0.0; 2 * capacity];
        tree[capacity..capacity + leaves.len()].copy_from_slice(&leaves);
        for i in (1..capacity).rev() {
            tree[i] = tree[2 * i] + tree[2 * i + 1];
        }
        self.tree = tree;
        self.capacity = capacity;
    }

    pub fn set(&mut self, ix: usize, weight: f64) {
        debug_assert!(weight >= 0.0 && weight.is_finite());
        self.grow_to(ix);
        let mut i = self.capacity + ix;
        self.tree[i] = weight;
        while i > 1 {
            i /= 2;
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1];
        }
    }

    /// Leaf whose cumulative weight range contains `u`, with `u` in
    /// `[0, total)`. Returns `None` if the descent ends on an empty leaf,
    /// which can only happen through rounding at range borders.
    pub fn find(&self, mut u: f64) -> Option<usize> {
        if self.total() <= 0.0 {
            return None;
        }
        let mut i = 1;
        while i < self.capacity {
            let left = self.tree[2 * i];
            if u < left {
                i *= 2;
            } else {
                u -= left;
                i = 2 * i + 1;
            }
        }
        let leaf = i - self.capacity;
        (self.tree[i] > 0.0).then_some(leaf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_and_lookup() {
        let mut t = SumTree::new(3);
        assert_eq!(t.capacity(), 4);
        for i in 0..8 {
            t.set(i, i as f64);
        }
        assert_eq!(t.capacity(), 8);
        assert_eq!(t.total(), 28.0);
        assert_eq!(t.find(0.5), Some(1));
        assert_eq!(t.find(4.0), Some(3));
        assert_eq!(t.find(27.9), Some(7));
        t.set(7, 0.0);
        assert_eq!(t.total(), 21.0);
        assert_eq!(t.find(20.9), Some(6));
    }

    #[test]
    fn empty_tree_draws_nothing() {
        let t = SumTree::new(4);
        assert_eq!(t.find(0.0), None);
    }
}
