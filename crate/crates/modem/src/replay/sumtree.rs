/// Growable binary sum tree for proportional sampling. Leaves hold the
/// (already transformed) sampling mass of each item; interior nodes hold
/// subtree sums, so prefix search is O(log n).
pub struct SumTree {
    cap: usize,
    len: usize,
    tree: Vec<f64>,
}

impl SumTree {
    pub fn new() -> SumTree {
        let cap = 64;
        SumTree { cap, len: 0, tree: vec![0.0; 2 * cap] }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total(&self) -> f64 {
        self.tree[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        assert!(i < self.len, "sum tree index {} out of {}", i, self.len);
        self.tree[self.cap + i]
    }

    pub fn push(&mut self, v: f64) {
        if self.len == self.cap {
            self.grow();
        }
        let i = self.len;
        self.len += 1;
        self.update(i, v);
    }

    pub fn update(&mut self, i: usize, v: f64) {
        assert!(i < self.len, "sum tree index {} out of {}", i, self.len);
        assert!(v >= 0.0 && v.is_finite(), "sum tree mass must be finite and non-negative");
        let mut node = self.cap + i;
        self.tree[node] = v;
        node /= 2;
        while node >= 1 {
            self.tree[node] = self.tree[2 * node] + self.tree[2 * node + 1];
            node /= 2;
        }
    }

    fn grow(&mut self) {
        let old: Vec<f64> = (0..self.len).map(|i| self.tree[self.cap + i]).collect();
        self.cap *= 2;
        self.tree = vec![0.0; 2 * self.cap];
        let len = self.len;
        self.len = 0;
        for v in old.into_iter().take(len) {
            // push without recursion into grow: capacity is sufficient
            let i = self.len;
            self.len += 1;
            self.update(i, v);
        }
    }

    /// Index of the item whose cumulative-mass interval contains
    /// `u * total`, for `u` in [0, 1).
    pub fn sample(&self, u: f64) -> usize {
        assert!(!self.is_empty(), "sampling from empty sum tree");
        assert!(self.total() > 0.0, "sampling from zero-mass sum tree");
        debug_assert!((0.0..1.0).contains(&u));
        let mut x = u * self.total();
        let mut node = 1;
        while node < self.cap {
            let left = 2 * node;
            // Never descend into a zero-mass subtree.
            if (x <= self.tree[left] && self.tree[left] > 0.0) || self.tree[left + 1] == 0.0 {
                node = left;
            } else {
                x -= self.tree[left];
                node = left + 1;
            }
        }
        (node - self.cap).min(self.len - 1)
    }
}

impl Default for SumTree {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masses_and_total() {
        let mut t = SumTree::new();
        for v in [0.5, 0.2, 0.8, 0.3] {
            t.push(v);
        }
        assert!((t.total() - 1.8).abs() < 1e-12);
        t.update(1, 1.2);
        assert!((t.total() - 2.8).abs() < 1e-12);
        assert_eq!(t.get(1), 1.2);
    }

    #[test]
    fn grows_past_initial_capacity() {
        let mut t = SumTree::new();
        for i in 0..1000 {
            t.push((i % 7) as f64 + 1.0);
        }
        assert_eq!(t.len(), 1000);
        let want: f64 = (0..1000).map(|i| (i % 7) as f64 + 1.0).sum();
        assert!((t.total() - want).abs() < 1e-9);
    }

    #[test]
    fn prefix_search_picks_correct_interval() {
        let mut t = SumTree::new();
        for v in [1.0, 2.0, 3.0, 4.0] {
            t.push(v);
        }
        // cumulative: 1, 3, 6, 10
        assert_eq!(t.sample(0.05), 0); // 0.5
        assert_eq!(t.sample(0.25), 1); // 2.5
        assert_eq!(t.sample(0.45), 2); // 4.5
        assert_eq!(t.sample(0.95), 3); // 9.5
    }

    #[test]
    fn zero_mass_items_are_never_sampled() {
        let mut t = SumTree::new();
        t.push(0.0);
        t.push(5.0);
        t.push(0.0);
        for i in 0..100 {
            let u = i as f64 / 100.0;
            assert_eq!(t.sample(u), 1);
        }
    }

    #[test]
    fn exact_totals_for_equal_unit_masses() {
        let mut t = SumTree::new();
        for _ in 0..300 {
            t.push(1.0);
        }
        assert_eq!(t.total(), 300.0);
    }
}
