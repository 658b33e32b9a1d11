/// Binary indexed tree over non-negative weights that supports appends,
/// point updates, `swap_remove`, and drawing an index proportionally to its
/// weight.
#[derive(Debug, Clone, Default)]
pub(crate) struct Fenwick {
    values: Vec<f64>,
    tree: Vec<f64>,
}

#[inline]
fn lowbit(i: usize) -> usize {
    i & i.wrapping_neg()
}

impl Fenwick {
    pub fn from_values(values: Vec<f64>) -> Self {
        let mut tree = values.clone();
        for i in 1..=tree.len() {
            let parent = i + lowbit(i);
            if parent <= tree.len() {
                tree[parent - 1] += tree[i - 1];
            }
        }
        Self { values, tree }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn push(&mut self, value: f64) {
        let i = self.values.len() + 1;
        let mut node = value;
        let mut j = i - 1;
        let stop = i - lowbit(i);
        while j > stop {
            node += self.tree[j - 1];
            j -= lowbit(j);
        }
        self.values.push(value);
        self.tree.push(node);
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let delta = value - self.values[i];
        self.values[i] = value;
        let mut k = i + 1;
        while k <= self.tree.len() {
            self.tree[k - 1] += delta;
            k += lowbit(k);
        }
    }

    /// Removes entry `i`, moving the last entry into its place.
    pub fn swap_remove(&mut self, i: usize) -> f64 {
        let last = self.values.len() - 1;
        let removed = self.values[i];
        if i != last {
            let moved = self.values[last];
            self.set(i, moved);
        }
        self.values.pop();
        self.tree.pop();
        removed
    }

    pub fn total(&self) -> f64 {
        let mut sum = 0.0;
        let mut k = self.tree.len();
        while k > 0 {
            sum += self.tree[k - 1];
            k -= lowbit(k);
        }
        sum
    }

    /// Index `i` with `prefix(i) <= u < prefix(i + 1)`, skipping zero weights
    /// that round-off might land on.
    pub fn find(&self, u: f64) -> usize {
        let n = self.tree.len();
        let mut pos = 0;
        let mut rem = u;
        let mut step = if n == 0 { 0 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next - 1] <= rem {
                pos = next;
                rem -= self.tree[next - 1];
            }
            step >>= 1;
        }
        let mut i = pos.min(n - 1);
        if self.values[i] == 0.0 {
            if let Some(j) = (0..i).rev().find(|&j| self.values[j] > 0.0) {
                i = j;
            } else if let Some(j) = (i + 1..n).find(|&j| self.values[j] > 0.0) {
                i = j;
            }
        }
        i
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prefix(values: &[f64], i: usize) -> f64 {
        values[..i].iter().sum()
    }

    #[test]
    fn push_set_remove_keep_sums() {
        let mut f = Fenwick::default();
        let mut plain = Vec::new();
        for k in 0..37 {
            let v = (k * 7 % 5) as f64 + 0.5;
            f.push(v);
            plain.push(v);
        }
        f.set(3, 10.0);
        plain[3] = 10.0;
        f.swap_remove(5);
        plain.swap_remove(5);
        f.swap_remove(plain.len() - 1);
        plain.pop();
        assert!((f.total() - plain.iter().sum::<f64>()).abs() < 1e-12);
        let rebuilt = Fenwick::from_values(plain.clone());
        for i in 0..plain.len() {
            assert!((rebuilt.tree[i] - f.tree[i]).abs() < 1e-12);
        }
        for i in 0..plain.len() {
            let u = prefix(&plain, i) + 0.25 * plain[i];
            assert_eq!(f.find(u), i);
        }
    }

    #[test]
    fn find_skips_zero_weights() {
        let f = Fenwick::from_values(vec![0.0, 2.0, 0.0, 0.0]);
        assert_eq!(f.find(0.0), 1);
        assert_eq!(f.find(1.999), 1);
        assert_eq!(f.find(2.0), 1);
    }
}
