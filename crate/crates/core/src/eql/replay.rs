//! Proportional prioritized experience replay over a ring buffer.

use rand::Rng;

use crate::{Error, Result};

/// Binary tree holding sums and maxima of leaf priorities.
#[derive(Debug, Clone)]
struct SumTree {
    leaves: usize,
    sum: Vec<f64>,
    max: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> Self {
        let leaves = capacity.next_power_of_two();
        SumTree {
            leaves,
            sum: vec![0.0; 2 * leaves],
            max: vec![0.0; 2 * leaves],
        }
    }

    fn set(&mut self, i: usize, value: f64) {
        let mut node = i + self.leaves;
        self.sum[node] = value;
        self.max[node] = value;
        while node > 1 {
            node /= 2;
            self.sum[node] = self.sum[2 * node] + self.sum[2 * node + 1];
            self.max[node] = self.max[2 * node].max(self.max[2 * node + 1]);
        }
    }

    fn get(&self, i: usize) -> f64 {
        self.sum[i + self.leaves]
    }

    fn total(&self) -> f64 {
        self.sum[1]
    }

    fn max(&self) -> f64 {
        self.max[1]
    }

    /// Leaf whose cumulative range contains `mass`.
    fn find(&self, mut mass: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = 2 * node;
            if mass < self.sum[left] || self.sum[left + 1] == 0.0 {
                node = left;
            } else {
                mass -= self.sum[left];
                node = left + 1;
            }
        }
        node - self.leaves
    }
}

#[derive(Debug, Clone)]
pub struct ReplaySample<'a, T> {
    pub indices: Vec<usize>,
    pub items: Vec<&'a T>,
    /// Importance weights normalized by the batch maximum.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PrioritizedReplay<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
    /// Raw priorities (before the alpha exponent); the tree stores p^alpha.
    priorities: Vec<f64>,
    tree: SumTree,
    pub alpha: f64,
    pub priority_eps: f64,
}

impl<T> PrioritizedReplay<T> {
    pub fn new(capacity: usize, alpha: f64, priority_eps: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if !(priority_eps > 0.0) {
            return Err(Error::Config(format!("priority floor must be > 0, got {priority_eps}")));
        }
        Ok(PrioritizedReplay {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            priorities: vec![0.0; capacity],
            tree: SumTree::new(capacity),
            alpha,
            priority_eps,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    pub fn priority(&self, i: usize) -> f64 {
        self.priorities[i]
    }

    /// Largest priority currently stored, or 1 for an empty buffer.
    pub fn max_priority(&self) -> f64 {
        self.priorities[..self.items.len()]
            .iter()
            .copied()
            .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p))))
            .unwrap_or(1.0)
    }

    /// Stores `item` with the current maximum priority, evicting the oldest
    /// entry when full. Returns the slot used.
    pub fn push(&mut self, item: T) -> usize {
        let p = if self.items.is_empty() {
            1.0
        } else {
            // max of p^alpha is monotone in p
            let m = self.tree.max();
            if self.alpha > 0.0 {
                m.powf(1.0 / self.alpha)
            } else {
                self.max_priority()
            }
        };
        let slot = self.next;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[slot] = item;
        }
        self.set_priority(slot, p);
        self.next = (self.next + 1) % self.capacity;
        slot
    }

    fn set_priority(&mut self, i: usize, p: f64) {
        self.priorities[i] = p;
        self.tree.set(i, p.powf(self.alpha));
    }

    /// Stratified proportional sample of `batch` entries.
    pub fn sample(&self, batch: usize, beta: f64, rng: &mut impl Rng) -> Result<ReplaySample<'_, T>> {
        let n = self.items.len();
        if batch == 0 || n < batch {
            return Err(Error::Contract(format!(
                "cannot sample {batch} transitions from a buffer holding {n}"
            )));
        }
        let total = self.tree.total();
        let segment = total / batch as f64;
        let mut indices = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for k in 0..batch {
            let mass = segment * (k as f64 + rng.random::<f64>());
            let mut i = self.tree.find(mass.min(total * (1.0 - 1e-15)));
            if i >= n {
                i = n - 1;
            }
            let prob = self.tree.get(i) / total;
            weights.push((n as f64 * prob).powf(-beta));
            indices.push(i);
        }
        let wmax = weights.iter().copied().fold(0.0f64, f64::max);
        weights.iter_mut().for_each(|w| *w /= wmax);
        let items = indices.iter().map(|&i| &self.items[i]).collect();
        Ok(ReplaySample {
            indices,
            items,
            weights,
        })
    }

    /// Sets priorities from absolute TD errors.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) -> Result<()> {
        if indices.len() != td_errors.len() {
            return Err(Error::Contract("indices and errors differ in length".into()));
        }
        for (&i, &e) in indices.iter().zip(td_errors) {
            if i >= self.items.len() {
                return Err(Error::Contract(format!("replay index {i} out of range")));
            }
            let p = if e.is_finite() { e.abs() } else { 0.0 } + self.priority_eps;
            self.set_priority(i, p);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_eviction() {
        let mut r = PrioritizedReplay::new(3, 0.6, 1e-3).unwrap();
        for i in 0..5 {
            r.push(i);
        }
        let mut held: Vec<i32> = (0..3).map(|i| *r.get(i).unwrap()).collect();
        held.sort();
        assert_eq!(held, vec![2, 3, 4]);
    }

    #[test]
    fn equal_priorities_give_unit_weights() {
        let mut r = PrioritizedReplay::new(10, 0.6, 1e-3).unwrap();
        for i in 0..10 {
            r.push(i);
        }
        let mut rng = crate::seed::rng(1);
        let s = r.sample(5, 0.4, &mut rng).unwrap();
        assert!(s.weights.iter().all(|w| (*w - 1.0).abs() < 1e-12));
    }

    #[test]
    fn underfilled_sample_fails() {
        let mut r = PrioritizedReplay::new(10, 0.6, 1e-3).unwrap();
        r.push(1);
        let mut rng = crate::seed::rng(1);
        assert!(r.sample(2, 0.4, &mut rng).is_err());
    }
}
