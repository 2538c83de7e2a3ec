use crate::rng::{domain, stream};
use rand_distr::{Distribution, StandardNormal};
use std::collections::BTreeMap;

/// Online binary-tree prefix sums with Gaussian node noise.
///
/// Node `(level, k)` covers rounds `k·2^level + 1 ..= (k+1)·2^level`. The
/// prefix `[1, t]` is the disjoint union of one node per set bit of `t`,
/// the node for bit `l` being `(l, (t >> l) − 1)`. Each node's noise is
/// drawn once from its own seeded stream and reused by every prefix that
/// contains it; nodes that no later prefix can use are dropped.
#[derive(Debug, Clone)]
pub struct TreeAggregator {
    dim: usize,
    sigma: f64,
    seed: u64,
    rounds: u64,
    exact: Vec<f64>,
    nodes: BTreeMap<(u32, u64), Vec<f64>>,
}

impl TreeAggregator {
    pub fn new(dim: usize, sigma: f64, seed: u64) -> Self {
        TreeAggregator {
            dim,
            sigma,
            seed,
            rounds: 0,
            exact: vec![0.0; dim],
            nodes: BTreeMap::new(),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Nodes making up the prefix `[1, t]`, lowest level first.
    pub fn cover(t: u64) -> Vec<(u32, u64)> {
        (0..64)
            .filter(|l| t >> l & 1 == 1)
            .map(|l| (l, (t >> l) - 1))
            .collect()
    }

    /// Nodes currently held, with their noise vectors.
    pub fn live_nodes(&self) -> impl Iterator<Item = ((u32, u64), &[f64])> {
        self.nodes.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn node_noise(&self, level: u32, index: u64) -> Option<&[f64]> {
        self.nodes.get(&(level, index)).map(|v| v.as_slice())
    }

    fn sample(&self, level: u32, index: u64) -> Vec<f64> {
        let mut rng = stream(self.seed, &[domain::TREE_NODE, level as u64, index]);
        (0..self.dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                self.sigma * z
            })
            .collect()
    }

    /// Adds round `t = rounds + 1`'s input and returns the noisy prefix
    /// sum `Pᵗ`. With σ = 0 this is the exact prefix sum.
    pub fn push(&mut self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "input dimension");
        self.rounds += 1;
        let t = self.rounds;
        for (s, v) in self.exact.iter_mut().zip(x) {
            *s += v;
        }
        let cover = Self::cover(t);
        if self.sigma > 0.0 {
            self.nodes.retain(|k, _| cover.contains(k));
            for &(l, k) in &cover {
                if !self.nodes.contains_key(&(l, k)) {
                    let n = self.sample(l, k);
                    self.nodes.insert((l, k), n);
                }
            }
        }
        let mut out = self.exact.clone();
        if self.sigma > 0.0 {
            // Highest level first, matching the order rounds are covered.
            for key in cover.iter().rev() {
                for (o, n) in out.iter_mut().zip(&self.nodes[key]) {
                    *o += n;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cover_matches_binary_decomposition() {
        assert_eq!(TreeAggregator::cover(4), vec![(2, 0)]);
        assert_eq!(TreeAggregator::cover(5), vec![(0, 4), (2, 0)]);
        assert_eq!(TreeAggregator::cover(7), vec![(0, 6), (1, 2), (2, 0)]);
        for t in 1..200u64 {
            let c = TreeAggregator::cover(t);
            assert_eq!(c.len(), t.count_ones() as usize);
            // Nodes tile [1, t] exactly.
            let mut covered: Vec<u64> = c
                .iter()
                .flat_map(|&(l, k)| (k << l) + 1..=(k + 1) << l)
                .collect();
            covered.sort_unstable();
            assert_eq!(covered, (1..=t).collect::<Vec<_>>());
        }
    }

    #[test]
    fn zero_sigma_is_exact() {
        let mut tree = TreeAggregator::new(2, 0.0, 1);
        let mut sum = [0.0, 0.0];
        for t in 1..20 {
            let x = [t as f64 * 0.1, -1.0];
            sum[0] += x[0];
            sum[1] += x[1];
            assert_eq!(tree.push(&x), sum.to_vec());
        }
        assert_eq!(tree.live_nodes().count(), 0);
    }

    #[test]
    fn live_nodes_stay_logarithmic() {
        let mut tree = TreeAggregator::new(1, 1.0, 1);
        for t in 1..=300u64 {
            tree.push(&[0.0]);
            let bound = (t as f64).log2().ceil() as usize + 1;
            assert_eq!(tree.live_nodes().count(), t.count_ones() as usize);
            assert!(tree.live_nodes().count() <= bound);
        }
    }
}
