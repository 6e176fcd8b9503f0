//! Configurations of the mean-field Potts and random-cluster models, their
//! cluster decomposition, and the bottleneck statistics built on top of it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Parameters `(n, q, lambda)` of the mean-field model.
///
/// The edge probability is `p = lambda / n` and the Potts inverse temperature
/// `beta` is the value with `lambda / n = 1 - exp(-beta / n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    n: usize,
    q: f64,
    lambda: f64,
}

impl ModelParams {
    pub fn new(n: usize, q: f64, lambda: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "vertex count must be positive"));
        }
        if !(q.is_finite() && q >= 1.0) {
            return Err(invalid("q", format!("cluster weight must be >= 1, got {q}")));
        }
        if !(lambda.is_finite() && lambda > 0.0 && lambda < n as f64) {
            return Err(invalid(
                "lambda",
                format!("need 0 < lambda < n = {n}, got {lambda}"),
            ));
        }
        Ok(Self { n, q, lambda })
    }

    /// Builds the parameters from the Potts inverse temperature.
    pub fn from_beta(n: usize, q: f64, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(invalid("beta", format!("must be positive, got {beta}")));
        }
        Self::new(n, q, lambda_from_beta(n, beta))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn p(&self) -> f64 {
        self.lambda / self.n as f64
    }

    pub fn beta(&self) -> f64 {
        -(self.n as f64) * (-self.p()).ln_1p()
    }

    /// `q` as a color count, for operations that only make sense for integer `q`.
    pub fn q_int(&self, what: &'static str) -> Result<usize> {
        q_as_int(self.q).ok_or(Error::NonIntegerQ(what))
    }
}

/// `lambda = n (1 - exp(-beta / n))`.
pub fn lambda_from_beta(n: usize, beta: f64) -> f64 {
    -(n as f64) * (-beta / n as f64).exp_m1()
}

pub(crate) fn q_as_int(q: f64) -> Option<usize> {
    if q >= 1.0 && q.fract() == 0.0 && q < u32::MAX as f64 {
        Some(q as usize)
    } else {
        None
    }
}

/// A Potts coloring. Colors are stored 0-based, `0..q`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    colors: Vec<usize>,
    counts: Vec<usize>,
}

impl SpinConfig {
    pub fn new(colors: Vec<usize>, q: usize) -> Result<Self> {
        if q == 0 {
            return Err(invalid("q", "need at least one color"));
        }
        let mut counts = vec![0; q];
        for &c in &colors {
            if c >= q {
                return Err(invalid("colors", format!("color {c} out of range 0..{q}")));
            }
            counts[c] += 1;
        }
        Ok(Self { colors, counts })
    }

    /// Every vertex gets color 0.
    pub fn monochromatic(n: usize, q: usize) -> Self {
        let mut counts = vec![0; q.max(1)];
        counts[0] = n;
        Self {
            colors: vec![0; n],
            counts,
        }
    }

    /// A coloring with the given class sizes, assigned in contiguous blocks.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let mut colors = Vec::with_capacity(counts.iter().sum());
        for (c, &k) in counts.iter().enumerate() {
            colors.extend(std::iter::repeat_n(c, k));
        }
        Self::new(colors, counts.len())
    }

    pub fn n(&self) -> usize {
        self.colors.len()
    }

    pub fn q(&self) -> usize {
        self.counts.len()
    }

    pub fn colors(&self) -> &[usize] {
        &self.colors
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Color-class sizes in non-increasing order.
    pub fn sorted_counts(&self) -> Vec<usize> {
        let mut v = self.counts.clone();
        v.sort_unstable_by(|a, b| b.cmp(a));
        v
    }

    /// Vertices of each color class, each list ascending.
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut classes: Vec<Vec<usize>> =
            self.counts.iter().map(|&k| Vec::with_capacity(k)).collect();
        for (v, &c) in self.colors.iter().enumerate() {
            classes[c].push(v);
        }
        classes
    }
}

/// Class sizes for `n` vertices: `first` in class 0 and the rest split as
/// evenly as possible over the other `q - 1` classes (lower labels get the
/// remainder). With `first = None` all `q` classes are balanced.
pub fn split_counts(n: usize, q: usize, first: Option<usize>) -> Vec<usize> {
    let even = |total: usize, parts: usize| -> Vec<usize> {
        (0..parts)
            .map(|i| total / parts + usize::from(i < total % parts))
            .collect()
    };
    match first {
        None => even(n, q),
        Some(v1) => {
            let v1 = v1.min(n);
            let mut counts = vec![v1];
            counts.extend(even(n - v1, q - 1));
            counts
        }
    }
}

/// Number of unordered pairs on `n` vertices.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Index of the pair `(i, j)`, `i < j`, in lexicographic pair order.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Inverse of [`pair_index`].
pub fn pair_from_index(n: usize, mut k: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = n - 1 - i;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
        i += 1;
    }
}

/// An FK edge configuration on `n` vertices: a set of pairs `(i, j)` with
/// `i < j < n`, kept sorted in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EdgeConfig {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl EdgeConfig {
    pub fn empty(n: usize) -> Self {
        Self { n, edges: Vec::new() }
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Self { n, edges }
    }

    /// Validates the pairs; order of `pairs` and orientation of each pair are
    /// irrelevant, but self-loops, duplicates and out-of-range endpoints are
    /// rejected.
    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut edges = Vec::new();
        for (a, b) in pairs {
            if a == b {
                return Err(invalid("edges", format!("self-loop at vertex {a}")));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if j >= n {
                return Err(invalid("edges", format!("endpoint {j} out of range 0..{n}")));
            }
            edges.push((i, j));
        }
        edges.sort_unstable();
        if let Some(w) = edges.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid("edges", format!("duplicate pair {:?}", w[0])));
        }
        Ok(Self { n, edges })
    }

    /// Caller guarantees the pairs are valid and unique; they are sorted here.
    pub(crate) fn from_unique_pairs(n: usize, mut edges: Vec<(usize, usize)>) -> Self {
        edges.sort_unstable();
        debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(edges.iter().all(|&(i, j)| i < j && j < n));
        Self { n, edges }
    }

    /// Decodes a configuration from its bit mask over pairs in lexicographic
    /// order (bit `k` is the pair with [`pair_index`] `k`).
    pub fn from_mask(n: usize, mask: u64) -> Self {
        let mut edges = Vec::new();
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                if mask >> k & 1 == 1 {
                    edges.push((i, j));
                }
                k += 1;
            }
        }
        Self { n, edges }
    }

    /// Bit mask encoding; only defined for `n <= 11` (at most 55 pairs).
    pub fn to_mask(&self) -> u64 {
        assert!(pair_count(self.n) <= 64, "mask encoding needs at most 64 pairs");
        self.edges
            .iter()
            .fold(0u64, |m, &(i, j)| m | 1 << pair_index(self.n, i, j))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let key = if i < j { (i, j) } else { (j, i) };
        self.edges.binary_search(&key).is_ok()
    }

    /// Sets the state of one pair; returns whether the configuration changed.
    pub fn set(&mut self, i: usize, j: usize, present: bool) -> bool {
        let key = if i < j { (i, j) } else { (j, i) };
        match (self.edges.binary_search(&key), present) {
            (Ok(pos), false) => {
                self.edges.remove(pos);
                true
            }
            (Err(pos), true) => {
                self.edges.insert(pos, key);
                true
            }
            _ => false,
        }
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            let up = self.parent[self.parent[x]];
            self.parent[x] = up;
            x = up;
        }
        x
    }

    /// Returns `true` if `x` and `y` were in different sets.
    pub fn union(&mut self, x: usize, y: usize) -> bool {
        let (mut a, mut b) = (self.find(x), self.find(y));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }

    pub fn connected(&mut self, x: usize, y: usize) -> bool {
        self.find(x) == self.find(y)
    }

    pub fn set_size(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }
}

/// One connected component: its canonical id (smallest member) and size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cluster {
    pub id: usize,
    pub size: usize,
}

/// Connected-component decomposition of an [`EdgeConfig`].
///
/// Every cluster is labelled by its smallest vertex. `clusters` is ordered by
/// size, largest first, ties broken by the smaller id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterPartition {
    assignment: Vec<usize>,
    clusters: Vec<Cluster>,
}

impl ClusterPartition {
    /// Builds the partition from a union-find over `n` vertices.
    pub fn from_union_find(uf: &mut UnionFind) -> Self {
        let n = uf.parent.len();
        let mut label = vec![usize::MAX; n];
        let mut assignment = vec![0; n];
        let mut size = vec![0usize; n];
        for v in 0..n {
            let r = uf.find(v);
            if label[r] == usize::MAX {
                label[r] = v;
            }
            assignment[v] = label[r];
            size[label[r]] += 1;
        }
        let mut clusters: Vec<Cluster> = (0..n)
            .filter(|&v| size[v] > 0)
            .map(|v| Cluster { id: v, size: size[v] })
            .collect();
        clusters.sort_by(|a, b| b.size.cmp(&a.size).then(a.id.cmp(&b.id)));
        Self {
            assignment,
            clusters,
        }
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    /// Cluster id of every vertex.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, v: usize) -> usize {
        self.assignment[v]
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    /// `L_1 >= L_2 >= ...`
    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.size).collect()
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    /// The largest cluster (smallest id among equal sizes); `None` when `n = 0`.
    pub fn largest(&self) -> Option<Cluster> {
        self.clusters.first().copied()
    }

    pub fn largest_size(&self) -> usize {
        self.largest().map_or(0, |c| c.size)
    }

    /// Size of the cluster containing `v`.
    pub fn size_of(&self, v: usize) -> usize {
        let id = self.assignment[v];
        self.clusters
            .iter()
            .find(|c| c.id == id)
            .map_or(0, |c| c.size)
    }

    /// Cluster ids in ascending order: the canonical order in which per-cluster
    /// random draws are made.
    pub fn ids_ascending(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.clusters.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        ids
    }
}

/// Connected components of `edges`.
pub fn cluster_decompose(edges: &EdgeConfig) -> ClusterPartition {
    let mut uf = UnionFind::new(edges.n());
    for &(i, j) in edges.edges() {
        uf.union(i, j);
    }
    ClusterPartition::from_union_find(&mut uf)
}

/// `|S_M|`: number of vertices whose cluster has more than `m` vertices.
pub fn s_m_vertices(partition: &ClusterPartition, m: usize) -> usize {
    partition
        .clusters()
        .iter()
        .filter(|c| c.size > m)
        .map(|c| c.size)
        .sum()
}

/// `|S_M - C_1|`: as [`s_m_vertices`] but without the largest cluster.
pub fn s_m_minus_giant(partition: &ClusterPartition, m: usize) -> usize {
    let total = s_m_vertices(partition, m);
    match partition.largest() {
        Some(c) if c.size > m => total - c.size,
        _ => total,
    }
}

/// Membership in the balanced set: every color class within (strictly less
/// than) `rho * n` of `n / q`.
pub fn in_balanced_set(spin: &SpinConfig, rho: f64) -> bool {
    let n = spin.n() as f64;
    let target = n / spin.q() as f64;
    spin.counts()
        .iter()
        .all(|&c| (c as f64 - target).abs() < rho * n)
}

/// Membership in the ordered set around `a_lambda`: with sorted counts
/// `v1 >= v2 >= ...`, `|v1 - a n| <= rho n` and `v2 <= (n - v1)/(q - 1) + rho n`.
pub fn in_ordered_set(spin: &SpinConfig, rho: f64, a_lambda: f64) -> bool {
    let n = spin.n() as f64;
    let q = spin.q();
    let sorted = spin.sorted_counts();
    let v1 = sorted[0] as f64;
    let v2 = sorted.get(1).copied().unwrap_or(0) as f64;
    let tail_mean = if q > 1 { (n - v1) / (q - 1) as f64 } else { 0.0 };
    (v1 - a_lambda * n).abs() <= rho * n && v2 <= tail_mean + rho * n
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn partition_of(n: usize, pairs: &[(usize, usize)]) -> ClusterPartition {
        cluster_decompose(&EdgeConfig::from_pairs(n, pairs.iter().copied()).unwrap())
    }

    #[test]
    fn params_round_trip_beta() {
        for &(n, lambda) in &[(10, 2.5), (1000, 2.7726), (100_000, 0.5), (3, 2.9)] {
            let p = ModelParams::new(n, 3.0, lambda).unwrap();
            let back = lambda_from_beta(n, p.beta());
            assert!(((back - lambda) / lambda).abs() < 1e-12, "{n} {lambda} {back}");
            assert!(p.p() > 0.0 && p.p() < 1.0 && p.beta() > 0.0);
        }
    }

    #[test]
    fn params_reject_bad_values() {
        assert!(ModelParams::new(0, 3.0, 1.0).is_err());
        assert!(ModelParams::new(10, 0.5, 1.0).is_err());
        assert!(ModelParams::new(10, 3.0, 10.0).is_err());
        assert!(ModelParams::new(10, 3.0, 0.0).is_err());
        let p = ModelParams::new(10, 2.5, 1.0).unwrap();
        assert!(matches!(p.q_int("sw"), Err(Error::NonIntegerQ("sw"))));
        assert_eq!(ModelParams::new(10, 3.0, 1.0).unwrap().q_int("sw").unwrap(), 3);
    }

    #[test]
    fn beta_conversion_matches_hand_value() {
        // 1000 * (1 - exp(-0.002773))
        let l = lambda_from_beta(1000, 2.773);
        assert!((l - 2.769160).abs() < 1e-5, "{l}");
    }

    #[test]
    fn pair_indexing_is_lexicographic() {
        let n = 7;
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                assert_eq!(pair_index(n, i, j), k);
                assert_eq!(pair_from_index(n, k), (i, j));
                k += 1;
            }
        }
        assert_eq!(k, pair_count(n));
    }

    #[test]
    fn edge_config_validation() {
        assert!(EdgeConfig::from_pairs(4, [(1, 1)]).is_err());
        assert!(EdgeConfig::from_pairs(4, [(0, 4)]).is_err());
        assert!(EdgeConfig::from_pairs(4, [(0, 1), (1, 0)]).is_err());
        let e = EdgeConfig::from_pairs(4, [(2, 1), (0, 3)]).unwrap();
        assert_eq!(e.edges(), &[(0, 3), (1, 2)]);
        assert_eq!(EdgeConfig::from_mask(4, e.to_mask()), e);
    }

    #[test]
    fn edge_set_toggles() {
        let mut e = EdgeConfig::empty(5);
        assert!(e.set(3, 1, true));
        assert!(!e.set(1, 3, true));
        assert!(e.contains(1, 3));
        assert!(e.set(1, 3, false));
        assert!(e.is_empty());
    }

    #[test]
    fn decompose_examples() {
        let empty = partition_of(4, &[]);
        assert_eq!(empty.sizes(), vec![1, 1, 1, 1]);
        assert_eq!(empty.cluster_count(), 4);

        let all: Vec<_> = EdgeConfig::complete(4).edges().to_vec();
        assert_eq!(partition_of(4, &all).sizes(), vec![4]);

        let path = partition_of(4, &[(0, 1), (1, 2)]);
        assert_eq!(path.sizes(), vec![3, 1]);
        assert_eq!(path.cluster_of(3), 3);
        assert_eq!(path.assignment(), &[0, 0, 0, 3]);
    }

    #[test]
    fn largest_cluster_tie_break_uses_smallest_vertex() {
        let p = partition_of(4, &[(2, 3), (0, 1)]);
        assert_eq!(p.largest(), Some(Cluster { id: 0, size: 2 }));
        let p = partition_of(5, &[(3, 4), (1, 2)]);
        assert_eq!(p.largest().unwrap().id, 1);
    }

    #[test]
    fn s_m_examples() {
        let p = partition_of(4, &[(0, 1), (1, 2)]);
        assert_eq!(s_m_vertices(&p, 2), 3);
        assert_eq!(s_m_vertices(&p, 4), 0);
        assert_eq!(s_m_vertices(&p, 0), 4);

        // sizes (5, 3, 1)
        let p = partition_of(9, &[(0, 1), (1, 2), (2, 3), (3, 4), (5, 6), (6, 7)]);
        assert_eq!(p.sizes(), vec![5, 3, 1]);
        assert_eq!(s_m_minus_giant(&p, 2), 3);
        assert_eq!(s_m_minus_giant(&p, 6), 0);

        let p = partition_of(4, &[(0, 1), (2, 3)]);
        assert_eq!(s_m_minus_giant(&p, 1), 2);
    }

    #[test]
    fn balanced_set_examples() {
        let s = SpinConfig::from_counts(&[3, 3, 3]).unwrap();
        assert!(in_balanced_set(&s, 0.1));
        let s = SpinConfig::from_counts(&[5, 2, 2]).unwrap();
        assert!(!in_balanced_set(&s, 0.1));
        let s = SpinConfig::from_counts(&[26, 25, 25, 24]).unwrap();
        assert!(in_balanced_set(&s, 0.02));
    }

    #[test]
    fn ordered_set_examples() {
        let a = 2.0 / 3.0;
        assert!(in_ordered_set(&SpinConfig::from_counts(&[15, 60, 15]).unwrap(), 0.05, a));
        assert!(!in_ordered_set(&SpinConfig::from_counts(&[30, 30, 30]).unwrap(), 0.05, a));
        assert!(!in_ordered_set(&SpinConfig::from_counts(&[60, 25, 5]).unwrap(), 0.05, a));
    }

    #[test]
    fn split_counts_distributes_remainder() {
        assert_eq!(split_counts(10, 3, None), vec![4, 3, 3]);
        assert_eq!(split_counts(10, 3, Some(6)), vec![6, 2, 2]);
        assert_eq!(split_counts(11, 3, Some(6)), vec![6, 3, 2]);
    }

    fn edge_list(n: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        proptest::sample::subsequence(pairs.clone(), 0..=pairs.len())
    }

    proptest! {
        #[test]
        fn decompose_ignores_edge_order(edges in edge_list(9), seed in any::<u64>()) {
            let n = 9;
            let base = partition_of(n, &edges);
            let mut shuffled = edges.clone();
            // deterministic Fisher-Yates from the proptest seed
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            let flipped: Vec<_> = shuffled.iter().map(|&(i, j)| (j, i)).collect();
            prop_assert_eq!(&partition_of(n, &flipped), &base);
        }

        #[test]
        fn decompose_matches_connectivity(edges in edge_list(8)) {
            let n = 8;
            let p = partition_of(n, &edges);
            prop_assert_eq!(p.sizes().iter().sum::<usize>(), n);
            prop_assert_eq!(p.sizes()[0], p.largest_size());
            // reachability by repeated relaxation
            let mut reach = vec![vec![false; n]; n];
            for (v, row) in reach.iter_mut().enumerate() { row[v] = true; }
            for _ in 0..n {
                for &(i, j) in &edges {
                    for row in reach.iter_mut() {
                        if row[i] || row[j] { row[i] = true; row[j] = true; }
                    }
                }
            }
            for x in 0..n {
                for y in 0..n {
                    prop_assert_eq!(p.cluster_of(x) == p.cluster_of(y), reach[x][y]);
                }
            }
        }

        #[test]
        fn s_m_monotone_and_bounded(edges in edge_list(9)) {
            let n = 9;
            let p = partition_of(n, &edges);
            prop_assert_eq!(s_m_vertices(&p, 0), n);
            let mut prev = n;
            for m in 0..=n + 1 {
                let s = s_m_vertices(&p, m);
                prop_assert!(s <= prev);
                prop_assert!(s_m_minus_giant(&p, m) <= s);
                prev = s;
            }
            prop_assert_eq!(s_m_vertices(&p, n), 0);
        }

        #[test]
        fn balanced_set_ignores_color_labels(
            counts in proptest::collection::vec(0usize..30, 2..6),
            rho in 0.0f64..0.5,
            rot in 0usize..6,
        ) {
            prop_assume!(counts.iter().sum::<usize>() > 0);
            let base = SpinConfig::from_counts(&counts).unwrap();
            let mut permuted = counts.clone();
            let len = permuted.len();
            permuted.rotate_left(rot % len);
            permuted.reverse();
            let other = SpinConfig::from_counts(&permuted).unwrap();
            prop_assert_eq!(in_balanced_set(&base, rho), in_balanced_set(&other, rho));
        }
    }
}
