use serde::{Deserialize, Serialize};

use super::neumaier_sum;
use crate::error::{invalid, Error, Result};
use crate::model::{pair_count, pair_from_index, ModelParams, SpinConfig, UnionFind};

pub const MAX_FK_N: usize = 7;
pub const MAX_POTTS_STATES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateSpace {
    /// All edge subsets of the complete graph on `n` vertices.
    Edges { n: usize },
    /// All `q^n` colorings.
    Spins { n: usize, q: usize },
}

impl StateSpace {
    pub fn len(&self) -> usize {
        match *self {
            Self::Edges { n } => 1usize << pair_count(n),
            Self::Spins { n, q } => q.pow(n as u32),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n(&self) -> usize {
        match *self {
            Self::Edges { n } | Self::Spins { n, .. } => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureTable {
    space: StateSpace,
    probs: Vec<f64>,
    log_partition: f64,
}

impl MeasureTable {
    /// Normalizes log-weights against their maximum.
    fn from_log_weights(space: StateSpace, logw: Vec<f64>) -> Result<Self> {
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::DegenerateRegime("all weights vanish".into()));
        }
        let mut probs: Vec<f64> = logw.iter().map(|&l| (l - max).exp()).collect();
        let z = neumaier_sum(probs.iter().copied());
        for p in &mut probs {
            *p /= z;
        }
        Ok(Self {
            space,
            probs,
            log_partition: max + z.ln(),
        })
    }

    /// Table from explicit probabilities (non-negative, summing to 1 within
    /// `1e-12`).
    pub fn from_probs(space: StateSpace, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != space.len() {
            return Err(invalid("probs", format!("expected {} states, got {}", space.len(), probs.len())));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(invalid("probs", "entries must be non-negative"));
        }
        let total = neumaier_sum(probs.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("probs", format!("must sum to 1, got {total}")));
        }
        Ok(Self {
            space,
            probs,
            log_partition: 0.0,
        })
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, state: usize) -> f64 {
        self.probs[state]
    }

    /// Natural log of the normalizing constant of the unnormalized weights.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn total(&self) -> f64 {
        neumaier_sum(self.probs.iter().copied())
    }

    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// `count · ln(x)` with the convention `0 · ln 0 = 0`.
pub(crate) fn xlog(count: usize, ln_x: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        count as f64 * ln_x
    }
}

/// Number of connected components of the edge mask on `n` vertices.
pub fn mask_components(n: usize, mask: u64) -> usize {
    let mut uf = UnionFind::new(n);
    let mut k = n;
    let mut m = mask;
    while m != 0 {
        let bit = m.trailing_zeros() as usize;
        let (i, j) = pair_from_index(n, bit);
        if uf.union(i, j) {
            k -= 1;
        }
        m &= m - 1;
    }
    k
}

/// Random-cluster measure with edge probability `p` and cluster weight `q`
/// on the complete graph on `n ≤ 7` vertices.
pub fn fk_measure_with_p(n: usize, p: f64, q: f64) -> Result<MeasureTable> {
    if n > MAX_FK_N {
        return Err(Error::StateSpaceTooLarge(format!(
            "FK enumeration needs n <= {MAX_FK_N}, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid("p", format!("must lie in [0, 1], got {p}")));
    }
    if !(q >= 0.0) {
        return Err(invalid("q", format!("must be non-negative, got {q}")));
    }
    let pairs = pair_count(n);
    let (lp, l1p, lq) = (p.ln(), (-p).ln_1p(), q.ln());
    let space = StateSpace::Edges { n };
    let logw = (0..space.len() as u64)
        .map(|mask| {
            let e = mask.count_ones() as usize;
            xlog(e, lp) + xlog(pairs - e, l1p) + xlog(mask_components(n, mask), lq)
        })
        .collect();
    MeasureTable::from_log_weights(space, logw)
}

/// Exact `π_{n,λ,q}` over all edge subsets.
pub fn enumerate_fk_measure(n: usize, lambda: f64, q: f64) -> Result<MeasureTable> {
    let params = ModelParams::new(n, q, lambda)?;
    fk_measure_with_p(n, params.p(), q)
}

pub fn spin_index(spin: &SpinConfig) -> usize {
    spin.colors()
        .iter()
        .rev()
        .fold(0, |acc, &c| acc * spin.q() + c)
}

pub fn spin_from_index(n: usize, q: usize, mut index: usize) -> SpinConfig {
    let colors = (0..n)
        .map(|_| {
            let c = index % q;
            index /= q;
            c
        })
        .collect();
    SpinConfig::new(colors, q).expect("digits are below q")
}

/// Number of monochromatic pairs of the coloring encoded by `index`.
pub(crate) fn hamiltonian_of_index(n: usize, q: usize, mut index: usize) -> usize {
    let mut counts = vec![0usize; q];
    for _ in 0..n {
        counts[index % q] += 1;
        index /= q;
    }
    counts.iter().map(|&v| v * v.saturating_sub(1) / 2).sum()
}

/// Potts measure `μ(σ) ∝ exp((β/n) H(σ))` over all `q^n` colorings.
pub fn potts_measure_with_beta(n: usize, q: usize, beta: f64) -> Result<MeasureTable> {
    if q == 0 || n == 0 {
        return Err(invalid("n", "Potts enumeration needs n >= 1 and q >= 1"));
    }
    let states = (q as f64).powi(n as i32);
    if states > MAX_POTTS_STATES as f64 {
        return Err(Error::StateSpaceTooLarge(format!(
            "Potts enumeration needs q^n <= {MAX_POTTS_STATES}, got {q}^{n}"
        )));
    }
    let space = StateSpace::Spins { n, q };
    let scale = beta / n as f64;
    let logw = (0..space.len())
        .map(|s| scale * hamiltonian_of_index(n, q, s) as f64)
        .collect();
    MeasureTable::from_log_weights(space, logw)
}

/// Exact `μ_{n,β,q}` with `β = -n ln(1 - λ/n)`.
pub fn enumerate_potts_measure(n: usize, lambda: f64, q: usize) -> Result<MeasureTable> {
    let params = ModelParams::new(n, q as f64, lambda)?;
    potts_measure_with_beta(n, q, params.beta())
}
