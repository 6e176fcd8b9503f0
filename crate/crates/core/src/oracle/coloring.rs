//! Exact checks of the cluster-coloring identities: coloring clusters of an FK
//! sample splits it into independent FK samples with split cluster weights,
//! and the Edwards-Sokal coupling links the Potts and FK measures.
//!
//! All restricted measures keep the original edge probability `p = λ/n`.

use std::collections::HashMap;

use serde::Serialize;

use super::kernel::{cluster_masks, pair_list};
use super::measure::{fk_measure_with_p, MeasureTable};
use super::{enumerate_fk_measure, enumerate_potts_measure, neumaier_sum};
use crate::error::{invalid, Error, Result};
use crate::model::{pair_index, q_as_int, ModelParams};

pub const MAX_BGJ_N: usize = 5;
pub const MAX_ITERATED_N: usize = 4;
pub const MAX_ES_N: usize = 5;

/// Restriction of an edge mask to a vertex set, as a mask on the induced
/// complete graph with vertices relabelled in increasing order.
fn restrict(n: usize, pairs: &[(usize, usize)], omega: u64, vertices: u32) -> u64 {
    let m = vertices.count_ones() as usize;
    let mut local = vec![usize::MAX; n];
    let mut next = 0;
    for (v, slot) in local.iter_mut().enumerate() {
        if vertices >> v & 1 == 1 {
            *slot = next;
            next += 1;
        }
    }
    let mut out = 0u64;
    for (b, &(i, j)) in pairs.iter().enumerate() {
        if omega >> b & 1 == 1 && vertices >> i & 1 == 1 && vertices >> j & 1 == 1 {
            out |= 1 << pair_index(m, local[i], local[j]);
        }
    }
    out
}

/// TV distance between a sparse conditional law over tuples of local masks and
/// the product of `targets`.
fn tv_to_product(cond: &HashMap<Vec<u64>, f64>, total: f64, targets: &[&MeasureTable]) -> f64 {
    let mut diff = Vec::with_capacity(cond.len());
    let mut covered = Vec::with_capacity(cond.len());
    for (key, &w) in cond {
        let t: f64 = key.iter().zip(targets).map(|(&s, m)| m.prob(s as usize)).product();
        diff.push((w / total - t).abs());
        covered.push(t);
    }
    // tuples missing from `cond` contribute their full target mass
    let missing = (1.0 - neumaier_sum(covered)).max(0.0);
    0.5 * (neumaier_sum(diff) + missing)
}

fn tv_marginal(cond: &HashMap<Vec<u64>, f64>, total: f64, slot: usize, target: &MeasureTable) -> f64 {
    let mut law = vec![0.0; target.len()];
    for (key, &w) in cond {
        law[key[slot] as usize] += w / total;
    }
    super::total_variation(&law, target.probs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColoringDeviation {
    /// Worst TV distance of `ω↾R` from `π_{|R|,p,αq}`.
    pub red: f64,
    /// Worst TV distance of `ω↾(V−R)` from `π_{n−|R|,p,(1−α)q}`.
    pub rest: f64,
    /// Worst TV distance of the joint conditional law from the product.
    pub joint: f64,
}

impl ColoringDeviation {
    pub fn max(&self) -> f64 {
        self.red.max(self.rest).max(self.joint)
    }
}

/// Colors each cluster of `ω ~ π_{n,λ,q}` red with probability `α` and
/// compares, for every red vertex set `R`, the conditional laws of the two
/// restrictions with the split-weight FK measures.
pub fn bgj_coloring_check(n: usize, lambda: f64, q: f64, alpha: f64) -> Result<ColoringDeviation> {
    if n > MAX_BGJ_N {
        return Err(Error::StateSpaceTooLarge(format!("coloring check needs n <= {MAX_BGJ_N}, got {n}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid("alpha", format!("must lie in [0, 1], got {alpha}")));
    }
    let params = ModelParams::new(n, q, lambda)?;
    let p = params.p();
    let pi = enumerate_fk_measure(n, lambda, q)?;
    let pairs = pair_list(n);
    let full = (1u32 << n) - 1;

    let mut joint: HashMap<u32, HashMap<Vec<u64>, f64>> = HashMap::new();
    for omega in 0..pi.len() as u64 {
        let clusters = cluster_masks(n, &pairs, omega);
        let k = clusters.len();
        for chosen in 0u32..1 << k {
            let r = chosen.count_ones() as i32;
            let w = pi.prob(omega as usize) * alpha.powi(r) * (1.0 - alpha).powi(k as i32 - r);
            if w == 0.0 {
                continue;
            }
            let red = (0..k)
                .filter(|&c| chosen >> c & 1 == 1)
                .fold(0u32, |m, c| m | clusters[c]);
            let key = vec![
                restrict(n, &pairs, omega, red),
                restrict(n, &pairs, omega, full & !red),
            ];
            *joint.entry(red).or_default().entry(key).or_insert(0.0) += w;
        }
    }

    let mut dev = ColoringDeviation { red: 0.0, rest: 0.0, joint: 0.0 };
    for (red, cond) in &joint {
        let total = neumaier_sum(cond.values().copied());
        let m = red.count_ones() as usize;
        let red_law = fk_measure_with_p(m, p, alpha * q)?;
        let rest_law = fk_measure_with_p(n - m, p, (1.0 - alpha) * q)?;
        dev.red = dev.red.max(tv_marginal(cond, total, 0, &red_law));
        dev.rest = dev.rest.max(tv_marginal(cond, total, 1, &rest_law));
        dev.joint = dev.joint.max(tv_to_product(cond, total, &[&red_law, &rest_law]));
    }
    Ok(dev)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IteratedColoringDeviation {
    /// Worst TV distance of a single class restriction from its target.
    pub marginal: f64,
    /// Worst TV distance of the joint conditional law from the product of
    /// the targets.
    pub joint: f64,
    /// Probability that the remainder class `R_0` is non-empty.
    pub remainder_nonempty: f64,
}

impl IteratedColoringDeviation {
    pub fn max(&self) -> f64 {
        self.marginal.max(self.joint)
    }
}

/// Assigns every cluster to one of `⌊q⌋` unit-weight classes (probability
/// `1/q` each) or to the remainder class `R_0` (probability `(q−⌊q⌋)/q`), and
/// checks that given the partition the class restrictions are independent
/// with laws `π_{|R_i|,p,1}` and `π_{|R_0|,p,q−⌊q⌋}`.
pub fn iterated_coloring_check(n: usize, lambda: f64, q: f64) -> Result<IteratedColoringDeviation> {
    if n > MAX_ITERATED_N {
        return Err(Error::StateSpaceTooLarge(format!(
            "iterated coloring check needs n <= {MAX_ITERATED_N}, got {n}"
        )));
    }
    if !(q > 2.0) {
        return Err(invalid("q", format!("must exceed 2, got {q}")));
    }
    let params = ModelParams::new(n, q, lambda)?;
    let p = params.p();
    let pi = enumerate_fk_measure(n, lambda, q)?;
    let pairs = pair_list(n);
    let whole = q.floor() as usize;
    let classes = whole + 1;
    let weight: Vec<f64> = std::iter::once((q - whole as f64) / q)
        .chain(std::iter::repeat_n(1.0 / q, whole))
        .collect();

    let mut joint: HashMap<Vec<u32>, HashMap<Vec<u64>, f64>> = HashMap::new();
    let mut remainder_nonempty = 0.0;
    for omega in 0..pi.len() as u64 {
        let clusters = cluster_masks(n, &pairs, omega);
        let k = clusters.len();
        let mut label = vec![0usize; k];
        loop {
            let w = pi.prob(omega as usize) * label.iter().map(|&c| weight[c]).product::<f64>();
            if w > 0.0 {
                let mut parts = vec![0u32; classes];
                for (c, &l) in label.iter().enumerate() {
                    parts[l] |= clusters[c];
                }
                if parts[0] != 0 {
                    remainder_nonempty += w;
                }
                let key: Vec<u64> = parts.iter().map(|&vs| restrict(n, &pairs, omega, vs)).collect();
                *joint.entry(parts).or_default().entry(key).or_insert(0.0) += w;
            }
            let mut d = 0;
            while d < k {
                label[d] += 1;
                if label[d] < classes {
                    break;
                }
                label[d] = 0;
                d += 1;
            }
            if d == k {
                break;
            }
        }
    }

    let mut dev = IteratedColoringDeviation {
        marginal: 0.0,
        joint: 0.0,
        remainder_nonempty,
    };
    for (parts, cond) in &joint {
        let total = neumaier_sum(cond.values().copied());
        let targets: Vec<MeasureTable> = parts
            .iter()
            .enumerate()
            .map(|(c, vs)| {
                let w = if c == 0 { q - whole as f64 } else { 1.0 };
                fk_measure_with_p(vs.count_ones() as usize, p, w)
            })
            .collect::<Result<_>>()?;
        for (slot, t) in targets.iter().enumerate() {
            dev.marginal = dev.marginal.max(tv_marginal(cond, total, slot, t));
        }
        let refs: Vec<&MeasureTable> = targets.iter().collect();
        dev.joint = dev.joint.max(tv_to_product(cond, total, &refs));
    }
    Ok(dev)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EsDeviation {
    /// `‖μ K_perc − π‖₁`.
    pub fk: f64,
    /// `‖π K_color − μ‖₁`.
    pub potts: f64,
}

impl EsDeviation {
    pub fn max(&self) -> f64 {
        self.fk.max(self.potts)
    }
}

/// Pushes the Potts measure through intra-class percolation and the FK
/// measure through uniform cluster recoloring, comparing each image with the
/// other measure.
pub fn es_coupling_check(n: usize, lambda: f64, q: usize) -> Result<EsDeviation> {
    if n > MAX_ES_N {
        return Err(Error::StateSpaceTooLarge(format!("coupling check needs n <= {MAX_ES_N}, got {n}")));
    }
    if q_as_int(q as f64).is_none() || q == 0 {
        return Err(Error::NonIntegerQ("coupling check"));
    }
    let params = ModelParams::new(n, q as f64, lambda)?;
    let p = params.p();
    let (lp, l1p) = (p.ln(), (-p).ln_1p());
    let mu = enumerate_potts_measure(n, lambda, q)?;
    let pi = enumerate_fk_measure(n, lambda, q as f64)?;
    let pairs = pair_list(n);
    let pow_q: Vec<usize> = (0..n).map(|i| q.pow(i as u32)).collect();

    let mut fk_image = vec![0.0; pi.len()];
    for s in 0..mu.len() {
        let colors: Vec<usize> = (0..n).map(|i| s / pow_q[i] % q).collect();
        let intra = pairs
            .iter()
            .enumerate()
            .filter(|(_, &(i, j))| colors[i] == colors[j])
            .fold(0u64, |m, (b, _)| m | 1 << b);
        let slots = intra.count_ones() as usize;
        let mut sub = intra;
        loop {
            let e = sub.count_ones() as usize;
            let w = super::measure::xlog(e, lp) + super::measure::xlog(slots - e, l1p);
            fk_image[sub as usize] += mu.prob(s) * w.exp();
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & intra;
        }
    }

    let mut potts_image = vec![0.0; mu.len()];
    for omega in 0..pi.len() as u64 {
        let clusters = cluster_masks(n, &pairs, omega);
        let k = clusters.len();
        let each = pi.prob(omega as usize) / (q as f64).powi(k as i32);
        let mut label = vec![0usize; k];
        loop {
            let mut state = 0;
            for (c, &cm) in clusters.iter().enumerate() {
                for (v, pq) in pow_q.iter().enumerate() {
                    if cm >> v & 1 == 1 {
                        state += label[c] * pq;
                    }
                }
            }
            potts_image[state] += each;
            let mut d = 0;
            while d < k {
                label[d] += 1;
                if label[d] < q {
                    break;
                }
                label[d] = 0;
                d += 1;
            }
            if d == k {
                break;
            }
        }
    }

    let l1 = |a: &[f64], b: &[f64]| neumaier_sum(a.iter().zip(b).map(|(x, y)| (x - y).abs()));
    Ok(EsDeviation {
        fk: l1(&fk_image, pi.probs()),
        potts: l1(&potts_image, mu.probs()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bgj_trivial_alphas() {
        for alpha in [0.0, 1.0] {
            let d = bgj_coloring_check(4, 2.0, 3.0, alpha).unwrap();
            assert!(d.max() < 1e-12, "{alpha}: {d:?}");
        }
    }

    #[test]
    fn bgj_holds() {
        let d = bgj_coloring_check(4, 2.0, 3.0, 1.0 / 3.0).unwrap();
        assert!(d.max() < 1e-10, "{d:?}");
        let d = bgj_coloring_check(5, 1.5, 2.5, 0.7).unwrap();
        assert!(d.max() < 1e-10, "{d:?}");
    }

    #[test]
    fn bgj_detects_wrong_weight() {
        // color with α but the weight split is wrong if q is misreported:
        // a naive check against π_{|R|,p,q} must fail.
        let n = 4;
        let (lambda, q, alpha) = (2.0, 3.0, 1.0 / 3.0);
        let wrong = fk_measure_with_p(n, lambda / n as f64, q).unwrap();
        let right = fk_measure_with_p(n, lambda / n as f64, alpha * q).unwrap();
        assert!(super::super::total_variation(wrong.probs(), right.probs()) > 1e-3);
    }

    #[test]
    fn iterated_holds() {
        let d = iterated_coloring_check(3, 1.5, 2.5).unwrap();
        assert!(d.max() < 1e-10, "{d:?}");
        assert!(d.remainder_nonempty > 0.0);
        let d = iterated_coloring_check(4, 2.0, 3.0).unwrap();
        assert!(d.max() < 1e-10, "{d:?}");
        assert_eq!(d.remainder_nonempty, 0.0);
        assert!(iterated_coloring_check(3, 1.0, 2.0).is_err());
    }

    #[test]
    fn es_coupling_holds() {
        for (n, lambda, q) in [(2, 1.0, 2), (4, 2.0, 3), (5, 1e-9, 3), (5, 2.0, 3)] {
            let d = es_coupling_check(n, lambda, q).unwrap();
            assert!(d.max() < 1e-10, "{n} {lambda} {q}: {d:?}");
        }
    }
}
