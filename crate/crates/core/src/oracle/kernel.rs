use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;

use super::measure::{enumerate_fk_measure, enumerate_potts_measure, xlog, MeasureTable};
use crate::dynamics::{glauber_acceptance, DynamicsKind};
use crate::error::{invalid, Error, Result};
use crate::model::{pair_count, pair_from_index, ModelParams, UnionFind};

pub const MAX_SW_STATES: usize = 10_000;
pub const MAX_SW_INTRA_PAIRS: usize = 15;
pub const MAX_CM_N: usize = 5;
pub const MAX_GLAUBER_N: usize = 6;

/// Sparse row-stochastic matrix over a measure's state space. Column indices
/// within a row are strictly increasing.
#[derive(Debug, Clone)]
pub struct KernelTable {
    kind: Option<DynamicsKind>,
    measure: MeasureTable,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

fn compress_row(mut entries: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    entries.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
    for (j, v) in entries {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += v,
            _ => out.push((j, v)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

fn dense_to_row(dense: &[f64]) -> Vec<(usize, f64)> {
    dense
        .iter()
        .enumerate()
        .filter(|e| *e.1 != 0.0)
        .map(|(j, &v)| (j, v))
        .collect()
}

impl KernelTable {
    /// Builds a table from explicit rows; rows must be stochastic within
    /// `1e-12` with non-negative entries.
    pub fn from_rows(measure: MeasureTable, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        Self::assemble(None, measure, rows)
    }

    fn assemble(
        kind: Option<DynamicsKind>,
        measure: MeasureTable,
        rows: Vec<Vec<(usize, f64)>>,
    ) -> Result<Self> {
        let size = measure.len();
        if rows.len() != size {
            return Err(invalid("rows", format!("expected {size} rows, got {}", rows.len())));
        }
        let mut row_ptr = Vec::with_capacity(size + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            let row = compress_row(row);
            let mut sum = 0.0;
            for &(j, v) in &row {
                if j >= size || !(v >= 0.0) {
                    return Err(invalid("rows", format!("bad entry ({i}, {j}) = {v}")));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(invalid("rows", format!("row {i} sums to {sum}")));
            }
            for (j, v) in row {
                cols.push(j);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            kind,
            measure,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn kind(&self) -> Option<DynamicsKind> {
        self.kind
    }

    pub fn measure(&self) -> &MeasureTable {
        &self.measure
    }

    pub fn len(&self) -> usize {
        self.measure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measure.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map_or(0.0, |k| v[k])
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let (c, v) = self.row(i);
        for (&j, &x) in c.iter().zip(v) {
            out[j] = x;
        }
        out
    }

    /// Row vector times the kernel, `vP`.
    pub fn apply_left(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let (c, x) = self.row(i);
            for (&j, &pij) in c.iter().zip(x) {
                out[j] += vi * pij;
            }
        }
        out
    }

    /// Kernel times a column vector, `Pf`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let (c, x) = self.row(i);
                c.iter().zip(x).map(|(&j, &pij)| pij * f[j]).sum()
            })
            .collect()
    }
}

/// Exact transition matrix of one step of `kind`, paired with its stationary
/// measure (Potts for Swendsen-Wang, FK otherwise).
pub fn build_kernel(kind: DynamicsKind, n: usize, lambda: f64, q: f64) -> Result<KernelTable> {
    let params = ModelParams::new(n, q, lambda)?;
    match kind {
        DynamicsKind::Sw => build_sw(&params),
        DynamicsKind::Cm => build_cm(&params),
        DynamicsKind::Glauber => build_glauber(&params),
    }
}

fn too_large(what: &str, detail: String) -> Error {
    Error::StateSpaceTooLarge(format!("{what}: {detail}"))
}

pub(crate) fn pair_list(n: usize) -> Vec<(usize, usize)> {
    (0..pair_count(n)).map(|k| pair_from_index(n, k)).collect()
}

fn build_glauber(params: &ModelParams) -> Result<KernelTable> {
    let n = params.n();
    if n > MAX_GLAUBER_N {
        return Err(too_large("glauber kernel", format!("needs n <= {MAX_GLAUBER_N}, got {n}")));
    }
    let measure = enumerate_fk_measure(n, params.lambda(), params.q())?;
    let pairs = pair_list(n);
    let npairs = pairs.len();
    let (p, q) = (params.p(), params.q());
    let rows: Vec<Vec<(usize, f64)>> = (0..measure.len() as u64)
        .into_par_iter()
        .map(|mask| {
            if npairs == 0 {
                return vec![(mask as usize, 1.0)];
            }
            let mut row = Vec::with_capacity(2 * npairs);
            for (k, &(x, y)) in pairs.iter().enumerate() {
                let without = mask & !(1u64 << k);
                let mut uf = UnionFind::new(n);
                for (b, &(i, j)) in pairs.iter().enumerate() {
                    if without >> b & 1 == 1 {
                        uf.union(i, j);
                    }
                }
                let a = glauber_acceptance(p, q, uf.connected(x, y));
                row.push(((without | 1u64 << k) as usize, a / npairs as f64));
                row.push((without as usize, (1.0 - a) / npairs as f64));
            }
            row
        })
        .collect();
    KernelTable::assemble(Some(DynamicsKind::Glauber), measure, rows)
}

/// Cluster membership of every vertex as vertex bitmasks.
pub(crate) fn cluster_masks(n: usize, pairs: &[(usize, usize)], mask: u64) -> Vec<u32> {
    let mut uf = UnionFind::new(n);
    for (b, &(i, j)) in pairs.iter().enumerate() {
        if mask >> b & 1 == 1 {
            uf.union(i, j);
        }
    }
    let mut by_root: Vec<Option<usize>> = vec![None; n];
    let mut out: Vec<u32> = Vec::new();
    for v in 0..n {
        let r = uf.find(v);
        let slot = *by_root[r].get_or_insert_with(|| {
            out.push(0);
            out.len() - 1
        });
        out[slot] |= 1 << v;
    }
    out
}

fn build_cm(params: &ModelParams) -> Result<KernelTable> {
    let n = params.n();
    if n > MAX_CM_N {
        return Err(too_large("cm kernel", format!("needs n <= {MAX_CM_N}, got {n}")));
    }
    let measure = enumerate_fk_measure(n, params.lambda(), params.q())?;
    let pairs = pair_list(n);
    let size = measure.len();
    let p = params.p();
    let (lp, l1p) = (p.ln(), (-p).ln_1p());
    let act = 1.0 / params.q();
    // pair mask of all pairs inside each vertex subset
    let inside: Vec<u64> = (0..1u32 << n)
        .map(|vs| {
            pairs
                .iter()
                .enumerate()
                .filter(|(_, &(i, j))| vs >> i & 1 == 1 && vs >> j & 1 == 1)
                .fold(0u64, |m, (b, _)| m | 1 << b)
        })
        .collect();
    let rows: Vec<Vec<(usize, f64)>> = (0..size as u64)
        .into_par_iter()
        .map(|mask| {
            let clusters = cluster_masks(n, &pairs, mask);
            let k = clusters.len();
            let mut dense = vec![0.0; size];
            for chosen in 0u32..1 << k {
                let a = chosen.count_ones() as usize;
                let w_act = act.powi(a as i32) * (1.0 - act).powi((k - a) as i32);
                if w_act == 0.0 {
                    continue;
                }
                let active = (0..k)
                    .filter(|&c| chosen >> c & 1 == 1)
                    .fold(0u32, |m, c| m | clusters[c]);
                let free = inside[active as usize];
                let kept = mask & !free;
                let slots = free.count_ones() as usize;
                // iterate over all submasks of `free`, including 0
                let mut sub = free;
                loop {
                    let e = sub.count_ones() as usize;
                    let w = w_act * (xlog(e, lp) + xlog(slots - e, l1p)).exp();
                    dense[(kept | sub) as usize] += w;
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & free;
                }
            }
            dense_to_row(&dense)
        })
        .collect();
    KernelTable::assemble(Some(DynamicsKind::Cm), measure, rows)
}

fn build_sw(params: &ModelParams) -> Result<KernelTable> {
    let n = params.n();
    let q = params.q_int("sw")?;
    let size = (q as f64).powi(n as i32);
    if size > MAX_SW_STATES as f64 {
        return Err(too_large("sw kernel", format!("needs q^n <= {MAX_SW_STATES}, got {q}^{n}")));
    }
    // the monochromatic start has the largest intra-class pair set
    if pair_count(n) > MAX_SW_INTRA_PAIRS {
        return Err(too_large(
            "sw kernel",
            format!("intra-class pair sets up to {} exceed {MAX_SW_INTRA_PAIRS}", pair_count(n)),
        ));
    }
    let measure = enumerate_potts_measure(n, params.lambda(), q)?;
    let size = measure.len();
    let pairs = pair_list(n);
    let p = params.p();
    let (lp, l1p) = (p.ln(), (-p).ln_1p());
    let pow_q: Vec<usize> = (0..n).map(|i| q.pow(i as u32)).collect();

    // The row depends on the start only through its color partition.
    let mut memo: HashMap<Vec<usize>, Vec<(usize, f64)>> = HashMap::new();
    let mut rows = Vec::with_capacity(size);
    for s in 0..size {
        let spin = super::measure::spin_from_index(n, q, s);
        let mut relabel = vec![usize::MAX; q];
        let mut next = 0;
        let key: Vec<usize> = spin
            .colors()
            .iter()
            .map(|&c| {
                if relabel[c] == usize::MAX {
                    relabel[c] = next;
                    next += 1;
                }
                relabel[c]
            })
            .collect();
        if let Some(row) = memo.get(&key) {
            rows.push(row.clone());
            continue;
        }
        let intra: u64 = pairs
            .iter()
            .enumerate()
            .filter(|(_, &(i, j))| key[i] == key[j])
            .fold(0u64, |m, (b, _)| m | 1 << b);
        let slots = intra.count_ones() as usize;

        // law of the cluster partition after percolation
        let mut partitions: HashMap<Vec<u32>, f64> = HashMap::new();
        let mut sub = intra;
        loop {
            let e = sub.count_ones() as usize;
            let w = (xlog(e, lp) + xlog(slots - e, l1p)).exp();
            if w > 0.0 {
                *partitions.entry(cluster_masks(n, &pairs, sub)).or_insert(0.0) += w;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & intra;
        }

        let mut dense = vec![0.0; size];
        for (clusters, w) in partitions {
            let k = clusters.len();
            let each = w / (q as f64).powi(k as i32);
            let mut colors = vec![0usize; k];
            loop {
                let mut state = 0;
                for (c, &cm) in clusters.iter().enumerate() {
                    for (v, pq) in pow_q.iter().enumerate() {
                        if cm >> v & 1 == 1 {
                            state += colors[c] * pq;
                        }
                    }
                }
                dense[state] += each;
                // odometer over q^k colorings
                let mut d = 0;
                while d < k {
                    colors[d] += 1;
                    if colors[d] < q {
                        break;
                    }
                    colors[d] = 0;
                    d += 1;
                }
                if d == k {
                    break;
                }
            }
        }
        let row = dense_to_row(&dense);
        memo.insert(key, row.clone());
        rows.push(row);
    }
    KernelTable::assemble(Some(DynamicsKind::Sw), measure, rows)
}

/// `‖πP − π‖₁`.
pub fn stationarity_residual(kernel: &KernelTable) -> f64 {
    let pi = kernel.measure().probs();
    let moved = kernel.apply_left(pi);
    super::neumaier_sum(moved.iter().zip(pi).map(|(a, b)| (a - b).abs()))
}

/// `max_{i,j} |π_i P_ij − π_j P_ji|`.
pub fn detailed_balance_violation(kernel: &KernelTable) -> f64 {
    let pi = kernel.measure().probs();
    (0..kernel.len())
        .into_par_iter()
        .map(|i| {
            let (c, v) = kernel.row(i);
            c.iter()
                .zip(v)
                .map(|(&j, &pij)| (pi[i] * pij - pi[j] * kernel.entry(j, i)).abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Writes `state,probability,row` lines; `row` lists `target:probability`
/// pairs separated by `;`.
pub fn write_fixture(kernel: &KernelTable, mut out: impl Write) -> Result<()> {
    writeln!(out, "state,probability,row")?;
    for i in 0..kernel.len() {
        let (c, v) = kernel.row(i);
        let row: Vec<String> = c.iter().zip(v).map(|(j, x)| format!("{j}:{x}")).collect();
        writeln!(out, "{i},{},{}", kernel.measure().prob(i), row.join(";"))?;
    }
    Ok(())
}
