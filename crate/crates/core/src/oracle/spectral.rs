use nalgebra::{DMatrix, SymmetricEigen};

use super::kernel::{detailed_balance_violation, KernelTable};
use super::measure::{spin_from_index, StateSpace};
use super::total_variation;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Mixing-time threshold `1/(2e)`.
pub const TMIX_THRESHOLD: f64 = 0.5 / std::f64::consts::E;

pub const MAX_DENSE_STATES: usize = 4096;
pub const MAX_EXHAUSTIVE_CUT_STATES: usize = 64;
pub const MAX_TMIX_STATES: usize = 1024;

const REVERSIBILITY_TOL: f64 = 1e-8;
const LANCZOS_TOL: f64 = 1e-10;
const LANCZOS_MAX_ITER: usize = 300;

fn check_reversible(kernel: &KernelTable) -> Result<()> {
    let v = detailed_balance_violation(kernel);
    if v < REVERSIBILITY_TOL {
        Ok(())
    } else {
        Err(Error::NotReversible(v))
    }
}

/// `D^{1/2} P D^{-1/2} x`.
fn symmetrized_apply(kernel: &KernelTable, sqrt_pi: &[f64], x: &[f64]) -> Vec<f64> {
    let scaled: Vec<f64> = x.iter().zip(sqrt_pi).map(|(a, s)| a / s).collect();
    kernel
        .apply(&scaled)
        .into_iter()
        .zip(sqrt_pi)
        .map(|(a, s)| a * s)
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // twice is enough
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            axpy(v, -c, b);
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Fresh unit vector orthogonal to `basis`, or `None` if the basis spans the
/// whole space.
fn fresh_direction(dim: usize, basis: &[Vec<f64>], rng: &mut RngStream) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.uniform() - 0.5).collect();
        orthogonalize(&mut v, basis);
        if normalize(&mut v) > 1e-8 {
            return Some(v);
        }
    }
    None
}

/// Second-largest eigenvalue of a reversible kernel via Lanczos with full
/// reorthogonalization on the complement of `√π`.
fn lambda2_lanczos(kernel: &KernelTable) -> f64 {
    let dim = kernel.len();
    if dim < 2 {
        return 0.0;
    }
    let sqrt_pi: Vec<f64> = kernel.measure().probs().iter().map(|p| p.sqrt()).collect();
    let mut top = sqrt_pi.clone();
    normalize(&mut top);
    let mut rng = RngStream::named(0, 0, "lanczos");
    let mut basis: Vec<Vec<f64>> = vec![top];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let max_iter = LANCZOS_MAX_ITER.min(dim - 1);
    let mut v = match fresh_direction(dim, &basis, &mut rng) {
        Some(v) => v,
        None => return 0.0,
    };
    let mut estimate = f64::NEG_INFINITY;
    for it in 0..max_iter {
        basis.push(v.clone());
        let mut w = symmetrized_apply(kernel, &sqrt_pi, &v);
        let alpha = dot(&w, &v);
        alphas.push(alpha);
        orthogonalize(&mut w, &basis);
        let beta = normalize(&mut w);

        let k = alphas.len();
        let t = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(t);
        let (imax, &theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        estimate = theta;
        let residual = (beta * eig.eigenvectors[(k - 1, imax)]).abs();
        if it + 1 == max_iter {
            break;
        }
        if beta < 1e-12 {
            // invariant subspace found: continue in a fresh direction
            match fresh_direction(dim, &basis, &mut rng) {
                Some(fresh) => {
                    betas.push(0.0);
                    v = fresh;
                    continue;
                }
                None => break,
            }
        }
        if residual < LANCZOS_TOL && k >= 8.min(dim - 1) {
            break;
        }
        betas.push(beta);
        v = w;
    }
    estimate
}

/// Eigenvalues of the symmetrized kernel in decreasing order.
pub fn dense_spectrum(kernel: &KernelTable) -> Result<Vec<f64>> {
    let dim = kernel.len();
    if dim > MAX_DENSE_STATES {
        return Err(Error::StateSpaceTooLarge(format!(
            "dense spectrum needs at most {MAX_DENSE_STATES} states, got {dim}"
        )));
    }
    check_reversible(kernel)?;
    let pi = kernel.measure().probs();
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        let (c, v) = kernel.row(i);
        for (&j, &pij) in c.iter().zip(v) {
            a[(i, j)] += 0.5 * (pi[i] / pi[j]).sqrt() * pij;
            a[(j, i)] += 0.5 * (pi[i] / pi[j]).sqrt() * pij;
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    Ok(ev)
}

/// `1 − λ₂` by Lanczos on the deflated symmetrized kernel.
pub fn spectral_gap(kernel: &KernelTable) -> Result<f64> {
    check_reversible(kernel)?;
    Ok(1.0 - lambda2_lanczos(kernel))
}

/// `1 − λ₂` from the full dense spectrum.
pub fn spectral_gap_dense(kernel: &KernelTable) -> Result<f64> {
    let ev = dense_spectrum(kernel)?;
    Ok(if ev.len() < 2 { 1.0 } else { 1.0 - ev[1] })
}

fn membership(size: usize, set: &[usize]) -> Result<Vec<bool>> {
    let mut inside = vec![false; size];
    for &s in set {
        *inside.get_mut(s).ok_or(Error::InvalidCut)? = true;
    }
    let count = inside.iter().filter(|&&b| b).count();
    if count == 0 || count == size {
        return Err(Error::InvalidCut);
    }
    Ok(inside)
}

/// `Q(S, Sᶜ) / (π(S) π(Sᶜ))`.
pub fn bottleneck_ratio(kernel: &KernelTable, set: &[usize]) -> Result<f64> {
    let inside = membership(kernel.len(), set)?;
    let pi = kernel.measure().probs();
    let mut flow = 0.0;
    let (mut mass, mut rest) = (0.0, 0.0);
    for i in 0..kernel.len() {
        if !inside[i] {
            rest += pi[i];
            continue;
        }
        mass += pi[i];
        let (c, v) = kernel.row(i);
        let out: f64 = c.iter().zip(v).filter(|(&j, _)| !inside[j]).map(|(_, &x)| x).sum();
        flow += pi[i] * out;
    }
    // both masses summed directly: 1 - mass cancels badly when mass is near 1
    Ok(flow / (mass * rest))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub ratio: f64,
    /// Sorted states of the side containing the first searched state.
    pub members: Vec<usize>,
}

/// Dense max-flow (Dinic) on a small network.
struct FlowNet {
    size: usize,
    cap: Vec<f64>,
    level: Vec<usize>,
    next: Vec<usize>,
}

const FLOW_EPS: f64 = 1e-15;

impl FlowNet {
    fn new(size: usize) -> Self {
        Self {
            size,
            cap: vec![0.0; size * size],
            level: vec![0; size],
            next: vec![0; size],
        }
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.iter_mut().for_each(|l| *l = usize::MAX);
        self.level[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..self.size {
                if self.level[v] == usize::MAX && self.cap[u * self.size + v] > FLOW_EPS {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        self.level[t] != usize::MAX
    }

    fn dfs(&mut self, u: usize, t: usize, pushed: f64) -> f64 {
        if u == t {
            return pushed;
        }
        while self.next[u] < self.size {
            let v = self.next[u];
            let c = self.cap[u * self.size + v];
            if c > FLOW_EPS && self.level[v] == self.level[u] + 1 {
                let got = self.dfs(v, t, pushed.min(c));
                if got > 0.0 {
                    self.cap[u * self.size + v] -= got;
                    self.cap[v * self.size + u] += got;
                    return got;
                }
            }
            self.next[u] += 1;
        }
        0.0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        while self.bfs(s, t) {
            self.next.iter_mut().for_each(|x| *x = 0);
            loop {
                let f = self.dfs(s, t, f64::INFINITY);
                if f <= 0.0 {
                    break;
                }
                flow += f;
            }
        }
        flow
    }

    /// Vertices reachable from `s` in the residual network.
    fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.size];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for v in 0..self.size {
                if !seen[v] && self.cap[u * self.size + v] > FLOW_EPS {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

const FREE: u8 = 0;
const IN_S: u8 = 1;
const IN_C: u8 = 2;

/// Branch and bound over side assignments. A node is pruned when, for some
/// tangent point `x0` of `x(1 − x)`, every completion `S` satisfies
/// `cut(S) − best · (x0² + (1 − 2x0) π(S)) > 0`; that minimum is an s-t cut.
struct CutSearch {
    dim: usize,
    w: Vec<f64>,
    pi: Vec<f64>,
    side: Vec<u8>,
    best: f64,
    best_set: Vec<usize>,
    /// Target below which a cut is sought; nodes whose completions all
    /// exceed `min(best, floor)` are pruned.
    floor: f64,
    nodes: u64,
    budget: u64,
    exhausted: bool,
}

impl CutSearch {
    fn tau(&self) -> f64 {
        self.best.min(self.floor)
    }

    fn consider(&mut self, inside: &[bool]) {
        let mass: f64 = (0..self.dim).filter(|&u| inside[u]).map(|u| self.pi[u]).sum();
        let count = inside[..self.dim].iter().filter(|&&b| b).count();
        if count == 0 || count == self.dim {
            return;
        }
        let mut cut = 0.0;
        for u in (0..self.dim).filter(|&u| inside[u]) {
            for v in (0..self.dim).filter(|&v| !inside[v]) {
                cut += self.w[u * self.dim + v];
            }
        }
        let ratio = cut / (mass * (1.0 - mass));
        if ratio < self.best {
            self.best = ratio;
            self.best_set = (0..self.dim).filter(|&u| inside[u]).collect();
        }
    }

    /// Minimum over completions of the tangent-relaxed objective, and the
    /// minimizing side assignment.
    fn relaxed(&self, x0: f64) -> (f64, Vec<bool>) {
        let dim = self.dim;
        let (s, t) = (dim, dim + 1);
        let mut net = FlowNet::new(dim + 2);
        for u in 0..dim {
            for v in 0..dim {
                net.cap[u * net.size + v] = self.w[u * dim + v];
            }
        }
        let tau = self.tau();
        let c = tau * (1.0 - 2.0 * x0);
        let big = 1e6;
        for u in 0..dim {
            match self.side[u] {
                IN_S => net.cap[s * net.size + u] = big,
                IN_C => net.cap[u * net.size + t] = big,
                _ => {}
            }
            if c >= 0.0 {
                net.cap[s * net.size + u] += c * self.pi[u];
            } else {
                net.cap[u * net.size + t] += -c * self.pi[u];
            }
        }
        let flow = net.max_flow(s, t);
        let value = flow - c.max(0.0) - tau * x0 * x0;
        (value, net.source_side(s))
    }

    fn search(&mut self) {
        if self.nodes >= self.budget {
            self.exhausted = true;
            return;
        }
        self.nodes += 1;
        let assigned_mass: f64 = (0..self.dim)
            .filter(|&u| self.side[u] == IN_S)
            .map(|u| self.pi[u])
            .sum();
        let mut x0 = assigned_mass.max(0.5);
        for _ in 0..4 {
            let (value, inside) = self.relaxed(x0);
            self.consider(&inside);
            if value > 1e-14 {
                return;
            }
            let mass: f64 = (0..self.dim).filter(|&u| inside[u]).map(|u| self.pi[u]).sum();
            if (mass - x0).abs() < 1e-12 {
                break;
            }
            x0 = mass;
        }
        // branch on the free state most strongly tied to assigned ones
        let mut pick = None;
        let mut strength = -1.0;
        for u in (0..self.dim).filter(|&u| self.side[u] == FREE) {
            let tie: f64 = (0..self.dim)
                .filter(|&v| self.side[v] != FREE)
                .map(|v| self.w[u * self.dim + v])
                .sum();
            if tie > strength {
                strength = tie;
                pick = Some(u);
            }
        }
        let Some(u) = pick else { return };
        for s in [IN_S, IN_C] {
            self.side[u] = s;
            self.search();
            if self.exhausted {
                break;
            }
        }
        self.side[u] = FREE;
    }
}

/// Result of a bounded cut search.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceBounds {
    /// Best cut found; its ratio is an upper bound on `Φ`.
    pub best: Cut,
    /// Proven lower bound on `Φ` (zero when the search ran out of budget).
    pub lower: f64,
    /// Whether the search tree was fully explored.
    pub complete: bool,
    pub nodes: u64,
}

impl ConductanceBounds {
    /// True when `lower` equals the best ratio, i.e. `Φ` is known exactly.
    pub fn is_exact(&self) -> bool {
        self.complete && self.lower >= self.best.ratio
    }
}

/// Exact conductance `Φ = min_S Q(S,Sᶜ)/(π(S)π(Sᶜ))` over every bipartition,
/// by branch and bound seeded with the Fiedler sweep cut.
pub fn conductance_exhaustive(kernel: &KernelTable) -> Result<Cut> {
    Ok(conductance_bounds(kernel, f64::INFINITY, u64::MAX)?.best)
}

/// Branch and bound over all bipartitions that proves `Φ ≥ min(Φ, floor)`.
/// With `floor = ∞` the search is exact; a finite floor prunes every subtree
/// whose cuts all exceed it, which is far cheaper when only a certificate
/// such as `Φ ≥ gap/2` is wanted. At most `node_budget` nodes are visited.
pub fn conductance_bounds(
    kernel: &KernelTable,
    floor: f64,
    node_budget: u64,
) -> Result<ConductanceBounds> {
    let dim = kernel.len();
    if dim > MAX_EXHAUSTIVE_CUT_STATES {
        return Err(Error::StateSpaceTooLarge(format!(
            "exhaustive cut search needs at most {MAX_EXHAUSTIVE_CUT_STATES} states, got {dim}"
        )));
    }
    if dim < 2 {
        return Err(Error::InvalidCut);
    }
    check_reversible(kernel)?;
    let pi = kernel.measure().probs().to_vec();
    let mut w = vec![0.0; dim * dim];
    for i in 0..dim {
        let (c, v) = kernel.row(i);
        for (&j, &pij) in c.iter().zip(v) {
            if i != j {
                w[i * dim + j] += 0.5 * pi[i] * pij;
                w[j * dim + i] += 0.5 * pi[i] * pij;
            }
        }
    }

    // Fiedler vector of the symmetrized kernel, mapped back by D^{-1/2}
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            a[(i, j)] = if i == j {
                kernel.entry(i, i)
            } else {
                w[i * dim + j] / (pi[i] * pi[j]).sqrt()
            };
        }
    }
    let eig = SymmetricEigen::new(a);
    let mut idx: Vec<usize> = (0..dim).collect();
    idx.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let fiedler: Vec<f64> = (0..dim)
        .map(|i| eig.eigenvectors[(i, idx[1])] / pi[i].sqrt())
        .collect();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&x, &y| fiedler[x].total_cmp(&fiedler[y]).then(x.cmp(&y)));

    let mut best = f64::INFINITY;
    let mut best_set = Vec::new();
    for k in 1..dim {
        let set: Vec<usize> = order[..k].to_vec();
        let r = bottleneck_ratio(kernel, &set)?;
        if r < best {
            best = r;
            best_set = set;
        }
    }
    // complement symmetry: fix the first state of the sweep order on side S
    let mut side = vec![FREE; dim];
    side[order[0]] = IN_S;
    let mut s = CutSearch {
        dim,
        w,
        pi,
        side,
        best,
        best_set,
        floor,
        nodes: 0,
        budget: node_budget,
        exhausted: false,
    };
    s.search();
    let complete = !s.exhausted;
    let mut members = s.best_set;
    members.sort_unstable();
    let ratio = bottleneck_ratio(kernel, &members)?;
    Ok(ConductanceBounds {
        best: Cut { ratio, members },
        lower: if complete { ratio.min(floor) } else { 0.0 },
        complete,
        nodes: s.nodes,
    })
}


/// Level-set cuts of a statistic, `{x : stat(x) ≤ t}` for every threshold
/// that splits the state space.
fn level_cuts(kernel: &KernelTable, stat: impl Fn(usize) -> usize) -> Result<Vec<Cut>> {
    let values: Vec<usize> = (0..kernel.len()).map(stat).collect();
    let mut levels = values.clone();
    levels.sort_unstable();
    levels.dedup();
    let mut cuts = Vec::new();
    for &t in &levels[..levels.len().saturating_sub(1)] {
        let members: Vec<usize> = (0..values.len()).filter(|&i| values[i] <= t).collect();
        let ratio = bottleneck_ratio(kernel, &members)?;
        cuts.push(Cut { ratio, members });
    }
    Ok(cuts)
}

/// Physically motivated cuts: edge-count and largest-cluster thresholds for
/// edge spaces, largest-color-class thresholds for colorings. Each ratio
/// bounds `Φ` from above, so `gap ≤ 2 · ratio` must hold for all of them.
pub fn threshold_cuts(kernel: &KernelTable) -> Result<Vec<Cut>> {
    match kernel.measure().space() {
        StateSpace::Edges { n } => {
            let mut cuts = level_cuts(kernel, |m| (m as u64).count_ones() as usize)?;
            cuts.extend(level_cuts(kernel, |m| largest_component(n, m as u64))?);
            Ok(cuts)
        }
        StateSpace::Spins { n, q } => level_cuts(kernel, |i| {
            spin_from_index(n, q, i).counts().iter().copied().max().unwrap_or(0)
        }),
    }
}

fn largest_component(n: usize, mask: u64) -> usize {
    let mut uf = crate::model::UnionFind::new(n);
    for (k, (i, j)) in super::kernel::pair_list(n).into_iter().enumerate() {
        if mask >> k & 1 == 1 {
            uf.union(i, j);
        }
    }
    (0..n).map(|v| uf.set_size(v)).max().unwrap_or(0)
}

/// Smallest `t` with `max_x ‖P^t(x,·) − π‖_TV < 1/(2e)`, or `None` if not
/// reached within `cap` steps.
pub fn mixing_time(kernel: &KernelTable, cap: u64) -> Result<Option<u64>> {
    let dim = kernel.len();
    if dim > MAX_TMIX_STATES {
        return Err(Error::StateSpaceTooLarge(format!(
            "exact mixing time needs at most {MAX_TMIX_STATES} states, got {dim}"
        )));
    }
    let pi = kernel.measure().probs();
    let mut rows: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            let mut r = vec![0.0; dim];
            r[i] = 1.0;
            r
        })
        .collect();
    for t in 0..=cap {
        let worst = rows
            .iter()
            .map(|r| total_variation(r, pi))
            .fold(0.0, f64::max);
        if worst < TMIX_THRESHOLD {
            return Ok(Some(t));
        }
        for r in rows.iter_mut() {
            *r = kernel.apply_left(r);
        }
    }
    Ok(None)
}
