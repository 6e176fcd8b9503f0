//! Single-step kernels of the Swendsen-Wang, Chayes-Machta and FK heat-bath
//! Glauber dynamics, and a trajectory runner.
//!
//! Random draws within a step follow a fixed order so trajectories are
//! reproducible from the stream alone:
//! - edge sampling walks pairs in lexicographic order (per color class, classes
//!   in label order, for Swendsen-Wang);
//! - per-cluster draws (colors, activations) are made in ascending cluster-id
//!   order;
//! - a Glauber step draws the pair index first, then one uniform.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    cluster_decompose, pair_count, s_m_vertices, ClusterPartition, EdgeConfig, ModelParams,
    SpinConfig, UnionFind,
};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicsKind {
    Sw,
    Cm,
    Glauber,
}

impl DynamicsKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sw => "sw",
            Self::Cm => "cm",
            Self::Glauber => "glauber",
        }
    }
}

impl fmt::Display for DynamicsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DynamicsKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sw" => Ok(Self::Sw),
            "cm" => Ok(Self::Cm),
            "glauber" => Ok(Self::Glauber),
            other => Err(Error::InvalidConfig(format!(
                "unknown dynamics kind `{other}` (expected sw, cm or glauber)"
            ))),
        }
    }
}

/// How `G(m, p)` is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GnpMethod {
    /// Geometric gaps between present pairs: `O(m + p m^2)` expected.
    #[default]
    GeometricSkip,
    /// One Bernoulli draw per pair.
    Scan,
}

/// Calls `emit(i, j)` for every present pair of a `G(m, p)` sample, in
/// lexicographic order.
fn for_each_gnp_pair(
    m: usize,
    p: f64,
    method: GnpMethod,
    rng: &mut RngStream,
    mut emit: impl FnMut(usize, usize),
) {
    let total = pair_count(m) as u64;
    if total == 0 || p <= 0.0 {
        return;
    }
    if p >= 1.0 {
        for i in 0..m {
            for j in i + 1..m {
                emit(i, j);
            }
        }
        return;
    }
    match method {
        GnpMethod::Scan => {
            for i in 0..m {
                for j in i + 1..m {
                    if rng.bernoulli(p) {
                        emit(i, j);
                    }
                }
            }
        }
        GnpMethod::GeometricSkip => {
            let log_q = (-p).ln_1p();
            // (row, row_start): pairs of row i occupy [row_start, row_start + m - 1 - i)
            let (mut row, mut row_start) = (0usize, 0u64);
            let mut pos = 0u64;
            loop {
                pos = pos.saturating_add(rng.geometric_failures(log_q));
                if pos >= total {
                    break;
                }
                while pos >= row_start + (m - 1 - row) as u64 {
                    row_start += (m - 1 - row) as u64;
                    row += 1;
                }
                emit(row, row + 1 + (pos - row_start) as usize);
                pos += 1;
            }
        }
    }
}

/// Erdős–Rényi `G(m, p)` on vertices `0..m`.
pub fn sample_gnp(m: usize, p: f64, rng: &mut RngStream) -> EdgeConfig {
    sample_gnp_with(m, p, GnpMethod::GeometricSkip, rng)
}

pub fn sample_gnp_with(m: usize, p: f64, method: GnpMethod, rng: &mut RngStream) -> EdgeConfig {
    let mut edges = Vec::new();
    for_each_gnp_pair(m, p, method, rng, |i, j| edges.push((i, j)));
    EdgeConfig::from_unique_pairs(m, edges)
}

/// Independent `G(|V_i|, p)` inside every color class; no edges across classes.
pub fn percolate_within_classes(
    spin: &SpinConfig,
    params: &ModelParams,
    rng: &mut RngStream,
) -> EdgeConfig {
    let p = params.p();
    let mut edges = Vec::new();
    for class in spin.classes() {
        for_each_gnp_pair(class.len(), p, GnpMethod::GeometricSkip, rng, |i, j| {
            edges.push((class[i], class[j]))
        });
    }
    EdgeConfig::from_unique_pairs(spin.n(), edges)
}

/// Gives every cluster an independent uniform color in `0..q`.
pub fn recolor_clusters(partition: &ClusterPartition, q: usize, rng: &mut RngStream) -> SpinConfig {
    let n = partition.n();
    let mut color_of_id = vec![0usize; n];
    for id in partition.ids_ascending() {
        color_of_id[id] = rng.below(q as u64) as usize;
    }
    let colors = partition
        .assignment()
        .iter()
        .map(|&id| color_of_id[id])
        .collect();
    SpinConfig::new(colors, q).expect("colors drawn below q")
}

/// One Swendsen-Wang step, also returning the intermediate FK configuration's
/// cluster decomposition.
pub fn sw_step_detailed(
    spin: &SpinConfig,
    params: &ModelParams,
    rng: &mut RngStream,
) -> Result<(SpinConfig, EdgeConfig, ClusterPartition)> {
    let q = params.q_int("sw")?;
    if spin.q() != q || spin.n() != params.n() {
        return Err(Error::InvalidConfig(format!(
            "spin has n = {}, q = {} but params have n = {}, q = {q}",
            spin.n(),
            spin.q(),
            params.n()
        )));
    }
    let bonds = percolate_within_classes(spin, params, rng);
    let partition = cluster_decompose(&bonds);
    let next = recolor_clusters(&partition, q, rng);
    Ok((next, bonds, partition))
}

pub fn sw_step(spin: &SpinConfig, params: &ModelParams, rng: &mut RngStream) -> Result<SpinConfig> {
    sw_step_detailed(spin, params, rng).map(|(s, _, _)| s)
}

/// One Chayes-Machta step, given the activation probability of the cluster
/// with each id (`None` for the usual `1/q`).
pub(crate) fn cm_step_with_activation(
    edges: &EdgeConfig,
    params: &ModelParams,
    rng: &mut RngStream,
    activation: impl Fn(usize) -> Option<f64>,
) -> EdgeConfig {
    let n = edges.n();
    let partition = cluster_decompose(edges);
    let default = 1.0 / params.q();
    let mut active_id = vec![false; n];
    for id in partition.ids_ascending() {
        let a = activation(id).unwrap_or(default);
        active_id[id] = rng.bernoulli(a);
    }
    let active: Vec<usize> = (0..n)
        .filter(|&v| active_id[partition.cluster_of(v)])
        .collect();

    // Edges never straddle clusters, so one endpoint decides.
    let mut out: Vec<(usize, usize)> = edges
        .edges()
        .iter()
        .copied()
        .filter(|&(i, _)| !active_id[partition.cluster_of(i)])
        .collect();
    for_each_gnp_pair(active.len(), params.p(), GnpMethod::GeometricSkip, rng, |i, j| {
        out.push((active[i], active[j]))
    });
    EdgeConfig::from_unique_pairs(n, out)
}

/// One Chayes-Machta step: activate clusters w.p. `1/q`, resample every pair
/// inside the active set from Bernoulli(`p`).
pub fn cm_step(edges: &EdgeConfig, params: &ModelParams, rng: &mut RngStream) -> EdgeConfig {
    cm_step_with_activation(edges, params, rng, |_| None)
}

/// Probability that the updated pair `xy` is present given the rest of `ω`.
pub fn glauber_acceptance(p: f64, q: f64, connected_without: bool) -> f64 {
    if connected_without {
        p
    } else {
        p / (p + q * (1.0 - p))
    }
}

/// One heat-bath Glauber update of a uniformly chosen pair.
pub fn glauber_step(edges: &EdgeConfig, params: &ModelParams, rng: &mut RngStream) -> EdgeConfig {
    let n = edges.n();
    let total = pair_count(n) as u64;
    let mut next = edges.clone();
    if total == 0 {
        return next;
    }
    let (x, y) = crate::model::pair_from_index(n, rng.below(total) as usize);
    next.set(x, y, false);
    let mut uf = UnionFind::new(n);
    for &(i, j) in next.edges() {
        uf.union(i, j);
    }
    let accept = glauber_acceptance(params.p(), params.q(), uf.connected(x, y));
    if rng.uniform() < accept {
        next.set(x, y, true);
    }
    next
}

/// State of a chain: a coloring for Swendsen-Wang, an edge set otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum ChainState {
    Spin(SpinConfig),
    Edges(EdgeConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub step: u64,
    /// `L_1 / n`. For Swendsen-Wang this refers to the FK configuration
    /// sampled in the step that produced the state (absent at step 0).
    pub largest_cluster_fraction: Option<f64>,
    /// Sorted color counts (Swendsen-Wang only).
    pub color_counts: Option<Vec<usize>>,
    /// `|S_M| / n`, same convention as `largest_cluster_fraction`.
    pub s_m_fraction: Option<f64>,
    pub edge_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<ObservationRecord>,
}

fn observe_edges(step: u64, edges: &EdgeConfig, partition: &ClusterPartition, m: usize) -> ObservationRecord {
    let n = edges.n() as f64;
    ObservationRecord {
        step,
        largest_cluster_fraction: Some(partition.largest_size() as f64 / n),
        color_counts: None,
        s_m_fraction: Some(s_m_vertices(partition, m) as f64 / n),
        edge_count: Some(edges.len()),
    }
}

/// Runs `steps` updates of `kind` from `init`, recording the initial state and
/// every `observe_every`-th state.
pub fn run_chain(
    kind: DynamicsKind,
    init: ChainState,
    steps: u64,
    observe_every: u64,
    m: usize,
    params: &ModelParams,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    let every = observe_every.max(1);
    let mut traj = Trajectory::default();
    match (kind, init) {
        (DynamicsKind::Sw, ChainState::Spin(mut spin)) => {
            params.q_int("sw")?;
            traj.records.push(ObservationRecord {
                step: 0,
                largest_cluster_fraction: None,
                color_counts: Some(spin.sorted_counts()),
                s_m_fraction: None,
                edge_count: None,
            });
            for t in 1..=steps {
                let (next, bonds, partition) = sw_step_detailed(&spin, params, rng)?;
                spin = next;
                if t % every == 0 {
                    let mut rec = observe_edges(t, &bonds, &partition, m);
                    rec.color_counts = Some(spin.sorted_counts());
                    traj.records.push(rec);
                }
            }
        }
        (DynamicsKind::Cm | DynamicsKind::Glauber, ChainState::Edges(mut edges)) => {
            if edges.n() != params.n() {
                return Err(Error::InvalidConfig(format!(
                    "initial configuration has n = {}, params have n = {}",
                    edges.n(),
                    params.n()
                )));
            }
            traj.records
                .push(observe_edges(0, &edges, &cluster_decompose(&edges), m));
            for t in 1..=steps {
                edges = match kind {
                    DynamicsKind::Cm => cm_step(&edges, params, rng),
                    _ => glauber_step(&edges, params, rng),
                };
                if t % every == 0 {
                    traj.records
                        .push(observe_edges(t, &edges, &cluster_decompose(&edges), m));
                }
            }
        }
        (kind, _) => return Err(Error::MismatchedInit(kind.name())),
    }
    Ok(traj)
}
