//! Exact ground truth at small `n`: enumerated measures and transition
//! kernels, reversibility checks, spectral gap, conductance, mixing time and
//! the cluster-coloring identities.
//!
//! Indexing contract (used by fixtures):
//! - an edge configuration on `n` vertices is the integer whose bit `k` is set
//!   iff the `k`-th pair in lexicographic order is present;
//! - a spin configuration is `Σ_i colors[i] · q^i` with 0-based colors, vertex 0
//!   least significant.

mod coloring;
mod kernel;
mod measure;
mod spectral;

pub use coloring::{
    bgj_coloring_check, es_coupling_check, iterated_coloring_check, ColoringDeviation,
    EsDeviation, IteratedColoringDeviation,
};
pub use kernel::{
    build_kernel, detailed_balance_violation, stationarity_residual, write_fixture, KernelTable,
};
pub use measure::{
    enumerate_fk_measure, enumerate_potts_measure, fk_measure_with_p, mask_components,
    potts_measure_with_beta, spin_from_index, spin_index, MeasureTable, StateSpace,
};
pub use spectral::{
    bottleneck_ratio, conductance_bounds, conductance_exhaustive, dense_spectrum, mixing_time,
    spectral_gap, spectral_gap_dense, threshold_cuts, ConductanceBounds, Cut, MAX_DENSE_STATES,
    MAX_EXHAUSTIVE_CUT_STATES, MAX_TMIX_STATES, TMIX_THRESHOLD,
};

/// Compensated (Neumaier) summation.
pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Total-variation distance between two probability vectors of equal length.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    0.5 * neumaier_sum(a.iter().zip(b).map(|(x, y)| (x - y).abs()))
}
