//! Shared workloads for the benchmarks.

use fringelab::{phase_grid, FringeModel, InputConfig, SourceParams};

/// The four-photon model at the published fit values.
pub fn fitted_ket22() -> FringeModel {
    FringeModel::new(InputConfig::Ket22, SourceParams::fitted(), InputConfig::Ket22.default_scheme())
        .expect("valid parameters")
}

pub fn full_grid(points: usize) -> Vec<f64> {
    phase_grid(0.0, std::f64::consts::TAU, points)
}
