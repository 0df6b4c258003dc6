//! Multi-photon interference in a lossy two-mode interferometer.
//!
//! The model follows photons from two input modes (`a`, `b`) through a
//! 50:50 beamsplitter, a relative phase shift, lossy interferometer arms,
//! a second beamsplitter and lossy detection channels. Every loss channel
//! feeds a single undetected mode `g`. Mixed inputs produced by an imperfect
//! single-photon source (finite g²(0), partial indistinguishability) are
//! represented as weighted ensembles of pure Fock states whose photons carry
//! distinguishability labels.
//!
//! On top of the propagation engine the crate provides fringe scans and
//! contrast analysis, Fisher-information phase sensitivity, the temporal
//! wavepacket-overlap map, phase-plate calibration, and a bounded
//! Levenberg-Marquardt fitter with the staged fixed/free parameter workflow.
//!
//! ```
//! use fringelab::{InputConfig, SourceParams, DetectionScheme, FringeModel};
//!
//! let model = FringeModel::new(InputConfig::Ket22, SourceParams::ideal(), DetectionScheme::at_least(3, 1)).unwrap();
//! let p = model.probability(std::f64::consts::FRAC_PI_4).unwrap();
//! assert!((p - 0.375).abs() < 1e-12);
//! ```

pub mod calib;
pub mod ensemble;
pub mod error;
pub mod fitsolver;
pub mod fock;
pub mod fringe;
pub mod io;
pub mod network;
pub mod propagator;
mod quadrature;
pub mod sensitivity;
pub mod temporal;

pub use crate::calib::{calibrate, fit_quadratic_plate_model, phase_from_intensity, CalibrationCurve, PlateFit};
pub use crate::ensemble::{
    build_ensemble, build_ensemble_with, ensemble_probability, EnsembleEntry, EnsembleOptions, InputConfig,
    SourceParams, WeightedEnsemble,
};
pub use crate::error::{Error, Result};
pub use crate::fitsolver::{
    contrast_vs_g2_curve, fit, staged_workflow, synthesize, DataPoint, FitOptions, FitProblem, FitResult, FreeParam,
    ParamEstimate, ParamKind, StagedOptions, StagedResult,
};
pub use crate::fock::{enumerate_output_configs, ClassId, LabeledFockState, ModeLabel, SpatialMode, Truncation};
pub use crate::fringe::{
    analytic_fringe, contrast, parameter_sweep, phase_grid, photon_number_product_expectation, scan, AnalyticKind,
    ContrastPair, ContrastReport, FringeModel, FringeScan, MinimumKind, ModelOptions, ScanSource, SweepVar,
};
pub use crate::network::{
    beamsplitter_matrix, loss_matrix, phase_matrix, transfer_coefficients, Efficiencies, LossConvention, NetworkParams,
    TransferCoefficients,
};
pub use crate::propagator::{
    detection_probability, exact_output_probability, propagate, AmplitudeTable, DetectionScheme, Propagator,
};
pub use crate::sensitivity::{
    combined_scheme_fringe, model_sensitivity, phase_sensitivity, phase_sensitivity_analytic, sensitivity_sweep,
    SensitivityCurve,
};
pub use crate::temporal::{
    amplitude_overlap, contrast_vs_separation, emg_density, temporal_overlap, SeparationPoint, WavepacketParams,
};

/// Crate version, embedded in every output file written by the CLI.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
