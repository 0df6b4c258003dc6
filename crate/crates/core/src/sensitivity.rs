//! Fisher-information phase sensitivity of post-selected fringes.
//!
//! For k trials of an N-photon state with detection probability p(φ) the
//! count C_k = k p has variance k p(1−p), so δφ² = k p(1−p)/(k p′)² and
//! S² = 1/(kN δφ²) = p′²/(N p(1−p)). S = 1 is the standard quantum limit
//! and S = √N the Heisenberg limit.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{InputConfig, SourceParams};
use crate::error::{Error, Result};
use crate::fringe::{phase_grid, AnalyticKind, FringeModel, FringeScan, ScanSource, SweepVar};
use crate::propagator::DetectionScheme;

/// Grid used for model sensitivity curves over [0, 2π].
pub const SENSITIVITY_POINTS: usize = 2881;
/// Minimum samples per fringe period for a stable five-point derivative.
pub const MIN_POINTS_PER_PERIOD: usize = 16;
/// S is masked where p is this close to 0 or 1.
pub const PROBABILITY_MASK: f64 = 1e-9;
const CLIP_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub phis: Vec<f64>,
    /// Per-phase S; NaN where masked or where no derivative is available.
    pub s_values: Vec<f64>,
    pub s_max: f64,
    /// Phase at which `s_max` occurs.
    pub phi_at_max: f64,
    pub photons: u32,
    pub scheme: String,
}

fn s_squared(p: f64, dp: f64, photons: u32, trials: f64) -> f64 {
    if !(PROBABILITY_MASK..=1.0 - PROBABILITY_MASK).contains(&p) {
        return f64::NAN;
    }
    let var = trials * p * (1.0 - p);
    let slope = trials * dp;
    let dphi2 = var / (slope * slope);
    1.0 / (trials * f64::from(photons) * dphi2)
}

fn finish(phis: Vec<f64>, s_values: Vec<f64>, photons: u32, scheme: String) -> Result<SensitivityCurve> {
    let limit = f64::from(photons).sqrt() * (1.0 + CLIP_TOLERANCE);
    let mut best: Option<(f64, f64)> = None;
    for (&phi, &s) in phis.iter().zip(&s_values) {
        if s.is_finite() && s <= limit && best.is_none_or(|(b, _)| s > b) {
            best = Some((s, phi));
        }
    }
    let (s_max, phi_at_max) = best.ok_or_else(|| Error::param("scan", "no phase with a finite sensitivity"))?;
    Ok(SensitivityCurve { phis, s_values, s_max, phi_at_max, photons, scheme })
}

fn scheme_label(scan: &FringeScan) -> String {
    match &scan.source {
        ScanSource::Model { config, scheme } => format!("{config}:{scheme}"),
        ScanSource::Analytic(kind) => format!("{kind:?}"),
        ScanSource::Data => "data".to_string(),
    }
}

/// Sensitivity of a sampled fringe for `photons` photons per trial.
pub fn phase_sensitivity(scan: &FringeScan, photons: u32) -> Result<SensitivityCurve> {
    phase_sensitivity_with_trials(scan, photons, 1.0)
}

/// As [`phase_sensitivity`], with the notional trial count made explicit.
pub fn phase_sensitivity_with_trials(scan: &FringeScan, photons: u32, trials: f64) -> Result<SensitivityCurve> {
    if photons == 0 {
        return Err(Error::param("photons", "must be positive"));
    }
    if trials.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::param("trials", "must be positive"));
    }
    let n = scan.len();
    if n < 5 {
        return Err(Error::GridTooCoarse { points_per_period: n as f64, required: MIN_POINTS_PER_PERIOD });
    }
    let h = (scan.phis[n - 1] - scan.phis[0]) / (n - 1) as f64;
    if scan.phis.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-6 * h) {
        return Err(Error::param("phis", "sensitivity needs a uniform phase grid"));
    }
    let points_per_period = TAU / f64::from(photons) / h;
    if points_per_period < MIN_POINTS_PER_PERIOD as f64 {
        return Err(Error::GridTooCoarse { points_per_period, required: MIN_POINTS_PER_PERIOD });
    }

    let span = scan.phis[n - 1] - scan.phis[0];
    let circular = (span - TAU).abs() < 1e-9 * TAU;
    let m = if circular { n - 1 } else { n };
    let p = &scan.probs;
    let at = |i: isize| -> Option<f64> {
        if circular {
            Some(p[i.rem_euclid(m as isize) as usize])
        } else if i >= 0 && (i as usize) < m {
            Some(p[i as usize])
        } else {
            None
        }
    };

    let s_values: Vec<f64> = (0..n as isize)
        .map(|i| {
            let (Some(a), Some(b), Some(c), Some(d)) = (at(i - 2), at(i - 1), at(i + 1), at(i + 2)) else {
                return f64::NAN;
            };
            let dp = (a - 8.0 * b + 8.0 * c - d) / (12.0 * h);
            s_squared(p[i as usize], dp, photons, trials).sqrt()
        })
        .collect();
    finish(scan.phis.clone(), s_values, photons, scheme_label(scan))
}

/// Sensitivity of a closed-form fringe with its exact derivative.
pub fn phase_sensitivity_analytic(kind: AnalyticKind, phis: &[f64]) -> Result<SensitivityCurve> {
    let photons = kind.order()?;
    let s_values = phis
        .iter()
        .map(|&phi| Ok(s_squared(kind.value(phi)?, kind.derivative(phi)?, photons, 1.0).sqrt()))
        .collect::<Result<Vec<f64>>>()?;
    finish(phis.to_vec(), s_values, photons, format!("{kind:?}"))
}

/// |2,2⟩ fringe for simultaneous (3,1) and (1,3) detection, evaluated under
/// `params` as given.
pub fn combined_scheme_fringe(params: &SourceParams, phis: &[f64]) -> Result<FringeScan> {
    FringeModel::new(InputConfig::Ket22, *params, DetectionScheme::combined_31_13())?.scan(phis)
}

/// Sensitivity curve of the model on the standard grid. Interferometer and
/// detector losses are excluded: all η are set to 1.
pub fn model_sensitivity(
    config: InputConfig,
    scheme: &DetectionScheme,
    params: &SourceParams,
) -> Result<SensitivityCurve> {
    let phis = phase_grid(0.0, TAU, SENSITIVITY_POINTS);
    let model = FringeModel::new(config, params.lossless(), scheme.clone())?;
    let probs: Vec<f64> = phis.iter().map(|&phi| model.probability(phi)).collect::<Result<_>>()?;
    let scan = FringeScan::new(phis, probs, ScanSource::Model { config, scheme: scheme.clone() })?;
    phase_sensitivity(&scan, config.photons())
}

/// S_max at each grid value of `var`, losses excluded.
pub fn sensitivity_sweep(
    config: InputConfig,
    scheme: &DetectionScheme,
    base: &SourceParams,
    var: SweepVar,
    grid: &[f64],
) -> Result<Vec<f64>> {
    grid.par_iter().map(|&v| Ok(model_sensitivity(config, scheme, &var.apply(base, v))?.s_max)).collect()
}
