//! Temporal wavepackets and the separation → indistinguishability map.
//!
//! The emission profile is an exponentially modified Gaussian: a Gaussian
//! excitation of width w_p convolved with a decay of lifetime T1. Time is
//! measured in units of w_p, so x = t/w_p and K = T1/w_p. The wavefunction is
//! taken as √f so that identical packets overlap to exactly one.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::ensemble::{InputConfig, SourceParams};
use crate::error::{Error, Result};
use crate::fringe::{contrast, phase_grid, FringeModel, DEFAULT_POINTS};
use crate::propagator::DetectionScheme;
use crate::quadrature::integrate;

const OVERLAP_ABS_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavepacketParams {
    /// Radiative lifetime in ps.
    pub t1_ps: f64,
    /// Excitation pulse width in ps.
    pub wp_ps: f64,
}

impl WavepacketParams {
    pub fn new(t1_ps: f64, wp_ps: f64) -> Result<Self> {
        let p = WavepacketParams { t1_ps, wp_ps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t1_ps > 0.0 && self.t1_ps.is_finite()) {
            return Err(Error::param("t1", "must be positive"));
        }
        if !(self.wp_ps > 0.0 && self.wp_ps.is_finite()) {
            return Err(Error::param("wp", "must be positive"));
        }
        Ok(())
    }

    pub fn k(&self) -> f64 {
        self.t1_ps / self.wp_ps
    }
}

/// exp(z²) erfc(z) for z ≥ 0.
fn erfcx(z: f64) -> f64 {
    if z < 5.0 {
        return (z * z).exp() * erfc(z);
    }
    // Continued fraction  erfcx(z) = (1/√π) / (z + (1/2)/(z + 1/(z + (3/2)/(z + ...)))).
    let mut tail = 0.0;
    for n in (1..=60).rev() {
        tail = (0.5 * f64::from(n)) / (z + tail);
    }
    1.0 / (PI.sqrt() * (z + tail))
}

/// f(x, K) = (1/2K) exp(1/(2K²) − x/K) erfc((1/K − x)/√2).
pub fn emg_density(x: f64, k: f64) -> Result<f64> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::param("K", "must be positive"));
    }
    Ok(emg(x, k))
}

fn emg(x: f64, k: f64) -> f64 {
    let z = (1.0 / k - x) * FRAC_1_SQRT_2;
    let v = if z > 0.0 { (-0.5 * x * x).exp() * erfcx(z) } else { (0.5 / (k * k) - x / k).exp() * erfc(z) };
    v / (2.0 * k)
}

/// ∫ √f(x) √f(x − τ/w_p) dx.
pub fn amplitude_overlap(tau_ps: f64, params: &WavepacketParams) -> Result<f64> {
    params.validate()?;
    if !tau_ps.is_finite() {
        return Err(Error::param("tau", "must be finite"));
    }
    let k = params.k();
    // The overlap is symmetric in τ; use the non-negative shift.
    let s = tau_ps.abs() / params.wp_ps;
    let lo = -40.0;
    let hi = s + 40.0 + 40.0 * k;
    let mut breaks = vec![lo, 0.0];
    if s > 0.0 {
        breaks.push(s);
    }
    breaks.push(hi);
    let value = integrate(|x| (emg(x, k) * emg(x - s, k)).sqrt(), &breaks, OVERLAP_ABS_TOL, 1e-12)?;
    Ok(value.clamp(0.0, 1.0))
}

/// ℐ(τ) = |∫ ψ(t) ψ(t − τ) dt|², the mode overlap that sets two-photon
/// interference visibility.
pub fn temporal_overlap(tau_ps: f64, params: &WavepacketParams) -> Result<f64> {
    Ok(amplitude_overlap(tau_ps, params)?.powi(2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationPoint {
    pub tau_ps: f64,
    pub overlap: f64,
    pub contrast: f64,
}

/// Mean |1,1⟩ coincidence contrast as the two photons are separated by τ.
/// The source's own ℐ multiplies the temporal overlap.
pub fn contrast_vs_separation(
    tau_grid: &[f64],
    params: &WavepacketParams,
    source: &SourceParams,
) -> Result<Vec<SeparationPoint>> {
    let phis = phase_grid(0.0, TAU, DEFAULT_POINTS);
    tau_grid
        .par_iter()
        .map(|&tau| {
            let overlap = temporal_overlap(tau, params)?;
            let p = SourceParams { indist: source.indist * overlap, ..*source };
            let scan = FringeModel::new(InputConfig::Ket11, p, DetectionScheme::at_least(1, 1))?.scan(&phis)?;
            Ok(SeparationPoint { tau_ps: tau, overlap, contrast: contrast(&scan)?.mean_contrast })
        })
        .collect()
}
