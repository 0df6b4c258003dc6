//! Fringe scans over the phase, contrast extraction and the ideal
//! closed-form fringes.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{build_ensemble_with, EnsembleOptions, InputConfig, SourceParams, WeightedEnsemble};
use crate::error::{Error, Result};
use crate::fock::{factorial, Truncation};
use crate::network::{transfer_coefficients, LossConvention, NetworkParams};
use crate::propagator::{DetectionScheme, Propagator};

/// Default number of points in a full-period scan.
pub const DEFAULT_POINTS: usize = 721;

/// `n` evenly spaced points from `start` to `end` inclusive.
pub fn phase_grid(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (end - start) / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { end } else { start + step * i as f64 }).collect()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub convention: LossConvention,
    pub renormalize: bool,
    pub truncation: Truncation,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions { convention: LossConvention::Verbatim, renormalize: false, truncation: Truncation::default() }
    }
}

/// An ensemble, a detection scheme and network settings, ready to be
/// evaluated at any phase.
#[derive(Clone, Debug)]
pub struct FringeModel {
    config: InputConfig,
    params: SourceParams,
    scheme: DetectionScheme,
    options: ModelOptions,
    ensemble: WeightedEnsemble,
    propagator: Propagator,
}

impl FringeModel {
    pub fn new(config: InputConfig, params: SourceParams, scheme: DetectionScheme) -> Result<Self> {
        Self::with_options(config, params, scheme, ModelOptions::default())
    }

    pub fn with_options(
        config: InputConfig,
        params: SourceParams,
        scheme: DetectionScheme,
        options: ModelOptions,
    ) -> Result<Self> {
        let ensemble = build_ensemble_with(config, &params, EnsembleOptions { renormalize: options.renormalize })?;
        Ok(FringeModel { config, params, scheme, options, ensemble, propagator: Propagator::new(options.truncation) })
    }

    pub fn config(&self) -> InputConfig {
        self.config
    }

    pub fn params(&self) -> &SourceParams {
        &self.params
    }

    pub fn scheme(&self) -> &DetectionScheme {
        &self.scheme
    }

    pub fn options(&self) -> &ModelOptions {
        &self.options
    }

    pub fn ensemble(&self) -> &WeightedEnsemble {
        &self.ensemble
    }

    pub fn probability(&self, phi: f64) -> Result<f64> {
        let net = NetworkParams::new(phi, self.params.eta).with_convention(self.options.convention);
        let coeffs = transfer_coefficients(&net)?;
        self.ensemble.probability(&self.propagator, &coeffs, &self.scheme)
    }

    /// Evaluates the model at every phase, in parallel, preserving order.
    pub fn probabilities(&self, phis: &[f64]) -> Result<Vec<f64>> {
        phis.par_iter().map(|&phi| self.probability(phi)).collect()
    }

    pub fn scan(&self, phis: &[f64]) -> Result<FringeScan> {
        let probs = self.probabilities(phis)?;
        FringeScan::new(phis.to_vec(), probs, ScanSource::Model { config: self.config, scheme: self.scheme.clone() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanSource {
    Model { config: InputConfig, scheme: DetectionScheme },
    Analytic(AnalyticKind),
    Data,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FringeScan {
    pub phis: Vec<f64>,
    pub probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<Vec<f64>>,
    pub source: ScanSource,
}

impl FringeScan {
    pub fn new(phis: Vec<f64>, probs: Vec<f64>, source: ScanSource) -> Result<Self> {
        if phis.len() != probs.len() {
            return Err(Error::param("probs", format!("{} values for {} phases", probs.len(), phis.len())));
        }
        if phis.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("phis", "must be strictly increasing"));
        }
        Ok(FringeScan { phis, probs, sigmas: None, source })
    }

    /// Measured values with per-point uncertainties.
    pub fn from_data(phis: Vec<f64>, values: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.len() != values.len() {
            return Err(Error::param("sigmas", "length differs from values"));
        }
        let mut scan = Self::new(phis, values, ScanSource::Data)?;
        scan.sigmas = Some(sigmas);
        Ok(scan)
    }

    pub fn len(&self) -> usize {
        self.phis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phis.is_empty()
    }
}

/// Scan of `config` under `params` and `scheme` with default options.
pub fn scan(config: InputConfig, params: &SourceParams, scheme: &DetectionScheme, phis: &[f64]) -> Result<FringeScan> {
    FringeModel::new(config, *params, scheme.clone())?.scan(phis)
}

/// Ideal closed-form fringes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalyticKind {
    /// |1,0⟩, one photon detected in `e`.
    P10,
    /// |1,1⟩ coincidences.
    P11,
    /// |2,0⟩ coincidences.
    P20,
    /// |2,2⟩ with (3,1) detection.
    P22,
    /// |1,1⟩ with fully distinguishable photons.
    Distinguishable11,
    /// Two N/2-photon Fock states; fringe of order N.
    HollandBurnett(u32),
}

impl AnalyticKind {
    /// (N, offset, amplitude) of p = offset + amplitude · cos(Nφ).
    fn harmonic(self) -> Result<(f64, f64, f64)> {
        Ok(match self {
            AnalyticKind::P10 => (1.0, 0.5, -0.5),
            AnalyticKind::P11 => (2.0, 0.5, 0.5),
            AnalyticKind::P20 => (2.0, 0.25, -0.25),
            AnalyticKind::P22 => (4.0, 3.0 / 16.0, -3.0 / 16.0),
            AnalyticKind::Distinguishable11 => (2.0, 0.75, 0.25),
            AnalyticKind::HollandBurnett(n) => {
                let eta_i = holland_burnett_efficiency(n)?;
                (f64::from(n), eta_i / 2.0, -eta_i / 2.0)
            }
        })
    }

    pub fn value(self, phi: f64) -> Result<f64> {
        let (n, c0, c1) = self.harmonic()?;
        Ok(c0 + c1 * (n * phi).cos())
    }

    pub fn derivative(self, phi: f64) -> Result<f64> {
        let (n, _, c1) = self.harmonic()?;
        Ok(-c1 * n * (n * phi).sin())
    }

    /// Oscillation frequency in φ.
    pub fn order(self) -> Result<u32> {
        Ok(self.harmonic()?.0 as u32)
    }
}

fn check_even(n: u32) -> Result<()> {
    if n == 0 || n % 2 == 1 {
        return Err(Error::param("N", format!("must be a positive even integer, got {n}")));
    }
    Ok(())
}

/// 2^{−N} N!/((N/2)!)².
pub fn holland_burnett_efficiency(n: u32) -> Result<f64> {
    check_even(n)?;
    Ok(factorial(n) / factorial(n / 2).powi(2) / 2f64.powi(n as i32))
}

pub fn analytic_fringe(kind: AnalyticKind, phi: f64) -> Result<f64> {
    kind.value(phi)
}

/// ⟨n_e n_f⟩ for two N/2-photon Fock states: (N/8)(2N − (2+N) sin²φ).
pub fn photon_number_product_expectation(n: u32, phi: f64) -> Result<f64> {
    check_even(n)?;
    let n = f64::from(n);
    Ok(n / 8.0 * (2.0 * n - (2.0 + n) * phi.sin().powi(2)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MinimumKind {
    Deep,
    Shallow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastPair {
    pub phi_max: f64,
    pub phi_min: f64,
    pub i_max: f64,
    pub i_min: f64,
    pub contrast: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<MinimumKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastReport {
    pub mean_contrast: f64,
    pub pairs: Vec<ContrastPair>,
    pub deep_contrast: Option<f64>,
    pub shallow_contrast: Option<f64>,
    pub uncertainty: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Extremum {
    phi: f64,
    value: f64,
    is_max: bool,
}

/// Vertex of the parabola through three equally spaced samples.
fn refine(phi: f64, h: f64, y0: f64, y1: f64, y2: f64) -> (f64, f64) {
    let curv = y0 - 2.0 * y1 + y2;
    if curv == 0.0 {
        return (phi, y1);
    }
    let delta = 0.5 * (y0 - y2) / curv;
    (phi + delta * h, y1 - 0.125 * (y0 - y2) * (y0 - y2) / curv)
}

fn find_extrema(phis: &[f64], probs: &[f64], circular: bool) -> Vec<Extremum> {
    let n = probs.len();
    let mut out: Vec<Extremum> = Vec::new();
    let (lo, hi) = if circular { (0, n) } else { (1, n.saturating_sub(1)) };
    let h = if n > 1 { (phis[n - 1] - phis[0]) / (n - 1) as f64 } else { 0.0 };
    for i in lo..hi {
        let ip = (i + n - 1) % n;
        let inx = (i + 1) % n;
        let (y0, y1, y2) = (probs[ip], probs[i], probs[inx]);
        let is_max = y1 > y0 && y1 >= y2;
        let is_min = y1 < y0 && y1 <= y2;
        if !is_max && !is_min {
            continue;
        }
        let (phi, value) = refine(phis[i], h, y0, y1, y2);
        let e = Extremum { phi, value, is_max };
        // Merge plateaus and noise wiggles into the stronger extremum.
        match out.last_mut() {
            Some(last) if last.is_max == is_max => {
                if (is_max && value > last.value) || (!is_max && value < last.value) {
                    *last = e;
                }
            }
            _ => out.push(e),
        }
    }
    if circular && out.len() > 1 && out[0].is_max == out[out.len() - 1].is_max {
        let last = out.pop().expect("non-empty");
        let first = &mut out[0];
        if (last.is_max && last.value > first.value) || (!last.is_max && last.value < first.value) {
            *first = last;
        }
    }
    out
}

fn classify(phi_min: f64) -> MinimumKind {
    let r = phi_min.rem_euclid(PI);
    let to_deep = r.min(PI - r);
    let to_shallow = (r - PI / 2.0).abs();
    if to_deep <= to_shallow {
        MinimumKind::Deep
    } else {
        MinimumKind::Shallow
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Per-pair and mean contrast of a scan.
///
/// A scan spanning exactly 2π is treated as periodic. Every adjacent
/// maximum/minimum pair contributes one contrast. When the minima are spaced
/// by about π/2 (four-fold fringes) each pair is also labelled deep (minimum
/// near kπ) or shallow (near kπ + π/2).
pub fn contrast(scan: &FringeScan) -> Result<ContrastReport> {
    let n = scan.len();
    if n < 3 {
        return Err(Error::NoExtrema);
    }
    let span = scan.phis[n - 1] - scan.phis[0];
    let circular = (span - TAU).abs() < 1e-9 * TAU;
    let m = if circular { n - 1 } else { n };
    let extrema = find_extrema(&scan.phis[..m], &scan.probs[..m], circular);
    if extrema.len() < 2 {
        return Err(Error::NoExtrema);
    }

    let npairs = if circular { extrema.len() } else { extrema.len() - 1 };
    let mut pairs: Vec<ContrastPair> = (0..npairs)
        .map(|k| {
            let (x, y) = (extrema[k], extrema[(k + 1) % extrema.len()]);
            let (mx, mn) = if x.is_max { (x, y) } else { (y, x) };
            let sum = mx.value + mn.value;
            let contrast = if sum != 0.0 { (mx.value - mn.value) / sum } else { 0.0 };
            ContrastPair { phi_max: mx.phi, phi_min: mn.phi, i_max: mx.value, i_min: mn.value, contrast, kind: None }
        })
        .collect();

    let minima: Vec<f64> = extrema.iter().filter(|e| !e.is_max).map(|e| e.phi).collect();
    let fourfold = minima.len() >= 2 && {
        let spacing = (minima[minima.len() - 1] - minima[0]) / (minima.len() - 1) as f64;
        (spacing - PI / 2.0).abs() < PI / 8.0
    };
    let (mut deep, mut shallow) = (Vec::new(), Vec::new());
    if fourfold {
        for p in &mut pairs {
            let kind = classify(p.phi_min);
            p.kind = Some(kind);
            match kind {
                MinimumKind::Deep => deep.push(p.contrast),
                MinimumKind::Shallow => shallow.push(p.contrast),
            }
        }
    }

    let cs: Vec<f64> = pairs.iter().map(|p| p.contrast).collect();
    let mean_contrast = mean(&cs).expect("at least one pair");
    let uncertainty = scan.sigmas.as_ref().and_then(|_| {
        (cs.len() > 1).then(|| {
            let var = cs.iter().map(|c| (c - mean_contrast).powi(2)).sum::<f64>() / (cs.len() - 1) as f64;
            (var / cs.len() as f64).sqrt()
        })
    });
    Ok(ContrastReport {
        mean_contrast,
        pairs,
        deep_contrast: mean(&deep),
        shallow_contrast: mean(&shallow),
        uncertainty,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVar {
    Indist,
    G2,
    EtaC,
}

impl SweepVar {
    pub fn apply(self, params: &SourceParams, value: f64) -> SourceParams {
        let mut p = *params;
        match self {
            SweepVar::Indist => p.indist = value,
            SweepVar::G2 => p.g2 = value,
            SweepVar::EtaC => p.eta.eta_c = value,
        }
        p
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepVar::Indist => "indist",
            SweepVar::G2 => "g2",
            SweepVar::EtaC => "eta_c",
        }
    }
}

impl std::str::FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "indist" | "i" => Ok(SweepVar::Indist),
            "g2" => Ok(SweepVar::G2),
            "eta_c" | "etac" => Ok(SweepVar::EtaC),
            _ => Err(Error::Parse(format!("unknown sweep variable `{s}` (indist, g2, eta_c)"))),
        }
    }
}

/// Contrast at each grid value of `var`, starting from `base`, using a
/// default full-period scan.
pub fn parameter_sweep(
    config: InputConfig,
    scheme: &DetectionScheme,
    base: &SourceParams,
    var: SweepVar,
    grid: &[f64],
) -> Result<Vec<ContrastReport>> {
    let phis = phase_grid(0.0, TAU, DEFAULT_POINTS);
    grid.par_iter()
        .map(|&v| {
            let model = FringeModel::new(config, var.apply(base, v), scheme.clone())?;
            let probs: Vec<f64> = phis.iter().map(|&phi| model.probability(phi)).collect::<Result<_>>()?;
            contrast(&FringeScan::new(phis.clone(), probs, ScanSource::Model { config, scheme: scheme.clone() })?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_grid() -> Vec<f64> {
        phase_grid(0.0, TAU, DEFAULT_POINTS)
    }

    fn analytic_scan(kind: AnalyticKind, phis: &[f64]) -> FringeScan {
        let probs = phis.iter().map(|&p| kind.value(p).unwrap()).collect();
        FringeScan::new(phis.to_vec(), probs, ScanSource::Analytic(kind)).unwrap()
    }

    #[test]
    fn grid_endpoints() {
        let g = phase_grid(0.0, TAU, 5);
        assert_eq!(g.len(), 5);
        assert_eq!(g[4], TAU);
        assert!((g[2] - PI).abs() < 1e-15);
        assert!(phase_grid(0.0, 1.0, 0).is_empty());
    }

    #[test]
    fn analytic_values() {
        assert!((analytic_fringe(AnalyticKind::HollandBurnett(4), PI / 4.0).unwrap() - 0.375).abs() < 1e-15);
        assert!((analytic_fringe(AnalyticKind::HollandBurnett(2), PI / 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((analytic_fringe(AnalyticKind::Distinguishable11, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((analytic_fringe(AnalyticKind::P20, PI / 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(analytic_fringe(AnalyticKind::HollandBurnett(3), 0.0).is_err());
        assert!(analytic_fringe(AnalyticKind::HollandBurnett(0), 0.0).is_err());
    }

    #[test]
    fn analytic_derivative_matches_difference() {
        let h = 1e-6;
        for kind in [AnalyticKind::P10, AnalyticKind::P22, AnalyticKind::HollandBurnett(6)] {
            let fd = (kind.value(0.7 + h).unwrap() - kind.value(0.7 - h).unwrap()) / (2.0 * h);
            assert!((fd - kind.derivative(0.7).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn product_expectation() {
        assert_eq!(photon_number_product_expectation(4, 0.0).unwrap(), 4.0);
        assert_eq!(photon_number_product_expectation(2, 0.0).unwrap(), 1.0);
        assert!((photon_number_product_expectation(4, PI / 2.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(photon_number_product_expectation(5, 0.0).is_err());
    }

    #[test]
    fn contrast_of_ideal_and_distinguishable_pairs() {
        let phis = full_grid();
        let r = contrast(&analytic_scan(AnalyticKind::P11, &phis)).unwrap();
        assert!((r.mean_contrast - 1.0).abs() < 1e-12);
        assert_eq!(r.pairs.len(), 4);
        assert!(r.deep_contrast.is_none());
        let r = contrast(&analytic_scan(AnalyticKind::Distinguishable11, &phis)).unwrap();
        assert!((r.mean_contrast - 1.0 / 3.0).abs() < 1e-9);
        assert!(r.uncertainty.is_none());
    }

    #[test]
    fn fourfold_scan_is_classified() {
        let r = contrast(&analytic_scan(AnalyticKind::P22, &full_grid())).unwrap();
        assert_eq!(r.pairs.len(), 8);
        assert!(r.pairs.iter().all(|p| p.kind.is_some()));
        assert!((r.deep_contrast.unwrap() - 1.0).abs() < 1e-12);
        assert!((r.shallow_contrast.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refinement_recovers_off_grid_extremum() {
        let phis = phase_grid(0.0, TAU, 200);
        let probs: Vec<f64> = phis.iter().map(|p| 0.6 + 0.3 * (p - 0.123).cos()).collect();
        let r = contrast(&FringeScan::new(phis, probs, ScanSource::Data).unwrap()).unwrap();
        let pair = r.pairs[0];
        assert!((pair.i_max - 0.9).abs() < 1e-6);
        assert!((pair.phi_max - 0.123).abs() < 1e-3);
        assert!((r.mean_contrast - 0.5).abs() < 1e-5);
    }

    #[test]
    fn flat_scan_has_no_extrema() {
        let phis = full_grid();
        let probs = vec![0.5; phis.len()];
        assert!(matches!(contrast(&FringeScan::new(phis, probs, ScanSource::Data).unwrap()), Err(Error::NoExtrema)));
    }

    #[test]
    fn uncertainty_only_with_sigmas() {
        let phis = phase_grid(0.0, TAU, 361);
        let vals: Vec<f64> = phis.iter().map(|p| 0.5 + 0.4 * (2.0 * p).cos() + 0.02 * (3.0 * p).sin()).collect();
        let sig = vec![0.01; phis.len()];
        let r = contrast(&FringeScan::from_data(phis, vals, sig).unwrap()).unwrap();
        assert!(r.uncertainty.unwrap() > 0.0);
    }

    #[test]
    fn scan_validation() {
        assert!(FringeScan::new(vec![0.0, 0.0], vec![0.1, 0.2], ScanSource::Data).is_err());
        assert!(FringeScan::new(vec![0.0, 1.0], vec![0.1], ScanSource::Data).is_err());
    }

    #[test]
    fn model_scan_matches_single_photon_fringe() {
        let phis = phase_grid(0.0, TAU, 37);
        let s = scan(InputConfig::Ket10, &SourceParams::ideal(), &DetectionScheme::at_least(1, 0), &phis).unwrap();
        for (phi, p) in s.phis.iter().zip(&s.probs) {
            assert!((p - (1.0 - phi.cos()) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sweep_ket10_is_flat_in_indistinguishability() {
        let reports = parameter_sweep(
            InputConfig::Ket10,
            &DetectionScheme::at_least(1, 0),
            &SourceParams::ideal(),
            SweepVar::Indist,
            &[0.0, 0.5, 1.0],
        )
        .unwrap();
        for r in reports {
            assert!((r.mean_contrast - 1.0).abs() < 1e-12);
        }
    }
}
