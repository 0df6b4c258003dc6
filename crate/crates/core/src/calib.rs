//! Phase-plate calibration from a single-photon intensity scan.
//!
//! The fringe I(θ) = cos φ(θ) is inverted with acos, which folds φ into
//! [0, π]. The fold is undone by switching branch at every direction
//! reversal of I, which must happen at an extremum (I near ±1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hysteresis on the normalised intensity for reversal detection.
pub const REVERSAL_HYSTERESIS: f64 = 0.02;
/// A reversal is accepted only where |I_norm| exceeds this.
pub const EXTREMUM_THRESHOLD: f64 = 0.75;
/// Fraction of samples at each end used for the robust extrema.
pub const EXTREMA_FRACTION: f64 = 0.02;
/// Phase equivalent of a λ/10 optical path error.
pub const FLATNESS_BOUND: f64 = std::f64::consts::TAU / 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateFit {
    /// c in φ = c·θ² (+ offset).
    pub coefficient: f64,
    pub offset: Option<f64>,
    pub residuals: Vec<f64>,
    /// Indices of points whose residual exceeds [`FLATNESS_BOUND`].
    pub flagged: Vec<usize>,
    pub rms_residual: f64,
}

impl PlateFit {
    pub fn within_flatness(&self) -> bool {
        self.flagged.is_empty()
    }

    pub fn predict(&self, theta: f64) -> f64 {
        self.coefficient * theta * theta + self.offset.unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub fit: PlateFit,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Extreme sample of a tail after discarding outliers, judged by the
/// tail's median and median absolute deviation.
fn tail_extreme(tail: &[f64], upper: bool) -> f64 {
    let med = median(tail);
    let mut dev: Vec<f64> = tail.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let cut = 5.0 * 1.4826 * median(&dev) + 1e-12 * med.abs();
    let kept = tail.iter().copied().filter(|v| (v - med).abs() <= cut);
    if upper {
        kept.fold(med, f64::max)
    } else {
        kept.fold(med, f64::min)
    }
}

fn robust_extrema(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = ((sorted.len() as f64 * EXTREMA_FRACTION).ceil() as usize).max(1);
    (tail_extreme(&sorted[..m], false), tail_extreme(&sorted[sorted.len() - m..], true))
}

/// Unwraps one side of the scan, ordered away from θ = 0.
fn unwrap_side(theta: &[f64], norm: &[f64]) -> Result<Vec<f64>> {
    let n = norm.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    // Branch index per sample: switches at the extreme sample of each run.
    let mut branch_at = vec![0i64; n];
    let mut direction: Option<bool> = None; // true = rising
    let mut extreme_idx = 0;
    let mut switches: Vec<usize> = Vec::new();
    let mut initial_rising = None;
    for i in 1..n {
        match direction {
            None => {
                if (norm[i] - norm[0]).abs() > REVERSAL_HYSTERESIS {
                    let rising = norm[i] > norm[0];
                    direction = Some(rising);
                    initial_rising = Some(rising);
                    extreme_idx = (0..=i)
                        .max_by(|&a, &b| {
                            let (x, y) = (norm[a], norm[b]);
                            if rising {
                                x.total_cmp(&y)
                            } else {
                                y.total_cmp(&x)
                            }
                        })
                        .expect("non-empty");
                }
            }
            Some(rising) => {
                let beyond = if rising { norm[i] >= norm[extreme_idx] } else { norm[i] <= norm[extreme_idx] };
                if beyond {
                    extreme_idx = i;
                } else if (norm[i] - norm[extreme_idx]).abs() > REVERSAL_HYSTERESIS {
                    if norm[extreme_idx].abs() < EXTREMUM_THRESHOLD {
                        return Err(Error::BranchAmbiguity { theta: theta[extreme_idx] });
                    }
                    switches.push(extreme_idx);
                    direction = Some(!rising);
                    extreme_idx = i;
                }
            }
        }
    }
    // A turn at a fringe extremum that the scan ends too soon to confirm.
    if direction.is_some()
        && extreme_idx + 1 < n
        && norm[extreme_idx].abs() >= 1.0 - REVERSAL_HYSTERESIS
        && norm[n - 1] != norm[extreme_idx]
    {
        switches.push(extreme_idx);
    }
    let start: i64 = if initial_rising == Some(true) { -1 } else { 0 };
    let mut k = start;
    let mut next = switches.iter().peekable();
    for (i, b) in branch_at.iter_mut().enumerate() {
        if next.peek().is_some_and(|&&s| i > s) {
            k += 1;
            next.next();
        }
        *b = k;
    }
    Ok(norm
        .iter()
        .zip(&branch_at)
        .map(|(&v, &k)| {
            let a = v.acos();
            if k.rem_euclid(2) == 0 {
                k as f64 * std::f64::consts::PI + a
            } else {
                (k + 1) as f64 * std::f64::consts::PI - a
            }
        })
        .collect())
}

/// Recovers φ(θ) from (θ, intensity) samples.
///
/// Intensities are normalised to [−1, 1] using the top and bottom 2% of
/// samples, with outliers in those tails discarded. A scan crossing θ = 0 is treated as two sides
/// unwrapped outward from the smallest |θ|, so φ grows with |θ| on both.
pub fn phase_from_intensity(samples: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    if samples.len() < 5 {
        return Err(Error::param("samples", "need at least 5 points"));
    }
    if samples.iter().any(|(t, i)| !t.is_finite() || !i.is_finite()) {
        return Err(Error::param("samples", "must be finite"));
    }
    let values: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (lo, hi) = robust_extrema(&values);
    let half = 0.5 * (hi - lo);
    if half <= 1e-12 * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE) {
        return Err(Error::ExtremaNotSpanned);
    }
    let mid = 0.5 * (hi + lo);

    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let split = sorted.partition_point(|s| s.0 < 0.0);
    let (neg, pos) = sorted.split_at(split);
    let mut out = Vec::with_capacity(samples.len());
    for side in [neg.iter().rev().copied().collect::<Vec<_>>(), pos.to_vec()] {
        let theta: Vec<f64> = side.iter().map(|s| s.0).collect();
        let norm: Vec<f64> = side.iter().map(|s| ((s.1 - mid) / half).clamp(-1.0, 1.0)).collect();
        let phi = unwrap_side(&theta, &norm)?;
        out.extend(theta.into_iter().zip(phi));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Least-squares fit of φ = c·θ² (+ offset).
pub fn fit_quadratic_plate_model(curve: &[(f64, f64)], with_offset: bool) -> Result<PlateFit> {
    if curve.len() < 5 {
        return Err(Error::param("curve", "need at least 5 points"));
    }
    let n = curve.len();
    let cols = if with_offset { 2 } else { 1 };
    let design = nalgebra::DMatrix::from_fn(n, cols, |i, j| if j == 0 { curve[i].0.powi(2) } else { 1.0 });
    let rhs = nalgebra::DVector::from_iterator(n, curve.iter().map(|c| c.1));
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 || svd.singular_values.min() <= 1e-12 * smax {
        return Err(Error::DegenerateDesign);
    }
    let beta = svd.solve(&rhs, 0.0).map_err(|_| Error::DegenerateDesign)?;
    let residuals: Vec<f64> = (&rhs - &design * &beta).iter().copied().collect();
    let flagged = residuals.iter().enumerate().filter(|(_, r)| r.abs() > FLATNESS_BOUND).map(|(i, _)| i).collect();
    let rms_residual = (residuals.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    Ok(PlateFit { coefficient: beta[0], offset: with_offset.then(|| beta[1]), residuals, flagged, rms_residual })
}

/// Both steps together.
pub fn calibrate(samples: &[(f64, f64)], with_offset: bool) -> Result<CalibrationCurve> {
    let curve = phase_from_intensity(samples)?;
    let fit = fit_quadratic_plate_model(&curve, with_offset)?;
    let (theta, phi) = curve.into_iter().unzip();
    Ok(CalibrationCurve { theta, phi, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn synth(alpha: f64, thetas: impl Iterator<Item = f64>) -> Vec<(f64, f64)> {
        thetas.map(|t| (t, (alpha * t * t).cos())).collect()
    }

    #[test]
    fn noiseless_round_trip() {
        // Dense enough that both extrema are sampled: φ = π at θ = 1.
        let data = synth(PI, (0..=2000).map(|i| i as f64 * 1e-3));
        let curve = phase_from_intensity(&data).unwrap();
        for (t, phi) in &curve {
            assert!((phi - PI * t * t).abs() < 1e-6, "theta {t}: {phi}");
        }
    }

    #[test]
    fn two_sided_scan() {
        let data = synth(PI, (-1500..=1500).map(|i| i as f64 * 1e-3));
        let curve = phase_from_intensity(&data).unwrap();
        for (t, phi) in &curve {
            assert!((phi - PI * t * t).abs() < 1e-6);
        }
    }

    #[test]
    fn extremes_map_to_zero_and_pi() {
        let data: Vec<(f64, f64)> = (0..=200).map(|i| (i as f64 * 0.01, (i as f64 * PI / 200.0).cos())).collect();
        let curve = phase_from_intensity(&data).unwrap();
        assert!(curve[0].1.abs() < 1e-12);
        assert!((curve[200].1 - PI).abs() < 1e-6);
    }

    #[test]
    fn affine_invariance() {
        let data = synth(3.0, (0..=500).map(|i| i as f64 * 4e-3));
        let scaled: Vec<_> = data.iter().map(|&(t, i)| (t, 120.0 + 55.0 * i)).collect();
        let a = phase_from_intensity(&data).unwrap();
        let b = phase_from_intensity(&scaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.1 - y.1).abs() < 1e-9);
        }
    }

    #[test]
    fn initially_rising_gives_negative_branch() {
        let data =
            synth(-3.0, (0..=1000).map(|i| i as f64 * 2e-3)).into_iter().map(|(t, i)| (t, -i)).collect::<Vec<_>>();
        let curve = phase_from_intensity(&data).unwrap();
        // -cos(ψ) = cos(π − ψ): starts at I = -1.
        assert!((curve[0].1 - PI).abs() < 1e-6 || (curve[0].1 + PI).abs() < 1e-6);
    }

    #[test]
    fn mid_fringe_reversal_is_ambiguous() {
        // φ runs 0 → π/2 → 0 → π: the first reversal sits at I = 0.
        let path: Vec<f64> = (0..50)
            .map(|i| i as f64 * PI / 100.0)
            .chain((0..50).map(|i| PI / 2.0 - i as f64 * PI / 100.0))
            .chain((0..=100).map(|i| i as f64 * PI / 100.0))
            .collect();
        let data: Vec<(f64, f64)> = path.iter().enumerate().map(|(i, p)| (i as f64 * 0.01, p.cos())).collect();
        assert!(matches!(phase_from_intensity(&data), Err(Error::BranchAmbiguity { .. })));
    }

    #[test]
    fn normalisation_ignores_spikes() {
        let mut values: Vec<f64> = (0..=2000).map(|i| (PI * (i as f64 * 1e-3).powi(2)).cos()).collect();
        values[1500] = 4.0;
        values[700] = -3.0;
        let (lo, hi) = robust_extrema(&values);
        assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_scan_rejected() {
        let data: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, 3.0)).collect();
        assert!(matches!(phase_from_intensity(&data), Err(Error::ExtremaNotSpanned)));
    }

    #[test]
    fn exact_quadratic_fit() {
        let curve: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 * 0.1, 2.5 * (i as f64 * 0.1).powi(2))).collect();
        let fit = fit_quadratic_plate_model(&curve, false).unwrap();
        assert!((fit.coefficient - 2.5).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
        let fit = fit_quadratic_plate_model(&curve, true).unwrap();
        assert!(fit.offset.unwrap().abs() < 1e-12);
    }

    #[test]
    fn perturbation_inside_flatness_bound() {
        let curve: Vec<(f64, f64)> =
            (0..50).map(|i| i as f64 * 0.05).map(|t| (t, 2.0 * t * t + PI / 10.0 * (5.0 * t).sin())).collect();
        let fit = fit_quadratic_plate_model(&curve, true).unwrap();
        assert!(fit.within_flatness());
        let bumped: Vec<(f64, f64)> =
            curve.iter().enumerate().map(|(i, &(t, p))| (t, if i == 25 { p + 1.0 } else { p })).collect();
        let fit = fit_quadratic_plate_model(&bumped, true).unwrap();
        assert_eq!(fit.flagged, vec![25]);
    }

    #[test]
    fn degenerate_design() {
        let curve = vec![(0.0, 1.0); 6];
        assert!(matches!(fit_quadratic_plate_model(&curve, false), Err(Error::DegenerateDesign)));
        let curve: Vec<(f64, f64)> = (0..6).map(|i| (1.0, i as f64)).collect();
        assert!(matches!(fit_quadratic_plate_model(&curve, true), Err(Error::DegenerateDesign)));
    }
}
