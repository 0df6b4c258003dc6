//! Linear input-output map of the interferometer.
//!
//! A photon entering mode `a` leaves as
//! `(1/√2)(A e† + B f† + C g†)` and one entering `b` as
//! `(1/√2)(D e† + E f† + F g†)`. The six amplitudes are evaluated from their
//! closed forms; the element matrices are exposed for composition checks.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::SpatialMode;

pub type Matrix2 = [[Complex64; 2]; 2];

/// Per-photon amplitude prefactor carried outside A–F.
pub const INPUT_PREFACTOR: f64 = FRAC_1_SQRT_2;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Symmetric 50:50 beamsplitter, (1/√2)[[1, i], [i, 1]].
pub fn beamsplitter_matrix() -> Matrix2 {
    let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let t = Complex64::new(0.0, FRAC_1_SQRT_2);
    [[r, t], [t, r]]
}

/// diag(1, e^{iφ}).
pub fn phase_matrix(phi: f64) -> Matrix2 {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    [[one, zero], [zero, Complex64::from_polar(1.0, phi)]]
}

/// Coupling of one mode to the loss mode: [[η, 1−η], [1−η, η]].
///
/// The entries are η and 1−η as amplitudes, which is not norm-preserving for
/// 0 < η < 1. See [`LossConvention`] for the √η alternative.
pub fn loss_matrix(eta: f64) -> Result<[[f64; 2]; 2]> {
    check_unit("eta", eta)?;
    Ok([[eta, 1.0 - eta], [1.0 - eta, eta]])
}

/// How a transmission η enters the loss matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossConvention {
    /// Amplitudes η and 1−η. All published fit parameters are defined under
    /// this convention.
    #[default]
    Verbatim,
    /// Amplitudes √η and √(1−η), so η is an intensity transmission.
    /// Non-default; for physical-consistency studies only.
    Amplitude,
}

impl LossConvention {
    fn transmitted(self, eta: f64) -> f64 {
        match self {
            LossConvention::Verbatim => eta,
            LossConvention::Amplitude => eta.sqrt(),
        }
    }

    fn lost(self, eta: f64) -> f64 {
        match self {
            LossConvention::Verbatim => 1.0 - eta,
            LossConvention::Amplitude => (1.0 - eta).sqrt(),
        }
    }
}

impl std::str::FromStr for LossConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "verbatim" => Ok(LossConvention::Verbatim),
            "amplitude" => Ok(LossConvention::Amplitude),
            _ => Err(Error::Parse(format!("unknown loss convention `{s}` (expected verbatim or amplitude)"))),
        }
    }
}

/// Transmissions of the two interferometer arms (`c`, `d`) and the two
/// output/detection channels (`e`, `f`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Efficiencies {
    pub eta_c: f64,
    pub eta_d: f64,
    pub eta_e: f64,
    pub eta_f: f64,
}

impl Efficiencies {
    pub const fn ideal() -> Self {
        Efficiencies { eta_c: 1.0, eta_d: 1.0, eta_e: 1.0, eta_f: 1.0 }
    }

    pub const fn new(eta_c: f64, eta_d: f64, eta_e: f64, eta_f: f64) -> Self {
        Efficiencies { eta_c, eta_d, eta_e, eta_f }
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("eta_c", self.eta_c)?;
        check_unit("eta_d", self.eta_d)?;
        check_unit("eta_e", self.eta_e)?;
        check_unit("eta_f", self.eta_f)
    }
}

impl Default for Efficiencies {
    fn default() -> Self {
        Self::ideal()
    }
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::param(name, format!("must lie in [0, 1], got {value}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub phi: f64,
    pub eta: Efficiencies,
    #[serde(default)]
    pub convention: LossConvention,
}

impl NetworkParams {
    pub fn new(phi: f64, eta: Efficiencies) -> Self {
        NetworkParams { phi, eta, convention: LossConvention::Verbatim }
    }

    pub fn ideal(phi: f64) -> Self {
        Self::new(phi, Efficiencies::ideal())
    }

    pub fn with_convention(mut self, convention: LossConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.phi.is_finite() {
            return Err(Error::param("phi", "must be finite"));
        }
        self.eta.validate()
    }
}

/// The amplitudes A–F. Fields are named by route: `a_e` is A (input `a` to
/// output `e`), `a_f` is B, `a_g` is C, `b_e` is D, `b_f` is E, `b_g` is F.
/// The per-photon 1/√2 ([`INPUT_PREFACTOR`]) is not included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferCoefficients {
    pub a_e: Complex64,
    pub a_f: Complex64,
    pub a_g: Complex64,
    pub b_e: Complex64,
    pub b_f: Complex64,
    pub b_g: Complex64,
}

impl TransferCoefficients {
    /// Output amplitudes (e, f, g) for a photon entering `input`, including
    /// the 1/√2 prefactor.
    pub fn row(&self, input: SpatialMode) -> Option<[Complex64; 3]> {
        let raw = match input {
            SpatialMode::A => [self.a_e, self.a_f, self.a_g],
            SpatialMode::B => [self.b_e, self.b_f, self.b_g],
            _ => return None,
        };
        Some(raw.map(|c| c * INPUT_PREFACTOR))
    }

    /// Coefficients with the roles of inputs `a` and `b` exchanged.
    pub fn swap_inputs(&self) -> Self {
        TransferCoefficients {
            a_e: self.b_e,
            a_f: self.b_f,
            a_g: self.b_g,
            b_e: self.a_e,
            b_f: self.a_f,
            b_g: self.a_g,
        }
    }
}

pub fn transfer_coefficients(params: &NetworkParams) -> Result<TransferCoefficients> {
    params.validate()?;
    let conv = params.convention;
    let Efficiencies { eta_c, eta_d, eta_e, eta_f } = params.eta;
    let (tc, td, te, tf) =
        (conv.transmitted(eta_c), conv.transmitted(eta_d), conv.transmitted(eta_e), conv.transmitted(eta_f));
    let (lc, ld, le, lf) = (conv.lost(eta_c), conv.lost(eta_d), conv.lost(eta_e), conv.lost(eta_f));
    let ephi = Complex64::from_polar(1.0, params.phi);
    let s = FRAC_1_SQRT_2;

    // Amplitudes arriving at e and f (before detection loss) for each input.
    let a_to_e = tc * s - td * s * ephi;
    let a_to_f = I * tc * s + I * td * s * ephi;
    let b_to_e = I * tc * s + I * td * s * ephi;
    let b_to_f = td * s * ephi - tc * s;

    Ok(TransferCoefficients {
        a_e: te * a_to_e,
        a_f: tf * a_to_f,
        a_g: lc + I * ephi * ld + le * a_to_e + lf * a_to_f,
        b_e: te * b_to_e,
        b_f: tf * b_to_f,
        b_g: I * lc + ephi * ld + le * b_to_e + lf * b_to_f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn matmul(x: &Matrix2, y: &Matrix2) -> Matrix2 {
        let mut out = [[c(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for (k, yk) in y.iter().enumerate() {
                    out[i][j] += x[i][k] * yk[j];
                }
            }
        }
        out
    }

    #[test]
    fn beamsplitter_is_symmetric_unitary() {
        let b = beamsplitter_matrix();
        assert_eq!(b[0][1], b[1][0]);
        for row in &b {
            for z in row {
                assert!((z.norm_sqr() - 0.5).abs() < 1e-15);
            }
        }
        let bh = [[b[0][0].conj(), b[1][0].conj()], [b[0][1].conj(), b[1][1].conj()]];
        let id = matmul(&b, &bh);
        assert!((id[0][0] - 1.0).norm() < 1e-15 && id[0][1].norm() < 1e-15);
    }

    #[test]
    fn beamsplitter_twice_swaps_with_phase() {
        let b = beamsplitter_matrix();
        let bb = matmul(&b, &b);
        // (1, 0) -> (0, i)
        assert!(bb[0][0].norm() < 1e-15);
        assert!((bb[1][0] - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn phase_matrix_values() {
        let id = phase_matrix(0.0);
        assert!((id[1][1] - 1.0).norm() < 1e-15);
        assert!((phase_matrix(PI)[1][1] + 1.0).norm() < 1e-15);
        assert!((phase_matrix(PI / 2.0)[1][1] - c(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(phase_matrix(1.3)[0][0], c(1.0, 0.0));
    }

    #[test]
    fn loss_matrix_values() {
        assert_eq!(loss_matrix(1.0).unwrap(), [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(loss_matrix(0.0).unwrap(), [[0.0, 1.0], [1.0, 0.0]]);
        let m = loss_matrix(0.8034).unwrap();
        assert!((m[0][0] - 0.8034).abs() < 1e-15 && (m[0][1] - 0.1966).abs() < 1e-12);
        assert!(loss_matrix(1.2).is_err());
        assert!(loss_matrix(-0.1).is_err());
    }

    #[test]
    fn ideal_routing() {
        let at = |phi| transfer_coefficients(&NetworkParams::ideal(phi)).unwrap();
        let k0 = at(0.0);
        assert!(k0.a_e.norm() < 1e-15 && k0.b_f.norm() < 1e-15);
        assert!(k0.a_g.norm() < 1e-15 && k0.b_g.norm() < 1e-15);
        let row = k0.row(SpatialMode::A).unwrap();
        assert!((row[1].norm_sqr() - 1.0).abs() < 1e-14);

        let kpi = at(PI).row(SpatialMode::A).unwrap();
        assert!((kpi[0].norm_sqr() - 1.0).abs() < 1e-14);
        assert!(kpi[1].norm_sqr() < 1e-14);
    }

    #[test]
    fn rejects_invalid_params() {
        let bad = NetworkParams::new(0.0, Efficiencies::new(1.1, 1.0, 1.0, 1.0));
        assert!(transfer_coefficients(&bad).is_err());
        assert!(transfer_coefficients(&NetworkParams::ideal(f64::NAN)).is_err());
    }

    #[test]
    fn amplitude_convention_differs() {
        let eta = Efficiencies::new(0.5, 1.0, 1.0, 1.0);
        let v = transfer_coefficients(&NetworkParams::new(0.3, eta)).unwrap();
        let a =
            transfer_coefficients(&NetworkParams::new(0.3, eta).with_convention(LossConvention::Amplitude)).unwrap();
        assert!((v.a_e - a.a_e).norm() > 1e-3);
        let ideal_v = transfer_coefficients(&NetworkParams::ideal(0.3)).unwrap();
        let ideal_a =
            transfer_coefficients(&NetworkParams::ideal(0.3).with_convention(LossConvention::Amplitude)).unwrap();
        assert_eq!(ideal_v, ideal_a);
    }
}
