//! Expansion of input Fock states through the transfer coefficients and
//! post-selected detection probabilities.
//!
//! Each input photon contributes one linear factor in the output creation
//! operators of its class; the product is expanded as a sparse polynomial,
//! one multiplication per photon. The monomial `∏ (x†)^n` of a class is the
//! unnormalised Fock state, so the amplitude of the normalised output picks
//! up √(n!) per (mode, class) on top of the input normalisation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{factorial, ClassId, LabeledFockState, ModeLabel, SpatialMode, Truncation};
use crate::network::TransferCoefficients;

/// Which output events count as a detection.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionScheme {
    /// At least `e` photons in `e` and at least `f` in `f`; anything in `g`.
    AtLeast { e: u32, f: u32 },
    /// Exactly `e` in `e` and `f` in `f`, remainder in `g`.
    Exactly { e: u32, f: u32 },
    /// Sum of the at-least probabilities of several threshold pairs, e.g.
    /// simultaneous (3,1) and (1,3) detection.
    Combined(Vec<(u32, u32)>),
}

impl DetectionScheme {
    pub fn at_least(e: u32, f: u32) -> Self {
        DetectionScheme::AtLeast { e, f }
    }

    pub fn exactly(e: u32, f: u32) -> Self {
        DetectionScheme::Exactly { e, f }
    }

    /// (3,1) together with (1,3).
    pub fn combined_31_13() -> Self {
        DetectionScheme::Combined(vec![(3, 1), (1, 3)])
    }

    /// Number of times an output with `e` and `f` photons is counted.
    fn multiplicity(&self, e: u32, f: u32) -> u32 {
        match self {
            DetectionScheme::AtLeast { e: me, f: mf } => u32::from(e >= *me && f >= *mf),
            DetectionScheme::Exactly { e: me, f: mf } => u32::from(e == *me && f == *mf),
            DetectionScheme::Combined(pairs) => pairs.iter().filter(|(me, mf)| e >= *me && f >= *mf).count() as u32,
        }
    }
}

impl fmt::Display for DetectionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectionScheme::AtLeast { e, f: ff } => write!(f, "{e},{ff}"),
            DetectionScheme::Exactly { e, f: ff } => write!(f, "={e},{ff}"),
            DetectionScheme::Combined(pairs) => {
                let parts: Vec<String> = pairs.iter().map(|(e, ff)| format!("{e},{ff}")).collect();
                f.write_str(&parts.join("+"))
            }
        }
    }
}

impl FromStr for DetectionScheme {
    type Err = Error;

    /// `3,1` (at least), `=2,2` (exact) or `3,1+1,3` (combined).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let pair = |p: &str| -> Result<(u32, u32)> {
            let (a, b) = p.split_once(',').ok_or_else(|| Error::Parse(format!("scheme `{s}`: expected `e,f`")))?;
            let parse = |x: &str| x.trim().parse::<u32>().map_err(|_| Error::Parse(format!("scheme `{s}`")));
            Ok((parse(a)?, parse(b)?))
        };
        if let Some(rest) = s.strip_prefix('=') {
            let (e, f) = pair(rest)?;
            return Ok(DetectionScheme::Exactly { e, f });
        }
        if s.contains('+') {
            let pairs = s.split('+').map(pair).collect::<Result<Vec<_>>>()?;
            return Ok(DetectionScheme::Combined(pairs));
        }
        let (e, f) = pair(s)?;
        Ok(DetectionScheme::AtLeast { e, f })
    }
}

/// Output amplitudes keyed by output state over modes `e`, `f`, `g`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AmplitudeTable {
    entries: BTreeMap<LabeledFockState, Complex64>,
}

impl AmplitudeTable {
    pub fn get(&self, state: &LabeledFockState) -> Complex64 {
        self.entries.get(state).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LabeledFockState, &Complex64)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Σ |amplitude|² over all outputs.
    pub fn total_probability(&self) -> f64 {
        self.entries.values().map(|a| a.norm_sqr()).sum()
    }
}

// Packed monomial key: 4 bits per occupation, 12 bits per class slot
// (e, f, g), up to 10 slots.
const COUNT_BITS: u32 = 4;
const SLOT_BITS: u32 = 3 * COUNT_BITS;
const COUNT_MASK: u128 = (1 << COUNT_BITS) - 1;

fn shift(slot: usize, out_mode: usize) -> u32 {
    slot as u32 * SLOT_BITS + out_mode as u32 * COUNT_BITS
}

fn count(key: u128, slot: usize, out_mode: usize) -> u32 {
    ((key >> shift(slot, out_mode)) & COUNT_MASK) as u32
}

struct Expansion {
    classes: Vec<ClassId>,
    terms: Vec<(u128, Complex64)>,
}

impl Expansion {
    fn mode_totals(&self, key: u128) -> (u32, u32) {
        let mut e = 0;
        let mut f = 0;
        for slot in 0..self.classes.len() {
            e += count(key, slot, 0);
            f += count(key, slot, 1);
        }
        (e, f)
    }
}

/// Propagation engine with a fixed photon-number truncation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Propagator {
    truncation: Truncation,
}

impl Propagator {
    pub fn new(truncation: Truncation) -> Self {
        Propagator { truncation }
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    fn expand(&self, input: &LabeledFockState, coeffs: &TransferCoefficients) -> Result<Expansion> {
        self.truncation.check(input)?;
        if !input.only_in(&[SpatialMode::A, SpatialMode::B]) {
            return Err(Error::InvalidState(format!("{input}: inputs must occupy only modes a and b")));
        }
        let classes = input.classes();
        let mut poly: BTreeMap<u128, Complex64> = BTreeMap::new();
        poly.insert(0, Complex64::new(1.0, 0.0));

        for (label, n) in input.iter() {
            let row = coeffs.row(label.spatial).expect("input mode checked above");
            let slot = classes.binary_search(&label.class).expect("class collected from input");
            for _ in 0..n {
                let mut next = BTreeMap::new();
                for (key, amp) in &poly {
                    for (m, c) in row.iter().enumerate() {
                        *next.entry(key + (1u128 << shift(slot, m))).or_insert_with(Complex64::default) += amp * c;
                    }
                }
                poly = next;
            }
        }

        let input_norm = input.state_norm_factor();
        let terms = poly
            .into_iter()
            .map(|(key, amp)| {
                let mut out_norm = 1.0;
                for slot in 0..classes.len() {
                    for m in 0..3 {
                        out_norm *= factorial(count(key, slot, m));
                    }
                }
                (key, amp * input_norm * out_norm.sqrt())
            })
            .collect();
        Ok(Expansion { classes, terms })
    }

    pub fn propagate(&self, input: &LabeledFockState, coeffs: &TransferCoefficients) -> Result<AmplitudeTable> {
        let expansion = self.expand(input, coeffs)?;
        let mut entries = BTreeMap::new();
        for (key, amp) in &expansion.terms {
            let mut state = LabeledFockState::vacuum();
            for (slot, class) in expansion.classes.iter().enumerate() {
                for (m, mode) in [SpatialMode::E, SpatialMode::F, SpatialMode::G].into_iter().enumerate() {
                    state.add(ModeLabel::new(mode, *class), count(*key, slot, m));
                }
            }
            entries.insert(state, *amp);
        }
        Ok(AmplitudeTable { entries })
    }

    /// Probability of the post-selected event described by `scheme`.
    pub fn scheme_probability(
        &self,
        input: &LabeledFockState,
        coeffs: &TransferCoefficients,
        scheme: &DetectionScheme,
    ) -> Result<f64> {
        let expansion = self.expand(input, coeffs)?;
        Ok(expansion
            .terms
            .iter()
            .map(|(key, amp)| {
                let (e, f) = expansion.mode_totals(*key);
                f64::from(scheme.multiplicity(e, f)) * amp.norm_sqr()
            })
            .sum())
    }

    /// At least `min_e` photons in `e` and `min_f` in `f`.
    pub fn detection_probability(
        &self,
        input: &LabeledFockState,
        coeffs: &TransferCoefficients,
        min_e: u32,
        min_f: u32,
    ) -> Result<f64> {
        self.scheme_probability(input, coeffs, &DetectionScheme::AtLeast { e: min_e, f: min_f })
    }

    /// Exactly `e_count` photons in `e` and `f_count` in `f`.
    pub fn exact_output_probability(
        &self,
        input: &LabeledFockState,
        coeffs: &TransferCoefficients,
        e_count: u32,
        f_count: u32,
    ) -> Result<f64> {
        self.scheme_probability(input, coeffs, &DetectionScheme::Exactly { e: e_count, f: f_count })
    }
}

pub fn propagate(input: &LabeledFockState, coeffs: &TransferCoefficients) -> Result<AmplitudeTable> {
    Propagator::default().propagate(input, coeffs)
}

pub fn detection_probability(
    input: &LabeledFockState,
    coeffs: &TransferCoefficients,
    min_e: u32,
    min_f: u32,
) -> Result<f64> {
    Propagator::default().detection_probability(input, coeffs, min_e, min_f)
}

pub fn exact_output_probability(
    input: &LabeledFockState,
    coeffs: &TransferCoefficients,
    e_count: u32,
    f_count: u32,
) -> Result<f64> {
    Propagator::default().exact_output_probability(input, coeffs, e_count, f_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{transfer_coefficients, Efficiencies, NetworkParams};
    use std::f64::consts::PI;
    use SpatialMode::*;

    fn ideal(phi: f64) -> TransferCoefficients {
        transfer_coefficients(&NetworkParams::ideal(phi)).unwrap()
    }

    #[test]
    fn single_photon_half_split() {
        let input = LabeledFockState::vacuum().with(A, 0, 1);
        let table = propagate(&input, &ideal(PI / 2.0)).unwrap();
        let e = LabeledFockState::vacuum().with(E, 0, 1);
        let f = LabeledFockState::vacuum().with(F, 0, 1);
        assert!((table.get(&e).norm_sqr() - 0.5).abs() < 1e-14);
        assert!((table.get(&f).norm_sqr() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn hom_pair_at_zero_phase() {
        let input = LabeledFockState::vacuum().with(A, 0, 1).with(B, 0, 1);
        let p = detection_probability(&input, &ideal(0.0), 1, 1).unwrap();
        assert!((p - 1.0).abs() < 1e-14);
    }

    #[test]
    fn four_photon_super_resolution_point() {
        let input = LabeledFockState::vacuum().with(A, 0, 2).with(B, 0, 2);
        let p = detection_probability(&input, &ideal(PI / 4.0), 3, 1).unwrap();
        assert!((p - 3.0 / 8.0).abs() < 1e-14);
    }

    #[test]
    fn two_in_one_port_coincidence() {
        let input = LabeledFockState::vacuum().with(A, 0, 2);
        let p = detection_probability(&input, &ideal(PI / 2.0), 1, 1).unwrap();
        assert!((p - 0.5).abs() < 1e-14);
    }

    #[test]
    fn distinguishable_pair_fringe() {
        let input = LabeledFockState::vacuum().with(A, 0, 1).with(B, 1, 1);
        for phi in [0.0, 0.4, 1.1, 2.0, 3.0] {
            let p = detection_probability(&input, &ideal(phi), 1, 1).unwrap();
            assert!((p - (3.0 + (2.0 * phi).cos()) / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_two_two_peak_and_no_vacuum_output() {
        let input = LabeledFockState::vacuum().with(A, 0, 2).with(B, 0, 2);
        assert!((exact_output_probability(&input, &ideal(0.0), 2, 2).unwrap() - 1.0).abs() < 1e-13);
        let single = LabeledFockState::vacuum().with(A, 0, 1);
        assert!(exact_output_probability(&single, &ideal(0.7), 0, 0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn truncation_and_mode_errors() {
        let six = LabeledFockState::vacuum().with(A, 0, 3).with(B, 0, 3);
        assert!(matches!(propagate(&six, &ideal(0.0)), Err(Error::TruncationExceeded { .. })));
        let bad = LabeledFockState::vacuum().with(C, 0, 1);
        assert!(matches!(propagate(&bad, &ideal(0.0)), Err(Error::InvalidState(_))));
        let six_ok = Propagator::new(Truncation::new(6).unwrap()).propagate(&six, &ideal(0.3)).unwrap();
        assert!((six_ok.total_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn per_class_photon_number_conserved() {
        let input = LabeledFockState::vacuum().with(A, 0, 2).with(A, 1, 1).with(B, 0, 2);
        let coeffs = transfer_coefficients(&NetworkParams::new(0.9, Efficiencies::new(0.8, 0.7, 0.4, 0.6))).unwrap();
        let table = propagate(&input, &coeffs).unwrap();
        for (out, _) in table.iter() {
            assert_eq!(out.per_class_totals(), input.per_class_totals());
        }
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("3,1".parse::<DetectionScheme>().unwrap(), DetectionScheme::at_least(3, 1));
        assert_eq!("=2,2".parse::<DetectionScheme>().unwrap(), DetectionScheme::exactly(2, 2));
        assert_eq!("3,1+1,3".parse::<DetectionScheme>().unwrap(), DetectionScheme::combined_31_13());
        assert!("3".parse::<DetectionScheme>().is_err());
        assert!("a,b".parse::<DetectionScheme>().is_err());
        for s in ["3,1", "=4,0", "3,1+1,3"] {
            assert_eq!(s.parse::<DetectionScheme>().unwrap().to_string(), s);
        }
    }
}
