//! Mixed inputs from an imperfect single-photon source as weighted sums of
//! labelled pure Fock states.
//!
//! Classes follow the prime pattern of each state: unprimed photons are
//! class 0, `a′`/`b′` class 1, `a″`/`b″` class 2 and so on. Weights are the
//! printed α formulas; they are not renormalised unless asked for.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{LabeledFockState, SpatialMode};
use crate::network::{check_unit, Efficiencies, NetworkParams, TransferCoefficients};
use crate::propagator::{DetectionScheme, Propagator};

/// g²(0) above this is outside the regime the truncated model describes.
pub const G2_SOFT_LIMIT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputConfig {
    Ket10,
    Ket11,
    Ket20,
    Ket22,
}

impl InputConfig {
    pub const ALL: [InputConfig; 4] = [InputConfig::Ket10, InputConfig::Ket11, InputConfig::Ket20, InputConfig::Ket22];

    /// Photons per trial of the target state; the N of the sensitivity.
    pub fn photons(self) -> u32 {
        match self {
            InputConfig::Ket10 => 1,
            InputConfig::Ket11 | InputConfig::Ket20 => 2,
            InputConfig::Ket22 => 4,
        }
    }

    pub fn default_scheme(self) -> DetectionScheme {
        match self {
            InputConfig::Ket10 => DetectionScheme::at_least(1, 0),
            InputConfig::Ket11 | InputConfig::Ket20 => DetectionScheme::at_least(1, 1),
            InputConfig::Ket22 => DetectionScheme::at_least(3, 1),
        }
    }

    /// Short form used on the command line and in file headers.
    pub fn code(self) -> &'static str {
        match self {
            InputConfig::Ket10 => "10",
            InputConfig::Ket11 => "11",
            InputConfig::Ket20 => "20",
            InputConfig::Ket22 => "22",
        }
    }
}

impl fmt::Display for InputConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for InputConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let t = t.strip_prefix("ket").unwrap_or(&t);
        match t {
            "10" => Ok(InputConfig::Ket10),
            "11" => Ok(InputConfig::Ket11),
            "20" => Ok(InputConfig::Ket20),
            "22" => Ok(InputConfig::Ket22),
            _ => Err(Error::Parse(format!("unknown input configuration `{s}` (expected 10, 11, 20 or 22)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    pub g2: f64,
    /// Indistinguishability ℐ.
    pub indist: f64,
    pub eta: Efficiencies,
}

impl SourceParams {
    pub const fn new(g2: f64, indist: f64, eta: Efficiencies) -> Self {
        SourceParams { g2, indist, eta }
    }

    pub const fn ideal() -> Self {
        SourceParams { g2: 0.0, indist: 1.0, eta: Efficiencies::ideal() }
    }

    /// Published fit values for the experimental source and interferometer.
    pub const fn fitted() -> Self {
        SourceParams { g2: 0.018, indist: 0.974, eta: Efficiencies::new(0.8034, 0.761, 0.178, 0.322) }
    }

    /// Same source with all interferometer and detector transmissions at 1.
    pub fn lossless(self) -> Self {
        SourceParams { eta: Efficiencies::ideal(), ..self }
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("g2", self.g2)?;
        check_unit("indist", self.indist)?;
        self.eta.validate()?;
        if self.g2 > G2_SOFT_LIMIT {
            log::warn!("g2 = {} exceeds {G2_SOFT_LIMIT}; the truncated model is not reliable there", self.g2);
        }
        Ok(())
    }

    pub fn network(&self, phi: f64) -> NetworkParams {
        NetworkParams::new(phi, self.eta)
    }
}

impl Default for SourceParams {
    fn default() -> Self {
        Self::ideal()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    /// Rescale the weights to sum to one. Off by default.
    pub renormalize: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEntry {
    pub state: LabeledFockState,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedEnsemble {
    pub config: InputConfig,
    pub params: SourceParams,
    pub entries: Vec<EnsembleEntry>,
}

impl WeightedEnsemble {
    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.alpha).sum()
    }

    /// Σ α_L P_L for the given scheme. Entries above the propagator's
    /// truncation are skipped and contribute nothing.
    pub fn probability(
        &self,
        propagator: &Propagator,
        coeffs: &TransferCoefficients,
        scheme: &DetectionScheme,
    ) -> Result<f64> {
        let limit = propagator.truncation().get();
        let mut total = 0.0;
        for entry in &self.entries {
            if entry.state.total_photons() as usize > limit {
                log::debug!("skipping {} beyond truncation {limit}", entry.state);
                continue;
            }
            if entry.alpha == 0.0 {
                continue;
            }
            total += entry.alpha * propagator.scheme_probability(&entry.state, coeffs, scheme)?;
        }
        Ok(total)
    }
}

/// Builds a state from (mode, class, count) triples.
fn ket(parts: &[(SpatialMode, u8, u32)]) -> LabeledFockState {
    parts.iter().fold(LabeledFockState::vacuum(), |s, &(m, c, n)| s.with(m, c, n))
}

pub fn build_ensemble(config: InputConfig, params: &SourceParams) -> Result<WeightedEnsemble> {
    build_ensemble_with(config, params, EnsembleOptions::default())
}

pub fn build_ensemble_with(
    config: InputConfig,
    params: &SourceParams,
    options: EnsembleOptions,
) -> Result<WeightedEnsemble> {
    use SpatialMode::{A, B};
    params.validate()?;
    let g = params.g2;
    let i = params.indist;
    let (ng, ni) = (1.0 - g, 1.0 - i);

    let raw: Vec<(LabeledFockState, f64)> = match config {
        InputConfig::Ket10 => vec![(ket(&[(A, 0, 1)]), ng), (ket(&[(A, 0, 1), (A, 1, 1)]), g)],
        InputConfig::Ket11 => vec![
            (ket(&[(A, 0, 1), (B, 0, 1)]), i * ng * ng),
            (ket(&[(A, 0, 1), (B, 1, 1)]), ni * ng * ng),
            (ket(&[(A, 0, 1), (A, 1, 1), (B, 0, 1)]), i * g * ng),
            (ket(&[(A, 0, 1), (B, 0, 1), (B, 1, 1)]), i * g * ng),
            (ket(&[(A, 0, 1), (A, 1, 1), (B, 0, 1), (B, 2, 1)]), i * g * g),
            (ket(&[(A, 0, 1), (A, 1, 1), (B, 2, 1)]), ni * g * ng),
            (ket(&[(A, 0, 1), (B, 1, 1), (B, 2, 1)]), ni * g * ng),
            (ket(&[(A, 0, 1), (A, 1, 1), (B, 2, 1), (B, 3, 1)]), ni * g * g),
        ],
        InputConfig::Ket20 => vec![
            (ket(&[(A, 0, 2)]), i * ng * ng),
            (ket(&[(A, 0, 1), (A, 1, 1)]), 0.5 * ni * ng * ng),
            (ket(&[(A, 0, 2), (A, 1, 1)]), 2.0 * i * g * ng),
            (ket(&[(A, 0, 2), (A, 1, 1), (A, 2, 1)]), i * g * g),
            (ket(&[(A, 0, 1), (A, 1, 1), (A, 2, 1)]), ni * g * ng),
            (ket(&[(A, 0, 1), (A, 1, 1), (A, 2, 1), (A, 3, 1)]), 0.5 * ni * g * g),
        ],
        InputConfig::Ket22 => {
            let ng3 = ng.powi(3);
            let ng4 = ng.powi(4);
            vec![
                (ket(&[(A, 0, 2), (B, 0, 2)]), i * i * ng4),
                (ket(&[(A, 0, 1), (A, 1, 1), (B, 2, 1), (B, 3, 1)]), 0.25 * ni * ni * ng4),
                (ket(&[(A, 0, 2), (A, 1, 1), (B, 0, 2)]), 2.0 * i * i * g * ng3),
                (ket(&[(A, 0, 2), (B, 0, 2), (B, 1, 1)]), 2.0 * i * i * g * ng3),
                (ket(&[(A, 0, 2), (A, 1, 1), (B, 0, 2), (B, 2, 1)]), 4.0 * i * i * g * g * ng * ng),
                (ket(&[(A, 0, 1), (A, 1, 1), (A, 2, 1), (B, 3, 1), (B, 4, 1)]), 0.5 * ni * ni * g * ng3),
                (ket(&[(A, 0, 1), (A, 1, 1), (B, 2, 1), (B, 3, 1), (B, 4, 1)]), 0.5 * ni * ni * g * ng3),
                (ket(&[(A, 0, 1), (A, 1, 1), (B, 0, 2)]), ni * i * i * ng4),
                (ket(&[(A, 0, 2), (B, 0, 1), (B, 1, 1)]), ni * i * i * ng4),
                (ket(&[(A, 0, 1), (A, 1, 1), (B, 0, 1), (B, 1, 1)]), ni * ni * i * ng4),
            ]
        }
    };

    let norm = if options.renormalize {
        let total: f64 = raw.iter().map(|(_, a)| a).sum();
        if total > 0.0 {
            total
        } else {
            1.0
        }
    } else {
        1.0
    };
    let entries = raw.into_iter().map(|(state, alpha)| EnsembleEntry { state, alpha: alpha / norm }).collect();
    Ok(WeightedEnsemble { config, params: *params, entries })
}

/// Σ α_L P_L(≥ min_e in e, ≥ min_f in f) with the default truncation.
pub fn ensemble_probability(
    ensemble: &WeightedEnsemble,
    coeffs: &TransferCoefficients,
    min_e: u32,
    min_f: u32,
) -> Result<f64> {
    ensemble.probability(&Propagator::default(), coeffs, &DetectionScheme::at_least(min_e, min_f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::transfer_coefficients;
    use std::f64::consts::PI;

    fn ideal_coeffs(phi: f64) -> TransferCoefficients {
        transfer_coefficients(&NetworkParams::ideal(phi)).unwrap()
    }

    #[test]
    fn ket10_weights() {
        let p = SourceParams { g2: 0.018, ..SourceParams::ideal() };
        let ens = build_ensemble(InputConfig::Ket10, &p).unwrap();
        assert_eq!(ens.entries.len(), 2);
        assert!((ens.entries[0].alpha - 0.982).abs() < 1e-15);
        assert!((ens.entries[1].alpha - 0.018).abs() < 1e-15);
        assert_eq!(ens.entries[1].state.to_string(), "|1_a 1_a'>");
    }

    #[test]
    fn ideal_ket11_single_entry_weight() {
        let ens = build_ensemble(InputConfig::Ket11, &SourceParams::ideal()).unwrap();
        let nonzero: Vec<_> = ens.entries.iter().filter(|e| e.alpha > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].alpha, 1.0);
        assert_eq!(nonzero[0].state.to_string(), "|1_a 1_b>");
    }

    #[test]
    fn entry_counts() {
        let p = SourceParams::fitted();
        let counts: Vec<usize> =
            InputConfig::ALL.iter().map(|c| build_ensemble(*c, &p).unwrap().entries.len()).collect();
        assert_eq!(counts, vec![2, 8, 6, 10]);
    }

    #[test]
    fn weights_sum_to_one_when_ideal() {
        for c in InputConfig::ALL {
            let ens = build_ensemble(c, &SourceParams::ideal()).unwrap();
            assert!((ens.total_weight() - 1.0).abs() < 1e-15, "{c}");
        }
    }

    #[test]
    fn ket22_weight_sum_at_full_indistinguishability() {
        for g in [0.0, 0.01, 0.05, 0.1] {
            let p = SourceParams { g2: g, ..SourceParams::ideal() };
            let ens = build_ensemble(InputConfig::Ket22, &p).unwrap();
            assert!((ens.total_weight() - (1.0 - g * g).powi(2)).abs() < 1e-14);
        }
    }

    #[test]
    fn renormalize_option() {
        let opts = EnsembleOptions { renormalize: true };
        let ens = build_ensemble_with(InputConfig::Ket22, &SourceParams::fitted(), opts).unwrap();
        assert!((ens.total_weight() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_out_of_range() {
        let p = SourceParams { indist: 1.5, ..SourceParams::ideal() };
        assert!(build_ensemble(InputConfig::Ket11, &p).is_err());
    }

    #[test]
    fn distinguishable_pair_fringe() {
        let p = SourceParams { indist: 0.0, ..SourceParams::ideal() };
        let ens = build_ensemble(InputConfig::Ket11, &p).unwrap();
        for phi in [0.0, 0.3, PI / 2.0, 2.2] {
            let prob = ensemble_probability(&ens, &ideal_coeffs(phi), 1, 1).unwrap();
            assert!((prob - (3.0 + (2.0 * phi).cos()) / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn six_photon_entry_skipped_under_default_truncation() {
        let p = SourceParams { g2: 0.05, ..SourceParams::ideal() };
        let ens = build_ensemble(InputConfig::Ket22, &p).unwrap();
        assert!(ens.entries.iter().any(|e| e.state.total_photons() == 6));
        assert!(ensemble_probability(&ens, &ideal_coeffs(0.4), 3, 1).is_ok());
    }

    #[test]
    fn json_shape() {
        let ens = build_ensemble(InputConfig::Ket10, &SourceParams::ideal()).unwrap();
        let v = serde_json::to_value(&ens).unwrap();
        assert_eq!(v["entries"][0]["state"], serde_json::json!({"a": [1]}));
        assert_eq!(v["config"], "ket10");
    }

    #[test]
    fn config_parsing() {
        assert_eq!("22".parse::<InputConfig>().unwrap(), InputConfig::Ket22);
        assert_eq!("Ket11".parse::<InputConfig>().unwrap(), InputConfig::Ket11);
        assert!("21".parse::<InputConfig>().is_err());
    }
}
