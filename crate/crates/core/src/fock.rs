//! Multimode Fock states whose photons carry distinguishability labels.
//!
//! A photon is identified by its spatial mode and a distinguishability class.
//! Photons interfere only with photons of the same class; class 0 is the
//! reference (target) class and classes 1, 2, … are mutually distinguishable
//! extras, written with primes in the usual notation (`a′`, `b″`).

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ClassId = u8;

/// Spatial modes of the interferometer: inputs `a`/`b`, arms `c`/`d`,
/// outputs `e`/`f`, and the loss mode `g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialMode {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl SpatialMode {
    pub const ALL: [SpatialMode; 7] = [
        SpatialMode::A,
        SpatialMode::B,
        SpatialMode::C,
        SpatialMode::D,
        SpatialMode::E,
        SpatialMode::F,
        SpatialMode::G,
    ];

    pub fn as_char(self) -> char {
        match self {
            SpatialMode::A => 'a',
            SpatialMode::B => 'b',
            SpatialMode::C => 'c',
            SpatialMode::D => 'd',
            SpatialMode::E => 'e',
            SpatialMode::F => 'f',
            SpatialMode::G => 'g',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        SpatialMode::ALL.into_iter().find(|m| m.as_char() == c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeLabel {
    pub spatial: SpatialMode,
    pub class: ClassId,
}

impl ModeLabel {
    pub const fn new(spatial: SpatialMode, class: ClassId) -> Self {
        ModeLabel { spatial, class }
    }
}

/// Maximum total photon number accepted by the propagation engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation(usize);

impl Truncation {
    /// Hard ceiling imposed by the packed monomial keys in the propagator.
    pub const MAX: usize = 10;

    pub fn new(photons: usize) -> Result<Self> {
        if photons == 0 || photons > Self::MAX {
            return Err(Error::param("truncation", format!("must be in 1..={}, got {photons}", Self::MAX)));
        }
        Ok(Truncation(photons))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn check(self, state: &LabeledFockState) -> Result<()> {
        let photons = state.total_photons() as usize;
        if photons > self.0 {
            return Err(Error::TruncationExceeded { photons, limit: self.0 });
        }
        Ok(())
    }
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation(5)
    }
}

/// Occupation numbers per (spatial mode, class). Zero occupations are never
/// stored, so two states compare equal iff they describe the same Fock state.
/// Iteration is ordered by spatial mode, then class.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabeledFockState {
    occupations: BTreeMap<ModeLabel, u32>,
}

impl LabeledFockState {
    pub fn vacuum() -> Self {
        Self::default()
    }

    /// Builder: adds `count` photons of `class` to `spatial`.
    pub fn with(mut self, spatial: SpatialMode, class: ClassId, count: u32) -> Self {
        self.add(ModeLabel::new(spatial, class), count);
        self
    }

    pub fn add(&mut self, label: ModeLabel, count: u32) {
        if count > 0 {
            *self.occupations.entry(label).or_insert(0) += count;
        }
    }

    pub fn count(&self, spatial: SpatialMode, class: ClassId) -> u32 {
        self.occupations.get(&ModeLabel::new(spatial, class)).copied().unwrap_or(0)
    }

    /// Photons in `spatial` summed over all classes.
    pub fn mode_total(&self, spatial: SpatialMode) -> u32 {
        self.occupations.iter().filter(|(l, _)| l.spatial == spatial).map(|(_, n)| n).sum()
    }

    pub fn total_photons(&self) -> u32 {
        self.occupations.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ModeLabel, u32)> + '_ {
        self.occupations.iter().map(|(l, n)| (*l, *n))
    }

    pub fn is_empty(&self) -> bool {
        self.occupations.is_empty()
    }

    pub fn classes(&self) -> Vec<ClassId> {
        let mut classes: Vec<ClassId> = self.occupations.keys().map(|l| l.class).collect();
        classes.sort_unstable();
        classes.dedup();
        classes
    }

    pub fn per_class_totals(&self) -> BTreeMap<ClassId, u32> {
        let mut totals = BTreeMap::new();
        for (label, n) in &self.occupations {
            *totals.entry(label.class).or_insert(0) += n;
        }
        totals
    }

    /// True if every occupied mode is one of `modes`.
    pub fn only_in(&self, modes: &[SpatialMode]) -> bool {
        self.occupations.keys().all(|l| modes.contains(&l.spatial))
    }

    /// Normalisation of the creation-operator form: the product over every
    /// (mode, class) of 1/√(n!).
    pub fn state_norm_factor(&self) -> f64 {
        self.occupations.values().map(|&n| 1.0 / factorial(n).sqrt()).product()
    }

    /// Exchanges the photons of spatial modes `x` and `y`.
    pub fn swap_modes(&self, x: SpatialMode, y: SpatialMode) -> Self {
        let mut out = LabeledFockState::vacuum();
        for (label, n) in self.iter() {
            let spatial = if label.spatial == x {
                y
            } else if label.spatial == y {
                x
            } else {
                label.spatial
            };
            out.add(ModeLabel::new(spatial, label.class), n);
        }
        out
    }
}

/// Shorthand for [`LabeledFockState::state_norm_factor`].
pub fn state_norm_factor(state: &LabeledFockState) -> f64 {
    state.state_norm_factor()
}

pub(crate) fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

impl fmt::Display for LabeledFockState {
    /// Ket notation with primes for classes, e.g. `|2_a 1_a' 2_b>`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("|")?;
        for (i, (label, n)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}_{}{}", n, label.spatial.as_char(), "'".repeat(label.class as usize))?;
        }
        f.write_str(">")
    }
}

impl Serialize for LabeledFockState {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut per_mode: BTreeMap<SpatialMode, Vec<u32>> = BTreeMap::new();
        for (label, n) in self.iter() {
            let counts = per_mode.entry(label.spatial).or_default();
            let idx = label.class as usize;
            if counts.len() <= idx {
                counts.resize(idx + 1, 0);
            }
            counts[idx] = n;
        }
        let mut map = serializer.serialize_map(Some(per_mode.len()))?;
        for (mode, counts) in &per_mode {
            map.serialize_entry(&mode.as_char().to_string(), counts)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for LabeledFockState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct StateVisitor;

        impl<'de> Visitor<'de> for StateVisitor {
            type Value = LabeledFockState;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map from mode letter to per-class photon counts")
            }

            fn visit_map<M: MapAccess<'de>>(self, mut access: M) -> std::result::Result<Self::Value, M::Error> {
                let mut state = LabeledFockState::vacuum();
                while let Some((key, counts)) = access.next_entry::<String, Vec<u32>>()? {
                    let mut chars = key.chars();
                    let mode = match (chars.next(), chars.next()) {
                        (Some(c), None) => SpatialMode::from_char(c),
                        _ => None,
                    }
                    .ok_or_else(|| de::Error::custom(format!("unknown mode `{key}`")))?;
                    if counts.len() > usize::from(ClassId::MAX) + 1 {
                        return Err(de::Error::custom("too many classes"));
                    }
                    for (class, n) in counts.into_iter().enumerate() {
                        state.add(ModeLabel::new(mode, class as ClassId), n);
                    }
                }
                Ok(state)
            }
        }

        deserializer.deserialize_map(StateVisitor)
    }
}

/// Every distribution of each class's photons over the output modes `e`, `f`,
/// `g` with at least `min_e` photons in `e` and `min_f` in `f` (all classes
/// together). Photons in `g` are unrestricted.
pub fn enumerate_output_configs(
    total_per_class: &BTreeMap<ClassId, u32>,
    min_e: u32,
    min_f: u32,
) -> Vec<LabeledFockState> {
    let classes: Vec<(ClassId, u32)> = total_per_class.iter().map(|(c, n)| (*c, *n)).filter(|(_, n)| *n > 0).collect();
    let total: u32 = classes.iter().map(|(_, n)| n).sum();
    if min_e + min_f > total {
        return Vec::new();
    }

    let mut out = Vec::new();
    let mut partial: Vec<(u32, u32, u32)> = Vec::with_capacity(classes.len());
    distribute(&classes, 0, &mut partial, &mut |splits| {
        let e: u32 = splits.iter().map(|s| s.0).sum();
        let f: u32 = splits.iter().map(|s| s.1).sum();
        if e >= min_e && f >= min_f {
            let mut state = LabeledFockState::vacuum();
            for ((class, _), (ne, nf, ng)) in classes.iter().zip(splits) {
                state.add(ModeLabel::new(SpatialMode::E, *class), *ne);
                state.add(ModeLabel::new(SpatialMode::F, *class), *nf);
                state.add(ModeLabel::new(SpatialMode::G, *class), *ng);
            }
            out.push(state);
        }
    });
    out
}

fn distribute(
    classes: &[(ClassId, u32)],
    idx: usize,
    partial: &mut Vec<(u32, u32, u32)>,
    emit: &mut impl FnMut(&[(u32, u32, u32)]),
) {
    if idx == classes.len() {
        emit(partial);
        return;
    }
    let n = classes[idx].1;
    for ne in 0..=n {
        for nf in 0..=(n - ne) {
            partial.push((ne, nf, n - ne - nf));
            distribute(classes, idx + 1, partial, emit);
            partial.pop();
        }
    }
}
