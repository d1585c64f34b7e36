//! Mode bookkeeping: spatial path, polarization and spectral wave-packet label.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Path {
    SignalIn,
    LoIn,
    Idler,
    Out1,
    Out2,
}

impl Path {
    pub const ALL: [Path; 5] = [Path::SignalIn, Path::LoIn, Path::Idler, Path::Out1, Path::Out2];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub const ALL: [Polarization; 2] = [Polarization::H, Polarization::V];

    /// Index into the (H, V) pair.
    pub fn index(self) -> usize {
        match self {
            Polarization::H => 0,
            Polarization::V => 1,
        }
    }

    pub fn orthogonal(self) -> Self {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
        }
    }
}

/// Spectral wave-packet label. Two photons are mutually indistinguishable
/// only when they share a label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::A, Label::B];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Mode {
    pub path: Path,
    pub pol: Polarization,
    pub label: Label,
}

impl Mode {
    pub const fn new(path: Path, pol: Polarization, label: Label) -> Self {
        Mode { path, pol, label }
    }

    /// Every mode of the model, in ordering-consistent sequence.
    pub fn all() -> impl Iterator<Item = Mode> {
        Path::ALL.into_iter().flat_map(|path| {
            Polarization::ALL.into_iter().flat_map(move |pol| {
                Label::ALL.into_iter().map(move |label| Mode { path, pol, label })
            })
        })
    }

    pub fn with_path(self, path: Path) -> Self {
        Mode { path, ..self }
    }

    pub fn with_pol(self, pol: Polarization) -> Self {
        Mode { pol, ..self }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}:{:?}:{:?}", self.path, self.pol, self.label)
    }
}

/// Sparse occupation vector: sorted `(mode, count)` pairs with nonzero counts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Occupation(Vec<(Mode, u32)>);

impl Occupation {
    pub fn vacuum() -> Self {
        Occupation(Vec::new())
    }

    /// Builds an occupation from arbitrary pairs, merging repeats and dropping zeros.
    pub fn from_pairs<I: IntoIterator<Item = (Mode, u32)>>(pairs: I) -> Self {
        let mut v: Vec<(Mode, u32)> = Vec::new();
        let mut raw: Vec<(Mode, u32)> = pairs.into_iter().filter(|&(_, n)| n > 0).collect();
        raw.sort_by_key(|&(m, _)| m);
        for (m, n) in raw {
            match v.last_mut() {
                Some((last, count)) if *last == m => *count += n,
                _ => v.push((m, n)),
            }
        }
        Occupation(v)
    }

    pub fn single(mode: Mode, n: u32) -> Self {
        Self::from_pairs([(mode, n)])
    }

    pub fn get(&self, mode: Mode) -> u32 {
        self.0
            .binary_search_by_key(&mode, |&(m, _)| m)
            .map(|i| self.0[i].1)
            .unwrap_or(0)
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&(_, n)| n).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Mode, u32)> + '_ {
        self.0.iter().copied()
    }

    pub fn is_vacuum(&self) -> bool {
        self.0.is_empty()
    }

    /// Photons on `path` summed over polarization and label.
    pub fn path_count(&self, path: Path) -> u32 {
        self.0.iter().filter(|(m, _)| m.path == path).map(|&(_, n)| n).sum()
    }

    /// Photons on `path` with polarization `pol`, summed over labels.
    pub fn path_pol_count(&self, path: Path, pol: Polarization) -> u32 {
        self.0
            .iter()
            .filter(|(m, _)| m.path == path && m.pol == pol)
            .map(|&(_, n)| n)
            .sum()
    }

    /// Concatenation of two occupations on disjoint supports.
    pub fn concat(&self, other: &Occupation) -> Occupation {
        Occupation::from_pairs(self.iter().chain(other.iter()))
    }

    /// Drops every entry whose mode fails `keep`.
    pub fn filter(&self, keep: impl Fn(Mode) -> bool) -> Occupation {
        Occupation(self.0.iter().copied().filter(|&(m, _)| keep(m)).collect())
    }

    /// Product of factorials of all occupation numbers.
    pub(crate) fn factorial_product(&self) -> f64 {
        self.0.iter().map(|&(_, n)| factorial(n)).product()
    }
}

pub(crate) fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

impl fmt::Display for Occupation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "|vac>");
        }
        write!(f, "|")?;
        for (i, (m, n)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}={n}")?;
        }
        write!(f, ">")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_set_is_a_finite_enumeration() {
        let all: Vec<Mode> = Mode::all().collect();
        assert_eq!(all.len(), 20);
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, all);
    }

    #[test]
    fn occupation_merges_and_sorts() {
        let h = Mode::new(Path::Out1, Polarization::H, Label::A);
        let v = Mode::new(Path::Out2, Polarization::V, Label::A);
        let occ = Occupation::from_pairs([(v, 1), (h, 1), (v, 1), (h, 0)]);
        assert_eq!(occ.get(h), 1);
        assert_eq!(occ.get(v), 2);
        assert_eq!(occ.total(), 3);
        assert_eq!(occ.path_count(Path::Out2), 2);
    }
}
