//! Truncated multimode bosonic Fock space.
//!
//! States are sparse maps from occupation vectors to complex amplitudes. Linear
//! optical elements act on creation operators, so a ket with occupations
//! `n_m` is expanded as `prod_m (sum_o U_mo a_o^dag)^{n_m} / sqrt(n_m!)` and
//! re-normalized into the Fock basis of the output modes.

mod density;
mod mode;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex64;

pub use density::{basis_index, Matrix4c, TwoQubitDensityMatrix, BASIS_LABELS, HERMITICITY_TOL, PSD_TOL, TRACE_TOL};
pub(crate) use density::psd_sqrt;
pub use mode::{Label, Mode, Occupation, Path, Polarization};

use crate::error::{Error, Result};

/// Total-photon truncation used throughout the simulator.
pub const DEFAULT_N_MAX: u32 = 4;
/// Amplitudes below this magnitude are pruned.
pub const AMPLITUDE_FLOOR: f64 = 1e-15;
pub const UNITARITY_TOL: f64 = 1e-10;

pub type Unitary2 = Matrix2<Complex64>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Lossless balanced splitter with phase `i` on reflection:
/// `a1 -> (a1' + i a2')/sqrt2`, `a2 -> (i a1' + a2')/sqrt2`.
pub fn balanced_splitter() -> Unitary2 {
    splitter(0.5)
}

/// Splitter with intensity transmittance `t`, reflection phase `i`.
pub fn splitter(t: f64) -> Unitary2 {
    let tt = Complex64::new(t.sqrt(), 0.0);
    let r = Complex64::new(0.0, (1.0 - t).sqrt());
    Matrix2::new(tt, r, r, tt)
}

pub fn check_unitary(u: &Unitary2) -> Result<()> {
    let dev = (u * u.adjoint() - Unitary2::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if dev > UNITARITY_TOL || !dev.is_finite() {
        return Err(Error::InvalidElement(format!("matrix is not unitary (deviation {dev:e})")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    amplitudes: BTreeMap<Occupation, Complex64>,
    n_max: u32,
}

impl FockState {
    pub fn empty(n_max: u32) -> Self {
        FockState { amplitudes: BTreeMap::new(), n_max }
    }

    pub fn vacuum(n_max: u32) -> Self {
        Self::basis(Occupation::vacuum(), n_max)
    }

    pub fn basis(occ: Occupation, n_max: u32) -> Self {
        Self::from_terms([(occ, Complex64::new(1.0, 0.0))], n_max)
    }

    /// Single photon in `mode`.
    pub fn single(mode: Mode, n_max: u32) -> Self {
        Self::basis(Occupation::single(mode, 1), n_max)
    }

    /// Sums repeated keys, then drops terms above `n_max` and below the amplitude floor.
    pub fn from_terms<I: IntoIterator<Item = (Occupation, Complex64)>>(terms: I, n_max: u32) -> Self {
        let mut amplitudes: BTreeMap<Occupation, Complex64> = BTreeMap::new();
        for (occ, amp) in terms {
            if occ.total() <= n_max {
                *amplitudes.entry(occ).or_insert(ZERO) += amp;
            }
        }
        amplitudes.retain(|_, a| a.norm() >= AMPLITUDE_FLOOR);
        FockState { amplitudes, n_max }
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn amplitude(&self, occ: &Occupation) -> Complex64 {
        self.amplitudes.get(occ).copied().unwrap_or(ZERO)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, &Complex64)> {
        self.amplitudes.iter()
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if n <= 0.0 {
            return Err(Error::DegenerateState("cannot normalize a zero-norm state".into()));
        }
        Ok(self.scaled(Complex64::new(1.0 / n.sqrt(), 0.0)))
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self::from_terms(self.amplitudes.iter().map(|(k, a)| (k.clone(), a * factor)), self.n_max)
    }

    /// Modes that appear with nonzero occupation in any stored term.
    pub fn support(&self) -> BTreeSet<Mode> {
        self.amplitudes.keys().flat_map(|occ| occ.iter().map(|(m, _)| m)).collect()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &FockState) -> Complex64 {
        self.amplitudes
            .iter()
            .map(|(k, a)| a.conj() * other.amplitude(k))
            .sum()
    }

    /// Sum of squared amplitude differences.
    pub fn distance_sqr(&self, other: &FockState) -> f64 {
        let keys: BTreeSet<&Occupation> = self.amplitudes.keys().chain(other.amplitudes.keys()).collect();
        keys.into_iter().map(|k| (self.amplitude(k) - other.amplitude(k)).norm_sqr()).sum()
    }

    /// Tensor product of states on disjoint mode subsets. Terms above the
    /// combined truncation are dropped without renormalizing.
    pub fn tensor(&self, other: &FockState) -> Result<FockState> {
        let overlap: Vec<Mode> = self.support().intersection(&other.support()).copied().collect();
        if !overlap.is_empty() {
            let names: Vec<String> = overlap.iter().map(|m| m.to_string()).collect();
            return Err(Error::InvalidComposition(format!("factors share modes {}", names.join(", "))));
        }
        let n_max = self.n_max.min(other.n_max);
        let terms = self.amplitudes.iter().flat_map(|(ka, aa)| {
            other.amplitudes.iter().filter_map(move |(kb, ab)| {
                (ka.total() + kb.total() <= n_max).then(|| (ka.concat(kb), aa * ab))
            })
        });
        Ok(Self::from_terms(terms, n_max))
    }

    /// Applies a linear transformation of creation operators. `image(m)` returns the
    /// expansion of `a_m^dag` over output modes, or `None` to leave the mode untouched.
    pub(crate) fn map_creation_operators<F>(&self, image: F) -> FockState
    where
        F: Fn(Mode) -> Option<Vec<(Mode, Complex64)>>,
    {
        let mut out: BTreeMap<Occupation, Complex64> = BTreeMap::new();
        for (occ, amp) in &self.amplitudes {
            let mut poly: BTreeMap<Occupation, Complex64> = BTreeMap::new();
            poly.insert(Occupation::vacuum(), amp / occ.factorial_product().sqrt());
            for (mode, n) in occ.iter() {
                let targets = image(mode).unwrap_or_else(|| vec![(mode, Complex64::new(1.0, 0.0))]);
                for _ in 0..n {
                    let mut next: BTreeMap<Occupation, Complex64> = BTreeMap::new();
                    for (term, coeff) in &poly {
                        for &(target, c) in &targets {
                            if c == ZERO {
                                continue;
                            }
                            let key = term.concat(&Occupation::single(target, 1));
                            *next.entry(key).or_insert(ZERO) += coeff * c;
                        }
                    }
                    poly = next;
                }
            }
            for (term, coeff) in poly {
                let norm = term.factorial_product().sqrt();
                *out.entry(term).or_insert(ZERO) += coeff * norm;
            }
        }
        Self::from_terms(out, self.n_max)
    }

    /// Two-port linear-optical element between spatial paths. For every
    /// (polarization, label) sublevel, `a_in0 -> u00 a_out0 + u01 a_out1` and
    /// `a_in1 -> u10 a_out0 + u11 a_out1`. `outputs` may equal `inputs` for an
    /// in-place transformation.
    pub fn apply_two_mode_unitary(&self, inputs: [Path; 2], outputs: [Path; 2], u: &Unitary2) -> Result<FockState> {
        check_unitary(u)?;
        self.apply_two_mode_map(inputs, outputs, |_| *u)
    }

    /// Same as [`FockState::apply_two_mode_unitary`] with a per-polarization matrix.
    pub fn apply_two_mode_map<F>(&self, inputs: [Path; 2], outputs: [Path; 2], u_for: F) -> Result<FockState>
    where
        F: Fn(Polarization) -> Unitary2,
    {
        if inputs[0] == inputs[1] || outputs[0] == outputs[1] {
            return Err(Error::InvalidElement("two-mode element needs two distinct paths".into()));
        }
        for pol in Polarization::ALL {
            check_unitary(&u_for(pol))?;
        }
        let fresh: Vec<Path> = outputs.iter().copied().filter(|p| !inputs.contains(p)).collect();
        if self.support().iter().any(|m| fresh.contains(&m.path)) {
            return Err(Error::InvalidComposition("output ports already occupied".into()));
        }
        let mats = [u_for(Polarization::H), u_for(Polarization::V)];
        Ok(self.map_creation_operators(|m| {
            let row = inputs.iter().position(|&p| p == m.path)?;
            let u = &mats[m.pol.index()];
            Some(vec![(m.with_path(outputs[0]), u[(row, 0)]), (m.with_path(outputs[1]), u[(row, 1)])])
        }))
    }

    /// Polarization transformation on one path, applied per label:
    /// `a_H -> u00 a_H + u01 a_V`, `a_V -> u10 a_H + u11 a_V`.
    pub fn apply_polarization_unitary(&self, path: Path, u: &Unitary2) -> Result<FockState> {
        check_unitary(u)?;
        Ok(self.map_creation_operators(|m| {
            if m.path != path {
                return None;
            }
            let row = m.pol.index();
            Some(vec![(m.with_pol(Polarization::H), u[(row, 0)]), (m.with_pol(Polarization::V), u[(row, 1)])])
        }))
    }

    /// Keeps terms with at least one photon in each output port. The squared
    /// norm of the result is the post-selection success probability.
    pub fn project_split_occupancy(&self) -> FockState {
        Self::from_terms(
            self.amplitudes
                .iter()
                .filter(|(k, _)| k.path_count(Path::Out1) >= 1 && k.path_count(Path::Out2) >= 1)
                .map(|(k, a)| (k.clone(), *a)),
            self.n_max,
        )
    }

    /// Two-photon polarization state of the output ports, tracing out spectral
    /// labels and every other mode. Each term must carry exactly one photon in
    /// `Out1` and one in `Out2`.
    pub fn reduce_to_polarization_dm(&self) -> Result<TwoQubitDensityMatrix> {
        if self.norm_sqr() <= 0.0 {
            return Err(Error::DegenerateState("zero-norm state has no polarization state".into()));
        }
        // environment key -> polarization amplitude vector
        let mut branches: BTreeMap<(Label, Label, Occupation), Vector4<Complex64>> = BTreeMap::new();
        for (occ, amp) in &self.amplitudes {
            if occ.path_count(Path::Out1) != 1 || occ.path_count(Path::Out2) != 1 {
                return Err(Error::InvalidElement(format!("term {occ} is not a split two-photon term")));
            }
            let (m1, _) = occ.iter().find(|(m, _)| m.path == Path::Out1).unwrap();
            let (m2, _) = occ.iter().find(|(m, _)| m.path == Path::Out2).unwrap();
            let rest = occ.filter(|m| m.path != Path::Out1 && m.path != Path::Out2);
            let v = branches.entry((m1.label, m2.label, rest)).or_insert_with(Vector4::zeros);
            v[basis_index(m1.pol, m2.pol)] += amp;
        }
        let rho = branches.values().fold(Matrix4::zeros(), |acc: Matrix4c, v| acc + v * v.adjoint());
        TwoQubitDensityMatrix::from_unnormalized(rho)
    }

    /// Keeps terms passing `keep`, without renormalizing.
    pub fn filter_terms(&self, keep: impl Fn(&Occupation) -> bool) -> FockState {
        Self::from_terms(
            self.amplitudes.iter().filter(|(k, _)| keep(k)).map(|(k, a)| (k.clone(), *a)),
            self.n_max,
        )
    }

    /// Moves all photons from `from` to `to`, keeping polarization and label.
    pub fn relabel_path(&self, from: Path, to: Path) -> Result<FockState> {
        if self.support().iter().any(|m| m.path == to) && from != to {
            return Err(Error::InvalidComposition(format!("{to:?} already occupied")));
        }
        Ok(Self::from_terms(
            self.amplitudes.iter().map(|(k, a)| {
                (Occupation::from_pairs(k.iter().map(|(m, n)| if m.path == from { (m.with_path(to), n) } else { (m, n) })), *a)
            }),
            self.n_max,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn m(path: Path, pol: Polarization) -> Mode {
        Mode::new(path, pol, Label::A)
    }

    const H: Polarization = Polarization::H;
    const V: Polarization = Polarization::V;
    const PORTS_IN: [Path; 2] = [Path::LoIn, Path::SignalIn];
    const PORTS_OUT: [Path; 2] = [Path::Out1, Path::Out2];

    #[test]
    fn tensor_of_basis_kets() {
        let s = FockState::single(m(Path::SignalIn, V), 4);
        let i = FockState::single(m(Path::Idler, H), 4);
        let t = s.tensor(&i).unwrap();
        let key = Occupation::from_pairs([(m(Path::SignalIn, V), 1), (m(Path::Idler, H), 1)]);
        assert_eq!(t.len(), 1);
        assert!((t.amplitude(&key) - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn tensor_of_vacua() {
        let t = FockState::vacuum(4).tensor(&FockState::vacuum(4)).unwrap();
        assert!((t.norm_sqr() - 1.0).abs() < 1e-15);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn tensor_truncates_without_renormalizing() {
        // untruncated product a1*c1 |1,1,1> carries 3 photons; n_max = 2 drops it
        let pair = FockState::from_terms(
            [(Occupation::from_pairs([(m(Path::SignalIn, V), 1), (m(Path::Idler, H), 1)]), c(0.6, 0.0))],
            2,
        );
        let lo = FockState::from_terms([(Occupation::single(m(Path::LoIn, H), 1), c(0.8, 0.0))], 2);
        let t = pair.tensor(&lo).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.norm_sqr(), 0.0);
    }

    #[test]
    fn tensor_rejects_overlapping_modes() {
        let a = FockState::single(m(Path::LoIn, H), 4);
        assert!(matches!(a.tensor(&a), Err(Error::InvalidComposition(_))));
    }

    #[test]
    fn splitter_maps_single_photon_with_reflection_phase() {
        let s = FockState::single(m(Path::SignalIn, H), 4);
        let out = s.apply_two_mode_unitary([Path::SignalIn, Path::LoIn], PORTS_OUT, &balanced_splitter()).unwrap();
        let k1 = Occupation::single(m(Path::Out1, H), 1);
        let k2 = Occupation::single(m(Path::Out2, H), 1);
        assert!((out.amplitude(&k1) - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
        assert!((out.amplitude(&k2) - c(0.0, FRAC_1_SQRT_2)).norm() < 1e-12);
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let s = FockState::single(m(Path::SignalIn, V), 4)
            .tensor(&FockState::single(m(Path::LoIn, H), 4))
            .unwrap();
        let out = s.apply_two_mode_unitary(PORTS_IN, PORTS_IN, &Unitary2::identity()).unwrap();
        assert!(out.distance_sqr(&s) < 1e-24);
    }

    #[test]
    fn hom_cancellation_for_identical_photons() {
        // hand expansion: (a1 + i a2)(i a1 + a2)/2 = (i a1^2 + i a2^2)/2, no a1 a2 term
        let s = FockState::single(m(Path::LoIn, V), 4)
            .tensor(&FockState::single(m(Path::SignalIn, V), 4))
            .unwrap();
        let out = s.apply_two_mode_unitary(PORTS_IN, PORTS_OUT, &balanced_splitter()).unwrap();
        let split = Occupation::from_pairs([(m(Path::Out1, V), 1), (m(Path::Out2, V), 1)]);
        assert!(out.amplitude(&split).norm() < 1e-12);
        assert!(out.project_split_occupancy().norm_sqr() < 1e-12);
        let bunched = Occupation::single(m(Path::Out1, V), 2);
        assert!((out.amplitude(&bunched) - c(0.0, FRAC_1_SQRT_2)).norm() < 1e-12);
    }

    #[test]
    fn non_unitary_matrix_rejected() {
        let s = FockState::single(m(Path::SignalIn, H), 4);
        let bad = Unitary2::new(c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0));
        assert!(matches!(s.apply_two_mode_unitary(PORTS_IN, PORTS_OUT, &bad), Err(Error::InvalidElement(_))));
        assert!(s.apply_polarization_unitary(Path::SignalIn, &bad).is_err());
    }

    #[test]
    fn projection_of_vacuum_and_bunched_terms_is_empty() {
        assert_eq!(FockState::vacuum(4).project_split_occupancy().norm_sqr(), 0.0);
        let bunched = FockState::basis(Occupation::single(m(Path::Out1, H), 2), 4);
        assert!(bunched.project_split_occupancy().is_empty());
    }

    #[test]
    fn reduction_of_bell_state_with_common_label() {
        let s = FRAC_1_SQRT_2;
        let st = FockState::from_terms(
            [
                (Occupation::from_pairs([(m(Path::Out1, H), 1), (m(Path::Out2, V), 1)]), c(s, 0.0)),
                (Occupation::from_pairs([(m(Path::Out1, V), 1), (m(Path::Out2, H), 1)]), c(s, 0.0)),
            ],
            4,
        );
        let rho = st.reduce_to_polarization_dm().unwrap();
        assert!((rho.matrix() - TwoQubitDensityMatrix::psi_plus().matrix()).norm() < 1e-12);
    }

    #[test]
    fn reduction_traces_out_labels_with_overlap_weight() {
        // LO photon (H) in label a with amplitude zeta, label b with sqrt(1-|zeta|^2);
        // signal photon (V) always label a. Hand partial trace: diagonal 1/2 each,
        // coherence |zeta|^2 / 2.
        let zeta: f64 = 0.8;
        let zb = (1.0 - zeta * zeta).sqrt();
        let s = 0.5_f64.sqrt();
        let mk = |p1: Polarization, l1: Label, p2: Polarization, l2: Label| {
            Occupation::from_pairs([(Mode::new(Path::Out1, p1, l1), 1), (Mode::new(Path::Out2, p2, l2), 1)])
        };
        let st = FockState::from_terms(
            [
                (mk(H, Label::A, V, Label::A), c(s * zeta, 0.0)),
                (mk(H, Label::B, V, Label::A), c(s * zb, 0.0)),
                (mk(V, Label::A, H, Label::A), c(s * zeta, 0.0)),
                (mk(V, Label::A, H, Label::B), c(s * zb, 0.0)),
            ],
            4,
        );
        let rho = st.reduce_to_polarization_dm().unwrap();
        assert!((rho.element(1, 1).re - 0.5).abs() < 1e-12);
        assert!((rho.element(2, 2).re - 0.5).abs() < 1e-12);
        assert!((rho.element(1, 2).norm() - 0.5 * zeta * zeta).abs() < 1e-12);
    }

    #[test]
    fn reduction_of_maximally_mixed_input() {
        // each polarization pair carried by a distinct idler occupation -> incoherent mixture
        let mut terms = Vec::new();
        for (i, (p1, p2)) in [(H, H), (H, V), (V, H), (V, V)].into_iter().enumerate() {
            let occ = Occupation::from_pairs([
                (m(Path::Out1, p1), 1),
                (m(Path::Out2, p2), 1),
                (m(Path::Idler, H), i as u32),
            ]);
            terms.push((occ, c(0.5, 0.0)));
        }
        let rho = FockState::from_terms(terms, 6).reduce_to_polarization_dm().unwrap();
        assert!((rho.matrix() - TwoQubitDensityMatrix::maximally_mixed().matrix()).norm() < 1e-12);
    }

    #[test]
    fn reduction_errors() {
        assert!(matches!(FockState::empty(4).reduce_to_polarization_dm(), Err(Error::DegenerateState(_))));
        let bunched = FockState::basis(Occupation::single(m(Path::Out1, H), 2), 4);
        assert!(bunched.reduce_to_polarization_dm().is_err());
    }

    fn random_unitary(a: f64, b: f64, c_: f64, d: f64) -> Unitary2 {
        // e^{i d} [[e^{i b} cos a, e^{i c} sin a], [-e^{-i c} sin a, e^{-i b} cos a]]
        let g = Complex64::from_polar(1.0, d);
        Matrix2::new(
            g * Complex64::from_polar(a.cos(), b),
            g * Complex64::from_polar(a.sin(), c_),
            -g * Complex64::from_polar(a.sin(), -c_),
            g * Complex64::from_polar(a.cos(), -b),
        )
    }

    fn random_state(seed_amps: &[(f64, f64)]) -> FockState {
        let modes = [
            m(Path::LoIn, H),
            m(Path::LoIn, V),
            Mode::new(Path::SignalIn, V, Label::B),
            m(Path::SignalIn, H),
            m(Path::Idler, H),
        ];
        let mut terms = Vec::new();
        for (i, &(re, im)) in seed_amps.iter().enumerate() {
            let occ = Occupation::from_pairs([
                (modes[i % 5], 1 + (i as u32 % 2)),
                (modes[(i * 3 + 1) % 5], (i as u32 / 2) % 2),
            ]);
            terms.push((occ, c(re, im)));
        }
        FockState::from_terms(terms, 4).normalized().unwrap()
    }

    proptest! {
        #[test]
        fn unitaries_preserve_norm_and_invert(
            amps in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..10),
            a in 0.0f64..3.2, b in -3.2f64..3.2, cc in -3.2f64..3.2, d in -3.2f64..3.2,
        ) {
            prop_assume!(amps.iter().any(|(x, y)| x.abs() + y.abs() > 1e-3));
            let st = random_state(&amps);
            let u = random_unitary(a, b, cc, d);
            let out = st.apply_two_mode_unitary(PORTS_IN, PORTS_IN, &u).unwrap();
            prop_assert!((out.norm_sqr() - st.norm_sqr()).abs() < 1e-10);
            let back = out.apply_two_mode_unitary(PORTS_IN, PORTS_IN, &u.adjoint()).unwrap();
            prop_assert!(back.distance_sqr(&st).sqrt() < 1e-10);
            let pol = st.apply_polarization_unitary(Path::LoIn, &u).unwrap();
            prop_assert!((pol.norm_sqr() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn projection_is_idempotent(
            amps in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..10),
        ) {
            prop_assume!(amps.iter().any(|(x, y)| x.abs() + y.abs() > 1e-3));
            let st = random_state(&amps)
                .apply_two_mode_unitary(PORTS_IN, PORTS_OUT, &balanced_splitter()).unwrap();
            let once = st.project_split_occupancy();
            let twice = once.project_split_occupancy();
            prop_assert_eq!(once, twice);
        }
    }
}
