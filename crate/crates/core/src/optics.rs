//! Polarization optics and the fiber beam splitter (FBS) acting on Fock states.
//!
//! Jones matrices act on column vectors `(E_H, E_V)`. On creation operators a
//! Jones matrix `J` maps `a_q^dag -> sum_p J_pq a_p^dag`, i.e. the transpose.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{splitter, FockState, Path, Polarization, Unitary2};

pub type JonesMatrix = Matrix2<Complex64>;
pub type JonesVector = Vector2<Complex64>;

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Linear polarizer angle measured from H, stored modulo 180 degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerSetting {
    theta_deg: f64,
}

impl AnalyzerSetting {
    pub fn new(theta_deg: f64) -> Self {
        AnalyzerSetting { theta_deg: theta_deg.rem_euclid(180.0) }
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta_deg
    }

    pub fn perpendicular(&self) -> Self {
        Self::new(self.theta_deg + 90.0)
    }

    /// cos(theta)|H> + sin(theta)|V>.
    pub fn jones(&self) -> JonesVector {
        let t = self.theta_deg.to_radians();
        JonesVector::new(re(t.cos()), re(t.sin()))
    }

    /// Integer key in millidegrees, used to match settings in count records.
    pub fn key(&self) -> i64 {
        ((self.theta_deg * 1000.0).round() as i64).rem_euclid(180_000)
    }
}

/// Projection states of the standard two-qubit tomography scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TomoBasis {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl TomoBasis {
    pub const ALL: [TomoBasis; 6] = [TomoBasis::H, TomoBasis::V, TomoBasis::D, TomoBasis::A, TomoBasis::R, TomoBasis::L];

    /// D = (H+V)/sqrt2, A = (H-V)/sqrt2, R = (H - iV)/sqrt2, L = (H + iV)/sqrt2.
    pub fn jones(self) -> JonesVector {
        let s = FRAC_1_SQRT_2;
        match self {
            TomoBasis::H => JonesVector::new(re(1.0), re(0.0)),
            TomoBasis::V => JonesVector::new(re(0.0), re(1.0)),
            TomoBasis::D => JonesVector::new(re(s), re(s)),
            TomoBasis::A => JonesVector::new(re(s), re(-s)),
            TomoBasis::R => JonesVector::new(re(s), Complex64::new(0.0, -s)),
            TomoBasis::L => JonesVector::new(re(s), Complex64::new(0.0, s)),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            TomoBasis::H => 'H',
            TomoBasis::V => 'V',
            TomoBasis::D => 'D',
            TomoBasis::A => 'A',
            TomoBasis::R => 'R',
            TomoBasis::L => 'L',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        TomoBasis::ALL.into_iter().find(|b| b.symbol() == c.to_ascii_uppercase())
    }
}

/// Half-wave plate with fast axis at `angle_deg` from H.
pub fn hwp_matrix(angle_deg: f64) -> JonesMatrix {
    let t = 2.0 * angle_deg.to_radians();
    Matrix2::new(re(t.cos()), re(t.sin()), re(t.sin()), re(-t.cos()))
}

/// Quarter-wave plate with fast axis at `angle_deg` from H.
pub fn qwp_matrix(angle_deg: f64) -> JonesMatrix {
    let t = angle_deg.to_radians();
    let (s, c) = t.sin_cos();
    let i = Complex64::new(0.0, 1.0);
    let off = (re(1.0) - i) * s * c;
    Matrix2::new(re(c * c) + i * s * s, off, off, re(s * s) + i * c * c)
}

/// Counter-clockwise rotation of the polarization by `angle_deg`.
pub fn rotation_matrix(angle_deg: f64) -> JonesMatrix {
    let (s, c) = angle_deg.to_radians().sin_cos();
    Matrix2::new(re(c), re(-s), re(s), re(c))
}

/// Relative retardance `phase_deg` on V.
pub fn retarder_matrix(phase_deg: f64) -> JonesMatrix {
    Matrix2::new(re(1.0), re(0.0), re(0.0), Complex64::from_polar(1.0, phase_deg.to_radians()))
}

pub fn apply_jones(state: &FockState, path: Path, jones: &JonesMatrix) -> Result<FockState> {
    state.apply_polarization_unitary(path, &jones.transpose())
}

pub fn hwp(state: &FockState, path: Path, angle_deg: f64) -> Result<FockState> {
    apply_jones(state, path, &hwp_matrix(angle_deg))
}

pub fn qwp(state: &FockState, path: Path, angle_deg: f64) -> Result<FockState> {
    apply_jones(state, path, &qwp_matrix(angle_deg))
}

/// Rank-one projector |theta><theta| on the polarization pair.
pub fn polarizer_projector(theta: AnalyzerSetting) -> JonesMatrix {
    projector(&theta.jones())
}

pub fn projector(v: &JonesVector) -> JonesMatrix {
    v * v.adjoint()
}

/// Creation-operator map to the measurement basis `(psi, psi_perp)`: after it,
/// the H slot of the path holds the `psi` component and the V slot its complement.
pub fn measurement_basis_change(psi: &JonesVector) -> Unitary2 {
    let (a, b) = (psi[0], psi[1]);
    Matrix2::new(a.conj(), -b, b.conj(), a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitterSpec {
    /// Intensity transmittance for H photons.
    pub transmittance_h: f64,
    /// Intensity transmittance for V photons.
    pub transmittance_v: f64,
}

impl Default for SplitterSpec {
    fn default() -> Self {
        SplitterSpec { transmittance_h: 0.5, transmittance_v: 0.5 }
    }
}

impl SplitterSpec {
    pub fn new(transmittance_h: f64, transmittance_v: f64) -> Result<Self> {
        let spec = SplitterSpec { transmittance_h, transmittance_v };
        spec.validate()?;
        Ok(spec)
    }

    /// Both polarizations shifted from 50:50 by `imbalance`.
    pub fn imbalanced(imbalance: f64) -> Result<Self> {
        Self::new(0.5 + imbalance, 0.5 + imbalance)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("H", self.transmittance_h), ("V", self.transmittance_v)] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidParameter(format!("splitter transmittance for {name} must lie in (0,1), got {t}")));
            }
        }
        Ok(())
    }

    pub fn transmittance(&self, pol: Polarization) -> f64 {
        match pol {
            Polarization::H => self.transmittance_h,
            Polarization::V => self.transmittance_v,
        }
    }
}

/// Input ports of the fiber splitter; the LO transmits to `Out1`, the signal to `Out2`.
pub const FBS_INPUTS: [Path; 2] = [Path::LoIn, Path::SignalIn];
pub const FBS_OUTPUTS: [Path; 2] = [Path::Out1, Path::Out2];

/// Mixes the LO and signal inputs with amplitudes `(sqrt T, i sqrt(1-T))` per polarization.
pub fn fiber_beam_splitter(state: &FockState, spec: &SplitterSpec) -> Result<FockState> {
    spec.validate()?;
    state.apply_two_mode_map(FBS_INPUTS, FBS_OUTPUTS, |pol| splitter(spec.transmittance(pol)))
}

/// Same as [`fiber_beam_splitter`] but also accepts the lossless limits T = 0 and T = 1.
pub fn fiber_beam_splitter_unchecked(state: &FockState, t_h: f64, t_v: f64) -> Result<FockState> {
    state.apply_two_mode_map(FBS_INPUTS, FBS_OUTPUTS, |pol| match pol {
        Polarization::H => splitter(t_h),
        Polarization::V => splitter(t_v),
    })
}

/// The half-wave plate at 0 degrees on `Out1` in the post-splitter compensation
/// optics. It flips the sign of V in that arm, which turns the split-photon
/// singlet produced by the `i`-reflection splitter into (|HV> + |VH>)/sqrt2.
pub fn output_compensation(state: &FockState) -> Result<FockState> {
    hwp(state, Path::Out1, 0.0)
}

/// Residual static fiber birefringence in one output arm: a rotation followed by
/// a retardance on V.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FiberMisalignment {
    pub rotation_deg: f64,
    pub phase_deg: f64,
}

impl FiberMisalignment {
    pub fn is_identity(&self) -> bool {
        self.rotation_deg == 0.0 && self.phase_deg == 0.0
    }

    pub fn jones(&self) -> JonesMatrix {
        retarder_matrix(self.phase_deg) * rotation_matrix(self.rotation_deg)
    }

    pub fn apply(&self, state: &FockState, path: Path) -> Result<FockState> {
        if self.is_identity() {
            return Ok(state.clone());
        }
        apply_jones(state, path, &self.jones())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{balanced_splitter, Label, Mode, Occupation};

    fn m(path: Path, pol: Polarization) -> Mode {
        Mode::new(path, pol, Label::A)
    }

    fn c(a: f64, b: f64) -> Complex64 {
        Complex64::new(a, b)
    }

    #[test]
    fn hwp_at_zero_keeps_h() {
        let st = FockState::single(m(Path::Out1, Polarization::H), 4);
        let out = hwp(&st, Path::Out1, 0.0).unwrap();
        assert!((out.inner(&st).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hwp_at_22_5_makes_diagonal() {
        let st = FockState::single(m(Path::Out1, Polarization::H), 4);
        let out = hwp(&st, Path::Out1, 22.5).unwrap();
        let s = FRAC_1_SQRT_2;
        assert!((out.amplitude(&Occupation::single(m(Path::Out1, Polarization::H), 1)) - c(s, 0.0)).norm() < 1e-12);
        assert!((out.amplitude(&Occupation::single(m(Path::Out1, Polarization::V), 1)) - c(s, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn qwp_at_45_makes_circular() {
        let st = FockState::single(m(Path::Out2, Polarization::H), 4);
        let out = qwp(&st, Path::Out2, 45.0).unwrap();
        let ph = out.amplitude(&Occupation::single(m(Path::Out2, Polarization::H), 1));
        let pv = out.amplitude(&Occupation::single(m(Path::Out2, Polarization::V), 1));
        assert!((ph.norm_sqr() - 0.5).abs() < 1e-12);
        // circular: quarter-period relative phase
        assert!(((pv / ph).arg().abs() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn polarizer_projectors() {
        let h = polarizer_projector(AnalyzerSetting::new(0.0));
        assert!((h - Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0))).norm() < 1e-15);
        let v = polarizer_projector(AnalyzerSetting::new(90.0));
        assert!((v[(1, 1)].re - 1.0).abs() < 1e-15 && v[(0, 0)].norm() < 1e-15);
        for theta in [0.0, 17.0, 45.0, 133.3] {
            let s = AnalyzerSetting::new(theta);
            let sum = polarizer_projector(s) + polarizer_projector(s.perpendicular());
            assert!((sum - JonesMatrix::identity()).norm() < 1e-14);
        }
    }

    #[test]
    fn joint_projection_on_psi_plus() {
        // <t1 t2|psi+> = sin(t1 + t2)/sqrt2
        let psi = crate::fock::TwoQubitDensityMatrix::psi_plus_vector();
        for (t1, t2) in [(45.0, 45.0), (10.0, 70.0), (0.0, 0.0), (22.5, 67.5)] {
            let a = AnalyzerSetting::new(t1).jones();
            let b = AnalyzerSetting::new(t2).jones();
            let pair = nalgebra::Vector4::new(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]);
            let prob = pair.dotc(&psi).norm_sqr();
            let expect = 0.5 * (f64::to_radians(t1 + t2)).sin().powi(2);
            assert!((prob - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn analyzer_angles_wrap() {
        assert_eq!(AnalyzerSetting::new(180.0).key(), 0);
        assert_eq!(AnalyzerSetting::new(202.5).key(), AnalyzerSetting::new(22.5).key());
        assert_eq!(AnalyzerSetting::new(90.0).perpendicular().key(), 0);
    }

    fn eq1_input() -> FockState {
        FockState::single(m(Path::SignalIn, Polarization::V), 4)
            .tensor(&FockState::single(m(Path::LoIn, Polarization::H), 4))
            .unwrap()
    }

    #[test]
    fn balanced_fbs_with_compensation_gives_four_term_state() {
        let out = output_compensation(&fiber_beam_splitter(&eq1_input(), &SplitterSpec::default()).unwrap()).unwrap();
        let k = |p1: Option<Polarization>, p2: Option<Polarization>, both_in: Option<Path>| match both_in {
            Some(path) => Occupation::from_pairs([(m(path, Polarization::H), 1), (m(path, Polarization::V), 1)]),
            None => Occupation::from_pairs([(m(Path::Out1, p1.unwrap()), 1), (m(Path::Out2, p2.unwrap()), 1)]),
        };
        use Polarization::{H, V};
        // (1/2)(|H>1|V>2 + |V>1|H>2 - i|H>1|V>1 + i|H>2|V>2)
        assert!((out.amplitude(&k(Some(H), Some(V), None)) - c(0.5, 0.0)).norm() < 1e-12);
        assert!((out.amplitude(&k(Some(V), Some(H), None)) - c(0.5, 0.0)).norm() < 1e-12);
        assert!((out.amplitude(&k(None, None, Some(Path::Out1))) - c(0.0, -0.5)).norm() < 1e-12);
        assert!((out.amplitude(&k(None, None, Some(Path::Out2))) - c(0.0, 0.5)).norm() < 1e-12);
        assert_eq!(out.len(), 4);
        let post = out.project_split_occupancy();
        assert!((post.norm_sqr() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fbs_matches_generic_splitter_when_balanced() {
        let a = fiber_beam_splitter(&eq1_input(), &SplitterSpec::default()).unwrap();
        let b = eq1_input().apply_two_mode_unitary(FBS_INPUTS, FBS_OUTPUTS, &balanced_splitter()).unwrap();
        assert!(a.distance_sqr(&b) < 1e-24);
    }

    #[test]
    fn full_transmission_passes_straight_through() {
        let out = fiber_beam_splitter_unchecked(&eq1_input(), 1.0, 1.0).unwrap();
        let key = Occupation::from_pairs([(m(Path::Out1, Polarization::H), 1), (m(Path::Out2, Polarization::V), 1)]);
        assert!((out.amplitude(&key).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn splitter_rejects_bad_transmittance() {
        assert!(SplitterSpec::new(0.0, 0.5).is_err());
        assert!(SplitterSpec::new(0.5, 1.0).is_err());
        assert!(fiber_beam_splitter(&eq1_input(), &SplitterSpec { transmittance_h: 1.2, transmittance_v: 0.5 }).is_err());
    }

    #[test]
    fn polarization_dependent_imbalance_sets_diagonal_ratio() {
        // hand expansion: HV term ~ sqrt(T_H T_V), VH term ~ sqrt((1-T_H)(1-T_V))
        let (th, tv) = (0.55, 0.5);
        let out = fiber_beam_splitter(&eq1_input(), &SplitterSpec::new(th, tv).unwrap()).unwrap();
        let rho = output_compensation(&out).unwrap().project_split_occupancy().reduce_to_polarization_dm().unwrap();
        let ratio = rho.element(1, 1).re / rho.element(2, 2).re;
        assert!((ratio - th * tv / ((1.0 - th) * (1.0 - tv))).abs() < 1e-10);
        assert!((ratio - 1.2222222222222223).abs() < 1e-10);
    }

    #[test]
    fn hwp_pair_is_rotation_up_to_phase() {
        for (a, b) in [(10.0, 35.0), (0.0, 22.5), (70.0, -15.0)] {
            let prod = hwp_matrix(a) * hwp_matrix(b);
            let rot = rotation_matrix(2.0 * (a - b));
            assert!((prod - rot).norm() < 1e-10);
        }
    }

    #[test]
    fn basis_change_puts_projection_in_h_slot() {
        for b in TomoBasis::ALL {
            let u = measurement_basis_change(&b.jones());
            assert!((u * u.adjoint() - Unitary2::identity()).norm() < 1e-12);
            // a photon prepared in |b> ends up fully in the H slot
            let j = b.jones();
            let st = FockState::from_terms(
                [
                    (Occupation::single(m(Path::Out1, Polarization::H), 1), j[0]),
                    (Occupation::single(m(Path::Out1, Polarization::V), 1), j[1]),
                ],
                4,
            );
            let out = st.apply_polarization_unitary(Path::Out1, &u).unwrap();
            let p = out.amplitude(&Occupation::single(m(Path::Out1, Polarization::H), 1)).norm_sqr();
            assert!((p - 1.0).abs() < 1e-12, "{b:?}");
        }
    }
}
