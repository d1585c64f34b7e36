//! Two-qubit polarization density matrices in the ordered basis (HH, HV, VH, VV).

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::Polarization;

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalues down to this value are accepted as floating-point noise.
pub const PSD_TOL: f64 = -1e-9;

pub type Matrix4c = Matrix4<Complex64>;

/// Basis index of a polarization pair: HH=0, HV=1, VH=2, VV=3.
pub fn basis_index(p1: Polarization, p2: Polarization) -> usize {
    2 * p1.index() + p2.index()
}

pub const BASIS_LABELS: [&str; 4] = ["HH", "HV", "VH", "VV"];

#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitDensityMatrix {
    elements: Matrix4c,
}

impl TwoQubitDensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(elements: Matrix4c) -> Result<Self> {
        let herm_err = (elements - elements.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm_err > HERMITICITY_TOL {
            return Err(Error::InvalidElement(format!("density matrix not Hermitian (deviation {herm_err:e})")));
        }
        let tr = elements.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidElement(format!("density matrix trace {tr} != 1")));
        }
        let rho = TwoQubitDensityMatrix { elements };
        let min_eig = rho.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig < PSD_TOL {
            return Err(Error::InvalidElement(format!("density matrix has eigenvalue {min_eig:e} < 0")));
        }
        Ok(rho)
    }

    /// Symmetrizes and rescales to unit trace before validating.
    pub fn from_unnormalized(m: Matrix4c) -> Result<Self> {
        let herm = (m + m.adjoint()).scale(0.5);
        let tr = herm.trace().re;
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(Error::DegenerateState(format!("trace {tr} is not positive")));
        }
        Self::new(herm.unscale(tr))
    }

    pub fn from_pure(psi: &Vector4<Complex64>) -> Result<Self> {
        Self::from_unnormalized(psi * psi.adjoint())
    }

    /// (|HV> + |VH>)/sqrt(2).
    pub fn psi_plus_vector() -> Vector4<Complex64> {
        let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Vector4::new(Complex64::new(0.0, 0.0), s, s, Complex64::new(0.0, 0.0))
    }

    /// (|HV> - |VH>)/sqrt(2).
    pub fn psi_minus_vector() -> Vector4<Complex64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Vector4::new(Complex64::new(0.0, 0.0), Complex64::new(s, 0.0), Complex64::new(-s, 0.0), Complex64::new(0.0, 0.0))
    }

    pub fn psi_plus() -> Self {
        Self::from_pure(&Self::psi_plus_vector()).expect("psi+ is a valid state")
    }

    pub fn maximally_mixed() -> Self {
        TwoQubitDensityMatrix { elements: Matrix4c::identity().scale(0.25) }
    }

    /// p |psi+><psi+| + (1 - p) I/4.
    pub fn werner(p: f64) -> Result<Self> {
        let m = Self::psi_plus().elements.scale(p) + Self::maximally_mixed().elements.scale(1.0 - p);
        Self::new(m)
    }

    pub fn matrix(&self) -> &Matrix4c {
        &self.elements
    }

    pub fn element(&self, row: usize, col: usize) -> Complex64 {
        self.elements[(row, col)]
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let eig = SymmetricEigen::new(self.elements);
        let mut ev = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2], eig.eigenvalues[3]];
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    pub fn purity(&self) -> f64 {
        (self.elements * self.elements).trace().re
    }

    /// Expectation value tr(rho * op).
    pub fn expectation(&self, op: &Matrix4c) -> f64 {
        (self.elements * op).trace().re
    }

    pub fn trace_distance(&self, other: &Self) -> f64 {
        let diff = self.elements - other.elements;
        let eig = SymmetricEigen::new((diff + diff.adjoint()).scale(0.5));
        0.5 * eig.eigenvalues.iter().map(|x| x.abs()).sum::<f64>()
    }
}

/// Principal square root of a Hermitian positive-semidefinite matrix.
pub(crate) fn psd_sqrt(m: &Matrix4c) -> Matrix4c {
    let herm = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(herm);
    let mut d = Matrix4c::zeros();
    for i in 0..4 {
        d[(i, i)] = Complex64::new(eig.eigenvalues[i].max(0.0).sqrt(), 0.0);
    }
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_hermitian() {
        let mut m = Matrix4c::identity().scale(0.25);
        m[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(matches!(TwoQubitDensityMatrix::new(m), Err(Error::InvalidElement(_))));
    }

    #[test]
    fn rejects_negative_eigenvalue() {
        let mut m = Matrix4c::zeros();
        m[(0, 0)] = Complex64::new(1.2, 0.0);
        m[(1, 1)] = Complex64::new(-0.2, 0.0);
        assert!(TwoQubitDensityMatrix::new(m).is_err());
    }

    #[test]
    fn psi_plus_is_pure() {
        let rho = TwoQubitDensityMatrix::psi_plus();
        assert!((rho.purity() - 1.0).abs() < 1e-12);
        assert!((rho.element(1, 2).re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let rho = TwoQubitDensityMatrix::werner(0.6).unwrap();
        let s = psd_sqrt(rho.matrix());
        let back = s * s;
        assert!((back - rho.matrix()).norm() < 1e-12);
    }
}
