use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Estimate;
use crate::detection::HigherOrderBudget;
use crate::error::{Error, Result};
use crate::fock::{psd_sqrt, Matrix4c, TwoQubitDensityMatrix};

/// <psi+|rho|psi+>.
pub fn fidelity(rho: &TwoQubitDensityMatrix) -> f64 {
    let psi = TwoQubitDensityMatrix::psi_plus_vector();
    (psi.adjoint() * rho.matrix() * psi)[(0, 0)].re.clamp(0.0, 1.0)
}

/// Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.
pub fn fidelity_between(rho: &TwoQubitDensityMatrix, sigma: &TwoQubitDensityMatrix) -> f64 {
    let s = psd_sqrt(rho.matrix());
    let inner = psd_sqrt(&(s * sigma.matrix() * s));
    inner.trace().re.powi(2).clamp(0.0, 1.0)
}

/// Y (x) Y with Y = [[0, -i], [i, 0]] in the (H, V) basis.
fn spin_flip() -> Matrix4c {
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    // (Y x Y)_{ij} = Y_{i1 j1} Y_{i2 j2}; Y x Y = antidiag(-1, 1, 1, -1)
    let mut m = Matrix4::from_element(z);
    m[(0, 3)] = -one;
    m[(1, 2)] = one;
    m[(2, 1)] = one;
    m[(3, 0)] = -one;
    m
}

/// Wootters concurrence max(0, l1 - l2 - l3 - l4), with l_i the decreasing
/// eigenvalues of sqrt(sqrt(rho) rho~ sqrt(rho)), rho~ = (Y x Y) rho* (Y x Y).
pub fn concurrence(rho: &TwoQubitDensityMatrix) -> f64 {
    let yy = spin_flip();
    let flipped = yy * rho.matrix().conjugate() * yy;
    let s = psd_sqrt(rho.matrix());
    let r = psd_sqrt(&(s * flipped * s));
    let mut l: Vec<f64> = SymmetricEigen::new((r + r.adjoint()).scale(0.5)).eigenvalues.iter().map(|x| x.max(0.0)).collect();
    l.sort_by(|a, b| b.partial_cmp(a).unwrap());
    (l[0] - l[1] - l[2] - l[3]).clamp(0.0, 1.0)
}

fn binary_entropy(x: f64) -> f64 {
    let term = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.log2() };
    term(x) + term(1.0 - x)
}

/// Entanglement of formation in bits from the concurrence.
pub fn eof(concurrence: f64) -> f64 {
    let c = concurrence.clamp(0.0, 1.0);
    binary_entropy((1.0 + (1.0 - c * c).sqrt()) / 2.0)
}

/// Fidelity to psi+ when every higher-order event falls outside the Bell state.
pub fn higher_order_fidelity_estimate(budget: &HigherOrderBudget) -> Result<f64> {
    if !(budget.p111 > 0.0) {
        return Err(Error::UndefinedEstimate("single-photon sector probability is zero".into()));
    }
    Ok(budget.p111 / (budget.p111 + budget.p112 + budget.p220))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntanglementReport {
    pub fidelity: Estimate,
    pub concurrence: Estimate,
    pub eof: Estimate,
    pub s_parameter: Option<Estimate>,
    pub min_fringe_visibility: Option<Estimate>,
}

impl EntanglementReport {
    /// Point estimates from `rho`; uncertainties are filled in by the caller.
    pub fn from_density(rho: &TwoQubitDensityMatrix) -> Self {
        let c = concurrence(rho);
        EntanglementReport {
            fidelity: Estimate::new(fidelity(rho), 0.0),
            concurrence: Estimate::new(c, 0.0),
            eof: Estimate::new(eof(c), 0.0),
            s_parameter: None,
            min_fringe_visibility: None,
        }
    }
}
