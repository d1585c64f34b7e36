//! Photon sources: the SPDC pair state, the weak coherent local oscillator (LO)
//! and the delay-dependent spectral overlap between the LO and the heralded photon.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockState, Label, Mode, Occupation, Path, Polarization};

pub const DEFAULT_MU: f64 = 4.3e-4;
pub const DEFAULT_NU: f64 = 2.1e-2;
pub const DEFAULT_DIP_FWHM_UM: f64 = 50.7;
/// |zeta0|^2 matching the measured three-fold dip visibility.
pub const DEFAULT_ZETA0_SQ: f64 = 0.854;

/// The heralded signal photon enters the splitter vertically polarized.
pub const SIGNAL_MODE: Mode = Mode::new(Path::SignalIn, Polarization::V, Label::A);
pub const IDLER_MODE: Mode = Mode::new(Path::Idler, Polarization::H, Label::A);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdcParams {
    /// Mean photon number per pulse in the signal (equivalently idler) mode.
    pub mu: f64,
}

impl Default for SpdcParams {
    fn default() -> Self {
        SpdcParams { mu: DEFAULT_MU }
    }
}

impl SpdcParams {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("SPDC mean photon number must be positive, got {mu}")));
        }
        Ok(SpdcParams { mu })
    }

    /// Geometric-law parameter p = 1/(1 + mu).
    pub fn p(&self) -> f64 {
        1.0 / (1.0 + self.mu)
    }

    /// |a_n|^2 = p (1 - p)^n.
    pub fn pair_probability(&self, n: u32) -> f64 {
        let p = self.p();
        p * (1.0 - p).powi(n as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentParams {
    pub nu: f64,
    pub polarization: Polarization,
    /// Optical phase in radians.
    pub phase: f64,
}

impl Default for CoherentParams {
    fn default() -> Self {
        CoherentParams { nu: DEFAULT_NU, polarization: Polarization::H, phase: 0.0 }
    }
}

impl CoherentParams {
    pub fn new(nu: f64, polarization: Polarization, phase: f64) -> Result<Self> {
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(Error::InvalidParameter(format!("LO mean photon number must be non-negative, got {nu}")));
        }
        Ok(CoherentParams { nu, polarization, phase })
    }

    /// |c_n|^2 = e^{-nu} nu^n / n!.
    pub fn photon_probability(&self, n: u32) -> f64 {
        poisson(self.nu, n)
    }
}

pub(crate) fn poisson(mean: f64, n: u32) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (-mean + f64::from(n) * mean.ln() - ln_factorial(n)).exp()
}

fn ln_factorial(n: u32) -> f64 {
    (1..=n).map(|k| f64::from(k).ln()).sum()
}

/// Coherent-state amplitude for `n` photons with complex displacement `alpha`,
/// excluding the common `e^{-|alpha|^2/2}` factor.
fn displaced_amplitude(alpha: Complex64, n: u32) -> Complex64 {
    alpha.powu(n) / ln_factorial(n).exp().sqrt()
}

/// `sum_n a_n |n>_signal |n>_idler` with real non-negative a_n, keeping pairs
/// whose photon total fits in `n_max`.
pub fn spdc_state(params: &SpdcParams, n_max: u32) -> FockState {
    let terms = (0..=n_max / 2).map(|n| {
        let occ = Occupation::from_pairs([(SIGNAL_MODE, n), (IDLER_MODE, n)]);
        (occ, Complex64::new(params.pair_probability(n).sqrt(), 0.0))
    });
    FockState::from_terms(terms, n_max)
}

/// `sum_n c_n |n>_LO` on the LO input port with the configured polarization (label a).
pub fn coherent_state(params: &CoherentParams, n_max: u32) -> FockState {
    let mode = Mode::new(Path::LoIn, params.polarization, Label::A);
    let envelope = (-params.nu / 2.0).exp();
    let alpha = Complex64::from_polar(params.nu.sqrt(), params.phase);
    let terms = (0..=n_max).map(|n| (Occupation::single(mode, n), envelope * displaced_amplitude(alpha, n)));
    FockState::from_terms(terms, n_max)
}

/// LO coherent state with its creation operator split over the two spectral labels:
/// `a_LO^dag = zeta a_{LO,a}^dag + sqrt(1 - |zeta|^2) a_{LO,b}^dag`. Label a is the
/// heralded photon's wave packet.
pub fn lo_with_distinguishability(params: &CoherentParams, zeta: Complex64, n_max: u32) -> Result<FockState> {
    let overlap = zeta.norm();
    if overlap > 1.0 + 1e-12 || !overlap.is_finite() {
        return Err(Error::InvalidOverlap(overlap));
    }
    let orth = (1.0 - overlap * overlap).max(0.0).sqrt();
    let mode_a = Mode::new(Path::LoIn, params.polarization, Label::A);
    let mode_b = Mode::new(Path::LoIn, params.polarization, Label::B);
    let envelope = (-params.nu / 2.0).exp();
    let alpha = Complex64::from_polar(params.nu.sqrt(), params.phase);
    let alpha_a = alpha * zeta;
    let alpha_b = alpha * orth;
    let mut terms = Vec::new();
    for total in 0..=n_max {
        for ka in 0..=total {
            let kb = total - ka;
            let amp = envelope * displaced_amplitude(alpha_a, ka) * displaced_amplitude(alpha_b, kb);
            terms.push((Occupation::from_pairs([(mode_a, ka), (mode_b, kb)]), amp));
        }
    }
    Ok(FockState::from_terms(terms, n_max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DipShape {
    #[default]
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapModel {
    /// Peak complex overlap at zero delay.
    pub zeta0: Complex64,
    /// FWHM of |zeta(tau)|^2 in micrometres of optical path delay.
    pub dip_fwhm_um: f64,
    pub shape: DipShape,
}

impl Default for OverlapModel {
    fn default() -> Self {
        OverlapModel {
            zeta0: Complex64::new(DEFAULT_ZETA0_SQ.sqrt(), 0.0),
            dip_fwhm_um: DEFAULT_DIP_FWHM_UM,
            shape: DipShape::Gaussian,
        }
    }
}

impl OverlapModel {
    pub fn new(zeta0: Complex64, dip_fwhm_um: f64) -> Result<Self> {
        if zeta0.norm() > 1.0 + 1e-12 {
            return Err(Error::InvalidOverlap(zeta0.norm()));
        }
        if !(dip_fwhm_um > 0.0) || !dip_fwhm_um.is_finite() {
            return Err(Error::InvalidParameter(format!("dip FWHM must be positive, got {dip_fwhm_um}")));
        }
        Ok(OverlapModel { zeta0, dip_fwhm_um, shape: DipShape::Gaussian })
    }

    /// zeta(tau) = zeta0 exp(-(4 ln 2) tau^2 / (2 w^2)), so |zeta|^2 has FWHM w.
    pub fn overlap_at_delay(&self, tau_um: f64) -> Complex64 {
        match self.shape {
            DipShape::Gaussian => {
                let w = self.dip_fwhm_um;
                self.zeta0 * (-(4.0 * std::f64::consts::LN_2) * tau_um * tau_um / (2.0 * w * w)).exp()
            }
        }
    }
}
