//! Flat `key = value` experiment configuration.
//!
//! Blank lines and `#` comments are ignored; unknown or repeated keys are
//! rejected. [`ExperimentConfig::echo`] writes every effective parameter in the
//! same format, and parsing the echo reproduces the configuration exactly.

use std::fmt::Write as _;
use std::path::Path as FsPath;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::ChshSettings;
use crate::detection::{DetectionParams, ExperimentSetup, DEFAULT_ETA, DEFAULT_ETA_L, DEFAULT_REP_RATE_HZ};
use crate::error::{Error, Result};
use crate::fock::{Polarization, DEFAULT_N_MAX};
use crate::optics::{FiberMisalignment, SplitterSpec};
use crate::sources::{CoherentParams, OverlapModel, SpdcParams, DEFAULT_DIP_FWHM_UM, DEFAULT_MU, DEFAULT_NU, DEFAULT_ZETA0_SQ};

macro_rules! config_fields {
    ($($(#[doc = $doc:literal])* $key:ident : $ty:ty = $default:expr;)*) => {
        /// Every tunable of the simulator and the scenario runners.
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct ExperimentConfig {
            $($(#[doc = $doc])* pub $key: $ty,)*
        }

        impl Default for ExperimentConfig {
            fn default() -> Self {
                ExperimentConfig { $($key: $default,)* }
            }
        }

        impl ExperimentConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($key)),*];

            /// Sets one parameter from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let value = value.trim();
                match key.trim() {
                    $(stringify!($key) => {
                        self.$key = value.parse::<$ty>().map_err(|e| {
                            Error::InvalidConfig(format!("{}: cannot parse '{}': {}", stringify!($key), value, e))
                        })?;
                    })*
                    other => return Err(Error::InvalidConfig(format!("unknown key '{other}'"))),
                }
                Ok(())
            }

            /// All parameters, one `key = value` line each, in declaration order.
            pub fn echo(&self) -> String {
                let mut out = String::new();
                $(writeln!(out, "{} = {}", stringify!($key), self.$key).unwrap();)*
                out
            }
        }
    };
}

config_fields! {
    /// Mean SPDC pair number per pulse.
    mu: f64 = DEFAULT_MU;
    /// Mean LO photon number per pulse.
    nu: f64 = DEFAULT_NU;
    lo_phase_rad: f64 = 0.0;
    /// Signal and idler collection efficiency.
    eta: f64 = DEFAULT_ETA;
    /// LO collection efficiency.
    eta_l: f64 = DEFAULT_ETA_L;
    f_hz: f64 = DEFAULT_REP_RATE_HZ;
    /// Peak mode overlap |zeta0|^2.
    zeta0_sq: f64 = DEFAULT_ZETA0_SQ;
    dip_fwhm_um: f64 = DEFAULT_DIP_FWHM_UM;
    transmittance_h: f64 = 0.5;
    transmittance_v: f64 = 0.5;
    fiber1_rotation_deg: f64 = 0.0;
    fiber1_phase_deg: f64 = 0.0;
    fiber2_rotation_deg: f64 = 0.0;
    fiber2_phase_deg: f64 = 0.0;
    dark_idler_hz: f64 = 0.0;
    dark_det1_hz: f64 = 0.0;
    dark_det2_hz: f64 = 0.0;
    n_max: u32 = DEFAULT_N_MAX;
    seed: u64 = 1;
    /// Monte Carlo pulses per setting; 0 gives analytic results only.
    pulses: u64 = 7_600_000_000;
    /// Extra transmission applied to the predicted three-fold rate.
    excess_loss: f64 = 1.0;
    /// Observed singles, signal-idler coincidence and LO singles rates.
    rate_c1_hz: f64 = 10_000.0;
    rate_c2_hz: f64 = 3_000.0;
    rate_cl_hz: f64 = 600_000.0;
    hom_tau_min_um: f64 = -200.0;
    hom_tau_max_um: f64 = 200.0;
    hom_points: usize = 41;
    chsh_theta1_deg: f64 = 45.0;
    chsh_theta1p_deg: f64 = 90.0;
    chsh_theta2_deg: f64 = 22.5;
    chsh_theta2p_deg: f64 = 67.5;
    /// 16 (standard scheme) or 36 (all basis pairs).
    tomography_settings: usize = 16;
    mle_starts: usize = 8;
    bootstrap_resamples: usize = 1000;
}

impl ExperimentConfig {
    /// Unit efficiencies, perfect overlap and weak sources, so that the
    /// single-photon sector dominates.
    pub fn ideal() -> Self {
        ExperimentConfig { mu: 1e-8, nu: 1e-4, eta: 1.0, eta_l: 1.0, zeta0_sq: 1.0, ..Self::default() }
    }

    /// Default sources with a slightly imbalanced splitter and small residual
    /// fiber birefringence.
    pub fn degraded() -> Self {
        ExperimentConfig { transmittance_v: 0.45, fiber1_phase_deg: 8.0, fiber2_rotation_deg: 2.0, ..Self::default() }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::InvalidConfig(format!("line {}: repeated key '{key}'", lineno + 1)));
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<'a>(&mut self, overrides: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| Error::InvalidConfig(format!("override '{o}' is not key=value")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// SHA-256 of the echoed configuration, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.echo().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn chsh_settings(&self) -> ChshSettings {
        ChshSettings {
            theta1: self.chsh_theta1_deg,
            theta1p: self.chsh_theta1p_deg,
            theta2: self.chsh_theta2_deg,
            theta2p: self.chsh_theta2p_deg,
        }
    }

    pub fn detection(&self) -> DetectionParams {
        DetectionParams {
            eta: self.eta,
            eta_l: self.eta_l,
            f_hz: self.f_hz,
            dark_counts_hz: [self.dark_idler_hz, self.dark_det1_hz, self.dark_det2_hz],
        }
    }

    /// Physics configuration at zero delay.
    pub fn setup(&self) -> Result<ExperimentSetup> {
        if !(0.0..=1.0).contains(&self.zeta0_sq) {
            return Err(Error::InvalidConfig(format!("zeta0_sq must lie in [0,1], got {}", self.zeta0_sq)));
        }
        let setup = ExperimentSetup {
            spdc: SpdcParams::new(self.mu)?,
            lo: CoherentParams::new(self.nu, Polarization::H, self.lo_phase_rad)?,
            overlap: OverlapModel::new(Complex64::new(self.zeta0_sq.sqrt(), 0.0), self.dip_fwhm_um)?,
            delay_um: 0.0,
            splitter: SplitterSpec::new(self.transmittance_h, self.transmittance_v)?,
            misalignment: [
                FiberMisalignment { rotation_deg: self.fiber1_rotation_deg, phase_deg: self.fiber1_phase_deg },
                FiberMisalignment { rotation_deg: self.fiber2_rotation_deg, phase_deg: self.fiber2_phase_deg },
            ],
            detection: self.detection(),
            n_max: self.n_max,
        };
        setup.validate()?;
        Ok(setup)
    }

    /// Checks every parameter; physics errors are reported as invalid config.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        self.setup().map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(m),
            other => Error::InvalidConfig(other.to_string()),
        })?;
        if !(2..=8).contains(&self.n_max) {
            return bad(format!("n_max must lie in [2, 8], got {}", self.n_max));
        }
        if !(self.excess_loss > 0.0 && self.excess_loss <= 1.0) {
            return bad(format!("excess_loss must lie in (0,1], got {}", self.excess_loss));
        }
        if [self.rate_c1_hz, self.rate_c2_hz, self.rate_cl_hz].iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return bad("observed rates must be non-negative".into());
        }
        if !self.hom_tau_min_um.is_finite() || !self.hom_tau_max_um.is_finite() {
            return bad("delay range must be finite".into());
        }
        if self.hom_points < 5 {
            return bad(format!("hom_points must be at least 5, got {}", self.hom_points));
        }
        if self.tomography_settings != 16 && self.tomography_settings != 36 {
            return bad(format!("tomography_settings must be 16 or 36, got {}", self.tomography_settings));
        }
        if self.mle_starts == 0 {
            return bad("mle_starts must be positive".into());
        }
        self.chsh_settings().validate().map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips_exactly() {
        for cfg in [ExperimentConfig::default(), ExperimentConfig::ideal(), ExperimentConfig::degraded()] {
            let back = ExperimentConfig::parse(&cfg.echo()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.hash(), cfg.hash());
        }
        let mut odd = ExperimentConfig::default();
        odd.mu = 0.1 + 0.2;
        odd.fiber1_phase_deg = -1.0 / 3.0;
        assert_eq!(ExperimentConfig::parse(&odd.echo()).unwrap(), odd);
    }

    #[test]
    fn rejects_unknown_and_repeated_keys() {
        assert!(matches!(ExperimentConfig::parse("muu = 1"), Err(Error::InvalidConfig(_))));
        assert!(matches!(ExperimentConfig::parse("mu = 1e-4\nmu = 2e-4"), Err(Error::InvalidConfig(_))));
        assert!(matches!(ExperimentConfig::parse("mu 1e-4"), Err(Error::InvalidConfig(_))));
        assert!(matches!(ExperimentConfig::parse("n_max = -1"), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn comments_and_overrides() {
        let mut cfg = ExperimentConfig::parse("# sources\nmu = 2e-4  # weaker pump\n\nnu=0.05\n").unwrap();
        assert_eq!(cfg.mu, 2e-4);
        assert_eq!(cfg.nu, 0.05);
        cfg.apply_overrides(["eta=0.5", "seed = 9"]).unwrap();
        assert_eq!((cfg.eta, cfg.seed), (0.5, 9));
        assert!(cfg.apply_overrides(["bogus=1"]).is_err());
    }

    #[test]
    fn validation_reports_invalid_config() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.eta = 1.5;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let cfg = ExperimentConfig { zeta0_sq: 1.2, ..ExperimentConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let cfg = ExperimentConfig { hom_points: 3, ..ExperimentConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
