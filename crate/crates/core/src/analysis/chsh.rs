use serde::{Deserialize, Serialize};

use super::Estimate;
use crate::error::{Error, Result};
use crate::fock::TwoQubitDensityMatrix;
use crate::optics::AnalyzerSetting;
use crate::record::{CountEntry, CountRecord, SettingLabel};

/// Polarization correlation from the coincidences at (t1, t2), (t1+90, t2+90),
/// (t1+90, t2) and (t1, t2+90), with Poisson-propagated standard error.
pub fn correlation_e(c_pp: f64, c_tt: f64, c_tp: f64, c_pt: f64) -> Result<Estimate> {
    let same = c_pp + c_tt;
    let cross = c_tp + c_pt;
    let total = same + cross;
    if !(total > 0.0) {
        return Err(Error::UndefinedCorrelation);
    }
    let value = (same - cross) / total;
    // dE/dc = +2 cross / N^2 for same-parity counts, -2 same / N^2 otherwise
    let var = 4.0 * same * cross / total.powi(3);
    Ok(Estimate::new(value, var.sqrt()))
}

/// Analyzer angles of the CHSH combination
/// `E(t1,t2) + E(t1',t2) + E(t1,t2') - E(t1',t2')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub theta1: f64,
    pub theta1p: f64,
    pub theta2: f64,
    pub theta2p: f64,
}

impl Default for ChshSettings {
    fn default() -> Self {
        ChshSettings { theta1: 45.0, theta1p: 90.0, theta2: 22.5, theta2p: 67.5 }
    }
}

impl ChshSettings {
    pub fn validate(&self) -> Result<()> {
        let a = [self.theta1, self.theta1p].map(|t| AnalyzerSetting::new(t).key());
        let b = [self.theta2, self.theta2p].map(|t| AnalyzerSetting::new(t).key());
        if a[0] == a[1] || b[0] == b[1] {
            return Err(Error::InvalidParameter("CHSH angles must be distinct modulo 180".into()));
        }
        Ok(())
    }

    /// The four (t1, t2) pairs in CHSH order.
    pub fn pairs(&self) -> [(f64, f64); 4] {
        [
            (self.theta1, self.theta2),
            (self.theta1p, self.theta2),
            (self.theta1, self.theta2p),
            (self.theta1p, self.theta2p),
        ]
    }

    /// All sixteen polarizer settings the estimate needs.
    pub fn required_labels(&self) -> Vec<SettingLabel> {
        self.pairs()
            .iter()
            .flat_map(|&(t1, t2)| quad(t1, t2))
            .collect()
    }
}

/// (t1,t2), (t1+90,t2+90), (t1+90,t2), (t1,t2+90).
fn quad(t1: f64, t2: f64) -> [SettingLabel; 4] {
    [
        SettingLabel::polarizers(t1, t2),
        SettingLabel::polarizers(t1 + 90.0, t2 + 90.0),
        SettingLabel::polarizers(t1 + 90.0, t2),
        SettingLabel::polarizers(t1, t2 + 90.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub settings: ChshSettings,
    /// E values in CHSH order.
    pub correlations: [Estimate; 4],
    pub s_signed: f64,
    /// |S| with its standard error.
    pub s: Estimate,
    /// S - 2 exceeds twice the standard error.
    pub violation: bool,
}

pub fn bell_s(record: &CountRecord, settings: &ChshSettings) -> Result<ChshResult> {
    settings.validate()?;
    let missing = record.missing(&settings.required_labels());
    if !missing.is_empty() {
        return Err(Error::IncompleteRecord(missing));
    }
    let mut correlations = [Estimate::new(0.0, 0.0); 4];
    for (slot, &(t1, t2)) in settings.pairs().iter().enumerate() {
        let c = quad(t1, t2).map(|l| record.counts(&l).unwrap() as f64);
        correlations[slot] = correlation_e(c[0], c[1], c[2], c[3])?;
    }
    let s_signed = correlations[0].value + correlations[1].value + correlations[2].value - correlations[3].value;
    let stderr = correlations.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt();
    let s = Estimate::new(s_signed.abs(), stderr);
    Ok(ChshResult { settings: *settings, correlations, s_signed, violation: s.value - 2.0 > 2.0 * stderr, s })
}

/// Expected coincidences `total * <t1 t2|rho|t1 t2>` at the sixteen CHSH settings.
pub fn analytic_polarizer_counts(rho: &TwoQubitDensityMatrix, settings: &ChshSettings, total: f64) -> CountRecord {
    let mut rec = CountRecord::new();
    for label in settings.required_labels() {
        if rec.get(&label).is_some() {
            continue;
        }
        let (crate::record::AnalyzerLabel::Linear(a), crate::record::AnalyzerLabel::Linear(b)) = (label.analyzer1, label.analyzer2)
        else {
            unreachable!("CHSH labels are linear polarizers")
        };
        let v = super::tomography::pair_vector(&a.jones(), &b.jones());
        let p = rho.expectation(&(v * v.adjoint()));
        rec.push(CountEntry { label, pulses: 0, counts: (total * p).round() as u64 }).unwrap();
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_from_published_quadruple() {
        // (945 + 952 - 261 - 310) / 2468
        let e = correlation_e(945.0, 952.0, 261.0, 310.0).unwrap();
        assert!((e.value - 1326.0 / 2468.0).abs() < 1e-15);
        assert!((e.value - 0.537).abs() < 0.0005);
        assert!((e.stderr - 0.017).abs() < 0.0005);
    }

    #[test]
    fn correlation_limits() {
        assert_eq!(correlation_e(50.0, 50.0, 0.0, 0.0).unwrap().value, 1.0);
        assert_eq!(correlation_e(7.0, 7.0, 7.0, 7.0).unwrap().value, 0.0);
        assert!(matches!(correlation_e(0.0, 0.0, 0.0, 0.0), Err(Error::UndefinedCorrelation)));
    }

    #[test]
    fn ideal_counts_reach_tsirelson() {
        let rec = analytic_polarizer_counts(&TwoQubitDensityMatrix::psi_plus(), &ChshSettings::default(), 1e12);
        let r = bell_s(&rec, &ChshSettings::default()).unwrap();
        assert!((r.s.value - 2.0 * 2f64.sqrt()).abs() < 1e-6);
        assert!(r.violation);
    }

    #[test]
    fn uniform_counts_give_zero() {
        let rec = analytic_polarizer_counts(&TwoQubitDensityMatrix::maximally_mixed(), &ChshSettings::default(), 4000.0);
        let r = bell_s(&rec, &ChshSettings::default()).unwrap();
        assert!(r.s.value.abs() < 1e-12);
        assert!(!r.violation);
    }

    #[test]
    fn missing_settings_are_listed() {
        let mut rec = analytic_polarizer_counts(&TwoQubitDensityMatrix::psi_plus(), &ChshSettings::default(), 1e4);
        let kept: Vec<_> = rec.entries().iter().copied().filter(|e| e.label != SettingLabel::polarizers(45.0, 22.5)).collect();
        rec = CountRecord::from_entries(kept).unwrap();
        match bell_s(&rec, &ChshSettings::default()) {
            Err(Error::IncompleteRecord(m)) => assert_eq!(m, vec!["(45, 22.5)".to_string()]),
            other => panic!("expected incomplete record, got {other:?}"),
        }
    }
}
