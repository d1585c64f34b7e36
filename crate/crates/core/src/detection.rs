//! Loss, threshold detection and coincidence statistics.
//!
//! The analytic engine prepares `SPDC ⊗ LO`, applies the collection losses as a
//! probability-weighted ensemble of pure states (one element per lost-photon
//! pattern), sends every element through the splitter and the output optics, and
//! sums squared amplitudes into the eight click patterns of the idler detector and
//! the two analyzed output detectors. Detectors are threshold (click for at least
//! one photon). The Monte Carlo sampler draws pattern counts for independent pulses
//! from the same distribution.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Binomial, Distribution};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockState, Label, Mode, Occupation, Path, Polarization, DEFAULT_N_MAX};
use crate::optics::{
    fiber_beam_splitter, measurement_basis_change, output_compensation, AnalyzerSetting, FiberMisalignment,
    JonesVector, SplitterSpec, TomoBasis,
};
use crate::sources::{self, CoherentParams, OverlapModel, SpdcParams, IDLER_MODE, SIGNAL_MODE};

pub const DEFAULT_ETA: f64 = 0.3;
pub const DEFAULT_ETA_L: f64 = 0.37;
pub const DEFAULT_REP_RATE_HZ: f64 = 76e6;
/// Pruned probability mass is flagged once it exceeds this fraction of a reported probability.
pub const TRUNCATION_WARNING_FRACTION: f64 = 1e-6;
/// Pulses per Monte Carlo chunk; each chunk owns one RNG stream.
pub const MC_CHUNK_PULSES: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Total collection efficiency of the signal and idler channels.
    pub eta: f64,
    /// Total collection efficiency of the LO channel.
    pub eta_l: f64,
    /// Pulse repetition rate.
    pub f_hz: f64,
    /// Dark-count rates of the idler, output-1 and output-2 detectors (counts/s).
    pub dark_counts_hz: [f64; 3],
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams { eta: DEFAULT_ETA, eta_l: DEFAULT_ETA_L, f_hz: DEFAULT_REP_RATE_HZ, dark_counts_hz: [0.0; 3] }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, e) in [("eta", self.eta), ("eta_l", self.eta_l)] {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0,1], got {e}")));
            }
        }
        if !(self.f_hz > 0.0) || !self.f_hz.is_finite() {
            return Err(Error::InvalidParameter(format!("repetition rate must be positive, got {}", self.f_hz)));
        }
        if self.dark_counts_hz.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
            return Err(Error::InvalidParameter("dark-count rates must be non-negative".into()));
        }
        Ok(())
    }

    /// Per-pulse dark-click probabilities.
    pub fn dark_click_probabilities(&self) -> [f64; 3] {
        self.dark_counts_hz.map(|r| 1.0 - (-r / self.f_hz).exp())
    }
}

/// One element of a loss-channel ensemble: a normalized state and its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedState {
    pub weight: f64,
    pub state: FockState,
}

/// Each photon in the modes selected by `in_channel` survives independently with
/// probability `eta`. Lost photons are traced out, so the result is an ensemble over
/// lost-photon patterns; weights sum to the squared norm of the input.
pub fn loss_channel(state: &FockState, in_channel: impl Fn(Mode) -> bool, eta: f64) -> Result<Vec<WeightedState>> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("efficiency must lie in [0,1], got {eta}")));
    }
    let mut branches: BTreeMap<Occupation, Vec<(Occupation, Complex64)>> = BTreeMap::new();
    for (occ, amp) in state.terms() {
        let lossy: Vec<(Mode, u32)> = occ.iter().filter(|&(m, _)| in_channel(m)).collect();
        // enumerate how many photons each lossy mode loses
        let mut patterns: Vec<(Vec<(Mode, u32)>, f64)> = vec![(Vec::new(), 1.0)];
        for &(mode, n) in &lossy {
            let mut next = Vec::with_capacity(patterns.len() * (n as usize + 1));
            for (lost, factor) in &patterns {
                for k in 0..=n {
                    let p = binomial(n, k) * eta.powi((n - k) as i32) * (1.0 - eta).powi(k as i32);
                    if p == 0.0 {
                        continue;
                    }
                    let mut l = lost.clone();
                    l.push((mode, k));
                    next.push((l, factor * p));
                }
            }
            patterns = next;
        }
        for (lost, p) in patterns {
            let lost_occ = Occupation::from_pairs(lost.iter().copied());
            let kept = Occupation::from_pairs(occ.iter().map(|(m, n)| (m, n - lost_occ.get(m))));
            branches.entry(lost_occ).or_default().push((kept, amp * p.sqrt()));
        }
    }
    let mut out = Vec::with_capacity(branches.len());
    for (_, terms) in branches {
        let st = FockState::from_terms(terms, state.n_max());
        let w = st.norm_sqr();
        if w > 0.0 {
            out.push(WeightedState { weight: w, state: st.normalized()? });
        }
    }
    Ok(out)
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// What sits in front of an output detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Analyzer {
    /// Polarizer removed: the detector sees both polarizations.
    Open,
    /// Ideal projection onto a polarization state.
    Project(JonesVector),
}

impl Analyzer {
    pub fn linear(theta_deg: f64) -> Self {
        Analyzer::Project(AnalyzerSetting::new(theta_deg).jones())
    }

    pub fn tomographic(basis: TomoBasis) -> Self {
        Analyzer::Project(basis.jones())
    }
}

/// Full experiment configuration consumed by the analytic engine.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSetup {
    pub spdc: SpdcParams,
    pub lo: CoherentParams,
    pub overlap: OverlapModel,
    /// Optical path delay between LO and signal.
    pub delay_um: f64,
    pub splitter: SplitterSpec,
    /// Residual birefringence in front of analyzers 1 and 2.
    pub misalignment: [FiberMisalignment; 2],
    pub detection: DetectionParams,
    pub n_max: u32,
}

impl Default for ExperimentSetup {
    fn default() -> Self {
        ExperimentSetup {
            spdc: SpdcParams::default(),
            lo: CoherentParams::default(),
            overlap: OverlapModel::default(),
            delay_um: 0.0,
            splitter: SplitterSpec::default(),
            misalignment: [FiberMisalignment::default(); 2],
            detection: DetectionParams::default(),
            n_max: DEFAULT_N_MAX,
        }
    }
}

impl ExperimentSetup {
    pub fn validate(&self) -> Result<()> {
        SpdcParams::new(self.spdc.mu)?;
        CoherentParams::new(self.lo.nu, self.lo.polarization, self.lo.phase)?;
        OverlapModel::new(self.overlap.zeta0, self.overlap.dip_fwhm_um)?;
        self.splitter.validate()?;
        self.detection.validate()?;
        if !self.delay_um.is_finite() {
            return Err(Error::InvalidParameter("delay must be finite".into()));
        }
        Ok(())
    }

    pub fn zeta(&self) -> Complex64 {
        self.overlap.overlap_at_delay(self.delay_um)
    }

    /// SPDC pairs tensored with the label-decomposed LO, before any loss.
    pub fn input_state(&self) -> Result<FockState> {
        let spdc = sources::spdc_state(&self.spdc, self.n_max);
        let lo = sources::lo_with_distinguishability(&self.lo, self.zeta(), self.n_max)?;
        spdc.tensor(&lo)
    }

    /// Upper bound on the three-fold probability carried by terms dropped at `n_max`:
    /// truncated (pairs, LO photons) sectors weighted by the idler firing.
    pub fn pruned_threefold_bound(&self) -> f64 {
        let eta_bar = 1.0 - self.detection.eta;
        let mut bound = 0.0;
        for n in 1..60u32 {
            let pn = self.spdc.pair_probability(n);
            if pn < 1e-300 {
                break;
            }
            for m in 0..60u32 {
                if 2 * n + m > self.n_max {
                    bound += pn * self.lo.photon_probability(m) * (1.0 - eta_bar.powi(n as i32));
                }
            }
        }
        bound
    }
}

/// Probabilities of the eight click patterns. Bit 0: idler, bit 1: detector 1,
/// bit 2: detector 2. Mass removed by truncation is counted as "no click".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickDistribution {
    pub probabilities: [f64; 8],
}

pub const PATTERN_IDLER: usize = 0b001;
pub const PATTERN_D1: usize = 0b010;
pub const PATTERN_D2: usize = 0b100;
pub const PATTERN_THREEFOLD: usize = 0b111;

impl ClickDistribution {
    pub fn threefold(&self) -> f64 {
        self.probabilities[PATTERN_THREEFOLD]
    }

    /// Marginal probability that every detector in `mask` clicks.
    pub fn marginal(&self, mask: usize) -> f64 {
        (0..8).filter(|p| p & mask == mask).map(|p| self.probabilities[p]).sum()
    }

    /// Adds independent dark clicks with per-pulse probabilities (idler, d1, d2).
    pub fn with_dark_clicks(&self, dark: [f64; 3]) -> ClickDistribution {
        if dark.iter().all(|&d| d == 0.0) {
            return *self;
        }
        let mut out = [0.0; 8];
        for (light, &p) in self.probabilities.iter().enumerate() {
            for (fin, slot) in out.iter_mut().enumerate() {
                if fin & light != light {
                    continue;
                }
                let mut q = p;
                for (j, &d) in dark.iter().enumerate() {
                    let bit = 1 << j;
                    if light & bit == 0 {
                        q *= if fin & bit != 0 { d } else { 1.0 - d };
                    }
                }
                *slot += q;
            }
        }
        ClickDistribution { probabilities: out }
    }
}

/// Three-fold probability with its truncation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreefoldProbability {
    pub probability: f64,
    pub pruned_bound: f64,
    pub truncation_warning: bool,
}

/// Lossy, post-splitter ensemble reused across analyzer settings.
#[derive(Debug, Clone)]
pub struct PreparedEnsemble {
    elements: Vec<WeightedState>,
    pruned_bound: f64,
    dark: [f64; 3],
}

impl PreparedEnsemble {
    pub fn new(setup: &ExperimentSetup) -> Result<Self> {
        setup.validate()?;
        let input = setup.input_state()?;
        Self::from_input(setup, &input)
    }

    /// Runs an arbitrary input state through the losses and optics of `setup`.
    pub fn from_input(setup: &ExperimentSetup, input: &FockState) -> Result<Self> {
        let det = &setup.detection;
        let mut elements = Vec::new();
        for sig in loss_channel(input, |m| m.path == Path::SignalIn || m.path == Path::Idler, det.eta)? {
            for lo in loss_channel(&sig.state, |m| m.path == Path::LoIn, det.eta_l)? {
                let mut st = fiber_beam_splitter(&lo.state, &setup.splitter)?;
                st = output_compensation(&st)?;
                st = setup.misalignment[0].apply(&st, Path::Out1)?;
                st = setup.misalignment[1].apply(&st, Path::Out2)?;
                elements.push(WeightedState { weight: sig.weight * lo.weight, state: st });
            }
        }
        Ok(PreparedEnsemble { elements, pruned_bound: setup.pruned_threefold_bound(), dark: det.dark_click_probabilities() })
    }

    pub fn elements(&self) -> &[WeightedState] {
        &self.elements
    }

    pub fn total_weight(&self) -> f64 {
        self.elements.iter().map(|e| e.weight).sum()
    }

    pub fn click_distribution(&self, a1: Analyzer, a2: Analyzer) -> Result<ClickDistribution> {
        let mut probabilities = [0.0; 8];
        for el in &self.elements {
            let mut st = el.state.clone();
            for (path, analyzer) in [(Path::Out1, a1), (Path::Out2, a2)] {
                if let Analyzer::Project(v) = analyzer {
                    st = st.apply_polarization_unitary(path, &measurement_basis_change(&v))?;
                }
            }
            for (occ, amp) in st.terms() {
                let idler = occ.path_count(Path::Idler) > 0;
                let d1 = detector_fires(occ, Path::Out1, a1);
                let d2 = detector_fires(occ, Path::Out2, a2);
                let pattern = usize::from(idler) | usize::from(d1) << 1 | usize::from(d2) << 2;
                probabilities[pattern] += el.weight * amp.norm_sqr();
            }
        }
        let clicked: f64 = probabilities[1..].iter().sum();
        probabilities[0] = (1.0 - clicked).max(0.0);
        Ok(ClickDistribution { probabilities }.with_dark_clicks(self.dark))
    }

    pub fn threefold_probability(&self, a1: Analyzer, a2: Analyzer) -> Result<ThreefoldProbability> {
        let probability = self.click_distribution(a1, a2)?.threefold();
        Ok(ThreefoldProbability {
            probability,
            pruned_bound: self.pruned_bound,
            truncation_warning: self.pruned_bound > TRUNCATION_WARNING_FRACTION * probability,
        })
    }
}

fn detector_fires(occ: &Occupation, path: Path, analyzer: Analyzer) -> bool {
    match analyzer {
        Analyzer::Open => occ.path_count(path) > 0,
        // after the basis change the H slot holds the transmitted projection
        Analyzer::Project(_) => occ.path_pol_count(path, Polarization::H) > 0,
    }
}

/// Exact per-pulse probability of an idler click together with clicks behind
/// analyzers at `theta1`, `theta2` (`None` removes that polarizer).
pub fn threefold_probability(
    setup: &ExperimentSetup,
    theta1: Option<f64>,
    theta2: Option<f64>,
) -> Result<ThreefoldProbability> {
    let to_analyzer = |t: Option<f64>| t.map(Analyzer::linear).unwrap_or(Analyzer::Open);
    PreparedEnsemble::new(setup)?.threefold_probability(to_analyzer(theta1), to_analyzer(theta2))
}

/// Click-pattern counts from a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ClickCounts {
    pub pulses: u64,
    pub patterns: [u64; 8],
}

impl ClickCounts {
    pub fn threefold(&self) -> u64 {
        self.patterns[PATTERN_THREEFOLD]
    }

    pub fn marginal(&self, mask: usize) -> u64 {
        (0..8).filter(|p| p & mask == mask).map(|p| self.patterns[p]).sum()
    }
}

/// RNG for chunk `chunk` of the run identified by (`seed`, `stream`): ChaCha8
/// keyed by `seed`, stream id `stream`, positioned at the start of a private
/// 2^32-word window. The mapping is fixed, so serial and parallel runs give
/// identical totals.
pub fn chunk_rng(seed: u64, stream: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(chunk) << 32);
    rng
}

/// Pattern counts of `len` independent pulses, drawn as one multinomial
/// vector by sequential binomial splitting.
pub fn sample_chunk(dist: &ClickDistribution, len: u64, rng: &mut ChaCha8Rng) -> [u64; 8] {
    let mut out = [0u64; 8];
    let mut remaining = len;
    let mut mass = 1.0;
    // rare patterns first; the no-click pattern takes the remainder
    for p in (1..8).rev() {
        if remaining == 0 {
            break;
        }
        let q = dist.probabilities[p];
        if q <= 0.0 {
            continue;
        }
        let cond = (q / mass).min(1.0);
        let k = Binomial::new(remaining, cond).expect("probability in [0,1]").sample(rng);
        out[p] = k;
        remaining -= k;
        mass -= q;
        if mass <= 0.0 {
            break;
        }
    }
    out[0] = remaining;
    out
}

/// Samples the click patterns of `n_pulses` independent pulses from `dist`,
/// in chunks of [`MC_CHUNK_PULSES`] that run in parallel.
pub fn sample_clicks(dist: &ClickDistribution, n_pulses: u64, seed: u64, stream: u64) -> ClickCounts {
    if n_pulses == 0 {
        return ClickCounts::default();
    }
    let n_chunks = n_pulses.div_ceil(MC_CHUNK_PULSES);
    let patterns = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = chunk_rng(seed, stream, chunk);
            let len = MC_CHUNK_PULSES.min(n_pulses - chunk * MC_CHUNK_PULSES);
            sample_chunk(dist, len, &mut rng)
        })
        .reduce(
            || [0u64; 8],
            |mut a, b| {
                for i in 0..8 {
                    a[i] += b[i];
                }
                a
            },
        );
    ClickCounts { pulses: n_pulses, patterns }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub c1_signal: f64,
    pub c1_idler: f64,
    pub c2: f64,
    pub c_l: f64,
    /// Expected accidental-free three-fold rate C2 * C_l / (2 f).
    pub c3: f64,
    pub mu_est: f64,
    pub nu_est: f64,
}

impl RateReport {
    /// Three-fold rate after an additional multiplicative transmission factor.
    pub fn c3_with_excess_loss(&self, transmission: f64) -> f64 {
        self.c3 * transmission
    }
}

/// Rate calculus from measured singles (`c1`), signal-idler coincidences (`c2`)
/// and LO singles (`c_l`).
pub fn predict_rates(c1: f64, c2: f64, c_l: f64, params: &DetectionParams) -> Result<RateReport> {
    if !(params.f_hz > 0.0) {
        return Err(Error::InvalidParameter(format!("repetition rate must be positive, got {}", params.f_hz)));
    }
    if [c1, c2, c_l].iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidParameter("count rates must be non-negative".into()));
    }
    if c2 > c1 {
        return Err(Error::InvalidParameter(format!("coincidence rate {c2} exceeds singles rate {c1}")));
    }
    if !(params.eta > 0.0) || !(params.eta_l > 0.0) {
        return Err(Error::InvalidParameter("efficiencies must be positive".into()));
    }
    let f = params.f_hz;
    Ok(RateReport {
        c1_signal: c1,
        c1_idler: c1,
        c2,
        c_l,
        c3: c2 * c_l / (2.0 * f),
        mu_est: c1 / (params.eta * f),
        nu_est: c_l / (params.eta_l * f),
    })
}

/// Per-pulse three-fold probabilities of the leading photon-number sectors,
/// polarization factors omitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HigherOrderBudget {
    /// One pair, one LO photon.
    pub p111: f64,
    /// One pair, two LO photons.
    pub p112: f64,
    /// Two pairs, no LO photon.
    pub p220: f64,
    /// (p112 + p220) / p111; infinite when p111 = 0.
    pub ratio: f64,
}

pub fn higher_order_budget(mu: f64, nu: f64, eta: f64, eta_l: f64) -> Result<HigherOrderBudget> {
    let spdc = SpdcParams::new(mu)?;
    let lo = CoherentParams::new(nu, Polarization::H, 0.0)?;
    for (name, e) in [("eta", eta), ("eta_l", eta_l)] {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::InvalidParameter(format!("{name} must lie in [0,1], got {e}")));
        }
    }
    let (a1, a2) = (spdc.pair_probability(1), spdc.pair_probability(2));
    let (c0, c1, c2) = (lo.photon_probability(0), lo.photon_probability(1), lo.photon_probability(2));
    let eta_bar = 1.0 - eta;
    let p111 = 0.5 * a1 * c1 * eta * eta * eta_l;
    let p112 = 0.5 * a1 * c2 * eta * eta_l * eta_l;
    let p220 = 0.5 * a2 * c0 * (1.0 - eta_bar * eta_bar) * eta * eta;
    let ratio = if p111 > 0.0 { (p112 + p220) / p111 } else { f64::INFINITY };
    Ok(HigherOrderBudget { p111, p112, p220, ratio })
}

/// Photon-number sector of the source state: `pairs` SPDC pairs and `lo_photons`
/// LO photons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sector {
    pub pairs: u32,
    pub lo_photons: u32,
}

impl Sector {
    pub const P111: Sector = Sector { pairs: 1, lo_photons: 1 };
    pub const P112: Sector = Sector { pairs: 1, lo_photons: 2 };
    pub const P220: Sector = Sector { pairs: 2, lo_photons: 0 };

    /// Photons the leading-order estimate credits with the three clicks: the idler
    /// photons plus the two photons that reach the splitter outputs. In the
    /// two-LO-photon sector the heralded signal photon is not among them.
    pub fn contributing_signal_photons(&self) -> u32 {
        if self.pairs == 1 && self.lo_photons == 2 {
            0
        } else {
            self.pairs
        }
    }
}

/// Fock state of one sector with the given signal, idler and LO photon numbers.
fn sector_state(setup: &ExperimentSetup, signal: u32, idler: u32, lo_photons: u32) -> FockState {
    let n_max = signal + idler + lo_photons;
    let zeta = setup.zeta();
    let orth = (1.0 - zeta.norm_sqr()).max(0.0).sqrt();
    let lo_a = Mode::new(Path::LoIn, setup.lo.polarization, Label::A);
    let lo_b = Mode::new(Path::LoIn, setup.lo.polarization, Label::B);
    let base = FockState::basis(
        Occupation::from_pairs([(SIGNAL_MODE, signal), (IDLER_MODE, idler), (lo_a, lo_photons)]),
        n_max,
    );
    base.map_creation_operators(|m| {
        (m == lo_a).then(|| vec![(lo_a, zeta), (lo_b, Complex64::new(orth, 0.0))])
    })
}

/// Three-fold probability of one sector from the full engine (losses, splitter,
/// threshold detectors), weighted by the sector's source probability and using the
/// photons the leading-order estimate attributes the coincidence to.
pub fn sector_threefold_probability(setup: &ExperimentSetup, sector: Sector, a1: Analyzer, a2: Analyzer) -> Result<f64> {
    let signal = sector.contributing_signal_photons();
    let state = sector_state(setup, signal, sector.pairs, sector.lo_photons);
    let weight = setup.spdc.pair_probability(sector.pairs) * setup.lo.photon_probability(sector.lo_photons);
    let ens = PreparedEnsemble::from_input(&ExperimentSetup { n_max: state.n_max(), ..setup.clone() }, &state)?;
    Ok(weight * ens.click_distribution(a1, a2)?.threefold())
}

/// Same as [`sector_threefold_probability`] but keeping every photon of the
/// sector, including the heralded signal photon in the two-LO-photon sector.
pub fn sector_threefold_probability_all_photons(
    setup: &ExperimentSetup,
    sector: Sector,
    a1: Analyzer,
    a2: Analyzer,
) -> Result<f64> {
    let state = sector_state(setup, sector.pairs, sector.pairs, sector.lo_photons);
    let weight = setup.spdc.pair_probability(sector.pairs) * setup.lo.photon_probability(sector.lo_photons);
    let ens = PreparedEnsemble::from_input(&ExperimentSetup { n_max: state.n_max(), ..setup.clone() }, &state)?;
    Ok(weight * ens.click_distribution(a1, a2)?.threefold())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lo_mode() -> Mode {
        Mode::new(Path::LoIn, Polarization::H, Label::A)
    }

    #[test]
    fn unit_efficiency_is_identity() {
        let st = FockState::basis(Occupation::single(lo_mode(), 2), 4);
        let ens = loss_channel(&st, |_| true, 1.0).unwrap();
        assert_eq!(ens.len(), 1);
        assert!((ens[0].weight - 1.0).abs() < 1e-15);
        assert_eq!(ens[0].state, st);
    }

    #[test]
    fn single_photon_bernoulli() {
        let st = FockState::single(lo_mode(), 4);
        let ens = loss_channel(&st, |_| true, 0.3).unwrap();
        let kept: f64 = ens.iter().filter(|e| e.state.terms().any(|(o, _)| o.total() == 1)).map(|e| e.weight).sum();
        let lost: f64 = ens.iter().filter(|e| e.state.terms().any(|(o, _)| o.total() == 0)).map(|e| e.weight).sum();
        assert!((kept - 0.3).abs() < 1e-12);
        assert!((lost - 0.7).abs() < 1e-12);
    }

    #[test]
    fn two_photon_binomial_weights() {
        let eta: f64 = 0.3;
        let st = FockState::basis(Occupation::single(lo_mode(), 2), 4);
        let ens = loss_channel(&st, |_| true, eta).unwrap();
        let mut by_n = [0.0; 3];
        for e in &ens {
            for (o, a) in e.state.terms() {
                by_n[o.total() as usize] += e.weight * a.norm_sqr();
            }
        }
        assert!((by_n[2] - eta * eta).abs() < 1e-12);
        assert!((by_n[1] - 2.0 * eta * (1.0 - eta)).abs() < 1e-12);
        assert!((by_n[0] - (1.0 - eta).powi(2)).abs() < 1e-12);
        // threshold click probability for two photons
        assert!((by_n[1] + by_n[2] - (1.0 - (1.0 - eta).powi(2))).abs() < 1e-12);
    }

    #[test]
    fn loss_keeps_coherence_between_surviving_terms() {
        // (|1>_lo + |1>_sig)/sqrt2 losing nothing in the LO arm keeps one pure branch
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let st = FockState::from_terms(
            [(Occupation::single(lo_mode(), 1), Complex64::new(s, 0.0)), (Occupation::single(SIGNAL_MODE, 1), Complex64::new(s, 0.0))],
            4,
        );
        let ens = loss_channel(&st, |m| m.path == Path::LoIn, 0.5).unwrap();
        assert_eq!(ens.len(), 2);
        let total: f64 = ens.iter().map(|e| e.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_efficiency() {
        assert!(loss_channel(&FockState::vacuum(4), |_| true, 1.5).is_err());
    }

    fn ideal_setup() -> ExperimentSetup {
        ExperimentSetup {
            overlap: OverlapModel::new(Complex64::new(1.0, 0.0), 50.7).unwrap(),
            detection: DetectionParams { eta: 1.0, eta_l: 1.0, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn ideal_single_photon_sector_follows_sin_squared() {
        let setup = ideal_setup();
        let p_at = |t1: f64, t2: f64| {
            sector_threefold_probability(&setup, Sector::P111, Analyzer::linear(t1), Analyzer::linear(t2)).unwrap()
        };
        let open = sector_threefold_probability(&setup, Sector::P111, Analyzer::Open, Analyzer::Open).unwrap();
        assert!((p_at(45.0, 45.0) / open - 0.5).abs() < 1e-12);
        assert!(p_at(0.0, 0.0) < 1e-20);
        for t1 in (0..18).map(|k| k as f64 * 10.0) {
            for t2 in (0..18).map(|k| k as f64 * 10.0) {
                let expect = 0.5 * (t1 + t2).to_radians().sin().powi(2);
                assert!((p_at(t1, t2) / open - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn budget_reference_values() {
        let b = higher_order_budget(4.3e-4, 2.1e-2, 0.3, 0.37).unwrap();
        assert!((b.p111 - 1.4709854976218025e-07).abs() < 1e-20);
        assert!((b.p112 - 1.904926219420234e-09).abs() < 1e-21);
        assert!((b.p220 - 4.14991591747308e-09).abs() < 1e-21);
        let no_lo = higher_order_budget(4.3e-4, 0.0, 0.3, 0.37).unwrap();
        assert_eq!(no_lo.p111, 0.0);
        assert_eq!(no_lo.p112, 0.0);
        assert!(no_lo.p220 > 0.0);
    }

    #[test]
    fn budget_p220_over_p111_scales_with_mu() {
        let full = higher_order_budget(4.3e-4, 2.1e-2, 0.3, 0.37).unwrap();
        let half = higher_order_budget(2.15e-4, 2.1e-2, 0.3, 0.37).unwrap();
        let r = (half.p220 / half.p111) / (full.p220 / full.p111);
        assert!((r - 0.5).abs() < 1e-3);
    }

    #[test]
    fn rates_from_reference_counts() {
        let r = predict_rates(10_000.0, 3000.0, 600_000.0, &DetectionParams::default()).unwrap();
        assert!((r.c3 - 11.842105263157894).abs() < 1e-12);
        assert!((r.mu_est - 4.385964912280702e-4).abs() < 1e-15);
        assert!((r.nu_est - 0.021337126600284494).abs() < 1e-15);
        let zero = predict_rates(10_000.0, 3000.0, 0.0, &DetectionParams::default()).unwrap();
        assert_eq!(zero.c3, 0.0);
        assert_eq!(zero.nu_est, 0.0);
        let bad = DetectionParams { f_hz: 0.0, ..Default::default() };
        assert!(matches!(predict_rates(1.0, 1.0, 1.0, &bad), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn dark_clicks_fill_patterns() {
        let dist = ClickDistribution { probabilities: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0] };
        let d = dist.with_dark_clicks([0.1, 0.2, 0.3]);
        assert!((d.threefold() - 0.006).abs() < 1e-15);
        assert!((d.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sampler_is_deterministic_and_empty_for_zero_pulses() {
        let dist = ClickDistribution { probabilities: [0.5, 0.1, 0.1, 0.05, 0.1, 0.05, 0.05, 0.05] };
        assert_eq!(sample_clicks(&dist, 0, 7, 0), ClickCounts::default());
        let a = sample_clicks(&dist, 3_000_000, 42, 3);
        let b = sample_clicks(&dist, 3_000_000, 42, 3);
        assert_eq!(a, b);
        assert_eq!(a.patterns.iter().sum::<u64>(), 3_000_000);
        let c = sample_clicks(&dist, 3_000_000, 43, 3);
        assert_ne!(a, c);
    }

    #[test]
    fn chunked_sampling_matches_serial_loop() {
        let dist = ClickDistribution { probabilities: [0.6, 0.1, 0.05, 0.05, 0.1, 0.03, 0.02, 0.05] };
        let n = 2 * MC_CHUNK_PULSES + 12345;
        let par = sample_clicks(&dist, n, 9, 1);
        let mut serial = [0u64; 8];
        for chunk in 0..n.div_ceil(MC_CHUNK_PULSES) {
            let len = MC_CHUNK_PULSES.min(n - chunk * MC_CHUNK_PULSES);
            let c = sample_chunk(&dist, len, &mut chunk_rng(9, 1, chunk));
            for i in 0..8 {
                serial[i] += c[i];
            }
        }
        assert_eq!(par.patterns, serial);
    }

    #[test]
    fn sampled_frequencies_within_five_sigma() {
        let dist = ClickDistribution { probabilities: [0.999, 2e-4, 1e-4, 1e-4, 3e-4, 1e-4, 1e-4, 1e-4] };
        let n = 10_000_000;
        let c = sample_clicks(&dist, n, 3, 0);
        for (k, &p) in dist.probabilities.iter().enumerate() {
            let mean = n as f64 * p;
            let sigma = (mean * (1.0 - p)).sqrt();
            assert!((c.patterns[k] as f64 - mean).abs() <= 5.0 * sigma, "pattern {k}");
        }
    }
}
