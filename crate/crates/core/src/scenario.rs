//! Scenario runners: bind a configuration to the engine and the estimators and
//! collect tables plus summary scalars in a [`ScenarioResult`].
//!
//! Every scenario carries a `model` table with one row per simulated setting
//! (analytic three-fold probability, pulses, sampled three-fold counts). Setting
//! `k` of a scenario is sampled on RNG stream `k` of the configured seed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{
    bell_s, bootstrap_metrics, concurrence, correlation_e, eof, fidelity, fringe_visibility,
    higher_order_fidelity_estimate, hom_visibility, james_settings, mle_from_frequencies, overcomplete_settings,
    tomography_mle, ChshSettings, Estimate, MleOptions,
};
use crate::config::ExperimentConfig;
use crate::detection::{
    higher_order_budget, predict_rates, sample_clicks, sector_threefold_probability, Analyzer, ClickCounts,
    ClickDistribution, ExperimentSetup, PreparedEnsemble, Sector, PATTERN_D1, PATTERN_D2, PATTERN_IDLER,
    TRUNCATION_WARNING_FRACTION,
};
use crate::error::{Error, Result};
use crate::fock::{Polarization, TwoQubitDensityMatrix, BASIS_LABELS};
use crate::optics::TomoBasis;
use crate::record::{AnalyzerLabel, CountEntry, CountRecord, SettingLabel};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Column-labelled table of JSON scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| match v {
                Value::String(s) => s.clone(),
                Value::Null => String::new(),
                other => other.to_string(),
            }))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Output of one scenario run. Contains no timestamp, so identical inputs give
/// identical serializations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: String,
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub summary: BTreeMap<String, Value>,
    pub tables: BTreeMap<String, Table>,
    pub warnings: Vec<String>,
}

impl ScenarioResult {
    fn new(scenario: &str, cfg: &ExperimentConfig) -> Self {
        ScenarioResult {
            scenario: scenario.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            config: cfg.clone(),
            summary: BTreeMap::new(),
            tables: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    fn put(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(key.to_string(), serde_json::to_value(value).expect("serializable summary"));
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable result")
    }

    /// Rows of the `model` table as (setting, probability, pulses, counts).
    pub fn model_rows(&self) -> Vec<(String, f64, u64, u64)> {
        let Some(t) = self.tables.get("model") else { return Vec::new() };
        t.rows
            .iter()
            .map(|r| {
                (
                    r[0].as_str().unwrap_or_default().to_string(),
                    r[1].as_f64().unwrap_or(f64::NAN),
                    r[2].as_u64().unwrap_or(0),
                    r[3].as_u64().unwrap_or(0),
                )
            })
            .collect()
    }
}

/// Collects analytic probabilities and sampled counts for a list of settings.
struct ModelTable {
    table: Table,
    pulses: u64,
    seed: u64,
    truncation_flagged: usize,
}

impl ModelTable {
    fn new(cfg: &ExperimentConfig) -> Self {
        ModelTable {
            table: Table::new(&["setting", "probability", "pulses", "counts"]),
            pulses: cfg.pulses,
            seed: cfg.seed,
            truncation_flagged: 0,
        }
    }

    fn add(&mut self, label: &str, dist: &ClickDistribution, pruned_bound: f64) -> ClickCounts {
        let stream = self.table.rows.len() as u64;
        let counts = sample_clicks(dist, self.pulses, self.seed, stream);
        let p = dist.threefold();
        if pruned_bound > TRUNCATION_WARNING_FRACTION * p {
            self.truncation_flagged += 1;
        }
        self.table.push(vec![json!(label), json!(p), json!(self.pulses), json!(counts.threefold())]);
        counts
    }

    fn finish(self, res: &mut ScenarioResult, pruned_bound: f64) {
        if self.truncation_flagged > 0 {
            res.warnings.push(format!(
                "photon-number truncation: pruned three-fold mass bound {:.3e} exceeds {:.0e} of the probability at {} of {} settings; raise n_max",
                pruned_bound,
                TRUNCATION_WARNING_FRACTION,
                self.truncation_flagged,
                self.table.rows.len()
            ));
        }
        res.tables.insert("model".into(), self.table);
    }
}

fn checked_setup(cfg: &ExperimentConfig) -> Result<ExperimentSetup> {
    cfg.validate()?;
    cfg.setup()
}

fn analyzer_for(label: AnalyzerLabel) -> Analyzer {
    match label {
        AnalyzerLabel::Open => Analyzer::Open,
        AnalyzerLabel::Linear(s) => Analyzer::Project(s.jones()),
        AnalyzerLabel::Basis(b) => Analyzer::tomographic(b),
    }
}

/// Three-fold counts versus optical delay with open analyzers, plus dip fits to
/// the analytic curve and to the sampled counts. The LO is switched to V so that
/// it shares the signal polarization.
pub fn run_hom_scan(cfg: &ExperimentConfig, tau_min_um: f64, tau_max_um: f64, n_points: usize) -> Result<ScenarioResult> {
    let mut base = checked_setup(cfg)?;
    base.lo.polarization = Polarization::V;
    if n_points < 5 {
        return Err(Error::InvalidConfig(format!("a delay scan needs at least 5 points, got {n_points}")));
    }
    if !(tau_max_um > tau_min_um) {
        return Err(Error::InvalidConfig(format!("zero-width delay range [{tau_min_um}, {tau_max_um}]")));
    }
    let mut res = ScenarioResult::new("hom-scan", cfg);
    let mut model = ModelTable::new(cfg);
    let mut scan = Table::new(&["tau_um", "zeta_sq", "probability", "expected_counts", "counts"]);
    let mut analytic = Vec::with_capacity(n_points);
    let mut sampled = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let tau = tau_min_um + (tau_max_um - tau_min_um) * k as f64 / (n_points - 1) as f64;
        let setup = ExperimentSetup { delay_um: tau, ..base.clone() };
        let dist = PreparedEnsemble::new(&setup)?.click_distribution(Analyzer::Open, Analyzer::Open)?;
        let counts = model.add(&SettingLabel::delay(tau).to_string(), &dist, setup.pruned_threefold_bound());
        let p = dist.threefold();
        analytic.push((tau, p));
        sampled.push((tau, counts.threefold() as f64));
        scan.push(vec![
            json!(tau),
            json!(setup.zeta().norm_sqr()),
            json!(p),
            json!(p * cfg.pulses as f64),
            json!(counts.threefold()),
        ]);
    }
    match hom_visibility(&analytic) {
        Ok(fit) => {
            res.put("visibility_analytic", fit.visibility.value);
            res.put("fwhm_um_analytic", fit.fwhm_um.value);
            res.put("baseline_probability", fit.baseline);
        }
        Err(e) => res.warnings.push(format!("analytic dip fit: {e}")),
    }
    if cfg.pulses > 0 {
        match hom_visibility(&sampled) {
            Ok(fit) => {
                res.put("visibility_sampled", fit.visibility);
                res.put("fwhm_um_sampled", fit.fwhm_um);
            }
            Err(e) => res.warnings.push(format!("sampled dip fit: {e}")),
        }
    }
    res.put("zeta0_sq", cfg.zeta0_sq);
    model.finish(&mut res, base.pruned_threefold_bound());
    res.tables.insert("scan".into(), scan);
    Ok(res)
}

/// CHSH value from analytic probabilities of the sixteen settings.
fn analytic_chsh(settings: &ChshSettings, prob: &BTreeMap<String, f64>) -> Result<(f64, [f64; 4])> {
    let get = |t1: f64, t2: f64| prob[&SettingLabel::polarizers(t1, t2).to_string()];
    let mut e = [0.0; 4];
    for (slot, &(t1, t2)) in settings.pairs().iter().enumerate() {
        e[slot] = correlation_e(get(t1, t2), get(t1 + 90.0, t2 + 90.0), get(t1 + 90.0, t2), get(t1, t2 + 90.0))?.value;
    }
    Ok((e[0] + e[1] + e[2] - e[3], e))
}

/// Minimum over the analyzer-1 angles of the fringe visibility along analyzer 2.
fn min_fringe_visibility(points: &[(f64, f64, f64)]) -> Option<Estimate> {
    let mut rows: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
    for &(t1, t2, c) in points {
        rows.entry((t1 * 1000.0).round() as i64).or_default().push((t2, c));
    }
    rows.values()
        .filter_map(|r| fringe_visibility(r).ok())
        .map(|f| f.visibility)
        .min_by(|a, b| a.value.total_cmp(&b.value))
}

/// Polarization-correlation grid at the sixteen CHSH settings with S from both
/// the analytic probabilities and the sampled counts.
pub fn run_bell_test(cfg: &ExperimentConfig, settings: &ChshSettings) -> Result<ScenarioResult> {
    let setup = checked_setup(cfg)?;
    settings.validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let ens = PreparedEnsemble::new(&setup)?;
    let mut res = ScenarioResult::new("bell-test", cfg);
    let mut model = ModelTable::new(cfg);
    let mut grid = Table::new(&["theta1_deg", "theta2_deg", "probability", "counts"]);
    let mut record = CountRecord::new();
    let mut prob = BTreeMap::new();
    let mut fringe_analytic = Vec::new();
    let mut fringe_sampled = Vec::new();
    let mut labels = settings.required_labels();
    labels.sort_by(|a, b| {
        let key = |l: &SettingLabel| match (l.analyzer1, l.analyzer2) {
            (AnalyzerLabel::Linear(x), AnalyzerLabel::Linear(y)) => (y.key(), x.key()),
            _ => (0, 0),
        };
        key(a).cmp(&key(b))
    });
    for label in labels {
        let dist = ens.click_distribution(analyzer_for(label.analyzer1), analyzer_for(label.analyzer2))?;
        let counts = model.add(&label.to_string(), &dist, setup.pruned_threefold_bound());
        let (AnalyzerLabel::Linear(a), AnalyzerLabel::Linear(b)) = (label.analyzer1, label.analyzer2) else {
            unreachable!("CHSH settings are linear polarizers")
        };
        let (t1, t2) = (a.theta_deg(), b.theta_deg());
        prob.insert(label.to_string(), dist.threefold());
        fringe_analytic.push((t1, t2, dist.threefold()));
        fringe_sampled.push((t1, t2, counts.threefold() as f64));
        grid.push(vec![json!(t1), json!(t2), json!(dist.threefold()), json!(counts.threefold())]);
        record.push(CountEntry { label, pulses: cfg.pulses, counts: counts.threefold() })?;
    }
    let (s_signed, e) = analytic_chsh(settings, &prob)?;
    res.put("s_analytic", s_signed.abs());
    res.put("s_signed_analytic", s_signed);
    res.put("correlations_analytic", e);
    res.put("min_fringe_visibility_analytic", min_fringe_visibility(&fringe_analytic).map(|v| v.value));
    if cfg.pulses > 0 {
        match bell_s(&record, settings) {
            Ok(chsh) => {
                res.put("s_sampled", chsh.s);
                res.put("s_signed_sampled", chsh.s_signed);
                res.put("correlations_sampled", chsh.correlations);
                res.put("violation", chsh.violation);
            }
            Err(e) => res.warnings.push(format!("sampled CHSH: {e}")),
        }
        res.put("min_fringe_visibility_sampled", min_fringe_visibility(&fringe_sampled));
    }
    res.put("settings", settings);
    model.finish(&mut res, setup.pruned_threefold_bound());
    res.tables.insert("counts".into(), grid);
    Ok(res)
}

fn tomography_settings(cfg: &ExperimentConfig) -> Vec<(TomoBasis, TomoBasis)> {
    if cfg.tomography_settings == 36 {
        overcomplete_settings()
    } else {
        james_settings()
    }
}

fn density_tables(res: &mut ScenarioResult, rho: &TwoQubitDensityMatrix) {
    let mut cols = vec!["row"];
    cols.extend(BASIS_LABELS);
    let mut re = Table::new(&cols);
    let mut im = Table::new(&cols);
    for (i, label) in BASIS_LABELS.iter().enumerate() {
        let mut r = vec![json!(label)];
        let mut m = vec![json!(label)];
        for j in 0..4 {
            r.push(json!(rho.element(i, j).re));
            m.push(json!(rho.element(i, j).im));
        }
        re.push(r);
        im.push(m);
    }
    res.tables.insert("rho_real".into(), re);
    res.tables.insert("rho_imag".into(), im);
}

fn mle_options(cfg: &ExperimentConfig) -> MleOptions {
    MleOptions { starts: cfg.mle_starts, seed: cfg.seed, ..MleOptions::default() }
}

/// Reconstructs the state from a tomographic record and fills in the metrics.
fn tomography_summary(res: &mut ScenarioResult, cfg: &ExperimentConfig, record: &CountRecord) -> Result<()> {
    let mle = tomography_mle(record, &mle_options(cfg))?;
    let rho = mle.density().clone();
    if let Some(w) = &mle.warning {
        res.warnings.push(w.clone());
    }
    res.put("mle", &mle);
    if cfg.bootstrap_resamples > 0 {
        let boot = bootstrap_metrics(record, &rho, cfg.bootstrap_resamples, cfg.seed)?;
        res.put("fidelity", boot.fidelity);
        res.put("concurrence", boot.concurrence);
        res.put("eof", boot.eof);
        res.put("bootstrap_resamples", boot.resamples);
    } else {
        let c = concurrence(&rho);
        res.put("fidelity", Estimate::new(fidelity(&rho), 0.0));
        res.put("concurrence", Estimate::new(c, 0.0));
        res.put("eof", Estimate::new(eof(c), 0.0));
    }
    density_tables(res, &rho);
    Ok(())
}

/// Simulated two-qubit tomography. With pulses the state is reconstructed from
/// sampled counts (bootstrap errors); without, from the analytic probabilities.
pub fn run_tomography(cfg: &ExperimentConfig) -> Result<ScenarioResult> {
    let setup = checked_setup(cfg)?;
    let ens = PreparedEnsemble::new(&setup)?;
    let mut res = ScenarioResult::new("tomography", cfg);
    let mut model = ModelTable::new(cfg);
    let mut record = CountRecord::new();
    let mut expected = Vec::new();
    for (b1, b2) in tomography_settings(cfg) {
        let label = SettingLabel::tomographic(b1, b2);
        let dist = ens.click_distribution(Analyzer::tomographic(b1), Analyzer::tomographic(b2))?;
        let counts = model.add(&label.to_string(), &dist, setup.pruned_threefold_bound());
        expected.push((b1, b2, dist.threefold()));
        record.push(CountEntry { label, pulses: cfg.pulses, counts: counts.threefold() })?;
    }
    if cfg.pulses > 0 {
        tomography_summary(&mut res, cfg, &record)?;
    } else {
        let mle = mle_from_frequencies(&expected, &mle_options(cfg))?;
        let rho = mle.density().clone();
        let c = concurrence(&rho);
        res.put("fidelity", Estimate::new(fidelity(&rho), 0.0));
        res.put("concurrence", Estimate::new(c, 0.0));
        res.put("eof", Estimate::new(eof(c), 0.0));
        res.put("mle", &mle);
        density_tables(&mut res, &rho);
    }
    model.finish(&mut res, setup.pruned_threefold_bound());
    Ok(res)
}

/// Rate calculus from the configured observed rates, next to the singles and
/// coincidence rates predicted by the engine with open analyzers.
pub fn run_rates(cfg: &ExperimentConfig) -> Result<ScenarioResult> {
    let setup = checked_setup(cfg)?;
    let mut res = ScenarioResult::new("rates", cfg);
    let report = predict_rates(cfg.rate_c1_hz, cfg.rate_c2_hz, cfg.rate_cl_hz, &cfg.detection())?;
    res.put("rates", report);
    res.put("c3_hz", report.c3);
    res.put("c3_hz_with_excess_loss", report.c3_with_excess_loss(cfg.excess_loss));
    res.put("excess_loss", cfg.excess_loss);

    let ens = PreparedEnsemble::new(&setup)?;
    let dist = ens.click_distribution(Analyzer::Open, Analyzer::Open)?;
    let mut model = ModelTable::new(cfg);
    let counts = model.add("(open, open)", &dist, setup.pruned_threefold_bound());
    let mut rates = Table::new(&["pattern", "probability", "rate_hz", "counts"]);
    for (name, mask) in [
        ("idler", PATTERN_IDLER),
        ("det1", PATTERN_D1),
        ("det2", PATTERN_D2),
        ("idler_det1", PATTERN_IDLER | PATTERN_D1),
        ("idler_det2", PATTERN_IDLER | PATTERN_D2),
        ("det1_det2", PATTERN_D1 | PATTERN_D2),
        ("threefold", PATTERN_IDLER | PATTERN_D1 | PATTERN_D2),
    ] {
        let p = dist.marginal(mask);
        rates.push(vec![json!(name), json!(p), json!(p * cfg.f_hz), json!(counts.marginal(mask))]);
    }
    res.put("c3_hz_engine", dist.threefold() * cfg.f_hz);
    model.finish(&mut res, setup.pruned_threefold_bound());
    res.tables.insert("rates".into(), rates);
    Ok(res)
}

/// Leading higher-order sector probabilities, their closed forms against the
/// sector-restricted engine, and the implied fidelity estimate.
pub fn run_budget(cfg: &ExperimentConfig) -> Result<ScenarioResult> {
    let setup = checked_setup(cfg)?;
    let mut res = ScenarioResult::new("budget", cfg);
    let budget = higher_order_budget(cfg.mu, cfg.nu, cfg.eta, cfg.eta_l)?;
    res.put("budget", budget);
    res.put("ratio", if budget.ratio.is_finite() { Some(budget.ratio) } else { None });
    match higher_order_fidelity_estimate(&budget) {
        Ok(f) => res.put("f_est", Some(f)),
        Err(e) => {
            res.put("f_est", None::<f64>);
            res.warnings.push(format!("fidelity estimate undefined: {e}"));
        }
    }
    let mut sectors = Table::new(&["sector", "closed_form", "engine", "relative_difference"]);
    for (name, sector, closed) in
        [("p111", Sector::P111, budget.p111), ("p112", Sector::P112, budget.p112), ("p220", Sector::P220, budget.p220)]
    {
        let engine = sector_threefold_probability(&setup, sector, Analyzer::Open, Analyzer::Open)?;
        let rel = if closed > 0.0 { Some((engine - closed).abs() / closed) } else { None };
        sectors.push(vec![json!(name), json!(closed), json!(engine), json!(rel)]);
    }
    res.tables.insert("sectors".into(), sectors);

    let ens = PreparedEnsemble::new(&setup)?;
    let dist = ens.click_distribution(Analyzer::Open, Analyzer::Open)?;
    let mut model = ModelTable::new(cfg);
    model.add("(open, open)", &dist, setup.pruned_threefold_bound());
    res.put("threefold_open_engine", dist.threefold());
    model.finish(&mut res, setup.pruned_threefold_bound());
    Ok(res)
}

/// Analyses a recorded count file: CHSH and fringes for polarizer grids,
/// maximum-likelihood tomography for projector pairs, a dip fit for delay scans.
/// The `model` table holds the configured engine's prediction at the recorded
/// settings.
pub fn replay(cfg: &ExperimentConfig, record: &CountRecord) -> Result<ScenarioResult> {
    let setup = checked_setup(cfg)?;
    if record.is_empty() {
        return Err(Error::IncompleteRecord(vec!["record holds no settings".into()]));
    }
    let mut res = ScenarioResult::new("replay", cfg);
    let entries = record.entries();
    let all = |f: fn(&AnalyzerLabel) -> bool| entries.iter().all(|e| f(&e.label.analyzer1) && f(&e.label.analyzer2));
    if all(|a| matches!(a, AnalyzerLabel::Linear(_))) {
        let settings = cfg.chsh_settings();
        let chsh = bell_s(record, &settings)?;
        res.put("kind", "chsh");
        res.put("s", chsh.s);
        res.put("s_signed", chsh.s_signed);
        res.put("correlations", chsh.correlations);
        res.put("violation", chsh.violation);
        res.put("settings", settings);
        let points: Vec<(f64, f64, f64)> = entries
            .iter()
            .filter_map(|e| match (e.label.analyzer1, e.label.analyzer2) {
                (AnalyzerLabel::Linear(a), AnalyzerLabel::Linear(b)) => Some((a.theta_deg(), b.theta_deg(), e.counts as f64)),
                _ => None,
            })
            .collect();
        res.put("min_fringe_visibility", min_fringe_visibility(&points));
    } else if all(|a| matches!(a, AnalyzerLabel::Basis(_))) {
        res.put("kind", "tomography");
        tomography_summary(&mut res, cfg, record)?;
    } else if all(|a| matches!(a, AnalyzerLabel::Open)) {
        res.put("kind", "delay-scan");
        let points: Vec<(f64, f64)> = entries.iter().map(|e| (e.label.delay_um, e.counts as f64)).collect();
        let fit = hom_visibility(&points)?;
        res.put("visibility", fit.visibility);
        res.put("fwhm_um", fit.fwhm_um);
    } else {
        return Err(Error::IncompleteRecord(vec!["record mixes polarizer, projector and open settings".into()]));
    }
    res.put("total_counts", record.total_counts());

    let mut model = ModelTable::new(cfg);
    for e in entries {
        let s = ExperimentSetup { delay_um: e.label.delay_um, ..setup.clone() };
        let dist = PreparedEnsemble::new(&s)?.click_distribution(analyzer_for(e.label.analyzer1), analyzer_for(e.label.analyzer2))?;
        model.add(&e.label.to_string(), &dist, setup.pruned_threefold_bound());
    }
    model.finish(&mut res, setup.pruned_threefold_bound());
    let mut table = Table::new(&["setting", "pulses", "counts"]);
    for e in entries {
        table.push(vec![json!(e.label.to_string()), json!(e.pulses), json!(e.counts)]);
    }
    res.tables.insert("record".into(), table);
    Ok(res)
}

/// The bundled polarization-correlation counts (sixteen settings).
pub fn bundled_table1() -> CountRecord {
    CountRecord::read_csv(include_str!("../data/table1.csv").as_bytes()).expect("bundled record parses")
}
