//! Coincidence-count records and their CSV form.
//!
//! CSV columns: `theta1_deg,theta2_deg,delay_um,pulses,c3_counts`. An analyzer
//! column holds an angle in degrees, a tomography basis letter (H, V, D, A, R, L),
//! or is left empty when the polarizer is removed. Lines starting with `#` are
//! comments.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{AnalyzerSetting, TomoBasis};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AnalyzerLabel {
    Open,
    Linear(AnalyzerSetting),
    Basis(TomoBasis),
}

impl AnalyzerLabel {
    pub fn linear(theta_deg: f64) -> Self {
        AnalyzerLabel::Linear(AnalyzerSetting::new(theta_deg))
    }

    fn key(&self) -> (u8, i64) {
        match self {
            AnalyzerLabel::Open => (0, 0),
            AnalyzerLabel::Linear(s) => (1, s.key()),
            AnalyzerLabel::Basis(b) => (2, *b as i64),
        }
    }

    fn parse(field: &str) -> Result<Self> {
        let f = field.trim();
        if f.is_empty() || f.eq_ignore_ascii_case("open") {
            return Ok(AnalyzerLabel::Open);
        }
        if f.len() == 1 {
            if let Some(b) = TomoBasis::from_symbol(f.chars().next().unwrap()) {
                return Ok(AnalyzerLabel::Basis(b));
            }
        }
        f.parse::<f64>()
            .map(AnalyzerLabel::linear)
            .map_err(|_| Error::Io(format!("unrecognized analyzer setting '{f}'")))
    }

    fn to_field(self) -> String {
        match self {
            AnalyzerLabel::Open => String::new(),
            AnalyzerLabel::Linear(s) => format_angle(s.theta_deg()),
            AnalyzerLabel::Basis(b) => b.symbol().to_string(),
        }
    }
}

fn format_angle(x: f64) -> String {
    let s = format!("{x:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl fmt::Display for AnalyzerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalyzerLabel::Open => write!(f, "open"),
            AnalyzerLabel::Linear(s) => write!(f, "{}", format_angle(s.theta_deg())),
            AnalyzerLabel::Basis(b) => write!(f, "{}", b.symbol()),
        }
    }
}

/// Analyzer pair plus optical delay identifying one measurement setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingLabel {
    pub analyzer1: AnalyzerLabel,
    pub analyzer2: AnalyzerLabel,
    pub delay_um: f64,
}

impl SettingLabel {
    pub fn polarizers(theta1_deg: f64, theta2_deg: f64) -> Self {
        SettingLabel { analyzer1: AnalyzerLabel::linear(theta1_deg), analyzer2: AnalyzerLabel::linear(theta2_deg), delay_um: 0.0 }
    }

    pub fn tomographic(b1: TomoBasis, b2: TomoBasis) -> Self {
        SettingLabel { analyzer1: AnalyzerLabel::Basis(b1), analyzer2: AnalyzerLabel::Basis(b2), delay_um: 0.0 }
    }

    pub fn delay(delay_um: f64) -> Self {
        SettingLabel { analyzer1: AnalyzerLabel::Open, analyzer2: AnalyzerLabel::Open, delay_um }
    }

    pub(crate) fn key(&self) -> ((u8, i64), (u8, i64), i64) {
        (self.analyzer1.key(), self.analyzer2.key(), (self.delay_um * 1000.0).round() as i64)
    }
}

impl fmt::Display for SettingLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.analyzer1, self.analyzer2)?;
        if self.delay_um != 0.0 {
            write!(f, "@{}um", format_angle(self.delay_um))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountEntry {
    pub label: SettingLabel,
    pub pulses: u64,
    pub counts: u64,
}

/// Coincidence counts indexed by unique setting labels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CountRecord {
    entries: Vec<CountEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    theta1_deg: String,
    theta2_deg: String,
    delay_um: f64,
    pulses: u64,
    c3_counts: u64,
}

impl CountRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<CountEntry>) -> Result<Self> {
        let mut rec = CountRecord::new();
        for e in entries {
            rec.push(e)?;
        }
        Ok(rec)
    }

    /// Appends an entry; a repeated setting label is rejected.
    pub fn push(&mut self, entry: CountEntry) -> Result<()> {
        if self.get(&entry.label).is_some() {
            return Err(Error::InvalidParameter(format!("duplicate setting {}", entry.label)));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[CountEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, label: &SettingLabel) -> Option<&CountEntry> {
        let key = label.key();
        self.entries.iter().find(|e| e.label.key() == key)
    }

    pub fn counts(&self, label: &SettingLabel) -> Option<u64> {
        self.get(label).map(|e| e.counts)
    }

    pub fn total_counts(&self) -> u64 {
        self.entries.iter().map(|e| e.counts).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.entries {
            w.serialize(CsvRow {
                theta1_deg: e.label.analyzer1.to_field(),
                theta2_deg: e.label.analyzer2.to_field(),
                delay_um: e.label.delay_um,
                pulses: e.pulses,
                c3_counts: e.counts,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
        let mut rec = CountRecord::new();
        for row in r.deserialize() {
            let row: CsvRow = row?;
            rec.push(CountEntry {
                label: SettingLabel {
                    analyzer1: AnalyzerLabel::parse(&row.theta1_deg)?,
                    analyzer2: AnalyzerLabel::parse(&row.theta2_deg)?,
                    delay_um: row.delay_um,
                },
                pulses: row.pulses,
                counts: row.c3_counts,
            })?;
        }
        Ok(rec)
    }

    /// Labels from `required` that the record lacks, in the given order.
    pub fn missing(&self, required: &[SettingLabel]) -> Vec<String> {
        let mut seen = BTreeSet::new();
        required
            .iter()
            .filter(|l| self.get(l).is_none() && seen.insert(l.key()))
            .map(|l| l.to_string())
            .collect()
    }
}
