//! Command-line front end.
//!
//! Exit codes: 0 success, 1 other failure, 2 invalid configuration,
//! 3 incomplete count record.

use std::io::Write;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::record::CountRecord;
use crate::scenario::{self, ScenarioResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_INCOMPLETE_RECORD: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hybrid-bell", version, about = "Heralded-photon / coherent-pulse entanglement simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Three-fold counts versus optical delay, with dip fit.
    HomScan(Common),
    /// Sixteen-setting polarization-correlation grid and CHSH value.
    BellTest(Common),
    /// Simulated two-qubit tomography with maximum-likelihood reconstruction.
    Tomography(Common),
    /// Three-fold rate and source-brightness estimates from observed rates.
    Rates(Common),
    /// Higher-order multiphoton budget.
    Budget(Common),
    /// Analyse a recorded count CSV (defaults to the bundled polarizer grid).
    Replay {
        /// Count record CSV.
        record: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the effective configuration.
    Config(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// Key-value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable), e.g. --set nu=0.01.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo pulses per setting.
    #[arg(long)]
    pub pulses: Option<u64>,
    /// Skip sampling; report analytic results only.
    #[arg(long)]
    pub analytic_only: bool,
    /// Directory for the JSON summary and CSV tables.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

impl Common {
    /// Defaults, then the config file, then `--set`, then the dedicated flags.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply_overrides(self.overrides.iter().map(String::as_str))?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.pulses {
            cfg.pulses = n;
        }
        if self.analytic_only {
            cfg.pulses = 0;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_) | Error::InvalidParameter(_) | Error::InvalidOverlap(_) => EXIT_INVALID_CONFIG,
        Error::IncompleteRecord(_) | Error::IncompleteTomography(_) => EXIT_INCOMPLETE_RECORD,
        _ => EXIT_FAILURE,
    }
}

/// Runs the scenario selected by `command`.
pub fn execute(command: &Command) -> Result<(ScenarioResult, Common)> {
    let (res, common) = match command {
        Command::HomScan(c) => {
            let cfg = c.resolve()?;
            (scenario::run_hom_scan(&cfg, cfg.hom_tau_min_um, cfg.hom_tau_max_um, cfg.hom_points)?, c)
        }
        Command::BellTest(c) => {
            let cfg = c.resolve()?;
            (scenario::run_bell_test(&cfg, &cfg.chsh_settings())?, c)
        }
        Command::Tomography(c) => (scenario::run_tomography(&c.resolve()?)?, c),
        Command::Rates(c) => (scenario::run_rates(&c.resolve()?)?, c),
        Command::Budget(c) => (scenario::run_budget(&c.resolve()?)?, c),
        Command::Replay { record, common } => {
            let cfg = common.resolve()?;
            let rec = match record {
                Some(p) => CountRecord::read_csv(std::fs::File::open(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?)?,
                None => scenario::bundled_table1(),
            };
            (scenario::replay(&cfg, &rec)?, common)
        }
        Command::Config(_) => unreachable!("handled by run"),
    };
    Ok((res, common.clone()))
}

fn primary_table(res: &ScenarioResult) -> &str {
    match res.scenario.as_str() {
        "hom-scan" => "scan",
        "bell-test" => "counts",
        "tomography" => "rho_real",
        "rates" => "rates",
        "budget" => "sectors",
        _ => "model",
    }
}

/// Writes `<scenario>.json` (with a timestamp wrapper) and one CSV per table.
pub fn write_outputs(res: &ScenarioResult, dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let doc = serde_json::json!({ "timestamp_unix": timestamp, "result": res });
    std::fs::write(dir.join(format!("{}.json", res.scenario)), serde_json::to_string_pretty(&doc).expect("json"))?;
    for (name, table) in &res.tables {
        std::fs::write(dir.join(format!("{}_{}.csv", res.scenario, name)), table.to_csv()?)?;
    }
    Ok(())
}

/// Parses the command line, runs it and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID_CONFIG } else { EXIT_OK };
        }
    };
    if let Command::Config(c) = &cli.command {
        return match c.resolve() {
            Ok(cfg) => {
                let _ = std::io::stdout().lock().write_all(cfg.echo().as_bytes());
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        };
    }
    let outcome = execute(&cli.command).and_then(|(res, common)| {
        if let Some(dir) = &common.out {
            write_outputs(&res, dir)?;
        }
        let text = match common.format {
            Format::Json => res.to_json() + "\n",
            Format::Csv => res.tables[primary_table(&res)].to_csv()?,
        };
        // a closed downstream pipe is not an error of the run
        let _ = std::io::stdout().lock().write_all(text.as_bytes());
        for w in &res.warnings {
            eprintln!("warning: {w}");
        }
        Ok(())
    });
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
