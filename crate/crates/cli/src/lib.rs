//! The `est` command line: configuration resolution, campaign dispatch and
//! report emission.

mod args;
mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::Parser;
use est_core::evalsuite::{equivariance_audit, gradcheck_suite, proposition2_check, rotsym_benchmark};
use est_core::ft::{nyquist_check, roundtrip_report};
use est_core::mpnn::{read_xyz, read_xyz_dir};
use est_core::rng::seeded_rng;
use est_core::sphere::{gram_residual, uniformity_report, GridSpec, SphereGrid};
use est_core::EstError;
use serde_json::{json, Map, Value};

pub use args::Cli;
pub use config::{Campaign, Format, RunConfig, SampleParams, TransformParams};

/// Gradient deviations above this fail the suite.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or inputs; exit code 1.
    Contract(String),
    /// Unreadable or unwritable files; exit code 2.
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Contract(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Contract(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<EstError> for CliError {
    fn from(e: EstError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Contract(e.to_string())
        }
    }
}

/// A campaign's outcome: the JSON fields of the report and its CSV projection.
pub struct Outcome {
    pub fields: Map<String, Value>,
    pub csv: String,
}

/// Parses `argv` (program name first), runs the campaign and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("est: {e}");
            e.code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = RunConfig::resolve(cli)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| run_campaign(&config))?;
    let text = match config.format {
        Format::Json => render_json(&config, outcome.fields, unix_time()),
        Format::Csv => outcome.csv,
    };
    match &config.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn unix_time() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Campaign fields, then the resolved configuration, then the wall-clock timestamp.
pub fn render_json(config: &RunConfig, mut fields: Map<String, Value>, timestamp: u64) -> String {
    fields.insert("config".into(), serde_json::to_value(config).expect("config serialises"));
    fields.insert("timestamp".into(), json!(timestamp));
    let mut text = serde_json::to_string_pretty(&Value::Object(fields)).expect("report serialises");
    text.push('\n');
    text
}

fn cache_dir() -> Option<PathBuf> {
    std::env::var_os("EST_CACHE_DIR").map(PathBuf::from)
}

fn build_grid(spec: &GridSpec, l_max: usize) -> Result<Arc<SphereGrid>, CliError> {
    Ok(Arc::new(spec.build_cached(l_max, cache_dir().as_deref())?))
}

fn object(v: impl serde::Serialize) -> Map<String, Value> {
    match serde_json::to_value(v).expect("report serialises") {
        Value::Object(m) => m,
        other => Map::from_iter([("result".to_string(), other)]),
    }
}

/// Runs the configured campaign on the current thread pool.
pub fn run_campaign(config: &RunConfig) -> Result<Outcome, CliError> {
    let seed = config.seed;
    match &config.campaign {
        Campaign::Sample(p) => {
            let grid = build_grid(&p.grid, p.degree)?;
            let uniformity = uniformity_report(&grid, p.rotations, &mut seeded_rng(seed));
            let mut fields = object(grid.to_file());
            fields.insert("uniformity".into(), serde_json::to_value(uniformity).expect("serialises"));
            let mut csv = String::from("x,y,z\n");
            for p in grid.points() {
                let [x, y, z] = p.xyz();
                csv.push_str(&format!("{x},{y},{z}\n"));
            }
            Ok(Outcome { fields, csv })
        }
        Campaign::FtCheck(p) => {
            let grid = build_grid(&p.grid, p.degree)?;
            let report = roundtrip_report(p.degree, &grid, p.trials, &mut seeded_rng(seed))?;
            let (nyquist_ok, nyquist) = nyquist_check(p.degree, grid.len());
            let residual = gram_residual(&grid);
            let csv = format!(
                "grid,l_max,points,trials,mean_relative_error,max_relative_error,gram_residual,nyquist_ok\n{},{},{},{},{},{},{},{}\n",
                p.grid.label(),
                report.l_max,
                report.points,
                report.trials,
                report.mean_relative_error,
                report.max_relative_error,
                residual,
                nyquist_ok
            );
            let mut fields = object(&report);
            fields.insert("grid".into(), json!(p.grid.label()));
            fields.insert("gram_residual".into(), json!(residual));
            fields.insert("nyquist_ok".into(), json!(nyquist_ok));
            fields.insert("nyquist".into(), json!(nyquist));
            Ok(Outcome { fields, csv })
        }
        Campaign::Audit(p) => {
            let inputs = match &config.xyz {
                Some(path) if path.is_dir() => Some(read_xyz_dir(path)?),
                Some(path) => Some(read_xyz(path)?),
                None => None,
            };
            let report = equivariance_audit(p, seed, inputs.as_deref())?;
            Ok(Outcome {
                csv: report.csv(),
                fields: object(&report),
            })
        }
        Campaign::Rotsym(p) => {
            let result = rotsym_benchmark(p, seed)?;
            Ok(Outcome {
                csv: result.csv(),
                fields: object(&result),
            })
        }
        Campaign::Prop2(p) => {
            let grid = build_grid(&p.grid, 2 * p.degree)?;
            let report = proposition2_check(p.degree, &grid, p.trials, &mut seeded_rng(seed))?;
            let csv = format!(
                "grid,l_max,points,trials,mean_relative_deviation,max_relative_deviation\n{},{},{},{},{},{}\n",
                p.grid.label(),
                report.l_max,
                report.points,
                report.trials,
                report.mean_relative_deviation,
                report.max_relative_deviation
            );
            let mut fields = object(&report);
            fields.insert("grid".into(), json!(p.grid.label()));
            Ok(Outcome { fields, csv })
        }
        Campaign::Gradcheck(p) => {
            let report = gradcheck_suite(p, &mut seeded_rng(seed))?;
            let mut fields = object(&report);
            fields.insert("tolerance".into(), json!(GRADCHECK_TOLERANCE));
            fields.insert("passed".into(), json!(report.max_relative_deviation < GRADCHECK_TOLERANCE));
            Ok(Outcome {
                csv: report.csv(),
                fields,
            })
        }
    }
}
