use std::path::{Path, PathBuf};

use est_core::est::Routing;
use est_core::evalsuite::{AuditConfig, GradcheckConfig, RotSymConfig};
use est_core::sphere::{GridKind, GridSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{Cli, Command, GridArgs};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleParams {
    pub grid: GridSpec,
    pub degree: usize,
    pub rotations: usize,
}

impl Default for SampleParams {
    fn default() -> Self {
        Self {
            grid: GridSpec::fl(64),
            degree: 2,
            rotations: 32,
        }
    }
}

/// Shared by `ft-check` and `prop2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformParams {
    pub grid: GridSpec,
    pub degree: usize,
    pub trials: usize,
}

impl TransformParams {
    fn with_degree(degree: usize) -> Self {
        Self {
            grid: GridSpec::fl(256),
            degree,
            trials: 100,
        }
    }
}

impl Default for TransformParams {
    fn default() -> Self {
        Self::with_degree(2)
    }
}

/// Campaign parameters, keyed by subcommand name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Campaign {
    Sample(SampleParams),
    FtCheck(TransformParams),
    Audit(AuditConfig),
    Rotsym(RotSymConfig),
    Prop2(TransformParams),
    Gradcheck(GradcheckConfig),
}

impl Campaign {
    fn defaults(command: &str) -> Self {
        match command {
            "sample" => Campaign::Sample(SampleParams::default()),
            "ft-check" => Campaign::FtCheck(TransformParams::default()),
            "audit" => Campaign::Audit(AuditConfig::default()),
            "rotsym" => Campaign::Rotsym(RotSymConfig::default()),
            "prop2" => Campaign::Prop2(TransformParams::with_degree(1)),
            _ => Campaign::Gradcheck(GradcheckConfig::default()),
        }
    }
}

/// Fully resolved invocation, embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub xyz: Option<PathBuf>,
    #[serde(flatten)]
    pub campaign: Campaign,
}

const SHARED_KEYS: [&str; 6] = ["command", "seed", "format", "out", "threads", "xyz"];

impl RunConfig {
    fn defaults(command: &str) -> Self {
        Self {
            command: command.to_string(),
            seed: 0,
            format: Format::Json,
            out: None,
            threads: None,
            xyz: None,
            campaign: Campaign::defaults(command),
        }
    }

    /// Defaults, overlaid by the config file, overlaid by explicit flags.
    pub fn resolve(cli: &Cli) -> Result<Self, CliError> {
        let command = cli.command.name();
        let mut merged = serde_json::to_value(Self::defaults(command)).expect("config serialises");
        if let Some(path) = &cli.common.config {
            let file = read_config(path)?;
            check_keys(&file, &merged, command)?;
            merge(&mut merged, file);
        }
        let mut config: RunConfig = serde_json::from_value(merged).map_err(|e| CliError::Contract(format!("config: {e}")))?;
        config.apply_flags(cli);
        config.validate()?;
        Ok(config)
    }

    fn apply_flags(&mut self, cli: &Cli) {
        let c = &cli.common;
        set(&mut self.seed, c.seed);
        if c.out.is_some() {
            self.out.clone_from(&c.out);
        }
        if c.csv {
            self.format = Format::Csv;
        } else if c.json {
            self.format = Format::Json;
        }
        if let Some(t) = c.threads {
            self.threads = Some(t as usize);
        }
        match (&cli.command, &mut self.campaign) {
            (Command::Sample { grid, degree, rotations }, Campaign::Sample(p)) => {
                apply_grid(&mut p.grid, grid);
                set(&mut p.degree, *degree);
                set(&mut p.rotations, *rotations);
            }
            (Command::FtCheck { grid, degree, trials }, Campaign::FtCheck(p))
            | (Command::Prop2 { grid, degree, trials }, Campaign::Prop2(p)) => {
                apply_grid(&mut p.grid, grid);
                set(&mut p.degree, *degree);
                set(&mut p.trials, *trials);
            }
            (
                Command::Audit {
                    grid,
                    layers,
                    degree,
                    channels,
                    heads,
                    cutoff,
                    samples,
                    rotations,
                    steerable,
                    spherical,
                    top_k,
                    xyz,
                },
                Campaign::Audit(p),
            ) => {
                apply_grid(&mut p.model.grid, grid);
                set(&mut p.model.layers, *layers);
                set(&mut p.model.l_max, *degree);
                set(&mut p.model.channels, *channels);
                set(&mut p.model.heads, *heads);
                set(&mut p.model.cutoff, *cutoff);
                set(&mut p.model.n_steerable, *steerable);
                set(&mut p.model.n_spherical, *spherical);
                if let Some(k) = top_k {
                    p.model.routing = Routing::TopK(*k);
                }
                set(&mut p.samples, *samples);
                set(&mut p.rotations, *rotations);
                if xyz.is_some() {
                    self.xyz.clone_from(xyz);
                }
            }
            (
                Command::Rotsym {
                    grid,
                    fold,
                    degree,
                    probe,
                    seeds,
                    steps,
                    lr,
                    channels,
                    heads,
                },
                Campaign::Rotsym(p),
            ) => {
                apply_grid(&mut p.grid, grid);
                set(&mut p.fold, *fold);
                set(&mut p.degree, *degree);
                set(&mut p.probe, *probe);
                set(&mut p.seeds, *seeds);
                set(&mut p.steps, *steps);
                set(&mut p.lr, *lr);
                set(&mut p.channels, *channels);
                set(&mut p.heads, *heads);
            }
            (
                Command::Gradcheck {
                    degree,
                    channels,
                    heads,
                    points,
                    entries,
                },
                Campaign::Gradcheck(p),
            ) => {
                set(&mut p.l_max, *degree);
                set(&mut p.channels, *channels);
                set(&mut p.heads, *heads);
                set(&mut p.points, *points);
                set(&mut p.entries_per_tensor, *entries);
            }
            _ => unreachable!("campaign defaults follow the subcommand"),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let grid = match &self.campaign {
            Campaign::Sample(p) => Some(p.grid),
            Campaign::FtCheck(p) | Campaign::Prop2(p) => Some(p.grid),
            Campaign::Audit(p) => Some(p.model.grid),
            Campaign::Rotsym(p) => Some(p.grid),
            Campaign::Gradcheck(_) => None,
        };
        if let Some(g) = grid {
            if g.kind == GridKind::Latlong && g.optimize {
                return Err(CliError::Contract("repulsion optimisation applies to Fibonacci grids only".into()));
            }
        }
        if self.threads == Some(0) {
            return Err(CliError::Contract("--threads must be positive".into()));
        }
        if let Some(path) = &self.xyz {
            if !matches!(self.campaign, Campaign::Audit(_)) {
                return Err(CliError::Contract("only the audit reads XYZ input".into()));
            }
            if !path.exists() {
                return Err(CliError::Io(format!("{}: no such file or directory", path.display())));
            }
        }
        Ok(())
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn apply_grid(spec: &mut GridSpec, args: &GridArgs) {
    set(&mut spec.kind, args.kind);
    set(&mut spec.points, args.points);
    if args.optimize {
        spec.optimize = true;
    }
}

fn read_config(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Contract(format!("{}: {e}", path.display())))?;
    if !value.is_object() {
        return Err(CliError::Contract(format!("{}: expected a JSON object", path.display())));
    }
    Ok(value)
}

fn check_keys(file: &Value, defaults: &Value, command: &str) -> Result<(), CliError> {
    let map = file.as_object().expect("checked object");
    if let Some(c) = map.get("command") {
        if c.as_str() != Some(command) {
            return Err(CliError::Contract(format!("config is for {c}, not {command:?}")));
        }
    }
    for key in map.keys() {
        if key != command && !SHARED_KEYS.contains(&key.as_str()) {
            return Err(CliError::Contract(format!("unknown config key {key:?} for {command}")));
        }
    }
    match unknown_key(file, defaults, "") {
        Some(path) => Err(CliError::Contract(format!("unknown config key {path:?} for {command}"))),
        None => Ok(()),
    }
}

/// First key path in `file` that has no counterpart among the object keys of `defaults`.
fn unknown_key(file: &Value, defaults: &Value, prefix: &str) -> Option<String> {
    let (Value::Object(f), Value::Object(d)) = (file, defaults) else {
        return None;
    };
    f.iter().find_map(|(k, v)| {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match d.get(k) {
            Some(dv) => unknown_key(v, dv, &path),
            None => Some(path),
        }
    })
}

/// Recursive object merge; `over` wins on every leaf it names.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;
    use serde_json::json;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("est").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn merge_overrides_leaves_only() {
        let mut a = json!({"x": {"y": 1, "z": 2}, "w": 3});
        merge(&mut a, json!({"x": {"y": 5}}));
        assert_eq!(a, json!({"x": {"y": 5, "z": 2}, "w": 3}));
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"seed": 3, "audit": {"samples": 40, "model": {"layers": 2}}}"#).unwrap();
        let c = RunConfig::resolve(&cli(&["audit", "--config", path.to_str().unwrap(), "--layers", "4"])).unwrap();
        assert_eq!(c.seed, 3);
        let Campaign::Audit(a) = c.campaign else { panic!() };
        assert_eq!(a.samples, 40);
        assert_eq!(a.model.layers, 4);
        assert_eq!(a.model.l_max, 2);
    }

    #[test]
    fn resolved_config_roundtrips() {
        let c = RunConfig::resolve(&cli(&["rotsym", "--fold", "5", "--probe", "tp", "--seed", "9"])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, serde_json::to_string(&c).unwrap()).unwrap();
        let again = RunConfig::resolve(&cli(&["rotsym", "--config", path.to_str().unwrap()])).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn foreign_sections_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"sample": {"degree": 1}}"#).unwrap();
        let err = RunConfig::resolve(&cli(&["audit", "--config", path.to_str().unwrap()])).unwrap_err();
        assert_eq!(err.code(), 1);
    }

    #[test]
    fn misplaced_nested_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"audit": {"layers": 2}}"#).unwrap();
        let err = RunConfig::resolve(&cli(&["audit", "--config", path.to_str().unwrap()])).unwrap_err();
        assert!(err.to_string().contains("audit.layers"), "{err}");
    }

    #[test]
    fn missing_inputs_are_io_failures() {
        let err = RunConfig::resolve(&cli(&["audit", "--xyz", "/nonexistent/est"])).unwrap_err();
        assert_eq!(err.code(), 2);
        let err = RunConfig::resolve(&cli(&["prop2", "--config", "/nonexistent/est.json"])).unwrap_err();
        assert_eq!(err.code(), 2);
    }

    #[test]
    fn optimised_latlong_is_rejected() {
        let err = RunConfig::resolve(&cli(&["sample", "--grid", "latlong", "--points", "210", "--optimize"])).unwrap_err();
        assert_eq!(err.code(), 1);
    }
}
