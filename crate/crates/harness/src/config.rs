//! Experiment configuration from `key=value` files and command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use approachability::monitoring::FlagGridMode;
use thiserror::Error;

use crate::adversary::AdversaryKind;
use crate::scenario::{Scenario, SignalSymbols};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error("unknown key `{key}` for {command}; accepted keys: {accepted}")]
    UnknownKey { key: String, command: String, accepted: String },
    #[error("unknown scenario `{name}` for {command}; valid scenarios: {valid}")]
    UnknownScenario { name: String, command: String, valid: String },
    #[error("line {line}: expected `key=value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn field(name: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: name.to_string(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Command {
    InternalRegret,
    Calibrate,
    ApproachBlackwell,
    ApproachCalibrated,
    Halfspace,
    PartialMonitor,
    Doubling,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::InternalRegret,
        Command::Calibrate,
        Command::ApproachBlackwell,
        Command::ApproachCalibrated,
        Command::Halfspace,
        Command::PartialMonitor,
        Command::Doubling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::InternalRegret => "internal-regret",
            Command::Calibrate => "calibrate",
            Command::ApproachBlackwell => "approach-blackwell",
            Command::ApproachCalibrated => "approach-calibrated",
            Command::Halfspace => "halfspace",
            Command::PartialMonitor => "partial-monitor",
            Command::Doubling => "doubling",
        }
    }

    /// Scenarios the command can run; the first is the default.
    pub fn scenarios(self) -> &'static [Scenario] {
        match self {
            Command::InternalRegret => &[Scenario::UniformOutcomes, Scenario::MatchingPennies],
            Command::Calibrate => &[Scenario::BinaryForecast],
            Command::ApproachBlackwell | Command::ApproachCalibrated | Command::Halfspace => &[Scenario::MatchingPennies],
            Command::PartialMonitor | Command::Doubling => &[Scenario::LabelEfficient, Scenario::MatchingPenniesDark],
        }
    }

    /// Keys beyond the common ones.
    fn extra_keys(self) -> &'static [&'static str] {
        match self {
            Command::InternalRegret => &["actions"],
            Command::Calibrate => &["mesh"],
            Command::ApproachBlackwell => &["target"],
            Command::ApproachCalibrated => &["target", "epsilon", "mesh", "response-mesh"],
            Command::Halfspace => &["target", "epsilon"],
            Command::PartialMonitor => &["epsilon", "eta", "flag-grid", "grid-seed", "signal-a", "signal-b", "signal-c"],
            Command::Doubling => &["n1", "eta", "flag-grid", "grid-seed", "signal-a", "signal-b", "signal-c"],
        }
    }

    pub fn accepted_keys(self) -> Vec<&'static str> {
        let mut keys = COMMON_KEYS.to_vec();
        keys.extend_from_slice(self.extra_keys());
        keys
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            field("command", format!("unknown command `{s}`; expected one of {}", Self::ALL.map(|c| c.name()).join(", ")))
        })
    }
}

const COMMON_KEYS: [&str; 8] = ["command", "scenario", "steps", "seed", "adversary", "out", "format", "log-every"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            _ => Err(field("format", format!("expected csv or jsonl, got `{s}`"))),
        }
    }
}

/// Raw settings in file order of precedence: later inserts win.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key=value` lines. Blank lines and lines starting with `#`
    /// are skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: k + 1, text: line.to_string() })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: k + 1, text: line.to_string() });
            }
            raw.set(key, value.trim());
        }
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Entries of `other` replace those of `self`.
    pub fn overlay(&mut self, other: &RawConfig) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }
}

/// A validated experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub command: Command,
    pub scenario: Scenario,
    pub steps: u64,
    pub seed: u64,
    pub adversary: AdversaryKind,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub log_every: Option<u64>,
    /// Outcome dimension of `uniform-outcomes`.
    pub actions: usize,
    /// Calibration grid mesh, or the forecast mesh of the calibrated approach.
    pub mesh: f64,
    pub response_mesh: f64,
    pub epsilon: f64,
    pub eta: Option<f64>,
    pub target: Vec<f64>,
    pub n1: u64,
    pub flag_grid: FlagGridMode,
    pub grid_seed: u64,
    pub symbols: SignalSymbols,
}

fn parse_num<T: FromStr>(raw: &RawConfig, key: &str) -> Result<Option<T>, ConfigError> {
    raw.get(key)
        .map(|v| v.parse::<T>().map_err(|_| field(key, format!("cannot parse `{v}`"))))
        .transpose()
}

fn parse_list(raw: &RawConfig, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
    raw.get(key)
        .map(|v| {
            v.split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| field(key, format!("`{s}` is not a number"))))
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(field(key, format!("must be positive and finite, got {v}")))
    }
}

fn distribution(key: &str, v: Vec<f64>) -> Result<Vec<f64>, ConfigError> {
    let sum: f64 = v.iter().sum();
    if v.is_empty() || v.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(field(key, format!("must be a probability vector, got {v:?}")));
    }
    Ok(v)
}

impl Config {
    /// Defaults for a command, before any file or flag.
    pub fn defaults(command: Command) -> Self {
        let (steps, adversary, mesh, epsilon) = match command {
            Command::InternalRegret => (10_000, AdversaryKind::Uniform, 0.2, 0.1),
            Command::Calibrate => (10_000, AdversaryKind::Iid(vec![0.3, 0.7]), 0.2, 0.1),
            Command::ApproachBlackwell | Command::Halfspace | Command::ApproachCalibrated => {
                (10_000, AdversaryKind::Uniform, 0.05, 0.1)
            }
            Command::PartialMonitor => (10_000, AdversaryKind::Constant(0), 0.2, 0.1),
            Command::Doubling => (42_500, AdversaryKind::Periodic(vec![0, 0, 1]), 0.2, 0.1),
        };
        Self {
            command,
            scenario: command.scenarios()[0],
            steps,
            seed: 0,
            adversary,
            out: None,
            format: Format::Csv,
            log_every: None,
            actions: 3,
            mesh,
            response_mesh: epsilon / 2.0,
            epsilon,
            eta: None,
            target: vec![0.0],
            n1: 500,
            flag_grid: FlagGridMode::Range,
            grid_seed: 0,
            symbols: SignalSymbols::default(),
        }
    }

    /// Validates raw settings. `command` in `raw` is used only when no
    /// command is given.
    pub fn from_raw(command: Option<Command>, raw: &RawConfig) -> Result<Self, ConfigError> {
        let command = match (command, raw.get("command")) {
            (Some(c), _) => c,
            (None, Some(name)) => name.parse()?,
            (None, None) => return Err(field("command", "no command given")),
        };
        let accepted = command.accepted_keys();
        if let Some(key) = raw.values.keys().find(|k| !accepted.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey { key: key.clone(), command: command.name().into(), accepted: accepted.join(", ") });
        }
        let mut c = Self::defaults(command);
        if let Some(name) = raw.get("scenario") {
            c.scenario = Scenario::from_name(name)
                .filter(|s| command.scenarios().contains(s))
                .ok_or_else(|| ConfigError::UnknownScenario {
                    name: name.to_string(),
                    command: command.name().into(),
                    valid: command.scenarios().iter().map(|s| s.name()).collect::<Vec<_>>().join(", "),
                })?;
        }
        if let Some(steps) = parse_num::<u64>(raw, "steps")? {
            if steps == 0 {
                return Err(field("steps", "must be at least 1"));
            }
            c.steps = steps;
        }
        c.seed = parse_num(raw, "seed")?.unwrap_or(c.seed);
        if let Some(spec) = raw.get("adversary") {
            c.adversary = spec.parse().map_err(|e: crate::adversary::AdversaryError| field("adversary", e.to_string()))?;
        } else if command == Command::InternalRegret && c.scenario == Scenario::MatchingPennies {
            c.adversary = AdversaryKind::Iid(vec![0.5, 0.5]);
        }
        c.out = raw.get("out").map(PathBuf::from);
        if let Some(f) = raw.get("format") {
            c.format = f.parse()?;
        }
        if let Some(k) = parse_num::<u64>(raw, "log-every")? {
            if k == 0 {
                return Err(field("log-every", "must be at least 1"));
            }
            c.log_every = Some(k);
        }
        if let Some(a) = parse_num::<usize>(raw, "actions")? {
            if a < 2 {
                return Err(field("actions", "need at least 2 actions"));
            }
            c.actions = a;
        }
        if let Some(m) = parse_num::<f64>(raw, "mesh")? {
            c.mesh = positive("mesh", m)?;
        }
        if let Some(e) = parse_num::<f64>(raw, "epsilon")? {
            c.epsilon = if command == Command::Halfspace && e == 0.0 { 0.0 } else { positive("epsilon", e)? };
            c.response_mesh = (c.epsilon / 2.0).max(f64::MIN_POSITIVE);
        }
        if let Some(m) = parse_num::<f64>(raw, "response-mesh")? {
            c.response_mesh = positive("response-mesh", m)?;
        }
        if let Some(eta) = parse_num::<f64>(raw, "eta")? {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(field("eta", format!("must lie in (0, 1], got {eta}")));
            }
            c.eta = Some(eta);
        }
        if let Some(t) = parse_list(raw, "target")? {
            if t.len() != 1 || !t[0].is_finite() {
                return Err(field("target", "matching-pennies payoffs are scalar; give one finite number"));
            }
            c.target = t;
        }
        if let Some(n1) = parse_num::<u64>(raw, "n1")? {
            if n1 == 0 {
                return Err(field("n1", "must be at least 1"));
            }
            c.n1 = n1;
        }
        if let Some(mode) = raw.get("flag-grid") {
            c.flag_grid = match mode {
                "range" => FlagGridMode::Range,
                "product" => FlagGridMode::Product,
                _ => return Err(field("flag-grid", format!("expected range or product, got `{mode}`"))),
            };
        }
        c.grid_seed = parse_num(raw, "grid-seed")?.unwrap_or(c.grid_seed);
        for (key, slot) in [("signal-a", &mut c.symbols.a), ("signal-b", &mut c.symbols.b), ("signal-c", &mut c.symbols.c)] {
            if let Some(v) = parse_list(raw, key)? {
                *slot = distribution(key, v)?;
            }
        }
        let s = &c.symbols;
        if s.a.len() != s.b.len() || s.b.len() != s.c.len() {
            return Err(field("signal-a", "signal symbols must share one signal set"));
        }
        if s.a == s.b || s.b == s.c || s.a == s.c {
            return Err(field("signal-a", "signal symbols a, b, c must be distinct distributions"));
        }
        Ok(c)
    }

    /// Every setting that influences the trace, as printed strings. Output
    /// location and format are left out.
    pub fn parameters(&self) -> BTreeMap<String, String> {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut p = BTreeMap::new();
        p.insert("command".to_string(), self.command.name().to_string());
        p.insert("scenario".to_string(), self.scenario.name().to_string());
        p.insert("steps".to_string(), self.steps.to_string());
        p.insert("seed".to_string(), self.seed.to_string());
        p.insert("adversary".to_string(), self.adversary.to_string());
        p.insert("log-every".to_string(), self.log_every.map_or("geometric".to_string(), |k| k.to_string()));
        for &key in self.command.extra_keys() {
            let value = match key {
                "actions" => self.actions.to_string(),
                "mesh" => self.mesh.to_string(),
                "response-mesh" => self.response_mesh.to_string(),
                "epsilon" => self.epsilon.to_string(),
                "eta" => self.eta.map_or("default".to_string(), |e| e.to_string()),
                "target" => list(&self.target),
                "n1" => self.n1.to_string(),
                "flag-grid" => match self.flag_grid {
                    FlagGridMode::Range => "range".to_string(),
                    FlagGridMode::Product => "product".to_string(),
                },
                "grid-seed" => self.grid_seed.to_string(),
                "signal-a" => list(&self.symbols.a),
                "signal-b" => list(&self.symbols.b),
                "signal-c" => list(&self.symbols.c),
                _ => continue,
            };
            p.insert(key.to_string(), value);
        }
        p
    }
}
