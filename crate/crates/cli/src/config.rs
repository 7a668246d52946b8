use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use mecmfg::des::StoppingRule;
use mecmfg::mfg::SolverSettings;
use mecmfg::models::{Policy, SystemConfig, TaskClass};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Aoi,
    Simulate,
    Solve,
    Sweep,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Aoi => "aoi",
            Mode::Simulate => "simulate",
            Mode::Solve => "solve",
            Mode::Sweep => "sweep",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_stop")]
    pub stop: StoppingRule,
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
}

fn default_stop() -> StoppingRule {
    StoppingRule::Events(1_000_000)
}
fn default_warmup() -> f64 {
    0.1
}
fn default_batches() -> usize {
    20
}
fn default_confidence() -> f64 {
    0.99
}
fn default_replications() -> usize {
    1
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            stop: default_stop(),
            warmup_fraction: default_warmup(),
            batches: default_batches(),
            confidence: default_confidence(),
            replications: default_replications(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Dotted path into the config, e.g. `system.es_rate`.
    pub param: String,
    pub values: Vec<f64>,
    #[serde(default = "default_sweep_mode")]
    pub mode: Mode,
    /// Start each solve from the previous point's equilibrium.
    #[serde(default = "yes")]
    pub warm_start: bool,
}

fn default_sweep_mode() -> Mode {
    Mode::Solve
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub system: SystemConfig,
    /// One policy per profile: evaluated as given in `aoi` and `simulate`,
    /// the starting point in `solve`.
    pub policies: Vec<Policy>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub seed: u64,
}

/// One problem found in a configuration, located by its path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Segment {
    Key(String),
    Index(usize),
}

fn parse_path(path: &str) -> Result<Vec<Segment>, String> {
    let mut out = Vec::new();
    for part in path.split('.') {
        let (key, mut rest) = match part.find('[') {
            Some(i) => (&part[..i], &part[i..]),
            None => (part, ""),
        };
        if key.is_empty() && (out.is_empty() || rest.is_empty()) {
            return Err(format!("empty component in path `{path}`"));
        }
        if !key.is_empty() {
            out.push(Segment::Key(key.to_string()));
        }
        while !rest.is_empty() {
            let close = rest
                .find(']')
                .ok_or_else(|| format!("unclosed `[` in path `{path}`"))?;
            let idx = rest[1..close]
                .parse()
                .map_err(|_| format!("bad index `{}` in path `{path}`", &rest[1..close]))?;
            out.push(Segment::Index(idx));
            rest = &rest[close + 1..];
            if !rest.is_empty() && !rest.starts_with('[') {
                return Err(format!("unexpected `{rest}` in path `{path}`"));
            }
        }
    }
    Ok(out)
}

pub fn get_path<'a>(root: &'a Value, path: &str) -> Result<&'a Value, String> {
    let mut cur = root;
    for seg in parse_path(path)? {
        cur = match (&seg, cur) {
            (Segment::Key(k), Value::Object(m)) => m
                .get(k)
                .ok_or_else(|| format!("no field `{k}` at `{path}`"))?,
            (Segment::Index(i), Value::Array(a)) => a
                .get(*i)
                .ok_or_else(|| format!("index {i} out of range at `{path}`"))?,
            _ => return Err(format!("`{path}` does not resolve")),
        };
    }
    Ok(cur)
}

/// Writes `value` at `path`, creating missing object fields.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), String> {
    let segs = parse_path(path)?;
    let mut cur = root;
    for (n, seg) in segs.iter().enumerate() {
        let last = n + 1 == segs.len();
        cur = match (seg, cur) {
            (Segment::Key(k), Value::Object(m)) => {
                if last {
                    m.insert(k.clone(), value);
                    return Ok(());
                }
                m.entry(k.clone())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            (Segment::Index(i), Value::Array(a)) => {
                let len = a.len();
                let slot = a
                    .get_mut(*i)
                    .ok_or_else(|| format!("index {i} out of range (length {len}) at `{path}`"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(format!("`{path}` does not resolve to a settable field")),
        };
    }
    Err(format!("empty path `{path}`"))
}

/// `key=value`; the value is read as JSON when it parses, else as a string.
pub fn parse_override(s: &str) -> Result<(String, Value), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("override `{s}` is not of the form key=value"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("override `{s}` has an empty key"));
    }
    let v = serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.to_string(), v))
}

/// A loaded configuration and the overrides applied to it.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub overrides: Vec<String>,
}

pub enum LoadError {
    Io(String),
    Diagnostics(Vec<Diagnostic>),
}

/// Reads a config or a run manifest (whose `resolved_config` is used),
/// applies overrides and deserializes.
pub fn load(path: &Path, overrides: &[String]) -> Result<Loaded, LoadError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LoadError::Io(format!("{}: {e}", path.display())))?;
    let file = path.display().to_string();
    let mut value: Value = serde_json::from_str(&text).map_err(|e| {
        LoadError::Diagnostics(vec![Diagnostic::new(
            "",
            format!("{file}:{}:{}: {e}", e.line(), e.column()),
        )])
    })?;
    let from_manifest = value.get("resolved_config").is_some();
    if from_manifest {
        value = value["resolved_config"].take();
    }
    let mut diags = Vec::new();
    for o in overrides {
        match parse_override(o).and_then(|(k, v)| set_path(&mut value, &k, v)) {
            Ok(()) => {}
            Err(e) => diags.push(Diagnostic::new("--set", e)),
        }
    }
    if !diags.is_empty() {
        return Err(LoadError::Diagnostics(diags));
    }
    let config: ExperimentConfig = if overrides.is_empty() && !from_manifest {
        let mut de = serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            LoadError::Diagnostics(vec![Diagnostic::new(path, format!("{inner} in {file}"))])
        })?
    } else {
        serde_path_to_error::deserialize(value).map_err(|e| {
            LoadError::Diagnostics(vec![Diagnostic::new(
                e.path().to_string(),
                e.into_inner().to_string(),
            )])
        })?
    };
    Ok(Loaded {
        config,
        overrides: overrides.to_vec(),
    })
}

fn positive(diags: &mut Vec<Diagnostic>, path: String, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        diags.push(Diagnostic::new(
            path,
            format!("must be positive and finite, got {v}"),
        ));
    }
}

/// Every invariant violation of `cfg` for running `mode`.
pub fn validate(cfg: &ExperimentConfig, mode: Mode) -> Vec<Diagnostic> {
    let mut d = Vec::new();
    if cfg.schema_version != SCHEMA_VERSION {
        d.push(Diagnostic::new(
            "schema_version",
            format!(
                "unsupported schema version {}, expected {SCHEMA_VERSION}",
                cfg.schema_version
            ),
        ));
    }
    let sys = &cfg.system;
    if sys.num_ues == 0 {
        d.push(Diagnostic::new("system.num_ues", "must be at least 1"));
    }
    positive(&mut d, "system.es_rate".into(), sys.es_rate);
    positive(&mut d, "system.scalarization".into(), sys.scalarization);
    for c in TaskClass::ALL {
        positive(
            &mut d,
            format!("system.aoi_weights.{c}"),
            sys.aoi_weights[c],
        );
    }
    if sys.profiles.is_empty() {
        d.push(Diagnostic::new(
            "system.profiles",
            "at least one profile is required",
        ));
    }
    for (k, p) in sys.profiles.iter().enumerate() {
        let base = format!("system.profiles[{k}]");
        for c in TaskClass::ALL {
            positive(
                &mut d,
                format!("{base}.arrival_rates.{c}"),
                p.arrival_rates[c],
            );
        }
        positive(&mut d, format!("{base}.eta"), p.eta);
        positive(&mut d, format!("{base}.f_max"), p.f_max);
        if !(0.0..=1.0).contains(&p.weight) {
            d.push(Diagnostic::new(
                format!("{base}.weight"),
                format!("must lie in [0, 1], got {}", p.weight),
            ));
        }
    }
    let total: f64 = sys.profiles.iter().map(|p| p.weight).sum();
    if !sys.profiles.is_empty() && (total - 1.0).abs() > 1e-12 {
        d.push(Diagnostic::new(
            "system.profiles",
            format!("weights sum to {total}, expected 1"),
        ));
    }
    if cfg.policies.len() != sys.profiles.len() {
        d.push(Diagnostic::new(
            "policies",
            format!(
                "{} policies for {} profiles; give one per profile",
                cfg.policies.len(),
                sys.profiles.len()
            ),
        ));
    }
    for (k, pol) in cfg.policies.iter().enumerate() {
        for c in TaskClass::ALL {
            if !(0.0..=1.0).contains(&pol.p[c]) {
                d.push(Diagnostic::new(
                    format!("policies[{k}].p.{c}"),
                    format!("must lie in [0, 1], got {}", pol.p[c]),
                ));
            }
        }
        let f_max = sys.profiles.get(k).map_or(f64::INFINITY, |p| p.f_max);
        if !(pol.mu0 >= 0.0 && pol.mu0 <= f_max) {
            d.push(Diagnostic::new(
                format!("policies[{k}].mu0"),
                format!("must lie in [0, {f_max}], got {}", pol.mu0),
            ));
        }
    }
    if let Err(e) = cfg.solver.validate() {
        let name = match &e {
            mecmfg::Error::InvalidParameter { name, .. } => format!("solver.{name}"),
            _ => "solver".into(),
        };
        d.push(Diagnostic::new(name, e.to_string()));
    }
    let sim = &cfg.sim;
    match sim.stop {
        StoppingRule::Events(0) => d.push(Diagnostic::new("sim.stop.events", "must be positive")),
        StoppingRule::Horizon(h) => positive(&mut d, "sim.stop.horizon".into(), h),
        StoppingRule::Events(_) => {}
    }
    if !(0.0..1.0).contains(&sim.warmup_fraction) {
        d.push(Diagnostic::new(
            "sim.warmup_fraction",
            format!("must lie in [0, 1), got {}", sim.warmup_fraction),
        ));
    }
    if sim.batches < 2 {
        d.push(Diagnostic::new("sim.batches", "must be at least 2"));
    }
    if !(sim.confidence > 0.0 && sim.confidence < 1.0) {
        d.push(Diagnostic::new(
            "sim.confidence",
            format!("must lie in (0, 1), got {}", sim.confidence),
        ));
    }
    if sim.replications == 0 {
        d.push(Diagnostic::new("sim.replications", "must be at least 1"));
    }
    match (&cfg.sweep, mode) {
        (None, Mode::Sweep) => d.push(Diagnostic::new(
            "sweep",
            "sweep mode needs a `sweep` section",
        )),
        (Some(sw), _) => d.extend(validate_sweep(cfg, sw)),
        (None, _) => {}
    }
    d
}

fn validate_sweep(cfg: &ExperimentConfig, sw: &SweepSection) -> Vec<Diagnostic> {
    let mut d = Vec::new();
    if sw.mode == Mode::Sweep {
        d.push(Diagnostic::new(
            "sweep.mode",
            "must be one of aoi, simulate, solve",
        ));
    }
    let resolved = serde_json::to_value(cfg).expect("config serializes");
    match get_path(&resolved, &sw.param) {
        Ok(Value::Number(_)) => {}
        Ok(other) => d.push(Diagnostic::new(
            "sweep.param",
            format!(
                "`{}` is not a scalar number (found {})",
                sw.param,
                kind(other)
            ),
        )),
        Err(e) => d.push(Diagnostic::new("sweep.param", e)),
    }
    if sw.param == "system.num_ues" || sw.param == "seed" || sw.param.starts_with("sweep") {
        d.push(Diagnostic::new(
            "sweep.param",
            format!("`{}` cannot be swept", sw.param),
        ));
    }
    if sw.values.is_empty() {
        d.push(Diagnostic::new("sweep.values", "grid is empty"));
    }
    if let Some(i) = sw.values.iter().position(|v| !v.is_finite()) {
        d.push(Diagnostic::new(
            format!("sweep.values[{i}]"),
            "must be finite",
        ));
    }
    let up = sw.values.windows(2).all(|w| w[1] > w[0]);
    let down = sw.values.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        d.push(Diagnostic::new(
            "sweep.values",
            "grid must be strictly monotone",
        ));
    }
    d
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// `cfg` with the swept parameter set to `value`.
pub fn at_sweep_point(
    cfg: &ExperimentConfig,
    param: &str,
    value: f64,
) -> Result<ExperimentConfig, Diagnostic> {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    set_path(&mut v, param, Value::from(value)).map_err(|e| Diagnostic::new("sweep.param", e))?;
    serde_json::from_value(v).map_err(|e| Diagnostic::new("sweep.param", e.to_string()))
}
