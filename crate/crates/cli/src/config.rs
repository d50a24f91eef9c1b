//! Run configuration: flat `section.key = value` entries read from a TOML
//! file, overridden by `--set`, then resolved against per-key defaults.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::{json, Value as Json};
use toml::Value;

use ymh_core::fiber::Fiber;
use ymh_core::flow::{FlowConfig, Scheme};
use ymh_core::lattice::{build_grid, Grid};
use ymh_core::stability::ScanFlow;

/// A configuration problem; always maps to exit status 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub reason: &'static str,
    pub message: String,
}

impl ConfigError {
    fn new(reason: &'static str, message: impl Into<String>) -> Self {
        ConfigError { reason, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.reason, self.message)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Int,
    Float,
    Str,
    FloatList,
    IntList,
}

/// Every accepted key, its type and its default (`None` means required
/// by the subcommands that read its section).
const KEYS: &[(&str, Kind, Option<&str>)] = &[
    ("grid.nx", Kind::Int, None),
    ("grid.ny", Kind::Int, None),
    ("grid.a", Kind::Float, None),
    ("grid.d", Kind::Int, Some("0")),
    ("fiber.kind", Kind::Str, Some("\"linear\"")),
    ("flow.c", Kind::Float, Some("1.0")),
    ("flow.dt", Kind::Float, Some("1e-3")),
    ("flow.t_end", Kind::Float, Some("1.0")),
    ("flow.scheme", Kind::Str, Some("\"euler\"")),
    ("flow.conv_tol", Kind::Float, Some("1e-10")),
    ("flow.cfl_kappa", Kind::Float, Some("0.2")),
    ("flow.blowup_guard", Kind::Float, Some("1e8")),
    ("run.seed", Kind::Int, Some("0")),
    ("run.monitors_every", Kind::Int, Some("10")),
    ("run.snapshot_every", Kind::Int, Some("0")),
    ("run.output_dir", Kind::Str, Some("\"ymh-out\"")),
    ("run.jobs", Kind::Int, Some("0")),
    ("init.kind", Kind::Str, Some("\"random\"")),
    ("init.amplitude", Kind::Float, Some("0.3")),
    ("init.mean_moment", Kind::Float, Some("0.5")),
    ("scan.c_values", Kind::FloatList, None),
    ("scan.flow", Kind::Str, Some("\"metric\"")),
    ("check.sizes", Kind::IntList, Some("[8, 16, 32, 64]")),
    ("check.samples", Kind::Int, Some("100")),
    ("check.configs", Kind::Int, Some("5")),
    ("check.directions", Kind::Int, Some("3")),
    ("check.step", Kind::Float, Some("1e-5")),
    ("sigma.samples", Kind::Int, Some("1000")),
    ("sigma.amplitude", Kind::Float, Some("0.8")),
];

/// Sections each subcommand reads. Entries in other sections are echoed
/// but draw a warning.
pub fn sections_for(command: &str) -> &'static [&'static str] {
    match command {
        "flow-pair" | "flow-metric" | "reconstruct-check" | "psi-check" => &["grid", "fiber", "flow", "run", "init"],
        "stability-scan" => &["grid", "fiber", "flow", "run", "init", "scan"],
        "gradcheck" => &["grid", "fiber", "flow", "run", "init", "check"],
        "sigma-check" => &["grid", "fiber", "flow", "run", "init", "sigma"],
        "check-identities" => &["run", "check"],
        _ => &[],
    }
}

/// Raw entries after file parsing and overrides, keyed by dotted name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn spec_of(key: &str) -> Option<(Kind, Option<&'static str>)> {
    KEYS.iter().find(|(k, _, _)| *k == key).map(|(_, kind, d)| (*kind, *d))
}

fn parse_scalar(text: &str) -> Option<Value> {
    let doc: toml::Table = format!("v = {text}").parse().ok()?;
    doc.get("v").cloned()
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::new("config_parse", e.to_string()))?;
        let mut entries = BTreeMap::new();
        flatten("", &table, &mut entries);
        let raw = RawConfig { entries };
        for key in raw.entries.keys() {
            if spec_of(key).is_none() {
                return Err(ConfigError::new("unknown_key", format!("unknown configuration key `{key}`")));
            }
        }
        Ok(raw)
    }

    /// Applies one `key=value` override. Values use TOML syntax; anything
    /// that does not parse as TOML is taken as a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::new("bad_override", format!("expected key=value, got `{assignment}`")))?;
        let key = key.trim();
        let (kind, _) = spec_of(key).ok_or_else(|| ConfigError::new("unknown_key", format!("unknown configuration key `{key}`")))?;
        let text = value.trim();
        let parsed = match parse_scalar(text) {
            Some(v) => v,
            None if kind == Kind::Str => Value::String(text.to_string()),
            None => return Err(ConfigError::new("bad_value", format!("cannot parse `{text}` for `{key}`"))),
        };
        self.entries.insert(key.to_string(), parsed);
        Ok(())
    }

    fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }
}

/// Fully resolved configuration of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub grid: Option<Grid>,
    pub fiber: Fiber,
    pub flow: FlowConfig,
    pub seed: u64,
    pub output_dir: String,
    pub jobs: usize,
    pub init_kind: InitKind,
    pub init_amplitude: f64,
    pub init_mean_moment: f64,
    pub scan_c_values: Vec<f64>,
    pub scan_flow: ScanFlow,
    pub check_sizes: Vec<usize>,
    pub check_samples: usize,
    pub check_configs: usize,
    pub check_directions: usize,
    pub check_step: f64,
    pub sigma_samples: usize,
    pub sigma_amplitude: f64,
    /// The resolved `key → value` map echoed into the summary.
    pub echo: BTreeMap<String, Json>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    /// `A = 0`, constant `u` with `μ(u) = c`; needs `d = 0`.
    Minimum,
    /// Constant-curvature connection and section with uniform perturbations.
    Random,
    /// Holomorphic section of the constant-curvature connection.
    Holomorphic,
}

struct Resolver<'a> {
    raw: &'a RawConfig,
    sections: &'static [&'static str],
    echo: BTreeMap<String, Json>,
}

fn to_json(v: &Value) -> Json {
    match v {
        Value::Integer(i) => json!(i),
        Value::Float(f) => json!(f),
        Value::String(s) => json!(s),
        Value::Boolean(b) => json!(b),
        Value::Array(a) => Json::Array(a.iter().map(to_json).collect()),
        other => json!(other.to_string()),
    }
}

impl Resolver<'_> {
    fn value(&mut self, key: &str) -> Result<Value, ConfigError> {
        let (_, default) = spec_of(key).expect("resolver asks only for declared keys");
        let v = match (self.raw.entries.get(key), default) {
            (Some(v), _) => v.clone(),
            (None, Some(d)) => parse_scalar(d).expect("defaults are valid TOML"),
            (None, None) => return Err(ConfigError::new("missing_key", format!("`{key}` is required"))),
        };
        self.echo.insert(key.to_string(), to_json(&v));
        Ok(v)
    }

    fn float(&mut self, key: &str) -> Result<f64, ConfigError> {
        match self.value(key)? {
            Value::Float(f) => Ok(f),
            Value::Integer(i) => Ok(i as f64),
            other => Err(type_error(key, "a number", &other)),
        }
    }

    fn int(&mut self, key: &str) -> Result<i64, ConfigError> {
        match self.value(key)? {
            Value::Integer(i) => Ok(i),
            other => Err(type_error(key, "an integer", &other)),
        }
    }

    fn count(&mut self, key: &str, min: i64) -> Result<usize, ConfigError> {
        let v = self.int(key)?;
        if v < min {
            return Err(ConfigError::new("bad_value", format!("`{key}` must be at least {min}, got {v}")));
        }
        Ok(v as usize)
    }

    fn string(&mut self, key: &str) -> Result<String, ConfigError> {
        match self.value(key)? {
            Value::String(s) => Ok(s),
            other => Err(type_error(key, "a string", &other)),
        }
    }

    fn list(&mut self, key: &str) -> Result<Vec<Value>, ConfigError> {
        match self.value(key)? {
            Value::Array(a) => Ok(a),
            other => Err(type_error(key, "an array", &other)),
        }
    }

    fn uses(&self, section: &str) -> bool {
        self.sections.contains(&section)
    }
}

fn type_error(key: &str, want: &str, got: &Value) -> ConfigError {
    ConfigError::new("bad_value", format!("`{key}` must be {want}, got {got}"))
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new("bad_value", format!("`{key}` must be positive and finite, got {v}")))
    }
}

/// Resolves `raw` for `command`. Keys of sections the command does not
/// read are echoed untouched and reported as warnings.
pub fn resolve(raw: &RawConfig, command: &str) -> Result<RunConfig, ConfigError> {
    let sections = sections_for(command);
    let mut warned = Vec::new();
    let mut echo = BTreeMap::new();
    for key in raw.keys() {
        let section = key.split('.').next().unwrap_or_default();
        if !sections.contains(&section) {
            if !warned.contains(&section.to_string()) {
                warned.push(section.to_string());
            }
            echo.insert(key.clone(), to_json(&raw.entries[key]));
        }
    }
    let warnings = warned.iter().map(|s| format!("section `{s}` is not used by {command}")).collect();
    let mut r = Resolver { raw, sections, echo };

    let grid = if r.uses("grid") {
        let nx = r.count("grid.nx", 1)?;
        let ny = r.count("grid.ny", 1)?;
        let a = positive("grid.a", r.float("grid.a")?)?;
        let d = r.int("grid.d")?;
        Some(build_grid(nx, ny, a, d).map_err(|e| ConfigError::new("bad_value", e.to_string()))?)
    } else {
        None
    };
    let fiber = if r.uses("fiber") {
        match r.string("fiber.kind")?.as_str() {
            "linear" => Fiber::LinearC,
            "sphere" => Fiber::Sphere,
            other => return Err(ConfigError::new("bad_value", format!("`fiber.kind` must be linear or sphere, got `{other}`"))),
        }
    } else {
        Fiber::LinearC
    };
    let mut flow = FlowConfig::default();
    if r.uses("flow") {
        flow.c = r.float("flow.c")?;
        if !flow.c.is_finite() {
            return Err(ConfigError::new("bad_value", "`flow.c` must be finite"));
        }
        flow.dt = positive("flow.dt", r.float("flow.dt")?)?;
        flow.t_end = positive("flow.t_end", r.float("flow.t_end")?)?;
        flow.scheme = match r.string("flow.scheme")?.as_str() {
            "euler" => Scheme::Euler,
            "rk4" => Scheme::Rk4,
            other => return Err(ConfigError::new("bad_value", format!("`flow.scheme` must be euler or rk4, got `{other}`"))),
        };
        flow.conv_tol = positive("flow.conv_tol", r.float("flow.conv_tol")?)?;
        flow.cfl_kappa = positive("flow.cfl_kappa", r.float("flow.cfl_kappa")?)?;
        flow.blowup_guard = positive("flow.blowup_guard", r.float("flow.blowup_guard")?)?;
    }
    let seed = r.int("run.seed")?;
    if seed < 0 {
        return Err(ConfigError::new("bad_value", format!("`run.seed` must be non-negative, got {seed}")));
    }
    flow.monitors_every = r.count("run.monitors_every", 1)?;
    flow.snapshot_every = r.count("run.snapshot_every", 0)?;
    let output_dir = r.string("run.output_dir")?;
    let jobs = r.count("run.jobs", 0)?;

    let (mut init_kind, mut init_amplitude, mut init_mean_moment) = (InitKind::Random, 0.3, 0.5);
    if r.uses("init") {
        init_kind = match r.string("init.kind")?.as_str() {
            "minimum" => InitKind::Minimum,
            "random" => InitKind::Random,
            "holomorphic" => InitKind::Holomorphic,
            other => {
                return Err(ConfigError::new("bad_value", format!("`init.kind` must be minimum, random or holomorphic, got `{other}`")))
            }
        };
        init_amplitude = r.float("init.amplitude")?;
        if !(init_amplitude >= 0.0) || !init_amplitude.is_finite() {
            return Err(ConfigError::new("bad_value", format!("`init.amplitude` must be non-negative, got {init_amplitude}")));
        }
        init_mean_moment = positive("init.mean_moment", r.float("init.mean_moment")?)?;
    }

    let (mut scan_c_values, mut scan_flow) = (Vec::new(), ScanFlow::Metric);
    if r.uses("scan") {
        for v in r.list("scan.c_values")? {
            match v {
                Value::Float(f) if f.is_finite() => scan_c_values.push(f),
                Value::Integer(i) => scan_c_values.push(i as f64),
                other => return Err(type_error("scan.c_values", "a list of finite numbers", &other)),
            }
        }
        if scan_c_values.is_empty() {
            return Err(ConfigError::new("bad_value", "`scan.c_values` must not be empty"));
        }
        scan_flow = match r.string("scan.flow")?.as_str() {
            "metric" => ScanFlow::Metric,
            "pair" => ScanFlow::Pair,
            other => return Err(ConfigError::new("bad_value", format!("`scan.flow` must be metric or pair, got `{other}`"))),
        };
    }

    let (mut check_sizes, mut check_samples, mut check_configs, mut check_directions, mut check_step) =
        (Vec::new(), 0, 0, 0, 0.0);
    if r.uses("check") {
        for v in r.list("check.sizes")? {
            match v {
                Value::Integer(i) if i >= 4 => check_sizes.push(i as usize),
                other => return Err(type_error("check.sizes", "a list of integers ≥ 4", &other)),
            }
        }
        if check_sizes.len() < 2 {
            return Err(ConfigError::new("bad_value", "`check.sizes` needs at least two grids"));
        }
        check_samples = r.count("check.samples", 1)?;
        check_configs = r.count("check.configs", 1)?;
        check_directions = r.count("check.directions", 1)?;
        check_step = positive("check.step", r.float("check.step")?)?;
    }
    let (mut sigma_samples, mut sigma_amplitude) = (0, 0.0);
    if r.uses("sigma") {
        sigma_samples = r.count("sigma.samples", 1)?;
        sigma_amplitude = r.float("sigma.amplitude")?;
        if !sigma_amplitude.is_finite() {
            return Err(ConfigError::new("bad_value", "`sigma.amplitude` must be finite"));
        }
    }

    Ok(RunConfig {
        grid,
        fiber,
        flow,
        seed: seed as u64,
        output_dir,
        jobs,
        init_kind,
        init_amplitude,
        init_mean_moment,
        scan_c_values,
        scan_flow,
        check_sizes,
        check_samples,
        check_configs,
        check_directions,
        check_step,
        sigma_samples,
        sigma_amplitude,
        echo: r.echo,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "[grid]\nnx = 8\nny = 8\na = 0.5\n";

    #[test]
    fn defaults_fill_and_echo() {
        let raw = RawConfig::from_toml(BASE).unwrap();
        let cfg = resolve(&raw, "flow-pair").unwrap();
        assert_eq!(cfg.flow.dt, 1e-3);
        assert_eq!(cfg.echo["grid.d"], json!(0));
        assert_eq!(cfg.echo["flow.scheme"], json!("euler"));
        assert!(cfg.warnings.is_empty());
    }

    #[test]
    fn dotted_and_table_forms_agree() {
        let a = RawConfig::from_toml(BASE).unwrap();
        let b = RawConfig::from_toml("grid.nx = 8\ngrid.ny = 8\ngrid.a = 0.5\n").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert_eq!(RawConfig::from_toml("[grid]\nnz = 3\n").unwrap_err().reason, "unknown_key");
        assert_eq!(RawConfig::from_toml("[extra]\nx = 1\n").unwrap_err().reason, "unknown_key");
        let mut raw = RawConfig::from_toml(BASE).unwrap();
        assert_eq!(raw.set("flow.cc=1").unwrap_err().reason, "unknown_key");
    }

    #[test]
    fn overrides_parse_as_toml_or_bare_strings() {
        let mut raw = RawConfig::from_toml(BASE).unwrap();
        raw.set("flow.scheme=rk4").unwrap();
        raw.set("flow.c = 0.25").unwrap();
        raw.set("scan.c_values=[0.2, 1]").unwrap();
        let cfg = resolve(&raw, "stability-scan").unwrap();
        assert_eq!(cfg.flow.scheme, Scheme::Rk4);
        assert_eq!(cfg.flow.c, 0.25);
        assert_eq!(cfg.scan_c_values, vec![0.2, 1.0]);
        assert_eq!(raw.set("flow.dt=fast").unwrap_err().reason, "bad_value");
    }

    #[test]
    fn unused_sections_warn() {
        let mut raw = RawConfig::from_toml(BASE).unwrap();
        raw.set("scan.c_values=[1.0]").unwrap();
        let cfg = resolve(&raw, "flow-pair").unwrap();
        assert_eq!(cfg.warnings.len(), 1);
        assert_eq!(cfg.echo["scan.c_values"], json!([1.0]));
    }

    #[test]
    fn required_and_invalid_values() {
        let raw = RawConfig::from_toml("[grid]\nnx = 8\nny = 8\n").unwrap();
        assert_eq!(resolve(&raw, "flow-pair").unwrap_err().reason, "missing_key");
        let raw = RawConfig::from_toml(BASE).unwrap();
        assert_eq!(resolve(&raw, "stability-scan").unwrap_err().reason, "missing_key");
        let mut raw = RawConfig::from_toml(BASE).unwrap();
        raw.set("flow.dt=-1").unwrap();
        assert_eq!(resolve(&raw, "flow-pair").unwrap_err().reason, "bad_value");
        let raw = RawConfig::from_toml("[grid]\nnx = 2\nny = 8\na = 0.5\n").unwrap();
        assert_eq!(resolve(&raw, "flow-pair").unwrap_err().reason, "bad_value");
        let raw = RawConfig::from_toml("[grid]\nnx = 8.5\nny = 8\na = 0.5\n").unwrap();
        assert_eq!(resolve(&raw, "flow-pair").unwrap_err().reason, "bad_value");
    }

    #[test]
    fn check_identities_needs_no_grid() {
        let cfg = resolve(&RawConfig::default(), "check-identities").unwrap();
        assert!(cfg.grid.is_none());
        assert_eq!(cfg.check_sizes, vec![8, 16, 32, 64]);
    }
}
