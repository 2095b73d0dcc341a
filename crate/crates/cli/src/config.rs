//! Flat `key = value` run configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Every key
//! must be known and must apply to the selected mode and scenario, so a typo
//! is an error rather than a silently ignored setting. Matrices and tableaus
//! are written inline as JSON, or as `@path` to a JSON file relative to the
//! config file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lindkraus::scenarios::{build_amplitude_damping, default_stiff_hamiltonian, STIFF_GAMMA};
use lindkraus::{
    ButcherTableau, ComplexMatrix, Complex64, EpsilonPolicy, FlowMethod, Integrator, JcParams,
    LindbladModel, LowRankFactor, MethodSpec, Observable, Scenario,
};
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Converge,
    KrausVerify,
    ChoiProbe,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Simulate => "simulate",
            Mode::Converge => "converge",
            Mode::KrausVerify => "kraus-verify",
            Mode::ChoiProbe => "choi-probe",
        })
    }
}

impl FromStr for Mode {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim() {
            "simulate" => Ok(Mode::Simulate),
            "converge" => Ok(Mode::Converge),
            "kraus-verify" => Ok(Mode::KrausVerify),
            "choi-probe" => Ok(Mode::ChoiProbe),
            other => Err(config_error(format!(
                "unknown mode '{other}' (expected simulate, converge, kraus-verify or choi-probe)"
            ))),
        }
    }
}

/// Which model a run uses.
#[derive(Debug, Clone)]
pub enum ScenarioSpec {
    Jc(JcParams),
    Stiff { gamma: f64, hamiltonian: ComplexMatrix },
    Damping { gamma: f64 },
    Custom { model: LindbladModel, initial: LowRankFactor },
}

impl ScenarioSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioSpec::Jc(_) => "jc",
            ScenarioSpec::Stiff { .. } => "stiff",
            ScenarioSpec::Damping { .. } => "damping",
            ScenarioSpec::Custom { .. } => "custom",
        }
    }

    /// The scenario with its default observable, run to `t_final`.
    pub fn build(&self, t_final: f64) -> CliResult<Scenario> {
        Ok(match self {
            ScenarioSpec::Jc(p) => Scenario::jaynes_cummings(p, t_final)?,
            ScenarioSpec::Stiff { gamma, hamiltonian } => Scenario::stiff(*gamma, hamiltonian, t_final)?,
            ScenarioSpec::Damping { gamma } => Scenario {
                name: "damping".into(),
                model: build_amplitude_damping(*gamma)?,
                initial: LowRankFactor::pure(&[Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)])?,
                observable: Observable::Excited { m: 1 },
                t_final,
            },
            ScenarioSpec::Custom { model, initial } => Scenario {
                name: "custom".into(),
                model: model.clone(),
                initial: initial.clone(),
                observable: Observable::Population(model.dim() - 1),
                t_final,
            },
        })
    }
}

/// Where converge mode takes its reference solution from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    /// Dense IF run with the exact flow at this many steps.
    SelfReference(usize),
    /// Closed form, available for the damping scenario only.
    Analytic,
}

/// Validated configuration. Time fields are resolved: `steps` and `dt` are
/// set for simulate, `grid` for converge, and `dt` for the probe modes.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub scenario: ScenarioSpec,
    /// Overrides the scenario observable in the `P_e` column.
    pub observable: Option<Observable>,
    /// Extra CSV columns after `P_e`.
    pub extra_observables: Vec<Observable>,
    pub integrator: Integrator,
    pub tableau: ButcherTableau,
    pub flow: FlowMethod,
    pub t_final: Option<f64>,
    pub steps: Option<usize>,
    pub dt: Option<f64>,
    pub epsilon: EpsilonPolicy,
    pub rmax: Option<usize>,
    pub pre_truncate: Option<f64>,
    pub output: Option<PathBuf>,
    pub sample_stride: usize,
    pub methods: Vec<MethodSpec>,
    pub grid: Vec<usize>,
    pub reference: ReferenceKind,
}

pub(crate) fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

const DEFAULT_EPSILON: f64 = 1e-9;

/// Keys shared by every scenario, with the modes that accept them.
const GENERAL_KEYS: &[(&str, &[Mode])] = {
    use Mode::*;
    &[
        ("mode", &[Simulate, Converge, KrausVerify, ChoiProbe]),
        ("scenario", &[Simulate, Converge, KrausVerify, ChoiProbe]),
        ("tableau", &[Simulate, Converge, KrausVerify, ChoiProbe]),
        ("t_final", &[Simulate, Converge, KrausVerify, ChoiProbe]),
        ("dt", &[Simulate, KrausVerify, ChoiProbe]),
        ("steps", &[Simulate, KrausVerify, ChoiProbe]),
        ("output", &[Simulate, Converge, KrausVerify, ChoiProbe]),
        ("integrator", &[Simulate, ChoiProbe]),
        ("flow", &[Simulate, KrausVerify, ChoiProbe]),
        ("epsilon", &[Simulate, Converge]),
        ("epsilon_policy", &[Simulate, Converge]),
        ("rmax", &[Simulate, Converge]),
        ("pre_truncate", &[Simulate, Converge]),
        ("sample_stride", &[Simulate]),
        ("observable", &[Simulate, Converge]),
        ("observables", &[Simulate]),
        ("methods", &[Converge]),
        ("grid", &[Converge]),
        ("reference", &[Converge]),
        ("reference_steps", &[Converge]),
    ]
};

fn scenario_keys(scenario: &str) -> &'static [&'static str] {
    match scenario {
        "jc" => &["m", "kappa", "lambda", "v"],
        "stiff" => &["gamma", "hamiltonian"],
        "damping" => &["gamma"],
        "custom" => &["hamiltonian", "jump_ops", "jump_rates", "initial_state"],
        _ => &[],
    }
}

/// Raw key/value pairs in file order, with their line numbers.
struct Entries {
    values: BTreeMap<String, (usize, String)>,
    base_dir: PathBuf,
}

impl Entries {
    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str())
    }

    fn parse<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| config_error(format!("line {line}: malformed value '{v}' for '{key}'"))),
        }
    }

    fn number(&self, key: &str) -> CliResult<Option<f64>> {
        let x = self.parse::<f64>(key)?;
        match x {
            Some(v) if !v.is_finite() => Err(config_error(format!("'{key}' must be finite, got {v}"))),
            other => Ok(other),
        }
    }

    /// Inline JSON or `@path` relative to the config file.
    fn json(&self, key: &str) -> CliResult<Option<Value>> {
        let Some((line, raw)) = self.values.get(key) else {
            return Ok(None);
        };
        let text = match raw.strip_prefix('@') {
            Some(path) => {
                let path = self.base_dir.join(path.trim());
                std::fs::read_to_string(&path).map_err(|e| {
                    config_error(format!("line {line}: cannot read '{}': {e}", path.display()))
                })?
            }
            None => raw.clone(),
        };
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| config_error(format!("line {line}: invalid JSON for '{key}': {e}")))
    }
}

fn split_lines(text: &str, base_dir: &Path) -> CliResult<Entries> {
    let mut values = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_error(format!("line {line_no}: expected 'key = value', got '{line}'")))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(config_error(format!("line {line_no}: empty key or value")));
        }
        if let Some((first, _)) = values.insert(key.clone(), (line_no, value)) {
            return Err(config_error(format!("line {line_no}: '{key}' already set on line {first}")));
        }
    }
    Ok(Entries {
        values,
        base_dir: base_dir.to_path_buf(),
    })
}

/// Parses and validates a config for `mode`. `base_dir` resolves `@path`
/// matrix references.
pub fn parse_config(text: &str, mode: Mode, base_dir: &Path) -> CliResult<RunConfig> {
    let e = split_lines(text, base_dir)?;
    if let Some(m) = e.parse::<Mode>("mode")? {
        if m != mode {
            return Err(config_error(format!("config is for mode {m}, but {mode} was requested")));
        }
    }
    let scenario_name = e
        .get("scenario")
        .ok_or_else(|| config_error("missing required key 'scenario'"))?
        .to_string();
    if !["jc", "stiff", "damping", "custom"].contains(&scenario_name.as_str()) {
        return Err(config_error(format!(
            "unknown scenario '{scenario_name}' (expected jc, stiff, damping or custom)"
        )));
    }
    let specific = scenario_keys(&scenario_name);
    for (key, (line, _)) in &e.values {
        match GENERAL_KEYS.iter().find(|(k, _)| k == key) {
            Some((_, modes)) if !modes.contains(&mode) => {
                return Err(config_error(format!("line {line}: key '{key}' does not apply to mode {mode}")))
            }
            Some(_) => {}
            None if specific.contains(&key.as_str()) => {}
            None if ["jc", "stiff", "damping", "custom"].iter().any(|s| scenario_keys(s).contains(&key.as_str())) => {
                return Err(config_error(format!(
                    "line {line}: key '{key}' does not apply to scenario {scenario_name}"
                )))
            }
            None => return Err(config_error(format!("line {line}: unknown key '{key}'"))),
        }
    }

    let scenario = parse_scenario(&e, &scenario_name)?;
    let tableau = match e.get("tableau") {
        None => ButcherTableau::rk4(),
        Some(t) if t.starts_with('{') || t.starts_with('@') => parse_tableau(&e.json("tableau")?.expect("present"))?,
        Some(name) => ButcherTableau::builtin(name).ok_or_else(|| {
            config_error(format!("unknown tableau '{name}' (expected euler, heun, ssprk3, rk4 or inline JSON)"))
        })?,
    };
    let integrator = e.parse::<Integrator>("integrator")?.unwrap_or(Integrator::IfDense);
    let flow = e.parse::<FlowMethod>("flow")?.unwrap_or(FlowMethod::Exact);
    let epsilon = parse_epsilon(&e)?;
    let rmax = e.parse::<usize>("rmax")?;
    if rmax == Some(0) {
        return Err(config_error("rmax must be at least 1"));
    }
    let pre_truncate = e.number("pre_truncate")?;
    if pre_truncate.is_some_and(|p| p < 0.0) {
        return Err(config_error("pre_truncate must be non-negative"));
    }
    let sample_stride = e.parse::<usize>("sample_stride")?.unwrap_or(1);
    if sample_stride == 0 {
        return Err(config_error("sample_stride must be at least 1"));
    }
    let observable = e.get("observable").map(|s| parse_observable(s, &scenario)).transpose()?;
    let extra_observables = match e.get("observables") {
        None => Vec::new(),
        Some(list) => list
            .split(',')
            .map(|s| parse_observable(s, &scenario))
            .collect::<CliResult<_>>()?,
    };

    let t_final = match e.get("t_final") {
        None => None,
        Some(raw) => Some(parse_time(raw, &scenario)?),
    };
    let mut cfg = RunConfig {
        mode,
        scenario,
        observable,
        extra_observables,
        integrator,
        tableau,
        flow,
        t_final,
        steps: None,
        dt: None,
        epsilon,
        rmax,
        pre_truncate,
        output: e.get("output").map(PathBuf::from),
        sample_stride,
        methods: Vec::new(),
        grid: Vec::new(),
        reference: ReferenceKind::Analytic,
    };
    resolve_time(&e, &mut cfg)?;
    if mode == Mode::Converge {
        resolve_converge(&e, &mut cfg)?;
    }
    Ok(cfg)
}

fn parse_epsilon(e: &Entries) -> CliResult<EpsilonPolicy> {
    let fixed = e.number("epsilon")?;
    let policy = match e.get("epsilon_policy").map(str::trim) {
        None | Some("fixed") => EpsilonPolicy::Fixed(fixed.unwrap_or(DEFAULT_EPSILON)),
        Some(p) => {
            if fixed.is_some() {
                return Err(config_error(format!(
                    "'epsilon' conflicts with epsilon_policy = {p}; give one of them"
                )));
            }
            p.parse::<EpsilonPolicy>()?
        }
    };
    if let EpsilonPolicy::Fixed(x) = policy {
        if x < 0.0 {
            return Err(config_error(format!("epsilon must be non-negative, got {x}")));
        }
    }
    Ok(policy)
}

fn parse_scenario(e: &Entries, name: &str) -> CliResult<ScenarioSpec> {
    Ok(match name {
        "jc" => {
            let m = e.parse::<usize>("m")?.unwrap_or(30);
            let mut p = JcParams::new(m, e.number("kappa")?.unwrap_or(1e-3));
            if let Some(l) = e.number("lambda")? {
                p.lambda = l;
            }
            if let Some(v) = e.number("v")? {
                p.v = v;
            }
            p.validate()?;
            ScenarioSpec::Jc(p)
        }
        "stiff" => ScenarioSpec::Stiff {
            gamma: positive(e.number("gamma")?.unwrap_or(STIFF_GAMMA), "gamma")?,
            hamiltonian: match e.json("hamiltonian")? {
                Some(v) => json_matrix(&v, "hamiltonian")?,
                None => default_stiff_hamiltonian(),
            },
        },
        "damping" => ScenarioSpec::Damping {
            gamma: positive(e.number("gamma")?.unwrap_or(1.0), "gamma")?,
        },
        _ => {
            let h = json_matrix(
                &e.json("hamiltonian")?.ok_or_else(|| config_error("custom scenario needs 'hamiltonian'"))?,
                "hamiltonian",
            )?;
            let ops = match e.json("jump_ops")? {
                None => Vec::new(),
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|v| json_matrix(v, "jump_ops"))
                    .collect::<CliResult<Vec<_>>>()?,
                Some(_) => return Err(config_error("'jump_ops' must be a JSON array of matrices")),
            };
            let rates: Vec<f64> = match e.json("jump_rates")? {
                None => vec![1.0; ops.len()],
                Some(v) => serde_json::from_value(v)
                    .map_err(|_| config_error("'jump_rates' must be a JSON array of numbers"))?,
            };
            if rates.len() != ops.len() {
                return Err(config_error(format!(
                    "{} jump operators but {} rates",
                    ops.len(),
                    rates.len()
                )));
            }
            let model = LindbladModel::new(h, rates.into_iter().zip(ops).collect())?;
            let psi = match e.json("initial_state")? {
                Some(v) => json_vector(&v, "initial_state")?,
                None => {
                    let mut psi = vec![Complex64::new(0.0, 0.0); model.dim()];
                    psi[0] = Complex64::new(1.0, 0.0);
                    psi
                }
            };
            if psi.len() != model.dim() {
                return Err(config_error(format!(
                    "initial_state has {} entries, model dimension is {}",
                    psi.len(),
                    model.dim()
                )));
            }
            let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(config_error("initial_state must be nonzero"));
            }
            let psi: Vec<Complex64> = psi.iter().map(|z| z / norm).collect();
            ScenarioSpec::Custom {
                model,
                initial: LowRankFactor::pure(&psi)?,
            }
        }
    })
}

fn positive(x: f64, key: &str) -> CliResult<f64> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(config_error(format!("'{key}' must be positive, got {x}")))
    }
}

/// `pop:k` (0-based diagonal entry) or `excited` (jc and damping only).
fn parse_observable(text: &str, scenario: &ScenarioSpec) -> CliResult<Observable> {
    let text = text.trim();
    if text == "excited" {
        return match scenario {
            ScenarioSpec::Jc(p) => Ok(Observable::Excited { m: p.m }),
            ScenarioSpec::Damping { .. } => Ok(Observable::Excited { m: 1 }),
            _ => Err(config_error("observable 'excited' needs the jc or damping scenario")),
        };
    }
    text.strip_prefix("pop:")
        .and_then(|k| k.trim().parse::<usize>().ok())
        .map(Observable::Population)
        .ok_or_else(|| config_error(format!("unknown observable '{text}' (expected pop:<k> or excited)")))
}

/// Seconds, or `<x>tr` in units of the revival time for jc.
fn parse_time(raw: &str, scenario: &ScenarioSpec) -> CliResult<f64> {
    let raw = raw.trim();
    let (number, unit) = match raw.strip_suffix("tr") {
        Some(x) => (x.trim(), true),
        None => (raw, false),
    };
    let x: f64 = number
        .parse()
        .map_err(|_| config_error(format!("malformed t_final '{raw}'")))?;
    let t = if unit {
        match scenario {
            ScenarioSpec::Jc(p) => x * p.revival_time(),
            _ => return Err(config_error("t_final in units of tr needs the jc scenario")),
        }
    } else {
        x
    };
    if !(t > 0.0 && t.is_finite()) {
        return Err(config_error(format!("t_final must be positive, got {raw}")));
    }
    Ok(t)
}

fn resolve_time(e: &Entries, cfg: &mut RunConfig) -> CliResult<()> {
    let dt = e.number("dt")?;
    let steps = e.parse::<usize>("steps")?;
    if dt.is_some() && steps.is_some() {
        return Err(config_error("conflicting time grid: give either 'dt' or 'steps', not both"));
    }
    if steps == Some(0) {
        return Err(config_error("steps must be positive"));
    }
    if let Some(dt) = dt {
        positive(dt, "dt")?;
    }
    match cfg.mode {
        Mode::Simulate => {
            let t = cfg
                .t_final
                .ok_or_else(|| config_error("simulate needs 't_final' with either 'dt' or 'steps'"))?;
            let (n, h) = match (dt, steps) {
                (None, Some(n)) => (n, t / n as f64),
                (Some(h), None) => {
                    let n = (t / h).round();
                    if n < 1.0 || (n * h - t).abs() > 1e-9 * t {
                        return Err(config_error(format!(
                            "dt = {h} does not divide t_final = {t} into whole steps"
                        )));
                    }
                    (n as usize, t / n)
                }
                _ => return Err(config_error("simulate needs either 'dt' or 'steps'")),
            };
            cfg.steps = Some(n);
            cfg.dt = Some(h);
        }
        Mode::KrausVerify | Mode::ChoiProbe => {
            cfg.dt = Some(match (dt, steps, cfg.t_final) {
                (Some(h), None, None) => h,
                (None, Some(n), Some(t)) => t / n as f64,
                (Some(_), None, Some(_)) => {
                    return Err(config_error("conflicting time grid: give 'dt' alone or 'steps' with 't_final'"))
                }
                _ => return Err(config_error(format!("{} needs 'dt' (or 'steps' with 't_final')", cfg.mode))),
            });
        }
        Mode::Converge => {
            if cfg.t_final.is_none() {
                return Err(config_error("converge needs 't_final'"));
            }
        }
    }
    Ok(())
}

fn resolve_converge(e: &Entries, cfg: &mut RunConfig) -> CliResult<()> {
    let methods = e.get("methods").ok_or_else(|| config_error("converge needs 'methods'"))?;
    cfg.methods = methods
        .split(',')
        .map(|m| {
            let mut spec = MethodSpec::parse(m, cfg.epsilon)?;
            if spec.integrator == Integrator::IfLowRank {
                spec.rank_max = cfg.rmax;
                spec.pre_truncate = cfg.pre_truncate;
            }
            Ok(spec)
        })
        .collect::<CliResult<_>>()?;
    let mut labels: Vec<&str> = cfg.methods.iter().map(|m| m.label.as_str()).collect();
    labels.sort_unstable();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(config_error("duplicate entry in 'methods'"));
    }
    let grid = e.get("grid").ok_or_else(|| config_error("converge needs 'grid' (comma-separated step counts)"))?;
    cfg.grid = grid
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| config_error(format!("malformed step count '{s}' in grid"))))
        .collect::<CliResult<_>>()?;
    if cfg.grid.is_empty() || cfg.grid[0] == 0 || cfg.grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config_error("grid must be positive and strictly increasing"));
    }
    let finest = *cfg.grid.last().expect("non-empty grid");
    let ref_steps = e.parse::<usize>("reference_steps")?;
    let analytic = matches!(cfg.scenario, ScenarioSpec::Damping { .. });
    cfg.reference = match e.get("reference").unwrap_or(if analytic { "analytic" } else { "self" }) {
        "self" => ReferenceKind::SelfReference(ref_steps.unwrap_or(4 * finest)),
        "analytic" if analytic => {
            if ref_steps.is_some() {
                return Err(config_error("'reference_steps' needs reference = self"));
            }
            ReferenceKind::Analytic
        }
        "analytic" => return Err(config_error("an analytic reference exists only for the damping scenario")),
        other => return Err(config_error(format!("unknown reference '{other}' (expected self or analytic)"))),
    };
    Ok(())
}

fn json_complex(v: &Value, key: &str) -> CliResult<Complex64> {
    let bad = || config_error(format!("'{key}': entries must be numbers or [re, im] pairs"));
    match v {
        Value::Number(x) => Ok(Complex64::new(x.as_f64().ok_or_else(bad)?, 0.0)),
        Value::Array(pair) if pair.len() == 2 => {
            let re = pair[0].as_f64().ok_or_else(bad)?;
            let im = pair[1].as_f64().ok_or_else(bad)?;
            Ok(Complex64::new(re, im))
        }
        _ => Err(bad()),
    }
}

fn json_vector(v: &Value, key: &str) -> CliResult<Vec<Complex64>> {
    match v {
        Value::Array(items) if !items.is_empty() => items.iter().map(|x| json_complex(x, key)).collect(),
        _ => Err(config_error(format!("'{key}' must be a non-empty JSON array"))),
    }
}

/// A matrix as an array of rows.
fn json_matrix(v: &Value, key: &str) -> CliResult<ComplexMatrix> {
    let Value::Array(rows) = v else {
        return Err(config_error(format!("'{key}' must be a JSON array of rows")));
    };
    let rows = rows.iter().map(|r| json_vector(r, key)).collect::<CliResult<Vec<_>>>()?;
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(config_error(format!("'{key}' must be a non-empty rectangular matrix")));
    }
    Ok(ComplexMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// `{"name": .., "a": [[..]], "b": [..], "c": [..], "order": k}`. `c`
/// defaults to the row sums of `A`, `name` to "custom" and `order` to 1.
fn parse_tableau(v: &Value) -> CliResult<ButcherTableau> {
    let field = |k: &str| v.get(k).cloned();
    let a: Vec<Vec<f64>> = field("a")
        .and_then(|x| serde_json::from_value(x).ok())
        .ok_or_else(|| config_error("inline tableau needs 'a' as an array of rows of numbers"))?;
    let b: Vec<f64> = field("b")
        .and_then(|x| serde_json::from_value(x).ok())
        .ok_or_else(|| config_error("inline tableau needs 'b' as an array of numbers"))?;
    let c: Vec<f64> = match field("c") {
        Some(x) => serde_json::from_value(x).map_err(|_| config_error("tableau 'c' must be an array of numbers"))?,
        None => a.iter().map(|row| row.iter().sum()).collect(),
    };
    let order = match field("order") {
        Some(x) => x
            .as_u64()
            .ok_or_else(|| config_error("tableau 'order' must be a positive integer"))? as usize,
        None => 1,
    };
    let name = field("name").and_then(|x| x.as_str().map(String::from)).unwrap_or_else(|| "custom".into());
    Ok(ButcherTableau::new(name, a, b, c, order)?)
}
