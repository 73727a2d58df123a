//! Experiment configuration files.
//!
//! A config is a TOML document:
//!
//! ```toml
//! name = "lipschitz-risk"   # optional, names the run directory
//! seed = 2024
//! output_dir = "runs"       # optional, overrides the output root
//!
//! [experiment]
//! kind = "minimax-rate"
//! t_list = [40, 80, 160, 320]
//! # ... kind-specific fields
//! ```
//!
//! Kinds and their fields are listed in the README. Unknown keys are
//! rejected; every problem is reported with its dotted field path.

use std::path::{Path, PathBuf};

use learning_efficiency::finite_state::FiniteExperiment;
use learning_efficiency::grid_density::GridDensity;
use learning_efficiency::metric_entropy::Metric;
use learning_efficiency::{EpsilonSchedule, Error as CoreError, HolderSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Issue, Result, ValidationReport};

pub const KINDS: [&str; 8] = [
    "divergence-suite",
    "entropy",
    "finite-rate",
    "lemma1",
    "minimax-rate",
    "allocate",
    "explore",
    "demand",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub name: Option<String>,
    pub seed: u64,
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    DivergenceSuite(DivergenceSuite),
    Entropy(Entropy),
    FiniteRate(FiniteRate),
    Lemma1(Lemma1),
    MinimaxRate(RateParams),
    Allocate(RateParams),
    Explore(RateParams),
    Demand(Demand),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::DivergenceSuite(_) => "divergence-suite",
            Experiment::Entropy(_) => "entropy",
            Experiment::FiniteRate(_) => "finite-rate",
            Experiment::Lemma1(_) => "lemma1",
            Experiment::MinimaxRate(_) => "minimax-rate",
            Experiment::Allocate(_) => "allocate",
            Experiment::Explore(_) => "explore",
            Experiment::Demand(_) => "demand",
        }
    }
}

fn default_m() -> usize {
    64
}

fn default_pairs() -> usize {
    500
}

fn default_orders() -> Vec<f64> {
    vec![0.5, 2.0]
}

fn default_metric() -> Metric {
    Metric::L2
}

fn default_tolerance() -> f64 {
    0.15
}

fn default_bound() -> f64 {
    2.0
}

fn default_schedule() -> EpsilonSchedule {
    EpsilonSchedule::Optimal
}

fn default_entropy_eps() -> Vec<f64> {
    vec![0.3, 0.2, 0.15, 0.1, 0.07, 0.05]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivergenceSuite {
    pub spec: HolderSpec,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_orders")]
    pub renyi_orders: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entropy {
    pub spec: HolderSpec,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    pub epsilons: Vec<f64>,
    pub sample_size: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub exponent_band: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum StateShape {
    Uniform,
    Step { high: f64, low: f64 },
    Values { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteRate {
    pub states: Vec<StateShape>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(rename = "M", default = "default_bound")]
    pub bound: f64,
    pub t_list: Vec<usize>,
    pub reps: usize,
    /// Largest accepted relative error of the fitted exponent.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl FiniteRate {
    pub fn densities(&self) -> learning_efficiency::Result<Vec<GridDensity>> {
        self.states
            .iter()
            .map(|s| match s {
                StateShape::Uniform => GridDensity::uniform(self.m, self.bound),
                StateShape::Step { high, low } => GridDensity::step(self.m, self.bound, *high, *low),
                StateShape::Values { values } => GridDensity::new(values.clone(), self.bound),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lemma1 {
    pub spec: HolderSpec,
    pub epsilons: Vec<f64>,
    pub t_list: Vec<usize>,
    pub reps: usize,
    pub cloud_size: usize,
    #[serde(default = "default_m")]
    pub m: usize,
}

/// Shared by `minimax-rate`, `allocate` (needs `beta`) and `explore`
/// (needs `d`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateParams {
    pub spec: HolderSpec,
    pub t_list: Vec<usize>,
    #[serde(default = "default_schedule")]
    pub schedule: EpsilonSchedule,
    pub cloud_size: usize,
    pub pool_size: usize,
    pub reps: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_entropy_eps")]
    pub entropy_eps: Vec<f64>,
    #[serde(default)]
    pub slope_band: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demand {
    pub r: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub price: f64,
    /// Extra prices for a demand schedule.
    #[serde(default)]
    pub prices: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    name: Option<String>,
    seed: u64,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    experiment: toml::Table,
}

impl ExperimentConfig {
    /// SHA-256 of the canonical JSON form: defaults filled in, object keys
    /// sorted, output directory excluded.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = canonicalize(value).to_string();
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Run directory name: config name (or kind) plus a digest prefix.
    pub fn run_id(&self) -> String {
        let stem = self.name.as_deref().unwrap_or(self.experiment.kind());
        let stem: String = stem
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        format!("{stem}-{}", &self.digest()[..12])
    }
}

fn canonicalize(value: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, canonicalize(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        other => other,
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn join(prefix: &str, path: &str) -> String {
    match (prefix.is_empty(), path.is_empty() || path == ".") {
        (_, true) => prefix.to_string(),
        (true, false) => path.to_string(),
        (false, false) => format!("{prefix}.{path}"),
    }
}

fn take<T: DeserializeOwned>(value: toml::Value, prefix: &str, issues: &mut Vec<Issue>) -> Option<T> {
    match serde_path_to_error::deserialize::<_, T>(value) {
        Ok(v) => Some(v),
        Err(e) => {
            let path = join(prefix, &e.path().to_string());
            issues.push(Issue::new(path, e.into_inner().to_string()));
            None
        }
    }
}

/// Parses and schema-checks a config held in memory. `source_name` labels
/// parse errors.
pub fn parse_str(text: &str, source_name: &str) -> Result<ExperimentConfig> {
    match check_str(text, source_name)? {
        (Some(config), report) if report.is_empty() => Ok(config),
        (_, report) => Err(HarnessError::Validation { report }),
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    let mut config = parse_str(&text, &path.display().to_string())?;
    if let Some(dir) = &config.output_dir {
        if dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            config.output_dir = Some(base.join(dir));
        }
    }
    Ok(config)
}

/// Full schema check of a config file without running it. Syntax errors are
/// returned as [`HarnessError::Parse`]; schema problems fill the report.
pub fn validate_file(path: &Path) -> Result<ValidationReport> {
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    Ok(check_str(&text, &path.display().to_string())?.1)
}

fn check_str(text: &str, source_name: &str) -> Result<(Option<ExperimentConfig>, ValidationReport)> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        HarnessError::Parse {
            source_name: source_name.to_string(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let mut issues = Vec::new();
    let config = check_table(table, &mut issues);
    Ok((config, ValidationReport { issues }))
}

fn check_table(table: toml::Table, issues: &mut Vec<Issue>) -> Option<ExperimentConfig> {
    let raw: RawConfig = take(toml::Value::Table(table), "", issues)?;
    let mut body = raw.experiment;
    let kind = match body.remove("kind") {
        Some(toml::Value::String(s)) => s,
        Some(other) => {
            issues.push(Issue::new("experiment.kind", format!("expected a string, got {}", other.type_str())));
            return None;
        }
        None => {
            issues.push(Issue::new("experiment", "missing field `kind`"));
            return None;
        }
    };
    let body = toml::Value::Table(body);
    let p = "experiment";
    let experiment = match kind.as_str() {
        "divergence-suite" => Experiment::DivergenceSuite(take(body, p, issues)?),
        "entropy" => Experiment::Entropy(take(body, p, issues)?),
        "finite-rate" => Experiment::FiniteRate(take(body, p, issues)?),
        "lemma1" => Experiment::Lemma1(take(body, p, issues)?),
        "minimax-rate" => Experiment::MinimaxRate(take(body, p, issues)?),
        "allocate" => Experiment::Allocate(take(body, p, issues)?),
        "explore" => Experiment::Explore(take(body, p, issues)?),
        "demand" => Experiment::Demand(take(body, p, issues)?),
        other => {
            issues.push(Issue::new(
                "experiment.kind",
                format!("unknown kind {other:?}; expected one of {}", KINDS.join(", ")),
            ));
            return None;
        }
    };
    check_experiment(&experiment, issues);
    Some(ExperimentConfig {
        name: raw.name,
        seed: raw.seed,
        output_dir: raw.output_dir,
        experiment,
    })
}

fn check_spec(spec: &HolderSpec, issues: &mut Vec<Issue>) {
    if let Err(e) = spec.validate() {
        let path = match &e {
            CoreError::InvalidParameter { name, .. } => format!("experiment.spec.{name}"),
            _ => "experiment.spec".to_string(),
        };
        issues.push(Issue::new(path, e.to_string()));
    }
}

fn check_m(m: usize, issues: &mut Vec<Issue>) {
    if m < 8 {
        issues.push(Issue::new("experiment.m", format!("need at least 8 cells, got {m}")));
    }
}

fn check_t_list(t_list: &[usize], issues: &mut Vec<Issue>) {
    if t_list.is_empty() {
        issues.push(Issue::new("experiment.t_list", "must be nonempty"));
    } else if t_list[0] == 0 || t_list.windows(2).any(|w| w[1] <= w[0]) {
        issues.push(Issue::new("experiment.t_list", "sample sizes must be positive and strictly increasing"));
    }
}

fn check_radii(field: &str, eps: &[f64], issues: &mut Vec<Issue>) {
    let path = format!("experiment.{field}");
    if eps.is_empty() {
        issues.push(Issue::new(path, "must be nonempty"));
    } else if eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        issues.push(Issue::new(path, "radii must be positive and finite"));
    } else if eps.windows(2).any(|w| w[1] >= w[0]) {
        issues.push(Issue::new(path, "radii must be strictly decreasing"));
    }
}

fn check_at_least(field: &str, value: usize, min: usize, issues: &mut Vec<Issue>) {
    if value < min {
        issues.push(Issue::new(format!("experiment.{field}"), format!("must be at least {min}, got {value}")));
    }
}

fn check_band(field: &str, band: Option<[f64; 2]>, issues: &mut Vec<Issue>) {
    if let Some([lo, hi]) = band {
        if !(lo < hi) {
            issues.push(Issue::new(format!("experiment.{field}"), format!("need lower < upper, got [{lo}, {hi}]")));
        }
    }
}

fn check_positive(path: &str, v: f64, issues: &mut Vec<Issue>) {
    if !(v > 0.0 && v.is_finite()) {
        issues.push(Issue::new(path, format!("must be positive and finite, got {v}")));
    }
}

fn check_rate(params: &RateParams, kind: &str, issues: &mut Vec<Issue>) {
    check_spec(&params.spec, issues);
    check_m(params.m, issues);
    check_t_list(&params.t_list, issues);
    check_at_least("cloud_size", params.cloud_size, 100, issues);
    check_at_least("pool_size", params.pool_size, 20, issues);
    check_at_least("reps", params.reps, 2, issues);
    check_radii("entropy_eps", &params.entropy_eps, issues);
    check_band("slope_band", params.slope_band, issues);
    match params.schedule {
        EpsilonSchedule::Optimal => {}
        EpsilonSchedule::Fixed { epsilon } => check_positive("experiment.schedule.epsilon", epsilon, issues),
        EpsilonSchedule::Power { scale, exponent } => {
            check_positive("experiment.schedule.scale", scale, issues);
            if !exponent.is_finite() {
                issues.push(Issue::new("experiment.schedule.exponent", "must be finite"));
            }
        }
    }
    match (kind, params.beta) {
        ("allocate", None) => issues.push(Issue::new("experiment", "missing field `beta`")),
        ("allocate", Some(beta)) if !(1.0 / 3.0..1.0).contains(&beta) => issues.push(Issue::new(
            "experiment.beta",
            format!(
                "beta = {beta} violates 1/3 <= beta < 1; the plug-in regret sandwich only holds for beta >= 1/3"
            ),
        )),
        ("allocate", _) | (_, None) => {}
        (_, Some(_)) => issues.push(Issue::new("experiment.beta", format!("not used by kind {kind:?}"))),
    }
    match (kind, params.d) {
        ("explore", None) => issues.push(Issue::new("experiment", "missing field `d`")),
        ("explore", Some(d)) => {
            let cells = d * params.m as f64;
            if !(d > 0.0 && d < 1.0) || (cells - cells.round()).abs() > 1e-9 {
                issues.push(Issue::new(
                    "experiment.d",
                    format!("d = {d} must be a multiple of 1/m = 1/{} in (0, 1)", params.m),
                ));
            }
        }
        (_, None) => {}
        (_, Some(_)) => issues.push(Issue::new("experiment.d", format!("not used by kind {kind:?}"))),
    }
}

fn check_experiment(experiment: &Experiment, issues: &mut Vec<Issue>) {
    match experiment {
        Experiment::DivergenceSuite(p) => {
            check_spec(&p.spec, issues);
            check_m(p.m, issues);
            check_at_least("pairs", p.pairs, 1, issues);
            if p.renyi_orders.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                issues.push(Issue::new("experiment.renyi_orders", "orders must be positive and finite"));
            }
        }
        Experiment::Entropy(p) => {
            check_spec(&p.spec, issues);
            check_m(p.m, issues);
            check_radii("epsilons", &p.epsilons, issues);
            check_at_least("sample_size", p.sample_size, 100, issues);
            check_band("exponent_band", p.exponent_band, issues);
        }
        Experiment::FiniteRate(p) => {
            check_m(p.m, issues);
            check_t_list(&p.t_list, issues);
            check_at_least("reps", p.reps, 1000, issues);
            check_positive("experiment.tolerance", p.tolerance, issues);
            if !(p.bound > 1.0 && p.bound.is_finite()) {
                issues.push(Issue::new("experiment.M", format!("must be finite and > 1, got {}", p.bound)));
            } else if p.states.len() < 2 {
                issues.push(Issue::new("experiment.states", "need at least two states"));
            } else {
                for (i, s) in p.states.iter().enumerate() {
                    let single = FiniteRate {
                        states: vec![s.clone()],
                        ..p.clone()
                    };
                    if let Err(e) = single.densities() {
                        issues.push(Issue::new(format!("experiment.states[{i}]"), e.to_string()));
                    }
                }
                if let Ok(states) = p.densities() {
                    if let Err(e) = FiniteExperiment::new(states) {
                        issues.push(Issue::new("experiment.states", e.to_string()));
                    }
                }
            }
        }
        Experiment::Lemma1(p) => {
            check_spec(&p.spec, issues);
            check_m(p.m, issues);
            check_t_list(&p.t_list, issues);
            check_at_least("reps", p.reps, 2, issues);
            check_at_least("cloud_size", p.cloud_size, 100, issues);
            if p.epsilons.is_empty() || p.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                issues.push(Issue::new("experiment.epsilons", "radii must be nonempty, positive and finite"));
            }
        }
        Experiment::MinimaxRate(p) => check_rate(p, "minimax-rate", issues),
        Experiment::Allocate(p) => check_rate(p, "allocate", issues),
        Experiment::Explore(p) => check_rate(p, "explore", issues),
        Experiment::Demand(p) => {
            check_positive("experiment.r", p.r, issues);
            check_positive("experiment.K", p.k, issues);
            check_positive("experiment.price", p.price, issues);
            for (i, &pi) in p.prices.iter().enumerate() {
                check_positive(&format!("experiment.prices[{i}]"), pi, issues);
            }
        }
    }
}
