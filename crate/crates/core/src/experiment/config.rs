//! TOML experiment configuration and `key=value` overrides.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cost::PenaltySpec;
use crate::dynamics::{StepMode, StepParams};
use crate::error::ExperimentError;
use crate::graph::WeightScheme;
use crate::nonlinearity::Nonlinearity;
use crate::oracle::OracleTolerances;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub n: usize,
    pub demand: f64,
    /// Master seed; component seeds are derived from it unless set in `[seeds]`.
    #[serde(with = "seed_repr")]
    pub seed: u64,
    pub steps: u64,
    #[serde(default)]
    pub seeds: SeedConfig,
    pub cost: CostRanges,
    pub penalty: PenaltyConfig,
    pub graph: GraphConfig,
    pub methods: Vec<MethodConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedConfig {
    #[serde(default, skip_serializing_if = "Option::is_none", with = "seed_repr::opt")]
    pub cost: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "seed_repr::opt")]
    pub graph: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "seed_repr::opt")]
    pub init: Option<u64>,
}

/// Seeds above `i64::MAX` do not fit a TOML integer, so they are written as
/// decimal strings; either form is accepted on input.
mod seed_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Text(String),
    }

    fn from_repr<E: de::Error>(r: Repr) -> Result<u64, E> {
        match r {
            Repr::Int(v) => u64::try_from(v).map_err(|_| E::custom(format!("seed must be nonnegative, got {v}"))),
            Repr::Text(t) => t.trim().parse().map_err(|_| E::custom(format!("invalid seed {t:?}"))),
        }
    }

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*v) {
            Ok(i) => s.serialize_i64(i),
            Err(_) => s.serialize_str(&v.to_string()),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod opt {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => super::serialize(v, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
            Option::<Repr>::deserialize(d)?.map(from_repr).transpose()
        }
    }
}

/// `a_i` is drawn from `(a_min, a_max]`, `c_lin_i` from `(c_min, c_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostRanges {
    pub a_min: f64,
    pub a_max: f64,
    pub c_min: f64,
    pub c_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyChoice {
    None,
    Power,
    LogSmooth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub kind: PenaltyChoice,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_power")]
    pub c: u32,
    #[serde(default)]
    pub lower: f64,
    #[serde(default)]
    pub upper: f64,
}

fn default_rho() -> f64 {
    1.0
}

fn default_power() -> u32 {
    2
}

impl PenaltyConfig {
    pub fn to_spec(&self) -> Result<PenaltySpec, ExperimentError> {
        Ok(match self.kind {
            PenaltyChoice::None => PenaltySpec::none(),
            PenaltyChoice::Power => PenaltySpec::power(self.c, self.sigma, self.lower, self.upper)?,
            PenaltyChoice::LogSmooth => PenaltySpec::log_smooth(self.rho, self.sigma, self.lower, self.upper)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    /// Edge probability of each Erdos-Renyi draw.
    pub p: f64,
    #[serde(default)]
    pub weights: WeightScheme,
    /// Number of graphs in the round-robin schedule; 1 means a static graph.
    #[serde(default = "default_schedule_len")]
    pub schedule_len: usize,
    /// Seconds per graph (continuous time).
    #[serde(default = "default_dwell")]
    pub dwell: f64,
    /// Remove all edges across a random bisection from every snapshot so that
    /// each one is disconnected and only the union is connected.
    #[serde(default)]
    pub partitioned: bool,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    /// Static graph read from an edge-list file instead of being drawn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

fn default_schedule_len() -> usize {
    1
}

fn default_dwell() -> f64 {
    1.0
}

fn default_attempts() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub label: String,
    pub nonlinearity: Nonlinearity,
    pub eta: f64,
    pub mode: StepMode,
    /// Discrete mode only: sampling period `tau` in seconds. The update then
    /// uses the step size `eta * tau`, dwell times are converted to
    /// `dwell / tau` steps and the recorded time is `k * tau`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_period: Option<f64>,
}

impl MethodConfig {
    pub fn step_params(&self) -> Result<StepParams, ExperimentError> {
        let eta = match (self.mode, self.sample_period) {
            (StepMode::Discrete, Some(tau)) => {
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(ExperimentError::Config(format!(
                        "method {:?}: sample_period must be positive, got {tau}",
                        self.label
                    )));
                }
                self.eta * tau
            }
            (StepMode::Discrete, None) => self.eta,
            (_, Some(_)) => {
                return Err(ExperimentError::Config(format!(
                    "method {:?}: sample_period only applies to discrete mode",
                    self.label
                )))
            }
            (_, None) => self.eta,
        };
        StepParams::new(eta, self.nonlinearity, self.mode).map_err(|e| ExperimentError::Config(format!("method {:?}: {e}", self.label)))
    }

    /// Seconds represented by one step.
    pub fn time_per_step(&self) -> f64 {
        match self.mode {
            StepMode::Discrete => self.sample_period.unwrap_or(1.0),
            m => m.dt(),
        }
    }
}

/// Grid over the first method. An omitted axis keeps the base value; an
/// axis given as an empty list is an error.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Every step up to this one is recorded.
    #[serde(default = "default_dense")]
    pub dense_steps: u64,
    /// Recording interval after `dense_steps`.
    #[serde(default = "default_stride")]
    pub stride: u64,
    #[serde(default = "default_true")]
    pub log_y: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

fn default_dense() -> u64 {
    10_000
}

fn default_stride() -> u64 {
    10
}

fn default_true() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dense_steps: default_dense(),
            stride: default_stride(),
            log_y: true,
            dir: None,
        }
    }
}

impl OutputConfig {
    pub fn records(&self, k: u64, last: u64) -> bool {
        k <= self.dense_steps || k % self.stride == 0 || k == last
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_feas")]
    pub feas_rel: f64,
    #[serde(default = "default_inner")]
    pub inner_rel: f64,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
}

fn default_feas() -> f64 {
    1e-9
}

fn default_inner() -> f64 {
    1e-12
}

fn default_iterations() -> usize {
    400
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            feas_rel: default_feas(),
            inner_rel: default_inner(),
            max_iterations: default_iterations(),
        }
    }
}

impl OracleConfig {
    pub fn tolerances(&self) -> OracleTolerances {
        OracleTolerances {
            feas_rel: self.feas_rel,
            inner_rel: self.inner_rel,
            max_iterations: self.max_iterations,
        }
    }
}

/// A method counts as converged once the gradient dispersion stays below
/// `tol` for `window` consecutive steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    #[serde(default = "default_conv_tol")]
    pub tol: f64,
    #[serde(default = "default_window")]
    pub window: u64,
}

fn default_conv_tol() -> f64 {
    1e-4
}

fn default_window() -> u64 {
    100
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            tol: default_conv_tol(),
            window: default_window(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n == 0 {
            return Err(config_err("n must be >= 1"));
        }
        if !self.demand.is_finite() {
            return Err(config_err(format!("demand must be finite, got {}", self.demand)));
        }
        let c = &self.cost;
        if !(c.a_min >= 0.0 && c.a_max > c.a_min && c.a_max.is_finite()) {
            return Err(config_err(format!("cost.a range ({}, {}] is empty or not positive", c.a_min, c.a_max)));
        }
        if !(c.c_max > c.c_min && c.c_min.is_finite() && c.c_max.is_finite()) {
            return Err(config_err(format!("cost.c range ({}, {}] is empty", c.c_min, c.c_max)));
        }
        self.penalty.to_spec()?;
        let g = &self.graph;
        if !(0.0..=1.0).contains(&g.p) {
            return Err(config_err(format!("graph.p must lie in [0, 1], got {}", g.p)));
        }
        if g.schedule_len == 0 {
            return Err(config_err("graph.schedule_len must be >= 1"));
        }
        if !(g.dwell > 0.0 && g.dwell.is_finite()) {
            return Err(config_err(format!("graph.dwell must be positive, got {}", g.dwell)));
        }
        if g.max_attempts == 0 {
            return Err(config_err("graph.max_attempts must be >= 1"));
        }
        if g.file.is_some() && g.schedule_len != 1 {
            return Err(config_err("graph.file describes a static graph; schedule_len must be 1"));
        }
        if self.methods.is_empty() {
            return Err(config_err("at least one method is required"));
        }
        let mut labels = BTreeSet::new();
        for m in &self.methods {
            if !labels.insert(m.label.as_str()) {
                return Err(config_err(format!("duplicate method label {:?}", m.label)));
            }
            m.step_params()?;
        }
        if self.output.stride == 0 {
            return Err(config_err("output.stride must be >= 1"));
        }
        let o = &self.oracle;
        if !(o.feas_rel > 0.0 && o.inner_rel > 0.0 && o.max_iterations > 0) {
            return Err(config_err("oracle tolerances must be positive"));
        }
        if let Some(s) = &self.sweep {
            for (axis, vals) in [("alpha", &s.alpha), ("beta", &s.beta), ("eta", &s.eta)] {
                if matches!(vals, Some(v) if v.is_empty()) {
                    return Err(config_err(format!("sweep.{axis} is an empty list")));
                }
            }
        }
        Ok(())
    }

    /// Applies `key=value` assignments in order (later ones win) and
    /// revalidates. Keys are dotted paths into the TOML tree; array elements
    /// are addressed by index, and `*` addresses every element. `eta` alone is
    /// shorthand for `methods.*.eta`. Values are parsed as TOML literals and
    /// fall back to plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self, ExperimentError> {
        let mut tree = toml::Value::try_from(self).map_err(|e| config_err(e.to_string()))?;
        for raw in overrides {
            let raw = raw.as_ref();
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| config_err(format!("override {raw:?} is not key=value")))?;
            let key = key.trim();
            let key = if key == "eta" { "methods.*.eta" } else { key };
            let value = parse_value(value.trim());
            let path: Vec<&str> = key.split('.').collect();
            if path.iter().any(|p| p.is_empty()) {
                return Err(config_err(format!("malformed key {key:?}")));
            }
            assign(&mut tree, &path, &value, key)?;
        }
        let cfg: ExperimentConfig = tree.try_into().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_value(text: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Holder {
        v: toml::Value,
    }
    match toml::from_str::<Holder>(&format!("v = {text}")) {
        Ok(h) => h.v,
        Err(_) => toml::Value::String(text.to_string()),
    }
}

fn assign(node: &mut toml::Value, path: &[&str], value: &toml::Value, key: &str) -> Result<(), ExperimentError> {
    let (head, rest) = (path[0], &path[1..]);
    match node {
        toml::Value::Table(t) => {
            if rest.is_empty() {
                t.insert(head.to_string(), value.clone());
                return Ok(());
            }
            let child = t
                .entry(head.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()));
            assign(child, rest, value, key)
        }
        toml::Value::Array(items) => {
            let targets: Vec<usize> = if head == "*" {
                (0..items.len()).collect()
            } else {
                let i: usize = head
                    .parse()
                    .map_err(|_| config_err(format!("unknown key {key:?}: {head:?} is not an index")))?;
                if i >= items.len() {
                    return Err(config_err(format!("unknown key {key:?}: index {i} out of range")));
                }
                vec![i]
            };
            for i in targets {
                if rest.is_empty() {
                    items[i] = value.clone();
                } else {
                    assign(&mut items[i], rest, value, key)?;
                }
            }
            Ok(())
        }
        _ => Err(config_err(format!("unknown key {key:?}"))),
    }
}
