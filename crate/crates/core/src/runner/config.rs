//! Experiment configuration, read from TOML.
//!
//! ```toml
//! master_seed = 7
//! runs = 10
//! horizon = 500            # default: 500 for gauss_sine, 2000 otherwise
//! alpha = 0.5              # human error rate
//! heldout_size = 2000
//! eval_every = 50          # default: horizon / 10
//! ma_window = 100          # default: horizon / 5
//! policies = ["human", "cost_sensitive", "umpire"]
//! output_dir = "results"
//! threads = 4              # default: all cores
//!
//! [environment]
//! kind = "gauss_sine"      # or "tabular"
//! noise_q = 0.0
//! # path = "data.csv"; label_column = "y"; feature_columns = ["a", "b"]; delimiter = ","
//!
//! [model]
//! s = 256
//! alpha_eps = 0.01
//! signal_variance = 1.0
//! jitter = 1e-6
//! lengthscale_rule = "contexts"   # or "refit"; ignored when `lengthscale` is set
//!
//! [costs]
//! k_int = 0.1
//! k_req = "paper-main"     # m/(m-1) rounded down to a tenth, or a number
//! epsilon = 0.1
//! b = 0.5
//! # kappa = 0.5            # default: the normalizing kappa0(m)
//!
//! [policy_params]
//! umpire_epsilon_floor = false
//! # matched_schedule = "matched_eps.toml"
//!
//! [sweep]
//! k_req = [0.0, 0.3, 0.6, 0.9, 1.2, 1.5]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunnerError;
use crate::domain::CostSpec;
use crate::mediators::PolicyKind;
use crate::model::KernelSettings;

pub const GAUSS_SINE_HORIZON: usize = 500;
pub const DEFAULT_HORIZON: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default = "default_policies")]
    pub policies: Vec<String>,
    #[serde(default)]
    pub policy_params: PolicyParams,
    pub horizon: Option<usize>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub costs: CostConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_heldout")]
    pub heldout_size: usize,
    pub eval_every: Option<usize>,
    pub ma_window: Option<usize>,
    #[serde(default)]
    pub sweep: SweepAxes,
    #[serde(default)]
    pub master_seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    pub threads: Option<usize>,
}

fn default_policies() -> Vec<String> {
    [
        "human",
        "random",
        "supervised",
        "cost_sensitive",
        "thompson",
        "full_thompson",
        "epsilon_greedy",
        "epsilon_request",
        "pessimistic_bayesian_sampling",
        "bayesian_active_request",
        "matched_decaying_request",
        "umpire",
    ]
    .map(String::from)
    .to_vec()
}

fn default_runs() -> usize {
    10
}

fn default_alpha() -> f64 {
    0.5
}

fn default_heldout() -> usize {
    2000
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    #[default]
    GaussSine,
    Tabular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    #[serde(default)]
    pub kind: EnvKind,
    #[serde(default)]
    pub noise_q: f64,
    pub path: Option<PathBuf>,
    pub label_column: Option<String>,
    pub feature_columns: Option<Vec<String>>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        Self {
            kind: EnvKind::GaussSine,
            noise_q: 0.0,
            path: None,
            label_column: None,
            feature_columns: None,
            delimiter: ',',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthscaleRule {
    /// Median pairwise distance of the run's contexts, fixed for the run.
    /// Contexts are observed whether or not labels are, and a fixed
    /// lengthscale lets updates extend the factorization in place.
    #[default]
    Contexts,
    /// Median pairwise distance of the labelled set, recomputed (with a full
    /// refit) after every new label.
    Refit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Monte-Carlo predictive samples per decision.
    #[serde(default = "default_s")]
    pub s: usize,
    #[serde(default = "default_alpha_eps")]
    pub alpha_eps: f64,
    #[serde(default = "default_signal_variance")]
    pub signal_variance: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    pub lengthscale: Option<f64>,
    #[serde(default)]
    pub lengthscale_rule: LengthscaleRule,
}

fn default_s() -> usize {
    256
}

fn default_alpha_eps() -> f64 {
    KernelSettings::default().alpha_eps
}

fn default_signal_variance() -> f64 {
    KernelSettings::default().signal_variance
}

fn default_jitter() -> f64 {
    KernelSettings::default().jitter
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            s: default_s(),
            alpha_eps: default_alpha_eps(),
            signal_variance: default_signal_variance(),
            jitter: default_jitter(),
            lengthscale: None,
            lengthscale_rule: LengthscaleRule::Contexts,
        }
    }
}

/// Request cost: a number, or a named rule evaluated once `m` is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KReq {
    Value(f64),
    Rule(String),
}

pub const PAPER_MAIN_RULE: &str = "paper-main";

impl Default for KReq {
    fn default() -> Self {
        KReq::Rule(PAPER_MAIN_RULE.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default = "default_k_int")]
    pub k_int: f64,
    #[serde(default)]
    pub k_req: KReq,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub kappa: Option<f64>,
    #[serde(default = "default_b")]
    pub b: f64,
}

fn default_k_int() -> f64 {
    0.1
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_b() -> f64 {
    0.5
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            k_int: default_k_int(),
            k_req: KReq::default(),
            epsilon: default_epsilon(),
            kappa: None,
            b: default_b(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    #[serde(default)]
    pub umpire_epsilon_floor: bool,
    /// Fitted request schedule for `matched_decaying_request`. Without one,
    /// the suite fits it from UMPIRE runs of the same configuration.
    pub matched_schedule: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub noise_q: Vec<f64>,
    #[serde(default)]
    pub k_req: Vec<f64>,
    #[serde(default)]
    pub s: Vec<f64>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub k_int: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    NoiseQ,
    KReq,
    S,
    Alpha,
    KInt,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NoiseQ => "noise_q",
            SweepAxis::KReq => "k_req",
            SweepAxis::S => "s",
            SweepAxis::Alpha => "alpha",
            SweepAxis::KInt => "k_int",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = RunnerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "noise_q" => SweepAxis::NoiseQ,
            "k_req" => SweepAxis::KReq,
            "s" => SweepAxis::S,
            "alpha" => SweepAxis::Alpha,
            "k_int" => SweepAxis::KInt,
            _ => return Err(RunnerError::Config(format!("unknown sweep axis {s:?}"))),
        })
    }
}

impl SweepAxes {
    pub fn values(&self, axis: SweepAxis) -> &[f64] {
        match axis {
            SweepAxis::NoiseQ => &self.noise_q,
            SweepAxis::KReq => &self.k_req,
            SweepAxis::S => &self.s,
            SweepAxis::Alpha => &self.alpha,
            SweepAxis::KInt => &self.k_int,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunnerError> {
        let config: Self = toml::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(|source| RunnerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or(match self.environment.kind {
            EnvKind::GaussSine => GAUSS_SINE_HORIZON,
            EnvKind::Tabular => DEFAULT_HORIZON,
        })
    }

    pub fn eval_every(&self) -> usize {
        self.eval_every.unwrap_or((self.horizon() / 10).max(1))
    }

    pub fn ma_window(&self) -> usize {
        self.ma_window.unwrap_or((self.horizon() / 5).max(1))
    }

    pub fn policy_kinds(&self) -> Result<Vec<PolicyKind>, RunnerError> {
        self.policies
            .iter()
            .map(|p| {
                let kind: PolicyKind = p.parse().map_err(|e| RunnerError::Config(format!("{e}")))?;
                Ok(match kind {
                    PolicyKind::Umpire { .. } => PolicyKind::Umpire {
                        epsilon_floor: self.policy_params.umpire_epsilon_floor,
                    },
                    other => other,
                })
            })
            .collect()
    }

    pub fn cost_spec(&self, m: usize) -> Result<CostSpec, RunnerError> {
        let k_req = match &self.costs.k_req {
            KReq::Value(v) => *v,
            KReq::Rule(r) if r == PAPER_MAIN_RULE => CostSpec::default_k_req(m),
            KReq::Rule(r) => return Err(RunnerError::Config(format!("unknown k_req rule {r:?}"))),
        };
        Ok(CostSpec {
            k_int: self.costs.k_int,
            k_req,
            epsilon: self.costs.epsilon,
            kappa: self.costs.kappa,
            b: self.costs.b,
        })
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |msg: String| Err(RunnerError::Config(msg));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.horizon() == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.model.s == 0 {
            return bad("model.s must be at least 1".into());
        }
        let every = self.eval_every();
        if every == 0 || every > self.horizon() {
            return bad(format!("eval_every must lie in [1, horizon], got {every}"));
        }
        if self.ma_window() == 0 {
            return bad("ma_window must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.costs.epsilon) {
            return bad(format!("epsilon must lie in [0, 1], got {}", self.costs.epsilon));
        }
        if self.costs.k_int < 0.0 || self.costs.b <= 0.0 {
            return bad("k_int must be non-negative and b positive".into());
        }
        match &self.costs.k_req {
            KReq::Value(v) if *v < 0.0 => return bad(format!("k_req must be non-negative, got {v}")),
            KReq::Rule(r) if r != PAPER_MAIN_RULE => return bad(format!("unknown k_req rule {r:?}")),
            _ => {}
        }
        if self.model.alpha_eps <= 0.0 || self.model.signal_variance <= 0.0 || self.model.jitter < 0.0 {
            return bad("model alpha_eps and signal_variance must be positive, jitter non-negative".into());
        }
        if matches!(self.model.lengthscale, Some(l) if l <= 0.0) {
            return bad("model.lengthscale must be positive".into());
        }
        if self.policies.is_empty() {
            return bad("at least one policy is required".into());
        }
        self.policy_kinds()?;
        if self.environment.kind == EnvKind::Tabular
            && (self.environment.path.is_none() || self.environment.label_column.is_none())
        {
            return bad("tabular environments need `path` and `label_column`".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    /// Copy with one sweep axis set to `value`.
    pub fn with_axis(&self, axis: SweepAxis, value: f64) -> Result<Self, RunnerError> {
        let mut c = self.clone();
        match axis {
            SweepAxis::NoiseQ => c.environment.noise_q = value,
            SweepAxis::KReq => c.costs.k_req = KReq::Value(value),
            SweepAxis::S => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(RunnerError::Config(format!(
                        "s must be a positive integer, got {value}"
                    )));
                }
                c.model.s = value as usize;
            }
            SweepAxis::Alpha => c.alpha = value,
            SweepAxis::KInt => c.costs.k_int = value,
        }
        c.validate()?;
        Ok(c)
    }
}
