//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "dim": 200,
//!   "spectrum": {"kind": "power_law", "a": 2.0, "c": 1.0},
//!   "optimum": {"kind": "source_condition", "b": 3.0},
//!   "sigma_sq": 0.3,
//!   "beta": 0.0,
//!   "eta0": 0.1,
//!   "T": 4096,
//!   "trials": 5,
//!   "seed": 0,
//!   "record": "final_risk"
//! }
//! ```
//!
//! `eta0` may also be `"auto_thm43"` (then `beta` must be absent and `a`,
//! `b`, `mode`, `c_A` select the tuning) or a horizon rule such as
//! `{"rule": "power", "scale": 1, "exponent": -0.5}`; `beta` accepts rules too.
//! Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Record, RunConfig, TuningMode};
use crate::error::{Error, Result};
use crate::problem::{OptimumProfile, QuadraticProblem, SpectrumProfile};
use crate::rates::{Engine, HorizonRule, ParameterRule, SweepSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_C_A: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueOrRule {
    Value(f64),
    Rule(HorizonRule),
}

impl ValueOrRule {
    fn rule(&self) -> HorizonRule {
        match self {
            ValueOrRule::Value(v) => HorizonRule::constant(*v),
            ValueOrRule::Rule(r) => *r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSpec {
    Value(f64),
    Keyword(String),
    Rule(HorizonRule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Strict,
    #[default]
    Practical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub dim: usize,
    pub spectrum: SpectrumProfile,
    pub optimum: OptimumProfile,
    pub sigma_sq: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<ValueOrRule>,
    pub eta0: StepSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeName>,
    #[serde(rename = "c_A", default, skip_serializing_if = "Option::is_none")]
    pub c_a: Option<f64>,
    #[serde(rename = "T")]
    pub total_iters: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<u64>>,
    #[serde(default = "default_trials")]
    pub trials: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub record: Record,
}

fn default_trials() -> u32 {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let StepSpec::Keyword(k) = &self.eta0 {
            if k != "auto_thm43" {
                return Err(Error::Config(format!("eta0 keyword must be \"auto_thm43\", got {k:?}")));
            }
            if self.beta.is_some() {
                return Err(Error::Config("beta must be omitted when eta0 is \"auto_thm43\"".into()));
            }
        } else if self.a.is_some() || self.b.is_some() || self.mode.is_some() || self.c_a.is_some() {
            return Err(Error::Config("a, b, mode and c_A only apply with eta0 = \"auto_thm43\"".into()));
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<QuadraticProblem> {
        QuadraticProblem::from_profiles(&self.spectrum, &self.optimum, self.dim, self.sigma_sq)
    }

    /// Horizon-dependent `(β, η₀)` rule.
    pub fn parameter_rule(&self) -> Result<ParameterRule> {
        match &self.eta0 {
            StepSpec::Keyword(_) => {
                let a = self
                    .a
                    .or_else(|| self.spectrum.power_law_exponent())
                    .ok_or_else(|| Error::Config("auto_thm43 needs `a` (or a power-law spectrum)".into()))?;
                let b = self
                    .b
                    .or_else(|| self.optimum.source_exponent())
                    .ok_or_else(|| Error::Config("auto_thm43 needs `b` (or a source-condition optimum)".into()))?;
                let mode = match self.mode.unwrap_or_default() {
                    ModeName::Strict => TuningMode::Strict,
                    ModeName::Practical => TuningMode::Practical {
                        c_a: self.c_a.unwrap_or(DEFAULT_C_A),
                    },
                };
                Ok(ParameterRule::Tuned { a, b, mode })
            }
            StepSpec::Value(v) => Ok(ParameterRule::explicit(self.beta_rule(), HorizonRule::constant(*v))),
            StepSpec::Rule(r) => Ok(ParameterRule::explicit(self.beta_rule(), *r)),
        }
    }

    fn beta_rule(&self) -> HorizonRule {
        self.beta
            .as_ref()
            .map(ValueOrRule::rule)
            .unwrap_or(HorizonRule::constant(0.0))
    }

    /// Monte Carlo configuration at the configured horizon.
    pub fn run_config(&self, problem: &QuadraticProblem) -> Result<RunConfig> {
        let (beta, eta0) = self.parameter_rule()?.resolve(problem.lambda_max(), self.total_iters)?;
        let mut cfg = RunConfig::new(beta, eta0, self.total_iters, self.seed, self.trials);
        cfg.record = self.record;
        Ok(cfg)
    }

    pub fn sweep_spec(&self, engine: Engine) -> Result<SweepSpec> {
        Ok(SweepSpec {
            problem: self.problem()?,
            params: self.parameter_rule()?,
            t_grid: self.t_grid.clone().unwrap_or_else(|| vec![self.total_iters]),
            engine,
            trials: self.trials,
            seed: self.seed,
        })
    }
}
