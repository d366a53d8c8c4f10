//! Horizon sweeps, log-log rate fits and the synthetic experiment presets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::upper_bound_thm31;
use crate::dynamics::{select_parameters_thm43, shb_run, RunConfig, TunedParameters, TuningMode};
use crate::error::{invalid, Error, Result};
use crate::exact::exact_risk;
use crate::problem::{OptimumProfile, QuadraticProblem, SpectrumProfile};
use crate::schedule::StepSchedule;

/// A hyper-parameter that may depend on the horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum HorizonRule {
    Constant { value: f64 },
    /// `scale · T^exponent`.
    Power { scale: f64, exponent: f64 },
    /// `1 − scale · T^exponent`.
    OneMinusPower { scale: f64, exponent: f64 },
}

impl HorizonRule {
    pub fn constant(value: f64) -> Self {
        HorizonRule::Constant { value }
    }

    pub fn at(&self, total_iters: u64) -> f64 {
        let t = total_iters as f64;
        match *self {
            HorizonRule::Constant { value } => value,
            HorizonRule::Power { scale, exponent } => scale * t.powf(exponent),
            HorizonRule::OneMinusPower { scale, exponent } => 1.0 - scale * t.powf(exponent),
        }
    }
}

/// How `(β, η₀)` are chosen at each horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ParameterRule {
    Explicit { beta: HorizonRule, eta0: HorizonRule },
    /// Decay/source tuning rule; `a`, `b` describe the problem class.
    Tuned { a: f64, b: f64, mode: TuningMode },
}

impl ParameterRule {
    pub fn explicit(beta: HorizonRule, eta0: HorizonRule) -> Self {
        ParameterRule::Explicit { beta, eta0 }
    }

    /// `(β, η₀)` at horizon `T`.
    pub fn resolve(&self, lambda1: f64, total_iters: u64) -> Result<(f64, f64)> {
        match self {
            ParameterRule::Explicit { beta, eta0 } => Ok((beta.at(total_iters), eta0.at(total_iters))),
            ParameterRule::Tuned { a, b, mode } => match select_parameters_thm43(*a, *b, lambda1, total_iters, *mode)? {
                TunedParameters::Tuned { beta, eta0, .. } => Ok((beta, eta0)),
                TunedParameters::NoOptimalTuning => Err(invalid(
                    "eta0",
                    format!("no tuning rule covers a = {a} > 2b = {}", 2.0 * b),
                )),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Exact,
    MonteCarlo,
}

impl Engine {
    pub fn label(&self) -> &'static str {
        match self {
            Engine::Exact => "exact",
            Engine::MonteCarlo => "mc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub problem: QuadraticProblem,
    pub params: ParameterRule,
    pub t_grid: Vec<u64>,
    pub engine: Engine,
    pub trials: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub t: u64,
    pub beta: f64,
    pub eta0: f64,
    pub mean_risk: f64,
    pub std_risk: f64,
    pub n_trials: u32,
    pub n_diverged: u32,
    /// Exact engine only.
    pub bias: Option<f64>,
    pub variance: Option<f64>,
    /// Per-trial final risks (Monte Carlo); `None` marks a diverged trial.
    pub trial_risks: Vec<Option<f64>>,
    pub upper_bound: f64,
    pub lower_bound: f64,
    pub k_star: usize,
}

impl SweepPoint {
    pub fn usable(&self) -> bool {
        self.n_diverged < self.n_trials && self.mean_risk.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub engine: Engine,
    /// Grid points excluded from fits, with the reason.
    pub warnings: Vec<String>,
}

impl SweepResult {
    pub fn series(&self) -> Vec<(u64, f64)> {
        self.points.iter().map(|p| (p.t, p.mean_risk)).collect()
    }
}

fn run_point(spec: &SweepSpec, t: u64) -> Result<SweepPoint> {
    let problem = &spec.problem;
    let (beta, eta0) = spec.params.resolve(problem.lambda_max(), t)?;
    let bounds = upper_bound_thm31(problem, eta0, beta, t)?;
    let mut point = SweepPoint {
        t,
        beta,
        eta0,
        mean_risk: f64::NAN,
        std_risk: 0.0,
        n_trials: 1,
        n_diverged: 0,
        bias: None,
        variance: None,
        trial_risks: Vec::new(),
        upper_bound: bounds.upper_total,
        lower_bound: bounds.lower_bound,
        k_star: bounds.k_star,
    };
    match spec.engine {
        Engine::Exact => {
            let schedule = StepSchedule::new(eta0, t)?;
            match exact_risk(problem, &schedule, beta, None, false) {
                Ok(r) => {
                    point.mean_risk = r.total;
                    point.bias = Some(r.bias);
                    point.variance = Some(r.variance);
                }
                Err(Error::NonFinite { .. }) => point.n_diverged = 1,
                Err(e) => return Err(e),
            }
        }
        Engine::MonteCarlo => {
            let cfg = RunConfig::new(beta, eta0, t, spec.seed, spec.trials);
            let out = shb_run(problem, &cfg)?;
            point.mean_risk = out.mean_risk;
            point.std_risk = out.std_risk;
            point.n_trials = spec.trials;
            point.n_diverged = out.n_diverged;
            point.trial_risks = out.trials.iter().map(|t| t.final_risk).collect();
        }
    }
    Ok(point)
}

/// One point per horizon in `t_grid`.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    if spec.t_grid.is_empty() {
        return Err(invalid("t_grid", "empty grid"));
    }
    if spec.t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("t_grid", "horizons must be strictly increasing"));
    }
    if spec.engine == Engine::MonteCarlo && spec.trials == 0 {
        return Err(invalid("trials", "need at least one trial"));
    }
    let points: Vec<SweepPoint> = spec
        .t_grid
        .par_iter()
        .map(|&t| run_point(spec, t))
        .collect::<Result<_>>()?;
    let warnings = points
        .iter()
        .filter(|p| !p.usable())
        .map(|p| format!("T = {}: all {} trial(s) diverged; excluded from fits", p.t, p.n_trials))
        .collect();
    Ok(SweepResult {
        points,
        engine: spec.engine,
        warnings,
    })
}

/// `risk ≈ D · T^slope` fitted by least squares in log-log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    /// `ln D`.
    pub intercept: f64,
    pub residual_rms: f64,
    pub points_used: usize,
}

/// Fit over the largest-`T` fraction of usable points.
pub fn fit_rate(sweep: &SweepResult, tail_fraction: f64) -> Result<RateFit> {
    let series: Vec<(u64, f64)> = sweep
        .points
        .iter()
        .filter(|p| p.usable())
        .map(|p| (p.t, p.mean_risk))
        .collect();
    fit_series(&series, tail_fraction)
}

/// Last `⌈n · tail_fraction⌉` points; at least 3, all with positive risk.
fn tail_points(series: &[(u64, f64)], tail_fraction: f64) -> Result<&[(u64, f64)]> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(invalid("tail_fraction", format!("must lie in (0, 1], got {tail_fraction}")));
    }
    let keep = ((series.len() as f64 * tail_fraction).ceil() as usize).min(series.len());
    let tail = &series[series.len() - keep..];
    if tail.len() < 3 {
        return Err(Error::TooFewPoints(tail.len()));
    }
    if let Some(&(_, r)) = tail.iter().find(|(_, r)| !(*r > 0.0)) {
        return Err(Error::NonPositiveRisk(r));
    }
    Ok(tail)
}

/// Same fit on a raw `(T, risk)` series, ascending in `T`.
pub fn fit_series(series: &[(u64, f64)], tail_fraction: f64) -> Result<RateFit> {
    let tail = tail_points(series, tail_fraction)?;
    let xs: Vec<f64> = tail.iter().map(|(t, _)| (*t as f64).ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|(_, r)| r.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok(RateFit {
        slope,
        intercept,
        residual_rms: (rss / n).sqrt(),
        points_used: tail.len(),
    })
}

/// Ratio max/min of `risk · T / (ln T)^c` over the tail of `series`.
pub fn polylog_spread(series: &[(u64, f64)], c: f64, tail_fraction: f64) -> Result<f64> {
    let tail = tail_points(series, tail_fraction)?;
    let scaled: Vec<f64> = tail
        .iter()
        .map(|&(t, r)| r * t as f64 / (t as f64).ln().powf(c))
        .collect();
    let max = scaled.iter().cloned().fold(f64::MIN, f64::max);
    let min = scaled.iter().cloned().fold(f64::MAX, f64::min);
    Ok(max / min)
}

pub const DEFAULT_TAIL_FRACTION: f64 = 0.5;
/// Default noise level of the synthetic experiments.
pub const DEFAULT_SIGMA_SQ: f64 = 0.3;
pub const PRESET_DIM: usize = 4000;

/// `2^lo, …, 2^hi`.
pub fn pow2_grid(lo: u32, hi: u32) -> Vec<u64> {
    (lo..=hi).map(|m| 1u64 << m).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetVariant {
    pub label: String,
    pub problem: QuadraticProblem,
    pub params: ParameterRule,
    /// Exponent the run is expected to follow, if any.
    pub reference_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub variants: Vec<PresetVariant>,
    pub t_grid: Vec<u64>,
    /// Named reference exponents reported next to fitted slopes.
    pub reference_slopes: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

impl Preset {
    pub fn sweep_spec(&self, variant: usize, engine: Engine, trials: u32, seed: u64) -> SweepSpec {
        let v = &self.variants[variant];
        SweepSpec {
            problem: v.problem.clone(),
            params: v.params,
            t_grid: self.t_grid.clone(),
            engine,
            trials,
            seed,
        }
    }
}

pub const PRESET_NAMES: [&str; 7] = ["fig3a", "fig3b", "fig3c", "fig3d", "fig3e", "fig3f", "linf_exp"];

fn power_source(a: f64, b: f64, dim: usize, sigma_sq: f64) -> Result<QuadraticProblem> {
    QuadraticProblem::from_profiles(
        &SpectrumProfile::PowerLaw { a, c: 1.0 },
        &OptimumProfile::SourceCondition { b },
        dim,
        sigma_sq,
    )
}

fn explicit(beta: HorizonRule, eta0: HorizonRule) -> ParameterRule {
    ParameterRule::explicit(beta, eta0)
}

/// Preset with default parameters.
pub fn preset(name: &str) -> Result<Preset> {
    preset_with(name, None, PRESET_DIM)
}

/// Preset bundle. `param` overrides the free exponent of `fig3c` (decay `a`)
/// and `fig3d` (log power `c`); `dim` is capped at 5000.
pub fn preset_with(name: &str, param: Option<f64>, dim: usize) -> Result<Preset> {
    let dim = dim.clamp(1, 5000);
    let grid = pow2_grid(8, 15);
    let s2 = DEFAULT_SIGMA_SQ;
    let zero = HorizonRule::constant(0.0);
    let p = match name {
        "fig3a" => {
            let mut variants = Vec::new();
            // caption lists noise as σ; σ² = σ·σ here
            for &sigma in &[0.3, 0.03] {
                for &beta in &[0.9, 0.99] {
                    variants.push(PresetVariant {
                        label: format!("beta={beta};sigma={sigma}"),
                        problem: power_source(4.0, 1.5, dim, sigma * sigma)?,
                        params: explicit(HorizonRule::constant(beta), HorizonRule::constant(0.1)),
                        reference_slope: None,
                    });
                }
            }
            Preset {
                name: name.into(),
                description: "heavy ball, η0 = 0.1, λ_i = i^-4, λ_i w_i² = i^-1.5, β ∈ {0.9, 0.99}".into(),
                variants,
                t_grid: grid,
                reference_slopes: vec![("minmax".into(), -1.0 + 1.0 / 1.5)],
                notes: vec![
                    "noise given as σ ∈ {0.3, 0.03}; simulated with σ² = σ·σ".into(),
                    "expected: β = 0.99 inflates the variance term relative to β = 0.9".into(),
                ],
            }
        }
        "fig3b" => {
            let problem = power_source(3.0, 2.0, dim, s2)?;
            let eta = HorizonRule::constant(0.1);
            let rules = [
                ("beta=1-10T^-0.5", HorizonRule::OneMinusPower { scale: 10.0, exponent: -0.5 }, Some(-0.5)),
                ("beta=1-T^-0.2", HorizonRule::OneMinusPower { scale: 1.0, exponent: -0.2 }, None),
                ("beta=0", zero, None),
            ];
            Preset {
                name: name.into(),
                description: "heavy ball, η0 = 0.1, λ_i = i^-3, λ_i w_i² = i^-2".into(),
                variants: rules
                    .iter()
                    .map(|(label, beta, slope)| PresetVariant {
                        label: (*label).into(),
                        problem: problem.clone(),
                        params: explicit(*beta, eta),
                        reference_slope: *slope,
                    })
                    .collect(),
                t_grid: grid,
                reference_slopes: vec![("plotted".into(), -1.0 / 3.0), ("minmax".into(), -0.5)],
                notes: vec!["the tuned momentum should decay fastest of the three".into()],
            }
        }
        "fig3c" => {
            let exps: Vec<f64> = match param {
                Some(a) => vec![a],
                None => vec![1.5, 2.0],
            };
            let mut variants = Vec::new();
            for a in exps {
                if a <= 1.0 {
                    return Err(invalid("a", format!("decay exponent must exceed 1, got {a}")));
                }
                variants.push(PresetVariant {
                    label: format!("a={a}"),
                    problem: QuadraticProblem::from_profiles(
                        &SpectrumProfile::PowerLaw { a, c: 1.0 },
                        &OptimumProfile::LinfConstant { c: 1.0 },
                        dim,
                        s2,
                    )?,
                    params: explicit(zero, HorizonRule::constant(0.1)),
                    reference_slope: Some(-1.0 + 1.0 / a),
                });
            }
            let refs = variants
                .iter()
                .map(|v| (v.label.clone(), v.reference_slope.unwrap()))
                .collect();
            Preset {
                name: name.into(),
                description: "SGD, η0 = 0.1, λ_i = i^-a, w* = 1".into(),
                variants,
                t_grid: pow2_grid(9, 15),
                reference_slopes: refs,
                notes: vec![],
            }
        }
        "fig3d" => {
            let cs: Vec<f64> = match param {
                Some(c) => vec![c],
                None => vec![1.0, 2.0],
            };
            let mut variants = Vec::new();
            for c in cs {
                variants.push(PresetVariant {
                    label: format!("c={c}"),
                    problem: QuadraticProblem::from_profiles(
                        &SpectrumProfile::LogAdjusted { c },
                        &OptimumProfile::LinfConstant { c: 1.0 },
                        dim,
                        s2,
                    )?,
                    params: explicit(zero, HorizonRule::constant(0.1)),
                    reference_slope: None,
                });
            }
            Preset {
                name: name.into(),
                description: "SGD, η0 = 0.1, λ_i = 1/(i ln^c(i+1)), w* = 1".into(),
                variants,
                t_grid: grid,
                reference_slopes: vec![],
                notes: vec!["polylogarithmic rate; summarized by the spread of risk·T/ln^c T over the tail, not a power fit".into()],
            }
        }
        "fig3e" => {
            let problem = power_source(1.5, 3.0, dim, s2)?;
            Preset {
                name: name.into(),
                description: "SGD, λ_i = i^-1.5, λ_i w_i² = i^-3, η0 ∈ {T^-0.5, 1}".into(),
                variants: vec![
                    PresetVariant {
                        label: "eta0=T^-0.5".into(),
                        problem: problem.clone(),
                        params: explicit(zero, HorizonRule::Power { scale: 1.0, exponent: -0.5 }),
                        reference_slope: Some(-2.0 / 3.0),
                    },
                    PresetVariant {
                        label: "eta0=1".into(),
                        problem,
                        params: explicit(zero, HorizonRule::constant(1.0)),
                        reference_slope: Some(-1.0 / 3.0),
                    },
                ],
                t_grid: grid,
                reference_slopes: vec![("minmax".into(), -2.0 / 3.0), ("upper".into(), -1.0 / 3.0)],
                notes: vec![],
            }
        }
        "fig3f" => {
            let problem = power_source(1.25, 3.75, dim, s2)?;
            Preset {
                name: name.into(),
                description: "SGD, λ_i = i^-1.25, λ_i w_i² = i^-3.75, η0 ∈ {T^-2/3, 1}".into(),
                variants: vec![
                    PresetVariant {
                        label: "eta0=T^-2/3".into(),
                        problem: problem.clone(),
                        params: explicit(zero, HorizonRule::Power { scale: 1.0, exponent: -2.0 / 3.0 }),
                        reference_slope: Some(-1.0 + 1.0 / 3.75),
                    },
                    PresetVariant {
                        label: "eta0=1".into(),
                        problem,
                        params: explicit(zero, HorizonRule::constant(1.0)),
                        reference_slope: Some(-0.2),
                    },
                ],
                t_grid: grid,
                reference_slopes: vec![("minmax".into(), -1.0 + 1.0 / 3.75), ("upper".into(), -0.2)],
                notes: vec![],
            }
        }
        "linf_exp" => {
            let d = dim.min(64);
            let problem = QuadraticProblem::from_profiles(
                &SpectrumProfile::Exponential,
                &OptimumProfile::LinfConstant { c: 1.0 },
                d,
                s2,
            )?;
            let eta0 = 1.0 / (2.0 * problem.lambda_max());
            Preset {
                name: name.into(),
                description: "SGD, λ_i = e^-i, w* = 1, η0 = 1/(2λ1)".into(),
                variants: vec![PresetVariant {
                    label: "eta0=1/(2*lambda1)".into(),
                    problem,
                    params: explicit(zero, HorizonRule::constant(eta0)),
                    reference_slope: Some(-1.0),
                }],
                t_grid: grid,
                reference_slopes: vec![("minmax".into(), -1.0)],
                notes: vec!["d capped at 64: e^-i is below 1e-27 past that".into()],
            }
        }
        other => return Err(Error::UnknownPreset(other.into())),
    };
    Ok(p)
}
