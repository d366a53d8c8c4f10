//! Monte Carlo heavy-ball SGD with exponential step decay.
//!
//! ```text
//! u_{t+1} = β u_t + η_t ĝ(w_t)
//! w_{t+1} = w_t − u_{t+1}
//! ```
//! starting from `w₀ = 0`, `u₀ = 0`. With `β = 0` this is plain SGD.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::momentum::theory_constant;
use crate::problem::QuadraticProblem;
use crate::rng::{aux_stream, trial_stream};
use crate::schedule::StepSchedule;

/// A trial is diverged once its risk exceeds this multiple of `max(initial risk, 1)`.
pub const DIVERGENCE_FACTOR: f64 = 1e12;
/// Without a trace, divergence is checked every this many steps and at stage ends.
const CHECK_EVERY: u64 = 64;
/// Dense mode is a test device.
pub const DENSE_MAX_DIM: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Record {
    #[default]
    FinalRisk,
    RiskTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub beta: f64,
    pub eta0: f64,
    pub total_iters: u64,
    pub seed: u64,
    pub trials: u32,
    #[serde(default)]
    pub record: Record,
    /// Starting point; `None` means the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_point: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn new(beta: f64, eta0: f64, total_iters: u64, seed: u64, trials: u32) -> Self {
        Self {
            beta,
            eta0,
            total_iters,
            seed,
            trials,
            record: Record::FinalRisk,
            initial_point: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta) {
            return Err(invalid("beta", format!("must lie in [0, 1), got {}", self.beta)));
        }
        if !(self.eta0.is_finite() && self.eta0 > 0.0) {
            return Err(invalid("eta0", format!("must be positive, got {}", self.eta0)));
        }
        if self.total_iters < 2 {
            return Err(invalid("T", format!("need T >= 2, got {}", self.total_iters)));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "need at least one trial"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<StepSchedule> {
        StepSchedule::new(self.eta0, self.total_iters)
    }
}

/// Iterate and momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ShbState {
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub t: u64,
}

impl ShbState {
    pub fn new(w0: Vec<f64>) -> Self {
        let d = w0.len();
        Self {
            w: w0,
            u: vec![0.0; d],
            t: 0,
        }
    }

    #[inline]
    pub fn step(&mut self, beta: f64, eta: f64, grad: &[f64]) {
        for ((w, u), g) in self.w.iter_mut().zip(self.u.iter_mut()).zip(grad) {
            *u = beta * *u + eta * g;
            *w -= *u;
        }
        self.t += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: u32,
    /// Excess risk of `w_T`; `None` when diverged.
    pub final_risk: Option<f64>,
    pub diverged_at: Option<u64>,
    pub trace: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub trials: Vec<TrialOutcome>,
    pub mean_risk: f64,
    /// Sample standard deviation over converged trials.
    pub std_risk: f64,
    pub n_converged: u32,
    pub n_diverged: u32,
}

impl RunOutcome {
    fn from_trials(trials: Vec<TrialOutcome>) -> Self {
        let risks: Vec<f64> = trials.iter().filter_map(|t| t.final_risk).collect();
        let n = risks.len();
        let mean = if n > 0 { risks.iter().sum::<f64>() / n as f64 } else { f64::NAN };
        let std = if n > 1 {
            (risks.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let n_diverged = trials.len() - n;
        Self {
            trials,
            mean_risk: mean,
            std_risk: std,
            n_converged: n as u32,
            n_diverged: n_diverged as u32,
        }
    }

    /// `std / √n` over converged trials.
    pub fn standard_error(&self) -> f64 {
        if self.n_converged == 0 {
            f64::NAN
        } else {
            self.std_risk / (self.n_converged as f64).sqrt()
        }
    }
}

fn initial_point(problem: &QuadraticProblem, config: &RunConfig) -> Result<Vec<f64>> {
    match &config.initial_point {
        Some(w) if w.len() != problem.dim() => Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: w.len(),
        }),
        Some(w) => Ok(w.clone()),
        None => Ok(vec![0.0; problem.dim()]),
    }
}

struct Divergence {
    limit: f64,
}

impl Divergence {
    fn new(initial_risk: f64) -> Self {
        Self {
            limit: DIVERGENCE_FACTOR * initial_risk.max(1.0),
        }
    }

    fn hit(&self, risk: f64) -> bool {
        !risk.is_finite() || risk > self.limit
    }
}

fn run_trial(problem: &QuadraticProblem, config: &RunConfig, schedule: &StepSchedule, w0: &[f64], trial: u32) -> TrialOutcome {
    let mut rng = trial_stream(config.seed, trial as u64);
    let mut state = ShbState::new(w0.to_vec());
    let mut grad = vec![0.0; problem.dim()];
    let want_trace = config.record == Record::RiskTrace;
    let initial = problem.excess_risk_unchecked(&state.w);
    let guard = Divergence::new(initial);
    let mut trace = want_trace.then(|| {
        let mut v = Vec::with_capacity(config.total_iters as usize + 1);
        v.push(initial);
        v
    });
    for stage in schedule.stages() {
        for i in 0..stage.len {
            problem
                .sample_gradient_into(&state.w, &mut rng, &mut grad)
                .expect("dimensions checked");
            state.step(config.beta, stage.step_size, &grad);
            let check = want_trace || (i + 1) % CHECK_EVERY == 0 || i + 1 == stage.len;
            if check {
                let risk = problem.excess_risk_unchecked(&state.w);
                if let Some(tr) = trace.as_mut() {
                    tr.push(risk);
                }
                if guard.hit(risk) {
                    return TrialOutcome {
                        trial,
                        final_risk: None,
                        diverged_at: Some(state.t),
                        trace,
                    };
                }
            }
        }
    }
    TrialOutcome {
        trial,
        final_risk: Some(problem.excess_risk_unchecked(&state.w)),
        diverged_at: None,
        trace,
    }
}

/// Independent trials of the iteration in the eigenbasis.
pub fn shb_run(problem: &QuadraticProblem, config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let schedule = config.schedule()?;
    let w0 = initial_point(problem, config)?;
    let trials: Vec<TrialOutcome> = (0..config.trials)
        .into_par_iter()
        .map(|k| run_trial(problem, config, &schedule, &w0, k))
        .collect();
    Ok(RunOutcome::from_trials(trials))
}

/// Orthonormal basis for dense mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Basis {
    Identity,
    /// Haar-like random rotation from the QR factor of a seeded Gaussian matrix.
    Random(u64),
}

fn basis_matrix(d: usize, basis: Basis) -> DMatrix<f64> {
    match basis {
        Basis::Identity => DMatrix::identity(d, d),
        Basis::Random(seed) => {
            let mut rng = aux_stream(seed, 0xBA515);
            let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let qr = g.qr();
            let (q, r) = (qr.q(), qr.r());
            // fix column signs so the draw is a deterministic function of G
            let mut q = q;
            for j in 0..d {
                if r[(j, j)] < 0.0 {
                    q.column_mut(j).neg_mut();
                }
            }
            q
        }
    }
}

/// The same iteration with `H = V Σ Vᵀ` for an orthonormal `V`. Noise draws
/// reuse the eigen-mode stream: `ξ = V (σ √λ ∘ z)`.
pub fn shb_run_dense(problem: &QuadraticProblem, config: &RunConfig, basis: Basis) -> Result<RunOutcome> {
    config.validate()?;
    let d = problem.dim();
    if d > DENSE_MAX_DIM {
        return Err(Error::DenseTooLarge {
            max: DENSE_MAX_DIM,
            got: d,
        });
    }
    let schedule = config.schedule()?;
    let w0_eigen = initial_point(problem, config)?;
    let v = basis_matrix(d, basis);
    let lambdas = DVector::from_column_slice(problem.eigenvalues());
    let h = &v * DMatrix::from_diagonal(&lambdas) * v.transpose();
    let w_star = &v * DVector::from_column_slice(problem.optimum());
    let w0 = &v * DVector::from_column_slice(&w0_eigen);
    let noise_scale: DVector<f64> = lambdas.map(|l| (problem.noise_variance() * l).sqrt());
    let risk = |w: &DVector<f64>| {
        let e = w - &w_star;
        0.5 * e.dot(&(&h * &e))
    };

    let trials: Vec<TrialOutcome> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_stream(config.seed, trial as u64);
            let mut w = w0.clone();
            let mut u = DVector::zeros(d);
            let want_trace = config.record == Record::RiskTrace;
            let initial = risk(&w);
            let guard = Divergence::new(initial);
            let mut trace = want_trace.then(|| vec![initial]);
            let mut t = 0u64;
            let mut z = DVector::zeros(d);
            for eta in schedule.step_sizes() {
                let mut g = &h * (&w - &w_star);
                if problem.noise_variance() > 0.0 {
                    for j in 0..d {
                        let n: f64 = rng.sample(StandardNormal);
                        z[j] = noise_scale[j] * n;
                    }
                    g += &v * &z;
                }
                u = u * config.beta + g * eta;
                w -= &u;
                t += 1;
                let r = risk(&w);
                if let Some(tr) = trace.as_mut() {
                    tr.push(r);
                }
                if guard.hit(r) {
                    return TrialOutcome {
                        trial,
                        final_risk: None,
                        diverged_at: Some(t),
                        trace,
                    };
                }
            }
            TrialOutcome {
                trial,
                final_risk: Some(risk(&w)),
                diverged_at: None,
                trace,
            }
        })
        .collect();
    Ok(RunOutcome::from_trials(trials))
}

/// Constant in front of `T^{-(a-b)/b}` in the momentum rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TuningMode {
    /// `A = 256 · log₂T · ln T`.
    Strict,
    /// User constant, e.g. 10.
    Practical { c_a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `a ≤ b`: plain SGD with a shrunken initial step.
    SgdOptimal,
    /// `b < a ≤ 2b`: heavy ball with `1 − √β ∝ T^{-(a-b)/b}`.
    ShbOptimal,
    /// `a > 2b`.
    NoKnownOptimal,
}

impl Regime {
    pub fn classify(a: f64, b: f64) -> Self {
        if a <= b {
            Regime::SgdOptimal
        } else if a <= 2.0 * b {
            Regime::ShbOptimal
        } else {
            Regime::NoKnownOptimal
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Regime::SgdOptimal => "sgd_optimal",
            Regime::ShbOptimal => "shb_optimal",
            Regime::NoKnownOptimal => "no_known_optimal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TunedParameters {
    Tuned { beta: f64, eta0: f64, regime: Regime },
    NoOptimalTuning,
}

/// Momentum and initial step for decay `a` and source `b` at budget `T`.
pub fn select_parameters_thm43(a: f64, b: f64, lambda1: f64, total_iters: u64, mode: TuningMode) -> Result<TunedParameters> {
    if !(a > 1.0 && b > 1.0 && a.is_finite() && b.is_finite()) {
        return Err(invalid("a/b", format!("need a, b > 1, got a={a}, b={b}")));
    }
    if !(lambda1.is_finite() && lambda1 > 0.0) {
        return Err(invalid("lambda1", format!("must be positive, got {lambda1}")));
    }
    if total_iters < 2 {
        return Err(invalid("T", format!("need T >= 2, got {total_iters}")));
    }
    let t = total_iters as f64;
    let base_eta = 1.0 / (2.0 * lambda1);
    match Regime::classify(a, b) {
        Regime::SgdOptimal => Ok(TunedParameters::Tuned {
            beta: 0.0,
            eta0: base_eta * t.powf(-1.0 + a / b),
            regime: Regime::SgdOptimal,
        }),
        Regime::ShbOptimal => {
            let p = (a - b) / b;
            let gap = |tt: u64| -> f64 {
                let c = match mode {
                    TuningMode::Strict => theory_constant(tt),
                    TuningMode::Practical { c_a } => c_a,
                };
                c * (tt as f64).powf(-p)
            };
            if let TuningMode::Practical { c_a } = mode {
                if !(c_a.is_finite() && c_a > 0.0) {
                    return Err(invalid("c_A", format!("must be positive, got {c_a}")));
                }
            }
            let x = gap(total_iters);
            if x > 1.0 {
                if let TuningMode::Strict = mode {
                    return Err(Error::StrictTuningInvalid {
                        t: total_iters,
                        value: x,
                        min_t: min_valid_t(total_iters, gap),
                    });
                }
                return Err(invalid(
                    "c_A",
                    format!("c_A * T^-(a-b)/b = {x:.4} > 1 at T = {total_iters}; momentum would be malformed"),
                ));
            }
            Ok(TunedParameters::Tuned {
                beta: (1.0 - x) * (1.0 - x),
                eta0: base_eta,
                regime: Regime::ShbOptimal,
            })
        }
        Regime::NoKnownOptimal => Ok(TunedParameters::NoOptimalTuning),
    }
}

/// Smallest `T' ≥ T` with `gap(T') ≤ 1`, assuming `gap` is eventually decreasing.
fn min_valid_t(start: u64, gap: impl Fn(u64) -> f64) -> u64 {
    let mut hi = start.max(2);
    while gap(hi) > 1.0 {
        if hi > u64::MAX / 4 {
            return u64::MAX;
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if gap(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{exact_bias_variance, exact_risk};

    #[test]
    fn one_step_convergence_at_unit_step() {
        let p = QuadraticProblem::new(vec![1.0], vec![1.0], 0.0).unwrap();
        let mut cfg = RunConfig::new(0.0, 1.0, 2, 0, 1);
        cfg.record = Record::RiskTrace;
        let out = shb_run(&p, &cfg).unwrap();
        assert_eq!(out.trials[0].trace.as_deref(), Some(&[0.5, 0.0, 0.0][..]));
        assert_eq!(out.mean_risk, 0.0);
    }

    #[test]
    fn noiseless_sgd_matches_product_formula() {
        let p = QuadraticProblem::new(vec![1.0, 0.3, 0.01], vec![1.0, -2.0, 0.5], 0.0).unwrap();
        let cfg = RunConfig::new(0.0, 0.8, 500, 0, 1);
        let out = shb_run(&p, &cfg).unwrap();
        let s = cfg.schedule().unwrap();
        let expected: f64 = p
            .eigenvalues()
            .iter()
            .zip(p.optimum())
            .map(|(&l, &w)| {
                let prod: f64 = s.step_sizes().map(|e| 1.0 - e * l).product();
                0.5 * l * prod * prod * w * w
            })
            .sum();
        assert!((out.mean_risk - expected).abs() <= 1e-10 * expected);
        let exact = exact_bias_variance(&p, &s, 0.0).unwrap();
        assert!((exact.total - expected).abs() <= 1e-10 * expected);
    }

    #[test]
    fn start_at_optimum_stays_there() {
        let p = QuadraticProblem::new(vec![1.0, 0.5], vec![0.3, 0.7], 0.0).unwrap();
        let mut cfg = RunConfig::new(0.9, 0.5, 64, 3, 2);
        cfg.record = Record::RiskTrace;
        cfg.initial_point = Some(vec![0.3, 0.7]);
        let out = shb_run(&p, &cfg).unwrap();
        for t in &out.trials {
            assert!(t.trace.as_ref().unwrap().iter().all(|&r| r == 0.0));
        }
    }

    #[test]
    fn noisy_mean_within_four_standard_errors() {
        let p = QuadraticProblem::from_profiles(
            &crate::problem::SpectrumProfile::PowerLaw { a: 2.0, c: 1.0 },
            &crate::problem::OptimumProfile::LinfConstant { c: 1.0 },
            10,
            0.3,
        )
        .unwrap();
        for &beta in &[0.0, 0.5, 0.9] {
            let cfg = RunConfig::new(beta, 0.5, 256, 42, 500);
            let out = shb_run(&p, &cfg).unwrap();
            let exact = exact_risk(&p, &cfg.schedule().unwrap(), beta, None, false).unwrap();
            let z = (out.mean_risk - exact.total).abs() / out.standard_error();
            assert!(z <= 4.0, "beta {beta}: z = {z}");
            assert_eq!(out.n_diverged, 0);
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let p = QuadraticProblem::new(vec![1.0, 0.1], vec![1.0, 1.0], 0.3).unwrap();
        let cfg = RunConfig::new(0.5, 0.5, 128, 9, 8);
        assert_eq!(shb_run(&p, &cfg).unwrap(), shb_run(&p, &cfg).unwrap());
    }

    #[test]
    fn divergence_is_recorded_not_fatal() {
        let p = QuadraticProblem::new(vec![1.0], vec![1.0], 0.1).unwrap();
        let cfg = RunConfig::new(0.0, 5.0, 1024, 1, 3);
        let out = shb_run(&p, &cfg).unwrap();
        assert_eq!(out.n_diverged, 3);
        assert!(out.trials.iter().all(|t| t.diverged_at.is_some()));
        assert!(out.mean_risk.is_nan());
    }

    #[test]
    fn dense_identity_matches_eigen_mode() {
        let p = QuadraticProblem::new(vec![1.0, 0.5, 0.2, 0.05], vec![1.0, -1.0, 2.0, 0.5], 0.3).unwrap();
        let cfg = RunConfig::new(0.5, 0.7, 256, 5, 4);
        let a = shb_run(&p, &cfg).unwrap();
        let b = shb_run_dense(&p, &cfg, Basis::Identity).unwrap();
        for (x, y) in a.trials.iter().zip(&b.trials) {
            let (x, y) = (x.final_risk.unwrap(), y.final_risk.unwrap());
            assert!((x - y).abs() <= 1e-12 * (1.0 + x));
        }
    }

    #[test]
    fn dense_rotation_matches_eigen_mode() {
        let p = QuadraticProblem::new(vec![1.0, 0.5, 0.2, 0.05], vec![1.0, -1.0, 2.0, 0.5], 0.3).unwrap();
        for &beta in &[0.0, 0.9] {
            let cfg = RunConfig::new(beta, 0.7, 512, 5, 4);
            let a = shb_run(&p, &cfg).unwrap();
            let b = shb_run_dense(&p, &cfg, Basis::Random(17)).unwrap();
            for (x, y) in a.trials.iter().zip(&b.trials) {
                let (x, y) = (x.final_risk.unwrap(), y.final_risk.unwrap());
                assert!((x - y).abs() <= 1e-8 * (1.0 + x), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn dense_zero_problem() {
        let p = QuadraticProblem::new(vec![1.0, 0.5], vec![0.0, 0.0], 0.0).unwrap();
        let cfg = RunConfig::new(0.5, 0.5, 64, 0, 1);
        assert_eq!(shb_run(&p, &cfg).unwrap().mean_risk, 0.0);
        assert_eq!(shb_run_dense(&p, &cfg, Basis::Random(1)).unwrap().mean_risk, 0.0);
    }

    #[test]
    fn dense_rejects_large_dim() {
        let p = QuadraticProblem::new(vec![1.0; 600], vec![0.0; 600], 0.0).unwrap();
        let cfg = RunConfig::new(0.0, 0.5, 4, 0, 1);
        assert!(matches!(shb_run_dense(&p, &cfg, Basis::Identity), Err(Error::DenseTooLarge { .. })));
    }

    #[test]
    fn config_validation() {
        let p = QuadraticProblem::new(vec![1.0], vec![0.0], 0.0).unwrap();
        assert!(shb_run(&p, &RunConfig::new(1.0, 0.5, 16, 0, 1)).is_err());
        assert!(shb_run(&p, &RunConfig::new(0.0, 0.5, 1, 0, 1)).is_err());
        assert!(shb_run(&p, &RunConfig::new(0.0, -0.5, 16, 0, 1)).is_err());
        assert!(shb_run(&p, &RunConfig::new(0.0, 0.5, 16, 0, 0)).is_err());
    }

    #[test]
    fn tuning_sgd_regime() {
        let r = select_parameters_thm43(2.0, 3.0, 1.0, 4096, TuningMode::Strict).unwrap();
        match r {
            TunedParameters::Tuned { beta, eta0, regime } => {
                assert_eq!(beta, 0.0);
                assert!((eta0 - 0.03125).abs() < 1e-15);
                assert_eq!(regime, Regime::SgdOptimal);
            }
            _ => panic!("expected tuned"),
        }
    }

    #[test]
    fn tuning_practical_momentum() {
        let r = select_parameters_thm43(3.0, 2.0, 1.0, 1_000_000, TuningMode::Practical { c_a: 10.0 }).unwrap();
        match r {
            TunedParameters::Tuned { beta, eta0, regime } => {
                assert!((beta - 0.9801).abs() < 1e-12);
                assert_eq!(eta0, 0.5);
                assert_eq!(regime, Regime::ShbOptimal);
            }
            _ => panic!("expected tuned"),
        }
    }

    #[test]
    fn tuning_strict_is_malformed_at_desk_scale() {
        let err = select_parameters_thm43(3.0, 2.0, 1.0, 4096, TuningMode::Strict).unwrap_err();
        match err {
            Error::StrictTuningInvalid { value, min_t, .. } => {
                let a = 256.0 * 12.0 * 4096f64.ln();
                assert!((value - a / 64.0).abs() < 1e-9);
                // the reported T is the first valid one
                let gap = |t: u64| theory_constant(t) * (t as f64).powf(-0.5);
                assert!(gap(min_t) <= 1.0 && gap(min_t - 1) > 1.0);
                assert!(select_parameters_thm43(3.0, 2.0, 1.0, min_t, TuningMode::Strict).is_ok());
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn tuning_no_optimal_and_bad_inputs() {
        assert_eq!(
            select_parameters_thm43(5.0, 2.0, 1.0, 4096, TuningMode::Strict).unwrap(),
            TunedParameters::NoOptimalTuning
        );
        assert!(select_parameters_thm43(1.0, 2.0, 1.0, 4096, TuningMode::Strict).is_err());
        assert!(select_parameters_thm43(2.0, 0.5, 1.0, 4096, TuningMode::Strict).is_err());
    }
}
