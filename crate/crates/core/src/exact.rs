//! Exact expected excess risk of heavy-ball SGD on a diagonal quadratic.
//!
//! Each eigen-coordinate evolves independently. Stacking the current and
//! previous deviation `(w_t − w*, w_{t−1} − w*)`, the mean (bias part) obeys
//! `b_t = A_{t−1} b_{t−1}` and the noise part's second moment obeys
//! `C_t = A_{t−1} C_{t−1} A_{t−1}ᵀ + η²_{t−1} σ² λ e₁e₁ᵀ`. Zero-mean noise makes
//! the cross term vanish, so `E[f(w_T)] − f(w*) = ½ λ ((b_T)₁² + (C_T)₁₁)`
//! summed over coordinates, with no relaxation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Mat2;
use crate::momentum::MomentumMatrix;
use crate::problem::QuadraticProblem;
use crate::schedule::StepSchedule;

/// Coordinates per work unit; fixed so reductions do not depend on thread count.
const CHUNK: usize = 64;

const BIAS_FLUSH: f64 = 1e-250;
const FLUSH_EVERY: usize = 32;

/// Mean deviation and noise second moment for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinateMoments {
    /// `(E[w_t] − w*, E[w_{t−1}] − w*)`.
    pub bias_vec: [f64; 2],
    /// Symmetric `[[c11, c12], [c12, c22]]` stored as `(c11, c12, c22)`.
    pub cov: [f64; 3],
}

impl CoordinateMoments {
    pub fn start(deviation: f64) -> Self {
        Self {
            bias_vec: [deviation, deviation],
            cov: [0.0; 3],
        }
    }

    /// One step with momentum `beta`, step `eta` on a coordinate with
    /// eigenvalue `lambda` and per-step noise variance `noise` (`σ²λ`).
    #[inline]
    pub fn step(&mut self, beta: f64, eta: f64, lambda: f64, noise: f64) {
        let a = 1.0 + beta - eta * lambda;
        let [b0, b1] = self.bias_vec;
        self.bias_vec = [a * b0 - beta * b1, b0];
        let [c11, c12, c22] = self.cov;
        self.cov = [
            a * a * c11 - 2.0 * a * beta * c12 + beta * beta * c22 + eta * eta * noise,
            a * c11 - beta * c12,
            c11,
        ];
    }

    /// Advance `n` steps with a constant step size. Without momentum this is
    /// a closed form costing `O(1)`; with momentum it steps `n` times, since
    /// powering the covariance map loses accuracy as `β → 1`.
    pub fn advance(&mut self, beta: f64, eta: f64, lambda: f64, noise: f64, n: u64) {
        if n == 0 {
            return;
        }
        if beta == 0.0 {
            // Closed form for the first n − 1 steps keeps the previous iterate
            // available for the stacked state.
            self.advance_sgd(eta * lambda, eta * eta * noise, n - 1);
            self.step(beta, eta, lambda, noise);
            return;
        }
        for i in 0..n {
            self.step(beta, eta, lambda, noise);
            if i % FLUSH_EVERY as u64 == 0 {
                self.flush_tiny_bias();
            }
        }
    }

    /// `n` steps of `x ← r x`, `c ← r² c + q` with `r = 1 − ηλ`, via
    /// `log1p`/`expm1` so that tiny `ηλ` keeps full precision.
    fn advance_sgd(&mut self, eta_lambda: f64, input: f64, n: u64) {
        if n == 0 {
            return;
        }
        let nf = n as f64;
        let r = 1.0 - eta_lambda;
        if r == 0.0 {
            self.bias_vec = [0.0, if n == 1 { self.bias_vec[0] } else { 0.0 }];
            let prev = if n == 1 { self.cov[0] } else { input };
            self.cov = [input, 0.0, prev];
            return;
        }
        let ln_r = if eta_lambda < 1.0 {
            (-eta_lambda).ln_1p()
        } else {
            (eta_lambda - 1.0).ln()
        };
        let sign = if r < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
        let growth = sign * (nf * ln_r).exp();
        let prev_growth = if n == 1 {
            1.0
        } else {
            (if r < 0.0 && n.is_multiple_of(2) { -1.0 } else { 1.0 }) * ((nf - 1.0) * ln_r).exp()
        };
        let x = self.bias_vec[0];
        self.bias_vec = [growth * x, prev_growth * x];
        let geometric = |k: f64| {
            // Σ_{i<k} r^{2i}
            if ln_r == 0.0 {
                k
            } else {
                (2.0 * k * ln_r).exp_m1() / (2.0 * ln_r).exp_m1()
            }
        };
        let c = self.cov[0];
        let c_n = (2.0 * nf * ln_r).exp() * c + input * geometric(nf);
        let c_prev = (2.0 * (nf - 1.0) * ln_r).exp() * c + input * geometric(nf - 1.0);
        self.cov = [c_n, r * c_prev, c_prev];
    }

    /// PSD check with tolerance scaled by `max(1, ‖C‖_∞)`.
    pub fn cov_is_psd(&self) -> bool {
        let [c11, c12, c22] = self.cov;
        if !(c11.is_finite() && c12.is_finite() && c22.is_finite()) {
            return false;
        }
        let scale = 1f64.max(c11.abs().max(c12.abs()).max(c22.abs()));
        c11 >= -1e-14 * scale && c22 >= -1e-14 * scale && c11 * c22 - c12 * c12 >= -1e-12 * scale * scale
    }

    /// Zero bias entries below [`BIAS_FLUSH`]. Their squares underflow anyway,
    /// and subnormal arithmetic is very slow.
    #[inline]
    pub fn flush_tiny_bias(&mut self) {
        for b in &mut self.bias_vec {
            if b.abs() < BIAS_FLUSH {
                *b = 0.0;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bias_vec.iter().chain(&self.cov).all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinateRisk {
    pub bias: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactRisk {
    pub per_coordinate: Vec<CoordinateRisk>,
    pub bias: f64,
    pub variance: f64,
    pub total: f64,
    /// Expected excess risk at `t = 0..=T`, when requested.
    pub trace: Option<Vec<f64>>,
}

impl ExactRisk {
    fn from_parts(per_coordinate: Vec<CoordinateRisk>, trace: Option<Vec<f64>>) -> Self {
        let bias: f64 = per_coordinate.iter().map(|r| r.bias).sum();
        let variance: f64 = per_coordinate.iter().map(|r| r.variance).sum();
        ExactRisk {
            per_coordinate,
            bias,
            variance,
            total: bias + variance,
            trace,
        }
    }
}

fn check_inputs(problem: &QuadraticProblem, beta: f64, initial: Option<&[f64]>) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(invalid("beta", format!("must lie in [0, 1), got {beta}")));
    }
    if let Some(w0) = initial {
        if w0.len() != problem.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.dim(),
                got: w0.len(),
            });
        }
    }
    Ok(())
}

/// Exact bias/variance decomposition from `w₀ = 0`.
pub fn exact_bias_variance(problem: &QuadraticProblem, schedule: &StepSchedule, beta: f64) -> Result<ExactRisk> {
    exact_risk(problem, schedule, beta, None, false)
}

/// General entry point: optional initial point and optional per-step trace.
///
/// Without momentum and without a trace each constant-step stage is advanced
/// in closed form, so the cost is `O(d log T)`; otherwise every step is
/// evaluated.
pub fn exact_risk(
    problem: &QuadraticProblem,
    schedule: &StepSchedule,
    beta: f64,
    initial: Option<&[f64]>,
    with_trace: bool,
) -> Result<ExactRisk> {
    if with_trace || beta != 0.0 {
        return exact_risk_forward(problem, schedule, beta, initial, with_trace);
    }
    check_inputs(problem, beta, initial)?;
    let sigma_sq = problem.noise_variance();
    let lambdas = problem.eigenvalues();
    let optimum = problem.optimum();
    let risks: Vec<Result<CoordinateRisk>> = (0..problem.dim())
        .into_par_iter()
        .with_min_len(CHUNK)
        .map(|j| {
            let lambda = lambdas[j];
            let mut m = CoordinateMoments::start(initial.map_or(0.0, |w| w[j]) - optimum[j]);
            for stage in schedule.stages() {
                m.advance(beta, stage.step_size, lambda, sigma_sq * lambda, stage.len);
                if !m.is_finite() {
                    return Err(Error::NonFinite {
                        coordinate: j,
                        step: stage.start + stage.len,
                    });
                }
            }
            Ok(CoordinateRisk {
                bias: 0.5 * lambda * m.bias_vec[0] * m.bias_vec[0],
                variance: 0.5 * lambda * m.cov[0],
            })
        })
        .collect();
    let per_coordinate = risks.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ExactRisk::from_parts(per_coordinate, None))
}

/// Step-by-step forward recursion over all `T` steps.
pub fn exact_risk_forward(
    problem: &QuadraticProblem,
    schedule: &StepSchedule,
    beta: f64,
    initial: Option<&[f64]>,
    with_trace: bool,
) -> Result<ExactRisk> {
    check_inputs(problem, beta, initial)?;
    let d = problem.dim();
    let t_total = schedule.total_iters() as usize;
    let sigma_sq = problem.noise_variance();
    let lambdas = problem.eigenvalues();
    let optimum = problem.optimum();

    struct ChunkOut {
        risks: Vec<CoordinateRisk>,
        trace: Option<Vec<f64>>,
    }

    let chunks: Vec<Result<ChunkOut>> = (0..d.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let range = c * CHUNK..((c + 1) * CHUNK).min(d);
            let lam = &lambdas[range.clone()];
            let n = lam.len();
            let mut moments: Vec<CoordinateMoments> = range
                .clone()
                .map(|j| CoordinateMoments::start(initial.map_or(0.0, |w| w[j]) - optimum[j]))
                .collect();
            let noise: Vec<f64> = lam.iter().map(|l| sigma_sq * l).collect();
            let mut trace = with_trace.then(|| vec![0.0; t_total + 1]);
            if let Some(tr) = trace.as_mut() {
                tr[0] = (0..n)
                    .map(|i| 0.5 * lam[i] * moments[i].bias_vec[0] * moments[i].bias_vec[0])
                    .sum();
            }
            // Steps outside, coordinates inside: the inner loop has no
            // dependency chain and pipelines well.
            let mut t = 0usize;
            for stage in schedule.stages() {
                let eta = stage.step_size;
                for _ in 0..stage.len {
                    for i in 0..n {
                        moments[i].step(beta, eta, lam[i], noise[i]);
                    }
                    t += 1;
                    if t.is_multiple_of(FLUSH_EVERY) {
                        moments.iter_mut().for_each(CoordinateMoments::flush_tiny_bias);
                    }
                    if let Some(tr) = trace.as_mut() {
                        tr[t] = (0..n)
                            .map(|i| 0.5 * lam[i] * (moments[i].bias_vec[0] * moments[i].bias_vec[0] + moments[i].cov[0]))
                            .sum();
                    }
                }
                if let Some(i) = moments.iter().position(|m| !m.is_finite()) {
                    return Err(Error::NonFinite {
                        coordinate: range.start + i,
                        step: t as u64,
                    });
                }
            }
            let risks = (0..n)
                .map(|i| CoordinateRisk {
                    bias: 0.5 * lam[i] * moments[i].bias_vec[0] * moments[i].bias_vec[0],
                    variance: 0.5 * lam[i] * moments[i].cov[0],
                })
                .collect();
            Ok(ChunkOut { risks, trace })
        })
        .collect();

    let mut per_coordinate = Vec::with_capacity(d);
    let mut trace = with_trace.then(|| vec![0.0; t_total + 1]);
    for chunk in chunks {
        let chunk = chunk?;
        per_coordinate.extend(chunk.risks);
        if let (Some(acc), Some(part)) = (trace.as_mut(), chunk.trace) {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
    }
    Ok(ExactRisk::from_parts(per_coordinate, trace))
}

/// Moment trajectory of a single coordinate, every step included.
pub fn coordinate_trajectory(
    lambda: f64,
    deviation: f64,
    sigma_sq: f64,
    schedule: &StepSchedule,
    beta: f64,
) -> Vec<CoordinateMoments> {
    let mut m = CoordinateMoments::start(deviation);
    let mut out = Vec::with_capacity(schedule.total_iters() as usize + 1);
    out.push(m);
    for eta in schedule.step_sizes() {
        m.step(beta, eta, lambda, sigma_sq * lambda);
        out.push(m);
    }
    out
}

/// Product `A_{T−1} ⋯ A_0` for one coordinate, accumulated step by step.
pub fn momentum_product(lambda: f64, schedule: &StepSchedule, beta: f64) -> Mat2 {
    let mut acc = Mat2::IDENTITY;
    for eta in schedule.step_sizes() {
        acc = MomentumMatrix::new(beta, eta * lambda).matrix() * acc;
    }
    acc
}

/// Bias risks through the full matrix product:
/// `½ λ_j ((A_{T−1}⋯A_0 [1;1])₁)² (w*_j)²`, from `w₀ = 0`.
pub fn bias_product_route(problem: &QuadraticProblem, schedule: &StepSchedule, beta: f64) -> Result<Vec<f64>> {
    check_inputs(problem, beta, None)?;
    let out: Vec<Result<f64>> = problem
        .eigenvalues()
        .par_iter()
        .zip(problem.optimum().par_iter())
        .enumerate()
        .map(|(j, (&lambda, &w))| {
            let m = momentum_product(lambda, schedule, beta);
            if !m.is_finite() {
                return Err(Error::NonFinite {
                    coordinate: j,
                    step: schedule.total_iters(),
                });
            }
            let first = m.apply([1.0, 1.0])[0];
            Ok(0.5 * lambda * first * first * w * w)
        })
        .collect();
    out.into_iter().collect()
}
