//! Certified upper bound, min-max lower bound, ℓ∞ specialisations and the
//! optimal-rate map.
//!
//! The upper bound instantiates its constants with the explicit per-coordinate
//! values: `2¹⁰` for the bias, and `3⁶`, `256`, `64` for the variance.

use serde::{Deserialize, Serialize};

use crate::dynamics::Regime;
use crate::error::{invalid, Error, Result};
use crate::momentum::{max_certified_beta, theory_constant};
use crate::problem::QuadraticProblem;

/// Largest `k` (1-based) with `λ_k η₀ ≥ (1 − √β)/T`; 0 if none. Ties count.
pub fn effective_dimension(eigenvalues: &[f64], eta0: f64, beta: f64, total_iters: u64) -> usize {
    let threshold = (1.0 - beta.sqrt()) / total_iters as f64;
    last_index_at_least(eigenvalues, |l| l * eta0, threshold)
}

/// Number of leading eigenvalues passing `f(λ) ≥ threshold` (descending spectrum).
fn last_index_at_least(eigenvalues: &[f64], f: impl Fn(f64) -> f64, threshold: f64) -> usize {
    eigenvalues.partition_point(|&l| f(l) >= threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validity {
    /// `T ≥ 16`.
    pub horizon: bool,
    /// `η₀ ≤ 1/λ₁`.
    pub step_size: bool,
    /// `β ∈ [0, max(0, 1 − A/T)²]`.
    pub momentum: bool,
}

impl Validity {
    pub fn certified(&self) -> bool {
        self.horizon && self.step_size && self.momentum
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub k_star: usize,
    pub bias_bound: f64,
    pub variance_bound: f64,
    pub upper_total: f64,
    pub lower_bound: f64,
    pub a_value: f64,
    pub validity: Validity,
}

/// Upper bound on the expected excess risk after `T` steps from the origin,
/// together with the min-max lower bound using `|w*|` as the coordinate box.
pub fn upper_bound_thm31(problem: &QuadraticProblem, eta0: f64, beta: f64, total_iters: u64) -> Result<BoundReport> {
    if !(eta0.is_finite() && eta0 > 0.0) {
        return Err(invalid("eta0", format!("must be positive, got {eta0}")));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(invalid("beta", format!("must lie in [0, 1), got {beta}")));
    }
    if total_iters < 2 {
        return Err(invalid("T", format!("need T >= 2, got {total_iters}")));
    }
    let t = total_iters as f64;
    let big_a = theory_constant(total_iters);
    let log2t = t.log2();
    let lambdas = problem.eigenvalues();
    let w = problem.optimum();
    let lambda1 = problem.lambda_max();
    let k_star = effective_dimension(lambdas, eta0, beta, total_iters);
    let gap = 1.0 - beta.sqrt();

    let head_bias_coef = 1024.0 * log2t * log2t * big_a * gap / (eta0 * t);
    let head_bias: f64 = w[..k_star].iter().map(|x| x * x).sum::<f64>() * head_bias_coef;
    let tail_bias: f64 = lambdas[k_star..]
        .iter()
        .zip(&w[k_star..])
        .map(|(l, x)| l * x * x)
        .sum::<f64>()
        * 1024.0
        * log2t
        * log2t;
    let bias_bound = head_bias + tail_bias;

    let head_var = (729.0 * lambda1 * lambda1 * eta0 * eta0 + 256.0 * big_a * big_a) * k_star as f64 / t;
    let tail_var = 64.0 * eta0 * eta0 * t / (gap * gap) * lambdas[k_star..].iter().map(|l| l * l).sum::<f64>();
    let variance_bound = problem.noise_variance() * (head_var + tail_var);

    let wbar: Vec<f64> = w.iter().map(|x| x.abs()).collect();
    let lower_bound = lower_bound_thm32(lambdas, &wbar, problem.noise_variance(), total_iters)?;

    Ok(BoundReport {
        k_star,
        bias_bound,
        variance_bound,
        upper_total: bias_bound + variance_bound,
        lower_bound,
        a_value: big_a,
        validity: Validity {
            horizon: total_iters >= 16,
            step_size: eta0 * lambda1 <= 1.0,
            momentum: beta <= max_certified_beta(total_iters),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstance {
    pub coords: Vec<f64>,
    /// 1-based indices with `λ_k w̄_k² ≥ σ²/T`.
    pub informative: Vec<usize>,
}

fn check_lower_inputs(eigenvalues: &[f64], wbar: &[f64], sigma_sq: f64, total_iters: u64) -> Result<()> {
    if wbar.len() != eigenvalues.len() {
        return Err(Error::DimensionMismatch {
            expected: eigenvalues.len(),
            got: wbar.len(),
        });
    }
    if eigenvalues.iter().chain(wbar).any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(invalid("eigenvalues/wbar", "entries must be finite and non-negative"));
    }
    if !(sigma_sq >= 0.0 && sigma_sq.is_finite()) {
        return Err(invalid("sigma_sq", format!("must be >= 0, got {sigma_sq}")));
    }
    if total_iters == 0 {
        return Err(invalid("T", "must be positive"));
    }
    Ok(())
}

/// Coordinates of the hard instance: `σ/√(Tλ_k)` where the prior box is
/// large enough to be detectable, `w̄_k` otherwise.
pub fn hard_instance_coords(eigenvalues: &[f64], wbar: &[f64], sigma_sq: f64, total_iters: u64) -> Result<HardInstance> {
    check_lower_inputs(eigenvalues, wbar, sigma_sq, total_iters)?;
    let t = total_iters as f64;
    let level = sigma_sq / t;
    let mut informative = Vec::new();
    let coords = eigenvalues
        .iter()
        .zip(wbar)
        .enumerate()
        .map(|(k, (&l, &wb))| {
            if l * wb * wb >= level {
                informative.push(k + 1);
                (sigma_sq / (t * l)).sqrt()
            } else {
                wb
            }
        })
        .collect();
    Ok(HardInstance { coords, informative })
}

/// `⅛ (|𝓘| σ²/T + Σ_{i∉𝓘} λ_i w̄_i²)`.
pub fn lower_bound_thm32(eigenvalues: &[f64], wbar: &[f64], sigma_sq: f64, total_iters: u64) -> Result<f64> {
    check_lower_inputs(eigenvalues, wbar, sigma_sq, total_iters)?;
    let level = sigma_sq / total_iters as f64;
    let mut count = 0usize;
    let mut rest = 0.0;
    for (&l, &wb) in eigenvalues.iter().zip(wbar) {
        let e = l * wb * wb;
        if e >= level {
            count += 1;
        } else {
            rest += e;
        }
    }
    Ok((count as f64 * level + rest) / 8.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinfBounds {
    pub upper: f64,
    pub lower: f64,
    /// `max{k : λ_k ≥ 1/T}`.
    pub k_star: usize,
    /// `max{k : λ_k ≥ σ²/(Tc²)}`.
    pub k_star_1: usize,
}

/// Rates for `‖w*‖_∞ = c` with plain SGD (`β = 0`). The upper value is the
/// order expression without its unnamed constant.
pub fn linf_bounds(eigenvalues: &[f64], c: f64, sigma_sq: f64, total_iters: u64, eta0: f64) -> Result<LinfBounds> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid("c", format!("must be positive, got {c}")));
    }
    if !(sigma_sq >= 0.0) {
        return Err(invalid("sigma_sq", format!("must be >= 0, got {sigma_sq}")));
    }
    if eigenvalues.is_empty() || !(eta0 > 0.0 && eta0 * eigenvalues[0] <= 1.0) {
        return Err(invalid("eta0", format!("need 0 < η₀ ≤ 1/λ₁, got {eta0}")));
    }
    let t = total_iters as f64;
    let log2t = t.log2();
    let c2 = c * c;
    let k_star = last_index_at_least(eigenvalues, |l| l, 1.0 / t);
    let k_star_1 = last_index_at_least(eigenvalues, |l| l, sigma_sq / (t * c2));
    let tail = |k: usize| eigenvalues[k..].iter().sum::<f64>() * c2;
    let upper = (1.0 + sigma_sq) * (k_star as f64 * log2t.powi(4) / t + log2t * log2t * tail(k_star));
    let lower = (k_star_1 as f64 * sigma_sq / t + tail(k_star_1)) / 8.0;
    Ok(LinfBounds {
        upper,
        lower,
        k_star,
        k_star_1,
    })
}

/// Min-max exponent `−1 + 1/b` and which method attains it.
pub fn optimal_rate_exponent(a: f64, b: f64) -> Result<(f64, Regime)> {
    if !(a > 1.0 && b > 1.0) {
        return Err(invalid("a/b", format!("need a, b > 1, got a={a}, b={b}")));
    }
    Ok((-1.0 + 1.0 / b, Regime::classify(a, b)))
}
