//! The 2×2 momentum matrix `A = [[1+β−ηλ, −β], [1, 0]]` driving each
//! eigen-coordinate, its spectrum, and the power/stage quantities used to
//! bound products of such matrices.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::Mat2;

/// `A_t^{(j)}` for momentum `β` and effective step `η_t λ_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumMatrix {
    pub beta: f64,
    pub eta_lambda: f64,
}

impl MomentumMatrix {
    pub fn new(beta: f64, eta_lambda: f64) -> Self {
        Self { beta, eta_lambda }
    }

    pub fn matrix(&self) -> Mat2 {
        Mat2([[1.0 + self.beta - self.eta_lambda, -self.beta], [1.0, 0.0]])
    }

    pub fn trace(&self) -> f64 {
        1.0 + self.beta - self.eta_lambda
    }

    pub fn det(&self) -> f64 {
        self.beta
    }
}

/// An eigenvalue as a (real, imaginary) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl Eigenvalue {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralInfo {
    /// `Δ² = (1+β−ηλ)² − 4β`.
    pub discriminant: f64,
    /// Larger-real-part root first.
    pub eigenvalues: [Eigenvalue; 2],
    pub spectral_radius: f64,
}

impl SpectralInfo {
    pub fn is_real(&self) -> bool {
        self.discriminant >= 0.0
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(invalid("beta", format!("must lie in [0, 1), got {beta}")));
    }
    Ok(())
}

/// Eigenvalues and spectral radius of the momentum matrix.
pub fn spectral_info(beta: f64, eta_lambda: f64) -> Result<SpectralInfo> {
    check_beta(beta)?;
    if !(eta_lambda.is_finite() && eta_lambda >= 0.0) {
        return Err(invalid("eta_lambda", format!("must be finite and >= 0, got {eta_lambda}")));
    }
    let tr = 1.0 + beta - eta_lambda;
    let disc = tr * tr - 4.0 * beta;
    let info = if disc >= 0.0 {
        let root = disc.sqrt();
        let g1 = 0.5 * (tr + root);
        let g2 = 0.5 * (tr - root);
        SpectralInfo {
            discriminant: disc,
            eigenvalues: [Eigenvalue { re: g1, im: 0.0 }, Eigenvalue { re: g2, im: 0.0 }],
            spectral_radius: g1.abs().max(g2.abs()),
        }
    } else {
        let im = 0.5 * (-disc).sqrt();
        SpectralInfo {
            discriminant: disc,
            eigenvalues: [
                Eigenvalue { re: 0.5 * tr, im },
                Eigenvalue { re: 0.5 * tr, im: -im },
            ],
            // |γ|² = det = β for a conjugate pair
            spectral_radius: beta.sqrt(),
        }
    };
    Ok(info)
}

/// Upper bound on the spectral radius in the real-eigenvalue regime:
/// `1 − ηλ/2 − ηλ/(4(1−√β))`.
pub fn real_regime_radius_bound(beta: f64, eta_lambda: f64) -> f64 {
    1.0 - eta_lambda / 2.0 - eta_lambda / (4.0 * (1.0 - beta.sqrt()))
}

/// `‖A^k‖_F` by repeated multiplication.
pub fn frobenius_power_norm(beta: f64, eta_lambda: f64, k: u64) -> Result<f64> {
    if k < 1 {
        return Err(invalid("k", "power must be at least 1"));
    }
    let a = MomentumMatrix::new(beta, eta_lambda).matrix();
    let mut acc = a;
    for _ in 1..k {
        acc = a * acc;
    }
    Ok(acc.frobenius())
}

/// Bound on `‖A^k‖_F`: 3 for `k = 1`, otherwise
/// `min(4ρ^{k−1}/√|Δ²|, 3kρ^{k−2})`.
pub fn frobenius_power_bound(beta: f64, eta_lambda: f64, k: u64) -> Result<f64> {
    if k < 1 {
        return Err(invalid("k", "power must be at least 1"));
    }
    if k == 1 {
        return Ok(3.0);
    }
    let info = spectral_info(beta, eta_lambda)?;
    let rho = info.spectral_radius;
    let separated = 4.0 / info.discriminant.abs().sqrt() * rho.powi((k - 1) as i32);
    let jordan = 3.0 * k as f64 * rho.powi((k - 2) as i32);
    Ok(separated.min(jordan))
}

/// Spectral norm of `A^K` for a single stage of length `K`.
pub fn stage_power_norm(beta: f64, eta_lambda: f64, stage_len: u64) -> f64 {
    MomentumMatrix::new(beta, eta_lambda)
        .matrix()
        .pow(stage_len)
        .spectral_norm()
}

/// `A = 256 · log₂T · ln T`.
pub fn theory_constant(total_iters: u64) -> f64 {
    let t = total_iters as f64;
    256.0 * t.log2() * t.ln()
}

/// Largest momentum admitted by the theory, `max(0, 1 − A/T)²`; zero when `A ≥ T`.
pub fn max_certified_beta(total_iters: u64) -> f64 {
    let r = 1.0 - theory_constant(total_iters) / total_iters as f64;
    if r <= 0.0 {
        0.0
    } else {
        r * r
    }
}

/// Decomposition `(A_{sK})^K [1;1] = a_s [1;1] + b_s [0;1]` for stage `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageDecomposition {
    pub a: f64,
    pub b: f64,
    /// `η₀λ < A(1−√β)/(2T)` (small-coordinate regime).
    pub precondition_holds: bool,
    /// `0 ≤ a < 1`.
    pub a_in_range: bool,
    /// `|b| ≤ 8η₀λ/(1−√β)`.
    pub b_within_bound: bool,
}

/// Stage decomposition for a schedule with `total_iters` steps. The stage
/// matrix uses `ηλ = η₀λ/4^s` and `K = ⌊T/⌊log₂T⌋⌋`.
pub fn as_bs_decomposition(
    beta: f64,
    eta0_lambda: f64,
    total_iters: u64,
    stage: u32,
) -> Result<StageDecomposition> {
    check_beta(beta)?;
    let schedule = crate::schedule::StepSchedule::new(1.0, total_iters)?;
    if stage >= schedule.n_stages() {
        return Err(invalid(
            "stage",
            format!("schedule has {} stages, got index {stage}", schedule.n_stages()),
        ));
    }
    let k = schedule.stage_len();
    let eta_lambda = eta0_lambda * 0.25f64.powi(stage as i32);
    let v = MomentumMatrix::new(beta, eta_lambda)
        .matrix()
        .pow(k)
        .apply([1.0, 1.0]);
    let a = v[0];
    let b = v[1] - v[0];
    let sb = 1.0 - beta.sqrt();
    let threshold = theory_constant(total_iters) * sb / (2.0 * total_iters as f64);
    Ok(StageDecomposition {
        a,
        b,
        precondition_holds: eta0_lambda < threshold,
        a_in_range: (0.0..1.0).contains(&a),
        b_within_bound: b.abs() <= 8.0 * eta0_lambda / sb,
    })
}
