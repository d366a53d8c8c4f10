//! Diagonal quadratic problems in the Hessian eigenbasis.
//!
//! A problem is fully described by its eigenvalues `λ_1 ≥ … ≥ λ_d > 0`, the
//! optimum coordinates `w*` in the same basis and the noise level `σ²`. The
//! stochastic oracle returns `λ_j (w_j − w*_j) + ζ_j` with
//! `ζ_j ~ N(0, σ² λ_j)` independently across coordinates, which is the
//! equality case of the anisotropic noise assumption `E[ζζᵀ] ⪯ σ² H`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the Hessian spectrum. All constants in front of the decay are 1
/// except the power-law scale `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumProfile {
    /// `λ_i = c · i^{-a}`.
    PowerLaw {
        a: f64,
        #[serde(default = "one")]
        c: f64,
    },
    /// `λ_i = i^{-1} · ln^{-c}(i + 1)`.
    LogAdjusted { c: f64 },
    /// `λ_i = e^{-i}`.
    Exponential,
    Explicit { values: Vec<f64> },
}

/// Prior on the optimum coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimumProfile {
    /// `λ_i (w*_i)² = i^{-b}` with the positive root.
    SourceCondition { b: f64 },
    /// `w*_i = c` for every coordinate.
    LinfConstant { c: f64 },
    Explicit { values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl SpectrumProfile {
    /// Whether a theory operation that needs `a > 1` may consume this spectrum.
    /// Construction itself never rejects `a ≤ 1`.
    pub fn satisfies_decay_condition(&self) -> bool {
        match self {
            SpectrumProfile::PowerLaw { a, .. } => *a > 1.0,
            _ => true,
        }
    }

    pub fn power_law_exponent(&self) -> Option<f64> {
        match self {
            SpectrumProfile::PowerLaw { a, .. } => Some(*a),
            _ => None,
        }
    }
}

impl OptimumProfile {
    pub fn source_exponent(&self) -> Option<f64> {
        match self {
            OptimumProfile::SourceCondition { b } => Some(*b),
            _ => None,
        }
    }
}

/// Eigenvalues for `profile` in dimension `dim`, descending and positive.
pub fn build_spectrum(profile: &SpectrumProfile, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::InvalidSpectrum("dimension must be positive".into()));
    }
    let values: Vec<f64> = match profile {
        SpectrumProfile::PowerLaw { a, c } => {
            if !(a.is_finite() && c.is_finite() && *c > 0.0) {
                return Err(Error::InvalidSpectrum(format!(
                    "power law needs finite a and c > 0, got a={a}, c={c}"
                )));
            }
            if *a < 0.0 {
                return Err(Error::InvalidSpectrum(format!(
                    "power law exponent must be non-negative for a descending spectrum, got {a}"
                )));
            }
            (1..=dim).map(|i| c * (i as f64).powf(-a)).collect()
        }
        SpectrumProfile::LogAdjusted { c } => {
            if !c.is_finite() {
                return Err(Error::InvalidSpectrum(format!("log exponent must be finite, got {c}")));
            }
            (1..=dim)
                .map(|i| {
                    let i = i as f64;
                    1.0 / (i * (i + 1.0).ln().powf(*c))
                })
                .collect()
        }
        SpectrumProfile::Exponential => (1..=dim).map(|i| (-(i as f64)).exp()).collect(),
        SpectrumProfile::Explicit { values } => {
            if values.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: values.len(),
                });
            }
            values.clone()
        }
    };
    check_spectrum(&values)?;
    Ok(values)
}

fn check_spectrum(values: &[f64]) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidSpectrum(format!(
                "eigenvalue {} is not a positive finite number ({v})",
                i + 1
            )));
        }
        if i > 0 && v > values[i - 1] {
            return Err(Error::InvalidSpectrum(format!(
                "eigenvalues must be non-increasing: λ_{} = {} < λ_{} = {v}",
                i,
                values[i - 1],
                i + 1
            )));
        }
    }
    Ok(())
}

/// Optimum coordinates for `profile` given the eigenvalues.
pub fn build_optimum(profile: &OptimumProfile, eigenvalues: &[f64]) -> Result<Vec<f64>> {
    match profile {
        OptimumProfile::SourceCondition { b } => {
            if !b.is_finite() {
                return Err(Error::InvalidOptimum(format!("source exponent must be finite, got {b}")));
            }
            Ok(eigenvalues
                .iter()
                .enumerate()
                .map(|(k, &lambda)| ((k as f64 + 1.0).powf(-b) / lambda).sqrt())
                .collect())
        }
        OptimumProfile::LinfConstant { c } => {
            if !(c.is_finite() && *c > 0.0) {
                return Err(Error::InvalidOptimum(format!("ℓ∞ level must be positive, got {c}")));
            }
            Ok(vec![*c; eigenvalues.len()])
        }
        OptimumProfile::Explicit { values } => {
            if values.len() != eigenvalues.len() {
                return Err(Error::DimensionMismatch {
                    expected: eigenvalues.len(),
                    got: values.len(),
                });
            }
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidOptimum(format!("non-finite coordinate {v}")));
            }
            Ok(values.clone())
        }
    }
}

/// A quadratic `f(w) = ½ Σ λ_j (w_j − w*_j)²` with its Gaussian oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticProblem {
    eigenvalues: Vec<f64>,
    optimum: Vec<f64>,
    noise_variance: f64,
}

impl QuadraticProblem {
    pub fn new(eigenvalues: Vec<f64>, optimum: Vec<f64>, noise_variance: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidSpectrum("empty spectrum".into()));
        }
        check_spectrum(&eigenvalues)?;
        if optimum.len() != eigenvalues.len() {
            return Err(Error::DimensionMismatch {
                expected: eigenvalues.len(),
                got: optimum.len(),
            });
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(crate::error::invalid(
                "sigma_sq",
                format!("noise variance must be finite and >= 0, got {noise_variance}"),
            ));
        }
        Ok(Self {
            eigenvalues,
            optimum,
            noise_variance,
        })
    }

    pub fn from_profiles(
        spectrum: &SpectrumProfile,
        optimum: &OptimumProfile,
        dim: usize,
        noise_variance: f64,
    ) -> Result<Self> {
        let eigenvalues = build_spectrum(spectrum, dim)?;
        let optimum = build_optimum(optimum, &eigenvalues)?;
        Self::new(eigenvalues, optimum, noise_variance)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn optimum(&self) -> &[f64] {
        &self.optimum
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn with_noise_variance(&self, noise_variance: f64) -> Result<Self> {
        Self::new(self.eigenvalues.clone(), self.optimum.clone(), noise_variance)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Stochastic gradient at `w`; consumes `d` standard normals from `rng`
    /// in coordinate order.
    pub fn sample_gradient_coords<R: Rng + ?Sized>(&self, w: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.sample_gradient_into(w, rng, &mut out)?;
        Ok(out)
    }

    pub fn sample_gradient_into<R: Rng + ?Sized>(&self, w: &[f64], rng: &mut R, out: &mut [f64]) -> Result<()> {
        self.check_len(w.len())?;
        self.check_len(out.len())?;
        let sigma = self.noise_variance.sqrt();
        for (j, g) in out.iter_mut().enumerate() {
            let lambda = self.eigenvalues[j];
            let mut value = lambda * (w[j] - self.optimum[j]);
            if sigma > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                value += sigma * lambda.sqrt() * z;
            }
            *g = value;
        }
        Ok(())
    }

    /// `f(w) − f(w*) = ½ Σ λ_j (w_j − w*_j)²`.
    pub fn excess_risk(&self, w: &[f64]) -> Result<f64> {
        self.check_len(w.len())?;
        Ok(self.excess_risk_unchecked(w))
    }

    pub(crate) fn excess_risk_unchecked(&self, w: &[f64]) -> f64 {
        0.5 * self
            .eigenvalues
            .iter()
            .zip(&self.optimum)
            .zip(w)
            .map(|((l, o), x)| l * (x - o) * (x - o))
            .sum::<f64>()
    }
}
