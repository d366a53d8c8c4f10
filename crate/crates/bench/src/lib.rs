//! Benchmark fixtures shared by the criterion targets.

use shb_core::{OptimumProfile, QuadraticProblem, SpectrumProfile};

/// Power-law problem with `a = 2`, `b = 3`, `σ² = 0.3`.
pub fn power_law_problem(dim: usize) -> QuadraticProblem {
    QuadraticProblem::from_profiles(
        &SpectrumProfile::PowerLaw { a: 2.0, c: 1.0 },
        &OptimumProfile::SourceCondition { b: 3.0 },
        dim,
        0.3,
    )
    .expect("valid benchmark problem")
}
