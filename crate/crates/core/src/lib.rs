//! Heavy-ball SGD with exponentially decaying steps on high-dimensional
//! stochastic quadratics.
//!
//! The crate works in the Hessian eigenbasis, where each coordinate follows a
//! 2×2 linear recursion. It provides:
//!
//! * [`problem`]: spectra, source-condition optima and the Gaussian oracle;
//! * [`schedule`] and [`dynamics`]: the step schedule, Monte Carlo runs and
//!   the decay/source tuning rule;
//! * [`exact`] and [`momentum`]: exact expected risk via moment recursions and
//!   the momentum-matrix quantities used to bound it;
//! * [`bounds`]: upper and min-max lower bounds;
//! * [`rates`]: horizon sweeps, log-log fits and experiment presets;
//! * [`verify`]: randomized property suites.

pub mod bounds;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod exact;
pub mod linalg;
pub mod momentum;
pub mod problem;
pub mod rates;
pub mod report;
pub mod rng;
pub mod schedule;
pub mod verify;

pub use bounds::{
    effective_dimension, hard_instance_coords, linf_bounds, lower_bound_thm32, optimal_rate_exponent,
    upper_bound_thm31, BoundReport, LinfBounds, Validity,
};
pub use config::ExperimentConfig;
pub use dynamics::{
    select_parameters_thm43, shb_run, shb_run_dense, Basis, Record, Regime, RunConfig, RunOutcome, ShbState,
    TunedParameters, TuningMode,
};
pub use error::{Error, Result};
pub use exact::{bias_product_route, exact_bias_variance, exact_risk, CoordinateMoments, ExactRisk};
pub use momentum::{as_bs_decomposition, frobenius_power_norm, spectral_info, MomentumMatrix, SpectralInfo};
pub use problem::{build_optimum, build_spectrum, OptimumProfile, QuadraticProblem, SpectrumProfile};
pub use rates::{fit_rate, preset, run_sweep, Engine, RateFit, SweepResult, SweepSpec};
pub use schedule::{make_schedule, StepSchedule};
