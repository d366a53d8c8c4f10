//! CSV rendering of sweep results.
//!
//! Columns: `preset,T,engine,trial,risk,bias,variance,upper_bound,lower_bound,k_star,diverged`.
//! Floats use 17 significant digits; empty fields mean "not applicable".

use std::fmt::Write;

use crate::rates::{RateFit, SweepResult};

pub const SWEEP_HEADER: &str = "preset,T,engine,trial,risk,bias,variance,upper_bound,lower_bound,k_star,diverged";
pub const FIT_HEADER: &str = "preset,engine,slope,intercept,residual_rms,points_used,reference_slope";

/// `x` with 17 significant digits; round-trips every f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Rows for one sweep, without header. Exact points leave `trial` empty;
/// Monte Carlo points produce one row per trial.
pub fn sweep_rows(label: &str, sweep: &SweepResult) -> String {
    let mut out = String::new();
    let engine = sweep.engine.label();
    for p in &sweep.points {
        let common_tail = |risk: Option<f64>, diverged: bool| {
            format!(
                "{},{},{},{},{},{},{}",
                opt(risk),
                opt(p.bias),
                opt(p.variance),
                fmt_f64(p.upper_bound),
                fmt_f64(p.lower_bound),
                p.k_star,
                diverged
            )
        };
        if p.trial_risks.is_empty() {
            let diverged = p.n_diverged > 0;
            let risk = (!diverged).then_some(p.mean_risk);
            writeln!(out, "{label},{},{engine},,{}", p.t, common_tail(risk, diverged)).unwrap();
        } else {
            for (k, r) in p.trial_risks.iter().enumerate() {
                writeln!(out, "{label},{},{engine},{k},{}", p.t, common_tail(*r, r.is_none())).unwrap();
            }
        }
    }
    out
}

pub fn fit_row(label: &str, engine: &str, fit: &RateFit, reference: Option<f64>) -> String {
    format!(
        "{label},{engine},{},{},{},{},{}\n",
        fmt_f64(fit.slope),
        fmt_f64(fit.intercept),
        fmt_f64(fit.residual_rms),
        fit.points_used,
        opt(reference)
    )
}
