//! Evaluation statistics: KS validation, pass rates and propensity matching.

mod ks;
mod psm;

use serde::{Deserialize, Serialize};

pub use ks::{asymptotic_p, kolmogorov_q, ks_two_sample, ks_two_sample_with, KsMethod, KsResult};
pub use psm::{logistic_fit, propensity_match, smd, LevelBalance, MatchResult, Pair, Unit};

use crate::error::StatsError;

/// Default significance threshold; a behaviour passes when p > alpha.
pub const ALPHA: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub ks: KsResult,
    pub pass: bool,
}

/// Strict threshold rule: pass iff `p > alpha`.
pub fn passes(p_value: f64, alpha: f64) -> bool {
    p_value > alpha
}

pub fn validate_behavior(
    simulated: &[u8],
    observed: &[u8],
    alpha: f64,
    method: KsMethod,
) -> Result<Validation, StatsError> {
    let a: Vec<f64> = simulated.iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = observed.iter().map(|&v| v as f64).collect();
    let ks = ks_two_sample_with(&a, &b, method)?;
    Ok(Validation {
        ks,
        pass: passes(ks.p_value, alpha),
    })
}

/// Percentage of passes, rounded to one decimal.
pub fn pass_rate(flags: &[bool]) -> Result<f64, StatsError> {
    if flags.is_empty() {
        return Err(StatsError::Empty("pass_rate"));
    }
    let passed = flags.iter().filter(|f| **f).count() as f64;
    Ok((1000.0 * passed / flags.len() as f64).round() / 10.0)
}
