//! Estimation for continuous capped sample-and-hold.
//!
//! The inclusion probability has the closed form
//! (1 - exp(-w max(1/l, tau))) min(1, tau l), and the streaming estimator is
//! a per-count coefficient beta(c) = f(c)/min(1, l tau) + f'(c)/tau, valid
//! for any f that is differentiable almost everywhere.

use crate::continuous::ContinuousSample;
use crate::error::{Error, Result};
use crate::types::{FrequencyFunction, Key, SegmentPredicate, Threshold};

/// P[key of weight w is sampled] at threshold tau with cap parameter l.
/// Monotone non-decreasing and concave in w, with range (0, min(1, tau*l)].
pub fn inclusion_probability_continuous(w: f64, tau: f64, ell: f64) -> f64 {
    debug_assert!(w > 0.0 && tau > 0.0 && ell > 0.0);
    -(-w * tau.max(1.0 / ell)).exp_m1() * (tau * ell).min(1.0)
}

/// Unbiased per-count coefficient beta(c) = f(c)/min(1, l tau) + f'(c)/tau.
/// Nonnegative whenever f is monotone non-decreasing.
pub fn beta_continuous(c: f64, tau: f64, ell: f64, f: &FrequencyFunction) -> Result<f64> {
    debug_assert!(c > 0.0);
    Ok(f.value(c) / (ell * tau).min(1.0) + f.derivative(c)? / tau)
}

/// Streaming estimate of Q(f, H) from a continuous sample.
///
/// A never-full fixed-size sample (tau still infinite) retained every active
/// key with its exact weight, so the statistic is summed exactly instead of
/// going through the coefficients.
pub fn estimate_continuous_1pass(
    sample: &ContinuousSample,
    f: &FrequencyFunction,
    segment: &SegmentPredicate,
) -> Result<f64> {
    let mut total = 0.0;
    match sample.tau {
        Threshold::Infinite => {
            for (key, count) in &sample.entries {
                if segment.contains(*key) {
                    total += f.value(*count);
                }
            }
        }
        Threshold::Finite(tau) => {
            for (key, count) in &sample.entries {
                if segment.contains(*key) {
                    total += beta_continuous(*count, tau, sample.ell, f)?;
                }
            }
        }
    }
    Ok(total)
}

/// Two-pass inverse-probability estimate from exact weights of sampled keys.
pub fn estimate_continuous_2pass<I>(
    pairs: I,
    tau: Threshold,
    ell: f64,
    f: &FrequencyFunction,
    segment: &SegmentPredicate,
) -> Result<f64>
where
    I: IntoIterator<Item = (Key, f64)>,
{
    let mut total = 0.0;
    for (key, w) in pairs {
        if !segment.contains(key) {
            continue;
        }
        let contribution = f.value(w);
        if contribution == 0.0 {
            continue;
        }
        match tau {
            Threshold::Infinite => total += contribution,
            Threshold::Finite(t) => {
                let p = inclusion_probability_continuous(w, t, ell);
                if p <= 0.0 {
                    return Err(Error::ZeroInclusion(w));
                }
                total += contribution / p;
            }
        }
    }
    Ok(total)
}
