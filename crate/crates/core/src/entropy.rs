//! Shannon entropy, the three-symbol entropy equation and the entropy-boosting
//! recursion. All values are in nats.

use serde::Serialize;
use thiserror::Error;

use crate::config::Distribution;

pub const LN_2: f64 = std::f64::consts::LN_2;

/// Bisection iteration cap for [`solve_p`].
pub const SOLVE_MAX_ITER: usize = 200;
/// Guaranteed absolute accuracy of [`solve_p`]; in practice it bisects to
/// adjacent floats.
pub const SOLVE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq, Serialize)]
pub enum EntropyError {
    #[error("entropy {0} outside the open interval (0, log 2)")]
    OutOfRange(f64),
    #[error("invalid entropy value {0}")]
    Invalid(f64),
    #[error("recursion did not reach log 2 within {} steps", trace.steps())]
    StepLimitExceeded { trace: EntropyRecursion },
}

/// A nonnegative, finite entropy in nats.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct EntropyValue(f64);

impl EntropyValue {
    pub fn new(nats: f64) -> Result<Self, EntropyError> {
        if nats.is_finite() && nats >= 0.0 {
            Ok(Self(nats))
        } else {
            Err(EntropyError::Invalid(nats))
        }
    }

    pub fn nats(self) -> f64 {
        self.0
    }
}

/// `−Σ wᵢ log wᵢ` with `0 log 0 = 0`.
pub fn shannon_weights(weights: &[f64]) -> f64 {
    weights.iter().filter(|&&w| w > 0.0).map(|&w| -w * w.ln()).sum()
}

pub fn shannon(d: &Distribution) -> EntropyValue {
    // clamp tiny negative rounding from sums like 1 − 2p
    EntropyValue(shannon_weights(d.weights()).max(0.0))
}

/// Entropy of `(p, p, 1 − 2p)`.
pub fn three_symbol_entropy(p: f64) -> f64 {
    shannon_weights(&[p, p, 1.0 - 2.0 * p])
}

/// The unique `p ∈ (0, 1/3)` with `three_symbol_entropy(p) = h`, for `0 < h < log 2`.
///
/// `three_symbol_entropy` increases from 0 to `log 3` on `(0, 1/3]` and stays
/// above `log 2` on `[1/3, 1/2]`, so the increasing branch is the only solution.
pub fn solve_p(h: f64) -> Result<f64, EntropyError> {
    if !(h > 0.0 && h < LN_2) {
        return Err(EntropyError::OutOfRange(h));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64 / 3.0);
    for _ in 0..SOLVE_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if three_symbol_entropy(mid) < h {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    debug_assert!(hi - lo < SOLVE_TOL);
    // return whichever bracket end has the smaller residual
    let p = if (three_symbol_entropy(lo) - h).abs() <= (three_symbol_entropy(hi) - h).abs() && lo > 0.0 {
        lo
    } else {
        hi
    };
    Ok(p)
}

/// One boosting step: `p = solve_p(h)`, `h_next = h + 2p log 2`.
pub fn boost_step(h: f64) -> Result<(f64, f64), EntropyError> {
    let p = solve_p(h)?;
    Ok((p, h + 2.0 * p * LN_2))
}

/// Trace of the boosting recursion. `p[i]` is the parameter used to go from
/// `h[i]` to `h[i + 1]`, so `h.len() == p.len() + 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyRecursion {
    #[serde(rename = "H")]
    pub h: Vec<f64>,
    pub p: Vec<f64>,
    pub terminated: bool,
    pub steps: usize,
}

impl EntropyRecursion {
    pub fn steps(&self) -> usize {
        self.p.len()
    }

    pub fn last_h(&self) -> f64 {
        *self.h.last().expect("trace has H0")
    }
}

/// Iterates [`boost_step`] from `h0` until the entropy reaches `log 2`.
pub fn run_recursion(h0: f64, max_steps: usize) -> Result<EntropyRecursion, EntropyError> {
    EntropyValue::new(h0)?;
    if h0 <= 0.0 {
        return Err(EntropyError::OutOfRange(h0));
    }
    let mut h = vec![h0];
    let mut p = Vec::new();
    let mut current = h0;
    while current < LN_2 {
        if p.len() == max_steps {
            let steps = p.len();
            return Err(EntropyError::StepLimitExceeded {
                trace: EntropyRecursion { h, p, terminated: false, steps },
            });
        }
        let (pi, next) = boost_step(current)?;
        assert!(next > current, "entropy must strictly increase");
        if let Some(&prev) = p.last() {
            assert!(pi >= prev, "p-sequence must be nondecreasing");
        }
        p.push(pi);
        h.push(next);
        current = next;
    }
    let steps = p.len();
    Ok(EntropyRecursion { h, p, terminated: true, steps })
}
