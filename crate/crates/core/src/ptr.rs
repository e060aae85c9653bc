//! Propose-test-release gate.
//!
//! [`distance_lower_bound`] turns the depth-region volumes into a
//! 1-sensitive lower bound `k` on how many models must change before the
//! depth-restricted exponential mechanism stops being stable. [`ptr_check`]
//! releases `k` with Laplace noise and compares it to a threshold.

use serde::{Deserialize, Serialize};

use crate::depth::LogVolumes;
use crate::error::{Error, Result};
use crate::noise::{laplace, RngHandle};

/// Lower bound on the Hamming distance to an unsafe set of models; `-1` when
/// no nontrivial bound holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DistanceBound(pub i64);

impl DistanceBound {
    pub const NONE: DistanceBound = DistanceBound(-1);

    pub fn get(self) -> i64 {
        self.0
    }
}

/// Parameters of one PTR test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtrParams {
    pub epsilon: f64,
    pub delta: f64,
    pub t: usize,
}

impl PtrParams {
    /// Derives `t = ⌊M/2⌋` from the number of volumes.
    pub fn for_volumes(vols: &LogVolumes, epsilon: f64, delta: f64) -> Result<Self> {
        let params = Self {
            epsilon,
            delta,
            t: vols.len() / 2,
        };
        params.validate(vols.len())?;
        Ok(params)
    }

    fn validate(&self, max_depth: usize) -> Result<()> {
        validate_privacy(self.epsilon, self.delta)?;
        if self.t < 1 || self.t > max_depth {
            return Err(Error::param(format!(
                "depth threshold t = {} outside 1..={max_depth}",
                self.t
            )));
        }
        Ok(())
    }

    /// Pass threshold `ln(1/(2δ))/ε` on the noisy bound.
    pub fn threshold(&self) -> f64 {
        ptr_threshold(self.epsilon, self.delta)
    }

    /// `δ/(8e^ε)`, the failure probability handed to the distance bound.
    pub fn adjusted_delta(&self) -> f64 {
        self.delta / (8.0 * self.epsilon.exp())
    }
}

pub(crate) fn validate_privacy(epsilon: f64, delta: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::param(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok(())
}

/// `ln(1/(2δ))/ε`.
pub fn ptr_threshold(epsilon: f64, delta: f64) -> f64 {
    (1.0 / (2.0 * delta)).ln() / epsilon
}

/// Whether `V_{t-k-1} / V_{t+k+g+1} · e^{-εg/2} <= δ`, evaluated in log space.
///
/// An empty numerator region satisfies the condition (including `0/0`);
/// otherwise an empty denominator region or `V_0 = +∞` numerator fails it.
pub(crate) fn volume_condition(
    vols: &LogVolumes,
    t: usize,
    k: usize,
    g: usize,
    epsilon: f64,
    ln_delta: f64,
) -> bool {
    let num = vols.get(t - k - 1);
    let den = vols.get(t + k + g + 1);
    if num == f64::NEG_INFINITY {
        return true;
    }
    if num == f64::INFINITY || den == f64::NEG_INFINITY {
        return false;
    }
    num - den - epsilon * g as f64 / 2.0 <= ln_delta
}

/// Whether some `g >= 1` satisfies the volume condition for this `k`.
fn admits_gap(vols: &LogVolumes, t: usize, k: usize, epsilon: f64, ln_delta: f64) -> bool {
    if vols.get(t - k - 1) == f64::NEG_INFINITY {
        return true;
    }
    // beyond g = M - t - k - 1 the denominator region is empty
    let g_max = vols.len().saturating_sub(t + k + 1);
    (1..=g_max).any(|g| volume_condition(vols, t, k, g, epsilon, ln_delta))
}

/// Largest `k ∈ {0, …, t-1}` such that some integer `g >= 1` satisfies
/// `ln V_{t-k-1} - ln V_{t+k+g+1} - εg/2 <= ln δ`, or `-1` if none does.
///
/// Feasibility is downward closed in `k` (shrinking `k` by one and growing
/// `g` by one keeps the denominator and shrinks the numerator), so `k` is
/// found by binary search with a linear scan over `g` at each probe.
pub fn distance_lower_bound(
    vols: &LogVolumes,
    t: usize,
    epsilon: f64,
    delta: f64,
) -> Result<DistanceBound> {
    PtrParams { epsilon, delta, t }.validate(vols.len())?;
    let ln_delta = delta.ln();
    let feasible = |k: usize| admits_gap(vols, t, k, epsilon, ln_delta);
    if !feasible(0) {
        return Ok(DistanceBound::NONE);
    }
    // invariant: feasible(lo), and every k >= hi is infeasible
    let (mut lo, mut hi) = (0usize, t);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DistanceBound(lo as i64))
}

/// Full record of one PTR test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PtrOutcome {
    pub params: PtrParams,
    pub bound: DistanceBound,
    pub noise: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Runs the PTR test with an explicit noise value instead of a Laplace draw.
///
/// Exists so tests can exercise the comparison deterministically;
/// [`ptr_check`] is the private path.
pub fn ptr_check_with_noise(
    vols: &LogVolumes,
    epsilon: f64,
    delta: f64,
    noise: f64,
) -> Result<PtrOutcome> {
    let params = PtrParams::for_volumes(vols, epsilon, delta)?;
    let bound = distance_lower_bound(vols, params.t, epsilon, params.adjusted_delta())?;
    let threshold = params.threshold();
    Ok(PtrOutcome {
        params,
        bound,
        noise,
        threshold,
        passed: bound.0 as f64 + noise >= threshold,
    })
}

/// PTR test with `Laplace(1/ε)` noise, returning the full outcome.
pub fn ptr_check_detailed(
    vols: &LogVolumes,
    epsilon: f64,
    delta: f64,
    rng: &mut RngHandle,
) -> Result<PtrOutcome> {
    validate_privacy(epsilon, delta)?;
    // validate before drawing so a bad call does not advance the stream
    PtrParams::for_volumes(vols, epsilon, delta)?;
    let noise = laplace(1.0 / epsilon, rng)?;
    ptr_check_with_noise(vols, epsilon, delta, noise)
}

/// `true` when the noisy distance bound clears `ln(1/(2δ))/ε`.
pub fn ptr_check(vols: &LogVolumes, epsilon: f64, delta: f64, rng: &mut RngHandle) -> Result<bool> {
    ptr_check_detailed(vols, epsilon, delta, rng).map(|o| o.passed)
}
