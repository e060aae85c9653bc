//! Restricted exponential mechanism over approximate Tukey depth.
//!
//! Sampling happens in two stages. First a depth `i ∈ {t, …, M}` is drawn
//! with probability proportional to `W_i · exp(ε·i)`, where `W_i = V_i -
//! V_{i+1}` is the volume of points of depth exactly `i`. Depth is monotone
//! in the model set, which is why the exponent carries no factor 1/2.
//!
//! Then a point is drawn uniformly from the depth-`i` shell. The shell splits
//! into cells `C_{j,i}`: points whose first dimension with one-dimensional
//! depth exactly `i` is `j`. Each cell is a product of intervals, so its
//! volume is `V_{<j,i+1} · W_{j,i} · V_{>j,i}` and a uniform point is one
//! uniform draw per coordinate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::depth::{LogVolumes, OrderStatistics};
use crate::error::{Error, Result};
use crate::noise::{log_sum_exp, sample_log_categorical, RngHandle};

/// `ln(e^a - e^b)` for `a >= b`; `-∞` when the difference vanishes.
pub fn log_diff_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY || b >= a {
        return f64::NEG_INFINITY;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// Log-space sampling weights over depths `t..=M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthDistribution {
    pub t: usize,
    /// Entry `k` is `ln W_{t+k} + ε·(t+k)`.
    pub log_weights: Vec<f64>,
}

impl DepthDistribution {
    pub fn depths(&self) -> std::ops::RangeInclusive<usize> {
        self.t..=self.t + self.log_weights.len() - 1
    }

    /// Normalized probabilities, aligned with [`Self::depths`].
    pub fn probabilities(&self) -> Vec<f64> {
        let total = log_sum_exp(&self.log_weights);
        self.log_weights.iter().map(|w| (w - total).exp()).collect()
    }
}

/// Builds the depth distribution `P(i) ∝ (V_i - V_{i+1}) · e^{ε i}` for `i = t..=M`.
pub fn depth_weights(vols: &LogVolumes, t: usize, epsilon: f64) -> Result<DepthDistribution> {
    let max_depth = vols.len();
    if t < 1 || t > max_depth {
        return Err(Error::param(format!(
            "minimum depth t = {t} outside 1..={max_depth}"
        )));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::param(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let log_weights: Vec<f64> = (t..=max_depth)
        .map(|i| log_diff_exp(vols.get(i), vols.get(i + 1)) + epsilon * i as f64)
        .collect();
    if log_weights.iter().all(|w| *w == f64::NEG_INFINITY) {
        return Err(Error::DegenerateRegion(format!(
            "every depth in {t}..={max_depth} has zero volume"
        )));
    }
    Ok(DepthDistribution { t, log_weights })
}

/// Draws a depth from `dist`.
pub fn sample_depth(dist: &DepthDistribution, rng: &mut RngHandle) -> Result<usize> {
    Ok(dist.t + sample_log_categorical(&dist.log_weights, rng)?)
}

/// Per-dimension log volumes describing the cells `C_{j,i}` of the depth-`i` shell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub depth: usize,
    /// `ln V_{j,i}`: side of the depth-≥`i` box.
    pub log_side: Vec<f64>,
    /// `ln V_{j,i+1}`: side of the depth-≥`i+1` box.
    pub log_inner_side: Vec<f64>,
    /// `ln W_{j,i}`: length with one-dimensional depth exactly `i`.
    pub log_exact: Vec<f64>,
    /// `ln V_{<j,i+1}`.
    pub log_prefix: Vec<f64>,
    /// `ln V_{>j,i}`.
    pub log_suffix: Vec<f64>,
    /// `ln vol(C_{j,i})`.
    pub log_cell: Vec<f64>,
}

impl RegionPartition {
    /// `ln W_i`, the log volume of the whole shell.
    pub fn log_total(&self) -> f64 {
        log_sum_exp(&self.log_cell)
    }
}

/// The two intervals of one-dimensional depth exactly `i`, or one interval
/// when they meet in the middle (even `m`, `i = m/2`).
enum ExactDepthSet {
    Single { lo: f64, hi: f64 },
    Pair { left: (f64, f64), right: (f64, f64) },
}

fn exact_depth_set<S: OrderStatistics + ?Sized>(s: &S, j: usize, i: usize) -> ExactDepthSet {
    let m = s.count();
    if 2 * i + 1 > m {
        ExactDepthSet::Single {
            lo: s.value(j, i),
            hi: s.value(j, m + 1 - i),
        }
    } else {
        ExactDepthSet::Pair {
            left: (s.value(j, i), s.value(j, i + 1)),
            right: (s.value(j, m - i), s.value(j, m + 1 - i)),
        }
    }
}

impl ExactDepthSet {
    fn length(&self) -> f64 {
        match *self {
            ExactDepthSet::Single { lo, hi } => (hi - lo).max(0.0),
            ExactDepthSet::Pair { left, right } => {
                (left.1 - left.0).max(0.0) + (right.1 - right.0).max(0.0)
            }
        }
    }
}

fn check_depth<S: OrderStatistics + ?Sized>(s: &S, i: usize) -> Result<()> {
    if i < 1 || i > s.max_depth() {
        return Err(Error::param(format!(
            "depth {i} outside 1..={}",
            s.max_depth()
        )));
    }
    Ok(())
}

/// Computes every cell volume of the depth-`i` shell in `O(d)`.
pub fn region_partition<S: OrderStatistics + ?Sized>(s: &S, i: usize) -> Result<RegionPartition> {
    check_depth(s, i)?;
    let d = s.dim();
    let log_side: Vec<f64> = (0..d).map(|j| s.side_length(j, i).ln()).collect();
    let log_inner_side: Vec<f64> = (0..d).map(|j| s.side_length(j, i + 1).ln()).collect();
    let log_exact: Vec<f64> = (0..d)
        .map(|j| exact_depth_set(s, j, i).length().ln())
        .collect();

    let mut log_prefix = Vec::with_capacity(d);
    let mut acc = 0.0;
    for v in &log_inner_side {
        log_prefix.push(acc);
        acc += v;
    }
    let mut log_suffix = vec![0.0; d];
    let mut acc = 0.0;
    for j in (0..d).rev() {
        log_suffix[j] = acc;
        acc += log_side[j];
    }
    let log_cell = (0..d)
        .map(|j| log_prefix[j] + log_exact[j] + log_suffix[j])
        .collect();
    Ok(RegionPartition {
        depth: i,
        log_side,
        log_inner_side,
        log_exact,
        log_prefix,
        log_suffix,
        log_cell,
    })
}

fn uniform_closed(lo: f64, hi: f64, rng: &mut RngHandle) -> f64 {
    let u: f64 = rng.random();
    (lo + u * (hi - lo)).clamp(lo, hi)
}

/// Uniform on `[lo, hi)`; rounding onto `hi` is rejected.
fn uniform_open_above(lo: f64, hi: f64, rng: &mut RngHandle) -> f64 {
    loop {
        let x = uniform_closed(lo, hi, rng);
        if x < hi {
            return x;
        }
    }
}

/// Uniform on `(lo, hi]`.
fn uniform_open_below(lo: f64, hi: f64, rng: &mut RngHandle) -> f64 {
    loop {
        let u: f64 = rng.random();
        let x = (hi - u * (hi - lo)).clamp(lo, hi);
        if x > lo {
            return x;
        }
    }
}

/// Uniform point among those with approximate depth exactly `i`.
pub fn sample_point_with_depth<S: OrderStatistics + ?Sized>(
    s: &S,
    i: usize,
    rng: &mut RngHandle,
) -> Result<Vec<f64>> {
    let partition = region_partition(s, i)?;
    if partition.log_cell.iter().all(|c| *c == f64::NEG_INFINITY) {
        return Err(Error::DegenerateRegion(format!(
            "points of depth exactly {i} have zero volume"
        )));
    }
    let cell = sample_log_categorical(&partition.log_cell, rng)?;
    let m = s.count();
    let point = (0..s.dim())
        .map(|j| {
            if j < cell {
                uniform_closed(s.value(j, i + 1), s.value(j, m - i), rng)
            } else if j > cell {
                uniform_closed(s.value(j, i), s.value(j, m + 1 - i), rng)
            } else {
                match exact_depth_set(s, j, i) {
                    ExactDepthSet::Single { lo, hi } => uniform_closed(lo, hi, rng),
                    ExactDepthSet::Pair { left, right } => {
                        let left_len = (left.1 - left.0).max(0.0);
                        let right_len = (right.1 - right.0).max(0.0);
                        let pick_left = rng.random::<f64>() * (left_len + right_len) < left_len;
                        if pick_left {
                            uniform_open_above(left.0, left.1, rng)
                        } else {
                            uniform_open_below(right.0, right.1, rng)
                        }
                    }
                }
            }
        })
        .collect();
    Ok(point)
}
