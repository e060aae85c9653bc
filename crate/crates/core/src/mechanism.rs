//! End-to-end private regression: partitioned OLS, depth volumes, the PTR
//! gate, and the restricted exponential mechanism.
//!
//! The budget is split evenly: `ε/2` for the PTR test (which also receives
//! the full `δ`) and `ε/2` for the exponential mechanism.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::depth::{compute_log_volumes, perturb_models, sorted_projections};
use crate::error::{Error, Result};
use crate::noise::RngHandle;
use crate::ptr::{ptr_check_detailed, validate_privacy, PtrOutcome};
use crate::regression::{partition_fit, Dataset, ModelSet};
use crate::sampler::{depth_weights, sample_depth, sample_point_with_depth};

/// Total `(ε, δ)` for one mechanism invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        validate_privacy(epsilon, delta)?;
        Ok(Self { epsilon, delta })
    }

    /// Half of `ε`, spent once by PTR and once by the sampler.
    pub fn half_epsilon(&self) -> f64 {
        self.epsilon / 2.0
    }
}

/// Released output: coefficients, or the explicit failure symbol when the
/// PTR gate does not pass. Failure is a legitimate private outcome, not an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismResult {
    Coefficients(Vec<f64>),
    Failure,
}

impl MechanismResult {
    pub fn coefficients(&self) -> Option<&[f64]> {
        match self {
            MechanismResult::Coefficients(c) => Some(c),
            MechanismResult::Failure => None,
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, MechanismResult::Failure)
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    /// Partitioning and the `m` OLS fits.
    pub ols: f64,
    /// Perturbation, sorting and volume computation.
    pub volumes: f64,
    pub ptr: f64,
    pub sampling: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.ols + self.volumes + self.ptr + self.sampling
    }

    /// Everything after the OLS fits.
    pub fn post_ols(&self) -> f64 {
        self.volumes + self.ptr + self.sampling
    }
}

/// Diagnostics for one invocation. None of this is private except what is
/// also in the released result; keep it out of published outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismTrace {
    pub m: usize,
    /// Minimum depth of the restricted mechanism, `⌊m/4⌋`.
    pub t: usize,
    pub ptr: PtrOutcome,
    /// `ε` handed to the exponential mechanism (`None` when PTR failed).
    pub sampler_epsilon: Option<f64>,
    pub sampled_depth: Option<usize>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone)]
pub struct MechanismRun {
    pub result: MechanismResult,
    pub trace: MechanismTrace,
    /// The non-private per-partition OLS models, before perturbation.
    pub models: ModelSet,
}

/// Smallest number of models the mechanism accepts; keeps `⌊m/4⌋ >= 2`.
pub const MIN_MODELS: usize = 8;

fn check_inputs(data: &Dataset, m: usize) -> Result<()> {
    if m < MIN_MODELS {
        return Err(Error::param(format!(
            "need at least {MIN_MODELS} models, got m = {m}"
        )));
    }
    if data.n() / m < data.d() {
        return Err(Error::InsufficientData(format!(
            "n = {} cannot give each of m = {m} models d = {} rows",
            data.n(),
            data.d()
        )));
    }
    Ok(())
}

/// Runs the mechanism and keeps the stage-by-stage trace.
pub fn tukey_em_traced(
    data: &Dataset,
    m: usize,
    budget: PrivacyBudget,
    rng: &mut RngHandle,
) -> Result<MechanismRun> {
    check_inputs(data, m)?;
    validate_privacy(budget.epsilon, budget.delta)?;
    let stage_epsilon = budget.half_epsilon();
    let mut timings = StageTimings::default();

    let clock = Instant::now();
    let models = partition_fit(data, m, rng)?;
    timings.ols = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let projections = sorted_projections(&perturb_models(&models, rng));
    let vols = compute_log_volumes(&projections);
    timings.volumes = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let ptr = ptr_check_detailed(&vols, stage_epsilon, budget.delta, rng)?;
    timings.ptr = clock.elapsed().as_secs_f64();

    let t = m / 4;
    debug_assert_eq!(t, ptr.params.t);
    let mut trace = MechanismTrace {
        m,
        t,
        ptr,
        sampler_epsilon: None,
        sampled_depth: None,
        timings,
    };
    if !ptr.passed {
        return Ok(MechanismRun {
            result: MechanismResult::Failure,
            trace,
            models,
        });
    }

    let clock = Instant::now();
    let dist = depth_weights(&vols, t, stage_epsilon)?;
    let depth = sample_depth(&dist, rng)?;
    let point = sample_point_with_depth(&projections, depth, rng)?;
    trace.timings.sampling = clock.elapsed().as_secs_f64();
    trace.sampler_epsilon = Some(stage_epsilon);
    trace.sampled_depth = Some(depth);

    Ok(MechanismRun {
        result: MechanismResult::Coefficients(point),
        trace,
        models,
    })
}

/// `(ε, δ)`-DP linear regression from `m` partitioned OLS models.
pub fn tukey_em(
    data: &Dataset,
    m: usize,
    budget: PrivacyBudget,
    rng: &mut RngHandle,
) -> Result<MechanismResult> {
    tukey_em_traced(data, m, budget, rng).map(|run| run.result)
}

/// Default number of models: `n/(2d)` rounded down to a multiple of 250,
/// clamped to `[250, 1000]`.
///
/// Errors when `n < 8d`, or when even the 250-model floor would leave some
/// model with fewer than `d` rows.
pub fn heuristic_num_models(n: usize, d: usize) -> Result<usize> {
    const STEP: usize = 250;
    const CAP: usize = 1000;
    if d == 0 {
        return Err(Error::param("dimension must be positive"));
    }
    if n < 8 * d {
        return Err(Error::InsufficientData(format!(
            "n = {n} is below 8·d = {}",
            8 * d
        )));
    }
    let m = (n / (2 * d) / STEP * STEP).clamp(STEP, CAP);
    if n / m < d {
        return Err(Error::InsufficientData(format!(
            "n = {n} cannot support the minimum of {STEP} models at d = {d}"
        )));
    }
    Ok(m)
}
