//! Random primitives shared by the privacy mechanisms.
//!
//! Every mechanism receives an explicit [`RngHandle`]; nothing in this crate
//! touches a global or thread-local generator. Categorical sampling for the
//! exponential mechanism is done entirely in log space with the Gumbel-max
//! trick, since weights there are products of up to `d` interval lengths
//! scaled by `exp(ε·i)` and overflow easily in direct space.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};

use crate::error::{Error, Result};

/// Seeded, reproducible random stream.
///
/// Identical `(seed, stream)` pairs produce bit-identical draw sequences on
/// every platform. Not `Sync`-shared: each mechanism invocation owns one.
#[derive(Debug, Clone)]
pub struct RngHandle {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent sub-stream of `seed`, used to derive per-trial generators.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        loop {
            let u: f64 = self.inner.random();
            if u > 0.0 {
                return u;
            }
        }
    }
}

impl RngCore for RngHandle {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Inverse Laplace CDF: maps `u ∈ (0, 1)` to a Laplace(0, scale) quantile.
pub fn laplace_from_uniform(scale: f64, u: f64) -> f64 {
    let centered = u - 0.5;
    -scale * centered.signum() * (1.0 - 2.0 * centered.abs()).ln()
}

/// One Laplace(0, `scale`) draw by CDF inversion.
pub fn laplace(scale: f64, rng: &mut RngHandle) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::param(format!(
            "laplace scale must be positive, got {scale}"
        )));
    }
    Ok(laplace_from_uniform(scale, rng.open01()))
}

/// One N(0, `sigma`²) draw.
pub fn gaussian(sigma: f64, rng: &mut RngHandle) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let z: f64 = StandardNormal.sample(rng);
    Ok(sigma * z)
}

/// Numerically stable `ln Σ exp(v)`. Returns `-∞` for an empty or all-`-∞` input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Samples index `i` with probability `exp(weights[i] - log_sum_exp(weights))`.
///
/// Uses perturb-and-argmax with Gumbel noise, so no weight is ever
/// exponentiated. Entries equal to `-∞` are never selected.
pub fn sample_log_categorical(weights: &[f64], rng: &mut RngHandle) -> Result<usize> {
    if weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::param("log weights must be finite or -inf"));
    }
    let gumbel = Gumbel::new(0.0, 1.0).expect("standard Gumbel parameters are valid");
    let mut best: Option<(usize, f64)> = None;
    for (i, &w) in weights.iter().enumerate() {
        if w == f64::NEG_INFINITY {
            continue;
        }
        let key = w + gumbel.sample(rng);
        if best.is_none_or(|(_, b)| key > b) {
            best = Some((i, key));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::param("all log weights are -inf"))
}
