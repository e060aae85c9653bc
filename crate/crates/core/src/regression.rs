//! Ordinary least squares, random partitioning, R² scoring and the synthetic
//! data generator used by the experiments.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::RngHandle;

/// Feature matrix (n × d) and label vector (n).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: DVector<f64>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::Shape(format!(
                "dataset needs n >= 1 and d >= 1, got {}x{}",
                features.nrows(),
                features.ncols()
            )));
        }
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.iter().chain(labels.iter()).any(|v| !v.is_finite()) {
            return Err(Error::param("dataset entries must be finite"));
        }
        Ok(Self { features, labels })
    }

    /// Builds a dataset from row-major feature rows.
    pub fn from_rows(rows: &[Vec<f64>], labels: &[f64]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("feature rows have unequal lengths".into()));
        }
        let features = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(features, DVector::from_column_slice(labels))
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    /// Returns a copy with a trailing constant-1 column.
    pub fn with_intercept(&self) -> Self {
        let (n, d) = self.features.shape();
        let features = self.features.clone().insert_column(d, 1.0);
        debug_assert_eq!(features.shape(), (n, d + 1));
        Self {
            features,
            labels: self.labels.clone(),
        }
    }

    fn subset(&self, rows: &[usize]) -> Self {
        let d = self.d();
        Self {
            features: DMatrix::from_fn(rows.len(), d, |r, c| self.features[(rows[r], c)]),
            labels: DVector::from_fn(rows.len(), |r, _| self.labels[rows[r]]),
        }
    }
}

/// `m` coefficient vectors of a common dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    dim: usize,
    models: Vec<Vec<f64>>,
}

impl ModelSet {
    pub fn new(models: Vec<Vec<f64>>) -> Result<Self> {
        let dim = models.first().map_or(0, Vec::len);
        if models.is_empty() || dim == 0 {
            return Err(Error::Shape("model set must be non-empty".into()));
        }
        if models.iter().any(|m| m.len() != dim) {
            return Err(Error::Shape("models have unequal dimensions".into()));
        }
        if models.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::param("model coefficients must be finite"));
        }
        Ok(Self { dim, models })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn models(&self) -> &[Vec<f64>] {
        &self.models
    }

    pub fn into_models(self) -> Vec<Vec<f64>> {
        self.models
    }

    /// Values of coordinate `j` across all models, in model order.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.models.iter().map(|m| m[j]).collect()
    }
}

/// Least-squares fit of `labels ~ features`.
///
/// Full-rank inputs are solved through a Householder QR factorization.
/// Rank-deficient ones (including n < d) fall back to the SVD pseudo-inverse,
/// which yields the minimal-norm minimizer.
pub fn fit_ols(data: &Dataset) -> Vec<f64> {
    let (n, d) = data.features.shape();
    if n >= d {
        let qr = data.features.clone().qr();
        let r = qr.r();
        let max_diag = r.diagonal().amax();
        let tol = (n.max(d) as f64) * f64::EPSILON * max_diag;
        if max_diag > 0.0 && r.diagonal().iter().all(|v| v.abs() > tol) {
            let mut rhs = data.labels.clone();
            qr.q_tr_mul(&mut rhs);
            let head = rhs.rows(0, d).into_owned();
            if let Some(beta) = r.solve_upper_triangular(&head) {
                return beta.iter().copied().collect();
            }
        }
    }
    min_norm_lstsq(&data.features, &data.labels)
}

fn min_norm_lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
    let (n, d) = x.shape();
    let svd = x.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let tol = (n.max(d) as f64) * f64::EPSILON * sigma_max;
    match svd.solve(y, tol) {
        Ok(beta) => beta.iter().copied().collect(),
        // only reachable for an all-zero design, whose min-norm solution is 0
        Err(_) => vec![0.0; d],
    }
}

/// Random partition of `0..n` into `m` groups whose sizes differ by at most one;
/// the first `n mod m` groups get the extra row.
pub fn partition_indices(n: usize, m: usize, rng: &mut RngHandle) -> Result<Vec<Vec<usize>>> {
    let (order, sizes) = shuffled_groups(n, m, rng)?;
    let mut start = 0;
    Ok(sizes
        .iter()
        .map(|&size| {
            let group = order[start..start + size].to_vec();
            start += size;
            group
        })
        .collect())
}

fn shuffled_groups(n: usize, m: usize, rng: &mut RngHandle) -> Result<(Vec<usize>, Vec<usize>)> {
    if m == 0 || m > n {
        return Err(Error::param(format!(
            "cannot split {n} rows into {m} groups"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let (base, extra) = (n / m, n % m);
    let sizes = (0..m).map(|g| base + usize::from(g < extra)).collect();
    Ok((order, sizes))
}

/// Randomly splits `data` into `m` groups and fits OLS on each.
///
/// Uses the same partition as [`partition_indices`] for the same generator state.
pub fn partition_fit(data: &Dataset, m: usize, rng: &mut RngHandle) -> Result<ModelSet> {
    if m == 0 || data.n() / m < data.d() {
        return Err(Error::InsufficientData(format!(
            "n = {} rows across m = {m} groups leaves fewer than d = {} rows per group",
            data.n(),
            data.d()
        )));
    }
    let (order, sizes) = shuffled_groups(data.n(), m, rng)?;
    // one gather into shuffled order, then every group is a contiguous block
    let shuffled = data.subset(&order);
    let mut start = 0;
    let models = sizes
        .iter()
        .map(|&size| {
            let block = Dataset {
                features: shuffled.features.rows(start, size).into_owned(),
                labels: shuffled.labels.rows(start, size).into_owned(),
            };
            start += size;
            fit_ols(&block)
        })
        .collect();
    ModelSet::new(models)
}

/// Predictions `X β`.
pub fn predict(beta: &[f64], data: &Dataset) -> Result<DVector<f64>> {
    if beta.len() != data.d() {
        return Err(Error::Shape(format!(
            "coefficient vector has length {}, data has d = {}",
            beta.len(),
            data.d()
        )));
    }
    Ok(&data.features * DVector::from_column_slice(beta))
}

/// Coefficient of determination `1 - SSE/SST`; negative when worse than the mean.
pub fn r_squared(beta: &[f64], data: &Dataset) -> Result<f64> {
    let pred = predict(beta, data)?;
    let mean = data.labels.mean();
    let sst: f64 = data.labels.iter().map(|y| (y - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::UndefinedScore);
    }
    let sse: f64 = data
        .labels
        .iter()
        .zip(pred.iter())
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    Ok(1.0 - sse / sst)
}

/// Parameters of the Gaussian linear-model generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d_features: usize,
    pub noise_sigma: f64,
    pub coefficient_scale: f64,
}

impl SyntheticSpec {
    pub const DEFAULT_COEFFICIENT_SCALE: f64 = 100.0;

    pub fn new(n: usize, d_features: usize, noise_sigma: f64) -> Result<Self> {
        let spec = Self {
            n,
            d_features,
            noise_sigma,
            coefficient_scale: Self::DEFAULT_COEFFICIENT_SCALE,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_features == 0 || self.n < self.d_features + 1 {
            return Err(Error::param(format!(
                "synthetic data needs d_features >= 1 and n >= d_features + 1 (n = {}, d = {})",
                self.n, self.d_features
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param("noise sigma must be finite and >= 0"));
        }
        if !(self.coefficient_scale > 0.0 && self.coefficient_scale.is_finite()) {
            return Err(Error::param("coefficient scale must be positive"));
        }
        Ok(())
    }
}

/// Draws `X ~ N(0, 1)`, `β* ~ N(0, scale²)`, `y = Xβ* + N(0, σ²)`.
///
/// No intercept column is added; callers append one if they want it.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    rng: &mut RngHandle,
) -> Result<(Dataset, Vec<f64>)> {
    spec.validate()?;
    let mut std_normal = || -> f64 { StandardNormal.sample(&mut *rng) };
    let truth: Vec<f64> = (0..spec.d_features)
        .map(|_| spec.coefficient_scale * std_normal())
        .collect();
    let mut features = DMatrix::zeros(spec.n, spec.d_features);
    for i in 0..spec.n {
        for j in 0..spec.d_features {
            features[(i, j)] = std_normal();
        }
    }
    let clean = &features * DVector::from_column_slice(&truth);
    let labels = if spec.noise_sigma > 0.0 {
        clean.map(|v| v + spec.noise_sigma * std_normal())
    } else {
        clean
    };
    Ok((Dataset::new(features, labels)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn ols_identity_interpolates() {
        let data = Dataset::from_rows(
            &[
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            &[1.0, 2.0, 3.0],
        )
        .unwrap();
        assert!(close(&fit_ols(&data), &[1.0, 2.0, 3.0], 1e-12));
    }

    #[test]
    fn ols_intercept_only_is_mean() {
        let data = Dataset::from_rows(&vec![vec![1.0]; 4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(close(&fit_ols(&data), &[2.5], 1e-12));
    }

    #[test]
    fn ols_two_by_two_normal_equations() {
        let data = Dataset::from_rows(
            &[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]],
            &[0.0, 1.0, 2.0],
        )
        .unwrap();
        assert!(close(&fit_ols(&data), &[0.0, 1.0], 1e-12));
    }

    #[test]
    fn ols_rank_deficient_gives_min_norm() {
        // duplicated column: min-norm solution splits weight evenly
        let data = Dataset::from_rows(
            &[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]],
            &[2.0, 4.0, 6.0],
        )
        .unwrap();
        assert!(close(&fit_ols(&data), &[1.0, 1.0], 1e-10));
        // fewer rows than columns
        let wide = Dataset::from_rows(&[vec![1.0, 1.0]], &[2.0]).unwrap();
        assert!(close(&fit_ols(&wide), &[1.0, 1.0], 1e-10));
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::from_rows(&[vec![1.0], vec![2.0]], &[1.0]).is_err());
        assert!(Dataset::from_rows(&[vec![f64::NAN]], &[1.0]).is_err());
        assert!(Dataset::from_rows(&[], &[]).is_err());
        let d = Dataset::from_rows(&[vec![1.0, 2.0]], &[1.0]).unwrap();
        assert_eq!(d.with_intercept().d(), 3);
        assert_eq!(d.with_intercept().features()[(0, 2)], 1.0);
    }

    #[test]
    fn partition_sizes() {
        let mut rng = RngHandle::new(1);
        let groups = partition_indices(100, 10, &mut rng).unwrap();
        assert!(groups.iter().all(|g| g.len() == 10));
        let groups = partition_indices(103, 10, &mut rng).unwrap();
        let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![11, 11, 11, 10, 10, 10, 10, 10, 10, 10]);
    }

    #[test]
    fn partition_fit_counts_and_errors() {
        let mut rng = RngHandle::new(2);
        let spec = SyntheticSpec::new(100, 2, 1.0).unwrap();
        let (data, _) = generate_synthetic(&spec, &mut rng).unwrap();
        let models = partition_fit(&data, 10, &mut rng).unwrap();
        assert_eq!(models.len(), 10);
        assert_eq!(models.dim(), 2);
        assert!(matches!(
            partition_fit(&data, 51, &mut rng),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn partition_fit_uses_partition_indices_groups() {
        let spec = SyntheticSpec::new(103, 3, 1.0).unwrap();
        let (data, _) = generate_synthetic(&spec, &mut RngHandle::new(8)).unwrap();
        let models = partition_fit(&data, 7, &mut RngHandle::new(9)).unwrap();
        let groups = partition_indices(103, 7, &mut RngHandle::new(9)).unwrap();
        for (model, rows) in models.models().iter().zip(&groups) {
            assert_eq!(model, &fit_ols(&data.subset(rows)));
        }
    }

    #[test]
    fn noiseless_partitions_agree() {
        let mut rng = RngHandle::new(3);
        let spec = SyntheticSpec {
            n: 400,
            d_features: 4,
            noise_sigma: 0.0,
            coefficient_scale: 3.0,
        };
        let (data, truth) = generate_synthetic(&spec, &mut rng).unwrap();
        assert!(close(&fit_ols(&data), &truth, 1e-8));
        let models = partition_fit(&data, 20, &mut rng).unwrap();
        for m in models.models() {
            assert!(close(m, &truth, 1e-8));
        }
    }

    #[test]
    fn r_squared_values() {
        let data =
            Dataset::from_rows(&[vec![1.0], vec![1.0], vec![1.0]], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(r_squared(&[0.0], &data).unwrap(), -1.5);
        assert!(r_squared(&[1.0], &data).unwrap().abs() < 1e-15);
        let perfect = Dataset::from_rows(&[vec![1.0], vec![2.0]], &[2.0, 4.0]).unwrap();
        assert_eq!(r_squared(&[2.0], &perfect).unwrap(), 1.0);
        let flat = Dataset::from_rows(&[vec![1.0], vec![2.0]], &[3.0, 3.0]).unwrap();
        assert!(matches!(
            r_squared(&[1.0], &flat),
            Err(Error::UndefinedScore)
        ));
        assert!(matches!(
            r_squared(&[1.0, 2.0], &flat),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn synthetic_shapes_and_fit_quality() {
        let mut rng = RngHandle::new(4);
        let spec = SyntheticSpec::new(22_000, 10, 10.0).unwrap();
        let (data, _) = generate_synthetic(&spec, &mut rng).unwrap();
        assert_eq!(data.features().shape(), (22_000, 10));
        assert_eq!(data.labels().len(), 22_000);
        let data = data.with_intercept();
        let r2 = r_squared(&fit_ols(&data), &data).unwrap();
        assert!(r2 >= 0.99, "r2 = {r2}");
        assert!(SyntheticSpec::new(5, 5, 1.0).is_err());
    }

    #[test]
    fn ols_beats_random_vectors() {
        let mut rng = RngHandle::new(5);
        let spec = SyntheticSpec::new(200, 3, 5.0).unwrap();
        let (data, truth) = generate_synthetic(&spec, &mut rng).unwrap();
        let best = r_squared(&fit_ols(&data), &data).unwrap();
        for _ in 0..200 {
            let other: Vec<f64> = truth
                .iter()
                .map(|t| t + rng.random_range(-5.0..5.0))
                .collect();
            assert!(r_squared(&other, &data).unwrap() <= best);
        }
    }

    proptest! {
        #[test]
        fn partition_covers_all_rows(n in 1usize..300, m_frac in 0.0f64..1.0, seed in any::<u64>()) {
            let m = 1 + ((n - 1) as f64 * m_frac) as usize;
            let mut rng = RngHandle::new(seed);
            let groups = partition_indices(n, m, &mut rng).unwrap();
            prop_assert_eq!(groups.len(), m);
            let mut all: Vec<usize> = groups.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let max = groups.iter().map(Vec::len).max().unwrap();
            let min = groups.iter().map(Vec::len).min().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn residual_orthogonal_to_columns(seed in any::<u64>(), n in 20usize..80, d in 1usize..6) {
            let mut rng = RngHandle::new(seed);
            let spec = SyntheticSpec { n, d_features: d, noise_sigma: 3.0, coefficient_scale: 10.0 };
            let (data, _) = generate_synthetic(&spec, &mut rng).unwrap();
            let beta = fit_ols(&data);
            let resid = predict(&beta, &data).unwrap() - data.labels();
            let grad = data.features().transpose() * resid;
            let xty = data.features().transpose() * data.labels();
            prop_assert!(grad.norm() <= 1e-6 * xty.norm());
        }
    }
}
