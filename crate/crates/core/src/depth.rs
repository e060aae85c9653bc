//! Approximate Tukey depth over a set of models.
//!
//! Approximate depth only looks at the `2d` axis-aligned halfspaces through a
//! point, so the region of depth at least `i` is the box whose side in
//! dimension `j` runs between the `i`-th smallest and `i`-th largest model
//! coordinate. Everything here works off the per-dimension sorted
//! coordinates ([`SortedProjections`]).
//!
//! Order statistics are 1-based throughout: `value(j, 1)` is the smallest
//! coordinate in dimension `j`, `value(j, m)` the largest. Dimensions are
//! 0-based.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::noise::RngHandle;
use crate::regression::ModelSet;

/// Read access to per-dimension order statistics.
pub trait OrderStatistics {
    fn dim(&self) -> usize;
    /// Number of models `m`.
    fn count(&self) -> usize;
    /// The `i`-th smallest value in dimension `j`, with `1 <= i <= m`.
    fn value(&self, j: usize, i: usize) -> f64;

    /// Deepest depth with a region that can have positive volume, `⌊m/2⌋`.
    fn max_depth(&self) -> usize {
        self.count() / 2
    }

    /// Side length in dimension `j` of the depth-≥`i` box, or 0 past the median.
    fn side_length(&self, j: usize, i: usize) -> f64 {
        let m = self.count();
        if i == 0 || i > m + 1 - i {
            return 0.0;
        }
        (self.value(j, m + 1 - i) - self.value(j, i)).max(0.0)
    }
}

/// `d × m` matrix whose row `j` holds the sorted `j`-th coordinates of the models.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedProjections {
    dim: usize,
    count: usize,
    values: Vec<f64>,
}

impl SortedProjections {
    /// Row `j`, ascending.
    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.count..(j + 1) * self.count]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.count)
    }
}

impl OrderStatistics for SortedProjections {
    fn dim(&self) -> usize {
        self.dim
    }

    fn count(&self) -> usize {
        self.count
    }

    fn value(&self, j: usize, i: usize) -> f64 {
        debug_assert!(i >= 1 && i <= self.count);
        self.values[j * self.count + i - 1]
    }
}

/// Sorts each coordinate of the models independently.
pub fn sorted_projections(models: &ModelSet) -> SortedProjections {
    let dim = models.dim();
    let count = models.len();
    let mut values = Vec::with_capacity(dim * count);
    for j in 0..dim {
        let mut row = models.coordinate(j);
        row.sort_unstable_by(f64::total_cmp);
        values.extend(row);
    }
    SortedProjections { dim, count, values }
}

/// Relative size of the tie-breaking noise.
pub const PERTURBATION_SCALE: f64 = 1e-6;

/// Upper end `η_j` of the tie-breaking noise for each coordinate.
pub fn perturbation_bounds(models: &ModelSet) -> Vec<f64> {
    (0..models.dim())
        .map(|j| {
            let (lo, hi) = models
                .models()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
                    (lo.min(m[j]), hi.max(m[j]))
                });
            PERTURBATION_SCALE * (hi - lo).max(PERTURBATION_SCALE)
        })
        .collect()
}

/// Adds independent `Uniform(0, η_j)` noise to every coordinate so that no two
/// models share a coordinate value (almost surely).
pub fn perturb_models(models: &ModelSet, rng: &mut RngHandle) -> ModelSet {
    let eta = perturbation_bounds(models);
    let perturbed = models
        .models()
        .iter()
        .map(|m| {
            m.iter()
                .zip(&eta)
                .map(|(v, e)| v + e * rng.open01())
                .collect()
        })
        .collect();
    ModelSet::new(perturbed).expect("perturbation preserves shape and finiteness")
}

/// Minimum over the `2d` closed axis-aligned halfspaces through `point` of
/// the number of models inside. Binary search per dimension.
pub fn approx_tukey_depth(point: &[f64], projections: &SortedProjections) -> usize {
    assert_eq!(point.len(), projections.dim, "point dimension mismatch");
    let m = projections.count;
    projections
        .rows()
        .zip(point)
        .map(|(row, &p)| {
            let at_most = row.partition_point(|&v| v <= p);
            let at_least = m - row.partition_point(|&v| v < p);
            at_most.min(at_least)
        })
        .min()
        .unwrap_or(0)
}

/// `ln V_i` for `i = 1..=⌊m/2⌋`, where `V_i` is the volume of the region of
/// approximate depth at least `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogVolumes {
    log_v: Vec<f64>,
}

impl LogVolumes {
    pub fn new(log_v: Vec<f64>) -> Result<Self> {
        if log_v.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::param("log volumes must be finite or -inf"));
        }
        Ok(Self { log_v })
    }

    /// `M`, the number of stored depths.
    pub fn len(&self) -> usize {
        self.log_v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_v.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.log_v
    }

    /// `ln V_i` for any `i >= 0`: `V_0 = +∞` (all of space) and `V_i = 0` past `M`.
    pub fn get(&self, i: usize) -> f64 {
        match i {
            0 => f64::INFINITY,
            i if i <= self.log_v.len() => self.log_v[i - 1],
            _ => f64::NEG_INFINITY,
        }
    }
}

/// `ln V_i = Σ_j ln(S_{j,m-i+1} - S_{j,i})`. A zero side length gives `-∞`.
pub fn compute_log_volumes<S: OrderStatistics + ?Sized>(projections: &S) -> LogVolumes {
    let log_v = (1..=projections.max_depth())
        .map(|i| {
            (0..projections.dim())
                .map(|j| projections.side_length(j, i).ln())
                .sum()
        })
        .collect();
    LogVolumes { log_v }
}

/// Exact (all-directions) Tukey depth in the plane, used as a reference.
///
/// The halfspace count only changes at directions orthogonal to some
/// `model - point`, so it is evaluated once inside every arc between
/// consecutive critical directions. Closed halfspaces count boundary models,
/// so the open arcs carry the minimum.
pub fn exact_tukey_depth_2d(point: &[f64], models: &ModelSet) -> Result<usize> {
    if models.dim() != 2 || point.len() != 2 {
        return Err(Error::UnsupportedDimension(if point.len() != 2 {
            point.len()
        } else {
            models.dim()
        }));
    }
    let mut coincident = 0;
    let mut angles = Vec::with_capacity(models.len());
    for m in models.models() {
        let (dx, dy) = (m[0] - point[0], m[1] - point[1]);
        if dx == 0.0 && dy == 0.0 {
            coincident += 1;
        } else {
            angles.push(dy.atan2(dx));
        }
    }
    if angles.is_empty() {
        return Ok(coincident);
    }
    let mut critical: Vec<f64> = angles
        .iter()
        .flat_map(|&a| {
            [
                (a + PI / 2.0).rem_euclid(TAU),
                (a - PI / 2.0).rem_euclid(TAU),
            ]
        })
        .collect();
    critical.sort_unstable_by(f64::total_cmp);
    critical.dedup();
    let count_at =
        |phi: f64| coincident + angles.iter().filter(|&&a| (phi - a).cos() >= 0.0).count();
    let k = critical.len();
    let depth = (0..k)
        .map(|idx| {
            let lo = critical[idx];
            let hi = if idx + 1 < k {
                critical[idx + 1]
            } else {
                critical[0] + TAU
            };
            count_at(0.5 * (lo + hi))
        })
        .min()
        .unwrap_or(coincident);
    Ok(depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    pub(crate) fn six_point_points() -> ModelSet {
        ModelSet::new(vec![
            vec![1.0, 1.0],
            vec![7.0, 3.0],
            vec![5.0, 7.0],
            vec![3.0, 3.0],
            vec![5.0, 5.0],
            vec![6.0, 3.0],
        ])
        .unwrap()
    }

    fn linear_scan_depth(point: &[f64], models: &ModelSet) -> usize {
        (0..models.dim())
            .map(|j| {
                let below = models.models().iter().filter(|m| m[j] <= point[j]).count();
                let above = models.models().iter().filter(|m| m[j] >= point[j]).count();
                below.min(above)
            })
            .min()
            .unwrap()
    }

    fn random_models(rng: &mut RngHandle, m: usize, d: usize) -> ModelSet {
        ModelSet::new(
            (0..m)
                .map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn six_point_projections() {
        let s = sorted_projections(&six_point_points());
        assert_eq!(s.row(0), &[1.0, 3.0, 5.0, 5.0, 6.0, 7.0]);
        assert_eq!(s.row(1), &[1.0, 3.0, 3.0, 3.0, 5.0, 7.0]);
        let pair = sorted_projections(&ModelSet::new(vec![vec![2.0], vec![1.0]]).unwrap());
        assert_eq!(pair.row(0), &[1.0, 2.0]);
        let flat = sorted_projections(&ModelSet::new(vec![vec![4.0]; 5]).unwrap());
        assert!(flat.row(0).iter().all(|&v| v == 4.0));
    }

    #[test]
    fn six_point_depths() {
        let s = sorted_projections(&six_point_points());
        assert_eq!(approx_tukey_depth(&[5.0, 4.0], &s), 2);
        assert_eq!(approx_tukey_depth(&[0.0, 4.0], &s), 0);
        assert_eq!(approx_tukey_depth(&[100.0, -100.0], &s), 0);
        let single = sorted_projections(&ModelSet::new(vec![vec![1.5, -2.0]]).unwrap());
        assert_eq!(approx_tukey_depth(&[1.5, -2.0], &single), 1);
    }

    #[test]
    fn six_point_volumes() {
        let s = sorted_projections(&six_point_points());
        let v = compute_log_volumes(&s);
        assert_eq!(v.len(), 3);
        assert_eq!(v.get(1).exp().round(), 36.0);
        assert!((v.get(1) - 36f64.ln()).abs() < 1e-15);
        assert!((v.get(2) - 6f64.ln()).abs() < 1e-15);
        assert_eq!(v.get(3), f64::NEG_INFINITY);
        assert_eq!(v.get(0), f64::INFINITY);
        assert_eq!(v.get(4), f64::NEG_INFINITY);
    }

    #[test]
    fn one_dimensional_volumes() {
        let s = sorted_projections(
            &ModelSet::new(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap(),
        );
        let v = compute_log_volumes(&s);
        assert!((v.get(1) - 3f64.ln()).abs() < 1e-15);
        assert!(v.get(2).abs() < 1e-15);
    }

    #[test]
    fn identical_models_have_no_volume() {
        let s = sorted_projections(&ModelSet::new(vec![vec![1.0, 2.0]; 8]).unwrap());
        assert!(compute_log_volumes(&s)
            .as_slice()
            .iter()
            .all(|&v| v == f64::NEG_INFINITY));
    }

    #[test]
    fn perturbation_breaks_ties_within_bounds() {
        let models = ModelSet::new(vec![vec![1.0, 2.0]; 10]).unwrap();
        let eta = perturbation_bounds(&models);
        assert_eq!(eta, vec![1e-12, 1e-12]);
        let mut rng = RngHandle::new(8);
        let perturbed = perturb_models(&models, &mut rng);
        let s = sorted_projections(&perturbed);
        for (j, row) in s.rows().enumerate() {
            assert!(row.windows(2).all(|w| w[0] < w[1]));
            for v in row {
                let change = v - models.models()[0][j];
                assert!(change > 0.0 && change <= eta[j]);
            }
        }
        let v = compute_log_volumes(&s);
        assert!(v.as_slice().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn perturbation_bounds_scale_with_spread() {
        let models = ModelSet::new(vec![vec![0.0, 5.0], vec![100.0, 5.5]]).unwrap();
        let eta = perturbation_bounds(&models);
        assert!((eta[0] - 1e-4).abs() < 1e-18);
        assert!((eta[1] - 5e-7).abs() < 1e-18);
    }

    #[test]
    fn exact_depth_examples() {
        let pts = six_point_points();
        assert_eq!(exact_tukey_depth_2d(&[1.0, 1.0], &pts).unwrap(), 1);
        assert_eq!(exact_tukey_depth_2d(&[50.0, 50.0], &pts).unwrap(), 0);
        assert_eq!(exact_tukey_depth_2d(&[5.0, 4.0], &pts).unwrap(), 2);
        let line = ModelSet::new(vec![vec![0.0]]).unwrap();
        assert!(matches!(
            exact_tukey_depth_2d(&[0.0], &line),
            Err(Error::UnsupportedDimension(1))
        ));
    }

    #[test]
    fn binary_search_matches_linear_scan() {
        let mut rng = RngHandle::new(21);
        for _ in 0..300 {
            let m = 1 + (rng.random::<u32>() % 40) as usize;
            let d = 1 + (rng.random::<u32>() % 4) as usize;
            // round to a coarse grid so ties and boundary hits occur
            let models = ModelSet::new(
                (0..m)
                    .map(|_| {
                        (0..d)
                            .map(|_| (rng.random_range(-3.0f64..3.0)).round())
                            .collect()
                    })
                    .collect(),
            )
            .unwrap();
            let s = sorted_projections(&models);
            let p: Vec<f64> = (0..d)
                .map(|_| rng.random_range(-4.0f64..4.0).round())
                .collect();
            assert_eq!(approx_tukey_depth(&p, &s), linear_scan_depth(&p, &models));
        }
    }

    #[test]
    fn nested_volumes_are_nonincreasing() {
        let mut rng = RngHandle::new(22);
        for _ in 0..100 {
            let m = 2 + (rng.random::<u32>() % 60) as usize;
            let s = sorted_projections(&random_models(&mut rng, m, 3));
            let v = compute_log_volumes(&s);
            assert!(v.as_slice().windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn box_points_have_at_least_the_box_depth() {
        let mut rng = RngHandle::new(23);
        for _ in 0..100 {
            let m = 4 + (rng.random::<u32>() % 40) as usize;
            let s = sorted_projections(&random_models(&mut rng, m, 3));
            let i = 1 + (rng.random::<u32>() as usize) % s.max_depth();
            let p: Vec<f64> = (0..3)
                .map(|j| rng.random_range(s.value(j, i)..=s.value(j, m + 1 - i)))
                .collect();
            assert!(approx_tukey_depth(&p, &s) >= i);
        }
    }

    proptest! {
        #[test]
        fn adding_a_model_never_lowers_depth(
            pts in prop::collection::vec(prop::collection::vec(-10i32..10, 3), 1..30),
            extra in prop::collection::vec(-10i32..10, 3),
            query in prop::collection::vec(-10i32..10, 3),
        ) {
            let to_f = |v: &Vec<i32>| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
            let base = ModelSet::new(pts.iter().map(to_f).collect()).unwrap();
            let mut grown = base.models().to_vec();
            grown.push(to_f(&extra));
            let grown = ModelSet::new(grown).unwrap();
            let q = to_f(&query);
            prop_assert!(
                approx_tukey_depth(&q, &sorted_projections(&grown))
                    >= approx_tukey_depth(&q, &sorted_projections(&base))
            );
        }

        #[test]
        fn exact_depth_dominated_by_approx(
            pts in prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 1..25),
            qx in -25.0f64..25.0,
            qy in -25.0f64..25.0,
        ) {
            let models = ModelSet::new(pts.iter().map(|&(x, y)| vec![x, y]).collect()).unwrap();
            let q = [qx, qy];
            let exact = exact_tukey_depth_2d(&q, &models).unwrap();
            prop_assert!(exact <= approx_tukey_depth(&q, &sorted_projections(&models)));
        }
    }
}
