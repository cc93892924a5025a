//! Permutation-test machinery behind the tree: linear statistics of a
//! covariate transformation `g` against outcome transformation `h`, their
//! conditional moments under the permutation null, the quadratic chi-square
//! test, Bonferroni adjustment and the maximally selected split search.
//!
//! Layout conventions: `g` is an `n x p` matrix, `h` an `n x q` matrix, and
//! the linear statistic is `t = vec(sum_i w_i g_i h_i^T)` with columns
//! stacked, i.e. `t = sum_i w_i (h_i (x) g_i)` of length `p * q`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::chisq::chisq_upper_tail;
use crate::data::{CovariateKind, CovariateValue};
use crate::error::InferenceError;

/// Eigenvalues at or below this fraction of the largest are treated as zero.
pub const SPECTRAL_TOLERANCE: f64 = 1e-10;

/// Largest number of levels a nominal covariate may have for exhaustive
/// binary partition search.
pub const MAX_NOMINAL_LEVELS: usize = 6;

/// Covariate transformation `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateTransform {
    /// `x -> (x)`; ordinal levels use their index as score.
    NumericIdentity,
    /// Dummy coding of `levels` categories, dropping the first (`levels - 1` columns).
    IndicatorSet { levels: usize },
}

impl CovariateTransform {
    pub fn for_kind(kind: CovariateKind, levels: usize) -> Self {
        match kind {
            CovariateKind::Numeric | CovariateKind::Ordinal => CovariateTransform::NumericIdentity,
            CovariateKind::Binary | CovariateKind::Nominal => {
                CovariateTransform::IndicatorSet { levels }
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CovariateTransform::NumericIdentity => 1,
            CovariateTransform::IndicatorSet { levels } => levels.saturating_sub(1).max(1),
        }
    }

    pub fn apply(&self, values: &[CovariateValue]) -> DMatrix<f64> {
        let p = self.dim();
        let mut g = DMatrix::zeros(values.len(), p);
        for (i, v) in values.iter().enumerate() {
            match self {
                CovariateTransform::NumericIdentity => g[(i, 0)] = v.as_f64(),
                CovariateTransform::IndicatorSet { .. } => {
                    if let CovariateValue::Level(l) = v {
                        if *l >= 1 {
                            g[(i, l - 1)] = 1.0;
                        }
                    }
                }
            }
        }
        g
    }
}

/// Linear statistic with its conditional expectation and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStatistic {
    pub t: DVector<f64>,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub rank: usize,
    pub case_weight_sum: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub p_adjusted: f64,
}

fn check_dims(g: &DMatrix<f64>, h: &DMatrix<f64>, weights: &[bool]) -> Result<(), InferenceError> {
    if g.nrows() != h.nrows() || g.nrows() != weights.len() {
        return Err(InferenceError::Dimension(format!(
            "g has {} rows, h has {} rows, {} weights",
            g.nrows(),
            h.nrows(),
            weights.len()
        )));
    }
    Ok(())
}

/// `t = vec(sum_i w_i g_i h_i^T)`.
pub fn linear_statistic(
    g: &DMatrix<f64>,
    h: &DMatrix<f64>,
    weights: &[bool],
) -> Result<DVector<f64>, InferenceError> {
    check_dims(g, h, weights)?;
    let (p, q) = (g.ncols(), h.ncols());
    let mut t = DVector::zeros(p * q);
    for i in (0..g.nrows()).filter(|&i| weights[i]) {
        for k in 0..q {
            let hk = h[(i, k)];
            for j in 0..p {
                t[k * p + j] += g[(i, j)] * hk;
            }
        }
    }
    Ok(t)
}

/// Weighted mean and covariance (divisor `w`) of the outcome rows.
#[derive(Debug, Clone)]
pub struct OutcomeMoments {
    pub weight_sum: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl OutcomeMoments {
    pub fn new(h: &DMatrix<f64>, weights: &[bool]) -> Result<Self, InferenceError> {
        let q = h.ncols();
        let active: Vec<usize> = (0..h.nrows()).filter(|&i| weights[i]).collect();
        let w = active.len();
        if w < 2 {
            return Err(InferenceError::Degenerate(w));
        }
        let mut mean = DVector::zeros(q);
        for &i in &active {
            for k in 0..q {
                mean[k] += h[(i, k)];
            }
        }
        mean /= w as f64;
        // a constant column must give an exactly zero variance
        let constant: Vec<bool> = (0..q)
            .map(|k| active.iter().all(|&i| h[(i, k)] == h[(active[0], k)]))
            .collect();
        let mut cov = DMatrix::zeros(q, q);
        for &i in &active {
            let dev: Vec<f64> = (0..q)
                .map(|k| if constant[k] { 0.0 } else { h[(i, k)] - mean[k] })
                .collect();
            for a in 0..q {
                for b in 0..q {
                    cov[(a, b)] += dev[a] * dev[b];
                }
            }
        }
        cov /= w as f64;
        Ok(Self { weight_sum: w, mean, cov })
    }
}

/// Conditional expectation and covariance of `t` under the permutation null.
pub fn conditional_moments(
    g: &DMatrix<f64>,
    h: &DMatrix<f64>,
    weights: &[bool],
) -> Result<LinearStatistic, InferenceError> {
    let t = linear_statistic(g, h, weights)?;
    let moments = OutcomeMoments::new(h, weights)?;
    let p = g.ncols();
    let w = moments.weight_sum as f64;

    let mut sum_g = DVector::zeros(p);
    let mut sum_gg = DMatrix::zeros(p, p);
    for i in (0..g.nrows()).filter(|&i| weights[i]) {
        let gi = g.row(i).transpose();
        sum_g += &gi;
        sum_gg += &gi * gi.transpose();
    }
    let mu = moments.mean.kronecker(&sum_g);
    let g_part = sum_gg * (w / (w - 1.0)) - (&sum_g * sum_g.transpose()) * (1.0 / (w - 1.0));
    let sigma = moments.cov.kronecker(&g_part);
    let rank = spectral_rank(&sigma);
    Ok(LinearStatistic { t, mu, sigma, rank, case_weight_sum: moments.weight_sum })
}

fn symmetric_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    // symmetrize against rounding before decomposing
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

fn retained(values: &DVector<f64>) -> impl Fn(f64) -> bool {
    let max = values.iter().cloned().fold(0.0_f64, f64::max);
    move |v: f64| max > 0.0 && v > SPECTRAL_TOLERANCE * max
}

fn spectral_rank(m: &DMatrix<f64>) -> usize {
    if m.iter().all(|&v| v == 0.0) {
        return 0;
    }
    let eig = symmetric_eigen(m);
    let keep = retained(&eig.eigenvalues);
    eig.eigenvalues.iter().filter(|&&v| keep(v)).count()
}

/// Moore-Penrose pseudoinverse over the retained spectral subspace, with its rank.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let n = m.nrows();
    if m.iter().all(|&v| v == 0.0) {
        return (DMatrix::zeros(n, n), 0);
    }
    let eig = symmetric_eigen(m);
    let keep = retained(&eig.eigenvalues);
    let mut inv = DMatrix::zeros(n, n);
    let mut rank = 0;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if keep(lambda) {
            let v = eig.eigenvectors.column(k);
            inv += (v * v.transpose()) / lambda;
            rank += 1;
        }
    }
    (inv, rank)
}

/// `(t - mu)^T Sigma^+ (t - mu)` against chi-square with `rank` degrees of freedom.
pub fn quadratic_test(ls: &LinearStatistic) -> Result<TestResult, InferenceError> {
    let (inv, rank) = pseudo_inverse(&ls.sigma);
    if rank == 0 {
        return Err(InferenceError::Untestable);
    }
    let d = &ls.t - &ls.mu;
    let statistic = (d.transpose() * inv * &d)[(0, 0)].max(0.0);
    let p_value = chisq_upper_tail(statistic, rank);
    Ok(TestResult { statistic, df: rank, p_value, p_adjusted: p_value })
}

/// `min(1, p * n_tests)` for every p-value.
pub fn adjust_bonferroni(p_values: &[f64], n_tests: usize) -> Vec<f64> {
    let k = n_tests.max(1) as f64;
    p_values.iter().map(|p| (p * k).min(1.0)).collect()
}

/// Binary split rule found by [`best_split`].
#[derive(Debug, Clone, PartialEq)]
pub enum SplitPoint {
    /// `x <= cutpoint` goes left.
    Cutpoint(f64),
    /// Level indices sent left; every other level goes right.
    Levels(Vec<usize>),
}

/// Maximally selected two-sample statistic over all admissible binary
/// splits of one covariate.
///
/// Returns `None` when no split leaves at least `minsize` subjects on both
/// sides, or when `h` has no variation among the active subjects.
pub fn best_split(
    values: &[CovariateValue],
    kind: CovariateKind,
    h: &DMatrix<f64>,
    weights: &[bool],
    minsize: usize,
) -> Result<Option<(SplitPoint, f64)>, InferenceError> {
    if values.len() != h.nrows() || values.len() != weights.len() {
        return Err(InferenceError::Dimension("covariate, outcome and weights differ in length".into()));
    }
    let moments = OutcomeMoments::new(h, weights)?;
    let (cov_inv, rank) = pseudo_inverse(&moments.cov);
    if rank == 0 {
        return Ok(None);
    }
    let w = moments.weight_sum;
    let minsize = minsize.max(1);
    if w < 2 * minsize {
        return Ok(None);
    }
    let q = h.ncols();
    let row = |i: usize| DVector::from_iterator(q, (0..q).map(|k| h[(i, k)]));

    // Statistic of the indicator g = 1{left}: t - mu = t_left - k E_h and
    // Sigma = V_h * k (w - k) / (w - 1).
    let two_sample = |sum_left: &DVector<f64>, k: usize| -> f64 {
        let d = sum_left - &moments.mean * k as f64;
        let scale = (w as f64 - 1.0) / (k as f64 * (w - k) as f64);
        ((d.transpose() * &cov_inv * &d)[(0, 0)] * scale).max(0.0)
    };

    match kind {
        CovariateKind::Numeric => {
            let mut active: Vec<(f64, usize)> = (0..values.len())
                .filter(|&i| weights[i])
                .map(|i| (values[i].as_f64(), i))
                .collect();
            active.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut sum_left = DVector::zeros(q);
            let mut best: Option<(f64, f64)> = None;
            for pos in 0..active.len() - 1 {
                sum_left += row(active[pos].1);
                let k = pos + 1;
                let (x, next) = (active[pos].0, active[pos + 1].0);
                if x == next || k < minsize || w - k < minsize {
                    continue;
                }
                let stat = two_sample(&sum_left, k);
                if best.is_none_or(|(_, b)| stat > b) {
                    best = Some((x + (next - x) / 2.0, stat));
                }
            }
            Ok(best.map(|(c, s)| (SplitPoint::Cutpoint(c), s)))
        }
        _ => {
            let mut per_level: std::collections::BTreeMap<usize, (usize, DVector<f64>)> =
                Default::default();
            for i in (0..values.len()).filter(|&i| weights[i]) {
                let CovariateValue::Level(l) = values[i] else {
                    return Err(InferenceError::Dimension("categorical split on a numeric value".into()));
                };
                let entry = per_level.entry(l).or_insert_with(|| (0, DVector::zeros(q)));
                entry.0 += 1;
                entry.1 += row(i);
            }
            let levels: Vec<usize> = per_level.keys().copied().collect();
            let candidates: Vec<Vec<usize>> = if kind == CovariateKind::Ordinal {
                (1..levels.len()).map(|k| levels[..k].to_vec()).collect()
            } else {
                if levels.len() > MAX_NOMINAL_LEVELS {
                    return Err(InferenceError::Dimension(format!(
                        "nominal covariate with {} levels exceeds the limit of {MAX_NOMINAL_LEVELS}",
                        levels.len()
                    )));
                }
                let rest = levels.len().saturating_sub(1);
                (0..(1usize << rest).saturating_sub(1))
                    .map(|mask| {
                        std::iter::once(levels[0])
                            .chain((0..rest).filter(|j| mask >> j & 1 == 1).map(|j| levels[j + 1]))
                            .collect()
                    })
                    .collect()
            };
            let mut best: Option<(Vec<usize>, f64)> = None;
            for left in candidates {
                let (k, sum_left) = left.iter().fold((0, DVector::zeros(q)), |(k, s), l| {
                    let (c, t) = &per_level[l];
                    (k + c, s + t)
                });
                if k < minsize || w - k < minsize {
                    continue;
                }
                let stat = two_sample(&sum_left, k);
                let better = match &best {
                    None => true,
                    Some((set, b)) => stat > *b || (stat == *b && left < *set),
                };
                if better {
                    best = Some((left, stat));
                }
            }
            Ok(best.map(|(set, s)| (SplitPoint::Levels(set), s)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    fn nums(v: &[f64]) -> Vec<CovariateValue> {
        v.iter().map(|&x| CovariateValue::Numeric(x)).collect()
    }

    #[test]
    fn linear_statistic_examples() {
        let (g, h) = (col(&[1.0, 2.0, 3.0]), col(&[2.0, 4.0, 6.0]));
        assert_eq!(linear_statistic(&g, &h, &[true; 3]).unwrap()[0], 28.0);
        assert_eq!(linear_statistic(&g, &col(&[0.0; 3]), &[true; 3]).unwrap()[0], 0.0);
        assert_eq!(linear_statistic(&g, &h, &[true, false, false]).unwrap()[0], 2.0);
        assert!(linear_statistic(&g, &col(&[1.0, 2.0]), &[true; 3]).is_err());
    }

    #[test]
    fn moments_and_test_for_small_example() {
        let (g, h) = (col(&[1.0, 2.0, 3.0]), col(&[2.0, 4.0, 6.0]));
        let ls = conditional_moments(&g, &h, &[true; 3]).unwrap();
        assert_relative_eq!(ls.mu[0], 24.0, epsilon = 1e-12);
        assert_relative_eq!(ls.sigma[(0, 0)], 8.0, epsilon = 1e-12);
        assert_eq!(ls.rank, 1);
        let r = quadratic_test(&ls).unwrap();
        assert_relative_eq!(r.statistic, 2.0, epsilon = 1e-12);
        assert_eq!(r.df, 1);
        assert!((r.p_value - 0.157_299_207).abs() < 1e-8);
    }

    #[test]
    fn constant_outcome_is_untestable() {
        let ls = conditional_moments(&col(&[1.0, 2.0, 3.0]), &col(&[0.1; 3]), &[true; 3]).unwrap();
        assert_eq!(ls.rank, 0);
        assert!(ls.sigma.iter().all(|&v| v == 0.0));
        assert_eq!(quadratic_test(&ls), Err(InferenceError::Untestable));
    }

    #[test]
    fn too_few_cases_is_degenerate() {
        let err = conditional_moments(&col(&[1.0, 2.0]), &col(&[1.0, 3.0]), &[true, false]).unwrap_err();
        assert_eq!(err, InferenceError::Degenerate(1));
    }

    #[test]
    fn moments_ignore_pairing() {
        let g = col(&[1.0, 2.0, 3.0, 5.0]);
        let a = conditional_moments(&g, &col(&[2.0, 4.0, 6.0, 1.0]), &[true; 4]).unwrap();
        let b = conditional_moments(&g, &col(&[6.0, 1.0, 2.0, 4.0]), &[true; 4]).unwrap();
        assert_ne!(a.t, b.t);
        assert_relative_eq!(a.mu, b.mu, epsilon = 1e-12);
        assert_relative_eq!(a.sigma, b.sigma, epsilon = 1e-12);
    }

    #[test]
    fn statistic_equal_to_expectation_gives_p_one() {
        let ls = LinearStatistic {
            t: DVector::from_vec(vec![3.0, 1.0]),
            mu: DVector::from_vec(vec![3.0, 1.0]),
            sigma: DMatrix::identity(2, 2),
            rank: 2,
            case_weight_sum: 10,
        };
        let r = quadratic_test(&ls).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn bivariate_outcome_has_two_df() {
        let g = col(&[1.0, 4.0, 2.0, 8.0, 5.0]);
        let h = DMatrix::from_row_slice(5, 2, &[1.0, 3.0, 2.0, 1.0, 0.5, 0.2, 4.0, 4.0, 3.0, 0.0]);
        let r = quadratic_test(&conditional_moments(&g, &h, &[true; 5]).unwrap()).unwrap();
        assert_eq!(r.df, 2);
    }

    #[test]
    fn bonferroni() {
        let adj = adjust_bonferroni(&[0.01, 0.4], 2);
        assert_relative_eq!(adj[0], 0.02);
        assert_relative_eq!(adj[1], 0.8);
        assert_eq!(adjust_bonferroni(&[0.6], 2), vec![1.0]);
        assert_eq!(adjust_bonferroni(&[0.05], 1), vec![0.05]);
    }

    #[test]
    fn split_on_step() {
        let h = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 0.0, 1.0, 10.0, 1.0, 10.0, 1.0]);
        let (split, _) =
            best_split(&nums(&[1.0, 2.0, 3.0, 4.0]), CovariateKind::Numeric, &h, &[true; 4], 2)
                .unwrap()
                .unwrap();
        assert_eq!(split, SplitPoint::Cutpoint(2.5));
        assert!(best_split(&nums(&[1.0, 2.0, 3.0, 4.0]), CovariateKind::Numeric, &h, &[true; 4], 3)
            .unwrap()
            .is_none());
    }

    #[test]
    fn binary_covariate_has_one_partition() {
        let v: Vec<_> = [0, 1, 0, 1, 1, 0].iter().map(|&l| CovariateValue::Level(l)).collect();
        let h = col(&[1.0, 5.0, 2.0, 6.0, 5.5, 0.0]);
        let (split, _) = best_split(&v, CovariateKind::Binary, &h, &[true; 6], 3).unwrap().unwrap();
        assert_eq!(split, SplitPoint::Levels(vec![0]));
        assert!(best_split(&v, CovariateKind::Binary, &h, &[true; 6], 4).unwrap().is_none());
    }

    #[test]
    fn nominal_search_finds_grouping() {
        // levels 0 and 2 share a high outcome
        let levels = [0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3];
        let v: Vec<_> = levels.iter().map(|&l| CovariateValue::Level(l)).collect();
        let h = col(&levels.iter().enumerate().map(|(i, &l)| if l % 2 == 0 { 10.0 } else { 0.0 } + i as f64 * 0.01).collect::<Vec<_>>());
        let (split, _) = best_split(&v, CovariateKind::Nominal, &h, &[true; 12], 2).unwrap().unwrap();
        assert_eq!(split, SplitPoint::Levels(vec![0, 2]));
    }

    #[test]
    fn fast_split_statistic_matches_generic_route() {
        let x = [3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.0, 6.0];
        let h = DMatrix::from_row_slice(8, 2, &[
            1.0, 0.3, 2.0, 1.0, 0.5, 2.2, 4.0, 0.1, 3.0, 3.3, 0.0, 0.9, 1.1, 1.2, 2.5, 0.7,
        ]);
        let weights = [true, true, true, false, true, true, true, true];
        let (SplitPoint::Cutpoint(c), stat) =
            best_split(&nums(&x), CovariateKind::Numeric, &h, &weights, 2).unwrap().unwrap()
        else {
            panic!("numeric split expected")
        };
        let (mut best, mut best_cut) = (f64::NEG_INFINITY, f64::NAN);
        let mut sorted: Vec<f64> = x.iter().zip(weights).filter(|p| p.1).map(|p| *p.0).collect();
        sorted.sort_by(f64::total_cmp);
        for pair in sorted.windows(2) {
            let cut = (pair[0] + pair[1]) / 2.0;
            let g = col(&x.iter().map(|&v| if v <= cut { 1.0 } else { 0.0 }).collect::<Vec<_>>());
            let left = x.iter().zip(weights).filter(|(v, w)| *w && **v <= cut).count();
            if left < 2 || 7 - left < 2 {
                continue;
            }
            let r = quadratic_test(&conditional_moments(&g, &h, &weights).unwrap()).unwrap();
            if r.statistic > best {
                best = r.statistic;
                best_cut = cut;
            }
        }
        assert_eq!(best_cut, c);
        assert_relative_eq!(stat, best, max_relative = 1e-10);
    }

    #[test]
    fn indicator_transform_is_full_rank_dummy() {
        let v: Vec<_> = [0, 1, 2, 1].iter().map(|&l| CovariateValue::Level(l)).collect();
        let g = CovariateTransform::IndicatorSet { levels: 3 }.apply(&v);
        assert_eq!(g, DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]));
    }
}
