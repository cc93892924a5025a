//! Bland-Altman estimators for repeated measurements.
//!
//! Two replicate designs are supported:
//!
//! * **unpaired** – each method measures a constant true value several
//!   times. Bias is the unweighted mean of the subject mean differences and
//!   the variance of a single difference is the between-subject variance of
//!   those means plus the within-subject variances of both methods, each
//!   corrected by `1 - mean(1/m)`.
//! * **paired** – measurements come in pairs of a changing true value. Bias
//!   is weighted by the number of pairs and the variance is assembled from a
//!   one-way ANOVA decomposition of the paired differences.
//!
//! Besides the global estimates, every estimator has a per-subject
//! transformation `h = (h1, h2)` whose averages over all subjects reproduce
//! the global bias and total variance. Those transformed values are what the
//! tree tests for association with covariates.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Design, SubjectSeries};
use crate::error::EstimationError;

/// Quantile multiplier of the 95% limits of agreement.
pub const LOA_MULTIPLIER: f64 = 1.96;

/// How the between-subject term of the paired variance is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMode {
    /// Unweighted variance of the subject mean differences.
    Literal,
    /// Weighted between-subject mean square `sum m_i (ybar_i - ybar)^2 / (n - 1)`.
    #[default]
    Msb,
}

impl std::str::FromStr for VarianceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "literal" => Ok(VarianceMode::Literal),
            "msb" => Ok(VarianceMode::Msb),
            other => Err(format!("unknown variance mode '{other}' (expected msb or literal)")),
        }
    }
}

/// Replicate counts and residual sums of squares of one subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Replicates {
    Unpaired { m_a: usize, m_b: usize, rss_a: f64, rss_b: f64 },
    Paired { m: usize, rss: f64 },
}

/// Per-subject sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSummary {
    pub subject_id: String,
    pub mean_diff: f64,
    pub replicates: Replicates,
}

impl SubjectSummary {
    /// Number of replicates entering the bias weight (pairs in paired mode).
    pub fn m(&self) -> usize {
        match self.replicates {
            Replicates::Unpaired { m_a, .. } => m_a,
            Replicates::Paired { m, .. } => m,
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn rss(values: &[f64]) -> f64 {
    let center = mean(values);
    values.iter().map(|v| (v - center).powi(2)).sum()
}

pub fn summarize_subject(subject: &SubjectSeries, design: Design) -> SubjectSummary {
    let (a, b) = (&subject.measurements_a, &subject.measurements_b);
    match design {
        Design::Unpaired => SubjectSummary {
            subject_id: subject.subject_id.clone(),
            mean_diff: mean(a) - mean(b),
            replicates: Replicates::Unpaired {
                m_a: a.len(),
                m_b: b.len(),
                rss_a: rss(a),
                rss_b: rss(b),
            },
        },
        Design::Paired => {
            let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            SubjectSummary {
                subject_id: subject.subject_id.clone(),
                mean_diff: mean(&diffs),
                replicates: Replicates::Paired { m: diffs.len(), rss: rss(&diffs) },
            }
        }
    }
}

pub fn subject_summaries(dataset: &Dataset) -> Vec<SubjectSummary> {
    dataset.subjects.iter().map(|s| summarize_subject(s, dataset.design)).collect()
}

/// Bland-Altman parameters of a set of subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaEstimate {
    pub bias: f64,
    pub var_between: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_within_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_within_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var_within: Option<f64>,
    /// Total variance of a single difference, clamped at zero.
    pub var_total: f64,
    /// Total variance before clamping.
    pub var_total_raw: f64,
    pub loa: [f64; 2],
    pub n_subjects: usize,
    pub clamped: bool,
}

impl BaEstimate {
    pub fn loa_lower(&self) -> f64 {
        self.loa[0]
    }

    pub fn loa_upper(&self) -> f64 {
        self.loa[1]
    }

    pub fn sd(&self) -> f64 {
        self.var_total.sqrt()
    }
}

/// `bias -/+ 1.96 sd`.
///
/// # Panics
/// If `var_total` is negative or NaN.
pub fn limits_of_agreement(bias: f64, var_total: f64) -> (f64, f64) {
    assert!(var_total >= 0.0, "limits of agreement need a non-negative variance, got {var_total}");
    let half = LOA_MULTIPLIER * var_total.sqrt();
    (bias - half, bias + half)
}

fn finish(
    bias: f64,
    var_between: f64,
    within: (Option<f64>, Option<f64>, Option<f64>),
    raw: f64,
    n: usize,
) -> BaEstimate {
    let clamped = raw < 0.0;
    let var_total = raw.max(0.0);
    let (lo, hi) = limits_of_agreement(bias, var_total);
    BaEstimate {
        bias,
        var_between,
        var_within_a: within.0,
        var_within_b: within.1,
        var_within: within.2,
        var_total,
        var_total_raw: raw,
        loa: [lo, hi],
        n_subjects: n,
        clamped,
    }
}

/// Mean of `rss / df` over the subjects with at least one degree of freedom.
fn pooled_within<I>(parts: I, method: &'static str) -> Result<f64, EstimationError>
where
    I: Iterator<Item = (f64, usize)>,
{
    let (sum, count) = parts
        .filter(|&(_, df)| df > 0)
        .fold((0.0, 0usize), |(s, c), (rss, df)| (s + rss / df as f64, c + 1));
    if count == 0 {
        return Err(EstimationError::WithinNotIdentifiable(method));
    }
    Ok(sum / count as f64)
}

/// Frozen quantities shared by the unpaired estimator and its transformation.
struct UnpairedParts {
    n: f64,
    bias: f64,
    var_between: f64,
    within_a: f64,
    within_b: f64,
    factor_a: f64,
    factor_b: f64,
}

fn unpaired_parts(summaries: &[SubjectSummary]) -> Result<UnpairedParts, EstimationError> {
    let n = summaries.len();
    if n < 2 {
        return Err(EstimationError::TooFewSubjects(n));
    }
    let mut rows = Vec::with_capacity(n);
    for s in summaries {
        match s.replicates {
            Replicates::Unpaired { m_a, m_b, rss_a, rss_b } => rows.push((m_a, m_b, rss_a, rss_b)),
            Replicates::Paired { .. } => return Err(EstimationError::DesignMismatch("unpaired")),
        }
    }
    let nf = n as f64;
    let bias = summaries.iter().map(|s| s.mean_diff).sum::<f64>() / nf;
    let var_between =
        summaries.iter().map(|s| (s.mean_diff - bias).powi(2)).sum::<f64>() / (nf - 1.0);
    let within_a = pooled_within(rows.iter().map(|r| (r.2, r.0 - 1)), "A")?;
    let within_b = pooled_within(rows.iter().map(|r| (r.3, r.1 - 1)), "B")?;
    let inv_a = rows.iter().map(|r| 1.0 / r.0 as f64).sum::<f64>() / nf;
    let inv_b = rows.iter().map(|r| 1.0 / r.1 as f64).sum::<f64>() / nf;
    Ok(UnpairedParts {
        n: nf,
        bias,
        var_between,
        within_a,
        within_b,
        factor_a: 1.0 - inv_a,
        factor_b: 1.0 - inv_b,
    })
}

pub fn estimate_unpaired(summaries: &[SubjectSummary]) -> Result<BaEstimate, EstimationError> {
    let p = unpaired_parts(summaries)?;
    let raw = p.var_between + p.factor_a * p.within_a + p.factor_b * p.within_b;
    Ok(finish(
        p.bias,
        p.var_between,
        (Some(p.within_a), Some(p.within_b), None),
        raw,
        summaries.len(),
    ))
}

struct PairedParts {
    n: f64,
    sum_m: f64,
    bias: f64,
    between: f64,
    within: f64,
    m0: f64,
}

fn paired_parts(
    summaries: &[SubjectSummary],
    mode: VarianceMode,
) -> Result<PairedParts, EstimationError> {
    let n = summaries.len();
    if n < 2 {
        return Err(EstimationError::TooFewSubjects(n));
    }
    let mut rows = Vec::with_capacity(n);
    for s in summaries {
        match s.replicates {
            Replicates::Paired { m, rss } => rows.push((m, rss)),
            Replicates::Unpaired { .. } => return Err(EstimationError::DesignMismatch("paired")),
        }
    }
    let nf = n as f64;
    let sum_m: f64 = rows.iter().map(|r| r.0 as f64).sum();
    let sum_m2: f64 = rows.iter().map(|r| (r.0 as f64).powi(2)).sum();
    let bias = summaries.iter().map(|s| s.m() as f64 * s.mean_diff).sum::<f64>() / sum_m;
    let between = summaries
        .iter()
        .map(|s| {
            let w = match mode {
                VarianceMode::Literal => 1.0,
                VarianceMode::Msb => s.m() as f64,
            };
            w * (s.mean_diff - bias).powi(2)
        })
        .sum::<f64>()
        / (nf - 1.0);
    let within = pooled_within(rows.iter().map(|r| (r.1, r.0 - 1)), "A-B")?;
    let m0 = (sum_m * sum_m - sum_m2) / ((nf - 1.0) * sum_m);
    if m0 <= 0.0 {
        return Err(EstimationError::ZeroDivisor);
    }
    Ok(PairedParts { n: nf, sum_m, bias, between, within, m0 })
}

pub fn estimate_paired(
    summaries: &[SubjectSummary],
    mode: VarianceMode,
) -> Result<BaEstimate, EstimationError> {
    let p = paired_parts(summaries, mode)?;
    let raw = (p.between - p.within) / p.m0 + p.within;
    Ok(finish(p.bias, p.between, (None, None, Some(p.within)), raw, summaries.len()))
}

/// Dispatches on the design recorded in the summaries.
pub fn estimate(
    summaries: &[SubjectSummary],
    mode: VarianceMode,
) -> Result<BaEstimate, EstimationError> {
    match summaries.first().map(|s| s.replicates) {
        Some(Replicates::Paired { .. }) => estimate_paired(summaries, mode),
        _ => estimate_unpaired(summaries),
    }
}

pub fn estimate_dataset(dataset: &Dataset, mode: VarianceMode) -> Result<BaEstimate, EstimationError> {
    estimate(&subject_summaries(dataset), mode)
}

/// Per-subject bias and variance components `h = (h1, h2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedOutcome {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
}

impl TransformedOutcome {
    pub fn len(&self) -> usize {
        self.h1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h1.is_empty()
    }
}

// A subject without within-subject degrees of freedom is assigned the pooled
// within variance, so the subject average still equals the pooled estimate.
fn within_component(rss: f64, df: usize, pooled: f64) -> f64 {
    if df == 0 {
        pooled
    } else {
        rss / df as f64
    }
}

pub fn transform_unpaired(summaries: &[SubjectSummary]) -> Result<TransformedOutcome, EstimationError> {
    let p = unpaired_parts(summaries)?;
    let mut h1 = Vec::with_capacity(summaries.len());
    let mut h2 = Vec::with_capacity(summaries.len());
    for s in summaries {
        let Replicates::Unpaired { m_a, m_b, rss_a, rss_b } = s.replicates else {
            unreachable!("checked by unpaired_parts")
        };
        let between = p.n / (p.n - 1.0) * (s.mean_diff - p.bias).powi(2);
        let wa = within_component(rss_a, m_a - 1, p.within_a);
        let wb = within_component(rss_b, m_b - 1, p.within_b);
        h1.push(s.mean_diff);
        h2.push(between + p.factor_a * wa + p.factor_b * wb);
    }
    Ok(TransformedOutcome { h1, h2 })
}

pub fn transform_paired(
    summaries: &[SubjectSummary],
    mode: VarianceMode,
) -> Result<TransformedOutcome, EstimationError> {
    let p = paired_parts(summaries, mode)?;
    let mut h1 = Vec::with_capacity(summaries.len());
    let mut h2 = Vec::with_capacity(summaries.len());
    for s in summaries {
        let Replicates::Paired { m, rss } = s.replicates else {
            unreachable!("checked by paired_parts")
        };
        let mf = m as f64;
        let weight = match mode {
            VarianceMode::Literal => 1.0,
            VarianceMode::Msb => mf,
        };
        let between = p.n * weight / (p.n - 1.0) * (s.mean_diff - p.bias).powi(2);
        let within = within_component(rss, m - 1, p.within);
        h1.push(p.n * mf * s.mean_diff / p.sum_m);
        h2.push((between - within) / p.m0 + within);
    }
    Ok(TransformedOutcome { h1, h2 })
}

pub fn transform(
    summaries: &[SubjectSummary],
    mode: VarianceMode,
) -> Result<TransformedOutcome, EstimationError> {
    match summaries.first().map(|s| s.replicates) {
        Some(Replicates::Paired { .. }) => transform_paired(summaries, mode),
        _ => transform_unpaired(summaries),
    }
}
