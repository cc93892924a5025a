//! Conditional method agreement trees.
//!
//! The tree is grown on per-subject transformed outcomes: `(bias component,
//! variance component)` for the agreement tree, or the bias component alone
//! for the mean-only benchmark. The transformation is computed once on the
//! full sample and stays fixed in every node. At each node every covariate is
//! tested for association with the outcome, p-values are Bonferroni adjusted
//! over the testable covariates, and the most significant covariate is split
//! at its maximally selected binary partition.
//!
//! Every node also stores a Bland-Altman analysis recomputed on its own
//! subjects, which is what the renderings report.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::agreement::{self, BaEstimate, SubjectSummary, VarianceMode};
use crate::data::{CovariateKind, CovariateSpec, CovariateValue, Dataset, Design};
use crate::error::{CoatError, EstimationError, InferenceError};
use crate::inference::{
    adjust_bonferroni, best_split, conditional_moments, quadratic_test, CovariateTransform,
    SplitPoint, TestResult, MAX_NOMINAL_LEVELS,
};

/// Outcome transformation handed to the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Bivariate bias and variance components.
    #[default]
    Ba,
    /// Bias component only (a conventional regression tree on the mean difference).
    MeanOnly,
}

impl std::str::FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ba" | "coat" => Ok(Outcome::Ba),
            "mean_only" | "ctree_mean" => Ok(Outcome::MeanOnly),
            other => Err(format!("unknown outcome '{other}' (expected ba or mean-only)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Significance level; `1.0` accepts every feasible split.
    pub alpha: f64,
    /// Minimum number of subjects in a child node.
    pub minsize: usize,
    /// Minimum number of subjects in a node considered for splitting.
    pub minsplit: usize,
    /// Maximum number of split levels; `None` is unlimited.
    pub maxdepth: Option<usize>,
    pub variance_mode: VarianceMode,
    pub outcome: Outcome,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            minsize: 10,
            minsplit: 20,
            maxdepth: None,
            variance_mode: VarianceMode::Msb,
            outcome: Outcome::Ba,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), CoatError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(CoatError::Config(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if self.minsize < 1 {
            return Err(CoatError::Config("minsize must be at least 1".into()));
        }
        if self.minsplit < 2 || self.minsplit < 2 * self.minsize {
            return Err(CoatError::Config(format!(
                "minsplit ({}) must be at least 2 * minsize ({})",
                self.minsplit,
                2 * self.minsize
            )));
        }
        if self.maxdepth == Some(0) {
            return Err(CoatError::Config("maxdepth must be at least 1".into()));
        }
        Ok(())
    }
}

/// Rule of an inner node: `covariate <= cutpoint` or `covariate in left_levels` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub covariate: String,
    #[serde(flatten)]
    pub rule: SplitRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitRule {
    Cutpoint { cutpoint: f64 },
    Levels { left_levels: Vec<String> },
}

/// Outcome of testing one covariate at a node. `result` is `None` for an
/// untestable covariate (zero-rank covariance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateTest {
    pub covariate: String,
    pub result: Option<TestResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Inner,
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoatNode {
    pub id: usize,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    /// Adjusted p-value of the selected covariate (tested nodes only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_adjusted: Option<f64>,
    pub n: usize,
    pub estimate: BaEstimate,
    pub subject_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tests: Vec<CovariateTest>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<CoatNode>,
}

impl CoatNode {
    pub fn is_leaf(&self) -> bool {
        self.kind == NodeKind::Leaf
    }

    /// Node with the given id in this subtree.
    pub fn find(&self, id: usize) -> Option<&CoatNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(id))
    }

    /// Selected covariate test of a tested node.
    pub fn selected_test(&self) -> Option<(&str, &TestResult)> {
        self.tests
            .iter()
            .filter_map(|t| t.result.as_ref().map(|r| (t.covariate.as_str(), r)))
            .min_by(|a, b| {
                a.1.p_value
                    .total_cmp(&b.1.p_value)
                    .then(b.1.statistic.total_cmp(&a.1.statistic))
            })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub nodes_tested: usize,
    pub splits_rejected_minsize: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoatTree {
    pub design: Design,
    pub config: FitConfig,
    pub covariates: Vec<CovariateSpec>,
    pub diagnostics: FitDiagnostics,
    pub root: CoatNode,
}

/// Covariate value used for routing a new observation.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateInput {
    Numeric(f64),
    Level(String),
}

/// Builds the `n x q` outcome matrix for the configured transformation.
pub fn outcome_matrix(
    summaries: &[SubjectSummary],
    design: Design,
    config: &FitConfig,
) -> Result<DMatrix<f64>, EstimationError> {
    let n = summaries.len();
    match config.outcome {
        Outcome::Ba => {
            let h = agreement::transform(summaries, config.variance_mode)?;
            Ok(DMatrix::from_fn(n, 2, |i, k| if k == 0 { h.h1[i] } else { h.h2[i] }))
        }
        Outcome::MeanOnly => {
            if n < 2 {
                return Err(EstimationError::TooFewSubjects(n));
            }
            let values: Vec<f64> = match design {
                Design::Unpaired => summaries.iter().map(|s| s.mean_diff).collect(),
                Design::Paired => {
                    let total: f64 = summaries.iter().map(|s| s.m() as f64).sum();
                    summaries
                        .iter()
                        .map(|s| n as f64 * s.m() as f64 * s.mean_diff / total)
                        .collect()
                }
            };
            Ok(DMatrix::from_column_slice(n, 1, &values))
        }
    }
}

struct Grower<'a> {
    dataset: &'a Dataset,
    config: &'a FitConfig,
    summaries: Vec<SubjectSummary>,
    h: DMatrix<f64>,
    g: Vec<DMatrix<f64>>,
    columns: Vec<Vec<CovariateValue>>,
    diagnostics: FitDiagnostics,
}

impl Grower<'_> {
    fn node_estimate(&self, members: &[usize]) -> Result<BaEstimate, EstimationError> {
        let subset: Vec<SubjectSummary> = members.iter().map(|&i| self.summaries[i].clone()).collect();
        agreement::estimate(&subset, self.config.variance_mode)
    }

    fn test_covariates(&self, weights: &[bool]) -> Result<Vec<CovariateTest>, CoatError> {
        let mut results = Vec::with_capacity(self.g.len());
        for g in &self.g {
            let ls = conditional_moments(g, &self.h, weights)?;
            results.push(match quadratic_test(&ls) {
                Ok(r) => Some(r),
                Err(InferenceError::Untestable) => None,
                Err(e) => return Err(e.into()),
            });
        }
        let raw: Vec<f64> = results.iter().flatten().map(|r| r.p_value).collect();
        let adjusted = adjust_bonferroni(&raw, raw.len());
        let mut adjusted = adjusted.into_iter();
        Ok(self
            .dataset
            .covariate_schema
            .iter()
            .zip(results)
            .map(|(spec, r)| CovariateTest {
                covariate: spec.name.clone(),
                result: r.map(|mut r| {
                    r.p_adjusted = adjusted.next().expect("one adjusted p per testable covariate");
                    r
                }),
            })
            .collect())
    }

    fn grow(&mut self, members: Vec<usize>, depth: usize) -> Result<CoatNode, CoatError> {
        let estimate = self.node_estimate(&members)?;
        let mut node = CoatNode {
            id: 0,
            kind: NodeKind::Leaf,
            split: None,
            p_adjusted: None,
            n: members.len(),
            estimate,
            subject_ids: members.iter().map(|&i| self.dataset.subjects[i].subject_id.clone()).collect(),
            tests: Vec::new(),
            children: Vec::new(),
        };
        let depth_exhausted = self.config.maxdepth.is_some_and(|d| depth > d);
        if members.len() < self.config.minsplit || depth_exhausted || self.g.is_empty() {
            return Ok(node);
        }

        let mut weights = vec![false; self.dataset.n_subjects()];
        for &i in &members {
            weights[i] = true;
        }
        self.diagnostics.nodes_tested += 1;
        node.tests = self.test_covariates(&weights)?;
        let Some((selected, best)) = node
            .tests
            .iter()
            .enumerate()
            .filter_map(|(j, t)| t.result.map(|r| (j, r)))
            .min_by(|a, b| {
                a.1.p_value
                    .total_cmp(&b.1.p_value)
                    .then(b.1.statistic.total_cmp(&a.1.statistic))
                    .then(a.0.cmp(&b.0))
            })
        else {
            return Ok(node);
        };
        node.p_adjusted = Some(best.p_adjusted);
        if best.p_adjusted > self.config.alpha {
            return Ok(node);
        }

        let spec = &self.dataset.covariate_schema[selected];
        let column = &self.columns[selected];
        let Some((point, _)) = best_split(column, spec.kind, &self.h, &weights, self.config.minsize)?
        else {
            self.diagnostics.splits_rejected_minsize += 1;
            return Ok(node);
        };
        let goes_left = |v: CovariateValue| match (&point, v) {
            (SplitPoint::Cutpoint(c), v) => v.as_f64() <= *c,
            (SplitPoint::Levels(set), CovariateValue::Level(l)) => set.contains(&l),
            (SplitPoint::Levels(_), CovariateValue::Numeric(_)) => false,
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            members.iter().partition(|&&i| goes_left(column[i]));
        node.split = Some(Split {
            covariate: spec.name.clone(),
            rule: match &point {
                SplitPoint::Cutpoint(c) => SplitRule::Cutpoint { cutpoint: *c },
                SplitPoint::Levels(set) => SplitRule::Levels {
                    left_levels: set.iter().map(|&l| spec.levels[l].clone()).collect(),
                },
            },
        });
        node.kind = NodeKind::Inner;
        node.children = vec![self.grow(left, depth + 1)?, self.grow(right, depth + 1)?];
        Ok(node)
    }
}

fn number_breadth_first(root: &mut CoatNode) {
    let mut next = 1;
    let mut queue: VecDeque<&mut CoatNode> = VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        node.id = next;
        next += 1;
        queue.extend(node.children.iter_mut());
    }
}

fn check_schema(dataset: &Dataset) -> Result<(), CoatError> {
    for spec in &dataset.covariate_schema {
        if spec.kind == CovariateKind::Nominal && spec.levels.len() > MAX_NOMINAL_LEVELS {
            return Err(CoatError::Config(format!(
                "nominal covariate '{}' has {} levels (at most {MAX_NOMINAL_LEVELS} supported)",
                spec.name,
                spec.levels.len()
            )));
        }
    }
    Ok(())
}

pub fn fit(dataset: &Dataset, config: &FitConfig) -> Result<CoatTree, CoatError> {
    config.validate()?;
    check_schema(dataset)?;
    let summaries = agreement::subject_summaries(dataset);
    let h = outcome_matrix(&summaries, dataset.design, config)?;
    let columns: Vec<Vec<CovariateValue>> =
        (0..dataset.covariate_schema.len()).map(|j| dataset.covariate_column(j)).collect();
    let g = dataset
        .covariate_schema
        .iter()
        .zip(&columns)
        .map(|(spec, col)| CovariateTransform::for_kind(spec.kind, spec.levels.len()).apply(col))
        .collect();
    let mut grower = Grower {
        dataset,
        config,
        summaries,
        h,
        g,
        columns,
        diagnostics: FitDiagnostics::default(),
    };
    let mut root = grower.grow((0..dataset.n_subjects()).collect(), 1)?;
    number_breadth_first(&mut root);
    Ok(CoatTree {
        design: dataset.design,
        config: config.clone(),
        covariates: dataset.covariate_schema.clone(),
        diagnostics: grower.diagnostics,
        root,
    })
}

impl CoatTree {
    pub fn leaves(&self) -> Vec<&CoatNode> {
        fn walk<'a>(n: &'a CoatNode, out: &mut Vec<&'a CoatNode>) {
            if n.is_leaf() {
                out.push(n);
            }
            n.children.iter().for_each(|c| walk(c, out));
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out.sort_by_key(|n| n.id);
        out
    }

    /// Number of split levels (0 for a single-leaf tree).
    pub fn depth(&self) -> usize {
        fn d(n: &CoatNode) -> usize {
            n.children.iter().map(|c| 1 + d(c)).max().unwrap_or(0)
        }
        d(&self.root)
    }

    pub fn node(&self, id: usize) -> Option<&CoatNode> {
        self.root.find(id)
    }

    /// Whether the root's smallest adjusted p-value is at or below alpha.
    pub fn root_rejected(&self) -> bool {
        self.root.p_adjusted.is_some_and(|p| p <= self.config.alpha)
    }

    /// Leaf id of every subject of `dataset`, in dataset order.
    pub fn leaf_labels(&self, dataset: &Dataset) -> Vec<usize> {
        let mut owner: HashMap<&str, usize> = HashMap::new();
        for leaf in self.leaves() {
            for id in &leaf.subject_ids {
                owner.insert(id, leaf.id);
            }
        }
        dataset
            .subjects
            .iter()
            .map(|s| owner.get(s.subject_id.as_str()).copied().unwrap_or(0))
            .collect()
    }

    /// Routes a covariate vector to its leaf and returns the node id.
    pub fn predict_subgroup(&self, covariates: &HashMap<String, CovariateInput>) -> Result<usize, CoatError> {
        let mut node = &self.root;
        while let Some(split) = &node.split {
            let value = covariates
                .get(&split.covariate)
                .ok_or_else(|| CoatError::Routing(split.covariate.clone()))?;
            let left = match (&split.rule, value) {
                (SplitRule::Cutpoint { cutpoint }, CovariateInput::Numeric(x)) => x <= cutpoint,
                (SplitRule::Levels { left_levels }, CovariateInput::Level(l)) => left_levels.contains(l),
                _ => return Err(CoatError::Routing(split.covariate.clone())),
            };
            node = &node.children[if left { 0 } else { 1 }];
        }
        Ok(node.id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CoatError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Indented one-line-per-node rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(
            out,
            "COAT design={} outcome={} variance_mode={} alpha={} minsize={} minsplit={} maxdepth={}",
            self.design,
            match c.outcome {
                Outcome::Ba => "ba",
                Outcome::MeanOnly => "mean_only",
            },
            match c.variance_mode {
                VarianceMode::Literal => "literal",
                VarianceMode::Msb => "msb",
            },
            c.alpha,
            c.minsize,
            c.minsplit,
            c.maxdepth.map_or("none".to_string(), |d| d.to_string())
        );
        render_node(&self.root, 0, None, &mut out);
        out
    }

    /// CSV of `(node, subject, mean, difference)` for Bland-Altman scatter plots
    /// of every leaf: one row per pair in the paired design, one row per
    /// subject (method means) in the unpaired design.
    pub fn to_plotdata(&self, dataset: &Dataset) -> String {
        let by_id: HashMap<&str, usize> = dataset
            .subjects
            .iter()
            .enumerate()
            .map(|(i, s)| (s.subject_id.as_str(), i))
            .collect();
        let mut out = String::from("node,subject,mean,difference\n");
        for leaf in self.leaves() {
            for id in &leaf.subject_ids {
                let Some(&i) = by_id.get(id.as_str()) else { continue };
                let s = &dataset.subjects[i];
                match dataset.design {
                    Design::Paired => {
                        for (a, b) in s.measurements_a.iter().zip(&s.measurements_b) {
                            let _ = writeln!(out, "{},{},{},{}", leaf.id, id, (a + b) / 2.0, a - b);
                        }
                    }
                    Design::Unpaired => {
                        let ma = s.measurements_a.iter().sum::<f64>() / s.measurements_a.len() as f64;
                        let mb = s.measurements_b.iter().sum::<f64>() / s.measurements_b.len() as f64;
                        let _ = writeln!(out, "{},{},{},{}", leaf.id, id, (ma + mb) / 2.0, ma - mb);
                    }
                }
            }
        }
        out
    }
}

fn format_p(p: f64) -> String {
    if p < 1e-4 {
        "<0.0001".to_string()
    } else {
        format!("{p:.4}")
    }
}

fn render_node(node: &CoatNode, indent: usize, rule: Option<String>, out: &mut String) {
    let e = &node.estimate;
    let _ = write!(
        out,
        "{:width$}[{}] {}n={} bias={:.4} var={:.4} loa=[{:.4}, {:.4}]",
        "",
        node.id,
        rule.map(|r| format!("{r}: ")).unwrap_or_default(),
        node.n,
        e.bias,
        e.var_total,
        e.loa[0],
        e.loa[1],
        width = indent * 2
    );
    match &node.split {
        Some(split) => {
            let _ = writeln!(
                out,
                " split={} p={}",
                split.covariate,
                node.p_adjusted.map_or("-".into(), format_p)
            );
            let (l, r) = match &split.rule {
                SplitRule::Cutpoint { cutpoint } => (
                    format!("{} <= {cutpoint:.4}", split.covariate),
                    format!("{} > {cutpoint:.4}", split.covariate),
                ),
                SplitRule::Levels { left_levels } => (
                    format!("{} in {{{}}}", split.covariate, left_levels.join(",")),
                    format!("{} not in {{{}}}", split.covariate, left_levels.join(",")),
                ),
            };
            render_node(&node.children[0], indent + 1, Some(l), out);
            render_node(&node.children[1], indent + 1, Some(r), out);
        }
        None => {
            let _ = writeln!(
                out,
                " leaf{}",
                node.p_adjusted.map(|p| format!(" p={}", format_p(p))).unwrap_or_default()
            );
        }
    }
}

/// Result of comparing agreement between the two groups of a binary covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleResult {
    pub covariate: String,
    pub test: TestResult,
    /// Level name and Bland-Altman estimate of each group.
    pub groups: Vec<(String, BaEstimate)>,
}

/// Tests equality of the agreement parameters between the two groups of a
/// binary covariate, using the root test of a tree restricted to that
/// covariate.
pub fn two_sample_ba_test(
    dataset: &Dataset,
    group_covariate: &str,
    config: &FitConfig,
) -> Result<TwoSampleResult, CoatError> {
    let j = dataset
        .covariate_index(group_covariate)
        .ok_or_else(|| CoatError::Config(format!("unknown covariate '{group_covariate}'")))?;
    let spec = &dataset.covariate_schema[j];
    if spec.kind != CovariateKind::Binary || spec.levels.len() != 2 {
        return Err(CoatError::Config(format!(
            "covariate '{group_covariate}' is not binary"
        )));
    }
    let column = dataset.covariate_column(j);
    let summaries = agreement::subject_summaries(dataset);
    let mut groups = Vec::with_capacity(2);
    for level in 0..2 {
        let members: Vec<SubjectSummary> = summaries
            .iter()
            .zip(&column)
            .filter(|(_, v)| **v == CovariateValue::Level(level))
            .map(|(s, _)| s.clone())
            .collect();
        let estimate = agreement::estimate(&members, config.variance_mode)?;
        groups.push((spec.levels[level].clone(), estimate));
    }
    let h = outcome_matrix(&summaries, dataset.design, config)?;
    let g = CovariateTransform::IndicatorSet { levels: 2 }.apply(&column);
    let ls = conditional_moments(&g, &h, &vec![true; dataset.n_subjects()])?;
    let test = quadratic_test(&ls)?;
    Ok(TwoSampleResult { covariate: group_covariate.to_string(), test, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubjectSeries;

    fn dataset(n: usize, design: Design, shift_from: usize) -> Dataset {
        // deterministic pseudo-noise, bias step at subject index `shift_from`
        let subjects = (0..n)
            .map(|i| {
                let noise = |r: usize| (((i * 31 + r * 17) % 13) as f64 - 6.0) / 6.0;
                let bias = if i >= shift_from { 8.0 } else { 0.0 };
                SubjectSeries {
                    subject_id: format!("s{i:03}"),
                    measurements_a: (0..3).map(|r| 10.0 + bias + noise(r)).collect(),
                    measurements_b: (0..3).map(|r| 10.0 + (((i * 7 + r * 3) % 11) as f64 - 5.0) / 5.0).collect(),
                    covariates: vec![
                        CovariateValue::Numeric(i as f64),
                        CovariateValue::Level(i % 2),
                    ],
                }
            })
            .collect();
        Dataset {
            design,
            subjects,
            covariate_schema: vec![
                CovariateSpec::numeric("x"),
                CovariateSpec::categorical("sex", CovariateKind::Binary, &["f", "m"]),
            ],
        }
    }

    #[test]
    fn minsplit_larger_than_n_gives_plain_analysis() {
        let d = dataset(30, Design::Paired, 15);
        let config = FitConfig { minsplit: 40, ..Default::default() };
        let tree = fit(&d, &config).unwrap();
        assert!(tree.root.is_leaf());
        assert_eq!(tree.root.id, 1);
        assert_eq!(tree.root.estimate, agreement::estimate_dataset(&d, VarianceMode::Msb).unwrap());
    }

    #[test]
    fn splits_on_bias_step() {
        let d = dataset(60, Design::Unpaired, 30);
        let tree = fit(&d, &FitConfig::default()).unwrap();
        let split = tree.root.split.as_ref().unwrap();
        assert_eq!(split.covariate, "x");
        assert_eq!(split.rule, SplitRule::Cutpoint { cutpoint: 29.5 });
        let ids: Vec<_> = tree.leaves().iter().map(|l| l.id).collect();
        assert!(ids.contains(&2) && ids.contains(&3));
        assert!(tree.leaves().iter().all(|l| l.n >= 10));
    }

    #[test]
    fn routing_uses_less_or_equal() {
        let d = dataset(60, Design::Unpaired, 30);
        let tree = fit(&d, &FitConfig { maxdepth: Some(1), ..Default::default() }).unwrap();
        let route = |x: f64| {
            tree.predict_subgroup(&HashMap::from([("x".to_string(), CovariateInput::Numeric(x))]))
                .unwrap()
        };
        assert_eq!(route(29.5), 2);
        assert_eq!(route(29.6), 3);
        assert!(matches!(tree.predict_subgroup(&HashMap::new()), Err(CoatError::Routing(_))));
    }

    #[test]
    fn single_leaf_routes_to_root() {
        let d = dataset(30, Design::Paired, 100);
        let tree = fit(&d, &FitConfig { minsplit: 100, minsize: 5, ..Default::default() }).unwrap();
        assert_eq!(tree.predict_subgroup(&HashMap::new()).unwrap(), 1);
    }

    #[test]
    fn json_round_trip() {
        let d = dataset(60, Design::Paired, 30);
        let tree = fit(&d, &FitConfig::default()).unwrap();
        let back = CoatTree::from_json(&tree.to_json()).unwrap();
        assert_eq!(back, tree);
        let v: serde_json::Value = serde_json::from_str(&tree.to_json()).unwrap();
        assert_eq!(v["root"]["id"], 1);
        assert_eq!(v["root"]["kind"], "inner");
        assert_eq!(v["root"]["split"]["covariate"], "x");
        assert!(v["root"]["split"]["cutpoint"].is_f64());
        assert!(v["root"]["estimate"]["loa"].is_array());
        assert_eq!(v["root"]["children"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn plotdata_row_counts() {
        for (design, rows) in [(Design::Paired, 60 * 3), (Design::Unpaired, 60)] {
            let d = dataset(60, design, 30);
            let tree = fit(&d, &FitConfig::default()).unwrap();
            assert_eq!(tree.to_plotdata(&d).lines().count(), rows + 1);
        }
    }

    #[test]
    fn text_rendering_lists_every_node() {
        let d = dataset(60, Design::Paired, 30);
        let tree = fit(&d, &FitConfig::default()).unwrap();
        let text = tree.to_text();
        assert!(text.lines().nth(1).unwrap().starts_with("[1] n=60"));
        assert!(text.contains("  [2] x <= 29.5000: n=30"));
        assert_eq!(text, fit(&d, &FitConfig::default()).unwrap().to_text());
    }

    #[test]
    fn two_sample_requires_binary() {
        let d = dataset(40, Design::Paired, 100);
        assert!(matches!(two_sample_ba_test(&d, "x", &FitConfig::default()), Err(CoatError::Config(_))));
        let r = two_sample_ba_test(&d, "sex", &FitConfig::default()).unwrap();
        assert_eq!(r.groups.len(), 2);
        assert_eq!(r.test.df, 2);
        assert!(r.test.p_value >= 0.0 && r.test.p_value <= 1.0);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let d = dataset(20, Design::Paired, 100);
        for bad in [
            FitConfig { alpha: 0.0, ..Default::default() },
            FitConfig { minsize: 15, ..Default::default() },
            FitConfig { maxdepth: Some(0), ..Default::default() },
        ] {
            assert!(matches!(fit(&d, &bad), Err(CoatError::Config(_))));
        }
    }

    #[test]
    fn mean_only_uses_one_df() {
        let d = dataset(60, Design::Paired, 30);
        let tree = fit(&d, &FitConfig { outcome: Outcome::MeanOnly, ..Default::default() }).unwrap();
        let (_, r) = tree.root.selected_test().unwrap();
        assert_eq!(r.df, 1);
    }
}
