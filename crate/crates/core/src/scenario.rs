//! Synthetic method comparison data with known subgroup structure.
//!
//! Each subject gets five independent normal covariates. Its expected
//! difference and spread follow the chosen scenario. The spread level of the
//! Stump and Tree scenarios (4 or 6) is read as a standard deviation by
//! default; [`Spread::Variance`] reads it as the variance instead. The total
//! variance is split into a subject-level bias deviation and two method
//! error variances in the fixed ratio 322 : 36 : 81 (which for the Null
//! scenario yields a between-subject variance of 361 at three replicates and
//! a total of 439).
//!
//! Randomness comes from ChaCha8 seeded with [`rand::SeedableRng::seed_from_u64`];
//! replication seeds are derived with [`child_seed`].

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{CovariateSpec, CovariateValue, Dataset, Design, SubjectSeries};

pub const COVARIATE_MEANS: [f64; 5] = [20.0, 100.0, 5000.0, 0.0, 1000.0];
pub const COVARIATE_SDS: [f64; 5] = [4.0, 20.0, 100.0, 1.0, 50.0];
/// Split points of the informative covariates X1 and X2.
pub const Q1: f64 = 20.0;
pub const Q2: f64 = 100.0;
pub const NULL_BIAS: f64 = 16.0;
pub const NULL_VARIANCE: f64 = 439.0;
/// Variance shares of subject bias deviation, method A error and method B error.
pub const VARIANCE_RATIO: [f64; 3] = [322.0, 36.0, 81.0];
/// Variance of the pair-level true-value effect in the paired design.
pub const PAIR_VARIANCE: f64 = 6.25;
pub const TRUE_LEVEL_MEAN: f64 = 100.0;
pub const TRUE_LEVEL_SD: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Null,
    /// X1 shifts the bias only.
    StumpBias,
    /// X1 changes the variance (width of the limits) only.
    StumpLoa,
    /// Nested effects of X1 and X2 on bias and variance.
    Tree,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Null => "null",
            Scenario::StumpBias => "stump_bias",
            Scenario::StumpLoa => "stump_loa",
            Scenario::Tree => "tree",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "null" => Ok(Scenario::Null),
            "stump_bias" | "stump1" => Ok(Scenario::StumpBias),
            "stump_loa" | "stump2" => Ok(Scenario::StumpLoa),
            "tree" => Ok(Scenario::Tree),
            other => Err(format!(
                "unknown scenario '{other}' (expected null, stump_bias, stump_loa or tree)"
            )),
        }
    }
}

/// Scale of the spread levels in the Stump and Tree scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spread {
    /// Levels are standard deviations of single differences.
    #[default]
    Sd,
    /// Levels are variances of single differences.
    Variance,
}

impl fmt::Display for Spread {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Spread::Sd => "sd",
            Spread::Variance => "variance",
        })
    }
}

impl FromStr for Spread {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sd" => Ok(Spread::Sd),
            "variance" | "var" => Ok(Spread::Variance),
            other => Err(format!("unknown spread scale '{other}' (expected sd or variance)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub design: Design,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub spread: Spread,
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, design: Design, n: usize, seed: u64) -> Self {
        Self { scenario, design, n, m: 3, seed, spread: Spread::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub labels: Vec<usize>,
    pub true_bias: Vec<f64>,
    pub true_var: Vec<f64>,
}

impl GroundTruth {
    pub fn to_csv(&self, dataset: &Dataset) -> String {
        let mut out = String::from("subject,label,true_bias,true_var\n");
        for (i, s) in dataset.subjects.iter().enumerate() {
            out += &format!("{},{},{},{}\n", s.subject_id, self.labels[i], self.true_bias[i], self.true_var[i]);
        }
        out
    }
}

/// True `(label, E(Y|X), Var(Y|X))` of a subject with covariates `x`.
pub fn subgroup(scenario: Scenario, spread: Spread, x: &[f64; 5]) -> (usize, f64, f64) {
    let (label, bias, level) = subgroup_levels(scenario, x);
    match (scenario, spread) {
        (Scenario::Null, _) | (_, Spread::Variance) => (label, bias, level),
        (_, Spread::Sd) => (label, bias, level * level),
    }
}

/// Label, bias and spread level before applying the [`Spread`] scale.
fn subgroup_levels(scenario: Scenario, x: &[f64; 5]) -> (usize, f64, f64) {
    let low1 = x[0] <= Q1;
    match scenario {
        Scenario::Null => (0, NULL_BIAS, NULL_VARIANCE),
        Scenario::StumpBias => {
            if low1 { (0, 7.0, 4.0) } else { (1, 5.0, 4.0) }
        }
        Scenario::StumpLoa => {
            if low1 { (0, 5.0, 6.0) } else { (1, 5.0, 4.0) }
        }
        Scenario::Tree => match (low1, x[1] >= Q2) {
            (true, true) => (0, 7.0, 4.0),
            (true, false) => (1, 5.0, 4.0),
            (false, _) => (2, 5.0, 6.0),
        },
    }
}

pub fn true_partition(scenario: Scenario, spread: Spread, covariates: &[[f64; 5]]) -> GroundTruth {
    let mut truth = GroundTruth { labels: vec![], true_bias: vec![], true_var: vec![] };
    for x in covariates {
        let (label, bias, var) = subgroup(scenario, spread, x);
        truth.labels.push(label);
        truth.true_bias.push(bias);
        truth.true_var.push(var);
    }
    truth
}

/// Seed of replication `replication` derived from `master` (SplitMix64 finalizer).
pub fn child_seed(master: u64, replication: u64) -> u64 {
    let mut z = master
        .wrapping_add(replication.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("finite, non-negative standard deviation")
}

pub fn covariate_schema() -> Vec<CovariateSpec> {
    (1..=5).map(|j| CovariateSpec::numeric(format!("X{j}"))).collect()
}

/// Draws a dataset and its ground truth.
///
/// # Panics
/// If `n < 2` or `m < 1`.
pub fn generate(spec: &ScenarioSpec) -> (Dataset, GroundTruth) {
    assert!(spec.n >= 2 && spec.m >= 1, "need n >= 2 subjects and m >= 1 replicates");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = normal(0.0, 1.0);
    let ratio_total: f64 = VARIANCE_RATIO.iter().sum();
    let width = spec.n.to_string().len();

    let mut covariates = Vec::with_capacity(spec.n);
    let mut subjects = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut x = [0.0; 5];
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = COVARIATE_MEANS[j] + COVARIATE_SDS[j] * std_normal.sample(&mut rng);
        }
        let (_, bias, var) = subgroup(spec.scenario, spec.spread, &x);
        let [var_d, var_a, var_b] = VARIANCE_RATIO.map(|r| var * r / ratio_total);
        let level = normal(TRUE_LEVEL_MEAN, TRUE_LEVEL_SD).sample(&mut rng);
        let delta = normal(bias, var_d.sqrt()).sample(&mut rng);
        let (err_a, err_b) = (normal(0.0, var_a.sqrt()), normal(0.0, var_b.sqrt()));
        let pair_effect = normal(0.0, PAIR_VARIANCE.sqrt());

        let mut a = Vec::with_capacity(spec.m);
        let mut b = Vec::with_capacity(spec.m);
        for _ in 0..spec.m {
            let truth = match spec.design {
                Design::Paired => level + pair_effect.sample(&mut rng),
                Design::Unpaired => level,
            };
            a.push(truth + delta + err_a.sample(&mut rng));
            b.push(truth + err_b.sample(&mut rng));
        }
        subjects.push(SubjectSeries {
            subject_id: format!("s{:0width$}", i + 1),
            measurements_a: a,
            measurements_b: b,
            covariates: x.iter().map(|&v| CovariateValue::Numeric(v)).collect(),
        });
        covariates.push(x);
    }
    let truth = true_partition(spec.scenario, spec.spread, &covariates);
    (Dataset { design: spec.design, subjects, covariate_schema: covariate_schema() }, truth)
}
