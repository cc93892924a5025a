//! Replicated simulation runs: type-I error, power and Adjusted Rand Index.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::data::Design;
use crate::error::CoatError;
use crate::scenario::{child_seed, generate, Scenario, ScenarioSpec, Spread};
use crate::tree::{fit, FitConfig, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Coat,
    CtreeMean,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Coat => "coat",
            Model::CtreeMean => "ctree_mean",
        }
    }

    pub fn outcome(self) -> Outcome {
        match self {
            Model::Coat => Outcome::Ba,
            Model::CtreeMean => Outcome::MeanOnly,
        }
    }
}

impl std::str::FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "coat" => Ok(Model::Coat),
            "ctree_mean" | "ctree" | "mean_only" => Ok(Model::CtreeMean),
            other => Err(format!("unknown model '{other}' (expected coat or ctree_mean)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AriError {
    LengthMismatch(usize, usize),
    TooShort(usize),
}

impl std::fmt::Display for AriError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AriError::LengthMismatch(a, b) => write!(f, "label vectors differ in length ({a} vs {b})"),
            AriError::TooShort(n) => write!(f, "at least 2 labels required, got {n}"),
        }
    }
}

impl std::error::Error for AriError {}

fn comb2(k: usize) -> f64 {
    let k = k as f64;
    k * (k - 1.0) / 2.0
}

/// Hubert-Arabie Adjusted Rand Index.
///
/// When the maximum index equals its expectation (for example both
/// partitions are a single group) the partitions are taken to agree and 1
/// is returned.
pub fn adjusted_rand_index<A, B>(p1: &[A], p2: &[B]) -> Result<f64, AriError>
where
    A: Hash + Eq,
    B: Hash + Eq,
{
    if p1.len() != p2.len() {
        return Err(AriError::LengthMismatch(p1.len(), p2.len()));
    }
    if p1.len() < 2 {
        return Err(AriError::TooShort(p1.len()));
    }
    let mut rows: HashMap<&A, usize> = HashMap::new();
    let mut cols: HashMap<&B, usize> = HashMap::new();
    let mut cells: HashMap<(&A, &B), usize> = HashMap::new();
    for (a, b) in p1.iter().zip(p2) {
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
        *cells.entry((a, b)).or_default() += 1;
    }
    let index: f64 = cells.values().map(|&c| comb2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| comb2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| comb2(c)).sum();
    let expected = sum_rows * sum_cols / comb2(p1.len());
    let max = (sum_rows + sum_cols) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Exact (Clopper-Pearson) two-sided 95% interval for `successes / trials`.
pub fn clopper_pearson(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0).expect("valid shape").inverse_cdf(0.025)
    };
    let hi = if successes == trials {
        1.0
    } else {
        Beta::new(k + 1.0, n - k).expect("valid shape").inverse_cdf(0.975)
    };
    (lo, hi)
}

/// One cell of the simulation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub scenario: Scenario,
    pub design: Design,
    pub n: usize,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub scenario: Scenario,
    pub design: Design,
    pub n: usize,
    pub model: Model,
    pub replication: usize,
    pub seed: u64,
    pub root_rejected: bool,
    pub selected_root_covariate: Option<String>,
    pub ari: Option<f64>,
    pub depth: usize,
    pub leaves: usize,
    pub error: Option<String>,
    #[serde(skip)]
    pub partition: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario: Scenario,
    pub design: Design,
    pub model: Model,
    pub n: usize,
    pub reps: usize,
    pub rate: f64,
    pub rate_ci: (f64, f64),
    pub mean_ari: f64,
    pub ari_se: f64,
    /// Rejections whose root split uses X1, the informative covariate of
    /// the Stump and Tree scenarios.
    pub rate_informative: f64,
    pub errors: usize,
}

#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub fit: FitConfig,
    pub reps: usize,
    pub models: Vec<Model>,
    pub seed: u64,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
    pub spread: Spread,
}

pub const INFORMATIVE_COVARIATE: &str = "X1";

fn run_one(cell: &GridCell, config: &HarnessConfig, replication: usize) -> Vec<ReplicationResult> {
    let seed = child_seed(config.seed, replication as u64);
    let spec = ScenarioSpec {
        scenario: cell.scenario,
        design: cell.design,
        n: cell.n,
        m: cell.m,
        seed,
        spread: config.spread,
    };
    let (dataset, truth) = generate(&spec);
    config
        .models
        .iter()
        .map(|&model| {
            let fit_config = FitConfig { outcome: model.outcome(), ..config.fit.clone() };
            let mut result = ReplicationResult {
                scenario: cell.scenario,
                design: cell.design,
                n: cell.n,
                model,
                replication,
                seed,
                root_rejected: false,
                selected_root_covariate: None,
                ari: None,
                depth: 0,
                leaves: 0,
                error: None,
                partition: Vec::new(),
            };
            match fit(&dataset, &fit_config) {
                Ok(tree) => {
                    result.root_rejected = tree.root_rejected();
                    result.selected_root_covariate =
                        tree.root.selected_test().map(|(name, _)| name.to_string());
                    result.partition = tree.leaf_labels(&dataset);
                    result.ari = adjusted_rand_index(&result.partition, &truth.labels).ok();
                    result.depth = tree.depth();
                    result.leaves = tree.leaves().len();
                }
                Err(e) => result.error = Some(e.to_string()),
            }
            result
        })
        .collect()
}

fn aggregate(cell: &GridCell, model: Model, results: &[&ReplicationResult]) -> MetricsRow {
    let ok: Vec<&&ReplicationResult> = results.iter().filter(|r| r.error.is_none()).collect();
    let trials = ok.len();
    let rejected = ok.iter().filter(|r| r.root_rejected).count();
    let informative = ok
        .iter()
        .filter(|r| r.root_rejected && r.selected_root_covariate.as_deref() == Some(INFORMATIVE_COVARIATE))
        .count();
    let aris: Vec<f64> = ok.iter().filter_map(|r| r.ari).collect();
    let (mean_ari, ari_se) = if aris.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let k = aris.len() as f64;
        let mean = aris.iter().sum::<f64>() / k;
        let se = if aris.len() > 1 {
            (aris.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt() / k.sqrt()
        } else {
            0.0
        };
        (mean, se)
    };
    let rate = if trials == 0 { f64::NAN } else { rejected as f64 / trials as f64 };
    MetricsRow {
        scenario: cell.scenario,
        design: cell.design,
        model,
        n: cell.n,
        reps: results.len(),
        rate,
        rate_ci: clopper_pearson(rejected, trials),
        mean_ari,
        ari_se,
        rate_informative: if trials == 0 { f64::NAN } else { informative as f64 / trials as f64 },
        errors: results.len() - trials,
    }
}

/// Runs every grid cell `config.reps` times and fits every model to the same
/// generated data. Replication `r` of every cell uses seed
/// `child_seed(config.seed, r)`, so results do not depend on scheduling.
pub fn run_replications(
    grid: &[GridCell],
    config: &HarnessConfig,
) -> Result<(Vec<MetricsRow>, Vec<ReplicationResult>), CoatError> {
    if config.reps == 0 {
        return Err(CoatError::Config("reps must be at least 1".into()));
    }
    config.fit.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| CoatError::Config(format!("thread pool: {e}")))?;
    let mut rows = Vec::new();
    let mut log = Vec::new();
    for cell in grid {
        let results: Vec<ReplicationResult> = pool.install(|| {
            (0..config.reps)
                .into_par_iter()
                .flat_map_iter(|r| run_one(cell, config, r))
                .collect()
        });
        for &model in &config.models {
            let of_model: Vec<&ReplicationResult> = results.iter().filter(|r| r.model == model).collect();
            rows.push(aggregate(cell, model, &of_model));
        }
        log.extend(results);
    }
    Ok((rows, log))
}

pub const METRICS_HEADER: &str =
    "scenario,design,model,n,reps,rate,rate_ci_lo,rate_ci_hi,mean_ari,ari_se,rate_informative,errors";

/// Renders the metrics table as CSV.
pub fn summarize(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            r.scenario,
            r.design,
            r.model.name(),
            r.n,
            r.reps,
            r.rate,
            r.rate_ci.0,
            r.rate_ci.1,
            r.mean_ari,
            r.ari_se,
            r.rate_informative,
            r.errors
        );
    }
    out
}

/// One JSON object per line for every replication and model.
pub fn replication_log(results: &[ReplicationResult]) -> String {
    results
        .iter()
        .map(|r| serde_json::to_string(r).expect("replication result serializes") + "\n")
        .collect()
}
