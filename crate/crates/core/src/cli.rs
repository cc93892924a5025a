//! Command-line interface: `fit`, `test2`, `simulate`, `evaluate` and `ari`.
//!
//! Exit codes: 0 success, 1 usage or file error, 2 data or estimation error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::agreement::VarianceMode;
use crate::data::{parse_long_csv, parse_schema, validate, CovariateKind, CovariateSpec, Dataset, Design};
use crate::error::CoatError;
use crate::evaluation::{self, GridCell, HarnessConfig, Model};
use crate::scenario::{self, Scenario, ScenarioSpec, Spread};
use crate::tree::{fit, two_sample_ba_test, FitConfig, Outcome};

#[derive(Debug, Parser)]
#[command(name = "coat", version, about = "Conditional method agreement trees for repeated measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit an agreement tree to a long-format CSV.
    Fit(FitArgs),
    /// Compare agreement between the two groups of a binary covariate.
    Test2(Test2Args),
    /// Generate a synthetic dataset with its ground truth.
    Simulate(SimulateArgs),
    /// Run replicated simulations and write the metrics table.
    Evaluate(EvaluateArgs),
    /// Adjusted Rand Index of two comma-separated label lists.
    Ari(AriArgs),
}

#[derive(Debug, Args)]
struct TreeArgs {
    /// Significance level of the node tests
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Minimum number of subjects per child node
    #[arg(long, default_value_t = 10)]
    minsize: usize,
    /// Minimum node size considered for splitting [default: max(20, 2 * minsize)]
    #[arg(long)]
    minsplit: Option<usize>,
    /// Maximum number of split levels [default: unlimited]
    #[arg(long)]
    maxdepth: Option<usize>,
    /// Paired between-subject variance estimator (msb or literal)
    #[arg(long, default_value = "msb")]
    variance_mode: VarianceMode,
    /// Tree outcome (ba or mean-only)
    #[arg(long, default_value = "ba")]
    outcome: Outcome,
}

impl TreeArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            alpha: self.alpha,
            minsize: self.minsize,
            minsplit: self.minsplit.unwrap_or_else(|| 20.max(2 * self.minsize)),
            maxdepth: self.maxdepth,
            variance_mode: self.variance_mode,
            outcome: self.outcome,
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Long-format CSV: subject,method,replicate,value plus covariate columns
    #[arg(long)]
    input: PathBuf,
    /// Replicate design (paired or unpaired)
    #[arg(long)]
    design: Design,
    /// Comma-separated covariate schema, name:kind[:level1|level2...]
    #[arg(long, default_value = "")]
    covariates: String,
    #[command(flatten)]
    tree: TreeArgs,
    /// Write the tree JSON to this file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write plot data, one row per measurement pair (node,subject,mean,difference), to this file
    #[arg(long)]
    plotdata: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Test2Args {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    design: Design,
    /// Binary grouping covariate
    #[arg(long)]
    group: String,
    /// Covariate schema; the group is read as binary when not listed
    #[arg(long, default_value = "")]
    covariates: String,
    #[arg(long, default_value = "msb")]
    variance_mode: VarianceMode,
    #[arg(long, default_value = "ba")]
    outcome: Outcome,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// null, stump_bias, stump_loa or tree
    #[arg(long)]
    scenario: Scenario,
    #[arg(long)]
    design: Design,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Replicates per subject
    #[arg(long, default_value_t = 3)]
    m: usize,
    /// Master seed [default: drawn from entropy and printed]
    #[arg(long)]
    seed: Option<u64>,
    /// Scale of the Stump and Tree spread levels (sd or variance)
    #[arg(long, default_value = "sd")]
    spread: Spread,
    /// Directory receiving data.csv and truth.csv [default: data to stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Comma-separated scenarios
    #[arg(long, value_delimiter = ',', default_value = "null")]
    scenario: Vec<Scenario>,
    /// Comma-separated designs
    #[arg(long, value_delimiter = ',', default_value = "unpaired")]
    design: Vec<Design>,
    /// Comma-separated sample sizes
    #[arg(long, value_delimiter = ',', default_value = "100")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// Comma-separated models (coat, ctree_mean)
    #[arg(long, value_delimiter = ',', default_value = "coat,ctree_mean")]
    models: Vec<Model>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scale of the Stump and Tree spread levels (sd or variance)
    #[arg(long, default_value = "sd")]
    spread: Spread,
    /// Worker threads; 0 uses all cores
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[command(flatten)]
    tree: TreeArgs,
    /// Metrics CSV file [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-replication JSONL log file
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AriArgs {
    #[arg(long)]
    p1: String,
    #[arg(long)]
    p2: String,
}

/// Failure with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl From<CoatError> for Failure {
    fn from(e: CoatError) -> Self {
        let code = match e {
            CoatError::Config(_) => 1,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

fn data_error(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn load(input: &Path, design: Design, schema: &[CovariateSpec]) -> Result<Dataset, Failure> {
    let file = fs::File::open(input).map_err(|e| usage(format!("cannot open {}: {e}", input.display())))?;
    parse_long_csv(file, design, schema).map_err(|e| data_error(e.to_string()))
}

fn schema(text: &str) -> Result<Vec<CovariateSpec>, Failure> {
    parse_schema(text).map_err(usage)
}

fn cmd_fit(args: FitArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let config = args.tree.config();
    config.validate()?;
    let schema = schema(&args.covariates)?;
    let dataset = load(&args.input, args.design, &schema)?;
    for w in validate(&dataset, config.minsize) {
        eprintln!("warning: {w}");
    }
    let tree = fit(&dataset, &config)?;
    let json = tree.to_json();
    let _ = write!(out, "{}", tree.to_text());
    match &args.out {
        Some(path) => write_file(path, &json)?,
        None => {
            let _ = writeln!(out, "{json}");
        }
    }
    if let Some(path) = &args.plotdata {
        write_file(path, &tree.to_plotdata(&dataset))?;
    }
    Ok(())
}

fn cmd_test2(args: Test2Args, out: &mut dyn Write) -> Result<(), Failure> {
    let mut schema = schema(&args.covariates)?;
    match schema.iter().find(|c| c.name == args.group) {
        Some(spec) if spec.kind != CovariateKind::Binary => {
            return Err(usage(format!("covariate '{}' is not binary", args.group)));
        }
        Some(_) => {}
        None => schema.push(CovariateSpec::categorical(args.group.clone(), CovariateKind::Binary, &[])),
    }
    let dataset = load(&args.input, args.design, &schema)?;
    let config = FitConfig {
        variance_mode: args.variance_mode,
        outcome: args.outcome,
        ..FitConfig::default()
    };
    let result = two_sample_ba_test(&dataset, &args.group, &config)?;
    let _ = writeln!(out, "two-sample agreement test on '{}'", result.covariate);
    for (level, e) in &result.groups {
        let _ = writeln!(
            out,
            "  {}={}: n={} bias={:.4} var={:.4} loa=[{:.4}, {:.4}]",
            result.covariate,
            level,
            e.n_subjects,
            e.bias,
            e.var_total,
            e.loa_lower(),
            e.loa_upper()
        );
    }
    let _ = writeln!(
        out,
        "  statistic={:.4} df={} p={:.6}",
        result.test.statistic, result.test.df, result.test.p_value
    );
    Ok(())
}

fn cmd_simulate(args: SimulateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if args.n < 2 || args.m < 1 {
        return Err(usage("simulate needs n >= 2 and m >= 1"));
    }
    let seed = resolve_seed(args.seed);
    let spec = ScenarioSpec {
        scenario: args.scenario,
        design: args.design,
        n: args.n,
        m: args.m,
        seed,
        spread: args.spread,
    };
    let (dataset, truth) = scenario::generate(&spec);
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
            write_file(&dir.join("data.csv"), &dataset.to_long_csv())?;
            write_file(&dir.join("truth.csv"), &truth.to_csv(&dataset))?;
        }
        None => {
            let _ = write!(out, "{}", dataset.to_long_csv());
        }
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    if args.reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }
    if args.n.iter().any(|&n| n < 2) || args.m < 1 {
        return Err(usage("evaluate needs n >= 2 and m >= 1"));
    }
    let config = HarnessConfig {
        fit: args.tree.config(),
        reps: args.reps,
        models: args.models.clone(),
        seed: resolve_seed(args.seed),
        threads: args.threads,
        spread: args.spread,
    };
    let mut grid = Vec::new();
    for &scenario in &args.scenario {
        for &design in &args.design {
            for &n in &args.n {
                grid.push(GridCell { scenario, design, n, m: args.m });
            }
        }
    }
    let (rows, log) = evaluation::run_replications(&grid, &config)?;
    let table = evaluation::summarize(&rows);
    match &args.out {
        Some(path) => write_file(path, &table)?,
        None => {
            let _ = write!(out, "{table}");
        }
    }
    if let Some(path) = &args.log {
        write_file(path, &evaluation::replication_log(&log))?;
    }
    Ok(())
}

fn cmd_ari(args: AriArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let split = |s: &str| s.split(',').map(|x| x.trim().to_string()).collect::<Vec<_>>();
    let ari = evaluation::adjusted_rand_index(&split(&args.p1), &split(&args.p2))
        .map_err(|e| usage(e.to_string()))?;
    let _ = writeln!(out, "{ari}");
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a, &mut out),
        Command::Test2(a) => cmd_test2(a, &mut out),
        Command::Simulate(a) => cmd_simulate(a, &mut out),
        Command::Evaluate(a) => cmd_evaluate(a, &mut out),
        Command::Ari(a) => cmd_ari(a, &mut out),
    };
    let _ = out.flush();
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}
