//! Long-format repeated-measurement data.
//!
//! A dataset is read from a CSV file with one row per single measurement:
//!
//! ```text
//! subject,method,replicate,value,<covariate...>
//! s1,A,1,5.1,male,63
//! s1,B,1,4.7,male,63
//! ```
//!
//! Rows are grouped by subject. Subjects are ordered by identifier and
//! measurements by replicate index, so the row order of the input never
//! affects the resulting [`Dataset`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// Replicate design of a method comparison study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    /// Repeated measurements of a constant true value; replicates of one
    /// method are exchangeable within a subject.
    Unpaired,
    /// Replicates are measurement pairs of a true value that changes
    /// between replicates.
    Paired,
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Design::Unpaired => "unpaired",
            Design::Paired => "paired",
        })
    }
}

impl FromStr for Design {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "unpaired" => Ok(Design::Unpaired),
            "paired" => Ok(Design::Paired),
            other => Err(format!("unknown design '{other}' (expected paired or unpaired)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    A,
    B,
}

/// One row of the long CSV format.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub subject_id: String,
    pub method: Method,
    pub replicate_id: u32,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Numeric,
    Binary,
    Nominal,
    Ordinal,
}

impl CovariateKind {
    pub fn is_categorical(self) -> bool {
        !matches!(self, CovariateKind::Numeric)
    }
}

impl FromStr for CovariateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "numeric" => Ok(CovariateKind::Numeric),
            "binary" => Ok(CovariateKind::Binary),
            "nominal" => Ok(CovariateKind::Nominal),
            "ordinal" => Ok(CovariateKind::Ordinal),
            other => Err(format!(
                "unknown covariate kind '{other}' (expected numeric, binary, nominal or ordinal)"
            )),
        }
    }
}

/// Declared covariate: name, kind and, for categorical kinds, its levels.
///
/// Levels may be declared up front (required to fix the order of an ordinal
/// covariate). When left empty they are collected from the data and sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: CovariateKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

impl CovariateSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: CovariateKind::Numeric, levels: Vec::new() }
    }

    pub fn categorical(name: impl Into<String>, kind: CovariateKind, levels: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind,
            levels: levels.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl FromStr for CovariateSpec {
    type Err = String;

    /// Parses `name:kind` or `name:kind:level1|level2|...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(3, ':');
        let name = parts.next().unwrap_or_default().trim();
        if name.is_empty() {
            return Err(format!("empty covariate name in '{s}'"));
        }
        let kind: CovariateKind = parts
            .next()
            .ok_or_else(|| format!("covariate '{name}' needs a kind (name:kind)"))?
            .trim()
            .parse()?;
        let levels = match parts.next() {
            Some(list) if kind.is_categorical() => {
                list.split('|').map(|l| l.trim().to_string()).collect()
            }
            Some(_) => return Err(format!("numeric covariate '{name}' cannot declare levels")),
            None => Vec::new(),
        };
        Ok(Self { name: name.to_string(), kind, levels })
    }
}

/// Parses a comma-separated list of [`CovariateSpec`]s.
pub fn parse_schema(text: &str) -> Result<Vec<CovariateSpec>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

/// Value of one covariate for one subject. Categorical values store the
/// index into the schema's level list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CovariateValue {
    Numeric(f64),
    Level(usize),
}

impl CovariateValue {
    /// Numeric value, or the level index as a score for categorical values.
    pub fn as_f64(self) -> f64 {
        match self {
            CovariateValue::Numeric(x) => x,
            CovariateValue::Level(l) => l as f64,
        }
    }
}

/// All measurements of both methods for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSeries {
    pub subject_id: String,
    /// Ordered by replicate index.
    pub measurements_a: Vec<f64>,
    pub measurements_b: Vec<f64>,
    /// One value per schema covariate, in schema order.
    pub covariates: Vec<CovariateValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub design: Design,
    pub subjects: Vec<SubjectSeries>,
    pub covariate_schema: Vec<CovariateSpec>,
}

impl Dataset {
    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.covariate_schema.iter().position(|c| c.name == name)
    }

    /// Covariate values of all subjects for the covariate at `index`.
    pub fn covariate_column(&self, index: usize) -> Vec<CovariateValue> {
        self.subjects.iter().map(|s| s.covariates[index]).collect()
    }

    /// Dataset restricted to the subjects at `indices` (same schema).
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            design: self.design,
            subjects: indices.iter().map(|&i| self.subjects[i].clone()).collect(),
            covariate_schema: self.covariate_schema.clone(),
        }
    }

    /// Dataset keeping only the named covariates, in the given order.
    pub fn select_covariates(&self, names: &[&str]) -> Result<Dataset, DataError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.covariate_index(n)
                    .ok_or_else(|| DataError::MissingColumn((*n).to_string()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Dataset {
            design: self.design,
            subjects: self
                .subjects
                .iter()
                .map(|s| SubjectSeries {
                    covariates: idx.iter().map(|&i| s.covariates[i]).collect(),
                    ..s.clone()
                })
                .collect(),
            covariate_schema: idx.iter().map(|&i| self.covariate_schema[i].clone()).collect(),
        })
    }

    /// Renders a covariate value with its level name where applicable.
    pub fn format_covariate(&self, index: usize, value: CovariateValue) -> String {
        match value {
            CovariateValue::Numeric(x) => format!("{x}"),
            CovariateValue::Level(l) => self.covariate_schema[index].levels[l].clone(),
        }
    }

    /// Serializes the dataset back into the long CSV format. Replicates are
    /// numbered 1..m in stored order.
    pub fn to_long_csv(&self) -> String {
        let mut out = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["subject", "method", "replicate", "value"];
        header.extend(self.covariate_schema.iter().map(|c| c.name.as_str()));
        out.write_record(&header).expect("in-memory write");
        for subject in &self.subjects {
            let covs: Vec<String> = subject
                .covariates
                .iter()
                .enumerate()
                .map(|(j, &v)| self.format_covariate(j, v))
                .collect();
            for (method, values) in [("A", &subject.measurements_a), ("B", &subject.measurements_b)] {
                for (r, v) in values.iter().enumerate() {
                    let mut row = vec![
                        subject.subject_id.clone(),
                        method.to_string(),
                        (r + 1).to_string(),
                        format!("{v}"),
                    ];
                    row.extend(covs.iter().cloned());
                    out.write_record(&row).expect("in-memory write");
                }
            }
        }
        String::from_utf8(out.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }
}

const REQUIRED_COLUMNS: [&str; 4] = ["subject", "method", "replicate", "value"];

#[derive(Default)]
struct SubjectBuilder {
    a: BTreeMap<u32, f64>,
    b: BTreeMap<u32, f64>,
    raw_covariates: Vec<Option<String>>,
}

/// Reads a long-format CSV into a [`Dataset`].
pub fn parse_long_csv<R: std::io::Read>(
    reader: R,
    design: Design,
    schema: &[CovariateSpec],
) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let [c_subject, c_method, c_replicate, c_value] = [
        column(REQUIRED_COLUMNS[0])?,
        column(REQUIRED_COLUMNS[1])?,
        column(REQUIRED_COLUMNS[2])?,
        column(REQUIRED_COLUMNS[3])?,
    ];
    let cov_cols: Vec<usize> = schema.iter().map(|c| column(&c.name)).collect::<Result<_, _>>()?;

    let mut subjects: BTreeMap<String, SubjectBuilder> = BTreeMap::new();
    for (i, record) in rdr.records().enumerate() {
        // header is line 1
        let row = i + 2;
        let record = record?;
        let cell = |col: usize, name: &str| -> Result<&str, DataError> {
            match record.get(col) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(DataError::EmptyCell { row, column: name.to_string() }),
            }
        };
        let subject_id = cell(c_subject, "subject")?.to_string();
        let method = match cell(c_method, "method")?.to_ascii_uppercase().as_str() {
            "A" => Method::A,
            "B" => Method::B,
            other => {
                return Err(DataError::Parse { row, message: format!("unknown method '{other}'") })
            }
        };
        let replicate: u32 = cell(c_replicate, "replicate")?.parse().map_err(|_| DataError::Parse {
            row,
            message: "replicate must be a positive integer".into(),
        })?;
        if replicate == 0 {
            return Err(DataError::Parse { row, message: "replicate must be >= 1".into() });
        }
        let value: f64 = cell(c_value, "value")?
            .parse()
            .map_err(|_| DataError::Parse { row, message: "value is not a number".into() })?;
        if !value.is_finite() {
            return Err(DataError::Parse { row, message: "value is not finite".into() });
        }

        let entry = subjects.entry(subject_id.clone()).or_insert_with(|| SubjectBuilder {
            raw_covariates: vec![None; schema.len()],
            ..Default::default()
        });
        let slot = match method {
            Method::A => &mut entry.a,
            Method::B => &mut entry.b,
        };
        if slot.insert(replicate, value).is_some() {
            return Err(DataError::Duplicate { subject: subject_id, method, replicate });
        }
        for (j, (&col, spec)) in cov_cols.iter().zip(schema).enumerate() {
            let raw = cell(col, &spec.name)?;
            match &entry.raw_covariates[j] {
                None => entry.raw_covariates[j] = Some(raw.to_string()),
                Some(prev) if prev == raw => {}
                Some(_) => {
                    return Err(DataError::InconsistentCovariate {
                        subject: subject_id,
                        covariate: spec.name.clone(),
                    })
                }
            }
        }
    }

    // resolve categorical levels
    let mut resolved_schema: Vec<CovariateSpec> = schema.to_vec();
    for (j, spec) in resolved_schema.iter_mut().enumerate() {
        if spec.kind.is_categorical() && spec.levels.is_empty() {
            let observed: BTreeSet<&str> = subjects
                .values()
                .filter_map(|s| s.raw_covariates[j].as_deref())
                .collect();
            spec.levels = observed.into_iter().map(String::from).collect();
        }
        if spec.kind == CovariateKind::Binary && spec.levels.len() > 2 {
            return Err(DataError::Schema(format!(
                "binary covariate '{}' has {} levels",
                spec.name,
                spec.levels.len()
            )));
        }
    }

    let mut out = Vec::with_capacity(subjects.len());
    for (subject_id, builder) in subjects {
        if builder.a.is_empty() || builder.b.is_empty() {
            return Err(DataError::MissingMethod {
                subject: subject_id,
                method: if builder.a.is_empty() { Method::A } else { Method::B },
            });
        }
        if design == Design::Paired {
            let unmatched = builder
                .a
                .keys()
                .filter(|r| !builder.b.contains_key(r))
                .chain(builder.b.keys().filter(|r| !builder.a.contains_key(r)))
                .min();
            if let Some(&replicate) = unmatched {
                return Err(DataError::Pairing { subject: subject_id, replicate });
            }
        }
        let mut covariates = Vec::with_capacity(schema.len());
        for (spec, raw) in resolved_schema.iter().zip(&builder.raw_covariates) {
            let raw = raw.as_deref().expect("every row carries all covariates");
            let value = if spec.kind.is_categorical() {
                let level = spec.levels.iter().position(|l| l == raw).ok_or_else(|| {
                    DataError::Schema(format!(
                        "value '{raw}' of covariate '{}' is not a declared level",
                        spec.name
                    ))
                })?;
                CovariateValue::Level(level)
            } else {
                let x: f64 = raw.parse().map_err(|_| {
                    DataError::Schema(format!(
                        "covariate '{}' of subject '{subject_id}' is not numeric: '{raw}'",
                        spec.name
                    ))
                })?;
                if !x.is_finite() {
                    return Err(DataError::Schema(format!(
                        "covariate '{}' of subject '{subject_id}' is not finite",
                        spec.name
                    )));
                }
                CovariateValue::Numeric(x)
            };
            covariates.push(value);
        }
        out.push(SubjectSeries {
            subject_id,
            measurements_a: builder.a.into_values().collect(),
            measurements_b: builder.b.into_values().collect(),
            covariates,
        });
    }

    Ok(Dataset { design, subjects: out, covariate_schema: resolved_schema })
}

/// Non-fatal findings about a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    ZeroDf { subject: String, method: Option<Method> },
    ConstantCovariate(String),
    TooFewForSplit { n: usize, minsize: usize },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::ZeroDf { subject, method: Some(m) } => {
                write!(f, "zero df for method {m:?}, subject {subject}")
            }
            Warning::ZeroDf { subject, method: None } => {
                write!(f, "zero df for paired differences, subject {subject}")
            }
            Warning::ConstantCovariate(name) => write!(f, "constant covariate {name}"),
            Warning::TooFewForSplit { n, minsize } => {
                write!(f, "n = {n} < 2 * minsize = {}: the tree can never split", 2 * minsize)
            }
        }
    }
}

pub fn validate(dataset: &Dataset, minsize: usize) -> Vec<Warning> {
    let mut warnings = Vec::new();
    for s in &dataset.subjects {
        match dataset.design {
            Design::Unpaired => {
                for (method, values) in [(Method::A, &s.measurements_a), (Method::B, &s.measurements_b)] {
                    if values.len() < 2 {
                        warnings.push(Warning::ZeroDf {
                            subject: s.subject_id.clone(),
                            method: Some(method),
                        });
                    }
                }
            }
            Design::Paired => {
                if s.measurements_a.len() < 2 {
                    warnings.push(Warning::ZeroDf { subject: s.subject_id.clone(), method: None });
                }
            }
        }
    }
    for (j, spec) in dataset.covariate_schema.iter().enumerate() {
        let mut values = dataset.subjects.iter().map(|s| s.covariates[j]);
        if let Some(first) = values.next() {
            if values.all(|v| v == first) {
                warnings.push(Warning::ConstantCovariate(spec.name.clone()));
            }
        }
    }
    if dataset.n_subjects() < 2 * minsize {
        warnings.push(Warning::TooFewForSplit { n: dataset.n_subjects(), minsize });
    }
    warnings
}
