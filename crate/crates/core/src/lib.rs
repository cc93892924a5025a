//! Conditional method agreement trees (COAT) for method comparison studies
//! with repeated measurements.
//!
//! The crate covers Bland-Altman estimation for paired and unpaired
//! replicate designs ([`agreement`]), conditional inference trees on the
//! transformed agreement outcome ([`tree`]), synthetic scenarios
//! ([`scenario`]) and a replication harness ([`evaluation`]).

pub mod agreement;
pub mod chisq;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod scenario;
pub mod tree;

pub use agreement::{estimate_dataset, BaEstimate, VarianceMode};
pub use data::{parse_long_csv, CovariateKind, CovariateSpec, Dataset, Design};
pub use error::CoatError;
pub use tree::{fit, CoatTree, FitConfig, Outcome};
