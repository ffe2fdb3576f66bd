//! Time-partitioned target trial emulation.
//!
//! Causal graphs with bidirected edges, the two simplified trial scenarios,
//! graphical identification checks, exact and sampled data-generating
//! processes, plug-in and cloning-censoring-weighting estimators, and a
//! replication harness for bias studies.
//!
//! Numerical code is generic over [`Scalar`]; the aliases below fix it to
//! `f64` (or an exact rational where noted).

pub mod dgp;
pub mod estimators;
pub mod graph;
pub mod harness;
pub mod identification;
pub mod scalar;
pub mod scenarios;
pub mod seed;

pub use scalar::Scalar;

/// Arbitrary-precision rational, for exact oracles.
pub type Rational = num_rational::BigRational;

pub type DgpTable = dgp::DgpTableOf<f64>;
pub type ExactDgpTable = dgp::DgpTableOf<Rational>;
pub type StratumTable = estimators::StratumTableOf<f64>;
pub type AteEstimate = estimators::AteEstimateOf<f64>;
pub type WeightedCohort = estimators::WeightedCohortOf<f64>;

pub use dgp::{Cohort, DgpError, Trajectory, Treatment};
pub use estimators::{EstimationError, WeightConvention};
pub use graph::{Admg, GraphError, NodeLabel, NodeSet};
pub use harness::{BiasReport, HarnessError, StudyConfig};
pub use identification::PremiseReport;
pub use scenarios::{Regime, ScenarioError, ScenarioKind};
