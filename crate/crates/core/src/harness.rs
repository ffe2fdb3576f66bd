//! Replication studies of estimator bias and the parameter accounting of
//! the daily-partitioned estimand.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dgp::{default_dgp, sample_cohort, true_ate, DgpError};
use crate::estimators::{ccw_ate, npmle_ate, EstimationError, WeightConvention, WeightedCohortOf};
use crate::scenarios::{Regime, ScenarioKind};
use crate::seed::{derive_seed, tag_stream};
use crate::DgpTable;

/// Environment variable holding the worker count of [`run_bias_study`].
pub const WORKERS_ENV: &str = "TTE_WORKERS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("every replicate failed for {estimator}; first error: {first}")]
    AllReplicatesFailed { estimator: EstimatorKind, first: EstimationError },
    #[error(transparent)]
    Dgp(#[from] DgpError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Npmle,
    Ccw,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Npmle => "npmle",
            EstimatorKind::Ccw => "ccw",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "npmle" => Ok(EstimatorKind::Npmle),
            "ccw" => Ok(EstimatorKind::Ccw),
            other => Err(format!("unknown estimator `{other}`")),
        }
    }
}

/// Regimes appear in configs in their textual form (`always`, `initiate:2`, ...).
mod regime_text {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::scenarios::Regime;

    pub fn serialize<S: Serializer>(r: &Regime, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(r)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Regime, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(D::Error::custom)
    }
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Npmle, EstimatorKind::Ccw]
}

fn default_treat() -> Regime {
    Regime::AlwaysFromStart
}

fn default_control() -> Regime {
    Regime::Never
}

fn default_count() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub scenario: ScenarioKind,
    #[serde(default = "default_count")]
    pub n_replicates: usize,
    #[serde(default = "default_count")]
    pub n_patients: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub weight_convention: WeightConvention,
    #[serde(default = "default_count")]
    pub bootstrap_iterations: usize,
    #[serde(default = "default_treat", with = "regime_text")]
    pub treat: Regime,
    #[serde(default = "default_control", with = "regime_text")]
    pub control: Regime,
    /// Replaces the scenario's built-in process.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dgp: Option<DgpTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimates_path: Option<String>,
}

impl StudyConfig {
    /// The 1000 x 1000 study of a scenario with default settings.
    pub fn reference(scenario: ScenarioKind, master_seed: u64) -> Self {
        StudyConfig {
            scenario,
            n_replicates: 1000,
            n_patients: 1000,
            master_seed,
            estimators: default_estimators(),
            weight_convention: WeightConvention::default(),
            bootstrap_iterations: 1000,
            treat: default_treat(),
            control: default_control(),
            dgp: None,
            report_path: None,
            estimates_path: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: StudyConfig = serde_json::from_str(text).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if self.n_replicates == 0 {
            return bad("n_replicates must be at least 1");
        }
        if self.n_patients == 0 {
            return bad("n_patients must be at least 1");
        }
        if self.bootstrap_iterations == 0 {
            return bad("bootstrap_iterations must be at least 1");
        }
        if self.estimators.is_empty() {
            return bad("at least one estimator is required");
        }
        let dgp = self.process();
        dgp.validate()?;
        if dgp.scenario != self.scenario {
            return bad("dgp scenario differs from config scenario");
        }
        for r in [self.treat, self.control] {
            r.validate(dgp.horizon).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        }
        if self.estimators.contains(&EstimatorKind::Ccw)
            && !(self.treat.is_deterministic() && self.control.is_deterministic())
        {
            return bad("ccw supports deterministic regimes only");
        }
        Ok(())
    }

    /// The process to simulate from.
    pub fn process(&self) -> DgpTable {
        self.dgp.clone().unwrap_or_else(|| default_dgp(self.scenario))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    /// One entry per replicate; `None` where estimation failed.
    pub estimates: Vec<Option<f64>>,
    /// Mean of `estimate - true_ate` over successful replicates.
    pub mean_bias: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub scenario: ScenarioKind,
    pub n_replicates: usize,
    pub n_patients: usize,
    pub master_seed: u64,
    pub true_ate: f64,
    pub estimators: BTreeMap<EstimatorKind, EstimatorSummary>,
    #[serde(skip)]
    pub runtime: Duration,
}

impl BiasReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `replicate,estimator,estimate,error`, empty fields for failures.
    pub fn write_estimates_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        out.write_record(["replicate", "estimator", "estimate", "error"])?;
        for (kind, summary) in &self.estimators {
            for (r, est) in summary.estimates.iter().enumerate() {
                let (e, err) = match est {
                    Some(v) => (v.to_string(), (v - self.true_ate).to_string()),
                    None => (String::new(), String::new()),
                };
                out.write_record([r.to_string(), kind.name().to_string(), e, err])?;
            }
        }
        out.flush()
    }
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile interval of the mean of `errors`, from resampling them
/// `iterations` times with replacement.
pub fn bootstrap_mean_ci(errors: &[f64], iterations: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = errors.len();
    let mut means: Vec<f64> =
        (0..iterations).map(|_| (0..n).map(|_| errors[rng.random_range(0..n)]).sum::<f64>() / n as f64).collect();
    means.sort_by(f64::total_cmp);
    (percentile(&means, 0.025), percentile(&means, 0.975))
}

fn estimate(config: &StudyConfig, kind: EstimatorKind, cohort: &WeightedCohortOf<f64>) -> Result<f64, EstimationError> {
    match kind {
        EstimatorKind::Npmle => npmle_ate(cohort, config.treat, config.control).map(|e| e.ate),
        EstimatorKind::Ccw => ccw_ate(cohort, config.treat, config.control, config.weight_convention).map(|e| e.ate),
    }
}

/// Runs the study on `workers` threads (`0` lets rayon decide).
pub fn run_bias_study_with_workers(config: &StudyConfig, workers: usize) -> Result<BiasReport, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    pool.install(|| run_in_current_pool(config))
}

/// Runs the study with the worker count from [`WORKERS_ENV`], if set.
pub fn run_bias_study(config: &StudyConfig) -> Result<BiasReport, HarnessError> {
    let workers = match std::env::var(WORKERS_ENV) {
        Ok(v) => v.parse().map_err(|_| {
            HarnessError::InvalidConfig(format!("{WORKERS_ENV} must be a nonnegative integer, got `{v}`"))
        })?,
        Err(_) => 0,
    };
    run_bias_study_with_workers(config, workers)
}

fn run_in_current_pool(config: &StudyConfig) -> Result<BiasReport, HarnessError> {
    let started = Instant::now();
    config.validate()?;
    let dgp = config.process();
    let truth = true_ate(&dgp, config.treat, config.control)?;
    let mut kinds = config.estimators.clone();
    kinds.sort();
    kinds.dedup();

    let per_replicate: Vec<Vec<Result<f64, EstimationError>>> = (0..config.n_replicates as u64)
        .into_par_iter()
        .map(|r| {
            let cohort = sample_cohort(&dgp, config.n_patients, derive_seed(config.master_seed, r));
            let weighted = WeightedCohortOf::from_cohort(&cohort);
            kinds.iter().map(|&k| estimate(config, k, &weighted)).collect()
        })
        .collect();

    let mut estimators = BTreeMap::new();
    for (j, &kind) in kinds.iter().enumerate() {
        let results: Vec<&Result<f64, EstimationError>> = per_replicate.iter().map(|row| &row[j]).collect();
        let estimates: Vec<Option<f64>> = results.iter().map(|r| r.as_ref().ok().copied()).collect();
        let errors: Vec<f64> = estimates.iter().flatten().map(|e| e - truth).collect();
        if errors.is_empty() {
            let first = results[0].clone().expect_err("no successes means the first replicate failed");
            return Err(HarnessError::AllReplicatesFailed { estimator: kind, first });
        }
        let mean_bias = errors.iter().sum::<f64>() / errors.len() as f64;
        let stream = derive_seed(config.master_seed, tag_stream(&format!("bootstrap-{kind}")));
        let (ci_lower, ci_upper) = bootstrap_mean_ci(&errors, config.bootstrap_iterations, stream);
        let failures = estimates.len() - errors.len();
        estimators.insert(kind, EstimatorSummary { estimates, mean_bias, ci_lower, ci_upper, failures });
    }
    Ok(BiasReport {
        scenario: config.scenario,
        n_replicates: config.n_replicates,
        n_patients: config.n_patients,
        master_seed: config.master_seed,
        true_ate: truth,
        estimators,
        runtime: started.elapsed(),
    })
}

/// Free parameters of the estimand: one hazard block per control period and
/// per (subgroup, treated period), for each baseline level, less one for the
/// shared first-period block net of the baseline distribution.
pub fn parameter_count(n_control_periods: u64, n_subgroups: u64, n_treat_periods: u64, c_levels: u64) -> u64 {
    c_levels * (n_control_periods + n_subgroups * n_treat_periods) - 1
}
