//! `tte`: command-line driver for simulations, estimation, bias studies and
//! graphical identification checks.
//!
//! Exit status is 0 on success, 1 on invalid input and 2 when estimation
//! fails. Errors go to stderr as `tte: error[CODE]: message`.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tte_core::dgp::{default_dgp, sample_cohort};
use tte_core::estimators::{ccw_ate, clone_rows, fit_strata, npmle_ate, write_clone_rows_csv};
use tte_core::harness::{parameter_count, run_bias_study, HarnessError};
use tte_core::identification::identification_report;
use tte_core::scenarios::{build_amwn, build_trial_graph, exchangeability_table};
use tte_core::{
    Cohort, DgpError, DgpTable, EstimationError, Regime, ScenarioError, ScenarioKind, StudyConfig, WeightConvention,
    WeightedCohort,
};

#[derive(Parser)]
#[command(name = "tte", version, about = "Time-partitioned target trial emulation workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a cohort and write it as CSV.
    Simulate {
        #[arg(long)]
        scenario: ScenarioKind,
        /// Number of patients.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON process table replacing the scenario default.
        #[arg(long)]
        dgp: Option<PathBuf>,
        /// Output file (stdout when absent).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Estimate the effect from a cohort CSV and print it as JSON.
    Estimate {
        #[arg(long)]
        scenario: ScenarioKind,
        /// Cohort CSV (stdin when absent or `-`).
        #[arg(long, short)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Estimator::Npmle)]
        estimator: Estimator,
        #[arg(long, default_value = "always")]
        treat: Regime,
        #[arg(long, default_value = "never")]
        control: Regime,
        #[arg(long, default_value = "lagged")]
        weight_convention: WeightConvention,
        /// Also write the clone-level rows of both arms (ccw only).
        #[arg(long)]
        clones: Option<PathBuf>,
    },
    /// Run a replication study from a JSON config.
    BiasStudy {
        #[arg(long)]
        config: PathBuf,
        /// Report file (overrides the config; stdout when neither is set).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Per-replicate estimates CSV (overrides the config).
        #[arg(long)]
        estimates: Option<PathBuf>,
    },
    /// Check the do-calculus premises for every period.
    CheckIdentification {
        #[arg(long)]
        scenario: ScenarioKind,
        #[arg(long = "T")]
        horizon: u32,
        #[arg(long, value_enum, default_value_t = Format::Both)]
        format: Format,
    },
    /// Print the exchangeability truth table over (i, k).
    CheckExchangeability {
        #[arg(long)]
        scenario: ScenarioKind,
        #[arg(long = "T")]
        horizon: u32,
        #[arg(long, default_value = "always")]
        regime: Regime,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Count the free parameters of the partitioned estimand.
    ParamCount {
        #[arg(long)]
        control: u64,
        #[arg(long)]
        subgroups: u64,
        #[arg(long)]
        treat: u64,
        /// Number of baseline levels.
        #[arg(long, default_value_t = 1)]
        c: u64,
    },
    /// Print a scenario graph in DOT format.
    ExportGraph {
        #[arg(long)]
        scenario: ScenarioKind,
        #[arg(long = "T")]
        horizon: u32,
        #[arg(long, value_enum, default_value_t = Variant::Full)]
        variant: Variant,
        /// Regime of the multi-world network.
        #[arg(long, default_value = "always")]
        regime: Regime,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    Npmle,
    Ccw,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Full,
    Simplified,
    Amwn,
}

/// A failure with its exit status and machine-readable code.
#[derive(Debug)]
struct Failure {
    status: u8,
    code: &'static str,
    message: String,
}

impl Failure {
    fn invalid(code: &'static str, message: impl ToString) -> Self {
        Failure { status: 1, code, message: message.to_string() }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::invalid("INVALID_SCENARIO", e)
    }
}

impl From<DgpError> for Failure {
    fn from(e: DgpError) -> Self {
        let code = match e {
            DgpError::Format(_) | DgpError::InvalidTrajectory { .. } => "INVALID_COHORT",
            DgpError::SupportTooLarge => "SUPPORT_TOO_LARGE",
            _ => "INVALID_DGP",
        };
        Failure::invalid(code, e)
    }
}

impl From<EstimationError> for Failure {
    fn from(e: EstimationError) -> Self {
        let code = match e {
            EstimationError::EmptyStratum { .. } => "EMPTY_STRATUM",
            EstimationError::ZeroPropensity { .. } => "ZERO_PROPENSITY",
            EstimationError::NoAtRiskRows { .. } => "NO_AT_RISK_ROWS",
            EstimationError::EmptyCohort => "EMPTY_COHORT",
            EstimationError::UnsupportedRegime(_) | EstimationError::Scenario(_) => {
                return Failure::invalid("UNSUPPORTED_REGIME", e)
            }
            EstimationError::Dgp(d) => return d.into(),
        };
        Failure { status: 2, code, message: e.to_string() }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::AllReplicatesFailed { .. } => {
                Failure { status: 2, code: "ALL_REPLICATES_FAILED", message: e.to_string() }
            }
            HarnessError::Dgp(d) => d.into(),
            HarnessError::InvalidConfig(_) | HarnessError::ThreadPool(_) => Failure::invalid("INVALID_CONFIG", e),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::invalid("IO", format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| Failure::invalid("IO", e))
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

fn simulate(
    scenario: ScenarioKind,
    n: usize,
    seed: u64,
    dgp: Option<PathBuf>,
    output: Option<PathBuf>,
) -> Result<(), Failure> {
    if n == 0 {
        return Err(Failure::invalid("INVALID_ARGUMENT", "--n must be at least 1"));
    }
    let table = match dgp {
        Some(path) => DgpTable::from_json(&read_text(&path)?)?,
        None => default_dgp(scenario),
    };
    if table.scenario != scenario {
        return Err(Failure::invalid("INVALID_DGP", "process table scenario differs from --scenario"));
    }
    let cohort = sample_cohort(&table, n, seed);
    let mut buf = Vec::new();
    cohort.write_csv(&mut buf)?;
    write_out(output.as_deref(), std::str::from_utf8(&buf).expect("CSV is UTF-8"))
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    scenario: ScenarioKind,
    input: Option<PathBuf>,
    estimator: Estimator,
    treat: Regime,
    control: Regime,
    convention: WeightConvention,
    clones: Option<PathBuf>,
) -> Result<(), Failure> {
    let cohort = match input.as_deref() {
        Some(p) if p != Path::new("-") => {
            Cohort::read_csv(scenario, BufReader::new(File::open(p).map_err(|e| io_failure(p, e))?))?
        }
        _ => {
            let mut text = String::new();
            io::stdin().read_to_string(&mut text).map_err(|e| Failure::invalid("IO", e))?;
            Cohort::read_csv(scenario, text.as_bytes())?
        }
    };
    let weighted = WeightedCohort::from_cohort(&cohort);
    let est = match estimator {
        Estimator::Npmle => {
            if clones.is_some() {
                return Err(Failure::invalid("INVALID_ARGUMENT", "--clones requires --estimator ccw"));
            }
            npmle_ate(&weighted, treat, control)?
        }
        Estimator::Ccw => {
            let est = ccw_ate(&weighted, treat, control, convention)?;
            if let Some(path) = clones {
                let table = fit_strata(&weighted);
                let mut rows = clone_rows(&weighted, &table, treat, convention)?;
                rows.extend(clone_rows(&weighted, &table, control, convention)?);
                write_clone_rows_csv(&rows, create(&path)?).map_err(|e| io_failure(&path, e))?;
            }
            est
        }
    };
    write_out(None, &to_json(&est))
}

fn bias_study(config: PathBuf, report: Option<PathBuf>, estimates: Option<PathBuf>) -> Result<(), Failure> {
    let config = StudyConfig::from_json(&read_text(&config)?)?;
    let result = run_bias_study(&config)?;
    let report_path = report.or_else(|| config.report_path.as_ref().map(PathBuf::from));
    let estimates_path = estimates.or_else(|| config.estimates_path.as_ref().map(PathBuf::from));
    if let Some(path) = estimates_path {
        result.write_estimates_csv(create(&path)?).map_err(|e| io_failure(&path, e))?;
    }
    for (kind, s) in &result.estimators {
        eprintln!(
            "{kind}: mean bias {:+.4} (95% CI {:+.4} to {:+.4}), {} failed replicates",
            s.mean_bias, s.ci_lower, s.ci_upper, s.failures
        );
    }
    eprintln!("runtime {:.2?}", result.runtime);
    let mut text = result.to_json();
    text.push('\n');
    write_out(report_path.as_deref(), &text)
}

fn exchangeability_text(table: &[Vec<bool>]) -> String {
    let mut out = String::from("i\\k");
    for k in 1..=table.len() {
        out.push_str(&format!(" {k:>5}"));
    }
    out.push('\n');
    for (i, row) in table.iter().enumerate() {
        out.push_str(&format!("{:>3}", i + 1));
        for cell in row {
            out.push_str(&format!(" {cell:>5}"));
        }
        out.push('\n');
    }
    out
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { scenario, n, seed, dgp, output } => simulate(scenario, n, seed, dgp, output),
        Command::Estimate { scenario, input, estimator, treat, control, weight_convention, clones } => {
            estimate(scenario, input, estimator, treat, control, weight_convention, clones)
        }
        Command::BiasStudy { config, report, estimates } => bias_study(config, report, estimates),
        Command::CheckIdentification { scenario, horizon, format } => {
            let report = identification_report(scenario, horizon)?;
            let mut text = String::new();
            if format != Format::Json {
                text.push_str(&report.to_table());
            }
            if format != Format::Table {
                text.push_str(&to_json(&report));
            }
            write_out(None, &text)
        }
        Command::CheckExchangeability { scenario, horizon, regime, format } => {
            let table = exchangeability_table(scenario, horizon, regime)?;
            let mut text = String::new();
            if format != Format::Json {
                text.push_str(&exchangeability_text(&table));
            }
            if format != Format::Table {
                text.push_str(&to_json(&table));
            }
            write_out(None, &text)
        }
        Command::ParamCount { control, subgroups, treat, c } => {
            if [control, subgroups, treat, c].contains(&0) {
                return Err(Failure::invalid("INVALID_ARGUMENT", "all counts must be at least 1"));
            }
            write_out(None, &format!("{}\n", parameter_count(control, subgroups, treat, c)))
        }
        Command::ExportGraph { scenario, horizon, variant, regime } => {
            let g = match variant {
                Variant::Full => build_trial_graph(scenario, horizon, true)?,
                Variant::Simplified => build_trial_graph(scenario, horizon, false)?,
                Variant::Amwn => build_amwn(scenario, horizon, regime)?,
            };
            write_out(None, &format!("{}\n", g.to_dot()))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let mut lines = rendered.lines();
            let first = lines.next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("tte: error[INVALID_ARGUMENT]: {first}");
            for line in lines {
                eprintln!("{line}");
            }
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tte: error[{}]: {}", f.code, f.message);
            ExitCode::from(f.status)
        }
    }
}
