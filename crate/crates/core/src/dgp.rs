//! Discrete-time data-generating processes for the simplified trials.
//!
//! A [`DgpTableOf`] stores the outcome hazard and the treatment propensity of
//! every period as full conditional tables indexed by the treatment history
//! (bit `t-1` set when `X_t = 1`). Scenario A hazards at period `k` condition
//! on `X_{<k}` and its propensities are drawn among period-`k` survivors;
//! scenario B hazards condition on `X_{<=k}` and treatment is drawn before
//! the period's vital status.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{sum, Scalar};
use crate::scenarios::{Regime, ScenarioError, ScenarioKind};
use crate::seed::derive_seed;

/// Largest horizon whose full conditional tables are materialized.
pub const MAX_TABLE_HORIZON: u32 = 16;

/// Largest support [`enumerate_distribution`] will produce.
pub const MAX_SUPPORT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DgpError {
    #[error("{table} at period {period}, history {history:#b}: {value} is not a probability")]
    InvalidProbability { table: &'static str, period: u32, history: u32, value: f64 },
    #[error("{table} table for period {period} has {found} entries, expected {expected}")]
    ShapeMismatch { table: &'static str, period: u32, found: usize, expected: usize },
    #[error("horizon {0} is outside 1..={MAX_TABLE_HORIZON}")]
    UnsupportedHorizon(u32),
    #[error("support exceeds {MAX_SUPPORT} trajectories")]
    SupportTooLarge,
    #[error("trajectory {index}: {reason}")]
    InvalidTrajectory { index: usize, reason: String },
    #[error("cohort file: {0}")]
    Format(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Observed treatment in one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Treatment {
    #[serde(rename = "0")]
    Untreated,
    #[serde(rename = "1")]
    Treated,
    /// Death precluded or obscured the period's treatment.
    #[serde(rename = "u")]
    Unclear,
}

impl Treatment {
    pub fn from_flag(treated: bool) -> Self {
        if treated {
            Treatment::Treated
        } else {
            Treatment::Untreated
        }
    }

    pub fn flag(self) -> Option<bool> {
        match self {
            Treatment::Untreated => Some(false),
            Treatment::Treated => Some(true),
            Treatment::Unclear => None,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Treatment::Untreated => "0",
            Treatment::Treated => "1",
            Treatment::Unclear => "u",
        }
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Bitmask of `x_1..x_len`, or `None` if any of them is unclear.
pub fn history_bits(x: &[Treatment], len: usize) -> Option<u32> {
    x[..len]
        .iter()
        .enumerate()
        .try_fold(0u32, |acc, (i, t)| t.flag().map(|treated| if treated { acc | (1 << i) } else { acc }))
}

/// One patient's treatment and vital-status sequence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Trajectory {
    pub x: Vec<Treatment>,
    /// `true` once dead (absorbing).
    pub y: Vec<bool>,
    /// Baseline stratum `C`, absent in the simulation scenarios.
    pub stratum: Option<u32>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.y.len()
    }

    /// Alive at the start of period `t` (1-based).
    pub fn alive_before(&self, t: usize) -> bool {
        t == 1 || !self.y[t - 2]
    }

    pub fn validate(&self, kind: ScenarioKind) -> Result<(), String> {
        if self.x.len() != self.y.len() || self.y.is_empty() {
            return Err("x and y must have the same non-zero length".into());
        }
        for t in 1..=self.horizon() {
            if t > 1 && self.y[t - 2] && !self.y[t - 1] {
                return Err(format!("resurrection at period {t}"));
            }
            let defined = self.x[t - 1] != Treatment::Unclear;
            let expected = match kind {
                ScenarioKind::NoWithinPeriodTreatmentEffect => !self.y[t - 1],
                ScenarioKind::NoWithinPeriodOutcomeEffect => self.alive_before(t),
            };
            if defined != expected {
                return Err(format!("treatment at period {t} must be {}", if expected { "0/1" } else { "u" }));
            }
        }
        Ok(())
    }
}

/// A sample of trajectories from one scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cohort {
    pub scenario: ScenarioKind,
    pub horizon: u32,
    /// Master seed when the cohort was simulated.
    pub seed: Option<u64>,
    pub trajectories: Vec<Trajectory>,
}

impl Cohort {
    pub fn new(scenario: ScenarioKind, trajectories: Vec<Trajectory>) -> Result<Self, DgpError> {
        let horizon = trajectories.first().map_or(0, Trajectory::horizon);
        for (index, traj) in trajectories.iter().enumerate() {
            if traj.horizon() != horizon {
                return Err(DgpError::InvalidTrajectory { index, reason: "horizon differs from the cohort".into() });
            }
            traj.validate(scenario).map_err(|reason| DgpError::InvalidTrajectory { index, reason })?;
        }
        Ok(Cohort { scenario, horizon: horizon as u32, seed: None, trajectories })
    }

    pub fn n(&self) -> usize {
        self.trajectories.len()
    }

    /// Writes `id,period,x,y` rows (plus `c` when any stratum is set).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DgpError> {
        let with_strata = self.trajectories.iter().any(|t| t.stratum.is_some());
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let fmt_err = |e: csv::Error| DgpError::Format(e.to_string());
        let mut header = vec!["id", "period", "x", "y"];
        if with_strata {
            header.push("c");
        }
        out.write_record(&header).map_err(fmt_err)?;
        for (id, traj) in self.trajectories.iter().enumerate() {
            for t in 0..traj.horizon() {
                let mut row = vec![
                    id.to_string(),
                    (t + 1).to_string(),
                    traj.x[t].symbol().to_string(),
                    u8::from(traj.y[t]).to_string(),
                ];
                if with_strata {
                    row.push(traj.stratum.map(|c| c.to_string()).unwrap_or_default());
                }
                out.write_record(&row).map_err(fmt_err)?;
            }
        }
        out.flush().map_err(|e| DgpError::Format(e.to_string()))
    }

    /// Reads the format produced by [`Cohort::write_csv`]. Rows of one patient
    /// must be contiguous and ordered by period.
    pub fn read_csv<R: Read>(scenario: ScenarioKind, reader: R) -> Result<Self, DgpError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers().map_err(|e| DgpError::Format(e.to_string()))?.clone();
        let names: Vec<&str> = headers.iter().collect();
        let with_strata = match names.as_slice() {
            ["id", "period", "x", "y"] => false,
            ["id", "period", "x", "y", "c"] => true,
            _ => return Err(DgpError::Format(format!("unexpected header {names:?}"))),
        };
        let mut trajectories: Vec<Trajectory> = Vec::new();
        let mut current_id: Option<String> = None;
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| DgpError::Format(e.to_string()))?;
            let bad = |what: &str| DgpError::Format(format!("data row {}: {what}", line + 1));
            let period: usize = record[1].parse().map_err(|_| bad("period is not an integer"))?;
            let x = match &record[2] {
                "0" => Treatment::Untreated,
                "1" => Treatment::Treated,
                "u" => Treatment::Unclear,
                _ => return Err(bad("x must be 0, 1 or u")),
            };
            let y = match &record[3] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("y must be 0 or 1")),
            };
            let stratum = if with_strata && !record[4].is_empty() {
                Some(record[4].parse().map_err(|_| bad("c is not an integer"))?)
            } else {
                None
            };
            if current_id.as_deref() != Some(&record[0]) {
                current_id = Some(record[0].to_string());
                trajectories.push(Trajectory { x: Vec::new(), y: Vec::new(), stratum });
            }
            let traj = trajectories.last_mut().expect("pushed above");
            if period != traj.y.len() + 1 {
                return Err(bad("periods must run 1, 2, ... within a patient"));
            }
            if traj.stratum != stratum {
                return Err(bad("stratum changes within a patient"));
            }
            traj.x.push(x);
            traj.y.push(y);
        }
        if trajectories.is_empty() {
            return Err(DgpError::Format("no data rows".into()));
        }
        Cohort::new(scenario, trajectories)
    }
}

/// Per-period conditional probability tables of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct DgpTableOf<S> {
    pub scenario: ScenarioKind,
    pub horizon: u32,
    /// `hazard[k-1][h]`: P(death in k | alive before k, treatment history h).
    pub hazard: Vec<Vec<S>>,
    /// `propensity[k-1][h]`: P(X_k = 1 | eligible at k, X_{<k} = h).
    pub propensity: Vec<Vec<S>>,
}

/// Number of treatment periods a period-`k` hazard conditions on.
pub fn hazard_history_len(kind: ScenarioKind, k: u32) -> u32 {
    if kind.treatment_acts_within_period() {
        k
    } else {
        k - 1
    }
}

fn bits_to_flags(bits: u32, len: u32) -> Vec<bool> {
    (0..len).map(|i| bits & (1 << i) != 0).collect()
}

impl<S: Scalar> DgpTableOf<S> {
    /// Materializes tables from conditional-probability functions of
    /// `(period, treatment history)`.
    pub fn from_fn(
        scenario: ScenarioKind,
        horizon: u32,
        hazard: impl Fn(u32, &[bool]) -> S,
        propensity: impl Fn(u32, &[bool]) -> S,
    ) -> Result<Self, DgpError> {
        if horizon == 0 || horizon > MAX_TABLE_HORIZON {
            return Err(DgpError::UnsupportedHorizon(horizon));
        }
        let table = |len_of: &dyn Fn(u32) -> u32, f: &dyn Fn(u32, &[bool]) -> S| -> Vec<Vec<S>> {
            (1..=horizon)
                .map(|k| {
                    let len = len_of(k);
                    (0..1u32 << len).map(|h| f(k, &bits_to_flags(h, len))).collect()
                })
                .collect()
        };
        let dgp = DgpTableOf {
            scenario,
            horizon,
            hazard: table(&|k| hazard_history_len(scenario, k), &hazard),
            propensity: table(&|k| k - 1, &propensity),
        };
        dgp.validate()?;
        Ok(dgp)
    }

    /// Checks table shapes and that every entry is a probability.
    pub fn validate(&self) -> Result<(), DgpError> {
        if self.horizon == 0 || self.horizon > MAX_TABLE_HORIZON {
            return Err(DgpError::UnsupportedHorizon(self.horizon));
        }
        for (name, table) in [("hazard", &self.hazard), ("propensity", &self.propensity)] {
            let len_of = |k| if name == "hazard" { hazard_history_len(self.scenario, k) } else { k - 1 };
            if table.len() != self.horizon as usize {
                return Err(DgpError::ShapeMismatch {
                    table: name,
                    period: table.len() as u32,
                    found: table.len(),
                    expected: self.horizon as usize,
                });
            }
            for (k, row) in (1..).zip(table) {
                let expected = 1usize << len_of(k);
                if row.len() != expected {
                    return Err(DgpError::ShapeMismatch { table: name, period: k, found: row.len(), expected });
                }
                if let Some((h, v)) = row.iter().enumerate().find(|(_, v)| !v.is_probability()) {
                    return Err(DgpError::InvalidProbability {
                        table: name,
                        period: k,
                        history: h as u32,
                        value: v.to_f64(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Hazard at period `k` given the bitmask of the conditioning history.
    pub fn hazard(&self, k: u32, history: u32) -> &S {
        &self.hazard[k as usize - 1][history as usize]
    }

    /// Propensity at period `k` given the bitmask of `X_{<k}`.
    pub fn propensity(&self, k: u32, history: u32) -> &S {
        &self.propensity[k as usize - 1][history as usize]
    }

    /// The same outcome process with treatment fixed by a deterministic regime.
    pub fn intervened(&self, regime: Regime) -> Result<Self, DgpError> {
        regime.validate(self.horizon)?;
        let Some(_) = regime.treatment_at(1) else {
            return Err(ScenarioError::RegimeOutOfRange { regime, horizon: self.horizon }.into());
        };
        let mut out = self.clone();
        for (k, row) in (1..).zip(out.propensity.iter_mut()) {
            let value = if regime.treatment_at(k).unwrap_or(false) { S::one() } else { S::zero() };
            row.iter_mut().for_each(|p| *p = value.clone());
        }
        Ok(out)
    }

    fn to_f64_table(&self) -> DgpTableOf<f64> {
        let conv = |t: &Vec<Vec<S>>| t.iter().map(|r| r.iter().map(Scalar::to_f64).collect()).collect();
        DgpTableOf {
            scenario: self.scenario,
            horizon: self.horizon,
            hazard: conv(&self.hazard),
            propensity: conv(&self.propensity),
        }
    }
}

impl DgpTableOf<f64> {
    pub fn from_json(text: &str) -> Result<Self, DgpError> {
        let dgp: Self = serde_json::from_str(text).map_err(|e| DgpError::Format(e.to_string()))?;
        dgp.validate()?;
        Ok(dgp)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tables serialize")
    }
}

// Linear-probability coefficients in thousandths: intercept, then X_1, X_2, ...
const HAZARD_A: [&[i64]; 3] = [&[50], &[200, -100], &[300, -100, -100]];
const HAZARD_B: [&[i64]; 3] = [&[200, -100], &[200, -50, -25], &[300, -100, -50, -25]];
const PROPENSITY: [&[i64]; 3] = [&[300], &[200, 700], &[200, 0, 700]];

fn linear<S: Scalar>(coefficients: &[i64], history: &[bool]) -> S {
    debug_assert_eq!(coefficients.len(), history.len() + 1);
    let value =
        coefficients[0] + coefficients[1..].iter().zip(history).map(|(c, x)| if *x { *c } else { 0 }).sum::<i64>();
    S::from_ratio(value, 1000)
}

/// The three-period simulation process of a scenario.
pub fn default_dgp<S: Scalar>(kind: ScenarioKind) -> DgpTableOf<S> {
    let hazard = match kind {
        ScenarioKind::NoWithinPeriodTreatmentEffect => HAZARD_A,
        ScenarioKind::NoWithinPeriodOutcomeEffect => HAZARD_B,
    };
    DgpTableOf::from_fn(kind, 3, |k, h| linear(hazard[k as usize - 1], h), |k, h| linear(PROPENSITY[k as usize - 1], h))
        .expect("built-in tables are valid probabilities")
}

fn sample_patient(dgp: &DgpTableOf<f64>, seed: u64, index: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index));
    let horizon = dgp.horizon as usize;
    let mut x = Vec::with_capacity(horizon);
    let mut y = Vec::with_capacity(horizon);
    let mut history = 0u32;
    let mut dead = false;
    for k in 1..=dgp.horizon {
        if dead {
            x.push(Treatment::Unclear);
            y.push(true);
            continue;
        }
        let prior = history;
        match dgp.scenario {
            ScenarioKind::NoWithinPeriodTreatmentEffect => {
                dead = rng.random::<f64>() < *dgp.hazard(k, prior);
                if dead {
                    x.push(Treatment::Unclear);
                } else {
                    let treated = rng.random::<f64>() < *dgp.propensity(k, prior);
                    history |= u32::from(treated) << (k - 1);
                    x.push(Treatment::from_flag(treated));
                }
            }
            ScenarioKind::NoWithinPeriodOutcomeEffect => {
                let treated = rng.random::<f64>() < *dgp.propensity(k, prior);
                history |= u32::from(treated) << (k - 1);
                x.push(Treatment::from_flag(treated));
                dead = rng.random::<f64>() < *dgp.hazard(k, history);
            }
        }
        y.push(dead);
    }
    Trajectory { x, y, stratum: None }
}

/// Draws `n` independent patients.
///
/// Patient `i` uses its own generator seeded from `(seed, i)` and consumes
/// one uniform per draw: vital status then treatment in scenario A,
/// treatment then vital status in scenario B. The result does not depend on
/// how the work is scheduled across threads.
pub fn sample_cohort<S: Scalar>(dgp: &DgpTableOf<S>, n: usize, seed: u64) -> Cohort {
    let table = dgp.to_f64_table();
    let trajectories = (0..n as u64).into_par_iter().map(|i| sample_patient(&table, seed, i)).collect();
    Cohort { scenario: dgp.scenario, horizon: dgp.horizon, seed: Some(seed), trajectories }
}

/// Every trajectory with positive probability, with that probability.
pub fn enumerate_distribution<S: Scalar>(dgp: &DgpTableOf<S>) -> Result<Vec<(Trajectory, S)>, DgpError> {
    fn branch<S: Scalar>(
        dgp: &DgpTableOf<S>,
        k: u32,
        x: &mut Vec<Treatment>,
        y: &mut Vec<bool>,
        history: u32,
        mass: S,
        out: &mut Vec<(Trajectory, S)>,
    ) -> Result<(), DgpError> {
        if mass.is_zero() {
            return Ok(());
        }
        if k > dgp.horizon {
            if out.len() >= MAX_SUPPORT {
                return Err(DgpError::SupportTooLarge);
            }
            out.push((Trajectory { x: x.clone(), y: y.clone(), stratum: None }, mass));
            return Ok(());
        }
        let died = |x: &mut Vec<Treatment>, y: &mut Vec<bool>, mass: S, out: &mut Vec<_>| {
            let (xl, yl) = (x.len(), y.len());
            for _ in k..=dgp.horizon {
                x.push(Treatment::Unclear);
                y.push(true);
            }
            let res = branch(dgp, dgp.horizon + 1, x, y, history, mass, out);
            x.truncate(xl);
            y.truncate(yl);
            res
        };
        match dgp.scenario {
            ScenarioKind::NoWithinPeriodTreatmentEffect => {
                let h = dgp.hazard(k, history).clone();
                died(x, y, mass.clone() * h.clone(), out)?;
                let p = dgp.propensity(k, history).clone();
                let alive = mass * (S::one() - h);
                for treated in [false, true] {
                    let pt = if treated { p.clone() } else { S::one() - p.clone() };
                    x.push(Treatment::from_flag(treated));
                    y.push(false);
                    let next = history | (u32::from(treated) << (k - 1));
                    branch(dgp, k + 1, x, y, next, alive.clone() * pt, out)?;
                    x.pop();
                    y.pop();
                }
            }
            ScenarioKind::NoWithinPeriodOutcomeEffect => {
                let p = dgp.propensity(k, history).clone();
                for treated in [false, true] {
                    let pt = if treated { p.clone() } else { S::one() - p.clone() };
                    let next = history | (u32::from(treated) << (k - 1));
                    let h = dgp.hazard(k, next).clone();
                    let m = mass.clone() * pt;
                    // death in k with x_k observed
                    if !(m.clone() * h.clone()).is_zero() {
                        x.push(Treatment::from_flag(treated));
                        y.push(true);
                        let (xl, yl) = (x.len(), y.len());
                        for _ in k + 1..=dgp.horizon {
                            x.push(Treatment::Unclear);
                            y.push(true);
                        }
                        branch(dgp, dgp.horizon + 1, x, y, next, m.clone() * h.clone(), out)?;
                        x.truncate(xl - 1);
                        y.truncate(yl - 1);
                    }
                    x.push(Treatment::from_flag(treated));
                    y.push(false);
                    branch(dgp, k + 1, x, y, next, m * (S::one() - h), out)?;
                    x.pop();
                    y.pop();
                }
            }
        }
        Ok(())
    }

    let mut out = Vec::new();
    branch(dgp, 1, &mut Vec::new(), &mut Vec::new(), 0, S::one(), &mut out)?;
    Ok(out)
}

fn regime_history(regime: Regime, len: u32) -> u32 {
    (1..=len).fold(0, |acc, t| if regime.treatment_at(t).unwrap_or(false) { acc | (1 << (t - 1)) } else { acc })
}

/// Survival curve `S(1..=T)` under a regime, from the hazard tables.
///
/// A grace regime averages the curves of its initiation-day components.
pub fn counterfactual_survival<S: Scalar>(dgp: &DgpTableOf<S>, regime: Regime) -> Result<Vec<S>, DgpError> {
    regime.validate(dgp.horizon)?;
    let components = regime.components();
    let weight = S::from_ratio(1, components.len() as i64);
    let mut total = vec![S::zero(); dgp.horizon as usize];
    for component in components {
        let mut survival = S::one();
        for k in 1..=dgp.horizon {
            let history = regime_history(component, hazard_history_len(dgp.scenario, k));
            survival = survival * (S::one() - dgp.hazard(k, history).clone());
            let slot = &mut total[k as usize - 1];
            *slot = slot.clone() + weight.clone() * survival.clone();
        }
    }
    Ok(total)
}

/// End-of-study survival difference between two regimes.
pub fn true_ate<S: Scalar>(dgp: &DgpTableOf<S>, treat: Regime, control: Regime) -> Result<S, DgpError> {
    let t = counterfactual_survival(dgp, treat)?;
    let c = counterfactual_survival(dgp, control)?;
    Ok(t.last().expect("horizon >= 1").clone() - c.last().expect("horizon >= 1").clone())
}

/// Collapses identical trajectories, summing their masses.
pub fn aggregate<S: Scalar>(rows: impl IntoIterator<Item = (Trajectory, S)>) -> Vec<(Trajectory, S)> {
    let mut map: BTreeMap<Trajectory, S> = BTreeMap::new();
    for (traj, mass) in rows {
        let slot = map.entry(traj).or_insert_with(S::zero);
        *slot = slot.clone() + mass;
    }
    map.into_iter().collect()
}

/// Total probability mass of an enumerated distribution.
pub fn total_mass<S: Scalar>(rows: &[(Trajectory, S)]) -> S {
    sum(rows.iter().map(|(_, m)| m.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;
    use ScenarioKind::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn table_entries() {
        let a = default_dgp::<Rational>(NoWithinPeriodTreatmentEffect);
        assert_eq!(*a.hazard(2, 0b1), q(1, 10));
        assert_eq!(*a.propensity(2, 0b1), q(9, 10));
        assert_eq!(*a.hazard(1, 0), q(5, 100));
        let b = default_dgp::<Rational>(NoWithinPeriodOutcomeEffect);
        assert_eq!(*b.hazard(3, 0b111), q(125, 1000));
        assert_eq!(*b.propensity(3, 0b01), q(2, 10));
        assert_eq!(*b.propensity(3, 0b10), q(9, 10));
    }

    #[test]
    fn invalid_probability_rejected() {
        let err = DgpTableOf::<f64>::from_fn(NoWithinPeriodOutcomeEffect, 1, |_, _| 1.5, |_, _| 0.5).unwrap_err();
        assert!(matches!(err, DgpError::InvalidProbability { table: "hazard", .. }));
        assert!(matches!(
            DgpTableOf::<f64>::from_fn(NoWithinPeriodOutcomeEffect, 0, |_, _| 0.5, |_, _| 0.5),
            Err(DgpError::UnsupportedHorizon(0))
        ));
    }

    #[test]
    fn single_period_supports() {
        let b = DgpTableOf::<Rational>::from_fn(
            NoWithinPeriodOutcomeEffect,
            1,
            |_, h| linear(HAZARD_B[0], h),
            |_, _| q(3, 10),
        )
        .unwrap();
        let support = enumerate_distribution(&b).unwrap();
        assert_eq!(support.len(), 4);
        let p = support
            .iter()
            .find(|(t, _)| t.x == [Treatment::Treated] && t.y == [false])
            .map(|(_, p)| p.clone())
            .unwrap();
        assert_eq!(p, q(27, 100));

        let a = DgpTableOf::<Rational>::from_fn(NoWithinPeriodTreatmentEffect, 1, |_, _| q(5, 100), |_, _| q(3, 10))
            .unwrap();
        let support = enumerate_distribution(&a).unwrap();
        assert_eq!(support.len(), 3);
        let dead = support.iter().find(|(t, _)| t.y == [true]).unwrap();
        assert_eq!(dead.0.x, [Treatment::Unclear]);
        assert_eq!(dead.1, q(5, 100));
    }

    #[test]
    fn enumeration_sums_to_one() {
        for kind in ScenarioKind::ALL {
            let support = enumerate_distribution(&default_dgp::<Rational>(kind)).unwrap();
            assert_eq!(total_mass(&support), q(1, 1));
            for (traj, _) in &support {
                traj.validate(kind).unwrap();
            }
        }
    }

    #[test]
    fn survival_curves() {
        let a = default_dgp::<Rational>(NoWithinPeriodTreatmentEffect);
        assert_eq!(counterfactual_survival(&a, Regime::Never).unwrap(), vec![q(95, 100), q(76, 100), q(532, 1000)]);
        assert_eq!(
            counterfactual_survival(&a, Regime::AlwaysFromStart).unwrap(),
            vec![q(95, 100), q(855, 1000), q(7695, 10000)]
        );
        let b = default_dgp::<Rational>(NoWithinPeriodOutcomeEffect);
        assert_eq!(counterfactual_survival(&b, Regime::Never).unwrap(), vec![q(8, 10), q(64, 100), q(448, 1000)]);
    }

    #[test]
    fn true_effects() {
        let a = default_dgp::<Rational>(NoWithinPeriodTreatmentEffect);
        assert_eq!(true_ate(&a, Regime::AlwaysFromStart, Regime::Never).unwrap(), q(2375, 10000));
        let b = default_dgp::<Rational>(NoWithinPeriodOutcomeEffect);
        assert_eq!(true_ate(&b, Regime::AlwaysFromStart, Regime::Never).unwrap(), q(2410625, 10000000));
        assert!(matches!(
            true_ate(&b, Regime::InitiateAt(4), Regime::Never),
            Err(DgpError::Scenario(ScenarioError::RegimeOutOfRange { .. }))
        ));
    }

    #[test]
    fn null_effect_has_zero_ate() {
        let null =
            DgpTableOf::<Rational>::from_fn(NoWithinPeriodOutcomeEffect, 3, |_, _| q(1, 7), |_, _| q(2, 5)).unwrap();
        assert_eq!(true_ate(&null, Regime::AlwaysFromStart, Regime::Never).unwrap(), q(0, 1));
    }

    #[test]
    fn grace_of_one_is_initiation_at_start() {
        for kind in ScenarioKind::ALL {
            let dgp = default_dgp::<Rational>(kind);
            let always = counterfactual_survival(&dgp, Regime::AlwaysFromStart).unwrap();
            assert_eq!(counterfactual_survival(&dgp, Regime::UniformGrace(1)).unwrap(), always);
            assert_eq!(counterfactual_survival(&dgp, Regime::InitiateAt(1)).unwrap(), always);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_valid() {
        for kind in ScenarioKind::ALL {
            let dgp = default_dgp::<f64>(kind);
            let a = sample_cohort(&dgp, 500, 42);
            assert_eq!(a, sample_cohort(&dgp, 500, 42));
            assert_ne!(a, sample_cohort(&dgp, 500, 43));
            assert_eq!(a.n(), 500);
            for t in &a.trajectories {
                t.validate(kind).unwrap();
            }
        }
    }

    #[test]
    fn trajectory_invariants() {
        let bad = Trajectory { x: vec![Treatment::Unclear, Treatment::Treated], y: vec![true, false], stratum: None };
        assert!(bad.validate(NoWithinPeriodTreatmentEffect).is_err());
        let b_death = Trajectory { x: vec![Treatment::Treated], y: vec![true], stratum: None };
        assert!(b_death.validate(NoWithinPeriodOutcomeEffect).is_ok());
        assert!(b_death.validate(NoWithinPeriodTreatmentEffect).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let cohort = sample_cohort(&default_dgp::<f64>(NoWithinPeriodTreatmentEffect), 20, 3);
        let mut buf = Vec::new();
        cohort.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,period,x,y\n0,1,"));
        assert!(!text.contains('\r'));
        let back = Cohort::read_csv(NoWithinPeriodTreatmentEffect, buf.as_slice()).unwrap();
        assert_eq!(back.trajectories, cohort.trajectories);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let text = "id,period,x,y\n0,1,2,0\n";
        assert!(Cohort::read_csv(NoWithinPeriodOutcomeEffect, text.as_bytes()).is_err());
        let text = "id,period,x,y\n0,2,1,0\n";
        assert!(Cohort::read_csv(NoWithinPeriodOutcomeEffect, text.as_bytes()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let dgp = default_dgp::<f64>(NoWithinPeriodOutcomeEffect);
        assert_eq!(DgpTableOf::from_json(&dgp.to_json()).unwrap(), dgp);
        let mut broken = dgp.clone();
        broken.hazard[1].pop();
        assert!(DgpTableOf::from_json(&broken.to_json()).is_err());
    }
}
