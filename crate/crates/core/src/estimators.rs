//! Nonparametric estimators of the survival contrast.
//!
//! Both estimators work on a [`WeightedCohortOf`]: trajectories with a mass.
//! A sampled cohort has unit masses; an enumerated distribution has exact
//! probabilities, which turns every estimator into its large-sample limit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dgp::{
    enumerate_distribution, hazard_history_len, history_bits, Cohort, DgpError, DgpTableOf, Trajectory, Treatment,
};
use crate::scalar::{sum, Scalar};
use crate::scenarios::{Regime, ScenarioError, ScenarioKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("empty {table:?} stratum at period {period} (history {history:#b}, stratum {stratum:?})")]
    EmptyStratum { table: StratumKind, period: u32, history: u32, stratum: Option<u32> },
    #[error("zero estimated probability of the observed treatment at period {period} (history {history:#b})")]
    ZeroPropensity { period: u32, history: u32 },
    #[error("no at-risk clones in arm {arm} at period {period}")]
    NoAtRiskRows { arm: Regime, period: u32 },
    #[error("regime {0} is not supported by cloning-censoring-weighting")]
    UnsupportedRegime(Regime),
    #[error("cohort is empty")]
    EmptyCohort,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Dgp(#[from] DgpError),
}

/// Trajectories with nonnegative masses.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCohortOf<S> {
    pub scenario: ScenarioKind,
    pub horizon: u32,
    pub rows: Vec<(Trajectory, S)>,
}

impl<S: Scalar> WeightedCohortOf<S> {
    /// Unit mass per patient; row index is the patient id.
    pub fn from_cohort(cohort: &Cohort) -> Self {
        WeightedCohortOf {
            scenario: cohort.scenario,
            horizon: cohort.horizon,
            rows: cohort.trajectories.iter().map(|t| (t.clone(), S::one())).collect(),
        }
    }

    /// Population-level cohort from an exact distribution.
    pub fn from_distribution(dgp: &DgpTableOf<S>) -> Result<Self, DgpError> {
        Ok(WeightedCohortOf { scenario: dgp.scenario, horizon: dgp.horizon, rows: enumerate_distribution(dgp)? })
    }

    pub fn total_mass(&self) -> S {
        sum(self.rows.iter().map(|(_, m)| m.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StratumKind {
    /// Death in `k` among those alive before `k`.
    Hazard,
    /// Treatment in `k` among those eligible for it under the data-generating order.
    Propensity,
    /// Treatment in `k` among those alive at the end of `k`.
    SurvivorPropensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StratumKey {
    pub kind: StratumKind,
    pub period: u32,
    pub history: u32,
    pub stratum: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counts<S> {
    pub numerator: S,
    pub denominator: S,
}

impl<S: Scalar> Counts<S> {
    /// `None` for an empty stratum.
    pub fn proportion(&self) -> Option<S> {
        if self.denominator.is_zero() {
            None
        } else {
            Some(self.numerator.clone() / self.denominator.clone())
        }
    }
}

/// Observed proportions for every hazard and propensity stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumTableOf<S> {
    pub scenario: ScenarioKind,
    pub horizon: u32,
    pub cells: BTreeMap<StratumKey, Counts<S>>,
    /// Mass of each baseline stratum.
    pub strata: BTreeMap<Option<u32>, S>,
}

impl<S: Scalar> StratumTableOf<S> {
    pub fn counts(&self, kind: StratumKind, period: u32, history: u32, stratum: Option<u32>) -> Option<&Counts<S>> {
        self.cells.get(&StratumKey { kind, period, history, stratum })
    }

    /// Observed proportion, or `EmptyStratum` when nothing was observed there.
    pub fn proportion(
        &self,
        kind: StratumKind,
        period: u32,
        history: u32,
        stratum: Option<u32>,
    ) -> Result<S, EstimationError> {
        self.counts(kind, period, history, stratum).and_then(Counts::proportion).ok_or(EstimationError::EmptyStratum {
            table: kind,
            period,
            history,
            stratum,
        })
    }

    fn add(&mut self, kind: StratumKind, period: u32, history: u32, stratum: Option<u32>, mass: &S, hit: bool) {
        let cell = self
            .cells
            .entry(StratumKey { kind, period, history, stratum })
            .or_insert_with(|| Counts { numerator: S::zero(), denominator: S::zero() });
        cell.denominator = cell.denominator.clone() + mass.clone();
        if hit {
            cell.numerator = cell.numerator.clone() + mass.clone();
        }
    }
}

/// Exact (weighted) counts for every stratum the estimators consult.
pub fn fit_strata<S: Scalar>(cohort: &WeightedCohortOf<S>) -> StratumTableOf<S> {
    let kind = cohort.scenario;
    let mut table =
        StratumTableOf { scenario: kind, horizon: cohort.horizon, cells: BTreeMap::new(), strata: BTreeMap::new() };
    for (traj, mass) in &cohort.rows {
        let c = traj.stratum;
        let slot = table.strata.entry(c).or_insert_with(S::zero);
        *slot = slot.clone() + mass.clone();
        for k in 1..=cohort.horizon {
            if !traj.alive_before(k as usize) {
                break;
            }
            let idx = k as usize - 1;
            let died = traj.y[idx];
            let treated = traj.x[idx] == Treatment::Treated;
            let prior = history_bits(&traj.x, idx).expect("alive patients have defined treatment history");
            let hazard_history = history_bits(&traj.x, hazard_history_len(kind, k) as usize)
                .expect("conditioning treatments are defined while alive");
            table.add(StratumKind::Hazard, k, hazard_history, c, mass, died);
            let eligible = match kind {
                ScenarioKind::NoWithinPeriodTreatmentEffect => !died,
                ScenarioKind::NoWithinPeriodOutcomeEffect => true,
            };
            if eligible {
                table.add(StratumKind::Propensity, k, prior, c, mass, treated);
            }
            if !died {
                table.add(StratumKind::SurvivorPropensity, k, prior, c, mass, treated);
            }
        }
    }
    table
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Serialize"))]
pub struct WeightSummary<S> {
    pub min: S,
    pub max: S,
    /// Mass-weighted mean over rows entering the hazard estimates.
    pub mean: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Serialize"))]
pub struct Diagnostics<S> {
    /// Per-period (weighted) at-risk mass in the treated arm.
    pub at_risk_treat: Vec<S>,
    pub at_risk_control: Vec<S>,
    pub weights: Option<WeightSummary<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "S: Serialize"))]
pub struct AteEstimateOf<S> {
    pub survival_treat: Vec<S>,
    pub survival_control: Vec<S>,
    /// `survival_treat[T] - survival_control[T]`.
    pub ate: S,
    pub diagnostics: Diagnostics<S>,
}

impl<S: Scalar> AteEstimateOf<S> {
    fn new(survival_treat: Vec<S>, survival_control: Vec<S>, diagnostics: Diagnostics<S>) -> Self {
        let ate = survival_treat.last().expect("horizon >= 1").clone()
            - survival_control.last().expect("horizon >= 1").clone();
        AteEstimateOf { survival_treat, survival_control, ate, diagnostics }
    }

    pub fn to_f64(&self) -> AteEstimateOf<f64> {
        let v = |xs: &Vec<S>| xs.iter().map(Scalar::to_f64).collect();
        AteEstimateOf {
            survival_treat: v(&self.survival_treat),
            survival_control: v(&self.survival_control),
            ate: self.ate.to_f64(),
            diagnostics: Diagnostics {
                at_risk_treat: v(&self.diagnostics.at_risk_treat),
                at_risk_control: v(&self.diagnostics.at_risk_control),
                weights: self.diagnostics.weights.as_ref().map(|w| WeightSummary {
                    min: w.min.to_f64(),
                    max: w.max.to_f64(),
                    mean: w.mean.to_f64(),
                }),
            },
        }
    }
}

fn regime_bits(regime: Regime, len: u32) -> u32 {
    (1..=len).fold(0, |acc, t| if regime.treatment_at(t).unwrap_or(false) { acc | (1 << (t - 1)) } else { acc })
}

/// Standardized plug-in survival curve and per-period at-risk mass.
fn plug_in_curve<S: Scalar>(table: &StratumTableOf<S>, regime: Regime) -> Result<(Vec<S>, Vec<S>), EstimationError> {
    regime.validate(table.horizon)?;
    let horizon = table.horizon as usize;
    let total = sum(table.strata.values().cloned());
    let components = regime.components();
    let share = S::from_ratio(1, components.len() as i64);
    let mut curve = vec![S::zero(); horizon];
    let mut at_risk = vec![S::zero(); horizon];
    for (stratum, stratum_mass) in &table.strata {
        let p_c = stratum_mass.clone() / total.clone();
        for component in &components {
            let mut survival = S::one();
            for k in 1..=table.horizon {
                let history = regime_bits(*component, hazard_history_len(table.scenario, k));
                let hazard = table.proportion(StratumKind::Hazard, k, history, *stratum)?;
                survival = survival * (S::one() - hazard);
                let i = k as usize - 1;
                curve[i] = curve[i].clone() + share.clone() * p_c.clone() * survival.clone();
                let denom = table
                    .counts(StratumKind::Hazard, k, history, *stratum)
                    .map_or_else(S::zero, |c| c.denominator.clone());
                at_risk[i] = at_risk[i].clone() + share.clone() * denom;
            }
        }
    }
    Ok((curve, at_risk))
}

/// Plug-in estimator of the identified estimand: each hazard replaced by its
/// observed proportion, standardized over baseline strata, grace regimes
/// averaged over initiation days.
pub fn npmle_ate<S: Scalar>(
    cohort: &WeightedCohortOf<S>,
    treat: Regime,
    control: Regime,
) -> Result<AteEstimateOf<S>, EstimationError> {
    if cohort.rows.is_empty() {
        return Err(EstimationError::EmptyCohort);
    }
    let table = fit_strata(cohort);
    let (survival_treat, at_risk_treat) = plug_in_curve(&table, treat)?;
    let (survival_control, at_risk_control) = plug_in_curve(&table, control)?;
    Ok(AteEstimateOf::new(
        survival_treat,
        survival_control,
        Diagnostics { at_risk_treat, at_risk_control, weights: None },
    ))
}

/// When inverse-probability weights are attached to a clone's period row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum WeightConvention {
    /// Risk set `R_{t-1} = 0`; the period-`t` row carries `W_{t-1}`.
    #[default]
    #[serde(rename = "lagged")]
    LaggedWeights,
    /// Risk set `R_t = 0`; the period-`t` row carries `W_t`. A death-period
    /// factor uses the propensity estimated among survivors; an unclear
    /// death-period treatment contributes no factor.
    #[serde(rename = "current")]
    CurrentPeriodWeights,
}

impl std::str::FromStr for WeightConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lagged" => Ok(WeightConvention::LaggedWeights),
            "current" => Ok(WeightConvention::CurrentPeriodWeights),
            other => Err(format!("unknown weight convention `{other}` (expected lagged or current)")),
        }
    }
}

/// One clone in one period.
#[derive(Debug, Clone, PartialEq)]
pub struct CloneRow<S> {
    pub id: usize,
    pub arm: Regime,
    pub period: u32,
    /// Alive before the period and uncensored through the previous one.
    pub at_risk: bool,
    pub event: bool,
    /// First period whose observed treatment contradicts the arm.
    pub censored_now: bool,
    /// Weight used in the hazard estimate; zero outside the risk set.
    pub weight: S,
    /// Mass of the underlying patient.
    pub mass: S,
}

impl<S> CloneRow<S> {
    pub fn in_risk_set(&self, convention: WeightConvention) -> bool {
        match convention {
            WeightConvention::LaggedWeights => self.at_risk,
            WeightConvention::CurrentPeriodWeights => self.at_risk && !self.censored_now,
        }
    }
}

fn compatible(observed: Treatment, arm: Regime, t: u32) -> bool {
    match observed.flag() {
        None => true,
        Some(treated) => arm.treatment_at(t) == Some(treated),
    }
}

/// Inverse of the survivor-estimated probability of the observed treatment.
fn weight_factor<S: Scalar>(table: &StratumTableOf<S>, traj: &Trajectory, t: u32) -> Result<S, EstimationError> {
    let idx = t as usize - 1;
    let Some(treated) = traj.x[idx].flag() else {
        return Ok(S::one());
    };
    let history = history_bits(&traj.x, idx).expect("history of an at-risk clone is defined");
    let p1 = table.proportion(StratumKind::SurvivorPropensity, t, history, traj.stratum)?;
    let p = if treated { p1 } else { S::one() - p1 };
    if p.is_zero() {
        return Err(EstimationError::ZeroPropensity { period: t, history });
    }
    Ok(S::one() / p)
}

/// Clones every patient into `arm`, censors at the first incompatible
/// treatment and attaches weights under `convention`.
///
/// Rows are emitted for every period the patient is alive at the start of;
/// rows after censoring have `at_risk == false`.
pub fn clone_rows<S: Scalar>(
    cohort: &WeightedCohortOf<S>,
    table: &StratumTableOf<S>,
    arm: Regime,
    convention: WeightConvention,
) -> Result<Vec<CloneRow<S>>, EstimationError> {
    arm.validate(cohort.horizon)?;
    if !arm.is_deterministic() {
        return Err(EstimationError::UnsupportedRegime(arm));
    }
    let mut rows = Vec::new();
    for (id, (traj, mass)) in cohort.rows.iter().enumerate() {
        let mut weight = S::one();
        let mut uncensored = true;
        for t in 1..=cohort.horizon {
            if !traj.alive_before(t as usize) {
                break;
            }
            let idx = t as usize - 1;
            let event = traj.y[idx];
            let censored_now = uncensored && !compatible(traj.x[idx], arm, t);
            let at_risk = uncensored;
            let mut row =
                CloneRow { id, arm, period: t, at_risk, event, censored_now, weight: S::zero(), mass: mass.clone() };
            if at_risk && !censored_now {
                let needs_factor = !event || convention == WeightConvention::CurrentPeriodWeights;
                let next = if needs_factor { weight.clone() * weight_factor(table, traj, t)? } else { weight.clone() };
                row.weight = match convention {
                    WeightConvention::LaggedWeights => weight.clone(),
                    WeightConvention::CurrentPeriodWeights => next.clone(),
                };
                weight = next;
            } else if at_risk && convention == WeightConvention::LaggedWeights {
                row.weight = weight.clone();
            }
            if censored_now {
                uncensored = false;
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

struct ArmFit<S> {
    survival: Vec<S>,
    at_risk: Vec<S>,
    weights: Vec<(S, S)>,
}

fn fit_arm<S: Scalar>(
    cohort: &WeightedCohortOf<S>,
    table: &StratumTableOf<S>,
    arm: Regime,
    convention: WeightConvention,
) -> Result<ArmFit<S>, EstimationError> {
    let horizon = cohort.horizon as usize;
    let mut events = vec![S::zero(); horizon];
    let mut at_risk = vec![S::zero(); horizon];
    let mut weights = Vec::new();
    for row in clone_rows(cohort, table, arm, convention)? {
        if !row.in_risk_set(convention) {
            continue;
        }
        let i = row.period as usize - 1;
        let w = row.weight.clone() * row.mass.clone();
        at_risk[i] = at_risk[i].clone() + w.clone();
        if row.event {
            events[i] = events[i].clone() + w;
        }
        weights.push((row.weight, row.mass));
    }
    let mut survival = Vec::with_capacity(horizon);
    let mut s = S::one();
    for (i, (e, r)) in events.iter().zip(&at_risk).enumerate() {
        if r.is_zero() {
            return Err(EstimationError::NoAtRiskRows { arm, period: i as u32 + 1 });
        }
        s = s * (S::one() - e.clone() / r.clone());
        survival.push(s.clone());
    }
    Ok(ArmFit { survival, at_risk, weights })
}

fn summarize<S: Scalar>(weights: &[(S, S)]) -> Option<WeightSummary<S>> {
    let (first, _) = weights.first()?;
    let mut min = first.clone();
    let mut max = first.clone();
    let mut total = S::zero();
    let mut mass = S::zero();
    for (w, m) in weights {
        if *w < min {
            min = w.clone();
        }
        if *w > max {
            max = w.clone();
        }
        total = total + w.clone() * m.clone();
        mass = mass + m.clone();
    }
    let mean = if mass.is_zero() { S::zero() } else { total / mass };
    Some(WeightSummary { min, max, mean })
}

/// Cloning-censoring-weighting with saturated (per arm and period) hazards.
///
/// Propensities come from the original, uncloned cohort. Hazards are exact
/// weighted proportions within each arm and period, which is what a
/// saturated weighted logistic fit returns.
pub fn ccw_ate<S: Scalar>(
    cohort: &WeightedCohortOf<S>,
    treat: Regime,
    control: Regime,
    convention: WeightConvention,
) -> Result<AteEstimateOf<S>, EstimationError> {
    if cohort.rows.is_empty() {
        return Err(EstimationError::EmptyCohort);
    }
    let table = fit_strata(cohort);
    let treated = fit_arm(cohort, &table, treat, convention)?;
    let controls = fit_arm(cohort, &table, control, convention)?;
    let mut all_weights = treated.weights;
    all_weights.extend(controls.weights);
    Ok(AteEstimateOf::new(
        treated.survival,
        controls.survival,
        Diagnostics {
            at_risk_treat: treated.at_risk,
            at_risk_control: controls.at_risk,
            weights: summarize(&all_weights),
        },
    ))
}

/// Large-sample limit of [`ccw_ate`]: the same pipeline run on the exact
/// distribution of the process.
pub fn ccw_asymptotic<S: Scalar>(
    dgp: &DgpTableOf<S>,
    treat: Regime,
    control: Regime,
    convention: WeightConvention,
) -> Result<S, EstimationError> {
    let population = WeightedCohortOf::from_distribution(dgp)?;
    Ok(ccw_ate(&population, treat, control, convention)?.ate)
}

/// Writes clone rows as `id,arm,period,at_risk,event,censored_now,weight`.
pub fn write_clone_rows_csv<S: Scalar, W: std::io::Write>(rows: &[CloneRow<S>], writer: W) -> std::io::Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    out.write_record(["id", "arm", "period", "at_risk", "event", "censored_now", "weight"])?;
    for r in rows {
        out.write_record([
            r.id.to_string(),
            r.arm.to_string(),
            r.period.to_string(),
            u8::from(r.at_risk).to_string(),
            u8::from(r.event).to_string(),
            u8::from(r.censored_now).to_string(),
            r.weight.to_f64().to_string(),
        ])?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::default_dgp;
    use crate::Rational;
    use Treatment::*;

    fn traj(x: &[Treatment], y: &[bool]) -> Trajectory {
        Trajectory { x: x.to_vec(), y: y.to_vec(), stratum: None }
    }

    /// {(1,0), (1,1), (0,0), (0,0)} in scenario B with one period.
    fn four_patients() -> WeightedCohortOf<Rational> {
        let cohort = Cohort::new(
            ScenarioKind::NoWithinPeriodOutcomeEffect,
            vec![
                traj(&[Treated], &[false]),
                traj(&[Treated], &[true]),
                traj(&[Untreated], &[false]),
                traj(&[Untreated], &[false]),
            ],
        )
        .unwrap();
        WeightedCohortOf::from_cohort(&cohort)
    }

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn hand_counted_strata() {
        let table = fit_strata(&four_patients());
        assert_eq!(table.proportion(StratumKind::Hazard, 1, 1, None).unwrap(), q(1, 2));
        assert_eq!(table.proportion(StratumKind::Hazard, 1, 0, None).unwrap(), q(0, 1));
        assert_eq!(table.proportion(StratumKind::Propensity, 1, 0, None).unwrap(), q(1, 2));
        assert_eq!(table.proportion(StratumKind::SurvivorPropensity, 1, 0, None).unwrap(), q(1, 3));
    }

    #[test]
    fn empty_stratum_is_flagged() {
        let cohort = Cohort::new(
            ScenarioKind::NoWithinPeriodOutcomeEffect,
            vec![traj(&[Untreated], &[false]), traj(&[Untreated], &[true])],
        )
        .unwrap();
        let table = fit_strata(&WeightedCohortOf::<f64>::from_cohort(&cohort));
        assert!(table.counts(StratumKind::Hazard, 1, 1, None).is_none());
        assert!(matches!(
            table.proportion(StratumKind::Hazard, 1, 1, None),
            Err(EstimationError::EmptyStratum { period: 1, history: 1, .. })
        ));
    }

    #[test]
    fn npmle_hand_computation() {
        let est = npmle_ate(&four_patients(), Regime::AlwaysFromStart, Regime::Never).unwrap();
        assert_eq!(est.ate, q(-1, 2));
        assert_eq!(est.survival_treat, vec![q(1, 2)]);
    }

    #[test]
    fn npmle_empty_regime_stratum() {
        let cohort = Cohort::new(
            ScenarioKind::NoWithinPeriodTreatmentEffect,
            vec![
                traj(&[Untreated, Untreated, Untreated], &[false, false, false]),
                traj(&[Treated, Untreated, Untreated], &[false, false, false]),
            ],
        )
        .unwrap();
        let err = npmle_ate(&WeightedCohortOf::<f64>::from_cohort(&cohort), Regime::AlwaysFromStart, Regime::Never)
            .unwrap_err();
        assert!(matches!(err, EstimationError::EmptyStratum { table: StratumKind::Hazard, period: 3, .. }));
    }

    #[test]
    fn ccw_single_period_b() {
        // Current-period risk set keeps only compatible clones.
        let cur =
            ccw_ate(&four_patients(), Regime::AlwaysFromStart, Regime::Never, WeightConvention::CurrentPeriodWeights)
                .unwrap();
        assert_eq!(cur.survival_treat, vec![q(1, 2)]);
        assert_eq!(cur.survival_control, vec![q(1, 1)]);
        assert_eq!(cur.ate, q(-1, 2));
        // Lagged risk set (R_0 = 0) holds every clone at period 1 in both arms.
        let lag =
            ccw_ate(&four_patients(), Regime::AlwaysFromStart, Regime::Never, WeightConvention::LaggedWeights).unwrap();
        assert_eq!(lag.survival_treat, vec![q(3, 4)]);
        assert_eq!(lag.survival_control, vec![q(3, 4)]);
        assert_eq!(lag.ate, q(0, 1));
    }

    #[test]
    fn unclear_death_is_compatible_with_both_arms() {
        let cohort = Cohort::new(
            ScenarioKind::NoWithinPeriodTreatmentEffect,
            vec![traj(&[Unclear, Unclear], &[true, true]), traj(&[Treated, Treated], &[false, false])],
        )
        .unwrap();
        let wc = WeightedCohortOf::<Rational>::from_cohort(&cohort);
        let table = fit_strata(&wc);
        for arm in [Regime::Never, Regime::AlwaysFromStart] {
            let rows = clone_rows(&wc, &table, arm, WeightConvention::LaggedWeights).unwrap();
            let dead = rows.iter().find(|r| r.id == 0).unwrap();
            assert!(dead.at_risk && dead.event && !dead.censored_now);
            assert_eq!(rows.iter().filter(|r| r.id == 0).count(), 1);
        }
        let never = clone_rows(&wc, &table, Regime::Never, WeightConvention::LaggedWeights).unwrap();
        let second: Vec<_> = never.iter().filter(|r| r.id == 1).collect();
        assert_eq!(second.len(), 2);
        assert!(second[0].censored_now && second[0].at_risk);
        assert!(!second[1].at_risk && !second[1].censored_now);
    }

    #[test]
    fn grace_regime_rejected_by_ccw() {
        let err = ccw_ate(&four_patients(), Regime::UniformGrace(1), Regime::Never, WeightConvention::LaggedWeights)
            .unwrap_err();
        assert_eq!(err, EstimationError::UnsupportedRegime(Regime::UniformGrace(1)));
    }

    #[test]
    fn asymptotic_limits() {
        let a = default_dgp::<Rational>(ScenarioKind::NoWithinPeriodTreatmentEffect);
        let b = default_dgp::<Rational>(ScenarioKind::NoWithinPeriodOutcomeEffect);
        for conv in [WeightConvention::LaggedWeights, WeightConvention::CurrentPeriodWeights] {
            assert_eq!(ccw_asymptotic(&a, Regime::AlwaysFromStart, Regime::Never, conv).unwrap(), q(2375, 10000));
        }
        let lagged =
            ccw_asymptotic(&b, Regime::AlwaysFromStart, Regime::Never, WeightConvention::LaggedWeights).unwrap();
        // hand-derived: 0.83 * 0.8725^2 - 0.83 * 0.805 * 0.705
        assert_eq!(lagged, q(83, 100) * q(8725, 10000) * q(8725, 10000) - q(83, 100) * q(805, 1000) * q(705, 1000));
        let current =
            ccw_asymptotic(&b, Regime::AlwaysFromStart, Regime::Never, WeightConvention::CurrentPeriodWeights).unwrap();
        assert_eq!(current, q(2410625, 10000000));
    }

    #[test]
    fn clone_csv_header() {
        let wc = four_patients();
        let table = fit_strata(&wc);
        let rows = clone_rows(&wc, &table, Regime::Never, WeightConvention::LaggedWeights).unwrap();
        let mut buf = Vec::new();
        write_clone_rows_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("id,arm,period,at_risk,event,censored_now,weight\n0,never,1,1,0,1,1\n"));
    }
}
