//! Graphical premises of the do-calculus steps that turn the survival query
//! into a product of observational hazards.
//!
//! For each period `k` two premises are checked on the full scenario graph:
//!
//! * the action-deletion premise, which drops interventions on treatments
//!   that cannot affect `Y_k` (those after `k` in scenario B, from `k` on in
//!   scenario A);
//! * the action/observation exchange premise, which replaces the remaining
//!   interventions by conditioning.

use serde::{Deserialize, Serialize};

use crate::graph::{Admg, NodeLabel, NodeSet};
use crate::scenarios::{build_trial_graph, ScenarioError, ScenarioKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodPremises {
    pub k: u32,
    pub rule2: bool,
    pub rule3: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PremiseReport {
    pub scenario: ScenarioKind,
    pub horizon: u32,
    pub periods: Vec<PeriodPremises>,
    pub identified: bool,
}

impl PremiseReport {
    /// Fixed-width text table, one row per period.
    pub fn to_table(&self) -> String {
        let mark = |b: bool| if b { "holds" } else { "FAILS" };
        let mut out = format!("scenario {} horizon {}\n", self.scenario, self.horizon);
        out.push_str("   k  rule2  rule3\n");
        for p in &self.periods {
            out.push_str(&format!("{:>4}  {:<5}  {:<5}\n", p.k, mark(p.rule2), mark(p.rule3)));
        }
        out.push_str(&format!("identified: {}\n", self.identified));
        out
    }
}

fn check_period(horizon: u32, k: u32) -> Result<(), ScenarioError> {
    if k == 0 || k > horizon {
        Err(ScenarioError::PeriodOutOfRange { period: k, horizon })
    } else {
        Ok(())
    }
}

/// Treatments whose intervention is kept at period `k`: `X_{t<k}` in
/// scenario A, `X_{t<=k}` in scenario B.
fn kept_treatments(kind: ScenarioKind, k: u32) -> NodeSet {
    let last = if kind.treatment_acts_within_period() { k } else { k - 1 };
    (1..=last).map(NodeLabel::x).collect()
}

fn later_treatments(kind: ScenarioKind, horizon: u32, k: u32) -> NodeSet {
    let first = if kind.treatment_acts_within_period() { k + 1 } else { k };
    (first..=horizon).map(NodeLabel::x).collect()
}

/// `Y_{t<k}` plus `C` when the graph has it.
fn observed_history(g: &Admg, k: u32) -> NodeSet {
    let mut set: NodeSet = (1..k).map(NodeLabel::y).collect();
    if g.contains(NodeLabel::c()) {
        set.insert(NodeLabel::c());
    }
    set
}

/// Premise for deleting `do(X_later)` from `P(Y_k | Y_{<k}, C, do(X_kept), do(X_later))`.
///
/// Checks `Y_k ⊥ X_later | X_kept, Y_{<k}, C` in the graph with edges into
/// `X_kept` removed and edges into those `X_later` that are not ancestors of
/// the observed history (in the graph without edges into `X_kept`) removed.
pub fn rule3_premise_holds(g: &Admg, kind: ScenarioKind, horizon: u32, k: u32) -> Result<bool, ScenarioError> {
    check_period(horizon, k)?;
    let kept = kept_treatments(kind, k);
    let later = later_treatments(kind, horizon, k);
    if later.is_empty() {
        return Ok(true);
    }
    let observed = observed_history(g, k);

    let cut_kept = g.mutilate(&kept, &NodeSet::new())?;
    let observed_ancestors = cut_kept.ancestors(&observed)?;
    let mut cut: NodeSet = later.iter().copied().filter(|v| !observed_ancestors.contains(v)).collect();
    cut.extend(kept.iter().copied());
    let surgery = g.mutilate(&cut, &NodeSet::new())?;

    let mut given = kept;
    given.extend(observed);
    Ok(surgery.m_separated(&NodeSet::from([NodeLabel::y(k)]), &later, &given)?)
}

/// Premise for exchanging `do(X_kept)` with conditioning on `X_kept`.
///
/// Checks `Y_k ⊥ X_kept | Y_{<k}, C` in the graph with edges out of
/// `X_kept` removed.
pub fn rule2_premise_holds(g: &Admg, kind: ScenarioKind, horizon: u32, k: u32) -> Result<bool, ScenarioError> {
    check_period(horizon, k)?;
    let kept = kept_treatments(kind, k);
    if kept.is_empty() {
        return Ok(true);
    }
    let surgery = g.mutilate(&NodeSet::new(), &kept)?;
    Ok(surgery.m_separated(&NodeSet::from([NodeLabel::y(k)]), &kept, &observed_history(g, k))?)
}

/// Evaluates both premises at every period of an explicit graph.
pub fn premise_report_for(g: &Admg, kind: ScenarioKind, horizon: u32) -> Result<PremiseReport, ScenarioError> {
    if horizon == 0 {
        return Err(ScenarioError::InvalidHorizon(horizon));
    }
    let periods = (1..=horizon)
        .map(|k| {
            Ok(PeriodPremises {
                k,
                rule2: rule2_premise_holds(g, kind, horizon, k)?,
                rule3: rule3_premise_holds(g, kind, horizon, k)?,
            })
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    let identified = periods.iter().all(|p| p.rule2 && p.rule3);
    Ok(PremiseReport { scenario: kind, horizon, periods, identified })
}

/// Premise report on the full scenario graph.
pub fn identification_report(kind: ScenarioKind, horizon: u32) -> Result<PremiseReport, ScenarioError> {
    let g = build_trial_graph(kind, horizon, true)?;
    premise_report_for(&g, kind, horizon)
}
