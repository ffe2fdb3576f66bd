//! Scenario graphs, treatment regimes and the multi-world exchangeability check.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Admg, GraphError, NodeLabel, NodeSet};

/// Which within-period arrow between treatment and vital status is absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Scenario A: `Y_t -> X_t`, no `X_t -> Y_t`.
    #[serde(rename = "A")]
    NoWithinPeriodTreatmentEffect,
    /// Scenario B: `X_t -> Y_t`, no `Y_t -> X_t`.
    #[serde(rename = "B")]
    NoWithinPeriodOutcomeEffect,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 2] =
        [ScenarioKind::NoWithinPeriodTreatmentEffect, ScenarioKind::NoWithinPeriodOutcomeEffect];

    pub fn letter(self) -> &'static str {
        match self {
            ScenarioKind::NoWithinPeriodTreatmentEffect => "A",
            ScenarioKind::NoWithinPeriodOutcomeEffect => "B",
        }
    }

    /// Whether period-`t` treatment acts on period-`t` vital status.
    pub fn treatment_acts_within_period(self) -> bool {
        self == ScenarioKind::NoWithinPeriodOutcomeEffect
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

impl FromStr for ScenarioKind {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(ScenarioKind::NoWithinPeriodTreatmentEffect),
            "B" | "b" => Ok(ScenarioKind::NoWithinPeriodOutcomeEffect),
            other => Err(ScenarioError::UnknownScenario(other.to_string())),
        }
    }
}

/// Treatment strategy of one arm of the target trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Untreated at every period while alive.
    Never,
    /// Treated at every period while alive.
    AlwaysFromStart,
    /// Untreated before period `i`, treated from `i` on.
    InitiateAt(u32),
    /// Initiation day drawn uniformly from `1..=g`.
    UniformGrace(u32),
}

impl Regime {
    pub fn validate(self, horizon: u32) -> Result<Self, ScenarioError> {
        match self {
            Regime::InitiateAt(p) | Regime::UniformGrace(p) if p == 0 || p > horizon => {
                Err(ScenarioError::RegimeOutOfRange { regime: self, horizon })
            }
            _ => Ok(self),
        }
    }

    /// Whether the regime prescribes a single treatment history.
    pub fn is_deterministic(self) -> bool {
        !matches!(self, Regime::UniformGrace(_))
    }

    /// Prescribed treatment at period `t` for deterministic regimes.
    pub fn treatment_at(self, t: u32) -> Option<bool> {
        match self {
            Regime::Never => Some(false),
            Regime::AlwaysFromStart => Some(true),
            Regime::InitiateAt(i) => Some(t >= i),
            Regime::UniformGrace(_) => None,
        }
    }

    /// Equal-probability deterministic components of the regime.
    pub fn components(self) -> Vec<Regime> {
        match self {
            Regime::UniformGrace(g) => (1..=g).map(Regime::InitiateAt).collect(),
            other => vec![other],
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Never => f.write_str("never"),
            Regime::AlwaysFromStart => f.write_str("always"),
            Regime::InitiateAt(i) => write!(f, "initiate:{i}"),
            Regime::UniformGrace(g) => write!(f, "grace:{g}"),
        }
    }
}

impl FromStr for Regime {
    type Err = ScenarioError;

    /// Accepts `never`, `always`, `initiate:<i>` and `grace:<g>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ScenarioError::UnknownRegime(s.to_string());
        match s {
            "never" => return Ok(Regime::Never),
            "always" => return Ok(Regime::AlwaysFromStart),
            _ => {}
        }
        let (name, arg) = s.split_once(':').ok_or_else(bad)?;
        let value: u32 = arg.parse().map_err(|_| bad())?;
        match name {
            "initiate" => Ok(Regime::InitiateAt(value)),
            "grace" => Ok(Regime::UniformGrace(value)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("horizon must be at least 1, got {0}")]
    InvalidHorizon(u32),
    #[error("period {period} outside 1..={horizon}")]
    PeriodOutOfRange { period: u32, horizon: u32 },
    #[error("regime {regime} is not valid for horizon {horizon}")]
    RegimeOutOfRange { regime: Regime, horizon: u32 },
    #[error("unknown scenario `{0}` (expected A or B)")]
    UnknownScenario(String),
    #[error("unknown regime `{0}` (expected never, always, initiate:<i> or grace:<g>)")]
    UnknownRegime(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn check_period(period: u32, horizon: u32) -> Result<(), ScenarioError> {
    if period == 0 || period > horizon {
        Err(ScenarioError::PeriodOutOfRange { period, horizon })
    } else {
        Ok(())
    }
}

/// Causal graph of the trial over `horizon` periods.
///
/// The full variant (`with_latents`) carries `C`, `A`, `B` and every
/// `X_s -> X_t` for `s < t`; the simplified variant keeps only consecutive
/// treatment edges and no baseline or latent nodes.
pub fn build_trial_graph(kind: ScenarioKind, horizon: u32, with_latents: bool) -> Result<Admg, ScenarioError> {
    if horizon == 0 {
        return Err(ScenarioError::InvalidHorizon(horizon));
    }
    let x = NodeLabel::x;
    let y = NodeLabel::y;
    let periods = 1..=horizon;

    let mut nodes: Vec<NodeLabel> = periods.clone().flat_map(|t| [x(t), y(t)]).collect();
    let mut edges = Vec::new();
    for t in periods.clone() {
        if t > 1 {
            edges.push((y(t - 1), y(t)));
            edges.push((y(t - 1), x(t)));
        }
        for s in 1..t {
            if with_latents || s + 1 == t {
                edges.push((x(s), x(t)));
            }
            edges.push((x(s), y(t)));
        }
        if kind.treatment_acts_within_period() {
            edges.push((x(t), y(t)));
        } else {
            edges.push((y(t), x(t)));
        }
    }
    if with_latents {
        let (c, a, b) = (NodeLabel::c(), NodeLabel::a(), NodeLabel::b());
        nodes.extend([c, a, b]);
        for t in periods {
            edges.extend([(a, x(t)), (b, y(t)), (c, x(t)), (c, y(t))]);
        }
    }
    Ok(Admg::new(nodes, edges, [])?)
}

/// Ancestral multi-world network for a regime on the simplified graph.
///
/// Every vital-status node downstream of an intervened treatment receives a
/// counterfactual copy. A copy inherits the non-treatment parents of its
/// factual node, re-pointed to their own copies where those exist, and
/// shares exogenous noise with the factual node through a bidirected edge.
pub fn build_amwn(kind: ScenarioKind, horizon: u32, regime: Regime) -> Result<Admg, ScenarioError> {
    let base = build_trial_graph(kind, horizon, false)?;
    regime.validate(horizon)?;
    let intervened: NodeSet = (1..=horizon).map(NodeLabel::x).collect();
    let downstream = base.descendants(&intervened)?;

    let copied: Vec<u32> = (1..=horizon).filter(|t| downstream.contains(&NodeLabel::y(*t))).collect();
    let has_copy =
        |v: NodeLabel| v.kind() == crate::graph::NodeKind::Outcome && copied.contains(&v.period().unwrap_or(0));

    let mut nodes: Vec<NodeLabel> = base.nodes().iter().copied().collect();
    let mut directed: Vec<(NodeLabel, NodeLabel)> = base.directed_edges().collect();
    let mut bidirected = Vec::new();
    for &t in &copied {
        let factual = NodeLabel::y(t);
        let copy = NodeLabel::yx(t);
        nodes.push(copy);
        bidirected.push((factual, copy));
        for parent in base.parents(factual) {
            if intervened.contains(&parent) {
                continue;
            }
            let source = if has_copy(parent) { NodeLabel::yx(parent.period().unwrap_or(0)) } else { parent };
            directed.push((source, copy));
        }
    }
    Ok(Admg::new(nodes, directed, bidirected)?)
}

/// Graphical check of conditional exchangeability of `Y_i` under `regime`
/// with observed `X_k`, given `X_{<k}`, `Y_{<=k}` (and `C` when present).
///
/// When `Y_i` has no counterfactual copy its factual node stands in; if that
/// node is itself conditioned on the statement holds trivially.
pub fn exchangeability_holds(
    kind: ScenarioKind,
    horizon: u32,
    i: u32,
    k: u32,
    regime: Regime,
) -> Result<bool, ScenarioError> {
    if horizon == 0 {
        return Err(ScenarioError::InvalidHorizon(horizon));
    }
    check_period(i, horizon)?;
    check_period(k, horizon)?;
    regime.validate(horizon)?;
    for component in regime.components() {
        let g = build_amwn(kind, horizon, component)?;
        let target = if g.contains(NodeLabel::yx(i)) { NodeLabel::yx(i) } else { NodeLabel::y(i) };
        let mut given: NodeSet = (1..k).map(NodeLabel::x).chain((1..=k).map(NodeLabel::y)).collect();
        if g.contains(NodeLabel::c()) {
            given.insert(NodeLabel::c());
        }
        if given.contains(&target) {
            continue;
        }
        if !g.m_separated_nodes(target, NodeLabel::x(k), given)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Exchangeability truth table; entry `[i-1][k-1]`.
pub fn exchangeability_table(
    kind: ScenarioKind,
    horizon: u32,
    regime: Regime,
) -> Result<Vec<Vec<bool>>, ScenarioError> {
    if horizon == 0 {
        return Err(ScenarioError::InvalidHorizon(horizon));
    }
    (1..=horizon).map(|i| (1..=horizon).map(|k| exchangeability_holds(kind, horizon, i, k, regime)).collect()).collect()
}
