//! Acyclic directed mixed graphs over time-indexed labels.
//!
//! Nodes are identified structurally by `(kind, period)`, never by position,
//! so that period-quantified queries ("every treatment before k") can be
//! phrased directly. Bidirected edges are stored as first-class edges with an
//! arrowhead at both ends.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Treatment,
    Outcome,
    CounterfactualOutcome,
    BaselineConfounder,
    LatentTreatmentCause,
    LatentOutcomeCause,
}

impl NodeKind {
    fn is_periodic(self) -> bool {
        matches!(self, NodeKind::Treatment | NodeKind::Outcome | NodeKind::CounterfactualOutcome)
    }
}

/// A node label. Treatments and (counterfactual) outcomes carry a period,
/// the baseline confounder and the two latent causes do not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeLabel {
    kind: NodeKind,
    period: Option<u32>,
}

impl NodeLabel {
    /// Treatment `X_t`.
    pub fn x(t: u32) -> Self {
        Self::periodic(NodeKind::Treatment, t)
    }

    /// Vital status `Y_t`.
    pub fn y(t: u32) -> Self {
        Self::periodic(NodeKind::Outcome, t)
    }

    /// Counterfactual vital status `Y_t` under a regime.
    pub fn yx(t: u32) -> Self {
        Self::periodic(NodeKind::CounterfactualOutcome, t)
    }

    /// Baseline confounder `C`.
    pub fn c() -> Self {
        Self { kind: NodeKind::BaselineConfounder, period: None }
    }

    /// Latent cause of treatment `A`.
    pub fn a() -> Self {
        Self { kind: NodeKind::LatentTreatmentCause, period: None }
    }

    /// Latent cause of vital status `B`.
    pub fn b() -> Self {
        Self { kind: NodeKind::LatentOutcomeCause, period: None }
    }

    fn periodic(kind: NodeKind, t: u32) -> Self {
        assert!(t >= 1, "periods are numbered from 1");
        Self { kind, period: Some(t) }
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn period(&self) -> Option<u32> {
        self.period
    }
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.period.unwrap_or(0);
        match self.kind {
            NodeKind::Treatment => write!(f, "X{t}"),
            NodeKind::Outcome => write!(f, "Y{t}"),
            NodeKind::CounterfactualOutcome => write!(f, "Yx{t}"),
            NodeKind::BaselineConfounder => f.write_str("C"),
            NodeKind::LatentTreatmentCause => f.write_str("A"),
            NodeKind::LatentOutcomeCause => f.write_str("B"),
        }
    }
}

impl FromStr for NodeLabel {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GraphError::BadLabel(s.to_string());
        match s {
            "C" => return Ok(Self::c()),
            "A" => return Ok(Self::a()),
            "B" => return Ok(Self::b()),
            _ => {}
        }
        let (kind, digits) = if let Some(rest) = s.strip_prefix("Yx") {
            (NodeKind::CounterfactualOutcome, rest)
        } else if let Some(rest) = s.strip_prefix('Y') {
            (NodeKind::Outcome, rest)
        } else if let Some(rest) = s.strip_prefix('X') {
            (NodeKind::Treatment, rest)
        } else {
            return Err(bad());
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let t: u32 = digits.parse().map_err(|_| bad())?;
        if t == 0 {
            return Err(bad());
        }
        debug_assert!(kind.is_periodic());
        Ok(Self::periodic(kind, t))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("directed cycle through {0}")]
    CycleDetected(NodeLabel),
    #[error("node {0} is not declared in the graph")]
    UnknownNode(NodeLabel),
    #[error("self-loop on {0}")]
    SelfLoop(NodeLabel),
    #[error("node {0} appears in more than one of the query sets")]
    OverlappingSets(NodeLabel),
    #[error("unrecognised node label `{0}`")]
    BadLabel(String),
    #[error("DOT line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type NodeSet = BTreeSet<NodeLabel>;

/// Acyclic directed mixed graph.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Admg {
    nodes: NodeSet,
    directed: BTreeSet<(NodeLabel, NodeLabel)>,
    // stored with the smaller label first
    bidirected: BTreeSet<(NodeLabel, NodeLabel)>,
}

fn ordered(a: NodeLabel, b: NodeLabel) -> (NodeLabel, NodeLabel) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Admg {
    /// Builds and validates a graph.
    pub fn new(
        nodes: impl IntoIterator<Item = NodeLabel>,
        directed: impl IntoIterator<Item = (NodeLabel, NodeLabel)>,
        bidirected: impl IntoIterator<Item = (NodeLabel, NodeLabel)>,
    ) -> Result<Self, GraphError> {
        let nodes: NodeSet = nodes.into_iter().collect();
        let mut g = Admg { nodes, ..Default::default() };
        for (from, to) in directed {
            g.check_edge(from, to)?;
            g.directed.insert((from, to));
        }
        for (a, b) in bidirected {
            g.check_edge(a, b)?;
            g.bidirected.insert(ordered(a, b));
        }
        g.check_acyclic()?;
        Ok(g)
    }

    fn check_edge(&self, a: NodeLabel, b: NodeLabel) -> Result<(), GraphError> {
        self.require(a)?;
        self.require(b)?;
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        Ok(())
    }

    fn require(&self, v: NodeLabel) -> Result<(), GraphError> {
        if self.nodes.contains(&v) {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(v))
        }
    }

    fn require_all<'a>(&self, set: impl IntoIterator<Item = &'a NodeLabel>) -> Result<(), GraphError> {
        set.into_iter().try_for_each(|v| self.require(*v))
    }

    fn check_acyclic(&self) -> Result<(), GraphError> {
        let mut indegree: BTreeMap<NodeLabel, usize> = self.nodes.iter().map(|v| (*v, 0)).collect();
        for (_, to) in &self.directed {
            *indegree.get_mut(to).expect("validated endpoint") += 1;
        }
        let mut queue: VecDeque<NodeLabel> = indegree.iter().filter(|(_, d)| **d == 0).map(|(v, _)| *v).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop_front() {
            seen += 1;
            for child in self.children(v) {
                let d = indegree.get_mut(&child).expect("validated endpoint");
                *d -= 1;
                if *d == 0 {
                    queue.push_back(child);
                }
            }
        }
        if seen == self.nodes.len() {
            return Ok(());
        }
        let stuck = indegree.into_iter().find(|(_, d)| *d > 0).map(|(v, _)| v).expect("some node left on a cycle");
        Err(GraphError::CycleDetected(stuck))
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn contains(&self, v: NodeLabel) -> bool {
        self.nodes.contains(&v)
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = (NodeLabel, NodeLabel)> + '_ {
        self.directed.iter().copied()
    }

    pub fn bidirected_edges(&self) -> impl Iterator<Item = (NodeLabel, NodeLabel)> + '_ {
        self.bidirected.iter().copied()
    }

    pub fn has_directed(&self, from: NodeLabel, to: NodeLabel) -> bool {
        self.directed.contains(&(from, to))
    }

    pub fn has_bidirected(&self, a: NodeLabel, b: NodeLabel) -> bool {
        self.bidirected.contains(&ordered(a, b))
    }

    pub fn directed_count(&self) -> usize {
        self.directed.len()
    }

    pub fn bidirected_count(&self) -> usize {
        self.bidirected.len()
    }

    pub fn parents(&self, v: NodeLabel) -> impl Iterator<Item = NodeLabel> + '_ {
        self.directed.iter().filter(move |(_, to)| *to == v).map(|(from, _)| *from)
    }

    pub fn children(&self, v: NodeLabel) -> impl Iterator<Item = NodeLabel> + '_ {
        self.directed.iter().filter(move |(from, _)| *from == v).map(|(_, to)| *to)
    }

    pub fn spouses(&self, v: NodeLabel) -> impl Iterator<Item = NodeLabel> + '_ {
        self.bidirected.iter().filter_map(move |&(a, b)| {
            if a == v {
                Some(b)
            } else if b == v {
                Some(a)
            } else {
                None
            }
        })
    }

    /// Returns a copy with one more directed edge, re-validating acyclicity.
    pub fn with_directed_edge(&self, from: NodeLabel, to: NodeLabel) -> Result<Self, GraphError> {
        self.check_edge(from, to)?;
        let mut g = self.clone();
        g.directed.insert((from, to));
        g.check_acyclic()?;
        Ok(g)
    }

    /// Returns the induced subgraph on all nodes except `removed`.
    pub fn without_nodes(&self, removed: &NodeSet) -> Self {
        let keep = |v: &NodeLabel| !removed.contains(v);
        Admg {
            nodes: self.nodes.iter().copied().filter(keep).collect(),
            directed: self.directed.iter().copied().filter(|(a, b)| keep(a) && keep(b)).collect(),
            bidirected: self.bidirected.iter().copied().filter(|(a, b)| keep(a) && keep(b)).collect(),
        }
    }

    /// `targets` together with every node that has a directed path into it.
    pub fn ancestors(&self, targets: &NodeSet) -> Result<NodeSet, GraphError> {
        self.require_all(targets)?;
        Ok(self.closure(targets, |g, v| g.parents(v).collect()))
    }

    /// `sources` together with every node reachable from it by a directed path.
    pub fn descendants(&self, sources: &NodeSet) -> Result<NodeSet, GraphError> {
        self.require_all(sources)?;
        Ok(self.closure(sources, |g, v| g.children(v).collect()))
    }

    fn closure(&self, start: &NodeSet, step: impl Fn(&Self, NodeLabel) -> Vec<NodeLabel>) -> NodeSet {
        let mut out = start.clone();
        let mut stack: Vec<NodeLabel> = start.iter().copied().collect();
        while let Some(v) = stack.pop() {
            for w in step(self, v) {
                if out.insert(w) {
                    stack.push(w);
                }
            }
        }
        out
    }

    /// Graph surgery: drops every directed edge into `remove_incoming` and
    /// out of `remove_outgoing`, plus every bidirected edge touching
    /// `remove_incoming` (it has an arrowhead there). Nodes are kept.
    pub fn mutilate(&self, remove_incoming: &NodeSet, remove_outgoing: &NodeSet) -> Result<Self, GraphError> {
        self.require_all(remove_incoming)?;
        self.require_all(remove_outgoing)?;
        Ok(Admg {
            nodes: self.nodes.clone(),
            directed: self
                .directed
                .iter()
                .copied()
                .filter(|(from, to)| !remove_incoming.contains(to) && !remove_outgoing.contains(from))
                .collect(),
            bidirected: self
                .bidirected
                .iter()
                .copied()
                .filter(|(a, b)| !remove_incoming.contains(a) && !remove_incoming.contains(b))
                .collect(),
        })
    }

    /// m-separation of `a` and `b` given `z`.
    ///
    /// Reachability over `(node, entered_through_arrowhead)` states: a node
    /// entered through an arrowhead and left through another arrowhead is a
    /// collider and passes only when it is an ancestor of `z`; every other
    /// traversal passes only through nodes outside `z`.
    pub fn m_separated(&self, a: &NodeSet, b: &NodeSet, z: &NodeSet) -> Result<bool, GraphError> {
        self.require_all(a.iter().chain(b).chain(z))?;
        for v in a {
            if b.contains(v) || z.contains(v) {
                return Err(GraphError::OverlappingSets(*v));
            }
        }
        if let Some(v) = b.iter().find(|v| z.contains(v)) {
            return Err(GraphError::OverlappingSets(*v));
        }
        if a.is_empty() || b.is_empty() {
            return Ok(true);
        }

        let open_colliders = self.ancestors(z)?;
        // (neighbour, arrowhead at this node, arrowhead at the neighbour)
        let mut adjacency: BTreeMap<NodeLabel, Vec<(NodeLabel, bool, bool)>> = BTreeMap::new();
        for &(from, to) in &self.directed {
            adjacency.entry(from).or_default().push((to, false, true));
            adjacency.entry(to).or_default().push((from, true, false));
        }
        for &(u, v) in &self.bidirected {
            adjacency.entry(u).or_default().push((v, true, true));
            adjacency.entry(v).or_default().push((u, true, true));
        }

        let mut visited: BTreeSet<(NodeLabel, bool)> = BTreeSet::new();
        let mut queue: VecDeque<(NodeLabel, Option<bool>)> = a.iter().map(|v| (*v, None)).collect();
        while let Some((v, entered_head)) = queue.pop_front() {
            let Some(edges) = adjacency.get(&v) else { continue };
            for &(w, head_here, head_there) in edges {
                let passes = match entered_head {
                    None => true,
                    Some(true) if head_here => open_colliders.contains(&v),
                    Some(_) => !z.contains(&v),
                };
                if !passes {
                    continue;
                }
                if b.contains(&w) {
                    return Ok(false);
                }
                if visited.insert((w, head_there)) {
                    queue.push_back((w, Some(head_there)));
                }
            }
        }
        Ok(true)
    }

    /// Convenience wrapper for single-node m-separation queries.
    pub fn m_separated_nodes(
        &self,
        a: NodeLabel,
        b: NodeLabel,
        z: impl IntoIterator<Item = NodeLabel>,
    ) -> Result<bool, GraphError> {
        self.m_separated(&NodeSet::from([a]), &NodeSet::from([b]), &z.into_iter().collect())
    }

    /// Graphviz DOT rendering, one statement per line.
    pub fn to_dot(&self) -> String {
        if self.nodes.is_empty() {
            return "digraph g { }".to_string();
        }
        let mut out = String::from("digraph g {\n");
        for v in &self.nodes {
            out.push_str(&format!("  {v};\n"));
        }
        for (from, to) in &self.directed {
            out.push_str(&format!("  {from} -> {to};\n"));
        }
        for (a, b) in &self.bidirected {
            out.push_str(&format!("  {a} -> {b} [dir=both, style=dashed];\n"));
        }
        out.push('}');
        out
    }

    /// Parses the DOT subset produced by [`Admg::to_dot`].
    pub fn from_dot(text: &str) -> Result<Self, GraphError> {
        let trimmed = text.trim();
        if trimmed == "digraph g { }" {
            return Ok(Admg::default());
        }
        let mut nodes = Vec::new();
        let mut directed = Vec::new();
        let mut bidirected = Vec::new();
        let mut opened = false;
        let mut closed = false;
        for (i, raw) in trimmed.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            let err = |message: &str| GraphError::Parse { line: lineno, message: message.to_string() };
            if line.is_empty() {
                continue;
            }
            if !opened {
                if line != "digraph g {" {
                    return Err(err("expected `digraph g {`"));
                }
                opened = true;
                continue;
            }
            if closed {
                return Err(err("content after closing brace"));
            }
            if line == "}" {
                closed = true;
                continue;
            }
            let stmt = line.strip_suffix(';').ok_or_else(|| err("missing `;`"))?.trim();
            let (body, attrs) = match stmt.split_once('[') {
                Some((body, attrs)) => (body.trim(), Some(attrs.trim_end_matches(']').trim())),
                None => (stmt, None),
            };
            match body.split_once("->") {
                Some((from, to)) => {
                    let from: NodeLabel = from.trim().parse()?;
                    let to: NodeLabel = to.trim().parse()?;
                    match attrs {
                        None => directed.push((from, to)),
                        Some(a) if is_bidirected_attr(a) => bidirected.push((from, to)),
                        Some(_) => return Err(err("unsupported edge attributes")),
                    }
                }
                None => {
                    if attrs.is_some() {
                        return Err(err("node attributes are not supported"));
                    }
                    nodes.push(body.parse::<NodeLabel>()?);
                }
            }
        }
        if !closed {
            return Err(GraphError::Parse { line: trimmed.lines().count(), message: "missing `}`".into() });
        }
        Admg::new(nodes, directed, bidirected)
    }
}

fn is_bidirected_attr(attrs: &str) -> bool {
    let parts: BTreeSet<&str> = attrs.split(',').map(str::trim).collect();
    parts == BTreeSet::from(["dir=both", "style=dashed"])
}
