//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use proptest::prelude::*;
use tte_core::{Admg, NodeLabel, NodeSet};

/// Endpoint marks of an edge as seen from `(u, v)`: arrowhead at `u`, at `v`.
#[derive(Clone, Copy)]
struct Segment {
    u: NodeLabel,
    v: NodeLabel,
    head_u: bool,
    head_v: bool,
}

fn segments(g: &Admg) -> Vec<Segment> {
    let mut out = Vec::new();
    for (a, b) in g.directed_edges() {
        out.push(Segment { u: a, v: b, head_u: false, head_v: true });
    }
    for (a, b) in g.bidirected_edges() {
        out.push(Segment { u: a, v: b, head_u: true, head_v: true });
    }
    out
}

/// Fixpoint over the edge list.
pub fn ancestors_oracle(g: &Admg, targets: &NodeSet) -> NodeSet {
    let mut out = targets.clone();
    loop {
        let before = out.len();
        for (a, b) in g.directed_edges() {
            if out.contains(&b) {
                out.insert(a);
            }
        }
        if out.len() == before {
            return out;
        }
    }
}

/// Enumerates every simple path from `a` to `b` and applies the blocking
/// rules to each interior node. Paths stop at the first node of `b` reached.
pub fn m_separated_oracle(g: &Admg, a: &NodeSet, b: &NodeSet, z: &NodeSet) -> bool {
    let an_z = ancestors_oracle(g, z);
    let segs = segments(g);
    // (node, arrowhead at node on the incoming segment)
    fn walk(
        segs: &[Segment],
        b: &NodeSet,
        z: &NodeSet,
        an_z: &NodeSet,
        node: NodeLabel,
        head_in: Option<bool>,
        on_path: &mut BTreeSet<NodeLabel>,
    ) -> bool {
        for s in segs {
            let (next, head_here, head_next) = if s.u == node {
                (s.v, s.head_u, s.head_v)
            } else if s.v == node {
                (s.u, s.head_v, s.head_u)
            } else {
                continue;
            };
            if on_path.contains(&next) {
                continue;
            }
            if let Some(head_in) = head_in {
                let collider = head_in && head_here;
                let open = if collider { an_z.contains(&node) } else { !z.contains(&node) };
                if !open {
                    continue;
                }
            }
            if b.contains(&next) {
                return true;
            }
            on_path.insert(next);
            let found = walk(segs, b, z, an_z, next, Some(head_next), on_path);
            on_path.remove(&next);
            if found {
                return true;
            }
        }
        false
    }
    for &start in a {
        let mut on_path = BTreeSet::from([start]);
        if walk(&segs, b, z, &an_z, start, None, &mut on_path) {
            return false;
        }
    }
    true
}

/// A random ADMG on `X1..Xn` plus a disjoint `(A, B, Z)` query.
#[derive(Debug, Clone)]
pub struct RandomQuery {
    pub graph: Admg,
    pub a: NodeSet,
    pub b: NodeSet,
    pub z: NodeSet,
}

pub fn random_admg(max_nodes: usize) -> impl Strategy<Value = Admg> {
    (2..=max_nodes)
        .prop_flat_map(|n| {
            let pairs = n * (n - 1) / 2;
            (
                Just((1..=n as u32).collect::<Vec<_>>()).prop_shuffle(),
                0.0f64..0.45,
                0.0f64..0.25,
                proptest::collection::vec(0.0f64..1.0, pairs),
                proptest::collection::vec(0.0f64..1.0, pairs),
            )
        })
        .prop_map(|(order, p_dir, p_bi, u_dir, u_bi)| {
            let n = order.len();
            let label = |i: usize| NodeLabel::x(order[i]);
            let mut directed = Vec::new();
            let mut bidirected = Vec::new();
            let mut idx = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if u_dir[idx] < p_dir {
                        directed.push((label(i), label(j)));
                    }
                    if u_bi[idx] < p_bi {
                        bidirected.push((label(i), label(j)));
                    }
                    idx += 1;
                }
            }
            Admg::new((0..n).map(label), directed, bidirected).expect("topologically ordered edges")
        })
}

pub fn random_query(max_nodes: usize) -> impl Strategy<Value = RandomQuery> {
    random_admg(max_nodes)
        .prop_flat_map(|g| {
            let n = g.nodes().len();
            (Just(g), proptest::collection::vec(0u8..4, n))
        })
        .prop_map(|(graph, roles)| {
            let mut q = RandomQuery { graph: graph.clone(), a: NodeSet::new(), b: NodeSet::new(), z: NodeSet::new() };
            for (v, role) in graph.nodes().iter().zip(roles) {
                match role {
                    0 => q.a.insert(*v),
                    1 => q.b.insert(*v),
                    2 => q.z.insert(*v),
                    _ => false,
                };
            }
            q
        })
}

/// Replaces every bidirected edge `u <-> v` by a fresh latent `L -> u`, `L -> v`.
/// Latents are labelled `Yx1, Yx2, ...`, which random graphs never use.
pub fn expand_bidirected(g: &Admg) -> Admg {
    let mut nodes: Vec<NodeLabel> = g.nodes().iter().copied().collect();
    let mut directed: Vec<(NodeLabel, NodeLabel)> = g.directed_edges().collect();
    for (i, (u, v)) in g.bidirected_edges().enumerate() {
        let latent = NodeLabel::yx(i as u32 + 1);
        nodes.push(latent);
        directed.push((latent, u));
        directed.push((latent, v));
    }
    Admg::new(nodes, directed, []).expect("latent parents keep the graph acyclic")
}
