//! Recursive swarm-STL encoding over plan segments.
//!
//! A node is encoded against an *anchor*: the set of times at which it must
//! hold. The root anchor is the single instant t0; temporal operators widen
//! the anchor by their interval. For single-swarm subtrees the usual
//! segment-indexed rules apply (pick or quantify segments of that swarm's
//! grid); subtrees mixing swarms fall back to holding throughout the whole
//! anchor window, which is sufficient.
//!
//! Eventually/Until branches carry two extra guards beyond interval overlap:
//! the anchor-width duration test, and a witness-fit bound keeping the chosen
//! witness early enough that the child formula can still be checked inside
//! the mission horizon by a monitor that refuses to extrapolate past the end
//! of a trace.

use super::{EncodeError, Encoder, TimePoint};
use crate::expr::{AffCone, Leaf, Node};
use crate::stl::{distribute, Lifted, SwarmAtom};

#[derive(Debug, Clone, Copy)]
enum Anchor {
    Root,
    Segment { swarm: usize, k: usize },
    Window(TimePoint, TimePoint),
}

pub(crate) fn encode_root(enc: &Encoder, lifted: &Lifted) -> Result<Node, EncodeError> {
    let normalized = distribute(lifted);
    let node = enc_node(enc, &normalized, Anchor::Root)?;
    if is_falsity(&node) {
        return Err(EncodeError::Unsatisfiable(
            "temporal structure admits no segment assignment".into(),
        ));
    }
    Ok(node)
}

fn falsity() -> Node {
    Node::Or(Vec::new())
}

fn is_falsity(n: &Node) -> bool {
    matches!(n, Node::Or(v) if v.is_empty())
}

fn anchor_interval(enc: &Encoder, anchor: Anchor) -> (TimePoint, TimePoint) {
    match anchor {
        Anchor::Root => {
            let t0 = enc.scenario.constants.t0;
            (TimePoint::constant(t0), TimePoint::constant(t0))
        }
        Anchor::Segment { swarm, k } => enc.seg_interval(swarm, k),
        Anchor::Window(lo, hi) => (lo, hi),
    }
}

fn enc_node(enc: &Encoder, f: &Lifted, anchor: Anchor) -> Result<Node, EncodeError> {
    match f {
        Lifted::True => Ok(Node::truth()),
        Lifted::False => Ok(falsity()),
        Lifted::Atom(a) => enc_atom(enc, a, anchor),
        Lifted::And(cs) => {
            let mut parts = Vec::new();
            for c in cs {
                let n = enc_node(enc, c, anchor)?;
                if is_falsity(&n) {
                    return Ok(falsity());
                }
                parts.push(n);
            }
            Ok(Node::and(parts))
        }
        Lifted::Or(cs) => {
            let mut parts = Vec::new();
            for c in cs {
                let n = enc_node(enc, c, anchor)?;
                if !is_falsity(&n) {
                    parts.push(n);
                }
            }
            if parts.is_empty() {
                return Ok(falsity());
            }
            Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Node::Or(parts) })
        }
        Lifted::Always(iv, c) => {
            let (lo, hi) = anchor_interval(enc, anchor);
            let w = (lo.shifted(iv.lo), hi.shifted(iv.hi));
            let swarms = c.swarms();
            if swarms.len() == 1 {
                let sw = swarms[0];
                let mut parts = Vec::new();
                for k in 1..=enc.seg_count(sw) {
                    let inner = enc_node(enc, c, Anchor::Segment { swarm: sw, k })?;
                    if let Some(n) = overlap_implies(enc, sw, k, w, inner) {
                        if is_falsity(&n) {
                            return Ok(falsity());
                        }
                        parts.push(n);
                    }
                }
                Ok(Node::and(parts))
            } else {
                enc_node(enc, c, Anchor::Window(w.0, w.1))
            }
        }
        Lifted::Eventually(iv, c) => {
            let (lo, hi) = anchor_interval(enc, anchor);
            let mut guards = Vec::new();
            // Anchor must be narrow enough that one witness serves every
            // start time in it.
            if let Some(g) = le_guard(enc, hi.shifted(-(iv.hi - iv.lo)), lo) {
                match g {
                    GuardRow::Impossible => return Ok(falsity()),
                    GuardRow::Row(n) => guards.push(n),
                    GuardRow::Trivial => {}
                }
            }
            let w2 = (hi.shifted(iv.lo), lo.shifted(iv.hi));
            let fit = witness_fit_limit(enc, c);
            if let Some(g) = le_guard(enc, w2.0, TimePoint::constant(fit)) {
                match g {
                    GuardRow::Impossible => return Ok(falsity()),
                    GuardRow::Row(n) => guards.push(n),
                    GuardRow::Trivial => {}
                }
            }
            let swarms = c.swarms();
            if swarms.len() == 1 {
                let sw = swarms[0];
                let mut branches = Vec::new();
                for k in 1..=enc.seg_count(sw) {
                    if let Some(b) = witness_branch(enc, sw, k, w2, fit, enc_node(enc, c, Anchor::Segment { swarm: sw, k })?) {
                        branches.push(b);
                    }
                }
                if branches.is_empty() {
                    return Ok(falsity());
                }
                let picked =
                    if branches.len() == 1 { branches.pop().unwrap() } else { Node::Or(branches) };
                guards.push(picked);
                Ok(Node::and(guards))
            } else {
                let inner = enc_node(enc, c, Anchor::Window(w2.0, w2.1))?;
                if is_falsity(&inner) {
                    return Ok(falsity());
                }
                guards.push(inner);
                Ok(Node::and(guards))
            }
        }
        Lifted::Until(iv, l, r) => {
            let (lo, hi) = anchor_interval(enc, anchor);
            let mut guards = Vec::new();
            if let Some(g) = le_guard(enc, hi.shifted(-(iv.hi - iv.lo)), lo) {
                match g {
                    GuardRow::Impossible => return Ok(falsity()),
                    GuardRow::Row(n) => guards.push(n),
                    GuardRow::Trivial => {}
                }
            }
            let w2 = (hi.shifted(iv.lo), lo.shifted(iv.hi));
            let w1 = (lo, hi.shifted(iv.hi));
            let fit = witness_fit_limit(enc, r).min(witness_fit_limit(enc, l));
            if let Some(g) = le_guard(enc, w2.0, TimePoint::constant(fit)) {
                match g {
                    GuardRow::Impossible => return Ok(falsity()),
                    GuardRow::Row(n) => guards.push(n),
                    GuardRow::Trivial => {}
                }
            }
            let mut swarms = l.swarms();
            for s in r.swarms() {
                if !swarms.contains(&s) {
                    swarms.push(s);
                }
            }
            if swarms.len() == 1 {
                let sw = swarms[0];
                let mut branches = Vec::new();
                for k in 1..=enc.seg_count(sw) {
                    let rhs = enc_node(enc, r, Anchor::Segment { swarm: sw, k })?;
                    let Some(mut branch_parts) = witness_branch_parts(enc, sw, k, w2, fit, rhs)
                    else {
                        continue;
                    };
                    // The left operand must hold from the anchor up to the
                    // witness: on every earlier segment touching [lo, hi+b].
                    let mut ok = true;
                    for k2 in 1..=k {
                        let inner = enc_node(enc, l, Anchor::Segment { swarm: sw, k: k2 })?;
                        if let Some(n) = overlap_implies(enc, sw, k2, w1, inner) {
                            if is_falsity(&n) {
                                ok = false;
                                break;
                            }
                            branch_parts.push(n);
                        }
                    }
                    if ok {
                        branches.push(Node::and(branch_parts));
                    }
                }
                if branches.is_empty() {
                    return Ok(falsity());
                }
                let picked =
                    if branches.len() == 1 { branches.pop().unwrap() } else { Node::Or(branches) };
                guards.push(picked);
                Ok(Node::and(guards))
            } else {
                let rr = enc_node(enc, r, Anchor::Window(w2.0, w2.1))?;
                let ll = enc_node(enc, l, Anchor::Window(w1.0, w1.1))?;
                if is_falsity(&rr) || is_falsity(&ll) {
                    return Ok(falsity());
                }
                guards.push(rr);
                guards.push(ll);
                Ok(Node::and(guards))
            }
        }
    }
}

/// Latest time at which a witness for `c` may start and still be fully
/// checkable before the end of the horizon.
fn witness_fit_limit(enc: &Encoder, c: &Lifted) -> f64 {
    enc.scenario.constants.t0 + enc.scenario.constants.horizon - c.horizon()
}

enum GuardRow {
    Trivial,
    Row(Node),
    Impossible,
}

/// `a <= b` as a guard row with provability folding.
fn le_guard(enc: &Encoder, a: TimePoint, b: TimePoint) -> Option<GuardRow> {
    match enc.cmp_le(a, b, false) {
        Some(true) => Some(GuardRow::Trivial),
        Some(false) => Some(GuardRow::Impossible),
        None => Some(GuardRow::Row(enc.le_row(a, b))),
    }
}

/// Conjunctive parts of an Eventually/Until witness branch on segment
/// (sw, k): the segment overlaps the witness window, starts early enough for
/// the child to be verified in-horizon, and the child holds throughout.
fn witness_branch_parts(
    enc: &Encoder,
    sw: usize,
    k: usize,
    w2: (TimePoint, TimePoint),
    fit: f64,
    inner: Node,
) -> Option<Vec<Node>> {
    if is_falsity(&inner) {
        return None;
    }
    let (a0, a1) = enc.seg_interval(sw, k);
    let mut parts = Vec::new();
    // overlap: a0 <= w2.hi && w2.lo <= a1
    match enc.cmp_le(a0, w2.1, false) {
        Some(false) => return None,
        Some(true) => {}
        None => parts.push(enc.le_row(a0, w2.1)),
    }
    match enc.cmp_le(w2.0, a1, false) {
        Some(false) => return None,
        Some(true) => {}
        None => parts.push(enc.le_row(w2.0, a1)),
    }
    // witness-fit: the earliest witness in this branch is max(a0, w2.lo);
    // both parts must be <= fit.
    let fit_tp = TimePoint::constant(fit);
    match enc.cmp_le(a0, fit_tp, false) {
        Some(false) => return None,
        Some(true) => {}
        None => parts.push(enc.le_row(a0, fit_tp)),
    }
    match enc.cmp_le(w2.0, fit_tp, false) {
        Some(false) => return None,
        Some(true) => {}
        None => parts.push(enc.le_row(w2.0, fit_tp)),
    }
    parts.push(inner);
    Some(parts)
}

fn witness_branch(
    enc: &Encoder,
    sw: usize,
    k: usize,
    w2: (TimePoint, TimePoint),
    fit: f64,
    inner: Node,
) -> Option<Node> {
    witness_branch_parts(enc, sw, k, w2, fit, inner).map(Node::and)
}

/// `segment (sw,k) overlaps window => inner`, with provable cases folded.
/// Returns None when the pair can never overlap on a set with interior.
fn overlap_implies(
    enc: &Encoder,
    sw: usize,
    k: usize,
    w: (TimePoint, TimePoint),
    inner: Node,
) -> Option<Node> {
    let (a0, a1) = enc.seg_interval(sw, k);
    let c1 = enc.cmp_le(a0, w.1, true);
    let c2 = enc.cmp_le(w.0, a1, true);
    if c1 == Some(false) || c2 == Some(false) {
        return None;
    }
    let mut branches = Vec::new();
    if c1.is_none() {
        // No overlap because the segment starts after the window ends.
        branches.push(Node::Leaf(Leaf::Ge0(AffCone::from_lin(
            enc.time_expr(a0).minus(&enc.time_expr(w.1)),
        ))));
    }
    if c2.is_none() {
        branches.push(Node::Leaf(Leaf::Ge0(AffCone::from_lin(
            enc.time_expr(w.0).minus(&enc.time_expr(a1)),
        ))));
    }
    if branches.is_empty() {
        Some(inner)
    } else if is_falsity(&inner) {
        // Implication can only be satisfied by avoiding the overlap.
        Some(if branches.len() == 1 { branches.pop().unwrap() } else { Node::Or(branches) })
    } else {
        branches.push(inner);
        Some(Node::Or(branches))
    }
}

fn enc_atom(enc: &Encoder, a: &SwarmAtom, anchor: Anchor) -> Result<Node, EncodeError> {
    match anchor {
        Anchor::Segment { swarm, k } if swarm == a.swarm => atom_on_segment(enc, a, k),
        Anchor::Root => atom_on_segment(enc, a, 1),
        Anchor::Segment { swarm, k } => {
            let (lo, hi) = enc.seg_interval(swarm, k);
            atom_window(enc, a, (lo, hi))
        }
        Anchor::Window(lo, hi) => atom_window(enc, a, (lo, hi)),
    }
}

/// Endpoint conditions keeping the whole ellipsoid-plus-tube of segment k
/// inside (or outside) the atom's region. Wrapped as a shared subtree so the
/// rows are emitted once however many branches reference them.
fn atom_on_segment(enc: &Encoder, a: &SwarmAtom, k: usize) -> Result<Node, EncodeError> {
    let poly = enc
        .scenario
        .regions
        .get(&a.region)
        .ok_or_else(|| EncodeError::UnknownRegion(a.region.clone()))?;
    let body = if a.negated {
        enc.avoid_polytope(a.swarm, k, poly)
    } else {
        enc.inside_polytope(a.swarm, k, poly)
    };
    Ok(Node::Shared {
        key: crate::expr::SharedKey {
            swarm: a.swarm,
            region: a.region.clone(),
            negated: a.negated,
            k,
        },
        body: Box::new(body),
    })
}

/// Atom must hold at every instant of the window: enforce it on every
/// segment of its swarm whose interval can meet the window.
fn atom_window(
    enc: &Encoder,
    a: &SwarmAtom,
    w: (TimePoint, TimePoint),
) -> Result<Node, EncodeError> {
    let mut parts = Vec::new();
    for k in 1..=enc.seg_count(a.swarm) {
        let inner = atom_on_segment(enc, a, k)?;
        if let Some(n) = overlap_implies(enc, a.swarm, k, w, inner) {
            parts.push(n);
        }
    }
    Ok(Node::and(parts))
}
