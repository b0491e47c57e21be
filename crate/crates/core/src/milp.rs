//! Branch-and-bound over the LP relaxation.
//!
//! Exact at desk scale: best-bound node selection with deterministic
//! tie-breaking (deeper node, then creation order, 0-branch first), branching
//! on the lowest-index fractional binary. An optional LP-guided dive finds an
//! early incumbent, and an optional objective target stops the search as soon
//! as the incumbent certifies feasibility at the required margin (the bound
//! proof is skipped, not the feasibility of the returned assignment).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::encode::MilpInstance;
use crate::lp::{LpError, LpStatus, Simplex};

const INT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("node budget of {budget} exhausted after exploring {explored} nodes")]
    NodeBudget { budget: usize, explored: usize },
    #[error("lp failure: {0}")]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone)]
pub struct MilpOptions {
    pub node_budget: usize,
    /// Stop as soon as an integral incumbent reaches this objective.
    pub target_objective: Option<f64>,
    /// Run an LP-guided rounding dive before the tree search.
    pub dive: bool,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self { node_budget: 2_000_000, target_objective: None, dive: true }
    }
}

#[derive(Debug, Clone)]
pub enum MilpOutcome {
    /// Proven optimal over all binary assignments.
    Optimal { x: Vec<f64>, objective: f64 },
    /// Integral and feasible; search stopped at the objective target.
    Feasible { x: Vec<f64>, objective: f64 },
    Infeasible,
}

impl MilpOutcome {
    pub fn solution(&self) -> Option<(&[f64], f64)> {
        match self {
            MilpOutcome::Optimal { x, objective } | MilpOutcome::Feasible { x, objective } => {
                Some((x, *objective))
            }
            MilpOutcome::Infeasible => None,
        }
    }
}

struct TreeNode {
    fixings: Vec<(usize, bool)>,
    bound: f64,
    depth: usize,
    seq: usize,
}

impl PartialEq for TreeNode {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for TreeNode {}
impl Ord for TreeNode {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap: larger bound first, then deeper, then earlier creation.
        self.bound
            .partial_cmp(&other.bound)
            .unwrap_or(Ordering::Equal)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for TreeNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn solve_milp(instance: &MilpInstance, options: &MilpOptions) -> Result<MilpOutcome, MilpError> {
    let mut engine = Simplex::new(&instance.lp);
    let binaries: Vec<usize> = instance.binaries.iter().map(|v| v.0).collect();

    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut explored = 0usize;

    let mut current: Vec<Option<bool>> = vec![None; binaries.len()];
    let switch_to = |engine: &mut Simplex, current: &mut Vec<Option<bool>>, fixings: &[(usize, bool)]| {
        let mut target: Vec<Option<bool>> = vec![None; binaries.len()];
        for &(bi, v) in fixings {
            target[bi] = Some(v);
        }
        for (bi, (&cur, &tgt)) in current.iter().zip(&target).enumerate() {
            if cur != tgt {
                let col = binaries[bi];
                match tgt {
                    None => engine.set_bounds(col, 0.0, 1.0),
                    Some(false) => engine.set_bounds(col, 0.0, 0.0),
                    Some(true) => engine.set_bounds(col, 1.0, 1.0),
                }
            }
        }
        *current = target;
    };

    let first_fractional = |x: &[f64]| -> Option<usize> {
        binaries
            .iter()
            .enumerate()
            .find(|(_, &col)| {
                let v = x[col];
                (v - v.round()).abs() > INT_TOL
            })
            .map(|(bi, _)| bi)
    };

    // Root relaxation.
    switch_to(&mut engine, &mut current, &[]);
    let root = engine.solve()?;
    if root.status == LpStatus::Infeasible {
        return Ok(MilpOutcome::Infeasible);
    }
    let root_bound = root.objective;

    // Slack-guided dive: progressively fix each constraint family's
    // disjunctions to their best-satisfied branch at the current LP point,
    // re-solving in between so later choices see the geometry committed by
    // earlier ones. Task structure first, then obstacle faces, then
    // inter-swarm branches, then everything left. Pure incumbent heuristic;
    // failures fall through to the tree search.
    if options.dive && !binaries.is_empty() {
        let bin_index: std::collections::BTreeMap<usize, usize> =
            binaries.iter().enumerate().map(|(bi, &col)| (col, bi)).collect();
        let family_order: Vec<Vec<usize>> = {
            use crate::expr::FamilyTag;
            let idx = |tag: FamilyTag| {
                instance
                    .families
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| f.tag == tag)
                    .map(|(i, _)| i)
                    .collect::<Vec<_>>()
            };
            vec![
                idx(FamilyTag::SwarmStl),
                idx(FamilyTag::ObstacleSafety),
                (0..instance.families.len()).collect(),
            ]
        };
        let mut frozen: std::collections::BTreeMap<usize, bool> = std::collections::BTreeMap::new();
        let mut sol = root.clone();
        let mut rounds: Vec<Option<Vec<usize>>> =
            family_order.into_iter().map(Some).collect();
        rounds.push(None); // final refresh round: default all leftovers
        for (round, families) in rounds.into_iter().enumerate() {
            let finalize = families.is_none();
            slack_guided_fixings(
                instance,
                &sol.x,
                &bin_index,
                families.as_deref(),
                &mut frozen,
            );
            let fixings: Vec<(usize, bool)> = if finalize {
                // Everything not chosen by any family defaults to 0.
                (0..binaries.len())
                    .map(|bi| (bi, frozen.get(&bi).cloned().unwrap_or(false)))
                    .collect()
            } else {
                frozen.iter().map(|(&bi, &v)| (bi, v)).collect()
            };
            switch_to(&mut engine, &mut current, &fixings);
            match engine.solve() {
                Ok(s) if s.status == LpStatus::Optimal => {
                    log::debug!(
                        "dive round {round}: lp objective {:.6} ({} fixed)",
                        s.objective,
                        fixings.len()
                    );
                    if finalize && first_fractional(&s.x).is_none() {
                        let better = incumbent.as_ref().map_or(true, |(_, o)| s.objective > *o);
                        if better {
                            log::debug!("dive incumbent: objective {:.6}", s.objective);
                            incumbent = Some((s.x.clone(), s.objective));
                        }
                    }
                    sol = s;
                }
                other => {
                    log::debug!(
                        "dive round {round}: lp failed: {:?}",
                        other.map(|s| s.status)
                    );
                    break;
                }
            }
        }
    }

    let target_met = |inc: &Option<(Vec<f64>, f64)>| target_reached(inc, options.target_objective);

    if target_met(&incumbent) {
        let (x, objective) = incumbent.unwrap();
        return Ok(MilpOutcome::Feasible { x, objective });
    }

    let mut heap: BinaryHeap<TreeNode> = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(TreeNode { fixings: Vec::new(), bound: root_bound, depth: 0, seq });

    while let Some(node) = heap.pop() {
        if let Some((_, inc_obj)) = &incumbent {
            if node.bound <= inc_obj + 1e-9 {
                continue;
            }
        }
        explored += 1;
        if explored > options.node_budget {
            return Err(MilpError::NodeBudget { budget: options.node_budget, explored });
        }
        switch_to(&mut engine, &mut current, &node.fixings);
        let sol = engine.solve()?;
        if sol.status == LpStatus::Infeasible {
            continue;
        }
        if let Some((_, inc_obj)) = &incumbent {
            if sol.objective <= inc_obj + 1e-9 {
                continue;
            }
        }
        match first_fractional(&sol.x) {
            None => {
                log::debug!(
                    "node {explored}: integral incumbent {:.6} (depth {})",
                    sol.objective,
                    node.depth
                );
                incumbent = Some((sol.x.clone(), sol.objective));
                if target_met(&incumbent) {
                    let (x, objective) = incumbent.unwrap();
                    return Ok(MilpOutcome::Feasible { x, objective });
                }
            }
            Some(bi) => {
                // 0-branch first: gets the smaller sequence number, so it is
                // explored first among equal bounds.
                for &value in &[false, true] {
                    seq += 1;
                    let mut fixings = node.fixings.clone();
                    fixings.push((bi, value));
                    heap.push(TreeNode {
                        fixings,
                        bound: sol.objective,
                        depth: node.depth + 1,
                        seq,
                    });
                }
            }
        }
        if explored % 500 == 0 {
            log::debug!(
                "nodes {explored}, open {}, incumbent {:?}",
                heap.len(),
                incumbent.as_ref().map(|(_, o)| *o)
            );
        }
    }

    Ok(match incumbent {
        Some((x, objective)) => MilpOutcome::Optimal { x, objective },
        None => MilpOutcome::Infeasible,
    })
}

fn target_reached(inc: &Option<(Vec<f64>, f64)>, target: Option<f64>) -> bool {
    matches!((inc, target), (Some((_, obj)), Some(t)) if *obj >= t)
}

/// Walk selected families of the constraint forest at an LP point and record
/// binary choices keeping the best-satisfied branch of each disjunction
/// active: two-way selectors take their better child, wider disjunctions
/// raise the argmax-slack child and drop the rest, shared-atom indicators
/// rise exactly when a chosen branch needs them, and 1-norm sign binaries
/// follow the signs of their coordinate expressions. Already-frozen binaries
/// keep their values; new choices are inserted into `frozen`.
fn slack_guided_fixings(
    instance: &MilpInstance,
    x: &[f64],
    bin_index: &std::collections::BTreeMap<usize, usize>,
    families: Option<&[usize]>,
    frozen: &mut std::collections::BTreeMap<usize, bool>,
) {
    use crate::expr::{EllKey, Leaf, Node};
    #[allow(unused_imports)]
    use crate::expr::VarPool;
    use crate::encode::LoweredNode;

    let sig = |k: EllKey| instance.sigmas[&k].clone();

    fn walk(
        node: &Node,
        lowered: &LoweredNode,
        x: &[f64],
        sig: &dyn Fn(EllKey) -> nalgebra::DMatrix<f64>,
        pool: &crate::expr::VarPool,
        eps: crate::expr::VarId,
        bin_index: &std::collections::BTreeMap<usize, usize>,
        frozen: &mut std::collections::BTreeMap<usize, bool>,
        shared_demand: &mut std::collections::BTreeSet<usize>,
    ) {
        let mut set = |bin: crate::expr::VarId, v: bool, frozen: &mut std::collections::BTreeMap<usize, bool>| {
            frozen.entry(bin_index[&bin.0]).or_insert(v);
        };
        match (node, lowered) {
            (Node::Leaf(leaf), LoweredNode::Leaf(signs)) => {
                if let Leaf::NormGe { vec, .. } = leaf {
                    for (v, w) in vec.iter().zip(signs) {
                        set(*w, v.eval(x) >= 0.0, frozen);
                    }
                }
            }
            (Node::And(cs), LoweredNode::And(ls)) => {
                for (c, l) in cs.iter().zip(ls) {
                    walk(c, l, x, sig, pool, eps, bin_index, frozen, shared_demand);
                }
            }
            (Node::Or(cs), LoweredNode::Or(ls)) if ls.len() == 2 && cs.len() == 2 => {
                let z = ls[0].0;
                let chosen = match frozen.get(&bin_index[&z.0]) {
                    Some(&v) => {
                        if v == ls[0].1 { 0 } else { 1 }
                    }
                    None => {
                        let score = |c: &Node| {
                            let feasible = c.slack_upper(pool, eps, sig) >= -1e-9;
                            (feasible, c.slack(x, sig))
                        };
                        let (f0, s0) = score(&cs[0]);
                        let (f1, s1) = score(&cs[1]);
                        let pick_first = (f0, s0) >= (f1, s1);
                        set(z, pick_first == ls[0].1, frozen);
                        if pick_first { 0 } else { 1 }
                    }
                };
                walk(&cs[chosen], &ls[chosen].2, x, sig, pool, eps, bin_index, frozen, shared_demand);
            }
            (Node::Or(cs), LoweredNode::Or(ls)) => {
                // Respect an earlier freeze if one child was already raised.
                let prior = ls.iter().position(|(z, polarity, _)| {
                    frozen.get(&bin_index[&z.0]).map_or(false, |v| *v == *polarity)
                });
                let best = prior.unwrap_or_else(|| {
                    cs.iter()
                        .enumerate()
                        .map(|(i, c)| {
                            let feasible = c.slack_upper(pool, eps, sig) >= -1e-9;
                            (i, (feasible, c.slack(x, sig)))
                        })
                        .max_by(|a, b| {
                            a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal)
                        })
                        .map(|(i, _)| i)
                        .unwrap_or(0)
                });
                for (i, (z, polarity, l)) in ls.iter().enumerate() {
                    let active = i == best;
                    set(*z, active == *polarity, frozen);
                    if active {
                        walk(&cs[i], l, x, sig, pool, eps, bin_index, frozen, shared_demand);
                    }
                }
            }
            (Node::Or(cs), lw) if cs.len() == 1 => {
                walk(&cs[0], lw, x, sig, pool, eps, bin_index, frozen, shared_demand)
            }
            (Node::Or(_), LoweredNode::Leaf(_)) => {}
            (Node::Shared { .. }, LoweredNode::Shared(ind)) => {
                shared_demand.insert(ind.0);
            }
            (n, l) => unreachable!("forest/lowered mismatch in dive: {n:?} vs {l:?}"),
        }
    }

    let mut demand = std::collections::BTreeSet::new();
    for (fi, (family, lowered)) in instance.families.iter().zip(&instance.lowered).enumerate() {
        if families.map_or(true, |list| list.contains(&fi)) {
            walk(&family.root, lowered, x, &sig, &instance.pool, instance.eps, bin_index, frozen, &mut demand);
        }
    }
    // Shared bodies chosen anywhere get their indicator and their own nested
    // choices; demands can cascade through bodies referencing other atoms.
    let mut done = std::collections::BTreeSet::new();
    while let Some(ind) = demand.iter().next().cloned() {
        demand.remove(&ind);
        if !done.insert(ind) {
            continue;
        }
        let entry = instance
            .shared
            .iter()
            .find(|e| e.indicator.0 == ind)
            .expect("shared indicator registered");
        frozen.insert(bin_index[&ind], true);
        walk(&entry.body, &entry.lowered, x, &sig, &instance.pool, instance.eps, bin_index, frozen, &mut demand);
    }
}

/// Max violation of any row or bound at `x` (for re-verification).
pub fn solution_residual(instance: &MilpInstance, x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for row in &instance.lp.rows {
        let act: f64 = row.cols.iter().zip(&row.coefs).map(|(&c, &a)| a * x[c]).sum();
        let viol = match row.sense {
            crate::lp::Sense::Le => act - row.rhs,
            crate::lp::Sense::Ge => row.rhs - act,
            crate::lp::Sense::Eq => (act - row.rhs).abs(),
        };
        worst = worst.max(viol);
    }
    for (j, (&lo, &hi)) in instance.lp.lower.iter().zip(&instance.lp.upper).enumerate() {
        worst = worst.max(lo - x[j]).max(x[j] - hi);
    }
    worst
}
