//! Re-read the branches a MILP solution activated as a cone problem in the
//! ellipsoid factors: maximize epsilon subject to the active rows with
//! waypoints, timestamps, and disjunction choices frozen.

use nalgebra::DMatrix;

use crate::expr::{ConeTerm, EllKey, Leaf, Node, VarId};
use crate::scenario::Scenario;

use super::lower::{LoweredNode, MilpInstance};

/// One bounding-ellipsoid matrix of the second stage.
#[derive(Debug, Clone)]
pub struct EllDef {
    pub key: EllKey,
    pub dim: usize,
    /// Fixed matrices are not decision variables: the first segment keeps the
    /// matrix the real initial configuration was validated against.
    pub fixed: bool,
    /// Starting value (the matrix the MILP stage was built with).
    pub warm: DMatrix<f64>,
    /// Volume floor: log det(Sigma) >= vol_rhs.
    pub vol_rhs: f64,
}

/// Active constraint row: `constant + eps_coef * eps + sum cone_terms >= 0`.
#[derive(Debug, Clone)]
pub struct Stage2Row {
    pub constant: f64,
    pub eps_coef: f64,
    pub cones: Vec<ConeTerm>,
}

#[derive(Debug, Clone)]
pub struct EllipsoidProblem {
    pub ells: Vec<EllDef>,
    pub rows: Vec<Stage2Row>,
    pub eps_cap: f64,
    /// Epsilon achieved by the MILP stage at the warm-start matrices.
    pub eps_warm: f64,
}

impl EllipsoidProblem {
    pub fn ell_index(&self, key: EllKey) -> usize {
        self.ells
            .iter()
            .position(|e| e.key == key)
            .expect("row references an ellipsoid missing from the table")
    }
}

/// Extract the cone problem for the branches selected by `x`.
///
/// Rows with no ellipsoid dependence and no epsilon term were fully decided
/// by stage 1; they are checked (debug) and dropped. Temporal-disjointness
/// branches thus vanish here: timestamps are fixed, so only the activated
/// spatial rows survive.
pub fn build_ellipsoid_problem(
    instance: &MilpInstance,
    scenario: &Scenario,
    x: &[f64],
) -> EllipsoidProblem {
    let mut rows: Vec<Stage2Row> = Vec::new();
    let eps = instance.eps;

    for (family, lowered) in instance.families.iter().zip(&instance.lowered) {
        collect(&family.root, lowered, x, eps, &mut rows);
    }
    for entry in &instance.shared {
        if x[entry.indicator.0] >= 0.5 {
            collect(&entry.body, &entry.lowered, x, eps, &mut rows);
        }
    }

    let vol = {
        let enc = super::Encoder::new(scenario, &instance.sigmas);
        enc.encode_volume()
    };
    let ells = instance
        .sigmas
        .iter()
        .map(|(key, warm)| EllDef {
            key: *key,
            dim: scenario.dimension,
            fixed: key.k == 1,
            warm: warm.clone(),
            vol_rhs: vol[key],
        })
        .collect();

    EllipsoidProblem {
        ells,
        rows,
        eps_cap: instance.eps_cap,
        eps_warm: x[eps.0],
    }
}

fn collect(node: &Node, lowered: &LoweredNode, x: &[f64], eps: VarId, out: &mut Vec<Stage2Row>) {
    match (node, lowered) {
        (Node::Leaf(leaf), LoweredNode::Leaf(_)) => {
            if let Some(row) = leaf_row(leaf, x, eps) {
                out.push(row);
            }
        }
        (Node::And(cs), LoweredNode::And(ls)) => {
            debug_assert_eq!(cs.len(), ls.len());
            for (c, l) in cs.iter().zip(ls) {
                collect(c, l, x, eps, out);
            }
        }
        (Node::Or(cs), lw @ LoweredNode::Leaf(_)) => {
            // Empty or single-child disjunction collapsed at lowering.
            if cs.len() == 1 {
                collect(&cs[0], lw, x, eps, out);
            }
        }
        (Node::Or(cs), LoweredNode::Or(ls)) => {
            for ((z, polarity, l), c) in ls.iter().zip(cs) {
                let active = (x[z.0] >= 0.5) == *polarity;
                if active {
                    collect(c, l, x, eps, out);
                }
            }
        }
        (Node::Or(cs), lw) if cs.len() == 1 => collect(&cs[0], lw, x, eps, out),
        (Node::Shared { .. }, LoweredNode::Shared(_)) => {
            // Bodies are walked once from `MilpInstance::shared`.
        }
        (n, l) => unreachable!("forest/lowered mismatch: {n:?} vs {l:?}"),
    }
}

fn leaf_row(leaf: &Leaf, x: &[f64], eps: VarId) -> Option<Stage2Row> {
    match leaf {
        Leaf::Ge0(aff) => {
            let eps_coef = aff.lin.terms.get(&eps).cloned().unwrap_or(0.0);
            if aff.cones.is_empty() && eps_coef == 0.0 {
                debug_assert!(
                    aff.lin.eval(x) >= -1e-6,
                    "stage-1 fixed row violated: {:.3e}",
                    aff.lin.eval(x)
                );
                return None;
            }
            let constant = aff.lin.eval(x) - eps_coef * x[eps.0];
            Some(Stage2Row { constant, eps_coef, cones: aff.cones.clone() })
        }
        Leaf::NormLe { vec, bound } => {
            let lhs: f64 = vec.iter().map(|e| e.eval(x).abs()).sum();
            debug_assert!(bound.eval(x) - lhs >= -1e-6, "reachability row violated");
            None
        }
        Leaf::NormGe { vec, rhs_norms, rhs } => {
            // Exact norms replace the stage-1 linearization.
            let lhs: f64 = vec.iter().map(|e| e.eval(x).abs()).sum();
            let norms: f64 = rhs_norms
                .iter()
                .map(|(_, v)| v.iter().map(|e| e.eval(x).abs()).sum::<f64>())
                .sum();
            let eps_coef = rhs.lin.terms.get(&eps).cloned().unwrap_or(0.0);
            let rhs_rest = rhs.lin.eval(x) - eps_coef * x[eps.0];
            let cones = rhs
                .cones
                .iter()
                .map(|c| ConeTerm { ell: c.ell, kind: c.kind.clone(), coef: -c.coef })
                .collect();
            Some(Stage2Row {
                constant: lhs - norms - rhs_rest,
                eps_coef: -eps_coef,
                cones,
            })
        }
    }
}
