//! Linear expressions over planner decision variables, optionally carrying
//! ellipsoid cone terms, plus the and/or constraint forest the encoder
//! produces.
//!
//! The same forest serves three consumers: it is lowered to a MILP (cone
//! terms become constants for fixed ellipsoids), re-read as the cone problem
//! for the ellipsoid stage (selected branches keep their cone terms
//! symbolic), and evaluated directly by the post-solve audits.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::geometry;

/// Decision variable handle. Ordering is fixed at creation time: timestamps,
/// then waypoint coordinates in (swarm, segment, coordinate) order, then the
/// feasibility margin, then lowering auxiliaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub enum VarKind {
    /// t_{s,k}, 1-based segment index.
    Time { swarm: usize, k: usize },
    /// Waypoint coordinate of p_{s,k}.
    Pos { swarm: usize, k: usize, coord: usize },
    /// Feasibility margin maximized by both stages.
    Epsilon,
    /// Lowering auxiliary (1-norm pieces).
    Aux(&'static str),
    /// Disjunction selector or sign binary.
    Binary(&'static str),
}

#[derive(Debug, Clone)]
pub struct VarDef {
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub binary: bool,
}

#[derive(Debug, Clone, Default)]
pub struct VarPool {
    pub defs: Vec<VarDef>,
}

impl VarPool {
    pub fn add(&mut self, kind: VarKind, lower: f64, upper: f64) -> VarId {
        self.defs.push(VarDef { kind, lower, upper, binary: false });
        VarId(self.defs.len() - 1)
    }

    pub fn add_binary(&mut self, tag: &'static str) -> VarId {
        self.defs.push(VarDef { kind: VarKind::Binary(tag), lower: 0.0, upper: 1.0, binary: true });
        VarId(self.defs.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }
}

/// Sparse affine expression `sum coef_i x_i + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: BTreeMap<VarId, f64>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: BTreeMap::new(), constant: c }
    }

    pub fn var(v: VarId) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(v, 1.0);
        Self { terms, constant: 0.0 }
    }

    pub fn term(v: VarId, coef: f64) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(v, coef);
        Self { terms, constant: 0.0 }
    }

    pub fn add(&mut self, v: VarId, coef: f64) {
        if coef == 0.0 {
            return;
        }
        let e = self.terms.entry(v).or_insert(0.0);
        *e += coef;
        if *e == 0.0 {
            self.terms.remove(&v);
        }
    }

    pub fn plus(mut self, other: &LinExpr) -> LinExpr {
        for (&v, &c) in &other.terms {
            self.add(v, c);
        }
        self.constant += other.constant;
        self
    }

    pub fn minus(mut self, other: &LinExpr) -> LinExpr {
        for (&v, &c) in &other.terms {
            self.add(v, -c);
        }
        self.constant -= other.constant;
        self
    }

    pub fn scaled(mut self, f: f64) -> LinExpr {
        for c in self.terms.values_mut() {
            *c *= f;
        }
        self.constant *= f;
        self
    }

    pub fn offset(mut self, c: f64) -> LinExpr {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * x[v.0]).sum::<f64>()
    }

    /// Interval of possible values given the variable boxes.
    pub fn range(&self, pool: &VarPool) -> (f64, f64) {
        self.range_pinned(pool, &[])
    }

    /// Interval of possible values with some variables pinned to a value.
    pub fn range_pinned(&self, pool: &VarPool, pins: &[(VarId, f64)]) -> (f64, f64) {
        let mut lo = self.constant;
        let mut hi = self.constant;
        for (&v, &c) in &self.terms {
            if let Some((_, val)) = pins.iter().find(|(pv, _)| *pv == v) {
                lo += c * val;
                hi += c * val;
                continue;
            }
            let d = &pool.defs[v.0];
            if c >= 0.0 {
                lo += c * d.lower;
                hi += c * d.upper;
            } else {
                lo += c * d.upper;
                hi += c * d.lower;
            }
        }
        (lo, hi)
    }
}

/// Identifies the bounding-ellipsoid matrix of one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EllKey {
    pub swarm: usize,
    /// 1-based segment index.
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConeKind {
    /// sqrt(a^T Sigma a)
    SqrtQuad(Vec<f64>),
    /// sqrt(lambda_max(Sigma))
    SqrtLambdaMax,
}

/// `coef * cone(Sigma_ell)` appearing inside an affine-plus-cone expression.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeTerm {
    pub ell: EllKey,
    pub kind: ConeKind,
    pub coef: f64,
}

impl ConeTerm {
    pub fn value(&self, sigma: &DMatrix<f64>) -> f64 {
        let base = match &self.kind {
            ConeKind::SqrtQuad(a) => {
                let av = nalgebra::DVector::from_column_slice(a);
                (av.dot(&(sigma * &av))).max(0.0).sqrt()
            }
            ConeKind::SqrtLambdaMax => geometry::sqrt_lambda_max_of(sigma),
        };
        self.coef * base
    }
}

/// Affine expression plus ellipsoid cone terms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffCone {
    pub lin: LinExpr,
    pub cones: Vec<ConeTerm>,
}

impl AffCone {
    pub fn from_lin(lin: LinExpr) -> Self {
        Self { lin, cones: Vec::new() }
    }

    pub fn push_cone(&mut self, ell: EllKey, kind: ConeKind, coef: f64) {
        self.cones.push(ConeTerm { ell, kind, coef });
    }

    pub fn eval(&self, x: &[f64], sigmas: &dyn Fn(EllKey) -> DMatrix<f64>) -> f64 {
        self.lin.eval(x) + self.cones.iter().map(|c| c.value(&sigmas(c.ell))).sum::<f64>()
    }
}

/// Key for de-duplicating 1-norm epigraph variables across constraints.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct NormKey {
    pub tag: &'static str,
    pub swarm: usize,
    pub k: usize,
}

/// Atomic constraint of the forest.
#[derive(Debug, Clone, PartialEq)]
pub enum Leaf {
    /// expr >= 0
    Ge0(AffCone),
    /// ||vec||_1 <= bound
    NormLe { vec: Vec<LinExpr>, bound: LinExpr },
    /// ||vec||_1 >= sum_j ||rhs_norms_j||_1 + rhs
    NormGe { vec: Vec<LinExpr>, rhs_norms: Vec<(NormKey, Vec<LinExpr>)>, rhs: AffCone },
}

impl Leaf {
    /// Signed slack; nonnegative iff the constraint holds.
    pub fn slack(&self, x: &[f64], sigmas: &dyn Fn(EllKey) -> DMatrix<f64>) -> f64 {
        match self {
            Leaf::Ge0(a) => a.eval(x, sigmas),
            Leaf::NormLe { vec, bound } => {
                bound.eval(x) - vec.iter().map(|e| e.eval(x).abs()).sum::<f64>()
            }
            Leaf::NormGe { vec, rhs_norms, rhs } => {
                let lhs: f64 = vec.iter().map(|e| e.eval(x).abs()).sum();
                let norms: f64 = rhs_norms
                    .iter()
                    .map(|(_, v)| v.iter().map(|e| e.eval(x).abs()).sum::<f64>())
                    .sum();
                lhs - norms - rhs.eval(x, sigmas)
            }
        }
    }

    /// True when the leaf depends on an ellipsoid matrix.
    pub fn has_cones(&self) -> bool {
        match self {
            Leaf::Ge0(a) => !a.cones.is_empty(),
            Leaf::NormLe { .. } => false,
            Leaf::NormGe { rhs, .. } => !rhs.cones.is_empty(),
        }
    }
}

/// Identity of a shareable subtree: endpoint conditions of one atom on one
/// segment. Occurrences under different disjunction branches lower to a
/// single indicator binary and one copy of the rows.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SharedKey {
    pub swarm: usize,
    pub region: String,
    pub negated: bool,
    pub k: usize,
}

/// And/or tree over leaves. `And([])` is trivially true; `Or([])` is
/// infeasible and rejected at encode time.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(Leaf),
    And(Vec<Node>),
    Or(Vec<Node>),
    Shared { key: SharedKey, body: Box<Node> },
}

impl Node {
    pub fn and(mut nodes: Vec<Node>) -> Node {
        nodes.retain(|n| !matches!(n, Node::And(v) if v.is_empty()));
        if nodes.len() == 1 {
            nodes.pop().unwrap()
        } else {
            Node::And(nodes)
        }
    }

    pub fn truth() -> Node {
        Node::And(Vec::new())
    }

    /// Worst-case slack: min over conjuncts, max over disjuncts. A
    /// nonnegative value means the tree is satisfied.
    pub fn slack(&self, x: &[f64], sigmas: &dyn Fn(EllKey) -> DMatrix<f64>) -> f64 {
        match self {
            Node::Leaf(l) => l.slack(x, sigmas),
            Node::And(cs) => cs
                .iter()
                .map(|c| c.slack(x, sigmas))
                .fold(f64::INFINITY, f64::min),
            Node::Or(cs) => cs
                .iter()
                .map(|c| c.slack(x, sigmas))
                .fold(f64::NEG_INFINITY, f64::max),
            Node::Shared { body, .. } => body.slack(x, sigmas),
        }
    }

    /// Upper bound on the slack over the variable boxes (ellipsoids fixed,
    /// margin pinned to zero): a negative value proves the subtree can never
    /// be satisfied at a nonnegative margin.
    pub fn slack_upper(
        &self,
        pool: &VarPool,
        eps: VarId,
        sigmas: &dyn Fn(EllKey) -> DMatrix<f64>,
    ) -> f64 {
        let pins = [(eps, 0.0)];
        fn min_abs(range: (f64, f64)) -> f64 {
            if range.0 <= 0.0 && range.1 >= 0.0 {
                0.0
            } else {
                range.0.abs().min(range.1.abs())
            }
        }
        fn max_abs(range: (f64, f64)) -> f64 {
            range.0.abs().max(range.1.abs())
        }
        match self {
            Node::Leaf(Leaf::Ge0(aff)) => {
                aff.lin.range_pinned(pool, &pins).1
                    + aff.cones.iter().map(|c| c.value(&sigmas(c.ell))).sum::<f64>()
            }
            Node::Leaf(Leaf::NormLe { vec, bound }) => {
                bound.range_pinned(pool, &pins).1
                    - vec.iter().map(|e| min_abs(e.range_pinned(pool, &pins))).sum::<f64>()
            }
            Node::Leaf(Leaf::NormGe { vec, rhs_norms, rhs }) => {
                let lhs: f64 = vec.iter().map(|e| max_abs(e.range_pinned(pool, &pins))).sum();
                let norms: f64 = rhs_norms
                    .iter()
                    .map(|(_, v)| {
                        v.iter().map(|e| min_abs(e.range_pinned(pool, &pins))).sum::<f64>()
                    })
                    .sum();
                let rhs_lo = rhs.lin.range_pinned(pool, &pins).0
                    + rhs.cones.iter().map(|c| c.value(&sigmas(c.ell))).sum::<f64>();
                lhs - norms - rhs_lo
            }
            Node::And(cs) => cs
                .iter()
                .map(|c| c.slack_upper(pool, eps, sigmas))
                .fold(f64::INFINITY, f64::min),
            Node::Or(cs) => cs
                .iter()
                .map(|c| c.slack_upper(pool, eps, sigmas))
                .fold(f64::NEG_INFINITY, f64::max),
            Node::Shared { body, .. } => body.slack_upper(pool, eps, sigmas),
        }
    }

    pub fn count_leaves(&self) -> usize {
        match self {
            Node::Leaf(_) => 1,
            Node::And(cs) | Node::Or(cs) => cs.iter().map(|c| c.count_leaves()).sum(),
            Node::Shared { body, .. } => body.count_leaves(),
        }
    }

    pub fn count_ors(&self) -> usize {
        match self {
            Node::Leaf(_) => 0,
            Node::And(cs) => cs.iter().map(|c| c.count_ors()).sum(),
            Node::Or(cs) => 1 + cs.iter().map(|c| c.count_ors()).sum::<usize>(),
            Node::Shared { body, .. } => body.count_ors(),
        }
    }
}

/// Constraint family tags used for audit reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FamilyTag {
    TimeProgression,
    HorizonPin,
    Reachability,
    InterSwarmSafety,
    ObstacleSafety,
    SwarmStl,
    MarginCap,
}

impl FamilyTag {
    pub fn name(&self) -> &'static str {
        match self {
            FamilyTag::TimeProgression => "time-progression",
            FamilyTag::HorizonPin => "horizon-pin",
            FamilyTag::Reachability => "reachability",
            FamilyTag::InterSwarmSafety => "inter-swarm-safety",
            FamilyTag::ObstacleSafety => "obstacle-safety",
            FamilyTag::SwarmStl => "swarm-stl",
            FamilyTag::MarginCap => "margin-cap",
        }
    }
}

/// A tagged constraint family.
#[derive(Debug, Clone)]
pub struct Family {
    pub tag: FamilyTag,
    pub root: Node,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linexpr_algebra() {
        let mut pool = VarPool::default();
        let a = pool.add(VarKind::Epsilon, -1.0, 2.0);
        let b = pool.add(VarKind::Aux("t"), 0.0, 3.0);
        let e = LinExpr::var(a).scaled(2.0).plus(&LinExpr::term(b, -1.0)).offset(0.5);
        assert_eq!(e.eval(&[1.0, 2.0]), 2.0 - 2.0 + 0.5);
        let (lo, hi) = e.range(&pool);
        assert_eq!(lo, -2.0 - 3.0 + 0.5);
        assert_eq!(hi, 4.0 + 0.5);
    }

    #[test]
    fn node_slack_min_max() {
        let leaf = |c: f64| Node::Leaf(Leaf::Ge0(AffCone::from_lin(LinExpr::constant(c))));
        let sig = |_k: EllKey| DMatrix::<f64>::identity(2, 2);
        let tree = Node::And(vec![leaf(1.0), Node::Or(vec![leaf(-2.0), leaf(0.5)])]);
        assert_eq!(tree.slack(&[], &sig), 0.5);
        let tree = Node::And(vec![leaf(1.0), Node::Or(vec![leaf(-2.0), leaf(-0.5)])]);
        assert_eq!(tree.slack(&[], &sig), -0.5);
    }

    #[test]
    fn cone_term_values() {
        let sigma = DMatrix::from_row_slice(2, 2, &[0.01, 0.0, 0.0, 0.04]);
        let t = ConeTerm { ell: EllKey { swarm: 0, k: 1 }, kind: ConeKind::SqrtQuad(vec![0.0, 1.0]), coef: -1.0 };
        assert!((t.value(&sigma) - (-0.2)).abs() < 1e-12);
        let t = ConeTerm { ell: EllKey { swarm: 0, k: 1 }, kind: ConeKind::SqrtLambdaMax, coef: 1.0 };
        assert!((t.value(&sigma) - 0.2).abs() < 1e-12);
    }
}
