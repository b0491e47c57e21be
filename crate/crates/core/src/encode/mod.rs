//! Compile a scenario plus lifted formula into the two alternating
//! subproblems: the waypoint/timestamp MILP (ellipsoids fixed) and the
//! ellipsoid cone problem (waypoints, timestamps, and disjunction choices
//! fixed).
//!
//! Everything is first expressed as an and/or forest of affine-plus-cone
//! constraints (see [`crate::expr`]); `lower` turns the forest into MILP rows
//! with big-M disjunctions, `stage2` re-reads the branches selected by a MILP
//! solution as cone rows in the ellipsoid factors.

mod lower;
mod stage2;
mod stl_enc;

pub use lower::{export_lp, LoweredNode, MilpInstance};
pub use stage2::{build_ellipsoid_problem, EllDef, EllipsoidProblem, Stage2Row};

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::expr::{
    AffCone, ConeKind, EllKey, Family, FamilyTag, Leaf, LinExpr, Node, NormKey, VarId, VarKind,
    VarPool,
};
use crate::scenario::{Polytope, Scenario};
use crate::stl::Lifted;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("formula is unsatisfiable at encode time: {0}")]
    Unsatisfiable(String),
    #[error("region `{0}` is not defined in the scenario")]
    UnknownRegion(String),
}

/// Fixed bounding-ellipsoid matrices per (swarm, segment).
pub type SigmaTable = BTreeMap<EllKey, DMatrix<f64>>;

/// Sigma table with every segment at the swarm's initial matrix.
pub fn initial_sigmas(scenario: &Scenario) -> SigmaTable {
    let mut t = SigmaTable::new();
    for (s, swarm) in scenario.swarms.iter().enumerate() {
        for k in 1..=swarm.segment_count.max(1) {
            t.insert(EllKey { swarm: s, k }, swarm.sigma_init.clone());
        }
    }
    t
}

/// Time point `t_{s,k} + offset`, or an absolute constant. `k = 0` folds to
/// the constant `t0` at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum TimeBase {
    Const,
    Waypoint { swarm: usize, k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct TimePoint {
    pub base: TimeBase,
    /// Absolute value for `Const`, additive offset for `Waypoint`.
    pub offset: f64,
}

impl TimePoint {
    pub fn constant(v: f64) -> Self {
        TimePoint { base: TimeBase::Const, offset: v }
    }

    pub fn shifted(self, dt: f64) -> Self {
        TimePoint { base: self.base, offset: self.offset + dt }
    }
}

/// Encoder state: decision-variable pool plus scenario-derived constants.
pub struct Encoder<'a> {
    pub scenario: &'a Scenario,
    pub sigmas: &'a SigmaTable,
    pub pool: VarPool,
    /// t_vars[s][k-1] = t_{s,k}.
    t_vars: Vec<Vec<VarId>>,
    /// p_vars[s][k-1][c].
    p_vars: Vec<Vec<Vec<VarId>>>,
    /// Initial centroids (constants).
    p0: Vec<DVector<f64>>,
    pub eps: VarId,
    pub eps_cap: f64,
    pub big_y: f64,
}

impl<'a> Encoder<'a> {
    pub fn new(scenario: &'a Scenario, sigmas: &'a SigmaTable) -> Self {
        let mut pool = VarPool::default();
        let c = &scenario.constants;
        let t_end = c.t0 + c.horizon;
        let mut t_vars = Vec::new();
        for (s, swarm) in scenario.swarms.iter().enumerate() {
            let mut row = Vec::new();
            for k in 1..=swarm.segment_count {
                // The final timestamp is pinned to the end of the horizon so
                // segments cover the whole mission window.
                let (lo, hi) = if k == swarm.segment_count { (t_end, t_end) } else { (c.t0, t_end) };
                row.push(pool.add(VarKind::Time { swarm: s, k }, lo, hi));
            }
            t_vars.push(row);
        }
        let (pos_lo, pos_hi) = scenario.position_bounds();
        let mut p_vars = Vec::new();
        for (s, swarm) in scenario.swarms.iter().enumerate() {
            let mut per_k = Vec::new();
            for k in 1..=swarm.segment_count {
                let mut per_c = Vec::new();
                for coord in 0..scenario.dimension {
                    per_c.push(pool.add(
                        VarKind::Pos { swarm: s, k, coord },
                        pos_lo[coord],
                        pos_hi[coord],
                    ));
                }
                per_k.push(per_c);
            }
            p_vars.push(per_k);
        }
        let eps_cap = scenario.epsilon_cap();
        let eps_floor = -10.0 * (eps_cap + 1.0);
        let eps = pool.add(VarKind::Epsilon, eps_floor, eps_cap);
        let p0 = scenario.swarms.iter().map(|s| s.initial_centroid()).collect();
        Encoder {
            scenario,
            sigmas,
            pool,
            t_vars,
            p_vars,
            p0,
            eps,
            eps_cap,
            big_y: scenario.big_m(),
        }
    }

    /// Number of plan segments used for quantification: swarms with no
    /// segments still occupy their initial configuration for the whole
    /// horizon, modeled as one static pseudo-segment.
    pub fn seg_count(&self, s: usize) -> usize {
        self.scenario.swarms[s].segment_count.max(1)
    }

    fn is_pseudo(&self, s: usize) -> bool {
        self.scenario.swarms[s].segment_count == 0
    }

    pub(crate) fn time_point(&self, s: usize, k: usize) -> TimePoint {
        let c = &self.scenario.constants;
        if k == 0 || self.is_pseudo(s) {
            let v = if k == 0 { c.t0 } else { c.t0 + c.horizon };
            TimePoint::constant(v)
        } else {
            TimePoint { base: TimeBase::Waypoint { swarm: s, k }, offset: 0.0 }
        }
    }

    /// Closed time interval of segment k (1-based).
    pub(crate) fn seg_interval(&self, s: usize, k: usize) -> (TimePoint, TimePoint) {
        (self.time_point(s, k - 1), self.time_point(s, k))
    }

    pub(crate) fn time_expr(&self, tp: TimePoint) -> LinExpr {
        match tp.base {
            TimeBase::Const => LinExpr::constant(tp.offset),
            TimeBase::Waypoint { swarm, k } => {
                LinExpr::var(self.t_vars[swarm][k - 1]).offset(tp.offset)
            }
        }
    }

    fn time_bounds(&self, tp: TimePoint) -> (f64, f64) {
        match tp.base {
            TimeBase::Const => (tp.offset, tp.offset),
            TimeBase::Waypoint { swarm, k } => {
                let d = &self.pool.defs[self.t_vars[swarm][k - 1].0];
                (d.lower + tp.offset, d.upper + tp.offset)
            }
        }
    }

    /// Provability of `a <= b`. With `skip_degenerate`, same-chain
    /// comparisons that can only hold through degenerate equality (which
    /// forces zero-length segments with coincident waypoints) count as false;
    /// used only when pruning interval-overlap triggers.
    pub(crate) fn cmp_le(&self, a: TimePoint, b: TimePoint, skip_degenerate: bool) -> Option<bool> {
        const TOL: f64 = 1e-9;
        if let (TimeBase::Waypoint { swarm: sa, k: ka }, TimeBase::Waypoint { swarm: sb, k: kb }) =
            (a.base, b.base)
        {
            if sa == sb {
                if ka <= kb && a.offset <= b.offset + TOL {
                    return Some(true);
                }
                if ka >= kb && a.offset > b.offset + TOL {
                    return Some(false);
                }
                if ka > kb && skip_degenerate && a.offset >= b.offset - TOL {
                    return Some(false);
                }
            }
        }
        let (_, ub_a) = self.time_bounds(a);
        let (lb_a, _) = self.time_bounds(a);
        let (lb_b, ub_b) = self.time_bounds(b);
        if ub_a <= lb_b + TOL {
            return Some(true);
        }
        if lb_a > ub_b + TOL {
            return Some(false);
        }
        None
    }

    /// `b - a` as an expression (>= 0 encodes `a <= b`).
    pub(crate) fn le_row(&self, a: TimePoint, b: TimePoint) -> Node {
        Node::Leaf(Leaf::Ge0(AffCone::from_lin(
            self.time_expr(b).minus(&self.time_expr(a)),
        )))
    }

    /// Waypoint coordinate as an expression; k = 0 and pseudo-segments give
    /// constants.
    pub(crate) fn pos_expr(&self, s: usize, k: usize, coord: usize) -> LinExpr {
        if k == 0 || self.is_pseudo(s) {
            LinExpr::constant(self.p0[s][coord])
        } else {
            LinExpr::var(self.p_vars[s][k - 1][coord])
        }
    }

    pub fn time_var(&self, s: usize, k: usize) -> Option<VarId> {
        if k == 0 || self.is_pseudo(s) {
            None
        } else {
            Some(self.t_vars[s][k - 1])
        }
    }

    pub fn pos_var(&self, s: usize, k: usize, coord: usize) -> Option<VarId> {
        if k == 0 || self.is_pseudo(s) {
            None
        } else {
            Some(self.p_vars[s][k - 1][coord])
        }
    }

    pub fn sigma_of(&self, key: EllKey) -> &DMatrix<f64> {
        self.sigmas
            .get(&key)
            .unwrap_or_else(|| panic!("sigma table is missing ({}, {})", key.swarm, key.k))
    }

    // --- constraint families -------------------------------------------

    /// Timestamp ordering: t0 <= t_{s,1} <= ... <= t_{s,K} <= t0 + T.
    pub fn encode_time_progression(&self) -> Family {
        let c = &self.scenario.constants;
        let mut rows = Vec::new();
        for (s, swarm) in self.scenario.swarms.iter().enumerate() {
            let ks = swarm.segment_count;
            if ks == 0 {
                log::warn!("swarm {} has no segments; it parks at its start for the whole mission", swarm.id);
                continue;
            }
            for k in 1..=ks {
                rows.push(self.le_row(self.time_point(s, k - 1), self.time_point(s, k)));
            }
            rows.push(self.le_row(self.time_point(s, ks), TimePoint::constant(c.t0 + c.horizon)));
        }
        Family { tag: FamilyTag::TimeProgression, root: Node::And(rows) }
    }

    /// Per-segment 1-norm displacement bound `||p_k - p_{k-1}||_1 <= chi dt`.
    pub fn encode_reachability(&self) -> Family {
        let chi = self.scenario.constants.chi;
        let mut leaves = Vec::new();
        for (s, swarm) in self.scenario.swarms.iter().enumerate() {
            for k in 1..=swarm.segment_count {
                let vec: Vec<LinExpr> = (0..self.scenario.dimension)
                    .map(|c| self.pos_expr(s, k, c).minus(&self.pos_expr(s, k - 1, c)))
                    .collect();
                let bound = self
                    .time_expr(self.time_point(s, k))
                    .minus(&self.time_expr(self.time_point(s, k - 1)))
                    .scaled(chi);
                leaves.push(Node::Leaf(Leaf::NormLe { vec, bound }));
            }
        }
        Family { tag: FamilyTag::Reachability, root: Node::And(leaves) }
    }

    /// For every cross-swarm segment pair: either the time intervals are
    /// disjoint or the 1-norm midpoint separation dominates the half-extents
    /// plus the ellipsoid/tube/spacing margin.
    pub fn encode_inter_swarm_safety(&self) -> Family {
        let c = &self.scenario.constants;
        let d = self.scenario.dimension;
        let sqrt_d = (d as f64).sqrt();
        let mut pairs = Vec::new();
        let s_count = self.scenario.swarms.len();
        for s1 in 0..s_count {
            for s2 in s1 + 1..s_count {
                for k1 in 1..=self.seg_count(s1) {
                    for k2 in 1..=self.seg_count(s2) {
                        let (a0, a1) = self.seg_interval(s1, k1);
                        let (b0, b1) = self.seg_interval(s2, k2);
                        // Segment of s1 entirely before segment of s2, or the
                        // reverse.
                        let temporal_a = self.le_row(a1, b0);
                        let temporal_b = self.le_row(b1, a0);

                        let mid = |s: usize, k: usize, coord: usize| {
                            self.pos_expr(s, k - 1, coord)
                                .plus(&self.pos_expr(s, k, coord))
                                .scaled(0.5)
                        };
                        let half = |s: usize, k: usize, coord: usize| {
                            self.pos_expr(s, k - 1, coord)
                                .minus(&self.pos_expr(s, k, coord))
                                .scaled(0.5)
                        };
                        let vec: Vec<LinExpr> =
                            (0..d).map(|coord| mid(s1, k1, coord).minus(&mid(s2, k2, coord))).collect();
                        let h1: Vec<LinExpr> = (0..d).map(|coord| half(s1, k1, coord)).collect();
                        let h2: Vec<LinExpr> = (0..d).map(|coord| half(s2, k2, coord)).collect();
                        let mut rhs = AffCone::from_lin(
                            LinExpr::term(self.eps, sqrt_d)
                                .offset((2.0 * c.eta + c.zeta) * sqrt_d),
                        );
                        rhs.push_cone(EllKey { swarm: s1, k: k1 }, ConeKind::SqrtLambdaMax, sqrt_d);
                        rhs.push_cone(EllKey { swarm: s2, k: k2 }, ConeKind::SqrtLambdaMax, sqrt_d);
                        let spatial = Node::Leaf(Leaf::NormGe {
                            vec,
                            rhs_norms: vec![
                                (NormKey { tag: "half", swarm: s1, k: k1 }, h1),
                                (NormKey { tag: "half", swarm: s2, k: k2 }, h2),
                            ],
                            rhs,
                        });
                        pairs.push(Node::Or(vec![temporal_a, temporal_b, spatial]));
                    }
                }
            }
        }
        Family { tag: FamilyTag::InterSwarmSafety, root: Node::And(pairs) }
    }

    /// Rows keeping one segment's ellipsoid-plus-tube on the safe side of a
    /// halfspace `a^T p + b >= 0`, at both segment endpoints.
    pub(crate) fn halfspace_rows(&self, s: usize, k: usize, a: &[f64], b: f64) -> Node {
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let eta = self.scenario.constants.eta;
        let key = EllKey { swarm: s, k };
        let mut rows = Vec::new();
        for endpoint in [k - 1, k] {
            let mut lin = LinExpr::constant(b - eta * norm);
            for (coord, ac) in a.iter().enumerate() {
                lin = lin.plus(&self.pos_expr(s, endpoint, coord).scaled(*ac));
            }
            lin.add(self.eps, -norm);
            let mut aff = AffCone::from_lin(lin);
            aff.push_cone(key, ConeKind::SqrtQuad(a.to_vec()), -1.0);
            rows.push(Node::Leaf(Leaf::Ge0(aff)));
        }
        Node::And(rows)
    }

    /// Keep every swarm segment outside each obstacle polytope. A one-face
    /// obstacle is the unsafe halfspace itself, so its complement is enforced
    /// directly; multi-face obstacles need only one separating face per
    /// segment, a disjunction resolved by the solver.
    pub fn encode_obstacle_safety(&self) -> Family {
        let mut nodes = Vec::new();
        for obstacle in &self.scenario.obstacles {
            for s in 0..self.scenario.swarms.len() {
                for k in 1..=self.seg_count(s) {
                    nodes.push(self.avoid_polytope(s, k, obstacle));
                }
            }
        }
        Family { tag: FamilyTag::ObstacleSafety, root: Node::And(nodes) }
    }

    /// Ellipsoid-plus-tube of segment (s, k) entirely on the outside of at
    /// least one face of the polytope.
    pub(crate) fn avoid_polytope(&self, s: usize, k: usize, poly: &Polytope) -> Node {
        let mut branches = Vec::new();
        for face in &poly.rows {
            let flipped: Vec<f64> = face.a.iter().map(|x| -x).collect();
            branches.push(self.halfspace_rows(s, k, &flipped, -face.b));
        }
        if branches.len() == 1 {
            branches.pop().unwrap()
        } else {
            Node::Or(branches)
        }
    }

    /// Ellipsoid-plus-tube of segment (s, k) inside every face of the region.
    pub(crate) fn inside_polytope(&self, s: usize, k: usize, poly: &Polytope) -> Node {
        Node::And(
            poly.rows
                .iter()
                .map(|face| self.halfspace_rows(s, k, &face.a, face.b))
                .collect(),
        )
    }

    /// Margin cap: epsilon <= workspace diameter (inert once any real
    /// constraint binds; keeps the objective bounded for empty formulas).
    pub fn encode_margin_cap(&self) -> Family {
        let row = Node::Leaf(Leaf::Ge0(AffCone::from_lin(
            LinExpr::term(self.eps, -1.0).offset(self.eps_cap),
        )));
        Family { tag: FamilyTag::MarginCap, root: row }
    }

    /// Swarm STL family for a lifted formula.
    pub fn encode_swarm_stl(&self, lifted: &Lifted) -> Result<Family, EncodeError> {
        let root = stl_enc::encode_root(self, lifted)?;
        Ok(Family { tag: FamilyTag::SwarmStl, root })
    }

    /// Volume lower bounds `log det(Sigma_{s,k}) >= 2 log(xi |N_s| zeta^d)`.
    /// The right-hand sides, indexed like the ellipsoid table.
    pub fn encode_volume(&self) -> BTreeMap<EllKey, f64> {
        let c = &self.scenario.constants;
        let d = self.scenario.dimension as i32;
        let mut out = BTreeMap::new();
        for (s, swarm) in self.scenario.swarms.iter().enumerate() {
            let rhs = 2.0 * (c.xi * swarm.agent_count() as f64 * c.zeta.powi(d)).ln();
            for k in 1..=self.seg_count(s) {
                out.insert(EllKey { swarm: s, k }, rhs);
            }
        }
        out
    }

    /// All stage-1 families in deterministic order.
    pub fn build_forest(&self, lifted: &Lifted) -> Result<Vec<Family>, EncodeError> {
        Ok(vec![
            self.encode_time_progression(),
            self.encode_reachability(),
            self.encode_inter_swarm_safety(),
            self.encode_obstacle_safety(),
            self.encode_swarm_stl(lifted)?,
            self.encode_margin_cap(),
        ])
    }
}

/// Assemble the waypoint/timestamp MILP with all constraint families and the
/// `max epsilon` objective, ellipsoids fixed from `sigmas`.
pub fn build_milp(
    scenario: &Scenario,
    lifted: &Lifted,
    sigmas: &SigmaTable,
) -> Result<MilpInstance, EncodeError> {
    let encoder = Encoder::new(scenario, sigmas);
    let families = encoder.build_forest(lifted)?;
    Ok(lower::lower(encoder, families, sigmas))
}
