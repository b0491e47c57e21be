//! Lowering of the constraint forest to MILP rows.
//!
//! Disjunctions become big-M relaxed rows guarded by selector binaries.
//! Two-way disjunctions use a single binary with both polarities; wider ones
//! get one binary per branch plus a cover row. Each relaxed row uses the
//! tightest valid M derived from the variable boxes (never more than the
//! scenario's big-M constant would allow). 1-norm lower bounds are
//! linearized with one sign binary per coordinate; 1-norm upper bounds with
//! epigraph pairs, de-duplicated across constraints by their norm key.

use std::collections::BTreeMap;

use crate::expr::{
    EllKey, Family, Leaf, LinExpr, Node, NormKey, SharedKey, VarId, VarKind, VarPool,
};
use crate::lp::{LpProblem, Sense};

use super::{Encoder, SigmaTable};

/// Parallel structure to [`Node`] recording which binaries select which
/// branches; used to read the active branches back out of a MILP solution.
#[derive(Debug, Clone)]
pub enum LoweredNode {
    /// Sign binaries created for this leaf's 1-norm linearization (empty for
    /// plain rows).
    Leaf(Vec<VarId>),
    And(Vec<LoweredNode>),
    /// Children with their activation guard (binary, required polarity).
    Or(Vec<(VarId, bool, LoweredNode)>),
    /// Indicator binary of a shared subtree (body stored once in
    /// `MilpInstance::shared`).
    Shared(VarId),
}

#[derive(Debug, Clone)]
pub struct SharedEntry {
    pub key: SharedKey,
    pub indicator: VarId,
    pub body: Node,
    pub lowered: LoweredNode,
}

/// The waypoint/timestamp MILP plus everything needed to audit it and to
/// build the follow-up ellipsoid problem.
pub struct MilpInstance {
    pub lp: LpProblem,
    pub pool: VarPool,
    pub binaries: Vec<VarId>,
    pub eps: VarId,
    pub eps_cap: f64,
    pub families: Vec<Family>,
    pub lowered: Vec<LoweredNode>,
    pub shared: Vec<SharedEntry>,
    pub sigmas: SigmaTable,
    /// t_vars[s][k-1]; empty row for swarms without segments.
    pub time_vars: Vec<Vec<VarId>>,
    /// p_vars[s][k-1][coord].
    pub pos_vars: Vec<Vec<Vec<VarId>>>,
    /// Initial centroids.
    pub p0: Vec<Vec<f64>>,
}

struct LowerCtx<'a> {
    pool: &'a mut VarPool,
    rows: Vec<(LinExpr, f64)>, // expr >= rhs-normalized: expr >= 0
    binaries: Vec<VarId>,
    beta_cache: BTreeMap<NormKey, Vec<VarId>>,
    shared_cache: BTreeMap<SharedKey, usize>, // index into shared
    shared: Vec<SharedEntry>,
}

type Guard = Vec<(VarId, bool)>;

impl<'a> LowerCtx<'a> {
    /// Emit `expr >= 0`, relaxed by big-M terms for every guard entry.
    fn emit_ge0(&mut self, expr: LinExpr, guard: &Guard) {
        let mut e = expr;
        if !guard.is_empty() {
            let (lo, _) = e.range_with(self.pool);
            let m = (-lo).max(0.0) + 1.0;
            for &(z, polarity) in guard {
                if polarity {
                    // + m (1 - z)
                    e.constant += m;
                    e.add(z, -m);
                } else {
                    // + m z
                    e.add(z, m);
                }
            }
        }
        self.rows.push((e, 0.0));
    }

    fn add_binary(&mut self, tag: &'static str) -> VarId {
        let v = self.pool.add_binary(tag);
        self.binaries.push(v);
        v
    }

    fn lower_node(&mut self, node: &Node, guard: &Guard, sigmas: &SigmaTable) -> LoweredNode {
        match node {
            Node::Leaf(l) => {
                let signs = self.lower_leaf(l, guard, sigmas);
                LoweredNode::Leaf(signs)
            }
            Node::And(cs) => LoweredNode::And(
                cs.iter().map(|c| self.lower_node(c, guard, sigmas)).collect(),
            ),
            Node::Or(cs) => match cs.len() {
                0 => {
                    // Infeasible disjunction: active guard path forbidden.
                    self.emit_ge0(LinExpr::constant(-1.0), guard);
                    LoweredNode::Leaf(Vec::new())
                }
                1 => self.lower_node(&cs[0], guard, sigmas),
                2 => {
                    let z = self.add_binary("or2");
                    let mut g0 = guard.clone();
                    g0.push((z, true));
                    let l0 = self.lower_node(&cs[0], &g0, sigmas);
                    let mut g1 = guard.clone();
                    g1.push((z, false));
                    let l1 = self.lower_node(&cs[1], &g1, sigmas);
                    LoweredNode::Or(vec![(z, true, l0), (z, false, l1)])
                }
                _ => {
                    let zs: Vec<VarId> = cs.iter().map(|_| self.add_binary("or")).collect();
                    let mut cover = LinExpr::constant(-1.0);
                    for &z in &zs {
                        cover.add(z, 1.0);
                    }
                    self.emit_ge0(cover, guard);
                    let children = cs
                        .iter()
                        .zip(&zs)
                        .map(|(c, &z)| {
                            let mut g = guard.clone();
                            g.push((z, true));
                            (z, true, self.lower_node(c, &g, sigmas))
                        })
                        .collect();
                    LoweredNode::Or(children)
                }
            },
            Node::Shared { key, body } => {
                if let Some(&idx) = self.shared_cache.get(key) {
                    let ind = self.shared[idx].indicator;
                    // Guard active => indicator raised.
                    self.emit_ge0(LinExpr::var(ind).offset(-1.0), guard);
                    return LoweredNode::Shared(ind);
                }
                let ind = self.add_binary("atom");
                // Reserve the slot before lowering the body so nested shares
                // (none today) cannot alias the index.
                let idx = self.shared.len();
                self.shared_cache.insert(key.clone(), idx);
                self.shared.push(SharedEntry {
                    key: key.clone(),
                    indicator: ind,
                    body: (**body).clone(),
                    lowered: LoweredNode::Leaf(Vec::new()),
                });
                let lowered_body = self.lower_node(body, &vec![(ind, true)], sigmas);
                self.shared[idx].lowered = lowered_body;
                self.emit_ge0(LinExpr::var(ind).offset(-1.0), guard);
                LoweredNode::Shared(ind)
            }
        }
    }

    fn lower_leaf(&mut self, leaf: &Leaf, guard: &Guard, sigmas: &SigmaTable) -> Vec<VarId> {
        let mut signs = Vec::new();
        match leaf {
            Leaf::Ge0(aff) => {
                let mut e = aff.lin.clone();
                for c in &aff.cones {
                    e.constant += c.value(&sigmas[&c.ell]);
                }
                self.emit_ge0(e, guard);
            }
            Leaf::NormLe { vec, bound } => {
                let d = vec.len();
                for mask in 0..(1usize << d) {
                    let mut e = bound.clone();
                    for (i, v) in vec.iter().enumerate() {
                        let sign = if mask & (1 << i) != 0 { 1.0 } else { -1.0 };
                        e = e.minus(&v.clone().scaled(sign));
                    }
                    self.emit_ge0(e, guard);
                }
            }
            Leaf::NormGe { vec, rhs_norms, rhs } => {
                // alpha_i <= |vec_i| via one sign binary per coordinate.
                let mut main = LinExpr::constant(0.0);
                for v in vec.iter() {
                    let (lo, hi) = v.range_with(self.pool);
                    let r = lo.abs().max(hi.abs()) + 1.0;
                    let alpha = self.pool.add(VarKind::Aux("abs"), -r, r);
                    let w = self.add_binary("sign");
                    signs.push(w);
                    self.emit_ge0(
                        v.clone().minus(&LinExpr::var(alpha)),
                        &vec![(w, true)],
                    );
                    self.emit_ge0(
                        v.clone().scaled(-1.0).minus(&LinExpr::var(alpha)),
                        &vec![(w, false)],
                    );
                    main.add(alpha, 1.0);
                }
                // beta_{key,i} >= |rhs_i| epigraphs, shared by key.
                for (key, exprs) in rhs_norms {
                    let betas = match self.beta_cache.get(key) {
                        Some(b) => b.clone(),
                        None => {
                            let mut b = Vec::new();
                            for v in exprs.iter() {
                                let (lo, hi) = v.range_with(self.pool);
                                let r = lo.abs().max(hi.abs()) + 1.0;
                                let beta = self.pool.add(VarKind::Aux("epi"), 0.0, r);
                                self.rows.push((LinExpr::var(beta).minus(v), 0.0));
                                self.rows.push((LinExpr::var(beta).plus(v), 0.0));
                                b.push(beta);
                            }
                            self.beta_cache.insert(key.clone(), b.clone());
                            b
                        }
                    };
                    for &beta in &betas {
                        main.add(beta, -1.0);
                    }
                }
                let mut e = main.minus(&rhs.lin);
                for c in &rhs.cones {
                    e.constant -= c.value(&sigmas[&c.ell]);
                }
                self.emit_ge0(e, guard);
            }
        }
        signs
    }
}

/// Lower the families to an [`MilpInstance`], consuming the encoder.
pub(crate) fn lower(
    encoder: Encoder,
    families: Vec<Family>,
    sigmas: &SigmaTable,
) -> MilpInstance {
    let scenario = encoder.scenario;
    let time_vars: Vec<Vec<VarId>> = (0..scenario.swarms.len())
        .map(|s| {
            (1..=scenario.swarms[s].segment_count)
                .map(|k| encoder.time_var(s, k).expect("real segment"))
                .collect()
        })
        .collect();
    let pos_vars: Vec<Vec<Vec<VarId>>> = (0..scenario.swarms.len())
        .map(|s| {
            (1..=scenario.swarms[s].segment_count)
                .map(|k| {
                    (0..scenario.dimension)
                        .map(|c| encoder.pos_var(s, k, c).expect("real segment"))
                        .collect()
                })
                .collect()
        })
        .collect();
    let p0: Vec<Vec<f64>> = scenario
        .swarms
        .iter()
        .map(|s| s.initial_centroid().iter().cloned().collect())
        .collect();
    let eps = encoder.eps;
    let eps_cap = encoder.eps_cap;
    let mut pool = encoder.pool;

    let mut ctx = LowerCtx {
        pool: &mut pool,
        rows: Vec::new(),
        binaries: Vec::new(),
        beta_cache: BTreeMap::new(),
        shared_cache: BTreeMap::new(),
        shared: Vec::new(),
    };
    let lowered: Vec<LoweredNode> = families
        .iter()
        .map(|f| ctx.lower_node(&f.root, &Vec::new(), sigmas))
        .collect();
    let rows = std::mem::take(&mut ctx.rows);
    let binaries = std::mem::take(&mut ctx.binaries);
    let shared = std::mem::take(&mut ctx.shared);
    drop(ctx);

    let mut lp = LpProblem::default();
    for def in &pool.defs {
        lp.add_var(def.lower, def.upper, 0.0);
    }
    lp.objective[eps.0] = 1.0;
    for (expr, rhs) in rows {
        let cols: Vec<usize> = expr.terms.keys().map(|v| v.0).collect();
        let coefs: Vec<f64> = expr.terms.values().cloned().collect();
        lp.add_row(cols, coefs, Sense::Ge, rhs - expr.constant);
    }

    MilpInstance {
        lp,
        pool,
        binaries,
        eps,
        eps_cap,
        families,
        lowered,
        shared,
        sigmas: sigmas.clone(),
        time_vars,
        pos_vars,
        p0,
    }
}

impl MilpInstance {
    pub fn var_name(&self, v: VarId) -> String {
        match &self.pool.defs[v.0].kind {
            VarKind::Time { swarm, k } => format!("t_s{swarm}_k{k}"),
            VarKind::Pos { swarm, k, coord } => format!("p_s{swarm}_k{k}_{coord}"),
            VarKind::Epsilon => "eps".into(),
            VarKind::Aux(tag) => format!("aux{}_{tag}", v.0),
            VarKind::Binary(tag) => format!("z{}_{tag}", v.0),
        }
    }

    /// Evaluate each family's worst slack at a MILP solution (using the
    /// fixed sigma table the instance was built with).
    pub fn family_slacks(&self, x: &[f64]) -> Vec<(&'static str, f64)> {
        let sig = |k: EllKey| self.sigmas[&k].clone();
        self.families
            .iter()
            .map(|f| (f.tag.name(), f.root.slack(x, &sig)))
            .collect()
    }

    /// Post-solve big-M audit: every disjunction on a required path must
    /// have at least one branch holding by direct arithmetic, without big-M
    /// slack. The walk descends through the holding branch of each
    /// disjunction (disjunctions inside abandoned branches impose nothing).
    /// Returns the worst disjunction slack found (>= -tol means sound).
    pub fn disjunction_audit(&self, x: &[f64]) -> f64 {
        let sig = |k: EllKey| self.sigmas[&k].clone();
        let mut worst = f64::INFINITY;
        fn walk(n: &Node, x: &[f64], sig: &dyn Fn(EllKey) -> nalgebra::DMatrix<f64>, worst: &mut f64) {
            match n {
                Node::Leaf(_) => {}
                Node::And(cs) => cs.iter().for_each(|c| walk(c, x, sig, worst)),
                Node::Or(cs) => {
                    let best = cs
                        .iter()
                        .enumerate()
                        .map(|(i, c)| (i, c.slack(x, sig)))
                        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
                    if let Some((i, slack)) = best {
                        *worst = worst.min(slack);
                        walk(&cs[i], x, sig, worst);
                    } else {
                        *worst = f64::NEG_INFINITY;
                    }
                }
                Node::Shared { body, .. } => walk(body, x, sig, worst),
            }
        }
        for f in &self.families {
            walk(&f.root, x, &sig, &mut worst);
        }
        worst
    }
}

/// Debug export in LP text format: objective, rows, bounds, binary markers.
pub fn export_lp(instance: &MilpInstance) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    out.push_str("\\ swarm waypoint/timestamp stage\nMaximize\n obj: eps\nSubject To\n");
    for (i, row) in instance.lp.rows.iter().enumerate() {
        let mut line = format!(" c{i}:");
        for (c, a) in row.cols.iter().zip(&row.coefs) {
            let name = instance.var_name(VarId(*c));
            if *a >= 0.0 {
                let _ = write!(line, " +{a} {name}");
            } else {
                let _ = write!(line, " {a} {name}");
            }
        }
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, "{line} {op} {}", row.rhs);
    }
    out.push_str("Bounds\n");
    for (j, def) in instance.pool.defs.iter().enumerate() {
        let _ = writeln!(
            out,
            " {} <= {} <= {}",
            def.lower,
            instance.var_name(VarId(j)),
            def.upper
        );
    }
    out.push_str("Binaries\n");
    for b in &instance.binaries {
        let _ = writeln!(out, " {}", instance.var_name(*b));
    }
    out.push_str("End\n");
    out
}

impl LinExpr {
    /// Interval of possible values over the pool's variable boxes.
    pub(crate) fn range_with(&self, pool: &VarPool) -> (f64, f64) {
        self.range(pool)
    }
}
