//! Problem data: agents, swarms, environment geometry, planner constants,
//! and the JSON document format they are loaded from.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LpProblem, LpStatus, Sense};
use crate::stl::{self, Formula, FormulaError, ParseContext};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("json parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
    #[error("formula: {0}")]
    Formula(#[from] FormulaError),
}

fn invalid(path: impl Into<String>, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { path: path.into(), msg: msg.into() }
}

/// Position and velocity of one agent, both of dimension `d`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AgentState {
    pub p: Vec<f64>,
    pub v: Vec<f64>,
}

/// One swarm: its agents, per-swarm segment budget, and initial bounding
/// ellipsoid matrix.
#[derive(Debug, Clone)]
pub struct SwarmSpec {
    pub id: usize,
    pub segment_count: usize,
    pub agents: Vec<AgentState>,
    pub sigma_init: DMatrix<f64>,
}

impl SwarmSpec {
    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn initial_centroid(&self) -> DVector<f64> {
        let d = self.agents[0].p.len();
        let mut c = DVector::zeros(d);
        for a in &self.agents {
            c += DVector::from_column_slice(&a.p);
        }
        c / self.agents.len() as f64
    }
}

/// Linear safety constraint `a^T p + b >= 0` (the safe side is nonnegative).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub b: f64,
}

/// Convex region `{p : a_r^T p + b_r >= 0 for every row r}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Polytope {
    pub rows: Vec<Halfspace>,
}

impl Polytope {
    /// Axis-aligned box `[lo, hi]` in dimension `d` as four (2d) faces.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Self {
        let d = lo.len();
        let mut rows = Vec::with_capacity(2 * d);
        for k in 0..d {
            let mut a = vec![0.0; d];
            a[k] = 1.0;
            rows.push(Halfspace { a: a.clone(), b: -lo[k] }); // p_k >= lo
            let mut a2 = vec![0.0; d];
            a2[k] = -1.0;
            rows.push(Halfspace { a: a2, b: hi[k] }); // p_k <= hi
        }
        Polytope { rows }
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        self.rows.iter().all(|r| {
            r.a.iter().zip(p).map(|(a, x)| a * x).sum::<f64>() + r.b >= -tol
        })
    }

    /// Signed safety margin for the complement: positive when `p` is outside
    /// the region, scaled per face by the row norm.
    pub fn outside_margin(&self, p: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let act: f64 = r.a.iter().zip(p).map(|(a, x)| a * x).sum::<f64>() + r.b;
                let norm: f64 = r.a.iter().map(|x| x * x).sum::<f64>().sqrt();
                -act / norm.max(1e-300)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Chebyshev-style feasibility check: the largest `r` such that every row
    /// has slack at least `r * ||a_r||`. Nonnegative iff the region is
    /// nonempty (positive iff it has interior).
    pub fn feasibility_radius(&self, box_half_width: f64) -> Option<f64> {
        let d = self.rows.first().map(|r| r.a.len())?;
        let mut p = LpProblem::default();
        for _ in 0..d {
            p.add_var(-box_half_width, box_half_width, 0.0);
        }
        let r = p.add_var(-box_half_width, box_half_width, 1.0);
        for row in &self.rows {
            let norm: f64 = row.a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut cols: Vec<usize> = (0..d).collect();
            let mut coefs = row.a.clone();
            cols.push(r);
            coefs.push(-norm);
            p.add_row(cols, coefs, Sense::Ge, -row.b);
        }
        match lp::solve_lp(&p) {
            Ok(sol) if sol.status == LpStatus::Optimal => Some(sol.objective),
            _ => None,
        }
    }

    /// Vertices of a 2-D polytope by pairwise face intersection (used for
    /// workspace estimation and plotting).
    pub fn vertices_2d(&self) -> Vec<[f64; 2]> {
        let mut verts = Vec::new();
        let n = self.rows.len();
        for i in 0..n {
            for j in i + 1..n {
                let (r1, r2) = (&self.rows[i], &self.rows[j]);
                let det = r1.a[0] * r2.a[1] - r1.a[1] * r2.a[0];
                if det.abs() < 1e-12 {
                    continue;
                }
                // Solve a1.p = -b1, a2.p = -b2.
                let x = (-r1.b * r2.a[1] - -r2.b * r1.a[1]) / det;
                let y = (r1.a[0] * -r2.b - r2.a[0] * -r1.b) / det;
                if self.contains(&[x, y], 1e-7) {
                    verts.push([x, y]);
                }
            }
        }
        verts
    }
}

/// Planner-wide constants.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PlannerConstants {
    /// Centroid tracking-error bound (m).
    pub eta: f64,
    /// Minimum inter-agent distance (m).
    pub zeta: f64,
    /// Actuation bound on waypoint displacement per unit time (m/s).
    pub chi: f64,
    /// Bounding-ellipsoid volume inflation factor, > 1.
    pub xi: f64,
    /// Mission horizon T (s).
    pub horizon: f64,
    /// Mission start time (s).
    pub t0: f64,
    /// Maximum alternating iterations.
    pub tau_max: usize,
    /// Big-M constant; derived from the workspace when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub big_m: Option<f64>,
}

/// A validated multi-swarm planning problem.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub dimension: usize,
    pub constants: PlannerConstants,
    pub swarms: Vec<SwarmSpec>,
    pub obstacles: Vec<Polytope>,
    pub regions: BTreeMap<String, Polytope>,
    pub formula_text: String,
}

// --- document form -------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct SwarmDoc {
    id: usize,
    segments: usize,
    agents: Vec<AgentState>,
    /// Row-major d x d matrix. When absent, the isotropic matrix meeting the
    /// volume floor with equality is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma_init: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioDoc {
    dimension: usize,
    constants: PlannerConstants,
    swarms: Vec<SwarmDoc>,
    #[serde(default)]
    obstacles: Vec<Polytope>,
    #[serde(default)]
    regions: BTreeMap<String, Polytope>,
    formula: String,
}

/// Summary of the initial-configuration checks: pairwise spacing within each
/// swarm and membership of every agent in its initial ellipsoid.
#[derive(Debug, Clone, Serialize)]
pub struct InitialConfigReport {
    pub pairwise_violations: Vec<PairViolation>,
    pub membership_violations: Vec<MembershipViolation>,
    pub min_pairwise_distance: f64,
    pub worst_membership_value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairViolation {
    pub swarm: usize,
    pub agent_i: usize,
    pub agent_j: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MembershipViolation {
    pub swarm: usize,
    pub agent: usize,
    pub value: f64,
}

/// Workspace bounding box in position space, with the derived scale constants.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Workspace {
    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l) * (h - l))
            .sum::<f64>()
            .sqrt()
    }
}

impl Scenario {
    /// Parse and validate a scenario document.
    pub fn load_str(text: &str) -> Result<Self, ScenarioError> {
        let doc: ScenarioDoc = serde_json::from_str(text)?;
        Self::from_doc(doc)
    }

    fn from_doc(doc: ScenarioDoc) -> Result<Self, ScenarioError> {
        let d = doc.dimension;
        if d == 0 {
            return Err(invalid("dimension", "must be >= 1"));
        }
        let c = &doc.constants;
        if c.eta < 0.0 {
            return Err(invalid("constants.eta", "must be >= 0"));
        }
        if c.zeta <= 0.0 {
            return Err(invalid("constants.zeta", "must be > 0"));
        }
        if c.chi <= 0.0 {
            return Err(invalid("constants.chi", "must be > 0"));
        }
        if c.xi <= 1.0 {
            return Err(invalid("constants.xi", "must be > 1"));
        }
        if c.horizon <= 0.0 {
            return Err(invalid("constants.horizon", "must be > 0"));
        }
        if c.tau_max < 1 {
            return Err(invalid("constants.tau_max", "must be >= 1"));
        }
        if let Some(y) = c.big_m {
            if y <= 0.0 {
                return Err(invalid("constants.big_m", "must be > 0"));
            }
        }
        if doc.swarms.is_empty() {
            return Err(invalid("swarms", "at least one swarm required"));
        }

        let mut swarms = Vec::with_capacity(doc.swarms.len());
        for (i, s) in doc.swarms.iter().enumerate() {
            let path = format!("swarms[{i}]");
            if s.agents.is_empty() {
                return Err(invalid(format!("{path}.agents"), "must be nonempty"));
            }
            for (j, a) in s.agents.iter().enumerate() {
                if a.p.len() != d || a.v.len() != d {
                    return Err(invalid(
                        format!("{path}.agents[{j}]"),
                        format!("position/velocity must have dimension {d}"),
                    ));
                }
            }
            let sigma = match &s.sigma_init {
                Some(entries) => {
                    if entries.len() != d * d {
                        return Err(invalid(
                            format!("{path}.sigma_init"),
                            format!("expected {} entries (row-major {d}x{d})", d * d),
                        ));
                    }
                    let sigma = DMatrix::from_row_slice(d, d, entries);
                    if (&sigma - sigma.transpose()).abs().max() > 1e-9 {
                        return Err(invalid(format!("{path}.sigma_init"), "must be symmetric"));
                    }
                    if sigma.clone().cholesky().is_none() {
                        return Err(invalid(format!("{path}.sigma_init"), "must be positive definite"));
                    }
                    sigma
                }
                None => {
                    let det_target =
                        (c.xi * s.agents.len() as f64 * c.zeta.powi(d as i32)).powi(2);
                    DMatrix::identity(d, d) * det_target.powf(1.0 / d as f64)
                }
            };
            swarms.push(SwarmSpec {
                id: s.id,
                segment_count: s.segments,
                agents: s.agents.clone(),
                sigma_init: sigma,
            });
        }
        swarms.sort_by_key(|s| s.id);
        for w in swarms.windows(2) {
            if w[0].id == w[1].id {
                return Err(invalid("swarms", format!("duplicate swarm id {}", w[0].id)));
            }
        }

        for (oi, o) in doc.obstacles.iter().enumerate() {
            validate_polytope(o, d, &format!("obstacles[{oi}]"))?;
        }
        for (name, r) in &doc.regions {
            validate_polytope(r, d, &format!("regions.{name}"))?;
        }

        let scenario = Scenario {
            dimension: d,
            constants: doc.constants,
            swarms,
            obstacles: doc.obstacles,
            regions: doc.regions,
            formula_text: doc.formula,
        };

        // Region nonemptiness via LP feasibility.
        let half = scenario.workspace().diameter().max(1.0) * 10.0;
        for (name, r) in &scenario.regions {
            match r.feasibility_radius(half) {
                Some(rad) if rad >= -1e-9 => {}
                _ => return Err(invalid(format!("regions.{name}"), "region is empty")),
            }
        }
        for (oi, o) in scenario.obstacles.iter().enumerate() {
            match o.feasibility_radius(half) {
                Some(rad) if rad >= -1e-9 => {}
                _ => return Err(invalid(format!("obstacles[{oi}]"), "obstacle is empty")),
            }
        }

        // Formula must parse against the declared regions.
        scenario.parse_formula()?;

        // Initial configuration is a hard invariant at load time.
        let report = scenario.validate_initial_configuration();
        if !report.pass {
            let msg = report
                .pairwise_violations
                .first()
                .map(|v| {
                    format!(
                        "agents {} and {} of swarm {} start {:.4} m apart (zeta = {})",
                        v.agent_i, v.agent_j, v.swarm, v.distance, scenario.constants.zeta
                    )
                })
                .or_else(|| {
                    report.membership_violations.first().map(|v| {
                        format!(
                            "agent {} of swarm {} starts outside its initial ellipsoid (value {:.4})",
                            v.agent, v.swarm, v.value
                        )
                    })
                })
                .unwrap_or_else(|| "initial configuration invalid".into());
            return Err(invalid("swarms", msg));
        }
        Ok(scenario)
    }

    /// Serialize back to the document schema.
    pub fn to_json(&self) -> String {
        let doc = ScenarioDoc {
            dimension: self.dimension,
            constants: self.constants.clone(),
            swarms: self
                .swarms
                .iter()
                .map(|s| SwarmDoc {
                    id: s.id,
                    segments: s.segment_count,
                    agents: s.agents.clone(),
                    sigma_init: Some(s.sigma_init.transpose().iter().cloned().collect::<Vec<_>>()),
                })
                .collect(),
            obstacles: self.obstacles.clone(),
            regions: self.regions.clone(),
            formula: self.formula_text.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("scenario serialization cannot fail")
    }

    pub fn total_agents(&self) -> usize {
        self.swarms.iter().map(|s| s.agent_count()).sum()
    }

    /// Swarm index (position in `self.swarms`) -> agent count.
    pub fn swarm_sizes(&self) -> BTreeMap<usize, usize> {
        self.swarms.iter().enumerate().map(|(i, s)| (i, s.agent_count())).collect()
    }

    pub fn parse_formula(&self) -> Result<Formula, FormulaError> {
        let names: Vec<String> = self.regions.keys().cloned().collect();
        let ctx = ParseContext {
            regions: &names,
            total_agents: self.total_agents(),
            min_swarm_size: self.swarms.iter().map(|s| s.agent_count()).min().unwrap_or(1),
        };
        stl::parse(&self.formula_text, &ctx)
    }

    /// Pairwise spacing and ellipsoid membership of the initial states.
    /// Distances exactly at `zeta` pass (the bound is inclusive).
    pub fn validate_initial_configuration(&self) -> InitialConfigReport {
        let mut pairwise = Vec::new();
        let mut membership = Vec::new();
        let mut min_dist = f64::INFINITY;
        let mut worst_val = 0.0f64;
        for (si, s) in self.swarms.iter().enumerate() {
            let centroid = s.initial_centroid();
            let chol = s.sigma_init.clone().cholesky().expect("validated SPD");
            for i in 0..s.agents.len() {
                for j in i + 1..s.agents.len() {
                    let dist: f64 = s.agents[i]
                        .p
                        .iter()
                        .zip(&s.agents[j].p)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    min_dist = min_dist.min(dist);
                    if dist < self.constants.zeta - 1e-12 {
                        pairwise.push(PairViolation {
                            swarm: si,
                            agent_i: i,
                            agent_j: j,
                            distance: dist,
                        });
                    }
                }
                let dvec = DVector::from_column_slice(&s.agents[i].p) - &centroid;
                let val = dvec.dot(&chol.solve(&dvec));
                worst_val = worst_val.max(val);
                if val > 1.0 + 1e-9 {
                    membership.push(MembershipViolation { swarm: si, agent: i, value: val });
                }
            }
        }
        InitialConfigReport {
            pass: pairwise.is_empty() && membership.is_empty(),
            pairwise_violations: pairwise,
            membership_violations: membership,
            min_pairwise_distance: min_dist,
            worst_membership_value: worst_val,
        }
    }

    /// Position-space bounding box of everything named by the scenario:
    /// initial agent positions and the vertices of all regions and obstacles.
    pub fn workspace(&self) -> Workspace {
        let d = self.dimension;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let mut absorb = |p: &[f64]| {
            for k in 0..d {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        };
        for s in &self.swarms {
            for a in &s.agents {
                absorb(&a.p);
            }
        }
        if d == 2 {
            for poly in self.obstacles.iter().chain(self.regions.values()) {
                for v in poly.vertices_2d() {
                    absorb(&v);
                }
            }
        }
        for k in 0..d {
            if lo[k] > hi[k] {
                lo[k] = 0.0;
                hi[k] = 0.0;
            }
        }
        Workspace { lo, hi }
    }

    /// Big-M constant: explicit override or `1e3 * (workspace diameter + chi T)`.
    pub fn big_m(&self) -> f64 {
        self.constants.big_m.unwrap_or_else(|| {
            1e3 * (self.workspace().diameter() + self.constants.chi * self.constants.horizon)
        })
    }

    /// Cap on the feasibility margin: the workspace diameter.
    pub fn epsilon_cap(&self) -> f64 {
        self.workspace().diameter().max(1.0)
    }

    /// Box that certainly contains every reachable waypoint: initial
    /// positions inflated by the maximum travel `chi * horizon`.
    pub fn position_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dimension;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for s in &self.swarms {
            for a in &s.agents {
                for k in 0..d {
                    lo[k] = lo[k].min(a.p[k]);
                    hi[k] = hi[k].max(a.p[k]);
                }
            }
        }
        let travel = self.constants.chi * self.constants.horizon + 1.0;
        for k in 0..d {
            lo[k] -= travel;
            hi[k] += travel;
        }
        (lo, hi)
    }
}

fn validate_polytope(p: &Polytope, d: usize, path: &str) -> Result<(), ScenarioError> {
    if p.rows.is_empty() {
        return Err(invalid(path, "polytope must have at least one face"));
    }
    for (ri, r) in p.rows.iter().enumerate() {
        if r.a.len() != d {
            return Err(invalid(format!("{path}.rows[{ri}]"), format!("face normal must have dimension {d}")));
        }
        if r.a.iter().all(|x| *x == 0.0) {
            return Err(invalid(format!("{path}.rows[{ri}]"), "face normal must be nonzero"));
        }
    }
    Ok(())
}
