//! Alternating planner: repeat (waypoint/timestamp MILP with ellipsoids
//! fixed) then (ellipsoid cone stage with waypoints, timestamps, and branch
//! choices fixed) until the feasibility margin is nonnegative or the
//! iteration budget runs out.
//!
//! A failed run is reported as `unknown`, never as unsatisfiable: the margin
//! search is sound but not complete. The best margin and its path are still
//! emitted so the monitors can show which property falls short.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::encode::{self, build_ellipsoid_problem, build_milp, EncodeError, SigmaTable};
use crate::ellipsoid::{solve_ellipsoids, EllipsoidError};
use crate::expr::EllKey;
use crate::geometry;
use crate::milp::{solve_milp, MilpError, MilpOptions};
use crate::scenario::Scenario;
use crate::sim::transition_offsets;
use crate::stl::{lift, Formula, FormulaError, Lifted};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("formula: {0}")]
    Formula(#[from] FormulaError),
    #[error("encoder: {0}")]
    Encode(#[from] EncodeError),
    #[error("waypoint stage infeasible at iteration {iteration}: specification unsatisfiable under the current ellipsoids")]
    MilpInfeasible { iteration: usize },
    #[error("waypoint stage: {0}")]
    Milp(#[from] MilpError),
    #[error("ellipsoid stage: {0}")]
    Ellipsoid(#[from] EllipsoidError),
    #[error("swarm {swarm}: initial ellipsoid violates the volume floor (log det {logdet:.4} < {rhs:.4})")]
    SigmaInitVolume { swarm: usize, logdet: f64, rhs: f64 },
}

/// One timestamped waypoint with the ellipsoid matrix of the segment that
/// ends at it (the first waypoint carries the first segment's matrix).
#[derive(Debug, Clone)]
pub struct Waypoint {
    pub t: f64,
    pub p: Vec<f64>,
    pub sigma: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SwarmPath {
    pub id: usize,
    pub waypoints: Vec<Waypoint>,
}

/// Planned reduced-dimension path for all swarms.
#[derive(Debug, Clone)]
pub struct PlanPath {
    pub epsilon: f64,
    pub swarms: Vec<SwarmPath>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub milp_epsilon: f64,
    pub ellipsoid_epsilon: f64,
    pub milp_seconds: f64,
    pub ellipsoid_seconds: f64,
    /// False when updated ellipsoids were rejected because a transition remap
    /// would squeeze agents below the spacing floor.
    pub sigma_update_accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PlanStatus {
    /// Margin reached zero: the plan certifies the specification.
    Success,
    /// Budget exhausted with a negative margin; satisfiability unknown.
    Unknown,
}

#[derive(Debug)]
pub struct PlanReport {
    pub status: PlanStatus,
    pub path: PlanPath,
    pub iterations: Vec<IterationLog>,
}

#[derive(Debug, Clone)]
pub struct PlanOptions {
    /// Stop the MILP stage at the first integral solution reaching this
    /// margin (the alternation only needs feasibility, not maximality); None
    /// solves each stage to proven optimality.
    pub milp_target: Option<f64>,
    pub node_budget: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self { milp_target: Some(1e-3), node_budget: 2_000_000 }
    }
}

/// Run the alternation and return the final path with its margin.
pub fn plan(
    scenario: &Scenario,
    formula: &Formula,
    options: &PlanOptions,
) -> Result<PlanReport, PlanError> {
    let lifted = lift(formula, &scenario.swarm_sizes())?;
    let mut sigmas = encode::initial_sigmas(scenario);

    // First-segment matrices stay fixed; they must respect the volume floor
    // up front.
    {
        let enc = encode::Encoder::new(scenario, &sigmas);
        let vol = enc.encode_volume();
        for (s, swarm) in scenario.swarms.iter().enumerate() {
            let key = EllKey { swarm: s, k: 1 };
            let logdet = geometry::log_det_of(&swarm.sigma_init);
            if logdet < vol[&key] - 1e-9 {
                return Err(PlanError::SigmaInitVolume { swarm: s, logdet, rhs: vol[&key] });
            }
        }
    }

    let mut iterations = Vec::new();
    let mut best: Option<(f64, PlanPath)> = None;
    let tau_max = scenario.constants.tau_max;

    for tau in 1..=tau_max {
        let t0 = Instant::now();
        let instance = build_milp(scenario, &lifted, &sigmas)?;
        let milp_opts = MilpOptions {
            node_budget: options.node_budget,
            target_objective: options.milp_target,
            dive: true,
        };
        let outcome = solve_milp(&instance, &milp_opts)?;
        let milp_seconds = t0.elapsed().as_secs_f64();
        let Some((x, eps1)) = outcome.solution().map(|(x, o)| (x.to_vec(), o)) else {
            return Err(PlanError::MilpInfeasible { iteration: tau });
        };
        log::info!(
            "iteration {tau}: waypoint stage epsilon {eps1:.6} ({milp_seconds:.2}s, {} binaries)",
            instance.binaries.len()
        );
        debug_assert!(
            instance.disjunction_audit(&x) >= -1e-6,
            "big-M audit failed after the waypoint stage"
        );

        let t1 = Instant::now();
        let problem = build_ellipsoid_problem(&instance, scenario, &x);
        let sol = solve_ellipsoids(&problem)?;
        let ellipsoid_seconds = t1.elapsed().as_secs_f64();

        // Vet the updated matrices: every transition remap must preserve the
        // spacing floor on the actual initial offsets.
        let mut new_sigmas: SigmaTable = sol.sigmas.iter().cloned().collect();
        let candidate = extract_path(scenario, &instance, &x, &new_sigmas, sol.eps);
        let accepted = transitions_preserve_spacing(scenario, &candidate);
        let (eps2, path) = if accepted {
            (sol.eps, candidate)
        } else {
            log::info!(
                "iteration {tau}: ellipsoid update rejected (transition would break spacing); keeping previous matrices"
            );
            new_sigmas = sigmas.clone();
            (eps1, extract_path(scenario, &instance, &x, &sigmas, eps1))
        };
        log::info!("iteration {tau}: ellipsoid stage epsilon {eps2:.6} ({ellipsoid_seconds:.2}s)");

        iterations.push(IterationLog {
            iteration: tau,
            milp_epsilon: eps1,
            ellipsoid_epsilon: eps2,
            milp_seconds,
            ellipsoid_seconds,
            sigma_update_accepted: accepted,
        });

        if best.as_ref().map_or(true, |(b, _)| eps2 > *b) {
            best = Some((eps2, path.clone()));
        }
        if eps2 >= 0.0 {
            return Ok(PlanReport { status: PlanStatus::Success, path, iterations });
        }
        sigmas = new_sigmas;
    }

    let (_, path) = best.expect("at least one iteration ran");
    Ok(PlanReport { status: PlanStatus::Unknown, path, iterations })
}

fn extract_path(
    scenario: &Scenario,
    instance: &encode::MilpInstance,
    x: &[f64],
    sigmas: &SigmaTable,
    epsilon: f64,
) -> PlanPath {
    let t0 = scenario.constants.t0;
    let mut swarms = Vec::new();
    for (s, sw) in scenario.swarms.iter().enumerate() {
        let mut waypoints = Vec::new();
        let sigma1 = sigmas[&EllKey { swarm: s, k: 1 }].clone();
        waypoints.push(Waypoint { t: t0, p: instance.p0[s].clone(), sigma: sigma1 });
        for k in 1..=sw.segment_count {
            let t = x[instance.time_vars[s][k - 1].0];
            let p: Vec<f64> = instance.pos_vars[s][k - 1].iter().map(|v| x[v.0]).collect();
            waypoints.push(Waypoint { t, p, sigma: sigmas[&EllKey { swarm: s, k }].clone() });
        }
        swarms.push(SwarmPath { id: sw.id, waypoints });
    }
    PlanPath { epsilon, swarms }
}

/// True when every ellipsoid transition keeps the actual agent offsets at
/// least `zeta` apart.
pub fn transitions_preserve_spacing(scenario: &Scenario, path: &PlanPath) -> bool {
    let zeta = scenario.constants.zeta;
    let offsets = transition_offsets(scenario, path);
    for per_seg in &offsets {
        for seg_offsets in per_seg {
            for i in 0..seg_offsets.len() {
                for j in i + 1..seg_offsets.len() {
                    if (&seg_offsets[i] - &seg_offsets[j]).norm() < zeta - 1e-12 {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Worst slack of each constraint family at the path, by direct arithmetic.
#[derive(Debug, Clone, Serialize)]
pub struct PathCertificate {
    pub families: Vec<FamilySlack>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilySlack {
    pub family: &'static str,
    pub worst_slack: f64,
}

/// Re-evaluate every constraint family on a path (no solver involved).
/// Fails iff any family's worst slack is below -1e-6.
pub fn audit_path(
    path: &PlanPath,
    scenario: &Scenario,
    lifted: &Lifted,
) -> Result<PathCertificate, PlanError> {
    // Rebuild the forest against the path's own sigma table.
    let mut sigmas = SigmaTable::new();
    for (s, sp) in path.swarms.iter().enumerate() {
        let nseg = sp.waypoints.len().saturating_sub(1).max(1);
        for k in 1..=nseg {
            let wp = &sp.waypoints[k.min(sp.waypoints.len() - 1)];
            sigmas.insert(EllKey { swarm: s, k }, wp.sigma.clone());
        }
    }
    let enc = encode::Encoder::new(scenario, &sigmas);
    let families = enc.build_forest(lifted)?;

    // Assemble the assignment vector over the encoder's pool.
    let mut x = vec![0.0; enc.pool.len()];
    for (s, sp) in path.swarms.iter().enumerate() {
        for k in 1..sp.waypoints.len() {
            if let Some(v) = enc.time_var(s, k) {
                x[v.0] = sp.waypoints[k].t;
            }
            for (c, val) in sp.waypoints[k].p.iter().enumerate() {
                if let Some(v) = enc.pos_var(s, k, c) {
                    x[v.0] = *val;
                }
            }
        }
    }
    x[enc.eps.0] = path.epsilon;

    let lookup = |k: EllKey| sigmas[&k].clone();
    let families: Vec<FamilySlack> = families
        .iter()
        .map(|f| FamilySlack { family: f.tag.name(), worst_slack: f.root.slack(&x, &lookup) })
        .collect();
    let pass = families.iter().all(|f| f.worst_slack >= -1e-6);
    Ok(PathCertificate { families, pass })
}

// --- serialization --------------------------------------------------------

#[derive(Serialize, serde::Deserialize)]
struct WaypointDoc {
    t: f64,
    p: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

#[derive(Serialize, serde::Deserialize)]
struct SwarmPathDoc {
    id: usize,
    waypoints: Vec<WaypointDoc>,
}

#[derive(Serialize, serde::Deserialize)]
struct PlanPathDoc {
    epsilon: f64,
    swarms: Vec<SwarmPathDoc>,
}

impl PlanPath {
    pub fn to_json(&self) -> String {
        let doc = PlanPathDoc {
            epsilon: self.epsilon,
            swarms: self
                .swarms
                .iter()
                .map(|s| SwarmPathDoc {
                    id: s.id,
                    waypoints: s
                        .waypoints
                        .iter()
                        .map(|w| WaypointDoc {
                            t: w.t,
                            p: w.p.clone(),
                            sigma: (0..w.sigma.nrows())
                                .map(|r| (0..w.sigma.ncols()).map(|c| w.sigma[(r, c)]).collect())
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("plan serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let doc: PlanPathDoc = serde_json::from_str(text)?;
        Ok(PlanPath {
            epsilon: doc.epsilon,
            swarms: doc
                .swarms
                .into_iter()
                .map(|s| SwarmPath {
                    id: s.id,
                    waypoints: s
                        .waypoints
                        .into_iter()
                        .map(|w| {
                            let d = w.p.len();
                            let mut sigma = DMatrix::zeros(d, d);
                            for (r, row) in w.sigma.iter().enumerate() {
                                for (c, v) in row.iter().enumerate() {
                                    sigma[(r, c)] = *v;
                                }
                            }
                            Waypoint { t: w.t, p: w.p, sigma }
                        })
                        .collect(),
                })
                .collect(),
        })
    }
}
