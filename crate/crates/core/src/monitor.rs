//! Independent verification of a sampled trace: discretized STL semantics
//! over agent counts, and the pairwise/obstacle/membership safety checks.
//!
//! The STL monitor is conservative: universally quantified intervals must
//! hold at every sample mapped into them, existential witnesses must be
//! verifiable entirely inside the trace (no extrapolation past the final
//! sample), and predicate values at off-grid instants require both
//! bracketing samples to agree.

use serde::Serialize;
use thiserror::Error;

use crate::scenario::{Polytope, Scenario};
use crate::sim::Trace;
use crate::stl::Formula;

const TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("temporal interval starts at {start:.3} s, beyond the trace horizon {end:.3} s")]
    BeyondHorizon { start: f64, end: f64 },
    #[error("sample step {dt} too coarse for interval of width {width}: need at least 2 samples")]
    GridTooCoarse { dt: f64, width: f64 },
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjunctVerdict {
    pub formula: String,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StlReport {
    pub conjuncts: Vec<ConjunctVerdict>,
    pub satisfied: bool,
}

struct StlEval<'a> {
    trace: &'a Trace,
    regions: &'a std::collections::BTreeMap<String, Polytope>,
    end: f64,
}

impl<'a> StlEval<'a> {
    /// Number of agents inside the region at sample index `i`.
    fn count_inside(&self, region: &str, i: usize) -> Result<usize, MonitorError> {
        let poly = self
            .regions
            .get(region)
            .ok_or_else(|| MonitorError::UnknownRegion(region.to_string()))?;
        let mut count = 0;
        for sw in &self.trace.swarms {
            for agent in &sw.agents {
                let p: Vec<f64> = agent[i].p.iter().cloned().collect();
                if poly.contains(&p, TOL) {
                    count += 1;
                }
            }
        }
        Ok(count)
    }

    /// Sample indices whose times fall in `[lo, hi]` (closed, with tolerance).
    fn samples_in(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let times = &self.trace.times;
        let start = times.partition_point(|&t| t < lo - TOL);
        let end = times.partition_point(|&t| t <= hi + TOL);
        start..end
    }

    /// Predicate truth at an arbitrary instant: every sample within half a
    /// step must agree (conservative between samples).
    fn pred_at(&self, region: &str, count: usize, t: f64) -> Result<bool, MonitorError> {
        if t > self.end + TOL {
            return Ok(false);
        }
        let range = self.samples_in(t - self.trace.dt * 0.5, t + self.trace.dt * 0.5);
        if range.is_empty() {
            return Ok(false);
        }
        for i in range {
            if self.count_inside(region, i)? < count {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn eval(&self, f: &Formula, t: f64, top: bool) -> Result<bool, MonitorError> {
        match f {
            Formula::True => Ok(true),
            Formula::Pred(a) => self.pred_at(&a.region, a.count, t),
            Formula::NotPred(a) => {
                if t > self.end + TOL {
                    return Ok(false);
                }
                let range = self.samples_in(t - self.trace.dt * 0.5, t + self.trace.dt * 0.5);
                if range.is_empty() {
                    return Ok(false);
                }
                for i in range {
                    if self.count_inside(&a.region, i)? >= a.count {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Formula::Not(c) => Ok(!self.eval(c, t, false)?),
            Formula::And(cs) => {
                for c in cs {
                    if !self.eval(c, t, top)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Formula::Or(cs) => {
                for c in cs {
                    if self.eval(c, t, false)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Formula::Always(iv, c) => {
                let (lo, hi) = (t + iv.lo, t + iv.hi);
                if top && lo > self.end + TOL {
                    return Err(MonitorError::BeyondHorizon { start: lo, end: self.end });
                }
                if lo > self.end + TOL || hi > self.end + TOL {
                    // Cannot verify the uncovered part of the window.
                    return Ok(false);
                }
                for i in self.samples_in(lo, hi) {
                    if !self.eval(c, self.trace.times[i], false)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Formula::Eventually(iv, c) => {
                let (lo, hi) = (t + iv.lo, t + iv.hi);
                if top && lo > self.end + TOL {
                    return Err(MonitorError::BeyondHorizon { start: lo, end: self.end });
                }
                // A witness is only valid if the child is checkable from it.
                let latest = (self.end - c.horizon()).min(hi);
                for i in self.samples_in(lo, latest) {
                    if self.eval(c, self.trace.times[i], false)? {
                        return Ok(true);
                    }
                }
                // Boundary candidates an LP optimum may land on exactly.
                for cand in [lo, latest] {
                    if cand >= lo - TOL
                        && cand <= latest + TOL
                        && cand <= self.end + TOL
                        && self.eval(c, cand, false)?
                    {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Formula::Until(iv, l, r) => {
                let (lo, hi) = (t + iv.lo, t + iv.hi);
                if top && lo > self.end + TOL {
                    return Err(MonitorError::BeyondHorizon { start: lo, end: self.end });
                }
                let latest = (self.end - r.horizon()).min(hi);
                let mut candidates: Vec<f64> =
                    self.samples_in(lo, latest).map(|i| self.trace.times[i]).collect();
                candidates.push(lo);
                candidates.push(latest);
                for t1 in candidates {
                    if t1 < lo - TOL || t1 > latest + TOL || t1 > self.end + TOL {
                        continue;
                    }
                    if !self.eval(r, t1, false)? {
                        continue;
                    }
                    let mut all = true;
                    for i in self.samples_in(t, t1) {
                        if !self.eval(l, self.trace.times[i], false)? {
                            all = false;
                            break;
                        }
                    }
                    if all {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }
}

fn check_grid(f: &Formula, dt: f64) -> Result<(), MonitorError> {
    match f {
        Formula::True | Formula::Pred(_) | Formula::NotPred(_) => Ok(()),
        Formula::Not(c) => check_grid(c, dt),
        Formula::And(cs) | Formula::Or(cs) => cs.iter().try_for_each(|c| check_grid(c, dt)),
        Formula::Always(iv, c) | Formula::Eventually(iv, c) => {
            let width = iv.hi - iv.lo;
            if width > 0.0 && dt > width / 2.0 + TOL {
                return Err(MonitorError::GridTooCoarse { dt, width });
            }
            check_grid(c, dt)
        }
        Formula::Until(iv, l, r) => {
            let width = iv.hi - iv.lo;
            if width > 0.0 && dt > width / 2.0 + TOL {
                return Err(MonitorError::GridTooCoarse { dt, width });
            }
            check_grid(l, dt)?;
            check_grid(r, dt)
        }
    }
}

/// Evaluate the formula on the trace at the mission start, one verdict per
/// top-level conjunct.
pub fn monitor_stl(
    trace: &Trace,
    formula: &Formula,
    scenario: &Scenario,
) -> Result<StlReport, MonitorError> {
    check_grid(formula, trace.dt)?;
    let eval = StlEval { trace, regions: &scenario.regions, end: trace.end_time() };
    let t0 = trace.times[0];
    let mut conjuncts = Vec::new();
    for c in formula.conjuncts() {
        let satisfied = eval.eval(c, t0, true)?;
        conjuncts.push(ConjunctVerdict { formula: c.to_string(), satisfied });
    }
    let satisfied = conjuncts.iter().all(|c| c.satisfied);
    Ok(StlReport { conjuncts, satisfied })
}

#[derive(Debug, Clone, Serialize)]
pub struct ViolationAt {
    pub time: f64,
    pub swarm: usize,
    pub agent: usize,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SafetyReport {
    /// Minimum pairwise agent distance over the whole trace (all pairs,
    /// intra- and inter-swarm).
    pub min_pairwise_distance: f64,
    pub pairwise_violation: Option<ViolationAt>,
    /// Worst complement margin against any obstacle (positive = outside).
    pub worst_obstacle_margin: f64,
    pub obstacle_violation: Option<ViolationAt>,
    /// Worst bounding-ellipsoid quadratic form value (<= 1 inside).
    pub worst_membership: f64,
    pub membership_violation: Option<ViolationAt>,
    /// Spacing held at every sample right after an ellipsoid transition.
    pub transition_spacing_ok: bool,
    pub pass: bool,
}

/// Pairwise spacing, obstacle avoidance, and ellipsoid membership at every
/// sample.
pub fn monitor_safety(trace: &Trace, scenario: &Scenario) -> SafetyReport {
    let zeta = scenario.constants.zeta;
    let mut min_dist = f64::INFINITY;
    let mut pairwise_violation = None;
    let mut worst_margin = f64::INFINITY;
    let mut obstacle_violation = None;
    let mut worst_membership = 0.0f64;
    let mut membership_violation = None;
    let mut transition_spacing_ok = true;

    // Flatten agents for the global pairwise check.
    let all_agents: Vec<(usize, usize)> = trace
        .swarms
        .iter()
        .enumerate()
        .flat_map(|(s, sw)| (0..sw.agents.len()).map(move |a| (s, a)))
        .collect();

    for ti in 0..trace.times.len() {
        let t = trace.times[ti];
        for (idx, &(s1, a1)) in all_agents.iter().enumerate() {
            let p1 = &trace.swarms[s1].agents[a1][ti].p;
            for &(s2, a2) in &all_agents[idx + 1..] {
                let p2 = &trace.swarms[s2].agents[a2][ti].p;
                let dist = (p1 - p2).norm();
                if dist < min_dist {
                    min_dist = dist;
                    if dist < zeta - TOL && pairwise_violation.is_none() {
                        pairwise_violation = Some(ViolationAt {
                            time: t,
                            swarm: s1,
                            agent: a1,
                            detail: format!(
                                "distance {dist:.6} to agent {a2} of swarm {s2} is below zeta = {zeta}"
                            ),
                        });
                    }
                }
            }
            if !scenario.obstacles.is_empty() {
                let pv: Vec<f64> = p1.iter().cloned().collect();
                for (oi, obstacle) in scenario.obstacles.iter().enumerate() {
                    let margin = obstacle.outside_margin(&pv);
                    if margin < worst_margin {
                        worst_margin = margin;
                        if margin < TOL && obstacle_violation.is_none() {
                            obstacle_violation = Some(ViolationAt {
                                time: t,
                                swarm: s1,
                                agent: a1,
                                detail: format!("inside obstacle {oi} (margin {margin:.6})"),
                            });
                        }
                    }
                }
            }
        }
        // Ellipsoid membership with the active segment's matrix.
        for (s, sw) in trace.swarms.iter().enumerate() {
            let k = sw.active_segment[ti];
            let sigma = &sw.sigmas[k];
            let Some(chol) = sigma.clone().cholesky() else { continue };
            let centroid = &sw.centroid[ti].p;
            for (a, agent) in sw.agents.iter().enumerate() {
                let dvec = &agent[ti].p - centroid;
                let val = dvec.dot(&chol.solve(&dvec));
                if val > worst_membership {
                    worst_membership = val;
                    if val > 1.0 + 1e-9 && membership_violation.is_none() {
                        membership_violation = Some(ViolationAt {
                            time: t,
                            swarm: s,
                            agent: a,
                            detail: format!("ellipsoid membership value {val:.6} > 1"),
                        });
                    }
                }
            }
        }
    }

    // Spacing at the first sample after each transition, checked per swarm.
    for sw in trace.swarms.iter() {
        for ti in 1..trace.times.len() {
            if sw.active_segment[ti] != sw.active_segment[ti - 1] {
                for i in 0..sw.agents.len() {
                    for j in i + 1..sw.agents.len() {
                        let dist = (&sw.agents[i][ti].p - &sw.agents[j][ti].p).norm();
                        if dist < zeta - TOL {
                            transition_spacing_ok = false;
                        }
                    }
                }
            }
        }
    }

    let pass = pairwise_violation.is_none()
        && obstacle_violation.is_none()
        && membership_violation.is_none()
        && transition_spacing_ok;
    SafetyReport {
        min_pairwise_distance: min_dist,
        pairwise_violation,
        worst_obstacle_margin: if scenario.obstacles.is_empty() { f64::INFINITY } else { worst_margin },
        obstacle_violation,
        worst_membership,
        membership_violation,
        transition_spacing_ok,
        pass,
    }
}
