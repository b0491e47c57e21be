//! Simulate every agent executing a plan under the shared collective
//! control, and export the sampled trace.
//!
//! Along each segment the centroid follows a rest-to-rest smoothstep profile
//! on the chord between waypoints; every agent applies the same acceleration,
//! so agent offsets from the centroid are constant in closed form (velocities
//! start equal at rest and accelerations are shared). Samples therefore come
//! from exact double-integrator updates, with no integration drift. At each
//! waypoint where the bounding-ellipsoid matrix changes, agents are remapped
//! about the fixed centroid by the principal-axis map
//! `Sigma_next^{1/2} Sigma_prev^{-1/2}` and their velocities reset to zero.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{sym_inv_sqrt, sym_sqrt};
use crate::planner::PlanPath;
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("sample step {dt} too coarse: must be at most min segment duration / 10 = {max_dt}")]
    StepTooCoarse { dt: f64, max_dt: f64 },
    #[error("segment {k} of swarm {swarm} has zero duration but nonzero displacement {disp:.3e}")]
    DegenerateSegment { swarm: usize, k: usize, disp: f64 },
    #[error("plan has {plan} swarms but scenario has {scenario}")]
    SwarmMismatch { plan: usize, scenario: usize },
    #[error("plan dimension {plan} does not match scenario dimension {scenario}")]
    DimensionMismatch { plan: usize, scenario: usize },
}

/// State sample of one agent.
#[derive(Debug, Clone)]
pub struct Sample {
    pub p: DVector<f64>,
    pub v: DVector<f64>,
}

/// Per-swarm sampled trajectory.
#[derive(Debug, Clone)]
pub struct SwarmTrace {
    pub id: usize,
    /// agents[i][sample]
    pub agents: Vec<Vec<Sample>>,
    /// Centroid state per sample.
    pub centroid: Vec<Sample>,
    /// Active segment index (1-based into the plan's waypoints) per sample.
    pub active_segment: Vec<usize>,
    /// Bounding-ellipsoid matrix per segment index (1-based; [0] unused).
    pub sigmas: Vec<DMatrix<f64>>,
}

/// Uniformly sampled trace over `[t0, t0 + horizon]`.
#[derive(Debug, Clone)]
pub struct Trace {
    pub times: Vec<f64>,
    pub dt: f64,
    pub swarms: Vec<SwarmTrace>,
}

impl Trace {
    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trace has at least one sample")
    }

    /// CSV export: `t,swarm,agent,p_1..p_d,v_1..v_d`.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let d = self.swarms[0].agents[0][0].p.len();
        let mut out = String::new();
        out.push_str("t,swarm,agent");
        for c in 0..d {
            let _ = write!(out, ",p_{}", c + 1);
        }
        for c in 0..d {
            let _ = write!(out, ",v_{}", c + 1);
        }
        out.push('\n');
        for (si, sw) in self.swarms.iter().enumerate() {
            for (ai, agent) in sw.agents.iter().enumerate() {
                for (ti, s) in agent.iter().enumerate() {
                    let _ = write!(out, "{},{},{}", self.times[ti], si, ai);
                    for c in 0..d {
                        let _ = write!(out, ",{}", s.p[c]);
                    }
                    for c in 0..d {
                        let _ = write!(out, ",{}", s.v[c]);
                    }
                    out.push('\n');
                }
            }
        }
        out
    }
}

/// Smoothstep position fraction and its first two derivatives.
fn smoothstep(theta: f64) -> (f64, f64, f64) {
    let s = theta * theta * (3.0 - 2.0 * theta);
    let ds = 6.0 * theta * (1.0 - theta);
    let dds = 6.0 - 12.0 * theta;
    (s, ds, dds)
}

/// Rest-to-rest chord-following profile of one segment.
#[derive(Debug, Clone)]
pub struct CentroidProfile {
    pub t_start: f64,
    pub t_end: f64,
    pub p_start: DVector<f64>,
    pub p_end: DVector<f64>,
}

impl CentroidProfile {
    /// Exact position/velocity/acceleration at `t` within the segment.
    pub fn state(&self, t: f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let dur = self.t_end - self.t_start;
        let disp = &self.p_end - &self.p_start;
        if dur <= 0.0 {
            return (self.p_end.clone(), &disp * 0.0, &disp * 0.0);
        }
        let theta = ((t - self.t_start) / dur).clamp(0.0, 1.0);
        let (s, ds, dds) = smoothstep(theta);
        let p = &self.p_start + &disp * s;
        let v = &disp * (ds / dur);
        let a = &disp * (dds / (dur * dur));
        (p, v, a)
    }

    /// Peak speed along the profile: 1.5 ||disp|| / duration at midpoint.
    pub fn peak_speed(&self) -> f64 {
        let dur = self.t_end - self.t_start;
        if dur <= 0.0 {
            0.0
        } else {
            1.5 * (&self.p_end - &self.p_start).norm() / dur
        }
    }
}

/// Per-segment transition maps and resulting agent offsets.
///
/// `offsets[s][k-1][i]` is agent i's offset from the centroid during segment
/// k, after the affine remaps of all earlier ellipsoid changes.
pub fn transition_offsets(scenario: &Scenario, path: &PlanPath) -> Vec<Vec<Vec<DVector<f64>>>> {
    let mut all = Vec::new();
    for (s, sw) in scenario.swarms.iter().enumerate() {
        let centroid = sw.initial_centroid();
        let mut current: Vec<DVector<f64>> = sw
            .agents
            .iter()
            .map(|a| DVector::from_column_slice(&a.p) - &centroid)
            .collect();
        let nseg = path.swarms[s].waypoints.len().saturating_sub(1).max(1);
        let mut per_seg = Vec::with_capacity(nseg);
        per_seg.push(current.clone());
        for k in 2..=nseg {
            let prev = &path.swarms[s].waypoints[k - 1].sigma;
            let next = &path.swarms[s].waypoints[k].sigma;
            if (prev - next).abs().max() > 1e-12 {
                let map = sym_sqrt(next) * sym_inv_sqrt(prev);
                current = current.iter().map(|o| &map * o).collect();
            }
            per_seg.push(current.clone());
        }
        all.push(per_seg);
    }
    all
}

/// Simulate the plan at uniform step `dt`; the trace covers the whole
/// mission horizon and agents rest at their final configuration after their
/// last waypoint.
pub fn simulate(path: &PlanPath, scenario: &Scenario, dt: f64) -> Result<Trace, SimError> {
    if path.swarms.len() != scenario.swarms.len() {
        return Err(SimError::SwarmMismatch {
            plan: path.swarms.len(),
            scenario: scenario.swarms.len(),
        });
    }
    let d = scenario.dimension;
    for sp in &path.swarms {
        if sp.waypoints.iter().any(|w| w.p.len() != d) {
            return Err(SimError::DimensionMismatch {
                plan: sp.waypoints.first().map(|w| w.p.len()).unwrap_or(0),
                scenario: d,
            });
        }
    }
    let c = &scenario.constants;
    let t_end = c.t0 + c.horizon;

    // Validate segments and the step size.
    let mut min_dur = f64::INFINITY;
    for (s, sp) in path.swarms.iter().enumerate() {
        for k in 1..sp.waypoints.len() {
            let dur = sp.waypoints[k].t - sp.waypoints[k - 1].t;
            let disp: f64 = sp.waypoints[k]
                .p
                .iter()
                .zip(&sp.waypoints[k - 1].p)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dur <= 1e-12 {
                if disp > 1e-9 {
                    return Err(SimError::DegenerateSegment { swarm: s, k, disp });
                }
                continue; // zero-length stay segment
            }
            min_dur = min_dur.min(dur);
        }
    }
    if !min_dur.is_finite() {
        min_dur = c.horizon;
    }
    if dt > min_dur / 10.0 + 1e-12 {
        return Err(SimError::StepTooCoarse { dt, max_dt: min_dur / 10.0 });
    }

    let n_samples = ((c.horizon / dt).ceil() as usize).max(1) + 1;
    let times: Vec<f64> = (0..n_samples)
        .map(|i| (c.t0 + i as f64 * dt).min(t_end))
        .collect();

    let offsets = transition_offsets(scenario, path);
    let mut swarms = Vec::new();
    for (s, sw) in scenario.swarms.iter().enumerate() {
        let wps = &path.swarms[s].waypoints;
        let nseg = wps.len().saturating_sub(1).max(1);
        let profiles: Vec<CentroidProfile> = if wps.len() == 1 {
            vec![CentroidProfile {
                t_start: c.t0,
                t_end,
                p_start: DVector::from_column_slice(&wps[0].p),
                p_end: DVector::from_column_slice(&wps[0].p),
            }]
        } else {
            (1..wps.len())
                .map(|k| CentroidProfile {
                    t_start: wps[k - 1].t,
                    t_end: wps[k].t,
                    p_start: DVector::from_column_slice(&wps[k - 1].p),
                    p_end: DVector::from_column_slice(&wps[k].p),
                })
                .collect()
        };
        let mut sigmas = vec![DMatrix::zeros(d, d)];
        for k in 1..=nseg {
            sigmas.push(wps[k.min(wps.len() - 1)].sigma.clone());
        }

        let mut agents: Vec<Vec<Sample>> = vec![Vec::with_capacity(times.len()); sw.agents.len()];
        let mut centroid_row = Vec::with_capacity(times.len());
        let mut active_row = Vec::with_capacity(times.len());
        for &t in &times {
            // Segment containing t: first whose end time is still ahead; at
            // exact waypoint times the transition has already happened.
            let mut k = 1;
            while k < nseg && t >= profiles[k - 1].t_end - 1e-12 {
                k += 1;
            }
            let (p, v, _a) = profiles[k - 1].state(t);
            // After the final waypoint the swarm rests there.
            let (p, v) = if t >= profiles[nseg - 1].t_end { (profiles[nseg - 1].p_end.clone(), &v * 0.0) } else { (p, v) };
            centroid_row.push(Sample { p: p.clone(), v: v.clone() });
            active_row.push(k);
            for (i, agent) in agents.iter_mut().enumerate() {
                let off = &offsets[s][k - 1][i];
                agent.push(Sample { p: &p + off, v: v.clone() });
            }
        }
        swarms.push(SwarmTrace {
            id: sw.id,
            agents,
            centroid: centroid_row,
            active_segment: active_row,
            sigmas,
        });
    }
    Ok(Trace { times, dt, swarms })
}

/// Default sample step: min segment duration / 50.
pub fn default_dt(path: &PlanPath, scenario: &Scenario) -> f64 {
    let mut min_dur = scenario.constants.horizon;
    for sp in &path.swarms {
        for k in 1..sp.waypoints.len() {
            let dur = sp.waypoints[k].t - sp.waypoints[k - 1].t;
            if dur > 1e-12 {
                min_dur = min_dur.min(dur);
            }
        }
    }
    min_dur / 50.0
}

/// Parse a trace back from its CSV form (used by the check command).
pub fn trace_from_csv(text: &str, scenario: &Scenario, path: &PlanPath) -> Result<Trace, String> {
    let d = scenario.dimension;
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty trace file")?;
    let expected_cols = 3 + 2 * d;
    if header.split(',').count() != expected_cols {
        return Err(format!("trace header has wrong column count for dimension {d}"));
    }
    let mut times: Vec<f64> = Vec::new();
    let mut data: Vec<Vec<Vec<Sample>>> = scenario
        .swarms
        .iter()
        .map(|s| vec![Vec::new(); s.agent_count()])
        .collect();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(format!("line {}: expected {} fields, got {}", ln + 2, expected_cols, fields.len()));
        }
        let parse = |s: &str| -> Result<f64, String> {
            s.trim().parse::<f64>().map_err(|e| format!("line {}: {e}", ln + 2))
        };
        let t = parse(fields[0])?;
        let swarm = parse(fields[1])? as usize;
        let agent = parse(fields[2])? as usize;
        if swarm >= data.len() || agent >= data[swarm].len() {
            return Err(format!("line {}: swarm/agent out of range", ln + 2));
        }
        let mut p = DVector::zeros(d);
        let mut v = DVector::zeros(d);
        for c in 0..d {
            p[c] = parse(fields[3 + c])?;
            v[c] = parse(fields[3 + d + c])?;
        }
        if swarm == 0 && agent == 0 {
            times.push(t);
        }
        data[swarm][agent].push(Sample { p, v });
    }
    if times.len() < 2 {
        return Err("trace has fewer than two samples".into());
    }
    let dt = times[1] - times[0];
    // Rebuild centroids, segment activity, and sigma tables from the plan.
    let mut swarms = Vec::new();
    for (s, sw) in scenario.swarms.iter().enumerate() {
        let agents = std::mem::take(&mut data[s]);
        for a in &agents {
            if a.len() != times.len() {
                return Err(format!("swarm {s}: agents have inconsistent sample counts"));
            }
        }
        let wps = &path.swarms[s].waypoints;
        let nseg = wps.len().saturating_sub(1).max(1);
        let mut sigmas = vec![DMatrix::zeros(d, d)];
        for k in 1..=nseg {
            sigmas.push(wps[k.min(wps.len() - 1)].sigma.clone());
        }
        let mut centroid = Vec::with_capacity(times.len());
        let mut active = Vec::with_capacity(times.len());
        for ti in 0..times.len() {
            let mut p = DVector::zeros(d);
            let mut v = DVector::zeros(d);
            for a in &agents {
                p += &a[ti].p;
                v += &a[ti].v;
            }
            let n = agents.len() as f64;
            centroid.push(Sample { p: p / n, v: v / n });
            let t = times[ti];
            let mut k = 1;
            while k < nseg && t >= wps[k].t - 1e-12 {
                k += 1;
            }
            active.push(k);
        }
        swarms.push(SwarmTrace { id: sw.id, agents, centroid, active_segment: active, sigmas });
    }
    Ok(Trace { times, dt, swarms })
}
