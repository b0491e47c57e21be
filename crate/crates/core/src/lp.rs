//! Self-contained bounded-variable primal simplex.
//!
//! Solves `max c^T x` subject to sparse rows `a^T x {<=,=,>=} b` and finite
//! box bounds on every variable. Each row gets a logical (slack) variable
//! whose bounds encode the sense; the starting basis is the logical identity.
//! Phase 1 drives bound violations of basic variables to zero with a
//! composite infeasibility objective, phase 2 optimizes the true objective.
//!
//! The engine keeps an explicit dense basis inverse (column-major). Since the
//! inverse depends only on the basis, not on the bounds, a branch-and-bound
//! search can mutate variable bounds between solves and restart warm from the
//! previous basis.

use thiserror::Error;

pub const FEAS_TOL: f64 = 1e-7;
const COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("simplex cycling guard exceeded after {0} iterations")]
    Cycling(usize),
    #[error("numerical failure: basis residual {0:.3e} exceeds tolerance")]
    Numerical(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub cols: Vec<usize>,
    pub coefs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

/// LP in `max c^T x` form with finite variable boxes.
#[derive(Debug, Clone, Default)]
pub struct LpProblem {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LpProblem {
    pub fn ncols(&self) -> usize {
        self.lower.len()
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, obj: f64) -> usize {
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.push(obj);
        self.lower.len() - 1
    }

    pub fn add_row(&mut self, cols: Vec<usize>, coefs: Vec<f64>, sense: Sense, rhs: f64) {
        debug_assert_eq!(cols.len(), coefs.len());
        self.rows.push(Row { cols, coefs, sense, rhs });
    }

    /// Largest finite activity range of a row over the variable box.
    fn activity_range(&self, row: &Row) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for (&c, &a) in row.cols.iter().zip(&row.coefs) {
            let (l, u) = (self.lower[c], self.upper[c]);
            if a >= 0.0 {
                lo += a * l;
                hi += a * u;
            } else {
                lo += a * u;
                hi += a * l;
            }
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variable values (phase-2 optimal when status is Optimal).
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
}

/// Reusable simplex engine: owns the expanded problem (structurals plus
/// logicals), the current basis, and its dense inverse.
pub struct Simplex {
    n: usize,
    m: usize,
    ntot: usize,
    // Sparse columns of the constraint matrix for structural vars.
    col_rows: Vec<Vec<usize>>,
    col_vals: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    obj: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    state: Vec<VarState>,
    basic_of_row: Vec<usize>,
    x: Vec<f64>,
    binv: Vec<f64>, // m x m column-major
    pivots_since_refresh: usize,
    pub iterations: usize,
}

impl Simplex {
    pub fn new(p: &LpProblem) -> Self {
        let n = p.ncols();
        let m = p.rows.len();
        let ntot = n + m;
        let mut col_rows = vec![Vec::new(); n];
        let mut col_vals = vec![Vec::new(); n];
        let mut rhs = Vec::with_capacity(m);
        let mut lower = p.lower.clone();
        let mut upper = p.upper.clone();
        for (i, row) in p.rows.iter().enumerate() {
            // Merge duplicate columns within a row.
            let mut merged: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
            for (&c, &a) in row.cols.iter().zip(&row.coefs) {
                *merged.entry(c).or_insert(0.0) += a;
            }
            for (c, a) in merged {
                if a != 0.0 {
                    col_rows[c].push(i);
                    col_vals[c].push(a);
                }
            }
            rhs.push(row.rhs);
            let (act_lo, act_hi) = p.activity_range(row);
            // Logical s_i = rhs - a^T x with sense-derived bounds, clipped to
            // the range implied by the variable box so everything is finite.
            let (lo, hi) = match row.sense {
                Sense::Le => (0.0, (row.rhs - act_lo).max(0.0)),
                Sense::Ge => ((row.rhs - act_hi).min(0.0), 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
        }
        let mut obj = p.objective.clone();
        obj.resize(ntot, 0.0);

        let mut s = Self {
            n,
            m,
            ntot,
            col_rows,
            col_vals,
            rhs,
            obj,
            lower,
            upper,
            state: vec![VarState::AtLower; ntot],
            basic_of_row: (0..m).map(|i| n + i).collect(),
            x: vec![0.0; ntot],
            binv: identity(m),
            pivots_since_refresh: 0,
            iterations: 0,
        };
        s.reset_to_logical_basis();
        s
    }

    /// Restore the all-logical starting basis (used on cold starts and as a
    /// recovery path).
    pub fn reset_to_logical_basis(&mut self) {
        for j in 0..self.ntot {
            self.state[j] = if self.lower[j].abs() <= self.upper[j].abs() {
                VarState::AtLower
            } else {
                VarState::AtUpper
            };
        }
        for i in 0..self.m {
            self.basic_of_row[i] = self.n + i;
            self.state[self.n + i] = VarState::Basic(i);
        }
        self.binv = identity(self.m);
        self.pivots_since_refresh = 0;
        self.recompute_x();
    }

    /// Change the bounds of a structural variable between solves.
    pub fn set_bounds(&mut self, col: usize, lower: f64, upper: f64) {
        debug_assert!(col < self.n);
        self.lower[col] = lower;
        self.upper[col] = upper;
        match self.state[col] {
            VarState::AtLower | VarState::AtUpper => {
                // Re-clamp the resting point.
                self.state[col] = if self.lower[col].abs() <= self.upper[col].abs() {
                    VarState::AtLower
                } else {
                    VarState::AtUpper
                };
            }
            VarState::Basic(_) => {}
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lower[j],
            VarState::AtUpper => self.upper[j],
            VarState::Basic(_) => unreachable!(),
        }
    }

    /// Column j of the full matrix [A | I] applied to B^{-1}.
    fn ftran(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if j >= self.n {
            let r = j - self.n;
            let col = &self.binv[r * self.m..(r + 1) * self.m];
            out.copy_from_slice(col);
        } else {
            for (&r, &a) in self.col_rows[j].iter().zip(&self.col_vals[j]) {
                let col = &self.binv[r * self.m..(r + 1) * self.m];
                for i in 0..self.m {
                    out[i] += a * col[i];
                }
            }
        }
    }

    /// y^T = c_B^T B^{-1} given a sparse list of (row, cost) entries.
    fn btran_sparse(&self, entries: &[(usize, f64)], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for &(i, c) in entries {
            // Row i of column-major binv is strided.
            for col in 0..self.m {
                y[col] += c * self.binv[col * self.m + i];
            }
        }
    }

    /// a_j^T y for structural or logical column j.
    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        if j >= self.n {
            y[j - self.n]
        } else {
            self.col_rows[j]
                .iter()
                .zip(&self.col_vals[j])
                .map(|(&r, &a)| a * y[r])
                .sum()
        }
    }

    fn recompute_x(&mut self) {
        // Freshly solve for the basic values from the nonbasic resting points.
        let mut resid = self.rhs.clone();
        for j in 0..self.ntot {
            if let VarState::Basic(_) = self.state[j] {
                continue;
            }
            let v = self.nonbasic_value(j);
            self.x[j] = v;
            if v != 0.0 {
                if j >= self.n {
                    resid[j - self.n] -= v;
                } else {
                    for (&r, &a) in self.col_rows[j].iter().zip(&self.col_vals[j]) {
                        resid[r] -= a * v;
                    }
                }
            }
        }
        let mut xb = vec![0.0; self.m];
        for (r, &v) in resid.iter().enumerate() {
            if v != 0.0 {
                let col = &self.binv[r * self.m..(r + 1) * self.m];
                for i in 0..self.m {
                    xb[i] += v * col[i];
                }
            }
        }
        for i in 0..self.m {
            self.x[self.basic_of_row[i]] = xb[i];
        }
    }

    /// Residual of B x_B = rhs - N x_N under the current values.
    fn basis_residual(&self) -> f64 {
        let mut resid = self.rhs.clone();
        for j in 0..self.ntot {
            let v = self.x[j];
            if v == 0.0 {
                continue;
            }
            if j >= self.n {
                resid[j - self.n] -= v;
            } else {
                for (&r, &a) in self.col_rows[j].iter().zip(&self.col_vals[j]) {
                    resid[r] -= a * v;
                }
            }
        }
        resid.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Rebuild B^{-1} from scratch by inverting the basis matrix.
    fn refactor(&mut self) -> Result<(), LpError> {
        let mut b = nalgebra::DMatrix::<f64>::zeros(self.m, self.m);
        for (i, &j) in self.basic_of_row.iter().enumerate() {
            if j >= self.n {
                b[(j - self.n, i)] = 1.0;
            } else {
                for (&r, &a) in self.col_rows[j].iter().zip(&self.col_vals[j]) {
                    b[(r, i)] = a;
                }
            }
        }
        match b.try_inverse() {
            Some(inv) => {
                for c in 0..self.m {
                    for r in 0..self.m {
                        self.binv[c * self.m + r] = inv[(r, c)];
                    }
                }
                self.pivots_since_refresh = 0;
                self.recompute_x();
                Ok(())
            }
            None => Err(LpError::Numerical(f64::INFINITY)),
        }
    }

    fn pivot_update(&mut self, leave_row: usize, alpha: &[f64]) {
        // binv <- E binv where E differs from I in column `leave_row`.
        let piv = alpha[leave_row];
        for c in 0..self.m {
            let col = &mut self.binv[c * self.m..(c + 1) * self.m];
            let t = col[leave_row] / piv;
            if t != 0.0 {
                for i in 0..self.m {
                    col[i] -= alpha[i] * t;
                }
                col[leave_row] = t;
            }
        }
        self.pivots_since_refresh += 1;
    }

    fn infeasibility(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..self.m {
            let j = self.basic_of_row[i];
            let v = self.x[j];
            if v < self.lower[j] - FEAS_TOL {
                total += self.lower[j] - v;
            } else if v > self.upper[j] + FEAS_TOL {
                total += v - self.upper[j];
            }
        }
        total
    }

    /// Run the simplex: phase 1 until primal feasible, then phase 2. A
    /// numerically degraded warm basis falls back to one cold restart from
    /// the logical basis before giving up.
    pub fn solve(&mut self) -> Result<LpSolution, LpError> {
        match self.solve_attempt() {
            Err(LpError::Numerical(_)) => {
                log::debug!("simplex: numerical trouble, restarting from the logical basis");
                self.reset_to_logical_basis();
                self.solve_attempt()
            }
            other => other,
        }
    }

    fn solve_attempt(&mut self) -> Result<LpSolution, LpError> {
        self.recompute_x();
        let max_iters = 200 * (self.m + self.ntot) + 10_000;
        let bland_after = 10 * (self.m + self.ntot);

        // Phase 1.
        let mut stall = 0usize;
        let mut last_inf = f64::INFINITY;
        let mut iters = 0usize;
        while self.infeasibility() > FEAS_TOL {
            iters += 1;
            self.iterations += 1;
            if iters > max_iters {
                return Err(LpError::Cycling(iters));
            }
            let bland = stall > bland_after;
            if !self.phase1_step(bland)? {
                // No improving direction: genuinely infeasible.
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    x: self.x[..self.n].to_vec(),
                    objective: f64::NEG_INFINITY,
                });
            }
            let inf = self.infeasibility();
            if inf < last_inf - 1e-12 {
                stall = 0;
                last_inf = inf;
            } else {
                stall += 1;
            }
            if self.pivots_since_refresh > 0 && self.pivots_since_refresh % 64 == 0 {
                self.recompute_x();
            }
        }

        // Phase 2.
        let mut stall = 0usize;
        let mut last_obj = f64::NEG_INFINITY;
        loop {
            iters += 1;
            self.iterations += 1;
            if iters > max_iters {
                return Err(LpError::Cycling(iters));
            }
            let bland = stall > bland_after;
            if !self.phase2_step(bland)? {
                break;
            }
            let obj = self.objective_value();
            if obj > last_obj + 1e-12 {
                stall = 0;
                last_obj = obj;
            } else {
                stall += 1;
            }
            if self.pivots_since_refresh > 0 && self.pivots_since_refresh % 64 == 0 {
                self.recompute_x();
            }
        }

        self.recompute_x();
        let resid = self.basis_residual();
        if resid > 1e-6 {
            self.refactor()?;
            let resid = self.basis_residual();
            if resid > 1e-6 {
                return Err(LpError::Numerical(resid));
            }
        }
        if self.infeasibility() > 10.0 * FEAS_TOL {
            // Bounds moved under us (warm start); run again from here.
            return self.solve_attempt();
        }
        Ok(LpSolution {
            status: LpStatus::Optimal,
            x: self.x[..self.n].to_vec(),
            objective: self.objective_value(),
        })
    }

    pub fn objective_value(&self) -> f64 {
        (0..self.n).map(|j| self.obj[j] * self.x[j]).sum()
    }

    /// One phase-1 pivot. Returns false when no improving column exists.
    fn phase1_step(&mut self, bland: bool) -> Result<bool, LpError> {
        // Composite cost: +1 for basics above upper, -1 for basics below lower.
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for i in 0..self.m {
            let j = self.basic_of_row[i];
            if self.x[j] < self.lower[j] - FEAS_TOL {
                entries.push((i, -1.0));
            } else if self.x[j] > self.upper[j] + FEAS_TOL {
                entries.push((i, 1.0));
            }
        }
        if entries.is_empty() {
            return Ok(true);
        }
        let mut y = vec![0.0; self.m];
        self.btran_sparse(&entries, &mut y);

        // Directional derivative of the infeasibility when nonbasic j moves in
        // its feasible direction is -dir * y^T a_j.
        let mut best: Option<(usize, f64, f64)> = None; // (col, dir, score)
        for j in 0..self.ntot {
            let dir = match self.state[j] {
                VarState::Basic(_) => continue,
                VarState::AtLower => 1.0,
                VarState::AtUpper => -1.0,
            };
            if self.upper[j] - self.lower[j] < 1e-14 {
                continue;
            }
            let d = self.col_dot(j, &y);
            let gain = dir * d; // positive gain reduces infeasibility
            if gain > COST_TOL {
                if bland {
                    best = Some((j, dir, gain));
                    break;
                }
                if best.map_or(true, |(_, _, g)| gain > g) {
                    best = Some((j, dir, gain));
                }
            }
        }
        let Some((q, dir, _)) = best else {
            return Ok(false);
        };
        self.do_ratio_and_pivot(q, dir, true)
    }

    /// One phase-2 pivot. Returns false at optimality.
    fn phase2_step(&mut self, bland: bool) -> Result<bool, LpError> {
        let entries: Vec<(usize, f64)> = (0..self.m)
            .filter_map(|i| {
                let c = self.obj[self.basic_of_row[i]];
                (c != 0.0).then_some((i, c))
            })
            .collect();
        let mut y = vec![0.0; self.m];
        self.btran_sparse(&entries, &mut y);

        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ntot {
            let dir = match self.state[j] {
                VarState::Basic(_) => continue,
                VarState::AtLower => 1.0,
                VarState::AtUpper => -1.0,
            };
            if self.upper[j] - self.lower[j] < 1e-14 {
                continue;
            }
            // Reduced cost; moving by dir improves the max objective when
            // dir * (c_j - y a_j) > 0.
            let red = self.obj[j] - self.col_dot(j, &y);
            let gain = dir * red;
            if gain > COST_TOL {
                if bland {
                    best = Some((j, dir, gain));
                    break;
                }
                if best.map_or(true, |(_, _, g)| gain > g) {
                    best = Some((j, dir, gain));
                }
            }
        }
        let Some((q, dir, _)) = best else {
            return Ok(false);
        };
        self.do_ratio_and_pivot(q, dir, false)
    }

    /// Bounded-variable ratio test and pivot for entering column q moving in
    /// direction `dir`. Each basic blocks at its next kink: feasible basics
    /// at the bound they would exit, infeasible basics at the violated bound
    /// they are traveling toward (moving further away has no kink; the
    /// composite phase-1 objective already prices it).
    fn do_ratio_and_pivot(&mut self, q: usize, dir: f64, phase1: bool) -> Result<bool, LpError> {
        let mut alpha = vec![0.0; self.m];
        self.ftran(q, &mut alpha);

        // Step limit from the entering variable's own range.
        let own_limit = self.upper[q] - self.lower[q];
        let kink = |i: usize, a: f64| -> Option<(f64, bool)> {
            let j = self.basic_of_row[i];
            let delta = -dir * a;
            let xv = self.x[j];
            let (lo, hi) = (self.lower[j], self.upper[j]);
            // Next kink in the direction of travel, if any: feasible basics
            // block at the bound they would exit, infeasible ones (phase 1)
            // only at the violated bound they travel toward.
            let block: Option<(f64, bool)> = if phase1 && xv < lo - FEAS_TOL {
                (delta > 0.0).then_some((lo - xv, false))
            } else if phase1 && xv > hi + FEAS_TOL {
                (delta < 0.0).then_some((xv - hi, true))
            } else if delta > 0.0 {
                Some((hi - xv, true))
            } else {
                Some((xv - lo, false))
            };
            block.map(|(room, at_upper)| (room.max(0.0) / delta.abs(), at_upper))
        };
        // First pass: minimum blocking ratio.
        let mut limit = own_limit;
        for i in 0..self.m {
            let a = alpha[i];
            if a.abs() < PIVOT_TOL {
                continue;
            }
            if let Some((ratio, _)) = kink(i, a) {
                if ratio < limit {
                    limit = ratio;
                }
            }
        }
        // Second pass: among rows blocking within tolerance of the limit,
        // pick the largest pivot magnitude (deterministic: first maximum in
        // row order). A genuine bound flip only happens when nothing blocks
        // before the entering variable's own range.
        let mut leave: Option<(usize, bool)> = None;
        let mut best_mag = 0.0;
        for i in 0..self.m {
            let a = alpha[i];
            if a.abs() < PIVOT_TOL {
                continue;
            }
            if let Some((ratio, at_upper)) = kink(i, a) {
                if ratio <= limit + 1e-9 && a.abs() > best_mag * (1.0 + 1e-12) {
                    best_mag = a.abs();
                    leave = Some((i, at_upper));
                }
            }
        }
        if limit >= own_limit - 1e-12 && limit <= own_limit {
            // Entering reaches its opposite bound no later than any block.
            leave = None;
        }

        if limit.is_infinite() || limit.is_nan() {
            // Cannot happen with finite boxes.
            return Err(LpError::Numerical(f64::INFINITY));
        }
        let step = limit.max(0.0);

        // Move the entering variable and update basics.
        self.x[q] = self.nonbasic_value(q) + dir * step;
        for i in 0..self.m {
            let a = alpha[i];
            if a != 0.0 {
                let j = self.basic_of_row[i];
                self.x[j] -= dir * a * step;
            }
        }

        match leave {
            None => {
                // Bound flip: entering travels to its opposite bound.
                self.state[q] = match self.state[q] {
                    VarState::AtLower => VarState::AtUpper,
                    VarState::AtUpper => VarState::AtLower,
                    VarState::Basic(_) => unreachable!(),
                };
                Ok(true)
            }
            Some((r, at_upper)) => {
                let out = self.basic_of_row[r];
                // Leaving variable rests at the kink bound it ran into; snap
                // exactly onto it to control drift.
                self.state[out] = if at_upper { VarState::AtUpper } else { VarState::AtLower };
                self.x[out] = if at_upper { self.upper[out] } else { self.lower[out] };
                self.state[q] = VarState::Basic(r);
                self.basic_of_row[r] = q;
                self.pivot_update(r, &alpha);
                Ok(true)
            }
        }
    }
}

fn identity(m: usize) -> Vec<f64> {
    let mut b = vec![0.0; m * m];
    for i in 0..m {
        b[i * m + i] = 1.0;
    }
    b
}

/// One-shot solve with a cold start.
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution, LpError> {
    Simplex::new(p).solve()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bound_on_epsilon() {
        // max eps st eps <= 0.85
        let mut p = LpProblem::default();
        let eps = p.add_var(-100.0, 100.0, 1.0);
        p.add_row(vec![eps], vec![1.0], Sense::Le, 0.85);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective - 0.85).abs() < 1e-9);
    }

    #[test]
    fn tighter_of_two_rows_binds() {
        let mut p = LpProblem::default();
        let eps = p.add_var(-100.0, 100.0, 1.0);
        p.add_row(vec![eps], vec![1.0], Sense::Le, 1.0);
        p.add_row(vec![eps], vec![1.0], Sense::Le, 2.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut p = LpProblem::default();
        let x = p.add_var(-10.0, 10.0, 1.0);
        p.add_row(vec![x], vec![1.0], Sense::Ge, 5.0);
        p.add_row(vec![x], vec![1.0], Sense::Le, 4.0);
        let s = solve_lp(&p).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn equality_rows() {
        let mut p = LpProblem::default();
        let x = p.add_var(0.0, 10.0, 1.0);
        let y = p.add_var(0.0, 10.0, 2.0);
        p.add_row(vec![x, y], vec![1.0, 1.0], Sense::Eq, 4.0);
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 8.0).abs() < 1e-8, "obj {}", s.objective);
        assert!(s.x[0].abs() < 1e-8);
        assert!((s.x[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn warm_restart_after_bound_change() {
        let mut p = LpProblem::default();
        let x = p.add_var(0.0, 1.0, 1.0);
        let y = p.add_var(0.0, 1.0, 1.0);
        p.add_row(vec![x, y], vec![1.0, 1.0], Sense::Le, 1.5);
        let mut engine = Simplex::new(&p);
        let s1 = engine.solve().unwrap();
        assert!((s1.objective - 1.5).abs() < 1e-9);
        engine.set_bounds(0, 0.0, 0.0);
        let s2 = engine.solve().unwrap();
        assert!((s2.objective - 1.0).abs() < 1e-9);
        engine.set_bounds(0, 1.0, 1.0);
        let s3 = engine.solve().unwrap();
        assert!((s3.objective - 1.5).abs() < 1e-9);
        assert!((s3.x[0] - 1.0).abs() < 1e-9);
    }

    /// Brute-force oracle: enumerate candidate vertex bases (all subsets of
    /// tight constraints/bounds) on tiny dense LPs.
    fn oracle(p: &LpProblem) -> Option<f64> {
        let n = p.ncols();
        // Collect all hyperplanes: rows (as equalities at their bound) plus
        // variable bounds.
        let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
        for row in &p.rows {
            let mut a = vec![0.0; n];
            for (&c, &v) in row.cols.iter().zip(&row.coefs) {
                a[c] += v;
            }
            planes.push((a, row.rhs));
        }
        for j in 0..n {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            planes.push((a.clone(), p.lower[j]));
            planes.push((a, p.upper[j]));
        }
        let feasible = |x: &[f64]| -> bool {
            for row in &p.rows {
                let act: f64 = row.cols.iter().zip(&row.coefs).map(|(&c, &v)| v * x[c]).sum();
                let ok = match row.sense {
                    Sense::Le => act <= row.rhs + 1e-6,
                    Sense::Ge => act >= row.rhs - 1e-6,
                    Sense::Eq => (act - row.rhs).abs() <= 1e-6,
                };
                if !ok {
                    return false;
                }
            }
            x.iter()
                .enumerate()
                .all(|(j, &v)| v >= p.lower[j] - 1e-6 && v <= p.upper[j] + 1e-6)
        };
        let mut best: Option<f64> = None;
        let k = planes.len();
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            // Solve the n x n system of the selected planes.
            let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
            let mut b = nalgebra::DVector::<f64>::zeros(n);
            for (r, &pi) in idx.iter().enumerate() {
                for c in 0..n {
                    a[(r, c)] = planes[pi].0[c];
                }
                b[r] = planes[pi].1;
            }
            if let Some(sol) = a.lu().solve(&b) {
                let x: Vec<f64> = sol.iter().cloned().collect();
                if feasible(&x) {
                    let obj: f64 = (0..n).map(|j| p.objective[j] * x[j]).sum();
                    best = Some(best.map_or(obj, |b: f64| b.max(obj)));
                }
            }
            // Next combination.
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                if idx[i] + (n - i) < k {
                    idx[i] += 1;
                    for j2 in i + 1..n {
                        idx[j2] = idx[j2 - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn randomized_agreement_with_vertex_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20_240_601);
        let mut solved = 0;
        for case in 0..300 {
            let n = rng.gen_range(1..=3);
            let m = rng.gen_range(1..=4);
            let mut p = LpProblem::default();
            for _ in 0..n {
                let lo = rng.gen_range(-3.0..0.0);
                let hi = lo + rng.gen_range(0.1..4.0);
                p.add_var(lo, hi, rng.gen_range(-2.0..2.0));
            }
            for _ in 0..m {
                let mut cols = Vec::new();
                let mut coefs = Vec::new();
                for j in 0..n {
                    if rng.gen_bool(0.8) {
                        cols.push(j);
                        coefs.push(rng.gen_range(-2.0..2.0));
                    }
                }
                if cols.is_empty() {
                    cols.push(0);
                    coefs.push(1.0);
                }
                let sense = match rng.gen_range(0..3) {
                    0 => Sense::Le,
                    1 => Sense::Ge,
                    _ => Sense::Eq,
                };
                p.add_row(cols, coefs, sense, rng.gen_range(-2.0..2.0));
            }
            let got = solve_lp(&p).unwrap();
            let want = oracle(&p);
            match (got.status, want) {
                (LpStatus::Optimal, Some(w)) => {
                    assert!(
                        (got.objective - w).abs() < 1e-5,
                        "case {case}: simplex {} vs oracle {w}",
                        got.objective
                    );
                    solved += 1;
                }
                (LpStatus::Infeasible, None) => {}
                (LpStatus::Optimal, None) => {
                    panic!("case {case}: simplex found {} where oracle says infeasible", got.objective)
                }
                (LpStatus::Infeasible, Some(w)) => {
                    panic!("case {case}: simplex infeasible but oracle found {w}")
                }
            }
        }
        assert!(solved > 50, "too few feasible random cases: {solved}");
    }

    #[test]
    fn degenerate_rows_terminate() {
        // Many redundant rows through the same vertex.
        let mut p = LpProblem::default();
        let x = p.add_var(0.0, 10.0, 1.0);
        let y = p.add_var(0.0, 10.0, 1.0);
        for _ in 0..20 {
            p.add_row(vec![x, y], vec![1.0, 1.0], Sense::Le, 2.0);
            p.add_row(vec![x, y], vec![2.0, 2.0], Sense::Le, 4.0);
        }
        let s = solve_lp(&p).unwrap();
        assert!((s.objective - 2.0).abs() < 1e-8);
    }
}
