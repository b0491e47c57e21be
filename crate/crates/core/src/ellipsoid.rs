//! Ellipsoid stage: maximize the feasibility margin over lower-triangular
//! factors sigma = L L^T subject to the cone rows activated by the MILP
//! stage, per-segment volume floors, and positive-definiteness floors.
//!
//! Solved with a logarithmic barrier and damped Newton steps on (L's, rho's,
//! eps), warm-started from the matrices the MILP stage was built with.
//! `sqrt(lambda_max(Sigma))` terms go through per-ellipsoid epigraph scalars
//! `rho >= ||L||_2`, kept smooth via the determinant barrier
//! `-ln det(rho^2 I - L L^T)`. After the barrier finishes, the margin is
//! re-derived in closed form from the returned factors, and the warm-start
//! point serves as a fallback so the stage never returns a worse margin than
//! it was handed.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::encode::EllipsoidProblem;
use crate::expr::{ConeKind, EllKey};
use crate::geometry;

const DELTA_MIN: f64 = 1e-6;
const ROW_TOL: f64 = 1e-6;
const NEWTON_ITERS: usize = 200;
const BARRIER_STAGES: usize = 8;

#[derive(Debug, Error)]
pub enum EllipsoidError {
    #[error("warm-start matrices violate an active row by {0:.3e}")]
    WarmStartInfeasible(f64),
    #[error("iteration budget exceeded without recovering a feasible point")]
    IterationBudget,
}

#[derive(Debug, Clone)]
pub struct EllipsoidSolution {
    pub eps: f64,
    /// Updated matrices for every key of the problem (fixed keys unchanged).
    pub sigmas: Vec<(EllKey, DMatrix<f64>)>,
    pub newton_iterations: usize,
    /// True when the barrier improved on the warm start (otherwise the
    /// warm-start matrices are returned with their exact margin).
    pub improved: bool,
}

/// Index layout of the flattened decision vector.
struct Layout {
    /// Variable ellipsoids: (problem index, offset of L entries).
    var_ells: Vec<(usize, usize)>,
    /// rho offsets per variable ellipsoid needing a spectral bound.
    rho_of: Vec<Option<usize>>,
    eps_at: usize,
    len: usize,
    dim: usize,
}

fn tri_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Lower-triangular entries (row-major, i >= j) to a full matrix.
fn unpack_l(x: &[f64], offset: usize, d: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(d, d);
    let mut idx = offset;
    for i in 0..d {
        for j in 0..=i {
            l[(i, j)] = x[idx];
            idx += 1;
        }
    }
    l
}

fn pack_l(l: &DMatrix<f64>, x: &mut [f64], offset: usize) {
    let d = l.nrows();
    let mut idx = offset;
    for i in 0..d {
        for j in 0..=i {
            x[idx] = l[(i, j)];
            idx += 1;
        }
    }
}

/// One smooth barrier constraint g(x) > 0.
enum Term {
    /// Active cone row (fixed cones folded into `constant`).
    Row { constant: f64, eps_coef: f64, quads: Vec<(usize, Vec<f64>, f64)>, rhos: Vec<(usize, f64)> },
    /// cap - eps
    EpsCap { cap: f64 },
    /// 2 sum ln L_jj - rhs (volume floor)
    Volume { ell: usize, rhs: f64 },
    /// L_jj - delta
    DiagFloor { ell: usize, j: usize },
    /// ln det(L L^T - delta^2 I) finiteness: lambda_min floor
    PdFloor { ell: usize },
    /// ln det(rho^2 I - L L^T): spectral epigraph
    Spectral { ell: usize, rho: usize },
}

struct Barrier<'a> {
    _problem: &'a EllipsoidProblem,
    layout: Layout,
    terms: Vec<Term>,
}

impl<'a> Barrier<'a> {
    fn l_of(&self, x: &[f64], var_idx: usize) -> DMatrix<f64> {
        let (_, off) = self.layout.var_ells[var_idx];
        unpack_l(x, off, self.layout.dim)
    }

    /// Value of every g term; None when outside the domain.
    fn term_value(&self, t: &Term, x: &[f64]) -> Option<f64> {
        let d = self.layout.dim;
        match t {
            Term::Row { constant, eps_coef, quads, rhos } => {
                let mut v = constant + eps_coef * x[self.layout.eps_at];
                for (ell, a, coef) in quads {
                    let l = self.l_of(x, *ell);
                    let u = l.transpose() * DVector::from_column_slice(a);
                    v += coef * u.norm();
                }
                for (rho_off, coef) in rhos {
                    v += coef * x[*rho_off];
                }
                Some(v)
            }
            Term::EpsCap { cap } => Some(cap - x[self.layout.eps_at]),
            Term::Volume { ell, rhs } => {
                let l = self.l_of(x, *ell);
                let mut v = -rhs;
                for j in 0..d {
                    if l[(j, j)] <= 0.0 {
                        return None;
                    }
                    v += 2.0 * l[(j, j)].ln();
                }
                Some(v)
            }
            Term::DiagFloor { ell, j } => {
                let l = self.l_of(x, *ell);
                Some(l[(*j, *j)] - DELTA_MIN)
            }
            Term::PdFloor { ell } => {
                let l = self.l_of(x, *ell);
                let m = &l * l.transpose() - DMatrix::identity(d, d) * (DELTA_MIN * DELTA_MIN);
                det_if_pd(&m)
            }
            Term::Spectral { ell, rho } => {
                let l = self.l_of(x, *ell);
                let r = x[*rho];
                let m = DMatrix::identity(d, d) * (r * r) - &l * l.transpose();
                det_if_pd(&m)
            }
        }
    }

    /// phi_mu = -eps + mu * sum(-ln g). None outside the domain.
    fn value(&self, x: &[f64], mu: f64) -> Option<f64> {
        let mut phi = -x[self.layout.eps_at];
        for t in &self.terms {
            let g = self.term_value(t, x)?;
            if g <= 0.0 {
                return None;
            }
            phi -= mu * g.ln();
        }
        Some(phi)
    }

    /// Analytic gradient of phi_mu. Caller guarantees domain membership.
    fn gradient(&self, x: &[f64], mu: f64) -> DVector<f64> {
        let n = self.layout.len;
        let d = self.layout.dim;
        let mut grad = DVector::zeros(n);
        grad[self.layout.eps_at] = -1.0;
        for t in &self.terms {
            let g = self.term_value(t, x).expect("gradient outside domain");
            let w = -mu / g; // d(-mu ln g)/dg
            match t {
                Term::Row { eps_coef, quads, rhos, .. } => {
                    grad[self.layout.eps_at] += w * eps_coef;
                    for (ell, a, coef) in quads {
                        let (_, off) = self.layout.var_ells[*ell];
                        let l = self.l_of(x, *ell);
                        let av = DVector::from_column_slice(a);
                        let u = l.transpose() * &av;
                        let nu = u.norm().max(1e-300);
                        // d||L^T a||/dL_ij = a_i u_j / ||u||
                        let mut idx = off;
                        for i in 0..d {
                            for j in 0..=i {
                                grad[idx] += w * coef * av[i] * u[j] / nu;
                                idx += 1;
                            }
                        }
                    }
                    for (rho_off, coef) in rhos {
                        grad[*rho_off] += w * coef;
                    }
                }
                Term::EpsCap { .. } => {
                    grad[self.layout.eps_at] += w * (-1.0);
                }
                Term::Volume { ell, .. } => {
                    let (_, off) = self.layout.var_ells[*ell];
                    let l = self.l_of(x, *ell);
                    let mut idx = off;
                    for i in 0..d {
                        for j in 0..=i {
                            if i == j {
                                grad[idx] += w * 2.0 / l[(i, i)];
                            }
                            idx += 1;
                        }
                    }
                }
                Term::DiagFloor { ell, j } => {
                    let (_, off) = self.layout.var_ells[*ell];
                    // Offset of the (j, j) entry in packed lower-triangular order.
                    let idx = off + tri_len(*j + 1) - 1;
                    grad[idx] += w;
                }
                Term::PdFloor { ell } => {
                    let (_, off) = self.layout.var_ells[*ell];
                    let l = self.l_of(x, *ell);
                    let m = &l * l.transpose() - DMatrix::identity(d, d) * (DELTA_MIN * DELTA_MIN);
                    let minv = m.try_inverse().expect("PD inside domain");
                    // d ln det(M)/dL = 2 M^{-1} L
                    let gmat = &minv * &l * 2.0;
                    let mut idx = off;
                    for i in 0..d {
                        for j in 0..=i {
                            grad[idx] += w * gmat[(i, j)];
                            idx += 1;
                        }
                    }
                }
                Term::Spectral { ell, rho } => {
                    let (_, off) = self.layout.var_ells[*ell];
                    let l = self.l_of(x, *ell);
                    let r = x[*rho];
                    let m = DMatrix::identity(d, d) * (r * r) - &l * l.transpose();
                    let minv = m.try_inverse().expect("PD inside domain");
                    // d ln det(M)/d rho = 2 rho tr(M^{-1});
                    // d ln det(M)/dL = -2 M^{-1} L
                    grad[*rho] += w * 2.0 * r * minv.trace();
                    let gmat = &minv * &l * (-2.0);
                    let mut idx = off;
                    for i in 0..d {
                        for j in 0..=i {
                            grad[idx] += w * gmat[(i, j)];
                            idx += 1;
                        }
                    }
                }
            }
        }
        grad
    }
}

fn det_if_pd(m: &DMatrix<f64>) -> Option<f64> {
    m.clone().cholesky().map(|c| {
        let ld: f64 = c.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        ld.exp()
    })
}

/// Exact best margin for fixed factors: minimum over rows of the epsilon at
/// which each row becomes tight, capped. Returns None when some row without
/// an epsilon term is violated.
fn exact_eps(problem: &EllipsoidProblem, sigma_of: &dyn Fn(EllKey) -> DMatrix<f64>) -> Option<f64> {
    let mut eps = problem.eps_cap;
    for row in &problem.rows {
        let mut v = row.constant;
        for c in &row.cones {
            v += c.value(&sigma_of(c.ell));
        }
        if row.eps_coef.abs() < 1e-14 {
            if v < -ROW_TOL {
                return None;
            }
        } else if row.eps_coef < 0.0 {
            eps = eps.min(v / -row.eps_coef);
        } else {
            // Rows relaxed by epsilon only lower-bound it; feasible since we
            // maximize.
        }
    }
    Some(eps)
}

/// Solve the ellipsoid stage. Never returns a margin below the warm start's
/// exact margin minus 1e-9.
pub fn solve_ellipsoids(problem: &EllipsoidProblem) -> Result<EllipsoidSolution, EllipsoidError> {
    let d = problem.ells.first().map(|e| e.dim).unwrap_or(0);

    // Warm-start fallback: exact margin at the handed-in matrices.
    let warm_sigma = |k: EllKey| -> DMatrix<f64> {
        problem.ells[problem.ell_index(k)].warm.clone()
    };
    let warm_eps = match exact_eps(problem, &warm_sigma) {
        Some(e) => e,
        None => {
            // Quantify the violation for the error message.
            let worst = problem
                .rows
                .iter()
                .map(|row| {
                    row.constant
                        + row.cones.iter().map(|c| c.value(&warm_sigma(c.ell))).sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            return Err(EllipsoidError::WarmStartInfeasible(-worst));
        }
    };

    let var_indices: Vec<usize> = problem
        .ells
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.fixed)
        .map(|(i, _)| i)
        .collect();

    let fallback = |improved: bool, iters: usize| EllipsoidSolution {
        eps: warm_eps,
        sigmas: problem.ells.iter().map(|e| (e.key, e.warm.clone())).collect(),
        newton_iterations: iters,
        improved,
    };

    if var_indices.is_empty() {
        return Ok(fallback(false, 0));
    }

    // --- layout -----------------------------------------------------------
    let mut var_ells = Vec::new();
    let mut offset = 0usize;
    for &i in &var_indices {
        var_ells.push((i, offset));
        offset += tri_len(d);
    }
    // Spectral epigraphs for variable ells referenced by lambda-max terms.
    let needs_rho: Vec<bool> = var_indices
        .iter()
        .map(|&i| {
            problem.rows.iter().any(|r| {
                r.cones.iter().any(|c| {
                    matches!(c.kind, ConeKind::SqrtLambdaMax)
                        && problem.ell_index(c.ell) == i
                })
            })
        })
        .collect();
    let mut rho_of = vec![None; var_indices.len()];
    for (vi, need) in needs_rho.iter().enumerate() {
        if *need {
            rho_of[vi] = Some(offset);
            offset += 1;
        }
    }
    let eps_at = offset;
    let layout = Layout { var_ells, rho_of, eps_at, len: offset + 1, dim: d };

    // --- terms -------------------------------------------------------------
    let var_of_problem_index = |pi: usize| -> Option<usize> {
        layout.var_ells.iter().position(|(i, _)| *i == pi)
    };
    let mut terms = Vec::new();
    for row in &problem.rows {
        let mut constant = row.constant;
        let mut quads = Vec::new();
        let mut rhos = Vec::new();
        for c in &row.cones {
            debug_assert!(c.coef <= 0.0, "cone terms must relax rows downward");
            let pi = problem.ell_index(c.ell);
            match (var_of_problem_index(pi), &c.kind) {
                (None, _) => constant += c.value(&problem.ells[pi].warm),
                (Some(vi), ConeKind::SqrtQuad(a)) => quads.push((vi, a.clone(), c.coef)),
                (Some(vi), ConeKind::SqrtLambdaMax) => {
                    let rho = layout.rho_of[vi].expect("rho allocated for lambda-max term");
                    rhos.push((rho, c.coef));
                }
            }
        }
        terms.push(Term::Row { constant, eps_coef: row.eps_coef, quads, rhos });
    }
    terms.push(Term::EpsCap { cap: problem.eps_cap });
    for (vi, (pi, _)) in layout.var_ells.iter().enumerate() {
        terms.push(Term::Volume { ell: vi, rhs: problem.ells[*pi].vol_rhs });
        for j in 0..d {
            terms.push(Term::DiagFloor { ell: vi, j });
        }
        terms.push(Term::PdFloor { ell: vi });
        if let Some(rho) = layout.rho_of[vi] {
            terms.push(Term::Spectral { ell: vi, rho });
        }
    }

    let barrier = Barrier { _problem: problem, layout, terms };

    // --- strictly interior start -------------------------------------------
    let mut x = vec![0.0; barrier.layout.len];
    for (vi, (pi, off)) in barrier.layout.var_ells.iter().enumerate() {
        let warm = &problem.ells[*pi].warm;
        let mut l = warm
            .clone()
            .cholesky()
            .map(|c| c.l().clone_owned())
            .unwrap_or_else(|| geometry::sym_sqrt(warm));
        for j in 0..d {
            if l[(j, j)] < 2.0 * DELTA_MIN {
                l[(j, j)] = 2.0 * DELTA_MIN;
            }
        }
        // Give the volume floor strictly positive slack.
        let logdet: f64 = (0..d).map(|j| 2.0 * l[(j, j)].ln()).sum();
        let rhs = problem.ells[*pi].vol_rhs;
        if logdet <= rhs + 1e-9 {
            let scale = ((rhs + 1e-6 - logdet) / (2.0 * d as f64)).exp();
            l *= scale;
        }
        pack_l(&l, &mut x, *off);
        if let Some(rho) = barrier.layout.rho_of[vi] {
            let spec = l.norm(); // Frobenius >= spectral: strictly feasible
            x[rho] = spec * 1.01 + 1e-9;
        }
    }
    // Largest eps with strict slack on every row at the starting factors.
    {
        let sig_at_x = |x: &[f64]| {
            let mut map: Vec<(EllKey, DMatrix<f64>)> = Vec::new();
            for e in problem.ells.iter() {
                map.push((e.key, e.warm.clone()));
            }
            for (vi, (pi, _)) in barrier.layout.var_ells.iter().enumerate() {
                let l = barrier.l_of(x, vi);
                map[*pi] = (problem.ells[*pi].key, &l * l.transpose());
            }
            map
        };
        let map = sig_at_x(&x);
        let lookup = |k: EllKey| -> DMatrix<f64> {
            map.iter().find(|(key, _)| *key == k).unwrap().1.clone()
        };
        let room = exact_eps(problem, &lookup).unwrap_or(warm_eps);
        // rho over-approximates lambda_max, so back off generously.
        x[barrier.layout.eps_at] = room - 1e-3 * (1.0 + room.abs());
    }
    if barrier.value(&x, 1.0).is_none() {
        // Could not construct an interior point; keep the warm start.
        log::debug!("ellipsoid stage: no strictly interior start, keeping warm matrices");
        return Ok(fallback(false, 0));
    }

    // --- barrier stages ------------------------------------------------------
    let mut total_iters = 0usize;
    let mut mu = 1.0;
    let n = barrier.layout.len;
    for _stage in 0..BARRIER_STAGES {
        for _ in 0..NEWTON_ITERS {
            total_iters += 1;
            let grad = barrier.gradient(&x, mu);
            // Hessian by central differences of the analytic gradient.
            let mut hess = DMatrix::zeros(n, n);
            for i in 0..n {
                let h = 1e-6 * (1.0 + x[i].abs());
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let (gp, gm) = match (barrier.value(&xp, mu), barrier.value(&xm, mu)) {
                    (Some(_), Some(_)) => (barrier.gradient(&xp, mu), barrier.gradient(&xm, mu)),
                    _ => {
                        // One-sided fallback near the boundary.
                        let g0 = grad.clone();
                        if barrier.value(&xp, mu).is_some() {
                            ((barrier.gradient(&xp, mu) - &g0) * 2.0 + &g0, g0)
                        } else if barrier.value(&xm, mu).is_some() {
                            (g0.clone(), (barrier.gradient(&xm, mu) - &g0) * 2.0 + &g0)
                        } else {
                            (g0.clone(), g0)
                        }
                    }
                };
                let col = (gp - gm) / (2.0 * h);
                hess.set_column(i, &col);
            }
            // Symmetrize and regularize until the step is solvable.
            let hess = (&hess + hess.transpose()) * 0.5;
            let mut lambda = 0.0;
            let step = loop {
                let reg = &hess + DMatrix::identity(n, n) * lambda;
                if let Some(ch) = reg.clone().cholesky() {
                    break ch.solve(&(-&grad));
                }
                lambda = if lambda == 0.0 { 1e-8 } else { lambda * 10.0 };
                if lambda > 1e8 {
                    break -&grad * 1e-3;
                }
            };
            let decrement = -grad.dot(&step);
            if decrement.abs() < 1e-12 {
                break;
            }
            // Backtracking line search staying strictly inside the domain.
            let phi0 = barrier.value(&x, mu).expect("iterate inside domain");
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-12 {
                let mut xt = x.clone();
                for i in 0..n {
                    xt[i] += alpha * step[i];
                }
                if let Some(phi) = barrier.value(&xt, mu) {
                    if phi <= phi0 - 1e-4 * alpha * decrement.max(0.0) {
                        x = xt;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
            if decrement < 1e-10 {
                break;
            }
        }
        mu /= 10.0;
    }

    // --- exact margin at the returned factors --------------------------------
    let mut out: Vec<(EllKey, DMatrix<f64>)> =
        problem.ells.iter().map(|e| (e.key, e.warm.clone())).collect();
    for (vi, (pi, _)) in barrier.layout.var_ells.iter().enumerate() {
        let l = barrier.l_of(&x, vi);
        out[*pi] = (problem.ells[*pi].key, &l * l.transpose());
    }
    let lookup = |k: EllKey| -> DMatrix<f64> {
        out.iter().find(|(key, _)| *key == k).unwrap().1.clone()
    };
    let candidate_eps = exact_eps(problem, &lookup);

    // Validate volume and PD floors on the candidate.
    let candidate_valid = candidate_eps.is_some()
        && barrier.layout.var_ells.iter().all(|(pi, _)| {
            let sigma = &out[*pi].1;
            let pd = sigma
                .clone()
                .cholesky()
                .map(|c| c.l().diagonal().iter().all(|v| *v >= DELTA_MIN * 0.99))
                .unwrap_or(false);
            pd && geometry::log_det_of_checked(sigma)
                .map(|ld| ld >= problem.ells[*pi].vol_rhs - 1e-9)
                .unwrap_or(false)
        });

    match (candidate_valid, candidate_eps) {
        (true, Some(e)) if e >= warm_eps => Ok(EllipsoidSolution {
            eps: e,
            sigmas: out,
            newton_iterations: total_iters,
            improved: e > warm_eps + 1e-12,
        }),
        _ => Ok(fallback(false, total_iters)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::{EllDef, EllipsoidProblem, Stage2Row as Row};
    use crate::expr::{ConeKind, ConeTerm, EllKey};

    fn key(k: usize) -> EllKey {
        EllKey { swarm: 0, k }
    }

    fn ident(d: usize, s: f64) -> DMatrix<f64> {
        DMatrix::identity(d, d) * s
    }

    #[test]
    fn one_dimensional_closed_form() {
        // maximize eps st eps <= c - ||L^T a||/|a| with volume floor
        // det(LL^T) >= v. For d = 1: L = sqrt(v) at the floor and
        // eps = c - sqrt(v).
        let c = 2.0;
        let v: f64 = 0.25;
        let problem = EllipsoidProblem {
            ells: vec![
                EllDef { key: key(1), dim: 1, fixed: true, warm: ident(1, 1.0), vol_rhs: v.ln() },
                EllDef { key: key(2), dim: 1, fixed: false, warm: ident(1, 1.0), vol_rhs: v.ln() },
            ],
            rows: vec![Row {
                constant: c,
                eps_coef: -1.0,
                cones: vec![ConeTerm { ell: key(2), kind: ConeKind::SqrtQuad(vec![1.0]), coef: -1.0 }],
            }],
            eps_cap: 100.0,
            eps_warm: c - 1.0,
        };
        let sol = solve_ellipsoids(&problem).unwrap();
        let sigma = &sol.sigmas[1].1;
        assert!(
            (sigma[(0, 0)] - v).abs() < 1e-2,
            "volume floor should bind: sigma {} vs {v}",
            sigma[(0, 0)]
        );
        assert!(
            (sol.eps - (c - v.sqrt())).abs() < 1e-2,
            "eps {} vs closed form {}",
            sol.eps,
            c - v.sqrt()
        );
        assert!(sol.eps >= problem.eps_warm - 1e-9);
    }

    #[test]
    fn no_cone_rows_reaches_cap() {
        let problem = EllipsoidProblem {
            ells: vec![EllDef {
                key: key(2),
                dim: 2,
                fixed: false,
                warm: ident(2, 0.01),
                vol_rhs: (1e-4f64).ln() - 1.0,
            }],
            rows: vec![],
            eps_cap: 7.5,
            eps_warm: 0.0,
        };
        let sol = solve_ellipsoids(&problem).unwrap();
        assert!((sol.eps - 7.5).abs() < 1e-6, "eps {} should reach the cap", sol.eps);
        // Volume floor still satisfied.
        let sigma = &sol.sigmas[0].1;
        assert!(geometry::log_det_of(sigma) >= (1e-4f64).ln() - 1.0 - 1e-9);
    }

    #[test]
    fn warm_start_margin_never_degrades() {
        // A row already tight at the warm start: the stage must return at
        // least the warm margin.
        let warm = ident(2, 0.01);
        let problem = EllipsoidProblem {
            ells: vec![EllDef {
                key: key(2),
                dim: 2,
                fixed: false,
                warm: warm.clone(),
                vol_rhs: 2.0 * (0.002f64).ln(),
            }],
            rows: vec![Row {
                constant: 0.9 - 0.05,
                eps_coef: -1.0,
                cones: vec![ConeTerm {
                    ell: key(2),
                    kind: ConeKind::SqrtQuad(vec![0.0, 1.0]),
                    coef: -1.0,
                }],
            }],
            eps_cap: 100.0,
            eps_warm: 0.75,
        };
        let sol = solve_ellipsoids(&problem).unwrap();
        assert!(sol.eps >= 0.75 - 1e-9, "eps {} lost ground on the warm start", sol.eps);
        // All rows satisfied at the returned matrices.
        let lookup = |k: EllKey| sol.sigmas.iter().find(|(key, _)| *key == k).unwrap().1.clone();
        for row in &problem.rows {
            let v = row.constant
                + row.eps_coef * sol.eps
                + row.cones.iter().map(|c| c.value(&lookup(c.ell))).sum::<f64>();
            assert!(v >= -1e-6, "row violated by {v}");
        }
    }

    #[test]
    fn spectral_rows_shrink_lambda_max() {
        // eps <= 1 - rho with rho >= ||L||: optimum shrinks the ellipsoid to
        // its volume floor, which for an isotropic optimum puts
        // sqrt(lambda_max) near the floor's semi-axis.
        let vol_rhs = 2.0 * (0.05f64).ln(); // det >= 0.0025 -> isotropic 0.05 I
        let problem = EllipsoidProblem {
            ells: vec![EllDef { key: key(2), dim: 2, fixed: false, warm: ident(2, 0.09), vol_rhs }],
            rows: vec![Row {
                constant: 1.0,
                eps_coef: -1.0,
                cones: vec![ConeTerm { ell: key(2), kind: ConeKind::SqrtLambdaMax, coef: -1.0 }],
            }],
            eps_cap: 100.0,
            eps_warm: 0.7,
        };
        let sol = solve_ellipsoids(&problem).unwrap();
        let lam = geometry::sqrt_lambda_max_of(&sol.sigmas[0].1);
        assert!(sol.eps >= 0.7 - 1e-9);
        assert!(
            (sol.eps - (1.0 - lam)).abs() < 2e-2,
            "eps {} inconsistent with lambda {}",
            sol.eps,
            lam
        );
        assert!(lam < 0.3 + 1e-2, "lambda_max should shrink toward the floor, got {lam}");
    }
}
