//! Branch-and-bound correctness against exhaustive binary enumeration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swarmstl_core::encode::{LoweredNode, MilpInstance};
use swarmstl_core::expr::{VarKind, VarPool};
use swarmstl_core::lp::{solve_lp, LpProblem, LpStatus, Sense};
use swarmstl_core::milp::{solve_milp, solution_residual, MilpOptions, MilpOutcome};

/// Wrap a raw LP plus binary markers into a minimal instance.
fn instance_from(lp: LpProblem, binaries: Vec<usize>) -> MilpInstance {
    let mut pool = VarPool::default();
    let eps_col = lp.objective.iter().position(|&c| c != 0.0).unwrap_or(0);
    for j in 0..lp.ncols() {
        if binaries.contains(&j) {
            pool.add_binary("b");
        } else if j == eps_col {
            pool.add(VarKind::Epsilon, lp.lower[j], lp.upper[j]);
        } else {
            pool.add(VarKind::Aux("x"), lp.lower[j], lp.upper[j]);
        }
    }
    MilpInstance {
        lp,
        binaries: binaries.into_iter().map(swarmstl_core::expr::VarId).collect(),
        eps: swarmstl_core::expr::VarId(eps_col),
        eps_cap: f64::INFINITY,
        families: Vec::new(),
        lowered: Vec::<LoweredNode>::new(),
        shared: Vec::new(),
        sigmas: Default::default(),
        time_vars: Vec::new(),
        pos_vars: Vec::new(),
        p0: Vec::new(),
        pool,
    }
}

/// Exhaustive oracle: best LP optimum over all 2^B binary assignments.
fn enumerate_oracle(instance: &MilpInstance) -> Option<f64> {
    let b = instance.binaries.len();
    assert!(b <= 12, "oracle is exponential");
    let mut best: Option<f64> = None;
    for mask in 0..(1usize << b) {
        let mut lp = instance.lp.clone();
        for (bi, v) in instance.binaries.iter().enumerate() {
            let val = if mask & (1 << bi) != 0 { 1.0 } else { 0.0 };
            lp.lower[v.0] = val;
            lp.upper[v.0] = val;
        }
        if let Ok(sol) = solve_lp(&lp) {
            if sol.status == LpStatus::Optimal {
                best = Some(best.map_or(sol.objective, |b: f64| b.max(sol.objective)));
            }
        }
    }
    best
}

fn random_instance(rng: &mut ChaCha8Rng) -> MilpInstance {
    let n_cont = rng.gen_range(1..=3);
    let n_bin = rng.gen_range(1..=12);
    let mut lp = LpProblem::default();
    // Continuous variables; the first is the objective.
    for j in 0..n_cont {
        let lo = rng.gen_range(-4.0..0.0);
        let hi = lo + rng.gen_range(0.5..6.0);
        lp.add_var(lo, hi, if j == 0 { 1.0 } else { 0.0 });
    }
    let mut binaries = Vec::new();
    for _ in 0..n_bin {
        binaries.push(lp.add_var(0.0, 1.0, 0.0));
    }
    let n_rows = rng.gen_range(2..=8);
    for _ in 0..n_rows {
        let mut cols = Vec::new();
        let mut coefs = Vec::new();
        for j in 0..n_cont {
            if rng.gen_bool(0.7) {
                cols.push(j);
                coefs.push(rng.gen_range(-2.0..2.0));
            }
        }
        for (bi, &col) in binaries.iter().enumerate() {
            if rng.gen_bool(0.4) && bi < 6 {
                cols.push(col);
                coefs.push(rng.gen_range(-3.0..3.0));
            }
        }
        if cols.is_empty() {
            cols.push(0);
            coefs.push(1.0);
        }
        let sense = if rng.gen_bool(0.5) { Sense::Le } else { Sense::Ge };
        lp.add_row(cols, coefs, sense, rng.gen_range(-2.0..2.5));
    }
    // Occasionally a covering row over binaries.
    if rng.gen_bool(0.5) && n_bin >= 2 {
        let cols: Vec<usize> = binaries.iter().take(4).cloned().collect();
        let coefs = vec![1.0; cols.len()];
        lp.add_row(cols, coefs, Sense::Ge, 1.0);
    }
    instance_from(lp, binaries)
}

#[test]
fn two_binary_instance_matches_enumeration() {
    // Hand instance where enumeration of the 4 assignments gives 0.3:
    // max e st e <= 0.3 + 2 z1 - 2 z2, e <= 1 - z1 - z2, z1 + z2 >= 1.
    let mut lp = LpProblem::default();
    let e = lp.add_var(-10.0, 10.0, 1.0);
    let z1 = lp.add_var(0.0, 1.0, 0.0);
    let z2 = lp.add_var(0.0, 1.0, 0.0);
    lp.add_row(vec![e, z1, z2], vec![1.0, -2.0, 2.0], Sense::Le, 0.3);
    lp.add_row(vec![e, z1, z2], vec![1.0, 1.0, 1.0], Sense::Le, 1.0);
    lp.add_row(vec![z1, z2], vec![1.0, 1.0], Sense::Ge, 1.0);
    let instance = instance_from(lp, vec![z1, z2]);
    let want = enumerate_oracle(&instance).unwrap();
    // (z1,z2)=(1,0): e <= min(2.3, 0) = 0.0; (0,1): e <= min(-1.7, 0) ...
    // (1,1): e <= min(0.3, -1). Best assignment gives 0.0; re-check by hand:
    // (1,0) -> min(0.3+2, 1-1) = 0.0; oracle confirms the max.
    let opts = MilpOptions { dive: false, ..Default::default() };
    let got = solve_milp(&instance, &opts).unwrap();
    let (x, obj) = got.solution().expect("feasible");
    assert!((obj - want).abs() < 1e-6, "b&b {obj} vs oracle {want}");
    assert!(solution_residual(&instance, x) <= 1e-6);
}

#[test]
fn all_continuous_equals_lp() {
    let mut lp = LpProblem::default();
    let e = lp.add_var(-10.0, 10.0, 1.0);
    let y = lp.add_var(0.0, 4.0, 0.0);
    lp.add_row(vec![e, y], vec![1.0, 1.0], Sense::Le, 5.0);
    let lp_opt = solve_lp(&lp).unwrap().objective;
    let instance = instance_from(lp, vec![]);
    let got = solve_milp(&instance, &MilpOptions::default()).unwrap();
    assert!((got.solution().unwrap().1 - lp_opt).abs() < 1e-9);
}

#[test]
fn randomized_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let mut feasible = 0;
    for case in 0..80 {
        let instance = random_instance(&mut rng);
        let want = enumerate_oracle(&instance);
        let opts = MilpOptions { dive: false, ..Default::default() };
        let got = solve_milp(&instance, &opts).unwrap();
        match (got.solution(), want) {
            (Some((x, obj)), Some(w)) => {
                assert!(
                    (obj - w).abs() < 1e-6,
                    "case {case}: b&b {obj} vs enumeration {w}"
                );
                assert!(
                    solution_residual(&instance, x) <= 1e-6,
                    "case {case}: residual too large"
                );
                for &b in &instance.binaries {
                    let v = x[b.0];
                    assert!((v - v.round()).abs() < 1e-6, "case {case}: fractional binary");
                }
                feasible += 1;
            }
            (None, None) => {}
            (Some((_, obj)), None) => panic!("case {case}: b&b found {obj}, oracle infeasible"),
            (None, Some(w)) => panic!("case {case}: b&b infeasible, oracle found {w}"),
        }
    }
    assert!(feasible >= 20, "too few feasible cases: {feasible}");
}

#[test]
fn deterministic_assignments() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..10 {
        let instance = random_instance(&mut rng);
        let a = solve_milp(&instance, &MilpOptions::default()).unwrap();
        let b = solve_milp(&instance, &MilpOptions::default()).unwrap();
        match (a, b) {
            (MilpOutcome::Infeasible, MilpOutcome::Infeasible) => {}
            (a, b) => {
                let (xa, oa) = a.solution().expect("both feasible");
                let (xb, ob) = b.solution().expect("both feasible");
                assert_eq!(oa, ob);
                assert_eq!(xa, xb, "two runs must produce identical assignments");
            }
        }
    }
}

#[test]
fn node_budget_is_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    // A 12-binary instance with a tiny budget must fail loudly (unless the
    // dive improves on it, which is disabled here).
    loop {
        let instance = random_instance(&mut rng);
        if instance.binaries.len() < 10 || enumerate_oracle(&instance).is_none() {
            continue;
        }
        let opts = MilpOptions { node_budget: 1, dive: false, target_objective: None };
        match solve_milp(&instance, &opts) {
            Err(swarmstl_core::milp::MilpError::NodeBudget { .. }) => break,
            Ok(out) if out.solution().is_none() => continue,
            Ok(_) => continue, // solved within one node; try another
            Err(e) => panic!("unexpected error: {e}"),
        }
    }
}
