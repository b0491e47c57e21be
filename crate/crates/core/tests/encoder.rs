//! Encoder behavior: family shapes, constants, determinism, and the
//! stage-1/stage-2 consistency contract.

mod common;

use swarmstl_core::encode::{build_ellipsoid_problem, build_milp, export_lp, initial_sigmas, Encoder};
use swarmstl_core::expr::{EllKey, Node, VarKind};
use swarmstl_core::lp::{solve_lp, LpStatus};
use swarmstl_core::milp::{solve_milp, MilpOptions};
use swarmstl_core::stl::lift;

fn count_leaves(n: &Node) -> usize {
    n.count_leaves()
}

#[test]
fn time_progression_chain_counts() {
    // 1 swarm, K = 2: chain of K + 1 ordering relations.
    let sc = common::load(&[(2, 2, [1.0, 1.0])], 10.0, "True");
    let sigmas = initial_sigmas(&sc);
    let enc = Encoder::new(&sc, &sigmas);
    let fam = enc.encode_time_progression();
    assert_eq!(count_leaves(&fam.root), 3);

    // 4 swarms with K = 6 each: 4 x 7 ordering relations.
    let sc = common::load(
        &[(2, 6, [1.0, 1.0]), (2, 6, [2.0, 1.0]), (2, 6, [8.0, 1.0]), (2, 6, [9.0, 1.0])],
        10.0,
        "True",
    );
    let sigmas = initial_sigmas(&sc);
    let enc = Encoder::new(&sc, &sigmas);
    let fam = enc.encode_time_progression();
    assert_eq!(count_leaves(&fam.root), 4 * 7);
}

#[test]
fn no_segments_emits_no_time_constraints() {
    let sc = common::load(&[(2, 0, [1.0, 1.0])], 10.0, "True");
    let sigmas = initial_sigmas(&sc);
    let enc = Encoder::new(&sc, &sigmas);
    assert_eq!(count_leaves(&enc.encode_time_progression().root), 0);
    assert_eq!(count_leaves(&enc.encode_reachability().root), 0);
}

#[test]
fn reachability_one_norm_arithmetic() {
    // chi = 1 in this check: displacement (1, 0.5) within dt = 2 is feasible
    // (1-norm 1.5 <= 2); within dt = 1 it is not (1.5 > 1), even though the
    // 2-norm 1.118 also exceeds 1.
    let one_norm = |d: &[f64]| d.iter().map(|x| x.abs()).sum::<f64>();
    assert!(one_norm(&[1.0, 0.5]) <= 1.0 * 2.0);
    assert!(one_norm(&[1.0, 0.5]) > 1.0 * 1.0);
    assert!((1.0f64 + 0.25).sqrt() > 1.0);
    // Zero displacement with zero duration sits exactly on the boundary.
    assert!(one_norm(&[0.0, 0.0]) <= 0.0);

    // The encoded family evaluates the same way.
    let sc = common::load(&[(2, 1, [1.0, 1.0])], 10.0, "True");
    let sigmas = initial_sigmas(&sc);
    let enc = Encoder::new(&sc, &sigmas);
    let fam = enc.encode_reachability();
    // Assignment: waypoint 1 at p0 + (1, 0.5) with t1 = 10 (pinned) is
    // feasible for chi = 3.
    let mut x = vec![0.0; enc.pool.len()];
    x[enc.time_var(0, 1).unwrap().0] = 10.0;
    x[enc.pos_var(0, 1, 0).unwrap().0] = 2.0;
    x[enc.pos_var(0, 1, 1).unwrap().0] = 1.5;
    let lookup = |k: EllKey| sigmas[&k].clone();
    assert!(fam.root.slack(&x, &lookup) > 0.0);
}

#[test]
fn inter_swarm_pair_counts_and_binaries() {
    // Single swarm: no pairs at all.
    let sc = common::load(&[(2, 2, [1.0, 1.0])], 10.0, "True");
    let sigmas = initial_sigmas(&sc);
    let enc = Encoder::new(&sc, &sigmas);
    let fam = enc.encode_inter_swarm_safety();
    assert_eq!(fam.root.count_ors(), 0);

    // Two swarms, one segment each: exactly 1 pair disjunction; the lowered
    // MILP carries at least 3 binaries for it.
    let sc = common::load(&[(2, 1, [1.0, 1.0]), (2, 1, [9.0, 1.0])], 10.0, "True");
    let sigmas = initial_sigmas(&sc);
    let enc = Encoder::new(&sc, &sigmas);
    let fam = enc.encode_inter_swarm_safety();
    assert_eq!(fam.root.count_ors(), 1, "one segment pair expected");

    let lifted = lift(&sc.parse_formula().unwrap(), &sc.swarm_sizes()).unwrap();
    let instance = build_milp(&sc, &lifted, &sigmas).unwrap();
    assert!(
        instance.binaries.len() >= 3,
        "pair disjunction should need >= 3 binaries, got {}",
        instance.binaries.len()
    );
}

#[test]
fn inter_swarm_margin_constant_matches_formula() {
    // With sigma = 0.01 I on both sides, eta = 0.05, zeta = 0.01, the spatial
    // branch demands a 1-norm midpoint gap of half-extents plus
    // (0.1 + 0.1 + 0.1 + 0.01 + eps) * sqrt(2).
    let sc = common::load(&[(2, 1, [1.0, 1.0]), (2, 1, [9.0, 1.0])], 10.0, "True");
    let sigmas = initial_sigmas(&sc);
    let enc = Encoder::new(&sc, &sigmas);
    let fam = enc.encode_inter_swarm_safety();
    // Static segments at distance 1 on the x-axis: slack of the spatial
    // branch must equal 1 - 0.31 sqrt(2) at eps = 0.
    let mut x = vec![0.0; enc.pool.len()];
    x[enc.time_var(0, 1).unwrap().0] = 10.0;
    x[enc.time_var(1, 1).unwrap().0] = 10.0;
    x[enc.pos_var(0, 1, 0).unwrap().0] = 1.0;
    x[enc.pos_var(0, 1, 1).unwrap().0] = 1.0;
    x[enc.pos_var(1, 1, 0).unwrap().0] = 2.0;
    x[enc.pos_var(1, 1, 1).unwrap().0] = 1.0;
    let lookup = |k: EllKey| sigmas[&k].clone();
    // Both segments span [0, 10]: the temporal branches are violated, so the
    // disjunction slack is the spatial margin.
    let expected = 1.0 - (0.1 + 0.1 + 0.1 + 0.01) * 2.0f64.sqrt();
    let got = fam.root.slack(&x, &lookup);
    assert!((got - expected).abs() < 1e-9, "slack {got} vs expected {expected}");
}

#[test]
fn obstacle_halfspace_slack() {
    // Safe halfspace y >= 1 modeled as the complement of a one-face obstacle
    // (the unsafe side y <= 1 is the obstacle). Waypoints at y = 2 with
    // sigma = 0.01 I, eta = 0.05, eps = 0 leave slack 0.85.
    let mut doc: serde_json::Value =
        serde_json::from_str(&common::scenario_json(&[(2, 1, [1.0, 2.0])], 10.0, "True")).unwrap();
    doc["obstacles"] = serde_json::json!([{"rows": [{"a": [0.0, -1.0], "b": 1.0}]}]);
    let sc = swarmstl_core::scenario::Scenario::load_str(&doc.to_string()).unwrap();
    let sigmas = initial_sigmas(&sc);
    let enc = Encoder::new(&sc, &sigmas);
    let fam = enc.encode_obstacle_safety();
    let mut x = vec![0.0; enc.pool.len()];
    x[enc.time_var(0, 1).unwrap().0] = 10.0;
    x[enc.pos_var(0, 1, 0).unwrap().0] = 1.0;
    x[enc.pos_var(0, 1, 1).unwrap().0] = 2.0;
    let lookup = |k: EllKey| sigmas[&k].clone();
    let got = fam.root.slack(&x, &lookup);
    assert!((got - 0.85).abs() < 1e-12, "slack {got} vs 0.85");

    // With eps as a variable the binding row is eps <= 0.85: the stage-2 view
    // of that row reads constant 0.85 with coefficient -1... after solving,
    // the MILP pushes eps to exactly that value.
    let lifted = lift(&sc.parse_formula().unwrap(), &sc.swarm_sizes()).unwrap();
    let instance = build_milp(&sc, &lifted, &sigmas).unwrap();
    let outcome = solve_milp(&instance, &MilpOptions { dive: false, ..Default::default() }).unwrap();
    let (xsol, eps) = outcome.solution().expect("feasible");
    assert!((eps - 0.85).abs() < 1e-6, "optimal margin {eps} vs 0.85");

    let problem = build_ellipsoid_problem(&instance, &sc, xsol);
    let row = problem
        .rows
        .iter()
        .find(|r| !r.cones.is_empty())
        .expect("obstacle row reaches stage 2");
    // const + eps_coef * eps + cone = 0.9 - 1 * eps - sqrt(a^T Sigma a)|..
    assert!(row.eps_coef < 0.0);
    let cone_at_warm: f64 = row
        .cones
        .iter()
        .map(|c| c.value(&sigmas[&c.ell]))
        .sum();
    assert!(
        (row.constant + cone_at_warm - 0.85).abs() < 1e-9,
        "stage-2 row should read eps <= 0.85, got {}",
        row.constant + cone_at_warm
    );
}

#[test]
fn volume_bound_values() {
    let sc = common::load(&[(5, 1, [1.0, 1.0])], 10.0, "True");
    let sigmas = initial_sigmas(&sc);
    let enc = Encoder::new(&sc, &sigmas);
    let vol = enc.encode_volume();
    let rhs = vol[&EllKey { swarm: 0, k: 1 }];
    assert!((rhs - (-13.815510557964274)).abs() < 1e-9, "xi=2, N=5, zeta=0.01, d=2: {rhs}");
    // sigma = 0.01 I passes: log det = ln(1e-4) = -9.21 > -13.82.
    assert!((1e-4f64).ln() > rhs);
}

#[test]
fn encoder_is_deterministic() {
    let sc = common::load(
        &[(3, 3, [1.0, 1.0]), (3, 3, [9.0, 1.0])],
        20.0,
        "(F[0,20] B{3}) & (G[0,20] !R{1})",
    );
    let sigmas = initial_sigmas(&sc);
    let lifted = lift(&sc.parse_formula().unwrap(), &sc.swarm_sizes()).unwrap();
    let a = build_milp(&sc, &lifted, &sigmas).unwrap();
    let b = build_milp(&sc, &lifted, &sigmas).unwrap();
    assert_eq!(export_lp(&a), export_lp(&b), "identical inputs must produce identical instances");
    // Variable ordering: timestamps then positions in (swarm, segment,
    // coordinate) order, then the margin.
    let mut kinds = a.pool.defs.iter().map(|d| &d.kind);
    assert!(matches!(kinds.next().unwrap(), VarKind::Time { swarm: 0, k: 1 }));
}

#[test]
fn empty_formula_hits_margin_cap() {
    let sc = common::load(&[(2, 1, [1.0, 1.0])], 10.0, "True");
    let sigmas = initial_sigmas(&sc);
    let lifted = lift(&sc.parse_formula().unwrap(), &sc.swarm_sizes()).unwrap();
    let instance = build_milp(&sc, &lifted, &sigmas).unwrap();
    let outcome = solve_milp(&instance, &MilpOptions::default()).unwrap();
    let (_, eps) = outcome.solution().expect("feasible");
    assert!(
        (eps - instance.eps_cap).abs() < 1e-6,
        "unconstrained margin should stop at the cap: {eps} vs {}",
        instance.eps_cap
    );
}

#[test]
fn big_m_audit_and_stage_consistency() {
    let mut doc: serde_json::Value = serde_json::from_str(&common::scenario_json(
        &[(3, 2, [1.0, 1.0]), (3, 2, [9.0, 1.0])],
        20.0,
        "(F[0,20] B{3}) & (G[0,20] !R{1})",
    ))
    .unwrap();
    doc["obstacles"] = serde_json::json!([{"rows": [
        {"a": [1.0, 0.0], "b": -4.0}, {"a": [-1.0, 0.0], "b": 6.0},
        {"a": [0.0, 1.0], "b": -8.0}, {"a": [0.0, -1.0], "b": 9.0}
    ]}]);
    let sc = swarmstl_core::scenario::Scenario::load_str(&doc.to_string()).unwrap();
    let sigmas = initial_sigmas(&sc);
    let lifted = lift(&sc.parse_formula().unwrap(), &sc.swarm_sizes()).unwrap();
    let instance = build_milp(&sc, &lifted, &sigmas).unwrap();
    // Feasibility-targeted search: the audit needs a sound integral solution,
    // not a maximal one.
    let opts = MilpOptions { target_objective: Some(0.05), ..Default::default() };
    let outcome = solve_milp(&instance, &opts).unwrap();
    let (x, eps) = outcome.solution().expect("feasible instance");

    // Every disjunction has one branch satisfied without big-M slack.
    assert!(
        instance.disjunction_audit(x) >= -1e-6,
        "big-M audit: {}",
        instance.disjunction_audit(x)
    );
    // Family-level satisfaction.
    for (name, slack) in instance.family_slacks(x) {
        assert!(slack >= -1e-6, "family {name} violated: {slack}");
    }

    // Stage consistency: plugging the stage-1 point into stage 2 with the
    // same matrices reproduces a feasible point with the same margin.
    let problem = build_ellipsoid_problem(&instance, &sc, x);
    let lookup = |k: EllKey| sigmas[&k].clone();
    for row in &problem.rows {
        let v = row.constant
            + row.eps_coef * eps
            + row.cones.iter().map(|c| c.value(&lookup(c.ell))).sum::<f64>();
        assert!(v >= -1e-6, "stage-2 row infeasible at the stage-1 point: {v}");
    }
}

#[test]
fn lp_export_has_all_sections() {
    let sc = common::load(&[(2, 1, [1.0, 1.0]), (2, 1, [9.0, 1.0])], 10.0, "F[0,10] B{2}");
    let sigmas = initial_sigmas(&sc);
    let lifted = lift(&sc.parse_formula().unwrap(), &sc.swarm_sizes()).unwrap();
    let instance = build_milp(&sc, &lifted, &sigmas).unwrap();
    let text = export_lp(&instance);
    for section in ["Maximize", "Subject To", "Bounds", "Binaries", "End"] {
        assert!(text.contains(section), "missing `{section}` section");
    }
    assert!(text.contains("eps"));
    assert!(text.contains("t_s0_k1"));
}

#[test]
fn unliftable_duration_guard_makes_branch_infeasible() {
    // Nested F with a window shorter than any segment can provide: with
    // K = 1 the single segment spans the whole pinned horizon, so a nested
    // F[0,1] under a G anchored to that segment can never fit its duration
    // guard... the encoder must still produce an instance whose MILP is
    // infeasible rather than silently dropping the guard.
    let sc = common::load(&[(2, 1, [1.0, 1.0])], 10.0, "G[0,10] F[0,1] B{2}");
    let sigmas = initial_sigmas(&sc);
    let lifted = lift(&sc.parse_formula().unwrap(), &sc.swarm_sizes()).unwrap();
    match build_milp(&sc, &lifted, &sigmas) {
        Ok(instance) => {
            let outcome = solve_milp(&instance, &MilpOptions::default()).unwrap();
            assert!(outcome.solution().is_none(), "duration guard must be unsatisfiable");
        }
        Err(_) => {} // folding already proved it infeasible
    }
}

#[test]
fn lp_relaxation_solves_single_constraint_example() {
    // The relaxation of the obstacle example: max eps st eps <= 0.85.
    let mut doc: serde_json::Value =
        serde_json::from_str(&common::scenario_json(&[(2, 1, [1.0, 2.0])], 10.0, "True")).unwrap();
    doc["obstacles"] = serde_json::json!([{"rows": [{"a": [0.0, -1.0], "b": 1.0}]}]);
    let sc = swarmstl_core::scenario::Scenario::load_str(&doc.to_string()).unwrap();
    let sigmas = initial_sigmas(&sc);
    let lifted = lift(&sc.parse_formula().unwrap(), &sc.swarm_sizes()).unwrap();
    let instance = build_milp(&sc, &lifted, &sigmas).unwrap();
    let sol = solve_lp(&instance.lp).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    // Waypoints are free to move deeper into the safe side, so the LP can do
    // better than 0.85 here; the cap and rows still bound it.
    assert!(sol.objective >= 0.85 - 1e-9);
}
