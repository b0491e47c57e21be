use swarmstl_core::encode::{build_milp, initial_sigmas};
use swarmstl_core::milp::{solve_milp, MilpOptions};
use swarmstl_core::stl::lift;
use swarmstl_core::expr::VarId;

#[test]
fn dbg_binding() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("debug")).is_test(false).try_init();
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/stlcg1.json")).unwrap();
    let sc = swarmstl_core::scenario::Scenario::load_str(&text).unwrap();
    let formula = sc.parse_formula().unwrap();
    let lifted = lift(&formula, &sc.swarm_sizes()).unwrap();
    let sigmas = initial_sigmas(&sc);
    let inst = build_milp(&sc, &lifted, &sigmas).unwrap();
    let opts = MilpOptions { node_budget: 3000, dive: true, target_objective: Some(1e-3) };
    let out = solve_milp(&inst, &opts).unwrap();
    let (x, eps) = out.solution().unwrap();
    println!("milp eps {:.4}", eps);
    for (name, slack) in inst.family_slacks(x) {
        println!("family {name}: {slack:.4}");
    }
    // times and waypoints
    for k in 0..inst.time_vars[0].len() {
        println!("k={} t={:.2} p=({:.3},{:.3})", k+1, x[inst.time_vars[0][k].0], x[inst.pos_vars[0][k][0].0], x[inst.pos_vars[0][k][1].0]);
    }
    // binding eps rows at integral solution
    let eps_col = inst.eps.0;
    for (i, r) in inst.lp.rows.iter().enumerate() {
        if !r.cols.contains(&eps_col) { continue; }
        let act: f64 = r.cols.iter().zip(&r.coefs).map(|(&c,&a)| a*x[c]).sum();
        let slack = match r.sense { swarmstl_core::lp::Sense::Ge => act - r.rhs, swarmstl_core::lp::Sense::Le => r.rhs-act, _=> (act-r.rhs).abs() };
        if slack.abs() < 1e-6 {
            let names: Vec<String> = r.cols.iter().zip(&r.coefs).map(|(&c,&a)| format!("{:+.3}*{}={:.2}", a, inst.var_name(VarId(c)), x[c])).collect();
            println!("binding {}: {} >= {:.3}", i, names.join(" "), r.rhs);
        }
    }
}
