//! Shared scenario builders for integration tests.

use swarmstl_core::scenario::Scenario;

/// Scenario JSON with configurable swarms: (agent_count, segments, center).
/// Regions B (box around (3,3)) and Gr (box around (7,7)) plus unsafe R.
pub fn scenario_json(swarms: &[(usize, usize, [f64; 2])], horizon: f64, formula: &str) -> String {
    let mut swarm_docs = Vec::new();
    for (id, (n, segs, center)) in swarms.iter().enumerate() {
        let agents = grid_agents(*n, *center);
        swarm_docs.push(serde_json::json!({
            "id": id + 1,
            "segments": segs,
            "agents": agents,
            "sigma_init": [0.01, 0.0, 0.0, 0.01],
        }));
    }
    let doc = serde_json::json!({
        "dimension": 2,
        "constants": {"eta": 0.05, "zeta": 0.01, "chi": 3.0, "xi": 2.0,
                      "horizon": horizon, "t0": 0.0, "tau_max": 10},
        "swarms": swarm_docs,
        "obstacles": [],
        "regions": {
            "B":  {"rows": [{"a": [1.0, 0.0], "b": -2.5}, {"a": [-1.0, 0.0], "b": 4.5},
                             {"a": [0.0, 1.0], "b": -2.5}, {"a": [0.0, -1.0], "b": 4.5}]},
            "Gr": {"rows": [{"a": [1.0, 0.0], "b": -6.0}, {"a": [-1.0, 0.0], "b": 8.5},
                             {"a": [0.0, 1.0], "b": -6.0}, {"a": [0.0, -1.0], "b": 8.5}]},
            "R":  {"rows": [{"a": [1.0, 0.0], "b": -4.8}, {"a": [-1.0, 0.0], "b": 5.8},
                             {"a": [0.0, 1.0], "b": -4.8}, {"a": [0.0, -1.0], "b": 5.8}]}
        },
        "formula": formula,
    });
    doc.to_string()
}

pub fn load(swarms: &[(usize, usize, [f64; 2])], horizon: f64, formula: &str) -> Scenario {
    Scenario::load_str(&scenario_json(swarms, horizon, formula)).expect("test scenario loads")
}

/// Grid of agents with 0.02 m spacing whose centroid is exactly `center`.
pub fn grid_agents(n: usize, center: [f64; 2]) -> Vec<serde_json::Value> {
    let cols = (n as f64).sqrt().ceil() as usize;
    let mut raw = Vec::new();
    for i in 0..n {
        let r = i / cols;
        let c = i % cols;
        raw.push((c as f64 * 0.02, r as f64 * 0.02));
    }
    let mx = raw.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = raw.iter().map(|p| p.1).sum::<f64>() / n as f64;
    raw.iter()
        .map(|(x, y)| {
            serde_json::json!({"p": [center[0] + x - mx, center[1] + y - my], "v": [0.0, 0.0]})
        })
        .collect()
}
