use serde_json::Value;

use secinfer_web::{generate_network, run_demo_scenario, threshold_curve, TRACE_POINTS};

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.expect("operation succeeds")).expect("valid JSON")
}

#[test]
fn network_is_deterministic_and_well_formed() {
    let a = generate_network(50, 2000.0, 600.0, 7, 3).unwrap();
    assert_eq!(a, generate_network(50, 2000.0, 600.0, 7, 3).unwrap());
    let v: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["seed_used"], 7);
    assert_eq!(v["observable"], true);
    assert_eq!(v["center_sector"], 4);
    let nodes = v["nodes"].as_array().unwrap();
    assert_eq!(nodes.len(), 50);
    for n in nodes {
        let (x, y) = (n["x"].as_f64().unwrap(), n["y"].as_f64().unwrap());
        assert!((0.0..=2000.0).contains(&x) && (0.0..=2000.0).contains(&y));
        assert!(n["sector"].as_u64().unwrap() < 9);
    }
    for e in v["edges"].as_array().unwrap() {
        assert!(e[0].as_u64().unwrap() < 50 && e[1].as_u64().unwrap() < 50);
    }
}

#[test]
fn strong_scenario_view() {
    let v = parse(run_demo_scenario("strong", 1, 2000));
    assert_eq!(v["outcome"], "missed_and_wrong");
    assert_eq!(v["detected_nodes"], 0);
    let center = v["network"]["center_sector"].as_u64().unwrap();
    let nodes = v["network"]["nodes"].as_array().unwrap();
    let compromised: Vec<&Value> = nodes.iter().filter(|n| n["compromised"] == true).collect();
    assert!(!compromised.is_empty());
    assert!(compromised.iter().all(|n| n["sector"].as_u64() == Some(center)));

    let times = v["times"].as_array().unwrap();
    assert!(times.len() as u64 <= TRACE_POINTS + 2);
    assert_eq!(times.first().unwrap(), 0);
    assert_eq!(times.last().unwrap(), 2000);
    let errors = v["errors"].as_array().unwrap();
    assert_eq!(errors.len(), nodes.len() - compromised.len());
    assert!(errors.iter().all(|e| e.as_array().unwrap().len() == times.len()));
}

#[test]
fn loud_and_quiet_runs_are_distinguishable() {
    let none = parse(run_demo_scenario("none", 2, 1500));
    assert_eq!(none["detected_nodes"], 0);
    assert!(none["flag_times"].as_array().unwrap().iter().all(Value::is_null));
    let weak = parse(run_demo_scenario("weak", 2, 20_000));
    assert_ne!(weak["outcome"], "missed_and_wrong");
}

#[test]
fn threshold_curve_starts_at_the_energy_bound() {
    let v = parse(threshold_curve(0.1, 0.01, 0.25, 0.01, 5.0, 20, 1000, 100));
    let g = v["gamma"].as_array().unwrap();
    let t = v["t"].as_array().unwrap();
    assert_eq!(g.len(), t.len());
    assert_eq!(t.last().unwrap(), 1000);
    assert!((g[0].as_f64().unwrap() - 2.0 * 5.0 * 20f64.sqrt()).abs() < 1e-12);
    assert!(g.last().unwrap().as_f64().unwrap() < g[0].as_f64().unwrap());
}

#[test]
fn bad_inputs_are_reported() {
    assert!(run_demo_scenario("medium", 0, 100)
        .unwrap_err()
        .contains("unknown scenario"));
    assert!(run_demo_scenario("none", 0, 0).is_err());
    assert!(run_demo_scenario("none", 0, 1_000_000).is_err());
    assert!(threshold_curve(0.1, 0.01, 0.7, 0.01, 5.0, 20, 10, 10)
        .unwrap_err()
        .contains("tau"));
    assert!(generate_network(10, 1.0, 0.5, 0, 0).is_err());
}
