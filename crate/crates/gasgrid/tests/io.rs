use std::path::{Path, PathBuf};

use gasgrid::control_file::{load_control, save_control};
use gasgrid::results::{write_results, Summary};
use gasgrid::{fixture_dir, load_network, load_scenario, save_network, save_scenario, Error, KeyPolicy};
use gasgrid_core::fixture;
use gasgrid_core::sim::{BoundarySchedule, Simulator};
use gasgrid_core::{BAR, HOUR};
use proptest::prelude::*;
use serde_json::Value;

fn network_path() -> PathBuf {
    fixture_dir().join("network.json")
}

fn scenario_path() -> PathBuf {
    fixture_dir().join("scenario.json")
}

fn write_json(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn fixture_json(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture_dir().join(name)).unwrap()).unwrap()
}

#[test]
fn shipped_files_are_the_reference_case() {
    let net = load_network(&network_path(), KeyPolicy::Strict).unwrap();
    assert_eq!(net, fixture::network());
    assert_eq!(net.gas.pipes.len(), 6);
    assert_eq!(net.gas.compressors.len(), 1);
    assert_eq!(net.power.busses.len(), 9);
    assert_eq!(net.power.lines.len(), 9);
    assert_eq!(net.plants.len(), 1);
    let sc = load_scenario(&scenario_path(), &net, KeyPolicy::Strict).unwrap();
    assert_eq!(sc, fixture::scenario());
}

#[test]
fn delivery_flux_and_ramp_midpoint() {
    let net = load_network(&network_path(), KeyPolicy::Strict).unwrap();
    let sc = load_scenario(&scenario_path(), &net, KeyPolicy::Strict).unwrap();
    let sched = BoundarySchedule::resolve(&net, &sc.boundary).unwrap();
    let s25 = net.node_index("S25").unwrap();
    let q = sched.at(0.0).node[s25];
    assert!((q - 100.0 * 0.785 / 0.2827433).abs() < 1e-3);
    assert!((q - 277.64).abs() < 0.01);
    let n5 = net.bus_index("N5").unwrap();
    let mid = sched.at(1.25 * HOUR).bus[n5];
    assert!((mid.first + 1.35).abs() < 1e-12);
    assert!((mid.second + 0.45).abs() < 1e-12);
}

#[test]
fn cell_count_follows_the_length() {
    let net = load_network(&network_path(), KeyPolicy::Strict).unwrap();
    let p25 = net.gas.pipes.iter().find(|p| p.id == "P25").unwrap();
    assert_eq!(p25.cell_count, 66);
}

#[test]
fn negative_length_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = fixture_json("network.json");
    v["pipes"][0]["length_m"] = Value::from(-5.0);
    let err = load_network(&write_json(dir.path(), "n.json", &v), KeyPolicy::Strict).unwrap_err();
    assert!(err.to_string().contains("length must be positive"), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn syntax_errors_carry_a_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"gas_nodes\": [\n    { \"id\": \"S0\" \"kind\": \"junction\" }\n").unwrap();
    match load_network(&path, KeyPolicy::Strict).unwrap_err() {
        Error::Json { source, .. } => assert_eq!(source.line(), 3),
        e => panic!("{e}"),
    }
}

#[test]
fn missing_slack_voltage_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let net = fixture::network();
    let mut v = fixture_json("scenario.json");
    v["bus_boundary"]["N1"].as_object_mut().unwrap().remove("V");
    let err = load_scenario(&write_json(dir.path(), "s.json", &v), &net, KeyPolicy::Strict).unwrap_err();
    assert!(err.to_string().contains("N1"), "{err}");
}

#[test]
fn bound_at_unknown_node_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = fixture_json("scenario.json");
    v["pressure_bounds"][0]["node"] = Value::from("S99");
    let err = load_scenario(&write_json(dir.path(), "s.json", &v), &fixture::network(), KeyPolicy::Strict).unwrap_err();
    assert!(err.to_string().contains("S99"), "{err}");
}

#[test]
fn ambiguous_gas_boundary_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = fixture_json("scenario.json");
    v["gas_boundary"]["S25"]["outflow_flux"] = Value::from(1.0);
    assert!(load_scenario(&write_json(dir.path(), "s.json", &v), &fixture::network(), KeyPolicy::Strict).is_err());
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let net = fixture::network();
    let sc = fixture::scenario();
    save_network(&dir.path().join("n.json"), &net).unwrap();
    save_scenario(&dir.path().join("s.json"), &sc).unwrap();
    let net2 = load_network(&dir.path().join("n.json"), KeyPolicy::Strict).unwrap();
    assert_eq!(net2, net);
    let sc2 = load_scenario(&dir.path().join("s.json"), &net2, KeyPolicy::Strict).unwrap();
    assert_eq!(sc2, sc);
    // the normalized files are stable
    save_network(&dir.path().join("n2.json"), &net2).unwrap();
    assert_eq!(std::fs::read(dir.path().join("n.json")).unwrap(), std::fs::read(dir.path().join("n2.json")).unwrap());
}

#[test]
fn control_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = Simulator::new(fixture::network(), &fixture::scenario()).unwrap();
    let mut control = sim.constant_control(0.0);
    for (j, u) in control.values_mut().iter_mut().enumerate() {
        *u = (1.0 + 0.125 * j as f64) * BAR;
    }
    let path = dir.path().join("u.csv");
    save_control(&path, sim.system().network(), &control, sim.dt()).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("t_hours,u_bar\n0,1\n0.25,1.125\n"));
    assert_eq!(load_control(&path, &sim).unwrap(), control);
}

#[test]
fn coarse_control_files_are_interpolated() {
    let dir = tempfile::tempdir().unwrap();
    let sim = Simulator::new(fixture::network(), &fixture::scenario()).unwrap();
    let path = dir.path().join("u.csv");
    std::fs::write(&path, "t_hours,u_bar\n0,0\n12,12\n").unwrap();
    let c = load_control(&path, &sim).unwrap();
    assert_eq!(c.len(), 49);
    assert!((c.at(6)[0] - 1.5 * BAR).abs() < 1e-9);
    std::fs::write(&path, "t,u\n0,0\n").unwrap();
    assert!(load_control(&path, &sim).is_err());
}

#[test]
fn result_files() {
    let sim = Simulator::new(fixture::network(), &fixture::scenario()).unwrap();
    let traj = sim.simulate(&sim.constant_control(0.0)).unwrap();
    let bounds = &fixture::scenario().pressure_bounds;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let summary = write_results(a.path(), &sim, &traj, bounds, None).unwrap();
    write_results(b.path(), &sim, &traj, bounds, None).unwrap();
    for name in ["gas_nodes.csv", "busses.csv", "control.csv", "summary.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(name)).unwrap(), "{name}");
        assert!(!x.contains(&b'\r'));
    }
    let gas = std::fs::read_to_string(a.path().join("gas_nodes.csv")).unwrap();
    assert_eq!(gas.lines().count(), 1 + 49 * 7);
    let busses = std::fs::read_to_string(a.path().join("busses.csv")).unwrap();
    assert_eq!(busses.lines().count(), 1 + 49 * 9);
    let s25_t0: f64 =
        gas.lines().find(|l| l.starts_with("0,S25,")).and_then(|l| l.split(',').nth(2)).unwrap().parse().unwrap();
    let stored: Summary = serde_json::from_slice(&std::fs::read(a.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(stored, summary);
    assert_eq!(stored.steady_state_pressure_bar["S25"], s25_t0);
    assert!(stored.bounds[0].min_pressure_bar < 41.0);
    assert_eq!(stored.bounds[0].first_violation_hours, Some(0.0));
}

/// Paths to every JSON object inside `v`.
fn objects(v: &Value, at: Vec<String>, out: &mut Vec<Vec<String>>) {
    match v {
        Value::Object(m) => {
            out.push(at.clone());
            for (k, x) in m {
                let mut p = at.clone();
                p.push(k.clone());
                objects(x, p, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                let mut p = at.clone();
                p.push(i.to_string());
                objects(x, p, out);
            }
        }
        _ => {}
    }
}

fn object_at<'a>(v: &'a mut Value, path: &[String]) -> &'a mut serde_json::Map<String, Value> {
    let mut cur = v;
    for k in path {
        cur = match cur {
            Value::Object(m) => m.get_mut(k).unwrap(),
            Value::Array(a) => &mut a[k.parse::<usize>().unwrap()],
            _ => unreachable!(),
        };
    }
    cur.as_object_mut().unwrap()
}

/// Maps of ids (boundary data keyed by node or bus) accept any key.
fn is_id_map(path: &[String]) -> bool {
    matches!(path, [k] if k == "gas_boundary" || k == "bus_boundary")
}

fn misspell(key: &str, pos: usize) -> String {
    let mut chars: Vec<char> = key.chars().collect();
    let i = pos % chars.len();
    chars[i] = if chars[i] == 'x' { 'y' } else { 'x' };
    chars.into_iter().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn misspelled_keys_are_rejected_in_strict_mode(which in 0usize..1000, pos in 0usize..64, scenario in any::<bool>()) {
        let name = if scenario { "scenario.json" } else { "network.json" };
        let mut v = fixture_json(name);
        let mut paths = Vec::new();
        objects(&v, Vec::new(), &mut paths);
        paths.retain(|p| !is_id_map(p));
        let path = &paths[which % paths.len()];
        let obj = object_at(&mut v, path);
        let Some(key) = obj.keys().nth(pos % obj.len().max(1)).cloned() else {
            return Ok(());
        };
        let bad = misspell(&key, pos);
        let value = obj.get(&key).unwrap().clone();
        obj.insert(bad.clone(), value);
        let dir = tempfile::tempdir().unwrap();
        let file = write_json(dir.path(), name, &v);
        let net = fixture::network();
        let strict = if scenario {
            load_scenario(&file, &net, KeyPolicy::Strict).map(|_| ())
        } else {
            load_network(&file, KeyPolicy::Strict).map(|_| ())
        };
        match strict {
            Err(Error::UnknownKeys { keys, .. }) => prop_assert!(keys.iter().any(|k| k.ends_with(&bad)), "{keys:?}"),
            other => prop_assert!(false, "{bad} in {path:?}: {other:?}"),
        }
        if scenario {
            prop_assert_eq!(load_scenario(&file, &net, KeyPolicy::Lax).unwrap(), fixture::scenario());
        } else {
            prop_assert_eq!(load_network(&file, KeyPolicy::Lax).unwrap(), net);
        }
    }
}
