use iogames_wasm::{run_family, run_instance, sweep};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn membership_of_depolarizing_channels() {
    let inside = parse(&run_family(
        "depolarizing",
        r#"{"p":0.2}"#,
        "ppt_entanglement_breaking",
        "membership",
    ));
    assert_eq!(inside["values"]["verdict"], "in");
    let outside = parse(&run_family(
        "depolarizing",
        r#"{"p":0.8}"#,
        "ppt_entanglement_breaking",
        "membership",
    ));
    assert_eq!(outside["values"]["verdict"], "out");
    assert!((outside["values"]["robustness"].as_f64().unwrap() - 0.7).abs() < 1e-6);
}

#[test]
fn verification_of_the_identity() {
    let rep = parse(&run_family("identity", "{}", "classical", "verify"));
    assert_eq!(rep["status"], "ok");
    assert!((rep["values"]["ratio"].as_f64().unwrap() - 2.0).abs() < 1e-5);
}

#[test]
fn sweep_layout_and_crossing() {
    let d = sweep(
        "depolarizing",
        "p",
        "ppt_entanglement_breaking",
        0.0,
        1.0,
        11,
    )
    .unwrap();
    assert_eq!(d.len(), 2 * 11 + 2);
    assert_eq!(d[0], 0.0);
    assert_eq!(d[20], 1.0);
    assert!((d[22] - 1.0 / 3.0).abs() < 1e-3);
    assert!(d[23] <= 1e-6);
}

#[test]
fn errors_come_back_as_json() {
    let bad = parse(&run_instance("{", false));
    assert_eq!(bad["status"], "error");
    assert_eq!(bad["error"]["kind"], "schema");
    let unknown = parse(&run_family(
        "no_such_family",
        "{}",
        "classical",
        "robustness",
    ));
    assert_eq!(unknown["status"], "error");
    let params = parse(&run_family(
        "identity",
        "not json",
        "classical",
        "robustness",
    ));
    assert_eq!(params["error"]["kind"], "schema");
}

#[test]
fn explicit_instances_can_emit_games() {
    let text = std::fs::read_to_string(
        iogames::report::fixtures_dir().join("identity_classical_verify.json"),
    )
    .unwrap();
    let rep = parse(&run_instance(&text, true));
    assert_eq!(rep["game"]["kind"], "input_output");
}
