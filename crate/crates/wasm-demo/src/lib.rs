//! WebAssembly bindings used by `www/index.html`.

use iogames::report::{self, InstanceFile, RunOptions};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn instance(
    family: &str,
    params: serde_json::Value,
    free_set: &str,
    task: &str,
) -> Result<InstanceFile, String> {
    let v = json!({
        "version": report::SCHEMA_VERSION,
        "object": {"family": family, "params": params},
        "free_set": {"tag": free_set},
        "task": task,
    });
    InstanceFile::parse(&v.to_string()).map_err(|e| e.to_string())
}

/// Runs an instance given as JSON text and returns the report JSON.
#[wasm_bindgen]
pub fn run_instance(text: &str, emit_game: bool) -> String {
    match InstanceFile::parse(text) {
        Ok(inst) => report::run(
            &inst,
            &RunOptions {
                emit_game,
                ..Default::default()
            },
        )
        .to_json(),
        Err(e) => json!({"status": "error", "error": {"kind": e.kind(), "message": e.to_string()}})
            .to_string(),
    }
}

/// Report for one family instance, e.g. `("depolarizing", "{\"p\":0.5}",
/// "ppt_entanglement_breaking", "membership")`.
#[wasm_bindgen]
pub fn run_family(family: &str, params: &str, free_set: &str, task: &str) -> String {
    let params: serde_json::Value = match serde_json::from_str(params) {
        Ok(p) => p,
        Err(e) => return json!({"status": "error", "error": {"kind": "schema", "message": e.to_string()}}).to_string(),
    };
    match instance(family, params, free_set, task) {
        Ok(inst) => report::run(&inst, &RunOptions::default()).to_json(),
        Err(m) => json!({"status": "error", "error": {"kind": "schema", "message": m}}).to_string(),
    }
}

/// Robustness along a parameter sweep, flattened as `[param, R, ...]`
/// (`NaN` for failed points), followed by the crossing estimate and its
/// bracket width (`NaN, NaN` when there is none).
#[wasm_bindgen]
pub fn sweep(
    family: &str,
    parameter: &str,
    free_set: &str,
    start: f64,
    stop: f64,
    steps: usize,
) -> Result<Vec<f64>, JsError> {
    let v = json!({
        "version": report::SCHEMA_VERSION,
        "object": {"family": family, "params": {parameter: start}},
        "free_set": {"tag": free_set},
        "task": "scan",
        "scan": {"parameter": parameter, "start": start, "stop": stop, "steps": steps},
    });
    let inst = InstanceFile::parse(&v.to_string()).map_err(|e| JsError::new(&e.to_string()))?;
    let res = report::scan(&inst, 1).map_err(|e| JsError::new(&e.to_string()))?;
    let mut out = Vec::with_capacity(2 * res.rows.len() + 2);
    for r in &res.rows {
        out.push(r.param);
        out.push(r.robustness.unwrap_or(f64::NAN));
    }
    match res.crossing {
        Some(c) => out.extend([c.estimate, c.upper - c.lower]),
        None => out.extend([f64::NAN, f64::NAN]),
    }
    Ok(out)
}
