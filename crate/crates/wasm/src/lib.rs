//! Browser bindings for the `redlab` demo page. Every export takes plain
//! strings and numbers and returns a JSON string, or an error message.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use redlab::adversary::{attack_btt, attack_linear, attack_positive, verify_attack};
use redlab::bitseq::{direct_sum, split_seq_list};
use redlab::reduction::{classify_reduction, Reduction};
use redlab::switcher::{builtin_estimator, run_switcher, Alpha, PiMap};

const MAX_HORIZON: u32 = 1024;
const MAX_STAGES: u32 = 8192;

fn capped(value: u32, cap: u32, what: &str) -> Result<u64, String> {
    if value > cap {
        return Err(format!("{what} {value} is above the demo limit {cap}"));
    }
    Ok(u64::from(value))
}

fn parse(spec: &str) -> Result<Reduction, String> {
    Reduction::parse(spec).map_err(|e| e.to_string())
}

/// Classification report of a reduction family as JSON.
#[wasm_bindgen]
pub fn classify(spec: &str, horizon: u32) -> Result<String, String> {
    let r = parse(spec)?;
    let rep = classify_reduction(&r, capped(horizon, MAX_HORIZON, "horizon")?).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&rep).expect("report"))
}

/// Switcher run over comma-separated column literals.
#[wasm_bindgen]
pub fn switch_trace(columns: &str, estimator: &str, stages: u32) -> Result<String, String> {
    let cols = split_seq_list(columns).map_err(|e| e.to_string())?;
    let alpha = Alpha::Finite(cols.len() as u64);
    let est = builtin_estimator(estimator).map_err(|e| e.to_string())?;
    let stages = capped(stages, MAX_STAGES, "stages")?;
    let run = run_switcher(&direct_sum(cols), alpha, est.as_ref(), stages, PiMap::ModAlpha).map_err(|e| e.to_string())?;
    let output: String = run.output_bits.iter().map(|b| if *b { '1' } else { '0' }).collect();
    Ok(json!({
        "output": output,
        "triggers": run.triggers().count(),
        "trace": run.trace,
    })
    .to_string())
}

/// Attack of the given class (`positive`, `linear` or `btt`), with its
/// verification report.
#[wasm_bindgen]
pub fn attack(class: &str, spec: &str, columns: u32, horizon: u32, seed: u32) -> Result<String, String> {
    let r = parse(spec)?;
    let horizon = capped(horizon, MAX_HORIZON, "horizon")?;
    let (columns, seed) = (u64::from(columns), u64::from(seed));
    let res = match class {
        "positive" => attack_positive(&r, columns, horizon, seed),
        "linear" => attack_linear(&r, columns, horizon, seed),
        "btt" => {
            let c = match r.declared_bound() {
                Some(c) => c,
                None => classify_reduction(&r, horizon).map_err(|e| e.to_string())?.max_width.max(1),
            };
            attack_btt(&r, c, columns, horizon, 64, seed)
        }
        other => return Err(format!("unknown attack class {other:?}")),
    }
    .map_err(|e| e.to_string())?;
    let rep = verify_attack(&r, &res, horizon);
    let mut v: Value = res.to_json();
    v["verification"] = serde_json::to_value(&rep).expect("report");
    Ok(v.to_string())
}
