use serde_json::Value;

use redlab_wasm::{attack, classify, switch_trace};

#[test]
fn classify_xor() {
    let v: Value = serde_json::from_str(&classify("default: v(2*n) ^ v(2*n+1)", 64).unwrap()).unwrap();
    assert_eq!(v["all_linear"], true);
    assert_eq!(v["max_width"], 2);
    assert!(classify("default: v(", 8).is_err());
    assert!(classify("default: v(n)", 5000).is_err());
}

#[test]
fn switch_example() {
    let v: Value = serde_json::from_str(&switch_trace("zeros,periodic:01", "test", 64).unwrap()).unwrap();
    assert_eq!(v["triggers"], 1);
    assert_eq!(v["trace"].as_array().unwrap().len(), 64);
    assert!(v["output"].as_str().unwrap().ends_with("0101"));
    assert!(switch_trace("zeros", "zip", 4).is_err());
}

#[test]
fn attack_round_trip() {
    let v: Value = serde_json::from_str(&attack("linear", "default: v(2*n) ^ v(2*n+1)", 2, 128, 1).unwrap()).unwrap();
    assert_eq!(v["verification"]["passed"], true);
    let v: Value = serde_json::from_str(&attack("btt", "default: v(0) | v(2*n+1)", 2, 128, 1).unwrap()).unwrap();
    assert_eq!(v["verification"]["passed"], true);
    assert!(attack("positive", "default: !v(n)", 2, 64, 1).unwrap_err().contains("not positive"));
    assert!(attack("mystery", "default: 1", 2, 64, 1).is_err());
}
