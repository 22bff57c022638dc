use eqdesign_demo::{design_curves_json, lambda_sweep_json, weights_json, SWEEP_LAMBDAS};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

#[test]
fn design_curves_have_matching_lengths() {
    let r = parse(&design_curves_json(1, 2, 0.1, 32, 1.0, 0.0).unwrap());
    let n = floats(&r["freq_hz"]).len();
    assert!(n > 100);
    for key in ["mag_db_aid", "mag_db_des", "mag_db_occ"] {
        assert_eq!(floats(&r[key]).len(), n, "{key}");
    }
    let dh = r["delta_h_aud_db"].as_f64().unwrap();
    assert!(dh.is_finite() && dh >= 0.0);
    assert!(floats(&r["freq_hz"])[0] > 0.0);
}

#[test]
fn design_rejects_bad_parameters() {
    assert!(design_curves_json(1, 2, -1.0, 32, 1.0, 0.0).is_err());
    assert!(design_curves_json(1, 0, 0.1, 32, 1.0, 0.0).is_err());
}

#[test]
fn lambda_sweep_covers_the_grid() {
    let r = parse(&lambda_sweep_json(2, 1, 32, 1.0).unwrap());
    assert_eq!(floats(&r["lambda"]), SWEEP_LAMBDAS);
    for key in ["fr", "mfr"] {
        let y = floats(&r[key]);
        assert_eq!(y.len(), SWEEP_LAMBDAS.len());
        assert!(y.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}

#[test]
fn gain_lowers_leakage_ratio() {
    let a = parse(&weights_json(3, 0.0, 1.0).unwrap());
    let b = parse(&weights_json(3, 20.0, 1.0).unwrap());
    for (x, y) in floats(&a["v"]).iter().zip(floats(&b["v"])) {
        assert!((y / x - 0.1).abs() < 1e-12);
    }
    assert!(weights_json(3, 0.0, 0.0).is_err());
}

#[test]
fn outputs_are_deterministic() {
    assert_eq!(
        design_curves_json(4, 1, 0.1, 32, 1.0, 0.0),
        design_curves_json(4, 1, 0.1, 32, 1.0, 0.0)
    );
}
