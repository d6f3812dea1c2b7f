use policy_panel_web::{arco_path_json, partition_json, staggered_bias_json, MAX_REPS};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn partition_counts_cover_the_universe() {
    let v = parse(partition_json(5).unwrap());
    let total: u64 = v["counts"]
        .as_object()
        .unwrap()
        .values()
        .map(|n| n.as_u64().unwrap())
        .sum();
    assert_eq!(total, 31);
    assert_eq!(v["regions"].as_array().unwrap().len(), 31);
    assert_eq!(v["counts"]["A5"], 14);
    assert!(partition_json(6).is_err());
}

#[test]
fn staggered_bias_returns_one_value_per_draw() {
    let v = parse(staggered_bias_json(3000, 5).unwrap());
    for key in ["twfe", "csdid", "truth"] {
        assert_eq!(v[key].as_array().unwrap().len(), 5);
    }
    assert!(v["summary"]["csdid_closer"].as_u64().unwrap() <= 5);
    assert!(staggered_bias_json(1, 0).is_err());
    assert!(staggered_bias_json(1, MAX_REPS + 1).is_err());
}

#[test]
fn arco_band_brackets_the_counterfactual() {
    let v = parse(arco_path_json(2000, 2.0).unwrap());
    assert_eq!(v["years"].as_array().unwrap().len(), 20);
    for p in v["path"].as_array().unwrap() {
        let f = |k: &str| p[k].as_f64().unwrap();
        assert!(f("band_lo") < f("predicted") && f("predicted") < f("band_hi"));
    }
    assert!(v["summary"]["delta"].as_f64().unwrap() > 1.0);
    assert!(arco_path_json(1, f64::NAN).is_err());
}
