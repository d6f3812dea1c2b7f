//! WebAssembly bindings for the browser demo. Every export returns a JSON
//! string; the `*_json` functions behind them also run natively.

use std::collections::BTreeMap;

use policy_panel::arco::{estimate_arco, ArcoOptions};
use policy_panel::registry::{assign_groups, group_counts, period, static_design};
use policy_panel::simulate::{demo_staggered_bias, generate_panel, mc_summary, replicate, DgpConfig};
use policy_panel::{Error, MarketKind, Outcome, Result, TreatmentRegistry};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Upper limit on Monte Carlo draws per call, to keep the page responsive.
pub const MAX_REPS: usize = 200;

fn render(v: Value) -> String {
    v.to_string()
}

/// TWFE and the cohort-weighted group-time ATT on `reps` staggered draws.
pub fn staggered_bias_json(seed: u32, reps: usize) -> Result<String> {
    if reps == 0 || reps > MAX_REPS {
        return Err(Error::InvalidInput(format!(
            "reps must be in 1..={MAX_REPS}, got {reps}"
        )));
    }
    let cfg = DgpConfig::preset("staggered_bias")?.with_seed(u64::from(seed));
    let rows = replicate(&cfg, reps, demo_staggered_bias)?;
    let col = |f: fn(&policy_panel::simulate::StaggeredBiasRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let closer = rows
        .iter()
        .filter(|r| (r.csdid_simple - r.truth).abs() < (r.twfe - r.truth).abs())
        .count();
    Ok(render(json!({
        "reps": reps,
        "twfe": col(|r| r.twfe),
        "csdid": col(|r| r.csdid_simple),
        "truth": col(|r| r.truth),
        "summary": {
            "truth": mc_summary(&col(|r| r.truth)).mean,
            "twfe": mc_summary(&col(|r| r.twfe)),
            "csdid": mc_summary(&col(|r| r.csdid_simple)),
            "csdid_closer": closer,
        },
    })))
}

/// Treated and control mean outcomes by year plus the ArCo counterfactual
/// on one simulated panel with the given effect size.
pub fn arco_path_json(seed: u32, effect: f64) -> Result<String> {
    if !effect.is_finite() {
        return Err(Error::InvalidInput("effect must be a finite number".into()));
    }
    let mut cfg = DgpConfig::preset("effect_recovery")?.with_seed(u64::from(seed));
    cfg.effects[0].level = effect;
    let (data, _) = generate_panel(&cfg)?;
    let spec = static_design(&cfg.registry()?, MarketKind::Pollution, cfg.bounds())?;
    let report = estimate_arco(&data, &spec, &ArcoOptions::default())?;

    let mut means: BTreeMap<i32, [(f64, usize); 2]> = BTreeMap::new();
    for o in &data.observations {
        let Some(y) = o.outcome(Outcome::Roa) else { continue };
        let slot = usize::from(spec.is_control(&o.region));
        let cell = &mut means.entry(o.year).or_default()[slot];
        cell.0 += y;
        cell.1 += 1;
    }
    let avg = |(s, n): (f64, usize)| if n == 0 { None } else { Some(s / n as f64) };
    let years: Vec<Value> = means
        .iter()
        .map(|(year, [t, c])| json!({ "year": year, "treated": avg(*t), "control": avg(*c) }))
        .collect();
    let path: Vec<Value> = report
        .path
        .periods
        .iter()
        .map(|p| {
            json!({
                "year": p.year,
                "observed": p.observed,
                "predicted": p.predicted,
                "band_lo": p.observed - p.ci_upper,
                "band_hi": p.observed - p.ci_lower,
            })
        })
        .collect();
    Ok(render(json!({
        "treatment_year": spec.treatment_year,
        "years": years,
        "path": path,
        "summary": report.summary,
        "r_squared": report.fit.r_squared,
    })))
}

/// Region groups of the built-in registry in one period.
pub fn partition_json(period_index: u8) -> Result<String> {
    let p = period(period_index)?;
    let groups = assign_groups(&TreatmentRegistry::default_registry(), p)?;
    let regions: Vec<Value> = groups
        .iter()
        .map(|(region, g)| json!({ "region": region, "group": g.label, "exposure": g.exposure.to_string() }))
        .collect();
    Ok(render(json!({
        "period": { "index": p.index, "start": p.start, "end": p.end },
        "counts": group_counts(&groups),
        "regions": regions,
    })))
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn staggered_bias(seed: u32, reps: usize) -> std::result::Result<String, JsError> {
    js(staggered_bias_json(seed, reps))
}

#[wasm_bindgen]
pub fn arco_path(seed: u32, effect: f64) -> std::result::Result<String, JsError> {
    js(arco_path_json(seed, effect))
}

#[wasm_bindgen]
pub fn partition(period_index: u8) -> std::result::Result<String, JsError> {
    js(partition_json(period_index))
}
