mod common;

use common::{small_staggered, small_static, static_spec};
use policy_panel::arco::{estimate_arco, ArcoOptions};
use policy_panel::csdid::{aggregate_att, estimate_cells, scheme_weights, CsdidOptions, Scheme};
use policy_panel::did::{estimate_twfe_did, DidOptions};
use policy_panel::panel::{apply_winsor, QuantileRule, WinsorConfig, WinsorMode};
use policy_panel::simulate::generate_panel;
use policy_panel::{MarketKind, PanelDataset};
use proptest::prelude::*;

fn shift_units(data: &PanelDataset, offsets: &[f64]) -> PanelDataset {
    let mut out = data.clone();
    for o in &mut out.observations {
        let h = o
            .unit_id
            .bytes()
            .fold(0usize, |a, b| a.wrapping_mul(31).wrapping_add(b as usize));
        let c = offsets[h % offsets.len()];
        o.roa = o.roa.map(|y| y + c);
    }
    out
}

fn scale_outcome(data: &PanelDataset, c: f64) -> PanelDataset {
    let mut out = data.clone();
    for o in &mut out.observations {
        o.roa = o.roa.map(|y| y * c);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lower_rule_winsorization_is_idempotent(
        values in prop::collection::vec(prop::option::weighted(0.9, -1e3f64..1e3), 1..80),
        lo in 0.0f64..0.3,
        width in 0.2f64..0.7,
    ) {
        prop_assume!(values.iter().any(Option::is_some));
        let cfg = WinsorConfig { lower_q: lo, upper_q: lo + width, mode: WinsorMode::Clamp, rule: QuantileRule::Lower };
        let once = apply_winsor(&values, &cfg).unwrap();
        let twice = apply_winsor(&once, &cfg).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn unit_constants_leave_did_and_csdid_unchanged(
        seed in 0u64..10_000,
        offsets in prop::collection::vec(-50.0f64..50.0, 1..7),
    ) {
        let cfg = small_staggered(seed);
        let spec = static_spec(&cfg, MarketKind::Carbon);
        let (data, _) = generate_panel(&cfg).unwrap();
        let shifted = shift_units(&data, &offsets);
        let opts = DidOptions::without_covariates();
        let a = estimate_twfe_did(&data, &spec, &opts).unwrap().coefficient;
        let b = estimate_twfe_did(&shifted, &spec, &opts).unwrap().coefficient;
        prop_assert!((a - b).abs() < 1e-8, "twfe {a} vs {b}");
        let ca = aggregate_att(&estimate_cells(&data, &spec, &CsdidOptions::default()).unwrap(), Scheme::Simple).unwrap();
        let cb = aggregate_att(&estimate_cells(&shifted, &spec, &CsdidOptions::default()).unwrap(), Scheme::Simple).unwrap();
        prop_assert!((ca.estimate - cb.estimate).abs() < 1e-8);
        prop_assert!((ca.se - cb.se).abs() < 1e-8);
    }

    #[test]
    fn aggregation_weights_sum_to_one(seed in 0u64..10_000, never in any::<bool>()) {
        let cfg = small_staggered(seed);
        let spec = static_spec(&cfg, MarketKind::Carbon);
        let (data, _) = generate_panel(&cfg).unwrap();
        let mut opts = CsdidOptions::default();
        if never {
            opts.control_rule = policy_panel::csdid::ControlRule::NeverTreated;
        }
        let table = estimate_cells(&data, &spec, &opts).unwrap();
        for scheme in Scheme::ALL {
            let w = scheme_weights(&table, scheme).unwrap();
            let total: f64 = w.iter().map(|p| p.1).sum();
            prop_assert!((total - 1.0).abs() < 1e-12, "{scheme:?} sums to {total}");
            prop_assert!(w.iter().all(|p| p.1 >= 0.0));
        }
    }

    #[test]
    fn arco_effect_scales_with_the_outcome(seed in 0u64..10_000, c in prop_oneof![-5.0f64..-0.2, 0.2f64..5.0]) {
        let cfg = small_static(seed);
        let spec = static_spec(&cfg, MarketKind::Pollution);
        let (data, _) = generate_panel(&cfg).unwrap();
        let opts = ArcoOptions { covariates: Vec::new(), ..ArcoOptions::default() };
        let base = estimate_arco(&data, &spec, &opts).unwrap().summary;
        let scaled = estimate_arco(&scale_outcome(&data, c), &spec, &opts).unwrap().summary;
        let tol = 1e-8 * (1.0 + base.delta.abs() * c.abs());
        prop_assert!((scaled.delta - c * base.delta).abs() < tol);
        prop_assert!((scaled.se - c.abs() * base.se).abs() < 1e-8 * (1.0 + base.se * c.abs()));
    }

    #[test]
    fn swapping_treated_and_control_flips_the_sign(seed in 0u64..10_000) {
        let cfg = small_static(seed);
        let spec = static_spec(&cfg, MarketKind::Pollution);
        let (data, _) = generate_panel(&cfg).unwrap();
        let mut swapped = spec.clone();
        std::mem::swap(&mut swapped.treated_regions, &mut swapped.control_regions);
        let opts = DidOptions::without_covariates();
        let a = estimate_twfe_did(&data, &spec, &opts).unwrap();
        let b = estimate_twfe_did(&data, &swapped, &opts).unwrap();
        prop_assert!((a.coefficient + b.coefficient).abs() < 1e-8);
        prop_assert!((a.se - b.se).abs() < 1e-8);
    }

    #[test]
    fn same_seed_same_panel(seed in any::<u64>()) {
        let cfg = small_static(seed);
        let (a, _) = generate_panel(&cfg).unwrap();
        let (b, _) = generate_panel(&cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.to_csv_bytes().unwrap(), b.to_csv_bytes().unwrap());
    }
}
