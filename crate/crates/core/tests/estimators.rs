mod common;

use common::{small_staggered, small_static, static_spec};
use policy_panel::arco::{control_averages, estimate_arco, regressor_names, ArcoOptions};
use policy_panel::csdid::{
    aggregate_all, aggregate_att, estimate_cells, estimate_csdid, BootstrapConfig, ControlRule, CsdidOptions, Scheme,
};
use policy_panel::did::{
    estimate_event_study, estimate_pooled_markets, estimate_twfe_did, DidOptions, Endpoints, EventStudyOptions,
};
use policy_panel::simulate::{generate_panel, DgpConfig};
use policy_panel::{Covariate, ErrorCategory, MarketKind, Outcome};

#[test]
fn single_cohort_with_one_pre_year_matches_twfe() {
    let cfg = small_static(7);
    let mut spec = static_spec(&cfg, MarketKind::Pollution);
    spec.window = (2008, 2012);
    let (data, _) = generate_panel(&cfg).unwrap();
    let subset = spec.select(&data);
    let twfe = estimate_twfe_did(&subset, &spec, &DidOptions::without_covariates()).unwrap();
    let table = estimate_cells(&subset, &spec, &CsdidOptions::default()).unwrap();
    let simple = aggregate_att(&table, Scheme::Simple).unwrap();
    assert!(
        (twfe.coefficient - simple.estimate).abs() < 1e-8,
        "{} vs {}",
        twfe.coefficient,
        simple.estimate
    );
}

#[test]
fn post_thetas_average_to_the_did_coefficient_with_one_pre_year() {
    let cfg = small_static(8);
    let mut spec = static_spec(&cfg, MarketKind::Pollution);
    spec.window = (2008, 2012);
    let (data, _) = generate_panel(&cfg).unwrap();
    let opts = EventStudyOptions {
        did: DidOptions::without_covariates(),
        ..EventStudyOptions::default()
    };
    let es = estimate_event_study(&data, &spec, &opts).unwrap();
    for j in [-4, -3, -2] {
        assert_eq!(es.theta(j), None);
    }
    assert!(!es.warnings.is_empty());
    let did = estimate_twfe_did(&data, &spec, &opts.did).unwrap();
    let post: Vec<_> = es
        .coefficients
        .iter()
        .filter(|c| c.rel_time >= 0 && c.estimate.is_some())
        .collect();
    let n: usize = post.iter().map(|c| c.n_obs).sum();
    let weighted: f64 = post.iter().map(|c| c.estimate.unwrap() * c.n_obs as f64).sum::<f64>() / n as f64;
    assert!((weighted - did.coefficient).abs() < 1e-8);
}

#[test]
fn event_study_endpoints_bin_or_drop() {
    let cfg = small_staggered(3);
    let spec = static_spec(&cfg, MarketKind::Carbon);
    let (data, _) = generate_panel(&cfg).unwrap();
    let opts = EventStudyOptions {
        lead: -2,
        lag: 2,
        ..EventStudyOptions::default()
    };
    let binned = estimate_event_study(&data, &spec, &opts).unwrap();
    let dropped = estimate_event_study(
        &data,
        &spec,
        &EventStudyOptions {
            endpoints: Endpoints::Drop,
            ..opts.clone()
        },
    )
    .unwrap();
    assert!(dropped.n_obs < binned.n_obs);
    let first = &binned.coefficients[0];
    assert_eq!(first.rel_time, -2);
    assert!(first.binned);
    assert!(binned.coefficients.iter().all(|c| c.se.is_none_or(|s| s >= 0.0)));
    let base = binned.coefficients.iter().find(|c| c.rel_time == -1).unwrap();
    assert_eq!((base.estimate, base.se), (Some(0.0), Some(0.0)));
}

#[test]
fn event_window_must_contain_a_lead() {
    let cfg = small_static(1);
    let spec = static_spec(&cfg, MarketKind::Pollution);
    let (data, _) = generate_panel(&cfg).unwrap();
    let opts = EventStudyOptions {
        lead: -1,
        ..EventStudyOptions::default()
    };
    let err = estimate_event_study(&data, &spec, &opts).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Ingestion);
}

#[test]
fn missing_treated_post_cell_is_a_design_error() {
    let cfg = small_static(2);
    let mut spec = static_spec(&cfg, MarketKind::Pollution);
    spec.window = (2005, 2008);
    let (data, _) = generate_panel(&cfg).unwrap();
    let err = estimate_twfe_did(&data, &spec, &DidOptions::default()).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Design);
}

#[test]
fn did_reports_covariates_and_clusters() {
    let cfg = small_static(4);
    let spec = static_spec(&cfg, MarketKind::Pollution);
    let (data, _) = generate_panel(&cfg).unwrap();
    let r = estimate_twfe_did(&data, &spec, &DidOptions::default()).unwrap();
    assert_eq!(r.covariates.len(), Covariate::ALL.len());
    assert_eq!(r.n_clusters, 4 * cfg.firms_per_region);
    assert_eq!(r.n_obs, data.len());
    assert!(r.se > 0.0 && r.ci_lower < r.coefficient && r.coefficient < r.ci_upper);
    assert!((0.0..=1.0).contains(&r.p_value));
}

#[test]
fn pooled_model_has_one_coefficient_per_market() {
    let cfg = DgpConfig::preset("contamination").unwrap();
    let (data, truth) = generate_panel(&cfg).unwrap();
    let kinds = [MarketKind::Pollution, MarketKind::Carbon];
    let r = estimate_pooled_markets(&data, &truth.registry, &kinds, &DidOptions::without_covariates()).unwrap();
    assert_eq!(r.coefficients.len(), 2);
    assert!(r.coefficient(MarketKind::Pollution).is_some());
    assert!(r.coefficient(MarketKind::Energy).is_none());
}

#[test]
fn cells_cover_every_cohort_and_period() {
    let cfg = small_staggered(5);
    let spec = static_spec(&cfg, MarketKind::Carbon);
    let (data, _) = generate_panel(&cfg).unwrap();
    let table = estimate_cells(&data, &spec, &CsdidOptions::default()).unwrap();
    assert_eq!(table.cohort_sizes.get(&2007), Some(&10));
    assert_eq!(table.cohort_sizes.get(&2010), Some(&10));
    for g in [2007, 2010] {
        assert!(table.cell(g, g - 1).is_none());
        for t in (2005..=2013).filter(|&t| t != g - 1) {
            let cell = table.cell(g, t).unwrap_or_else(|| panic!("cell ({g}, {t}) missing"));
            assert_eq!(cell.event_time, t - g);
            assert!(cell.se > 0.0);
        }
    }
    // the 2007 cohort compares against the 2010 cohort until 2009
    assert_eq!(table.cell(2007, 2008).unwrap().n_control, 20);
    assert_eq!(table.cell(2007, 2011).unwrap().n_control, 10);

    let never = CsdidOptions {
        control_rule: ControlRule::NeverTreated,
        ..CsdidOptions::default()
    };
    let table = estimate_cells(&data, &spec, &never).unwrap();
    assert_eq!(table.cell(2007, 2008).unwrap().n_control, 10);
}

#[test]
fn aggregates_come_in_a_fixed_order() {
    let cfg = small_staggered(6);
    let spec = static_spec(&cfg, MarketKind::Carbon);
    let (data, _) = generate_panel(&cfg).unwrap();
    let table = estimate_cells(&data, &spec, &CsdidOptions::default()).unwrap();
    let names: Vec<_> = aggregate_all(&table).iter().map(|a| a.scheme).collect();
    assert_eq!(names, Scheme::ALL.to_vec());
}

#[test]
fn multiplier_bootstrap_tracks_the_analytic_se() {
    let cfg = small_staggered(9);
    let spec = static_spec(&cfg, MarketKind::Carbon);
    let (data, _) = generate_panel(&cfg).unwrap();
    let opts = CsdidOptions {
        bootstrap: Some(BootstrapConfig::default()),
        ..CsdidOptions::default()
    };
    let report = estimate_csdid(&data, &spec, &opts).unwrap();
    for a in &report.aggregates {
        let b = a.bootstrap_se.expect("bootstrap requested");
        assert!(
            (b / a.se - 1.0).abs() < 0.15,
            "{:?}: bootstrap {b} vs analytic {}",
            a.scheme,
            a.se
        );
    }
    let again = estimate_csdid(&data, &spec, &opts).unwrap();
    assert_eq!(report.aggregates, again.aggregates);
}

#[test]
fn covariate_adjusted_cells_still_recover_the_effect() {
    let cfg = DgpConfig::preset("staggered_bias").unwrap();
    let spec = static_spec(&cfg, MarketKind::Carbon);
    let (data, truth) = generate_panel(&cfg).unwrap();
    let opts = CsdidOptions {
        covariates: vec![Covariate::Hhi, Covariate::LnEmp],
        ..CsdidOptions::default()
    };
    let simple = aggregate_att(&estimate_cells(&data, &spec, &opts).unwrap(), Scheme::Simple).unwrap();
    let target = truth.design_att(&spec, &data).unwrap();
    assert!((simple.estimate - target).abs() < 4.0 * simple.se);
}

#[test]
fn arco_path_and_summary_are_consistent() {
    let cfg = DgpConfig::preset("effect_recovery").unwrap();
    let spec = static_spec(&cfg, MarketKind::Pollution);
    let (data, _) = generate_panel(&cfg).unwrap();
    let r = estimate_arco(&data, &spec, &ArcoOptions::default()).unwrap();
    assert_eq!(r.fit.coefficients.len(), regressor_names(&ArcoOptions::default()).len());
    assert_eq!(r.path.periods.len(), 10);
    let mean_gap = r.path.periods.iter().map(|p| p.gap).sum::<f64>() / 10.0;
    assert!((mean_gap - r.summary.delta).abs() < 1e-12);
    for p in &r.path.periods {
        assert!((p.observed - p.predicted - p.gap).abs() < 1e-12);
        assert!(p.ci_lower < p.gap && p.gap < p.ci_upper);
    }
    assert_eq!(r.summary.n_post, 5 * 40 * 10);
    assert!(r.summary.se > 0.0);
}

#[test]
fn arco_needs_enough_pre_period_observations() {
    let cfg = small_static(3);
    let mut spec = static_spec(&cfg, MarketKind::Pollution);
    spec.window = (2008, 2012);
    let (data, _) = generate_panel(&cfg).unwrap();
    let err = estimate_arco(&data, &spec, &ArcoOptions::default()).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Numerical);
}

#[test]
fn arco_reports_years_without_controls() {
    let cfg = small_static(3);
    let spec = static_spec(&cfg, MarketKind::Pollution);
    let (data, _) = generate_panel(&cfg).unwrap();
    let holed = data.filter("drop control 2010", |o| !(o.year == 2010 && spec.is_control(&o.region)));
    let err = control_averages(&holed, &spec, &ArcoOptions::default()).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Design);
}

#[test]
fn pre_tax_outcome_is_supported_everywhere() {
    let cfg = DgpConfig::preset("effect_recovery").unwrap();
    let spec = static_spec(&cfg, MarketKind::Pollution);
    let (data, _) = generate_panel(&cfg).unwrap();
    let did = estimate_twfe_did(
        &data,
        &spec,
        &DidOptions {
            outcome: Outcome::RoaBeforeTax,
            ..DidOptions::default()
        },
    )
    .unwrap();
    assert!((did.coefficient - 2.0).abs() < 4.0 * did.se);
}
