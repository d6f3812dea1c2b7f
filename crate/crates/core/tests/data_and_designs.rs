use std::collections::BTreeSet;

use policy_panel::panel::{filter_industries, summarize, PrepareConfig, WinsorConfig};
use policy_panel::pipeline::{replicate_all, replication_jobs, AnalysisOptions, DesignRef};
use policy_panel::registry::{
    assign_groups, build_design, build_panel, default_designs, period, static_design, verify_clean_controls,
    WindowBounds, PERIODS,
};
use policy_panel::report::{fmt_sig, write_bundle, Format, Manifest, MANIFEST_FILE};
use policy_panel::simulate::{generate_panel, DgpConfig};
use policy_panel::{Error, ErrorCategory, Exposure, MarketKind, PanelDataset, TreatmentRegistry};

#[test]
fn csv_round_trip_is_lossless() {
    let (data, _) = generate_panel(&DgpConfig::preset("replication").unwrap()).unwrap();
    let bytes = data.to_csv_bytes().unwrap();
    let back = PanelDataset::from_csv_bytes(&bytes).unwrap();
    assert_eq!(back.observations, data.observations);
}

#[test]
fn roa_is_derived_from_accounting_columns() {
    let csv = "unit_id,region,industry,year,net_profit,assets_begin,assets_end,st\n\
               f1,Beijing,C,2010,5,90,110,0\n\
               f1,Beijing,C,2011,-2,110,90,1\n";
    let data = PanelDataset::from_csv_bytes(csv.as_bytes()).unwrap();
    assert_eq!(data.observations[0].roa, Some(5.0));
    assert_eq!(data.observations[1].roa, Some(-2.0));
    let prepared = data
        .prepare(&PrepareConfig {
            winsor: None,
            exclude_st: true,
        })
        .unwrap();
    assert_eq!(prepared.len(), 1);
    assert_ne!(prepared.provenance, data.provenance);
}

#[test]
fn malformed_input_is_an_ingestion_error() {
    let missing = PanelDataset::from_csv_bytes(b"unit_id,region,year\nf,Beijing,2010\n").unwrap_err();
    assert_eq!(missing.category(), ErrorCategory::Ingestion);
    let bad = PanelDataset::from_csv_bytes(b"unit_id,region,industry,year,roa\nf,Beijing,C,2010,abc\n").unwrap_err();
    assert!(matches!(bad, Error::Parse(_)));
    let io = PanelDataset::read_csv("/nonexistent/panel.csv").unwrap_err();
    assert_eq!(io.category().exit_code(), 2);
}

#[test]
fn winsorized_sample_stays_within_bounds() {
    let (data, _) = generate_panel(&DgpConfig::preset("replication").unwrap()).unwrap();
    let prepared = data
        .prepare(&PrepareConfig {
            winsor: Some(WinsorConfig::default()),
            exclude_st: true,
        })
        .unwrap();
    let raw: Vec<f64> = data.observations.iter().filter_map(|o| o.roa).collect();
    let clamped: Vec<f64> = prepared.observations.iter().filter_map(|o| o.roa).collect();
    let max = |v: &[f64]| v.iter().copied().fold(f64::MIN, f64::max);
    assert_eq!(raw.len(), clamped.len());
    assert!(max(&clamped) < max(&raw));
    let summary = summarize(&prepared, None).unwrap();
    assert!(!summary.rows.is_empty());
}

#[test]
fn industry_filter_keeps_only_listed_codes() {
    let (data, _) = generate_panel(&DgpConfig::preset("placebo").unwrap()).unwrap();
    let kept = filter_industries(&data, &BTreeSet::from(['c', 'K']));
    assert!(!kept.is_empty());
    assert!(kept.observations.iter().all(|o| o.industry == 'C' || o.industry == 'K'));
    assert!(filter_industries(&data, &BTreeSet::from(['Z'])).is_empty());
}

#[test]
fn default_designs_are_clean() {
    let registry = TreatmentRegistry::default_registry();
    let windows = [
        (2000, 2012),
        (2000, 2015),
        (2007, 2013),
        (2007, 2015),
        (2000, 2024),
        (2007, 2020),
        (2013, 2024),
        (2007, 2024),
    ];
    for (design, window) in default_designs().iter().zip(windows) {
        let spec = build_design(&registry, design, WindowBounds::default()).unwrap();
        assert!(spec.clean);
        assert_eq!(spec.window, window, "panel {}", spec.panel_id);
        assert!(
            verify_clean_controls(&spec, &registry).is_empty(),
            "panel {}",
            spec.panel_id
        );
        assert!(spec.treated_regions.is_disjoint(&spec.control_regions));
    }
    let p4 = build_design(&registry, &default_designs()[3], WindowBounds::default()).unwrap();
    assert!(p4.is_staggered());
}

#[test]
fn static_designs_are_flagged_as_contaminated() {
    let registry = TreatmentRegistry::default_registry();
    let spec = static_design(&registry, MarketKind::Carbon, WindowBounds::default()).unwrap();
    assert!(!spec.clean);
    assert!(!verify_clean_controls(&spec, &registry).is_empty());
}

#[test]
fn moving_a_later_adopter_into_the_controls_is_detected() {
    let registry = TreatmentRegistry::default_registry();
    let mut spec = build_design(&registry, &default_designs()[0], WindowBounds::default()).unwrap();
    spec.window.1 = 2016;
    let violations = verify_clean_controls(&spec, &registry);
    assert!(!violations.is_empty());
    let err = Error::Contaminated(violations);
    assert_eq!(err.category().exit_code(), 3);
}

#[test]
fn relabeling_regions_preserves_the_partition() {
    let registry = TreatmentRegistry::default_registry();
    let renamed = registry.relabel(|r| format!("x-{}", r.to_lowercase())).unwrap();
    for p in PERIODS {
        let a = assign_groups(&registry, p).unwrap();
        let b = assign_groups(&renamed, p).unwrap();
        let labels_a: Vec<_> = a
            .values()
            .map(|g| g.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let labels_b: Vec<_> = b
            .values()
            .map(|g| g.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        assert_eq!(labels_a, labels_b);
        for (region, g) in &a {
            assert_eq!(b[&format!("x-{}", region.to_lowercase())].label, g.label);
        }
    }
    assert!(period(6).is_err());
}

#[test]
fn registry_round_trips_through_toml() {
    let registry = TreatmentRegistry::default_registry();
    let back = TreatmentRegistry::from_toml_str(&registry.to_toml_string()).unwrap();
    assert_eq!(back, registry);
    assert_eq!(registry.universe().len(), 31);
    let e = registry.exposure_set("Hubei", 2015).unwrap();
    assert!(e.contains(MarketKind::Carbon));
    assert!(registry.exposure_set("Atlantis", 2015).is_err());
    assert_eq!(Exposure::NONE.group_letter(), Some('A'));
}

#[test]
fn build_panel_selects_only_design_regions() {
    let cfg = DgpConfig::preset("replication").unwrap();
    let (data, truth) = generate_panel(&cfg).unwrap();
    let (spec, subset) = build_panel(&truth.registry, 2, &data).unwrap();
    assert!(subset
        .observations
        .iter()
        .all(|o| spec.in_window(o.year) && (spec.is_treated(&o.region) || spec.is_control(&o.region))));
    assert!(build_panel(&truth.registry, 9, &data).is_err());
}

#[test]
fn design_refs_parse_and_print() {
    for s in ["1", "8", "static-carbon", "static-green"] {
        let d: DesignRef = s.parse().unwrap();
        assert_eq!(d.to_string(), s);
    }
    assert_eq!(
        "static-green_electricity".parse::<DesignRef>().unwrap(),
        DesignRef::Static(MarketKind::GreenElectricity)
    );
    assert!("9".parse::<DesignRef>().is_err());
    assert!("static-tea".parse::<DesignRef>().is_err());
}

#[test]
fn replication_grid_records_every_job_and_writes_a_manifest() {
    let cfg = DgpConfig::preset("replication").unwrap();
    let (data, truth) = generate_panel(&cfg).unwrap();
    let opts = AnalysisOptions::default();
    let rep = replicate_all(&data, &truth.registry, &opts, Format::Both).unwrap();
    let jobs: usize = replication_jobs().iter().map(|j| j.1.len()).sum();
    assert_eq!(rep.grid.len(), jobs);
    assert!(rep.grid.iter().any(|r| r.status == "ok"));
    for row in rep.grid.iter().filter(|r| r.status != "ok") {
        assert!(row.message.is_some());
        assert!(["ingestion", "design", "numerical"].contains(&row.status.as_str()));
    }
    let paths: Vec<&str> = rep.bundle.files.iter().map(|f| f.path.as_str()).collect();
    assert!(paths.contains(&"grid.csv") && paths.contains(&"grid.json") && paths.contains(&"summary.csv"));

    let dir = tempfile::tempdir().unwrap();
    let manifest = Manifest::new("replicate-all", &opts, &data.provenance, &rep.bundle.files);
    write_bundle(dir.path(), &rep.bundle.files, &manifest).unwrap();
    let text = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    let parsed: Manifest = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, manifest);
    assert_eq!(parsed.files.len(), rep.bundle.files.len());
    for f in &rep.bundle.files {
        assert_eq!(std::fs::read(dir.path().join(&f.path)).unwrap(), f.bytes);
    }
}

#[test]
fn csv_numbers_use_six_significant_digits() {
    assert_eq!(fmt_sig(2.0 / 3.0), "0.666667");
    assert_eq!(fmt_sig(-1234.5678), "-1234.57");
    assert_eq!(fmt_sig(f64::NAN), "NaN");
}
