use std::collections::BTreeMap;
use std::path::Path;

use policy_panel::panel::{filter_industries, summarize};
use policy_panel::pipeline::{self, data_bounds, resolve_design, DesignRef, Estimator};
use policy_panel::registry::{
    assign_groups, build_design, default_designs, group_counts, period, verify_clean_controls, WindowBounds, PERIODS,
};
use policy_panel::report::{self, fmt_sig, Bundle, Manifest, ReportFile, Table};
use policy_panel::simulate::{self, mc_summary, DgpConfig};
use policy_panel::{Error, PanelDataset, Result, TreatmentRegistry};
use serde::Serialize;

use crate::config::RunConfig;

fn registry(cfg: &RunConfig) -> Result<TreatmentRegistry> {
    match &cfg.registry {
        Some(p) => TreatmentRegistry::load(p),
        None => Ok(TreatmentRegistry::default_registry()),
    }
}

/// Read, prepare and filter the panel named in the config.
fn load_panel(cfg: &RunConfig) -> Result<PanelDataset> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("no panel given; pass --data or set `data` in the config".into()))?;
    let raw = PanelDataset::read_csv(path)?;
    let mut panel = raw.prepare(&cfg.prepare_config())?;
    if let Some(codes) = cfg.industry_set() {
        panel = filter_industries(&panel, &codes);
    }
    if panel.is_empty() {
        return Err(Error::NoData(format!(
            "{}: no observations left after preparation",
            path.display()
        )));
    }
    Ok(panel)
}

fn design(cfg: &RunConfig) -> Result<DesignRef> {
    cfg.panel
        .as_deref()
        .ok_or_else(|| Error::InvalidInput("no design given; pass --panel 1..8 or static-<market>".into()))?
        .parse()
}

fn finish<C: Serialize>(
    cfg: &RunConfig,
    command: &str,
    data_digest: &str,
    files: &[ReportFile],
    config: &C,
) -> Result<()> {
    let dir = cfg.out_dir();
    let manifest = Manifest::new(command, config, data_digest, files);
    report::write_bundle(&dir, files, &manifest)?;
    println!("wrote {} files to {}", files.len() + 1, dir.display());
    Ok(())
}

pub fn describe(cfg: &RunConfig) -> Result<()> {
    let panel = load_panel(cfg)?;
    let (summary, stem) = match cfg.panel.as_deref() {
        Some(_) => {
            let reg = registry(cfg)?;
            let spec = resolve_design(&reg, design(cfg)?, data_bounds(&panel)?)?;
            let subset = spec.select(&panel);
            (
                summarize(&subset, Some(&spec.group_split()))?,
                format!("summary_panel-{}", spec.panel_id),
            )
        }
        None => (summarize(&panel, None)?, "summary".to_string()),
    };
    for r in &summary.rows {
        println!(
            "{:<15} n={:<7} mean={:<10} sd={:<10} min={:<10} max={}",
            r.variable.name(),
            r.n,
            fmt_sig(r.mean),
            fmt_sig(r.sd),
            fmt_sig(r.min),
            fmt_sig(r.max)
        );
    }
    let mut b = Bundle::new(cfg.format());
    b.both(&stem, &report::summary_table(&summary), &summary);
    finish(cfg, "describe", &panel.provenance, &b.files, cfg)
}

pub fn partition(cfg: &RunConfig, only: Option<u8>) -> Result<()> {
    let reg = registry(cfg)?;
    let periods: Vec<_> = match only {
        Some(i) => vec![period(i)?],
        None => PERIODS.to_vec(),
    };
    let mut b = Bundle::new(cfg.format());
    let mut counts = Table::new(&["period", "start", "end", "label", "count"]);
    for p in &periods {
        let groups = assign_groups(&reg, *p)?;
        for (label, n) in group_counts(&groups) {
            println!("{}-{} {label}: {n}", p.start, p.end);
            counts.push(vec![
                i32::from(p.index).into(),
                p.start.into(),
                p.end.into(),
                label.into(),
                n.into(),
            ]);
        }
        b.both(
            &format!("partition_{}", p.index),
            &report::partition_table(&groups),
            &groups,
        );
    }
    b.table("group_counts", &counts);
    let specs = default_designs()
        .iter()
        .map(|d| build_design(&reg, d, WindowBounds::default()))
        .collect::<Result<Vec<_>>>()?;
    b.both("designs", &report::design_table(&specs), &specs);
    let violations: Vec<_> = specs.iter().flat_map(|s| verify_clean_controls(s, &reg)).collect();
    finish(cfg, "partition", "", &b.files, cfg)?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Contaminated(violations))
    }
}

pub fn estimate(cfg: &RunConfig, estimator: Estimator) -> Result<()> {
    let reg = registry(cfg)?;
    let d = design(cfg)?;
    let panel = load_panel(cfg)?;
    let spec = resolve_design(&reg, d, data_bounds(&panel)?)?;
    if estimator == Estimator::Csdid && !spec.is_staggered() && matches!(d, DesignRef::Panel(_)) {
        return Err(Error::Design(format!(
            "panel {}: csdid needs staggered adoption or a static design; this panel has a single treatment year",
            spec.panel_id
        )));
    }
    let opts = cfg.analysis_options();
    let (h, b) = pipeline::run_estimator(&panel, &spec, estimator, &opts, cfg.format(), "")?;
    println!(
        "panel {} {}: estimate {} se {} p {} n {}",
        spec.panel_id,
        estimator.name(),
        fmt_sig(h.estimate),
        fmt_sig(h.se),
        fmt_sig(h.p_value),
        h.n_obs
    );
    finish(cfg, estimator.name(), &panel.provenance, &b.files, &(cfg, &opts))
}

pub fn load_dgp(preset: Option<&str>, file: Option<&Path>, cfg: &RunConfig, default: &str) -> Result<DgpConfig> {
    let mut dgp = match (preset, file) {
        (Some(_), Some(_)) => return Err(Error::InvalidInput("pass either --preset or --dgp, not both".into())),
        (_, Some(p)) => DgpConfig::load(p)?,
        (p, None) => DgpConfig::preset(p.unwrap_or(default))?,
    };
    if let Some(seed) = cfg.seed {
        dgp.seed = seed;
    }
    Ok(dgp)
}

pub fn simulate(cfg: &RunConfig, dgp: &DgpConfig) -> Result<()> {
    let (panel, truth) = simulate::generate_panel(dgp)?;
    let files = vec![
        ReportFile {
            path: "panel.csv".into(),
            bytes: panel.to_csv_bytes()?,
        },
        ReportFile::json("truth.json", &truth),
        ReportFile::json("dgp.json", dgp),
    ];
    println!("generated {} firm-years", panel.len());
    finish(cfg, "simulate", &panel.provenance, &files, dgp)
}

pub fn demo_bias(cfg: &RunConfig, dgp: &DgpConfig, contamination: bool, reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(Error::InvalidInput("--reps must be positive".into()));
    }
    let mut b = Bundle::new(cfg.format());
    if contamination {
        let runs = simulate::replicate(dgp, reps, simulate::demo_contamination_bias)?;
        let flat: Vec<_> = runs.iter().flatten().cloned().collect();
        b.table("draws", &report::contamination_table(&flat));
        let mut summary = Table::new(&[
            "design",
            "market",
            "pooled_mean",
            "pooled_mc_se",
            "partitioned_mean",
            "partitioned_mc_se",
            "conditional_truth",
            "marginal_truth",
        ]);
        let mut json = BTreeMap::new();
        for (i, first) in runs[0].iter().enumerate() {
            let col = |f: fn(&simulate::ContaminationRow) -> f64| {
                mc_summary(&runs.iter().map(|r| f(&r[i])).collect::<Vec<_>>())
            };
            let (pooled, part) = (col(|r| r.pooled), col(|r| r.partitioned));
            let (cond, marg) = (col(|r| r.conditional_truth).mean, col(|r| r.marginal_truth).mean);
            println!(
                "{:<24} pooled {} (mc se {})  partitioned {} (mc se {})  conditional truth {}  marginal truth {}",
                first.design,
                fmt_sig(pooled.mean),
                fmt_sig(pooled.mc_se),
                fmt_sig(part.mean),
                fmt_sig(part.mc_se),
                fmt_sig(cond),
                fmt_sig(marg)
            );
            summary.push(vec![
                first.design.as_str().into(),
                first.market.slug().into(),
                pooled.mean.into(),
                pooled.mc_se.into(),
                part.mean.into(),
                part.mc_se.into(),
                cond.into(),
                marg.into(),
            ]);
            json.insert(first.design.clone(), (pooled, part, cond, marg));
        }
        b.both("summary", &summary, &json);
        b.value("draws", &flat);
    } else {
        let rows = simulate::replicate(dgp, reps, simulate::demo_staggered_bias)?;
        b.both("draws", &report::staggered_bias_table(&rows), &rows);
        let col = |f: fn(&simulate::StaggeredBiasRow) -> f64| mc_summary(&rows.iter().map(f).collect::<Vec<_>>());
        let (twfe, cs, truth) = (col(|r| r.twfe), col(|r| r.csdid_simple), col(|r| r.truth));
        let closer = rows
            .iter()
            .filter(|r| (r.csdid_simple - r.truth).abs() < (r.twfe - r.truth).abs())
            .count();
        let share = closer as f64 / rows.len() as f64;
        println!("truth {}", fmt_sig(truth.mean));
        println!("twfe  {} (mc se {})", fmt_sig(twfe.mean), fmt_sig(twfe.mc_se));
        println!("csdid {} (mc se {})", fmt_sig(cs.mean), fmt_sig(cs.mc_se));
        println!("csdid closer to truth in {closer} of {} draws", rows.len());
        let mut summary = Table::new(&["quantity", "mean", "mc_se"]);
        for (name, s) in [("truth", truth), ("twfe", twfe), ("csdid_simple", cs)] {
            summary.push(vec![name.into(), s.mean.into(), s.mc_se.into()]);
        }
        summary.push(vec!["csdid_closer_share".into(), share.into(), report::Cell::Missing]);
        b.both(
            "summary",
            &summary,
            &BTreeMap::from([("twfe", twfe), ("csdid_simple", cs), ("truth", truth)]),
        );
    }
    let digest = simulate::generate_panel(dgp)?.0.provenance;
    finish(cfg, "demo-bias", &digest, &b.files, &(dgp, reps))
}

pub fn replicate_all(cfg: &RunConfig, preset: &str) -> Result<()> {
    let reg = registry(cfg)?;
    let panel = match cfg.data {
        Some(_) => load_panel(cfg)?,
        None => {
            let mut dgp = DgpConfig::preset(preset)?;
            if let Some(seed) = cfg.seed {
                dgp.seed = seed;
            }
            log::info!("no --data given; using simulated preset {preset}");
            simulate::generate_panel(&dgp)?.0
        }
    };
    let opts = cfg.analysis_options();
    let rep = pipeline::replicate_all(&panel, &reg, &opts, cfg.format())?;
    for r in &rep.grid {
        match &r.headline {
            Some(h) => println!(
                "{:<14} {:<6} {} ({})",
                r.panel,
                r.estimator.name(),
                fmt_sig(h.estimate),
                fmt_sig(h.se)
            ),
            None => println!(
                "{:<14} {:<6} {}: {}",
                r.panel,
                r.estimator.name(),
                r.status,
                r.message.as_deref().unwrap_or("")
            ),
        }
    }
    finish(
        cfg,
        "replicate-all",
        &panel.provenance,
        &rep.bundle.files,
        &(cfg, &opts),
    )
}
