//! Per-design estimation bundles and the full replication grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arco::{estimate_arco, ArcoOptions};
use crate::csdid::{estimate_csdid, CsdidOptions, Scheme};
use crate::did::{estimate_event_study, estimate_twfe_did, DidOptions, EventStudyOptions};
use crate::error::{Error, Result};
use crate::panel::{Outcome, PanelDataset};
use crate::registry::{
    build_design, default_designs, static_design, MarketKind, PanelSpec, TreatmentRegistry, WindowBounds,
};
use crate::report::{self, Bundle, Cell, Format, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Did,
    EventStudy,
    Csdid,
    Arco,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Did => "did",
            Estimator::EventStudy => "eventstudy",
            Estimator::Csdid => "csdid",
            Estimator::Arco => "arco",
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "did" => Ok(Estimator::Did),
            "eventstudy" | "event_study" => Ok(Estimator::EventStudy),
            "csdid" => Ok(Estimator::Csdid),
            "arco" => Ok(Estimator::Arco),
            _ => Err(Error::InvalidInput(format!("unknown estimator {s:?}"))),
        }
    }
}

/// A default clean design by number, or a literature-style static design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignRef {
    Panel(u8),
    Static(MarketKind),
}

impl std::str::FromStr for DesignRef {
    type Err = Error;

    /// `1`..`8`, or `static-<market>`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(kind) = s.strip_prefix("static-").or_else(|| s.strip_prefix("static:")) {
            return Ok(DesignRef::Static(kind.parse()?));
        }
        match s.parse::<u8>() {
            Ok(n) if (1..=8).contains(&n) => Ok(DesignRef::Panel(n)),
            _ => Err(Error::InvalidInput(format!(
                "panel {s:?} is neither 1..8 nor static-<market>"
            ))),
        }
    }
}

impl std::fmt::Display for DesignRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DesignRef::Panel(n) => write!(f, "{n}"),
            DesignRef::Static(k) => write!(f, "static-{}", k.slug()),
        }
    }
}

/// Estimation windows are clipped to the years present in the data.
pub fn data_bounds(data: &PanelDataset) -> Result<WindowBounds> {
    let years = data.years();
    match (years.first(), years.last()) {
        (Some(&a), Some(&b)) => Ok(WindowBounds {
            data_start: a,
            data_end: b,
        }),
        _ => Err(Error::NoData("panel has no observations".into())),
    }
}

pub fn resolve_design(registry: &TreatmentRegistry, design: DesignRef, bounds: WindowBounds) -> Result<PanelSpec> {
    match design {
        DesignRef::Panel(n) => {
            let d = default_designs()
                .into_iter()
                .nth(usize::from(n).wrapping_sub(1))
                .ok_or_else(|| Error::InvalidInput(format!("panel id {n} is not in 1..=8")))?;
            let mut spec = build_design(registry, &d, WindowBounds::default())?;
            spec.window = (spec.window.0.max(bounds.data_start), spec.window.1.min(bounds.data_end));
            if spec.window.0 > spec.window.1 {
                return Err(Error::Design(format!("panel {n}: window lies outside the data years")));
            }
            Ok(spec)
        }
        DesignRef::Static(kind) => static_design(registry, kind, bounds),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub did: DidOptions,
    pub event_study: EventStudyOptions,
    pub csdid: CsdidOptions,
    pub arco: ArcoOptions,
}

impl AnalysisOptions {
    pub fn with_outcome(mut self, outcome: Outcome) -> Self {
        self.did.outcome = outcome;
        self.event_study.did.outcome = outcome;
        self.csdid.outcome = outcome;
        self.arco.outcome = outcome;
        self
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.did.confidence = confidence;
        self.event_study.did.confidence = confidence;
        self.csdid.confidence = confidence;
        self.arco.confidence = confidence;
        self
    }
}

/// Headline numbers of one estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
    pub n_obs: usize,
}

/// Run one estimator on a design; files are placed under `prefix`.
pub fn run_estimator(
    data: &PanelDataset,
    spec: &PanelSpec,
    estimator: Estimator,
    opts: &AnalysisOptions,
    format: Format,
    prefix: &str,
) -> Result<(Headline, Bundle)> {
    let subset = spec.select(data);
    let stem = |name: &str| {
        if prefix.is_empty() {
            name.to_string()
        } else {
            format!("{prefix}/{name}")
        }
    };
    let mut b = Bundle::new(format);
    let headline = match estimator {
        Estimator::Did => {
            let r = estimate_twfe_did(&subset, spec, &opts.did)?;
            b.both(&stem("did"), &report::did_table(std::slice::from_ref(&r)), &r);
            Headline {
                estimate: r.coefficient,
                se: r.se,
                p_value: r.p_value,
                n_obs: r.n_obs,
            }
        }
        Estimator::EventStudy => {
            let r = estimate_event_study(&subset, spec, &opts.event_study)?;
            b.both(&stem("eventstudy"), &report::event_table(&r), &r);
            let post: Vec<&crate::did::EventCoef> = r.coefficients.iter().filter(|c| c.rel_time == 0).collect();
            let c = post
                .first()
                .ok_or_else(|| Error::EmptyCell("no event-time 0 coefficient".into()))?;
            let (est, se) = c
                .estimate
                .zip(c.se)
                .ok_or_else(|| Error::EmptyCell("event-time 0 bin empty".into()))?;
            Headline {
                estimate: est,
                se,
                p_value: crate::stats::p_t(est / se, (r.n_clusters - 1) as f64),
                n_obs: r.n_obs,
            }
        }
        Estimator::Csdid => {
            let r = estimate_csdid(&subset, spec, &opts.csdid)?;
            b.both(&stem("csdid_cells"), &report::csdid_cell_table(&r.table), &r.table);
            b.both(
                &stem("csdid_aggregates"),
                &report::csdid_aggregate_table(&spec.panel_id, &r.aggregates),
                &r.aggregates,
            );
            let simple = r
                .aggregates
                .iter()
                .find(|a| a.scheme == Scheme::Simple)
                .ok_or_else(|| Error::EmptyCell(format!("panel {}: no post-treatment cells", spec.panel_id)))?;
            Headline {
                estimate: simple.estimate,
                se: simple.se,
                p_value: simple.p_value,
                n_obs: r.table.cells.iter().map(|c| c.n_treated).sum(),
            }
        }
        Estimator::Arco => {
            let r = estimate_arco(&subset, spec, &opts.arco)?;
            b.table(&stem("arco_path"), &report::arco_path_table(&r));
            b.table(&stem("arco_fit"), &report::arco_fit_table(&r));
            b.table(&stem("arco_summary"), &report::arco_summary_table(&r));
            b.value(&stem("arco"), &r);
            Headline {
                estimate: r.summary.delta,
                se: r.summary.se,
                p_value: r.summary.p_value,
                n_obs: r.fit.n_pre + r.summary.n_post,
            }
        }
    };
    Ok((headline, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub panel: String,
    pub label: String,
    pub window: Option<(i32, i32)>,
    pub estimator: Estimator,
    /// `ok`, or the failing error class.
    pub status: String,
    pub headline: Option<Headline>,
    pub message: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Replication {
    pub grid: Vec<GridRow>,
    pub bundle: Bundle,
}

/// Designs and estimators of the replication grid.
pub fn replication_jobs() -> Vec<(DesignRef, Vec<Estimator>)> {
    use Estimator::*;
    let mut jobs: Vec<(DesignRef, Vec<Estimator>)> = (1..=8)
        .map(|n| {
            let est = if n == 4 {
                vec![Did, Arco, Csdid]
            } else {
                vec![Did, Arco]
            };
            (DesignRef::Panel(n), est)
        })
        .collect();
    jobs.push((DesignRef::Static(MarketKind::Carbon), vec![Did, Arco, Csdid]));
    jobs.push((DesignRef::Static(MarketKind::Energy), vec![Did, Arco]));
    jobs.push((DesignRef::Static(MarketKind::GreenElectricity), vec![Did, Arco]));
    jobs
}

fn status_of(e: &Error) -> String {
    format!("{:?}", e.category()).to_lowercase()
}

/// Every panel and static design through its estimators. Failures are
/// recorded in the grid instead of aborting. Output is independent of the
/// number of worker threads.
pub fn replicate_all(
    data: &PanelDataset,
    registry: &TreatmentRegistry,
    opts: &AnalysisOptions,
    format: Format,
) -> Result<Replication> {
    let bounds = data_bounds(data)?;
    let designs: Vec<(DesignRef, Result<PanelSpec>, Vec<Estimator>)> = replication_jobs()
        .into_iter()
        .map(|(d, est)| (d, resolve_design(registry, d, bounds), est))
        .collect();
    let tasks: Vec<(usize, Estimator)> = designs
        .iter()
        .enumerate()
        .flat_map(|(i, (_, _, est))| est.iter().map(move |&e| (i, e)))
        .collect();
    let outcomes: Vec<(GridRow, Option<Bundle>)> = tasks
        .par_iter()
        .map(|&(i, est)| {
            let (design, spec, _) = &designs[i];
            let panel = design.to_string();
            let dir = format!("panel-{panel}");
            let spec = match spec {
                Ok(s) => s,
                Err(e) => {
                    return (
                        GridRow {
                            panel,
                            label: String::new(),
                            window: None,
                            estimator: est,
                            status: status_of(e),
                            headline: None,
                            message: Some(e.to_string()),
                        },
                        None,
                    )
                }
            };
            let mut row = GridRow {
                panel,
                label: spec.label.clone(),
                window: Some(spec.window),
                estimator: est,
                status: "ok".into(),
                headline: None,
                message: None,
            };
            match run_estimator(data, spec, est, opts, format, &dir) {
                Ok((h, b)) => {
                    row.headline = Some(h);
                    (row, Some(b))
                }
                Err(e) => {
                    log::warn!("panel {}: {} failed: {e}", row.panel, est.name());
                    row.status = status_of(&e);
                    row.message = Some(e.to_string());
                    (row, None)
                }
            }
        })
        .collect();
    let mut bundle = Bundle::new(format);
    let mut grid = Vec::with_capacity(outcomes.len());
    for (row, b) in outcomes {
        grid.push(row);
        if let Some(b) = b {
            bundle.extend(b);
        }
    }
    let specs: Vec<PanelSpec> = designs
        .iter()
        .filter_map(|(_, s, _)| s.as_ref().ok().cloned())
        .collect();
    bundle.table("designs", &report::design_table(&specs));
    bundle.both("grid", &grid_table(&grid), &grid);
    bundle.table("summary", &summary_table(&grid));
    bundle.files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(Replication { grid, bundle })
}

pub fn grid_table(grid: &[GridRow]) -> Table {
    let mut t = Table::new(&[
        "panel",
        "label",
        "window_start",
        "window_end",
        "estimator",
        "status",
        "estimate",
        "se",
        "p_value",
        "n_obs",
        "message",
    ]);
    for r in grid {
        let h = r.headline.as_ref();
        t.push(vec![
            Cell::from(r.panel.as_str()),
            Cell::from(r.label.as_str()),
            r.window.map_or(Cell::Missing, |w| Cell::from(w.0)),
            r.window.map_or(Cell::Missing, |w| Cell::from(w.1)),
            Cell::from(r.estimator.name()),
            Cell::from(r.status.as_str()),
            Cell::from(h.map(|h| h.estimate)),
            Cell::from(h.map(|h| h.se)),
            Cell::from(h.map(|h| h.p_value)),
            h.map_or(Cell::Missing, |h| Cell::from(h.n_obs)),
            r.message.as_deref().map_or(Cell::Missing, Cell::from),
        ]);
    }
    t
}

/// One row per design with the DiD and ArCo headline side by side.
pub fn summary_table(grid: &[GridRow]) -> Table {
    let mut t = Table::new(&[
        "panel", "label", "did", "did_se", "did_p", "arco", "arco_se", "arco_p", "csdid", "csdid_se", "csdid_p",
    ]);
    let mut panels: Vec<&str> = Vec::new();
    for r in grid {
        if !panels.contains(&r.panel.as_str()) {
            panels.push(&r.panel);
        }
    }
    for p in panels {
        let rows: Vec<&GridRow> = grid.iter().filter(|r| r.panel == p).collect();
        let label = rows
            .iter()
            .find(|r| !r.label.is_empty())
            .map_or("", |r| r.label.as_str());
        let mut row = vec![Cell::from(p), Cell::from(label)];
        for est in [Estimator::Did, Estimator::Arco, Estimator::Csdid] {
            let h = rows
                .iter()
                .find(|r| r.estimator == est)
                .and_then(|r| r.headline.as_ref());
            row.push(Cell::from(h.map(|h| h.estimate)));
            row.push(Cell::from(h.map(|h| h.se)));
            row.push(Cell::from(h.map(|h| h.p_value)));
        }
        t.push(row);
    }
    t
}
