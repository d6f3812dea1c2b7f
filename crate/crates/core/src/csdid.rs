//! Group-time average treatment effects for staggered adoption.
//!
//! Each cell compares the outcome change of cohort `g` between `g - 1` and
//! `t` with the change among units not yet treated at `t`. Inference runs
//! through per-unit influence functions, so aggregates inherit standard
//! errors clustered by unit.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{Covariate, Outcome, PanelDataset};
use crate::registry::PanelSpec;
use crate::stats::{p_normal, z_critical};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlRule {
    #[default]
    NotYetTreated,
    NeverTreated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub draws: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            draws: 999,
            seed: 20_240_101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsdidOptions {
    pub outcome: Outcome,
    /// Base-period covariates for the outcome-regression adjustment.
    pub covariates: Vec<Covariate>,
    pub control_rule: ControlRule,
    pub confidence: f64,
    pub bootstrap: Option<BootstrapConfig>,
}

impl Default for CsdidOptions {
    fn default() -> Self {
        CsdidOptions {
            outcome: Outcome::Roa,
            covariates: Vec::new(),
            control_rule: ControlRule::NotYetTreated,
            confidence: 0.95,
            bootstrap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTimeATT {
    pub cohort: i32,
    pub period: i32,
    pub event_time: i32,
    pub att: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub n_treated: usize,
    pub n_control: usize,
    /// Sparse `(unit index, contribution)` pairs with `att - ATT ~ sum`.
    #[serde(skip)]
    pub influence: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnavailableCell {
    pub cohort: i32,
    pub period: i32,
    pub reason: String,
}

/// Per-unit outcome history of a design, indexed for cell estimation.
#[derive(Debug, Clone)]
pub struct UnitPanel {
    pub units: Vec<String>,
    /// First-treatment year, `None` for never-treated units.
    pub cohort_of: Vec<Option<i32>>,
    values: Vec<UnitRows>,
    pub years: BTreeSet<i32>,
    n_covariates: usize,
}

type UnitRows = BTreeMap<i32, (f64, Vec<f64>)>;

impl UnitPanel {
    pub fn build(subset: &PanelDataset, spec: &PanelSpec, outcome: Outcome, covariates: &[Covariate]) -> Result<Self> {
        let mut by_unit: BTreeMap<&str, (Option<i32>, UnitRows)> = BTreeMap::new();
        let mut years = BTreeSet::new();
        for o in &subset.observations {
            if !spec.in_window(o.year) {
                continue;
            }
            let cohort = if spec.is_treated(&o.region) {
                spec.treatment_year_of(&o.region)
            } else if spec.is_control(&o.region) {
                None
            } else {
                continue;
            };
            let Some(row) = o.complete_case(outcome, covariates) else {
                continue;
            };
            years.insert(o.year);
            by_unit
                .entry(o.unit_id.as_str())
                .or_insert_with(|| (cohort, BTreeMap::new()))
                .1
                .insert(o.year, row);
        }
        if by_unit.is_empty() {
            return Err(Error::NoData(format!(
                "panel {}: no complete observations",
                spec.panel_id
            )));
        }
        let mut units = Vec::new();
        let mut cohort_of = Vec::new();
        let mut values = Vec::new();
        for (u, (c, v)) in by_unit {
            units.push(u.to_string());
            cohort_of.push(c);
            values.push(v);
        }
        Ok(UnitPanel {
            units,
            cohort_of,
            values,
            years,
            n_covariates: covariates.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Units per cohort.
    pub fn cohort_sizes(&self) -> BTreeMap<i32, usize> {
        let mut m = BTreeMap::new();
        for g in self.cohort_of.iter().flatten() {
            *m.entry(*g).or_insert(0) += 1;
        }
        m
    }

    fn is_control_for(&self, i: usize, g: i32, t: i32, rule: ControlRule) -> bool {
        match (self.cohort_of[i], rule) {
            (None, _) => true,
            (Some(_), ControlRule::NeverTreated) => false,
            (Some(c), ControlRule::NotYetTreated) => c != g && c > t.max(g - 1),
        }
    }

    /// Outcome change from `base` to `t` with base-period covariates.
    fn change(&self, i: usize, base: i32, t: i32) -> Option<(f64, &[f64])> {
        let (y0, x0) = self.values[i].get(&base)?;
        let (y1, _) = self.values[i].get(&t)?;
        Some((y1 - y0, x0.as_slice()))
    }
}

/// ATT(g, t) with base period `g - 1`.
pub fn estimate_att_gt(panel: &UnitPanel, g: i32, t: i32, opts: &CsdidOptions) -> Result<GroupTimeATT> {
    let base = g - 1;
    if t == base {
        return Err(Error::Design(format!("period {t} is the base period of cohort {g}")));
    }
    let mut treated = Vec::new();
    let mut controls = Vec::new();
    for i in 0..panel.len() {
        let Some((dy, x)) = panel.change(i, base, t) else {
            continue;
        };
        if panel.cohort_of[i] == Some(g) {
            treated.push((i, dy, x));
        } else if panel.is_control_for(i, g, t, opts.control_rule) {
            controls.push((i, dy, x));
        }
    }
    if treated.is_empty() {
        return Err(Error::EmptyCell(format!(
            "cohort {g} has no units observed in {base} and {t}"
        )));
    }
    if controls.is_empty() {
        return Err(Error::EmptyCell(format!(
            "no untreated comparison units for cohort {g} in {t}"
        )));
    }
    let n_t = treated.len() as f64;
    let k = 1 + panel.n_covariates;

    // Outcome regression of the change on base covariates among controls.
    let z = |x: &[f64]| -> DVector<f64> {
        let mut v = DVector::zeros(k);
        v[0] = 1.0;
        for (j, xj) in x.iter().enumerate() {
            v[j + 1] = *xj;
        }
        v
    };
    if controls.len() <= k {
        return Err(Error::Insufficient(format!(
            "cohort {g}, period {t}: {} comparison units for {k} adjustment parameters",
            controls.len()
        )));
    }
    let zc = DMatrix::from_fn(
        controls.len(),
        k,
        |r, c| if c == 0 { 1.0 } else { controls[r].2[c - 1] },
    );
    let yc = DVector::from_iterator(controls.len(), controls.iter().map(|c| c.1));
    let ztz = zc.transpose() * &zc;
    let ztz_inv = ztz
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::RankDeficient {
            columns: std::iter::once("intercept".to_string())
                .chain((1..k).map(|j| format!("covariate_{j}")))
                .collect(),
        })?;
    let beta = &ztz_inv * (zc.transpose() * &yc);
    let mut zbar = DVector::zeros(k);
    for (_, _, x) in &treated {
        zbar += z(x);
    }
    zbar /= n_t;

    let gaps: Vec<f64> = treated.iter().map(|(_, dy, x)| dy - z(x).dot(&beta)).collect();
    let att = gaps.iter().sum::<f64>() / n_t;

    let mut influence = Vec::with_capacity(treated.len() + controls.len());
    for ((i, _, _), gap) in treated.iter().zip(&gaps) {
        influence.push((*i, (gap - att) / n_t));
    }
    let w = &ztz_inv * &zbar;
    for (r, (i, dy, _)) in controls.iter().enumerate() {
        let zi = zc.row(r).transpose();
        let e = dy - zi.dot(&beta);
        influence.push((*i, -zi.dot(&w) * e));
    }
    let se = influence.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    let crit = z_critical(opts.confidence);
    Ok(GroupTimeATT {
        cohort: g,
        period: t,
        event_time: t - g,
        att,
        se,
        ci_lower: att - crit * se,
        ci_upper: att + crit * se,
        n_treated: treated.len(),
        n_control: controls.len(),
        influence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTable {
    pub panel_id: String,
    pub n_units: usize,
    pub cohort_sizes: BTreeMap<i32, usize>,
    pub cells: Vec<GroupTimeATT>,
    pub unavailable: Vec<UnavailableCell>,
    pub options: CsdidOptions,
}

impl CellTable {
    pub fn cell(&self, g: i32, t: i32) -> Option<&GroupTimeATT> {
        self.cells.iter().find(|c| c.cohort == g && c.period == t)
    }
}

/// Every estimable ATT(g, t) of a design. Cells that cannot be estimated are
/// listed as unavailable rather than failing the whole table.
pub fn estimate_cells(subset: &PanelDataset, spec: &PanelSpec, opts: &CsdidOptions) -> Result<CellTable> {
    let panel = UnitPanel::build(subset, spec, opts.outcome, &opts.covariates)?;
    let cohort_sizes = panel.cohort_sizes();
    if cohort_sizes.is_empty() {
        return Err(Error::Design(format!("panel {}: no treated units", spec.panel_id)));
    }
    let pairs: Vec<(i32, i32)> = cohort_sizes
        .keys()
        .flat_map(|&g| panel.years.iter().filter(move |&&t| t != g - 1).map(move |&t| (g, t)))
        .filter(|(g, _)| panel.years.contains(&(g - 1)))
        .collect();
    for g in cohort_sizes.keys() {
        if !panel.years.contains(&(g - 1)) {
            return Err(Error::Design(format!(
                "panel {}: cohort {g} has no base period {} in the data",
                spec.panel_id,
                g - 1
            )));
        }
    }
    let results: Vec<(i32, i32, Result<GroupTimeATT>)> = pairs
        .par_iter()
        .map(|&(g, t)| (g, t, estimate_att_gt(&panel, g, t, opts)))
        .collect();
    let mut cells = Vec::new();
    let mut unavailable = Vec::new();
    for (g, t, r) in results {
        match r {
            Ok(c) => cells.push(c),
            Err(e) => {
                log::warn!("panel {}: ATT({g}, {t}) unavailable: {e}", spec.panel_id);
                unavailable.push(UnavailableCell {
                    cohort: g,
                    period: t,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(CellTable {
        panel_id: spec.panel_id.clone(),
        n_units: panel.len(),
        cohort_sizes,
        cells,
        unavailable,
        options: opts.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Simple,
    EventPre,
    EventPost,
    ByGroup,
    ByCalendar,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Simple,
        Scheme::EventPre,
        Scheme::EventPost,
        Scheme::ByGroup,
        Scheme::ByCalendar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Simple => "simple",
            Scheme::EventPre => "event_pre",
            Scheme::EventPost => "event_post",
            Scheme::ByGroup => "by_group",
            Scheme::ByCalendar => "by_calendar",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Simple => "Simple weighted",
            Scheme::EventPre => "Avg before",
            Scheme::EventPost => "Avg after",
            Scheme::ByGroup => "By group",
            Scheme::ByCalendar => "By calendar period",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown aggregation scheme {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggComponent {
    pub cohort: i32,
    pub period: i32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub scheme: Scheme,
    pub estimate: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub p_value: f64,
    pub bootstrap_se: Option<f64>,
    pub components: Vec<AggComponent>,
}

/// Cell weights for a scheme; nonnegative and summing to one.
pub fn scheme_weights(table: &CellTable, scheme: Scheme) -> Result<Vec<(usize, f64)>> {
    let size = |g: i32| table.cohort_sizes.get(&g).copied().unwrap_or(0) as f64;
    let post: Vec<usize> = (0..table.cells.len())
        .filter(|&i| table.cells[i].event_time >= 0)
        .collect();
    // Within each key, cohort-size weights; then equal weight across keys.
    let nested = |idx: Vec<usize>, key: &dyn Fn(&GroupTimeATT) -> i32, outer_by_size: bool| -> Vec<(usize, f64)> {
        let mut groups: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for i in idx {
            groups.entry(key(&table.cells[i])).or_default().push(i);
        }
        let n_keys = groups.len() as f64;
        let mut out = Vec::new();
        if outer_by_size {
            let total: f64 = groups.keys().map(|&g| size(g)).sum();
            for (g, members) in groups {
                let m = members.len() as f64;
                out.extend(members.into_iter().map(|i| (i, size(g) / total / m)));
            }
        } else {
            for (_, members) in groups {
                let total: f64 = members.iter().map(|&i| size(table.cells[i].cohort)).sum();
                out.extend(
                    members
                        .into_iter()
                        .map(|i| (i, size(table.cells[i].cohort) / total / n_keys)),
                );
            }
        }
        out
    };
    let w = match scheme {
        Scheme::Simple => {
            let total: f64 = post.iter().map(|&i| size(table.cells[i].cohort)).sum();
            post.iter().map(|&i| (i, size(table.cells[i].cohort) / total)).collect()
        }
        Scheme::EventPost => nested(post, &|c| c.event_time, false),
        Scheme::EventPre => {
            let pre = (0..table.cells.len())
                .filter(|&i| table.cells[i].event_time < 0)
                .collect();
            nested(pre, &|c| c.event_time, false)
        }
        Scheme::ByGroup => nested(post, &|c| c.cohort, true),
        Scheme::ByCalendar => nested(post, &|c| c.period, false),
    };
    if w.is_empty() {
        return Err(Error::EmptyCell(format!(
            "panel {}: no cells support the {} aggregation",
            table.panel_id,
            scheme.name()
        )));
    }
    Ok(w)
}

fn combined_influence(table: &CellTable, weights: &[(usize, f64)]) -> Vec<f64> {
    let mut phi = vec![0.0; table.n_units];
    for &(c, w) in weights {
        for &(i, v) in &table.cells[c].influence {
            phi[i] += w * v;
        }
    }
    phi
}

/// Rademacher multiplier bootstrap standard error of a linear statistic.
pub fn multiplier_bootstrap_se(influence: &[f64], cfg: &BootstrapConfig) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draws: Vec<f64> = (0..cfg.draws)
        .map(|_| {
            influence
                .iter()
                .map(|v| if rng.random::<bool>() { *v } else { -*v })
                .sum()
        })
        .collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Aggregate cells under a scheme. Weights are cohort sizes held fixed.
pub fn aggregate_att(table: &CellTable, scheme: Scheme) -> Result<AggregateResult> {
    let weights = scheme_weights(table, scheme)?;
    let estimate: f64 = weights.iter().map(|&(c, w)| w * table.cells[c].att).sum();
    let phi = combined_influence(table, &weights);
    let se = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let crit = z_critical(table.options.confidence);
    let bootstrap_se = table
        .options
        .bootstrap
        .as_ref()
        .map(|b| multiplier_bootstrap_se(&phi, b));
    Ok(AggregateResult {
        scheme,
        estimate,
        se,
        ci_lower: estimate - crit * se,
        ci_upper: estimate + crit * se,
        p_value: p_normal(estimate / se),
        bootstrap_se,
        components: weights
            .iter()
            .map(|&(c, w)| AggComponent {
                cohort: table.cells[c].cohort,
                period: table.cells[c].period,
                weight: w,
            })
            .collect(),
    })
}

/// All five aggregates; schemes without support are skipped with a warning.
pub fn aggregate_all(table: &CellTable) -> Vec<AggregateResult> {
    Scheme::ALL
        .into_iter()
        .filter_map(|s| match aggregate_att(table, s) {
            Ok(r) => Some(r),
            Err(e) => {
                log::warn!("{e}");
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsdidReport {
    pub table: CellTable,
    pub aggregates: Vec<AggregateResult>,
}

pub fn estimate_csdid(subset: &PanelDataset, spec: &PanelSpec, opts: &CsdidOptions) -> Result<CsdidReport> {
    let table = estimate_cells(subset, spec, opts)?;
    let aggregates = aggregate_all(&table);
    Ok(CsdidReport { table, aggregates })
}
