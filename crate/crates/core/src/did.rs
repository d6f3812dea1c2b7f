//! Two-way fixed-effects difference-in-differences and event studies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe::{
    cluster_count, cluster_vcov, design_from_columns, fit_ols_absorbed, two_way_demean, FeIndex, FitResult,
};
use crate::panel::{Covariate, Observation, Outcome, PanelDataset};
use crate::registry::{MarketKind, PanelSpec, TreatmentRegistry};
use crate::stats::{p_t, t_critical};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DidOptions {
    pub outcome: Outcome,
    pub covariates: Vec<Covariate>,
    pub confidence: f64,
}

impl Default for DidOptions {
    fn default() -> Self {
        DidOptions {
            outcome: Outcome::Roa,
            covariates: Covariate::ALL.to_vec(),
            confidence: 0.95,
        }
    }
}

impl DidOptions {
    pub fn without_covariates() -> Self {
        DidOptions {
            covariates: Vec::new(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRow {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub panel_id: String,
    pub estimator: String,
    /// Treat x Post coefficient, percentage points of the outcome.
    pub coefficient: f64,
    /// Unit-clustered standard error.
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub confidence: f64,
    pub covariates: Vec<CoefRow>,
    pub n_obs: usize,
    pub n_clusters: usize,
    /// Within R-squared on the demeaned outcome.
    pub r_squared: f64,
}

/// A fitted TWFE regression with unit-clustered inference.
pub(crate) struct TwfeFit {
    pub fit: FitResult,
    pub se: Vec<f64>,
    pub n_clusters: usize,
    pub critical: f64,
    pub dof: f64,
}

impl TwfeFit {
    pub fn row(&self, j: usize) -> CoefRow {
        let estimate = self.fit.coefficients[j];
        let se = self.se[j];
        let t_stat = estimate / se;
        CoefRow {
            name: self.fit.names[j].clone(),
            estimate,
            se,
            t_stat,
            p_value: p_t(t_stat, self.dof),
        }
    }
}

/// Absorb unit and year effects, fit by least squares and cluster by unit.
pub(crate) fn fit_twfe(
    rows: &[&Observation],
    y: &[f64],
    regressors: Vec<(String, Vec<f64>)>,
    confidence: f64,
) -> Result<TwfeFit> {
    let units: Vec<&str> = rows.iter().map(|o| o.unit_id.as_str()).collect();
    let years: Vec<i32> = rows.iter().map(|o| o.year).collect();
    let index = FeIndex::new(&units, &years);
    let (names, mut columns): (Vec<String>, Vec<Vec<f64>>) = regressors.into_iter().unzip();
    columns.insert(0, y.to_vec());
    let mut demeaned = two_way_demean(&index, &columns)?;
    let y_dm = demeaned.remove(0);
    let x = design_from_columns(&demeaned);
    let fit = fit_ols_absorbed(&y_dm, &x, &names, index.absorbed_dof())?;
    let vcov = cluster_vcov(&fit, &units)?;
    let n_clusters = cluster_count(&units);
    let dof = (n_clusters - 1) as f64;
    let se = (0..fit.n_params).map(|j| vcov[(j, j)].max(0.0).sqrt()).collect();
    Ok(TwfeFit {
        fit,
        se,
        n_clusters,
        critical: t_critical(confidence, dof),
        dof,
    })
}

/// Complete-case rows of the design inside its window.
pub(crate) fn design_rows<'a>(
    subset: &'a PanelDataset,
    spec: &PanelSpec,
    outcome: Outcome,
    covariates: &[Covariate],
) -> Vec<(&'a Observation, f64, Vec<f64>)> {
    subset
        .observations
        .iter()
        .filter(|o| spec.in_window(o.year) && (spec.is_treated(&o.region) || spec.is_control(&o.region)))
        .filter_map(|o| o.complete_case(outcome, covariates).map(|(y, x)| (o, y, x)))
        .collect()
}

fn covariate_columns(rows: &[(&Observation, f64, Vec<f64>)], covariates: &[Covariate]) -> Vec<(String, Vec<f64>)> {
    covariates
        .iter()
        .enumerate()
        .map(|(j, c)| (c.name().to_string(), rows.iter().map(|r| r.2[j]).collect()))
        .collect()
}

pub const TREAT_POST: &str = "treat_post";

/// Whether a row is in the treated group after its own treatment year.
pub(crate) fn is_post_treated(spec: &PanelSpec, o: &Observation) -> bool {
    spec.treatment_year_of(&o.region).is_some_and(|t| o.year >= t)
}

fn check_cells(spec: &PanelSpec, rows: &[(&Observation, f64, Vec<f64>)]) -> Result<()> {
    let mut cells = [0usize; 4];
    for (o, _, _) in rows {
        let idx = if spec.is_treated(&o.region) {
            usize::from(is_post_treated(spec, o))
        } else {
            2 + usize::from(o.year >= spec.treatment_year)
        };
        cells[idx] += 1;
    }
    let names = ["treated/pre", "treated/post", "control/pre", "control/post"];
    match cells.iter().position(|&c| c == 0) {
        Some(i) => Err(Error::EmptyCell(format!(
            "panel {}: no complete observations in the {} cell",
            spec.panel_id, names[i]
        ))),
        None => Ok(()),
    }
}

/// TWFE DiD: outcome on Treat x Post plus covariates, unit and year effects,
/// unit-clustered standard errors with t(G-1) inference.
pub fn estimate_twfe_did(subset: &PanelDataset, spec: &PanelSpec, opts: &DidOptions) -> Result<EstimateReport> {
    let rows = design_rows(subset, spec, opts.outcome, &opts.covariates);
    check_cells(spec, &rows)?;
    let d: Vec<f64> = rows
        .iter()
        .map(|(o, _, _)| f64::from(u8::from(is_post_treated(spec, o))))
        .collect();
    let mut regressors = vec![(TREAT_POST.to_string(), d)];
    regressors.extend(covariate_columns(&rows, &opts.covariates));
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let obs: Vec<&Observation> = rows.iter().map(|r| r.0).collect();
    let tw = fit_twfe(&obs, &y, regressors, opts.confidence)?;
    let main = tw.row(0);
    Ok(EstimateReport {
        panel_id: spec.panel_id.clone(),
        estimator: "twfe_did".into(),
        coefficient: main.estimate,
        se: main.se,
        ci_lower: main.estimate - tw.critical * main.se,
        ci_upper: main.estimate + tw.critical * main.se,
        t_stat: main.t_stat,
        p_value: main.p_value,
        confidence: opts.confidence,
        covariates: (1..tw.fit.n_params).map(|j| tw.row(j)).collect(),
        n_obs: tw.fit.n_obs,
        n_clusters: tw.n_clusters,
        r_squared: tw.fit.r_squared,
    })
}

/// Pooled regression with one exposure dummy per market, one coefficient each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledReport {
    pub markets: Vec<MarketKind>,
    pub coefficients: Vec<CoefRow>,
    pub covariates: Vec<CoefRow>,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub r_squared: f64,
}

impl PooledReport {
    pub fn coefficient(&self, kind: MarketKind) -> Option<&CoefRow> {
        self.markets
            .iter()
            .position(|k| *k == kind)
            .map(|i| &self.coefficients[i])
    }
}

/// Fit `y = sum_k beta_k D_k + gamma X + unit + year` over the whole panel,
/// where `D_k` is 1 while market `k` is active in the firm's region.
pub fn estimate_pooled_markets(
    data: &PanelDataset,
    registry: &TreatmentRegistry,
    markets: &[MarketKind],
    opts: &DidOptions,
) -> Result<PooledReport> {
    let mut rows = Vec::new();
    let mut dummies: Vec<Vec<f64>> = vec![Vec::new(); markets.len()];
    for o in &data.observations {
        let Some((y, x)) = o.complete_case(opts.outcome, &opts.covariates) else {
            continue;
        };
        let e = registry.exposure_set(&o.region, o.year)?;
        for (col, k) in dummies.iter_mut().zip(markets) {
            col.push(f64::from(u8::from(e.contains(*k))));
        }
        rows.push((o, y, x));
    }
    let mut regressors: Vec<(String, Vec<f64>)> = markets
        .iter()
        .zip(dummies)
        .map(|(k, col)| (format!("treat_post_{}", k.slug()), col))
        .collect();
    regressors.extend(covariate_columns(&rows, &opts.covariates));
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let obs: Vec<&Observation> = rows.iter().map(|r| r.0).collect();
    let tw = fit_twfe(&obs, &y, regressors, opts.confidence)?;
    Ok(PooledReport {
        markets: markets.to_vec(),
        coefficients: (0..markets.len()).map(|j| tw.row(j)).collect(),
        covariates: (markets.len()..tw.fit.n_params).map(|j| tw.row(j)).collect(),
        n_obs: tw.fit.n_obs,
        n_clusters: tw.n_clusters,
        r_squared: tw.fit.r_squared,
    })
}

/// Treatment of relative times beyond the event window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoints {
    /// Accumulate into the endpoint dummies.
    #[default]
    Bin,
    /// Drop treated observations outside the window.
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStudyOptions {
    pub did: DidOptions,
    pub lead: i32,
    pub lag: i32,
    pub endpoints: Endpoints,
}

impl Default for EventStudyOptions {
    fn default() -> Self {
        EventStudyOptions {
            did: DidOptions::default(),
            lead: -4,
            lag: 4,
            endpoints: Endpoints::Bin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCoef {
    pub rel_time: i32,
    /// `None` when the bin had no observations.
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub n_obs: usize,
    /// Endpoint bin that absorbed relative times beyond the window.
    pub binned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStudyResult {
    pub panel_id: String,
    pub base_period: i32,
    pub coefficients: Vec<EventCoef>,
    pub covariates: Vec<CoefRow>,
    pub confidence: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub r_squared: f64,
    pub warnings: Vec<String>,
}

impl EventStudyResult {
    pub fn theta(&self, rel_time: i32) -> Option<f64> {
        self.coefficients
            .iter()
            .find(|c| c.rel_time == rel_time)
            .and_then(|c| c.estimate)
    }
}

pub const BASE_PERIOD: i32 = -1;

/// Event-time dummies interacted with treatment, `j = -1` omitted.
pub fn estimate_event_study(
    subset: &PanelDataset,
    spec: &PanelSpec,
    opts: &EventStudyOptions,
) -> Result<EventStudyResult> {
    if !(opts.lead < BASE_PERIOD && opts.lag >= 0) {
        return Err(Error::InvalidInput(format!(
            "event window [{}, {}] must contain -1 and 0 with at least one lead before -1",
            opts.lead, opts.lag
        )));
    }
    let all_rows = design_rows(subset, spec, opts.did.outcome, &opts.did.covariates);
    check_cells(spec, &all_rows)?;
    let mut rows = Vec::with_capacity(all_rows.len());
    let mut rel: Vec<Option<i32>> = Vec::with_capacity(all_rows.len());
    let (mut lead_binned, mut lag_binned) = (false, false);
    for row in all_rows {
        match spec.treatment_year_of(&row.0.region) {
            None => {
                rows.push(row);
                rel.push(None);
            }
            Some(t) => {
                let j = row.0.year - t;
                let inside = (opts.lead..=opts.lag).contains(&j);
                if !inside && opts.endpoints == Endpoints::Drop {
                    continue;
                }
                lead_binned |= j < opts.lead;
                lag_binned |= j > opts.lag;
                rows.push(row);
                rel.push(Some(j.clamp(opts.lead, opts.lag)));
            }
        }
    }

    let mut counts: BTreeMap<i32, usize> = (opts.lead..=opts.lag).map(|j| (j, 0)).collect();
    for j in rel.iter().flatten() {
        *counts.get_mut(j).unwrap() += 1;
    }
    let mut warnings = Vec::new();
    let mut bins = Vec::new();
    for (&j, &n) in &counts {
        if j == BASE_PERIOD {
            continue;
        }
        if n == 0 {
            let msg = format!(
                "panel {}: event-time bin {j} is empty; coefficient not reported",
                spec.panel_id
            );
            log::warn!("{msg}");
            warnings.push(msg);
        } else {
            bins.push(j);
        }
    }
    let mut regressors: Vec<(String, Vec<f64>)> = bins
        .iter()
        .map(|&j| {
            let col = rel.iter().map(|r| f64::from(u8::from(*r == Some(j)))).collect();
            (format!("event_{j}"), col)
        })
        .collect();
    let n_bins = regressors.len();
    regressors.extend(covariate_columns(&rows, &opts.did.covariates));
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let obs: Vec<&Observation> = rows.iter().map(|r| r.0).collect();
    let tw = fit_twfe(&obs, &y, regressors, opts.did.confidence)?;

    let coefficients = counts
        .iter()
        .map(|(&j, &n)| {
            let binned = (j == opts.lead && lead_binned) || (j == opts.lag && lag_binned);
            if j == BASE_PERIOD {
                return EventCoef {
                    rel_time: j,
                    estimate: Some(0.0),
                    se: Some(0.0),
                    ci_lower: Some(0.0),
                    ci_upper: Some(0.0),
                    n_obs: n,
                    binned,
                };
            }
            match bins.iter().position(|&b| b == j) {
                Some(k) => {
                    let r = tw.row(k);
                    EventCoef {
                        rel_time: j,
                        estimate: Some(r.estimate),
                        se: Some(r.se),
                        ci_lower: Some(r.estimate - tw.critical * r.se),
                        ci_upper: Some(r.estimate + tw.critical * r.se),
                        n_obs: n,
                        binned,
                    }
                }
                None => EventCoef {
                    rel_time: j,
                    estimate: None,
                    se: None,
                    ci_lower: None,
                    ci_upper: None,
                    n_obs: 0,
                    binned,
                },
            }
        })
        .collect();
    Ok(EventStudyResult {
        panel_id: spec.panel_id.clone(),
        base_period: BASE_PERIOD,
        coefficients,
        covariates: (n_bins..tw.fit.n_params).map(|j| tw.row(j)).collect(),
        confidence: opts.did.confidence,
        n_obs: tw.fit.n_obs,
        n_clusters: tw.n_clusters,
        r_squared: tw.fit.r_squared,
        warnings,
    })
}
