//! Artificial counterfactual with control-group yearly averages.
//!
//! Treated firm-years before treatment are regressed on their own covariates
//! and the contemporaneous control averages of the outcome and covariates.
//! The fitted predictor is projected over the post period and the gaps
//! between observed and predicted treated means are the effect path.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fe::{fit_ols, FitResult};
use crate::panel::{Covariate, Observation, Outcome, PanelDataset};
use crate::registry::PanelSpec;
use crate::stats::{p_normal, z_critical};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcoOptions {
    pub outcome: Outcome,
    pub covariates: Vec<Covariate>,
    pub confidence: f64,
    /// Pre-period observations required beyond the parameter count.
    pub min_extra_obs: usize,
}

impl Default for ArcoOptions {
    fn default() -> Self {
        ArcoOptions {
            outcome: Outcome::Roa,
            covariates: Covariate::ALL.to_vec(),
            confidence: 0.95,
            min_extra_obs: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlYear {
    pub n: usize,
    pub outcome: f64,
    pub covariates: Vec<f64>,
}

/// Per-year unweighted control means over complete firm-years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlAverages {
    pub years: BTreeMap<i32, ControlYear>,
}

impl ControlAverages {
    pub fn get(&self, year: i32) -> Option<&ControlYear> {
        self.years.get(&year)
    }
}

pub fn control_averages(subset: &PanelDataset, spec: &PanelSpec, opts: &ArcoOptions) -> Result<ControlAverages> {
    let k = opts.covariates.len();
    let mut acc: BTreeMap<i32, (usize, f64, Vec<f64>)> = BTreeMap::new();
    for o in &subset.observations {
        if !spec.in_window(o.year) || !spec.is_control(&o.region) {
            continue;
        }
        let Some((y, x)) = o.complete_case(opts.outcome, &opts.covariates) else {
            continue;
        };
        let e = acc.entry(o.year).or_insert_with(|| (0, 0.0, vec![0.0; k]));
        e.0 += 1;
        e.1 += y;
        for (s, v) in e.2.iter_mut().zip(x) {
            *s += v;
        }
    }
    let needed = subset
        .observations
        .iter()
        .filter(|o| spec.in_window(o.year) && spec.is_treated(&o.region))
        .map(|o| o.year);
    for year in needed {
        if !acc.contains_key(&year) {
            return Err(Error::EmptyCell(format!(
                "panel {}: no complete control observations in {year}",
                spec.panel_id
            )));
        }
    }
    let years = acc
        .into_iter()
        .map(|(year, (n, sy, sx))| {
            let nf = n as f64;
            let cy = ControlYear {
                n,
                outcome: sy / nf,
                covariates: sx.into_iter().map(|s| s / nf).collect(),
            };
            (year, cy)
        })
        .collect();
    Ok(ControlAverages { years })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcoCoef {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArcoFit {
    pub coefficients: Vec<ArcoCoef>,
    pub fit: FitResult,
    pub sigma2: f64,
    pub n_pre: usize,
    pub r_squared: f64,
}

impl ArcoFit {
    pub fn theta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.fit.coefficients)
    }

    pub fn vcov(&self) -> &DMatrix<f64> {
        &self.fit.vcov
    }

    pub fn coef(&self, name: &str) -> Option<f64> {
        self.fit.coef(name)
    }

    pub fn predict(&self, x: &DVector<f64>) -> f64 {
        self.theta().dot(x)
    }

    /// `x' V x`, the variance of the fitted mean at `x`.
    pub fn fitted_variance(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * self.vcov() * x)[(0, 0)]
    }
}

pub const CONTROL_SUFFIX: &str = "_control";

pub fn regressor_names(opts: &ArcoOptions) -> Vec<String> {
    let mut names = vec!["intercept".to_string()];
    names.extend(opts.covariates.iter().map(|c| c.name().to_string()));
    names.push(format!("{}{CONTROL_SUFFIX}", opts.outcome.name()));
    names.extend(opts.covariates.iter().map(|c| format!("{}{CONTROL_SUFFIX}", c.name())));
    names
}

fn design_row(own: &[f64], ctrl: &ControlYear) -> Vec<f64> {
    let mut row = Vec::with_capacity(2 + own.len() + ctrl.covariates.len());
    row.push(1.0);
    row.extend_from_slice(own);
    row.push(ctrl.outcome);
    row.extend_from_slice(&ctrl.covariates);
    row
}

fn treated_rows<'a>(
    subset: &'a PanelDataset,
    spec: &'a PanelSpec,
    opts: &'a ArcoOptions,
    post: bool,
) -> impl Iterator<Item = (&'a Observation, f64, Vec<f64>)> + 'a {
    subset.observations.iter().filter_map(move |o| {
        if !spec.in_window(o.year) {
            return None;
        }
        let t0 = spec.treatment_year_of(&o.region)?;
        if (o.year >= t0) != post {
            return None;
        }
        o.complete_case(opts.outcome, &opts.covariates).map(|(y, x)| (o, y, x))
    })
}

/// Pooled least squares over treated firm-years before their treatment year.
pub fn fit_predictor(
    subset: &PanelDataset,
    spec: &PanelSpec,
    averages: &ControlAverages,
    opts: &ArcoOptions,
) -> Result<ArcoFit> {
    let names = regressor_names(opts);
    let k = names.len();
    let mut y = Vec::new();
    let mut rows = Vec::new();
    for (o, yi, x) in treated_rows(subset, spec, opts, false) {
        let ctrl = averages
            .get(o.year)
            .ok_or_else(|| Error::EmptyCell(format!("panel {}: no control average for {}", spec.panel_id, o.year)))?;
        y.push(yi);
        rows.push(design_row(&x, ctrl));
    }
    let needed = k + opts.min_extra_obs;
    if y.len() < needed {
        return Err(Error::Insufficient(format!(
            "panel {}: {} pre-treatment observations, at least {needed} needed for {k} parameters",
            spec.panel_id,
            y.len()
        )));
    }
    let x = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    let fit = fit_ols(&y, &x, &names)?;
    let se = fit.std_errors();
    Ok(ArcoFit {
        coefficients: names
            .into_iter()
            .zip(fit.coefficients.iter().zip(se))
            .map(|(name, (&estimate, se))| ArcoCoef { name, estimate, se })
            .collect(),
        sigma2: fit.sigma2,
        n_pre: fit.n_obs,
        r_squared: fit.r_squared,
        fit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcoPeriod {
    pub year: i32,
    pub n_treated: usize,
    pub observed: f64,
    pub predicted: f64,
    pub gap: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Mean post-period design vector for the year.
    pub design: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcoPath {
    pub periods: Vec<ArcoPeriod>,
    pub confidence: f64,
    pub warnings: Vec<String>,
}

/// Gaps between observed and predicted yearly treated means after treatment.
pub fn counterfactual_gaps(
    fit: &ArcoFit,
    subset: &PanelDataset,
    spec: &PanelSpec,
    averages: &ControlAverages,
    opts: &ArcoOptions,
) -> Result<ArcoPath> {
    let k = opts.covariates.len();
    let mut by_year: BTreeMap<i32, (usize, f64, Vec<f64>)> = BTreeMap::new();
    for (o, y, x) in treated_rows(subset, spec, opts, true) {
        let e = by_year.entry(o.year).or_insert_with(|| (0, 0.0, vec![0.0; k]));
        e.0 += 1;
        e.1 += y;
        for (s, v) in e.2.iter_mut().zip(x) {
            *s += v;
        }
    }
    let crit = z_critical(opts.confidence);
    let mut periods = Vec::new();
    let mut warnings = Vec::new();
    for (year, (n, sy, sx)) in by_year {
        let Some(ctrl) = averages.get(year) else {
            let msg = format!("panel {}: {year} skipped, no control average", spec.panel_id);
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        };
        let nf = n as f64;
        let own: Vec<f64> = sx.iter().map(|s| s / nf).collect();
        let design = design_row(&own, ctrl);
        let xv = DVector::from_column_slice(&design);
        let observed = sy / nf;
        let predicted = fit.predict(&xv);
        let se = (fit.fitted_variance(&xv) + fit.sigma2).sqrt();
        periods.push(ArcoPeriod {
            year,
            n_treated: n,
            observed,
            predicted,
            gap: observed - predicted,
            se,
            ci_lower: predicted - crit * se,
            ci_upper: predicted + crit * se,
            design,
        });
    }
    if periods.is_empty() {
        return Err(Error::EmptyCell(format!(
            "panel {}: no post-treatment periods",
            spec.panel_id
        )));
    }
    Ok(ArcoPath {
        periods,
        confidence: opts.confidence,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcoSummary {
    pub delta: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub z_stat: f64,
    pub p_value: f64,
    pub n_periods: usize,
    pub n_post: usize,
}

/// Average gap with `SE = sqrt(xbar' V xbar + sigma2 / N_post)`.
pub fn summarize_effect(path: &ArcoPath, fit: &ArcoFit) -> Result<ArcoSummary> {
    let t = path.periods.len();
    if t == 0 {
        return Err(Error::EmptyCell("empty counterfactual path".into()));
    }
    let tf = t as f64;
    let delta = path.periods.iter().map(|p| p.gap).sum::<f64>() / tf;
    let k = path.periods[0].design.len();
    let mut xbar = DVector::zeros(k);
    for p in &path.periods {
        xbar += DVector::from_column_slice(&p.design);
    }
    xbar /= tf;
    let n_post: usize = path.periods.iter().map(|p| p.n_treated).sum();
    let se = (fit.fitted_variance(&xbar) + fit.sigma2 / n_post as f64).sqrt();
    let crit = z_critical(path.confidence);
    let z_stat = delta / se;
    Ok(ArcoSummary {
        delta,
        se,
        ci_lower: delta - crit * se,
        ci_upper: delta + crit * se,
        z_stat,
        p_value: p_normal(z_stat),
        n_periods: t,
        n_post,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArcoReport {
    pub panel_id: String,
    pub averages: ControlAverages,
    pub fit: ArcoFit,
    pub path: ArcoPath,
    pub summary: ArcoSummary,
}

pub fn estimate_arco(subset: &PanelDataset, spec: &PanelSpec, opts: &ArcoOptions) -> Result<ArcoReport> {
    let averages = control_averages(subset, spec, opts)?;
    let fit = fit_predictor(subset, spec, &averages, opts)?;
    let path = counterfactual_gaps(&fit, subset, spec, &averages, opts)?;
    let summary = summarize_effect(&path, &fit)?;
    Ok(ArcoReport {
        panel_id: spec.panel_id.clone(),
        averages,
        fit,
        path,
        summary,
    })
}
