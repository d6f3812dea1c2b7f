//! Long-format firm-year panels: ingestion, outcome construction,
//! winsorization, industry filtering and summary statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Outcome measures the estimators can target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Roa,
    RoaBeforeTax,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Roa => "roa",
            Outcome::RoaBeforeTax => "roa_before_tax",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "roa" => Ok(Outcome::Roa),
            "roa_before_tax" | "roa-before-tax" => Ok(Outcome::RoaBeforeTax),
            other => Err(Error::InvalidInput(format!("unknown outcome `{other}`"))),
        }
    }
}

/// Firm-level control variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Covariate {
    #[serde(rename = "HHI")]
    Hhi,
    #[serde(rename = "lnAGE")]
    LnAge,
    #[serde(rename = "lnEMP")]
    LnEmp,
    #[serde(rename = "OCCAR")]
    Occar,
    #[serde(rename = "DER")]
    Der,
}

impl Covariate {
    pub const ALL: [Covariate; 5] = [
        Covariate::Hhi,
        Covariate::LnAge,
        Covariate::LnEmp,
        Covariate::Occar,
        Covariate::Der,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Covariate::Hhi => "HHI",
            Covariate::LnAge => "lnAGE",
            Covariate::LnEmp => "lnEMP",
            Covariate::Occar => "OCCAR",
            Covariate::Der => "DER",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Covariate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Covariate::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown covariate `{s}`")))
    }
}

/// Any numeric column that participates in preparation and summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Variable {
    Outcome(Outcome),
    Covariate(Covariate),
}

impl Variable {
    pub const ALL: [Variable; 7] = [
        Variable::Outcome(Outcome::Roa),
        Variable::Outcome(Outcome::RoaBeforeTax),
        Variable::Covariate(Covariate::Hhi),
        Variable::Covariate(Covariate::LnAge),
        Variable::Covariate(Covariate::LnEmp),
        Variable::Covariate(Covariate::Occar),
        Variable::Covariate(Covariate::Der),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Outcome(o) => o.name(),
            Variable::Covariate(c) => c.name(),
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One firm-year record. Missing values are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub unit_id: String,
    pub region: String,
    /// Single-letter industry classification code.
    pub industry: char,
    pub year: i32,
    pub roa: Option<f64>,
    pub roa_before_tax: Option<f64>,
    pub covariates: [Option<f64>; 5],
    /// Special-treatment (ST / ST*) flag, when the input carries one.
    pub st: Option<bool>,
}

impl Observation {
    pub fn new(unit_id: impl Into<String>, region: impl Into<String>, industry: char, year: i32) -> Self {
        Observation {
            unit_id: unit_id.into(),
            region: region.into(),
            industry,
            year,
            roa: None,
            roa_before_tax: None,
            covariates: [None; 5],
            st: None,
        }
    }

    pub fn outcome(&self, outcome: Outcome) -> Option<f64> {
        match outcome {
            Outcome::Roa => self.roa,
            Outcome::RoaBeforeTax => self.roa_before_tax,
        }
    }

    pub fn covariate(&self, c: Covariate) -> Option<f64> {
        self.covariates[c.index()]
    }

    pub fn set_covariate(&mut self, c: Covariate, value: Option<f64>) {
        self.covariates[c.index()] = value;
    }

    pub fn value(&self, v: Variable) -> Option<f64> {
        match v {
            Variable::Outcome(o) => self.outcome(o),
            Variable::Covariate(c) => self.covariate(c),
        }
    }

    pub fn set_value(&mut self, v: Variable, value: Option<f64>) {
        match v {
            Variable::Outcome(Outcome::Roa) => self.roa = value,
            Variable::Outcome(Outcome::RoaBeforeTax) => self.roa_before_tax = value,
            Variable::Covariate(c) => self.set_covariate(c, value),
        }
    }

    /// Outcome plus the listed covariates, or `None` if any is missing.
    pub fn complete_case(&self, outcome: Outcome, covariates: &[Covariate]) -> Option<(f64, Vec<f64>)> {
        let y = self.outcome(outcome)?;
        let xs = covariates
            .iter()
            .map(|&c| self.covariate(c))
            .collect::<Option<Vec<_>>>()?;
        Some((y, xs))
    }
}

/// Return on assets in percent: net profit over average total assets.
pub fn compute_roa(net_profit: f64, assets_begin: f64, assets_end: f64) -> Option<f64> {
    ratio_over_average_assets(net_profit, assets_begin, assets_end)
}

/// Pre-tax variant: (total profit + financial expenses) over average total assets.
pub fn compute_roa_before_tax(
    total_profit: f64,
    financial_expenses: f64,
    assets_begin: f64,
    assets_end: f64,
) -> Option<f64> {
    ratio_over_average_assets(total_profit + financial_expenses, assets_begin, assets_end)
}

fn ratio_over_average_assets(numerator: f64, begin: f64, end: f64) -> Option<f64> {
    if !(numerator.is_finite() && begin.is_finite() && end.is_finite()) {
        return None;
    }
    let average = (begin + end) / 2.0;
    if average == 0.0 {
        None
    } else {
        Some(100.0 * numerator / average)
    }
}

/// How the empirical quantile is read off the order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileRule {
    /// Linear interpolation between adjacent order statistics at position (n-1)q.
    #[default]
    Linear,
    /// The order statistic at floor((n-1)q). Clamping with this rule is idempotent.
    Lower,
}

/// Empirical quantile of an already sorted, non-empty slice.
pub fn quantile_sorted(sorted: &[f64], q: f64, rule: QuantileRule) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    match rule {
        QuantileRule::Lower => sorted[lo],
        QuantileRule::Linear => sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WinsorMode {
    /// Clamp extreme values to the quantile bounds.
    #[default]
    Clamp,
    /// Mark values outside the bounds as missing.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinsorConfig {
    pub lower_q: f64,
    pub upper_q: f64,
    #[serde(default)]
    pub mode: WinsorMode,
    #[serde(default)]
    pub rule: QuantileRule,
}

impl Default for WinsorConfig {
    fn default() -> Self {
        WinsorConfig {
            lower_q: 0.01,
            upper_q: 0.99,
            mode: WinsorMode::Clamp,
            rule: QuantileRule::Linear,
        }
    }
}

fn quantile_bounds(values: &[Option<f64>], cfg: &WinsorConfig) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&cfg.lower_q) || !(0.0..=1.0).contains(&cfg.upper_q) || cfg.lower_q >= cfg.upper_q {
        return Err(Error::InvalidInput(format!(
            "quantile pair must satisfy 0 <= lower < upper <= 1, got ({}, {})",
            cfg.lower_q, cfg.upper_q
        )));
    }
    let mut sorted: Vec<f64> = values.iter().flatten().copied().collect();
    if sorted.is_empty() {
        return Err(Error::NoData(
            "winsorization needs at least one non-missing value".into(),
        ));
    }
    sorted.sort_by(f64::total_cmp);
    Ok((
        quantile_sorted(&sorted, cfg.lower_q, cfg.rule),
        quantile_sorted(&sorted, cfg.upper_q, cfg.rule),
    ))
}

/// Clamp values to the `[lower_q, upper_q]` empirical quantiles (linear interpolation).
/// Missing entries pass through.
pub fn winsorize_column(values: &[Option<f64>], lower_q: f64, upper_q: f64) -> Result<Vec<Option<f64>>> {
    apply_winsor(
        values,
        &WinsorConfig {
            lower_q,
            upper_q,
            ..WinsorConfig::default()
        },
    )
}

/// Winsorize or truncate one column according to `cfg`.
pub fn apply_winsor(values: &[Option<f64>], cfg: &WinsorConfig) -> Result<Vec<Option<f64>>> {
    let (lo, hi) = quantile_bounds(values, cfg)?;
    Ok(values
        .iter()
        .map(|v| {
            v.and_then(|x| match cfg.mode {
                WinsorMode::Clamp => Some(x.clamp(lo, hi)),
                WinsorMode::Drop => (lo..=hi).contains(&x).then_some(x),
            })
        })
        .collect())
}

/// Sample-preparation settings applied once to the full sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    /// `None` disables winsorization.
    pub winsor: Option<WinsorConfig>,
    pub exclude_st: bool,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            winsor: Some(WinsorConfig::default()),
            exclude_st: true,
        }
    }
}

/// A long-format firm-year panel. Unbalanced panels are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    pub observations: Vec<Observation>,
    /// Hex SHA-256 digest of the source, re-hashed after each transformation.
    pub provenance: String,
    pub prepared: bool,
}

const REQUIRED_COLUMNS: [&str; 4] = ["unit_id", "region", "industry", "year"];

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn chain_digest(previous: &str, step: &str) -> String {
    sha256_hex(format!("{previous}|{step}").as_bytes())
}

impl PanelDataset {
    /// Build a dataset, rejecting duplicate `(unit_id, year)` pairs.
    pub fn new(observations: Vec<Observation>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(observations.len());
        for o in &observations {
            if !seen.insert((o.unit_id.as_str(), o.year)) {
                return Err(Error::InvalidInput(format!(
                    "duplicate observation for unit `{}` in {}",
                    o.unit_id, o.year
                )));
            }
        }
        Ok(PanelDataset {
            observations,
            provenance: provenance.into(),
            prepared: false,
        })
    }

    pub fn empty() -> Self {
        PanelDataset {
            observations: Vec::new(),
            provenance: sha256_hex(b""),
            prepared: true,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_bytes(&bytes)
    }

    pub fn from_csv_reader(mut reader: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes).map_err(|e| Error::io("<reader>", e))?;
        Self::from_csv_bytes(&bytes)
    }

    /// Parse the long-format schema. Recognised numeric columns are `roa`,
    /// `roa_before_tax`, the five covariates, and the raw accounting columns
    /// `net_profit`, `total_profit`, `financial_expenses`, `assets_begin`,
    /// `assets_end` from which ROA is derived when `roa` is absent.
    pub fn from_csv_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
        let mut required = [0usize; 4];
        for (slot, name) in required.iter_mut().zip(REQUIRED_COLUMNS) {
            *slot = find(name).ok_or_else(|| Error::Parse(format!("missing required column `{name}`")))?;
        }
        let roa_col = find("roa");
        let roa_bt_col = find("roa_before_tax");
        let cov_cols: Vec<Option<usize>> = Covariate::ALL.iter().map(|c| find(c.name())).collect();
        let net_profit = find("net_profit");
        let total_profit = find("total_profit");
        let fin_exp = find("financial_expenses");
        let a_begin = find("assets_begin");
        let a_end = find("assets_end");
        let st_col = find("st");
        if st_col.is_none() {
            log::warn!("input has no `st` column; ST/ST* exclusion will be a no-op");
        }

        let mut observations = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let line = i + 2;
            let field = |col: usize| record.get(col).unwrap_or("");
            let num = |col: Option<usize>| -> Result<Option<f64>> {
                match col.map(field) {
                    None | Some("") => Ok(None),
                    Some(s) => s
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::Parse(format!("line {line}: `{s}` is not a number"))),
                }
            };
            let unit_id = field(required[0]).to_string();
            let region = field(required[1]).to_string();
            if unit_id.is_empty() || region.is_empty() {
                return Err(Error::Parse(format!("line {line}: empty unit_id or region")));
            }
            let industry_raw = field(required[2]);
            let industry = match industry_raw.chars().collect::<Vec<_>>().as_slice() {
                [c] if c.is_ascii_alphabetic() => c.to_ascii_uppercase(),
                _ => {
                    return Err(Error::Parse(format!(
                        "line {line}: industry `{industry_raw}` is not a single letter"
                    )))
                }
            };
            let year_raw = field(required[3]);
            let year: i32 = year_raw
                .parse()
                .map_err(|_| Error::Parse(format!("line {line}: year `{year_raw}` is not an integer")))?;

            let mut obs = Observation::new(unit_id, region, industry, year);
            obs.roa = match roa_col {
                Some(_) => num(roa_col)?,
                None => match (num(net_profit)?, num(a_begin)?, num(a_end)?) {
                    (Some(p), Some(b), Some(e)) => compute_roa(p, b, e),
                    _ => None,
                },
            };
            obs.roa_before_tax = match roa_bt_col {
                Some(_) => num(roa_bt_col)?,
                None => match (num(total_profit)?, num(fin_exp)?, num(a_begin)?, num(a_end)?) {
                    (Some(p), Some(f), Some(b), Some(e)) => compute_roa_before_tax(p, f, b, e),
                    _ => None,
                },
            };
            for (c, col) in Covariate::ALL.iter().zip(&cov_cols) {
                obs.set_covariate(*c, num(*col)?);
            }
            if let Some(h) = obs.covariate(Covariate::Hhi) {
                if !(0.0..=1.0).contains(&h) {
                    return Err(Error::Parse(format!("line {line}: HHI {h} outside [0, 1]")));
                }
            }
            obs.st = match st_col.map(field) {
                None | Some("") => None,
                Some(s) => Some(match s.to_ascii_lowercase().as_str() {
                    "1" | "true" | "yes" | "st" | "st*" => true,
                    "0" | "false" | "no" => false,
                    _ => return Err(Error::Parse(format!("line {line}: unrecognised st flag `{s}`"))),
                }),
            };
            observations.push(obs);
        }
        PanelDataset::new(observations, sha256_hex(bytes))
    }

    /// Write the ingestion schema back out with full floating-point precision.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
        header.extend(["roa", "roa_before_tax"]);
        header.extend(Covariate::ALL.iter().map(|c| c.name()));
        header.push("st");
        w.write_record(&header)?;
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for o in &self.observations {
            let mut row = vec![
                o.unit_id.clone(),
                o.region.clone(),
                o.industry.to_string(),
                o.year.to_string(),
                fmt_opt(o.roa),
                fmt_opt(o.roa_before_tax),
            ];
            row.extend(o.covariates.iter().map(|v| fmt_opt(*v)));
            row.push(o.st.map(|b| if b { "1" } else { "0" }.to_string()).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<writer>", e))?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }

    /// Apply ST exclusion and full-sample winsorization of every numeric column.
    pub fn prepare(&self, cfg: &PrepareConfig) -> Result<PanelDataset> {
        let mut observations = self.observations.clone();
        if cfg.exclude_st {
            if observations.iter().any(|o| o.st.is_some()) {
                observations.retain(|o| o.st != Some(true));
            } else if !observations.is_empty() {
                log::warn!("no ST flags present; ST/ST* exclusion skipped");
            }
        }
        if let Some(w) = &cfg.winsor {
            for var in Variable::ALL {
                let column: Vec<Option<f64>> = observations.iter().map(|o| o.value(var)).collect();
                if column.iter().all(Option::is_none) {
                    continue;
                }
                let column = apply_winsor(&column, w)?;
                for (o, v) in observations.iter_mut().zip(column) {
                    o.set_value(var, v);
                }
            }
        }
        let step = format!("prepare:{}", serde_json::to_string(cfg)?);
        Ok(PanelDataset {
            observations,
            provenance: chain_digest(&self.provenance, &step),
            prepared: true,
        })
    }

    /// Keep only the rows matching `keep`, recording `step` in the provenance chain.
    pub fn filter(&self, step: &str, keep: impl Fn(&Observation) -> bool) -> PanelDataset {
        PanelDataset {
            observations: self.observations.iter().filter(|o| keep(o)).cloned().collect(),
            provenance: chain_digest(&self.provenance, step),
            prepared: self.prepared,
        }
    }

    pub fn regions(&self) -> BTreeSet<&str> {
        self.observations.iter().map(|o| o.region.as_str()).collect()
    }

    pub fn years(&self) -> BTreeSet<i32> {
        self.observations.iter().map(|o| o.year).collect()
    }
}

/// Restrict a panel to the given industry codes.
pub fn filter_industries(panel: &PanelDataset, codes: &BTreeSet<char>) -> PanelDataset {
    let codes: BTreeSet<char> = codes.iter().map(|c| c.to_ascii_uppercase()).collect();
    let step = format!("filter_industries:{}", codes.iter().collect::<String>());
    panel.filter(&step, |o| codes.contains(&o.industry))
}

/// Region labelling used to split a summary into treated and control columns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupSplit {
    pub labels: BTreeMap<String, String>,
}

impl GroupSplit {
    pub const TREATED: &'static str = "treated";
    pub const CONTROL: &'static str = "control";

    pub fn new<'a>(
        treated: impl IntoIterator<Item = &'a String>,
        control: impl IntoIterator<Item = &'a String>,
    ) -> Self {
        let mut labels = BTreeMap::new();
        for r in treated {
            labels.insert(r.clone(), Self::TREATED.to_string());
        }
        for r in control {
            labels.insert(r.clone(), Self::CONTROL.to_string());
        }
        GroupSplit { labels }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variable: Variable,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation; reported as 0 when `n < 2`.
    pub sd: f64,
    pub sd_defined: bool,
    pub min: f64,
    pub max: f64,
    pub treated: Option<GroupStats>,
    pub control: Option<GroupStats>,
    /// Treated mean minus control mean.
    pub difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    pub provenance: String,
}

fn mean_sd(values: &[f64]) -> (f64, f64, bool) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0, false);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt(), true)
}

/// Per-variable statistics over non-missing values, optionally split by group.
/// Variables with no non-missing values are omitted.
pub fn summarize(panel: &PanelDataset, split: Option<&GroupSplit>) -> Result<SummaryTable> {
    if !panel.prepared {
        return Err(Error::InvalidInput("summarize expects a prepared panel".into()));
    }
    if let Some(split) = split {
        if let Some((region, label)) = split
            .labels
            .iter()
            .find(|(_, l)| l.as_str() != GroupSplit::TREATED && l.as_str() != GroupSplit::CONTROL)
        {
            return Err(Error::InvalidInput(format!(
                "unknown split label `{label}` for region `{region}` (expected treated/control)"
            )));
        }
    }
    let mut rows = Vec::new();
    for var in Variable::ALL {
        let mut values = Vec::new();
        let mut treated = Vec::new();
        let mut control = Vec::new();
        for o in &panel.observations {
            let Some(v) = o.value(var) else { continue };
            values.push(v);
            if let Some(label) = split.and_then(|s| s.labels.get(&o.region)) {
                if label == GroupSplit::TREATED {
                    treated.push(v);
                } else {
                    control.push(v);
                }
            }
        }
        if values.is_empty() {
            continue;
        }
        let (mean, sd, sd_defined) = mean_sd(&values);
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let group = |g: &[f64]| {
            (!g.is_empty()).then(|| {
                let (mean, sd, _) = mean_sd(g);
                GroupStats { n: g.len(), mean, sd }
            })
        };
        let (treated, control) = if split.is_some() {
            (group(&treated), group(&control))
        } else {
            (None, None)
        };
        let difference = match (&treated, &control) {
            (Some(t), Some(c)) => Some(t.mean - c.mean),
            _ => None,
        };
        rows.push(SummaryRow {
            variable: var,
            n: values.len(),
            mean,
            median: quantile_sorted(&sorted, 0.5, QuantileRule::Linear),
            sd,
            sd_defined,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            treated,
            control,
            difference,
        });
    }
    Ok(SummaryTable {
        rows,
        provenance: panel.provenance.clone(),
    })
}
