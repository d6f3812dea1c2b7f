//! Report tables, CSV/JSON export and run manifests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arco::ArcoReport;
use crate::csdid::{AggregateResult, CellTable};
use crate::did::{EstimateReport, EventStudyResult, PooledReport};
use crate::error::{Error, Result};
use crate::panel::{sha256_hex, SummaryTable};
use crate::registry::{GroupCode, PanelSpec};
use crate::simulate::{ContaminationRow, StaggeredBiasRow};

/// `%g` with six significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Missing,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_sig(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i32> for Cell {
    fn from(x: i32) -> Self {
        Cell::Int(i64::from(x))
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// A rectangular table with a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$(Cell::from($x)),*] };
}

pub fn did_table(reports: &[EstimateReport]) -> Table {
    let mut t = Table::new(&[
        "panel",
        "estimator",
        "term",
        "estimate",
        "se",
        "t_stat",
        "p_value",
        "ci_lower",
        "ci_upper",
        "n_obs",
        "n_clusters",
        "r_squared",
    ]);
    for r in reports {
        t.push(row![
            r.panel_id.as_str(),
            r.estimator.as_str(),
            crate::did::TREAT_POST,
            r.coefficient,
            r.se,
            r.t_stat,
            r.p_value,
            r.ci_lower,
            r.ci_upper,
            r.n_obs,
            r.n_clusters,
            r.r_squared,
        ]);
        for c in &r.covariates {
            t.push(row![
                r.panel_id.as_str(),
                r.estimator.as_str(),
                c.name.as_str(),
                c.estimate,
                c.se,
                c.t_stat,
                c.p_value,
                Cell::Missing,
                Cell::Missing,
                r.n_obs,
                r.n_clusters,
                r.r_squared,
            ]);
        }
    }
    t
}

pub fn event_table(r: &EventStudyResult) -> Table {
    let mut t = Table::new(&[
        "panel", "rel_time", "estimate", "se", "ci_lower", "ci_upper", "n_obs", "binned",
    ]);
    for c in &r.coefficients {
        t.push(row![
            r.panel_id.as_str(),
            c.rel_time,
            c.estimate,
            c.se,
            c.ci_lower,
            c.ci_upper,
            c.n_obs,
            c.binned
        ]);
    }
    t
}

pub fn pooled_table(r: &PooledReport) -> Table {
    let mut t = Table::new(&["term", "estimate", "se", "t_stat", "p_value", "n_obs", "n_clusters"]);
    for c in r.coefficients.iter().chain(&r.covariates) {
        t.push(row![
            c.name.as_str(),
            c.estimate,
            c.se,
            c.t_stat,
            c.p_value,
            r.n_obs,
            r.n_clusters
        ]);
    }
    t
}

pub fn csdid_cell_table(table: &CellTable) -> Table {
    let mut t = Table::new(&[
        "panel",
        "cohort",
        "period",
        "event_time",
        "att",
        "se",
        "ci_lower",
        "ci_upper",
        "n_treated",
        "n_control",
        "status",
    ]);
    let mut rows: Vec<(i32, i32, Vec<Cell>)> = table
        .cells
        .iter()
        .map(|c| {
            (
                c.cohort,
                c.period,
                row![
                    table.panel_id.as_str(),
                    c.cohort,
                    c.period,
                    c.event_time,
                    c.att,
                    c.se,
                    c.ci_lower,
                    c.ci_upper,
                    c.n_treated,
                    c.n_control,
                    "ok",
                ],
            )
        })
        .collect();
    rows.extend(table.unavailable.iter().map(|u| {
        (
            u.cohort,
            u.period,
            row![
                table.panel_id.as_str(),
                u.cohort,
                u.period,
                u.period - u.cohort,
                Cell::Missing,
                Cell::Missing,
                Cell::Missing,
                Cell::Missing,
                Cell::Missing,
                Cell::Missing,
                format!("unavailable: {}", u.reason),
            ],
        )
    }));
    rows.sort_by_key(|r| (r.0, r.1));
    for (_, _, r) in rows {
        t.push(r);
    }
    t
}

pub fn csdid_aggregate_table(panel_id: &str, aggregates: &[AggregateResult]) -> Table {
    let mut t = Table::new(&[
        "panel",
        "scheme",
        "label",
        "estimate",
        "se",
        "ci_lower",
        "ci_upper",
        "p_value",
        "bootstrap_se",
        "n_cells",
    ]);
    for a in aggregates {
        t.push(row![
            panel_id,
            a.scheme.name(),
            a.scheme.label(),
            a.estimate,
            a.se,
            a.ci_lower,
            a.ci_upper,
            a.p_value,
            a.bootstrap_se,
            a.components.len(),
        ]);
    }
    t
}

pub fn arco_path_table(r: &ArcoReport) -> Table {
    let mut t = Table::new(&["year", "observed", "predicted", "gap", "lo", "hi", "se", "n_treated"]);
    for p in &r.path.periods {
        t.push(row![
            p.year,
            p.observed,
            p.predicted,
            p.gap,
            p.ci_lower,
            p.ci_upper,
            p.se,
            p.n_treated
        ]);
    }
    t
}

pub fn arco_fit_table(r: &ArcoReport) -> Table {
    let mut t = Table::new(&["term", "estimate", "se"]);
    for c in &r.fit.coefficients {
        t.push(row![c.name.as_str(), c.estimate, c.se]);
    }
    t.push(row!["sigma2", r.fit.sigma2, Cell::Missing]);
    t.push(row!["r_squared", r.fit.r_squared, Cell::Missing]);
    t.push(row!["n_pre", r.fit.n_pre, Cell::Missing]);
    t
}

pub fn arco_summary_table(r: &ArcoReport) -> Table {
    let s = &r.summary;
    let mut t = Table::new(&[
        "panel",
        "delta",
        "se",
        "ci_lower",
        "ci_upper",
        "z_stat",
        "p_value",
        "n_periods",
        "n_post",
    ]);
    t.push(row![
        r.panel_id.as_str(),
        s.delta,
        s.se,
        s.ci_lower,
        s.ci_upper,
        s.z_stat,
        s.p_value,
        s.n_periods,
        s.n_post
    ]);
    t
}

pub fn summary_table(s: &SummaryTable) -> Table {
    let mut t = Table::new(&[
        "variable",
        "n",
        "mean",
        "median",
        "sd",
        "min",
        "max",
        "treated_n",
        "treated_mean",
        "treated_sd",
        "control_n",
        "control_mean",
        "control_sd",
        "difference",
    ]);
    for r in &s.rows {
        let g = |x: &Option<crate::panel::GroupStats>| -> [Cell; 3] {
            match x {
                Some(g) => [Cell::from(g.n), Cell::from(g.mean), Cell::from(g.sd)],
                None => [Cell::Missing, Cell::Missing, Cell::Missing],
            }
        };
        let mut row = row![
            r.variable.name(),
            r.n,
            r.mean,
            r.median,
            if r.sd_defined { Some(r.sd) } else { None },
            r.min,
            r.max
        ];
        row.extend(g(&r.treated));
        row.extend(g(&r.control));
        row.push(r.difference.into());
        t.push(row);
    }
    t
}

pub fn partition_table(groups: &BTreeMap<String, GroupCode>) -> Table {
    let mut t = Table::new(&["region", "period", "label", "exposure", "region_count"]);
    for (region, g) in groups {
        t.push(row![
            region.as_str(),
            i32::from(g.period),
            g.label.as_str(),
            g.exposure.to_string(),
            g.region_count
        ]);
    }
    t
}

pub fn group_count_table(counts: &BTreeMap<String, usize>) -> Table {
    let mut t = Table::new(&["label", "count"]);
    for (label, n) in counts {
        t.push(row![label.as_str(), *n]);
    }
    t
}

pub fn design_table(specs: &[PanelSpec]) -> Table {
    let mut t = Table::new(&[
        "panel",
        "label",
        "window_start",
        "window_end",
        "treatment_year",
        "staggered",
        "clean",
        "treated_regions",
        "control_regions",
    ]);
    for s in specs {
        let join = |set: &std::collections::BTreeSet<String>| set.iter().cloned().collect::<Vec<_>>().join(";");
        t.push(row![
            s.panel_id.as_str(),
            s.label.as_str(),
            s.window.0,
            s.window.1,
            s.treatment_year,
            s.is_staggered(),
            s.clean,
            join(&s.treated_regions),
            join(&s.control_regions),
        ]);
    }
    t
}

pub fn staggered_bias_table(rows: &[StaggeredBiasRow]) -> Table {
    let mut t = Table::new(&["seed", "twfe", "csdid_simple", "truth"]);
    for r in rows {
        t.push(row![r.seed.to_string(), r.twfe, r.csdid_simple, r.truth]);
    }
    t
}

pub fn contamination_table(rows: &[ContaminationRow]) -> Table {
    let mut t = Table::new(&[
        "design",
        "market",
        "conditioning",
        "pooled",
        "partitioned",
        "conditional_truth",
        "marginal_truth",
    ]);
    for r in rows {
        t.push(row![
            r.design.as_str(),
            r.market.slug(),
            r.conditioning.to_string(),
            r.pooled,
            r.partitioned,
            r.conditional_truth,
            r.marginal_truth,
        ]);
    }
    t
}

/// Output format selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    #[default]
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "both" => Ok(Format::Both),
            _ => Err(Error::InvalidInput(format!(
                "unknown format {s:?}; expected csv, json or both"
            ))),
        }
    }
}

/// A file ready to be written under an output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFile {
    pub path: String,
    pub bytes: Vec<u8>,
}

impl ReportFile {
    pub fn csv(path: impl Into<String>, table: &Table) -> Self {
        ReportFile {
            path: path.into(),
            bytes: table.to_csv(),
        }
    }

    pub fn json<T: Serialize + ?Sized>(path: impl Into<String>, value: &T) -> Self {
        let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialize");
        bytes.push(b'\n');
        ReportFile {
            path: path.into(),
            bytes,
        }
    }
}

/// Collects outputs of one run according to the format selection.
#[derive(Debug, Clone, Default)]
pub struct Bundle {
    pub format: Format,
    pub files: Vec<ReportFile>,
}

impl Bundle {
    pub fn new(format: Format) -> Self {
        Bundle {
            format,
            files: Vec::new(),
        }
    }

    pub fn table(&mut self, stem: &str, table: &Table) {
        if self.format.csv() {
            self.files.push(ReportFile::csv(format!("{stem}.csv"), table));
        }
    }

    pub fn value<T: Serialize + ?Sized>(&mut self, stem: &str, value: &T) {
        if self.format.json() {
            self.files.push(ReportFile::json(format!("{stem}.json"), value));
        }
    }

    pub fn both<T: Serialize + ?Sized>(&mut self, stem: &str, table: &Table, value: &T) {
        self.table(stem, table);
        self.value(stem, value);
    }

    pub fn extend(&mut self, other: Bundle) {
        self.files.extend(other.files);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_digest: String,
    pub data_digest: String,
    pub files: Vec<FileDigest>,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, config: &C, data_digest: &str, files: &[ReportFile]) -> Self {
        let config_json = serde_json::to_vec(config).expect("config serializes");
        let mut files: Vec<FileDigest> = files
            .iter()
            .map(|f| FileDigest {
                path: f.path.clone(),
                sha256: sha256_hex(&f.bytes),
            })
            .collect();
        files.sort_by(|a, b| a.path.cmp(&b.path));
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_digest: sha256_hex(&config_json),
            data_digest: data_digest.into(),
            files,
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Write files plus `manifest.json` under `dir`, creating directories.
pub fn write_bundle(dir: &Path, files: &[ReportFile], manifest: &Manifest) -> Result<()> {
    for f in files
        .iter()
        .chain(std::iter::once(&ReportFile::json(MANIFEST_FILE, manifest)))
    {
        let path = dir.join(&f.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, &f.bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(-0.618), "-0.618");
        assert_eq!(fmt_sig(4.56789012), "4.56789");
        assert_eq!(fmt_sig(123456.7), "123457");
        assert_eq!(fmt_sig(1234567.0), "1.23457e+06");
        assert_eq!(fmt_sig(0.0001234567), "0.000123457");
        assert_eq!(fmt_sig(0.00001234567), "1.23457e-05");
        assert_eq!(fmt_sig(2.0e-10), "2e-10");
        assert_eq!(fmt_sig(f64::NAN), "NaN");
    }

    #[test]
    fn csv_has_stable_header() {
        let mut t = Table::new(&["a", "b", "c"]);
        t.push(row![1.5, Cell::Missing, "x,y"]);
        assert_eq!(String::from_utf8(t.to_csv()).unwrap(), "a,b,c\n1.5,,\"x,y\"\n");
    }

    #[test]
    #[should_panic(expected = "row width")]
    fn ragged_rows_rejected() {
        let mut t = Table::new(&["a"]);
        t.push(row![1.0, 2.0]);
    }
}
