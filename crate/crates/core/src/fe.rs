//! Numerical core shared by the estimators: two-way fixed-effect
//! absorption by alternating projections, QR least squares and
//! cluster-robust sandwich covariance.

use std::collections::HashMap;
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense integer codes for the unit and year of every row.
#[derive(Debug, Clone)]
pub struct FeIndex {
    pub unit: Vec<usize>,
    pub year: Vec<usize>,
    pub n_units: usize,
    pub n_years: usize,
}

fn encode<K: Hash + Eq + Clone>(keys: &[K]) -> (Vec<usize>, usize) {
    let mut map: HashMap<K, usize> = HashMap::new();
    let codes = keys
        .iter()
        .map(|k| {
            let next = map.len();
            *map.entry(k.clone()).or_insert(next)
        })
        .collect();
    (codes, map.len())
}

impl FeIndex {
    pub fn new<U: Hash + Eq + Clone, T: Hash + Eq + Clone>(units: &[U], years: &[T]) -> Self {
        assert_eq!(units.len(), years.len());
        let (unit, n_units) = encode(units);
        let (year, n_years) = encode(years);
        FeIndex {
            unit,
            year,
            n_units,
            n_years,
        }
    }

    pub fn len(&self) -> usize {
        self.unit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unit.is_empty()
    }

    /// Degrees of freedom absorbed by unit and year effects (connected design).
    pub fn absorbed_dof(&self) -> usize {
        self.n_units + self.n_years - 1
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DemeanConfig {
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for DemeanConfig {
    fn default() -> Self {
        DemeanConfig {
            tolerance: 1e-10,
            max_sweeps: 500,
        }
    }
}

fn subtract_group_means(col: &mut [f64], codes: &[usize], n_groups: usize, sums: &mut Vec<f64>, counts: &[f64]) -> f64 {
    sums.clear();
    sums.resize(n_groups, 0.0);
    for (v, &g) in col.iter().zip(codes) {
        sums[g] += v;
    }
    let mut max_change = 0.0f64;
    for (v, &g) in col.iter_mut().zip(codes) {
        let m = sums[g] / counts[g];
        *v -= m;
        max_change = max_change.max(m.abs());
    }
    max_change
}

/// Sweep out unit and year means from each column until a full sweep changes
/// no entry by more than `tolerance`.
pub fn two_way_demean_with(index: &FeIndex, columns: &[Vec<f64>], cfg: DemeanConfig) -> Result<Vec<Vec<f64>>> {
    if index.n_units < 2 || index.n_years < 2 {
        return Err(Error::Insufficient(format!(
            "two-way demeaning needs at least 2 units and 2 years, got {} and {}",
            index.n_units, index.n_years
        )));
    }
    let mut unit_counts = vec![0.0; index.n_units];
    let mut year_counts = vec![0.0; index.n_years];
    for (&u, &t) in index.unit.iter().zip(&index.year) {
        unit_counts[u] += 1.0;
        year_counts[t] += 1.0;
    }
    let mut sums = Vec::new();
    let mut out = Vec::with_capacity(columns.len());
    for col in columns {
        assert_eq!(col.len(), index.len());
        let mut col = col.clone();
        let mut converged = false;
        let mut last = f64::INFINITY;
        for _ in 0..cfg.max_sweeps {
            let a = subtract_group_means(&mut col, &index.unit, index.n_units, &mut sums, &unit_counts);
            let b = subtract_group_means(&mut col, &index.year, index.n_years, &mut sums, &year_counts);
            last = a.max(b);
            if last < cfg.tolerance {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NotConverged {
                sweeps: cfg.max_sweeps,
                max_change: last,
            });
        }
        out.push(col);
    }
    Ok(out)
}

pub fn two_way_demean(index: &FeIndex, columns: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    two_way_demean_with(index, columns, DemeanConfig::default())
}

mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        Ok(DMatrix::from_fn(n, k, |i, j| rows[i][j]))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Classical covariance `sigma2 * (X'X)^-1`.
    #[serde(with = "matrix_rows")]
    pub vcov: DMatrix<f64>,
    pub residuals: Vec<f64>,
    /// Residual variance, RSS over residual degrees of freedom.
    pub sigma2: f64,
    pub n_obs: usize,
    pub n_params: usize,
    /// Degrees of freedom already spent on absorbed fixed effects.
    pub absorbed_dof: usize,
    pub dof_resid: usize,
    pub r_squared: f64,
    #[serde(skip)]
    pub(crate) xtx_inv: DMatrix<f64>,
    #[serde(skip)]
    pub(crate) design: DMatrix<f64>,
}

impl FitResult {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coefficients[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn xtx_inv(&self) -> &DMatrix<f64> {
        &self.xtx_inv
    }

    /// Standard errors from the classical covariance.
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.n_params).map(|j| self.vcov[(j, j)].max(0.0).sqrt()).collect()
    }
}

/// Relative tolerance for declaring a column collinear with its predecessors.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Least squares via Householder QR. `absorbed_dof` is subtracted from the
/// residual degrees of freedom when the columns were demeaned beforehand.
pub fn fit_ols_absorbed(y: &[f64], x: &DMatrix<f64>, names: &[String], absorbed_dof: usize) -> Result<FitResult> {
    let (n, k) = x.shape();
    assert_eq!(y.len(), n, "outcome length must match design rows");
    assert_eq!(names.len(), k, "one name per column");
    if k == 0 {
        return Err(Error::Insufficient("design has no columns".into()));
    }
    if n <= k + absorbed_dof {
        return Err(Error::Insufficient(format!(
            "{n} observations cannot identify {k} parameters plus {absorbed_dof} absorbed effects"
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let collinear: Vec<String> = (0..k)
        .filter(|&j| {
            let norm = x.column(j).norm();
            norm == 0.0 || r[(j, j)].abs() <= RANK_TOLERANCE * norm
        })
        .map(|j| names[j].clone())
        .collect();
    if !collinear.is_empty() {
        return Err(Error::RankDeficient { columns: collinear });
    }
    let mut qty = DVector::from_column_slice(y);
    qr.q_tr_mul(&mut qty);
    let qty = qty.rows(0, k).into_owned();
    let beta = r.solve_upper_triangular(&qty).ok_or_else(|| Error::RankDeficient {
        columns: names.to_vec(),
    })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::RankDeficient {
            columns: names.to_vec(),
        })?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let fitted = x * &beta;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let dof_resid = n - k - absorbed_dof;
    let sigma2 = rss / dof_resid as f64;
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN };
    Ok(FitResult {
        names: names.to_vec(),
        coefficients: beta.iter().copied().collect(),
        vcov: &xtx_inv * sigma2,
        residuals,
        sigma2,
        n_obs: n,
        n_params: k,
        absorbed_dof,
        dof_resid,
        r_squared,
        xtx_inv,
        design: x.clone(),
    })
}

pub fn fit_ols(y: &[f64], x: &DMatrix<f64>, names: &[String]) -> Result<FitResult> {
    fit_ols_absorbed(y, x, names, 0)
}

/// Build a design matrix from column vectors.
pub fn design_from_columns(columns: &[Vec<f64>]) -> DMatrix<f64> {
    let n = columns.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i])
}

/// Cluster-robust (CRVE1) covariance:
/// `G/(G-1) * (N-1)/(N-K) * B (sum_g s_g s_g') B` with `B = (X'X)^-1`
/// and `s_g = X_g' e_g`. `K` counts the explicit regressors only.
pub fn cluster_vcov<C: Hash + Eq + Clone>(fit: &FitResult, clusters: &[C]) -> Result<DMatrix<f64>> {
    assert_eq!(clusters.len(), fit.n_obs, "one cluster label per observation");
    let (codes, g) = encode(clusters);
    if g < 2 {
        return Err(Error::Insufficient(format!(
            "cluster-robust covariance needs at least 2 clusters, got {g}"
        )));
    }
    let k = fit.n_params;
    let mut scores = DMatrix::<f64>::zeros(g, k);
    for (i, &c) in codes.iter().enumerate() {
        let e = fit.residuals[i];
        for j in 0..k {
            scores[(c, j)] += fit.design[(i, j)] * e;
        }
    }
    let meat = scores.transpose() * &scores;
    let bread = &fit.xtx_inv;
    let n = fit.n_obs as f64;
    let gf = g as f64;
    let factor = gf / (gf - 1.0) * (n - 1.0) / (n - k as f64);
    let v = bread * meat * bread * factor;
    // symmetrize away rounding
    Ok((&v + v.transpose()) * 0.5)
}

/// Number of distinct cluster labels.
pub fn cluster_count<C: Hash + Eq + Clone>(clusters: &[C]) -> usize {
    encode(clusters).1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn balanced_two_by_two_double_demeaning() {
        // y_it for units a,b and years 1,2
        let units = ["a", "a", "b", "b"];
        let years = [1, 2, 1, 2];
        let y = vec![1.0, 4.0, 2.0, 9.0];
        let idx = FeIndex::new(&units, &years);
        let d = two_way_demean(&idx, std::slice::from_ref(&y)).unwrap();
        let grand = y.iter().sum::<f64>() / 4.0;
        let unit_mean = [2.5, 5.5];
        let year_mean = [1.5, 6.5];
        for i in 0..4 {
            let u = idx.unit[i];
            let t = idx.year[i];
            let closed = y[i] - unit_mean[u] - year_mean[t] + grand;
            assert!((d[0][i] - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn demean_needs_two_units_and_years() {
        let idx = FeIndex::new(&["a", "a"], &[1, 2]);
        assert!(two_way_demean(&idx, &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn non_convergence_reports_sweeps() {
        let units = ["a", "a", "b", "b", "c"];
        let years = [1, 2, 1, 3, 3];
        let idx = FeIndex::new(&units, &years);
        let cfg = DemeanConfig {
            tolerance: 0.0,
            max_sweeps: 3,
        };
        match two_way_demean_with(&idx, &[vec![1.0, 5.0, 2.0, 7.0, 3.0]], cfg) {
            Err(Error::NotConverged { sweeps, .. }) => assert_eq!(sweeps, 3),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn exact_slope_recovered() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.7 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let fit = fit_ols(&y, &design_from_columns(&[x]), &names(1)).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let x: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let z: Vec<f64> = (0..10).map(|i| (i as f64).cos()).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let design = design_from_columns(&[x.clone(), z, x]);
        match fit_ols(&y, &design, &names(3)) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["x2".to_string()]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn single_cluster_rejected() {
        let x: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..6).map(|i| (i * i) as f64).collect();
        let fit = fit_ols(&y, &design_from_columns(&[x]), &names(1)).unwrap();
        assert!(cluster_vcov(&fit, &[0; 6]).is_err());
    }

    #[test]
    fn singleton_clusters_give_hc1() {
        let x1: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let x2: Vec<f64> = (0..12).map(|i| (i as f64 * 1.3).cos() + 0.1 * i as f64).collect();
        let y: Vec<f64> = (0..12)
            .map(|i| x1[i] - 0.5 * x2[i] + ((i * 7 % 5) as f64 - 2.0) * 0.3)
            .collect();
        let fit = fit_ols(&y, &design_from_columns(&[x1, x2]), &names(2)).unwrap();
        let ids: Vec<usize> = (0..12).collect();
        let v = cluster_vcov(&fit, &ids).unwrap();
        // HC1 = n/(n-k) * B X' diag(e^2) X B
        let x = &fit.design;
        let mut meat = DMatrix::zeros(2, 2);
        for i in 0..12 {
            let xi = x.row(i).transpose();
            meat += &xi * xi.transpose() * fit.residuals[i].powi(2);
        }
        let hc1 = &fit.xtx_inv * meat * &fit.xtx_inv * (12.0 / 10.0);
        assert!((v - hc1).abs().max() < 1e-12);
    }
}
