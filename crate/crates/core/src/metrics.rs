//! Evaluation metrics: held-out R^2, LD-adjusted true positive rate, model size.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CovMtError, Result};
use crate::model::{predict, Mask};

/// Entries with magnitude below this count as zero.
pub const ZERO_TOL: f64 = 1e-12;

pub fn is_nonzero(v: f64) -> bool {
    v.abs() >= ZERO_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Report {
    /// `None` where the column has no usable test entries or a zero
    /// denominator.
    pub per_response: Vec<Option<f64>>,
    pub average: f64,
}

/// `1 - |y_k - yhat_k|^2 / |y_k - ybar_train_k|^2` per column over the
/// observed entries, averaged over the columns where it is defined.
pub fn r2_from_predictions(pred: &DMatrix<f64>, y: &DMatrix<f64>, observed: Option<&Mask>, train_means: &[f64]) -> Result<R2Report> {
    if pred.shape() != y.shape() || train_means.len() != y.ncols() {
        return Err(CovMtError::Dimension(format!(
            "predictions {:?}, responses {:?}, {} training means",
            pred.shape(),
            y.shape(),
            train_means.len()
        )));
    }
    let per_response: Vec<Option<f64>> = (0..y.ncols())
        .map(|k| {
            let mut sse = 0.0;
            let mut sst = 0.0;
            for i in 0..y.nrows() {
                if observed.map_or(true, |m| m[(i, k)]) {
                    sse += (y[(i, k)] - pred[(i, k)]).powi(2);
                    sst += (y[(i, k)] - train_means[k]).powi(2);
                }
            }
            (sst > 0.0).then(|| 1.0 - sse / sst)
        })
        .collect();
    let defined: Vec<f64> = per_response.iter().flatten().cloned().collect();
    if defined.is_empty() {
        return Err(CovMtError::UndefinedMetric("no response column has a non-zero R^2 denominator".into()));
    }
    let average = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(R2Report { per_response, average })
}

/// Test-set R^2 of `X_test beta_hat`.
pub fn test_r2(beta_hat: &DMatrix<f64>, x_test: &DMatrix<f64>, y_test: &DMatrix<f64>, train_means: &[f64]) -> Result<R2Report> {
    let pred = predict(beta_hat, x_test)?;
    r2_from_predictions(&pred, y_test, None, train_means)
}

/// Absolute Pearson correlations between design columns; constant columns
/// correlate only with themselves.
pub fn abs_correlations(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut centered = x.clone();
    let mut norms = vec![0.0; p];
    for j in 0..p {
        let m = x.column(j).sum() / n as f64;
        for i in 0..n {
            centered[(i, j)] -= m;
        }
        norms[j] = centered.column(j).norm();
    }
    let cross = centered.tr_mul(&centered);
    DMatrix::from_fn(p, p, |j, l| {
        if j == l {
            1.0
        } else if norms[j] > 0.0 && norms[l] > 0.0 {
            (cross[(j, l)] / (norms[j] * norms[l])).abs()
        } else {
            0.0
        }
    })
}

/// Fraction of true eQTLs `(j, k)` for which some predictor correlated with
/// `j` beyond `threshold` (including `j`) has a nonzero estimate in column `k`.
pub fn ld_adjusted_tpr(beta_hat: &DMatrix<f64>, support: &Mask, x: &DMatrix<f64>, threshold: f64) -> Result<f64> {
    if beta_hat.shape() != support.shape() || x.ncols() != beta_hat.nrows() {
        return Err(CovMtError::Dimension("estimate, support and design do not conform".into()));
    }
    let total = support.iter().filter(|&&b| b).count();
    if total == 0 {
        return Err(CovMtError::UndefinedMetric("true support is empty".into()));
    }
    let cor = abs_correlations(x);
    let p = x.ncols();
    let proxies: Vec<Vec<usize>> = (0..p)
        .map(|j| (0..p).filter(|&l| l == j || cor[(l, j)] > threshold).collect())
        .collect();
    let mut found = 0usize;
    for k in 0..support.ncols() {
        for j in 0..p {
            if support[(j, k)] && proxies[j].iter().any(|&l| is_nonzero(beta_hat[(l, k)])) {
                found += 1;
            }
        }
    }
    Ok(found as f64 / total as f64)
}

pub fn model_size(beta_hat: &DMatrix<f64>) -> f64 {
    if beta_hat.is_empty() {
        return 0.0;
    }
    beta_hat.iter().filter(|v| is_nonzero(**v)).count() as f64 / beta_hat.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub label: String,
    pub r2: R2Report,
    pub ld_tpr: Option<f64>,
    pub model_size: f64,
}

impl MetricReport {
    /// Long-format rows: `(metric, response, value)`; `response` is `all` for
    /// aggregates and `NA` marks undefined per-response values.
    pub fn long_rows(&self, response_names: &[String]) -> Vec<(String, String, String)> {
        let mut rows = Vec::new();
        for (k, v) in self.r2.per_response.iter().enumerate() {
            let name = response_names.get(k).cloned().unwrap_or_else(|| format!("r{k}"));
            rows.push(("r2".to_string(), name, v.map_or("NA".to_string(), |x| x.to_string())));
        }
        rows.push(("r2".into(), "all".into(), self.r2.average.to_string()));
        if let Some(tpr) = self.ld_tpr {
            rows.push(("ld_tpr".into(), "all".into(), tpr.to_string()));
        }
        rows.push(("model_size".into(), "all".into(), self.model_size.to_string()));
        rows
    }
}
