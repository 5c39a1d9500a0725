//! Domain types shared by every solver and the observed-data objective.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CovMtError, Result};
use crate::linalg;

pub type Mask = DMatrix<bool>;

/// Subjects sharing one set of observed responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub observed: Vec<usize>,
    pub missing: Vec<usize>,
    pub subjects: Vec<usize>,
}

/// Design matrix, responses and the per-entry observation mask.
///
/// Missing response entries are overwritten with NaN at construction so that
/// any accidental read poisons downstream results instead of silently using
/// stale values.
#[derive(Debug, Clone)]
pub struct DataSet {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    observed: Mask,
    patterns: Vec<Pattern>,
    pattern_of: Vec<usize>,
    col_counts: Vec<usize>,
}

impl DataSet {
    pub fn new(x: DMatrix<f64>, mut y: DMatrix<f64>, observed: Mask) -> Result<Self> {
        let (n, q) = y.shape();
        if x.nrows() != n {
            return Err(CovMtError::Dimension(format!(
                "design has {} rows but responses have {n}",
                x.nrows()
            )));
        }
        if observed.shape() != (n, q) {
            return Err(CovMtError::Dimension(format!(
                "mask is {:?} but responses are {:?}",
                observed.shape(),
                (n, q)
            )));
        }
        if n == 0 || q == 0 {
            return Err(CovMtError::InvalidData("empty response matrix".into()));
        }
        for i in 0..n {
            for k in 0..q {
                if observed[(i, k)] {
                    if !y[(i, k)].is_finite() {
                        return Err(CovMtError::InvalidData(format!(
                            "observed response ({i}, {k}) is not finite"
                        )));
                    }
                } else {
                    y[(i, k)] = f64::NAN;
                }
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CovMtError::InvalidData("design contains non-finite values".into()));
        }

        let col_counts: Vec<usize> = (0..q)
            .map(|k| (0..n).filter(|&i| observed[(i, k)]).count())
            .collect();
        let mut patterns: Vec<Pattern> = Vec::new();
        let mut pattern_of = Vec::with_capacity(n);
        let mut index: std::collections::HashMap<Vec<bool>, usize> = Default::default();
        for i in 0..n {
            let key: Vec<bool> = (0..q).map(|k| observed[(i, k)]).collect();
            if !key.iter().any(|&b| b) {
                return Err(CovMtError::InvalidData(format!("subject {i} has no observed responses")));
            }
            let id = *index.entry(key.clone()).or_insert_with(|| {
                patterns.push(Pattern {
                    observed: (0..q).filter(|&k| key[k]).collect(),
                    missing: (0..q).filter(|&k| !key[k]).collect(),
                    subjects: Vec::new(),
                });
                patterns.len() - 1
            });
            patterns[id].subjects.push(i);
            pattern_of.push(id);
        }

        Ok(Self {
            x,
            y,
            observed,
            patterns,
            pattern_of,
            col_counts,
        })
    }

    /// Fully observed convenience constructor.
    pub fn complete(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        let mask = Mask::from_element(y.nrows(), y.ncols(), true);
        Self::new(x, y, mask)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Responses with NaN at missing positions.
    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn observed(&self) -> &Mask {
        &self.observed
    }

    pub fn is_observed(&self, i: usize, k: usize) -> bool {
        self.observed[(i, k)]
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn pattern_of(&self, i: usize) -> &Pattern {
        &self.patterns[self.pattern_of[i]]
    }

    pub fn observed_indices(&self, i: usize) -> &[usize] {
        &self.pattern_of(i).observed
    }

    pub fn missing_indices(&self, i: usize) -> &[usize] {
        &self.pattern_of(i).missing
    }

    /// Observed count per response column.
    pub fn column_counts(&self) -> &[usize] {
        &self.col_counts
    }

    /// Fitting needs at least one observation per response; conditional
    /// moments for new subjects do not.
    pub fn require_observed_columns(&self) -> Result<()> {
        match self.col_counts.iter().position(|&c| c == 0) {
            Some(k) => Err(CovMtError::InvalidData(format!("response column {k} has no observed entries"))),
            None => Ok(()),
        }
    }

    pub fn has_missing(&self) -> bool {
        self.observed.iter().any(|&b| !b)
    }

    /// Responses with missing entries replaced by `fill[k]`.
    pub fn y_filled(&self, fill: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.q(), |i, k| {
            if self.observed[(i, k)] {
                self.y[(i, k)]
            } else {
                fill[k]
            }
        })
    }

    /// Mean of the observed entries in each response column.
    pub fn observed_column_means(&self) -> Vec<f64> {
        (0..self.q())
            .map(|k| {
                let sum: f64 = (0..self.n()).filter(|&i| self.observed[(i, k)]).map(|i| self.y[(i, k)]).sum();
                sum / self.col_counts[k] as f64
            })
            .collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(rows.iter());
        let y = self.y.select_rows(rows.iter());
        let mask = Mask::from_fn(rows.len(), self.q(), |i, k| self.observed[(rows[i], k)]);
        Self::new(x, y, mask)
    }
}

/// Column centering and scaling constants, estimated on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_scale: Vec<f64>,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let count = values.clone().count();
    let mean = values.clone().sum::<f64>() / count as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    let sd = if count > 1 { (ss / (count - 1) as f64).sqrt() } else { 0.0 };
    (mean, sd, count)
}

impl Standardizer {
    /// Estimates means and unit sample standard deviations; responses use
    /// observed entries only. Constant columns are rejected.
    pub fn fit(x: &DMatrix<f64>, y: &DMatrix<f64>, observed: &Mask, x_names: Option<&[String]>, y_names: Option<&[String]>) -> Result<Self> {
        let name = |names: Option<&[String]>, j: usize| names.map(|n| n[j].clone()).unwrap_or_else(|| format!("#{j}"));
        let mut x_mean = Vec::with_capacity(x.ncols());
        let mut x_scale = Vec::with_capacity(x.ncols());
        for j in 0..x.ncols() {
            let (m, sd, _) = mean_sd(x.column(j).iter().cloned());
            if !(sd > 1e-12 * m.abs().max(1.0)) {
                return Err(CovMtError::InvalidData(format!("predictor column {} is constant", name(x_names, j))));
            }
            x_mean.push(m);
            x_scale.push(sd);
        }
        let mut y_mean = Vec::with_capacity(y.ncols());
        let mut y_scale = Vec::with_capacity(y.ncols());
        for k in 0..y.ncols() {
            let vals = (0..y.nrows()).filter(|&i| observed[(i, k)]).map(|i| y[(i, k)]);
            let (m, sd, count) = mean_sd(vals);
            if count == 0 {
                return Err(CovMtError::InvalidData(format!("response column {} has no observed entries", name(y_names, k))));
            }
            if !(sd > 1e-12 * m.abs().max(1.0)) {
                return Err(CovMtError::InvalidData(format!("response column {} is constant", name(y_names, k))));
            }
            y_mean.push(m);
            y_scale.push(sd);
        }
        Ok(Self {
            x_mean,
            x_scale,
            y_mean,
            y_scale,
        })
    }

    pub fn transform_x(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.x_mean.len() {
            return Err(CovMtError::Dimension(format!(
                "expected {} predictors, got {}",
                self.x_mean.len(),
                x.ncols()
            )));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.x_mean[j]) / self.x_scale[j]))
    }

    pub fn transform_y(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.ncols() != self.y_mean.len() {
            return Err(CovMtError::Dimension(format!(
                "expected {} responses, got {}",
                self.y_mean.len(),
                y.ncols()
            )));
        }
        Ok(DMatrix::from_fn(y.nrows(), y.ncols(), |i, k| (y[(i, k)] - self.y_mean[k]) / self.y_scale[k]))
    }

    pub fn inverse_y(&self, y_std: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(y_std.nrows(), y_std.ncols(), |i, k| y_std[(i, k)] * self.y_scale[k] + self.y_mean[k])
    }

    /// Standardized data set built from raw matrices.
    pub fn dataset(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, observed: &Mask) -> Result<DataSet> {
        DataSet::new(self.transform_x(x)?, self.transform_y(y)?, observed.clone())
    }

    /// Raw-scale predictions from coefficients fitted on standardized data.
    pub fn predict_raw(&self, beta: &DMatrix<f64>, x_raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let xs = self.transform_x(x_raw)?;
        Ok(self.inverse_y(&predict(beta, &xs)?))
    }

    pub fn identity(p: usize, q: usize) -> Self {
        Self {
            x_mean: vec![0.0; p],
            x_scale: vec![1.0; p],
            y_mean: vec![0.0; q],
            y_scale: vec![1.0; q],
        }
    }
}

/// Coefficients with a precision matrix and its cached inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub beta: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

impl ModelFit {
    /// Symmetrizes `omega`, checks positive definiteness and caches its inverse.
    pub fn new(beta: DMatrix<f64>, omega: DMatrix<f64>) -> Result<Self> {
        if omega.nrows() != omega.ncols() || omega.nrows() != beta.ncols() {
            return Err(CovMtError::Dimension(format!(
                "beta is {:?} but omega is {:?}",
                beta.shape(),
                omega.shape()
            )));
        }
        let omega = linalg::symmetrize(&omega);
        let sigma = linalg::inverse_spd(&omega, "precision matrix")?;
        Ok(Self { beta, omega, sigma })
    }

    pub fn with_sigma(beta: DMatrix<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let sigma = linalg::symmetrize(&sigma);
        let omega = linalg::inverse_spd(&sigma, "covariance matrix")?;
        Self::new(beta, omega)
    }

    pub fn p(&self) -> usize {
        self.beta.nrows()
    }

    pub fn q(&self) -> usize {
        self.beta.ncols()
    }
}

/// Tuning triple for the coefficient and precision penalties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub alpha: f64,
    pub lambda_beta: f64,
    pub lambda_omega: f64,
}

impl PenaltyConfig {
    pub fn new(alpha: f64, lambda_beta: f64, lambda_omega: f64) -> Result<Self> {
        let pen = Self {
            alpha,
            lambda_beta,
            lambda_omega,
        };
        pen.validate()?;
        Ok(pen)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(CovMtError::InvalidConfig(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.lambda_beta >= 0.0) || !self.lambda_beta.is_finite() {
            return Err(CovMtError::InvalidConfig(format!("lambda_beta {} must be >= 0", self.lambda_beta)));
        }
        if !(self.lambda_omega >= 0.0) || !self.lambda_omega.is_finite() {
            return Err(CovMtError::InvalidConfig(format!("lambda_omega {} must be >= 0", self.lambda_omega)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSizeRule {
    /// gamma = 1/L from the power-iteration Lipschitz bound, halved whenever
    /// the majorization check fails numerically.
    FixedLipschitz,
    /// Starts from the optimistic diagonal bound and shrinks by
    /// `backtracking_shrink` until the majorization holds.
    Backtracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_ecm_iters: usize,
    pub ecm_tol: f64,
    pub max_prox_iters: usize,
    pub prox_tol: f64,
    pub step_size_rule: StepSizeRule,
    pub backtracking_shrink: f64,
    pub glasso_tol: f64,
    pub glasso_max_iters: usize,
    pub penalize_omega_diagonal: bool,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_ecm_iters: 200,
            ecm_tol: 1e-6,
            max_prox_iters: 2000,
            prox_tol: 1e-6,
            step_size_rule: StepSizeRule::FixedLipschitz,
            backtracking_shrink: 0.5,
            glasso_tol: 1e-6,
            glasso_max_iters: 500,
            penalize_omega_diagonal: true,
            seed: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ecm_tol", self.ecm_tol),
            ("prox_tol", self.prox_tol),
            ("glasso_tol", self.glasso_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(CovMtError::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        if self.max_ecm_iters == 0 || self.max_prox_iters == 0 || self.glasso_max_iters == 0 {
            return Err(CovMtError::InvalidConfig("iteration caps must be >= 1".into()));
        }
        if !(self.backtracking_shrink > 0.0 && self.backtracking_shrink < 1.0) {
            return Err(CovMtError::InvalidConfig("backtracking_shrink must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

pub fn predict(beta: &DMatrix<f64>, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x_new.ncols() != beta.nrows() {
        return Err(CovMtError::Dimension(format!(
            "design has {} columns but the fit has {} predictors",
            x_new.ncols(),
            beta.nrows()
        )));
    }
    Ok(x_new * beta)
}

/// Sparse group penalty: alpha * |row|_1 + (1 - alpha) * |row|_2, summed over rows.
pub fn penalty_beta(beta: &DMatrix<f64>, alpha: f64) -> f64 {
    beta.row_iter()
        .map(|row| alpha * row.iter().map(|v| v.abs()).sum::<f64>() + (1.0 - alpha) * row.norm())
        .sum()
}

pub fn penalty_omega(omega: &DMatrix<f64>, penalize_diagonal: bool) -> f64 {
    let mut total = 0.0;
    for j in 0..omega.nrows() {
        for k in 0..omega.ncols() {
            if j != k || penalize_diagonal {
                total += omega[(j, k)].abs();
            }
        }
    }
    total
}

/// Observed-data negative log-likelihood (times 2/n, constants dropped).
///
/// Each missingness pattern shares one Cholesky factor of its observed
/// covariance block. Pattern terms are reduced in pattern order, so the value
/// does not depend on the thread count.
pub fn observed_nll(fit: &ModelFit, data: &DataSet) -> Result<f64> {
    check_dims(fit, data)?;
    let fitted = data.x() * &fit.beta;
    let terms: Vec<Result<f64>> = data
        .patterns()
        .par_iter()
        .map(|pat| {
            let o = &pat.observed;
            let chol = linalg::cholesky(linalg::submatrix(&fit.sigma, o, o), "observed covariance block")?;
            let log_det = linalg::log_det(&chol);
            let mut resid = DMatrix::zeros(o.len(), pat.subjects.len());
            for (c, &i) in pat.subjects.iter().enumerate() {
                for (r, &k) in o.iter().enumerate() {
                    resid[(r, c)] = data.y()[(i, k)] - fitted[(i, k)];
                }
            }
            let solved = chol.solve(&resid);
            let quad = resid.dot(&solved);
            Ok(quad + pat.subjects.len() as f64 * log_det)
        })
        .collect();
    let mut total = 0.0;
    for t in terms {
        total += t?;
    }
    let value = total / data.n() as f64;
    if !value.is_finite() {
        return Err(CovMtError::DegenerateCovariance("observed likelihood is not finite".into()));
    }
    Ok(value)
}

pub fn penalized_objective(fit: &ModelFit, data: &DataSet, pen: &PenaltyConfig, penalize_diagonal: bool) -> Result<f64> {
    let nll = observed_nll(fit, data)?;
    let mut value = nll;
    if pen.lambda_beta != 0.0 {
        value += pen.lambda_beta * penalty_beta(&fit.beta, pen.alpha);
    }
    if pen.lambda_omega != 0.0 {
        value += pen.lambda_omega * penalty_omega(&fit.omega, penalize_diagonal);
    }
    Ok(value)
}

pub(crate) fn check_dims(fit: &ModelFit, data: &DataSet) -> Result<()> {
    if fit.p() != data.p() || fit.q() != data.q() {
        return Err(CovMtError::Dimension(format!(
            "fit is {}x{} but data has p={} q={}",
            fit.p(),
            fit.q(),
            data.p(),
            data.q()
        )));
    }
    Ok(())
}
