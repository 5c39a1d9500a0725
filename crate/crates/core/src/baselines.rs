//! Comparison estimators: the exact multi-task criterion with identity
//! precision, tissue-by-tissue elastic net, and nearest-neighbour imputation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::beta_prox::{accelerated_prox_grad, null_lambda, ProxSolution, SmoothLoss};
use crate::error::{CovMtError, Result};
use crate::linalg;
use crate::model::{DataSet, Mask, PenaltyConfig, SolverConfig};

/// `M[i,k] = n_k^{-1/2}` where observed, zero elsewhere.
#[derive(Debug, Clone)]
pub struct MissingnessWeights {
    pub m: DMatrix<f64>,
}

impl MissingnessWeights {
    pub fn new(data: &DataSet) -> Self {
        let counts = data.column_counts();
        let m = DMatrix::from_fn(data.n(), data.q(), |i, k| {
            if data.is_observed(i, k) {
                1.0 / (counts[k] as f64).sqrt()
            } else {
                0.0
            }
        });
        Self { m }
    }
}

/// `(1/2n) |(Y - X beta) o M|_F^2`.
#[derive(Debug, Clone)]
pub struct MaskedLoss<'a> {
    x: &'a DMatrix<f64>,
    y0: DMatrix<f64>,
    w: DMatrix<f64>,
    lipschitz: f64,
    lipschitz_lower: f64,
}

impl<'a> MaskedLoss<'a> {
    pub fn new(data: &'a DataSet) -> Self {
        let weights = MissingnessWeights::new(data);
        let w = weights.m.component_mul(&weights.m);
        let y0 = data.y_filled(&vec![0.0; data.q()]);
        let x = data.x();
        let n = data.n() as f64;
        let xtx = x.tr_mul(x);
        let w_max = w.max();
        let lipschitz = linalg::largest_eigenvalue(&xtx, 50, 1e-8) * w_max / n;
        let xsq = x.component_mul(x);
        let lipschitz_lower = (xsq.tr_mul(&w)).max() / n;
        Self {
            x,
            y0,
            w,
            lipschitz,
            lipschitz_lower,
        }
    }
}

impl SmoothLoss for MaskedLoss<'_> {
    fn shape(&self) -> (usize, usize) {
        (self.x.ncols(), self.y0.ncols())
    }

    fn cache(&self, beta: &DMatrix<f64>) -> DMatrix<f64> {
        self.x * beta
    }

    fn value(&self, _beta: &DMatrix<f64>, xb: &DMatrix<f64>) -> f64 {
        let r = &self.y0 - xb;
        r.component_mul(&r).component_mul(&self.w).sum() / (2.0 * self.x.nrows() as f64)
    }

    fn gradient(&self, _beta: &DMatrix<f64>, xb: &DMatrix<f64>) -> DMatrix<f64> {
        let r = (&self.y0 - xb).component_mul(&self.w);
        self.x.tr_mul(&r) * (-1.0 / self.x.nrows() as f64)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn lipschitz_lower(&self) -> f64 {
        self.lipschitz_lower
    }
}

/// Exact multi-task estimator (identity precision, per-column `1/n_k` weights).
pub fn fit_mt(data: &DataSet, pen: &PenaltyConfig, cfg: &SolverConfig, init: Option<&DMatrix<f64>>) -> Result<ProxSolution> {
    data.require_observed_columns()?;
    let loss = MaskedLoss::new(data);
    let zero = DMatrix::zeros(data.p(), data.q());
    accelerated_prox_grad(&loss, pen, cfg, init.unwrap_or(&zero))
}

/// Smallest `lambda_beta` giving the zero fit for the multi-task criterion.
pub fn mt_null_lambda(data: &DataSet, alpha: f64) -> f64 {
    let loss = MaskedLoss::new(data);
    let zero = DMatrix::zeros(data.p(), data.q());
    let g = loss.gradient(&zero, &loss.cache(&zero));
    null_lambda(&(-g), alpha)
}

/// Per-column elastic net:
/// `(1/2n_k) |y_k - X b|^2 + lambda (alpha |b|_1 + (1 - alpha) |b|_2^2)` over
/// the observed rows of column `k`, by cyclic coordinate descent.
pub fn elastic_net_column(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    alpha: f64,
    init: &DVector<f64>,
    tol: f64,
    max_sweeps: usize,
) -> DVector<f64> {
    let (n, p) = x.shape();
    let nf = n as f64;
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared() / nf).collect();
    let mut b = init.clone();
    let mut resid = y - x * &b;
    let l1 = lambda * alpha;
    let l2 = 2.0 * lambda * (1.0 - alpha);
    for _ in 0..max_sweeps {
        let mut max_delta = 0.0f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let xj = x.column(j);
            let rho = xj.dot(&resid) / nf + col_sq[j] * b[j];
            let updated = linalg::soft_threshold(rho, l1) / (col_sq[j] + l2);
            let delta = updated - b[j];
            if delta != 0.0 {
                resid.axpy(-delta, &xj, 1.0);
                b[j] = updated;
                max_delta = max_delta.max(delta.abs() * col_sq[j].sqrt());
            }
        }
        if max_delta <= tol {
            break;
        }
    }
    b
}

/// Per-column elastic-net objective, used to verify solutions in tests.
pub fn elastic_net_objective(x: &DMatrix<f64>, y: &DVector<f64>, b: &DVector<f64>, lambda: f64, alpha: f64) -> f64 {
    let r = y - x * b;
    r.norm_squared() / (2.0 * x.nrows() as f64) + lambda * (alpha * b.lp_norm(1) + (1.0 - alpha) * b.norm_squared())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnGrid {
    pub alphas: Vec<f64>,
    pub n_lambda: usize,
    /// Smallest lambda as a fraction of the column's null threshold.
    pub lambda_ratio: f64,
}

impl Default for EnGrid {
    fn default() -> Self {
        Self {
            alphas: vec![0.25, 0.5, 0.75, 1.0],
            n_lambda: 20,
            lambda_ratio: 1e-3,
        }
    }
}

/// Held-out rows on the standardized scale.
#[derive(Debug, Clone, Copy)]
pub struct Holdout<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a DMatrix<f64>,
    pub observed: &'a Mask,
}

#[derive(Debug, Clone)]
pub struct EnFit {
    pub beta: DMatrix<f64>,
    /// Selected `(lambda, alpha)` per column; `None` for flagged columns.
    pub chosen: Vec<Option<(f64, f64)>>,
    /// Columns with no observed validation entries (weights left at zero).
    pub flagged: Vec<usize>,
}

/// Lambda path from `lambda_max` down to `ratio * lambda_max`, log-spaced.
pub fn log_path(lambda_max: f64, n: usize, ratio: f64) -> Vec<f64> {
    if n <= 1 || lambda_max <= 0.0 {
        return vec![lambda_max.max(0.0)];
    }
    (0..n)
        .map(|i| lambda_max * ratio.powf(i as f64 / (n - 1) as f64))
        .collect()
}

fn column_rows(data: &DataSet, k: usize) -> Vec<usize> {
    (0..data.n()).filter(|&i| data.is_observed(i, k)).collect()
}

/// Tissue-by-tissue elastic net with per-column validation tuning. Ties in
/// validation R^2 go to the larger lambda.
pub fn fit_en(train: &DataSet, valid: &Holdout, grid: &EnGrid, cfg: &SolverConfig) -> Result<EnFit> {
    if grid.alphas.is_empty() || grid.n_lambda == 0 {
        return Err(CovMtError::InvalidConfig("elastic-net grid is empty".into()));
    }
    train.require_observed_columns()?;
    let (p, q) = (train.p(), train.q());
    if valid.x.ncols() != p || valid.y.ncols() != q {
        return Err(CovMtError::Dimension("validation data does not match training data".into()));
    }
    let columns: Vec<Result<(DVector<f64>, Option<(f64, f64)>)>> = (0..q)
        .into_par_iter()
        .map(|k| {
            let rows = column_rows(train, k);
            if rows.len() < 2 {
                return Err(CovMtError::InvalidData(format!("response column {k} has fewer than 2 observed training values")));
            }
            let xk = train.x().select_rows(rows.iter());
            let yk = DVector::from_iterator(rows.len(), rows.iter().map(|&i| train.y()[(i, k)]));
            let vrows: Vec<usize> = (0..valid.y.nrows()).filter(|&i| valid.observed[(i, k)]).collect();
            if vrows.is_empty() {
                return Ok((DVector::zeros(p), None));
            }
            let xv = valid.x.select_rows(vrows.iter());
            let yv = DVector::from_iterator(vrows.len(), vrows.iter().map(|&i| valid.y[(i, k)]));
            let denom = yv.norm_squared();
            let xty = xk.tr_mul(&yk).amax() / rows.len() as f64;

            let mut best: Option<(f64, f64, f64, DVector<f64>)> = None; // (score, lambda, alpha, b)
            for &alpha in &grid.alphas {
                let lambda_max = xty / alpha.max(1e-3);
                let mut b = DVector::zeros(p);
                for lambda in log_path(lambda_max, grid.n_lambda, grid.lambda_ratio) {
                    b = elastic_net_column(&xk, &yk, lambda, alpha, &b, cfg.prox_tol, cfg.max_prox_iters);
                    let sse = (&yv - &xv * &b).norm_squared();
                    let score = if denom > 0.0 { 1.0 - sse / denom } else { -sse };
                    let better = match &best {
                        None => true,
                        Some((s, l, a, _)) => score > *s || (score == *s && (lambda > *l || (lambda == *l && alpha > *a))),
                    };
                    if better {
                        best = Some((score, lambda, alpha, b.clone()));
                    }
                }
            }
            let (_, lambda, alpha, b) = best.expect("grid is non-empty");
            Ok((b, Some((lambda, alpha))))
        })
        .collect();

    let mut beta = DMatrix::zeros(p, q);
    let mut chosen = Vec::with_capacity(q);
    let mut flagged = Vec::new();
    for (k, col) in columns.into_iter().enumerate() {
        let (b, choice) = col?;
        if choice.is_none() {
            flagged.push(k);
        }
        beta.set_column(k, &b);
        chosen.push(choice);
    }
    Ok(EnFit { beta, chosen, flagged })
}

/// Fills each missing entry with the inverse-distance weighted mean of the `k`
/// nearest subjects observing that column.
///
/// Distances use the columns both subjects observe: root mean squared
/// difference over the shared columns. Ties are broken by subject index. Zero
/// distances give the exact matches equal weight and exclude the rest. With
/// no usable neighbour the observed column mean is used.
pub fn knn_impute(data: &DataSet, k: usize) -> Result<DMatrix<f64>> {
    if k == 0 {
        return Err(CovMtError::InvalidConfig("k must be >= 1".into()));
    }
    data.require_observed_columns()?;
    let n = data.n();
    let y = data.y();
    let means = data.observed_column_means();
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let missing = data.missing_indices(i);
            if missing.is_empty() {
                return Vec::new();
            }
            let own = data.observed_indices(i);
            let dist: Vec<Option<f64>> = (0..n)
                .map(|c| {
                    if c == i {
                        return None;
                    }
                    let mut ss = 0.0;
                    let mut shared = 0usize;
                    for &col in own {
                        if data.is_observed(c, col) {
                            let d = y[(i, col)] - y[(c, col)];
                            ss += d * d;
                            shared += 1;
                        }
                    }
                    (shared > 0).then(|| (ss / shared as f64).sqrt())
                })
                .collect();
            missing
                .iter()
                .map(|&j| {
                    let mut cands: Vec<(f64, usize)> = (0..n)
                        .filter(|&c| data.is_observed(c, j))
                        .filter_map(|c| dist[c].map(|d| (d, c)))
                        .collect();
                    if cands.is_empty() {
                        return (j, means[j]);
                    }
                    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    cands.truncate(k);
                    let exact: Vec<usize> = cands.iter().filter(|(d, _)| *d == 0.0).map(|&(_, c)| c).collect();
                    let value = if !exact.is_empty() {
                        exact.iter().map(|&c| y[(c, j)]).sum::<f64>() / exact.len() as f64
                    } else {
                        let wsum: f64 = cands.iter().map(|(d, _)| 1.0 / d).sum();
                        cands.iter().map(|&(d, c)| y[(c, j)] / d).sum::<f64>() / wsum
                    };
                    (j, value)
                })
                .collect()
        })
        .collect();

    let mut out = data.y().clone();
    for (i, fills) in rows.into_iter().enumerate() {
        for (j, v) in fills {
            out[(i, j)] = v;
        }
    }
    debug_assert!(out.iter().all(|v| v.is_finite()));
    Ok(out)
}
