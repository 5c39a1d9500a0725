//! Validation-set grid search and the rotating k-fold protocol.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_en, fit_mt, knn_impute, mt_null_lambda, EnGrid, Holdout};
use crate::beta_prox::{null_lambda, Gram};
use crate::ecm::{fit_covmt_with_gram, initial_fit, EcmTrace};
use crate::error::{CovMtError, Result};
use crate::estep::build_estep_stats;
use crate::metrics::{ld_adjusted_tpr, model_size, r2_from_predictions, MetricReport};
use crate::model::{DataSet, Mask, ModelFit, PenaltyConfig, SolverConfig, Standardizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Joint coefficients and precision by penalized ECM.
    Covmt,
    /// Identity-precision multi-task criterion on observed entries.
    Mt,
    /// Tissue-by-tissue elastic net.
    En,
    /// Nearest-neighbour imputation followed by the complete-data multi-task fit.
    Knnmt,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Covmt => "covmt",
            Method::Mt => "mt",
            Method::En => "en",
            Method::Knnmt => "knnmt",
        };
        f.write_str(s)
    }
}

impl FromStr for Method {
    type Err = CovMtError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "covmt" | "cov-mt" => Ok(Method::Covmt),
            "mt" => Ok(Method::Mt),
            "en" => Ok(Method::En),
            "knnmt" | "knn-mt" => Ok(Method::Knnmt),
            other => Err(CovMtError::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaBetaGrid {
    Explicit(Vec<f64>),
    /// `n` log-spaced values from the null threshold down to `ratio` times it.
    Path { n: usize, ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub alphas: Vec<f64>,
    pub lambda_beta: LambdaBetaGrid,
    pub lambda_omegas: Vec<f64>,
    pub knn_k: usize,
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self {
            alphas: vec![0.25, 0.5, 0.75, 1.0],
            lambda_beta: LambdaBetaGrid::Path { n: 20, ratio: 1e-3 },
            lambda_omegas: vec![0.01, 0.05, 0.1, 0.2, 0.4],
            knn_k: 20,
        }
    }
}

impl TuningGrid {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CovMtError::InvalidConfig(m.to_string()));
        if self.alphas.is_empty() || self.lambda_omegas.is_empty() {
            return bad("tuning grids must be non-empty");
        }
        if self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return bad("alpha values must lie in [0, 1]");
        }
        if self.lambda_omegas.iter().any(|l| !(*l >= 0.0)) {
            return bad("lambda_omega values must be >= 0");
        }
        match &self.lambda_beta {
            LambdaBetaGrid::Explicit(v) if v.is_empty() || v.iter().any(|l| !(*l >= 0.0)) => {
                bad("lambda_beta values must be non-empty and >= 0")
            }
            LambdaBetaGrid::Path { n, ratio } if *n == 0 || !(*ratio > 0.0 && *ratio <= 1.0) => {
                bad("lambda_beta path needs n >= 1 and ratio in (0, 1]")
            }
            _ if self.knn_k == 0 => bad("knn_k must be >= 1"),
            _ => Ok(()),
        }
    }

    /// Descending lambda_beta values for one alpha given the null threshold.
    fn lambda_betas(&self, lambda_max: f64) -> Vec<f64> {
        let mut v = match &self.lambda_beta {
            LambdaBetaGrid::Explicit(v) => v.clone(),
            LambdaBetaGrid::Path { n, ratio } => crate::baselines::log_path(lambda_max, *n, *ratio),
        };
        v.sort_by(|a, b| b.total_cmp(a));
        v.dedup();
        v
    }

    fn en_grid(&self) -> EnGrid {
        let (n_lambda, lambda_ratio) = match &self.lambda_beta {
            LambdaBetaGrid::Path { n, ratio } => (*n, *ratio),
            LambdaBetaGrid::Explicit(v) => (v.len().max(1), 1e-3),
        };
        EnGrid {
            alphas: self.alphas.clone(),
            n_lambda,
            lambda_ratio,
        }
    }
}

/// Raw-scale data with disjoint training and validation rows.
#[derive(Debug, Clone, Copy)]
pub struct SplitData<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a DMatrix<f64>,
    pub observed: &'a Mask,
    pub train: &'a [usize],
    pub valid: &'a [usize],
}

/// A tuned model on the standardized scale plus everything needed to predict
/// on the raw scale.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub method: Method,
    pub beta: DMatrix<f64>,
    pub omega: Option<DMatrix<f64>>,
    pub standardizer: Standardizer,
    pub penalty: Option<PenaltyConfig>,
    pub trace: Option<EcmTrace>,
    pub en_choices: Option<Vec<Option<(f64, f64)>>>,
    pub validation_r2: f64,
}

impl FittedModel {
    pub fn predict_raw(&self, x_raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.standardizer.predict_raw(&self.beta, x_raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub alpha: f64,
    pub lambda_beta: f64,
    pub lambda_omega: f64,
    pub validation_r2: Option<f64>,
    pub model_size: Option<f64>,
    pub iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: FittedModel,
    pub best_row: GridRow,
    pub table: Vec<GridRow>,
}

struct Prepared {
    standardizer: Standardizer,
    train: DataSet,
    x_valid: DMatrix<f64>,
    y_valid: DMatrix<f64>,
    mask_valid: Mask,
}

fn prepare(split: &SplitData) -> Result<Prepared> {
    if split.train.iter().any(|i| split.valid.contains(i)) {
        return Err(CovMtError::InvalidConfig("training and validation rows overlap".into()));
    }
    let x_tr = split.x.select_rows(split.train.iter());
    let y_tr = split.y.select_rows(split.train.iter());
    let m_tr = Mask::from_fn(split.train.len(), split.y.ncols(), |i, k| split.observed[(split.train[i], k)]);
    let standardizer = Standardizer::fit(&x_tr, &y_tr, &m_tr, None, None)?;
    let train = standardizer.dataset(&x_tr, &y_tr, &m_tr)?;
    Ok(Prepared {
        x_valid: split.x.select_rows(split.valid.iter()),
        y_valid: split.y.select_rows(split.valid.iter()),
        mask_valid: Mask::from_fn(split.valid.len(), split.y.ncols(), |i, k| split.observed[(split.valid[i], k)]),
        standardizer,
        train,
    })
}

fn validation_score(prep: &Prepared, beta: &DMatrix<f64>) -> Result<f64> {
    let pred = prep.standardizer.predict_raw(beta, &prep.x_valid)?;
    Ok(r2_from_predictions(&pred, &prep.y_valid, Some(&prep.mask_valid), &prep.standardizer.y_mean)?.average)
}

struct Candidate {
    row: GridRow,
    beta: DMatrix<f64>,
    omega: Option<DMatrix<f64>>,
    trace: Option<EcmTrace>,
}

fn failed_row(alpha: f64, lambda_beta: f64, lambda_omega: f64, err: &CovMtError) -> GridRow {
    GridRow {
        alpha,
        lambda_beta,
        lambda_omega,
        validation_r2: None,
        model_size: None,
        iterations: 0,
        error: Some(err.to_string()),
    }
}

fn covmt_path(prep: &Prepared, gram: &Gram, alpha: f64, lambda_omega: f64, grid: &TuningGrid, cfg: &SolverConfig) -> Vec<(GridRow, Option<Candidate>)> {
    let data = &prep.train;
    let start = match initial_fit(data) {
        Ok(f) => f,
        Err(e) => return vec![(failed_row(alpha, f64::NAN, lambda_omega, &e), None)],
    };
    let lambda_max = match build_estep_stats(&start, data) {
        Ok(stats) => {
            let g = data.x().tr_mul(&stats.ybar) * &start.omega * (2.0 / data.n() as f64);
            null_lambda(&g, alpha)
        }
        Err(e) => return vec![(failed_row(alpha, f64::NAN, lambda_omega, &e), None)],
    };
    let mut warm: Option<ModelFit> = None;
    let mut out = Vec::new();
    for lambda_beta in grid.lambda_betas(lambda_max) {
        let pen = PenaltyConfig {
            alpha,
            lambda_beta,
            lambda_omega,
        };
        let result = fit_covmt_with_gram(data, gram, &pen, cfg, warm.as_ref()).and_then(|(fit, trace)| {
            let score = validation_score(prep, &fit.beta)?;
            Ok((fit, trace, score))
        });
        match result {
            Ok((fit, trace, score)) => {
                let row = GridRow {
                    alpha,
                    lambda_beta,
                    lambda_omega,
                    validation_r2: Some(score),
                    model_size: Some(model_size(&fit.beta)),
                    iterations: trace.iterations(),
                    error: None,
                };
                out.push((
                    row.clone(),
                    Some(Candidate {
                        row,
                        beta: fit.beta.clone(),
                        omega: Some(fit.omega.clone()),
                        trace: Some(trace),
                    }),
                ));
                warm = Some(fit);
            }
            Err(e) => out.push((failed_row(alpha, lambda_beta, lambda_omega, &e), None)),
        }
    }
    out
}

fn mt_path(prep: &Prepared, data: &DataSet, alpha: f64, grid: &TuningGrid, cfg: &SolverConfig) -> Vec<(GridRow, Option<Candidate>)> {
    let lambda_max = mt_null_lambda(data, alpha);
    let mut warm: Option<DMatrix<f64>> = None;
    let mut out = Vec::new();
    for lambda_beta in grid.lambda_betas(lambda_max) {
        let pen = PenaltyConfig {
            alpha,
            lambda_beta,
            lambda_omega: 0.0,
        };
        let fitted = match fit_mt(data, &pen, cfg, warm.as_ref()) {
            Ok(sol) => Ok((sol.beta, sol.iterations)),
            Err(CovMtError::BetaNotConverged { beta, iterations, .. }) => Ok((*beta, iterations)),
            Err(e) => Err(e),
        };
        match fitted.and_then(|(beta, it)| Ok((validation_score(prep, &beta)?, beta, it))) {
            Ok((score, beta, iterations)) => {
                let row = GridRow {
                    alpha,
                    lambda_beta,
                    lambda_omega: 0.0,
                    validation_r2: Some(score),
                    model_size: Some(model_size(&beta)),
                    iterations,
                    error: None,
                };
                out.push((
                    row.clone(),
                    Some(Candidate {
                        row,
                        beta: beta.clone(),
                        omega: None,
                        trace: None,
                    }),
                ));
                warm = Some(beta);
            }
            Err(e) => out.push((failed_row(alpha, lambda_beta, 0.0, &e), None)),
        }
    }
    out
}

/// Orders candidates best first: higher validation R^2, then the sparser
/// end of the grid (larger lambda_beta, alpha, lambda_omega).
fn better(a: &GridRow, b: &GridRow) -> bool {
    let ra = a.validation_r2.unwrap_or(f64::NEG_INFINITY);
    let rb = b.validation_r2.unwrap_or(f64::NEG_INFINITY);
    (ra, a.lambda_beta, a.alpha, a.lambda_omega)
        .partial_cmp(&(rb, b.lambda_beta, b.alpha, b.lambda_omega))
        .map_or(false, |o| o == std::cmp::Ordering::Greater)
}

/// Fits every grid point on the training rows and keeps the one with the
/// best validation R^2 averaged over responses.
pub fn grid_search(split: &SplitData, method: Method, grid: &TuningGrid, cfg: &SolverConfig) -> Result<GridResult> {
    grid.validate()?;
    cfg.validate()?;
    let prep = prepare(split)?;

    if method == Method::En {
        let x_valid_std = prep.standardizer.transform_x(&prep.x_valid)?;
        let y_valid_std = prep.standardizer.transform_y(&prep.y_valid)?;
        let holdout = Holdout {
            x: &x_valid_std,
            y: &y_valid_std,
            observed: &prep.mask_valid,
        };
        let en = fit_en(&prep.train, &holdout, &grid.en_grid(), cfg)?;
        let score = validation_score(&prep, &en.beta)?;
        let row = GridRow {
            alpha: f64::NAN,
            lambda_beta: f64::NAN,
            lambda_omega: f64::NAN,
            validation_r2: Some(score),
            model_size: Some(model_size(&en.beta)),
            iterations: 0,
            error: None,
        };
        return Ok(GridResult {
            best: FittedModel {
                method,
                beta: en.beta,
                omega: None,
                standardizer: prep.standardizer,
                penalty: None,
                trace: None,
                en_choices: Some(en.chosen),
                validation_r2: score,
            },
            best_row: row.clone(),
            table: vec![row],
        });
    }

    let paths: Vec<Vec<(GridRow, Option<Candidate>)>> = match method {
        Method::Covmt => {
            let gram = Gram::new(prep.train.x());
            let groups: Vec<(f64, f64)> = grid
                .alphas
                .iter()
                .flat_map(|&a| grid.lambda_omegas.iter().map(move |&l| (a, l)))
                .collect();
            groups
                .par_iter()
                .map(|&(a, l)| covmt_path(&prep, &gram, a, l, grid, cfg))
                .collect()
        }
        Method::Mt => grid.alphas.par_iter().map(|&a| mt_path(&prep, &prep.train, a, grid, cfg)).collect(),
        Method::Knnmt => {
            let completed = knn_impute(&prep.train, grid.knn_k)?;
            let full = DataSet::complete(prep.train.x().clone(), completed)?;
            grid.alphas.par_iter().map(|&a| mt_path(&prep, &full, a, grid, cfg)).collect()
        }
        Method::En => unreachable!(),
    };

    let mut table = Vec::new();
    let mut best: Option<Candidate> = None;
    for (row, cand) in paths.into_iter().flatten() {
        table.push(row);
        if let Some(c) = cand {
            if best.as_ref().map_or(true, |b| better(&c.row, &b.row)) {
                best = Some(c);
            }
        }
    }
    let best = best.ok_or_else(|| {
        CovMtError::AllGridPointsFailed(
            table
                .iter()
                .map(|r| format!("alpha={} lambda_beta={} lambda_omega={}: {}", r.alpha, r.lambda_beta, r.lambda_omega, r.error.clone().unwrap_or_default()))
                .collect(),
        )
    })?;
    let validation_r2 = best.row.validation_r2.unwrap_or(f64::NAN);
    Ok(GridResult {
        best_row: best.row.clone(),
        best: FittedModel {
            method,
            penalty: Some(PenaltyConfig {
                alpha: best.row.alpha,
                lambda_beta: best.row.lambda_beta,
                lambda_omega: best.row.lambda_omega,
            }),
            beta: best.beta,
            omega: best.omega,
            standardizer: prep.standardizer,
            trace: best.trace,
            en_choices: None,
            validation_r2,
        },
        table,
    })
}

/// Seeded assignment of subjects to `folds` folds of near-equal size.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assign = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assign[i] = pos % folds;
    }
    assign
}

#[derive(Debug, Clone)]
pub struct CvFold {
    pub fold: usize,
    pub validation_fold: usize,
    pub test_rows: Vec<usize>,
    /// Raw-scale predictions for `test_rows`.
    pub predictions: DMatrix<f64>,
    /// Training means of each response (raw scale, observed entries).
    pub train_means: Vec<f64>,
    pub selected: GridRow,
    pub report: MetricReport,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub method: Method,
    pub folds: Vec<CvFold>,
    /// Mean over folds of the per-fold averaged test R^2.
    pub average_r2: f64,
}

/// Each fold serves once as the test fold; the next fold (cyclically) is the
/// validation fold and the remaining folds train.
#[allow(clippy::too_many_arguments)]
pub fn kfold_cv(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    observed: &Mask,
    method: Method,
    grid: &TuningGrid,
    folds: usize,
    cfg: &SolverConfig,
    support: Option<&Mask>,
) -> Result<CvReport> {
    let n = y.nrows();
    if folds < 3 || folds > n {
        return Err(CovMtError::InvalidConfig(format!("folds must lie in [3, n], got {folds}")));
    }
    let assign = fold_assignment(n, folds, cfg.seed);
    let results: Vec<Result<CvFold>> = (0..folds)
        .into_par_iter()
        .map(|t| {
            let v = (t + 1) % folds;
            let rows = |f: usize| (0..n).filter(|&i| assign[i] == f).collect::<Vec<_>>();
            let test_rows = rows(t);
            let valid = rows(v);
            let train: Vec<usize> = (0..n).filter(|&i| assign[i] != t && assign[i] != v).collect();
            let split = SplitData {
                x,
                y,
                observed,
                train: &train,
                valid: &valid,
            };
            let tuned = grid_search(&split, method, grid, cfg)?;
            let x_test = x.select_rows(test_rows.iter());
            let y_test = y.select_rows(test_rows.iter());
            let m_test = Mask::from_fn(test_rows.len(), y.ncols(), |i, k| observed[(test_rows[i], k)]);
            let predictions = tuned.best.predict_raw(&x_test)?;
            let r2 = r2_from_predictions(&predictions, &y_test, Some(&m_test), &tuned.best.standardizer.y_mean)?;
            let ld_tpr = match support {
                Some(s) => Some(ld_adjusted_tpr(&tuned.best.beta, s, x, 0.6)?),
                None => None,
            };
            Ok(CvFold {
                fold: t,
                validation_fold: v,
                report: MetricReport {
                    label: format!("fold{t}"),
                    r2,
                    ld_tpr,
                    model_size: model_size(&tuned.best.beta),
                },
                train_means: tuned.best.standardizer.y_mean.clone(),
                test_rows,
                predictions,
                selected: tuned.best_row,
            })
        })
        .collect();
    let folds_out: Vec<CvFold> = results.into_iter().collect::<Result<_>>()?;
    let average_r2 = folds_out.iter().map(|f| f.report.r2.average).sum::<f64>() / folds_out.len() as f64;
    Ok(CvReport {
        method,
        folds: folds_out,
        average_r2,
    })
}
