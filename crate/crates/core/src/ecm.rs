//! Outer penalized expectation / conditional-maximization loop.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::beta_prox::{beta_objective, solve_beta, BetaProblem, Gram};
use crate::error::{CovMtError, Result};
use crate::estep::{build_estep_stats, EStepStats};
use crate::glasso::{glasso_objective, solve_glasso, GlassoProblem};
use crate::linalg;
use crate::model::{check_dims, penalized_objective, DataSet, ModelFit, PenaltyConfig, SolverConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EcmRecord {
    pub iteration: usize,
    /// Penalized observed-data objective after the iteration.
    pub objective: f64,
    pub beta_change: f64,
    pub omega_change: f64,
    pub estep_secs: f64,
    pub omega_step_secs: f64,
    pub beta_step_secs: f64,
    /// False when the precision update failed to lower the surrogate and the
    /// previous precision was kept.
    pub omega_step_accepted: bool,
    /// False when the coefficient solve stopped at its iteration cap.
    pub beta_step_converged: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EcmTrace {
    pub initial_objective: f64,
    pub records: Vec<EcmRecord>,
    pub converged: bool,
}

impl EcmTrace {
    pub fn objectives(&self) -> Vec<f64> {
        std::iter::once(self.initial_objective)
            .chain(self.records.iter().map(|r| r.objective))
            .collect()
    }

    pub fn final_objective(&self) -> f64 {
        self.records.last().map(|r| r.objective).unwrap_or(self.initial_objective)
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

/// Zero coefficients and a diagonal precision from the column variances of the
/// mean-filled responses.
pub fn initial_fit(data: &DataSet) -> Result<ModelFit> {
    data.require_observed_columns()?;
    let means = data.observed_column_means();
    let filled = data.y_filled(&means);
    let n = data.n();
    let omega = DMatrix::from_fn(data.q(), data.q(), |j, k| {
        if j != k {
            return 0.0;
        }
        let col = filled.column(j);
        let m = col.mean();
        let var = if n > 1 {
            col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        1.0 / var.max(1e-4)
    });
    ModelFit::new(DMatrix::zeros(data.p(), data.q()), omega)
}

/// Penalized ECM fit of coefficients and precision.
pub fn fit_covmt(
    data: &DataSet,
    pen: &PenaltyConfig,
    cfg: &SolverConfig,
    init: Option<&ModelFit>,
) -> Result<(ModelFit, EcmTrace)> {
    pen.validate()?;
    cfg.validate()?;
    let gram = Gram::new(data.x());
    fit_covmt_with_gram(data, &gram, pen, cfg, init)
}

pub fn fit_covmt_with_gram(
    data: &DataSet,
    gram: &Gram,
    pen: &PenaltyConfig,
    cfg: &SolverConfig,
    init: Option<&ModelFit>,
) -> Result<(ModelFit, EcmTrace)> {
    let mut fit = match init {
        Some(f) => f.clone(),
        None => initial_fit(data)?,
    };
    check_dims(&fit, data)?;
    data.require_observed_columns()?;
    let pen_diag = cfg.penalize_omega_diagonal;
    let mut objective = penalized_objective(&fit, data, pen, pen_diag)?;
    let mut trace = EcmTrace {
        initial_objective: objective,
        ..Default::default()
    };

    for iteration in 1..=cfg.max_ecm_iters {
        let t0 = Instant::now();
        let stats: EStepStats = build_estep_stats(&fit, data)?;
        let estep_secs = t0.elapsed().as_secs_f64();

        // precision step
        let t1 = Instant::now();
        let mut prob = GlassoProblem::new(stats.s.clone(), pen.lambda_omega, pen_diag);
        prob.tol = cfg.glasso_tol;
        prob.max_iters = cfg.glasso_max_iters;
        let candidate = match solve_glasso(&prob) {
            Ok(sol) => Some(sol.omega),
            Err(CovMtError::GlassoNotConverged { omega, .. }) => Some(*omega),
            Err(CovMtError::DegenerateCovariance(_)) => None,
            Err(e) => return Err(e),
        };
        let current_q = glasso_objective(&stats.s, &fit.omega, pen.lambda_omega, pen_diag)?;
        let mut omega_step_accepted = false;
        let mut omega_next = fit.omega.clone();
        if let Some(cand) = candidate {
            if let Ok(cand_q) = glasso_objective(&stats.s, &cand, pen.lambda_omega, pen_diag) {
                if cand_q <= current_q {
                    omega_next = cand;
                    omega_step_accepted = true;
                }
            }
        }
        let omega_step_secs = t1.elapsed().as_secs_f64();

        // coefficient step
        let t2 = Instant::now();
        let bprob = BetaProblem::new(gram, data.x(), &stats.ybar, &omega_next, *pen, cfg)?;
        let (mut beta_next, beta_step_converged) = match solve_beta(&bprob, &fit.beta) {
            Ok(sol) => (sol.beta, true),
            Err(CovMtError::BetaNotConverged { beta, .. }) => (*beta, false),
            Err(e) => return Err(e),
        };
        if beta_objective(&bprob, &beta_next) > beta_objective(&bprob, &fit.beta) {
            beta_next = fit.beta.clone();
        }
        let beta_step_secs = t2.elapsed().as_secs_f64();

        let next = ModelFit::new(beta_next, omega_next)?;
        let next_objective = penalized_objective(&next, data, pen, pen_diag)?;
        let record = EcmRecord {
            iteration,
            objective: next_objective,
            beta_change: (&next.beta - &fit.beta).norm(),
            omega_change: linalg::max_abs_diff(&next.omega, &fit.omega),
            estep_secs,
            omega_step_secs,
            beta_step_secs,
            omega_step_accepted,
            beta_step_converged,
        };
        trace.records.push(record);
        let change = (objective - next_objective).abs();
        let scale = objective.abs().max(1.0);
        fit = next;
        objective = next_objective;
        if change <= cfg.ecm_tol * scale {
            trace.converged = true;
            break;
        }
    }
    Ok((fit, trace))
}

/// Completed responses: observed values pass through, missing values become
/// conditional means. Also returns the conditional covariance of each
/// missingness pattern.
#[derive(Debug, Clone)]
pub struct Imputation {
    pub completed: DMatrix<f64>,
    pub pattern_covariances: Vec<(Vec<usize>, DMatrix<f64>)>,
}

pub fn impute(fit: &ModelFit, data: &DataSet) -> Result<Imputation> {
    let stats = build_estep_stats(fit, data)?;
    let pattern_covariances = data
        .patterns()
        .iter()
        .zip(stats.v)
        .map(|(pat, v)| (pat.missing.clone(), v))
        .collect();
    Ok(Imputation {
        completed: stats.ybar,
        pattern_covariances,
    })
}
