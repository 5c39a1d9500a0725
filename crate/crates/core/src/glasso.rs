//! L1-penalized Gaussian precision estimation by blockwise coordinate descent
//! on the covariance (the classical graphical-lasso scheme).

use nalgebra::DMatrix;

use crate::error::{CovMtError, Result};
use crate::linalg;

#[derive(Debug, Clone)]
pub struct GlassoProblem {
    pub s: DMatrix<f64>,
    pub lambda_omega: f64,
    pub penalize_diagonal: bool,
    pub tol: f64,
    pub max_iters: usize,
}

impl GlassoProblem {
    pub fn new(s: DMatrix<f64>, lambda_omega: f64, penalize_diagonal: bool) -> Self {
        Self {
            s,
            lambda_omega,
            penalize_diagonal,
            tol: 1e-6,
            max_iters: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlassoSolution {
    pub omega: DMatrix<f64>,
    /// Exact inverse of `omega`.
    pub sigma: DMatrix<f64>,
    pub sweeps: usize,
    pub kkt_residual: f64,
}

/// tr(S Omega) - log det Omega + lambda * sum |omega_jk|.
pub fn glasso_objective(s: &DMatrix<f64>, omega: &DMatrix<f64>, lambda: f64, penalize_diagonal: bool) -> Result<f64> {
    let chol = linalg::cholesky(omega.clone(), "precision matrix")?;
    let trace = s.component_mul(omega).sum();
    Ok(trace - linalg::log_det(&chol) + lambda * crate::model::penalty_omega(omega, penalize_diagonal))
}

/// Largest violation of the optimality conditions of the penalized problem.
pub fn kkt_residual(s: &DMatrix<f64>, omega: &DMatrix<f64>, sigma: &DMatrix<f64>, lambda: f64, penalize_diagonal: bool) -> f64 {
    let q = s.nrows();
    let mut worst = 0.0f64;
    for j in 0..q {
        for k in 0..q {
            let g = s[(j, k)] - sigma[(j, k)];
            let penalized = j != k || penalize_diagonal;
            let r = if !penalized {
                g.abs()
            } else if omega[(j, k)] != 0.0 {
                (g + lambda * omega[(j, k)].signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            worst = worst.max(r);
        }
    }
    worst
}

pub fn solve_glasso(prob: &GlassoProblem) -> Result<GlassoSolution> {
    let s = &prob.s;
    let q = s.nrows();
    let lambda = prob.lambda_omega;
    if q == 0 || s.ncols() != q {
        return Err(CovMtError::Dimension(format!("covariance must be square and non-empty, got {:?}", s.shape())));
    }
    if linalg::max_abs_diff(s, &s.transpose()) > 1e-10 * s.amax().max(1.0) {
        return Err(CovMtError::InvalidData("covariance input is not symmetric".into()));
    }
    if !(lambda >= 0.0) {
        return Err(CovMtError::InvalidConfig("lambda_omega must be >= 0".into()));
    }

    if lambda == 0.0 {
        let sigma = linalg::symmetrize(s);
        let omega = linalg::inverse_spd(&sigma, "covariance input")
            .map_err(|_| CovMtError::Unbounded("unpenalized precision estimate requires a positive-definite covariance".into()))?;
        return Ok(GlassoSolution {
            kkt_residual: kkt_residual(s, &omega, &sigma, 0.0, prob.penalize_diagonal),
            omega,
            sigma,
            sweeps: 0,
        });
    }

    let diag_shift = if prob.penalize_diagonal { lambda } else { 0.0 };
    for j in 0..q {
        if !(s[(j, j)] + diag_shift > 0.0) {
            return Err(CovMtError::Unbounded(format!("zero variance in coordinate {j} with an unpenalized diagonal")));
        }
    }

    // W starts at S + lambda I, which keeps every iterate positive definite; a
    // diagonal start can leave the cone and the inner lasso then diverges.
    // The diagonal start is only a fallback when S + lambda I is singular.
    let full = DMatrix::from_fn(q, q, |i, j| if i == j { s[(i, i)] + diag_shift } else { s[(i, j)] });
    let mut w = if full.clone().cholesky().is_some() {
        full
    } else {
        DMatrix::from_diagonal(&full.diagonal())
    };
    let mut coef = DMatrix::<f64>::zeros(q, q); // column j holds the lasso solution for j, row j unused
    let mut omega = precision_from(&w, &coef);
    let inner_tol = (prob.tol * 1e-4).max(1e-14);
    let inner_cap = 10_000;

    let mut sweeps = 0;
    let mut change = f64::INFINITY;
    while sweeps < prob.max_iters {
        sweeps += 1;
        for j in 0..q {
            // lasso: min 1/2 b' W11 b - s12' b + lambda |b|_1
            for _ in 0..inner_cap {
                let mut delta = 0.0f64;
                for k in 0..q {
                    if k == j {
                        continue;
                    }
                    let mut r = s[(k, j)];
                    for l in 0..q {
                        if l != j && l != k {
                            r -= w[(k, l)] * coef[(l, j)];
                        }
                    }
                    let updated = linalg::soft_threshold(r, lambda) / w[(k, k)];
                    delta = delta.max((updated - coef[(k, j)]).abs());
                    coef[(k, j)] = updated;
                }
                if delta <= inner_tol {
                    break;
                }
            }
            for k in 0..q {
                if k == j {
                    continue;
                }
                let mut v = 0.0;
                for l in 0..q {
                    if l != j {
                        v += w[(k, l)] * coef[(l, j)];
                    }
                }
                w[(k, j)] = v;
                w[(j, k)] = v;
            }
        }
        let next = precision_from(&w, &coef);
        change = linalg::max_abs_diff(&next, &omega);
        if !change.is_finite() {
            return Err(CovMtError::DegenerateCovariance(format!("graphical lasso diverged in sweep {sweeps}")));
        }
        omega = next;
        if change <= prob.tol {
            break;
        }
    }

    let omega = linalg::symmetrize(&omega);
    if change > prob.tol {
        return Err(CovMtError::GlassoNotConverged {
            omega: Box::new(omega),
            iterations: sweeps,
            residual: change,
        });
    }
    let sigma = linalg::inverse_spd(&omega, "graphical lasso precision")?;
    Ok(GlassoSolution {
        kkt_residual: kkt_residual(s, &omega, &sigma, lambda, prob.penalize_diagonal),
        omega,
        sigma,
        sweeps,
    })
}

/// Precision implied by the current covariance and regression coefficients.
fn precision_from(w: &DMatrix<f64>, coef: &DMatrix<f64>) -> DMatrix<f64> {
    let q = w.nrows();
    let mut omega = DMatrix::zeros(q, q);
    for j in 0..q {
        let mut explained = 0.0;
        for k in 0..q {
            if k != j {
                explained += w[(j, k)] * coef[(k, j)];
            }
        }
        let diag = 1.0 / (w[(j, j)] - explained);
        omega[(j, j)] = diag;
        for k in 0..q {
            if k != j {
                omega[(k, j)] = -coef[(k, j)] * diag;
            }
        }
    }
    omega
}
