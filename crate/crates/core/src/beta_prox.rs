//! Coefficient update: accelerated proximal gradient on a smooth quadratic
//! loss plus the sparse group penalty.

use nalgebra::DMatrix;

use crate::error::{CovMtError, Result};
use crate::linalg;
use crate::model::{penalty_beta, PenaltyConfig, SolverConfig, StepSizeRule};

/// A smooth convex loss in the coefficients whose evaluation goes through a
/// linear image of the coefficients (`cache`), so that the image of a momentum
/// extrapolation can be formed without another large product.
pub trait SmoothLoss {
    fn shape(&self) -> (usize, usize);
    fn cache(&self, beta: &DMatrix<f64>) -> DMatrix<f64>;
    fn value(&self, beta: &DMatrix<f64>, cache: &DMatrix<f64>) -> f64;
    fn gradient(&self, beta: &DMatrix<f64>, cache: &DMatrix<f64>) -> DMatrix<f64>;
    /// Upper bound on the Lipschitz constant of the gradient.
    fn lipschitz(&self) -> f64;
    /// Cheap lower bound used as the optimistic start for backtracking.
    fn lipschitz_lower(&self) -> f64;
}

/// Cross products of the design, reusable across coefficient solves that
/// share one design matrix.
#[derive(Debug, Clone)]
pub struct Gram {
    pub n: usize,
    pub xtx: DMatrix<f64>,
    pub lambda_max: f64,
}

impl Gram {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let xtx = linalg::symmetrize(&x.tr_mul(x));
        let lambda_max = linalg::largest_eigenvalue(&xtx, 50, 1e-8);
        Self {
            n: x.nrows(),
            xtx,
            lambda_max,
        }
    }
}

/// The weighted residual sum of squares
/// `h(beta) = tr{(Ybar - X beta) Omega (Ybar - X beta)'} / n`
/// together with its penalty.
#[derive(Debug, Clone)]
pub struct BetaProblem<'a> {
    pub gram: &'a Gram,
    pub xty: DMatrix<f64>,
    pub omega: &'a DMatrix<f64>,
    pub pen: PenaltyConfig,
    pub cfg: &'a SolverConfig,
    const_term: f64,
    omega_lambda_max: f64,
}

impl<'a> BetaProblem<'a> {
    pub fn new(
        gram: &'a Gram,
        x: &DMatrix<f64>,
        ybar: &DMatrix<f64>,
        omega: &'a DMatrix<f64>,
        pen: PenaltyConfig,
        cfg: &'a SolverConfig,
    ) -> Result<Self> {
        if x.nrows() != ybar.nrows() || x.ncols() != gram.xtx.nrows() || omega.nrows() != ybar.ncols() || omega.ncols() != ybar.ncols() {
            return Err(CovMtError::Dimension("coefficient problem dimensions are inconsistent".into()));
        }
        if ybar.iter().any(|v| !v.is_finite()) {
            return Err(CovMtError::InvalidData("completed responses contain non-finite values".into()));
        }
        let const_term = (ybar.tr_mul(ybar)).component_mul(omega).sum();
        Ok(Self {
            gram,
            xty: x.tr_mul(ybar),
            omega,
            pen,
            cfg,
            const_term,
            omega_lambda_max: linalg::largest_eigenvalue(omega, 50, 1e-8),
        })
    }

    pub fn n(&self) -> usize {
        self.gram.n
    }
}

impl SmoothLoss for BetaProblem<'_> {
    fn shape(&self) -> (usize, usize) {
        self.xty.shape()
    }

    fn cache(&self, beta: &DMatrix<f64>) -> DMatrix<f64> {
        &self.gram.xtx * beta
    }

    fn value(&self, beta: &DMatrix<f64>, xtx_beta: &DMatrix<f64>) -> f64 {
        let b_omega = beta * self.omega;
        let cross = self.xty.component_mul(&b_omega).sum();
        let quad = xtx_beta.component_mul(&b_omega).sum();
        (self.const_term - 2.0 * cross + quad) / self.n() as f64
    }

    fn gradient(&self, _beta: &DMatrix<f64>, xtx_beta: &DMatrix<f64>) -> DMatrix<f64> {
        (xtx_beta - &self.xty) * self.omega * (2.0 / self.n() as f64)
    }

    fn lipschitz(&self) -> f64 {
        2.0 / self.n() as f64 * self.gram.lambda_max * self.omega_lambda_max
    }

    fn lipschitz_lower(&self) -> f64 {
        let dx = self.gram.xtx.diagonal().max();
        let dw = self.omega.diagonal().max();
        2.0 / self.n() as f64 * dx * dw
    }
}

/// Gradient of the smooth part at `beta`.
pub fn grad_h(beta: &DMatrix<f64>, loss: &impl SmoothLoss) -> DMatrix<f64> {
    loss.gradient(beta, &loss.cache(beta))
}

pub fn h_value(beta: &DMatrix<f64>, loss: &impl SmoothLoss) -> f64 {
    loss.value(beta, &loss.cache(beta))
}

/// Closed-form proximal map of `t_l1 |.|_1 + t_group sum_j |row_j|_2`:
/// entrywise soft-thresholding followed by row-wise group shrinkage.
pub fn sparse_group_prox(delta: &DMatrix<f64>, t_l1: f64, t_group: f64) -> DMatrix<f64> {
    let mut out = delta.map(|v| linalg::soft_threshold(v, t_l1));
    if t_group > 0.0 {
        for mut row in out.row_iter_mut() {
            let norm = row.norm();
            let scale = if norm > 0.0 { (1.0 - t_group / norm).max(0.0) } else { 0.0 };
            row *= scale;
        }
    }
    out
}

fn prox_step(point: &DMatrix<f64>, grad: &DMatrix<f64>, gamma: f64, pen: &PenaltyConfig) -> DMatrix<f64> {
    let delta = point - grad * gamma;
    let t = gamma * pen.lambda_beta;
    sparse_group_prox(&delta, t * pen.alpha, t * (1.0 - pen.alpha))
}

/// Smallest lambda at which the zero matrix is optimal, given the negative
/// gradient of the loss at zero.
pub fn null_lambda(neg_grad_at_zero: &DMatrix<f64>, alpha: f64) -> f64 {
    let mut best = 0.0f64;
    for row in neg_grad_at_zero.row_iter() {
        let amax = row.amax();
        if amax == 0.0 {
            continue;
        }
        let lam = if alpha >= 1.0 {
            amax
        } else if alpha <= 0.0 {
            row.norm()
        } else {
            // |soft(g, lam*alpha)|_2 - lam*(1 - alpha) is decreasing in lam
            let excess = |lam: f64| {
                row.iter().map(|g| linalg::soft_threshold(*g, lam * alpha).powi(2)).sum::<f64>().sqrt() - lam * (1.0 - alpha)
            };
            let (mut lo, mut hi) = (0.0, amax / alpha);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if excess(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        };
        best = best.max(lam);
    }
    best
}

#[derive(Debug, Clone)]
pub struct ProxSolution {
    pub beta: DMatrix<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub step_size: f64,
    /// Penalized objective after every accepted iterate, starting with the
    /// initial point.
    pub objective_trace: Vec<f64>,
}

/// Fixed-point residual `|b - prox(b - gamma grad h(b))|_F / max(1, |b|_F)`.
pub fn fixed_point_residual(loss: &impl SmoothLoss, pen: &PenaltyConfig, beta: &DMatrix<f64>, gamma: f64) -> f64 {
    let cache = loss.cache(beta);
    let next = prox_step(beta, &loss.gradient(beta, &cache), gamma, pen);
    (beta - next).norm() / beta.norm().max(1.0)
}

fn penalized(loss_value: f64, beta: &DMatrix<f64>, pen: &PenaltyConfig) -> f64 {
    if pen.lambda_beta == 0.0 {
        loss_value
    } else {
        loss_value + pen.lambda_beta * penalty_beta(beta, pen.alpha)
    }
}

/// Accelerated proximal gradient with objective-based momentum restart.
///
/// A momentum candidate that raises the penalized objective is discarded and
/// momentum is reset. Plain proximal steps are accepted when any increase is
/// within 1e-12 relative rounding of the cached objective.
pub fn accelerated_prox_grad(
    loss: &impl SmoothLoss,
    pen: &PenaltyConfig,
    cfg: &SolverConfig,
    init: &DMatrix<f64>,
) -> Result<ProxSolution> {
    pen.validate()?;
    if init.shape() != loss.shape() {
        return Err(CovMtError::Dimension(format!(
            "initial coefficients are {:?}, expected {:?}",
            init.shape(),
            loss.shape()
        )));
    }
    let (mut gamma, shrink) = match cfg.step_size_rule {
        StepSizeRule::FixedLipschitz => (1.0 / loss.lipschitz(), 0.5),
        StepSizeRule::Backtracking => (1.0 / loss.lipschitz_lower(), cfg.backtracking_shrink),
    };
    if !gamma.is_finite() || gamma <= 0.0 {
        // zero design or zero weights: the loss is constant
        gamma = 1.0;
    }

    let mut x = init.clone();
    let mut cache_x = loss.cache(&x);
    let mut h_x = loss.value(&x, &cache_x);
    let mut f_x = penalized(h_x, &x, pen);
    let mut y = x.clone();
    let mut cache_y = cache_x.clone();
    let mut h_y = h_x;
    let mut y_is_x = true;
    let mut t = 1.0f64;
    let mut trace = vec![f_x];
    let mut residual = f64::INFINITY;

    for iter in 1..=cfg.max_prox_iters {
        let g_y = loss.gradient(&y, &cache_y);
        let (z, cache_z, h_z) = loop {
            let z = prox_step(&y, &g_y, gamma, pen);
            let cache_z = loss.cache(&z);
            let h_z = loss.value(&z, &cache_z);
            let d = &z - &y;
            let bound = h_y + g_y.dot(&d) + d.norm_squared() / (2.0 * gamma);
            if h_z <= bound + 1e-12 * h_y.abs().max(1.0) || gamma < 1e-300 {
                break (z, cache_z, h_z);
            }
            gamma *= shrink;
        };
        let f_z = penalized(h_z, &z, pen);
        let step = (&z - &y).norm() / z.norm().max(1.0);

        let rounding = 1e-12 * f_x.abs().max(1.0);
        if f_z > f_x && !y_is_x {
            t = 1.0;
            y = x.clone();
            cache_y = cache_x.clone();
            h_y = h_x;
            y_is_x = true;
            continue;
        }
        if f_z > f_x + rounding {
            // a plain proximal step cannot increase the objective beyond rounding
            residual = fixed_point_residual(loss, pen, &x, gamma);
            if residual <= cfg.prox_tol {
                return Ok(ProxSolution {
                    beta: x,
                    iterations: iter,
                    residual,
                    step_size: gamma,
                    objective_trace: trace,
                });
            }
            return Err(CovMtError::BetaNotConverged {
                beta: Box::new(x),
                iterations: iter,
                residual,
            });
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        y = &z + (&z - &x) * momentum;
        cache_y = &cache_z + (&cache_z - &cache_x) * momentum;
        h_y = if momentum == 0.0 { h_z } else { loss.value(&y, &cache_y) };
        y_is_x = momentum == 0.0;
        x = z;
        cache_x = cache_z;
        h_x = h_z;
        f_x = f_z;
        t = t_next;
        trace.push(f_x);

        if step <= cfg.prox_tol {
            residual = fixed_point_residual(loss, pen, &x, gamma);
            if residual <= cfg.prox_tol {
                return Ok(ProxSolution {
                    beta: x,
                    iterations: iter,
                    residual,
                    step_size: gamma,
                    objective_trace: trace,
                });
            }
        }
    }
    if !residual.is_finite() {
        residual = fixed_point_residual(loss, pen, &x, gamma);
    }
    if residual <= cfg.prox_tol {
        return Ok(ProxSolution {
            beta: x,
            iterations: cfg.max_prox_iters,
            residual,
            step_size: gamma,
            objective_trace: trace,
        });
    }
    Err(CovMtError::BetaNotConverged {
        beta: Box::new(x),
        iterations: cfg.max_prox_iters,
        residual,
    })
}

/// Minimizes the penalized weighted residual sum of squares from `beta_init`.
pub fn solve_beta(prob: &BetaProblem, beta_init: &DMatrix<f64>) -> Result<ProxSolution> {
    accelerated_prox_grad(prob, &prob.pen, prob.cfg, beta_init)
}

/// h(beta) + lambda_beta * P(beta) for the coefficient problem.
pub fn beta_objective(prob: &BetaProblem, beta: &DMatrix<f64>) -> f64 {
    penalized(h_value(beta, prob), beta, &prob.pen)
}
