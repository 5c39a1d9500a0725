//! Conditional moments of the missing responses and the surrogate statistics
//! consumed by the two conditional-maximization steps.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{CovMtError, Result};
use crate::linalg;
use crate::model::{check_dims, DataSet, ModelFit};

#[derive(Debug, Clone)]
pub struct EStepStats {
    /// Conditional means of the missing responses, per subject, in the order
    /// of that subject's missing indices.
    pub mu: Vec<DVector<f64>>,
    /// Conditional covariance per missingness pattern (indexed like
    /// `DataSet::patterns`).
    pub v: Vec<DMatrix<f64>>,
    /// Responses with missing entries replaced by conditional means.
    pub ybar: DMatrix<f64>,
    /// Surrogate covariance: the average of the per-subject expected residual
    /// outer products.
    pub s: DMatrix<f64>,
}

/// Regression of missing on observed residuals for one pattern:
/// `gain = Sigma_mo Sigma_o^{-1}` and `V = Sigma_m - gain Sigma_om`.
fn pattern_gain(sigma: &DMatrix<f64>, o: &[usize], m: &[usize]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if o.is_empty() {
        return Err(CovMtError::InvalidData("subject with no observed responses".into()));
    }
    if m.is_empty() {
        return Ok((DMatrix::zeros(0, o.len()), DMatrix::zeros(0, 0)));
    }
    let chol = linalg::cholesky(linalg::submatrix(sigma, o, o), "observed covariance block")?;
    let sigma_om = linalg::submatrix(sigma, o, m);
    let gain = chol.solve(&sigma_om).transpose();
    let v = linalg::submatrix(sigma, m, m) - &gain * sigma_om;
    Ok((gain, linalg::symmetrize(&v)))
}

/// Mean and covariance of the missing responses of one subject given its
/// observed responses.
pub fn conditional_moments(
    fit: &ModelFit,
    x_i: &DVector<f64>,
    y_obs: &DVector<f64>,
    o: &[usize],
    m: &[usize],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if x_i.len() != fit.p() || y_obs.len() != o.len() {
        return Err(CovMtError::Dimension("subject vectors do not match the fit".into()));
    }
    let (gain, v) = pattern_gain(&fit.sigma, o, m)?;
    let xb = fit.beta.tr_mul(x_i);
    let r_o = DVector::from_iterator(o.len(), o.iter().enumerate().map(|(r, &k)| y_obs[r] - xb[k]));
    let shift = &gain * r_o;
    let mu = DVector::from_iterator(m.len(), m.iter().enumerate().map(|(r, &k)| xb[k] + shift[r]));
    Ok((mu, v))
}

pub fn build_estep_stats(fit: &ModelFit, data: &DataSet) -> Result<EStepStats> {
    check_dims(fit, data)?;
    let (n, q) = (data.n(), data.q());
    let fitted = data.x() * &fit.beta;

    let gains: Vec<(DMatrix<f64>, DMatrix<f64>)> = data
        .patterns()
        .par_iter()
        .map(|pat| pattern_gain(&fit.sigma, &pat.observed, &pat.missing))
        .collect::<Result<_>>()?;

    let mut ybar = data.y().clone();
    let mut mu = vec![DVector::zeros(0); n];
    let mut missing_cov = DMatrix::zeros(q, q);
    for (pat, (gain, v)) in data.patterns().iter().zip(&gains) {
        if pat.missing.is_empty() {
            continue;
        }
        for &i in &pat.subjects {
            let r_o = DVector::from_iterator(
                pat.observed.len(),
                pat.observed.iter().map(|&k| data.y()[(i, k)] - fitted[(i, k)]),
            );
            let r_m = gain * r_o;
            let mut mu_i = DVector::zeros(pat.missing.len());
            for (r, &k) in pat.missing.iter().enumerate() {
                mu_i[r] = fitted[(i, k)] + r_m[r];
                ybar[(i, k)] = mu_i[r];
            }
            mu[i] = mu_i;
        }
        let weight = pat.subjects.len() as f64;
        for (a, &ka) in pat.missing.iter().enumerate() {
            for (b, &kb) in pat.missing.iter().enumerate() {
                missing_cov[(ka, kb)] += weight * v[(a, b)];
            }
        }
    }

    let resid = &ybar - &fitted;
    let s = linalg::symmetrize(&((resid.tr_mul(&resid) + missing_cov) / n as f64));
    Ok(EStepStats {
        mu,
        v: gains.into_iter().map(|(_, v)| v).collect(),
        ybar,
        s,
    })
}
