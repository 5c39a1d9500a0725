//! Synthetic multi-tissue data: shared and tissue-specific eQTL coefficients,
//! block-correlated errors scaled to a target R^2, and Bernoulli missingness.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{CovMtError, Result};
use crate::linalg;
use crate::model::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XSource {
    /// Genotypes supplied by the caller.
    File,
    /// AR(1)-correlated normals thresholded to dosages 0/1/2.
    SyntheticNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    /// Number of eQTLs shared by every response.
    pub s: usize,
    pub per_tissue_eqtls: usize,
    pub rho: f64,
    pub r2: f64,
    pub miss_prob: f64,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub seed: u64,
    pub x_source: XSource,
    /// Lag-one correlation of the synthetic design.
    pub design_ar: f64,
}

impl Default for SimConfig {
    /// Desk-scale version of the reference setting.
    fn default() -> Self {
        Self {
            n: 300,
            p: 200,
            q: 20,
            s: 8,
            per_tissue_eqtls: 10,
            rho: 0.5,
            r2: 0.1,
            miss_prob: 0.55,
            n_train: 200,
            n_valid: 50,
            n_test: 50,
            seed: 1,
            x_source: XSource::SyntheticNormal,
            design_ar: 0.7,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CovMtError::InvalidConfig(m));
        if self.n == 0 || self.p == 0 || self.q == 0 {
            return bad("dimensions must be positive".into());
        }
        if !(self.s <= self.per_tissue_eqtls && self.per_tissue_eqtls <= self.p) {
            return bad(format!("need s <= per_tissue_eqtls <= p, got {} / {} / {}", self.s, self.per_tissue_eqtls, self.p));
        }
        if !(0.0..0.8).contains(&self.rho) {
            return bad(format!("rho {} outside [0, 0.8)", self.rho));
        }
        if !(self.r2 > 0.0 && self.r2 < 1.0) {
            return bad(format!("r2 {} outside (0, 1)", self.r2));
        }
        if !(0.0..1.0).contains(&self.miss_prob) {
            return bad(format!("miss_prob {} outside [0, 1)", self.miss_prob));
        }
        if self.n_train + self.n_valid + self.n_test != self.n {
            return bad(format!(
                "splits {} + {} + {} do not sum to n = {}",
                self.n_train, self.n_valid, self.n_test, self.n
            ));
        }
        if !(self.design_ar > -1.0 && self.design_ar < 1.0) {
            return bad("design_ar must lie in (-1, 1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub beta_star: DMatrix<f64>,
    pub sigma_e: DMatrix<f64>,
    pub d_e: Vec<f64>,
    pub support: Mask,
}

impl SimTruth {
    /// Error covariance `D_E Sigma_E D_E`.
    pub fn error_covariance(&self) -> DMatrix<f64> {
        let q = self.d_e.len();
        DMatrix::from_fn(q, q, |j, k| self.d_e[j] * self.sigma_e[(j, k)] * self.d_e[k])
    }
}

/// Coefficients `B o S + B o U` with `s` shared rows and disjoint
/// tissue-specific rows.
pub fn gen_beta_star(cfg: &SimConfig, rng: &mut impl Rng) -> Result<(DMatrix<f64>, Mask)> {
    let (p, q, s, per) = (cfg.p, cfg.q, cfg.s, cfg.per_tissue_eqtls);
    if s > per || per > p {
        return Err(CovMtError::InvalidConfig("need s <= per_tissue_eqtls <= p".into()));
    }
    let private = per - s;
    if q * private > p - s {
        return Err(CovMtError::InvalidConfig(format!(
            "{q} responses x {private} private eQTLs exceed the {} free predictors",
            p - s
        )));
    }
    let b = DMatrix::from_fn(p, q, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut support = Mask::from_element(p, q, false);
    let shared = sample(rng, p, s).into_vec();
    let mut free: Vec<usize> = (0..p).filter(|j| !shared.contains(j)).collect();
    for &j in &shared {
        for k in 0..q {
            support[(j, k)] = true;
        }
    }
    for k in 0..q {
        let picks = sample(rng, free.len(), private).into_vec();
        let mut chosen: Vec<usize> = picks.iter().map(|&i| free[i]).collect();
        chosen.sort_unstable();
        for &j in &chosen {
            support[(j, k)] = true;
        }
        free.retain(|j| chosen.binary_search(j).is_err());
    }
    let beta = DMatrix::from_fn(p, q, |j, k| if support[(j, k)] { b[(j, k)] } else { 0.0 });
    Ok((beta, support))
}

/// Block correlation: `rho + 0.2` within responses 1-10, `rho` within 11-20,
/// unit diagonal, zero elsewhere.
pub fn gen_sigma_e(rho: f64, q: usize) -> Result<DMatrix<f64>> {
    if q < 20 {
        return Err(CovMtError::InvalidConfig(format!(
            "the two-block layout needs q >= 20 (got {q}); use gen_sigma_e_scaled"
        )));
    }
    block_correlation(rho, q, 10)
}

/// Same structure with block width `round(10 q / 29)`, for small test layouts.
pub fn gen_sigma_e_scaled(rho: f64, q: usize) -> Result<DMatrix<f64>> {
    let width = ((10.0 * q as f64 / 29.0).round() as usize).max(1);
    block_correlation(rho, q, width)
}

fn block_correlation(rho: f64, q: usize, width: usize) -> Result<DMatrix<f64>> {
    if !(0.0..0.8).contains(&rho) {
        return Err(CovMtError::InvalidConfig(format!("rho {rho} outside [0, 0.8)")));
    }
    let block = |j: usize| {
        if j < width {
            Some(0)
        } else if j < 2 * width {
            Some(1)
        } else {
            None
        }
    };
    let m = DMatrix::from_fn(q, q, |j, k| {
        if j == k {
            1.0
        } else {
            match (block(j), block(k)) {
                (Some(0), Some(0)) => rho + 0.2,
                (Some(1), Some(1)) => rho,
                _ => 0.0,
            }
        }
    });
    if linalg::smallest_eigenvalue(&m) <= 0.0 {
        return Err(CovMtError::InvalidConfig("error correlation is not positive definite".into()));
    }
    Ok(m)
}

/// Per-response noise scales `d_k = sqrt(v_k (1 - r2) / r2)` where `v_k` is the
/// sample variance of the signal `X beta_k`.
pub fn gen_noise_scale(beta_star: &DMatrix<f64>, x: &DMatrix<f64>, sigma_e: &DMatrix<f64>, r2: f64) -> Result<Vec<f64>> {
    if !(r2 > 0.0 && r2 < 1.0) {
        return Err(CovMtError::InvalidConfig(format!("r2 {r2} outside (0, 1)")));
    }
    if sigma_e.nrows() != beta_star.ncols() || x.ncols() != beta_star.nrows() {
        return Err(CovMtError::Dimension("noise scale inputs do not conform".into()));
    }
    let signal = x * beta_star;
    let n = signal.nrows();
    (0..signal.ncols())
        .map(|k| {
            let col = signal.column(k);
            let mean = col.mean();
            let v = col.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n.max(2) - 1) as f64;
            if !(v > 0.0) {
                return Err(CovMtError::InvalidConfig(format!("response {k} has no signal variance")));
            }
            Ok((v * (1.0 - r2) / r2 / sigma_e[(k, k)]).sqrt())
        })
        .collect()
}

/// AR(1) latent normals thresholded to Hardy-Weinberg dosages with minor
/// allele frequencies drawn from U(0.1, 0.5).
pub fn synthetic_design(n: usize, p: usize, ar: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let normal = Normal::standard();
    let thresholds: Vec<(f64, f64)> = (0..p)
        .map(|_| {
            let maf: f64 = rng.random_range(0.1..0.5);
            let lo = normal.inverse_cdf((1.0 - maf) * (1.0 - maf));
            let hi = normal.inverse_cdf(1.0 - maf * maf);
            (lo, hi)
        })
        .collect();
    let innov = (1.0 - ar * ar).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut z: f64 = rng.sample(StandardNormal);
        for j in 0..p {
            if j > 0 {
                z = ar * z + innov * rng.sample::<f64, _>(StandardNormal);
            }
            let (lo, hi) = thresholds[j];
            x[(i, j)] = if z < lo {
                0.0
            } else if z < hi {
                1.0
            } else {
                2.0
            };
        }
    }
    x
}

/// Responses, mask and the train/validation/test partition. Test rows are
/// fully observed.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub x: DMatrix<f64>,
    /// Complete responses; masked entries are still present here.
    pub y: DMatrix<f64>,
    pub observed: Mask,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

const MAX_MASK_ATTEMPTS: usize = 100;

pub fn gen_dataset(cfg: &SimConfig, truth: &SimTruth, x: &DMatrix<f64>, rng: &mut impl Rng) -> Result<SimData> {
    let (n, q) = (cfg.n, cfg.q);
    if x.nrows() != n || x.ncols() != cfg.p {
        return Err(CovMtError::Dimension(format!("design is {:?}, expected ({n}, {})", x.shape(), cfg.p)));
    }
    if cfg.n_train + cfg.n_valid + cfg.n_test != n {
        return Err(CovMtError::InvalidConfig("splits do not sum to n".into()));
    }
    let chol = linalg::cholesky(truth.sigma_e.clone(), "error correlation")?;
    let l = chol.l();
    let mut y = x * &truth.beta_star;
    for i in 0..n {
        let z = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let e = &l * z;
        for k in 0..q {
            y[(i, k)] += truth.d_e[k] * e[k];
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(rng);
    let mut train = order[..cfg.n_train].to_vec();
    let mut valid = order[cfg.n_train..cfg.n_train + cfg.n_valid].to_vec();
    let mut test = order[cfg.n_train + cfg.n_valid..].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();

    let mut observed = Mask::from_element(n, q, true);
    let miss = cfg.miss_prob;
    if miss > 0.0 {
        for &i in train.iter().chain(&valid) {
            let mut attempts = 0;
            loop {
                for k in 0..q {
                    observed[(i, k)] = rng.random::<f64>() >= miss;
                }
                if (0..q).any(|k| observed[(i, k)]) {
                    break;
                }
                attempts += 1;
                if attempts >= MAX_MASK_ATTEMPTS {
                    return Err(CovMtError::InvalidConfig(format!("subject {i} lost every response after {attempts} mask draws")));
                }
            }
        }
        for k in 0..q {
            let mut attempts = 0;
            while !train.iter().any(|&i| observed[(i, k)]) {
                attempts += 1;
                if attempts > MAX_MASK_ATTEMPTS {
                    return Err(CovMtError::InvalidConfig(format!("training column {k} stays empty after {MAX_MASK_ATTEMPTS} mask draws")));
                }
                for &i in &train {
                    observed[(i, k)] = rng.random::<f64>() >= miss;
                }
                // keep every training subject with at least one response
                for &i in &train {
                    if !(0..q).any(|c| observed[(i, c)]) {
                        observed[(i, k)] = true;
                    }
                }
            }
        }
    }
    Ok(SimData {
        x: x.clone(),
        y,
        observed,
        train,
        valid,
        test,
    })
}

/// Full replication from one seed: design (unless supplied), truth and data.
pub fn simulate(cfg: &SimConfig, design: Option<&DMatrix<f64>>) -> Result<(SimTruth, SimData)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x = match (cfg.x_source, design) {
        (_, Some(x)) => x.clone(),
        (XSource::SyntheticNormal, None) => synthetic_design(cfg.n, cfg.p, cfg.design_ar, &mut rng),
        (XSource::File, None) => return Err(CovMtError::InvalidConfig("x_source = file but no genotypes were supplied".into())),
    };
    let (beta_star, support) = gen_beta_star(cfg, &mut rng)?;
    let sigma_e = if cfg.q >= 20 {
        gen_sigma_e(cfg.rho, cfg.q)?
    } else {
        gen_sigma_e_scaled(cfg.rho, cfg.q)?
    };
    let d_e = gen_noise_scale(&beta_star, &x, &sigma_e, cfg.r2)?;
    let truth = SimTruth {
        beta_star,
        sigma_e,
        d_e,
        support,
    };
    let data = gen_dataset(cfg, &truth, &x, &mut rng)?;
    Ok((truth, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(s: usize, per: usize, q: usize, p: usize) -> SimConfig {
        SimConfig {
            s,
            per_tissue_eqtls: per,
            q,
            p,
            ..Default::default()
        }
    }

    fn all_true_rows(m: &Mask) -> usize {
        m.row_iter().filter(|r| r.iter().all(|&b| b)).count()
    }

    #[test]
    fn support_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (s, per, q, p) in [(15, 20, 29, 1178), (20, 20, 29, 1178), (0, 10, 20, 300), (8, 10, 20, 200)] {
            let (beta, support) = gen_beta_star(&cfg(s, per, q, p), &mut rng).unwrap();
            for k in 0..q {
                assert_eq!(support.column(k).iter().filter(|&&b| b).count(), per);
            }
            assert_eq!(all_true_rows(&support), s);
            for (b, &m) in beta.iter().zip(support.iter()) {
                assert_eq!(*b != 0.0, m);
            }
        }
    }

    #[test]
    fn infeasible_private_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(gen_beta_star(&cfg(0, 10, 20, 150), &mut rng).is_err());
    }

    #[test]
    fn sigma_e_entries() {
        let s0 = gen_sigma_e(0.0, 29).unwrap();
        assert_eq!(s0[(14, 15)], 0.0);
        assert_relative_eq!(s0[(1, 2)], 0.2);
        let s5 = gen_sigma_e(0.5, 29).unwrap();
        assert_relative_eq!(s5[(11, 12)], 0.5);
        assert_relative_eq!(s5[(0, 1)], 0.7);
        assert_eq!(s5[(4, 24)], 0.0);
        assert_eq!(s5[(3, 3)], 1.0);
        assert!(gen_sigma_e(0.3, 12).is_err());
        for rho in [0.0, 0.1, 0.3, 0.5, 0.7, 0.79] {
            assert!(linalg::smallest_eigenvalue(&gen_sigma_e(rho, 29).unwrap()) > 0.0);
        }
    }

    #[test]
    fn noise_scale_algebra() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
        let beta = DMatrix::from_element(1, 1, (0.75f64).sqrt());
        // sample variance of the signal is 0.75 * 4/3 = 1
        let d = gen_noise_scale(&beta, &x, &DMatrix::identity(1, 1), 0.2).unwrap();
        assert_relative_eq!(d[0], 2.0, epsilon = 1e-12);
        let d_half = gen_noise_scale(&beta, &x, &DMatrix::identity(1, 1), 0.5).unwrap();
        assert_relative_eq!(d_half[0] * d_half[0], 1.0, epsilon = 1e-12);
        assert!(gen_noise_scale(&DMatrix::zeros(1, 1), &x, &DMatrix::identity(1, 1), 0.5).is_err());
    }

    #[test]
    fn seeded_determinism() {
        let c = SimConfig {
            n: 60,
            n_train: 40,
            n_valid: 10,
            n_test: 10,
            p: 50,
            q: 20,
            s: 3,
            per_tissue_eqtls: 4,
            ..Default::default()
        };
        let a = simulate(&c, None).unwrap();
        let b = simulate(&c, None).unwrap();
        assert_eq!(a, b);
        let (_, data) = a;
        for &i in &data.test {
            assert!(data.observed.row(i).iter().all(|&o| o));
        }
        for &i in data.train.iter().chain(&data.valid) {
            assert!(data.observed.row(i).iter().any(|&o| o));
        }
    }

    #[test]
    fn no_missingness() {
        let c = SimConfig {
            miss_prob: 0.0,
            ..Default::default()
        };
        let (_, data) = simulate(&c, None).unwrap();
        assert!(data.observed.iter().all(|&o| o));
    }
}
