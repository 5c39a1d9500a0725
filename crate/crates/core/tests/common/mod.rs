#![allow(dead_code)]

use covmt::model::{DataSet, Mask, ModelFit};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(r: usize, c: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// `A A' / q + floor * I` with Gaussian `A`.
pub fn random_spd(q: usize, floor: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = normal_matrix(q, q, rng);
    let m = &a * a.transpose() / q as f64 + DMatrix::identity(q, q) * floor;
    (&m + m.transpose()) * 0.5
}

/// Bernoulli mask; every row and column keeps at least one observed entry.
pub fn random_mask(n: usize, q: usize, miss: f64, rng: &mut impl Rng) -> Mask {
    let mut m = Mask::from_fn(n, q, |_, _| rng.random::<f64>() >= miss);
    for i in 0..n {
        if !(0..q).any(|k| m[(i, k)]) {
            let k = rng.random_range(0..q);
            m[(i, k)] = true;
        }
    }
    for k in 0..q {
        if !(0..n).any(|i| m[(i, k)]) {
            let i = rng.random_range(0..n);
            m[(i, k)] = true;
        }
    }
    m
}

/// Linear model with correlated Gaussian errors and a random mask.
pub fn random_data(n: usize, p: usize, q: usize, miss: f64, rng: &mut impl Rng) -> (DataSet, DMatrix<f64>) {
    let x = normal_matrix(n, p, rng);
    let beta = DMatrix::from_fn(p, q, |_, _| if rng.random::<f64>() < 0.2 { rng.sample::<f64, _>(StandardNormal) } else { 0.0 });
    let sigma = random_spd(q, 0.3, rng);
    let l = sigma.clone().cholesky().unwrap().l();
    let e = normal_matrix(n, q, rng) * l.transpose();
    let y = &x * &beta + e;
    let mask = random_mask(n, q, miss, rng);
    (DataSet::new(x, y, mask).unwrap(), beta)
}

pub fn random_fit(p: usize, q: usize, rng: &mut impl Rng) -> ModelFit {
    let beta = normal_matrix(p, q, rng) * 0.5;
    let omega = random_spd(q, 0.5, rng);
    ModelFit::new(beta, omega).unwrap()
}

fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

/// Conditional moments through the precision: `V = (Omega_mm)^{-1}` and
/// `mu = x beta_m - V Omega_mo r_o`, every inverse taken densely.
pub struct EStepOracle {
    pub mu: Vec<DVector<f64>>,
    pub v: Vec<DMatrix<f64>>,
    pub ybar: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

pub fn estep_oracle(fit: &ModelFit, data: &DataSet) -> EStepOracle {
    let (n, q) = (data.n(), data.q());
    let omega = fit.sigma.clone().try_inverse().unwrap();
    let mut ybar = data.y().clone();
    let mut mu = Vec::with_capacity(n);
    let mut v_subject = Vec::with_capacity(n);
    for i in 0..n {
        let o: Vec<usize> = (0..q).filter(|&k| data.is_observed(i, k)).collect();
        let m: Vec<usize> = (0..q).filter(|&k| !data.is_observed(i, k)).collect();
        let xb = fit.beta.transpose() * data.x().row(i).transpose();
        if m.is_empty() {
            mu.push(DVector::zeros(0));
            v_subject.push(DMatrix::zeros(0, 0));
            continue;
        }
        let v = select(&omega, &m, &m).try_inverse().unwrap();
        let r_o = DVector::from_iterator(o.len(), o.iter().map(|&k| data.y()[(i, k)] - xb[k]));
        let shift = -(&v * select(&omega, &m, &o) * r_o);
        let mu_i = DVector::from_iterator(m.len(), m.iter().enumerate().map(|(r, &k)| xb[k] + shift[r]));
        for (r, &k) in m.iter().enumerate() {
            ybar[(i, k)] = mu_i[r];
        }
        mu.push(mu_i);
        v_subject.push(v);
    }
    let mut s = DMatrix::zeros(q, q);
    for i in 0..n {
        let xb = fit.beta.transpose() * data.x().row(i).transpose();
        let r = DVector::from_fn(q, |k, _| ybar[(i, k)] - xb[k]);
        s += &r * r.transpose();
        let m: Vec<usize> = (0..q).filter(|&k| !data.is_observed(i, k)).collect();
        for (a, &ka) in m.iter().enumerate() {
            for (b, &kb) in m.iter().enumerate() {
                s[(ka, kb)] += v_subject[i][(a, b)];
            }
        }
    }
    s /= n as f64;
    let v = data.patterns().iter().map(|pat| v_subject[pat.subjects[0]].clone()).collect();
    EStepOracle { mu, v, ybar, s }
}

/// Row objective `1/2 |b - d|^2 + t1 |b|_1 + t2 |b|_2`.
pub fn prox_row_objective(b: &DVector<f64>, d: &DVector<f64>, t1: f64, t2: f64) -> f64 {
    0.5 * (b - d).norm_squared() + t1 * b.iter().map(|v| v.abs()).sum::<f64>() + t2 * b.norm()
}

/// Minimizes the row objective with both norms smoothed by `sqrt(. + mu^2)`,
/// damped Newton, and `mu` driven to 1e-13 by continuation.
pub fn prox_row_newton(d: &DVector<f64>, t1: f64, t2: f64) -> DVector<f64> {
    let q = d.len();
    let mut b = d.clone();
    let mut mu = 1e-1;
    let smoothed = |b: &DVector<f64>, mu: f64| {
        0.5 * (b - d).norm_squared()
            + t1 * b.iter().map(|v| (v * v + mu * mu).sqrt()).sum::<f64>()
            + t2 * (b.norm_squared() + mu * mu).sqrt()
    };
    while mu > 1e-13 {
        for _ in 0..200 {
            let s = (b.norm_squared() + mu * mu).sqrt();
            let mut g = &b - d + &b * (t2 / s);
            let mut h = DMatrix::identity(q, q) * (1.0 + t2 / s) - &b * b.transpose() * (t2 / (s * s * s));
            for j in 0..q {
                let a = (b[j] * b[j] + mu * mu).sqrt();
                g[j] += t1 * b[j] / a;
                h[(j, j)] += t1 * mu * mu / (a * a * a);
            }
            let step = h.cholesky().unwrap().solve(&g);
            let f0 = smoothed(&b, mu);
            let mut t = 1.0;
            let mut next = &b - &step * t;
            while smoothed(&next, mu) > f0 && t > 1e-20 {
                t *= 0.5;
                next = &b - &step * t;
            }
            let moved = (&next - &b).amax();
            b = next;
            if moved < 1e-16 {
                break;
            }
        }
        mu *= 0.1;
    }
    b
}

/// Fraction of true (j, k) with a nonzero estimate at j or at any j' whose
/// absolute Pearson correlation with j exceeds `threshold`.
pub fn ld_tpr_oracle(beta: &DMatrix<f64>, support: &Mask, x: &DMatrix<f64>, threshold: f64) -> f64 {
    let (n, p) = (x.nrows(), x.ncols());
    let corr = |a: usize, b: usize| {
        let ma = x.column(a).sum() / n as f64;
        let mb = x.column(b).sum() / n as f64;
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for i in 0..n {
            let da = x[(i, a)] - ma;
            let db = x[(i, b)] - mb;
            sab += da * db;
            saa += da * da;
            sbb += db * db;
        }
        sab / (saa * sbb).sqrt()
    };
    let mut hits = 0;
    let mut total = 0;
    for k in 0..beta.ncols() {
        for j in 0..p {
            if !support[(j, k)] {
                continue;
            }
            total += 1;
            let mut found = false;
            for jp in 0..p {
                if beta[(jp, k)] != 0.0 && (jp == j || corr(j, jp).abs() > threshold) {
                    found = true;
                }
            }
            if found {
                hits += 1;
            }
        }
    }
    hits as f64 / total as f64
}

/// Least squares by the normal equations.
pub fn ols(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    (x.transpose() * x).try_inverse().unwrap() * x.transpose() * y
}

/// Column-wise least squares on the observed rows of each column.
pub fn masked_ols(data: &DataSet) -> DMatrix<f64> {
    let (p, q) = (data.p(), data.q());
    let mut b = DMatrix::zeros(p, q);
    for k in 0..q {
        let rows: Vec<usize> = (0..data.n()).filter(|&i| data.is_observed(i, k)).collect();
        let xk = data.x().select_rows(rows.iter());
        let yk = DMatrix::from_fn(rows.len(), 1, |r, _| data.y()[(rows[r], k)]);
        b.set_column(k, &ols(&xk, &yk).column(0));
    }
    b
}

/// Largest KKT violation of the graphical lasso at `omega`, using the exact
/// inverse.
pub fn glasso_kkt_oracle(s: &DMatrix<f64>, omega: &DMatrix<f64>, lambda: f64) -> f64 {
    let sigma = omega.clone().try_inverse().unwrap();
    let q = s.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..q {
        for k in 0..q {
            let g = s[(j, k)] - sigma[(j, k)];
            let v = if omega[(j, k)] != 0.0 {
                (g + lambda * omega[(j, k)].signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    worst
}
