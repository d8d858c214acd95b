#![allow(dead_code)]

pub mod hand;

use latproxy::{Dataset, MimicParams};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Well-conditioned MIMIC parameters with the given shape.
pub fn random_params_with(r: &mut ChaCha8Rng, p: usize, k: usize, m: usize) -> MimicParams {
    MimicParams {
        loadings: DMatrix::from_fn(p, k, |_, _| r.random_range(-1.0..1.0)),
        unique_variances: DVector::from_fn(p, |_, _| r.random_range(0.2..1.5)),
        intercepts: DVector::from_fn(p, |_, _| r.random_range(-1.0..1.0)),
        cause_coefficients: DMatrix::from_fn(k, m, |_, _| r.random_range(-0.8..0.8)),
        treatment_loadings: DVector::from_fn(k, |_, _| r.random_range(-1.0..1.0)),
        treatment_intercept: r.random_range(-1.0..1.0),
        treatment_variance: r.random_range(0.2..1.5),
    }
}

pub fn random_params(seed: u64) -> MimicParams {
    let mut r = rng(seed);
    let p = r.random_range(1..=6);
    let k = r.random_range(1..=p.min(3));
    let m = r.random_range(0..=2);
    random_params_with(&mut r, p, k, m)
}

/// Draws `n` rows from the MIMIC model, with an outcome following the
/// working model `Y = nu0 + nu1'U + A nu2'U + nu3 A + noise`.
pub fn simulate(params: &MimicParams, n: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let (p, k, m) = (params.loadings.nrows(), params.loadings.ncols(), params.cause_coefficients.ncols());
    let x = DMatrix::from_fn(n, m, |_, _| normal(&mut r));
    let mut z = DMatrix::zeros(n, p);
    let mut a = DVector::zeros(n);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let u = &params.cause_coefficients * x.row(i).transpose() + DVector::from_fn(k, |_, _| normal(&mut r));
        for j in 0..p {
            z[(i, j)] = params.intercepts[j]
                + (params.loadings.row(j) * &u)[0]
                + params.unique_variances[j].sqrt() * normal(&mut r);
        }
        a[i] = params.treatment_intercept + params.treatment_loadings.dot(&u) + params.treatment_variance.sqrt() * normal(&mut r);
        y[i] = 0.5 + 0.4 * u.sum() + a[i] * (0.3 + 0.2 * u[0]) + 0.3 * normal(&mut r);
    }
    Dataset::new(z, a, Some(y), if m > 0 { Some(x) } else { None }).unwrap()
}

/// `(X'WX)^{-1} X'Wy` through an explicit LU inverse.
pub fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>, w: Option<&DVector<f64>>) -> DVector<f64> {
    let ones = DVector::from_element(x.nrows(), 1.0);
    let w = w.unwrap_or(&ones);
    let xtw = DMatrix::from_fn(x.ncols(), x.nrows(), |i, j| x[(j, i)] * w[j]);
    let gram = &xtw * x;
    gram.lu().try_inverse().expect("invertible Gram matrix") * (&xtw * y)
}

/// Random orthogonal matrix from the QR of a Gaussian matrix.
pub fn random_orthogonal(k: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(k, k, |_, _| normal(r));
    g.qr().q()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Conditional law of U given the observed indicators, by partitioning the
/// joint Gaussian of (U, W) and inverting with LU.
pub fn joint_conditioning(
    params: &MimicParams,
    z: &DVector<f64>,
    a: Option<f64>,
    x: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let (p, k) = (params.loadings.nrows(), params.loadings.ncols());
    let q = p + usize::from(a.is_some());
    let mut l = DMatrix::zeros(q, k);
    let mut psi = DVector::zeros(q);
    let mut nu = DVector::zeros(q);
    let mut w = DVector::zeros(q);
    for j in 0..p {
        l.set_row(j, &params.loadings.row(j));
        psi[j] = params.unique_variances[j];
        nu[j] = params.intercepts[j];
        w[j] = z[j];
    }
    if let Some(a) = a {
        l.set_row(p, &params.treatment_loadings.transpose());
        psi[p] = params.treatment_variance;
        nu[p] = params.treatment_intercept;
        w[p] = a;
    }
    let prior_mean = &params.cause_coefficients * x;
    let cov_ww = &l * l.transpose() + DMatrix::from_diagonal(&psi);
    let cov_uw = l.transpose();
    let gain = &cov_uw * cov_ww.lu().try_inverse().unwrap();
    let mean = &prior_mean + &gain * (w - &l * &prior_mean - nu);
    let cov = DMatrix::identity(k, k) - &gain * cov_uw.transpose();
    (mean, cov)
}
