//! Small instances with closed-form answers. Each returns the absolute
//! error of the library against the hand computation.

use super::normal_equations;
use latproxy::comparators::{continuous_ipw_weights, estimate_ipw_continuous, estimate_iv, estimate_pci, pci_fit, PciSplit};
use latproxy::{ContrastSpec, Dataset};
use nalgebra::{DMatrix, DVector};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn normal_density(v: f64, mean: f64, var: f64) -> f64 {
    (-(v - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn dataset(zs: &[&[f64]], a: &[f64], y: &[f64]) -> Dataset {
    let n = a.len();
    let z = DMatrix::from_fn(n, zs.len(), |i, j| zs[j][i]);
    Dataset::new(z, DVector::from_column_slice(a), Some(DVector::from_column_slice(y)), None).unwrap()
}

/// Density-ratio weights: A on [1, Z] by the simple-regression formulas.
pub fn ipw_weights_three_rows() -> f64 {
    let zs = [0.0, 1.0, 3.0];
    let av = [0.5, 2.0, 2.5];
    let (zbar, abar) = (mean(&zs), mean(&av));
    let sxy: f64 = (0..3).map(|i| (zs[i] - zbar) * (av[i] - abar)).sum();
    let sxx: f64 = (0..3).map(|i| (zs[i] - zbar).powi(2)).sum();
    let slope = sxy / sxx;
    let fitted: Vec<f64> = zs.iter().map(|z| abar + slope * (z - zbar)).collect();
    let resid: Vec<f64> = (0..3).map(|i| av[i] - fitted[i]).collect();
    let rbar = mean(&resid);
    let cond_var = resid.iter().map(|e| (e - rbar).powi(2)).sum::<f64>() / 2.0;
    let marg_var = av.iter().map(|a| (a - abar).powi(2)).sum::<f64>() / 2.0;
    let w = continuous_ipw_weights(&dataset(&[&zs], &av, &[0.0; 3])).unwrap();
    (0..3)
        .map(|i| {
            let expected = normal_density(av[i], abar, marg_var) / normal_density(av[i], fitted[i], cond_var);
            (w[i] - expected).abs()
        })
        .fold(0.0, f64::max)
}

/// Weighted outcome stage `[1, A, A^2, Z]`; four coefficients need more
/// than three rows.
pub fn ipw_outcome_six_rows() -> f64 {
    let zs = [0.0, 1.0, 3.0, -1.0, 2.0, 0.5];
    let av = [0.5, 2.0, 2.5, -0.3, 1.1, 0.9];
    let ys = [1.0, 0.2, 3.1, -0.5, 1.7, 0.4];
    let data = dataset(&[&zs], &av, &ys);
    let w = continuous_ipw_weights(&data).unwrap();
    let design = DMatrix::from_fn(6, 4, |i, j| [1.0, av[i], av[i] * av[i], zs[i]][j]);
    let beta = normal_equations(&design, &DVector::from_column_slice(&ys), Some(&w));
    let expected = beta[1] * 2.0 + beta[2] * (1.5f64.powi(2) - 0.25);
    let got = estimate_ipw_continuous(&data, &ContrastSpec::new(-0.5, 1.5).unwrap()).unwrap().ate;
    (got - expected).abs()
}

/// Just-identified IV is the ratio cov(Z, Y) / cov(Z, A).
pub fn iv_three_rows() -> f64 {
    let zs = [0.0, 1.0, 3.0];
    let av = [1.0, 2.0, 4.5];
    let ys = [0.3, 1.9, 2.2];
    let cov = |u: &[f64], v: &[f64]| {
        let (mu, mv) = (mean(u), mean(v));
        (0..u.len()).map(|i| (u[i] - mu) * (v[i] - mv)).sum::<f64>()
    };
    let expected = cov(&zs, &ys) / cov(&zs, &av);
    let got = estimate_iv(&dataset(&[&zs], &av, &ys), &ContrastSpec::default()).unwrap().ate;
    (got - expected).abs()
}

/// One NCO and one NCE: the first two stages have four coefficients each,
/// so six rows is the smallest instance with residual degrees of freedom.
pub fn pci_six_rows() -> f64 {
    let n = 6;
    let w = [0.3, -1.2, 0.8, 2.0, -0.4, 1.1];
    let v = [1.0, 0.5, -0.7, 0.2, -1.5, 0.9];
    let av = [0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
    let ys = [0.4, 1.3, 0.2, 1.8, -0.6, 0.9];
    let data = dataset(&[&w, &v], &av, &ys);
    let split = PciSplit::from_nco(2, &[0]).unwrap();
    let fit = pci_fit(&data, &split).unwrap();

    let d1 = DMatrix::from_fn(n, 4, |i, j| [1.0, av[i], v[i], av[i] * v[i]][j]);
    let wav = &d1 * normal_equations(&d1, &DVector::from_column_slice(&w), None);
    let d2 = DMatrix::from_fn(n, 4, |i, j| [1.0, av[i], wav[i], av[i] * wav[i]][j]);
    let gamma = normal_equations(&d2, &DVector::from_column_slice(&ys), None);
    let d3 = DMatrix::from_fn(n, 2, |i, j| [1.0, v[i]][j]);
    let wt = &d3 * normal_equations(&d3, &DVector::from_column_slice(&w), None);
    let expected = mean(&(0..n).map(|i| gamma[1] + gamma[3] * wt[i]).collect::<Vec<_>>());
    let got = estimate_pci(&data, &ContrastSpec::default(), &split).unwrap().ate;
    [
        (fit.nco_fitted.column(0) - &wav).amax(),
        (&fit.outcome_coefficients - &gamma).amax(),
        (got - expected).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}
