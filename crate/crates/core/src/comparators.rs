//! Comparison estimators: unadjusted, linear adjustment, continuous and
//! binary IPW, two-stage least squares, and regression-based proximal causal
//! inference.
//!
//! Measured covariates, when present, enter each regression as additional
//! main-effect columns alongside the proxies.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{ContrastSpec, EstimateResult};
use crate::regression::{self, column_vector, hstack, ols, pairwise_sum, sample_variance, scale_rows, with_intercept, wls};
use crate::rng;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    INV_SQRT_2PI / sd * (-0.5 * z * z).exp()
}

/// Proxies followed by covariates.
fn adjusters(data: &Dataset) -> DMatrix<f64> {
    hstack(&[&data.z, &data.x])
}

fn outcome(data: &Dataset) -> Result<&DVector<f64>> {
    data.outcome()
}

pub fn estimate_unadjusted(data: &Dataset, contrast: &ContrastSpec) -> Result<EstimateResult> {
    contrast.validate()?;
    let y = outcome(data)?;
    let a = &data.a;
    let first = a[0];
    if a.iter().all(|v| *v == first) {
        return Err(Error::SingleGroup);
    }
    let effect = if data.treatment_is_binary() {
        let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
        for (ai, yi) in a.iter().zip(y.iter()) {
            if *ai == 1.0 {
                s1 += yi;
                n1 += 1.0;
            } else {
                s0 += yi;
                n0 += 1.0;
            }
        }
        s1 / n1 - s0 / n0
    } else {
        let design = with_intercept(&column_vector(a));
        ols(&design, y, "unadjusted regression")?.coefficients[1]
    };
    Ok(EstimateResult::point("unadjusted", contrast.width() * effect))
}

/// OLS of Y on `[1, A, Z]`; the coefficient on A times `a1 - a0`.
pub fn estimate_linear(data: &Dataset, contrast: &ContrastSpec) -> Result<EstimateResult> {
    contrast.validate()?;
    let y = outcome(data)?;
    let design = with_intercept(&hstack(&[&column_vector(&data.a), &adjusters(data)]));
    let fit = ols(&design, y, "linear regression")?;
    Ok(EstimateResult::point("linear", contrast.width() * fit.coefficients[1])
        .with_diagnostic("condition_number", fit.condition_number))
}

/// Stabilized weights `f(A) / f(A | Z)` from normal densities; the
/// variances use the `n - 1` denominator.
pub fn continuous_ipw_weights(data: &Dataset) -> Result<DVector<f64>> {
    let a = &data.a;
    let design = with_intercept(&adjusters(data));
    let stage1 = ols(&design, a, "treatment model")?;
    let cond_var = sample_variance(stage1.residuals.as_slice());
    let marg_var = sample_variance(a.as_slice());
    if !(cond_var > 0.0) {
        return Err(Error::NonPositiveVariance {
            what: "treatment given proxies".into(),
        });
    }
    if !(marg_var > 0.0) {
        return Err(Error::NonPositiveVariance {
            what: "marginal treatment".into(),
        });
    }
    let marg_mean = regression::mean(a.as_slice());
    let (cond_sd, marg_sd) = (cond_var.sqrt(), marg_var.sqrt());
    Ok(DVector::from_fn(a.len(), |i, _| {
        normal_pdf(a[i], marg_mean, marg_sd) / normal_pdf(a[i], stage1.fitted[i], cond_sd)
    }))
}

/// Continuous-treatment IPW: weighted regression of Y on `[1, A, A^2, Z]`,
/// contrasted at `(a1, a1^2)` versus `(a0, a0^2)` averaged over the sample.
pub fn estimate_ipw_continuous(data: &Dataset, contrast: &ContrastSpec) -> Result<EstimateResult> {
    contrast.validate()?;
    let y = outcome(data)?;
    if data.p() == 0 {
        return Err(Error::InvalidConfig("IPW needs at least one proxy".into()));
    }
    let weights = continuous_ipw_weights(data)?;
    let a = &data.a;
    let a2 = a.map(|v| v * v);
    let design = with_intercept(&hstack(&[&column_vector(a), &column_vector(&a2), &adjusters(data)]));
    let fit = wls(&design, y, &weights, "weighted outcome regression")?;
    let b = &fit.coefficients;
    // mean prediction difference; the Z part cancels
    let ate = b[1] * (contrast.a1 - contrast.a0) + b[2] * (contrast.a1 * contrast.a1 - contrast.a0 * contrast.a0);
    Ok(EstimateResult::point("ipw", ate)
        .with_diagnostic("max_weight", weights.max())
        .with_diagnostic("condition_number", fit.condition_number))
}

/// Logistic regression by iteratively reweighted least squares.
pub fn logistic_regression(design: &DMatrix<f64>, a: &DVector<f64>) -> Result<DVector<f64>> {
    let mut beta = DVector::zeros(design.ncols());
    for _ in 0..100 {
        let eta = design * &beta;
        let mu = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let w = mu.map(|m| (m * (1.0 - m)).max(1e-12));
        let z = DVector::from_fn(a.len(), |i, _| eta[i] + (a[i] - mu[i]) / w[i]);
        let next = wls(design, &z, &w, "propensity model")?.coefficients;
        if next.iter().any(|v| !v.is_finite() || v.abs() > 1e6) {
            return Err(Error::Separation { fraction: 1.0 });
        }
        let delta = (&next - &beta).amax();
        beta = next;
        if delta < 1e-10 {
            break;
        }
    }
    Ok(beta)
}

/// Binary-treatment IPW with logistic propensities and stabilized Hajek
/// weighting of the outcome means.
pub fn estimate_ipw_binary(data: &Dataset, contrast: &ContrastSpec) -> Result<EstimateResult> {
    contrast.validate()?;
    let y = outcome(data)?;
    if !data.treatment_is_binary() {
        return Err(Error::InvalidConfig("binary IPW needs A in {0, 1}".into()));
    }
    let a = &data.a;
    let n = a.len();
    let treated = a.sum();
    if treated == 0.0 || treated == n as f64 {
        return Err(Error::SingleGroup);
    }
    let design = with_intercept(&adjusters(data));
    let beta = logistic_regression(&design, a)?;
    let propensity = (&design * &beta).map(|e| 1.0 / (1.0 + (-e).exp()));
    let extreme = propensity
        .iter()
        .filter(|e| **e < 1e-6 || **e > 1.0 - 1e-6)
        .count() as f64
        / n as f64;
    if extreme > 0.01 {
        return Err(Error::Separation { fraction: extreme });
    }
    let p1 = treated / n as f64;
    let (mut num1, mut den1, mut num0, mut den0) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        if a[i] == 1.0 {
            let w = p1 / propensity[i];
            num1 += w * y[i];
            den1 += w;
        } else {
            let w = (1.0 - p1) / (1.0 - propensity[i]);
            num0 += w * y[i];
            den0 += w;
        }
    }
    Ok(EstimateResult::point("ipw", contrast.width() * (num1 / den1 - num0 / den0)))
}

/// Dispatches on the treatment coding: binary treatments use the logistic
/// propensity, anything else the normal-density weights.
pub fn estimate_ipw(data: &Dataset, contrast: &ContrastSpec) -> Result<EstimateResult> {
    if data.treatment_is_binary() {
        estimate_ipw_binary(data, contrast)
    } else {
        estimate_ipw_continuous(data, contrast)
    }
}

/// Two-stage least squares with the proxies as instruments.
pub fn estimate_iv(data: &Dataset, contrast: &ContrastSpec) -> Result<EstimateResult> {
    contrast.validate()?;
    let y = outcome(data)?;
    let stage1 = ols(&with_intercept(&adjusters(data)), &data.a, "first stage")?;
    let fitted_var = sample_variance(stage1.fitted.as_slice());
    if !(fitted_var > 1e-14 * sample_variance(data.a.as_slice()).max(f64::MIN_POSITIVE)) {
        return Err(Error::NonPositiveVariance {
            what: "first-stage fitted treatment".into(),
        });
    }
    let stage2 = ols(&with_intercept(&column_vector(&stage1.fitted)), y, "second stage")?;
    let total = sample_variance(data.a.as_slice());
    Ok(EstimateResult::point("iv", contrast.width() * stage2.coefficients[1])
        .with_diagnostic("first_stage_r2", fitted_var / total))
}

/// Disjoint, equal-size partition of the proxy columns into negative control
/// outcomes (NCO) and exposures (NCE).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PciSplit {
    pub nco_indices: Vec<usize>,
    pub nce_indices: Vec<usize>,
}

impl PciSplit {
    /// Split with the given NCO columns; the remaining columns are NCEs.
    pub fn from_nco(p: usize, nco: &[usize]) -> Result<Self> {
        if p % 2 != 0 {
            return Err(Error::OddProxyCount(p));
        }
        let mut nco_indices = nco.to_vec();
        nco_indices.sort_unstable();
        nco_indices.dedup();
        if nco_indices.len() != p / 2 || nco_indices.iter().any(|&j| j >= p) {
            return Err(Error::InvalidConfig(format!(
                "NCO set must contain {} distinct indices below {p}",
                p / 2
            )));
        }
        let nce_indices = (0..p).filter(|j| !nco_indices.contains(j)).collect();
        Ok(PciSplit {
            nco_indices,
            nce_indices,
        })
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let rebuilt = PciSplit::from_nco(p, &self.nco_indices)?;
        if rebuilt != *self {
            return Err(Error::InvalidConfig("NCO and NCE sets must partition the proxies".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    All,
    /// `r` distinct splits drawn with the given seed.
    Sample { r: usize, seed: u64 },
}

const MAX_ENUMERATED_SPLITS: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// The `rank`-th size-`s` subset of `0..p` in lexicographic order.
fn unrank_combination(p: usize, s: usize, mut rank: u128) -> Vec<usize> {
    let mut out = Vec::with_capacity(s);
    let mut next = 0;
    for remaining in (1..=s).rev() {
        loop {
            let with_next = binomial(p - next - 1, remaining - 1);
            if rank < with_next {
                out.push(next);
                next += 1;
                break;
            }
            rank -= with_next;
            next += 1;
        }
    }
    out
}

/// Even NCO/NCE splits in lexicographic order of the NCO set.
pub fn enumerate_even_splits(p: usize, mode: SplitMode) -> Result<Vec<PciSplit>> {
    if p % 2 != 0 || p == 0 {
        return Err(Error::OddProxyCount(p));
    }
    let total = binomial(p, p / 2);
    let ranks: Vec<u128> = match mode {
        SplitMode::All => {
            if total > MAX_ENUMERATED_SPLITS {
                return Err(Error::TooManySplits(total));
            }
            (0..total).collect()
        }
        SplitMode::Sample { r, seed } => {
            let total_usize = usize::try_from(total).map_err(|_| Error::TooManySplits(total))?;
            let mut rng = rng::stream(seed, &["pci_splits"]);
            let mut picked: Vec<u128> = index::sample(&mut rng, total_usize, r.min(total_usize))
                .into_iter()
                .map(|i| i as u128)
                .collect();
            picked.sort_unstable();
            picked
        }
    };
    ranks
        .into_iter()
        .map(|rank| PciSplit::from_nco(p, &unrank_combination(p, p / 2, rank)))
        .collect()
}

/// Intermediate quantities of one PCI fit, exposed for verification.
#[derive(Debug, Clone)]
pub struct PciFit {
    /// Fitted NCO values from `W ~ [1, A, V, A*V]`, n x |NCO|.
    pub nco_fitted: DMatrix<f64>,
    /// Coefficients of `Y ~ [1, A, wav, A*wav]`.
    pub outcome_coefficients: DVector<f64>,
    /// Fitted NCO values from `W ~ [1, V]`, n x |NCO|.
    pub nco_given_nce: DMatrix<f64>,
    pub cate: DVector<f64>,
}

pub fn pci_fit(data: &Dataset, split: &PciSplit) -> Result<PciFit> {
    split.validate(data.p())?;
    let y = outcome(data)?;
    let n = data.n();
    let a = &data.a;
    let x = &data.x;
    let w = data.z.select_columns(split.nco_indices.iter());
    let v = data.z.select_columns(split.nce_indices.iter());
    let a_col = column_vector(a);
    let nco_design = with_intercept(&hstack(&[&a_col, &v, &scale_rows(&v, a), x]));
    let mut nco_fitted = DMatrix::zeros(n, w.ncols());
    for j in 0..w.ncols() {
        let fit = ols(&nco_design, &w.column(j).into_owned(), "NCO regression")?;
        nco_fitted.set_column(j, &fit.fitted);
    }
    let outcome_design = with_intercept(&hstack(&[&a_col, &nco_fitted, &scale_rows(&nco_fitted, a), x]));
    let stage2 = ols(&outcome_design, y, "PCI outcome regression")?;
    let nce_design = with_intercept(&hstack(&[&v, x]));
    let mut nco_given_nce = DMatrix::zeros(n, w.ncols());
    for j in 0..w.ncols() {
        let fit = ols(&nce_design, &w.column(j).into_owned(), "NCO on NCE regression")?;
        nco_given_nce.set_column(j, &fit.fitted);
    }
    let b = &stage2.coefficients;
    let nw = w.ncols();
    // [intercept, A, wav_1..wav_K, A:wav_1..A:wav_K, X]
    let interaction = b.rows(2 + nw, nw);
    let cate = (&nco_given_nce * interaction).add_scalar(b[1]);
    Ok(PciFit {
        nco_fitted,
        outcome_coefficients: stage2.coefficients.clone(),
        nco_given_nce,
        cate,
    })
}

/// Regression-based PCI for one split: mean CATE times `a1 - a0`.
pub fn estimate_pci(data: &Dataset, contrast: &ContrastSpec, split: &PciSplit) -> Result<EstimateResult> {
    contrast.validate()?;
    let fit = pci_fit(data, split)?;
    let width = contrast.width();
    let ate = width * pairwise_sum(fit.cate.as_slice()) / fit.cate.len() as f64;
    let mut res = EstimateResult::point("pci", ate);
    res.cate = Some(fit.cate.iter().map(|c| width * c).collect());
    Ok(res)
}

/// PCI averaged over several splits. Splits are evaluated concurrently and
/// combined in input order.
pub fn estimate_pci_averaged(data: &Dataset, contrast: &ContrastSpec, splits: &[PciSplit]) -> Result<EstimateResult> {
    if splits.is_empty() {
        return Err(Error::InvalidConfig("need at least one split".into()));
    }
    let mut ates = splits
        .par_iter()
        .map(|s| estimate_pci(data, contrast, s).map(|r| r.ate))
        .collect::<Result<Vec<f64>>>()?;
    let ate = pairwise_sum(&ates) / ates.len() as f64;
    ates.sort_by(f64::total_cmp);
    Ok(EstimateResult::point("pci", ate)
        .with_diagnostic("n_splits", splits.len() as f64)
        .with_diagnostic("split_min", ates[0])
        .with_diagnostic("split_max", ates[ates.len() - 1])
        .with_diagnostic("split_median", crate::inference::quantile_sorted(&ates, 0.5)))
}
