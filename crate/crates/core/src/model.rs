//! MIMIC factor model for the latent confounder.
//!
//! The generative model is
//!
//! ```text
//! U | X ~ N(Gamma x, I_k)
//! Z     = Lambda U + nu + Psi^{1/2} eps_Z
//! A     = b'U + c + sigma_A eps_A
//! ```
//!
//! so the augmented indicator vector `W = [Z; A]` is Gaussian given `X`, and
//! the latent factor has a closed-form Gaussian posterior given `(Z, X)` or
//! `(Z, A, X)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq)]
pub struct MimicParams {
    /// Proxy loadings, p x k.
    pub loadings: DMatrix<f64>,
    /// Diagonal of Psi (proxy unique variances), length p.
    pub unique_variances: DVector<f64>,
    /// Proxy intercepts nu, length p.
    pub intercepts: DVector<f64>,
    /// Effects of covariates on the latent factor, k x m.
    pub cause_coefficients: DMatrix<f64>,
    /// Treatment loadings b, length k.
    pub treatment_loadings: DVector<f64>,
    pub treatment_intercept: f64,
    pub treatment_variance: f64,
}

impl MimicParams {
    /// Parameters without covariates (m = 0), zero intercepts.
    pub fn without_covariates(
        loadings: DMatrix<f64>,
        unique_variances: DVector<f64>,
        treatment_loadings: DVector<f64>,
        treatment_intercept: f64,
        treatment_variance: f64,
    ) -> Result<Self> {
        let p = loadings.nrows();
        let k = loadings.ncols();
        let params = MimicParams {
            loadings,
            unique_variances,
            intercepts: DVector::zeros(p),
            cause_coefficients: DMatrix::zeros(k, 0),
            treatment_loadings,
            treatment_intercept,
            treatment_variance,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn p(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn k(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn m(&self) -> usize {
        self.cause_coefficients.ncols()
    }

    /// Checks dimensions, finiteness and positivity of the variances.
    pub fn validate(&self) -> Result<()> {
        let (p, k) = (self.p(), self.k());
        if p == 0 || k == 0 {
            return Err(Error::InvalidParams("need p >= 1 and k >= 1".into()));
        }
        check_dim("unique variances", p, self.unique_variances.len())?;
        check_dim("intercepts", p, self.intercepts.len())?;
        check_dim("cause coefficient rows", k, self.cause_coefficients.nrows())?;
        check_dim("treatment loadings", k, self.treatment_loadings.len())?;
        if self.unique_variances.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParams(
                "unique variances must be strictly positive".into(),
            ));
        }
        if !(self.treatment_variance > 0.0) {
            return Err(Error::InvalidParams(
                "treatment variance must be strictly positive".into(),
            ));
        }
        let finite = self
            .loadings
            .iter()
            .chain(self.unique_variances.iter())
            .chain(self.intercepts.iter())
            .chain(self.cause_coefficients.iter())
            .chain(self.treatment_loadings.iter())
            .all(|v| v.is_finite())
            && self.treatment_intercept.is_finite()
            && self.treatment_variance.is_finite();
        if !finite {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Identification requirements of the factor model: k < p and full
    /// column rank loadings.
    pub fn check_identified(&self) -> Result<()> {
        self.validate()?;
        if self.k() >= self.p() {
            return Err(Error::InvalidParams(format!(
                "k = {} must be smaller than p = {}",
                self.k(),
                self.p()
            )));
        }
        let sv = self.loadings.singular_values();
        if sv.min() <= 1e-10 * sv.max().max(1e-300) {
            return Err(Error::RankDeficient {
                stage: "loadings".into(),
                condition_number: sv.max() / sv.min(),
            });
        }
        Ok(())
    }

    /// Stacked loadings `[Lambda; b']`, (p+1) x k.
    pub fn augmented_loadings(&self) -> DMatrix<f64> {
        let (p, k) = (self.p(), self.k());
        let mut l = DMatrix::zeros(p + 1, k);
        l.rows_mut(0, p).copy_from(&self.loadings);
        l.set_row(p, &self.treatment_loadings.transpose());
        l
    }

    /// Diagonal of `Psi* = diag(psi, sigma_A^2)`.
    pub fn augmented_unique_variances(&self) -> DVector<f64> {
        let p = self.p();
        let mut v = DVector::zeros(p + 1);
        v.rows_mut(0, p).copy_from(&self.unique_variances);
        v[p] = self.treatment_variance;
        v
    }

    pub fn augmented_intercepts(&self) -> DVector<f64> {
        let p = self.p();
        let mut v = DVector::zeros(p + 1);
        v.rows_mut(0, p).copy_from(&self.intercepts);
        v[p] = self.treatment_intercept;
        v
    }

    /// Applies the latent-space rotation `U -> Q'U`: loadings become
    /// `Lambda Q`, `b` becomes `Q'b` and `Gamma` becomes `Q'Gamma`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Result<MimicParams> {
        check_dim("rotation size", self.k(), q.nrows())?;
        check_dim("rotation size", self.k(), q.ncols())?;
        Ok(MimicParams {
            loadings: &self.loadings * q,
            unique_variances: self.unique_variances.clone(),
            intercepts: self.intercepts.clone(),
            cause_coefficients: q.transpose() * &self.cause_coefficients,
            treatment_loadings: q.transpose() * &self.treatment_loadings,
            treatment_intercept: self.treatment_intercept,
            treatment_variance: self.treatment_variance,
        })
    }
}

/// Mean and covariance of `[Z; A]` given covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpliedMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

pub fn implied_moments(params: &MimicParams, x: &DVector<f64>) -> Result<ImpliedMoments> {
    params.validate()?;
    check_dim("covariate vector", params.m(), x.len())?;
    let l = params.augmented_loadings();
    let mean = &l * (&params.cause_coefficients * x) + params.augmented_intercepts();
    let mut covariance = &l * l.transpose();
    for (j, v) in params.augmented_unique_variances().iter().enumerate() {
        covariance[(j, j)] += v;
    }
    Ok(ImpliedMoments { mean, covariance })
}

/// Gaussian log-likelihood of the observed `[Z; A]` rows given `X`.
pub fn loglik(params: &MimicParams, data: &Dataset) -> Result<f64> {
    params.validate()?;
    check_dim("proxy columns", params.p(), data.p())?;
    check_dim("covariate columns", params.m(), data.m())?;
    let q = params.p() + 1;
    let ImpliedMoments { covariance, .. } = implied_moments(params, &DVector::zeros(params.m()))?;
    let chol = cholesky_or_singular(&covariance)?;
    let l = params.augmented_loadings();
    let loc = params.augmented_intercepts();
    // residuals as columns: w_i - nu* - L Gamma x_i
    let shift = &l * &params.cause_coefficients;
    let mut resid = data.indicators().transpose() - &shift * data.x.transpose();
    for mut col in resid.column_iter_mut() {
        col -= &loc;
    }
    let white = chol
        .l()
        .solve_lower_triangular(&resid)
        .ok_or_else(|| Error::NotPositiveDefinite {
            what: "implied covariance".into(),
        })?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let n = data.n() as f64;
    Ok(-0.5 * (n * (q as f64 * LN_2PI + log_det) + white.norm_squared()))
}

pub(crate) fn cholesky_or_singular(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    m.clone().cholesky().ok_or_else(|| {
        let min = m.clone().symmetric_eigenvalues().min();
        Error::SingularCovariance {
            min_eigenvalue: min,
        }
    })
}

/// Precision `M` and shift `d` of the latent posterior before covariates:
/// `U | . ~ N(M^{-1}(d + Gamma x), M^{-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianConditioner {
    pub precision: DMatrix<f64>,
    pub shift: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Posterior precision of U given Z (and A when `with_treatment`).
pub fn posterior_precision(params: &MimicParams, with_treatment: bool) -> DMatrix<f64> {
    let k = params.k();
    let scaled = scale_rows_inv(&params.loadings, &params.unique_variances);
    let mut m = params.loadings.transpose() * scaled + DMatrix::identity(k, k);
    if with_treatment {
        let b = &params.treatment_loadings;
        m += b * b.transpose() / params.treatment_variance;
    }
    m
}

fn scale_rows_inv(m: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, s) in v.iter().enumerate() {
        out.row_mut(i).unscale_mut(*s);
    }
    out
}

pub fn conditioner(
    params: &MimicParams,
    z: &DVector<f64>,
    a: Option<f64>,
) -> Result<GaussianConditioner> {
    params.validate()?;
    check_dim("proxy vector", params.p(), z.len())?;
    let centered = z - &params.intercepts;
    let weighted = centered.component_div(&params.unique_variances);
    let mut shift = params.loadings.transpose() * weighted;
    if let Some(a) = a {
        shift += &params.treatment_loadings
            * ((a - params.treatment_intercept) / params.treatment_variance);
    }
    Ok(GaussianConditioner {
        precision: posterior_precision(params, a.is_some()),
        shift,
    })
}

impl GaussianConditioner {
    /// Posterior after adding the covariate contribution `Gamma x`.
    pub fn posterior(&self, gamma_x: &DVector<f64>) -> Result<GaussianPosterior> {
        check_dim("covariate shift", self.shift.len(), gamma_x.len())?;
        let chol = self.precision.clone().cholesky().ok_or_else(|| {
            Error::NotPositiveDefinite {
                what: "posterior precision (loadings rank deficient?)".into(),
            }
        })?;
        Ok(GaussianPosterior {
            mean: chol.solve(&(&self.shift + gamma_x)),
            covariance: chol.inverse(),
        })
    }
}

/// Posterior of the latent factor given `z`, optionally `a`, and covariates `x`.
pub fn posterior_u(
    params: &MimicParams,
    z: &DVector<f64>,
    a: Option<f64>,
    x: &DVector<f64>,
) -> Result<GaussianPosterior> {
    check_dim("covariate vector", params.m(), x.len())?;
    let cond = conditioner(params, z, a)?;
    cond.posterior(&(&params.cause_coefficients * x))
}

/// Posterior means for every row of `data`, as an n x k matrix.
///
/// With `with_treatment` the means condition on `(Z, A, X)`, otherwise on
/// `(Z, X)`. Shares one factorization of the precision across rows.
pub fn posterior_means(
    params: &MimicParams,
    data: &Dataset,
    with_treatment: bool,
) -> Result<DMatrix<f64>> {
    params.validate()?;
    check_dim("proxy columns", params.p(), data.p())?;
    check_dim("covariate columns", params.m(), data.m())?;
    let chol = posterior_precision(params, with_treatment)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite {
            what: "posterior precision".into(),
        })?;
    let weighted = scale_rows_inv(&params.loadings, &params.unique_variances);
    // k x n shifts
    let mut centered = data.z.transpose();
    for mut col in centered.column_iter_mut() {
        col -= &params.intercepts;
    }
    let mut shifts = weighted.transpose() * centered + &params.cause_coefficients * data.x.transpose();
    if with_treatment {
        let b = &params.treatment_loadings / params.treatment_variance;
        for (i, mut col) in shifts.column_iter_mut().enumerate() {
            col.axpy(data.a[i] - params.treatment_intercept, &b, 1.0);
        }
    }
    chol.solve_mut(&mut shifts);
    Ok(shifts.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_by_one(b: f64) -> MimicParams {
        MimicParams::without_covariates(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
            DVector::from_element(1, b),
            0.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn moments_decoupled_treatment() {
        let m = implied_moments(&one_by_one(0.0), &DVector::zeros(0)).unwrap();
        assert_eq!(m.mean.as_slice(), &[0.0, 0.0]);
        assert_eq!(m.covariance, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn moments_rank_one_plus_diagonal() {
        let m = implied_moments(&one_by_one(1.0), &DVector::zeros(0)).unwrap();
        assert_eq!(m.covariance, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
    }

    #[test]
    fn moments_reject_wrong_covariate_length() {
        let err = implied_moments(&one_by_one(0.0), &DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn loglik_two_standard_normals() {
        let params = MimicParams::without_covariates(
            DMatrix::zeros(1, 1),
            DVector::from_element(1, 1.0),
            DVector::zeros(1),
            0.0,
            1.0,
        )
        .unwrap();
        let data = Dataset::new(
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            None,
            None,
        )
        .unwrap();
        let ll = loglik(&params, &data).unwrap();
        assert!((ll + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn posterior_symmetric_point() {
        let post = posterior_u(&one_by_one(0.0), &DVector::zeros(1), None, &DVector::zeros(0)).unwrap();
        assert!(post.mean[0].abs() < 1e-15);
        assert!((post.covariance[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn posterior_shrinks_observation() {
        let post = posterior_u(
            &one_by_one(0.0),
            &DVector::from_element(1, 2.0),
            None,
            &DVector::zeros(0),
        )
        .unwrap();
        assert!((post.mean[0] - 1.0).abs() < 1e-15);
        assert!((post.covariance[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn validate_rejects_nonpositive_variance() {
        let r = MimicParams::without_covariates(
            DMatrix::from_element(2, 1, 1.0),
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::zeros(1),
            0.0,
            1.0,
        );
        assert!(r.is_err());
    }
}
