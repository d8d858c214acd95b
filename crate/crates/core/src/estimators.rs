//! Latent-proxy CATE/ATE estimator.
//!
//! Pipeline: fit the MIMIC model to `(Z, A, X)` with AIC selection of k,
//! compute posterior means `E[U | Z, A, X]` and `E[U | Z, X]`, regress `Y` on
//! `[1, U_hat, A * U_hat, A]`, then
//! `CATE_i = (a1 - a0) (nu2' E[U | Z_i, X_i] + nu3)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::fitting::{select_k, FitConfig, FitResult};
use crate::model::{posterior_means, MimicParams};
use crate::regression::{self, hstack, scale_rows};

/// Outcome designs above this condition number are reported as collinear.
pub const DEFAULT_COLLINEARITY_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastSpec {
    pub a0: f64,
    pub a1: f64,
}

impl Default for ContrastSpec {
    fn default() -> Self {
        ContrastSpec { a0: 0.0, a1: 1.0 }
    }
}

impl ContrastSpec {
    pub fn new(a0: f64, a1: f64) -> Result<Self> {
        let c = ContrastSpec { a0, a1 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a0.is_finite() || !self.a1.is_finite() || self.a0 == self.a1 {
            return Err(Error::InvalidConfig(
                "contrast needs finite a1 != a0".into(),
            ));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.a1 - self.a0
    }
}

/// Working potential-outcome regression
/// `E[Y | Z, A, X] = nu0 + nu1' U + nu2' U A + nu3 A`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModel {
    pub nu0: f64,
    pub nu1: DVector<f64>,
    pub nu2: DVector<f64>,
    pub nu3: f64,
    /// Coefficients of covariate main effects (empty unless requested).
    pub covariate_effects: DVector<f64>,
    pub residual_variance: f64,
    pub condition_number: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub method: String,
    pub ate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cate: Option<Vec<f64>>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl EstimateResult {
    pub fn point(method: &str, ate: f64) -> Self {
        EstimateResult {
            method: method.to_string(),
            ate,
            cate: None,
            ci_lower: None,
            ci_upper: None,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn with_diagnostic(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

/// Design `[1, U, A * U, A]` (plus optional covariate columns).
pub fn outcome_design(a: &DVector<f64>, u_hat: &DMatrix<f64>, covariates: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let n = a.len();
    let ones = DMatrix::from_element(n, 1, 1.0);
    let au = scale_rows(u_hat, a);
    let a_col = regression::column_vector(a);
    let empty = DMatrix::zeros(n, 0);
    let x = covariates.unwrap_or(&empty);
    hstack(&[&ones, u_hat, &au, &a_col, x])
}

/// OLS of `y` on `[1, U_hat, A * U_hat, A]`.
pub fn outcome_regression(y: &DVector<f64>, a: &DVector<f64>, u_hat: &DMatrix<f64>) -> Result<OutcomeModel> {
    outcome_regression_with(y, a, u_hat, None, DEFAULT_COLLINEARITY_LIMIT)
}

pub fn outcome_regression_with(
    y: &DVector<f64>,
    a: &DVector<f64>,
    u_hat: &DMatrix<f64>,
    covariates: Option<&DMatrix<f64>>,
    collinearity_limit: f64,
) -> Result<OutcomeModel> {
    let n = y.len();
    check_dim("treatment length", n, a.len())?;
    check_dim("posterior mean rows", n, u_hat.nrows())?;
    if let Some(x) = covariates {
        check_dim("covariate rows", n, x.nrows())?;
    }
    let k = u_hat.ncols();
    let design = outcome_design(a, u_hat, covariates);
    let fit = regression::ols(&design, y, "outcome regression")?;
    if fit.condition_number > collinearity_limit {
        return Err(Error::RankDeficient {
            stage: "outcome regression".into(),
            condition_number: fit.condition_number,
        });
    }
    let b = &fit.coefficients;
    Ok(OutcomeModel {
        nu0: b[0],
        nu1: b.rows(1, k).into_owned(),
        nu2: b.rows(1 + k, k).into_owned(),
        nu3: b[1 + 2 * k],
        covariate_effects: b.rows(2 + 2 * k, b.len() - 2 - 2 * k).into_owned(),
        residual_variance: fit.residual_variance(),
        condition_number: fit.condition_number,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatentConfig {
    pub fit: FitConfig,
    pub collinearity_limit: f64,
    /// Append covariate main effects to the outcome regression.
    pub covariate_main_effects: bool,
}

impl Default for LatentConfig {
    fn default() -> Self {
        LatentConfig {
            fit: FitConfig::default(),
            collinearity_limit: DEFAULT_COLLINEARITY_LIMIT,
            covariate_main_effects: false,
        }
    }
}

pub fn estimate_latent_proxy(data: &Dataset, contrast: &ContrastSpec, fit_config: &FitConfig) -> Result<EstimateResult> {
    let cfg = LatentConfig {
        fit: fit_config.clone(),
        ..LatentConfig::default()
    };
    estimate_latent_proxy_with(data, contrast, &cfg)
}

pub fn estimate_latent_proxy_with(data: &Dataset, contrast: &ContrastSpec, cfg: &LatentConfig) -> Result<EstimateResult> {
    contrast.validate()?;
    data.outcome()?;
    if data.n() <= data.p() + 5 {
        return Err(Error::InvalidConfig(format!(
            "latent estimator needs n > p + 5 (n = {}, p = {})",
            data.n(),
            data.p()
        )));
    }
    let fit = select_k(data, &cfg.fit).map_err(|e| e.at_stage("fit"))?;
    let (mut result, _) = estimate_from_fit(data, &fit.params, contrast, cfg)?;
    add_fit_diagnostics(&mut result, &fit);
    Ok(result)
}

fn add_fit_diagnostics(result: &mut EstimateResult, fit: &FitResult) {
    let d = &mut result.diagnostics;
    d.insert("k".into(), fit.k as f64);
    d.insert("heywood_count".into(), fit.heywood_count as f64);
    d.insert("converged".into(), if fit.converged { 1.0 } else { 0.0 });
    d.insert("em_iterations".into(), fit.iterations as f64);
    d.insert("loglik".into(), fit.loglik);
    d.insert("aic".into(), fit.aic);
}

/// Steps 2-5 of the pipeline for already-fitted MIMIC parameters.
pub fn estimate_from_fit(
    data: &Dataset,
    params: &MimicParams,
    contrast: &ContrastSpec,
    cfg: &LatentConfig,
) -> Result<(EstimateResult, OutcomeModel)> {
    contrast.validate()?;
    let y = data.outcome()?;
    let u_za = posterior_means(params, data, true).map_err(|e| e.at_stage("posterior"))?;
    let u_z = posterior_means(params, data, false).map_err(|e| e.at_stage("posterior"))?;
    let covariates = (cfg.covariate_main_effects && data.m() > 0).then_some(&data.x);
    let model = outcome_regression_with(y, &data.a, &u_za, covariates, cfg.collinearity_limit)
        .map_err(|e| e.at_stage("outcome regression"))?;
    let effects = &u_z * &model.nu2;
    let effects = effects.add_scalar(model.nu3);
    let width = contrast.width();
    let ate = width * effects.mean();
    let cate: Vec<f64> = effects.iter().map(|e| width * e).collect();
    let result = EstimateResult {
        method: "latent".into(),
        ate,
        cate: Some(cate),
        ci_lower: None,
        ci_upper: None,
        diagnostics: BTreeMap::from([
            ("condition_number".to_string(), model.condition_number),
            ("residual_variance".to_string(), model.residual_variance),
        ]),
    };
    Ok((result, model))
}
