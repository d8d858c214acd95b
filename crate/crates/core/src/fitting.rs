//! Maximum-likelihood fitting of the MIMIC model by EM.
//!
//! The indicator vector is `W = [Z; A]` (q = p + 1 entries) with causes `X`.
//! Given `X` the model for `W` is Gaussian, so every E-step expectation is a
//! linear function of `(W, X)` and the whole algorithm runs on the centered
//! second-moment matrix of `(W, X)`. An iteration costs `O((q + m)^3)`
//! regardless of the sample size.
//!
//! Working in centered coordinates the intercept is identically zero at every
//! EM iterate; the intercepts of the original parameterization
//! (`U | X ~ N(Gamma x, I)`) are recovered at the end as
//! `nu* = mean(W) - L Gamma mean(X)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::MimicParams;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub loglik_rel_tolerance: f64,
    /// Lower bound on each unique variance, as a fraction of the indicator's
    /// sample variance.
    pub variance_floor_fraction: f64,
    /// Candidate factor counts for AIC selection; `None` means
    /// `1..=max_identified_k(p)`.
    pub k_candidates: Option<Vec<usize>>,
    /// Fix the treatment's residual variance at 1 instead of estimating it.
    pub fix_treatment_variance: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 1000,
            loglik_rel_tolerance: 1e-8,
            variance_floor_fraction: 1e-4,
            k_candidates: None,
            fix_treatment_variance: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if !(self.loglik_rel_tolerance > 0.0) {
            return Err(Error::InvalidConfig("loglik_rel_tolerance must be > 0".into()));
        }
        if !(self.variance_floor_fraction > 0.0) {
            return Err(Error::InvalidConfig(
                "variance_floor_fraction must be > 0".into(),
            ));
        }
        if let Some(ks) = &self.k_candidates {
            if ks.is_empty() || ks.contains(&0) {
                return Err(Error::InvalidConfig(
                    "k_candidates must be a nonempty set of positive integers".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn candidates(&self, p: usize) -> Vec<usize> {
        match &self.k_candidates {
            Some(ks) => {
                let mut ks = ks.clone();
                ks.sort_unstable();
                ks.dedup();
                ks
            }
            None => (1..=max_identified_k(p)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Fitted parameters in canonical (lower-triangular) form.
    pub params: MimicParams,
    pub loglik: f64,
    pub aic: f64,
    pub k: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood at the start value and after every EM step.
    pub loglik_trace: Vec<f64>,
    /// Indicators whose unique variance sits on the floor at the final iterate.
    pub heywood_count: usize,
}

/// Free parameters: loadings of all q = p+1 indicators less the k(k-1)/2
/// rotational constraints, q intercepts, q unique variances, k*m cause
/// coefficients, minus one when the treatment variance is fixed.
pub fn free_parameter_count(p: usize, k: usize, m: usize, fix_treatment_variance: bool) -> usize {
    let q = p + 1;
    q * k - k * k.saturating_sub(1) / 2 + q + q + k * m - usize::from(fix_treatment_variance)
}

pub fn aic(loglik: f64, p: usize, k: usize, m: usize, fix_treatment_variance: bool) -> f64 {
    -2.0 * loglik + 2.0 * free_parameter_count(p, k, m, fix_treatment_variance) as f64
}

/// Covariance degrees of freedom of a k-factor model on p+1 indicators.
pub fn degrees_of_freedom(p: usize, k: usize) -> i64 {
    let q = (p + 1) as i64;
    let k = k as i64;
    q * (q + 1) / 2 - (q * k - k * (k - 1) / 2 + q)
}

/// Largest k with non-negative degrees of freedom (at least 1, at most p).
pub fn max_identified_k(p: usize) -> usize {
    (1..=p)
        .take_while(|&k| degrees_of_freedom(p, k) >= 0)
        .last()
        .unwrap_or(1)
}

/// Centered second moments of `(W, X)`.
#[derive(Debug, Clone)]
pub(crate) struct Moments {
    pub n: usize,
    pub q: usize,
    pub m: usize,
    pub mean_w: DVector<f64>,
    pub mean_x: DVector<f64>,
    /// (q+m) x (q+m), denominator n.
    pub s: DMatrix<f64>,
}

impl Moments {
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let w = data.indicators();
        let (n, q) = w.shape();
        let m = data.m();
        let mut r = DMatrix::zeros(n, q + m);
        r.columns_mut(0, q).copy_from(&w);
        r.columns_mut(q, m).copy_from(&data.x);
        let means = r.row_mean().transpose();
        for (j, mut col) in r.column_iter_mut().enumerate() {
            col.add_scalar_mut(-means[j]);
        }
        let s = r.tr_mul(&r) / n as f64;
        let names: Vec<String> = data
            .indicator_names()
            .into_iter()
            .chain(data.covariate_names.iter().cloned())
            .collect();
        for j in 0..q + m {
            let var = s[(j, j)];
            if !(var > 1e-12 * (1.0 + means[j] * means[j])) {
                return Err(Error::DegenerateColumn {
                    column: names[j].clone(),
                });
            }
        }
        Ok(Moments {
            n,
            q,
            m,
            mean_w: means.rows(0, q).into_owned(),
            mean_x: means.rows(q, m).into_owned(),
            s,
        })
    }

    fn s_ww(&self) -> DMatrix<f64> {
        self.s.view((0, 0), (self.q, self.q)).into_owned()
    }
}

/// Working parameters in centered coordinates.
#[derive(Debug, Clone)]
struct EmState {
    /// q x k
    l: DMatrix<f64>,
    /// q
    psi: DVector<f64>,
    /// k x m
    gamma: DMatrix<f64>,
}

/// Log-likelihood of the centered model from moments.
fn moment_loglik(mom: &Moments, st: &EmState) -> Result<f64> {
    let q = mom.q;
    let mut sigma = &st.l * st.l.transpose();
    for j in 0..q {
        sigma[(j, j)] += st.psi[j];
    }
    let chol = crate::model::cholesky_or_singular(&sigma)?;
    // residual r = w - L Gamma x; E[r r'] = R S R' with R = [I, -L Gamma]
    let mut rmat = DMatrix::zeros(q, q + mom.m);
    rmat.view_mut((0, 0), (q, q)).fill_with_identity();
    if mom.m > 0 {
        rmat.view_mut((0, q), (q, mom.m))
            .copy_from(&(-(&st.l * &st.gamma)));
    }
    let e = &rmat * &mom.s * rmat.transpose();
    let trace = chol.solve(&e).trace();
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * mom.n as f64 * (q as f64 * LN_2PI + log_det + trace))
}

struct StepOutcome {
    state: EmState,
    floored: usize,
}

fn em_step(mom: &Moments, st: &EmState, floor: &DVector<f64>, fix_treatment: bool) -> Result<StepOutcome> {
    let (q, m) = (mom.q, mom.m);
    let k = st.l.ncols();
    // L' Psi^{-1}
    let mut lt_psi = st.l.transpose();
    for j in 0..q {
        lt_psi.column_mut(j).unscale_mut(st.psi[j]);
    }
    let prec = &lt_psi * &st.l + DMatrix::identity(k, k);
    let chol = prec.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        what: "E-step precision".into(),
    })?;
    // posterior mean map T = M^{-1} [L' Psi^{-1}, Gamma]  (k x (q+m))
    let mut t = DMatrix::zeros(k, q + m);
    t.columns_mut(0, q).copy_from(&lt_psi);
    t.columns_mut(q, m).copy_from(&st.gamma);
    chol.solve_mut(&mut t);
    let ts = &t * &mom.s;
    let e_uu = chol.inverse() + &ts * t.transpose();
    let e_uw = ts.columns(0, q).into_owned();

    let gamma = if m > 0 {
        let e_ux = ts.columns(q, m).into_owned();
        let s_xx = mom.s.view((q, q), (m, m)).into_owned();
        let sxx_chol = s_xx.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
            what: "covariate second moments".into(),
        })?;
        // Gamma = E_ux S_xx^{-1}
        sxx_chol.solve(&e_ux.transpose()).transpose()
    } else {
        DMatrix::zeros(k, 0)
    };

    let uu_chol = e_uu.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        what: "expected latent second moment".into(),
    })?;
    // L' = E_uu^{-1} E_uw
    let lt = uu_chol.solve(&e_uw);
    let l = lt.transpose();
    let mut psi = DVector::zeros(q);
    let mut floored = 0;
    for j in 0..q {
        let explained = lt.column(j).dot(&e_uw.column(j));
        let raw = mom.s[(j, j)] - explained;
        psi[j] = if raw < floor[j] {
            floored += 1;
            floor[j]
        } else {
            raw
        };
    }
    if fix_treatment {
        psi[q - 1] = 1.0;
    }
    Ok(StepOutcome {
        state: EmState { l, psi, gamma },
        floored,
    })
}

/// Principal-axis start on the correlation matrix of `W` residualized on `X`.
fn initial_state(mom: &Moments, k: usize, fix_treatment: bool) -> Result<EmState> {
    let (q, m) = (mom.q, mom.m);
    let mut c = mom.s_ww();
    if m > 0 {
        let s_wx = mom.s.view((0, q), (q, m)).into_owned();
        let s_xx = mom.s.view((q, q), (m, m)).into_owned();
        let chol = s_xx.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
            what: "covariate second moments".into(),
        })?;
        c -= &s_wx * chol.solve(&s_wx.transpose());
    }
    let sd: DVector<f64> = c.diagonal().map(|v| v.max(1e-300).sqrt());
    let mut r = c.clone();
    for i in 0..q {
        for j in 0..q {
            r[(i, j)] /= sd[i] * sd[j];
        }
    }
    // squared multiple correlations on the diagonal
    let mut reduced = r.clone();
    if let Some(inv) = r.clone().try_inverse() {
        for j in 0..q {
            let smc = 1.0 - 1.0 / inv[(j, j)];
            reduced[(j, j)] = smc.clamp(0.05, 0.995);
        }
    }
    let eig = reduced.symmetric_eigen();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut l = DMatrix::zeros(q, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        let scale = eig.eigenvalues[idx].max(1e-3).sqrt();
        l.set_column(col, &(eig.eigenvectors.column(idx) * scale));
    }
    let mut psi = DVector::zeros(q);
    for j in 0..q {
        let communality = l.row(j).norm_squared();
        psi[j] = (1.0 - communality).max(0.1) * sd[j] * sd[j];
        l.row_mut(j).scale_mut(sd[j]);
    }
    if fix_treatment {
        psi[q - 1] = 1.0;
    }
    Ok(EmState {
        l,
        psi,
        gamma: DMatrix::zeros(k, m),
    })
}

/// Fits a k-factor MIMIC model to `(Z, A, X)`; the outcome is ignored.
pub fn fit_mimic(data: &Dataset, k: usize, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let p = data.p();
    if k == 0 || k >= p + 1 {
        return Err(Error::InvalidConfig(format!(
            "k = {k} must satisfy 1 <= k < p + 1 = {}",
            p + 1
        )));
    }
    if k > p {
        return Err(Error::InvalidConfig(format!("k = {k} exceeds p = {p}")));
    }
    if data.n() <= p + 1 {
        return Err(Error::InvalidConfig(format!(
            "n = {} must exceed p + 1 = {}",
            data.n(),
            p + 1
        )));
    }
    let mom = Moments::from_dataset(data)?;
    let floor: DVector<f64> = mom
        .s
        .diagonal()
        .rows(0, mom.q)
        .map(|v| v * config.variance_floor_fraction);
    let fix = config.fix_treatment_variance;

    let mut state = initial_state(&mom, k, fix)?;
    for j in 0..mom.q {
        if !(fix && j == mom.q - 1) {
            state.psi[j] = state.psi[j].max(floor[j]);
        }
    }
    let mut ll = moment_loglik(&mom, &state)?;
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut floored = 0;
    while iterations < config.max_iterations {
        let step = em_step(&mom, &state, &floor, fix)?;
        let next_ll = moment_loglik(&mom, &step.state)?;
        iterations += 1;
        state = step.state;
        floored = step.floored;
        trace.push(next_ll);
        let change = (next_ll - ll).abs() / ll.abs().max(1.0);
        ll = next_ll;
        if change < config.loglik_rel_tolerance {
            converged = true;
            break;
        }
    }

    let params = to_params(&mom, &state, p)?;
    let params = rotate_to_canonical(&params)?;
    Ok(FitResult {
        aic: aic(ll, p, k, data.m(), fix),
        params,
        loglik: ll,
        k,
        iterations,
        converged,
        loglik_trace: trace,
        heywood_count: floored,
    })
}

fn to_params(mom: &Moments, st: &EmState, p: usize) -> Result<MimicParams> {
    let k = st.l.ncols();
    let intercepts_all = &mom.mean_w - &st.l * (&st.gamma * &mom.mean_x);
    let params = MimicParams {
        loadings: st.l.rows(0, p).into_owned(),
        unique_variances: st.psi.rows(0, p).into_owned(),
        intercepts: intercepts_all.rows(0, p).into_owned(),
        cause_coefficients: st.gamma.clone(),
        treatment_loadings: st.l.row(p).transpose().into_owned(),
        treatment_intercept: intercepts_all[p],
        treatment_variance: st.psi[p],
    };
    debug_assert_eq!(params.k(), k);
    params.validate()?;
    Ok(params)
}

/// Rotates the latent space so the loadings are lower triangular with a
/// positive diagonal. The rotation comes from a QR factorization of the
/// transposed leading k x k block of the loadings.
pub fn rotate_to_canonical(params: &MimicParams) -> Result<MimicParams> {
    params.validate()?;
    let (p, k) = (params.p(), params.k());
    if k > p {
        return Err(Error::InvalidParams(format!("k = {k} exceeds p = {p}")));
    }
    let lead = params.loadings.view((0, 0), (k, k)).transpose();
    let scale = lead.amax().max(f64::MIN_POSITIVE);
    let qr = lead.qr();
    let r = qr.r();
    let mut q = qr.q();
    for i in 0..k {
        let d = r[(i, i)];
        if !(d.abs() > 1e-10 * scale) {
            return Err(Error::RankDeficient {
                stage: "canonical rotation".into(),
                condition_number: f64::INFINITY,
            });
        }
        if d < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    let mut out = params.rotated(&q)?;
    // clean the exact zeros above the diagonal of the leading block
    for i in 0..k {
        for j in (i + 1)..k {
            out.loadings[(i, j)] = 0.0;
        }
    }
    Ok(out)
}

/// Fits every candidate k and keeps the converged fit with the lowest AIC;
/// ties go to the smaller k. When no candidate converges within the
/// iteration budget, the lowest-AIC unconverged fit is returned with
/// `converged = false`; only when every fit errors is the call an error.
pub fn select_k(data: &Dataset, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let mut best: Option<FitResult> = None;
    let mut best_unconverged: Option<FitResult> = None;
    let mut failures = Vec::new();
    for k in config.candidates(data.p()) {
        match fit_mimic(data, k, config) {
            Ok(fit) => {
                let slot = if fit.converged {
                    &mut best
                } else {
                    &mut best_unconverged
                };
                if slot.as_ref().is_none_or(|b| fit.aic < b.aic) {
                    *slot = Some(fit);
                }
            }
            Err(e) => failures.push((k, e.to_string())),
        }
    }
    best.or(best_unconverged)
        .ok_or(Error::AllFitsFailed { failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aic_counts() {
        assert_eq!(aic(0.0, 1, 1, 0, false), 12.0);
        assert_eq!(aic(0.0, 1, 1, 0, true), 10.0);
        assert_eq!(free_parameter_count(8, 2, 0, false), 35);
        assert_eq!(aic(-100.0, 8, 2, 0, false), 270.0);
    }

    #[test]
    fn identification_bound() {
        // q = 9 indicators: k = 5 leaves 1 df, k = 6 is over-parameterized
        assert_eq!(degrees_of_freedom(8, 5), 1);
        assert!(degrees_of_freedom(8, 6) < 0);
        assert_eq!(max_identified_k(8), 5);
        assert_eq!(max_identified_k(2), 1);
        assert_eq!(max_identified_k(6), 3);
    }

    #[test]
    fn rotation_flips_single_factor_sign() {
        let params = MimicParams {
            loadings: DMatrix::from_column_slice(2, 1, &[-0.5, 0.2]),
            unique_variances: DVector::from_vec(vec![1.0, 1.0]),
            intercepts: DVector::zeros(2),
            cause_coefficients: DMatrix::from_row_slice(1, 1, &[0.7]),
            treatment_loadings: DVector::from_vec(vec![0.4]),
            treatment_intercept: 0.0,
            treatment_variance: 1.0,
        };
        let out = rotate_to_canonical(&params).unwrap();
        assert!((out.loadings[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((out.loadings[(1, 0)] + 0.2).abs() < 1e-15);
        assert!((out.treatment_loadings[0] + 0.4).abs() < 1e-15);
        assert!((out.cause_coefficients[(0, 0)] + 0.7).abs() < 1e-15);
    }

    #[test]
    fn rotation_rejects_singular_leading_block() {
        let params = MimicParams::without_covariates(
            DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 0.3, 0.1]),
            DVector::from_element(3, 1.0),
            DVector::zeros(2),
            0.0,
            1.0,
        )
        .unwrap();
        assert!(matches!(
            rotate_to_canonical(&params),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn config_rejects_empty_candidates() {
        let cfg = FitConfig {
            k_candidates: Some(vec![]),
            ..FitConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn degenerate_column_is_named() {
        let z = DMatrix::from_fn(20, 3, |i, j| if j == 1 { 5.0 } else { (i * (j + 2)) as f64 % 7.0 });
        let a = DVector::from_fn(20, |i, _| (i % 3) as f64);
        let data = Dataset::new(z, a, None, None).unwrap();
        match fit_mimic(&data, 1, &FitConfig::default()) {
            Err(Error::DegenerateColumn { column }) => assert_eq!(column, "z2"),
            other => panic!("expected degenerate column, got {other:?}"),
        }
    }
}
