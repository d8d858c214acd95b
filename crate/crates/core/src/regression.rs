//! Least-squares machinery shared by the latent estimator and the comparators.
//!
//! Solves go through a Householder QR of the (optionally row-weighted) design;
//! the condition number is the ratio of extreme singular values of the design,
//! obtained from the small triangular factor.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Designs with a condition number above this are treated as rank deficient.
pub const RANK_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct LinearFit {
    pub coefficients: DVector<f64>,
    pub fitted: DVector<f64>,
    pub residuals: DVector<f64>,
    pub condition_number: f64,
}

impl LinearFit {
    pub fn residual_variance(&self) -> f64 {
        let n = self.residuals.len();
        let df = n.saturating_sub(self.coefficients.len()).max(1);
        self.residuals.norm_squared() / df as f64
    }

    /// Linear predictor for a new design with the same column layout.
    pub fn predict(&self, design: &DMatrix<f64>) -> DVector<f64> {
        design * &self.coefficients
    }
}

/// Ratio of the largest to the smallest singular value of `design`.
pub fn condition_number(design: &DMatrix<f64>) -> f64 {
    if design.ncols() == 0 {
        return 1.0;
    }
    if design.nrows() < design.ncols() {
        return f64::INFINITY;
    }
    let r = design.clone().qr().r();
    condition_from_singular_values(&r.singular_values())
}

fn condition_from_singular_values(sv: &DVector<f64>) -> f64 {
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Ordinary least squares of `y` on the columns of `design`.
pub fn ols(design: &DMatrix<f64>, y: &DVector<f64>, stage: &str) -> Result<LinearFit> {
    solve_least_squares(design.clone(), y.clone(), stage).map(|(coefficients, cond)| {
        let fitted = design * &coefficients;
        let residuals = y - &fitted;
        LinearFit {
            coefficients,
            fitted,
            residuals,
            condition_number: cond,
        }
    })
}

/// Weighted least squares minimizing `sum_i w_i (y_i - x_i' beta)^2`.
///
/// The reported condition number is that of the row-scaled design
/// `diag(sqrt(w)) X`. Residuals and fitted values are on the original scale.
pub fn wls(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    weights: &DVector<f64>,
    stage: &str,
) -> Result<LinearFit> {
    check_dim(&format!("{stage} weights"), design.nrows(), weights.len())?;
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "{stage}: weights must be finite and non-negative"
        )));
    }
    let mut scaled = design.clone();
    let mut scaled_y = y.clone();
    for (i, w) in weights.iter().enumerate() {
        let s = w.sqrt();
        scaled.row_mut(i).scale_mut(s);
        scaled_y[i] *= s;
    }
    let (coefficients, cond) = solve_least_squares(scaled, scaled_y, stage)?;
    let fitted = design * &coefficients;
    let residuals = y - &fitted;
    Ok(LinearFit {
        coefficients,
        fitted,
        residuals,
        condition_number: cond,
    })
}

fn solve_least_squares(
    design: DMatrix<f64>,
    mut y: DVector<f64>,
    stage: &str,
) -> Result<(DVector<f64>, f64)> {
    let (n, c) = design.shape();
    check_dim(&format!("{stage} response"), n, y.len())?;
    if c == 0 {
        return Ok((DVector::zeros(0), 1.0));
    }
    if n < c {
        return Err(Error::RankDeficient {
            stage: stage.to_string(),
            condition_number: f64::INFINITY,
        });
    }
    if design.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "{stage}: non-finite value in regression inputs"
        )));
    }
    let qr = design.qr();
    let r = qr.r();
    let cond = condition_from_singular_values(&r.singular_values());
    if cond > RANK_CONDITION_LIMIT {
        return Err(Error::RankDeficient {
            stage: stage.to_string(),
            condition_number: cond,
        });
    }
    qr.q_tr_mul(&mut y);
    let rhs = y.rows(0, c).into_owned();
    let beta = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::RankDeficient {
            stage: stage.to_string(),
            condition_number: cond,
        })?;
    Ok((beta, cond))
}

/// Prepends a column of ones.
pub fn with_intercept(columns: &DMatrix<f64>) -> DMatrix<f64> {
    let n = columns.nrows();
    let mut out = DMatrix::from_element(n, columns.ncols() + 1, 1.0);
    out.columns_mut(1, columns.ncols()).copy_from(columns);
    out
}

/// Horizontally stacks column blocks with a common row count.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks.first().map_or(0, |b| b.nrows());
    let total: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, total);
    let mut at = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), n);
        out.columns_mut(at, b.ncols()).copy_from(*b);
        at += b.ncols();
    }
    out
}

/// Multiplies every column of `m` elementwise by `v`.
pub fn scale_rows(m: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, s) in v.iter().enumerate() {
        out.row_mut(i).scale_mut(*s);
    }
    out
}

pub fn column_vector(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(v) / v.len() as f64
}

/// Sample variance with the `n - 1` denominator.
pub fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Summation by recursive halving; result independent of thread scheduling
/// because the split points depend only on the length.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}
