use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Role a column plays in the proxy-adjustment data model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Proxy,
    Treatment,
    Outcome,
    Covariate,
}

/// Observed data: proxies `z` (n x p), treatment `a`, optional outcome `y`
/// and measured covariates `x` (n x m, possibly m = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub z: DMatrix<f64>,
    pub a: DVector<f64>,
    pub y: Option<DVector<f64>>,
    pub x: DMatrix<f64>,
    pub proxy_names: Vec<String>,
    pub covariate_names: Vec<String>,
    pub treatment_name: String,
    pub outcome_name: Option<String>,
}

impl Dataset {
    /// Builds a dataset with generated column names (`z1.., a, y, x1..`).
    pub fn new(
        z: DMatrix<f64>,
        a: DVector<f64>,
        y: Option<DVector<f64>>,
        x: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = z.nrows();
        let x = x.unwrap_or_else(|| DMatrix::zeros(n, 0));
        let proxy_names = (1..=z.ncols()).map(|j| format!("z{j}")).collect();
        let covariate_names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        let outcome_name = y.as_ref().map(|_| "y".to_string());
        Self::with_names(
            z,
            a,
            y,
            x,
            proxy_names,
            covariate_names,
            "a".into(),
            outcome_name,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_names(
        z: DMatrix<f64>,
        a: DVector<f64>,
        y: Option<DVector<f64>>,
        x: DMatrix<f64>,
        proxy_names: Vec<String>,
        covariate_names: Vec<String>,
        treatment_name: String,
        outcome_name: Option<String>,
    ) -> Result<Self> {
        let n = z.nrows();
        if n == 0 {
            return Err(Error::InvalidParams("dataset needs at least one row".into()));
        }
        check_dim("treatment length", n, a.len())?;
        check_dim("covariate rows", n, x.nrows())?;
        check_dim("proxy names", z.ncols(), proxy_names.len())?;
        check_dim("covariate names", x.ncols(), covariate_names.len())?;
        if let Some(y) = &y {
            check_dim("outcome length", n, y.len())?;
        }
        if y.is_some() != outcome_name.is_some() {
            return Err(Error::InvalidParams(
                "outcome values and outcome name must be given together".into(),
            ));
        }
        let finite = z.iter().all(|v| v.is_finite())
            && a.iter().all(|v| v.is_finite())
            && x.iter().all(|v| v.is_finite())
            && y.as_ref().is_none_or(|y| y.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidParams("dataset contains non-finite values".into()));
        }
        let mut seen = HashSet::new();
        let all_names = proxy_names
            .iter()
            .chain(covariate_names.iter())
            .chain(std::iter::once(&treatment_name))
            .chain(outcome_name.iter());
        for name in all_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidParams(format!(
                    "column `{name}` assigned more than one role"
                )));
            }
        }
        Ok(Dataset {
            z,
            a,
            y,
            x,
            proxy_names,
            covariate_names,
            treatment_name,
            outcome_name,
        })
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn outcome(&self) -> Result<&DVector<f64>> {
        self.y
            .as_ref()
            .ok_or_else(|| Error::MissingColumn("outcome".into()))
    }

    /// Column name to role mapping, in storage order.
    pub fn roles(&self) -> Vec<(String, Role)> {
        let mut out: Vec<(String, Role)> = self
            .proxy_names
            .iter()
            .map(|s| (s.clone(), Role::Proxy))
            .collect();
        out.push((self.treatment_name.clone(), Role::Treatment));
        if let Some(y) = &self.outcome_name {
            out.push((y.clone(), Role::Outcome));
        }
        out.extend(
            self.covariate_names
                .iter()
                .map(|s| (s.clone(), Role::Covariate)),
        );
        out
    }

    /// Indicator matrix `[Z, A]` (n x (p+1)) used by the factor model.
    pub fn indicators(&self) -> DMatrix<f64> {
        let n = self.n();
        let p = self.p();
        let mut w = DMatrix::zeros(n, p + 1);
        w.columns_mut(0, p).copy_from(&self.z);
        w.set_column(p, &self.a);
        w
    }

    pub fn indicator_names(&self) -> Vec<String> {
        let mut names = self.proxy_names.clone();
        names.push(self.treatment_name.clone());
        names
    }

    /// Row subset (with repetition allowed), preserving column metadata.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let pick = |m: &DMatrix<f64>| m.select_rows(rows.iter());
        Dataset {
            z: pick(&self.z),
            a: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.a[i])),
            y: self
                .y
                .as_ref()
                .map(|y| DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]))),
            x: pick(&self.x),
            proxy_names: self.proxy_names.clone(),
            covariate_names: self.covariate_names.clone(),
            treatment_name: self.treatment_name.clone(),
            outcome_name: self.outcome_name.clone(),
        }
    }

    /// Whether every treatment value is exactly 0 or 1.
    pub fn treatment_is_binary(&self) -> bool {
        self.a.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Writes the numeric dataset as CSV: proxies, treatment, outcome, covariates.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let roles = self.roles();
        wtr.write_record(roles.iter().map(|(n, _)| n.as_str()))?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.z.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.a[i].to_string());
            if let Some(y) = &self.y {
                rec.push(y[i].to_string());
            }
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
