use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

/// The checked-in parameter file, compiled into the library.
pub const SCENARIO_TABLES: &str = include_str!("../../data/scenarios.toml");

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTable {
    pub loadings: Option<Vec<Vec<f64>>>,
    pub unique_sd: Option<Vec<f64>>,
    pub treatment_loadings: Option<Vec<f64>>,
    pub instrument_loadings: Option<Vec<f64>>,
    #[serde(default)]
    pub treatment_intercept: f64,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub outcome_noise: f64,
    pub proxies: Option<usize>,
    pub latent_dim: Option<usize>,
    pub skew_shape: Option<f64>,
    pub skew_location: Option<f64>,
    pub skew_scale: Option<f64>,
}

impl RawTable {
    pub fn loadings_matrix(&self) -> Option<DMatrix<f64>> {
        let rows = self.loadings.as_ref()?;
        let k = rows.first().map_or(0, Vec::len);
        Some(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]))
    }

    pub fn unique_variances(&self) -> Option<DVector<f64>> {
        self.unique_sd
            .as_ref()
            .map(|sd| DVector::from_iterator(sd.len(), sd.iter().map(|s| s * s)))
    }
}

pub fn tables() -> &'static BTreeMap<String, RawTable> {
    static TABLES: OnceLock<BTreeMap<String, RawTable>> = OnceLock::new();
    TABLES.get_or_init(|| toml::from_str(SCENARIO_TABLES).expect("embedded scenario tables parse"))
}
