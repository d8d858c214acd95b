//! Seeded data generators for the simulation scenarios.
//!
//! Scenario parameter tables live in `data/scenarios.toml` and are compiled
//! in; [`ScenarioSpec::new`] loads the block for a scenario and callers may
//! edit it before calling [`generate`].

mod tables;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::MimicParams;
use crate::rng;

pub use tables::{tables, RawTable, SCENARIO_TABLES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioId {
    Baseline,
    Quadratic,
    SkewNormal,
    BinaryProbit,
    DirectConfounder,
    IvAsProxy,
    /// Two latent factors with the leading `p` proxies of the 20-proxy table.
    PkRatio(usize),
    Coverage,
}

impl ScenarioId {
    fn table_name(self) -> &'static str {
        match self {
            ScenarioId::Baseline => "baseline",
            ScenarioId::Quadratic => "quadratic",
            ScenarioId::SkewNormal => "skew_normal",
            ScenarioId::BinaryProbit => "binary_probit",
            ScenarioId::DirectConfounder => "direct_confounder",
            ScenarioId::IvAsProxy => "iv_as_proxy",
            ScenarioId::PkRatio(_) => "pk_ratio",
            ScenarioId::Coverage => "coverage",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioId::PkRatio(p) => write!(f, "pk_ratio_p{p}"),
            other => f.write_str(other.table_name()),
        }
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    /// Accepts the display names; `pk_ratio` also parses as `pk_ratio:<p>`
    /// or `pk_ratio(<p>)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let id = match s {
            "baseline" | "consistency" => ScenarioId::Baseline,
            "quadratic" | "higher_order" => ScenarioId::Quadratic,
            "skew_normal" => ScenarioId::SkewNormal,
            "binary_probit" | "binary" => ScenarioId::BinaryProbit,
            "direct_confounder" | "no_latent" => ScenarioId::DirectConfounder,
            "iv_as_proxy" | "iv" => ScenarioId::IvAsProxy,
            "coverage" => ScenarioId::Coverage,
            _ => {
                let rest = s
                    .strip_prefix("pk_ratio_p")
                    .or_else(|| s.strip_prefix("pk_ratio:"))
                    .or_else(|| s.strip_prefix("pk_ratio(").and_then(|r| r.strip_suffix(')')))
                    .ok_or_else(|| Error::UnknownScenario(s.to_string()))?;
                let p = rest
                    .parse()
                    .map_err(|_| Error::UnknownScenario(s.to_string()))?;
                ScenarioId::PkRatio(p)
            }
        };
        Ok(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatentLaw {
    StandardNormal,
    SkewNormal { shape: f64, location: f64, scale: f64 },
}

impl LatentLaw {
    /// First and second raw moments of one latent coordinate.
    pub fn moments(self) -> (f64, f64) {
        match self {
            LatentLaw::StandardNormal => (0.0, 1.0),
            LatentLaw::SkewNormal {
                shape,
                location,
                scale,
            } => {
                let delta = shape / (1.0 + shape * shape).sqrt();
                let es = delta * (2.0 / std::f64::consts::PI).sqrt();
                (
                    location + scale * es,
                    location * location + 2.0 * location * scale * es + scale * scale,
                )
            }
        }
    }
}

/// How to read the second argument of the outcome noise `N(0, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseReading {
    #[default]
    Variance,
    StdDev,
}

/// Parameter block of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    /// Proxy loadings (p x k); zero columns when proxies are not driven by U.
    pub loadings: DMatrix<f64>,
    pub unique_variances: DVector<f64>,
    /// Coefficients of U in the treatment.
    pub treatment_loadings: DVector<f64>,
    /// Coefficients of Z in the treatment.
    pub instrument_loadings: DVector<f64>,
    pub treatment_intercept: f64,
    pub alpha: DVector<f64>,
    pub gamma: DVector<f64>,
    pub outcome_noise: f64,
    pub latent: LatentLaw,
    pub latent_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: ScenarioId,
    pub n: usize,
    pub seed: u64,
    pub params: ScenarioParams,
    pub noise_reading: NoiseReading,
}

impl ScenarioSpec {
    /// Spec with the tabulated parameter block for `scenario`.
    pub fn new(scenario: ScenarioId, n: usize, seed: u64) -> Result<Self> {
        let params = tabulated_params(scenario)?;
        let spec = ScenarioSpec {
            scenario,
            n,
            seed,
            params,
            noise_reading: NoiseReading::Variance,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ScenarioSpec {
            seed,
            ..self.clone()
        }
    }

    pub fn p(&self) -> usize {
        self.params.unique_variances.len()
    }

    pub fn validate(&self) -> Result<()> {
        let pr = &self.params;
        if self.n == 0 {
            return Err(Error::InvalidParams("n must be positive".into()));
        }
        let p = self.p();
        let latent_proxies = self.proxies_load_on_latent();
        if latent_proxies {
            if pr.loadings.nrows() != p || pr.loadings.ncols() != pr.latent_dim {
                return Err(Error::InvalidParams(format!(
                    "loadings must be {p} x {}",
                    pr.latent_dim
                )));
            }
        }
        if pr.treatment_loadings.len() != pr.latent_dim {
            return Err(Error::InvalidParams(
                "treatment loadings length must equal the latent dimension".into(),
            ));
        }
        let instruments_expected = match self.scenario {
            ScenarioId::IvAsProxy | ScenarioId::DirectConfounder => p,
            _ => 0,
        };
        if pr.instrument_loadings.len() != instruments_expected {
            return Err(Error::InvalidParams(format!(
                "instrument loadings must have length {instruments_expected}"
            )));
        }
        let basis = self.basis_len();
        if pr.alpha.len() != basis || pr.gamma.len() != basis {
            return Err(Error::InvalidParams(format!(
                "outcome coefficients must have length {basis}"
            )));
        }
        if pr.unique_variances.iter().any(|v| !(*v > 0.0)) || !(pr.outcome_noise >= 0.0) {
            return Err(Error::InvalidParams("variances must be positive".into()));
        }
        if let ScenarioId::PkRatio(pp) = self.scenario {
            if !(2..=20).contains(&pp) || pr.latent_dim != 2 || pp != p {
                return Err(Error::InvalidParams(
                    "pk_ratio needs p in 2..=20 and k = 2".into(),
                ));
            }
        }
        if let LatentLaw::SkewNormal { scale, .. } = pr.latent {
            if !(scale > 0.0) {
                return Err(Error::InvalidParams("skew-normal scale must be > 0".into()));
            }
        }
        Ok(())
    }

    fn proxies_load_on_latent(&self) -> bool {
        !matches!(
            self.scenario,
            ScenarioId::IvAsProxy | ScenarioId::DirectConfounder
        )
    }

    fn basis_len(&self) -> usize {
        match self.scenario {
            ScenarioId::DirectConfounder => 1 + self.p(),
            ScenarioId::Quadratic => 1 + 2 * self.params.latent_dim,
            _ => 1 + self.params.latent_dim,
        }
    }

    /// The MIMIC parameters of the generating process, for scenarios whose
    /// proxies and treatment follow the factor model (continuous treatment,
    /// unit treatment noise).
    pub fn mimic_params(&self) -> Option<MimicParams> {
        if !self.proxies_load_on_latent() {
            return None;
        }
        MimicParams::without_covariates(
            self.params.loadings.clone(),
            self.params.unique_variances.clone(),
            self.params.treatment_loadings.clone(),
            self.params.treatment_intercept,
            1.0,
        )
        .ok()
    }
}

fn tabulated_params(scenario: ScenarioId) -> Result<ScenarioParams> {
    let t = tables()
        .get(scenario.table_name())
        .ok_or_else(|| Error::UnknownScenario(scenario.to_string()))?;
    let vec = |v: &Option<Vec<f64>>| DVector::from_vec(v.clone().unwrap_or_default());
    let mut params = ScenarioParams {
        loadings: t.loadings_matrix().unwrap_or_else(|| DMatrix::zeros(0, 0)),
        unique_variances: t.unique_variances().unwrap_or_else(|| DVector::zeros(0)),
        treatment_loadings: vec(&t.treatment_loadings),
        instrument_loadings: vec(&t.instrument_loadings),
        treatment_intercept: t.treatment_intercept,
        alpha: DVector::from_vec(t.alpha.clone()),
        gamma: DVector::from_vec(t.gamma.clone()),
        outcome_noise: t.outcome_noise,
        latent: match (t.skew_shape, t.skew_location, t.skew_scale) {
            (Some(shape), Some(location), Some(scale)) => LatentLaw::SkewNormal {
                shape,
                location,
                scale,
            },
            _ => LatentLaw::StandardNormal,
        },
        latent_dim: 0,
    };
    match scenario {
        ScenarioId::IvAsProxy => {
            let p = t.proxies.unwrap_or(params.instrument_loadings.len());
            params.unique_variances = DVector::from_element(p, 1.0);
            params.loadings = DMatrix::zeros(p, 0);
            params.latent_dim = t.latent_dim.unwrap_or(params.treatment_loadings.len());
        }
        ScenarioId::DirectConfounder => {
            params.loadings = DMatrix::zeros(params.unique_variances.len(), 0);
            params.latent_dim = 0;
        }
        ScenarioId::PkRatio(p) => {
            if !(2..=20).contains(&p) {
                return Err(Error::InvalidParams(format!(
                    "pk_ratio needs p in 2..=20, got {p}"
                )));
            }
            params.loadings = params.loadings.rows(0, p).into_owned();
            params.unique_variances = params.unique_variances.rows(0, p).into_owned();
            params.latent_dim = params.loadings.ncols();
        }
        _ => params.latent_dim = params.loadings.ncols(),
    }
    Ok(params)
}

/// A simulated dataset with its ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedSample {
    pub dataset: Dataset,
    /// Latent draws (n x k); zero columns for the direct-confounder design.
    pub u: DMatrix<f64>,
    pub true_ate: f64,
    /// `Y(1) - Y(0)` per row with shared noise.
    pub individual_effects: DVector<f64>,
}

/// Analytic `E[Y(1) - Y(0)] = gamma' E[basis]`.
pub fn true_ate(spec: &ScenarioSpec) -> f64 {
    let pr = &spec.params;
    let (m1, m2) = pr.latent.moments();
    let k = pr.latent_dim;
    let mut expected_basis = vec![1.0];
    match spec.scenario {
        ScenarioId::DirectConfounder => expected_basis.extend(std::iter::repeat_n(0.0, spec.p())),
        ScenarioId::Quadratic => {
            expected_basis.extend(std::iter::repeat_n(m1, k));
            expected_basis.extend(std::iter::repeat_n(m2, k));
        }
        _ => expected_basis.extend(std::iter::repeat_n(m1, k)),
    }
    pr.gamma
        .iter()
        .zip(expected_basis.iter())
        .map(|(g, e)| g * e)
        .sum()
}

fn normal_matrix<R: Rng>(rng: &mut R, n: usize, c: usize) -> DMatrix<f64> {
    // row-major fill so the draw order is independent of storage layout
    let mut m = DMatrix::zeros(n, c);
    for i in 0..n {
        for j in 0..c {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

pub fn generate(spec: &ScenarioSpec) -> Result<GeneratedSample> {
    spec.validate()?;
    let pr = &spec.params;
    let n = spec.n;
    let p = spec.p();
    let k = pr.latent_dim;
    let tag = spec.scenario.to_string();
    let mut rng_u = rng::stream(spec.seed, &[&tag, "u"]);
    let mut rng_z = rng::stream(spec.seed, &[&tag, "z"]);
    let mut rng_a = rng::stream(spec.seed, &[&tag, "a"]);
    let mut rng_y = rng::stream(spec.seed, &[&tag, "y"]);

    let u = match pr.latent {
        LatentLaw::StandardNormal => normal_matrix(&mut rng_u, n, k),
        LatentLaw::SkewNormal {
            shape,
            location,
            scale,
        } => {
            let mut m = DMatrix::zeros(n, k);
            for j in 0..k {
                m.set_column(j, &skew_normal_draws(&mut rng_u, shape, location, scale, n));
            }
            m
        }
    };

    let noise = normal_matrix(&mut rng_z, n, p);
    let sd = pr.unique_variances.map(f64::sqrt);
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = noise[(i, j)] * sd[j];
        }
    }
    if spec.proxies_load_on_latent() {
        z += &u * pr.loadings.transpose();
    }

    let mut a_index = DVector::from_element(n, pr.treatment_intercept);
    if k > 0 {
        a_index += &u * &pr.treatment_loadings;
    }
    if !pr.instrument_loadings.is_empty() {
        a_index += &z * &pr.instrument_loadings;
    }
    for i in 0..n {
        a_index[i] += rng_a.sample::<f64, _>(StandardNormal);
    }
    let a = if spec.scenario == ScenarioId::BinaryProbit {
        a_index.map(|v| if v >= 0.0 { 1.0 } else { 0.0 })
    } else {
        a_index
    };

    let basis = outcome_basis(spec, &u, &z);
    let base = &basis * &pr.alpha;
    let effects = &basis * &pr.gamma;
    let noise_sd = match spec.noise_reading {
        NoiseReading::Variance => pr.outcome_noise.sqrt(),
        NoiseReading::StdDev => pr.outcome_noise,
    };
    let y = DVector::from_fn(n, |i, _| {
        let eps: f64 = rng_y.sample(StandardNormal);
        base[i] + a[i] * effects[i] + noise_sd * eps
    });

    let dataset = Dataset::new(z, a, Some(y), None)?;
    Ok(GeneratedSample {
        dataset,
        u,
        true_ate: true_ate(spec),
        individual_effects: effects,
    })
}

fn outcome_basis(spec: &ScenarioSpec, u: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = spec.n;
    let drivers = if spec.scenario == ScenarioId::DirectConfounder {
        z
    } else {
        u
    };
    let c = drivers.ncols();
    let quadratic = spec.scenario == ScenarioId::Quadratic;
    let width = 1 + c + if quadratic { c } else { 0 };
    DMatrix::from_fn(n, width, |i, j| match j {
        0 => 1.0,
        j if j <= c => drivers[(i, j - 1)],
        j => drivers[(i, j - 1 - c)].powi(2),
    })
}

fn skew_normal_draws<R: Rng>(rng: &mut R, shape: f64, location: f64, scale: f64, n: usize) -> DVector<f64> {
    let delta = shape / (1.0 + shape * shape).sqrt();
    let tail = (1.0 - delta * delta).sqrt();
    DVector::from_fn(n, |_, _| {
        let n1: f64 = rng.sample(StandardNormal);
        let n2: f64 = rng.sample(StandardNormal);
        location + scale * (delta * n1.abs() + tail * n2)
    })
}

/// Skew-normal draws through the two-normal representation
/// `delta |N1| + sqrt(1 - delta^2) N2`, scaled and shifted.
pub fn sample_skew_normal(shape: f64, location: f64, scale: f64, n: usize, seed: u64) -> Result<DVector<f64>> {
    if !(scale > 0.0) {
        return Err(Error::InvalidParams("skew-normal scale must be > 0".into()));
    }
    let mut rng = rng::stream(seed, &["skew_normal"]);
    Ok(skew_normal_draws(&mut rng, shape, location, scale, n))
}

/// Random loadings whose squared row norms equal the requested communalities
/// (cycled over rows when fewer than p are given), with unique variances
/// `1 - communality` so every indicator has unit variance.
pub fn make_loadings(
    p: usize,
    k: usize,
    communality_levels: &[f64],
    seed: u64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if k == 0 || k >= p {
        return Err(Error::InvalidParams(format!(
            "need 1 <= k < p, got k = {k}, p = {p}"
        )));
    }
    if communality_levels.is_empty() || communality_levels.iter().any(|h| !(*h > 0.0 && *h < 1.0)) {
        return Err(Error::InvalidParams(
            "communalities must lie in (0, 1)".into(),
        ));
    }
    let mut rng = rng::stream(seed, &["make_loadings"]);
    for _ in 0..100 {
        let mut l = normal_matrix(&mut rng, p, k);
        let mut psi = DVector::zeros(p);
        for j in 0..p {
            let h = communality_levels[j % communality_levels.len()];
            let norm = l.row(j).norm();
            if norm == 0.0 {
                continue;
            }
            l.row_mut(j).scale_mut(h.sqrt() / norm);
            psi[j] = 1.0 - h;
        }
        let sv = l.singular_values();
        if psi.iter().all(|v| *v > 0.0) && sv.min() > 1e-6 * sv.max() {
            return Ok((l, psi));
        }
    }
    Err(Error::InvalidParams(
        "could not draw full-rank loadings".into(),
    ))
}
