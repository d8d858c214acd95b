//! Method identifiers and a uniform estimator interface used by the
//! bootstrap and the experiment harness.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::comparators::{
    enumerate_even_splits, estimate_ipw, estimate_iv, estimate_linear, estimate_pci, estimate_pci_averaged,
    estimate_unadjusted, PciSplit, SplitMode,
};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{estimate_latent_proxy_with, ContrastSpec, EstimateResult, LatentConfig};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Latent,
    Linear,
    Ipw,
    Iv,
    Pci,
    Unadjusted,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Latent,
        Method::Linear,
        Method::Ipw,
        Method::Iv,
        Method::Pci,
        Method::Unadjusted,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Latent => "latent",
            Method::Linear => "linear",
            Method::Ipw => "ipw",
            Method::Iv => "iv",
            Method::Pci => "pci",
            Method::Unadjusted => "unadjusted",
        }
    }

    /// Comma-separated list such as `latent,linear,ipw`.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out: Vec<Method> = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        if out.is_empty() {
            return Err(Error::InvalidConfig("empty method list".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// How PCI chooses its NCO/NCE partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PciStrategy {
    /// One uniformly drawn split.
    RandomSplit { seed: u64 },
    /// Average over every even split, or over `sample` of them when given.
    Averaged { sample: Option<usize>, seed: u64 },
    Fixed { split: PciSplit },
}

impl Default for PciStrategy {
    fn default() -> Self {
        PciStrategy::Averaged { sample: None, seed: 0 }
    }
}

impl PciStrategy {
    pub fn splits(&self, p: usize) -> Result<Vec<PciSplit>> {
        match self {
            PciStrategy::RandomSplit { seed } => enumerate_even_splits(p, SplitMode::Sample { r: 1, seed: *seed }),
            PciStrategy::Averaged { sample: None, .. } => enumerate_even_splits(p, SplitMode::All),
            PciStrategy::Averaged { sample: Some(r), seed } => {
                enumerate_even_splits(p, SplitMode::Sample { r: *r, seed: *seed })
            }
            PciStrategy::Fixed { split } => Ok(vec![split.clone()]),
        }
    }
}

/// Anything that maps a dataset to a scalar estimate.
pub trait Estimator: Sync {
    fn name(&self) -> &str;
    fn estimate(&self, data: &Dataset) -> Result<EstimateResult>;
}

/// A closure-backed estimator, e.g. a sample mean for bootstrap checks.
pub struct FnEstimator<F> {
    pub name: String,
    pub f: F,
}

impl<F> FnEstimator<F>
where
    F: Fn(&Dataset) -> Result<f64> + Sync,
{
    pub fn new(name: &str, f: F) -> Self {
        FnEstimator {
            name: name.to_string(),
            f,
        }
    }
}

impl<F> Estimator for FnEstimator<F>
where
    F: Fn(&Dataset) -> Result<f64> + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn estimate(&self, data: &Dataset) -> Result<EstimateResult> {
        (self.f)(data).map(|v| EstimateResult::point(&self.name, v))
    }
}

/// One of the built-in methods with its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEstimator {
    pub method: Method,
    pub contrast: ContrastSpec,
    pub latent: LatentConfig,
    pub pci: PciStrategy,
}

impl MethodEstimator {
    pub fn new(method: Method) -> Self {
        MethodEstimator {
            method,
            contrast: ContrastSpec::default(),
            latent: LatentConfig::default(),
            pci: PciStrategy::default(),
        }
    }

    pub fn with_contrast(mut self, contrast: ContrastSpec) -> Self {
        self.contrast = contrast;
        self
    }

    pub fn with_pci(mut self, pci: PciStrategy) -> Self {
        self.pci = pci;
        self
    }

    /// Same configuration with any random PCI split choice reseeded from
    /// `replicate_seed`.
    pub fn for_replicate(&self, replicate_seed: u64) -> Self {
        let mut out = self.clone();
        let seed = rng::derive_seed(replicate_seed, &["pci_split"]);
        match &mut out.pci {
            PciStrategy::RandomSplit { seed: s } | PciStrategy::Averaged { sample: Some(_), seed: s } => *s = seed,
            _ => {}
        }
        out
    }
}

impl Estimator for MethodEstimator {
    fn name(&self) -> &str {
        self.method.as_str()
    }

    fn estimate(&self, data: &Dataset) -> Result<EstimateResult> {
        let c = &self.contrast;
        match self.method {
            Method::Latent => estimate_latent_proxy_with(data, c, &self.latent),
            Method::Linear => estimate_linear(data, c),
            Method::Ipw => estimate_ipw(data, c),
            Method::Iv => estimate_iv(data, c),
            Method::Unadjusted => estimate_unadjusted(data, c),
            Method::Pci => {
                let splits = self.pci.splits(data.p())?;
                if splits.len() == 1 {
                    estimate_pci(data, c, &splits[0])
                } else {
                    estimate_pci_averaged(data, c, &splits)
                }
            }
        }
    }
}
