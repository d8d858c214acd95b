//! Treatment-effect estimation with a latent confounder measured through
//! proxy variables, together with comparison estimators, a simulation
//! suite, bootstrap inference and tabular data ingestion.

pub mod comparators;
pub mod data_io;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod fitting;
pub mod harness;
pub mod inference;
pub mod methods;
pub mod model;
pub mod regression;
pub mod rng;
pub mod simgen;

pub use comparators::{PciSplit, SplitMode};
pub use dataset::{Dataset, Role};
pub use error::{Error, Result};
pub use estimators::{ContrastSpec, EstimateResult, LatentConfig};
pub use fitting::{FitConfig, FitResult};
pub use inference::{BootstrapConfig, BootstrapInterval, CoverageReport, FailurePolicy};
pub use methods::{Estimator, Method, MethodEstimator, PciStrategy};
pub use model::{GaussianPosterior, MimicParams};
pub use simgen::{GeneratedSample, ScenarioId, ScenarioSpec};
