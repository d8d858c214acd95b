//! Fixtures shared by the benchmarks.

use latproxy::fitting::{select_k, FitConfig, FitResult};
use latproxy::simgen::generate;
use latproxy::{Dataset, ScenarioId, ScenarioSpec};

pub fn sample(scenario: ScenarioId, n: usize) -> Dataset {
    let spec = ScenarioSpec::new(scenario, n, 7).expect("known scenario");
    generate(&spec).expect("scenario generates").dataset
}

pub fn selected_fit(data: &Dataset) -> FitResult {
    select_k(data, &FitConfig::default()).expect("baseline fits")
}
