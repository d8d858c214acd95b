mod common;

use common::*;
use latproxy::data_io::{example_role_map, ingest_reader, synthetic_ehr_csv};
use latproxy::fitting::{fit_mimic, select_k, FitConfig};
use latproxy::harness::{read_raw_csv, run_experiment, summarize, write_raw_csv, ExperimentPlan};
use latproxy::inference::{coverage_with, BootstrapConfig};
use latproxy::methods::FnEstimator;
use latproxy::model::implied_moments;
use latproxy::simgen::{generate, sample_skew_normal};
use latproxy::{Dataset, Method, ScenarioId, ScenarioSpec};
use nalgebra::{DMatrix, DVector};

fn sample_moments(w: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = w.nrows() as f64;
    let mean = w.row_mean().transpose();
    let centered = DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| w[(i, j)] - mean[j]);
    (mean, centered.transpose() * &centered / n)
}

#[test]
fn generated_moments_match_implied_moments() {
    for scenario in [ScenarioId::Baseline, ScenarioId::Coverage] {
        let spec = ScenarioSpec::new(scenario, 100_000, 21).unwrap();
        let params = spec.mimic_params().unwrap();
        let sample = generate(&spec).unwrap();
        let (mean, cov) = sample_moments(&sample.dataset.indicators());
        let implied = implied_moments(&params, &DVector::zeros(0)).unwrap();
        let n = spec.n as f64;
        let s = &implied.covariance;
        for i in 0..s.nrows() {
            assert!((mean[i] - implied.mean[i]).abs() < 3.0 * (s[(i, i)] / n).sqrt(), "{scenario} mean {i}");
            for j in 0..s.ncols() {
                let se = ((s[(i, i)] * s[(j, j)] + s[(i, j)].powi(2)) / n).sqrt();
                assert!((cov[(i, j)] - s[(i, j)]).abs() < 3.0 * se, "{scenario} cov ({i},{j})");
            }
        }
    }
}

#[test]
fn skew_normal_moments() {
    let n = 1_000_000;
    let draws = sample_skew_normal(5.0, -1.26, 1.606, n, 3).unwrap();
    let mean = draws.mean();
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    assert!(mean.abs() < 0.01 && (var - 1.0).abs() < 0.01, "{mean} {var}");

    let sym = sample_skew_normal(0.0, 0.0, 1.0, n, 4).unwrap();
    let m = sym.mean();
    let sd = (sym.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
    let skew = sym.iter().map(|v| ((v - m) / sd).powi(3)).sum::<f64>() / n as f64;
    assert!(skew.abs() < 0.05);
    assert_eq!(draws, sample_skew_normal(5.0, -1.26, 1.606, n, 3).unwrap());
}

#[test]
fn individual_effects_average_to_truth() {
    for scenario in [ScenarioId::Baseline, ScenarioId::Quadratic, ScenarioId::SkewNormal, ScenarioId::Coverage] {
        let sample = generate(&ScenarioSpec::new(scenario, 200_000, 8).unwrap()).unwrap();
        let mean = sample.individual_effects.mean();
        let sd = (sample.individual_effects.variance()).sqrt();
        assert!((mean - sample.true_ate).abs() < 4.0 * sd / (200_000f64).sqrt(), "{scenario}: {mean} vs {}", sample.true_ate);
    }
}

#[test]
fn refit_recovers_implied_covariance() {
    let spec = ScenarioSpec::new(ScenarioId::Baseline, 8000, 2).unwrap();
    let truth = spec.mimic_params().unwrap();
    let sample = generate(&spec).unwrap();
    let fit = fit_mimic(&sample.dataset, truth.k(), &FitConfig::default()).unwrap();
    assert!(fit.converged);
    let x = DVector::zeros(0);
    let a = implied_moments(&truth, &x).unwrap().covariance;
    let b = implied_moments(&fit.params, &x).unwrap().covariance;
    assert!(max_abs_diff(&a, &b) < 0.05, "{}", max_abs_diff(&a, &b));
    for w in fit.loglik_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
    }
}

#[test]
fn aic_selection_on_baseline_picks_a_converged_identified_model() {
    let sample = generate(&ScenarioSpec::new(ScenarioId::Baseline, 2000, 5).unwrap()).unwrap();
    let cfg = FitConfig::default();
    let chosen = select_k(&sample.dataset, &cfg).unwrap();
    assert!(chosen.converged);
    assert!(cfg.candidates(sample.dataset.p()).contains(&chosen.k));
    for k in cfg.candidates(sample.dataset.p()) {
        if let Ok(fit) = fit_mimic(&sample.dataset, k, &cfg) {
            if fit.converged {
                assert!(chosen.aic <= fit.aic + 1e-9);
            }
        }
    }
}

#[test]
fn experiment_rows_and_determinism() {
    let plan = ExperimentPlan::new(vec![(ScenarioId::Baseline, vec![300])], vec![Method::Linear], 3, 17);
    let rows = run_experiment(&plan).unwrap();
    assert_eq!(rows.len(), 3);
    let bytes = |rows: &[latproxy::harness::RawRow]| {
        let mut buf = Vec::new();
        write_raw_csv(rows, &mut buf).unwrap();
        buf
    };
    let first = bytes(&rows);
    assert_eq!(first, bytes(&run_experiment(&plan).unwrap()));
    let back = read_raw_csv(first.as_slice()).unwrap();
    assert_eq!(summarize(&back).len(), 1);
    assert_eq!(back[0].truth, 0.3);

    let plan = ExperimentPlan::new(
        vec![(ScenarioId::Baseline, vec![200, 400]), (ScenarioId::IvAsProxy, vec![200])],
        vec![Method::Unadjusted, Method::Iv],
        2,
        17,
    );
    let rows = run_experiment(&plan).unwrap();
    assert_eq!(rows.len(), 3 * 2 * 2);
    let groups = summarize(&rows);
    assert_eq!(groups.len(), 6);
    assert_eq!(groups.iter().map(|g| g.replications).sum::<usize>(), rows.len());
}

#[test]
fn synthetic_extract_ingests() {
    let csv = synthetic_ehr_csv(500, 1);
    let (data, report) = ingest_reader(csv.as_bytes(), &example_role_map()).unwrap();
    assert_eq!(report.rows_read, 500);
    assert_eq!(data.n(), report.rows_kept);
    assert!(data.treatment_is_binary());
    assert!(data.p() >= 4);
}

#[test]
fn five_rows_one_missing_outcome() {
    let csv = "z1,z2,a,y\n1,2,0,1\n2,1,1,\n0,0,1,1\n3,1,0,0\n1,1,1,1\n";
    let roles = latproxy::data_io::RoleMap::from_toml(
        "[columns]\nz1 = \"proxy\"\nz2 = \"proxy\"\na = \"treatment\"\ny = \"outcome\"\n",
    )
    .unwrap();
    let (data, report) = ingest_reader(csv.as_bytes(), &roles).unwrap();
    assert_eq!(report.rows_dropped_missing_treatment_outcome, 1);
    assert_eq!(data.n(), 4);
}

#[test]
fn sample_mean_bootstrap_has_nominal_coverage() {
    let mean = FnEstimator::new("mean", |d: &Dataset| Ok(d.outcome()?.mean()));
    let generator = |seed: u64| {
        let mut r = rng(seed);
        let n = 100;
        let y = DVector::from_fn(n, |_, _| normal(&mut r));
        let data = Dataset::new(DMatrix::from_element(n, 1, 0.0), DVector::zeros(n), Some(y), None)?;
        Ok((data, 0.0))
    };
    let cfg = BootstrapConfig {
        resamples: 500,
        seed: 12,
        ..BootstrapConfig::default()
    };
    let report = coverage_with(generator, &mean, &cfg, 100).unwrap();
    assert!((0.90..=0.99).contains(&report.coverage), "{}", report.coverage);
}
