use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use latproxy::comparators::{enumerate_even_splits, SplitMode};
use latproxy::data_io::{ingest, synthetic_ehr_csv, RoleMap, EXAMPLE_ROLE_MAP};
use latproxy::harness::{self, ExperimentPlan, Figure};
use latproxy::inference::{bootstrap_ci, BootstrapConfig};
use latproxy::{ContrastSpec, Estimator, Method, MethodEstimator, PciStrategy, ScenarioId};
use serde_json::json;

/// Above this many even splits, PCI averages over a random sample of them.
const PCI_SPLIT_SAMPLE: usize = 1000;

#[derive(Parser)]
#[command(name = "latproxy", version, about = "Treatment effects with proxies of a latent confounder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replicated runs of one simulation scenario.
    Simulate {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = harness::DESK_REPLICATIONS)]
        reps: usize,
        /// Comma-separated subset of latent,linear,ipw,iv,pci,unadjusted.
        #[arg(long, default_value = "latent,linear,ipw,pci")]
        methods: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the effect of moving the treatment from a0 to a1 on a CSV file.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        /// Role map (TOML).
        #[arg(long)]
        roles: PathBuf,
        #[arg(long, default_value = "latent")]
        method: String,
        #[arg(long, default_value_t = 0.0)]
        a0: f64,
        #[arg(long, default_value_t = 1.0)]
        a1: f64,
        /// Number of bootstrap resamples for a percentile interval.
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Read a tab-separated file regardless of the role map.
        #[arg(long)]
        tab: bool,
        /// Include per-row effects in the output.
        #[arg(long)]
        cate: bool,
    },
    /// Regenerate the data behind one of the simulation figures.
    Reproduce {
        /// One of 2a, 2b, 3a, 3b, 3c, 3d, 3e, coverage.
        #[arg(long)]
        figure: String,
        /// Use the full replication count instead of the desk-scale one.
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment plan (TOML).
    Run {
        #[arg(long)]
        plan: PathBuf,
        /// Overrides the plan's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic emergency-department extract and its role map.
    ExampleData {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            scenario,
            n,
            reps,
            methods,
            seed,
            out,
        } => {
            let id: ScenarioId = scenario.parse()?;
            let plan = ExperimentPlan::new(vec![(id, vec![n])], Method::parse_list(&methods)?, reps, seed);
            let outputs = harness::run_and_write(&plan, &format!("{id}, n = {n}"), &out)?;
            harness::write_summary_csv(&outputs.summary, io::stdout().lock())?;
        }
        Command::Estimate {
            data,
            roles,
            method,
            a0,
            a1,
            bootstrap,
            level,
            seed,
            tab,
            cate,
        } => {
            let mut role_map = RoleMap::load(&roles).with_context(|| format!("reading {}", roles.display()))?;
            if tab {
                role_map.delimiter = Some("tab".into());
            }
            let (dataset, report) = ingest(&data, &role_map).with_context(|| format!("reading {}", data.display()))?;
            let method: Method = method.parse()?;
            let mut estimator = MethodEstimator::new(method).with_contrast(ContrastSpec::new(a0, a1)?);
            if method == Method::Pci {
                estimator.pci = match enumerate_even_splits(dataset.p(), SplitMode::All) {
                    Ok(s) if s.len() <= PCI_SPLIT_SAMPLE => PciStrategy::Averaged { sample: None, seed },
                    _ => PciStrategy::Averaged {
                        sample: Some(PCI_SPLIT_SAMPLE),
                        seed,
                    },
                };
            }
            let mut result = estimator.estimate(&dataset)?;
            if let Some(resamples) = bootstrap {
                let cfg = BootstrapConfig {
                    resamples,
                    level,
                    seed,
                    ..BootstrapConfig::default()
                };
                let ci = bootstrap_ci(&dataset, &estimator, &cfg)?;
                result.ci_lower = Some(ci.lower);
                result.ci_upper = Some(ci.upper);
                result.diagnostics.insert("bootstrap_failed".into(), ci.n_failed as f64);
            }
            if !cate {
                result.cate = None;
            }
            let out = json!({
                "result": result,
                "ingest": report,
                "n": dataset.n(),
                "proxies": dataset.proxy_names,
                "covariates": dataset.covariate_names,
            });
            let mut stdout = io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, &out)?;
            writeln!(stdout)?;
        }
        Command::Reproduce { figure, full, seed, out } => {
            let figure: Figure = figure.parse()?;
            let outputs = harness::reproduce(figure, full, seed, &out)?;
            for f in &outputs.files {
                println!("{}", f.display());
            }
        }
        Command::Run { plan, out } => {
            let mut plan = ExperimentPlan::load(&plan).with_context(|| format!("reading {}", plan.display()))?;
            if out.is_some() {
                plan.output_dir = out;
            }
            let Some(dir) = plan.output_dir.clone() else {
                bail!("no output directory: set `output_dir` in the plan or pass --out");
            };
            let outputs = harness::run_and_write(&plan, "experiment", &dir)?;
            harness::write_summary_csv(&outputs.summary, io::stdout().lock())?;
        }
        Command::ExampleData { n, seed, out } => {
            fs::create_dir_all(&out)?;
            let data = out.join("ed_visits.csv");
            let roles = out.join("roles.toml");
            fs::write(&data, synthetic_ehr_csv(n, seed))?;
            fs::write(&roles, EXAMPLE_ROLE_MAP)?;
            println!("{}\n{}", data.display(), roles.display());
        }
    }
    Ok(())
}
