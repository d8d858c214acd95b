//! Replicated simulation experiments, per-group summaries, and the figure
//! plans with their CSV and SVG outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{ContrastSpec, LatentConfig};
use crate::inference::{coverage_experiment, quantile_sorted, BootstrapConfig, CoverageReport};
use crate::methods::{Estimator, Method, MethodEstimator, PciStrategy};
use crate::regression::pairwise_sum;
use crate::rng;
use crate::simgen::{generate, true_ate, ScenarioId, ScenarioSpec};

pub const RAW_HEADER: [&str; 8] = ["scenario", "method", "n", "replicate", "seed", "estimate", "failed", "failure_stage"];

pub const SUMMARY_HEADER: [&str; 11] = [
    "scenario",
    "method",
    "n",
    "replications",
    "median",
    "q25",
    "q75",
    "whisker_low",
    "whisker_high",
    "mean_abs_error",
    "n_failed",
];

/// Desk-scale replication count.
pub const DESK_REPLICATIONS: usize = 200;
pub const FULL_REPLICATIONS: usize = 1000;

/// Estimates with `|est| > OUTLIER_FACTOR * |truth|` are flagged.
pub const OUTLIER_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    /// Scenario name, e.g. `baseline` or `pk_ratio_p6`.
    pub scenario: String,
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub grid: Vec<GridCell>,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub latent: LatentConfig,
    #[serde(default = "default_pci")]
    pub pci: PciStrategy,
    #[serde(default)]
    pub contrast: ContrastSpec,
}

/// Splits averaged by PCI in each replicate; smaller proxy sets use all of
/// theirs (70 at eight proxies).
pub const PCI_SPLITS_PER_REPLICATE: usize = 100;

fn default_pci() -> PciStrategy {
    PciStrategy::Averaged {
        sample: Some(PCI_SPLITS_PER_REPLICATE),
        seed: 0,
    }
}

impl ExperimentPlan {
    pub fn new(grid: Vec<(ScenarioId, Vec<usize>)>, methods: Vec<Method>, replications: usize, master_seed: u64) -> Self {
        ExperimentPlan {
            grid: grid
                .into_iter()
                .map(|(s, n)| GridCell {
                    scenario: s.to_string(),
                    n,
                })
                .collect(),
            methods,
            replications,
            master_seed,
            output_dir: None,
            latent: LatentConfig::default(),
            pci: default_pci(),
            contrast: ContrastSpec::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: ExperimentPlan = toml::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.grid.iter().any(|c| c.n.is_empty()) {
            return Err(Error::InvalidConfig("experiment grid is empty".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("experiment method set is empty".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be positive".into()));
        }
        self.contrast.validate()?;
        self.latent.fit.validate()?;
        for (scenario, n) in self.cells()? {
            ScenarioSpec::new(scenario, n, 0)?;
        }
        Ok(())
    }

    /// `(scenario, n)` pairs in grid order.
    pub fn cells(&self) -> Result<Vec<(ScenarioId, usize)>> {
        let mut out = Vec::new();
        for cell in &self.grid {
            let id: ScenarioId = cell.scenario.parse()?;
            out.extend(cell.n.iter().map(|&n| (id, n)));
        }
        Ok(out)
    }

    fn estimator(&self, method: Method) -> MethodEstimator {
        MethodEstimator {
            method,
            contrast: self.contrast,
            latent: self.latent.clone(),
            pci: self.pci.clone(),
        }
    }
}

/// Seed of the simulated dataset for one replicate of one grid cell.
pub fn replicate_seed(master_seed: u64, scenario: ScenarioId, n: usize, replicate: usize) -> u64 {
    rng::indexed_seed(master_seed, &format!("{scenario}/n{n}"), replicate as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub scenario: String,
    pub method: Method,
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    /// NaN when the estimator failed.
    pub estimate: f64,
    pub failed: bool,
    pub failure_stage: String,
    pub truth: f64,
}

impl RawRow {
    pub fn is_outlier(&self) -> bool {
        !self.failed && self.estimate.abs() > OUTLIER_FACTOR * self.truth.abs()
    }
}

fn failure_label(e: &Error) -> String {
    match e.stage() {
        Some(s) => s.to_string(),
        None => match e {
            Error::RankDeficient { stage, .. } => stage.clone(),
            Error::SingleGroup => "treatment groups".into(),
            Error::Separation { .. } => "propensity model".into(),
            Error::NonPositiveVariance { .. } => "variance".into(),
            _ => "estimate".into(),
        },
    }
}

/// One row per (cell, method, replicate), sorted by grid order, method and
/// replicate. Estimator failures become rows with `failed = true`.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<RawRow>> {
    plan.validate()?;
    let cells = plan.cells()?;
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..plan.replications).map(move |r| (c, r)))
        .collect();
    let estimators: Vec<MethodEstimator> = plan.methods.iter().map(|m| plan.estimator(*m)).collect();
    let per_task: Vec<Vec<(usize, RawRow)>> = tasks
        .par_iter()
        .map(|&(c, r)| -> Result<Vec<(usize, RawRow)>> {
            let (scenario, n) = cells[c];
            let seed = replicate_seed(plan.master_seed, scenario, n, r);
            let sample = generate(&ScenarioSpec::new(scenario, n, seed)?)?;
            Ok(estimators
                .iter()
                .map(|est| {
                    let outcome = est.for_replicate(seed).estimate(&sample.dataset);
                    let (estimate, failed, failure_stage) = match outcome {
                        Ok(res) if res.ate.is_finite() => (res.ate, false, String::new()),
                        Ok(_) => (f64::NAN, true, "non-finite estimate".into()),
                        Err(e) => (f64::NAN, true, failure_label(&e)),
                    };
                    let row = RawRow {
                        scenario: scenario.to_string(),
                        method: est.method,
                        n,
                        replicate: r,
                        seed,
                        estimate,
                        failed,
                        failure_stage,
                        truth: sample.true_ate,
                    };
                    (c, row)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<(usize, RawRow)> = per_task.into_iter().flatten().collect();
    rows.sort_by(|(ca, a), (cb, b)| (ca, a.method, a.replicate).cmp(&(cb, b.method, b.replicate)));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn write_raw_csv<W: Write>(rows: &[RawRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RAW_HEADER)?;
    for r in rows {
        let estimate = if r.failed { String::new() } else { r.estimate.to_string() };
        w.write_record([
            r.scenario.clone(),
            r.method.to_string(),
            r.n.to_string(),
            r.replicate.to_string(),
            r.seed.to_string(),
            estimate,
            r.failed.to_string(),
            r.failure_stage.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a raw results file; the truth column is recomputed from the
/// scenario name.
pub fn read_raw_csv<R: Read>(input: R) -> Result<Vec<RawRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(RAW_HEADER.iter().copied()) {
        return Err(Error::InvalidConfig("raw results header does not match".into()));
    }
    let mut truths: BTreeMap<(String, usize), f64> = BTreeMap::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let parse_err = |j: usize| Error::Parse {
            row: i + 1,
            column: RAW_HEADER[j].to_string(),
            value: field(j).to_string(),
        };
        let scenario = field(0).to_string();
        let n: usize = field(2).parse().map_err(|_| parse_err(2))?;
        let failed: bool = field(6).parse().map_err(|_| parse_err(6))?;
        let estimate = if failed {
            f64::NAN
        } else {
            field(5).parse().map_err(|_| parse_err(5))?
        };
        let truth = match truths.get(&(scenario.clone(), n)) {
            Some(t) => *t,
            None => {
                let t = true_ate(&ScenarioSpec::new(scenario.parse()?, n, 0)?);
                truths.insert((scenario.clone(), n), t);
                t
            }
        };
        rows.push(RawRow {
            method: field(1).parse()?,
            n,
            replicate: field(3).parse().map_err(|_| parse_err(3))?,
            seed: field(4).parse().map_err(|_| parse_err(4))?,
            estimate,
            failed,
            failure_stage: field(7).to_string(),
            truth,
            scenario,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: Method,
    pub n: usize,
    /// Rows in the group, failed ones included.
    pub replications: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub mean_abs_error: f64,
    pub n_failed: usize,
    #[serde(skip)]
    pub n_outliers: usize,
    #[serde(skip)]
    pub truth: f64,
}

impl SummaryRow {
    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }

    pub fn median_bias(&self) -> f64 {
        self.median - self.truth
    }
}

/// Box-plot statistics for one group of estimates. Whiskers stop at the most
/// extreme estimate or 1.5 IQR beyond the hinge, whichever is nearer.
pub fn box_stats(estimates: &[f64]) -> Option<[f64; 5]> {
    if estimates.is_empty() {
        return None;
    }
    let mut v = estimates.to_vec();
    v.sort_by(f64::total_cmp);
    let q25 = quantile_sorted(&v, 0.25);
    let median = quantile_sorted(&v, 0.5);
    let q75 = quantile_sorted(&v, 0.75);
    let iqr = q75 - q25;
    let low = v[0].max(q25 - 1.5 * iqr);
    let high = v[v.len() - 1].min(q75 + 1.5 * iqr);
    Some([low, q25, median, q75, high])
}

/// Per (scenario, method, n) summaries, ordered by those keys.
pub fn summarize(rows: &[RawRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize, Method), Vec<&RawRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.scenario.clone(), r.n, r.method)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((scenario, n, method), group)| {
            let truth = group[0].truth;
            let ok: Vec<f64> = group.iter().filter(|r| !r.failed).map(|r| r.estimate).collect();
            let [whisker_low, q25, median, q75, whisker_high] = box_stats(&ok).unwrap_or([f64::NAN; 5]);
            let mut abs_err: Vec<f64> = ok.iter().map(|e| (e - truth).abs()).collect();
            abs_err.sort_by(f64::total_cmp);
            let mean_abs_error = if abs_err.is_empty() {
                f64::NAN
            } else {
                pairwise_sum(&abs_err) / abs_err.len() as f64
            };
            SummaryRow {
                scenario,
                method,
                n,
                replications: group.len(),
                median,
                q25,
                q75,
                whisker_low,
                whisker_high,
                mean_abs_error,
                n_failed: group.len() - ok.len(),
                n_outliers: group.iter().filter(|r| r.is_outlier()).count(),
                truth,
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.method.to_string(),
            r.n.to_string(),
            r.replications.to_string(),
            r.median.to_string(),
            r.q25.to_string(),
            r.q75.to_string(),
            r.whisker_low.to_string(),
            r.whisker_high.to_string(),
            r.mean_abs_error.to_string(),
            r.n_failed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Box plots grouped by (scenario, n), one box per method, with a dashed
/// line at each group's true effect.
pub fn render_boxplot_svg(title: &str, rows: &[SummaryRow]) -> String {
    const W: f64 = 960.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 60.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 60.0;
    const COLORS: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];
    let finite: Vec<&SummaryRow> = rows.iter().filter(|r| r.median.is_finite()).collect();
    let mut groups: Vec<(String, usize)> = Vec::new();
    for r in &finite {
        let key = (r.scenario.clone(), r.n);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let mut methods: Vec<Method> = finite.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in &finite {
        lo = lo.min(r.whisker_low).min(r.truth);
        hi = hi.max(r.whisker_high).max(r.truth);
    }
    if !(lo < hi) {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_h = H - TOP - BOTTOM;
    let y = |v: f64| TOP + (hi - v) / (hi - lo) * plot_h;
    let group_w = (W - LEFT - 20.0) / groups.len().max(1) as f64;
    let box_w = group_w / (methods.len() as f64 + 1.0);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, xml_escape(title));
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, H - BOTTOM);
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, LEFT - 4.0, y(v) + 4.0);
    }
    for (g, (scenario, n)) in groups.iter().enumerate() {
        let x0 = LEFT + g as f64 * group_w;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{} n={n}</text>"#, x0 + group_w / 2.0, H - BOTTOM + 18.0, xml_escape(scenario));
        for r in finite.iter().filter(|r| &r.scenario == scenario && r.n == *n) {
            let m = methods.iter().position(|m| *m == r.method).unwrap_or(0);
            let color = COLORS[m % COLORS.len()];
            let cx = x0 + box_w * (m as f64 + 1.0);
            let half = box_w * 0.35;
            let _ = writeln!(s, r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="{color}"/>"#, y(r.whisker_high), y(r.whisker_low));
            let _ = writeln!(s, r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>"#, cx - half, y(r.q75), 2.0 * half, (y(r.q25) - y(r.q75)).max(0.5));
            let _ = writeln!(s, r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#, cx - half, y(r.median), cx + half, y(r.median));
        }
        if let Some(r) = finite.iter().find(|r| &r.scenario == scenario && r.n == *n) {
            let _ = writeln!(s, r#"<line x1="{x0:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="4 3"/>"#, y(r.truth), x0 + group_w, y(r.truth));
        }
    }
    for (m, method) in methods.iter().enumerate() {
        let x = LEFT + 10.0 + m as f64 * 100.0;
        let _ = writeln!(s, r#"<rect x="{x:.1}" y="{}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{}">{method}</text>"#, H - 22.0, COLORS[m % COLORS.len()], x + 14.0, H - 13.0);
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Figure {
    Consistency,
    ProxyRatio,
    Quadratic,
    SkewNormal,
    Binary,
    DirectConfounder,
    InstrumentAsProxy,
    Coverage,
}

impl Figure {
    pub const ALL: [Figure; 8] = [
        Figure::Consistency,
        Figure::ProxyRatio,
        Figure::Quadratic,
        Figure::SkewNormal,
        Figure::Binary,
        Figure::DirectConfounder,
        Figure::InstrumentAsProxy,
        Figure::Coverage,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Figure::Consistency => "2a",
            Figure::ProxyRatio => "2b",
            Figure::Quadratic => "3a",
            Figure::SkewNormal => "3b",
            Figure::Binary => "3c",
            Figure::DirectConfounder => "3d",
            Figure::InstrumentAsProxy => "3e",
            Figure::Coverage => "coverage",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Figure::Consistency => "Baseline scenario across sample sizes",
            Figure::ProxyRatio => "Two latent factors, varying proxy count (n = 1000)",
            Figure::Quadratic => "Outcome quadratic in the latent factor",
            Figure::SkewNormal => "Skew-normal latent factor",
            Figure::Binary => "Binary probit treatment",
            Figure::DirectConfounder => "Proxies are direct confounders",
            Figure::InstrumentAsProxy => "Proxies are instruments",
            Figure::Coverage => "Bootstrap coverage",
        }
    }
}

impl std::str::FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Figure::ALL
            .into_iter()
            .find(|f| f.id() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown figure `{s}`")))
    }
}

/// Replication plan behind a box-plot figure; `None` for coverage.
pub fn figure_plan(figure: Figure, full: bool, master_seed: u64) -> Option<ExperimentPlan> {
    let reps = if full { FULL_REPLICATIONS } else { DESK_REPLICATIONS };
    let main = vec![Method::Latent, Method::Linear, Method::Ipw, Method::Pci];
    let with_iv = vec![Method::Latent, Method::Linear, Method::Ipw, Method::Iv, Method::Pci];
    let (grid, methods) = match figure {
        Figure::Consistency => (vec![(ScenarioId::Baseline, vec![250, 500, 1000, 2000, 4000])], main),
        Figure::ProxyRatio => (
            (1..=8).map(|r| (ScenarioId::PkRatio(2 * r), vec![1000])).collect(),
            main,
        ),
        Figure::Quadratic => (vec![(ScenarioId::Quadratic, vec![1000])], with_iv),
        Figure::SkewNormal => (vec![(ScenarioId::SkewNormal, vec![1000])], with_iv),
        Figure::Binary => (vec![(ScenarioId::BinaryProbit, vec![1000])], with_iv),
        Figure::DirectConfounder => (vec![(ScenarioId::DirectConfounder, vec![1000])], with_iv),
        Figure::InstrumentAsProxy => (vec![(ScenarioId::IvAsProxy, vec![1000])], with_iv),
        Figure::Coverage => return None,
    };
    Some(ExperimentPlan::new(grid, methods, reps, master_seed))
}

pub const COVERAGE_HEADER: [&str; 8] = [
    "scenario",
    "n",
    "replications",
    "resamples",
    "coverage",
    "mean_width",
    "failed_replications",
    "point_outside",
];

/// Coverage runs of the latent estimator: the correctly specified scenario
/// and the binary one at desk scale, every misspecified scenario with
/// `full`.
pub fn coverage_plan(full: bool) -> Vec<ScenarioId> {
    if full {
        vec![
            ScenarioId::Coverage,
            ScenarioId::Quadratic,
            ScenarioId::SkewNormal,
            ScenarioId::BinaryProbit,
            ScenarioId::DirectConfounder,
            ScenarioId::IvAsProxy,
        ]
    } else {
        vec![ScenarioId::Coverage, ScenarioId::BinaryProbit]
    }
}

pub fn run_coverage(scenarios: &[ScenarioId], n: usize, replications: usize, resamples: usize, master_seed: u64) -> Result<Vec<(ScenarioId, CoverageReport)>> {
    let estimator = MethodEstimator::new(Method::Latent);
    scenarios
        .iter()
        .map(|&s| {
            let spec = ScenarioSpec::new(s, n, rng::derive_seed(master_seed, &[&s.to_string(), "coverage"]))?;
            let cfg = BootstrapConfig {
                resamples,
                seed: rng::derive_seed(master_seed, &[&s.to_string(), "bootstrap"]),
                ..BootstrapConfig::default()
            };
            coverage_experiment(&spec, &estimator, &cfg, replications).map(|r| (s, r))
        })
        .collect()
}

pub fn write_coverage_csv<W: Write>(rows: &[(ScenarioId, CoverageReport)], n: usize, resamples: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COVERAGE_HEADER)?;
    for (s, r) in rows {
        w.write_record([
            s.to_string(),
            n.to_string(),
            r.replications.to_string(),
            resamples.to_string(),
            r.coverage.to_string(),
            r.mean_width.to_string(),
            r.failed_replications.to_string(),
            r.point_outside.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Files written by [`reproduce`].
#[derive(Debug, Clone)]
pub struct FigureOutputs {
    pub files: Vec<PathBuf>,
    pub summary: Vec<SummaryRow>,
}

/// Runs the plan, writing `raw.csv`, `summary.csv` and `boxplot.svg` under
/// `out`.
pub fn run_and_write(plan: &ExperimentPlan, title: &str, out: &Path) -> Result<FigureOutputs> {
    fs::create_dir_all(out)?;
    let rows = run_experiment(plan)?;
    let summary = summarize(&rows);
    let raw_path = out.join("raw.csv");
    let summary_path = out.join("summary.csv");
    let svg_path = out.join("boxplot.svg");
    write_raw_csv(&rows, fs::File::create(&raw_path)?)?;
    write_summary_csv(&summary, fs::File::create(&summary_path)?)?;
    fs::write(&svg_path, render_boxplot_svg(title, &summary))?;
    Ok(FigureOutputs {
        files: vec![raw_path, summary_path, svg_path],
        summary,
    })
}

pub fn reproduce(figure: Figure, full: bool, master_seed: u64, out: &Path) -> Result<FigureOutputs> {
    let dir = out.join(format!("fig{}", figure.id()));
    match figure_plan(figure, full, master_seed) {
        Some(plan) => run_and_write(&plan, figure.title(), &dir),
        None => {
            fs::create_dir_all(&dir)?;
            let (n, reps, resamples) = (500, 100, 500);
            let rows = run_coverage(&coverage_plan(full), n, reps, resamples, master_seed)?;
            let path = dir.join("coverage.csv");
            write_coverage_csv(&rows, n, resamples, fs::File::create(&path)?)?;
            Ok(FigureOutputs {
                files: vec![path],
                summary: Vec::new(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, replicate: usize, estimate: f64) -> RawRow {
        RawRow {
            scenario: "baseline".into(),
            method,
            n: 100,
            replicate,
            seed: 0,
            estimate,
            failed: !estimate.is_finite(),
            failure_stage: String::new(),
            truth: 0.3,
        }
    }

    #[test]
    fn five_point_summary() {
        let rows: Vec<RawRow> = (1..=5).map(|i| row(Method::Linear, i, i as f64)).collect();
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].median, s[0].q25, s[0].q75), (3.0, 2.0, 4.0));
        assert_eq!((s[0].whisker_low, s[0].whisker_high), (1.0, 5.0));
    }

    #[test]
    fn single_estimate_collapses() {
        let s = summarize(&[row(Method::Latent, 0, 0.7)]);
        let r = &s[0];
        for v in [r.median, r.q25, r.q75, r.whisker_low, r.whisker_high] {
            assert_eq!(v, 0.7);
        }
    }

    #[test]
    fn whiskers_clip_at_fence() {
        let mut rows: Vec<RawRow> = (0..8).map(|i| row(Method::Iv, i, 1.0 + i as f64 * 0.1)).collect();
        rows.push(row(Method::Iv, 8, 100.0));
        let s = &summarize(&rows)[0];
        assert!(s.whisker_high < 100.0);
        assert_eq!(s.whisker_high, s.q75 + 1.5 * s.iqr());
        assert_eq!(s.n_outliers, 1);
    }

    #[test]
    fn failures_are_counted_not_summarized() {
        let rows = vec![row(Method::Pci, 0, 1.0), row(Method::Pci, 1, f64::NAN)];
        let s = &summarize(&rows)[0];
        assert_eq!((s.replications, s.n_failed), (2, 1));
        assert_eq!(s.median, 1.0);
    }

    #[test]
    fn plan_validation() {
        let mut plan = ExperimentPlan::new(vec![(ScenarioId::Baseline, vec![100])], vec![Method::Linear], 2, 0);
        assert!(plan.validate().is_ok());
        plan.methods.clear();
        assert!(plan.validate().is_err());
        let text = r#"
            replications = 3
            master_seed = 9
            methods = ["latent", "pci"]
            [[grid]]
            scenario = "pk_ratio_p4"
            n = [300]
        "#;
        let plan = ExperimentPlan::from_toml(text).unwrap();
        assert_eq!(plan.cells().unwrap(), vec![(ScenarioId::PkRatio(4), 300)]);
        assert!(ExperimentPlan::from_toml("replications = 1\nmaster_seed = 0\nmethods = []\ngrid = []").is_err());
    }

    #[test]
    fn figure_ids_parse() {
        for f in Figure::ALL {
            assert_eq!(f.id().parse::<Figure>().unwrap(), f);
        }
        assert!("4z".parse::<Figure>().is_err());
    }

    #[test]
    fn svg_mentions_every_method() {
        let rows: Vec<RawRow> = (0..5)
            .flat_map(|i| [row(Method::Latent, i, 0.3 + i as f64 * 0.01), row(Method::Linear, i, 0.5)])
            .collect();
        let svg = render_boxplot_svg("t", &summarize(&rows));
        assert!(svg.starts_with("<svg") && svg.contains("latent") && svg.contains("linear"));
    }
}
