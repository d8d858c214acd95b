//! Tabular ingestion: role mapping, missing-data handling, categorical
//! encoding.
//!
//! Ingestion steps, in order:
//!
//! 1. Rows missing the treatment or the outcome are dropped.
//! 2. Rows missing [`EXCESS_MISSING`] or more proxy/covariate cells are
//!    dropped.
//! 3. Missing cells of columns listed in `unknown_category` become the level
//!    `Unknown`.
//! 4. Other missing cells are imputed (numeric: median, categorical: most
//!    frequent level) from the kept rows and counted.
//! 5. Categorical columns are one-hot encoded against a reference level: the
//!    most frequent one (ties broken alphabetically) unless overridden.
//!
//! Empty cells and `NA` are missing. Row numbers in errors count data rows
//! from 1, excluding the header.
//!
//! # Role map
//!
//! ```toml
//! delimiter = ","                # "\t" or "tab" for tab-separated files
//! imputation = "median"          # or "none" for externally imputed files
//! categorical = ["gender", "race", "insurance", "marital_status"]
//! unknown_category = ["race", "insurance", "marital_status"]
//!
//! [columns]
//! stay_id = "ignore"
//! age = "covariate"
//! gender = "covariate"
//! heartrate = "proxy"
//! disposition = "treatment"
//! readmit_30d = "outcome"
//!
//! [treatment_coding]             # omit for numeric treatments
//! ADMITTED = 1.0
//! HOME = 0.0
//!
//! [reference]                    # optional reference-level overrides
//! race = "WHITE"
//! ```
//!
//! [`EXAMPLE_ROLE_MAP`] is a complete map for the columns produced by
//! [`synthetic_ehr_csv`].

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Rows missing at least this many proxy/covariate cells are dropped.
pub const EXCESS_MISSING: usize = 3;

pub const UNKNOWN_LEVEL: &str = "Unknown";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Proxy,
    Treatment,
    Outcome,
    Covariate,
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Imputation {
    #[default]
    Median,
    /// Any missing cell left after the drop rules is an error.
    None,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleMap {
    pub columns: BTreeMap<String, ColumnRole>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub unknown_category: Vec<String>,
    #[serde(default)]
    pub treatment_coding: BTreeMap<String, f64>,
    #[serde(default)]
    pub outcome_coding: BTreeMap<String, f64>,
    #[serde(default)]
    pub reference: BTreeMap<String, String>,
    #[serde(default)]
    pub delimiter: Option<String>,
    #[serde(default)]
    pub imputation: Imputation,
}

impl RoleMap {
    pub fn from_toml(text: &str) -> Result<Self> {
        let map: RoleMap = toml::from_str(text)?;
        map.validate()?;
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Role map for a file written by [`Dataset::write_csv`].
    pub fn for_dataset(data: &Dataset) -> Self {
        let mut columns = BTreeMap::new();
        for (name, role) in data.roles() {
            let r = match role {
                crate::dataset::Role::Proxy => ColumnRole::Proxy,
                crate::dataset::Role::Treatment => ColumnRole::Treatment,
                crate::dataset::Role::Outcome => ColumnRole::Outcome,
                crate::dataset::Role::Covariate => ColumnRole::Covariate,
            };
            columns.insert(name, r);
        }
        RoleMap {
            columns,
            ..RoleMap::default()
        }
    }

    fn with_role(&self, role: ColumnRole) -> impl Iterator<Item = &String> {
        self.columns.iter().filter(move |(_, r)| **r == role).map(|(c, _)| c)
    }

    pub fn validate(&self) -> Result<()> {
        let count = |role| self.with_role(role).count();
        if count(ColumnRole::Treatment) != 1 {
            return Err(Error::Roles("exactly one treatment column is required".into()));
        }
        if count(ColumnRole::Outcome) != 1 {
            return Err(Error::Roles("exactly one outcome column is required".into()));
        }
        if count(ColumnRole::Proxy) == 0 {
            return Err(Error::Roles("at least one proxy column is required".into()));
        }
        for c in self.categorical.iter().chain(&self.unknown_category).chain(self.reference.keys()) {
            match self.columns.get(c) {
                Some(ColumnRole::Proxy | ColumnRole::Covariate) => {}
                _ => {
                    return Err(Error::Roles(format!(
                        "`{c}` is listed as categorical but is not a proxy or covariate"
                    )))
                }
            }
        }
        for c in self.unknown_category.iter().chain(self.reference.keys()) {
            if !self.categorical.contains(c) {
                return Err(Error::Roles(format!("`{c}` must also be listed in `categorical`")));
            }
        }
        self.delimiter_byte()?;
        Ok(())
    }

    pub fn delimiter_byte(&self) -> Result<u8> {
        match self.delimiter.as_deref() {
            None | Some(",") => Ok(b','),
            Some("\t") | Some("tab") => Ok(b'\t'),
            Some(d) if d.len() == 1 => Ok(d.as_bytes()[0]),
            Some(d) => Err(Error::Roles(format!("unsupported delimiter `{d}`"))),
        }
    }

    fn is_categorical(&self, col: &str) -> bool {
        self.categorical.iter().any(|c| c == col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_dropped_missing_treatment_outcome: usize,
    pub rows_dropped_excess_missing: usize,
    pub rows_kept: usize,
    pub cells_imputed: usize,
    pub imputed_per_column: BTreeMap<String, usize>,
    /// Cells recoded to the `Unknown` level, per column.
    pub unknown_category_counts: BTreeMap<String, usize>,
    pub reference_levels: BTreeMap<String, String>,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "NA"
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let t = cell.trim();
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            row,
            column: column.to_string(),
            value: t.to_string(),
        })
}

fn code_cell(cell: &str, coding: &BTreeMap<String, f64>, row: usize, column: &str) -> Result<f64> {
    if coding.is_empty() {
        return parse_number(cell, row, column);
    }
    coding.get(cell.trim()).copied().ok_or_else(|| Error::Parse {
        row,
        column: column.to_string(),
        value: cell.trim().to_string(),
    })
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(crate::inference::quantile_sorted(values, 0.5))
}

/// Most frequent level; ties go to the alphabetically first.
fn modal_level<'a>(counts: &'a BTreeMap<String, usize>) -> Option<&'a String> {
    counts
        .iter()
        .max_by(|(la, ca), (lb, cb)| ca.cmp(cb).then_with(|| lb.cmp(la)))
        .map(|(l, _)| l)
}

enum Encoded {
    Numeric(Vec<f64>),
    /// Indicator columns `(name, values)`.
    Indicators(Vec<(String, Vec<f64>)>),
}

pub fn ingest(path: &Path, roles: &RoleMap) -> Result<(Dataset, IngestReport)> {
    ingest_reader(fs::File::open(path)?, roles)
}

pub fn ingest_reader<R: Read>(input: R, roles: &RoleMap) -> Result<(Dataset, IngestReport)> {
    roles.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(roles.delimiter_byte()?)
        .from_reader(input);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    for h in &headers {
        if !roles.columns.contains_key(h) {
            return Err(Error::Roles(format!("column `{h}` has no role; mark it `ignore` to skip it")));
        }
    }
    let index_of = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    for c in roles.columns.keys() {
        index_of(c)?;
    }
    // file order, not role-map order
    let in_role = |role: ColumnRole| -> Vec<String> {
        headers
            .iter()
            .filter(|h| roles.columns.get(*h) == Some(&role))
            .cloned()
            .collect()
    };
    let proxies = in_role(ColumnRole::Proxy);
    let covariates = in_role(ColumnRole::Covariate);
    let treatment = in_role(ColumnRole::Treatment).remove(0);
    let outcome = in_role(ColumnRole::Outcome).remove(0);
    let t_idx = index_of(&treatment)?;
    let o_idx = index_of(&outcome)?;
    let features: Vec<String> = proxies.iter().chain(&covariates).cloned().collect();
    let feature_idx: Vec<usize> = features.iter().map(|f| index_of(f)).collect::<Result<_>>()?;

    let mut report = IngestReport::default();
    let mut a = Vec::new();
    let mut y = Vec::new();
    // kept rows: raw feature cells, None when missing
    let mut cells: Vec<Vec<Option<String>>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        report.rows_read += 1;
        let get = |j: usize| rec.get(j).unwrap_or("");
        let t_cell = get(t_idx);
        let o_cell = get(o_idx);
        let values: Vec<Option<String>> = feature_idx
            .iter()
            .map(|&j| (!is_missing(get(j))).then(|| get(j).trim().to_string()))
            .collect();
        // numeric cells must parse even on rows that are dropped later
        for (f, v) in features.iter().zip(&values) {
            if let Some(v) = v {
                if !roles.is_categorical(f) {
                    parse_number(v, row, f)?;
                }
            }
        }
        if is_missing(t_cell) || is_missing(o_cell) {
            report.rows_dropped_missing_treatment_outcome += 1;
            continue;
        }
        let a_i = code_cell(t_cell, &roles.treatment_coding, row, &treatment)?;
        let y_i = code_cell(o_cell, &roles.outcome_coding, row, &outcome)?;
        if values.iter().filter(|v| v.is_none()).count() >= EXCESS_MISSING {
            report.rows_dropped_excess_missing += 1;
            continue;
        }
        a.push(a_i);
        y.push(y_i);
        cells.push(values);
    }
    let n = cells.len();
    report.rows_kept = n;
    if n == 0 {
        return Err(Error::NoRowsSurvived);
    }

    let mut encoded: Vec<(String, Encoded)> = Vec::with_capacity(features.len());
    for (j, f) in features.iter().enumerate() {
        let column: Vec<Option<&str>> = cells.iter().map(|r| r[j].as_deref()).collect();
        let missing = column.iter().filter(|c| c.is_none()).count();
        if roles.is_categorical(f) {
            let unknown = roles.unknown_category.contains(f);
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for c in column.iter().flatten() {
                *counts.entry(c.to_string()).or_default() += 1;
            }
            let fill = if unknown {
                if missing > 0 {
                    *counts.entry(UNKNOWN_LEVEL.to_string()).or_default() += missing;
                    report.unknown_category_counts.insert(f.clone(), missing);
                }
                UNKNOWN_LEVEL.to_string()
            } else {
                let mode = modal_level(&counts).cloned();
                match (mode, missing) {
                    (_, 0) => String::new(),
                    (Some(m), _) if roles.imputation == Imputation::Median => {
                        *counts.get_mut(&m).expect("mode is a level") += missing;
                        report.cells_imputed += missing;
                        report.imputed_per_column.insert(f.clone(), missing);
                        m
                    }
                    _ => return Err(Error::Roles(format!("column `{f}` has missing cells and imputation is off"))),
                }
            };
            let reference = match roles.reference.get(f) {
                Some(r) if counts.contains_key(r) => r.clone(),
                Some(r) => return Err(Error::Roles(format!("reference level `{r}` not observed in `{f}`"))),
                None => modal_level(&counts).expect("column has levels").clone(),
            };
            report.reference_levels.insert(f.clone(), reference.clone());
            let levels: Vec<&String> = counts.keys().filter(|l| **l != reference).collect();
            let indicators = levels
                .into_iter()
                .map(|level| {
                    let values = column
                        .iter()
                        .map(|c| f64::from(u8::from(c.unwrap_or(&fill) == level.as_str())))
                        .collect();
                    (format!("{f}={level}"), values)
                })
                .collect();
            encoded.push((f.clone(), Encoded::Indicators(indicators)));
        } else {
            let mut observed: Vec<f64> = column
                .iter()
                .flatten()
                .map(|c| c.parse::<f64>().expect("validated above"))
                .collect();
            let fill = if missing > 0 {
                if roles.imputation == Imputation::None {
                    return Err(Error::Roles(format!("column `{f}` has missing cells and imputation is off")));
                }
                report.cells_imputed += missing;
                report.imputed_per_column.insert(f.clone(), missing);
                median(&mut observed).ok_or_else(|| Error::EmptyColumn(f.clone()))?
            } else {
                0.0
            };
            let values = column
                .iter()
                .map(|c| c.map_or(fill, |v| v.parse().expect("validated above")))
                .collect();
            encoded.push((f.clone(), Encoded::Numeric(values)));
        }
    }

    let assemble = |names: &[String]| -> (DMatrix<f64>, Vec<String>) {
        let mut cols: Vec<(String, Vec<f64>)> = Vec::new();
        for (name, enc) in &encoded {
            if !names.contains(name) {
                continue;
            }
            match enc {
                Encoded::Numeric(v) => cols.push((name.clone(), v.clone())),
                Encoded::Indicators(ind) => cols.extend(ind.iter().cloned()),
            }
        }
        let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j].1[i]);
        (m, cols.into_iter().map(|(c, _)| c).collect())
    };
    let (z, proxy_names) = assemble(&proxies);
    let (x, covariate_names) = assemble(&covariates);
    if z.ncols() == 0 {
        return Err(Error::Roles("proxy columns encode to zero indicator columns".into()));
    }
    let data = Dataset::with_names(
        z,
        DVector::from_vec(a),
        Some(DVector::from_vec(y)),
        x,
        proxy_names,
        covariate_names,
        treatment,
        Some(outcome),
    )?;
    Ok((data, report))
}

/// Role map for [`synthetic_ehr_csv`] output.
pub const EXAMPLE_ROLE_MAP: &str = r#"# Emergency-department visits: demographics are covariates, triage
# measurements and treatment time are proxies, disposition is the treatment
# and 30-day readmission or death the outcome.
delimiter = ","
imputation = "median"
categorical = ["gender", "race", "insurance", "marital_status"]
unknown_category = ["race", "insurance", "marital_status"]

[columns]
stay_id = "ignore"
age = "covariate"
gender = "covariate"
race = "covariate"
insurance = "covariate"
marital_status = "covariate"
heartrate = "proxy"
sbp = "proxy"
dbp = "proxy"
resprate = "proxy"
o2sat = "proxy"
temperature = "proxy"
acuity = "proxy"
treatment_time = "proxy"
disposition = "treatment"
readmit_30d = "outcome"

[treatment_coding]
ADMITTED = 1.0
HOME = 0.0

[outcome_coding]
Yes = 1.0
No = 0.0
"#;

pub fn example_role_map() -> RoleMap {
    RoleMap::from_toml(EXAMPLE_ROLE_MAP).expect("example role map parses")
}

fn pick<'a, R: Rng>(r: &mut R, levels: &[(&'a str, f64)]) -> &'a str {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (l, p) in levels {
        acc += p;
        if u < acc {
            return l;
        }
    }
    levels[levels.len() - 1].0
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Synthetic emergency-department extract with one latent severity driving
/// triage measurements, disposition and the outcome. Demographic missingness
/// is concentrated among discharged patients; a few rows lack the
/// treatment or outcome.
pub fn synthetic_ehr_csv(n: usize, seed: u64) -> String {
    let mut r = rng::stream(seed, &["synthetic_ehr"]);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = String::from(
        "stay_id,age,gender,race,insurance,marital_status,heartrate,sbp,dbp,resprate,o2sat,temperature,acuity,treatment_time,disposition,readmit_30d\n",
    );
    let races = [
        ("WHITE", 0.66),
        ("BLACK", 0.18),
        ("HISPANIC/LATINX", 0.07),
        ("OTHER", 0.05),
        ("ASIAN", 0.038),
        ("AMERICAN INDIAN/ALASKA NATIVE", 0.002),
    ];
    let insurances = [("Medicare", 0.63), ("Other", 0.34), ("Medicaid", 0.03)];
    let maritals = [("MARRIED", 0.47), ("WIDOWED", 0.26), ("SINGLE", 0.18), ("DIVORCED", 0.09)];
    for i in 0..n {
        let severity: f64 = std.sample(&mut r);
        let age = (65.0 + (7.4 * std.sample(&mut r) as f64).abs() + 2.0 * severity.max(0.0)).round();
        let male = r.random::<f64>() < 0.47;
        let admit_p = logistic(0.3 + 1.1 * severity + 0.03 * (age - 75.0) + if male { 0.2 } else { 0.0 });
        let admitted = r.random::<f64>() < admit_p;
        let miss = |r: &mut rand_chacha::ChaCha8Rng, p: f64| r.random::<f64>() < p;
        let demo_missing = if admitted { 0.01 } else { 0.5 };
        let race = if miss(&mut r, 0.006) { "" } else { pick(&mut r, &races) };
        let insurance = if miss(&mut r, demo_missing) { "" } else { pick(&mut r, &insurances) };
        let marital = if miss(&mut r, demo_missing) { "" } else { pick(&mut r, &maritals) };
        let vital = |mean: f64, sd: f64, load: f64, digits: i32, p_miss: f64, r: &mut rand_chacha::ChaCha8Rng| {
            if r.random::<f64>() < p_miss {
                return String::new();
            }
            let z: f64 = std.sample(r);
            let v = mean + sd * (load * severity + (1.0 - load * load).sqrt() * z);
            let scale = 10f64.powi(digits);
            format!("{}", (v * scale).round() / scale)
        };
        let hr = vital(78.0, 16.4, 0.5, 0, 0.001, &mut r);
        let sbp = vital(143.3, 24.6, -0.3, 0, 0.002, &mut r);
        let dbp = vital(74.5, 14.9, -0.2, 0, 0.003, &mut r);
        let rr = vital(17.9, 2.5, 0.4, 0, 0.009, &mut r);
        let o2 = vital(97.9, 2.6, -0.4, 0, 0.006, &mut r);
        let temp = vital(98.0, 0.9, 0.2, 1, 0.016, &mut r);
        let acuity = if r.random::<f64>() < logistic(-1.4 - 0.8 * severity) { 3 } else { 2 };
        let time_mean = if admitted { 7.1 } else { 13.9 };
        let ttime = (time_mean * (0.6 * std.sample(&mut r) as f64 - 0.1 * severity).exp() * 10.0).round() / 10.0;
        let outcome_p = logistic(-1.9 + 0.7 * severity - 0.15 * f64::from(u8::from(admitted)));
        let outcome = if r.random::<f64>() < outcome_p { "Yes" } else { "No" };
        let disposition = if miss(&mut r, 0.002) {
            ""
        } else if admitted {
            "ADMITTED"
        } else {
            "HOME"
        };
        let outcome = if miss(&mut r, 0.002) { "" } else { outcome };
        let gender = if male { "M" } else { "F" };
        out.push_str(&format!(
            "{},{age},{gender},{},{insurance},{marital},{hr},{sbp},{dbp},{rr},{o2},{temp},{acuity},{ttime},{disposition},{outcome}\n",
            30_000_000 + i,
            csv_quote(race),
        ));
    }
    out
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '/']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roles(extra: &str) -> RoleMap {
        RoleMap::from_toml(&format!(
            "{extra}\n[columns]\nz1 = \"proxy\"\nz2 = \"proxy\"\nc = \"covariate\"\na = \"treatment\"\ny = \"outcome\"\n"
        ))
        .unwrap()
    }

    #[test]
    fn drops_missing_outcome() {
        let csv = "z1,z2,c,a,y\n1,2,3,0,1\n2,3,4,1,\n3,1,2,1,0\n4,4,4,0,1\n5,2,1,1,1\n";
        let (d, rep) = ingest_reader(csv.as_bytes(), &roles("")).unwrap();
        assert_eq!(rep.rows_dropped_missing_treatment_outcome, 1);
        assert_eq!(d.n(), 4);
        assert_eq!(rep.rows_read, rep.rows_kept + 1);
    }

    #[test]
    fn excess_missing_and_imputation() {
        let csv = "z1,z2,c,a,y\n1,NA,,0,1\nNA,NA,NA,1,0\n3,5,2,1,0\n5,1,4,0,1\n";
        let (d, rep) = ingest_reader(csv.as_bytes(), &roles("")).unwrap();
        assert_eq!(rep.rows_dropped_excess_missing, 1);
        assert_eq!(rep.cells_imputed, 2);
        assert_eq!(d.z[(0, 1)], 3.0);
        assert_eq!(d.x[(0, 0)], 3.0);
    }

    #[test]
    fn most_frequent_level_is_reference() {
        let csv = "z1,z2,c,a,y\n1,2,a,0,1\n2,1,a,1,0\n3,3,b,1,0\n4,2,a,0,1\n";
        let (d, rep) = ingest_reader(csv.as_bytes(), &roles("categorical = [\"c\"]")).unwrap();
        assert_eq!(d.covariate_names, vec!["c=b".to_string()]);
        assert_eq!(d.x.column(0).as_slice(), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(rep.reference_levels["c"], "a");
    }

    #[test]
    fn reference_ties_break_alphabetically() {
        let csv = "z1,z2,c,a,y\n1,2,q,0,1\n2,1,p,1,0\n3,3,q,1,0\n4,2,p,0,1\n";
        let (d, _) = ingest_reader(csv.as_bytes(), &roles("categorical = [\"c\"]")).unwrap();
        assert_eq!(d.covariate_names, vec!["c=q".to_string()]);
    }

    #[test]
    fn unknown_level_for_missing_categories() {
        let csv = "z1,z2,c,a,y\n1,2,a,0,1\n2,1,,1,0\n3,3,a,1,0\n";
        let (d, rep) = ingest_reader(
            csv.as_bytes(),
            &roles("categorical = [\"c\"]\nunknown_category = [\"c\"]"),
        )
        .unwrap();
        assert_eq!(rep.unknown_category_counts["c"], 1);
        assert_eq!(rep.cells_imputed, 0);
        assert_eq!(d.covariate_names, vec!["c=Unknown".to_string()]);
    }

    #[test]
    fn parse_error_names_row_and_column() {
        let csv = "z1,z2,c,a,y\n1,2,3,0,1\n1,x2,3,0,1\n";
        match ingest_reader(csv.as_bytes(), &roles("")) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "z2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_column_and_unmapped_column() {
        let csv = "z1,c,a,y\n1,3,0,1\n";
        assert!(matches!(ingest_reader(csv.as_bytes(), &roles("")), Err(Error::MissingColumn(c)) if c == "z2"));
        let csv = "z1,z2,c,a,y,w\n1,2,3,0,1,9\n";
        assert!(matches!(ingest_reader(csv.as_bytes(), &roles("")), Err(Error::Roles(_))));
    }

    #[test]
    fn no_surviving_rows() {
        let csv = "z1,z2,c,a,y\n1,2,3,,1\n";
        assert!(matches!(ingest_reader(csv.as_bytes(), &roles("")), Err(Error::NoRowsSurvived)));
    }

    #[test]
    fn tab_delimited() {
        let csv = "z1\tz2\tc\ta\ty\n1\t2\t3\t0\t1\n2\t5\t1\t1\t0\n";
        let (d, _) = ingest_reader(csv.as_bytes(), &roles("delimiter = \"tab\"")).unwrap();
        assert_eq!(d.n(), 2);
    }

    #[test]
    fn role_map_validation() {
        assert!(RoleMap::from_toml("[columns]\nz = \"proxy\"\ny = \"outcome\"").is_err());
        assert!(RoleMap::from_toml("[columns]\nz = \"proxy\"\na = \"treatment\"\ny = \"outcome\"\nb = \"treatment\"").is_err());
        assert!(RoleMap::from_toml("unknown_category = [\"z\"]\n[columns]\nz = \"proxy\"\na = \"treatment\"\ny = \"outcome\"").is_err());
        example_role_map();
    }
}
