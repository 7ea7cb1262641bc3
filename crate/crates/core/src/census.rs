//! Adult census records to a privacy model: income level is private, the
//! (age group, sex, education group) triple is useful, and releases erase up
//! to two of the three attributes.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{DistortionSpec, PrivacyModel};
use crate::prob::JointDist;

/// Marker for an erased attribute in release labels.
pub const ERASED: &str = "-";

pub const AGE_GROUPS: [&str; 3] = ["young", "middle-aged", "senior"];
pub const SEXES: [&str; 2] = ["male", "female"];
pub const EDUCATION_GROUPS: [&str; 3] = ["others", "college", "graduate"];
pub const INCOME_LEVELS: [&str; 2] = ["<=50K", ">50K"];

/// How raw attributes map to categories.
#[derive(Debug, Clone, PartialEq)]
pub struct BinningSpec {
    /// Inclusive upper ends of the age groups: `[0, b0]`, `(b0, b1]`, `(b1, b2]`.
    pub age_breaks: [u32; 3],
    /// Raw education code to index into [`EDUCATION_GROUPS`].
    pub education_groups: HashMap<String, usize>,
    /// Income label of the upper class; the lower one is `<=` the same amount.
    pub income_threshold: String,
}

impl Default for BinningSpec {
    fn default() -> Self {
        let others = [
            "Preschool", "1st-4th", "5th-6th", "7th-8th", "9th", "10th", "11th", "12th", "HS-grad",
        ];
        let college = ["Some-college", "Assoc-acdm", "Assoc-voc", "Bachelors", "Prof-school"];
        let graduate = ["Masters", "Doctorate"];
        let mut education_groups = HashMap::new();
        for (g, codes) in [&others[..], &college[..], &graduate[..]].iter().enumerate() {
            for c in codes.iter() {
                education_groups.insert(c.to_string(), g);
            }
        }
        BinningSpec { age_breaks: [30, 60, 100], education_groups, income_threshold: "50K".into() }
    }
}

impl BinningSpec {
    pub fn age_group(&self, age: u32) -> Option<usize> {
        self.age_breaks.iter().position(|&b| age <= b)
    }

    pub fn education_group(&self, code: &str) -> Option<usize> {
        self.education_groups.get(code).copied()
    }

    /// 0 for the lower income class, 1 for the upper one. A trailing period
    /// (as in the test split) is ignored.
    pub fn income_class(&self, label: &str) -> Option<usize> {
        let l = label.trim().trim_end_matches('.');
        let t = &self.income_threshold;
        if l == format!(">{t}") {
            Some(1)
        } else if l == format!("<={t}") {
            Some(0)
        } else {
            None
        }
    }
}

/// Useful-data index of an (age, sex, education) triple.
pub fn y_index(age: usize, sex: usize, edu: usize) -> usize {
    (age * SEXES.len() + sex) * EDUCATION_GROUPS.len() + edu
}

/// Attribute triples in [`y_index`] order.
pub fn y_attributes() -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for a in AGE_GROUPS {
        for s in SEXES {
            for e in EDUCATION_GROUPS {
                out.push(vec![a.to_string(), s.to_string(), e.to_string()]);
            }
        }
    }
    out
}

fn join(attrs: &[String]) -> String {
    attrs.join("|")
}

/// Release alphabet obtained by erasing up to `max_erased` attributes of each
/// useful tuple. Returns the release labels, the distortion (number of
/// erased attributes, `+∞` for a release inconsistent with `y`) and the
/// support mask.
///
/// Releases are ordered by erasure count, then by first appearance.
pub fn build_erasure_alphabet(y_attrs: &[Vec<String>], max_erased: usize) -> (Vec<String>, Matrix, Vec<bool>) {
    let k = y_attrs.first().map_or(0, |a| a.len());
    let mut subsets: Vec<Vec<usize>> = (0u32..(1 << k))
        .map(|bits| (0..k).filter(|&i| bits & (1 << i) != 0).collect::<Vec<_>>())
        .filter(|s| s.len() <= max_erased)
        .collect();
    subsets.sort_by_key(|s| s.len());
    let mut patterns: Vec<Vec<String>> = Vec::new();
    let mut index: HashMap<Vec<String>, usize> = HashMap::new();
    let mut per_y: Vec<Vec<(usize, usize)>> = vec![Vec::new(); y_attrs.len()];
    for erase_count in 0..=max_erased.min(k) {
        for (y, attrs) in y_attrs.iter().enumerate() {
            for s in subsets.iter().filter(|s| s.len() == erase_count) {
                let mut pat = attrs.clone();
                for &i in s {
                    pat[i] = ERASED.to_string();
                }
                let z = *index.entry(pat.clone()).or_insert_with(|| {
                    patterns.push(pat);
                    patterns.len() - 1
                });
                per_y[y].push((z, erase_count));
            }
        }
    }
    let nz = patterns.len();
    let ny = y_attrs.len();
    let mut d = Matrix::filled(ny, nz, f64::INFINITY);
    let mut mask = vec![false; ny * nz];
    for (y, entries) in per_y.iter().enumerate() {
        for &(z, c) in entries {
            d[(y, z)] = c as f64;
            mask[y * nz + z] = true;
        }
    }
    (patterns.iter().map(|p| join(p)).collect(), d, mask)
}

/// Counts and model built from the census records.
#[derive(Debug, Clone)]
pub struct CensusModel {
    /// `n_{x,y}`, income class by useful tuple.
    pub counts: Vec<Vec<u64>>,
    pub model: PrivacyModel,
    /// Data rows seen, before dropping.
    pub raw_records: u64,
    /// Rows dropped for a missing (`?`) value in a used column.
    pub dropped_missing: u64,
}

impl CensusModel {
    pub fn retained(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Columns {
    age: usize,
    education: usize,
    sex: usize,
    income: usize,
}

/// Positions in the headerless Adult files.
const ADULT_COLUMNS: Columns = Columns { age: 0, education: 3, sex: 9, income: 14 };

fn header_columns(header: &csv::StringRecord) -> Result<Columns> {
    let find = |names: &[&str]| -> Result<usize> {
        header
            .iter()
            .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
            .ok_or_else(|| Error::MissingColumn(names[0].to_string()))
    };
    Ok(Columns {
        age: find(&["age"])?,
        education: find(&["education"])?,
        sex: find(&["sex", "gender"])?,
        income: find(&["income", "class", "salary"])?,
    })
}

fn looks_like_header(rec: &csv::StringRecord) -> bool {
    rec.get(0).is_some_and(|f| f.trim().parse::<f64>().is_err())
}

/// Tallies one file into `counts`. Returns `(raw, dropped)`.
fn tally_file(path: &Path, spec: &BinningSpec, counts: &mut [Vec<u64>]) -> Result<(u64, u64)> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'|'))
        .from_reader(file);
    let mut cols = ADULT_COLUMNS;
    let (mut raw, mut dropped) = (0u64, 0u64);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if i == 0 && looks_like_header(&rec) {
            cols = header_columns(&rec)?;
            continue;
        }
        let line = rec.position().map_or(0, |p| p.line());
        let ctx = |what: &str, v: &str| Error::Parse(format!("{}:{line}: bad {what} '{v}'", path.display()));
        let field = |j: usize, name: &str| {
            rec.get(j).ok_or_else(|| Error::Parse(format!("{}:{line}: no {name} field", path.display())))
        };
        raw += 1;
        let (age, edu, sex, inc) = (
            field(cols.age, "age")?,
            field(cols.education, "education")?,
            field(cols.sex, "sex")?,
            field(cols.income, "income")?,
        );
        if [age, edu, sex, inc].iter().any(|v| v.is_empty() || *v == "?") {
            dropped += 1;
            continue;
        }
        let a = age
            .parse::<u32>()
            .ok()
            .and_then(|a| spec.age_group(a))
            .ok_or_else(|| ctx("age", age))?;
        let e = spec.education_group(edu).ok_or_else(|| ctx("education", edu))?;
        let s = SEXES
            .iter()
            .position(|s| s.eq_ignore_ascii_case(sex))
            .ok_or_else(|| ctx("sex", sex))?;
        let x = spec.income_class(inc).ok_or_else(|| ctx("income", inc))?;
        counts[x][y_index(a, s, e)] += 1;
    }
    Ok((raw, dropped))
}

/// Reads the census files (train and test splits are simply concatenated)
/// and builds the model with `δ = 0`.
pub fn ingest<P: AsRef<Path>>(paths: &[P], spec: &BinningSpec) -> Result<CensusModel> {
    let attrs = y_attributes();
    let mut counts = vec![vec![0u64; attrs.len()]; INCOME_LEVELS.len()];
    let (mut raw, mut dropped) = (0, 0);
    for p in paths {
        let (r, d) = tally_file(p.as_ref(), spec, &mut counts)?;
        raw += r;
        dropped += d;
    }
    let total: u64 = counts.iter().flatten().sum();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    for (x, row) in counts.iter().enumerate() {
        if let Some(y) = row.iter().position(|&c| c == 0) {
            return Err(Error::AssumptionViolation(format!(
                "no record with income {} and attributes {}",
                INCOME_LEVELS[x],
                join(&attrs[y])
            )));
        }
    }
    let model = model_from_counts(&counts)?;
    Ok(CensusModel { counts, model, raw_records: raw, dropped_missing: dropped })
}

/// Census model for an arbitrary count table over the standard alphabets.
pub fn model_from_counts(counts: &[Vec<u64>]) -> Result<PrivacyModel> {
    let attrs = y_attributes();
    let total: u64 = counts.iter().flatten().sum();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    let rows: Vec<Vec<f64>> = counts
        .iter()
        .map(|r| r.iter().map(|&c| c as f64 / total as f64).collect())
        .collect();
    let p = Matrix::from_rows(&rows).ok_or_else(|| Error::DimensionMismatch("ragged counts".into()))?;
    let joint = JointDist::with_labels(
        p,
        INCOME_LEVELS.iter().map(|s| s.to_string()).collect(),
        attrs.iter().map(|a| join(a)).collect(),
    )?;
    let (z_labels, d, _) = build_erasure_alphabet(&attrs, 2);
    PrivacyModel::new(joint, DistortionSpec::new(d, 0.0)?, z_labels)
}
