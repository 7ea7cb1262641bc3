//! JSON model and prior files, CSV matrices.
//!
//! Model JSON:
//!
//! ```json
//! { "x_labels": ["x0", "x1"], "y_labels": ["y0", "y1"], "z_labels": ["y0", "y1"],
//!   "p_xy": [[0.4, 0.1], [0.1, 0.4]],
//!   "distortion": [[0, 1], [1, "inf"]],
//!   "delta": 0.2 }
//! ```
//!
//! Labels default to `x0, y0, z0, ...`; a missing `distortion` means Hamming
//! distortion with `Z = Y`. Prior files hold `p_hat_xy` (or `p_xy`); Dirichlet
//! files hold `alpha`, or `counts` together with `nu`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{AdversaryPrior, DistortionSpec, PrivacyModel};
use crate::priors::DirichletPrior;
use crate::prob::{Channel, JointDist};

/// A matrix entry that may be written as the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Entry {
    Num(f64),
    Text(InfText),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum InfText {
    #[serde(rename = "inf", alias = "Inf", alias = "infinity", alias = "Infinity")]
    Inf,
}

impl Entry {
    fn value(self) -> f64 {
        match self {
            Entry::Num(v) => v,
            Entry::Text(InfText::Inf) => f64::INFINITY,
        }
    }

    fn from_value(v: f64) -> Self {
        if v == f64::INFINITY {
            Entry::Text(InfText::Inf)
        } else {
            Entry::Num(v)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z_labels: Option<Vec<String>>,
    p_xy: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distortion: Option<Vec<Vec<Entry>>>,
    #[serde(default)]
    delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PriorFile {
    #[serde(alias = "p_xy")]
    p_hat_xy: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DirichletFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    counts: Option<Vec<Vec<u64>>>,
}

fn labels(given: Option<Vec<String>>, prefix: &str, n: usize) -> Vec<String> {
    given.unwrap_or_else(|| (0..n).map(|i| format!("{prefix}{i}")).collect())
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    Matrix::from_rows(rows).ok_or_else(|| Error::Parse(format!("{what}: rows have different lengths")))
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{origin}: {e}")))
}

/// Parses a model document.
pub fn parse_model(text: &str, origin: &str) -> Result<PrivacyModel> {
    let f: ModelFile = parse_json(text, origin)?;
    let p = matrix(&f.p_xy, "p_xy")?;
    let (nx, ny) = p.shape();
    let x_labels = labels(f.x_labels, "x", nx);
    let y_labels = labels(f.y_labels, "y", ny);
    let joint = JointDist::with_labels(p, x_labels, y_labels.clone())?;
    match f.distortion {
        Some(rows) => {
            let vals: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|e| e.value()).collect()).collect();
            let d = matrix(&vals, "distortion")?;
            let z_labels = labels(f.z_labels, "z", d.cols());
            PrivacyModel::new(joint, DistortionSpec::new(d, f.delta)?, z_labels)
        }
        None => {
            let model = PrivacyModel::square_hamming(joint, f.delta)?;
            match f.z_labels {
                Some(z) if z.len() == ny => {
                    PrivacyModel::new(model.p_xy().clone(), model.distortion().clone(), z)
                }
                Some(z) => Err(Error::DimensionMismatch(format!(
                    "{} z labels for {ny} release symbols",
                    z.len()
                ))),
                None => Ok(model),
            }
        }
    }
}

pub fn load_model(path: &Path) -> Result<PrivacyModel> {
    parse_model(&read_to_string(path)?, &path.display().to_string())
}

/// Serializes a model; infinite distortion is written as `"inf"`.
pub fn model_to_json(model: &PrivacyModel) -> String {
    let d = model.distortion().matrix();
    let f = ModelFile {
        x_labels: Some(model.x_labels().to_vec()),
        y_labels: Some(model.y_labels().to_vec()),
        z_labels: Some(model.z_labels().to_vec()),
        p_xy: model.p_xy().matrix().to_rows(),
        distortion: Some(
            (0..d.rows())
                .map(|y| d.row(y).iter().map(|&v| Entry::from_value(v)).collect())
                .collect(),
        ),
        delta: model.delta(),
    };
    serde_json::to_string_pretty(&f).expect("model serializes")
}

pub fn parse_prior(text: &str, origin: &str, model: &PrivacyModel) -> Result<AdversaryPrior> {
    let f: PriorFile = parse_json(text, origin)?;
    let joint = JointDist::new(matrix(&f.p_hat_xy, "p_hat_xy")?)?;
    AdversaryPrior::new(model, joint)
}

pub fn load_prior(path: &Path, model: &PrivacyModel) -> Result<AdversaryPrior> {
    parse_prior(&read_to_string(path)?, &path.display().to_string(), model)
}

pub fn prior_to_json(prior: &AdversaryPrior) -> String {
    let f = PriorFile { p_hat_xy: prior.p_hat_xy().matrix().to_rows() };
    serde_json::to_string_pretty(&f).expect("prior serializes")
}

pub fn parse_dirichlet(text: &str, origin: &str) -> Result<DirichletPrior> {
    let f: DirichletFile = parse_json(text, origin)?;
    match (f.alpha, f.counts, f.nu) {
        (Some(alpha), _, _) => DirichletPrior::new(matrix(&alpha, "alpha")?),
        (None, Some(counts), Some(nu)) => DirichletPrior::from_counts(&counts, nu),
        _ => Err(Error::Parse(format!("{origin}: need `alpha`, or `counts` with `nu`"))),
    }
}

pub fn load_dirichlet(path: &Path) -> Result<DirichletPrior> {
    parse_dirichlet(&read_to_string(path)?, &path.display().to_string())
}

pub fn dirichlet_to_json(d: &DirichletPrior, counts: Option<&[Vec<u64>]>) -> String {
    let f = DirichletFile {
        alpha: Some(d.alpha().to_rows()),
        nu: d.nu(),
        counts: counts.map(|c| c.to_vec()),
    };
    serde_json::to_string_pretty(&f).expect("prior serializes")
}

/// Writes a labeled matrix: a header of column labels after `corner`, then
/// one line per row starting with its label.
pub fn write_matrix_csv<W: Write>(
    out: W,
    corner: &str,
    row_labels: &[String],
    col_labels: &[String],
    m: &Matrix,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(std::iter::once(corner).chain(col_labels.iter().map(|s| s.as_str())))
        .map_err(csv_err)?;
    for (i, label) in row_labels.iter().enumerate() {
        let mut rec = vec![label.clone()];
        rec.extend(m.row(i).iter().map(|v| format_float(*v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same value.
pub fn format_float(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

/// Labeled matrix read back from [`write_matrix_csv`] output.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub matrix: Matrix,
}

pub fn read_matrix_csv<R: Read>(input: R, origin: &str) -> Result<LabeledMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Parse(format!("{origin}: {e}")))?.clone();
    let col_labels: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut row_labels = Vec::new();
    let mut data = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(format!("{origin}: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        row_labels.push(rec.get(0).unwrap_or_default().to_string());
        for (j, field) in rec.iter().skip(1).enumerate() {
            let v = if field.eq_ignore_ascii_case("inf") {
                f64::INFINITY
            } else {
                field.parse::<f64>().map_err(|_| {
                    Error::Parse(format!("{origin}:{line}: column '{}': bad number '{field}'", col_labels[j]))
                })?
            };
            data.push(v);
        }
    }
    if data.len() != row_labels.len() * col_labels.len() {
        return Err(Error::Parse(format!("{origin}: rows have different lengths")));
    }
    Ok(LabeledMatrix {
        matrix: Matrix::from_vec(row_labels.len(), col_labels.len(), data),
        row_labels,
        col_labels,
    })
}

pub fn write_channel_csv(path: &Path, model: &PrivacyModel, m: &Channel) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_matrix_csv(file, "y\\z", model.y_labels(), model.z_labels(), m.matrix())
}

/// Loads a channel for `model`, checking its labels and shape.
pub fn load_channel_csv(path: &Path, model: &PrivacyModel) -> Result<Channel> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let lm = read_matrix_csv(file, &path.display().to_string())?;
    if lm.row_labels != model.y_labels() || lm.col_labels != model.z_labels() {
        return Err(Error::DimensionMismatch(format!(
            "{}: labels do not match the model",
            path.display()
        )));
    }
    Channel::with_mask(lm.matrix, model.mask().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE: &str = r#"{
        "x_labels": ["x1", "x2"], "y_labels": ["y1", "y2"], "z_labels": ["z1", "z2"],
        "p_xy": [[0.4, 0.1], [0.1, 0.4]],
        "distortion": [[0, 1], [1, 0]],
        "delta": 0.2
    }"#;

    #[test]
    fn model_round_trip() {
        let m = parse_model(TABLE, "t").unwrap();
        assert_eq!(m.delta(), 0.2);
        let again = parse_model(&model_to_json(&m), "t2").unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn infinite_distortion() {
        let text = r#"{"p_xy": [[0.5, 0.5]], "distortion": [[0, "inf", 1], ["inf", 0, 1]]}"#;
        let m = parse_model(text, "t").unwrap();
        assert_eq!(m.mask(), &[true, false, true, false, true, true]);
        assert!(model_to_json(&m).contains("\"inf\""));
        assert_eq!(m.z_labels(), &["z0", "z1", "z2"]);
    }

    #[test]
    fn parse_errors_have_context() {
        let err = parse_model("{\n \"p_xy\": [[0.5, \"x\"]]\n}", "bad.json").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.json") && msg.contains("line 2"), "{msg}");
        assert!(parse_model(r#"{"p_xy": [[0.5], [0.2, 0.3]]}"#, "t").is_err());
    }

    #[test]
    fn priors_parse() {
        let m = parse_model(TABLE, "t").unwrap();
        let p = parse_prior(r#"{"p_hat_xy": [[0.3, 0.4], [0.2, 0.1]]}"#, "p", &m).unwrap();
        assert_eq!(p.level().code(), "joint");
        let p2 = parse_prior(r#"{"p_xy": [[0.3, 0.4], [0.2, 0.1]]}"#, "p", &m).unwrap();
        assert_eq!(p, p2);
        let d = parse_dirichlet(r#"{"counts": [[3, 1], [1, 3]], "nu": 0.5}"#, "d").unwrap();
        assert_eq!(d.alpha0(), 4.0);
        assert!(parse_dirichlet(r#"{"nu": 0.5}"#, "d").is_err());
        let back = parse_dirichlet(&dirichlet_to_json(&d, None), "d").unwrap();
        assert_eq!(back.alpha(), d.alpha());
    }

    #[test]
    fn csv_round_trip() {
        let m = Matrix::from_rows(&[[0.1, 1.0 / 3.0], [f64::INFINITY, 0.0]]).unwrap();
        let rows = vec!["a".to_string(), "b".to_string()];
        let cols = vec!["c".to_string(), "d".to_string()];
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, "r", &rows, &cols, &m).unwrap();
        let back = read_matrix_csv(buf.as_slice(), "mem").unwrap();
        assert_eq!(back.matrix, m);
        assert_eq!(back.row_labels, rows);
        assert_eq!(back.col_labels, cols);
    }
}
