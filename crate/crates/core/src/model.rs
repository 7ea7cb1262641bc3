//! Problem instances and the well-posedness checks that gate them.

use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::prob::{Channel, JointDist};

/// Per-pair distortion `d(y, z)` and the expected-distortion budget `δ`.
/// `+∞` marks a pair that may never be released.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionSpec {
    d: Matrix,
    delta: f64,
}

impl DistortionSpec {
    pub fn new(d: Matrix, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidConfig(format!("delta = {delta} must be finite and >= 0")));
        }
        if let Some(v) = d.as_slice().iter().find(|v| v.is_nan() || **v < 0.0) {
            return Err(Error::InvalidConfig(format!("distortion entry {v} must be >= 0 or inf")));
        }
        Ok(DistortionSpec { d, delta })
    }

    /// Hamming-style distortion on a square alphabet: 0 on the diagonal, 1 elsewhere.
    pub fn hamming(n: usize, delta: f64) -> Self {
        let mut d = Matrix::filled(n, n, 1.0);
        for i in 0..n {
            d[(i, i)] = 0.0;
        }
        DistortionSpec { d, delta }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.d
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.d.clone(), delta)
    }
}

/// The user's side of the problem: the true joint `p(X,Y)`, the distortion
/// measure with its budget, and the release alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyModel {
    p_xy: JointDist,
    distortion: DistortionSpec,
    z_labels: Vec<String>,
    mask: Vec<bool>,
    embedding: Vec<usize>,
}

impl PrivacyModel {
    /// Validates positivity of both marginals and that every
    /// `y` has its own zero-distortion release symbol.
    pub fn new(p_xy: JointDist, distortion: DistortionSpec, z_labels: Vec<String>) -> Result<Self> {
        let (ny, nz) = distortion.matrix().shape();
        if ny != p_xy.cols() {
            return Err(Error::DimensionMismatch(format!(
                "distortion has {ny} rows but p_xy has {} columns",
                p_xy.cols()
            )));
        }
        if z_labels.len() != nz {
            return Err(Error::DimensionMismatch(format!(
                "{} z labels for {nz} distortion columns",
                z_labels.len()
            )));
        }
        if !marginals_positive(&p_xy) {
            return Err(Error::AssumptionViolation(
                "every entry of p_X and p_Y must be positive".into(),
            ));
        }
        let d = distortion.matrix();
        let mask: Vec<bool> = d.as_slice().iter().map(|v| v.is_finite()).collect();
        let mut embedding = Vec::with_capacity(ny);
        for y in 0..ny {
            match (0..nz).find(|&z| d[(y, z)] == 0.0) {
                Some(z) => embedding.push(z),
                None => {
                    return Err(Error::AssumptionViolation(format!(
                        "y = {} has no zero-distortion release symbol",
                        p_xy.col_labels()[y]
                    )))
                }
            }
        }
        let mut seen = vec![false; nz];
        for &z in &embedding {
            if seen[z] {
                return Err(Error::AssumptionViolation(format!(
                    "release symbol {} is the zero-distortion image of two inputs",
                    z_labels[z]
                )));
            }
            seen[z] = true;
        }
        Ok(PrivacyModel {
            p_xy,
            distortion,
            z_labels,
            mask,
            embedding,
        })
    }

    /// Square model with `Z = Y` and Hamming distortion.
    pub fn square_hamming(p_xy: JointDist, delta: f64) -> Result<Self> {
        let n = p_xy.cols();
        let labels = p_xy.col_labels().to_vec();
        Self::new(p_xy, DistortionSpec::hamming(n, delta), labels)
    }

    pub fn p_xy(&self) -> &JointDist {
        &self.p_xy
    }

    pub fn distortion(&self) -> &DistortionSpec {
        &self.distortion
    }

    pub fn delta(&self) -> f64 {
        self.distortion.delta
    }

    pub fn z_labels(&self) -> &[String] {
        &self.z_labels
    }

    pub fn x_labels(&self) -> &[String] {
        self.p_xy.row_labels()
    }

    pub fn y_labels(&self) -> &[String] {
        self.p_xy.col_labels()
    }

    /// Support mask over `Y × Z`: pairs with finite distortion.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// The zero-distortion release symbol of each `y`.
    pub fn embedding(&self) -> &[usize] {
        &self.embedding
    }

    pub fn nx(&self) -> usize {
        self.p_xy.rows()
    }

    pub fn ny(&self) -> usize {
        self.p_xy.cols()
    }

    pub fn nz(&self) -> usize {
        self.z_labels.len()
    }

    pub fn p_y(&self) -> Vec<f64> {
        self.p_xy.col_marginal()
    }

    /// Same model with a different budget.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        let mut m = self.clone();
        m.distortion = self.distortion.with_delta(delta)?;
        Ok(m)
    }

    /// Largest per-row distortion on the support; any `δ` at or above this
    /// value leaves the budget slack for every channel.
    pub fn max_distortion(&self) -> f64 {
        let d = self.distortion.matrix();
        let p_y = self.p_y();
        (0..self.ny())
            .map(|y| {
                p_y[y]
                    * (0..self.nz())
                        .filter(|&z| d[(y, z)].is_finite())
                        .map(|z| d[(y, z)])
                        .fold(0.0, f64::max)
            })
            .sum()
    }

    /// Checks that `m` is a channel over this model's alphabets, honors the
    /// support and is within budget up to `tol`.
    pub fn check_feasible(&self, m: &Channel, tol: f64) -> Result<()> {
        if m.inputs() != self.ny() || m.outputs() != self.nz() {
            return Err(Error::DimensionMismatch(format!(
                "channel is {}x{}, model needs {}x{}",
                m.inputs(),
                m.outputs(),
                self.ny(),
                self.nz()
            )));
        }
        let rs = m.row_sum_error();
        if rs > tol {
            return Err(Error::InfeasibleInit(format!("row-sum error {rs:e}")));
        }
        for (i, (&v, &ok)) in m.matrix().as_slice().iter().zip(&self.mask).enumerate() {
            if v < 0.0 || (!ok && v != 0.0) {
                let (y, z) = (i / self.nz(), i % self.nz());
                return Err(Error::InfeasibleInit(format!("entry ({y},{z}) = {v}")));
            }
        }
        let dist = expected_distortion(self, m);
        if dist > self.delta() + tol {
            return Err(Error::InfeasibleInit(format!(
                "expected distortion {dist} exceeds delta {}",
                self.delta()
            )));
        }
        Ok(())
    }
}

/// Both marginals of `p_xy` are strictly positive.
pub fn marginals_positive(p_xy: &JointDist) -> bool {
    p_xy.row_marginal().iter().all(|&v| v > 0.0) && p_xy.col_marginal().iter().all(|&v| v > 0.0)
}

/// Which clauses of the adversary-support assumption hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SupportClauses {
    /// `p̂_Y` has full support.
    pub y_marginal: bool,
    /// `p̂_X` has full support.
    pub x_marginal: bool,
    /// `p(x,y) > 0 ⇒ p̂(x,y) > 0`.
    pub joint: bool,
}

/// Strongest support clause satisfied, ordered
/// `None < YMarginal < XMarginal < Joint`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SupportLevel {
    None,
    YMarginal,
    XMarginal,
    Joint,
}

impl SupportLevel {
    pub fn code(self) -> &'static str {
        match self {
            SupportLevel::None => "none",
            SupportLevel::YMarginal => "y-marginal",
            SupportLevel::XMarginal => "x-marginal",
            SupportLevel::Joint => "joint",
        }
    }
}

impl fmt::Display for SupportLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl SupportClauses {
    pub fn level(&self) -> SupportLevel {
        if self.joint {
            SupportLevel::Joint
        } else if self.x_marginal {
            SupportLevel::XMarginal
        } else if self.y_marginal {
            SupportLevel::YMarginal
        } else {
            SupportLevel::None
        }
    }
}

/// Evaluates every support clause of `p_hat_xy` against `p_xy`.
pub fn support_clauses(p_xy: &JointDist, p_hat_xy: &JointDist) -> Result<SupportClauses> {
    if p_xy.matrix().shape() != p_hat_xy.matrix().shape() {
        return Err(Error::DimensionMismatch(format!(
            "p is {:?}, p̂ is {:?}",
            p_xy.matrix().shape(),
            p_hat_xy.matrix().shape()
        )));
    }
    let y_marginal = p_hat_xy.col_marginal().iter().all(|&v| v > 0.0);
    let x_marginal = p_hat_xy.row_marginal().iter().all(|&v| v > 0.0);
    let joint = p_xy
        .matrix()
        .as_slice()
        .iter()
        .zip(p_hat_xy.matrix().as_slice())
        .all(|(&p, &q)| p == 0.0 || q > 0.0);
    Ok(SupportClauses {
        y_marginal,
        x_marginal,
        joint,
    })
}

/// Strongest support clause satisfied by the adversary's joint.
pub fn validate_support(p_xy: &JointDist, p_hat_xy: &JointDist) -> Result<SupportLevel> {
    Ok(support_clauses(p_xy, p_hat_xy)?.level())
}

/// The adversary's belief about `p(X,Y)` together with its support level.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryPrior {
    p_hat_xy: JointDist,
    clauses: SupportClauses,
}

impl AdversaryPrior {
    pub fn new(model: &PrivacyModel, p_hat_xy: JointDist) -> Result<Self> {
        let clauses = support_clauses(model.p_xy(), &p_hat_xy)?;
        Ok(AdversaryPrior { p_hat_xy, clauses })
    }

    /// The omniscient adversary, `p̂ = p`.
    pub fn omniscient(model: &PrivacyModel) -> Self {
        AdversaryPrior {
            p_hat_xy: model.p_xy().clone(),
            clauses: SupportClauses {
                y_marginal: true,
                x_marginal: true,
                joint: true,
            },
        }
    }

    pub fn p_hat_xy(&self) -> &JointDist {
        &self.p_hat_xy
    }

    pub fn clauses(&self) -> SupportClauses {
        self.clauses
    }

    pub fn level(&self) -> SupportLevel {
        self.clauses.level()
    }
}

/// `E[d(Y,Z)] = Σ_y p_Y(y) Σ_z m(z|y) d(y,z)`; `+∞` if any mass sits on an
/// infinite-distortion pair.
pub fn expected_distortion(model: &PrivacyModel, m: &Channel) -> f64 {
    let d = model.distortion().matrix();
    let p_y = model.p_y();
    let mut acc = 0.0;
    for (y, &py) in p_y.iter().enumerate() {
        for z in 0..model.nz() {
            let w = m.matrix()[(y, z)];
            if w == 0.0 {
                continue;
            }
            let dv = d[(y, z)];
            if dv.is_infinite() {
                return f64::INFINITY;
            }
            acc += py * w * dv;
        }
    }
    acc
}

/// Identity embedding: every `y` is released as its own zero-distortion symbol.
pub fn feasible_init(model: &PrivacyModel) -> Channel {
    let mut m = Matrix::zeros(model.ny(), model.nz());
    for (y, &z) in model.embedding().iter().enumerate() {
        m[(y, z)] = 1.0;
    }
    Channel::from_parts_unchecked(m, model.mask().to_vec())
}

/// Channel under which some realized `z` has `p̂_Z(z) = 0`, when the
/// adversary's `p̂_Y` misses some `y'`. `None` if `p̂_Y` has full support.
pub fn undefined_posterior_witness(model: &PrivacyModel, prior: &AdversaryPrior) -> Option<(Channel, usize)> {
    let p_hat_y = prior.p_hat_xy().col_marginal();
    let y_missing = p_hat_y.iter().position(|&v| v == 0.0)?;
    Some((feasible_init(model), model.embedding()[y_missing]))
}

/// Rewires a feasible channel so that the adversary's posterior cost becomes
/// infinite: pick `(x', y')` with `p(x',y') > 0 = p̂(x',y')`, release `y'`
/// verbatim, and redirect every other row's mass on that symbol back to its
/// own zero-distortion symbol.
pub fn unbounded_leakage_construction(
    model: &PrivacyModel,
    prior: &AdversaryPrior,
    m: &Channel,
) -> Result<Channel> {
    if !prior.clauses().x_marginal {
        return Err(Error::PreconditionViolation(
            "adversary marginal p̂_X lacks full support".into(),
        ));
    }
    model
        .check_feasible(m, 1e-9)
        .map_err(|e| Error::PreconditionViolation(format!("input channel: {e}")))?;
    let p = model.p_xy().matrix();
    let q = prior.p_hat_xy().matrix();
    let (_, y_star) = (0..model.nx())
        .flat_map(|x| (0..model.ny()).map(move |y| (x, y)))
        .find(|&(x, y)| p[(x, y)] > 0.0 && q[(x, y)] == 0.0)
        .ok_or_else(|| {
            Error::PreconditionViolation("adversary joint already covers the support of p(x,y)".into())
        })?;

    let emb = model.embedding();
    let z_star = emb[y_star];
    let mut out = m.matrix().clone();
    out.row_mut(y_star).iter_mut().for_each(|v| *v = 0.0);
    out[(y_star, z_star)] = 1.0;
    for y in (0..model.ny()).filter(|&y| y != y_star) {
        let moved = out[(y, z_star)];
        out[(y, emb[y])] += moved;
        out[(y, z_star)] = 0.0;
    }
    Ok(Channel::from_parts_unchecked(out, model.mask().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn joint(rows: &[[f64; 2]]) -> JointDist {
        JointDist::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    fn table1_model(delta: f64) -> PrivacyModel {
        PrivacyModel::square_hamming(joint(&[[0.4, 0.1], [0.1, 0.4]]), delta).unwrap()
    }

    #[test]
    fn positive_marginals_examples() {
        assert!(marginals_positive(&joint(&[[0.4, 0.1], [0.1, 0.4]])));
        assert!(!marginals_positive(&joint(&[[0.5, 0.5], [0.0, 0.0]])));
        assert!(!marginals_positive(&joint(&[[0.5, 0.0], [0.5, 0.0]])));
    }

    #[test]
    fn support_examples() {
        let p = joint(&[[0.4, 0.1], [0.1, 0.4]]);
        assert_eq!(validate_support(&p, &p).unwrap(), SupportLevel::Joint);
        let hat1 = joint(&[[0.3, 0.4], [0.2, 0.1]]);
        assert_eq!(validate_support(&p, &hat1).unwrap(), SupportLevel::Joint);
        let hole = joint(&[[0.0, 0.4], [0.2, 0.4]]);
        let c = support_clauses(&p, &hole).unwrap();
        assert!(!c.joint && c.x_marginal && c.y_marginal);
        assert_eq!(c.level(), SupportLevel::XMarginal);
        let no_x = joint(&[[0.0, 0.0], [0.5, 0.5]]);
        assert_eq!(validate_support(&p, &no_x).unwrap(), SupportLevel::YMarginal);
        let three = JointDist::new(Matrix::filled(3, 2, 1.0 / 6.0)).unwrap();
        assert!(validate_support(&p, &three).is_err());
    }

    #[test]
    fn distortion_and_init() {
        let model = table1_model(0.3);
        let init = feasible_init(&model);
        assert_eq!(init.matrix(), &Matrix::identity(2));
        assert_eq!(expected_distortion(&model, &init), 0.0);
        let flip = Channel::new(Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap()).unwrap();
        assert!((expected_distortion(&model, &flip) - 1.0).abs() < 1e-15);
        assert!(model.check_feasible(&flip, 1e-9).is_err());
    }

    #[test]
    fn infinite_distortion_pairs() {
        let d = Matrix::from_rows(&[[0.0, f64::INFINITY, 1.0], [f64::INFINITY, 0.0, 1.0]]).unwrap();
        let labels = vec!["a".into(), "b".into(), "*".into()];
        let model = PrivacyModel::new(
            joint(&[[0.4, 0.1], [0.1, 0.4]]),
            DistortionSpec::new(d, 1.0).unwrap(),
            labels,
        )
        .unwrap();
        assert_eq!(model.mask(), &[true, false, true, false, true, true]);
        let m = Channel::from_parts_unchecked(
            Matrix::from_rows(&[[0.5, 0.5, 0.0], [0.0, 1.0, 0.0]]).unwrap(),
            vec![true; 6],
        );
        assert_eq!(expected_distortion(&model, &m), f64::INFINITY);
    }

    #[test]
    fn model_requires_zero_distortion_symbol() {
        let d = Matrix::filled(2, 2, 1.0);
        let r = PrivacyModel::new(
            joint(&[[0.4, 0.1], [0.1, 0.4]]),
            DistortionSpec::new(d, 1.0).unwrap(),
            vec!["a".into(), "b".into()],
        );
        assert!(matches!(r, Err(Error::AssumptionViolation(_))));
    }

    #[test]
    fn unbounded_construction_preconditions() {
        let model = table1_model(0.4);
        let m = Channel::new(Matrix::from_rows(&[[0.8, 0.2], [0.2, 0.8]]).unwrap()).unwrap();
        let full = AdversaryPrior::new(&model, joint(&[[0.3, 0.4], [0.2, 0.1]])).unwrap();
        assert!(matches!(
            unbounded_leakage_construction(&model, &full, &m),
            Err(Error::PreconditionViolation(_))
        ));
        let hole = AdversaryPrior::new(&model, joint(&[[0.0, 0.4], [0.2, 0.4]])).unwrap();
        let out = unbounded_leakage_construction(&model, &hole, &m).unwrap();
        assert_eq!(out.matrix().row(0), &[1.0, 0.0]);
        assert_eq!(out.matrix().row(1), &[0.0, 1.0]);
        assert!(expected_distortion(&model, &out) <= expected_distortion(&model, &m));
    }

    #[test]
    fn witness_for_missing_y() {
        let model = table1_model(0.0);
        let prior = AdversaryPrior::new(&model, joint(&[[0.5, 0.0], [0.5, 0.0]])).unwrap();
        let (ch, z) = undefined_posterior_witness(&model, &prior).unwrap();
        let pz = model.p_xy().matrix().matmul(ch.matrix()).col_sums();
        let phz = prior.p_hat_xy().matrix().matmul(ch.matrix()).col_sums();
        assert!(pz[z] > 0.0 && phz[z] == 0.0);
    }
}
