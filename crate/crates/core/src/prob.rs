//! Discrete probability primitives.
//!
//! All quantities are in nats. `+∞` is an ordinary return value of [`kl`]
//! (support violation), never an error.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Tolerance accepted on the total mass of user-supplied distributions.
/// Inputs within this tolerance are renormalized exactly.
pub const INPUT_SUM_TOL: f64 = 1e-9;

/// Values below this threshold are treated as exact zeros before any log.
pub const ZERO_CLAMP: f64 = 1e-15;

#[inline]
fn clamp_small(v: f64) -> f64 {
    if v < ZERO_CLAMP {
        0.0
    } else {
        v
    }
}

/// `p · ln p` with `0 · ln 0 = 0`.
#[inline]
pub(crate) fn xlogx(p: f64) -> f64 {
    let p = clamp_small(p);
    if p == 0.0 {
        0.0
    } else {
        p * p.ln()
    }
}

pub fn nats_to_bits(v: f64) -> f64 {
    v / std::f64::consts::LN_2
}

/// A probability mass function over a finite alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Dist {
    weights: Vec<f64>,
}

impl Dist {
    /// Validates nonnegativity and unit mass (within [`INPUT_SUM_TOL`]), then
    /// renormalizes.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty distribution".into()));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "entry {i} is {} (must be finite and nonnegative)",
                weights[i]
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > INPUT_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Dist {
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Normalizes arbitrary nonnegative weights with positive total.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        Ok(Dist {
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        Dist {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Entropy `H(p) = −Σ p log p` in nats.
pub fn entropy(p: &Dist) -> f64 {
    entropy_of(p.weights())
}

pub(crate) fn entropy_of(w: &[f64]) -> f64 {
    -w.iter().map(|&v| xlogx(v)).sum::<f64>()
}

/// Kullback–Leibler divergence `KL(p‖q)` in nats; `+∞` when `p` puts mass
/// where `q` has none.
pub fn kl(p: &Dist, q: &Dist) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "kl: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(kl_of(p.weights(), q.weights()))
}

pub(crate) fn kl_of(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let (pi, qi) = (clamp_small(pi), clamp_small(qi));
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return f64::INFINITY;
        }
        acc += pi * (pi / qi).ln();
    }
    // Rounding can leave a tiny negative residue when p ≈ q.
    acc.max(0.0)
}

/// A joint distribution stored as a dense matrix with labelled axes.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDist {
    matrix: Matrix,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
}

fn default_labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{}", i + 1)).collect()
}

impl JointDist {
    /// Validates and renormalizes a joint probability matrix.
    pub fn new(matrix: Matrix) -> Result<Self> {
        let (r, c) = matrix.shape();
        Self::with_labels(matrix, default_labels("x", r), default_labels("y", c))
    }

    pub fn with_labels(
        mut matrix: Matrix,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
    ) -> Result<Self> {
        let (r, c) = matrix.shape();
        if r == 0 || c == 0 {
            return Err(Error::InvalidDistribution("empty joint distribution".into()));
        }
        if row_labels.len() != r || col_labels.len() != c {
            return Err(Error::DimensionMismatch(format!(
                "labels {}x{} for a {r}x{c} matrix",
                row_labels.len(),
                col_labels.len()
            )));
        }
        if let Some(v) = matrix
            .as_slice()
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "joint entry {v} must be finite and nonnegative"
            )));
        }
        let total = matrix.sum();
        if (total - 1.0).abs() > INPUT_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "joint sums to {total}, expected 1"
            )));
        }
        matrix.scale(1.0 / total);
        Ok(JointDist {
            matrix,
            row_labels,
            col_labels,
        })
    }

    /// Normalizes a nonnegative matrix with positive total mass.
    pub fn normalized(matrix: Matrix) -> Result<Self> {
        let total = matrix.sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidDistribution("matrix has no mass".into()));
        }
        let mut m = matrix;
        m.scale(1.0 / total);
        Self::new(m)
    }

    pub fn relabeled(mut self, row_labels: Vec<String>, col_labels: Vec<String>) -> Result<Self> {
        if row_labels.len() != self.rows() || col_labels.len() != self.cols() {
            return Err(Error::DimensionMismatch("label count".into()));
        }
        self.row_labels = row_labels;
        self.col_labels = col_labels;
        Ok(self)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    /// Marginal over the row variable (row sums).
    pub fn row_marginal(&self) -> Vec<f64> {
        self.matrix.row_sums()
    }

    /// Marginal over the column variable (column sums).
    pub fn col_marginal(&self) -> Vec<f64> {
        self.matrix.col_sums()
    }

    pub fn row_dist(&self) -> Dist {
        Dist {
            weights: self.row_marginal(),
        }
    }

    pub fn col_dist(&self) -> Dist {
        Dist {
            weights: self.col_marginal(),
        }
    }

    /// Joint with the same marginals and independent coordinates.
    pub fn product_of_marginals(&self) -> JointDist {
        let px = self.row_marginal();
        let py = self.col_marginal();
        let mut m = Matrix::zeros(self.rows(), self.cols());
        for (i, a) in px.iter().enumerate() {
            for (j, b) in py.iter().enumerate() {
                m[(i, j)] = a * b;
            }
        }
        JointDist {
            matrix: m,
            row_labels: self.row_labels.clone(),
            col_labels: self.col_labels.clone(),
        }
    }
}

/// Joint entropy `H(X,Y)`.
pub fn joint_entropy(joint: &JointDist) -> f64 {
    entropy_of(joint.matrix().as_slice())
}

/// `H(X|Y) = H(X,Y) − H(Y)` where rows index X and columns index Y.
pub fn conditional_entropy(joint: &JointDist) -> f64 {
    let h = joint_entropy(joint) - entropy_of(&joint.col_marginal());
    h.max(0.0)
}

/// `I(X;Y) = H(X) − H(X|Y)`.
pub fn mutual_information(joint: &JointDist) -> f64 {
    let i = entropy_of(&joint.row_marginal()) - conditional_entropy(joint);
    i.max(0.0)
}

/// A conditional distribution `p(Z|Y)` as a row-stochastic matrix with a
/// support mask. Entries outside the mask are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    matrix: Matrix,
    mask: Vec<bool>,
}

/// Row-sum tolerance accepted when constructing a channel.
pub const ROW_SUM_TOL: f64 = 1e-9;

impl Channel {
    /// Channel with full support.
    pub fn new(matrix: Matrix) -> Result<Self> {
        let mask = vec![true; matrix.rows() * matrix.cols()];
        Self::with_mask(matrix, mask)
    }

    /// Validates row-stochasticity and mask compliance, then renormalizes rows.
    pub fn with_mask(mut matrix: Matrix, mask: Vec<bool>) -> Result<Self> {
        let (r, c) = matrix.shape();
        if mask.len() != r * c {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} entries for a {r}x{c} channel",
                mask.len()
            )));
        }
        for y in 0..r {
            for z in 0..c {
                let v = matrix[(y, z)];
                if !v.is_finite() || v < -ZERO_CLAMP {
                    return Err(Error::InvalidDistribution(format!(
                        "channel entry ({y},{z}) = {v}"
                    )));
                }
                if !mask[y * c + z] && v > ZERO_CLAMP {
                    return Err(Error::InvalidDistribution(format!(
                        "channel entry ({y},{z}) = {v} lies outside the support mask"
                    )));
                }
                if !mask[y * c + z] || v < 0.0 {
                    matrix[(y, z)] = 0.0;
                }
            }
            let s: f64 = matrix.row(y).iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "channel row {y} sums to {s}"
                )));
            }
            matrix.row_mut(y).iter_mut().for_each(|v| *v /= s);
        }
        Ok(Channel { matrix, mask })
    }

    pub fn identity(n: usize) -> Self {
        Channel {
            matrix: Matrix::identity(n),
            mask: vec![true; n * n],
        }
    }

    pub(crate) fn from_parts_unchecked(matrix: Matrix, mask: Vec<bool>) -> Self {
        debug_assert_eq!(mask.len(), matrix.rows() * matrix.cols());
        Channel { matrix, mask }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn in_support(&self, y: usize, z: usize) -> bool {
        self.mask[y * self.matrix.cols() + z]
    }

    pub fn inputs(&self) -> usize {
        self.matrix.rows()
    }

    pub fn outputs(&self) -> usize {
        self.matrix.cols()
    }

    /// Largest deviation of a row sum from 1.
    pub fn row_sum_error(&self) -> f64 {
        self.matrix
            .row_sums()
            .iter()
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// True when no entry outside the mask carries mass.
    pub fn respects_mask(&self) -> bool {
        self.matrix
            .as_slice()
            .iter()
            .zip(&self.mask)
            .all(|(v, m)| *m || *v == 0.0)
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }
}

/// `p(X,Z) = P · M`.
pub fn push_joint(p_xy: &JointDist, m: &Channel) -> Result<JointDist> {
    if p_xy.cols() != m.inputs() {
        return Err(Error::DimensionMismatch(format!(
            "joint has {} columns, channel has {} inputs",
            p_xy.cols(),
            m.inputs()
        )));
    }
    let out = p_xy.matrix().matmul(m.matrix());
    let c = out.cols();
    Ok(JointDist {
        matrix: out,
        row_labels: p_xy.row_labels().to_vec(),
        col_labels: default_labels("z", c),
    })
}

/// Posterior `p(X | Z = z)` induced by `p_xy` and the channel.
pub fn posterior(p_xy: &JointDist, m: &Channel, z: usize) -> Result<Dist> {
    if z >= m.outputs() {
        return Err(Error::DimensionMismatch(format!(
            "output index {z} out of range {}",
            m.outputs()
        )));
    }
    let joint = push_joint(p_xy, m)?;
    let col: Vec<f64> = (0..joint.rows()).map(|x| joint.matrix()[(x, z)]).collect();
    let pz: f64 = col.iter().sum();
    if pz <= 0.0 {
        return Err(Error::UndefinedPosterior { z });
    }
    Ok(Dist {
        weights: col.into_iter().map(|v| v / pz).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1_joint() -> JointDist {
        JointDist::new(Matrix::from_rows(&[[0.4, 0.1], [0.1, 0.4]]).unwrap()).unwrap()
    }

    fn table1_channel() -> Channel {
        Channel::new(Matrix::from_rows(&[[0.8, 0.2], [0.2, 0.8]]).unwrap()).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let h = entropy(&Dist::new(vec![0.5, 0.5]).unwrap());
        assert!((h - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(entropy(&Dist::new(vec![1.0, 0.0]).unwrap()), 0.0);
        let px = table1_joint().row_dist();
        assert!((entropy(&px) - 0.693).abs() < 5e-4);
    }

    #[test]
    fn kl_examples() {
        let p = Dist::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(kl(&p, &p).unwrap(), 0.0);
        let half = Dist::new(vec![0.5, 0.5]).unwrap();
        let point = Dist::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(kl(&half, &point).unwrap(), f64::INFINITY);
        // KL([.5,.5] ‖ [.4,.6]) = ½ln(1.25) + ½ln(5/6)
        let q = Dist::new(vec![0.4, 0.6]).unwrap();
        let expected = 0.5 * (1.25f64).ln() + 0.5 * (5.0f64 / 6.0).ln();
        assert!((kl(&half, &q).unwrap() - expected).abs() < 1e-15);
        assert!((kl(&half, &q).unwrap() - 0.020410).abs() < 1e-6);
        // KL([.5,.5] ‖ [.8,.2]) = 0.916 − 0.693
        let q = Dist::new(vec![0.8, 0.2]).unwrap();
        assert!((kl(&half, &q).unwrap() - 0.223144).abs() < 1e-6);
    }

    #[test]
    fn kl_dimension_mismatch() {
        let a = Dist::uniform(2);
        let b = Dist::uniform(3);
        assert!(matches!(kl(&a, &b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn conditional_entropy_examples() {
        let indep = JointDist::new(
            Matrix::from_rows(&[[0.5 * 0.3, 0.5 * 0.7], [0.5 * 0.3, 0.5 * 0.7]]).unwrap(),
        )
        .unwrap();
        assert!((conditional_entropy(&indep) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(mutual_information(&indep).abs() < 1e-12);

        let coupled = JointDist::new(Matrix::from_rows(&[[0.5, 0.0], [0.0, 0.5]]).unwrap()).unwrap();
        assert!(conditional_entropy(&coupled).abs() < 1e-15);

        let pxz = push_joint(&table1_joint(), &table1_channel()).unwrap();
        assert!((conditional_entropy(&pxz) - 0.627).abs() < 5e-4);
        assert!((mutual_information(&pxz) - 0.066).abs() < 5e-4);
    }

    #[test]
    fn identity_channel_information() {
        // I(X;Y) for [[.4,.1],[.1,.4]]: ln2 − H_b(0.8)
        let i = mutual_information(&push_joint(&table1_joint(), &Channel::identity(2)).unwrap());
        let hb = -(0.8f64 * 0.8f64.ln() + 0.2 * 0.2f64.ln());
        assert!((i - (std::f64::consts::LN_2 - hb)).abs() < 1e-12);
        assert!((i - 0.1927).abs() < 1e-4);
    }

    #[test]
    fn push_joint_examples() {
        let p = table1_joint();
        let same = push_joint(&p, &Channel::identity(2)).unwrap();
        assert_eq!(same.matrix(), p.matrix());
        let pxz = push_joint(&p, &table1_channel()).unwrap();
        let expected = Matrix::from_rows(&[[0.34, 0.16], [0.16, 0.34]]).unwrap();
        assert!(pxz.matrix().max_abs_diff(&expected) < 1e-15);
        assert!((pxz.matrix().sum() - 1.0).abs() < 1e-15);
        let bad = Channel::identity(3);
        assert!(push_joint(&p, &bad).is_err());
    }

    #[test]
    fn posterior_examples() {
        let p = table1_joint();
        let post = posterior(&p, &table1_channel(), 0).unwrap();
        assert!((post.weights()[0] - 0.68).abs() < 1e-12);
        assert!((post.weights()[1] - 0.32).abs() < 1e-12);

        let id = posterior(&p, &Channel::identity(2), 1).unwrap();
        assert!((id.weights()[0] - 0.2).abs() < 1e-12);

        let dead = Channel::new(Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(
            posterior(&p, &dead, 1).unwrap_err(),
            Error::UndefinedPosterior { z: 1 }
        );
    }

    #[test]
    fn channel_validation() {
        let off_mask = Channel::with_mask(Matrix::identity(2), vec![true, true, true, false]);
        assert!(off_mask.is_err());
        let not_stochastic = Channel::new(Matrix::from_rows(&[[0.5, 0.4], [0.0, 1.0]]).unwrap());
        assert!(not_stochastic.is_err());
    }
}
