//! Costs, leakage and the difference-of-convex decompositions the solver
//! minimizes.
//!
//! With `P` the true joint, `P̂` the adversary's joint and `M` the channel:
//!
//! * initial cost `ĉ₀ = H(X) + KL(p_X‖p̂_X)`
//! * posterior cost `ĉ_Z = Σ_{x,z} p_{X,Z} ln(p̂_Z / p̂_{X,Z})`
//! * leakage `L̂ = ĉ₀ − ĉ_Z = KL(p_{X,Z}‖p̂_X p̂_Z) − KL(p_{X,Z}‖p̂_{X,Z})`
//!
//! Both KL terms are [`ColumnKl`] instances, so the leakage is a difference
//! of convex functions of `M`.

mod bound;
mod certificate;
mod column_kl;

pub use bound::{dirichlet_lower_bound, grad_lb_second_term, lb_dc_split};
pub use certificate::{attain_ratio, convexity_certificate, ratio_bounds, ConvexityCertificate, RatioBounds};
pub use column_kl::{ColumnKl, ZeroCell};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{AdversaryPrior, PrivacyModel};
use crate::prob::{entropy_of, kl_of, Channel, Dist};

/// Which problem a [`DcObjective`] encodes. The solver always minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// Leakage against an adversary with a known biased prior.
    LeakageVsKnownPrior,
    /// Negated lower bound on the expected posterior cost under a Dirichlet prior.
    NegLowerBound,
}

/// Objective `f(M) − g(M)` with `f`, `g` convex.
#[derive(Debug, Clone, PartialEq)]
pub struct DcObjective {
    kind: ObjectiveKind,
    f: ColumnKl,
    g: ColumnKl,
}

impl DcObjective {
    pub fn new(kind: ObjectiveKind, f: ColumnKl, g: ColumnKl) -> Self {
        DcObjective { kind, f, g }
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn f(&self) -> &ColumnKl {
        &self.f
    }

    pub fn g(&self) -> &ColumnKl {
        &self.g
    }

    pub fn f_value(&self, m: &Channel) -> f64 {
        self.f.value(m.matrix())
    }

    pub fn g_value(&self, m: &Channel) -> f64 {
        self.g.value(m.matrix())
    }

    /// `f(M) − g(M)`; `−∞` when `g` diverges and `f` does not.
    pub fn value(&self, m: &Channel) -> f64 {
        self.value_matrix(m.matrix())
    }

    pub(crate) fn value_matrix(&self, m: &Matrix) -> f64 {
        let f = self.f.value(m);
        let g = self.g.value(m);
        if g.is_infinite() && f.is_finite() {
            f64::NEG_INFINITY
        } else {
            f - g
        }
    }

    /// Ratio matrix `W = (P·M) ⊘ (B_g·M)` with `0/0 = 1`.
    pub fn ratio_workspace(&self, m: &Channel) -> Matrix {
        let am = self.g.a().matmul(m.matrix());
        let bm = self.g.b().matmul(m.matrix());
        let mut w = Matrix::zeros(am.rows(), am.cols());
        for (o, (&a, &b)) in w.as_mut_slice().iter_mut().zip(am.as_slice().iter().zip(bm.as_slice())) {
            *o = if a == 0.0 && b == 0.0 { 1.0 } else { a / b };
        }
        w
    }
}

/// `ĉ₀ = H(X) + KL(p_X‖p̂_X)`; `+∞` when `p̂_X` misses part of `p_X`'s support.
pub fn cost_initial_limited(p_x: &Dist, p_hat_x: &Dist) -> Result<f64> {
    if p_x.len() != p_hat_x.len() {
        return Err(Error::DimensionMismatch(format!(
            "p_X has {} entries, p̂_X has {}",
            p_x.len(),
            p_hat_x.len()
        )));
    }
    Ok(entropy_of(p_x.weights()) + kl_of(p_x.weights(), p_hat_x.weights()))
}

fn check_shapes(model: &PrivacyModel, prior: &AdversaryPrior, m: &Channel) -> Result<()> {
    if prior.p_hat_xy().matrix().shape() != model.p_xy().matrix().shape() {
        return Err(Error::DimensionMismatch("prior and model joints differ in shape".into()));
    }
    if m.inputs() != model.ny() || m.outputs() != model.nz() {
        return Err(Error::DimensionMismatch(format!(
            "channel is {}x{}, model is {}x{}",
            m.inputs(),
            m.outputs(),
            model.ny(),
            model.nz()
        )));
    }
    Ok(())
}

/// Errors with `UndefinedPosterior` for the first realized `z` the adversary
/// deems impossible.
fn check_posteriors(pz: &[f64], p_hat_z: &[f64]) -> Result<()> {
    match pz.iter().zip(p_hat_z).position(|(&a, &b)| a > 0.0 && b <= 0.0) {
        Some(z) => Err(Error::UndefinedPosterior { z }),
        None => Ok(()),
    }
}

/// Posterior cost `ĉ_Z` of the adversary, evaluated under the true joint.
/// Only `z` with `p_Z(z) > 0` contribute.
pub fn cost_posterior_limited(model: &PrivacyModel, prior: &AdversaryPrior, m: &Channel) -> Result<f64> {
    check_shapes(model, prior, m)?;
    posterior_cost_of(model.p_xy().matrix(), prior.p_hat_xy().matrix(), m.matrix())
}

pub(crate) fn posterior_cost_of(p: &Matrix, p_hat: &Matrix, m: &Matrix) -> Result<f64> {
    let pxz = p.matmul(m);
    let phxz = p_hat.matmul(m);
    let pz = pxz.col_sums();
    let phz = phxz.col_sums();
    check_posteriors(&pz, &phz)?;
    let mut acc = 0.0;
    for x in 0..pxz.rows() {
        for z in 0..pxz.cols() {
            let a = pxz[(x, z)];
            if a <= 0.0 || pz[z] <= 0.0 {
                continue;
            }
            let b = phxz[(x, z)];
            if b <= 0.0 {
                return Ok(f64::INFINITY);
            }
            acc += a * (phz[z] / b).ln();
        }
    }
    Ok(acc)
}

/// Leakage-minimization objective against a known prior.
pub fn dc_split(model: &PrivacyModel, prior: &AdversaryPrior) -> Result<DcObjective> {
    if prior.p_hat_xy().matrix().shape() != model.p_xy().matrix().shape() {
        return Err(Error::DimensionMismatch("prior and model joints differ in shape".into()));
    }
    if !prior.clauses().joint {
        return Err(Error::AssumptionViolation(
            "adversary joint must cover the support of p(x,y)".into(),
        ));
    }
    Ok(dc_split_unchecked(model, prior))
}

fn dc_split_unchecked(model: &PrivacyModel, prior: &AdversaryPrior) -> DcObjective {
    let p = model.p_xy().matrix().clone();
    let p_hat = prior.p_hat_xy().matrix().clone();
    let phx = p_hat.row_sums();
    let phy = p_hat.col_sums();
    let mut indep = Matrix::zeros(p.rows(), p.cols());
    for (x, a) in phx.iter().enumerate() {
        for (y, b) in phy.iter().enumerate() {
            indep[(x, y)] = a * b;
        }
    }
    DcObjective::new(
        ObjectiveKind::LeakageVsKnownPrior,
        ColumnKl::new(p.clone(), indep),
        ColumnKl::new(p, p_hat),
    )
}

/// Leakage `L̂` of the channel against the adversary.
///
/// Returns `−∞` when the adversary's posterior cost diverges, and the
/// `IllDefinedLeakage` error when `p̂_X` lacks full support.
pub fn evaluate_leakage(model: &PrivacyModel, prior: &AdversaryPrior, m: &Channel) -> Result<f64> {
    check_shapes(model, prior, m)?;
    let p = model.p_xy().matrix();
    let p_hat = prior.p_hat_xy().matrix();
    let pz = p.matmul(m.matrix()).col_sums();
    let phz = p_hat.matmul(m.matrix()).col_sums();
    check_posteriors(&pz, &phz)?;
    if let Some(x) = p_hat.row_sums().iter().position(|&v| v <= 0.0) {
        return Err(Error::IllDefinedLeakage { x });
    }
    Ok(dc_split_unchecked(model, prior).value(m))
}

/// `L − L̂ = KL(p_{X,Z}‖p̂_{X,Z}) − KL(p_X‖p̂_X) − KL(p_Z‖p̂_Z)`.
pub fn leakage_gap(model: &PrivacyModel, prior: &AdversaryPrior, m: &Channel) -> Result<f64> {
    check_shapes(model, prior, m)?;
    if !prior.clauses().joint {
        return Err(Error::AssumptionViolation(
            "leakage gap needs the adversary joint to cover p(x,y)".into(),
        ));
    }
    let pxz = model.p_xy().matrix().matmul(m.matrix());
    let phxz = prior.p_hat_xy().matrix().matmul(m.matrix());
    let joint = kl_of(pxz.as_slice(), phxz.as_slice());
    let x_term = kl_of(&pxz.row_sums(), &phxz.row_sums());
    let z_term = kl_of(&pxz.col_sums(), &phxz.col_sums());
    Ok(joint - x_term - z_term)
}

/// Subgradient of `g` at `M` (the Kullback–Leibler gradient
/// `Pᵀ(ln W + 1) − P̂ᵀW`, with `W = 1` on empty cells).
pub fn grad_g(obj: &DcObjective, m: &Channel) -> Result<Matrix> {
    obj.g.gradient(m.matrix(), m.mask(), ZeroCell::Subgradient)
}
