use super::{ColumnKl, DcObjective, ObjectiveKind, ZeroCell};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::PrivacyModel;
use crate::priors::DirichletPrior;
use crate::prob::Channel;

/// Negated lower bound as `f − g` with
/// `f(M) = Σ p_{X,Z} ln(p_{X,Z} / (E·M))`, `E(x,y) = exp(ψ(α_y) − ψ(α₀))`, and
/// `g(M) = Σ p_{X,Z} ln(p_{X,Z} / (Ā·M))`, `Ā = α/α₀`.
///
/// Minimizing `f − g` maximizes the bound.
pub fn lb_dc_split(model: &PrivacyModel, dprior: &DirichletPrior) -> Result<DcObjective> {
    dprior.check_support(model)?;
    let p = model.p_xy().matrix().clone();
    let (nx, ny) = p.shape();
    let psi0 = dprior.psi_alpha0();
    let mut e = Matrix::zeros(nx, ny);
    for x in 0..nx {
        for (y, &psi) in dprior.psi_alpha_y().iter().enumerate() {
            e[(x, y)] = (psi - psi0).exp();
        }
    }
    let mean = dprior.mean();
    Ok(DcObjective::new(
        ObjectiveKind::NegLowerBound,
        ColumnKl::new(p.clone(), e),
        ColumnKl::new(p, mean),
    ))
}

/// Lower bound on the expected posterior cost when `p̂ ~ Dirichlet(α)`:
///
/// `Σ_{x,z} p_{X,Z} [ ln(Σ_y e^{ψ(α_y)−ψ(α₀)} M(y,z)) − ln(Σ_y (α_{x,y}/α₀) M(y,z)) ]`,
/// summed over `z` with `p_Z(z) > 0`.
pub fn dirichlet_lower_bound(model: &PrivacyModel, dprior: &DirichletPrior, m: &Channel) -> Result<f64> {
    if m.inputs() != model.ny() || m.outputs() != model.nz() {
        return Err(Error::DimensionMismatch("channel does not match model".into()));
    }
    let obj = lb_dc_split(model, dprior)?;
    Ok(-obj.value(m))
}

/// Gradient of the subtracted term of [`lb_dc_split`].
pub fn grad_lb_second_term(obj: &DcObjective, m: &Channel) -> Result<Matrix> {
    if obj.kind() != ObjectiveKind::NegLowerBound {
        return Err(Error::InvalidConfig("objective is not a Dirichlet lower bound".into()));
    }
    obj.g().gradient(m.matrix(), m.mask(), ZeroCell::Subgradient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AdversaryPrior;
    use crate::objective::{cost_posterior_limited, grad_g};
    use crate::prob::JointDist;

    fn setup() -> (PrivacyModel, Channel) {
        let p = JointDist::new(Matrix::from_rows(&[[0.4, 0.1], [0.1, 0.4]]).unwrap()).unwrap();
        let model = PrivacyModel::square_hamming(p, 0.2).unwrap();
        let m = Channel::new(Matrix::from_rows(&[[0.8, 0.2], [0.2, 0.8]]).unwrap()).unwrap();
        (model, m)
    }

    #[test]
    fn concentrated_prior_recovers_point_cost() {
        let (model, m) = setup();
        let mean = Matrix::from_rows(&[[0.3, 0.4], [0.2, 0.1]]).unwrap();
        let mut alpha = mean.clone();
        alpha.scale(1e6);
        let d = DirichletPrior::new(alpha).unwrap();
        let lb = dirichlet_lower_bound(&model, &d, &m).unwrap();
        let prior = AdversaryPrior::new(&model, JointDist::new(mean).unwrap()).unwrap();
        let cz = cost_posterior_limited(&model, &prior, &m).unwrap();
        assert!((lb - cz).abs() < 1e-3, "{lb} vs {cz}");

        let obj = lb_dc_split(&model, &d).unwrap();
        let g2 = grad_lb_second_term(&obj, &m).unwrap();
        let g1 = grad_g(&crate::objective::dc_split(&model, &prior).unwrap(), &m).unwrap();
        assert!(g1.max_abs_diff(&g2) < 1e-3);
    }

    #[test]
    fn bound_matches_split_at_identity() {
        let (model, _) = setup();
        let alpha = Matrix::from_rows(&[[2.0, 0.5], [1.0, 3.0]]).unwrap();
        let d = DirichletPrior::new(alpha.clone()).unwrap();
        let m = Channel::identity(2);
        let lb = dirichlet_lower_bound(&model, &d, &m).unwrap();
        // Direct evaluation at the identity: M(y,z) = [y = z].
        let a0 = alpha.sum();
        let ay = alpha.col_sums();
        let p = model.p_xy().matrix();
        let mut direct = 0.0;
        for x in 0..2 {
            for z in 0..2 {
                let e = (crate::special::digamma(ay[z]) - crate::special::digamma(a0)).exp();
                direct += p[(x, z)] * (e.ln() - (alpha[(x, z)] / a0).ln());
            }
        }
        assert!((lb - direct).abs() < 1e-10);
    }

    #[test]
    fn wrong_kind_rejected() {
        let (model, m) = setup();
        let obj = crate::objective::dc_split(&model, &AdversaryPrior::omniscient(&model)).unwrap();
        assert!(grad_lb_second_term(&obj, &m).is_err());
    }
}
