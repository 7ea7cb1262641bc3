use crate::error::{Error, Result};
use crate::model::{AdversaryPrior, PrivacyModel};

/// Sufficient condition for convexity of the leakage objective.
///
/// A `false` verdict does not mean the problem is non-convex.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityCertificate {
    pub r_lower: Vec<f64>,
    pub r_upper: Vec<f64>,
    pub condition_holds: bool,
    /// First `x` whose inequality fails.
    pub witness_x: Option<usize>,
}

/// Relative slack on the per-row inequality, so that equality cases (for
/// example `p̂ = p` with `P_x ∥ p̂_Y`) are not lost to rounding.
const CERT_REL_TOL: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks, for every `x`, that
/// `(2 Pₓ·P̂ₓ − r P̂ₓ·P̂ₓ)(r p̂_Y·p̂_Y) ≥ (Pₓ·p̂_Y)²` at both `r = r_x^L` and
/// `r = r_x^U`, where the ratios are the extremes of `P(x,y)/P̂(x,y)` over the
/// support of `Pₓ`.
pub fn convexity_certificate(model: &PrivacyModel, prior: &AdversaryPrior) -> Result<ConvexityCertificate> {
    let p = model.p_xy().matrix();
    let ph = prior.p_hat_xy().matrix();
    if p.shape() != ph.shape() {
        return Err(Error::DimensionMismatch("prior and model joints differ in shape".into()));
    }
    if !prior.clauses().joint {
        return Err(Error::AssumptionViolation(
            "convexity ratios need the adversary joint to cover p(x,y)".into(),
        ));
    }
    let c = ph.col_sums();
    let cc = dot(&c, &c);
    let mut cert = ConvexityCertificate {
        r_lower: Vec::with_capacity(p.rows()),
        r_upper: Vec::with_capacity(p.rows()),
        condition_holds: true,
        witness_x: None,
    };
    for x in 0..p.rows() {
        let a = p.row(x);
        let b = ph.row(x);
        let (lo, hi) = extreme_ratios(a, b)?;
        cert.r_lower.push(lo);
        cert.r_upper.push(hi);
        let ab = dot(a, b);
        let bb = dot(b, b);
        let ac = dot(a, c.as_slice());
        let rhs = ac * ac;
        let ok = [lo, hi].iter().all(|&r| {
            let lhs = (2.0 * ab - r * bb) * (r * cc);
            lhs >= rhs - CERT_REL_TOL * lhs.abs().max(rhs)
        });
        if !ok && cert.witness_x.is_none() {
            cert.condition_holds = false;
            cert.witness_x = Some(x);
        }
    }
    Ok(cert)
}

fn extreme_ratios(u: &[f64], v: &[f64]) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, (&a, &b)) in u.iter().zip(v).enumerate() {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::PreconditionViolation(format!(
                    "u[{i}] > 0 but v[{i}] = 0"
                )));
            }
            let r = a / b;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    if lo.is_infinite() {
        return Err(Error::PreconditionViolation("u has no positive entry".into()));
    }
    Ok((lo, hi))
}

/// Extremes of `uᵢ/vᵢ` over the support of `u`, and the weighted ratio
/// `wᵀu / wᵀv` they bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioBounds {
    pub r_lower: f64,
    pub r_upper: f64,
    pub ratio: f64,
}

/// Computes `(r_L, r_U, wᵀu/wᵀv)`.
///
/// The lower bound only holds when `w` puts no weight on indices where
/// `v` is positive and `u` vanishes (such an index drags the ratio toward 0),
/// so that case is rejected along with the support conditions on `u`, `v`.
pub fn ratio_bounds(u: &[f64], v: &[f64], w: &[f64]) -> Result<RatioBounds> {
    if u.len() != v.len() || u.len() != w.len() {
        return Err(Error::DimensionMismatch("u, v, w must have equal length".into()));
    }
    if u.iter().chain(v).chain(w).any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(Error::PreconditionViolation("entries must be finite and nonnegative".into()));
    }
    if v.iter().all(|&t| t == 0.0) {
        return Err(Error::PreconditionViolation("v is zero".into()));
    }
    let (r_lower, r_upper) = extreme_ratios(u, v)?;
    if let Some(i) = (0..u.len()).find(|&i| w[i] > 0.0 && v[i] > 0.0 && u[i] == 0.0) {
        return Err(Error::PreconditionViolation(format!(
            "w weights index {i} where v > 0 = u"
        )));
    }
    let wu = dot(w, u);
    if wu <= 0.0 {
        return Err(Error::PreconditionViolation("wᵀu must be positive".into()));
    }
    Ok(RatioBounds { r_lower, r_upper, ratio: wu / dot(w, v) })
}

/// Builds a nonnegative `w` with `wᵀu / wᵀv = r` for `r ∈ [r_L, r_U]`, using
/// only the two indices attaining the extremes.
pub fn attain_ratio(u: &[f64], v: &[f64], r: f64) -> Result<Vec<f64>> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch("u and v must have equal length".into()));
    }
    let (lo, hi) = extreme_ratios(u, v)?;
    if !(r >= lo && r <= hi) {
        return Err(Error::PreconditionViolation(format!("r = {r} outside [{lo}, {hi}]")));
    }
    let ratio = |i: usize| u[i] / v[i];
    let support = (0..u.len()).filter(|&i| u[i] > 0.0);
    let i_hi = support.clone().find(|&i| ratio(i) == hi).unwrap();
    let j_lo = support.clone().find(|&i| ratio(i) == lo).unwrap();
    let mut w = vec![0.0; u.len()];
    if hi == lo || r == lo {
        w[j_lo] = 1.0;
        return Ok(w);
    }
    if r == hi {
        w[i_hi] = 1.0;
        return Ok(w);
    }
    // r = λ r_U + (1 − λ) r_L
    let lambda = (r - lo) / (hi - lo);
    w[j_lo] = 1.0;
    w[i_hi] = lambda / (1.0 - lambda) * v[j_lo] / v[i_hi];
    Ok(w)
}
