//! Special functions.

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Digamma `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
///
/// Shifts the argument above 10 with `ψ(x) = ψ(x + 1) − 1/x`, then applies the
/// asymptotic series `ln x − 1/(2x) − Σ B₂ₖ/(2k x²ᵏ)`.
pub fn digamma(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // B2/2, B4/4, ..., B14/14
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    acc + x.ln() - 0.5 * inv - series
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digamma_known_values() {
        assert!((digamma(1.0) + EULER_GAMMA).abs() < 1e-14);
        // ψ(1/2) = −γ − 2 ln 2
        assert!((digamma(0.5) - (-EULER_GAMMA - 2.0 * std::f64::consts::LN_2)).abs() < 1e-13);
        // ψ(n+1) = H_n − γ
        let h10: f64 = (1..=10).map(|k| 1.0 / k as f64).sum();
        assert!((digamma(11.0) - (h10 - EULER_GAMMA)).abs() < 1e-13);
        assert!(digamma(0.0).is_nan());
    }

    #[test]
    fn digamma_recurrence() {
        for &x in &[1e-3, 0.1, 0.37, 1.5, 4.2, 7.9, 123.4, 1e6] {
            let lhs = digamma(x + 1.0);
            let rhs = digamma(x) + 1.0 / x;
            assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0), "x = {x}");
        }
    }

    #[test]
    fn digamma_matches_statrs() {
        for i in 1..400 {
            let x = i as f64 * 0.0371;
            let ours = digamma(x);
            let theirs = statrs::function::gamma::digamma(x);
            assert!((ours - theirs).abs() < 1e-11 * theirs.abs().max(1.0), "x = {x}: {ours} vs {theirs}");
        }
    }
}
