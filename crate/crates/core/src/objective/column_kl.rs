use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// How gradient entries are defined where `(A·M)(x,z)` and `(B·M)(x,z)` both vanish.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroCell {
    /// `W = 1`: yields a subgradient, which keeps a linearization a valid
    /// global under-estimator.
    Subgradient,
    /// One-sided derivative along each coordinate: `A ln(A/B)`. An upper
    /// bound on directional derivatives, so a descent step predicted from it
    /// is real.
    Directional,
}

/// Floor for `W` when computing descent directions where `A·M = 0 < B·M`.
const W_FLOOR: f64 = 1e-300;

/// `φ(M) = Σ_{x,z} (A·M)(x,z) ln[(A·M)(x,z) / (B·M)(x,z)]` for nonnegative
/// `|X|×|Y|` matrices `A`, `B` and a channel `M`.
///
/// Every term of the objectives used here has this shape; each is jointly
/// convex in `M` as a sum of perspectives of `t ln t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnKl {
    a: Matrix,
    b: Matrix,
}

/// `a ln(a/b)` with the usual limits.
#[inline]
pub(crate) fn rel_entropy_term(a: f64, b: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else if b <= 0.0 {
        f64::INFINITY
    } else {
        a * (a / b).ln()
    }
}

impl ColumnKl {
    pub fn new(a: Matrix, b: Matrix) -> Self {
        assert_eq!(a.shape(), b.shape(), "ColumnKl operands must match");
        ColumnKl { a, b }
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn value(&self, m: &Matrix) -> f64 {
        let am = self.a.matmul(m);
        let bm = self.b.matmul(m);
        Self::value_from(&am, &bm)
    }

    pub(crate) fn value_from(am: &Matrix, bm: &Matrix) -> f64 {
        am.as_slice()
            .iter()
            .zip(bm.as_slice())
            .map(|(&a, &b)| rel_entropy_term(a, b))
            .sum()
    }

    /// Gradient with respect to `M`; entries outside `mask` are zero.
    pub fn gradient(&self, m: &Matrix, mask: &[bool], zero: ZeroCell) -> Result<Matrix> {
        let am = self.a.matmul(m);
        let bm = self.b.matmul(m);
        self.gradient_from(&am, &bm, mask, zero)
    }

    pub(crate) fn gradient_from(
        &self,
        am: &Matrix,
        bm: &Matrix,
        mask: &[bool],
        zero: ZeroCell,
    ) -> Result<Matrix> {
        let (nx, ny) = self.a.shape();
        let nz = am.cols();
        let mut grad = Matrix::zeros(ny, nz);
        for x in 0..nx {
            let arow = self.a.row(x);
            let brow = self.b.row(x);
            for z in 0..nz {
                let a = am[(x, z)];
                let b = bm[(x, z)];
                if a > 0.0 && b > 0.0 {
                    let w = a / b;
                    let lw1 = w.ln() + 1.0;
                    for y in 0..ny {
                        if mask[y * nz + z] {
                            grad[(y, z)] += arow[y] * lw1 - brow[y] * w;
                        }
                    }
                } else if a > 0.0 {
                    // b = 0 < a: the divergence itself is infinite here.
                    if let Some(y) = (0..ny).find(|&y| mask[y * nz + z] && arow[y] > 0.0) {
                        return Err(Error::DivergentGradient { y, z });
                    }
                    let y = (0..ny).find(|&y| mask[y * nz + z]).unwrap_or(0);
                    return Err(Error::DivergentGradient { y, z });
                } else if b > 0.0 {
                    // a = 0 < b: W = 0, and moving mass onto any y with A(x,y) > 0
                    // has slope −∞.
                    for y in 0..ny {
                        if !mask[y * nz + z] || arow[y] == 0.0 {
                            continue;
                        }
                        match zero {
                            ZeroCell::Subgradient => return Err(Error::DivergentGradient { y, z }),
                            ZeroCell::Directional => {
                                grad[(y, z)] += arow[y] * (W_FLOOR.ln() + 1.0) - brow[y] * W_FLOOR;
                            }
                        }
                    }
                } else {
                    for y in 0..ny {
                        if !mask[y * nz + z] {
                            continue;
                        }
                        grad[(y, z)] += match zero {
                            ZeroCell::Subgradient => arow[y] - brow[y],
                            ZeroCell::Directional => {
                                let t = rel_entropy_term(arow[y], brow[y]);
                                if t.is_infinite() {
                                    return Err(Error::DivergentGradient { y, z });
                                }
                                t
                            }
                        };
                    }
                }
            }
        }
        Ok(grad)
    }

    /// First and second derivatives of `γ ↦ φ(M + γD)` at a point where every
    /// active cell is interior. Returns `None` if some cell sits on the
    /// boundary, where [`ColumnKl::segment_slope`] handles the limits.
    pub(crate) fn segment_newton(am: &[f64], ad: &[f64], bm: &[f64], bd: &[f64], gamma: f64) -> Option<(f64, f64)> {
        let (mut s, mut c) = (0.0, 0.0);
        for i in 0..am.len() {
            let a = am[i] + gamma * ad[i];
            let b = bm[i] + gamma * bd[i];
            if a > 0.0 && b > 0.0 {
                let w = a / b;
                let r = ad[i] - w * bd[i];
                s += ad[i] * (w.ln() + 1.0) - bd[i] * w;
                c += r * r / a;
            } else if ad[i] != 0.0 || bd[i] != 0.0 {
                return None;
            }
        }
        Some((s, c))
    }

    /// Derivative of `γ ↦ φ(M + γD)` given `A·M`, `A·D`, `B·M`, `B·D`.
    pub(crate) fn segment_slope(am: &[f64], ad: &[f64], bm: &[f64], bd: &[f64], gamma: f64) -> f64 {
        let mut s = 0.0;
        for i in 0..am.len() {
            let a = am[i] + gamma * ad[i];
            let b = bm[i] + gamma * bd[i];
            let (da, db) = (ad[i], bd[i]);
            if a > 0.0 && b > 0.0 {
                let w = a / b;
                s += da * (w.ln() + 1.0) - db * w;
            } else if a <= 0.0 && b <= 0.0 {
                // Column collapses here; along the segment both scale linearly.
                if da != 0.0 {
                    s += rel_entropy_term(da.abs(), db.abs()) * da.signum();
                }
            } else if a <= 0.0 {
                if da > 0.0 {
                    return f64::NEG_INFINITY;
                } else if da < 0.0 {
                    return f64::INFINITY;
                }
            } else {
                // b = 0 < a
                return if db < 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_operands_vanish() {
        let a = Matrix::from_rows(&[[0.4, 0.1], [0.1, 0.4]]).unwrap();
        let k = ColumnKl::new(a.clone(), a);
        let m = Matrix::from_rows(&[[0.8, 0.2], [0.3, 0.7]]).unwrap();
        assert!(k.value(&m).abs() < 1e-15);
        let g = k.gradient(&m, &[true; 4], ZeroCell::Subgradient).unwrap();
        assert!(g.as_slice().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn zero_column_conventions() {
        let a = Matrix::from_rows(&[[0.4, 0.1], [0.1, 0.4]]).unwrap();
        let b = Matrix::from_rows(&[[0.3, 0.4], [0.2, 0.1]]).unwrap();
        let k = ColumnKl::new(a.clone(), b.clone());
        let m = Matrix::identity(2);
        // Third column empty.
        let m3 = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let mask = [true; 6];
        let sub = k.gradient(&m3, &mask, ZeroCell::Subgradient).unwrap();
        let dir = k.gradient(&m3, &mask, ZeroCell::Directional).unwrap();
        for y in 0..2 {
            let s: f64 = (0..2).map(|x| a[(x, y)] - b[(x, y)]).sum();
            let d: f64 = (0..2).map(|x| a[(x, y)] * (a[(x, y)] / b[(x, y)]).ln()).sum();
            assert!((sub[(y, 2)] - s).abs() < 1e-15);
            assert!((dir[(y, 2)] - d).abs() < 1e-15);
            assert!(dir[(y, 2)] >= sub[(y, 2)]);
        }
        assert!(k.value(&m).is_finite());
    }

    #[test]
    fn uncovered_mass_diverges() {
        let a = Matrix::from_rows(&[[0.5, 0.0], [0.0, 0.5]]).unwrap();
        let b = Matrix::from_rows(&[[0.0, 0.5], [0.5, 0.0]]).unwrap();
        let k = ColumnKl::new(a, b);
        let m = Matrix::identity(2);
        assert_eq!(k.value(&m), f64::INFINITY);
        assert!(matches!(
            k.gradient(&m, &[true; 4], ZeroCell::Subgradient),
            Err(Error::DivergentGradient { .. })
        ));
    }
}
