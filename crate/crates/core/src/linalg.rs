//! Dense LU factorization with partial pivoting for complex matrices.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Factorizations whose smallest-to-largest pivot ratio falls below this are
/// reported as singular.
pub const PIVOT_RATIO_THRESHOLD: f64 = 1e-14;

/// `P A = L U`, stored compactly row-major. Unit diagonal of `L` is implicit.
#[derive(Debug, Clone)]
pub struct LuFactors {
    dim: usize,
    lu: Vec<Complex64>,
    perm: Vec<usize>,
    pivot_ratio: f64,
}

impl LuFactors {
    pub fn factor(matrix: &[Complex64], dim: usize) -> Result<Self> {
        if matrix.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: matrix.len(),
            });
        }
        let mut lu = matrix.to_vec();
        let mut perm: Vec<usize> = (0..dim).collect();
        for col in 0..dim {
            // first maximal pivot wins, keeps the factorization deterministic
            let mut pivot_row = col;
            let mut best = lu[col * dim + col].norm();
            for row in col + 1..dim {
                let mag = lu[row * dim + col].norm();
                if mag > best {
                    best = mag;
                    pivot_row = row;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::SingularSystem { pivot_ratio: 0.0 });
            }
            if pivot_row != col {
                for j in 0..dim {
                    lu.swap(col * dim + j, pivot_row * dim + j);
                }
                perm.swap(col, pivot_row);
            }
            let pivot = lu[col * dim + col];
            for row in col + 1..dim {
                let factor = lu[row * dim + col] / pivot;
                lu[row * dim + col] = factor;
                if factor == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in col + 1..dim {
                    let upper = lu[col * dim + j];
                    lu[row * dim + j] -= factor * upper;
                }
            }
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..dim {
            let mag = lu[i * dim + i].norm();
            lo = lo.min(mag);
            hi = hi.max(mag);
        }
        let pivot_ratio = if dim == 0 { 1.0 } else { lo / hi };
        if !(pivot_ratio >= PIVOT_RATIO_THRESHOLD) {
            return Err(Error::SingularSystem { pivot_ratio });
        }
        Ok(LuFactors {
            dim,
            lu,
            perm,
            pivot_ratio,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.dim;
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rhs.len(),
            });
        }
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            x[i] = row.iter().zip(&x[..i]).fold(x[i], |acc, (l, xj)| acc - l * xj);
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let acc = row.iter().zip(&x[i + 1..]).fold(x[i], |acc, (u, xj)| acc - u * xj);
            x[i] = acc / self.lu[i * n + i];
        }
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::SingularSystem {
                pivot_ratio: self.pivot_ratio,
            });
        }
        Ok(x)
    }
}

pub(crate) fn mat_vec(matrix: &[Complex64], dim: usize, x: &[Complex64]) -> Vec<Complex64> {
    (0..dim)
        .map(|i| matrix[i * dim..(i + 1) * dim].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

pub(crate) fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solves_scalar() {
        let lu = LuFactors::factor(&[c(0.0, 1.0)], 1).unwrap();
        let x = lu.solve(&[c(0.0, 2.0)]).unwrap();
        assert_eq!(x, vec![c(2.0, 0.0)]);
    }

    #[test]
    fn needs_pivoting() {
        let a = [c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        let lu = LuFactors::factor(&a, 2).unwrap();
        let x = lu.solve(&[c(3.0, 0.0), c(4.0, 1.0)]).unwrap();
        assert_eq!(x, vec![c(4.0, 1.0), c(3.0, 0.0)]);
    }

    #[test]
    fn detects_singular() {
        let a = [c(1.0, 1.0), c(2.0, 2.0), c(0.5, 0.5), c(1.0, 1.0)];
        assert!(matches!(LuFactors::factor(&a, 2), Err(Error::SingularSystem { .. })));
        assert!(LuFactors::factor(&[c(1.0, 0.0); 3], 2).is_err());
    }

    proptest! {
        #[test]
        fn residual_is_small(entries in prop::collection::vec(-1.0f64..1.0, 2 * 36), rhs in prop::collection::vec(-1.0f64..1.0, 12)) {
            let dim = 6;
            let mut a: Vec<Complex64> = entries.chunks(2).map(|p| c(p[0], p[1])).collect();
            for i in 0..dim {
                a[i * dim + i] += c(3.0, 0.0);
            }
            let b: Vec<Complex64> = rhs.chunks(2).map(|p| c(p[0], p[1])).collect();
            let x = LuFactors::factor(&a, dim).unwrap().solve(&b).unwrap();
            let r: Vec<Complex64> = mat_vec(&a, dim, &x).iter().zip(&b).map(|(ax, bi)| ax - bi).collect();
            prop_assert!(norm2(&r) <= 1e-12 * norm2(&b).max(1e-300));
        }
    }
}
