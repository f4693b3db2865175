//! Stationary covariance functions on `[0,1]^d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// Squared exponential.
    Rbf,
    /// Matérn with smoothness 5/2.
    Matern52,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rbf" | "se" | "squared_exponential" => Ok(Self::Rbf),
            "matern52" | "matern_52" | "matern5/2" => Ok(Self::Matern52),
            other => Err(Error::InvalidParameter(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// A covariance function with fixed hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscale: f64,
    pub variance: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, lengthscale: f64, variance: f64) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lengthscale must be > 0, got {lengthscale}"
            )));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidParameter(format!("variance must be > 0, got {variance}")));
        }
        Ok(Self {
            family,
            lengthscale,
            variance,
        })
    }

    pub fn rbf(lengthscale: f64, variance: f64) -> Result<Self> {
        Self::new(KernelFamily::Rbf, lengthscale, variance)
    }

    pub fn matern52(lengthscale: f64, variance: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern52, lengthscale, variance)
    }

    /// `k(x1, x2)`.
    pub fn eval(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        if x1.len() != x2.len() {
            return Err(Error::DimensionMismatch {
                expected: x1.len(),
                got: x2.len(),
            });
        }
        Ok(self.eval_unchecked(x1, x2))
    }

    /// `k(x1, x2)` without the dimension check; extra coordinates are ignored.
    #[inline]
    pub fn eval_unchecked(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let sq: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
        self.of_squared_distance(sq)
    }

    #[inline]
    fn of_squared_distance(&self, sq: f64) -> f64 {
        let l = self.lengthscale;
        match self.family {
            KernelFamily::Rbf => self.variance * (-sq / (2.0 * l * l)).exp(),
            KernelFamily::Matern52 => {
                let s = 5f64.sqrt() * sq.sqrt() / l;
                self.variance * (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }

    /// Cross-covariance matrix `k(X, X2)`, one point per row.
    pub fn gram(&self, x: &Matrix, x2: &Matrix) -> Result<Matrix> {
        if x.cols() != x2.cols() {
            return Err(Error::DimensionMismatch {
                expected: x.cols(),
                got: x2.cols(),
            });
        }
        Ok(Matrix::from_fn(x.rows(), x2.rows(), |i, j| {
            self.eval_unchecked(x.row(i), x2.row(j))
        }))
    }

    /// `a^T k(X, X2) b`: covariance between the weighted sums `a^T f(X)` and `b^T f(X2)`.
    pub fn aggregated(&self, x: &Matrix, a: &[f64], x2: &Matrix, b: &[f64]) -> f64 {
        debug_assert_eq!(x.rows(), a.len());
        debug_assert_eq!(x2.rows(), b.len());
        let mut total = 0.0;
        for (p, &wa) in x.row_iter().zip(a) {
            let mut inner = 0.0;
            for (q, &wb) in x2.row_iter().zip(b) {
                inner += wb * self.eval_unchecked(p, q);
            }
            total += wa * inner;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use proptest::prelude::*;

    #[test]
    fn rbf_values() {
        let k = KernelSpec::rbf(0.05, 0.1).unwrap();
        assert_eq!(k.eval(&[0.3], &[0.3]).unwrap(), 0.1);
        let v = k.eval(&[0.0], &[0.05]).unwrap();
        assert!((v - 0.1 * (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.0606531).abs() < 1e-7);
    }

    #[test]
    fn matern_values() {
        let k = KernelSpec::matern52(1.0, 1.0).unwrap();
        assert_eq!(k.eval(&[0.0], &[0.0]).unwrap(), 1.0);
        // r = 1: (1 + √5 + 5/3) e^{-√5}
        let s5 = 5f64.sqrt();
        let want = (1.0 + s5 + 5.0 / 3.0) * (-s5).exp();
        assert!((k.eval(&[0.0, 0.0], &[0.6, 0.8]).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(KernelSpec::rbf(0.0, 1.0).is_err());
        assert!(KernelSpec::rbf(1.0, -1.0).is_err());
        assert!(KernelSpec::matern52(f64::NAN, 1.0).is_err());
        let k = KernelSpec::rbf(1.0, 1.0).unwrap();
        assert!(matches!(
            k.eval(&[0.0], &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gram_structure() {
        let k = KernelSpec::rbf(0.05, 0.1).unwrap();
        let one = Matrix::from_rows(&[[0.4]]).unwrap();
        assert_eq!(k.gram(&one, &one).unwrap(), Matrix::from_rows(&[[0.1]]).unwrap());

        let x = Matrix::from_rows(&[[0.1], [0.15], [0.7]]).unwrap();
        let g = k.gram(&x, &x).unwrap();
        for i in 0..3 {
            assert_eq!(g.get(i, i), 0.1);
            for j in 0..3 {
                assert_eq!(g.get(i, j), g.get(j, i));
            }
        }
        let bad = Matrix::from_rows(&[[0.1, 0.2]]).unwrap();
        assert!(k.gram(&x, &bad).is_err());
    }

    #[test]
    fn aggregated_matches_explicit_sum() {
        let k = KernelSpec::matern52(0.3, 2.0).unwrap();
        let x = Matrix::from_rows(&[[0.1], [0.2]]).unwrap();
        let y = Matrix::from_rows(&[[0.5], [0.6], [0.9]]).unwrap();
        let a = [0.5, 0.5];
        let b = [0.2, 0.3, 0.5];
        let g = k.gram(&x, &y).unwrap();
        let mut want = 0.0;
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                want += ai * g.get(i, j) * bj;
            }
        }
        assert!((k.aggregated(&x, &a, &y, &b) - want).abs() < 1e-15);
    }

    /// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
    fn min_eigenvalue(m: &Matrix) -> f64 {
        let n = m.rows();
        let mut a = m.clone();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += a.get(p, q) * a.get(p, q);
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a.get(p, q);
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                }
            }
        }
        (0..n).map(|i| a.get(i, i)).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn jacobi_oracle_sanity() {
        let m = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        assert!((min_eigenvalue(&m) - 1.0).abs() < 1e-12);
    }

    fn point_strategy(d: usize, max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(0.0..=1.0f64, d), 1..=max_n)
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(x1 in prop::collection::vec(0.0..=1.0f64, 2),
                                 x2 in prop::collection::vec(0.0..=1.0f64, 2),
                                 l in 0.05..2.0f64, v in 0.01..5.0f64, matern in any::<bool>()) {
            let fam = if matern { KernelFamily::Matern52 } else { KernelFamily::Rbf };
            let k = KernelSpec::new(fam, l, v).unwrap();
            let a = k.eval(&x1, &x2).unwrap();
            prop_assert_eq!(a, k.eval(&x2, &x1).unwrap());
            prop_assert!(a > 0.0 && a <= v);
            if x1 != x2 {
                prop_assert!(a < v);
            } else {
                prop_assert_eq!(a, v);
            }
        }

        #[test]
        fn gram_psd_after_nugget(pts in point_strategy(2, 20), matern in any::<bool>()) {
            let fam = if matern { KernelFamily::Matern52 } else { KernelFamily::Rbf };
            let k = KernelSpec::new(fam, 0.05, 0.1).unwrap();
            let x = Matrix::from_rows(&pts).unwrap();
            let g = k.gram(&x, &x).unwrap();
            let s = SymMatrix::new(g.clone()).unwrap();
            let jitter = s.default_jitter();
            let mut gj = g;
            for i in 0..gj.rows() {
                gj.set(i, i, gj.get(i, i) + jitter);
            }
            prop_assert!(min_eigenvalue(&gj) >= -1e-10);
        }

    }
}
