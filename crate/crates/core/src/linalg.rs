//! Dense symmetric positive-definite linear algebra.
//!
//! The Cholesky factor is stored as a packed lower triangle (row `i` holds
//! `i + 1` entries), so appending a row and column to the factored matrix is a
//! push onto the end of the buffer: one forward substitution plus a square
//! root, `O(n^2)` in total.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative jitter added to the diagonal before factorization, scaled by the
/// mean diagonal entry.
pub const NUGGET_SCALE: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-12;

/// Row-major dense matrix. Also used for point sets (one point per row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero; a 0-column matrix has no useful rows anyway
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Appends the rows of `other` below `self`.
    pub fn append_rows(&mut self, other: &Matrix) -> Result<()> {
        if self.rows > 0 && other.cols != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.cols,
            });
        }
        self.cols = other.cols;
        self.rows += other.rows;
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: v.len(),
            });
        }
        Ok(self.row_iter().map(|r| dot(r, v)).collect())
    }

    /// Largest absolute entry; 0 for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Square symmetric matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::DimensionMismatch {
                expected: m.rows,
                got: m.cols,
            });
        }
        if m.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("matrix has non-finite entries".into()));
        }
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..m.rows {
            for j in 0..i {
                if (m.get(i, j) - m.get(j, i)).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidParameter(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn n(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    fn mean_diagonal(&self) -> f64 {
        if self.n() == 0 {
            return 0.0;
        }
        (0..self.n()).map(|i| self.0.get(i, i)).sum::<f64>() / self.n() as f64
    }

    /// The jitter `cholesky` adds to the diagonal of this matrix.
    pub fn default_jitter(&self) -> f64 {
        NUGGET_SCALE * self.mean_diagonal().abs()
    }
}

/// Lower-triangular Cholesky factor `L` with `L L^T = M + jitter I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    n: usize,
    /// Packed rows of the lower triangle.
    packed: Vec<f64>,
    jitter: f64,
}

#[inline]
fn row_offset(i: usize) -> usize {
    i * (i + 1) / 2
}

/// Factors `m + nugget I` with the default relative nugget.
pub fn cholesky(m: &SymMatrix) -> Result<CholFactor> {
    cholesky_with_jitter(m, m.default_jitter())
}

/// Factors `m + jitter I`.
pub fn cholesky_with_jitter(m: &SymMatrix, jitter: f64) -> Result<CholFactor> {
    let mut f = CholFactor::empty(jitter);
    let a = m.matrix();
    for i in 0..m.n() {
        let q21 = &a.row(i)[..i];
        f.push(q21, a.get(i, i))?;
    }
    Ok(f)
}

impl CholFactor {
    /// Factor of a 0×0 matrix; rows are added with [`CholFactor::push`].
    pub fn empty(jitter: f64) -> Self {
        Self {
            n: 0,
            packed: Vec::new(),
            jitter,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.packed[row_offset(i) + j]
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.packed[row_offset(i)..row_offset(i) + i + 1]
    }

    /// Dense copy of `L`.
    pub fn lower(&self) -> Matrix {
        Matrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// `L L^T`, i.e. the factored matrix including the jitter.
    pub fn reconstruct(&self) -> Matrix {
        let mut out = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..=i {
                let v = dot(&self.row(i)[..=j], &self.row(j)[..=j]);
                out.set(i, j, v);
                out.set(j, i, v);
            }
        }
        out
    }

    /// Returns the factor of `[[M, q21^T], [q21, q22]]` given the factor of `M`.
    pub fn extend(&self, q21: &[f64], q22: f64) -> Result<CholFactor> {
        let mut out = self.clone();
        out.push(q21, q22)?;
        Ok(out)
    }

    /// In-place version of [`CholFactor::extend`].
    ///
    /// The new row `l21` solves `L l21^T = q21^T`; the new diagonal is
    /// `sqrt(q22 + jitter - l21 l21^T)`. The factor is left untouched on error.
    pub fn push(&mut self, q21: &[f64], q22: f64) -> Result<()> {
        if q21.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: q21.len(),
            });
        }
        let l21 = self.forward_solve(q21)?;
        let pivot = q22 + self.jitter - dot(&l21, &l21);
        if pivot.is_nan() || pivot <= 0.0 {
            return Err(Error::NotPositiveDefinite { index: self.n, pivot });
        }
        self.packed.reserve(self.n + 1);
        self.packed.extend_from_slice(&l21);
        self.packed.push(pivot.sqrt());
        self.n += 1;
        Ok(())
    }

    /// Solves `L z = b`.
    pub fn forward_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: b.len(),
            });
        }
        let mut z = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let s = b[i] - dot(&row[..i], &z);
            z.push(s / row[i]);
        }
        Ok(z)
    }

    /// Solves `L^T y = z`.
    pub fn back_solve(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: z.len(),
            });
        }
        let mut y = z.to_vec();
        for i in (0..self.n).rev() {
            y[i] /= self.get(i, i);
            let yi = y[i];
            // column i of L^T is row i of L; subtract its contribution above the diagonal
            for (j, l) in self.row(i)[..i].iter().enumerate() {
                y[j] -= l * yi;
            }
        }
        Ok(y)
    }

    /// Solves `L L^T y = b` by forward then back substitution.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let z = self.forward_solve(b)?;
        self.back_solve(&z)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `L L^T y = b`; see [`CholFactor::solve`].
pub fn solve_spd(f: &CholFactor, b: &[f64]) -> Result<Vec<f64>> {
    f.solve(b)
}

/// Extends a factor by one row and column; see [`CholFactor::extend`].
pub fn chol_extend(f: &CholFactor, q21: &[f64], q22: f64) -> Result<CholFactor> {
    f.extend(q21, q22)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::SmallRng;
    use rand::{Rng, SeedableRng};

    fn sym(rows: &[&[f64]]) -> SymMatrix {
        SymMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    /// `B B^T + I` for a random square `B`.
    fn random_spd(n: usize, rng: &mut SmallRng) -> SymMatrix {
        let b = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let mut m = b.matmul(&b.transpose()).unwrap();
        for i in 0..n {
            m.set(i, i, m.get(i, i) + 1.0);
        }
        // symmetrize away rounding
        let m = Matrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)));
        SymMatrix::new(m).unwrap()
    }

    fn with_jitter(m: &SymMatrix, jitter: f64) -> Matrix {
        let mut out = m.matrix().clone();
        for i in 0..m.n() {
            out.set(i, i, out.get(i, i) + jitter);
        }
        out
    }

    #[test]
    fn one_by_one() {
        let f = cholesky_with_jitter(&sym(&[&[4.0]]), 0.0).unwrap();
        assert_eq!(f.lower(), Matrix::from_rows(&[[2.0]]).unwrap());
        let f = cholesky(&sym(&[&[4.0]])).unwrap();
        assert!((f.get(0, 0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn two_by_two_by_hand() {
        let f = cholesky_with_jitter(&sym(&[&[4.0, 2.0], &[2.0, 2.0]]), 0.0).unwrap();
        assert_eq!(f.lower(), Matrix::from_rows(&[[2.0, 0.0], [1.0, 1.0]]).unwrap());
    }

    #[test]
    fn random_8x8_reconstructs() {
        let mut rng = SmallRng::seed_from_u64(8);
        let m = random_spd(8, &mut rng);
        let f = cholesky(&m).unwrap();
        let err = f.reconstruct().max_abs_diff(&with_jitter(&m, m.default_jitter()));
        assert!(err < 1e-9 * m.matrix().max_abs(), "err {err}");
        // also against the matrix without the nugget
        assert!(f.reconstruct().max_abs_diff(m.matrix()) < 1e-9 * m.matrix().max_abs());
    }

    #[test]
    fn not_positive_definite() {
        let err = cholesky(&sym(&[&[1.0, 2.0], &[2.0, 1.0]])).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { index: 1, .. }));
        let err = cholesky(&sym(&[&[-1.0]])).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { index: 0, .. }));
    }

    #[test]
    fn asymmetric_rejected() {
        let m = Matrix::from_rows(&[[1.0, 0.5], [0.4, 1.0]]).unwrap();
        assert!(SymMatrix::new(m).is_err());
    }

    #[test]
    fn extend_matches_hand_factorization() {
        let f = cholesky_with_jitter(&sym(&[&[4.0]]), 0.0).unwrap();
        let g = chol_extend(&f, &[2.0], 2.0).unwrap();
        assert_eq!(g.lower(), Matrix::from_rows(&[[2.0, 0.0], [1.0, 1.0]]).unwrap());
        // the original is untouched
        assert_eq!(f.n(), 1);
    }

    #[test]
    fn extend_block_diagonal() {
        let f = cholesky_with_jitter(&sym(&[&[4.0, 2.0], &[2.0, 2.0]]), 0.0).unwrap();
        let g = f.extend(&[0.0, 0.0], 9.0).unwrap();
        assert_eq!(g.get(2, 0), 0.0);
        assert_eq!(g.get(2, 1), 0.0);
        assert_eq!(g.get(2, 2), 3.0);
    }

    #[test]
    fn extend_random_6x6_matches_refactorization() {
        let mut rng = SmallRng::seed_from_u64(6);
        let m7 = random_spd(7, &mut rng);
        let a = m7.matrix();
        let m6 = SymMatrix::new(Matrix::from_fn(6, 6, |i, j| a.get(i, j))).unwrap();
        let jitter = m6.default_jitter();
        let f = cholesky_with_jitter(&m6, jitter).unwrap();
        let g = f.extend(&a.row(6)[..6], a.get(6, 6)).unwrap();
        let full = cholesky_with_jitter(&m7, jitter).unwrap();
        let err = g.lower().max_abs_diff(&full.lower());
        assert!(err <= 1e-10 * full.lower().max_abs(), "err {err}");
    }

    #[test]
    fn extend_rejects_indefinite_and_wrong_length() {
        let f = cholesky_with_jitter(&sym(&[&[1.0]]), 0.0).unwrap();
        assert!(matches!(
            f.extend(&[2.0], 1.0),
            Err(Error::NotPositiveDefinite { index: 1, .. })
        ));
        assert!(matches!(
            f.extend(&[2.0, 1.0], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn solve_small_cases() {
        let f = cholesky_with_jitter(&sym(&[&[4.0]]), 0.0).unwrap();
        assert_eq!(solve_spd(&f, &[8.0]).unwrap(), vec![2.0]);
        let id = cholesky_with_jitter(&SymMatrix::new(Matrix::identity(5)).unwrap(), 0.0).unwrap();
        let b = [1.0, -2.0, 3.5, 0.0, 7.0];
        assert_eq!(id.solve(&b).unwrap(), b.to_vec());
        assert!(matches!(f.solve(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn solve_random_residual() {
        let mut rng = SmallRng::seed_from_u64(3);
        let m = random_spd(12, &mut rng);
        let f = cholesky(&m).unwrap();
        let b: Vec<f64> = (0..12).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y = f.solve(&b).unwrap();
        let my = m.matrix().matvec(&y).unwrap();
        let bmax = b.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let res = my.iter().zip(&b).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        assert!(res < 1e-8 * bmax, "residual {res}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reconstruct_round_trip(seed in any::<u64>(), n in 1usize..20) {
            let mut rng = SmallRng::seed_from_u64(seed);
            let m = random_spd(n, &mut rng);
            let f = cholesky(&m).unwrap();
            let err = f.reconstruct().max_abs_diff(&with_jitter(&m, m.default_jitter()));
            prop_assert!(err <= 1e-9 * m.matrix().max_abs());
            for i in 0..n {
                prop_assert!(f.get(i, i) > 0.0);
            }
        }

        #[test]
        fn solve_round_trip(seed in any::<u64>(), n in 1usize..20) {
            let mut rng = SmallRng::seed_from_u64(seed);
            let m = random_spd(n, &mut rng);
            let f = cholesky(&m).unwrap();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = f.solve(&b).unwrap();
            let my = m.matrix().matvec(&y).unwrap();
            let bmax = b.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            for (p, q) in my.iter().zip(&b) {
                prop_assert!((p - q).abs() <= 1e-8 * bmax);
            }
        }
    }
}
