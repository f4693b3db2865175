//! Gaussian-process posterior under aggregated observations.
//!
//! Every round contributes one observation `r = a^T f(X) + eps` where `X` holds
//! the `S` representative points of the sampled cell and `a` has all entries
//! equal to `1/S`. The aggregation matrix `A` is never materialised: round `p`
//! owns the contiguous block of rows `p*S .. (p+1)*S` of the stacked points.
//!
//! The factor of `A k(X, X) A^T + sigma^2 I` is grown by one row per round, so
//! the cost of an append is `O(t^2)` plus the `O(t S^2)` kernel evaluations
//! needed for the new row.

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{cholesky, dot, CholFactor, Matrix, SymMatrix, NUGGET_SCALE};

/// Weighted set of test points `a_*^T f(X_*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedQuery {
    pub points: Matrix,
    pub weights: Vec<f64>,
}

impl AggregatedQuery {
    pub fn new(points: Matrix, weights: Vec<f64>) -> Result<Self> {
        if points.rows() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.rows(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter("query weights must be finite".into()));
        }
        Ok(Self { points, weights })
    }

    /// Equal weights `1/n` over all rows: the cell average.
    pub fn uniform(points: Matrix) -> Self {
        let n = points.rows();
        Self {
            points,
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Prior variance `a^T k(X, X) a`.
    pub fn prior_variance(&self, kernel: &KernelSpec) -> f64 {
        kernel.aggregated(&self.points, &self.weights, &self.points, &self.weights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorMoments {
    pub mean: f64,
    pub variance: f64,
}

impl PosteriorMoments {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Observation history `(X_{1:t}, Y_{1:t}, A_{1:t})` with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct History {
    kernel: KernelSpec,
    noise_var: f64,
    width: usize,
    dim: usize,
    points: Matrix,
    rewards: Vec<f64>,
    chol: CholFactor,
    /// `(A k A^T + sigma^2 I)^{-1} Y`, refreshed on every append.
    alpha: Vec<f64>,
}

impl History {
    /// Empty history for cells of `width` representative points in `dim` dimensions.
    pub fn new(kernel: KernelSpec, noise_var: f64, width: usize, dim: usize) -> Result<Self> {
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be > 0, got {noise_var}"
            )));
        }
        if width == 0 || dim == 0 {
            return Err(Error::InvalidParameter("cell width and dimension must be >= 1".into()));
        }
        Ok(Self {
            kernel,
            noise_var,
            width,
            dim,
            points: Matrix::zeros(0, dim),
            rewards: Vec::new(),
            chol: CholFactor::empty(0.0),
            alpha: Vec::new(),
        })
    }

    pub fn t(&self) -> usize {
        self.rewards.len()
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn chol(&self) -> &CholFactor {
        &self.chol
    }

    /// Stacked representative points, `t*S` rows.
    pub fn points(&self) -> &Matrix {
        &self.points
    }

    /// Representative points sampled at round `p` (0-based).
    pub fn round_points(&self, p: usize) -> Matrix {
        let s = self.width;
        let rows: Vec<&[f64]> = (p * s..(p + 1) * s).map(|i| self.points.row(i)).collect();
        Matrix::from_rows(&rows).expect("rows share the history dimension")
    }

    /// Column indices of `X_{1:t}` aggregated by round `p`; row `p` of `A`
    /// holds `1/S` on exactly these columns.
    pub fn round_columns(&self, p: usize) -> std::ops::Range<usize> {
        p * self.width..(p + 1) * self.width
    }

    fn check_block(&self, x: &Matrix) -> Result<()> {
        if x.rows() != self.width {
            return Err(Error::DimensionMismatch {
                expected: self.width,
                got: x.rows(),
            });
        }
        if x.cols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.cols(),
            });
        }
        Ok(())
    }

    /// Covariances `a_p^T k(X_p, X_*) a_*` between every past round and a query.
    pub fn cross_covariances(&self, q: &AggregatedQuery) -> Result<Vec<f64>> {
        if q.points.cols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: q.points.cols(),
            });
        }
        let a = vec![1.0 / self.width as f64; self.width];
        Ok((0..self.t())
            .map(|p| self.kernel.aggregated(&self.round_points(p), &a, &q.points, &q.weights))
            .collect())
    }

    /// Records the reward of sampling the cell with representative rows `x_new`.
    pub fn append(&mut self, x_new: &Matrix, reward: f64) -> Result<()> {
        self.check_block(x_new)?;
        let q = AggregatedQuery::uniform(x_new.clone());
        let cross = self.cross_covariances(&q)?;
        let self_cov = q.prior_variance(&self.kernel);
        self.append_with_covariances(x_new, reward, &cross, self_cov)
    }

    /// [`History::append`] with the new row of `A k A^T` supplied by the caller:
    /// `cross[p]` is the covariance with round `p` and `self_cov` is `a^T k(X, X) a`.
    pub fn append_with_covariances(&mut self, x_new: &Matrix, reward: f64, cross: &[f64], self_cov: f64) -> Result<()> {
        self.check_block(x_new)?;
        if cross.len() != self.t() {
            return Err(Error::DimensionMismatch {
                expected: self.t(),
                got: cross.len(),
            });
        }
        let q22 = self_cov + self.noise_var;
        if self.t() == 0 {
            self.chol = CholFactor::empty(NUGGET_SCALE * q22.abs());
        }
        self.chol.push(cross, q22)?;
        self.points.append_rows(x_new)?;
        self.rewards.push(reward);
        self.alpha = self.chol.solve(&self.rewards)?;
        Ok(())
    }

    /// Posterior moments of `a_*^T f(X_*)`.
    pub fn posterior(&self, q: &AggregatedQuery) -> Result<PosteriorMoments> {
        let cross = self.cross_covariances(q)?;
        self.posterior_with_covariances(&cross, q.prior_variance(&self.kernel))
    }

    /// Posterior moments given precomputed cross-covariances with every round
    /// and the query's prior variance.
    pub fn posterior_with_covariances(&self, cross: &[f64], prior_var: f64) -> Result<PosteriorMoments> {
        if cross.len() != self.t() {
            return Err(Error::DimensionMismatch {
                expected: self.t(),
                got: cross.len(),
            });
        }
        let mean = dot(cross, &self.alpha);
        let v = self.chol.forward_solve(cross)?;
        let variance = (prior_var - dot(&v, &v)).max(0.0);
        Ok(PosteriorMoments { mean, variance })
    }

    /// Dense `A k(X, X) A^T + sigma^2 I`, assembled from scratch.
    pub fn aggregated_gram(&self) -> SymMatrix {
        let t = self.t();
        let a = vec![1.0 / self.width as f64; self.width];
        let blocks: Vec<Matrix> = (0..t).map(|p| self.round_points(p)).collect();
        let mut q = Matrix::zeros(t, t);
        for i in 0..t {
            for j in 0..=i {
                let v = self.kernel.aggregated(&blocks[i], &a, &blocks[j], &a);
                q.set(i, j, v);
                q.set(j, i, v);
            }
            q.set(i, i, q.get(i, i) + self.noise_var);
        }
        SymMatrix::new(q).expect("assembled symmetric")
    }
}

/// Posterior mean of a GP conditioned on point observations, used as a
/// deterministic reward function.
#[derive(Debug, Clone)]
pub struct ConditionedMean {
    kernel: KernelSpec,
    anchors: Matrix,
    weights: Vec<f64>,
}

impl ConditionedMean {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.anchors
            .row_iter()
            .zip(&self.weights)
            .map(|(a, w)| w * self.kernel.eval_unchecked(x, a))
            .sum()
    }

    pub fn dim(&self) -> usize {
        self.anchors.cols()
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }
}

/// `f(x) = k(x, anchors) (k(anchors, anchors) + gp_noise_var I)^{-1} values`.
pub fn condition_mean_function(
    kernel: KernelSpec,
    anchors: &Matrix,
    values: &[f64],
    gp_noise_var: f64,
) -> Result<ConditionedMean> {
    if anchors.rows() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: anchors.rows(),
            got: values.len(),
        });
    }
    if anchors.rows() == 0 {
        return Err(Error::InvalidParameter("at least one anchor is required".into()));
    }
    if gp_noise_var.is_nan() || gp_noise_var < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "gp noise variance must be >= 0, got {gp_noise_var}"
        )));
    }
    let mut g = kernel.gram(anchors, anchors)?;
    for i in 0..g.rows() {
        g.set(i, i, g.get(i, i) + gp_noise_var);
    }
    let chol = cholesky(&SymMatrix::new(g)?)?;
    let weights = chol.solve(values)?;
    Ok(ConditionedMean {
        kernel,
        anchors: anchors.clone(),
        weights,
    })
}
