//! Simulated reward environments.
//!
//! Reward functions are posterior means of a GP conditioned on a handful of
//! hand-placed anchor points. A reward for a cell is the average of `f` over
//! its representative points plus i.i.d. Gaussian noise.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{condition_mean_function, ConditionedMean};
use crate::kernel::KernelSpec;
use crate::linalg::Matrix;

pub const DEFAULT_GRID_SIZE: usize = 1000;
pub const DEFAULT_REWARD_NOISE_STD: f64 = 0.1;
/// Observation noise used when conditioning the generating GP on its anchors.
pub const GP_NOISE_STD: f64 = 0.005;

/// A deterministic function on `[0,1]^d`.
pub trait RewardFunction: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn dim(&self) -> usize;
}

impl RewardFunction for ConditionedMean {
    fn value(&self, x: &[f64]) -> f64 {
        ConditionedMean::value(self, x)
    }

    fn dim(&self) -> usize {
        ConditionedMean::dim(self)
    }
}

/// Adapter for closures.
pub struct FnReward<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnReward<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> RewardFunction for FnReward<F> {
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvName {
    /// Several similar local maxima.
    F1,
    /// Periodic-like ripples with a spike near the right edge.
    F2,
    /// `F2` plus a high-frequency component near the optimum, shorter lengthscale.
    F3,
    /// `f = 0`.
    Constant,
    /// User supplied anchors and values.
    Custom,
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(Self::F1),
            "f2" => Ok(Self::F2),
            "f3" => Ok(Self::F3),
            "constant" | "zero" => Ok(Self::Constant),
            "custom" => Ok(Self::Custom),
            other => Err(Error::InvalidParameter(format!("unknown environment `{other}`"))),
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::F1 => "f1",
            Self::F2 => "f2",
            Self::F3 => "f3",
            Self::Constant => "constant",
            Self::Custom => "custom",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: EnvName,
    /// Anchor points for `Custom`; ignored by the named environments.
    pub anchors: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Generating kernel for `Custom`; named environments fix their own.
    pub kernel: Option<KernelSpec>,
    pub reward_noise_std: f64,
    pub grid_size: usize,
}

impl EnvSpec {
    pub fn named(name: EnvName) -> Self {
        Self {
            name,
            anchors: Vec::new(),
            values: Vec::new(),
            kernel: None,
            reward_noise_std: DEFAULT_REWARD_NOISE_STD,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }

    pub fn custom(anchors: Vec<Vec<f64>>, values: Vec<f64>, kernel: Option<KernelSpec>) -> Self {
        Self {
            anchors,
            values,
            kernel,
            ..Self::named(EnvName::Custom)
        }
    }

    pub fn with_noise(mut self, std: f64) -> Self {
        self.reward_noise_std = std;
        self
    }

    /// Anchors, values and generating kernel.
    fn definition(&self) -> Result<(Vec<Vec<f64>>, Vec<f64>, KernelSpec)> {
        let default_kernel = KernelSpec::rbf(0.05, 0.1)?;
        Ok(match self.name {
            EnvName::F1 => (
                [0.05, 0.2, 0.4, 0.65, 0.9].iter().map(|&x| vec![x]).collect(),
                vec![0.85, 0.1, 0.87, 0.05, 0.98],
                default_kernel,
            ),
            EnvName::F2 => {
                let (a, v) = ripple_anchors();
                (a, v, default_kernel)
            }
            EnvName::F3 => {
                let (mut a, mut v) = ripple_anchors();
                a.extend([vec![0.94], vec![0.945]]);
                v.extend([0.1, 0.2]);
                (a, v, KernelSpec::rbf(0.01, 0.1)?)
            }
            EnvName::Constant => (vec![vec![0.5]], vec![0.0], default_kernel),
            EnvName::Custom => (
                self.anchors.clone(),
                self.values.clone(),
                self.kernel.unwrap_or(default_kernel),
            ),
        })
    }

    /// The covariance the reward function was generated with.
    pub fn generating_kernel(&self) -> Result<KernelSpec> {
        Ok(self.definition()?.2)
    }
}

/// `[0, 0.9]` cut into ten regions: centre valued 0.1, centre + 2/3 region width
/// valued 0.2, plus the optimum `(0.95, 0.9)`.
fn ripple_anchors() -> (Vec<Vec<f64>>, Vec<f64>) {
    let width = 0.09;
    let mut anchors = Vec::new();
    let mut values = Vec::new();
    for j in 0..10 {
        let centre = width * (j as f64 + 0.5);
        anchors.push(vec![centre]);
        values.push(0.1);
        anchors.push(vec![centre + 2.0 / 3.0 * width]);
        values.push(0.2);
    }
    anchors.push(vec![0.95]);
    values.push(0.9);
    (anchors, values)
}

/// A reward function together with its noise level and empirical optimum.
#[derive(Clone)]
pub struct Environment {
    f: Arc<dyn RewardFunction>,
    dim: usize,
    reward_noise_std: f64,
    grid_size: usize,
    f_star: f64,
    x_star: Vec<f64>,
    grid_mean: f64,
    kernel: Option<KernelSpec>,
}

impl fmt::Debug for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Environment")
            .field("dim", &self.dim)
            .field("reward_noise_std", &self.reward_noise_std)
            .field("grid_size", &self.grid_size)
            .field("f_star", &self.f_star)
            .field("x_star", &self.x_star)
            .finish()
    }
}

/// Builds a named or custom environment.
pub fn build_env(spec: &EnvSpec) -> Result<Environment> {
    let (anchors, values, kernel) = spec.definition()?;
    let anchors = Matrix::from_rows(&anchors)?;
    let f = condition_mean_function(kernel, &anchors, &values, GP_NOISE_STD * GP_NOISE_STD)?;
    let mut env = Environment::from_function(Arc::new(f), spec.reward_noise_std, spec.grid_size)?;
    env.kernel = Some(kernel);
    Ok(env)
}

impl Environment {
    /// Wraps an arbitrary function; `f_star` is found on a regular grid.
    pub fn from_function(f: Arc<dyn RewardFunction>, reward_noise_std: f64, grid_size: usize) -> Result<Self> {
        if !(reward_noise_std >= 0.0 && reward_noise_std.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "reward noise std must be >= 0, got {reward_noise_std}"
            )));
        }
        if grid_size < 2 {
            return Err(Error::InvalidParameter("grid size must be >= 2".into()));
        }
        let dim = f.dim();
        let (f_star, x_star, grid_mean) = grid_search(f.as_ref(), dim, grid_size);
        Ok(Self {
            f,
            dim,
            reward_noise_std,
            grid_size,
            f_star,
            x_star,
            grid_mean,
            kernel: None,
        })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.f.value(x)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn reward_noise_std(&self) -> f64 {
        self.reward_noise_std
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    /// Average of `f` over the optimum grid.
    pub fn grid_mean(&self) -> f64 {
        self.grid_mean
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// Kernel the function was generated from, when known.
    pub fn kernel(&self) -> Option<KernelSpec> {
        self.kernel
    }

    /// Noise-free cell reward: the mean of `f` over the rows of `reps`.
    pub fn cell_mean(&self, reps: &Matrix) -> f64 {
        reps.row_iter().map(|x| self.f.value(x)).sum::<f64>() / reps.rows() as f64
    }
}

/// Points per axis: `grid_size` in one dimension, `grid_size^(1/d)` otherwise.
fn points_per_axis(dim: usize, grid_size: usize) -> usize {
    if dim == 1 {
        grid_size
    } else {
        ((grid_size as f64).powf(1.0 / dim as f64).round() as usize).max(2)
    }
}

fn grid_search(f: &dyn RewardFunction, dim: usize, grid_size: usize) -> (f64, Vec<f64>, f64) {
    let n = points_per_axis(dim, grid_size);
    let total = n.pow(dim as u32);
    let mut best = f64::NEG_INFINITY;
    let mut best_x = vec![0.0; dim];
    let mut sum = 0.0;
    let mut x = vec![0.0; dim];
    for flat in 0..total {
        let mut rem = flat;
        for xi in x.iter_mut() {
            *xi = (rem % n) as f64 / (n - 1) as f64;
            rem /= n;
        }
        let v = f.value(&x);
        sum += v;
        if v > best {
            best = v;
            best_x.copy_from_slice(&x);
        }
    }
    (best, best_x, sum / total as f64)
}

/// Noisy aggregated reward `mean_s f(x_s) + eps`, `eps ~ N(0, sigma^2)`.
pub fn sample_reward<R: Rng + ?Sized>(env: &Environment, reps: &Matrix, rng: &mut R) -> f64 {
    let noise: f64 = rng.sample(StandardNormal);
    env.cell_mean(reps) + env.reward_noise_std * noise
}

/// `f* - mean_s f(x_s)`. Slightly negative values are possible because `f*`
/// comes from a finite grid.
pub fn aggregated_regret(env: &Environment, reps: &Matrix) -> f64 {
    env.f_star - env.cell_mean(reps)
}

/// Generator used for every stochastic draw in a run.
pub type TrialRng = ChaCha8Rng;

/// Independent stream for `(base_seed, label, index)`; the result does not
/// depend on the order in which streams are created.
pub fn stream_rng(base_seed: u64, label: &str, index: u64) -> TrialRng {
    // FNV-1a over the label and index, stable across platforms and releases
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes().chain(index.to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(h);
    rng
}
