//! Gaussian-process optimistic optimisation over a K-ary partition.
//!
//! Each round the leaf with the largest optimistic score
//!
//! ```text
//! b = a^T mu(X | Z_{t-1}) + sqrt(beta_t) * sqrt(a^T Sigma(X | Z_{t-1}) a) + delta(h)
//! ```
//!
//! is sampled, the posterior is updated with the aggregated reward, and the
//! sampled leaf is split once its confidence width has fallen to `delta(h)`.
//! The recommendation is the node with the largest posterior mean at the
//! deepest expanded depth.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::env::{sample_reward, Environment, TrialRng};
use crate::error::{Error, Result};
use crate::gp::{AggregatedQuery, History, PosteriorMoments};
use crate::kernel::KernelSpec;
use crate::partition::{DiameterSchedule, NodeId, PartitionTree};
use crate::run::{better, run_to_budget, LeafScore, Recommendation, RegretRow, StepLog, TreeOptimizer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpooConfig {
    /// Number of rounds `N`.
    pub budget: usize,
    /// Deepest level a node may live at; nodes at this depth are never split.
    pub h_max: usize,
    /// Failure probability of the confidence bounds.
    pub theta: f64,
    /// Reward noise standard deviation assumed by the model.
    pub noise_std: f64,
    pub kernel: KernelSpec,
    pub schedule: DiameterSchedule,
    /// Branching factor.
    pub k: usize,
    /// Representative points per cell.
    pub s: usize,
    pub d: usize,
}

impl Default for GpooConfig {
    fn default() -> Self {
        Self {
            budget: 80,
            h_max: 10,
            theta: 0.1,
            noise_std: 0.1,
            kernel: KernelSpec::rbf(0.05, 0.1).expect("valid default kernel"),
            schedule: DiameterSchedule::default(),
            k: 2,
            s: 1,
            d: 1,
        }
    }
}

impl GpooConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.budget < 1 {
            return bad("budget must be >= 1".into());
        }
        if self.h_max < 1 {
            return bad("h_max must be >= 1".into());
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(format!("theta must be in (0,1), got {}", self.theta));
        }
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std must be > 0, got {}", self.noise_std));
        }
        if self.k < 2 || self.s < 1 || self.d < 1 {
            return bad("need K >= 2, S >= 1, d >= 1".into());
        }
        KernelSpec::new(self.kernel.family, self.kernel.lengthscale, self.kernel.variance)?;
        DiameterSchedule::new(self.schedule.c, self.schedule.rho)?;
        Ok(())
    }

    /// Number of nodes in a full tree of depth `h_max`: `sum_{h=0}^{h_max} K^h`.
    pub fn max_nodes(&self) -> f64 {
        (0..=self.h_max).map(|h| (self.k as f64).powi(h as i32)).sum()
    }
}

/// `beta_t = 2 ln(M pi^2 t^2 / (6 theta))`.
pub fn beta(cfg: &GpooConfig, t: usize) -> f64 {
    let pi_t = PI * PI * (t as f64).powi(2) / 6.0;
    2.0 * (cfg.max_nodes() * pi_t / cfg.theta).ln()
}

/// Optimistic score of a cell and its three parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BValue {
    pub mean: f64,
    pub ci: f64,
    pub delta_h: f64,
    pub total: f64,
}

impl BValue {
    pub fn new(mean: f64, ci: f64, delta_h: f64) -> Self {
        Self {
            mean,
            ci,
            delta_h,
            total: mean + ci + delta_h,
        }
    }
}

/// `sqrt(beta) * sqrt(variance)`.
pub fn confidence_width(beta: f64, moments: &PosteriorMoments) -> f64 {
    beta.sqrt() * moments.std()
}

/// Posterior state for tree cells, with the per-cell covariances cached.
///
/// Every observation is the average over one cell, so the aggregated Gram
/// entries only depend on pairs of cells and are computed once per pair.
#[derive(Debug, Clone)]
struct CellPosterior {
    history: History,
    /// Node sampled at each round.
    rounds: Vec<NodeId>,
    pair_cov: HashMap<(NodeId, NodeId), f64>,
    prior_var: HashMap<NodeId, f64>,
    /// Covariance of each node with rounds `0..len`.
    cross: HashMap<NodeId, Vec<f64>>,
    /// Moments and the round count they were computed at.
    cache: HashMap<NodeId, (usize, PosteriorMoments)>,
}

impl CellPosterior {
    fn new(cfg: &GpooConfig) -> Result<Self> {
        Ok(Self {
            history: History::new(cfg.kernel, cfg.noise_std * cfg.noise_std, cfg.s, cfg.d)?,
            rounds: Vec::new(),
            pair_cov: HashMap::new(),
            prior_var: HashMap::new(),
            cross: HashMap::new(),
            cache: HashMap::new(),
        })
    }

    fn covariance(&mut self, tree: &PartitionTree, a: NodeId, b: NodeId) -> f64 {
        let key = (a.min(b), a.max(b));
        let kernel = *self.history.kernel();
        *self.pair_cov.entry(key).or_insert_with(|| {
            let (ra, rb) = (tree.node(a).reps(), tree.node(b).reps());
            let w = vec![1.0 / ra.rows() as f64; ra.rows()];
            kernel.aggregated(ra, &w, rb, &w)
        })
    }

    fn prior_variance(&mut self, tree: &PartitionTree, id: NodeId) -> f64 {
        if let Some(&v) = self.prior_var.get(&id) {
            return v;
        }
        let v = AggregatedQuery::uniform(tree.node(id).reps().clone()).prior_variance(self.history.kernel());
        self.prior_var.insert(id, v);
        v
    }

    fn cross_with_rounds(&mut self, tree: &PartitionTree, id: NodeId) -> Vec<f64> {
        let mut cross = self.cross.remove(&id).unwrap_or_default();
        for p in cross.len()..self.rounds.len() {
            let cell = self.rounds[p];
            cross.push(self.covariance(tree, cell, id));
        }
        self.cross.insert(id, cross.clone());
        cross
    }

    fn moments(&mut self, tree: &PartitionTree, id: NodeId) -> Result<PosteriorMoments> {
        let t = self.history.t();
        if let Some(&(at, m)) = self.cache.get(&id) {
            if at == t {
                return Ok(m);
            }
        }
        let cross = self.cross_with_rounds(tree, id);
        let prior = self.prior_variance(tree, id);
        let m = self.history.posterior_with_covariances(&cross, prior)?;
        self.cache.insert(id, (t, m));
        Ok(m)
    }

    fn observe(&mut self, tree: &PartitionTree, id: NodeId, reward: f64) -> Result<()> {
        let cross = self.cross_with_rounds(tree, id);
        let prior = self.prior_variance(tree, id);
        self.history
            .append_with_covariances(tree.node(id).reps(), reward, &cross, prior)?;
        self.rounds.push(id);
        Ok(())
    }
}

/// Posterior summary of one tree node at the start of a round, before the
/// round's sample. Collected only when requested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSnapshot {
    pub t: usize,
    pub depth: usize,
    pub index: u64,
    pub leaf: bool,
    /// Draws of this node in rounds `1..t`.
    pub draws: usize,
    pub mean: f64,
    pub variance: f64,
    pub beta: f64,
    /// Noise-free cell reward.
    pub f_bar: f64,
}

impl CellSnapshot {
    pub fn ci(&self) -> f64 {
        (self.beta * self.variance).sqrt()
    }
}

/// A GPOO run in progress.
#[derive(Debug, Clone)]
pub struct Gpoo {
    cfg: GpooConfig,
    tree: PartitionTree,
    post: CellPosterior,
    t: usize,
    record_cells: bool,
    snapshots: Vec<CellSnapshot>,
}

impl Gpoo {
    pub fn new(cfg: GpooConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            tree: PartitionTree::new(cfg.k, cfg.s, cfg.d)?,
            post: CellPosterior::new(&cfg)?,
            cfg,
            t: 0,
            record_cells: false,
            snapshots: Vec::new(),
        })
    }

    /// Records a [`CellSnapshot`] of every node at the start of every round.
    pub fn with_cell_snapshots(mut self, on: bool) -> Self {
        self.record_cells = on;
        self
    }

    pub fn config(&self) -> &GpooConfig {
        &self.cfg
    }

    pub fn tree(&self) -> &PartitionTree {
        &self.tree
    }

    pub fn history(&self) -> &History {
        &self.post.history
    }

    pub fn snapshots(&self) -> &[CellSnapshot] {
        &self.snapshots
    }

    /// Posterior moments of a node's cell average given all rounds so far.
    pub fn posterior(&mut self, id: NodeId) -> Result<PosteriorMoments> {
        self.post.moments(&self.tree, id)
    }

    /// Score of leaf `id` for round `t` under the current posterior.
    pub fn b_value(&mut self, id: NodeId, t: usize) -> Result<BValue> {
        let m = self.post.moments(&self.tree, id)?;
        let depth = self.tree.node(id).depth;
        Ok(BValue::new(
            m.mean,
            confidence_width(beta(&self.cfg, t), &m),
            self.cfg.schedule.delta(depth),
        ))
    }

    fn snapshot(&mut self, env: &Environment, t: usize, beta_t: f64) -> Result<()> {
        for id in 0..self.tree.len() {
            let m = self.post.moments(&self.tree, id)?;
            let cell = self.tree.node(id);
            self.snapshots.push(CellSnapshot {
                t,
                depth: cell.depth,
                index: cell.index,
                leaf: cell.is_leaf(),
                draws: cell.draws,
                mean: m.mean,
                variance: m.variance,
                beta: beta_t,
                f_bar: env.cell_mean(cell.reps()),
            });
        }
        Ok(())
    }

    /// Splits the node if the post-sample width has reached `delta(h)` and the
    /// node sits above `h_max`.
    fn should_expand(&self, depth: usize, ci_after: f64) -> bool {
        self.cfg.schedule.delta(depth) >= ci_after && depth < self.cfg.h_max
    }
}

impl TreeOptimizer for Gpoo {
    fn budget(&self) -> usize {
        self.cfg.budget
    }

    fn rounds(&self) -> usize {
        self.t
    }

    fn step<R: Rng + ?Sized>(&mut self, env: &Environment, rng: &mut R) -> Result<StepLog> {
        if self.t >= self.cfg.budget {
            return Err(Error::BudgetExhausted {
                budget: self.cfg.budget,
            });
        }
        let t = self.t + 1;
        let beta_t = beta(&self.cfg, t);
        if self.record_cells {
            self.snapshot(env, t, beta_t)?;
        }

        let mut leaves = Vec::with_capacity(self.tree.leaves().len());
        let mut best: Option<(f64, usize, u64)> = None;
        let mut chosen = (PartitionTree::ROOT, BValue::new(0.0, 0.0, 0.0));
        for id in self.tree.leaves().to_vec() {
            let b = self.b_value(id, t)?;
            let cell = self.tree.node(id);
            leaves.push(LeafScore {
                depth: cell.depth,
                index: cell.index,
                b: b.total,
            });
            if better(b.total, cell.depth, cell.index, best) {
                best = Some((b.total, cell.depth, cell.index));
                chosen = (id, b);
            }
        }
        let (id, b) = chosen;

        let reward = sample_reward(env, self.tree.node(id).reps(), rng);
        self.post.observe(&self.tree, id, reward)?;
        self.tree.record_draw(id);
        self.t = t;

        // refresh every leaf against the new posterior
        for leaf in self.tree.leaves().to_vec() {
            self.post.moments(&self.tree, leaf)?;
        }
        let after = self.post.moments(&self.tree, id)?;
        let ci_after = confidence_width(beta_t, &after);
        let depth = self.tree.node(id).depth;
        let expanded = self.should_expand(depth, ci_after);
        if expanded {
            self.tree.split(id)?;
        }

        let cell = self.tree.node(id);
        Ok(StepLog {
            t,
            depth,
            index: cell.index,
            reward,
            beta: Some(beta_t),
            mean: b.mean,
            ci: b.ci,
            delta: b.delta_h,
            b: b.total,
            ci_after,
            draws: cell.draws,
            expanded,
            leaves,
        })
    }

    fn recommend(&mut self) -> Result<Recommendation> {
        let deepest = self.tree.expanded().map(|id| self.tree.node(id).depth).max();
        let Some(h) = deepest else {
            let m = self.post.moments(&self.tree, PartitionTree::ROOT)?;
            return Ok(Recommendation::from_cell(
                self.tree.node(PartitionTree::ROOT),
                m.mean,
                true,
            ));
        };
        let mut best: Option<(f64, usize, u64)> = None;
        let mut pick = PartitionTree::ROOT;
        let mut pick_mean = 0.0;
        for id in 0..self.tree.len() {
            if self.tree.node(id).depth != h {
                continue;
            }
            let m = self.post.moments(&self.tree, id)?;
            let cell = self.tree.node(id);
            if better(m.mean, cell.depth, cell.index, best) {
                best = Some((m.mean, cell.depth, cell.index));
                pick = id;
                pick_mean = m.mean;
            }
        }
        Ok(Recommendation::from_cell(self.tree.node(pick), pick_mean, false))
    }
}

/// Output of a complete run.
#[derive(Debug, Clone)]
pub struct GpooRun {
    pub recommendation: Recommendation,
    pub regret: Vec<RegretRow>,
    pub log: Vec<StepLog>,
    pub snapshots: Vec<CellSnapshot>,
    pub tree: PartitionTree,
}

/// Runs GPOO to its budget with a generator seeded from `seed`.
pub fn run(cfg: &GpooConfig, env: &Environment, seed: u64) -> Result<GpooRun> {
    let mut rng = TrialRng::seed_from_u64(seed);
    run_with(cfg, env, &mut rng, false)
}

/// Runs GPOO to its budget, optionally recording per-cell snapshots.
pub fn run_with<R: Rng + ?Sized>(cfg: &GpooConfig, env: &Environment, rng: &mut R, snapshots: bool) -> Result<GpooRun> {
    if env.dim() != cfg.d {
        return Err(Error::DimensionMismatch {
            expected: cfg.d,
            got: env.dim(),
        });
    }
    let mut opt = Gpoo::new(*cfg)?.with_cell_snapshots(snapshots);
    let (regret, log) = run_to_budget(&mut opt, env, rng)?;
    let recommendation = opt.recommend()?;
    Ok(GpooRun {
        recommendation,
        regret,
        log,
        snapshots: opt.snapshots,
        tree: opt.tree,
    })
}

/// A node that was drawn more often than the draw-count bound allows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawBoundViolation {
    pub t: usize,
    pub depth: usize,
    pub index: u64,
    pub draws: usize,
    pub bound: f64,
}

/// Checks `T <= beta_t sigma^2 / delta(h)^2 + 1` for every expansion in `log`.
///
/// The `+1` accounts for the expansion test running after the round's sample.
pub fn check_draw_bound(log: &[StepLog], cfg: &GpooConfig) -> Vec<DrawBoundViolation> {
    let var = cfg.noise_std * cfg.noise_std;
    log.iter()
        .filter(|s| s.expanded)
        .filter_map(|s| {
            let delta = cfg.schedule.delta(s.depth);
            let bound = beta(cfg, s.t) * var / (delta * delta) + 1.0;
            (s.draws as f64 > bound).then_some(DrawBoundViolation {
                t: s.t,
                depth: s.depth,
                index: s.index,
                draws: s.draws,
                bound,
            })
        })
        .collect()
}

/// A snapshot whose posterior standard deviation exceeds `sigma / sqrt(T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceBoundViolation {
    pub t: usize,
    pub depth: usize,
    pub index: u64,
    pub draws: usize,
    pub std: f64,
    pub bound: f64,
}

/// Checks `sqrt(a^T Sigma_t a) <= sigma / sqrt(T) + slack` for every snapshot of a
/// node drawn `T >= 1` times.
pub fn check_variance_bound(snapshots: &[CellSnapshot], noise_std: f64, slack: f64) -> Vec<VarianceBoundViolation> {
    snapshots
        .iter()
        .filter(|s| s.draws > 0)
        .filter_map(|s| {
            let bound = noise_std / (s.draws as f64).sqrt();
            let std = s.variance.sqrt();
            (std > bound + slack).then_some(VarianceBoundViolation {
                t: s.t,
                depth: s.depth,
                index: s.index,
                draws: s.draws,
                std,
                bound,
            })
        })
        .collect()
}

/// Fraction of snapshots with `|a^T mu - F_bar| <= CI_t`, with the count.
pub fn concentration_coverage(snapshots: &[CellSnapshot]) -> (f64, usize) {
    if snapshots.is_empty() {
        return (1.0, 0);
    }
    let hit = snapshots.iter().filter(|s| (s.mean - s.f_bar).abs() <= s.ci()).count();
    (hit as f64 / snapshots.len() as f64, snapshots.len())
}

/// Problem constants that only enter the regret bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    /// Packing constant `C`.
    pub c: f64,
    /// Near-optimality dimension.
    pub near_opt_dim: f64,
    /// Smoothness constant `L`.
    pub lipschitz: f64,
    /// Tail constant `b`.
    pub tail_b: f64,
}

impl TheoryParams {
    /// `a = h_max exp(-L^2 b / 2)`.
    pub fn failure_constant(&self, cfg: &GpooConfig) -> f64 {
        cfg.h_max as f64 * (-self.lipschitz * self.lipschitz * self.tail_b / 2.0).exp()
    }

    /// Probability `1 - theta - a` with which the bound holds.
    pub fn confidence(&self, cfg: &GpooConfig) -> f64 {
        1.0 - cfg.theta - self.failure_constant(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretBound {
    pub n: usize,
    pub beta_n: f64,
    /// Smallest depth whose cumulative draw budget covers `N / beta_N`.
    pub h_n: usize,
    /// `3 delta(h_N)`.
    pub scan: f64,
    /// `c_1 = 3^{-d} K C sigma^2 / (rho^{-(d+2)} - 1)`.
    pub c1: f64,
    /// Closed form `(3 / rho) (c_1 beta_N / N)^{1/(d+2)}`, an upper bound on `scan`.
    pub closed_form: f64,
    /// `c_1 (beta_N / N)^{1/(d+2)}` exactly as usually quoted.
    pub closed_form_literal: f64,
}

/// Evaluates the simple-regret bound for a budget of `n` rounds.
///
/// `h_N` is the smallest `h'` with
/// `N / beta_N <= K sum_{h <= h'} C (3 delta(h))^{-d} sigma^2 / delta(h)^2`.
pub fn regret_bound(cfg: &GpooConfig, tp: &TheoryParams, n: usize) -> Result<RegretBound> {
    if n < 1 {
        return Err(Error::InvalidParameter("N must be >= 1".into()));
    }
    if tp.c.is_nan() || tp.c <= 0.0 || tp.near_opt_dim.is_nan() || tp.near_opt_dim < 0.0 {
        return Err(Error::InvalidParameter(
            "need C > 0 and near-optimality dimension >= 0".into(),
        ));
    }
    let d = tp.near_opt_dim;
    let var = cfg.noise_std * cfg.noise_std;
    let beta_n = beta(cfg, n);
    let target = n as f64 / beta_n;
    let mut cumulative = 0.0;
    let mut h_n = None;
    for h in 0..=cfg.h_max {
        let delta = cfg.schedule.delta(h);
        cumulative += cfg.k as f64 * tp.c * (3.0 * delta).powf(-d) * var / (delta * delta);
        if target <= cumulative {
            h_n = Some(h);
            break;
        }
    }
    let h_n = h_n.ok_or(Error::NoFeasibleDepth { h_max: cfg.h_max })?;
    let rho = cfg.schedule.rho;
    let c1 = 3f64.powf(-d) * cfg.k as f64 * tp.c * var / (rho.powf(-(d + 2.0)) - 1.0);
    let ratio = beta_n / n as f64;
    Ok(RegretBound {
        n,
        beta_n,
        h_n,
        scan: 3.0 * cfg.schedule.delta(h_n),
        c1,
        closed_form: 3.0 / rho * (c1 * ratio).powf(1.0 / (d + 2.0)),
        closed_form_literal: c1 * ratio.powf(1.0 / (d + 2.0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_env, EnvName, EnvSpec, FnReward};
    use std::sync::Arc;

    fn zero_env() -> Environment {
        build_env(&EnvSpec::named(EnvName::Constant)).unwrap()
    }

    #[test]
    fn beta_values() {
        let cfg = GpooConfig {
            k: 2,
            h_max: 10,
            theta: 0.1,
            ..Default::default()
        };
        assert_eq!(cfg.max_nodes(), 2047.0);
        let want = 2.0 * (2047.0 * PI * PI / 6.0 / 0.1f64).ln();
        assert!((beta(&cfg, 1) - want).abs() < 1e-12);
        assert!((beta(&cfg, 1) - 20.849).abs() < 1e-3);
        assert!(beta(&cfg, 2) > beta(&cfg, 1));
        // theta chosen so that M pi_1 / theta = e^{1}: beta_1 = 2
        let m = GpooConfig {
            k: 2,
            h_max: 1,
            ..Default::default()
        }
        .max_nodes();
        let theta = m * PI * PI / 6.0 / 1f64.exp();
        let deg = GpooConfig {
            k: 2,
            h_max: 1,
            theta,
            ..Default::default()
        };
        assert!((beta(&deg, 1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn prior_b_value() {
        let cfg = GpooConfig::default();
        let mut g = Gpoo::new(cfg).unwrap();
        let b = g.b_value(PartitionTree::ROOT, 1).unwrap();
        assert_eq!(b.mean, 0.0);
        let ci = (beta(&cfg, 1) * 0.1).sqrt();
        assert!((b.ci - ci).abs() < 1e-12);
        assert_eq!(b.delta_h, 14.0);
        assert_eq!(b.total, b.mean + b.ci + b.delta_h);
        // same arithmetic at delta = 1.75
        let at3 = BValue::new(0.0, (20.849f64 * 0.1).sqrt(), 1.75);
        assert!((at3.total - 3.19392).abs() < 1e-5);
    }

    #[test]
    fn deeper_leaf_scores_lower_with_equal_posteriors() {
        let cfg = GpooConfig::default();
        let mut g = Gpoo::new(cfg).unwrap();
        let kids = g.tree.split(0).unwrap();
        let grand = g.tree.split(kids[0]).unwrap();
        // no data: all posteriors equal the prior except for the cell width
        let shallow = g.b_value(kids[1], 1).unwrap();
        let deep = g.b_value(grand[0], 1).unwrap();
        assert_eq!(shallow.mean, deep.mean);
        assert_eq!(shallow.ci, deep.ci);
        assert!(deep.total < shallow.total);
    }

    #[test]
    fn first_round_samples_root() {
        let mut g = Gpoo::new(GpooConfig::default()).unwrap();
        let mut rng = TrialRng::seed_from_u64(0);
        let log = g.step(&zero_env(), &mut rng).unwrap();
        assert_eq!((log.t, log.depth, log.index), (1, 0, 0));
        assert_eq!(log.leaves.len(), 1);
        // the prior width is far below delta(0) = 14
        assert!(log.expanded);
    }

    #[test]
    fn expansion_is_inclusive_at_equality() {
        let g = Gpoo::new(GpooConfig::default()).unwrap();
        assert!(g.should_expand(3, 1.75));
        assert!(!g.should_expand(3, 1.75 + 1e-12));
    }

    #[test]
    fn no_expansion_at_h_max() {
        let cfg = GpooConfig {
            h_max: 2,
            ..Default::default()
        };
        let g = Gpoo::new(cfg).unwrap();
        assert!(g.should_expand(1, 0.0));
        assert!(!g.should_expand(2, 0.0));

        // a full run never builds nodes below h_max
        let run = run(
            &GpooConfig {
                h_max: 2,
                budget: 30,
                ..Default::default()
            },
            &zero_env(),
            1,
        )
        .unwrap();
        assert!(run.tree.nodes().iter().all(|c| c.depth <= 2));
        assert!(run.log.iter().any(|s| s.depth == 2 && !s.expanded));
    }

    #[test]
    fn budget_is_enforced() {
        let cfg = GpooConfig {
            budget: 2,
            ..Default::default()
        };
        let mut g = Gpoo::new(cfg).unwrap();
        let env = zero_env();
        let mut rng = TrialRng::seed_from_u64(0);
        g.step(&env, &mut rng).unwrap();
        g.step(&env, &mut rng).unwrap();
        assert!(matches!(
            g.step(&env, &mut rng),
            Err(Error::BudgetExhausted { budget: 2 })
        ));
        assert_eq!(g.history().t(), 2);
    }

    #[test]
    fn recommendation_rules() {
        let cfg = GpooConfig::default();
        let mut g = Gpoo::new(cfg).unwrap();
        let r = g.recommend().unwrap();
        assert!(r.fallback);
        assert_eq!((r.depth, r.index), (0, 0));

        // only the root expanded: h' = 0, the root is the only depth-0 node
        g.tree.split(0).unwrap();
        let r = g.recommend().unwrap();
        assert!(!r.fallback);
        assert_eq!((r.depth, r.index), (0, 0));
    }

    #[test]
    fn recommendation_takes_best_mean_at_deepest_expanded_depth() {
        // f peaks at x = 0.6; feed exact rewards so the posterior orders depth-2 cells
        let f = Arc::new(FnReward::new(1, |x: &[f64]| -(x[0] - 0.6).powi(2)));
        let env = Environment::from_function(f, 0.0, 100).unwrap();
        let mut g = Gpoo::new(GpooConfig {
            kernel: KernelSpec::rbf(0.3, 0.1).unwrap(),
            ..Default::default()
        })
        .unwrap();
        let kids = g.tree.split(0).unwrap();
        g.tree.split(kids[0]).unwrap();
        g.tree.split(kids[1]).unwrap();
        let mut rng = TrialRng::seed_from_u64(0);
        for id in g.tree.leaves().to_vec() {
            let r = sample_reward(&env, g.tree.node(id).reps(), &mut rng);
            g.post.observe(&g.tree, id, r).unwrap();
        }
        let r = g.recommend().unwrap();
        // deepest expanded depth is 1; of [0, .5] and [.5, 1] the second holds the peak
        assert_eq!((r.depth, r.index), (1, 1));
        // once a depth-2 cell is expanded the pick moves to depth 2, where [.5, .75] holds the peak
        let third = g.tree.find(2, 2).unwrap();
        g.tree.split(third).unwrap();
        let r = g.recommend().unwrap();
        assert_eq!((r.depth, r.index), (2, 2));
    }

    #[test]
    fn zero_function_has_zero_regret() {
        let run = run(
            &GpooConfig {
                budget: 25,
                ..Default::default()
            },
            &zero_env(),
            9,
        )
        .unwrap();
        assert_eq!(run.regret.len(), 25);
        assert!(run.regret.iter().all(|r| r.regret.abs() < 1e-12));
    }

    #[test]
    fn runs_are_deterministic() {
        let env = build_env(&EnvSpec::named(EnvName::F1)).unwrap();
        let cfg = GpooConfig {
            budget: 30,
            ..Default::default()
        };
        let a = run(&cfg, &env, 42).unwrap();
        let b = run(&cfg, &env, 42).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.regret, b.regret);
        let c = run(&cfg, &env, 43).unwrap();
        assert_ne!(a.log, c.log);
    }

    #[test]
    fn exactly_budget_rewards() {
        let env = build_env(&EnvSpec::named(EnvName::F2)).unwrap();
        let cfg = GpooConfig {
            budget: 40,
            s: 4,
            ..Default::default()
        };
        let run = run(&cfg, &env, 3).unwrap();
        assert_eq!(run.log.len(), 40);
        let draws: usize = run.tree.nodes().iter().map(|c| c.draws).sum();
        assert_eq!(draws, 40);
    }

    #[test]
    fn one_round_with_huge_prior_falls_back_to_root() {
        // post-sample variance 500 * 100 / 600 gives a width near 42 > delta(0) = 14
        let cfg = GpooConfig {
            budget: 1,
            noise_std: 10.0,
            kernel: KernelSpec::rbf(0.05, 500.0).unwrap(),
            ..Default::default()
        };
        let run = run(&cfg, &zero_env(), 0).unwrap();
        assert!(!run.log[0].expanded);
        assert!(run.recommendation.fallback);
        assert_eq!((run.recommendation.depth, run.recommendation.index), (0, 0));
    }

    #[test]
    fn expansion_replay_matches_rule() {
        let env = build_env(&EnvSpec::named(EnvName::F1)).unwrap();
        let cfg = GpooConfig::default();
        let run = run(&cfg, &env, 5).unwrap();
        for s in &run.log {
            let rule = cfg.schedule.delta(s.depth) >= s.ci_after && s.depth < cfg.h_max;
            assert_eq!(s.expanded, rule, "round {}", s.t);
        }
    }

    #[test]
    fn selection_is_scale_invariant() {
        let env = build_env(&EnvSpec::named(EnvName::F1)).unwrap();
        let run = run(&GpooConfig::default(), &env, 2).unwrap();
        for s in &run.log {
            for scale in [0.5, 3.0, 1e3] {
                let best = s
                    .leaves
                    .iter()
                    .fold(None::<LeafScore>, |acc, l| match acc {
                        Some(a) if !better(l.b * scale, l.depth, l.index, Some((a.b * scale, a.depth, a.index))) => {
                            Some(a)
                        }
                        _ => Some(*l),
                    })
                    .unwrap();
                assert_eq!((best.depth, best.index), (s.depth, s.index));
            }
        }
    }

    #[test]
    fn draw_bound_checker() {
        let cfg = GpooConfig::default();
        assert!(check_draw_bound(&[], &cfg).is_empty());
        let delta = cfg.schedule.delta(6);
        let bound = beta(&cfg, 50) * 0.01 / (delta * delta);
        let fault = StepLog {
            t: 50,
            depth: 6,
            index: 3,
            reward: 0.0,
            beta: Some(beta(&cfg, 50)),
            mean: 0.0,
            ci: 0.0,
            delta,
            b: 0.0,
            ci_after: 0.0,
            draws: (bound + 5.0).ceil() as usize,
            expanded: true,
            leaves: vec![],
        };
        let v = check_draw_bound(std::slice::from_ref(&fault), &cfg);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].depth, v[0].index), (6, 3));
        let ok = StepLog {
            draws: bound.floor() as usize,
            ..fault
        };
        assert!(check_draw_bound(&[ok], &cfg).is_empty());

        let env = build_env(&EnvSpec::named(EnvName::F1)).unwrap();
        let run = run(&cfg, &env, 17).unwrap();
        assert!(check_draw_bound(&run.log, &cfg).is_empty());
    }

    #[test]
    fn snapshots_cover_tree_each_round() {
        let env = build_env(&EnvSpec::named(EnvName::F1)).unwrap();
        let cfg = GpooConfig {
            budget: 10,
            ..Default::default()
        };
        let mut rng = TrialRng::seed_from_u64(1);
        let r = run_with(&cfg, &env, &mut rng, true).unwrap();
        assert_eq!(r.snapshots.iter().filter(|s| s.t == 1).count(), 1);
        assert!(check_variance_bound(&r.snapshots, cfg.noise_std, 1e-10).is_empty());
        let (cov, n) = concentration_coverage(&r.snapshots);
        assert!(n > 10 && cov > 0.5);
    }

    #[test]
    fn regret_bound_scan() {
        let cfg = GpooConfig {
            k: 2,
            noise_std: 0.1,
            h_max: 10,
            theta: 0.1,
            ..Default::default()
        };
        let tp = TheoryParams {
            c: 1.0,
            near_opt_dim: 0.0,
            lipschitz: 1.0,
            tail_b: 1.0,
        };
        let b = regret_bound(&cfg, &tp, 80).unwrap();
        // brute-force: first h' whose cumulative sum reaches N / beta_N
        let target = 80.0 / beta(&cfg, 80);
        let mut sum = 0.0;
        let mut want = None;
        for h in 0..=10 {
            let dh = 14.0 * 0.5f64.powi(h);
            sum += 2.0 * 0.01 / (dh * dh);
            if sum >= target {
                want = Some(h as usize);
                break;
            }
        }
        assert_eq!(Some(b.h_n), want);
        assert_eq!(b.scan, 3.0 * cfg.schedule.delta(b.h_n));
        assert!(b.closed_form >= b.scan);

        let mut last = f64::INFINITY;
        for n in [10, 100, 1000, 5000] {
            let v = regret_bound(&cfg, &tp, n).unwrap().scan;
            assert!(v <= last);
            last = v;
        }
        assert!(matches!(
            regret_bound(&cfg, &tp, 10_000_000),
            Err(Error::NoFeasibleDepth { h_max: 10 })
        ));
    }

    #[test]
    fn theory_confidence() {
        let cfg = GpooConfig::default();
        let tp = TheoryParams {
            c: 1.0,
            near_opt_dim: 1.0,
            lipschitz: 3.0,
            tail_b: 2.0,
        };
        let a = 10.0 * (-9.0f64).exp();
        assert!((tp.failure_constant(&cfg) - a).abs() < 1e-15);
        assert!((tp.confidence(&cfg) - (0.9 - a)).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs() {
        assert!(Gpoo::new(GpooConfig {
            theta: 1.0,
            ..Default::default()
        })
        .is_err());
        assert!(Gpoo::new(GpooConfig {
            budget: 0,
            ..Default::default()
        })
        .is_err());
        assert!(Gpoo::new(GpooConfig {
            h_max: 0,
            ..Default::default()
        })
        .is_err());
        assert!(Gpoo::new(GpooConfig {
            k: 1,
            ..Default::default()
        })
        .is_err());
        let env = build_env(&EnvSpec::custom(vec![vec![0.5, 0.5]], vec![1.0], None)).unwrap();
        assert!(matches!(
            run(&GpooConfig::default(), &env, 0),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
