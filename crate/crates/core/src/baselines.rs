//! Empirical-mean tree bandits: AVE-StoOO and its single-point case, StoOO.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::env::{sample_reward, Environment, TrialRng};
use crate::error::{Error, Result};
use crate::partition::{DiameterSchedule, PartitionTree};
use crate::run::{better, run_to_budget, LeafScore, Recommendation, RegretRow, StepLog, TreeOptimizer};

/// Running reward statistics of one node. `mean * count == sum` up to rounding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    pub count: usize,
    pub sum: f64,
    pub mean: f64,
}

impl EmpiricalStats {
    pub fn push(&mut self, reward: f64) {
        self.count += 1;
        self.sum += reward;
        self.mean = self.sum / self.count as f64;
    }
}

/// `2 ln(t^2 / theta)`.
fn log_term(t: usize, theta: f64) -> f64 {
    2.0 * ((t as f64).powi(2) / theta).ln()
}

/// `mu + sqrt(2 ln(t^2/theta) / T) + delta_h`; `+inf` for an unvisited node.
pub fn b_tilde(stats: &EmpiricalStats, t: usize, theta: f64, delta_h: f64) -> f64 {
    if stats.count == 0 {
        return f64::INFINITY;
    }
    stats.mean + (log_term(t, theta) / stats.count as f64).sqrt() + delta_h
}

/// Draw count at which a node at width `delta_h` is split in round `t`.
pub fn expansion_threshold(t: usize, theta: f64, delta_h: f64) -> f64 {
    log_term(t, theta) / (delta_h * delta_h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoooConfig {
    pub budget: usize,
    pub h_max: usize,
    pub theta: f64,
    pub schedule: DiameterSchedule,
    pub k: usize,
    pub s: usize,
    pub d: usize,
}

impl Default for StoooConfig {
    fn default() -> Self {
        Self {
            budget: 80,
            h_max: 10,
            theta: 0.1,
            schedule: DiameterSchedule::default(),
            k: 2,
            s: 1,
            d: 1,
        }
    }
}

impl StoooConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget < 1 || self.h_max < 1 {
            return Err(Error::InvalidParameter("budget and h_max must be >= 1".into()));
        }
        if !(self.theta > 0.0 && self.theta < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "theta must be in (0, 0.5), got {}",
                self.theta
            )));
        }
        if self.k < 2 || self.s < 1 || self.d < 1 {
            return Err(Error::InvalidParameter("need K >= 2, S >= 1, d >= 1".into()));
        }
        DiameterSchedule::new(self.schedule.c, self.schedule.rho)?;
        Ok(())
    }
}

/// AVE-StoOO; with `s == 1` this is StoOO.
#[derive(Debug, Clone)]
pub struct AveStoOO {
    cfg: StoooConfig,
    tree: PartitionTree,
    stats: Vec<EmpiricalStats>,
    t: usize,
    out_of_range: usize,
}

impl AveStoOO {
    pub fn new(cfg: StoooConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            tree: PartitionTree::new(cfg.k, cfg.s, cfg.d)?,
            stats: vec![EmpiricalStats::default()],
            cfg,
            t: 0,
            out_of_range: 0,
        })
    }

    pub fn config(&self) -> &StoooConfig {
        &self.cfg
    }

    pub fn tree(&self) -> &PartitionTree {
        &self.tree
    }

    pub fn stats(&self) -> &[EmpiricalStats] {
        &self.stats
    }

    /// Rewards observed outside `[0, 1]`.
    pub fn out_of_range(&self) -> usize {
        self.out_of_range
    }

    fn should_expand(&self, id: usize, t: usize) -> bool {
        let depth = self.tree.node(id).depth;
        let thr = expansion_threshold(t, self.cfg.theta, self.cfg.schedule.delta(depth));
        self.stats[id].count as f64 >= thr && depth < self.cfg.h_max
    }

    /// Records `reward` for node `id` without sampling; for replaying fixed rewards.
    pub fn observe(&mut self, id: usize, reward: f64) {
        self.stats[id].push(reward);
        self.tree.record_draw(id);
        if !(0.0..=1.0).contains(&reward) {
            self.out_of_range += 1;
        }
    }
}

impl TreeOptimizer for AveStoOO {
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
        let mut leaves = Vec::with_capacity(self.tree.leaves().len());
        let mut best: Option<(f64, usize, u64)> = None;
        let mut id = PartitionTree::ROOT;
        for &leaf in self.tree.leaves() {
            let cell = self.tree.node(leaf);
            let b = b_tilde(
                &self.stats[leaf],
                t,
                self.cfg.theta,
                self.cfg.schedule.delta(cell.depth),
            );
            leaves.push(LeafScore {
                depth: cell.depth,
                index: cell.index,
                b,
            });
            if better(b, cell.depth, cell.index, best) {
                best = Some((b, cell.depth, cell.index));
                id = leaf;
            }
        }
        let before = self.stats[id];
        let depth = self.tree.node(id).depth;
        let delta = self.cfg.schedule.delta(depth);
        let ci = if before.count == 0 {
            f64::INFINITY
        } else {
            (log_term(t, self.cfg.theta) / before.count as f64).sqrt()
        };

        let reward = sample_reward(env, self.tree.node(id).reps(), rng);
        self.observe(id, reward);
        self.t = t;
        let ci_after = (log_term(t, self.cfg.theta) / self.stats[id].count as f64).sqrt();

        let expanded = self.should_expand(id, t);
        if expanded {
            let kids = self.tree.split(id)?;
            self.stats
                .resize(self.stats.len() + kids.len(), EmpiricalStats::default());
        }
        let cell = self.tree.node(id);
        Ok(StepLog {
            t,
            depth,
            index: cell.index,
            reward,
            beta: None,
            mean: before.mean,
            ci,
            delta,
            b: before.mean + ci + delta,
            ci_after,
            draws: cell.draws,
            expanded,
            leaves,
        })
    }

    fn recommend(&mut self) -> Result<Recommendation> {
        let mut pick: Option<usize> = None;
        for id in self.tree.expanded() {
            let c = self.tree.node(id);
            let replace = match pick {
                None => true,
                Some(p) => {
                    let b = self.tree.node(p);
                    c.depth > b.depth || (c.depth == b.depth && c.index < b.index)
                }
            };
            if replace {
                pick = Some(id);
            }
        }
        let id = pick.unwrap_or(PartitionTree::ROOT);
        Ok(Recommendation::from_cell(
            self.tree.node(id),
            self.stats[id].mean,
            pick.is_none(),
        ))
    }
}

#[derive(Debug, Clone)]
pub struct StoooRun {
    pub recommendation: Recommendation,
    pub regret: Vec<RegretRow>,
    pub log: Vec<StepLog>,
    pub tree: PartitionTree,
    pub out_of_range: usize,
}

/// Runs AVE-StoOO to its budget with a generator seeded from `seed`.
pub fn run(cfg: &StoooConfig, env: &Environment, seed: u64) -> Result<StoooRun> {
    run_with(cfg, env, &mut TrialRng::seed_from_u64(seed))
}

pub fn run_with<R: Rng + ?Sized>(cfg: &StoooConfig, env: &Environment, rng: &mut R) -> Result<StoooRun> {
    if env.dim() != cfg.d {
        return Err(Error::DimensionMismatch {
            expected: cfg.d,
            got: env.dim(),
        });
    }
    let mut opt = AveStoOO::new(*cfg)?;
    let (regret, log) = run_to_budget(&mut opt, env, rng)?;
    let recommendation = opt.recommend()?;
    Ok(StoooRun {
        recommendation,
        regret,
        log,
        out_of_range: opt.out_of_range,
        tree: opt.tree,
    })
}
