//! Types shared by every tree optimiser and the loop that drives them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{aggregated_regret, Environment};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::partition::{Bounds, Cell};

/// Cell returned by an optimiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub depth: usize,
    pub index: u64,
    pub bounds: Bounds,
    pub reps: Matrix,
    /// Posterior mean (GPOO) or empirical mean (StoOO family) of the cell.
    pub post_mean: f64,
    /// `true` when no node had been expanded and the root was returned.
    pub fallback: bool,
}

impl Recommendation {
    pub fn from_cell(cell: &Cell, post_mean: f64, fallback: bool) -> Self {
        Self {
            depth: cell.depth,
            index: cell.index,
            bounds: cell.bounds.clone(),
            reps: cell.reps.clone(),
            post_mean,
            fallback,
        }
    }
}

/// Score of one leaf at selection time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafScore {
    pub depth: usize,
    pub index: u64,
    pub b: f64,
}

/// Everything that happened in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub t: usize,
    pub depth: usize,
    pub index: u64,
    pub reward: f64,
    /// Exploration multiplier of the round; `None` for the empirical baselines.
    pub beta: Option<f64>,
    /// Components of the selected leaf's score before sampling.
    pub mean: f64,
    pub ci: f64,
    pub delta: f64,
    pub b: f64,
    /// Confidence width of the selected leaf after the reward was recorded.
    pub ci_after: f64,
    /// Draws of the selected leaf including this round.
    pub draws: usize,
    pub expanded: bool,
    pub leaves: Vec<LeafScore>,
}

/// One row of a regret trace: the recommendation after round `round`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub round: usize,
    pub regret: f64,
    pub rec_depth: usize,
    pub rec_index: u64,
}

/// A fixed-budget optimiser over a hierarchical partition.
pub trait TreeOptimizer {
    fn budget(&self) -> usize;

    /// Rounds played so far.
    fn rounds(&self) -> usize;

    /// Plays one round against `env`.
    fn step<R: Rng + ?Sized>(&mut self, env: &Environment, rng: &mut R) -> Result<StepLog>;

    /// Applies the return rule to the current tree.
    fn recommend(&mut self) -> Result<Recommendation>;
}

/// Plays the optimiser to its budget, recording the regret of the
/// recommendation after every round.
pub fn run_to_budget<O, R>(opt: &mut O, env: &Environment, rng: &mut R) -> Result<(Vec<RegretRow>, Vec<StepLog>)>
where
    O: TreeOptimizer,
    R: Rng + ?Sized,
{
    let mut regret = Vec::with_capacity(opt.budget());
    let mut log = Vec::with_capacity(opt.budget());
    while opt.rounds() < opt.budget() {
        log.push(opt.step(env, rng)?);
        let rec = opt.recommend()?;
        regret.push(RegretRow {
            round: opt.rounds(),
            regret: aggregated_regret(env, &rec.reps),
            rec_depth: rec.depth,
            rec_index: rec.index,
        });
    }
    Ok((regret, log))
}

/// Tie-break shared by all optimisers: higher score wins, then shallower
/// depth, then lower index.
pub(crate) fn better(score: f64, depth: usize, index: u64, best: Option<(f64, usize, u64)>) -> bool {
    match best {
        None => true,
        Some((bs, bd, bi)) => score > bs || (score == bs && (depth, index) < (bd, bi)),
    }
}
