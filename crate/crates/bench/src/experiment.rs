//! Multi-trial experiments and S/K sweeps.
//!
//! Jobs are `(algorithm, trial)` pairs run in parallel; results are collected
//! in job order so output never depends on scheduling.

use gpoo::{baselines, build_env, gpoo as gp, stream_rng, Environment, StepLog};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AlgoKind, AlgoSpec, ConfigError, ExperimentConfig};
use crate::format::quantize;

/// One row of a regret trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub algorithm: String,
    pub trial: usize,
    pub round: usize,
    /// Aggregated regret rounded to nine significant digits.
    pub regret: f64,
    pub rec_depth: usize,
    pub rec_index: u64,
}

/// Regret after every round of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub algorithm: String,
    pub trial: usize,
    pub rows: Vec<TraceRow>,
    #[serde(skip)]
    pub log: Vec<StepLog>,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.regret)
    }
}

/// Mean and population standard deviation of the regret over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub round: usize,
    pub mean: f64,
    pub std: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub f_star: f64,
    pub grid_mean: f64,
    pub traces: Vec<RegretTrace>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentResult {
    /// Mean regret of `algorithm` after `round`.
    pub fn mean_at(&self, algorithm: &str, round: usize) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.algorithm == algorithm && r.round == round)
            .map(|r| r.mean)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{label} trial {trial}: {source}")]
    Algorithm {
        label: String,
        trial: usize,
        #[source]
        source: gpoo::Error,
    },
    #[error("{label} trial {trial}: consumed {got} reward samples, expected {expected}")]
    SampleCount {
        label: String,
        trial: usize,
        got: usize,
        expected: usize,
    },
}

/// Runs one trial of `algo`, seeded by `(cfg.seed, label, trial)`.
pub fn run_trial(
    cfg: &ExperimentConfig,
    env: &Environment,
    algo: AlgoSpec,
    trial: usize,
) -> Result<RegretTrace, RunError> {
    let label = algo.label(cfg.s);
    let width = algo.width(cfg.s);
    let mut rng = stream_rng(cfg.seed, &label, trial as u64);
    let wrap = |source| RunError::Algorithm {
        label: label.clone(),
        trial,
        source,
    };
    let (regret, log, draws) = match algo.kind {
        AlgoKind::Gpoo => {
            let r = gp::run_with(&cfg.gpoo_config(width)?, env, &mut rng, false).map_err(wrap)?;
            let draws = r.tree.nodes().iter().map(|c| c.draws).sum::<usize>();
            (r.regret, r.log, draws)
        }
        AlgoKind::Stooo | AlgoKind::AveStooo => {
            let r = baselines::run_with(&cfg.stooo_config(width), env, &mut rng).map_err(wrap)?;
            let draws = r.tree.nodes().iter().map(|c| c.draws).sum::<usize>();
            (r.regret, r.log, draws)
        }
    };
    if log.len() != cfg.budget || draws != cfg.budget {
        return Err(RunError::SampleCount {
            label,
            trial,
            got: draws.min(log.len()),
            expected: cfg.budget,
        });
    }
    let rows = regret
        .iter()
        .map(|r| TraceRow {
            algorithm: label.clone(),
            trial,
            round: r.round,
            regret: quantize(r.regret),
            rec_depth: r.rec_depth,
            rec_index: r.rec_index,
        })
        .collect();
    Ok(RegretTrace {
        algorithm: label,
        trial,
        rows,
        log,
    })
}

/// Per-round mean and population standard deviation, in trace order of
/// first appearance of each algorithm.
pub fn summarize(traces: &[RegretTrace]) -> Vec<SummaryRow> {
    let mut labels: Vec<&str> = Vec::new();
    for t in traces {
        if !labels.contains(&t.algorithm.as_str()) {
            labels.push(&t.algorithm);
        }
    }
    let mut out = Vec::new();
    for label in labels {
        let group: Vec<&RegretTrace> = traces.iter().filter(|t| t.algorithm == label).collect();
        let rounds = group.iter().map(|t| t.rows.len()).min().unwrap_or(0);
        for i in 0..rounds {
            let xs: Vec<f64> = group.iter().map(|t| t.rows[i].regret).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            out.push(SummaryRow {
                algorithm: label.to_string(),
                round: group[0].rows[i].round,
                mean,
                std: var.sqrt(),
                trials: xs.len(),
            });
        }
    }
    out
}

/// Runs every `(algorithm, trial)` pair of `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, RunError> {
    cfg.validate()?;
    let env = build_env(&cfg.env).map_err(|e| ConfigError::Invalid(format!("env: {e}")))?;
    let jobs: Vec<(AlgoSpec, usize)> = cfg
        .algos
        .iter()
        .flat_map(|&a| (0..cfg.trials).map(move |t| (a, t)))
        .collect();
    let traces = jobs
        .par_iter()
        .map(|&(a, t)| run_trial(cfg, &env, a, t))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(&traces);
    Ok(ExperimentResult {
        config: cfg.clone(),
        f_star: env.f_star(),
        grid_mean: env.grid_mean(),
        traces,
        summary,
    })
}

/// Mean final regret of one `(S, K, N)` combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub budget: usize,
    pub s: usize,
    pub k: usize,
    pub mean_final: f64,
    /// `log10` of the mean final regret, floored at `1e-12`.
    pub log10_mean: f64,
    pub trials: usize,
}

/// Runs GPOO for every `(S, K)` in the grid and every budget.
pub fn sweep_sk(
    cfg: &ExperimentConfig,
    s_list: &[usize],
    k_list: &[usize],
    budgets: &[usize],
) -> Result<Vec<SweepCell>, RunError> {
    if s_list.is_empty() || k_list.is_empty() || budgets.is_empty() {
        return Err(ConfigError::Invalid("sweep lists must be nonempty".into()).into());
    }
    let mut cells = Vec::new();
    for &budget in budgets {
        for &s in s_list {
            for &k in k_list {
                let mut c = cfg.clone();
                c.budget = budget;
                c.s = s;
                c.k = k;
                c.algos = vec![AlgoSpec {
                    kind: AlgoKind::Gpoo,
                    s: None,
                }];
                let res = run_experiment(&c)?;
                let mean = res.mean_at(&c.algos[0].label(s), budget).unwrap_or(f64::NAN);
                cells.push(SweepCell {
                    budget,
                    s,
                    k,
                    mean_final: mean,
                    log10_mean: mean.max(1e-12).log10(),
                    trials: c.trials,
                });
            }
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gpoo::{EnvName, EnvSpec};

    fn small(env: EnvName) -> ExperimentConfig {
        ExperimentConfig {
            env: EnvSpec::named(env),
            budget: 12,
            trials: 3,
            ..Default::default()
        }
    }

    #[test]
    fn single_zero_trace() {
        let cfg = ExperimentConfig {
            budget: 1,
            trials: 1,
            algos: vec!["gpoo".parse().unwrap()],
            ..small(EnvName::Constant)
        };
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.traces.len(), 1);
        assert_eq!(r.traces[0].rows.len(), 1);
        assert_eq!(r.traces[0].rows[0].regret, 0.0);
    }

    #[test]
    fn traces_ordered_by_algorithm_then_trial() {
        let r = run_experiment(&small(EnvName::F1)).unwrap();
        let keys: Vec<_> = r.traces.iter().map(|t| (t.algorithm.clone(), t.trial)).collect();
        let labels = ["gpoo_s1", "stooo", "ave_stooo_s1"];
        let want: Vec<_> = labels
            .iter()
            .flat_map(|l| (0..3).map(move |t| (l.to_string(), t)))
            .collect();
        assert_eq!(keys, want);
        for t in &r.traces {
            assert_eq!(
                t.rows.iter().map(|r| r.round).collect::<Vec<_>>(),
                (1..=12).collect::<Vec<_>>()
            );
            assert_eq!(t.log.len(), 12);
        }
        assert_eq!(r.summary.len(), 36);
    }

    #[test]
    fn identical_traces_have_zero_std() {
        let r = run_experiment(&small(EnvName::F1)).unwrap();
        let mut t = r.traces[0].clone();
        t.trial = 1;
        let s = summarize(&[r.traces[0].clone(), t]);
        assert!(s.iter().all(|row| row.std == 0.0 && row.trials == 2));
    }

    #[test]
    fn summary_matches_recomputation() {
        let r = run_experiment(&small(EnvName::F2)).unwrap();
        for row in &r.summary {
            let xs: Vec<f64> = r
                .traces
                .iter()
                .filter(|t| t.algorithm == row.algorithm)
                .map(|t| t.rows[row.round - 1].regret)
                .collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            assert!((row.mean - m).abs() < 1e-12);
            assert!(row.std >= 0.0);
        }
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let cfg = small(EnvName::F1);
        let a = run_experiment(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_experiment(&cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_structure() {
        let cfg = ExperimentConfig {
            trials: 2,
            ..small(EnvName::Constant)
        };
        let cells = sweep_sk(&cfg, &[1, 3], &[2, 3], &[5, 8]).unwrap();
        assert_eq!(cells.len(), 8);
        assert!(cells.iter().all(|c| c.mean_final.abs() < 1e-12));

        let one = sweep_sk(&cfg, &[1], &[2], &[8]).unwrap();
        let direct = run_experiment(&ExperimentConfig {
            algos: vec!["gpoo".parse().unwrap()],
            budget: 8,
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(one[0].mean_final, direct.mean_at("gpoo_s1", 8).unwrap());
        assert!(sweep_sk(&cfg, &[], &[2], &[8]).is_err());
    }
}
