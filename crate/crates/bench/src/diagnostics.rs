//! Theory diagnostics over seeded GPOO runs.

use gpoo::gpoo::{self as gp, check_draw_bound, check_variance_bound, concentration_coverage, RegretBound};
use gpoo::{build_env, stream_rng};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AlgoKind, ConfigError, ExperimentConfig};
use crate::experiment::RunError;

/// Slack allowed on the posterior standard-deviation bound.
pub const VARIANCE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticReport {
    pub runs: usize,
    pub draw_bound_violations: usize,
    pub variance_bound_violations: usize,
    pub variance_checks: usize,
    pub coverage: f64,
    pub coverage_events: usize,
    pub min_coverage: f64,
    pub regret_bound: Option<RegretBound>,
}

impl DiagnosticReport {
    pub fn draw_bound_ok(&self) -> bool {
        self.draw_bound_violations == 0
    }

    pub fn variance_bound_ok(&self) -> bool {
        self.variance_bound_violations == 0
    }

    pub fn coverage_ok(&self) -> bool {
        self.coverage >= self.min_coverage
    }

    pub fn passed(&self) -> bool {
        self.draw_bound_ok() && self.variance_bound_ok() && self.coverage_ok()
    }

    /// One line per suite.
    pub fn lines(&self) -> Vec<String> {
        let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let mut v = vec![
            format!(
                "{} draw-bound: {} violations over {} runs",
                verdict(self.draw_bound_ok()),
                self.draw_bound_violations,
                self.runs
            ),
            format!(
                "{} variance-bound: {} violations in {} cell/round checks",
                verdict(self.variance_bound_ok()),
                self.variance_bound_violations,
                self.variance_checks
            ),
            format!(
                "{} coverage: {:.4} over {} cell/round events (minimum {})",
                verdict(self.coverage_ok()),
                self.coverage,
                self.coverage_events,
                self.min_coverage
            ),
        ];
        if let Some(b) = &self.regret_bound {
            v.push(format!(
                "INFO regret bound at N={}: h_N={} scan={:.6} closed form={:.6} beta_N={:.4}",
                b.n, b.h_n, b.scan, b.closed_form, b.beta_n
            ));
        }
        v
    }
}

/// Runs `cfg.trials` GPOO trials with per-cell snapshots and checks the
/// draw-count bound, the standard-deviation bound and concentration coverage.
pub fn run_diagnostics(cfg: &ExperimentConfig) -> Result<DiagnosticReport, RunError> {
    cfg.validate()?;
    let env = build_env(&cfg.env).map_err(|e| ConfigError::Invalid(format!("env: {e}")))?;
    let s = cfg
        .algos
        .iter()
        .find(|a| a.kind == AlgoKind::Gpoo)
        .map_or(cfg.s, |a| a.width(cfg.s));
    let gcfg = cfg.gpoo_config(s)?;
    let per_trial = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream_rng(cfg.seed, "check", trial as u64);
            let run = gp::run_with(&gcfg, &env, &mut rng, true).map_err(|source| RunError::Algorithm {
                label: "gpoo".into(),
                trial,
                source,
            })?;
            let draws = check_draw_bound(&run.log, &gcfg).len();
            let var = check_variance_bound(&run.snapshots, gcfg.noise_std, VARIANCE_SLACK).len();
            let checks = run.snapshots.iter().filter(|s| s.draws > 0).count();
            let (cov, n) = concentration_coverage(&run.snapshots);
            Ok((draws, var, checks, (cov * n as f64).round() as usize, n))
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let sum = per_trial.iter().fold((0, 0, 0, 0, 0), |a, b| {
        (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3, a.4 + b.4)
    });
    let regret_bound = match cfg.theory {
        Some(tp) => gp::regret_bound(&gcfg, &tp, cfg.budget).ok(),
        None => None,
    };
    Ok(DiagnosticReport {
        runs: cfg.trials,
        draw_bound_violations: sum.0,
        variance_bound_violations: sum.1,
        variance_checks: sum.2,
        coverage: if sum.4 == 0 { 1.0 } else { sum.3 as f64 / sum.4 as f64 },
        coverage_events: sum.4,
        min_coverage: cfg.min_coverage,
        regret_bound,
    })
}
