//! Browser bindings for the interactive demo in `www/`.
//!
//! Every export takes plain numbers and strings and returns a JSON document,
//! so the page needs no generated type definitions. The same functions are
//! callable natively through the `*_json` variants.

use gpoo::baselines::{self, StoooConfig};
use gpoo::gpoo::{Gpoo, GpooConfig};
use gpoo::{build_env, run_to_budget, stream_rng, DiameterSchedule, EnvName, EnvSpec, Environment, TreeOptimizer};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn environment(name: &str, noise: f64) -> Result<Environment, String> {
    let name: EnvName = name.parse().map_err(|e: gpoo::Error| e.to_string())?;
    if name == EnvName::Custom {
        return Err("custom environments are not available in the demo".into());
    }
    build_env(&EnvSpec::named(name).with_noise(noise)).map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("demo records serialize")
}

#[derive(Serialize)]
struct Curve {
    x: Vec<f64>,
    f: Vec<f64>,
    f_star: f64,
    x_star: f64,
    grid_mean: f64,
}

/// The reward function sampled at `points` evenly spaced locations.
pub fn env_curve_json(env: &str, points: usize) -> Result<String, String> {
    let e = environment(env, 0.0)?;
    let n = points.max(2);
    let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let f = x.iter().map(|&xi| e.value(&[xi])).collect();
    Ok(to_json(&Curve {
        x,
        f,
        f_star: e.f_star(),
        x_star: e.x_star()[0],
        grid_mean: e.grid_mean(),
    }))
}

#[derive(Serialize)]
struct CellView {
    depth: usize,
    index: u64,
    low: f64,
    high: f64,
    reps: Vec<f64>,
    leaf: bool,
    draws: usize,
    mean: f64,
    std: f64,
    ci: f64,
    delta: f64,
    f_bar: f64,
}

#[derive(Serialize)]
struct StepView {
    t: usize,
    depth: usize,
    index: u64,
    reward: f64,
    b: f64,
    expanded: bool,
}

#[derive(Serialize)]
struct GpooView {
    cells: Vec<CellView>,
    steps: Vec<StepView>,
    regret: Vec<f64>,
    recommendation: (usize, u64),
    beta: f64,
}

/// Parameters of one interactive GPOO run.
#[derive(Debug, Clone, Copy)]
pub struct DemoParams {
    pub budget: usize,
    pub k: usize,
    pub s: usize,
    pub c: f64,
    pub rho: f64,
    pub noise: f64,
    pub seed: u64,
}

/// Runs GPOO and returns every tree node with its final posterior.
pub fn run_gpoo_json(env: &str, p: DemoParams) -> Result<String, String> {
    let e = environment(env, p.noise)?;
    let cfg = GpooConfig {
        budget: p.budget,
        k: p.k,
        s: p.s,
        schedule: DiameterSchedule::new(p.c, p.rho).map_err(|e| e.to_string())?,
        noise_std: p.noise.max(1e-3),
        kernel: e.kernel().unwrap_or(GpooConfig::default().kernel),
        ..Default::default()
    };
    let mut opt = Gpoo::new(cfg).map_err(|e| e.to_string())?;
    let mut rng = stream_rng(p.seed, "demo", 0);
    let (regret, log) = run_to_budget(&mut opt, &e, &mut rng).map_err(|e| e.to_string())?;
    let rec = opt.recommend().map_err(|e| e.to_string())?;
    let beta = gpoo::beta(&cfg, p.budget);
    let mut cells = Vec::with_capacity(opt.tree().len());
    for id in 0..opt.tree().len() {
        let m = opt.posterior(id).map_err(|e| e.to_string())?;
        let cell = opt.tree().node(id);
        cells.push(CellView {
            depth: cell.depth,
            index: cell.index,
            low: cell.bounds.low[0],
            high: cell.bounds.high[0],
            reps: cell.reps().as_slice().to_vec(),
            leaf: cell.is_leaf(),
            draws: cell.draws,
            mean: m.mean,
            std: m.std(),
            ci: beta.sqrt() * m.std(),
            delta: cfg.schedule.delta(cell.depth),
            f_bar: e.cell_mean(cell.reps()),
        });
    }
    let steps = log
        .iter()
        .map(|s| StepView {
            t: s.t,
            depth: s.depth,
            index: s.index,
            reward: s.reward,
            b: s.b,
            expanded: s.expanded,
        })
        .collect();
    Ok(to_json(&GpooView {
        cells,
        steps,
        regret: regret.iter().map(|r| r.regret).collect(),
        recommendation: (rec.depth, rec.index),
        beta,
    }))
}

#[derive(Serialize)]
struct Series {
    label: String,
    mean: Vec<f64>,
    std: Vec<f64>,
}

/// Mean and standard deviation of the regret per round for GPOO, StoOO and
/// AVE-StoOO over `trials` seeded runs.
pub fn compare_json(env: &str, budget: usize, trials: usize, s: usize, seed: u64) -> Result<String, String> {
    let e = environment(env, gpoo::env::DEFAULT_REWARD_NOISE_STD)?;
    let trials = trials.max(1);
    let gcfg = GpooConfig {
        budget,
        s,
        kernel: e.kernel().unwrap_or(GpooConfig::default().kernel),
        ..Default::default()
    };
    let algos: [(String, usize); 3] = [
        (format!("GPOO S={s}"), s),
        ("StoOO".into(), 1),
        (format!("AVE-StoOO S={s}"), s),
    ];
    let mut out = Vec::new();
    for (i, (label, width)) in algos.iter().enumerate() {
        let mut runs = Vec::with_capacity(trials);
        for trial in 0..trials {
            let mut rng = stream_rng(seed, label, trial as u64);
            let rows = if i == 0 {
                let mut opt = Gpoo::new(gcfg).map_err(|e| e.to_string())?;
                run_to_budget(&mut opt, &e, &mut rng).map_err(|e| e.to_string())?.0
            } else {
                let cfg = StoooConfig {
                    budget,
                    s: *width,
                    ..Default::default()
                };
                baselines::run_with(&cfg, &e, &mut rng)
                    .map_err(|e| e.to_string())?
                    .regret
            };
            runs.push(rows.iter().map(|r| r.regret).collect::<Vec<f64>>());
        }
        let n = trials as f64;
        let mean: Vec<f64> = (0..budget)
            .map(|t| runs.iter().map(|r| r[t]).sum::<f64>() / n)
            .collect();
        let std = (0..budget)
            .map(|t| (runs.iter().map(|r| (r[t] - mean[t]).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        out.push(Series {
            label: label.clone(),
            mean,
            std,
        });
    }
    Ok(to_json(&out))
}

/// JSON `{x, f, f_star, x_star, grid_mean}` for the named environment.
#[wasm_bindgen]
pub fn env_curve(env: &str, points: usize) -> Result<String, JsError> {
    env_curve_json(env, points).map_err(|e| JsError::new(&e))
}

/// JSON `{cells, steps, regret, recommendation, beta}` for one GPOO run.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn run_gpoo(
    env: &str,
    budget: usize,
    k: usize,
    s: usize,
    c: f64,
    rho: f64,
    noise: f64,
    seed: u64,
) -> Result<String, JsError> {
    run_gpoo_json(
        env,
        DemoParams {
            budget,
            k,
            s,
            c,
            rho,
            noise,
            seed,
        },
    )
    .map_err(|e| JsError::new(&e))
}

/// JSON array of `{label, mean, std}` regret curves.
#[wasm_bindgen]
pub fn compare(env: &str, budget: usize, trials: usize, s: usize, seed: u64) -> Result<String, JsError> {
    compare_json(env, budget, trials, s, seed).map_err(|e| JsError::new(&e))
}
