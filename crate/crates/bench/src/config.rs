//! Flat `key = value` experiment configuration.
//!
//! One entry per line, `#` starts a comment, keys are dotted
//! (`kernel.lengthscale = 0.05`). Lists are comma separated; `env.anchors`
//! separates points with `;` and coordinates with `,`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gpoo::gpoo::TheoryParams;
use gpoo::{DiameterSchedule, EnvName, EnvSpec, GpooConfig, KernelFamily, KernelSpec, StoooConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: key `{key}`: {msg}")]
    Key { line: usize, key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgoKind {
    Gpoo,
    Stooo,
    AveStooo,
}

impl fmt::Display for AlgoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gpoo => "gpoo",
            Self::Stooo => "stooo",
            Self::AveStooo => "ave_stooo",
        })
    }
}

/// An algorithm and its representative-point count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgoSpec {
    pub kind: AlgoKind,
    /// Overrides `tree.S` when set. StoOO always uses one point.
    pub s: Option<usize>,
}

impl AlgoSpec {
    pub fn width(&self, default_s: usize) -> usize {
        match self.kind {
            AlgoKind::Stooo => 1,
            _ => self.s.unwrap_or(default_s),
        }
    }

    /// Name used in output files and for seeding.
    pub fn label(&self, default_s: usize) -> String {
        match self.kind {
            AlgoKind::Stooo => "stooo".to_string(),
            k => format!("{k}_s{}", self.width(default_s)),
        }
    }
}

impl FromStr for AlgoSpec {
    type Err = String;

    /// `gpoo`, `stooo`, `ave_stooo`, optionally followed by `:S`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, width) = match s.split_once(':') {
            Some((n, w)) => {
                let w: usize = w.trim().parse().map_err(|_| format!("bad point count in `{s}`"))?;
                if w == 0 {
                    return Err(format!("point count must be >= 1 in `{s}`"));
                }
                (n.trim(), Some(w))
            }
            None => (s.trim(), None),
        };
        let kind = match name.to_ascii_lowercase().as_str() {
            "gpoo" => AlgoKind::Gpoo,
            "stooo" => AlgoKind::Stooo,
            "ave_stooo" | "ave-stooo" => AlgoKind::AveStooo,
            other => return Err(format!("unknown algorithm `{other}` (expected gpoo, stooo, ave_stooo)")),
        };
        if kind == AlgoKind::Stooo && width.is_some_and(|w| w != 1) {
            return Err("stooo always uses one point; use ave_stooo:S".into());
        }
        Ok(Self { kind, s: width })
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    /// `None` uses the environment's generating kernel.
    pub kernel: Option<KernelSpec>,
    pub k: usize,
    pub s: usize,
    pub h_max: usize,
    pub schedule: DiameterSchedule,
    pub theta: f64,
    pub noise_std: f64,
    pub budget: usize,
    pub baseline_theta: f64,
    pub algos: Vec<AlgoSpec>,
    pub trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub theory: Option<TheoryParams>,
    /// Smallest concentration coverage `bench check` accepts.
    pub min_coverage: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let g = GpooConfig::default();
        Self {
            env: EnvSpec::named(EnvName::F1),
            kernel: None,
            k: g.k,
            s: g.s,
            h_max: g.h_max,
            schedule: g.schedule,
            theta: g.theta,
            noise_std: g.noise_std,
            budget: g.budget,
            baseline_theta: 0.1,
            algos: vec![
                AlgoSpec {
                    kind: AlgoKind::Gpoo,
                    s: None,
                },
                AlgoSpec {
                    kind: AlgoKind::Stooo,
                    s: None,
                },
                AlgoSpec {
                    kind: AlgoKind::AveStooo,
                    s: None,
                },
            ],
            trials: 30,
            seed: 0,
            out: None,
            theory: None,
            min_coverage: 0.85,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        text.parse()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.trials < 1 {
            return inv("trials must be >= 1");
        }
        if self.budget < 1 {
            return inv("gpoo.budget must be >= 1");
        }
        if self.algos.is_empty() {
            return inv("algo list is empty");
        }
        gpoo::build_env(&self.env).map_err(|e| ConfigError::Invalid(format!("env: {e}")))?;
        for a in &self.algos {
            match a.kind {
                AlgoKind::Gpoo => self.gpoo_config(a.width(self.s))?.validate(),
                _ => self.stooo_config(a.width(self.s)).validate(),
            }
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", a.label(self.s))))?;
        }
        if !(0.0..=1.0).contains(&self.min_coverage) {
            return inv("check.min_coverage must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn model_kernel(&self) -> Result<KernelSpec, ConfigError> {
        match self.kernel {
            Some(k) => Ok(k),
            None => self
                .env
                .generating_kernel()
                .map_err(|e| ConfigError::Invalid(format!("env: {e}"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.env.anchors.first().map_or(1, Vec::len)
    }

    pub fn gpoo_config(&self, s: usize) -> Result<GpooConfig, ConfigError> {
        Ok(GpooConfig {
            budget: self.budget,
            h_max: self.h_max,
            theta: self.theta,
            noise_std: self.noise_std,
            kernel: self.model_kernel()?,
            schedule: self.schedule,
            k: self.k,
            s,
            d: self.dim(),
        })
    }

    pub fn stooo_config(&self, s: usize) -> StoooConfig {
        StoooConfig {
            budget: self.budget,
            h_max: self.h_max,
            theta: self.baseline_theta,
            schedule: self.schedule,
            k: self.k,
            s,
            d: self.dim(),
        }
    }
}

fn parse_num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::Key {
        line,
        key: key.into(),
        msg: format!("cannot parse `{v}`"),
    })
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',').map(|x| parse_num(line, key, x.trim())).collect()
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    msg: "empty key".into(),
                });
            }
            if let Some((first, _)) = entries.get(k) {
                return Err(ConfigError::Key {
                    line,
                    key: k.into(),
                    msg: format!("duplicate of line {first}"),
                });
            }
            entries.insert(k.to_string(), (line, v.to_string()));
        }

        let mut cfg = ExperimentConfig::default();
        let mut kernel: (Option<KernelFamily>, Option<f64>, Option<f64>) = (None, None, None);
        let mut theory: [Option<f64>; 4] = [None; 4];
        let mut anchors = None;
        let mut values = None;
        let mut noise = None;
        let mut grid = None;
        let mut env_line = 0;

        for (key, (line, v)) in &entries {
            let (line, v, key) = (*line, v.as_str(), key.as_str());
            let bad = |msg: String| ConfigError::Key {
                line,
                key: key.into(),
                msg,
            };
            match key {
                "env.name" => {
                    env_line = line;
                    cfg.env.name = v.parse().map_err(|e: gpoo::Error| bad(e.to_string()))?;
                }
                "env.reward_noise_std" => noise = Some(parse_num(line, key, v)?),
                "env.grid_size" => grid = Some(parse_num(line, key, v)?),
                "env.anchors" => {
                    let pts: Result<Vec<Vec<f64>>, _> = v
                        .split(';')
                        .filter(|p| !p.trim().is_empty())
                        .map(|p| parse_list(line, key, p))
                        .collect();
                    anchors = Some(pts?);
                }
                "env.values" => values = Some(parse_list(line, key, v)?),
                "kernel.family" => kernel.0 = Some(v.parse().map_err(|e: gpoo::Error| bad(e.to_string()))?),
                "kernel.lengthscale" => kernel.1 = Some(parse_num(line, key, v)?),
                "kernel.variance" => kernel.2 = Some(parse_num(line, key, v)?),
                "tree.K" | "tree.k" => cfg.k = parse_num(line, key, v)?,
                "tree.S" | "tree.s" => cfg.s = parse_num(line, key, v)?,
                "tree.h_max" => cfg.h_max = parse_num(line, key, v)?,
                "schedule.c" => cfg.schedule.c = parse_num(line, key, v)?,
                "schedule.rho" => cfg.schedule.rho = parse_num(line, key, v)?,
                "gpoo.theta" => cfg.theta = parse_num(line, key, v)?,
                "gpoo.noise_std" => cfg.noise_std = parse_num(line, key, v)?,
                "gpoo.budget" | "budget" => cfg.budget = parse_num(line, key, v)?,
                "baseline.theta" => cfg.baseline_theta = parse_num(line, key, v)?,
                "algo" | "algos" => {
                    cfg.algos = v
                        .split(',')
                        .map(|a| a.trim().parse().map_err(bad))
                        .collect::<Result<_, _>>()?;
                }
                "trials" => cfg.trials = parse_num(line, key, v)?,
                "seed" => cfg.seed = parse_num(line, key, v)?,
                "out" => cfg.out = Some(PathBuf::from(v)),
                "theory.C" | "theory.c" => theory[0] = Some(parse_num(line, key, v)?),
                "theory.d" => theory[1] = Some(parse_num(line, key, v)?),
                "theory.L" | "theory.l" => theory[2] = Some(parse_num(line, key, v)?),
                "theory.b" => theory[3] = Some(parse_num(line, key, v)?),
                "check.min_coverage" => cfg.min_coverage = parse_num(line, key, v)?,
                _ => return Err(bad("unknown key".into())),
            }
        }

        if cfg.env.name == EnvName::Custom {
            let a = anchors.ok_or_else(|| ConfigError::Key {
                line: env_line,
                key: "env.anchors".into(),
                msg: "required for a custom environment".into(),
            })?;
            let v = values.ok_or_else(|| ConfigError::Key {
                line: env_line,
                key: "env.values".into(),
                msg: "required for a custom environment".into(),
            })?;
            cfg.env = EnvSpec::custom(a, v, None);
        } else if let Some(key) = ["env.anchors", "env.values"]
            .into_iter()
            .find(|k| entries.contains_key(*k))
        {
            return Err(ConfigError::Key {
                line: entries[key].0,
                key: key.into(),
                msg: "only allowed with env.name = custom".into(),
            });
        }
        if let Some(n) = noise {
            cfg.env.reward_noise_std = n;
        }
        if let Some(g) = grid {
            cfg.env.grid_size = g;
        }

        if kernel != (None, None, None) {
            let base = cfg
                .env
                .generating_kernel()
                .map_err(|e| ConfigError::Invalid(format!("env: {e}")))?;
            let k = KernelSpec::new(
                kernel.0.unwrap_or(base.family),
                kernel.1.unwrap_or(base.lengthscale),
                kernel.2.unwrap_or(base.variance),
            )
            .map_err(|e| ConfigError::Invalid(format!("kernel: {e}")))?;
            if cfg.env.name == EnvName::Custom {
                // a custom function is generated with the configured kernel
                cfg.env.kernel = Some(k);
            }
            cfg.kernel = Some(k);
        }

        if theory.iter().any(Option::is_some) {
            cfg.theory = Some(TheoryParams {
                c: theory[0].unwrap_or(1.0),
                near_opt_dim: theory[1].unwrap_or(0.0),
                lipschitz: theory[2].unwrap_or(1.0),
                tail_b: theory[3].unwrap_or(1.0),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_file() {
        let cfg: ExperimentConfig = "# nothing\n\n".parse().unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.model_kernel().unwrap(), KernelSpec::rbf(0.05, 0.1).unwrap());
    }

    #[test]
    fn full_file() {
        let text = "env.name = f2\nenv.reward_noise_std = 0.05 # quieter\nkernel.lengthscale=0.1\n\
                    tree.K = 3\ntree.S = 4\ntree.h_max = 12\nschedule.c = 10\nschedule.rho = 0.6\n\
                    gpoo.theta = 0.05\ngpoo.noise_std = 0.05\ngpoo.budget = 50\nbaseline.theta = 0.2\n\
                    algo = gpoo:1, gpoo:10, stooo, ave_stooo:10\ntrials = 5\nseed = 9\nout = res\n\
                    theory.C = 2\ntheory.d = 0.5\n";
        let cfg: ExperimentConfig = text.parse().unwrap();
        assert_eq!(cfg.env.name, EnvName::F2);
        assert_eq!(cfg.env.reward_noise_std, 0.05);
        assert_eq!(cfg.model_kernel().unwrap(), KernelSpec::rbf(0.1, 0.1).unwrap());
        assert_eq!(
            (cfg.k, cfg.s, cfg.h_max, cfg.budget, cfg.trials, cfg.seed),
            (3, 4, 12, 50, 5, 9)
        );
        assert_eq!(cfg.schedule, DiameterSchedule::new(10.0, 0.6).unwrap());
        let labels: Vec<_> = cfg.algos.iter().map(|a| a.label(cfg.s)).collect();
        assert_eq!(labels, ["gpoo_s1", "gpoo_s10", "stooo", "ave_stooo_s10"]);
        assert_eq!(cfg.out, Some(PathBuf::from("res")));
        let tp = cfg.theory.unwrap();
        assert_eq!((tp.c, tp.near_opt_dim), (2.0, 0.5));
        assert_eq!(cfg.gpoo_config(7).unwrap().s, 7);
        assert_eq!(cfg.stooo_config(1).theta, 0.2);
    }

    #[test]
    fn custom_env() {
        let text = "env.name = custom\nenv.anchors = 0.1,0.2; 0.7,0.8\nenv.values = 1, 0.5\nkernel.lengthscale = 0.2\n";
        let cfg: ExperimentConfig = text.parse().unwrap();
        assert_eq!(cfg.env.anchors, vec![vec![0.1, 0.2], vec![0.7, 0.8]]);
        assert_eq!(cfg.dim(), 2);
        assert_eq!(cfg.env.kernel.unwrap().lengthscale, 0.2);
        assert_eq!(cfg.gpoo_config(1).unwrap().d, 2);
    }

    #[test]
    fn errors_name_line_and_key() {
        let e = "trials = 3\nbogus.key = 1\n".parse::<ExperimentConfig>().unwrap_err();
        assert!(
            matches!(e, ConfigError::Key { line: 2, ref key, .. } if key == "bogus.key"),
            "{e}"
        );

        let e = "\n\ntree.K = two\n".parse::<ExperimentConfig>().unwrap_err();
        assert!(matches!(e, ConfigError::Key { line: 3, ref key, .. } if key == "tree.K"));

        let e = "trials 3\n".parse::<ExperimentConfig>().unwrap_err();
        assert!(matches!(e, ConfigError::Syntax { line: 1, .. }));

        let e = "seed = 1\nseed = 2\n".parse::<ExperimentConfig>().unwrap_err();
        assert!(matches!(e, ConfigError::Key { line: 2, .. }));

        let e = "algo = gpoo, simplex\n".parse::<ExperimentConfig>().unwrap_err();
        assert!(matches!(e, ConfigError::Key { line: 1, ref key, .. } if key == "algo"));

        let e = "env.anchors = 0.5\n".parse::<ExperimentConfig>().unwrap_err();
        assert!(matches!(e, ConfigError::Key { line: 1, .. }));

        assert!(matches!(
            "trials = 0\n".parse::<ExperimentConfig>(),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            "gpoo.theta = 2\n".parse::<ExperimentConfig>(),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            "env.name = custom\n".parse::<ExperimentConfig>(),
            Err(ConfigError::Key { .. })
        ));
    }

    #[test]
    fn algo_specs() {
        assert_eq!(
            "gpoo".parse::<AlgoSpec>().unwrap(),
            AlgoSpec {
                kind: AlgoKind::Gpoo,
                s: None
            }
        );
        assert_eq!("ave_stooo:5".parse::<AlgoSpec>().unwrap().width(1), 5);
        assert_eq!("stooo".parse::<AlgoSpec>().unwrap().width(10), 1);
        assert!("stooo:3".parse::<AlgoSpec>().is_err());
        assert!("gpoo:0".parse::<AlgoSpec>().is_err());
    }
}
