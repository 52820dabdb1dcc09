//! Problem spec strings, flat key=value config files, and the merge logic
//! between file values and command-line overrides.
//!
//! Config keys mirror the experiment fields:
//! `algo`, `problem`, `trials`, `seed`, `budget`, `out`, `restart`,
//! `sigma0`, `lambda`, `init_box`, `as3.c_p`, `as3.eta`, `as3.gamma`,
//! `as3.epsilon`, `as3.p0`, `as3.lambda_s`, `term.gap`, `term.sigma_min`,
//! `term.cond_max`, `term.coord_std`, `tau`, `record_every`, `jobs`,
//! `format`. Command-line flags override file values.

use super::{Algorithm, ExperimentConfig, HarnessError, ProblemSpec, RestartPolicy};
use crate::problems::{Family, ProblemParams};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Jsonl,
    Both,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "jsonl" => Ok(ExportFormat::Jsonl),
            "both" => Ok(ExportFormat::Both),
            other => Err(format!("unknown format `{other}` (csv|jsonl|both)")),
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

/// Parses `key=value,key=value` lists (problem spec parameter blocks).
fn parse_kv_list(s: &str) -> Result<BTreeMap<String, String>, HarnessError> {
    let mut map = BTreeMap::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| cfg_err(format!("expected key=value, got `{part}`")))?;
        map.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    Ok(map)
}

fn take_parsed<T: std::str::FromStr>(
    map: &mut BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, HarnessError> {
    match map.remove(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<T>()
            .map(Some)
            .map_err(|_| cfg_err(format!("cannot parse {key}=`{v}`"))),
    }
}

/// Parses a problem spec string:
/// `p1:n=10,m=30,k=10` · `p4:n=10,m=50,l=10` · `well:grids.txt` ·
/// `wellgen:seed=7,m=50,rows=50,cols=50,bumps=12,smoothness=0.12`.
pub fn parse_problem_spec(s: &str) -> Result<ProblemSpec, HarnessError> {
    let (head, rest) = s.split_once(':').unwrap_or((s, ""));
    match head.to_ascii_lowercase().as_str() {
        "well" => {
            if rest.is_empty() {
                return Err(cfg_err("well: needs a grid file path".to_string()));
            }
            Ok(ProblemSpec::GridFile(PathBuf::from(rest)))
        }
        "wellgen" => {
            let mut kv = parse_kv_list(rest)?;
            let spec = ProblemSpec::SyntheticGrid {
                seed: take_parsed(&mut kv, "seed")?.unwrap_or(0),
                m: take_parsed(&mut kv, "m")?.unwrap_or(50),
                rows: take_parsed(&mut kv, "rows")?.unwrap_or(50),
                cols: take_parsed(&mut kv, "cols")?.unwrap_or(50),
                bumps: take_parsed(&mut kv, "bumps")?.unwrap_or(12),
                smoothness: take_parsed(&mut kv, "smoothness")?.unwrap_or(0.12),
            };
            if let Some(k) = kv.keys().next() {
                return Err(cfg_err(format!("unknown wellgen parameter `{k}`")));
            }
            Ok(spec)
        }
        fam => {
            let family: Family = fam.parse().map_err(cfg_err)?;
            let mut kv = parse_kv_list(rest)?;
            let n = take_parsed(&mut kv, "n")?
                .ok_or_else(|| cfg_err(format!("{fam}: n is required")))?;
            let m = take_parsed(&mut kv, "m")?
                .ok_or_else(|| cfg_err(format!("{fam}: m is required")))?;
            let mut params = ProblemParams::new(family, n, m);
            if let Some(k) = take_parsed(&mut kv, "k")? {
                params = params.with_k(k);
            }
            if let Some(l) = take_parsed(&mut kv, "l")? {
                params = params.with_l(l);
            }
            if let Some(key) = kv.keys().next() {
                return Err(cfg_err(format!("unknown problem parameter `{key}`")));
            }
            params.validate()?;
            Ok(ProblemSpec::Analytic(params))
        }
    }
}

/// Everything a `run`-style invocation can specify; `None` means "not set
/// here" so that layers can be merged with later layers winning.
#[derive(Debug, Clone, Default)]
pub struct ConfigBag {
    pub algo: Option<Algorithm>,
    pub problem: Option<ProblemSpec>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub budget: Option<u64>,
    pub out: Option<PathBuf>,
    pub restart: Option<RestartPolicy>,
    pub sigma0: Option<f64>,
    pub lambda: Option<usize>,
    pub init_box: Option<(f64, f64)>,
    pub c_p: Option<f64>,
    pub eta: Option<f64>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub p0: Option<f64>,
    pub lambda_s: Option<usize>,
    pub gap: Option<f64>,
    pub sigma_min: Option<f64>,
    pub cond_max: Option<f64>,
    pub coord_std: Option<f64>,
    pub tau: Option<bool>,
    pub record_every: Option<u64>,
    pub jobs: Option<usize>,
    pub format: Option<ExportFormat>,
}

impl ConfigBag {
    /// Reads a flat key=value file; `#` starts a comment, blank lines are
    /// skipped.
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                cfg_err(format!("{}:{}: expected key = value", path.display(), idx + 1))
            })?;
            map.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
        }
        Self::from_map(map)
    }

    pub fn from_map(mut map: BTreeMap<String, String>) -> Result<Self, HarnessError> {
        let init_box = match map.remove("init_box") {
            None => None,
            Some(v) => Some(parse_box(&v)?),
        };
        let problem = match map.remove("problem") {
            None => None,
            Some(v) => Some(parse_problem_spec(&v)?),
        };
        let bag = ConfigBag {
            algo: take_parsed(&mut map, "algo")?,
            problem,
            trials: take_parsed(&mut map, "trials")?,
            seed: take_parsed(&mut map, "seed")?,
            budget: take_parsed(&mut map, "budget")?,
            out: map.remove("out").map(PathBuf::from),
            restart: take_parsed(&mut map, "restart")?,
            sigma0: take_parsed(&mut map, "sigma0")?,
            lambda: take_parsed(&mut map, "lambda")?,
            init_box,
            c_p: take_parsed(&mut map, "as3.c_p")?,
            eta: take_parsed(&mut map, "as3.eta")?,
            gamma: take_parsed(&mut map, "as3.gamma")?,
            epsilon: take_parsed(&mut map, "as3.epsilon")?,
            p0: take_parsed(&mut map, "as3.p0")?,
            lambda_s: take_parsed(&mut map, "as3.lambda_s")?,
            gap: take_parsed(&mut map, "term.gap")?,
            sigma_min: take_parsed(&mut map, "term.sigma_min")?,
            cond_max: take_parsed(&mut map, "term.cond_max")?,
            coord_std: take_parsed(&mut map, "term.coord_std")?,
            tau: take_parsed(&mut map, "tau")?,
            record_every: take_parsed(&mut map, "record_every")?,
            jobs: take_parsed(&mut map, "jobs")?,
            format: take_parsed(&mut map, "format")?,
        };
        if let Some(key) = map.keys().next() {
            return Err(cfg_err(format!("unknown config key `{key}`")));
        }
        Ok(bag)
    }

    /// Overlays `other` on top of `self`; set fields of `other` win.
    pub fn overlay(mut self, other: ConfigBag) -> ConfigBag {
        macro_rules! take {
            ($($field:ident),+ $(,)?) => {
                $(if other.$field.is_some() { self.$field = other.$field; })+
            };
        }
        take!(
            algo, problem, trials, seed, budget, out, restart, sigma0, lambda, init_box, c_p,
            eta, gamma, epsilon, p0, lambda_s, gap, sigma_min, cond_max, coord_std, tau,
            record_every, jobs, format
        );
        self
    }

    /// Finalizes into an experiment config; `algo`, `problem`, `trials`,
    /// `seed`, and `budget` must have been provided by some layer.
    pub fn build(&self) -> Result<ExperimentConfig, HarnessError> {
        let algo = self.algo.ok_or_else(|| cfg_err("--algo is required"))?;
        let problem = self
            .problem
            .clone()
            .ok_or_else(|| cfg_err("--problem is required"))?;
        let mut cfg = ExperimentConfig::new(algo, problem);
        cfg.trials = self.trials.ok_or_else(|| cfg_err("--trials is required"))?;
        cfg.seed_base = self.seed.ok_or_else(|| cfg_err("--seed is required"))?;
        cfg.budget_fcalls = self.budget.ok_or_else(|| cfg_err("--budget is required"))?;
        if cfg.trials == 0 {
            return Err(cfg_err("trials must be positive"));
        }
        if cfg.budget_fcalls == 0 {
            return Err(cfg_err("budget must be positive"));
        }
        if let Some(r) = self.restart {
            cfg.restart_policy = r;
        }
        cfg.sigma0 = self.sigma0;
        cfg.lambda = self.lambda;
        if let Some((lo, hi)) = self.init_box {
            // dimension resolved when the problem is built
            let n = match &cfg.problem {
                ProblemSpec::Analytic(p) => p.n,
                _ => 6,
            };
            cfg.init_box = Some(vec![(lo, hi); n]);
        }
        cfg.as3.c_p = self.c_p;
        cfg.as3.eta = self.eta;
        cfg.as3.gamma = self.gamma;
        cfg.as3.epsilon = self.epsilon;
        cfg.as3.p0 = self.p0;
        cfg.lambda_s = self.lambda_s;
        if let Some(v) = self.gap {
            cfg.thresholds.gap = v;
        }
        if let Some(v) = self.sigma_min {
            cfg.thresholds.sigma_min = v;
        }
        if let Some(v) = self.cond_max {
            cfg.thresholds.cond_max = v;
        }
        cfg.restart_coord_std = self.coord_std;
        cfg.collect_tau = self.tau.unwrap_or(false);
        cfg.record_every = self.record_every.unwrap_or(1).max(1);
        cfg.jobs = self.jobs.unwrap_or(1).max(1);
        Ok(cfg)
    }
}

/// Parses `lo,hi`.
pub fn parse_box(s: &str) -> Result<(f64, f64), HarnessError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [lo, hi] = parts[..] else {
        return Err(cfg_err(format!("init box must be `lo,hi`, got `{s}`")));
    };
    let lo: f64 = lo.parse().map_err(|_| cfg_err(format!("bad box bound `{lo}`")))?;
    let hi: f64 = hi.parse().map_err(|_| cfg_err(format!("bad box bound `{hi}`")))?;
    if lo >= hi {
        return Err(cfg_err(format!("init box needs lo < hi, got {lo} >= {hi}")));
    }
    Ok((lo, hi))
}
