//! Experiment runner: wires the search engine, subset selection, and
//! worst-case evaluation into the three algorithm variants, manages budgets
//! and restarts, runs multi-trial batches, and aggregates results.
//!
//! Budget accounting: the algorithm's f-calls are charged to one counter;
//! the per-iteration diagnostics at the distribution mean (the full
//! worst-case value used for the success gap and the best-so-far series,
//! plus the optional rank-correlation check) run on a separate shadow
//! counter, so the budget matches what the algorithm itself consumes.
//!
//! Each trial derives two independent ChaCha streams from its seed, one for
//! scenario-subset sampling and one for candidate sampling, so subset draws
//! never perturb the candidate sequence across algorithm variants.

pub mod config;
pub mod export;
pub mod stats;

use crate::as3::{
    chi2_quantile, compute_cn_adaptive, compute_cn_fixed, sample_subset_bernoulli,
    sample_subset_fixed, update_probabilities, As3Config, As3Error, ScenarioProbabilities,
    ScenarioSubset, SupportFlags,
};
use crate::cma::{
    default_lambda, CmaError, Outcome, RestartKind, SearchDistribution, TerminationStatus,
    Thresholds,
};
use crate::problems::{
    generate_synthetic_grids, load_grids, make_problem, make_well_placement_problem, ProblemError,
    ProblemParams,
};
use crate::worstcase::{
    evaluate_full, evaluate_subset, kendall_tau, subset_support_ratios, FCallCounter,
    WorstCaseError, WorstCaseProblem,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Cma(#[from] CmaError),
    #[error(transparent)]
    As3(#[from] As3Error),
    #[error(transparent)]
    WorstCase(#[from] WorstCaseError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Baseline,
    As3Adaptive,
    As3Fixed,
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" | "cma" | "cmaes" => Ok(Algorithm::Baseline),
            "as3" | "adaptive" => Ok(Algorithm::As3Adaptive),
            "as3-fixed" | "fixed" => Ok(Algorithm::As3Fixed),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Algorithm::Baseline => "baseline",
            Algorithm::As3Adaptive => "as3",
            Algorithm::As3Fixed => "as3-fixed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartPolicy {
    None,
    Simple,
    DoubleLambda,
}

impl std::str::FromStr for RestartPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(RestartPolicy::None),
            "simple" => Ok(RestartPolicy::Simple),
            "double" | "doublelambda" | "double-lambda" => Ok(RestartPolicy::DoubleLambda),
            other => Err(format!("unknown restart policy `{other}`")),
        }
    }
}

/// Where the problem comes from.
#[derive(Debug, Clone)]
pub enum ProblemSpec {
    Analytic(ProblemParams),
    GridFile(PathBuf),
    SyntheticGrid {
        seed: u64,
        m: usize,
        rows: usize,
        cols: usize,
        bumps: usize,
        smoothness: f64,
    },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<WorstCaseProblem, HarnessError> {
        match self {
            ProblemSpec::Analytic(params) => Ok(make_problem(*params)?),
            ProblemSpec::GridFile(path) => {
                let stack = load_grids(path)?;
                Ok(make_well_placement_problem(stack))
            }
            ProblemSpec::SyntheticGrid {
                seed,
                m,
                rows,
                cols,
                bumps,
                smoothness,
            } => {
                let stack = generate_synthetic_grids(*seed, *m, *rows, *cols, *bumps, *smoothness);
                Ok(make_well_placement_problem(stack))
            }
        }
    }
}

/// Optional overrides on top of the per-variant AS3 defaults.
#[derive(Debug, Clone, Copy, Default)]
pub struct As3Overrides {
    pub c_p: Option<f64>,
    pub eta: Option<f64>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub p0: Option<f64>,
}

impl As3Overrides {
    fn resolve(&self, base: As3Config) -> As3Config {
        As3Config {
            c_p: self.c_p.unwrap_or(base.c_p),
            eta: self.eta.unwrap_or(base.eta),
            gamma: self.gamma.unwrap_or(base.gamma),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
            p0: self.p0.unwrap_or(base.p0),
        }
    }
}

/// Full experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub problem: ProblemSpec,
    pub trials: usize,
    pub seed_base: u64,
    pub budget_fcalls: u64,
    pub restart_policy: RestartPolicy,
    /// Initialization box for the mean; defaults to the problem domain, or
    /// (-4, 4)^n when the problem is unbounded.
    pub init_box: Option<Vec<(f64, f64)>>,
    /// Initial step size; defaults to a quarter of the widest box side.
    pub sigma0: Option<f64>,
    /// Population size; defaults to ⌊4 + 3 ln n⌋.
    pub lambda: Option<usize>,
    pub as3: As3Overrides,
    /// Subset size of the fixed-size variant.
    pub lambda_s: Option<usize>,
    pub thresholds: Thresholds,
    /// Coordinate-wise variance restart trigger (max_i Σ_ii below this).
    pub restart_coord_std: Option<f64>,
    /// Compute the per-iteration rank correlation between full and subset
    /// worst-case values (costs λ·m shadow f-calls per iteration).
    pub collect_tau: bool,
    /// Record every k-th iteration (the final iteration is always recorded).
    pub record_every: u64,
    /// Concurrent trials; 1 means strictly sequential.
    pub jobs: usize,
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm, problem: ProblemSpec) -> Self {
        ExperimentConfig {
            algorithm,
            problem,
            trials: 20,
            seed_base: 1,
            budget_fcalls: 1_000_000,
            restart_policy: RestartPolicy::None,
            init_box: None,
            sigma0: None,
            lambda: None,
            as3: As3Overrides::default(),
            lambda_s: None,
            thresholds: Thresholds::default(),
            restart_coord_std: None,
            collect_tau: false,
            record_every: 1,
            jobs: 1,
        }
    }

    fn resolve_init_box(&self, problem: &WorstCaseProblem) -> Vec<(f64, f64)> {
        if let Some(b) = &self.init_box {
            return b.clone();
        }
        if let Some(d) = problem.domain() {
            return d.to_vec();
        }
        vec![(-4.0, 4.0); problem.dim()]
    }

    fn resolve_sigma0(&self, init_box: &[(f64, f64)]) -> f64 {
        self.sigma0.unwrap_or_else(|| {
            let widest = init_box
                .iter()
                .map(|(lo, hi)| hi - lo)
                .fold(f64::NEG_INFINITY, f64::max);
            widest / 4.0
        })
    }

    fn resolve_as3(&self, m: usize) -> Result<(As3Config, Option<usize>), HarnessError> {
        match self.algorithm {
            Algorithm::Baseline => Ok((self.as3.resolve(As3Config::adaptive(m)), None)),
            Algorithm::As3Adaptive => Ok((self.as3.resolve(As3Config::adaptive(m)), None)),
            Algorithm::As3Fixed => {
                let lambda_s = self.lambda_s.ok_or_else(|| {
                    HarnessError::Config("the fixed-size variant needs lambda_s".into())
                })?;
                if lambda_s == 0 || lambda_s > m {
                    return Err(HarnessError::Config(format!(
                        "lambda_s must lie in 1..={m}, got {lambda_s}"
                    )));
                }
                Ok((
                    self.as3.resolve(As3Config::fixed_size(m, lambda_s)),
                    Some(lambda_s),
                ))
            }
        }
    }
}

/// One recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: u64,
    /// Algorithm f-calls after this iteration.
    pub fcalls: u64,
    /// Full worst-case value at the updated mean (shadow-counted).
    pub f_full_mean: f64,
    /// Subset worst-case value at the updated mean (shadow-counted).
    pub f_subset_mean: f64,
    /// Σ_s p_s (m for the baseline).
    pub sum_p: f64,
    pub subset_size: usize,
    /// Rank correlation between full and subset candidate values, when
    /// collected and defined.
    pub tau: Option<f64>,
    pub restarts: u32,
}

/// Complete log of one optimization run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub trial: usize,
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    pub outcome: TerminationStatus,
    pub iterations: u64,
    /// Algorithm f-calls at termination.
    pub fcalls: u64,
    /// Diagnostic f-calls (mean evaluations, rank-correlation checks).
    pub shadow_fcalls: u64,
    pub best_gap: f64,
    /// Best (lowest) full worst-case value seen at the mean.
    pub best_value: f64,
    pub restarts: u32,
    pub final_subset: Option<ScenarioSubset>,
    pub final_probabilities: Option<Vec<f64>>,
}

struct As3State {
    probs: ScenarioProbabilities,
    config: As3Config,
    lambda_s: Option<usize>,
    region_threshold: f64,
}

/// Runs one seeded optimization to termination.
pub fn run_single(
    problem: &WorstCaseProblem,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<RunTrace, HarnessError> {
    let n = problem.dim();
    let m = problem.scenario_count();
    let init_box = config.resolve_init_box(problem);
    if init_box.len() != n {
        return Err(HarnessError::Config(format!(
            "init box has {} entries for an {n}-dimensional problem",
            init_box.len()
        )));
    }
    let sigma0 = config.resolve_sigma0(&init_box);
    let lambda = config.lambda.unwrap_or_else(|| default_lambda(n));

    let mut scenario_rng = ChaCha8Rng::seed_from_u64(seed);
    scenario_rng.set_stream(0);
    let mut candidate_rng = ChaCha8Rng::seed_from_u64(seed);
    candidate_rng.set_stream(1);

    let mean0: Vec<f64> = init_box
        .iter()
        .map(|&(lo, hi)| candidate_rng.random_range(lo..=hi))
        .collect();
    let mut state = SearchDistribution::new_isotropic(&mean0, sigma0, Some(lambda))?;

    let mut as3 = match config.algorithm {
        Algorithm::Baseline => None,
        _ => {
            let (as3_config, lambda_s) = config.resolve_as3(m)?;
            Some(As3State {
                probs: ScenarioProbabilities::new(m, as3_config.p0, as3_config.epsilon)?,
                config: as3_config,
                lambda_s,
                region_threshold: chi2_quantile(n, as3_config.gamma)?,
            })
        }
    };

    let mut alg_calls = FCallCounter::new();
    let mut shadow_calls = FCallCounter::new();
    let full_set = ScenarioSubset::full(m);
    let f_star = problem.optimal_value();

    let mut best_gap = f64::INFINITY;
    let mut best_value = f64::INFINITY;
    let mut restarts: u32 = 0;
    let mut iteration: u64 = 0;
    let mut records = Vec::new();
    let mut last_subset = full_set.clone();

    let outcome = loop {
        if alg_calls.total() >= config.budget_fcalls {
            break TerminationStatus {
                outcome: Outcome::FailBudget,
                detail: format!(
                    "budget exhausted ({} of {} f-calls)",
                    alg_calls.total(),
                    config.budget_fcalls
                ),
            };
        }

        // Subset first, then candidates: the two streams are independent,
        // but the draw order within each stream is part of the trace
        // contract.
        let subset = match (&config.algorithm, &as3) {
            (Algorithm::Baseline, _) => full_set.clone(),
            (Algorithm::As3Adaptive, Some(a)) => sample_subset_bernoulli(&a.probs, &mut scenario_rng),
            (Algorithm::As3Fixed, Some(a)) => {
                sample_subset_fixed(&a.probs, a.lambda_s.unwrap(), &mut scenario_rng)?
            }
            _ => unreachable!(),
        };

        let xs = state.ask(&mut candidate_rng)?;
        let mut evals = Vec::with_capacity(xs.len());
        for x in &xs {
            evals.push(evaluate_subset(problem, x.as_slice(), &subset, &mut alg_calls)?);
        }
        let fitness: Vec<f64> = evals.iter().map(|r| r.worst_value).collect();

        // Region membership is judged against the distribution candidates
        // were drawn from, before the update below.
        let region_flags: Option<Vec<bool>> = match &as3 {
            Some(a) => {
                let mut flags = Vec::with_capacity(xs.len());
                for x in &xs {
                    flags.push(state.mahalanobis_sq(x)? <= a.region_threshold);
                }
                Some(flags)
            }
            None => None,
        };

        let tau = if config.collect_tau && as3.is_some() {
            let mut full_values = Vec::with_capacity(xs.len());
            for x in &xs {
                full_values.push(evaluate_full(problem, x.as_slice(), &mut shadow_calls)?.worst_value);
            }
            kendall_tau(&full_values, &fitness).ok()
        } else {
            None
        };

        state.tell(&xs, &fitness)?;

        if let (Some(a), Some(region)) = (&mut as3, region_flags) {
            let support: Vec<Vec<bool>> = evals
                .iter()
                .map(|rec| rec.values.iter().map(|&v| v == rec.worst_value).collect())
                .collect();
            let c_n = match a.lambda_s {
                None => compute_cn_adaptive(a.config.c_p, a.config.eta, state.lambda(), m),
                Some(_) => {
                    let nonsupport = (0..subset.len())
                        .filter(|&j| support.iter().all(|row| !row[j]))
                        .count();
                    compute_cn_fixed(a.config.c_p, state.lambda(), nonsupport)
                }
            };
            let flags = SupportFlags {
                support,
                in_region: region,
            };
            update_probabilities(&mut a.probs, &subset, &flags, a.config.c_p, c_n)?;
        }

        // Shadow diagnostics at the updated mean.
        let mean = state.mean().as_slice();
        let f_full_mean = evaluate_full(problem, mean, &mut shadow_calls)?.worst_value;
        let f_subset_mean = if subset.len() == m {
            f_full_mean
        } else {
            evaluate_subset(problem, mean, &subset, &mut shadow_calls)?.worst_value
        };

        if let Some(f_star) = f_star {
            best_gap = best_gap.min((f_full_mean - f_star).abs());
        }
        best_value = best_value.min(f_full_mean);
        iteration += 1;
        last_subset = subset.clone();

        let status = state.check_termination(
            best_gap,
            alg_calls.total(),
            config.budget_fcalls,
            &config.thresholds,
        );
        let coord_trigger = status.outcome == Outcome::Running
            && config
                .restart_coord_std
                .is_some_and(|t| state.coordinate_std_termination(t));
        let terminal = match status.outcome {
            Outcome::Success | Outcome::FailBudget => true,
            Outcome::FailSigma | Outcome::FailCondition => {
                config.restart_policy == RestartPolicy::None
            }
            Outcome::Running => coord_trigger && config.restart_policy == RestartPolicy::None,
        };

        if terminal || iteration.is_multiple_of(config.record_every) {
            records.push(IterationRecord {
                iteration,
                fcalls: alg_calls.total(),
                f_full_mean,
                f_subset_mean,
                sum_p: as3.as_ref().map_or(m as f64, |a| a.probs.sum()),
                subset_size: subset.len(),
                tau,
                restarts,
            });
        }

        if terminal {
            break match status.outcome {
                Outcome::Running => TerminationStatus {
                    outcome: Outcome::FailSigma,
                    detail: "coordinate-wise variance below restart threshold".into(),
                },
                _ => status,
            };
        }

        let needs_restart = coord_trigger
            || matches!(status.outcome, Outcome::FailSigma | Outcome::FailCondition);
        if needs_restart {
            let kind = match config.restart_policy {
                RestartPolicy::DoubleLambda => RestartKind::DoubleLambda,
                _ => RestartKind::Simple,
            };
            state.restart(kind, &init_box, &mut candidate_rng);
            if let Some(a) = &mut as3 {
                a.probs = ScenarioProbabilities::new(m, a.config.p0, a.config.epsilon)?;
            }
            restarts += 1;
        }
    };

    Ok(RunTrace {
        trial: 0,
        seed,
        records,
        iterations: iteration,
        fcalls: alg_calls.total(),
        shadow_fcalls: shadow_calls.total(),
        best_gap,
        best_value,
        restarts,
        final_subset: as3.as_ref().map(|_| last_subset),
        final_probabilities: as3.as_ref().map(|a| a.probs.as_slice().to_vec()),
        outcome,
    })
}

/// Baseline: full-set evaluation every iteration.
pub fn run_baseline(
    problem: &WorstCaseProblem,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<RunTrace, HarnessError> {
    let mut config = config.clone();
    config.algorithm = Algorithm::Baseline;
    run_single(problem, &config, seed)
}

/// Adaptive subset selection (Bernoulli sampling on p).
pub fn run_as3(
    problem: &WorstCaseProblem,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<RunTrace, HarnessError> {
    let mut config = config.clone();
    config.algorithm = Algorithm::As3Adaptive;
    run_single(problem, &config, seed)
}

/// Fixed-size subset variant (categorical sampling without replacement).
pub fn run_as3_fixed(
    problem: &WorstCaseProblem,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<RunTrace, HarnessError> {
    let mut config = config.clone();
    config.algorithm = Algorithm::As3Fixed;
    run_single(problem, &config, seed)
}

/// Per-trial summary derived purely from a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub outcome: Outcome,
    pub success: bool,
    /// Raw algorithm f-calls at termination.
    pub fcalls_raw: u64,
    /// Budget-imputed f-calls: failures count as the full budget.
    pub fcalls_imputed: u64,
    pub best_value: f64,
    pub best_gap: f64,
    pub restarts: u32,
    pub final_sum_p: Option<f64>,
    /// |A ∩ S*| / |S*| of the terminal subset, when S* is known.
    pub hit_ratio: Option<f64>,
    /// |A \ S*| / |S*| of the terminal subset, when S* is known.
    pub excess_ratio: Option<f64>,
}

impl TrialSummary {
    pub fn from_trace(trace: &RunTrace, budget: u64, known_support: Option<&[usize]>) -> Self {
        let success = trace.outcome.outcome == Outcome::Success;
        let (hit_ratio, excess_ratio) = match (known_support, &trace.final_subset) {
            (Some(support), Some(subset)) if !support.is_empty() => {
                let set: BTreeSet<usize> = support.iter().copied().collect();
                let (h, e) = subset_support_ratios(subset, &set).expect("nonempty support");
                (Some(h), Some(e))
            }
            _ => (None, None),
        };
        TrialSummary {
            trial: trace.trial,
            seed: trace.seed,
            outcome: trace.outcome.outcome,
            success,
            fcalls_raw: trace.fcalls,
            fcalls_imputed: if success { trace.fcalls } else { budget },
            best_value: trace.best_value,
            best_gap: trace.best_gap,
            restarts: trace.restarts,
            final_sum_p: trace.final_probabilities.as_ref().map(|p| p.iter().sum()),
            hit_ratio,
            excess_ratio,
        }
    }
}

/// All traces and summaries of a multi-trial experiment.
#[derive(Debug)]
pub struct ExperimentResult {
    pub traces: Vec<RunTrace>,
    pub summaries: Vec<TrialSummary>,
}

impl ExperimentResult {
    pub fn success_count(&self) -> usize {
        self.summaries.iter().filter(|s| s.success).count()
    }

    pub fn imputed_fcalls(&self) -> Vec<f64> {
        self.summaries.iter().map(|s| s.fcalls_imputed as f64).collect()
    }

    pub fn median_fcalls(&self) -> f64 {
        stats::median_iqr(&self.imputed_fcalls()).expect("at least one trial").0
    }

    pub fn median_restarts(&self) -> f64 {
        let v: Vec<f64> = self.summaries.iter().map(|s| s.restarts as f64).collect();
        stats::median_iqr(&v).expect("at least one trial").0
    }

    pub fn median_best_value(&self) -> f64 {
        let v: Vec<f64> = self.summaries.iter().map(|s| s.best_value).collect();
        stats::median_iqr(&v).expect("at least one trial").0
    }
}

/// Runs `trials` independent seeded runs (seed_base + index) and summarizes
/// them. Failures contribute the full budget to f-call statistics; the raw
/// success flag and f-calls stay available per trial.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    if config.trials == 0 {
        return Err(HarnessError::Config("at least one trial is required".into()));
    }
    let problem = config.problem.build()?;
    let known_support = problem.known_support().map(|s| s.to_vec());

    let run_trial = |trial: usize| -> Result<RunTrace, HarnessError> {
        let seed = config.seed_base.wrapping_add(trial as u64);
        let mut trace = run_single(&problem, config, seed)?;
        trace.trial = trial;
        Ok(trace)
    };

    let traces: Vec<RunTrace> = if config.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            (0..config.trials)
                .into_par_iter()
                .map(run_trial)
                .collect::<Result<Vec<_>, _>>()
        })?
    } else {
        (0..config.trials)
            .map(run_trial)
            .collect::<Result<Vec<_>, _>>()?
    };

    let summaries = traces
        .iter()
        .map(|t| TrialSummary::from_trace(t, config.budget_fcalls, known_support.as_deref()))
        .collect();
    Ok(ExperimentResult { traces, summaries })
}
