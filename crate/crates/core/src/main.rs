//! Command-line front end: single experiments, parameter sweeps, the
//! support-scenario oracle, synthetic grid generation, and trace
//! aggregation.

use anyhow::{bail, Context, Result};
use as3cma::harness::config::{parse_box, parse_problem_spec, ConfigBag, ExportFormat};
use as3cma::harness::export::{export_csv, export_jsonl, read_rows, TraceRow};
use as3cma::harness::stats::{mann_whitney_u, median_iqr};
use as3cma::harness::{
    run_experiment, Algorithm, ExperimentConfig, ExperimentResult, ProblemSpec, RestartPolicy,
};
use as3cma::problems::{generate_synthetic_grids, save_grids};
use as3cma::worstcase::{support_oracle, FCallCounter};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "as3cma",
    version,
    about = "Worst-case (min-max) optimization with CMA-ES and adaptive scenario subset selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (multiple seeded trials of one algorithm).
    Run(RunArgs),
    /// Vary one parameter over a list of values, rerunning the experiment.
    Sweep(SweepArgs),
    /// Brute-force support-scenario analysis around the known optimum.
    Oracle(OracleArgs),
    /// Generate a synthetic injectability grid stack.
    Gridgen(GridgenArgs),
    /// Aggregate exported trace files into median/IQR and U-test tables.
    Stats(StatsArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Flat key=value config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// baseline | as3 | as3-fixed
    #[arg(long)]
    algo: Option<Algorithm>,
    /// e.g. p2:n=10,m=100,k=5 · p4:n=10,m=50,l=10 · well:grids.txt ·
    /// wellgen:seed=7,m=50
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed; trial i runs with seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// f-call budget per trial.
    #[arg(long)]
    budget: Option<u64>,
    /// Output directory for traces and the per-trial summary.
    #[arg(long)]
    out: Option<PathBuf>,
    /// none | simple | double
    #[arg(long)]
    restart: Option<RestartPolicy>,
    #[arg(long)]
    sigma0: Option<f64>,
    /// Population size (defaults to 4 + floor(3 ln n)).
    #[arg(long)]
    lambda: Option<usize>,
    /// Initialization box as `lo,hi`, applied to every coordinate.
    #[arg(long)]
    init: Option<String>,
    #[arg(long = "cp")]
    c_p: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    p0: Option<f64>,
    /// Subset size of the fixed-size variant.
    #[arg(long = "lambda-s")]
    lambda_s: Option<usize>,
    /// Success gap threshold.
    #[arg(long)]
    gap: Option<f64>,
    #[arg(long = "sigma-min")]
    sigma_min: Option<f64>,
    #[arg(long = "cond-max")]
    cond_max: Option<f64>,
    /// Coordinate-wise variance restart trigger (max_i Sigma_ii below it).
    #[arg(long = "coord-std")]
    coord_std: Option<f64>,
    /// Collect the per-iteration rank correlation diagnostic.
    #[arg(long)]
    tau: bool,
    #[arg(long = "record-every")]
    record_every: Option<u64>,
    /// Concurrent trials.
    #[arg(long)]
    jobs: Option<usize>,
    /// csv | jsonl | both (default both)
    #[arg(long)]
    format: Option<ExportFormat>,
}

impl RunArgs {
    fn bag(&self) -> Result<ConfigBag> {
        let file = match &self.config {
            Some(path) => ConfigBag::from_file(path)?,
            None => ConfigBag::default(),
        };
        let problem = match &self.problem {
            Some(s) => Some(parse_problem_spec(s)?),
            None => None,
        };
        let init_box = match &self.init {
            Some(s) => Some(parse_box(s)?),
            None => None,
        };
        let cli = ConfigBag {
            algo: self.algo,
            problem,
            trials: self.trials,
            seed: self.seed,
            budget: self.budget,
            out: self.out.clone(),
            restart: self.restart,
            sigma0: self.sigma0,
            lambda: self.lambda,
            init_box,
            c_p: self.c_p,
            eta: self.eta,
            gamma: self.gamma,
            epsilon: self.epsilon,
            p0: self.p0,
            lambda_s: self.lambda_s,
            gap: self.gap,
            sigma_min: self.sigma_min,
            cond_max: self.cond_max,
            coord_std: self.coord_std,
            tau: if self.tau { Some(true) } else { None },
            record_every: self.record_every,
            jobs: self.jobs,
            format: self.format,
        };
        Ok(file.overlay(cli))
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    base: RunArgs,
    /// Parameter to vary: k | m | l | n | cp | eta | p0 | epsilon | lambda_s
    #[arg(long)]
    param: String,
    /// Comma-separated values, e.g. `5,15,25,50`.
    #[arg(long)]
    values: String,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    problem: String,
    /// Sample points per radius.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma-separated ball radii around the optimum.
    #[arg(long, default_value = "1,0.1,0.01,0.001,0.0001")]
    radii: String,
    /// Optional CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridgenArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    m: usize,
    #[arg(long, default_value_t = 50)]
    rows: usize,
    #[arg(long, default_value_t = 50)]
    cols: usize,
    #[arg(long, default_value_t = 12)]
    bumps: usize,
    #[arg(long, default_value_t = 0.12)]
    smoothness: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Exported trace files (CSV or JSONL), one per algorithm/config.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Budget used to impute f-calls of failed trials.
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
    /// Optional CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Gridgen(args) => cmd_gridgen(args),
        Command::Stats(args) => cmd_stats(args),
    }
}

fn summary_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(
        "trial,seed,outcome,success,fcalls_raw,fcalls_imputed,best_value,best_gap,restarts,\
         final_sum_p,hit_ratio,excess_ratio\n",
    );
    let fmt_opt = |v: Option<f64>| v.map_or("nan".to_string(), |x| format!("{x}"));
    for s in &result.summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            s.trial,
            s.seed,
            s.outcome,
            s.success,
            s.fcalls_raw,
            s.fcalls_imputed,
            s.best_value,
            s.best_gap,
            s.restarts,
            fmt_opt(s.final_sum_p),
            fmt_opt(s.hit_ratio),
            fmt_opt(s.excess_ratio),
        ));
    }
    out
}

fn print_aggregate(result: &ExperimentResult) -> Result<()> {
    let fcalls = result.imputed_fcalls();
    let (med, q25, q75) = median_iqr(&fcalls)?;
    println!(
        "trials: {}  success: {}/{}",
        result.summaries.len(),
        result.success_count(),
        result.summaries.len()
    );
    println!("f-calls (failures at budget): median {med:.0}  IQR [{q25:.0}, {q75:.0}]");
    println!(
        "restarts: median {:.1}   best value: median {:.6}",
        result.median_restarts(),
        result.median_best_value()
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let bag = args.bag()?;
    let format = bag.format.unwrap_or(ExportFormat::Both);
    let out_dir = bag.out.clone();
    let cfg = bag.build()?;
    let result = run_experiment(&cfg)?;
    print_aggregate(&result)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        if matches!(format, ExportFormat::Csv | ExportFormat::Both) {
            export_csv(&result.traces, &dir.join("traces.csv"))?;
        }
        if matches!(format, ExportFormat::Jsonl | ExportFormat::Both) {
            export_jsonl(&result.traces, &dir.join("traces.jsonl"))?;
        }
        std::fs::write(dir.join("summary.csv"), summary_csv(&result))?;
        println!("wrote traces and summary under {}", dir.display());
    }
    Ok(())
}

fn apply_sweep_value(cfg: &mut ExperimentConfig, param: &str, value: f64) -> Result<()> {
    let as_usize = |v: f64| -> Result<usize> {
        if v.fract() != 0.0 || v < 0.0 {
            bail!("parameter value {v} must be a non-negative integer");
        }
        Ok(v as usize)
    };
    match param {
        "cp" | "c_p" => cfg.as3.c_p = Some(value),
        "eta" => cfg.as3.eta = Some(value),
        "gamma" => cfg.as3.gamma = Some(value),
        "epsilon" => cfg.as3.epsilon = Some(value),
        "p0" => cfg.as3.p0 = Some(value),
        "lambda_s" | "lambda-s" => cfg.lambda_s = Some(as_usize(value)?),
        "k" | "m" | "l" | "n" => {
            let ProblemSpec::Analytic(params) = &mut cfg.problem else {
                bail!("sweeping `{param}` needs an analytic problem");
            };
            match param {
                "k" => params.k = Some(as_usize(value)?),
                "m" => params.m = as_usize(value)?,
                "l" => params.l = Some(as_usize(value)?),
                "n" => params.n = as_usize(value)?,
                _ => unreachable!(),
            }
            params.validate()?;
        }
        other => bail!("unknown sweep parameter `{other}`"),
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let bag = args.base.bag()?;
    let out_dir = bag.out.clone();
    let base_cfg = bag.build()?;
    let values: Vec<f64> = args
        .values
        .split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad value `{v}`")))
        .collect::<Result<_>>()?;
    if values.is_empty() {
        bail!("--values must list at least one value");
    }

    let mut rows = String::from(
        "param,value,trials,successes,median_fcalls,q25_fcalls,q75_fcalls,median_restarts,\
         median_best_value\n",
    );
    for &value in &values {
        let mut cfg = base_cfg.clone();
        apply_sweep_value(&mut cfg, &args.param, value)?;
        let result = run_experiment(&cfg)?;
        let (med, q25, q75) = median_iqr(&result.imputed_fcalls())?;
        println!(
            "{} = {value}: success {}/{}  median f-calls {med:.0}",
            args.param,
            result.success_count(),
            cfg.trials
        );
        rows.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            args.param,
            value,
            cfg.trials,
            result.success_count(),
            med,
            q25,
            q75,
            result.median_restarts(),
            result.median_best_value(),
        ));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(&dir)?;
        let path = dir.join("sweep.csv");
        std::fs::write(&path, rows)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let spec = parse_problem_spec(&args.problem)?;
    let problem = spec.build()?;
    let radii: Vec<f64> = args
        .radii
        .split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad radius `{v}`")))
        .collect::<Result<_>>()?;
    let center: Vec<f64> = match problem.known_optimum() {
        Some(x) => x.to_vec(),
        None => bail!("the support oracle needs a problem with a known optimum"),
    };
    let known: Option<BTreeSet<usize>> = problem
        .known_support()
        .map(|s| s.iter().copied().collect());

    let mut csv = String::from("radius,support_size,support,matches_known\n");
    println!("{:>12}  {:>5}  support scenarios", "radius", "size");
    for &radius in &radii {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let n = problem.dim();
        let sampler = || {
            // uniform draw from the radius-r ball around the optimum
            let dir: Vec<f64> = (0..n)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let scale = radius * rng.random::<f64>().powf(1.0 / n as f64) / norm;
            center
                .iter()
                .zip(&dir)
                .map(|(&c, &d)| c + scale * d)
                .collect()
        };
        let mut counter = FCallCounter::new();
        let support = support_oracle(&problem, sampler, args.samples, &mut counter)?;
        let listed: Vec<String> = support.iter().map(|s| s.to_string()).collect();
        let matches = known
            .as_ref()
            .map(|k| (k == &support).to_string())
            .unwrap_or_else(|| "unknown".to_string());
        println!(
            "{radius:>12.6}  {:>5}  {{{}}}  (matches known: {matches})",
            support.len(),
            listed.join(", ")
        );
        csv.push_str(&format!(
            "{radius},{},{},{matches}\n",
            support.len(),
            listed.join(";")
        ));
    }
    if let Some(path) = &args.out {
        std::fs::write(path, csv)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_gridgen(args: GridgenArgs) -> Result<()> {
    let stack = generate_synthetic_grids(
        args.seed,
        args.m,
        args.rows,
        args.cols,
        args.bumps,
        args.smoothness,
    );
    save_grids(&stack, &args.out)?;
    println!(
        "wrote {} ({} scenarios, {}x{} grid)",
        args.out.display(),
        args.m,
        args.rows,
        args.cols
    );
    Ok(())
}

/// Final recorded row per trial.
fn final_rows(rows: &[TraceRow]) -> Vec<&TraceRow> {
    let mut last: std::collections::BTreeMap<usize, &TraceRow> = Default::default();
    for row in rows {
        let entry = last.entry(row.trial).or_insert(row);
        if row.iteration >= entry.iteration {
            *entry = row;
        }
    }
    last.into_values().collect()
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let mut csv = String::from("file,trials,successes,median_fcalls,q25_fcalls,q75_fcalls\n");
    let mut per_file: Vec<(String, Vec<f64>)> = Vec::new();
    for path in &args.files {
        let rows = read_rows(path)?;
        let finals = final_rows(&rows);
        if finals.is_empty() {
            bail!("{}: no trace rows", path.display());
        }
        let fcalls: Vec<f64> = finals
            .iter()
            .map(|r| {
                if r.outcome == "success" {
                    r.fcalls as f64
                } else {
                    args.budget as f64
                }
            })
            .collect();
        let successes = finals.iter().filter(|r| r.outcome == "success").count();
        let (med, q25, q75) = median_iqr(&fcalls)?;
        let name = path.display().to_string();
        println!(
            "{name}: trials {}  success {successes}  median f-calls {med:.0} [{q25:.0}, {q75:.0}]",
            finals.len()
        );
        csv.push_str(&format!(
            "{name},{},{successes},{med},{q25},{q75}\n",
            finals.len()
        ));
        per_file.push((name, fcalls));
    }
    if per_file.len() > 1 {
        csv.push_str("file_a,file_b,u_statistic,p_value\n");
        for i in 0..per_file.len() {
            for j in i + 1..per_file.len() {
                let (u, p) = mann_whitney_u(&per_file[i].1, &per_file[j].1)?;
                println!(
                    "U-test {} vs {}: U = {u:.1}, two-sided p = {p:.3e}",
                    per_file[i].0, per_file[j].0
                );
                csv.push_str(&format!(
                    "{},{},{u},{p}\n",
                    per_file[i].0, per_file[j].0
                ));
            }
        }
    }
    if let Some(path) = &args.out {
        let mut f = std::fs::File::create(path)?;
        f.write_all(csv.as_bytes())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
