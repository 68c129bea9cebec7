use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rbgsched::a2c::Checkpoint;
use rbgsched::{metrics, run, run_with, Error, ScenarioConfig, SchedulerImpl, SchedulerKind};

mod sweep;

use sweep::{Axis, SweepPlan};

/// Downlink RBG scheduling simulator.
///
/// Exit status: 0 on success, 1 for usage or configuration errors, 2 when a
/// run fails. Set RUST_LOG=debug to log arrival-cap hits.
#[derive(Debug, Parser)]
#[command(name = "rbgsched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its KPI CSV and JSON summary.
    Run(RunArgs),
    /// Fan a scenario out over an axis, schedulers and seeds.
    Sweep(SweepArgs),
    /// Train a learning scheduler and write its checkpoint and reward trace.
    Train(RunArgs),
    /// Run a learning scheduler from a checkpoint with learning disabled.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (TOML); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    /// pf, cqa, da2c or cdpa-a2c.
    #[arg(long)]
    scheduler: Option<SchedulerKind>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    #[value(name = "n_ue")]
    NUe,
    #[value(name = "mobile_fraction")]
    MobileFraction,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    axis: AxisArg,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    /// Explicit comma-separated seeds; overrides --n-seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Seeds 1..=N when --seeds is not given.
    #[arg(long, default_value_t = 30)]
    n_seeds: u64,
    #[arg(long, value_delimiter = ',', default_value = "pf,cqa,da2c,cdpa-a2c")]
    schedulers: Vec<SchedulerKind>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig { .. } | Error::ConfigParse { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, Failure> {
    match path {
        Some(p) => Ok(ScenarioConfig::load(p)?),
        None => Ok(ScenarioConfig::default()),
    }
}

fn scenario(a: &RunArgs) -> Result<ScenarioConfig, Failure> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(k) = a.scheduler {
        cfg.scheduler = k;
    }
    Ok(cfg.validate()?)
}

fn stem(cfg: &ScenarioConfig) -> String {
    format!("{}_seed-{}", cfg.scheduler, cfg.seed)
}

fn cmd_run(a: &RunArgs) -> Result<(), Failure> {
    let cfg = scenario(a)?;
    let out = run(&cfg)?;
    let (csv, json) = metrics::export(&out.records, &out.summary, &a.common.out, &stem(&cfg))?;
    println!("{}\n{}", csv.display(), json.display());
    Ok(())
}

fn cmd_train(a: &RunArgs) -> Result<(), Failure> {
    let mut cfg = scenario(a)?;
    if !cfg.scheduler.is_learning() {
        return Err(Failure::Usage(format!("scheduler `{}` does not learn; use da2c or cdpa-a2c", cfg.scheduler)));
    }
    cfg.learning.train = true;
    let out = run(&cfg)?;
    let stem = stem(&cfg);
    let (csv, json) = metrics::export(&out.records, &out.summary, &a.common.out, &stem)?;
    let ck_path = a.common.out.join(format!("{stem}.ckpt"));
    out.scheduler.checkpoint().expect("learning scheduler").save(&ck_path)?;
    let trace = a.common.out.join(format!("{stem}_reward.csv"));
    write_reward_trace(&trace, &out.records, cfg.reward_window)?;
    println!("{}\n{}\n{}\n{}", csv.display(), json.display(), ck_path.display(), trace.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<(), Failure> {
    let mut cfg = scenario(&a.run)?;
    if !cfg.scheduler.is_learning() {
        return Err(Failure::Usage(format!("scheduler `{}` does not use a checkpoint", cfg.scheduler)));
    }
    cfg.learning.train = false;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let sched = SchedulerImpl::from_checkpoint(&cfg, ck)?;
    let out = run_with(&cfg, sched)?;
    let stem = format!("{}_eval", stem(&cfg));
    let (csv, json) = metrics::export(&out.records, &out.summary, &a.run.common.out, &stem)?;
    let trace = a.run.common.out.join(format!("{stem}_reward.csv"));
    write_reward_trace(&trace, &out.records, cfg.reward_window)?;
    println!("{}\n{}\n{}", csv.display(), json.display(), trace.display());
    Ok(())
}

/// `tti,reward,running_mean,epsilon` per TTI.
fn write_reward_trace(path: &Path, records: &[metrics::KpiRecord], window: usize) -> Result<(), Failure> {
    let rewards: Vec<f64> = records.iter().map(|r| r.reward).collect();
    let curve = metrics::reward_curve(&rewards, window);
    let mut text = String::from("tti,reward,running_mean,epsilon\n");
    for ((r, m), rec) in rewards.iter().zip(&curve).zip(records) {
        let eps = rec.epsilon.map(|e| e.to_string()).unwrap_or_default();
        text += &format!("{},{r},{m},{eps}\n", rec.tti);
    }
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn cmd_sweep(a: &SweepArgs) -> Result<(), Failure> {
    let base = load_config(a.common.config.as_deref())?;
    let axis = match a.axis {
        AxisArg::NUe => Axis::NUe,
        AxisArg::MobileFraction => Axis::MobileFraction,
    };
    let seeds = if a.seeds.is_empty() { (1..=a.n_seeds).collect() } else { a.seeds.clone() };
    if seeds.is_empty() {
        return Err(Failure::Usage("no seeds to run".into()));
    }
    let plan = SweepPlan::new(base, axis, &a.values, &a.schedulers, &seeds).map_err(Failure::Usage)?;
    log::info!("sweep: {} runs", plan.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let report = pool.install(|| plan.execute(&a.common.out)).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{}", report.aggregate_path.display());
    if report.failures > 0 {
        return Err(Failure::Runtime(format!(
            "{} of {} runs failed; see {}",
            report.failures,
            report.runs,
            report.failures_path.display()
        )));
    }
    Ok(())
}
