//! Experiment driver: load a TOML config, run the configured planners
//! through the simulator, and write CSV/JSON reports.
//!
//! Exit codes: 0 success, 2 configuration or workload problems, 3 simulation
//! invariant violations, 1 anything else (I/O).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use aggsched_core::experiment::{
    emit_report, emit_sweep, load_config, run_experiment, run_sweep, ExperimentConfig,
    OutputFormat,
};
use aggsched_core::Error;

#[derive(Parser)]
#[command(
    name = "aggsched",
    version,
    about = "Plan and simulate distributed aggregation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run each configured planner once; write summary.csv, per-planner
    /// timelines, and report.json.
    Run(RunArgs),
    /// Re-run the experiment across axis values; write sweep.csv/sweep.json
    /// with a speedup column against the baseline planner.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML).
    config: PathBuf,

    /// Output directory (default: the config's out_dir, else "out").
    #[arg(long)]
    out: Option<PathBuf>,

    /// Master seed; overrides the config seed and AGGSCHED_SEED.
    #[arg(long)]
    seed: Option<u64>,

    /// Replace the config's planner lineup, e.g. --planners grasp,repart.
    #[arg(long, value_delimiter = ',')]
    planners: Vec<String>,

    /// Add the exhaustive tree search to the lineup.
    #[arg(long)]
    oracle: bool,

    /// Which report files to write.
    #[arg(long, value_enum, default_value_t = FormatArg::Both)]
    format: FormatArg,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Swept axis and its values, e.g. --axis "jaccard=0,0.25,0.5,0.75,1".
    #[arg(long)]
    axis: String,

    /// Planner the speedup column is normalized against
    /// (default: the config's sweep_baseline).
    #[arg(long)]
    baseline: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
            FormatArg::Both => OutputFormat::Both,
        }
    }
}

/// Fold command-line overrides into the loaded config. Seed precedence:
/// --seed, then the config file, then AGGSCHED_SEED, then 0.
fn apply_overrides(common: &CommonArgs, cfg: &mut ExperimentConfig) -> Result<(), Error> {
    if let Some(s) = common.seed {
        cfg.seed = Some(s);
    } else if cfg.seed.is_none() {
        if let Ok(raw) = std::env::var("AGGSCHED_SEED") {
            let parsed = raw.trim().parse::<u64>().map_err(|_| {
                Error::Config(format!("AGGSCHED_SEED: cannot parse \"{raw}\" as a seed"))
            })?;
            cfg.seed = Some(parsed);
        }
    }
    if !common.planners.is_empty() {
        cfg.planners = common.planners.clone();
    }
    if common.oracle && !cfg.planners.iter().any(|p| p.trim() == "oracle") {
        cfg.planners.push("oracle".into());
    }
    Ok(())
}

fn out_dir(common: &CommonArgs, cfg: &ExperimentConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = load_config(&args.common.config)?;
            apply_overrides(&args.common, &mut cfg)?;
            let report = run_experiment(&cfg)?;
            let dir = out_dir(&args.common, &cfg);
            for path in emit_report(&report, &dir, args.common.format.into())? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Sweep(args) => {
            let mut cfg = load_config(&args.common.config)?;
            apply_overrides(&args.common, &mut cfg)?;
            if let Some(baseline) = &args.baseline {
                cfg.sweep_baseline = baseline.clone();
            }
            let (axis, values) = parse_axis(&args.axis)?;
            let rows = run_sweep(&cfg, &axis, &values)?;
            let dir = out_dir(&args.common, &cfg);
            for path in emit_sweep(&rows, &dir, args.common.format.into())? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn parse_axis(spec: &str) -> Result<(String, Vec<String>), Error> {
    let bad = || Error::Config(format!("--axis expects name=v1,v2,..., got \"{spec}\""));
    let (name, rest) = spec.split_once('=').ok_or_else(bad)?;
    let name = name.trim();
    let values: Vec<String> = rest
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if name.is_empty() || values.is_empty() {
        return Err(bad());
    }
    Ok((name.to_string(), values))
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::InvalidWorkload(_)
        | Error::InvalidTopology(_)
        | Error::InvalidHashFamily(_)
        | Error::OracleUnsupported(_)
        | Error::KeyFile { .. } => 2,
        Error::PlanViolation(_)
        | Error::InvalidState(_)
        | Error::Planner(_)
        | Error::SignatureMismatch { .. }
        | Error::DegenerateInput(_) => 3,
        Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
