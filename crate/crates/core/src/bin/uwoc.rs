use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uwoc::config::{emit_config, parse_config, parse_target, ScenarioConfig};
use uwoc::harness::{self, CalibrateRequest, HarnessError};
use uwoc::netsim::ExecutionPlan;

#[derive(Parser)]
#[command(name = "uwoc", version, about = "Multi-hop underwater optical sensor network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit channel parameters to packet-success targets and write a new config.
    Calibrate(CalibrateArgs),
    /// Simulate every turbidity and write one CSV row per (turbidity, hop).
    Sweep(RunArgs),
    /// Simulate one turbidity and log the temperatures of every delivered frame.
    Monitor(RunArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    /// End-to-end target NTU:DISTANCE_M:HOPS:PSR; repeatable.
    #[arg(long = "target", value_name = "T")]
    targets: Vec<String>,
    /// Parameters to fit, from c0, kt, sigma.
    #[arg(long, value_name = "LIST")]
    free: Option<String>,
    /// Cumulative PSR after given hops, HOP:PSR,...; fits link 1 loss and noise.
    #[arg(long, value_name = "LIST")]
    link_targets: Option<String>,
    /// Turbidity for --link-targets.
    #[arg(long, value_name = "NTU")]
    turbidity: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<u64>,
    /// Comma-separated NTU values (monitor uses the first).
    #[arg(long, value_name = "LIST")]
    turbidity: Option<String>,
    /// Run rounds on the thread pool; output is identical to a serial run.
    #[arg(long)]
    parallel: bool,
}

fn read_config(path: &Path) -> Result<ScenarioConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_config(&text)?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn out_path(common: &Common, config: &ScenarioConfig, fallback: &str) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from(fallback))
}

fn calibrate(args: CalibrateArgs) -> Result<(), HarnessError> {
    let config = read_config(&args.common.config)?;
    let targets = args
        .targets
        .iter()
        .map(|t| parse_target(t))
        .collect::<Result<Vec<_>, _>>()
        .map_err(HarnessError::Usage)?;
    let free = args
        .free
        .map(|f| f.split(',').map(str::parse).collect::<Result<Vec<_>, _>>())
        .transpose()
        .map_err(HarnessError::Usage)?;
    let link_targets = args
        .link_targets
        .map(|t| harness::parse_link_targets(&t))
        .transpose()
        .map_err(HarnessError::Usage)?
        .unwrap_or_default();
    let request = CalibrateRequest {
        targets,
        free,
        link_targets,
        turbidity: args.turbidity,
    };
    let outcome = harness::cmd_calibrate(&config, &request)?;
    let out = args.common.out.unwrap_or_else(|| args.common.config.with_extension("calibrated.cfg"));
    write_file(&out, &emit_config(&outcome.config))?;
    print!("{}", outcome.summary);
    println!("wrote {}", out.display());
    Ok(())
}

fn plan(parallel: bool) -> ExecutionPlan {
    if parallel {
        ExecutionPlan::Parallel { chunk_rounds: 4096 }
    } else {
        ExecutionPlan::Serial
    }
}

fn turbidities(args: &RunArgs, config: &ScenarioConfig) -> Result<Vec<f64>, HarnessError> {
    match &args.turbidity {
        Some(t) => harness::parse_turbidities(t).map_err(HarnessError::Usage),
        None => Ok(config.turbidities.clone()),
    }
}

fn sweep(args: RunArgs) -> Result<(), HarnessError> {
    let config = read_config(&args.common.config)?;
    let turbidities = turbidities(&args, &config)?;
    let outcome = harness::cmd_sweep(
        &config,
        &turbidities,
        args.rounds.unwrap_or(config.rounds),
        args.seed.unwrap_or(config.seed),
        plan(args.parallel),
    )?;
    let out = out_path(&args.common, &config, "psr.csv");
    write_file(&out, &outcome.csv)?;
    print!("{}", outcome.summary);
    println!("wrote {}", out.display());
    Ok(())
}

fn monitor(args: RunArgs) -> Result<(), HarnessError> {
    let config = read_config(&args.common.config)?;
    let turbidity = turbidities(&args, &config)?[0];
    let outcome = harness::cmd_monitor(
        &config,
        turbidity,
        args.rounds.unwrap_or(config.rounds),
        args.seed.unwrap_or(config.seed),
        plan(args.parallel),
    )?;
    let out = args.common.out.clone().unwrap_or_else(|| PathBuf::from("monitor.csv"));
    write_file(&out, &outcome.log)?;
    let last = outcome.report.hops.last().map_or(0, |h| h.packets_delivered);
    println!("delivered {last}/{} rounds at {turbidity} NTU", outcome.report.rounds);
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Sweep(a) => sweep(a),
        Command::Monitor(a) => monitor(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
