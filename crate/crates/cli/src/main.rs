use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cwbsim::config::PRESET_NAMES;
use cwbsim::report::emit_reports;
use cwbsim::{parse_config, preset, run_experiment, Execution, SimConfig};

#[derive(Parser)]
#[command(name = "cwbsim", version, about = "Social-media simulator with collective well-being metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a config file and write reports.
    Run(RunArgs),
    /// Parse and validate a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the available preset names.
    ListPresets,
}

#[derive(Args)]
struct RunArgs {
    /// Built-in experiment preset.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides `run.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write the final graph of the first run of each arm.
    #[arg(long)]
    dump_graph: bool,
    /// Run ensemble members one after another.
    #[arg(long)]
    sequential: bool,
}

fn run(args: RunArgs) -> Result<()> {
    let configs: Vec<(String, SimConfig)> = match (&args.preset, &args.config) {
        (Some(name), None) => preset(name)?,
        (None, Some(path)) => vec![(String::new(), parse_config(path)?)],
        _ => bail!("exactly one of --preset or --config is required"),
    };
    let exec = if args.sequential { Execution::Sequential } else { Execution::Parallel };
    let nested = configs.len() > 1;
    for (label, mut cfg) in configs {
        if let Some(seed) = args.seed {
            cfg.run.master_seed = seed;
        }
        cfg.validate()?;
        let seed = cfg.run.master_seed;
        let results = run_experiment(&cfg, seed, exec).with_context(|| format!("running `{label}`"))?;
        let dir = if nested { args.out.join(&label) } else { args.out.clone() };
        let written = emit_reports(&results, &cfg, seed, &dir, args.dump_graph)?;
        for path in written {
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { config } => parse_config(&config)
            .map(|_| println!("{}: ok", config.display()))
            .map_err(Into::into),
        Command::ListPresets => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
