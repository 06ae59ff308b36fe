use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qudit_cli::config::{parse_config_with, RunConfig};
use qudit_cli::presets;
use qudit_cli::run::{exit, run_task, RunError, Task};

#[derive(Parser)]
#[command(name = "qudit", version, about = "Spin-qudit simulation and pulsed-EPR analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled parameter set: lagd, gdlu or gd2.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Override a config value, e.g. `--set system.J_K=0`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; defaults to the config's `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel ensemble loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Powder EPR spectrum.
    Spectrum,
    /// Magnetic heat capacity c/R versus temperature.
    Heatcap,
    /// χT versus temperature.
    Chi,
    /// Energy levels at the configured field.
    Levels,
    /// Transition frequencies and Rabi rates.
    RabiMap,
    /// Reachability of all levels through addressable transitions.
    Universality,
    /// Fit echo decays (a trace file or a directory of traces).
    FitDecay { data: PathBuf },
    /// Fourier analysis of nutation traces (file or directory).
    Nutation { data: PathBuf },
}

fn load_config(common: &Common) -> Result<RunConfig, RunError> {
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    let text = match (&common.config, &common.preset) {
        (Some(path), _) => std::fs::read_to_string(path).map_err(|e| RunError::MissingData(format!("{}: {e}", path.display())))?,
        (None, Some(name)) => presets::text(name)?.to_string(),
        (None, None) => presets::text("gd2")?.to_string(),
    };
    Ok(parse_config_with(&text, &overrides)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(exit::CONFIG as u8);
        }
    }
    let (task, data) = match &cli.command {
        Command::Spectrum => (Task::Spectrum, None),
        Command::Heatcap => (Task::Heatcap, None),
        Command::Chi => (Task::Chi, None),
        Command::Levels => (Task::Levels, None),
        Command::RabiMap => (Task::RabiMap, None),
        Command::Universality => (Task::Universality, None),
        Command::FitDecay { data } => (Task::FitDecay, Some(data.as_path())),
        Command::Nutation { data } => (Task::Nutation, Some(data.as_path())),
    };
    let result = load_config(&cli.common).and_then(|cfg| {
        let out = cli.common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
        run_task(task, &cfg, data, &out)
    });
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.failures {
                eprintln!("failed: {f}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
