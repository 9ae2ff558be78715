use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use illiquid_cpt::experiment::{emit_plot_data, run_experiment, Command, RunOptions};

#[derive(Parser)]
#[command(
    name = "illiquid-cpt",
    version,
    about = "Prospect-theory portfolio experiments in illiquid markets"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the well-posedness and integrability diagnostics only.
    Check(RunArgs),
    /// Optimise the prospect value over the configured strategy class.
    Optimize(RunArgs),
    /// Optimise with and without randomisation on the same scenarios.
    CompareRandomized(RunArgs),
    /// Turn the reports in `--out` into plot-ready series.
    PlotData {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `run.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run even when the well-posedness check fails.
    #[arg(long)]
    allow_ill_posed: bool,
}

fn run(args: RunArgs, command: Command) -> anyhow::Result<()> {
    let opts = RunOptions {
        seed: args.seed,
        out_dir: args.out,
        allow_ill_posed: args.allow_ill_posed,
    };
    let manifest = run_experiment(&args.config, command, &opts)
        .with_context(|| format!("{} failed for {}", command.name(), args.config.display()))?;
    print!("{}", manifest.render());
    println!("out_dir: {}", manifest.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Check(a) => run(a, Command::Check),
        Cmd::Optimize(a) => run(a, Command::Optimize),
        Cmd::CompareRandomized(a) => run(a, Command::CompareRandomized),
        Cmd::PlotData { out } => emit_plot_data(&out)
            .map(|files| {
                for f in files {
                    println!("wrote: {}", f.display());
                }
            })
            .with_context(|| format!("plot-data failed for {}", out.display())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
