mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use commands::{Failure, Options, TauGrid};
use config::Config;
use output::Artifacts;
use std::path::PathBuf;
use std::process::ExitCode;

/// Discounted moments, back-action bounds and observer synthesis for
/// quantum harmonic oscillators.
#[derive(Parser)]
#[command(name = "qho", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discounted second moments over a horizon grid
    Moments(Common),
    /// Back-action deviation bounds along a coupling sweep
    Backaction(Common),
    /// Optimal coupling path by homotopy in mu = 1/lambda
    Synthesize(Common),
    /// Structural invariant suite
    Check(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Horizon grid `a:b:n`
    #[arg(long, default_value = "0.01:3.8225:64")]
    tau_grid: TauGrid,
    #[arg(long, default_value_t = 5.0)]
    mu_max: f64,
    #[arg(long, default_value_t = 64)]
    steps: usize,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (name, common) = match &cli.command {
        Command::Moments(c) => ("moments", c),
        Command::Backaction(c) => ("backaction", c),
        Command::Synthesize(c) => ("synthesize", c),
        Command::Check(c) => ("check", c),
    };
    let cfg = Config::load(&common.config).map_err(Failure::Config)?;
    let opts = Options {
        tau_grid: common.tau_grid,
        mu_max: common.mu_max,
        steps: common.steps,
    };
    let out = Artifacts::create(&common.out)?;
    let echoed = [
        ("tau_grid", opts.tau_grid.to_string()),
        ("mu_max", output::num(opts.mu_max)),
        ("steps", opts.steps.to_string()),
    ];
    out.write_manifest(name, &echoed, &cfg.path, &cfg.text)?;
    match &cli.command {
        Command::Moments(_) => commands::moments(&cfg, &opts, &out),
        Command::Backaction(_) => commands::backaction(&cfg, &opts, &out),
        Command::Synthesize(_) => commands::synthesize(&cfg, &opts, &out),
        Command::Check(_) => commands::check(&cfg, &out),
    }
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("qho: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
