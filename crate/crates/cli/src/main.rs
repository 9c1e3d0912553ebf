use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hermstable_cli::commands::{self, CliError, RunContext};
use hermstable_cli::config::{load_config, Command};

#[derive(Parser)]
#[command(
    name = "hermstable",
    version,
    about = "Stable laws on Hermitian matrices: sampling, CF checks, limit experiments"
)]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Progress and check details on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a batch and write batch.hsb plus a summary.
    Sample(RunArgs),
    /// Evaluate characteristic function forms at the configured points.
    Cf(RunArgs),
    /// Spherical vs diagonal CF residual on a grid.
    DpCheck(RunArgs),
    /// Distance of normalized sums to a target law along an m-schedule.
    Clt(RunArgs),
    /// Tail ratios, Hill estimate, moment scan and domain-of-attraction checks.
    Tail(RunArgs),
    /// Combine report files into summary.json and summary.md.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<bool, CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(hermstable_cli::config::ConfigError::new("--threads", "must be at least 1").into());
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let (cmd, args) = match cli.cmd {
        Cmd::Sample(a) => (Command::Sample, a),
        Cmd::Cf(a) => (Command::Cf, a),
        Cmd::DpCheck(a) => (Command::DpCheck, a),
        Cmd::Clt(a) => (Command::Clt, a),
        Cmd::Tail(a) => (Command::Tail, a),
        Cmd::Report { out, paths } => {
            let ctx = RunContext {
                out_dir: out,
                verbose: cli.verbose,
            };
            return commands::cmd_report(&paths, &ctx);
        }
    };
    let (mut cfg, raw) = load_config(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let ctx = RunContext {
        out_dir: args.out,
        verbose: cli.verbose,
    };
    commands::run(cmd, &cfg, &raw, &ctx)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("hermstable: one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("hermstable: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
