use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ftem_cli::{run_command, CliError, Command, OUTPUT_DIR_ENV};

#[derive(Parser, Debug)]
#[command(name = "ftem", version, about = "Competition models with finite-time extinction")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args, Debug)]
struct Args {
    /// JSON run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Worker threads for independent runs (0 = all cores).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Equilibria with stability classes.
    Equilibria(Args),
    /// Classify given equilibrium points.
    Classify(Args),
    /// Equilibrium table over a grid of q.
    SweepQ(Args),
    /// Fold of the interior branch in q, with transversality data.
    SaddleNode(Args),
    /// Collision of an interior branch with the boundary.
    Pitchfork(Args),
    /// Trajectories from given, random and separatrix-straddling starts.
    Simulate(Args),
    PhasePortrait(Args),
    Separatrix(Args),
    /// Reaction-diffusion runs, one per flux exponent.
    PdeRun(Args),
    /// Classic and harvested aphid models.
    Aphid(Args),
    /// Randomized self-checks.
    Verify(Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Equilibria(a) => (Command::Equilibria, a),
        Cmd::Classify(a) => (Command::Classify, a),
        Cmd::SweepQ(a) => (Command::SweepQ, a),
        Cmd::SaddleNode(a) => (Command::SaddleNode, a),
        Cmd::Pitchfork(a) => (Command::Pitchfork, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::PhasePortrait(a) => (Command::PhasePortrait, a),
        Cmd::Separatrix(a) => (Command::Separatrix, a),
        Cmd::PdeRun(a) => (Command::PdeRun, a),
        Cmd::Aphid(a) => (Command::Aphid, a),
        Cmd::Verify(a) => (Command::Verify, a),
    };
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("ftem: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    match run_command(cmd, &text, args.jobs, dir.as_deref()) {
        Ok(out) => {
            println!("{}: wrote {} files to {}", cmd.name(), out.artifacts.files.len() + 1, out.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ftem: {e}");
            ExitCode::from(exit_byte(&e))
        }
    }
}

fn exit_byte(e: &CliError) -> u8 {
    e.exit_code() as u8
}
