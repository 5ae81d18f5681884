use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use moire_cli::{run, Command, Options};

/// Twisted bilayer graphene band structures, densities of states,
/// convergence sweeps and continuum-model export.
///
/// Exit codes: 0 ok, 2 config error, 3 resource cap exceeded, 4 numerical
/// contract violated, 1 I/O failure.
#[derive(Parser)]
#[command(name = "moire", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Band structure along the moire high-symmetry path.
    Bands(Args),
    /// Gaussian-smeared density of states.
    Dos(Args),
    /// Truncation and Taylor-order convergence sweeps.
    Converge(Args),
    /// Export the (m, n, tau) continuum model.
    Derive(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write SVG renderings of bands and densities of states.
    #[arg(long)]
    render: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Bands(a) => (Command::Bands, a),
        Cmd::Dos(a) => (Command::Dos, a),
        Cmd::Converge(a) => (Command::Converge, a),
        Cmd::Derive(a) => (Command::Derive, a),
    };
    let opts = Options { config: args.config, out: args.out, threads: args.threads, render: args.render };
    match run(command, &opts) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("moire {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
