use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hkbary::experiment::{exit_code, run, Command, ExperimentConfig, Overrides};

/// Hellinger-Kantorovich barycenters of Dirac measures.
#[derive(Parser)]
#[command(name = "hkbary", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve independently at every configured length scale.
    Solve(Common),
    /// Sweep the length scales (warm or cold, per the config).
    Sweep(Common),
    /// Certify the config's `nu` against its input measure.
    Certify(Common),
    /// Solve the fixed-grid reference problem.
    Oracle(Common),
    /// Write the input atoms to samples.csv.
    Sample(Common),
    /// Single-linkage dendrogram of the input atoms.
    Dendrogram(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// fscan.csv keeps rows with F >= 1 - scale/kappa.
    #[arg(long)]
    f_threshold_scale: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::Certify(a) => (Command::Certify, a),
        Cmd::Oracle(a) => (Command::Oracle, a),
        Cmd::Sample(a) => (Command::Sample, a),
        Cmd::Dendrogram(a) => (Command::Dendrogram, a),
    };
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        f_threshold_scale: args.f_threshold_scale,
    };
    let result = ExperimentConfig::load(&args.config).and_then(|mut cfg| {
        overrides.apply(&mut cfg)?;
        run(command, &cfg)
    });
    match &result {
        Ok(outcome) => {
            for path in &outcome.written {
                println!("wrote {}", path.display());
            }
            for (kappa, msg) in &outcome.failures {
                eprintln!("kappa {kappa}: {msg}");
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
