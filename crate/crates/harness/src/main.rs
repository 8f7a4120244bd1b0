use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wdro_harness::{attack_eval, run_manifest, validate_manifest, OUTPUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "wdro", version, about = "Run Wasserstein-robust training experiments from a manifest")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train, checkpoint, attack and write every artifact of a manifest.
    Run { manifest: PathBuf },
    /// Check a manifest and print every problem found.
    Validate { manifest: PathBuf },
    /// Evaluate a checkpoint against the manifest's attack grid.
    AttackEval { checkpoint: PathBuf, manifest: PathBuf },
}

fn output_override() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { manifest } => match validate_manifest(&manifest) {
            Ok(diags) if diags.is_empty() => {
                println!("{}: ok", manifest.display());
                return ExitCode::SUCCESS;
            }
            Ok(diags) => {
                for d in &diags {
                    eprintln!("{}: {d}", manifest.display());
                }
                return ExitCode::FAILURE;
            }
            Err(e) => Err(anyhow::anyhow!("cannot read {}: {e}", manifest.display())),
        },
        Command::Run { manifest } => run_manifest(&manifest, output_override().as_deref()),
        Command::AttackEval { checkpoint, manifest } => attack_eval(&checkpoint, &manifest, output_override().as_deref()),
    };
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", outcome.output_dir.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
