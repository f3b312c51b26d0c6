use clap::{Parser, Subcommand};
use ctalab::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ctalab", version, about = "Run ctalab experiments from a JSON config")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for independent tasks.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Overrides the seed recorded in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parse and validate the config, then exit without running anything.
    #[arg(long, global = true)]
    validate_only: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Every task in the config.
    Run,
    /// Trace geodesics (geodesic.csv).
    Geodesic,
    /// Jacobi eps-families and their invariants (jacobi.csv).
    Jacobi,
    /// J1 / J2 transforms along an eps ladder (transform.csv).
    Transform,
    /// Point or moment-route inversions of a registered field (invert.json).
    Invert,
    /// Semilinear Dirichlet solves (solve.csv).
    Solve,
    /// DN maps (dn.csv).
    Dn,
    /// Quasimode and CGO decay rates (rates.csv).
    CgoRates,
    /// Recover V_m from moments (recovered.csv).
    Recover,
}

impl Command {
    fn kind(self) -> Option<&'static str> {
        Some(match self {
            Command::Run => return None,
            Command::Geodesic => "geodesic",
            Command::Jacobi => "jacobi",
            Command::Transform => "transform",
            Command::Invert => "invert",
            Command::Solve => "solve",
            Command::Dn => "dn",
            Command::CgoRates => "cgo-rates",
            Command::Recover => "recover",
        })
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::ConfigInvalid { .. } => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = cli.config else {
        eprintln!("error: --config <json> is required");
        return ExitCode::from(2);
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    if cli.validate_only {
        return match ctalab_cli::validate_only(&text, cli.seed) {
            Ok(cfg) => {
                let n = cfg.tasks.iter().filter(|t| cli.command.kind().is_none_or(|k| t.kind() == k)).count();
                println!("config ok: {n} task(s) selected of {}", cfg.tasks.len());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        };
    }
    match ctalab_cli::run(&text, cli.command.kind(), &cli.out, cli.threads, cli.seed) {
        Ok(m) => {
            for t in &m.tasks {
                match &t.error {
                    None => println!("{:<10} {:<24} ok ({} file(s))", t.kind, t.name, t.files.len()),
                    Some(e) => println!("{:<10} {:<24} FAILED: {e}", t.kind, t.name),
                }
            }
            println!("manifest: {}", cli.out.join("manifest.json").display());
            if m.failed() > 0 {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => fail(&e),
    }
}
