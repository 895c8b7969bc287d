use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cvmdi_cli::{run, CliError, Command, Format, RunConfig};

#[derive(Parser)]
#[command(name = "cvmdi", version, about = "Post-selected CV-MDI QKD key rates")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one key; repeatable, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads (falls back to CVMDI_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Raw and post-selected rate at one parameter point.
    Rate,
    /// Optimized rate against total (or Bob-link) distance.
    Sweep,
    /// Maximum Bob-relay distance for each Alice-relay distance.
    Frontier,
    /// Quadrature against Monte Carlo at one parameter point.
    Oracle,
    /// Optimal (σ_A, μ) across a distance window, ideal and configured.
    Optparams,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Rate => Command::Rate,
            Cmd::Sweep => Command::Sweep,
            Cmd::Frontier => Command::Frontier,
            Cmd::Oracle => Command::Oracle,
            Cmd::Optparams => Command::Optparams,
        }
    }
}

fn threads(arg: Option<usize>) -> Result<Option<usize>, CliError> {
    if arg.is_some() {
        return Ok(arg);
    }
    match std::env::var("CVMDI_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("CVMDI_THREADS must be a positive integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

fn execute(args: &Args) -> Result<(), CliError> {
    if let Some(n) = threads(args.threads)? {
        if n == 0 {
            return Err(CliError::Usage("thread count must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        cfg.merge_text(&text)?;
    }
    for kv in &args.set {
        cfg.merge_override(kv)?;
    }
    let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let table = run(args.command.into(), &cfg, &timestamp)?;
    let text = match cfg.format {
        Format::Csv => table.to_csv()?,
        Format::Json => table.to_json(),
    };
    match &cfg.output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
