use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use spin_echo_cli::config::{assemble, RunConfig};
use spin_echo_cli::run::execute;
use spin_echo_cli::CliError;

/// Loschmidt-echo dynamics for spin-1/2 rings.
#[derive(Parser, Debug)]
#[command(name = "spin-echo", version)]
struct Args {
    /// INI configuration file; a manifest from an earlier run also works.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset: fig3, fig4, identities or appendix.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory, overriding [output] dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed for random phases and sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Report every configuration problem and exit without running.
    #[arg(long)]
    validate_only: bool,
}

fn load(args: &Args) -> Result<RunConfig, CliError> {
    let text = match &args.config {
        Some(p) => Some(
            std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let mut overrides = Vec::new();
    if let Some(dir) = &args.out {
        overrides.push(("output", "dir", dir.display().to_string()));
    }
    if let Some(seed) = args.seed {
        overrides.push(("estimators", "seed", seed.to_string()));
    }
    let (settings, mut diags) = assemble(args.preset.as_deref(), text.as_deref(), &overrides);
    let (cfg, more) = RunConfig::from_settings(settings);
    diags.extend(more);
    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Invalid(diags))
    }
}

fn main_inner(args: &Args) -> Result<(), CliError> {
    if let Some(k) = args.threads {
        if k == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let cfg = load(args)?;
    if args.validate_only {
        println!("configuration valid: task {}", cfg.task);
        return Ok(());
    }
    let outcome = execute(&cfg)?;
    for p in &outcome.outputs {
        println!("wrote {}", p.display());
    }
    println!("wrote {}", outcome.manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match main_inner(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
