use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use resonance_cli::{parse_config, run, Kind};

#[derive(Parser, Debug)]
#[command(name = "resonance", version, about = "Stochastic resonance experiments")]
struct Cli {
    /// Experiment kind; may instead be given as `kind` in the config.
    #[arg(value_parser = parse_kind)]
    subcommand: Option<Kind>,
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Fail with status 3 when any sweep cell fails.
    #[arg(long)]
    strict: bool,
}

fn parse_kind(s: &str) -> Result<Kind, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    let mut config = match parse_config(&text, cli.subcommand) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    if cli.strict {
        config.set_strict();
    }
    let Some(out) = cli.out.or_else(|| config.output.clone()) else {
        eprintln!("error: no output directory (use --out or `output`)");
        return ExitCode::from(2);
    };
    match run(&config, &out) {
        Ok(()) => {
            println!("{} finished; results in {}", config.kind, out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
