use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use count_dpm::io::{self, Mode, RunConfig};
use count_dpm::Result;

/// Bayesian density regression for counts.
#[derive(Parser, Debug)]
#[command(name = "count-dpm", version)]
struct Cli {
    /// fit | predict | benchmark | simulate (overrides the config file)
    #[arg(long)]
    mode: Option<Mode>,

    /// Input CSV with a header row
    #[arg(long)]
    data: Option<PathBuf>,

    /// TOML configuration, or a manifest.json from an earlier run
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build(cli: Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(mode) = cli.mode {
        cfg.mode = mode;
    }
    if let Some(data) = cli.data {
        cfg.data = Some(data);
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match build(cli).and_then(|cfg| io::run(&cfg)) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
