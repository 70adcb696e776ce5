use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sqwp::{output_dir, run, Experiment, ExperimentConfig};

/// Squeezed wave-packet experiments.
#[derive(Debug, Parser)]
#[command(name = "sqwp", version)]
struct Cli {
    experiment: Experiment,
    /// TOML config, or a previous run's manifest.json.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: out/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let mut cfg = match ExperimentConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("sqwp: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if cli.seed.is_some() {
        cfg.numerics.seed = cli.seed;
    }
    let out = output_dir(cli.experiment, &cfg, cli.out);
    match run(cli.experiment, &cfg, &out) {
        Ok(manifest) => {
            println!("{}: wrote {} ({:.2} s)", cli.experiment, out.display(), manifest["wall_time_s"].as_f64().unwrap_or(0.0));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sqwp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
