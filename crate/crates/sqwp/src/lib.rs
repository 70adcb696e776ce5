//! Named experiments on top of `sqwp-core`, with TOML configs and CSV/JSON
//! artifacts.

pub mod config;
pub mod error;
pub mod experiments;
pub mod setup;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use sqwp_core::csv_number;

pub use config::{Experiment, ExperimentConfig};
pub use error::CliError;

/// Seed used when neither the config nor the command line gives one.
pub const DEFAULT_SEED: u64 = 1;

/// In-memory result of an experiment.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    /// `(file name, contents)` in write order.
    pub files: Vec<(String, String)>,
    /// Parameters actually used after defaults were applied.
    pub resolved: Value,
    /// Headline numbers.
    pub summary: Value,
    pub warnings: Vec<String>,
}

impl Artifacts {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }
}

/// Runs `experiment` without touching the filesystem (packet files aside).
pub fn execute(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    cfg.validate(experiment)?;
    match experiment {
        Experiment::DecayCompare => experiments::decay::decay_compare(cfg),
        Experiment::FitApproach1 => experiments::decay::fit_approach(cfg, experiments::decay::Approach::Bloch),
        Experiment::FitApproach2 => experiments::decay::fit_approach(cfg, experiments::decay::Approach::Excitation),
        Experiment::Mollow => experiments::spectra::mollow(cfg),
        Experiment::SpectraSweep => experiments::spectra::sweep(cfg),
        Experiment::Convergence => experiments::convergence::convergence(cfg),
        Experiment::Choi => experiments::choi::choi(cfg),
        Experiment::Trajectories => experiments::trajectories::trajectories(cfg),
    }
}

/// Runs `experiment` and writes its files plus `manifest.json` into `out`.
pub fn run(experiment: Experiment, cfg: &ExperimentConfig, out: &Path) -> Result<Value, CliError> {
    let start = Instant::now();
    let artifacts = execute(experiment, cfg)?;
    let wall = start.elapsed().as_secs_f64();
    std::fs::create_dir_all(out)?;
    for (name, contents) in &artifacts.files {
        std::fs::write(out.join(name), contents)?;
    }
    let mut config = cfg.clone();
    config.experiment = Some(experiment);
    let manifest = json!({
        "experiment": experiment.as_str(),
        "code_version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.numerics.seed.unwrap_or(DEFAULT_SEED),
        "wall_time_s": wall,
        "config": config,
        "resolved": artifacts.resolved,
        "files": artifacts.files.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>(),
        "summary": artifacts.summary,
        "warnings": artifacts.warnings,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(out.join("manifest.json"), text + "\n")?;
    Ok(manifest)
}

/// `out` from the command line, else the config, else `out/<experiment>`.
pub fn output_dir(experiment: Experiment, cfg: &ExperimentConfig, cli: Option<PathBuf>) -> PathBuf {
    cli.or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| Path::new("out").join(experiment.as_str()))
}

/// CSV with a header line and equally long numeric columns.
pub fn table(header: &str, cols: &[&[f64]]) -> String {
    let mut s = String::from(header);
    s.push('\n');
    let n = cols.first().map_or(0, |c| c.len());
    for i in 0..n {
        for (j, c) in cols.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            s.push_str(&csv_number(c[i]));
        }
        s.push('\n');
    }
    s
}
