//! TOML run configuration. Every field is optional; each experiment fills
//! in the regime it reproduces. All rates and times are in units of Γ.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    DecayCompare,
    FitApproach1,
    FitApproach2,
    Mollow,
    SpectraSweep,
    Convergence,
    Choi,
    Trajectories,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::DecayCompare => "decay-compare",
            Self::FitApproach1 => "fit-approach1",
            Self::FitApproach2 => "fit-approach2",
            Self::Mollow => "mollow",
            Self::SpectraSweep => "spectra-sweep",
            Self::Convergence => "convergence",
            Self::Choi => "choi",
            Self::Trajectories => "trajectories",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub output: Output,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    /// Coupling rate in `L = √γ σ−`.
    pub gamma: Option<f64>,
    /// Classical drive, `H = (Ω/2) σx`.
    pub omega: Option<f64>,
    /// Squeezing, given as exactly one of `r`, `e_r` or `db`.
    pub r: Option<f64>,
    pub e_r: Option<f64>,
    pub db: Option<f64>,
    pub phi: Option<f64>,
    /// Carrier detuning Δc, `ξ_t → e^{−iΔc t} ξ_t`.
    pub detuning: Option<f64>,
    pub packet: Option<Packet>,
    pub n_max: Option<usize>,
    pub hierarchy: Option<HierarchyChoice>,
    pub field: Option<FieldChoice>,
    /// `false` sets `L = 0`.
    pub coupled: Option<bool>,
    pub initial_state: Option<InitialState>,
    /// Broadband squeezing compared against in `decay-compare`.
    pub r_markov: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Packet {
    Square { duration: f64 },
    Gaussian { center: f64, sigma: f64 },
    /// Whitespace-separated `time re im` lines, renormalized on load.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HierarchyChoice {
    Squeezed,
    Fock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldChoice {
    /// Squeezed vacuum with the physics block's squeezing.
    SqueezedVacuum,
    /// Unsqueezed vacuum.
    Vacuum,
    /// `|n⟩⟨n|` in the hierarchy's basis.
    Number { n: usize },
    /// Explicit coefficients `[m, n, re, im]`; the Hermitian partner of an
    /// off-diagonal entry must be listed too.
    Coefficients { entries: Vec<[f64; 4]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    Ground,
    Excited,
    /// `(I + σx/√2 + σy/√2)/2`
    SectionV,
    /// Steady state of the driven atom in vacuum.
    SteadyState,
    Bloch([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowChoice {
    Rect,
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnravelingChoice {
    Counting,
    Homodyne,
    Heterodyne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseChoice {
    Binary,
    Gaussian,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Integrator step.
    pub h: Option<f64>,
    pub t_end: Option<f64>,
    /// Number of output samples for time series.
    pub samples: Option<usize>,
    pub tau_max: Option<f64>,
    pub tau_step: Option<f64>,
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub omega_points: Option<usize>,
    pub window: Option<WindowChoice>,
    pub subtract_coherent: Option<bool>,
    pub reference_times: Option<Vec<f64>>,
    /// Half-width of the central-peak region fitted with Lorentzians.
    pub central_window: Option<f64>,
    /// Fit window `[t_i, t_f]` for the r_M objectives.
    pub fit_window: Option<[f64; 2]>,
    pub fit_nodes: Option<usize>,
    pub fit_tol: Option<f64>,
    pub dt_list: Option<Vec<f64>>,
    pub n_max_list: Option<Vec<usize>>,
    pub steps: Option<usize>,
    pub n_traj: Option<usize>,
    pub seed: Option<u64>,
    pub unraveling: Option<UnravelingChoice>,
    pub lo_phase: Option<f64>,
    pub noise: Option<NoiseChoice>,
    pub chi2_bins: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Reads a TOML config, or the `config` table of a run manifest when
    /// the file ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            let inner = v.get("config").cloned().unwrap_or(v);
            serde_json::from_value(inner).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        } else {
            Self::from_toml(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        };
        // relative packet paths are resolved against the config file
        if let Some(Packet::File { path: p }) = &mut cfg.physics.packet {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Checks that do not depend on the experiment's defaults.
    pub fn validate(&self, experiment: Experiment) -> Result<(), CliError> {
        if let Some(e) = self.experiment {
            if e != experiment {
                return Err(CliError::Validation(format!("config is for `{e}` but `{experiment}` was requested")));
            }
        }
        let p = &self.physics;
        let given = [p.r, p.e_r, p.db].iter().filter(|x| x.is_some()).count();
        if given > 1 {
            return Err(CliError::Validation("give at most one of physics.r, physics.e_r, physics.db".into()));
        }
        positive("physics.gamma", p.gamma)?;
        nonnegative("physics.r", p.r)?;
        nonnegative("physics.db", p.db)?;
        nonnegative("physics.r_markov", p.r_markov)?;
        if let Some(er) = p.e_r {
            if !(er >= 1.0) {
                return Err(CliError::Validation("physics.e_r must be at least 1".into()));
            }
        }
        for (name, v) in [("physics.omega", p.omega), ("physics.phi", p.phi), ("physics.detuning", p.detuning)] {
            if v.is_some_and(|x| !x.is_finite()) {
                return Err(CliError::Validation(format!("{name} must be finite")));
            }
        }
        match &p.packet {
            Some(Packet::Square { duration }) => positive("physics.packet.duration", Some(*duration))?,
            Some(Packet::Gaussian { sigma, center }) => {
                positive("physics.packet.sigma", Some(*sigma))?;
                if !center.is_finite() {
                    return Err(CliError::Validation("physics.packet.center must be finite".into()));
                }
            }
            _ => {}
        }
        if let Some(InitialState::Bloch(v)) = &p.initial_state {
            if v.iter().map(|x| x * x).sum::<f64>() > 1.0 + 1e-12 {
                return Err(CliError::Validation("initial Bloch vector lies outside the unit ball".into()));
            }
        }
        let n = &self.numerics;
        positive("numerics.h", n.h)?;
        positive("numerics.t_end", n.t_end)?;
        positive("numerics.tau_max", n.tau_max)?;
        positive("numerics.tau_step", n.tau_step)?;
        positive("numerics.central_window", n.central_window)?;
        positive("numerics.fit_tol", n.fit_tol)?;
        if let (Some(lo), Some(hi)) = (n.omega_min, n.omega_max) {
            if !(hi > lo) {
                return Err(CliError::Validation("numerics.omega_max must exceed omega_min".into()));
            }
        }
        if n.omega_points.is_some_and(|k| k < 2) {
            return Err(CliError::Validation("numerics.omega_points must be at least 2".into()));
        }
        if let Some([lo, hi]) = n.fit_window {
            if !(lo >= 0.0 && hi > lo) {
                return Err(CliError::Validation("numerics.fit_window must satisfy 0 ≤ t_i < t_f".into()));
            }
        }
        if n.n_traj == Some(0) {
            return Err(CliError::Validation("numerics.n_traj must be at least 1".into()));
        }
        if let Some(ts) = &n.reference_times {
            if ts.is_empty() || ts.iter().any(|t| !(*t >= 0.0)) || ts.windows(2).any(|w| w[1] < w[0]) {
                return Err(CliError::Validation("numerics.reference_times must be nonnegative and sorted".into()));
            }
        }
        if let Some(dts) = &n.dt_list {
            if dts.is_empty() || dts.iter().any(|d| !(*d > 0.0)) {
                return Err(CliError::Validation("numerics.dt_list must hold positive widths".into()));
            }
        }
        Ok(())
    }
}

fn positive(name: &str, v: Option<f64>) -> Result<(), CliError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::Validation(format!("{name} must be positive"))),
        _ => Ok(()),
    }
}

fn nonnegative(name: &str, v: Option<f64>) -> Result<(), CliError> {
    match v {
        Some(x) if !(x >= 0.0 && x.is_finite()) => Err(CliError::Validation(format!("{name} must be nonnegative"))),
        _ => Ok(()),
    }
}
