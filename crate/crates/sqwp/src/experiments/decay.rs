//! Wave-packet versus broadband decay (`decay-compare`) and the two r_M
//! fits (`fit-approach1`, `fit-approach2`).

use serde_json::json;
use sqwp_core::fitting::{
    bloch_objective, excitation_objective, fit_exponentials_with, hierarchy_dynamics, minimize_scalar, steady_state_r,
    window_nodes, BroadbandSetup, ExpFit, FitResult, SampledDynamics, R_BRACKET, R_TOL, WINDOW_NODES,
};
use sqwp_core::hierarchy::init_tensor;
use sqwp_core::spectra::linspace;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::setup::{Defaults, Regime};
use crate::{table, Artifacts};

/// Wave-packet squeezing of the comparison regime.
pub const R_WP: f64 = 0.5181;
/// Broadband squeezing matched by the Bloch transients (T = 4).
pub const R_M_BLOCH: f64 = 0.0957;
/// Broadband squeezing matched by the late excitation (T = 9).
pub const R_M_EXCITATION: f64 = 0.2141;

/// Single- against double-exponential residuals of one curve.
#[derive(Debug, Clone)]
pub struct TwoTimescale {
    /// Both models carry a free constant offset.
    pub single: ExpFit,
    pub double: ExpFit,
    /// `single.rss / double.rss`
    pub ratio: f64,
    /// The same comparison without offsets.
    pub single_pure: ExpFit,
    pub double_pure: ExpFit,
    pub ratio_pure: f64,
    /// Root-mean-square residual of `single` over the signal range.
    pub single_relative_rms: f64,
}

pub fn two_timescale(t: &[f64], y: &[f64]) -> Result<TwoTimescale, CliError> {
    let single = fit_exponentials_with(t, y, 1, true)?;
    let double = fit_exponentials_with(t, y, 2, true)?;
    let single_pure = fit_exponentials_with(t, y, 1, false)?;
    let double_pure = fit_exponentials_with(t, y, 2, false)?;
    let range = y.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)) - y.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let rms = (single.rss / y.len() as f64).sqrt();
    Ok(TwoTimescale {
        ratio: single.rss / double.rss,
        ratio_pure: single_pure.rss / double_pure.rss,
        single_relative_rms: if range > 0.0 { rms / range } else { rms },
        single,
        double,
        single_pure,
        double_pure,
    })
}

fn fit_json(f: &ExpFit) -> serde_json::Value {
    json!({ "rates": f.rates, "amplitudes": f.amplitudes, "offset": f.offset, "rss": f.rss })
}

fn timescale_json(t: &TwoTimescale) -> serde_json::Value {
    json!({
        "single": fit_json(&t.single),
        "double": fit_json(&t.double),
        "ratio": t.ratio,
        "single_pure": fit_json(&t.single_pure),
        "double_pure": fit_json(&t.double_pure),
        "ratio_pure": t.ratio_pure,
        "single_relative_rms": t.single_relative_rms,
    })
}

fn bloch_table(d: &SampledDynamics) -> String {
    let z: Vec<f64> = d.pe.iter().map(|p| 2.0 * p - 1.0).collect();
    table("t,x,y,z", &[&d.times, &d.x, &d.y, &z])
}

fn broadband_setup(reg: &Regime) -> BroadbandSetup {
    BroadbandSetup { slh: reg.slh.clone(), rho0: reg.rho0.clone(), phi: reg.sq.phi(), ..BroadbandSetup::section_v() }
}

/// Wave-packet, broadband and vacuum dynamics from the same initial state.
///
/// Writes `bloch.csv`, `excitation.csv` and `purity.csv` for the packet and
/// `*_markov.csv`, `*_vacuum.csv` for the two master equations.
pub fn decay_compare(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let reg = Regime::resolve(cfg, &Defaults::square(R_WP, 4.0))?;
    let n = &cfg.numerics;
    let h = n.h.unwrap_or(1e-3);
    let t_end = n.t_end.unwrap_or(reg.packet_end());
    let samples = n.samples.unwrap_or(401);
    if samples < 2 {
        return Err(CliError::Validation("numerics.samples must be at least 2".into()));
    }
    let r_m = cfg.physics.r_markov.unwrap_or(R_M_BLOCH);
    let times = linspace(0.0, t_end, samples);
    let hier = reg.hierarchy();
    let st0 = init_tensor(&reg.rho0, reg.n_max)?;
    let wp = hierarchy_dynamics(&hier, &reg.field, &st0, &times, h)?;
    let setup = broadband_setup(&reg);
    let markov = setup.dynamics(r_m, &times)?;
    let vacuum = setup.dynamics(0.0, &times)?;

    let nodes = window_nodes(0.0, t_end, n.fit_nodes.unwrap_or(WINDOW_NODES))?;
    let wp_nodes = hierarchy_dynamics(&hier, &reg.field, &st0, &nodes, h)?;
    let wp_fit = two_timescale(&nodes, &wp_nodes.pe)?;
    let m_fit = two_timescale(&nodes, &setup.dynamics(r_m, &nodes)?.pe)?;

    let mut files = Vec::new();
    for (suffix, d) in [("", &wp), ("_markov", &markov), ("_vacuum", &vacuum)] {
        files.push((format!("bloch{suffix}.csv"), bloch_table(d)));
        files.push((format!("excitation{suffix}.csv"), table("t,Pe", &[&d.times, &d.pe])));
        files.push((format!("purity{suffix}.csv"), table("t,purity", &[&d.times, &d.purity])));
    }
    let mut resolved = reg.describe();
    resolved["h"] = json!(h);
    resolved["t_end"] = json!(t_end);
    resolved["r_markov"] = json!(r_m);
    Ok(Artifacts {
        files,
        resolved,
        summary: json!({
            "two_timescale_wavepacket": timescale_json(&wp_fit),
            "two_timescale_markov": timescale_json(&m_fit),
            "final_pe": { "wavepacket": wp.pe.last(), "markov": markov.pe.last(), "vacuum": vacuum.pe.last() },
        }),
        warnings: reg.field.warning().map(String::from).into_iter().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Approach {
    /// Match `x(t)`, `y(t)` over the initial decay.
    Bloch,
    /// Match `P_e(t)` over the late quasi-steady window.
    Excitation,
}

impl Approach {
    fn duration(self) -> f64 {
        match self {
            Self::Bloch => 4.0,
            Self::Excitation => 9.0,
        }
    }

    fn window(self) -> [f64; 2] {
        match self {
            Self::Bloch => [0.0, 1.0],
            Self::Excitation => [5.0, 9.0],
        }
    }

    pub fn reference_value(self) -> f64 {
        match self {
            Self::Bloch => R_M_BLOCH,
            Self::Excitation => R_M_EXCITATION,
        }
    }
}

/// Outcome of one r_M optimization.
#[derive(Debug, Clone)]
pub struct ApproachFit {
    pub fit: FitResult,
    /// Same search with twice the window nodes.
    pub fit_doubled: FitResult,
    pub wavepacket: SampledDynamics,
    pub markov: SampledDynamics,
    pub n_max: usize,
}

pub fn approach_fit(cfg: &ExperimentConfig, approach: Approach) -> Result<(ApproachFit, Regime), CliError> {
    let reg = Regime::resolve(cfg, &Defaults::square(R_WP, approach.duration()))?;
    let n = &cfg.numerics;
    let h = n.h.unwrap_or(1e-3);
    let [lo, hi] = n.fit_window.unwrap_or(approach.window());
    let nodes = n.fit_nodes.unwrap_or(WINDOW_NODES);
    let tol = n.fit_tol.unwrap_or(R_TOL);
    let hier = reg.hierarchy();
    let st0 = init_tensor(&reg.rho0, reg.n_max)?;
    let setup = broadband_setup(&reg);
    let search = |k: usize| -> Result<(FitResult, SampledDynamics), CliError> {
        let wp = hierarchy_dynamics(&hier, &reg.field, &st0, &window_nodes(lo, hi, k)?, h)?;
        let fit = match approach {
            Approach::Bloch => minimize_scalar(|r| bloch_objective(r, &wp, &setup), R_BRACKET, tol)?,
            Approach::Excitation => minimize_scalar(|r| excitation_objective(r, &wp, &setup), R_BRACKET, tol)?,
        };
        Ok((fit, wp))
    };
    let (fit, wavepacket) = search(nodes)?;
    let (fit_doubled, _) = search(2 * nodes)?;
    let markov = setup.dynamics(fit.r_m, &wavepacket.times)?;
    Ok((ApproachFit { fit, fit_doubled, wavepacket, markov, n_max: reg.n_max }, reg))
}

/// Golden-section fit of r_M. Writes `objective.csv` (a coarse scan of the
/// objective), `fit.csv` and `curves.csv`.
pub fn fit_approach(cfg: &ExperimentConfig, approach: Approach) -> Result<Artifacts, CliError> {
    let (af, reg) = approach_fit(cfg, approach)?;
    let setup = broadband_setup(&reg);
    let scan: Vec<f64> = linspace(R_BRACKET.0, R_BRACKET.1, 61);
    let objective = |r: f64| match approach {
        Approach::Bloch => bloch_objective(r, &af.wavepacket, &setup),
        Approach::Excitation => excitation_objective(r, &af.wavepacket, &setup),
    };
    let values = scan.iter().map(|&r| objective(r)).collect::<Result<Vec<_>, _>>()?;
    let f = &af.fit;
    let fit_csv = format!(
        "r_m,objective_value,n_evals,at_boundary\n{},{},{},{}\n",
        f.r_m, f.objective_value, f.n_evals, f.at_boundary
    );
    let (wp, m) = (&af.wavepacket, &af.markov);
    let curves = table(
        "t,x_wp,y_wp,Pe_wp,x_m,y_m,Pe_m",
        &[&wp.times, &wp.x, &wp.y, &wp.pe, &m.x, &m.y, &m.pe],
    );
    let mean_pe = wp.pe.iter().sum::<f64>() / wp.pe.len() as f64;
    let reference = approach.reference_value();
    let mut summary = json!({
        "r_m": f.r_m,
        "objective_value": f.objective_value,
        "n_evals": f.n_evals,
        "bracket": [f.bracket.0, f.bracket.1],
        "at_boundary": f.at_boundary,
        "r_m_doubled_nodes": af.fit_doubled.r_m,
        "reference_r_m": reference,
        "relative_deviation": (f.r_m - reference) / reference,
        "n_max": af.n_max,
    });
    if approach == Approach::Excitation {
        summary["steady_state_shortcut_r"] = json!(steady_state_r(mean_pe)?);
    }
    let mut resolved = reg.describe();
    resolved["fit_window"] = json!([wp.times[0], wp.times[wp.times.len() - 1]]);
    resolved["fit_nodes"] = json!(wp.times.len());
    resolved["h"] = json!(cfg.numerics.h.unwrap_or(1e-3));
    Ok(Artifacts {
        files: vec![
            ("objective.csv".into(), table("r_m,objective", &[&scan, &values])),
            ("fit.csv".into(), fit_csv),
            ("curves.csv".into(), curves),
        ],
        resolved,
        summary,
        warnings: reg.field.warning().map(String::from).into_iter().collect(),
    })
}
