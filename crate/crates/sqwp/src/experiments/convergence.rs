//! Two convergence studies: short packets approaching the broadband master
//! equation, and the vacuum written in the squeezed basis as n_max grows.

use serde_json::json;
use sqwp_core::csv_number;
use sqwp_core::integrator::{vacuum_in_squeezed_basis_diff, TimeGrid, VacuumDiff};
use sqwp_core::markovian::{short_packet_convergence, ConvergenceRow};

use crate::config::{ExperimentConfig, FieldChoice, HierarchyChoice, InitialState, Packet};
use crate::error::CliError;
use crate::setup::{Defaults, Regime};
use crate::{table, Artifacts};

/// `(r, T)` pairs of the vacuum-difference study: a weak short packet and
/// a strong long one.
pub fn vacuum_regimes() -> [(f64, f64); 2] {
    [(0.1, 1.0), (2f64.ln(), 4.0)]
}

pub fn broadband_rows(cfg: &ExperimentConfig) -> Result<(Vec<ConvergenceRow>, Regime), CliError> {
    let d = Defaults {
        r: 0.5181,
        phi: 0.0,
        omega: 0.0,
        detuning: 0.0,
        packet: Packet::Square { duration: 1.0 },
        hierarchy: HierarchyChoice::Squeezed,
        n_max: Some(4),
        initial: InitialState::Bloch([0.3, 0.2, -0.5]),
        field: FieldChoice::SqueezedVacuum,
    };
    let reg = Regime::resolve(cfg, &d)?;
    let dts = cfg.numerics.dt_list.clone().unwrap_or_else(|| vec![1e-1, 1e-2, 1e-3]);
    let steps = cfg.numerics.steps.unwrap_or(50);
    let rows = short_packet_convergence(&reg.sq, &dts, &reg.slh, &reg.rho0, reg.n_max, steps)?;
    Ok((rows, reg))
}

pub fn vacuum_diffs(cfg: &ExperimentConfig) -> Result<Vec<(f64, f64, usize, VacuumDiff)>, CliError> {
    let h = cfg.numerics.h.unwrap_or(1e-3);
    let n_list = cfg.numerics.n_max_list.clone().unwrap_or_else(|| (1..=7).collect());
    let mut out = Vec::new();
    for (r, t) in vacuum_regimes() {
        let grid = TimeGrid::with_max_step(0.0, t, h)?;
        for &n in &n_list {
            out.push((r, t, n, vacuum_in_squeezed_basis_diff(r, t, n, &grid)?));
        }
    }
    Ok(out)
}

/// Writes `broadband_convergence.csv` (`dt,deviation`) and
/// `vacuum_diffs.csv` (`r,T,n_max,sup_error`).
pub fn convergence(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let (rows, reg) = broadband_rows(cfg)?;
    let dt: Vec<f64> = rows.iter().map(|r| r.dt).collect();
    let dev: Vec<f64> = rows.iter().map(|r| r.deviation).collect();
    let diffs = vacuum_diffs(cfg)?;
    let mut vac = String::from("r,T,n_max,sup_error\n");
    let mut warnings = Vec::new();
    for (r, t, n, d) in &diffs {
        vac.push_str(&format!("{r},{t},{n},{}\n", csv_number(d.sup)));
        if let Some(w) = &d.warning {
            warnings.push(format!("r = {r}, T = {t}: {w}"));
        }
    }
    let monotone = dev.windows(2).all(|w| w[1] < w[0]);
    let mut resolved = reg.describe();
    resolved["dt_list"] = json!(dt);
    resolved["steps_per_packet"] = json!(cfg.numerics.steps.unwrap_or(50));
    resolved["vacuum_regimes"] = json!(vacuum_regimes());
    resolved["h"] = json!(cfg.numerics.h.unwrap_or(1e-3));
    Ok(Artifacts {
        files: vec![
            ("broadband_convergence.csv".into(), table("dt,deviation", &[&dt, &dev])),
            ("vacuum_diffs.csv".into(), vac),
        ],
        resolved,
        summary: json!({
            "broadband_deviation": dev,
            "broadband_monotone": monotone,
            "vacuum_sup_errors": diffs.iter().map(|(r, t, n, d)| json!({"r": r, "T": t, "n_max": n, "sup": d.sup})).collect::<Vec<_>>(),
        }),
        warnings,
    })
}
