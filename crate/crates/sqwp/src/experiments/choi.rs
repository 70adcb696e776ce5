//! Complete-positivity check of the Fock and squeezed hierarchy channels.

use rayon::prelude::*;
use serde_json::json;
use sqwp_core::csv_number;
use sqwp_core::hierarchy::{FieldState, Hierarchy};
use sqwp_core::integrator::{channel_from_probes, channel_probe, HierarchyChannel, TimeGrid};

use crate::config::{ExperimentConfig, FieldChoice, HierarchyChoice, InitialState, Packet};
use crate::error::CliError;
use crate::setup::{Defaults, Regime};
use crate::Artifacts;

/// Channel of one hierarchy, probed on all matrix units in parallel.
pub fn channel(hier: &Hierarchy, field: &FieldState, grid: &TimeGrid) -> Result<HierarchyChannel, CliError> {
    let d = hier.sys_dim();
    let probes = (0..d * d)
        .into_par_iter()
        .map(|k| channel_probe(hier, field, grid, k / d, k % d))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(channel_from_probes(d, probes)?)
}

/// Both channels at the configured regime: `(fock, squeezed, regime)`.
pub fn channels(cfg: &ExperimentConfig) -> Result<(HierarchyChannel, HierarchyChannel, Regime), CliError> {
    let d = Defaults {
        r: 2f64.ln(),
        phi: 0.0,
        omega: 0.0,
        detuning: 0.0,
        packet: Packet::Square { duration: 1.0 },
        hierarchy: HierarchyChoice::Squeezed,
        n_max: Some(9),
        initial: InitialState::Ground,
        field: FieldChoice::SqueezedVacuum,
    };
    let mut fock_cfg = cfg.clone();
    fock_cfg.physics.hierarchy = Some(HierarchyChoice::Fock);
    let mut sq_cfg = cfg.clone();
    sq_cfg.physics.hierarchy = Some(HierarchyChoice::Squeezed);
    let fock = Regime::resolve(&fock_cfg, &d)?;
    let sq = Regime::resolve(&sq_cfg, &d)?;
    let (t0, t1) = sq.packet.support();
    let grid = TimeGrid::new(t0, t1, cfg.numerics.steps.unwrap_or(2000))?;
    let f = channel(&fock.hierarchy(), &fock.field, &grid)?;
    let s = channel(&sq.hierarchy(), &sq.field, &grid)?;
    Ok((f, s, sq))
}

fn eig_csv(ev: &[f64]) -> String {
    let mut s = String::from("rank,eigenvalue\n");
    for (i, v) in ev.iter().enumerate() {
        s.push_str(&format!("{i},{}\n", csv_number(*v)));
    }
    s
}

/// Choi spectra over one packet. `eigvals_{fock,squeezed}.csv` hold the
/// system-to-system-plus-hierarchy map; the `_reduced` files hold the
/// system-to-system map.
pub fn choi(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let (f, s, reg) = channels(cfg)?;
    let mut resolved = reg.describe();
    resolved.as_object_mut().map(|o| o.remove("hierarchy"));
    resolved["steps"] = json!(cfg.numerics.steps.unwrap_or(2000));
    Ok(Artifacts {
        files: vec![
            ("eigvals_fock.csv".into(), eig_csv(&f.extended.eigenvalues)),
            ("eigvals_squeezed.csv".into(), eig_csv(&s.extended.eigenvalues)),
            ("eigvals_fock_reduced.csv".into(), eig_csv(&f.reduced.eigenvalues)),
            ("eigvals_squeezed_reduced.csv".into(), eig_csv(&s.reduced.eigenvalues)),
        ],
        resolved,
        summary: json!({
            "min_eigenvalue_fock": f.extended.eigenvalues[0],
            "min_eigenvalue_squeezed": s.extended.eigenvalues[0],
            "min_eigenvalue_fock_reduced": f.reduced.eigenvalues[0],
            "min_eigenvalue_squeezed_reduced": s.reduced.eigenvalues[0],
        }),
        warnings: [reg.field.warning()].into_iter().flatten().map(String::from).collect(),
    })
}
