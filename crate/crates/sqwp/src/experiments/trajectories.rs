//! Conditional trajectories under counting, homodyne or heterodyne
//! detection, compared against the unconditional hierarchy.

use rayon::prelude::*;
use serde_json::json;
use sqwp_core::hierarchy::{init_tensor, reduce_state};
use sqwp_core::integrator::{propagate_hierarchy, TimeGrid};
use sqwp_core::operator::two_level_basis;
use sqwp_core::squeezing::nmax_for_tolerance;
use sqwp_core::trajectories::{
    jump_probability, pooled_martingale_chi2, run_trajectory, ConditionalTensor, EnsembleSummary, HomodyneNoise, MeasurementRecord, Trajectory,
    TrajectoryConfig, Unraveling,
};
use sqwp_core::csv_number;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::config::{ExperimentConfig, FieldChoice, HierarchyChoice, InitialState, NoiseChoice, Packet, UnravelingChoice};
use crate::error::CliError;
use crate::setup::{fock_nmax_for_tolerance, squeezing, Defaults, Regime};
use crate::{table, Artifacts, DEFAULT_SEED};

/// Per-bin click statistics of a counting ensemble.
#[derive(Debug, Clone, Default)]
pub struct ClickRate {
    pub t_lo: Vec<f64>,
    pub t_hi: Vec<f64>,
    pub rate: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Unconditional click rate averaged over the bin.
    pub expected: Vec<f64>,
    pub mean_count: f64,
    pub mean_count_stderr: f64,
    pub expected_count: f64,
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub summary: EnsembleSummary,
    pub unconditional_pe: Vec<f64>,
    /// Largest `|P̄_e − P_e| / stderr` over the grid.
    pub max_z: f64,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub clicks: Option<ClickRate>,
    pub first_record: Option<MeasurementRecord>,
    pub regime: Regime,
    pub grid: TimeGrid,
    pub seed: u64,
}

/// Truncation tolerance for conditional states in the squeezed basis.
/// Jumps move weight between levels there, so the unconditional 1e-4 is
/// too loose. The Fock hierarchy is closed under truncation and keeps 1e-4.
pub const CONDITIONAL_TOLERANCE: f64 = 1e-8;

/// Defaults to the Fock hierarchy: conditional states in the squeezed basis
/// pick up negative jump probabilities from the hard-zero truncation.
fn regime(cfg: &ExperimentConfig) -> Result<Regime, CliError> {
    let sq = squeezing(cfg, 0.5181, 0.0)?;
    let kind = cfg.physics.hierarchy.unwrap_or(HierarchyChoice::Fock);
    let n_max = match kind {
        HierarchyChoice::Squeezed => nmax_for_tolerance(CONDITIONAL_TOLERANCE, sq.r())?,
        HierarchyChoice::Fock => fock_nmax_for_tolerance(1e-4, sq.r()),
    };
    let d = Defaults {
        r: 0.5181,
        phi: 0.0,
        omega: 0.0,
        detuning: 0.0,
        packet: Packet::Square { duration: 2.0 },
        hierarchy: kind,
        n_max: Some(n_max),
        initial: InitialState::Excited,
        field: FieldChoice::SqueezedVacuum,
    };
    Regime::resolve(cfg, &d)
}

/// Unraveling chosen by the config.
pub fn unraveling(cfg: &ExperimentConfig) -> (Unraveling, HomodyneNoise) {
    let n = &cfg.numerics;
    let u = match n.unraveling.unwrap_or(UnravelingChoice::Counting) {
        UnravelingChoice::Counting => Unraveling::Counting,
        UnravelingChoice::Homodyne => Unraveling::Homodyne { lo_phase: n.lo_phase.unwrap_or(0.0) },
        UnravelingChoice::Heterodyne => Unraveling::Heterodyne,
    };
    let noise = match n.noise.unwrap_or(NoiseChoice::Binary) {
        NoiseChoice::Binary => HomodyneNoise::Binary,
        NoiseChoice::Gaussian => HomodyneNoise::Gaussian,
    };
    (u, noise)
}

fn click_rate(
    results: &[(u64, Result<Trajectory, sqwp_core::Error>)],
    grid: &TimeGrid,
    flux: &[f64],
    bins: usize,
) -> ClickRate {
    let ok: Vec<&Trajectory> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    let steps = grid.steps();
    let per = (steps / bins).max(1);
    let mut out = ClickRate::default();
    let counts: Vec<Vec<u32>> = ok.iter().map(|t| t.record.counts()).collect();
    let mut start = 0;
    while start < steps {
        let end = (start + per).min(steps);
        let width = grid.node(end) - grid.node(start);
        let in_bin: Vec<f64> = counts
            .iter()
            .map(|c| f64::from(c[end - 1] - if start == 0 { 0 } else { c[start - 1] }))
            .collect();
        let (m, se) = mean_stderr(&in_bin);
        out.t_lo.push(grid.node(start));
        out.t_hi.push(grid.node(end));
        out.rate.push(m / width);
        out.stderr.push(se / width);
        out.expected.push(flux[start..end].iter().sum::<f64>() / (end - start) as f64);
        start = end;
    }
    let totals: Vec<f64> = counts.iter().map(|c| f64::from(*c.last().unwrap_or(&0))).collect();
    let (m, se) = mean_stderr(&totals);
    out.mean_count = m;
    out.mean_count_stderr = se;
    out.expected_count = flux[..steps].iter().sum::<f64>() * grid.h();
    out
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Runs the ensemble in parallel; results are gathered in stream order so
/// the output does not depend on the thread count.
pub fn ensemble(cfg: &ExperimentConfig) -> Result<EnsembleRun, CliError> {
    let reg = regime(cfg)?;
    let n = &cfg.numerics;
    let h = n.h.unwrap_or(1e-2);
    let t_end = n.t_end.unwrap_or(reg.packet_end());
    let grid = TimeGrid::with_max_step(0.0, t_end, h)?;
    let (unr, noise) = unraveling(cfg);
    let n_traj = n.n_traj.unwrap_or(2000);
    let seed = n.seed.unwrap_or(DEFAULT_SEED);
    let bins = n.chi2_bins.unwrap_or(20);
    if bins == 0 || bins > grid.steps() {
        return Err(CliError::Validation("numerics.chi2_bins must lie in 1..=steps".into()));
    }
    let hier = reg.hierarchy();
    let tc = TrajectoryConfig {
        hier: hier.clone(),
        field: reg.field.clone(),
        rho0: reg.rho0.clone(),
        grid: grid.clone(),
        unraveling: unr,
        noise,
    };
    tc.validate()?;

    let b = two_level_basis();
    let mut unconditional_pe = Vec::with_capacity(grid.steps() + 1);
    let mut flux = Vec::with_capacity(grid.steps() + 1);
    let mut failure = None;
    propagate_hierarchy(&hier, &init_tensor(&reg.rho0, reg.n_max)?, &grid, |_, t, st| {
        match reduce_state(st, &reg.field) {
            Ok(rho) => unconditional_pe.push(b.excited_population(&rho)),
            Err(e) => failure = Some(e),
        }
        // unconditional click probability of the cell starting at t
        let p = ConditionalTensor::from_tensor(st.clone(), reg.field.clone())
            .and_then(|ct| jump_probability(&ct, &hier, t, grid.h()));
        match p {
            Ok(p) => flux.push(p / grid.h()),
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }

    let results: Vec<(u64, Result<Trajectory, sqwp_core::Error>)> = (0..n_traj as u64)
        .into_par_iter()
        .map(|s| (s, run_trajectory(&tc, seed, s)))
        .collect();

    let records: Vec<&MeasurementRecord> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).map(|t| &t.record).collect();
    if records.is_empty() {
        let msg = results.iter().find_map(|(_, r)| r.as_ref().err()).map(|e| e.to_string()).unwrap_or_default();
        return Err(CliError::Numerical(format!("every trajectory failed: {msg}")));
    }
    let (chi2, dof) = pooled_martingale_chi2(&records, grid.h(), bins)?;
    let p_value = 1.0 - ChiSquared::new(dof as f64).map_err(|e| CliError::Numerical(e.to_string()))?.cdf(chi2);
    let first_record = records.first().map(|r| (*r).clone());
    let clicks = matches!(unr, Unraveling::Counting)
        .then(|| click_rate(&results, &grid, &flux, bins));

    let summary = EnsembleSummary::from_results(&grid, results)?;
    let max_z = summary
        .pe_mean
        .iter()
        .zip(&summary.pe_stderr)
        .zip(&unconditional_pe)
        .map(|((m, se), u)| {
            let d = (m - u).abs();
            if *se > 0.0 {
                d / se
            } else if d < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    Ok(EnsembleRun {
        summary,
        unconditional_pe,
        max_z,
        chi2,
        dof,
        p_value,
        clicks,
        first_record,
        regime: reg,
        grid,
        seed,
    })
}

/// Writes `summary.csv`, `unconditional.csv` (`t,Pe`), `record_0000.csv`
/// for the first trajectory, and for counting `click_rate.csv` and
/// `jumps.csv` (`stream,t`).
pub fn trajectories(cfg: &ExperimentConfig) -> Result<Artifacts, CliError> {
    let run = ensemble(cfg)?;
    let s = &run.summary;
    let mut files = vec![
        ("summary.csv".to_string(), s.to_csv()),
        ("unconditional.csv".to_string(), table("t,Pe", &[&s.times, &run.unconditional_pe])),
    ];
    if let Some(r) = &run.first_record {
        files.push(("record_0000.csv".into(), r.to_lines()));
    }
    let mut summary = json!({
        "n_used": s.n_used,
        "failures": s.failures.iter().map(|(k, e)| json!({"stream": k, "error": e.to_string()})).collect::<Vec<_>>(),
        "max_z_vs_unconditional": run.max_z,
        "martingale_chi2": run.chi2,
        "martingale_dof": run.dof,
        "martingale_p_value": run.p_value,
        "warnings": {
            "negative_probability": s.warnings.negative_probability,
            "large_jump_probability": s.warnings.large_jump_probability,
            "homodyne_clamp": s.warnings.homodyne_clamp,
        },
    });
    if let Some(c) = &run.clicks {
        let mut csv = String::from("t_lo,t_hi,rate,stderr,expected\n");
        for i in 0..c.rate.len() {
                        csv.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_number(c.t_lo[i]),
                csv_number(c.t_hi[i]),
                csv_number(c.rate[i]),
                csv_number(c.stderr[i]),
                csv_number(c.expected[i])
            ));
        }
        files.push(("click_rate.csv".into(), csv));
        let mut jumps = String::from("stream,t\n");
        for (stream, times) in s.jump_times.iter().enumerate() {
            for t in times {
                jumps.push_str(&format!("{stream},{}\n", csv_number(*t)));
            }
        }
        files.push(("jumps.csv".into(), jumps));
        summary["mean_count"] = json!(c.mean_count);
        summary["mean_count_stderr"] = json!(c.mean_count_stderr);
        summary["expected_count"] = json!(c.expected_count);
    }
    let mut warnings: Vec<String> = run.regime.field.warning().map(String::from).into_iter().collect();
    if let Some(w) = run.regime.hierarchy().step_gate_warning(run.grid.h()) {
        warnings.push(w);
    }
    if s.warnings.total() > 0 {
        warnings.push(format!("{} step warnings across the ensemble", s.warnings.total()));
    }
    let mut resolved = run.regime.describe();
    let (u, noise) = unraveling(cfg);
    resolved["unraveling"] = json!(format!("{u:?}"));
    resolved["noise"] = json!(format!("{noise:?}"));
    resolved["h"] = json!(run.grid.h());
    resolved["t_end"] = json!(run.grid.t1());
    resolved["n_traj"] = json!(cfg.numerics.n_traj.unwrap_or(2000));
    resolved["seed"] = json!(run.seed);
    resolved["chi2_bins"] = json!(run.dof);
    Ok(Artifacts { files, resolved, summary, warnings })
}
