//! Turns a config plus an experiment's defaults into engine objects.

use serde_json::{json, Value};
use sqwp_core::hierarchy::{FieldState, Hierarchy};
use sqwp_core::markovian::{broadband_rhs, steady_state};
use sqwp_core::operator::{two_level_basis, CMatrix, SlhTriple};
use sqwp_core::squeezing::{
    db_to_r, discarded_population_fock, nmax_for_tolerance, parse_packet_samples, BroadbandParams, SqueezeParams,
    WavePacket,
};
use sqwp_core::C64;

use crate::config::{ExperimentConfig, FieldChoice, HierarchyChoice, InitialState, Packet};
use crate::error::CliError;

/// Reference regime an experiment falls back on for unset physics fields.
#[derive(Debug, Clone)]
pub struct Defaults {
    pub r: f64,
    pub phi: f64,
    pub omega: f64,
    pub detuning: f64,
    pub packet: Packet,
    pub hierarchy: HierarchyChoice,
    pub n_max: Option<usize>,
    pub initial: InitialState,
    pub field: FieldChoice,
}

impl Defaults {
    /// Undriven atom, square packet, squeezed hierarchy.
    pub fn square(r: f64, duration: f64) -> Self {
        Self {
            r,
            phi: 0.0,
            omega: 0.0,
            detuning: 0.0,
            packet: Packet::Square { duration },
            hierarchy: HierarchyChoice::Squeezed,
            n_max: None,
            initial: InitialState::SectionV,
            field: FieldChoice::SqueezedVacuum,
        }
    }
}

/// Fully resolved physical setup of a two-level atom and one packet.
#[derive(Debug, Clone)]
pub struct Regime {
    pub gamma: f64,
    pub omega: f64,
    pub sq: SqueezeParams,
    pub packet_spec: Packet,
    pub packet: WavePacket,
    pub n_max: usize,
    pub kind: HierarchyChoice,
    pub field_spec: FieldChoice,
    pub field: FieldState,
    pub slh: SlhTriple,
    pub initial: InitialState,
    pub rho0: CMatrix,
    pub coupled: bool,
}

/// Smallest Fock cutoff dropping at most `eps` of a squeezed vacuum.
pub fn fock_nmax_for_tolerance(eps: f64, r: f64) -> usize {
    (0..200).find(|&n| discarded_population_fock(n, r) <= eps).unwrap_or(200)
}

/// `L = √γ σ−` (or zero), `H = (Ω/2) σx`, `S = I`.
pub fn atom(gamma: f64, omega: f64, coupled: bool) -> SlhTriple {
    let b = two_level_basis();
    let l = if coupled { b.sigma_minus.scale(C64::new(gamma.sqrt(), 0.0)) } else { CMatrix::zeros(2) };
    let h = b.sigma_x.scale(C64::new(omega / 2.0, 0.0));
    SlhTriple::with_identity_scattering(l, h).expect("2x2 operators")
}

pub fn initial_state(init: &InitialState, slh: &SlhTriple) -> Result<CMatrix, CliError> {
    let b = two_level_basis();
    Ok(match init {
        InitialState::Ground => b.ground.clone(),
        InitialState::Excited => b.excited.clone(),
        InitialState::SectionV => b.from_bloch([0.5f64.sqrt(), 0.5f64.sqrt(), 0.0]),
        InitialState::Bloch(v) => b.from_bloch(*v),
        InitialState::SteadyState => steady_state(|r| broadband_rhs(r, slh, &BroadbandParams::vacuum()), 2)
            .map_err(|e| CliError::Validation(format!("no unique vacuum steady state: {e}")))?,
    })
}

pub fn squeezing(cfg: &ExperimentConfig, default_r: f64, default_phi: f64) -> Result<SqueezeParams, CliError> {
    let p = &cfg.physics;
    let r = match (p.r, p.e_r, p.db) {
        (Some(r), _, _) => r,
        (_, Some(er), _) => er.ln(),
        (_, _, Some(db)) => db_to_r(db)?,
        _ => default_r,
    };
    Ok(SqueezeParams::new(r, p.phi.unwrap_or(default_phi))?)
}

pub fn load_packet(spec: &Packet) -> Result<WavePacket, CliError> {
    Ok(match spec {
        Packet::Square { duration } => WavePacket::square(*duration)?,
        Packet::Gaussian { center, sigma } => WavePacket::gaussian(*center, *sigma)?,
        Packet::File { path } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read packet file {}: {e}", path.display())))?;
            let (t, v) = parse_packet_samples(&text)?;
            WavePacket::custom(t, v)?
        }
    })
}

fn field_state(choice: &FieldChoice, kind: HierarchyChoice, sq: &SqueezeParams, n_max: usize) -> Result<FieldState, CliError> {
    Ok(match (choice, kind) {
        (FieldChoice::SqueezedVacuum, HierarchyChoice::Squeezed) => FieldState::ground(n_max),
        (FieldChoice::SqueezedVacuum, HierarchyChoice::Fock) => FieldState::squeezed_vacuum_in_fock_basis(sq, n_max),
        (FieldChoice::Vacuum, HierarchyChoice::Squeezed) => FieldState::vacuum_in_squeezed_basis(sq, n_max),
        (FieldChoice::Vacuum, HierarchyChoice::Fock) => FieldState::ground(n_max),
        (FieldChoice::Number { n }, _) => FieldState::number(n_max, *n)?,
        (FieldChoice::Coefficients { entries }, _) => {
            let e: Vec<((usize, usize), C64)> = entries
                .iter()
                .map(|[m, n, re, im]| {
                    if *m < 0.0 || *n < 0.0 || m.fract() != 0.0 || n.fract() != 0.0 {
                        return Err(CliError::Validation("field indices must be nonnegative integers".into()));
                    }
                    Ok(((*m as usize, *n as usize), C64::new(*re, *im)))
                })
                .collect::<Result<_, _>>()?;
            FieldState::from_entries(n_max, &e)?
        }
    })
}

impl Regime {
    pub fn resolve(cfg: &ExperimentConfig, d: &Defaults) -> Result<Self, CliError> {
        let p = &cfg.physics;
        let gamma = p.gamma.unwrap_or(1.0);
        let omega = p.omega.unwrap_or(d.omega);
        let coupled = p.coupled.unwrap_or(true);
        let sq = squeezing(cfg, d.r, d.phi)?;
        let packet_spec = p.packet.clone().unwrap_or_else(|| d.packet.clone());
        let packet = load_packet(&packet_spec)?.with_detuning(p.detuning.unwrap_or(d.detuning));
        let kind = p.hierarchy.unwrap_or(d.hierarchy);
        let n_max = match (p.n_max, d.n_max, kind) {
            (Some(n), _, _) | (None, Some(n), _) => n,
            (None, None, HierarchyChoice::Squeezed) => nmax_for_tolerance(1e-4, sq.r())?,
            (None, None, HierarchyChoice::Fock) => fock_nmax_for_tolerance(1e-4, sq.r()),
        };
        let field_spec = p.field.clone().unwrap_or_else(|| d.field.clone());
        let field = field_state(&field_spec, kind, &sq, n_max)?;
        let slh = atom(gamma, omega, coupled);
        let initial = p.initial_state.clone().unwrap_or_else(|| d.initial.clone());
        let rho0 = initial_state(&initial, &slh)?;
        Ok(Self { gamma, omega, sq, packet_spec, packet, n_max, kind, field_spec, field, slh, initial, rho0, coupled })
    }

    pub fn hierarchy(&self) -> Hierarchy {
        match self.kind {
            HierarchyChoice::Squeezed => Hierarchy::squeezed(self.slh.clone(), self.packet.clone(), self.sq, self.n_max),
            HierarchyChoice::Fock => Hierarchy::fock(self.slh.clone(), self.packet.clone(), self.n_max),
        }
    }

    /// End of the packet support.
    pub fn packet_end(&self) -> f64 {
        self.packet.support().1
    }

    pub fn describe(&self) -> Value {
        json!({
            "gamma": self.gamma,
            "omega": self.omega,
            "r": self.sq.r(),
            "phi": self.sq.phi(),
            "detuning": self.packet.detuning(),
            "packet": self.packet_spec,
            "n_max": self.n_max,
            "hierarchy": self.kind,
            "field": self.field_spec,
            "field_warning": self.field.warning(),
            "initial_state": self.initial,
            "coupled": self.coupled,
        })
    }
}
