//! Conditional evolution of the state tensor under photon counting,
//! homodyne and heterodyne detection of the output field.
//!
//! Every step applies the unnormalized infinitesimal Kraus updates to all
//! blocks and then divides the whole tensor by the physical trace
//! `Σ c_{m,n} tr ρ^{(m,n)}`, so relative block scaling is kept.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

#[allow(unused_imports)]
use num_traits::Float;
use num_complex::Complex64 as C64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{invalid, Error, Result};
use crate::hierarchy::{block_offset, init_tensor, FieldState, Hierarchy, StateTensor};
use crate::integrator::{cell_xi, Rk4, TimeGrid};
use crate::operator::{dense, purity, two_level_basis, CMatrix, ONE, ZERO};

/// Jump probabilities above this trigger a step-size warning.
pub const LARGE_JUMP_PROBABILITY: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Counting,
    Homodyne,
    Heterodyne,
}

impl RecordKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Counting => "counting",
            Self::Homodyne => "homodyne",
            Self::Heterodyne => "heterodyne",
        }
    }
}

/// Payload of one measurement interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// 0 (no click) or 1 (click).
    Count(u8),
    /// ±1 from the two-outcome quadrature measurement.
    Sign(i8),
    /// Quadrature 0 (φ' = 0) or 1 (φ' = π/2), and its sign.
    Hetero { quad: u8, sign: i8 },
    /// Gaussian-mode homodyne increment `dQ`.
    Increment(f64),
}

impl core::fmt::Display for Outcome {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Self::Count(n) => write!(f, "{n}"),
            Self::Sign(s) => write!(f, "{s}"),
            Self::Hetero { quad, sign } => write!(f, "{quad}:{sign}"),
            Self::Increment(x) => write!(f, "{x:e}"),
        }
    }
}

/// Record of one trajectory. `times[k]` is the start of interval `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub kind: RecordKind,
    pub times: Vec<f64>,
    pub outcomes: Vec<Outcome>,
    /// Conditional mean of the increment (`Pr(J)` or `E[±√h]`).
    pub expected: Vec<f64>,
    /// Increment minus its conditional mean.
    pub innovations: Vec<f64>,
    pub lo_phase: f64,
    pub seed: u64,
    pub stream_id: u64,
}

impl MeasurementRecord {
    fn new(kind: RecordKind, lo_phase: f64, seed: u64, stream_id: u64, cap: usize) -> Self {
        Self {
            kind,
            times: Vec::with_capacity(cap),
            outcomes: Vec::with_capacity(cap),
            expected: Vec::with_capacity(cap),
            innovations: Vec::with_capacity(cap),
            lo_phase,
            seed,
            stream_id,
        }
    }

    fn push(&mut self, t: f64, outcome: Outcome, expected: f64, innovation: f64) {
        self.times.push(t);
        self.outcomes.push(outcome);
        self.expected.push(expected);
        self.innovations.push(innovation);
    }

    /// Cumulative click count after each interval (counting records only).
    pub fn counts(&self) -> Vec<u32> {
        let mut n = 0;
        self.outcomes
            .iter()
            .map(|o| {
                if let Outcome::Count(c) = o {
                    n += u32::from(*c);
                }
                n
            })
            .collect()
    }

    pub fn jump_times(&self) -> Vec<f64> {
        self.times
            .iter()
            .zip(&self.outcomes)
            .filter(|(_, o)| matches!(o, Outcome::Count(1)))
            .map(|(t, _)| *t)
            .collect()
    }

    /// Conditional variance of each increment given step `h`.
    pub fn innovation_variances(&self, h: f64) -> Vec<f64> {
        self.outcomes
            .iter()
            .zip(&self.expected)
            .map(|(o, &e)| match o {
                Outcome::Count(_) => e * (1.0 - e),
                Outcome::Sign(_) | Outcome::Hetero { .. } => (h - e * e).max(0.0),
                Outcome::Increment(_) => h,
            })
            .collect()
    }

    /// Lines `t,kind,outcome`.
    pub fn to_lines(&self) -> String {
        use core::fmt::Write;
        let mut s = String::from("t,kind,outcome\n");
        for (t, o) in self.times.iter().zip(&self.outcomes) {
            let _ = writeln!(s, "{},{},{o}", crate::csv_number(*t), self.kind.as_str());
        }
        s
    }
}

/// Counters for soft numerical problems seen along a trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepWarnings {
    /// Jump probability below −1e-9 before clamping.
    pub negative_probability: u32,
    /// Jump probability above [`LARGE_JUMP_PROBABILITY`].
    pub large_jump_probability: u32,
    /// Homodyne signal with `|√h ⟨X⟩| ≥ 1`.
    pub homodyne_clamp: u32,
}

impl StepWarnings {
    pub fn total(&self) -> u32 {
        self.negative_probability + self.large_jump_probability + self.homodyne_clamp
    }
}

/// A state tensor conditioned on the record so far.
#[derive(Debug, Clone)]
pub struct ConditionalTensor {
    tensor: StateTensor,
    field: FieldState,
    step: usize,
    jumps: usize,
    pub warnings: StepWarnings,
    rk: Rk4,
}

impl ConditionalTensor {
    /// `ρ^{(n,n)} = ρ0` on every diagonal block.
    pub fn new(rho0: &CMatrix, field: FieldState) -> Result<Self> {
        let tensor = init_tensor(rho0, field.n_max())?;
        Self::from_tensor(tensor, field)
    }

    /// Normalizes `tensor` by its physical trace.
    pub fn from_tensor(mut tensor: StateTensor, field: FieldState) -> Result<Self> {
        if tensor.n_max() != field.n_max() {
            return Err(invalid("field and tensor truncations differ"));
        }
        let norm = physical_trace(&tensor, &field);
        if !(norm.abs() > f64::MIN_POSITIVE) || !norm.is_finite() {
            return Err(Error::DegenerateRecord { t: 0.0, normalizer: norm });
        }
        tensor.scale(C64::new(1.0 / norm, 0.0));
        let len = tensor.as_flat().len();
        Ok(Self { tensor, field, step: 0, jumps: 0, warnings: StepWarnings::default(), rk: Rk4::new(len) })
    }

    pub fn tensor(&self) -> &StateTensor {
        &self.tensor
    }

    pub fn field(&self) -> &FieldState {
        &self.field
    }

    /// Number of updates applied so far.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn jumps(&self) -> usize {
        self.jumps
    }

    pub fn physical_trace(&self) -> f64 {
        physical_trace(&self.tensor, &self.field)
    }

    /// `Σ c_{m,n} ρ^{(m,n)}`
    pub fn physical_state(&self) -> CMatrix {
        physical_state(&self.tensor, &self.field)
    }

    fn replace(&mut self, mut unnorm: StateTensor, t: f64) -> Result<()> {
        let norm = physical_trace(&unnorm, &self.field);
        if !(norm > f64::MIN_POSITIVE) || !norm.is_finite() || !unnorm.is_finite() {
            return Err(Error::DegenerateRecord { t, normalizer: norm });
        }
        unnorm.scale(C64::new(1.0 / norm, 0.0));
        self.tensor = unnorm;
        self.step += 1;
        Ok(())
    }
}

fn physical_state(st: &StateTensor, field: &FieldState) -> CMatrix {
    let d = st.sys_dim();
    let mut out = CMatrix::zeros(d);
    for ((m, n), c) in field.entries() {
        dense::axpy(c, st.block_slice(m, n), out.as_mut_slice());
    }
    out
}

fn physical_trace(st: &StateTensor, field: &FieldState) -> f64 {
    let d = st.sys_dim();
    field.entries().map(|((m, n), c)| c * dense::trace(d, st.block_slice(m, n))).sum::<C64>().re
}

/// `out += w · J(ρ)` with the jump numerator
/// `J_{m,n} = LρL† + ξ* L(ρM)S† + ξ S(M‡ρ)L† + |ξ|² S(M‡ρM)S†`.
fn jump_acc(hier: &Hierarchy, xi: C64, w: C64, state: &[C64], out: &mut [C64]) {
    let (nm, d) = (hier.n_max(), hier.sys_dim());
    let dd = d * d;
    let (l, l_dag, s, s_dag) = hier.coupling_slices();
    let mut lad = vec![ZERO; dd];
    let mut tmp = vec![ZERO; dd];
    for m in 0..=nm {
        for n in 0..=nm {
            let o = block_offset(nm, d, m, n);
            let dst = &mut out[o..o + dd];
            dense::sandwich_acc(d, w, l, &state[o..o + dd], l_dag, &mut tmp, dst);
            if xi == ZERO {
                continue;
            }
            hier.right_ladder(state, m, n, &mut lad);
            dense::sandwich_acc(d, w * xi.conj(), l, &lad, s_dag, &mut tmp, dst);
            hier.left_ladder(state, m, n, &mut lad);
            dense::sandwich_acc(d, w * xi, s, &lad, l_dag, &mut tmp, dst);
            hier.both_ladders(state, m, n, &mut lad);
            dense::sandwich_acc(d, w * xi.norm_sqr(), s, &lad, s_dag, &mut tmp, dst);
        }
    }
}

/// `X_{m,n} = e^{−iφ'}(ξ S(M‡ρ) + Lρ) + e^{iφ'}(ξ*(ρM)S† + ρL†)`
fn cross_into(hier: &Hierarchy, xi: C64, lo_phase: f64, state: &[C64], out: &mut [C64]) {
    let (nm, d) = (hier.n_max(), hier.sys_dim());
    let dd = d * d;
    let (l, l_dag, s, s_dag) = hier.coupling_slices();
    let e = C64::from_polar(1.0, -lo_phase);
    let mut lad = vec![ZERO; dd];
    for m in 0..=nm {
        for n in 0..=nm {
            let o = block_offset(nm, d, m, n);
            let rho = &state[o..o + dd];
            let dst = &mut out[o..o + dd];
            dst.iter_mut().for_each(|z| *z = ZERO);
            dense::mul_acc(d, e, l, rho, dst);
            dense::mul_acc(d, e.conj(), rho, l_dag, dst);
            if xi == ZERO {
                continue;
            }
            hier.left_ladder(state, m, n, &mut lad);
            dense::mul_acc(d, e * xi, s, &lad, dst);
            hier.right_ladder(state, m, n, &mut lad);
            dense::mul_acc(d, e.conj() * xi.conj(), &lad, s_dag, dst);
        }
    }
}

fn check_dims(ct: &ConditionalTensor, hier: &Hierarchy) -> Result<()> {
    if ct.tensor.n_max() != hier.n_max() || ct.tensor.sys_dim() != hier.sys_dim() {
        return Err(invalid("conditional tensor does not match the hierarchy"));
    }
    Ok(())
}

fn mid_xi(hier: &Hierarchy, t: f64, h: f64) -> C64 {
    cell_xi(hier.packet(), t + h / 2.0, t, h)
}

/// Unclamped `h · tr_phys J(ρ)` over the interval `[t, t+h)`.
fn raw_jump_probability(ct: &ConditionalTensor, hier: &Hierarchy, t: f64, h: f64) -> f64 {
    let mut j = StateTensor::zeros(hier.n_max(), hier.sys_dim());
    jump_acc(hier, mid_xi(hier, t, h), C64::new(h, 0.0), ct.tensor.as_flat(), j.as_flat_mut());
    physical_trace(&j, &ct.field) / ct.physical_trace()
}

/// Probability of a click in `[t, t+h)`, clamped to `[0, 1]`.
pub fn jump_probability(ct: &ConditionalTensor, hier: &Hierarchy, t: f64, h: f64) -> Result<f64> {
    check_dims(ct, hier)?;
    Ok(raw_jump_probability(ct, hier, t, h).clamp(0.0, 1.0))
}

/// Unnormalized outcome branches of one counting interval.
#[derive(Debug, Clone)]
pub struct CountingBranches {
    pub p_jump: f64,
    /// RK4 of the no-jump generator across the interval.
    pub no_jump: StateTensor,
    /// `h · J(ρ)`
    pub jump: StateTensor,
}

/// Both unnormalized counting updates, without drawing an outcome.
pub fn counting_branches(ct: &mut ConditionalTensor, hier: &Hierarchy, t: f64, h: f64) -> Result<CountingBranches> {
    check_dims(ct, hier)?;
    let raw = raw_jump_probability(ct, hier, t, h);
    if raw < -1e-9 {
        ct.warnings.negative_probability += 1;
    }
    if raw > LARGE_JUMP_PROBABILITY {
        ct.warnings.large_jump_probability += 1;
    }
    let (nm, d) = (hier.n_max(), hier.sys_dim());
    let mut jump = StateTensor::zeros(nm, d);
    jump_acc(hier, mid_xi(hier, t, h), C64::new(h, 0.0), ct.tensor.as_flat(), jump.as_flat_mut());

    let mut no_jump = ct.tensor.clone();
    let wp = hier.packet();
    let mut rhs = |ts: f64, x: &[C64], out: &mut [C64]| {
        let xi = cell_xi(wp, ts, t, h);
        hier.rhs_into(xi, x, out);
        jump_acc(hier, xi, -ONE, x, out);
    };
    ct.rk.step(&mut rhs, no_jump.as_flat_mut(), t, h)?;
    Ok(CountingBranches { p_jump: raw.clamp(0.0, 1.0), no_jump, jump })
}

/// Draws click/no-click and applies the normalized update. Returns the count increment.
pub fn counting_step<R: RngCore>(ct: &mut ConditionalTensor, hier: &Hierarchy, t: f64, h: f64, rng: &mut R) -> Result<u8> {
    let br = counting_branches(ct, hier, t, h)?;
    let u: f64 = rng.random();
    if u < br.p_jump {
        ct.replace(br.jump, t)?;
        ct.jumps += 1;
        Ok(1)
    } else {
        ct.replace(br.no_jump, t)?;
        Ok(0)
    }
}

/// Unnormalized branches `½[Φ_h(ρ) ± √h X(ρ)]` of one homodyne interval,
/// where `Φ_h` is the unconditional RK4 step.
#[derive(Debug, Clone)]
pub struct HomodyneBranches {
    pub p_plus: f64,
    pub plus: StateTensor,
    pub minus: StateTensor,
    /// `tr_phys X(ρ)`, the quadrature signal.
    pub signal: f64,
}

pub fn homodyne_branches(ct: &mut ConditionalTensor, hier: &Hierarchy, t: f64, h: f64, lo_phase: f64) -> Result<HomodyneBranches> {
    check_dims(ct, hier)?;
    let (nm, d) = (hier.n_max(), hier.sys_dim());
    let (drift, x) = homodyne_parts(ct, hier, t, h, lo_phase)?;
    let signal = physical_trace(&x, &ct.field) / ct.physical_trace();
    let sh = h.sqrt();
    let mut plus = StateTensor::zeros(nm, d);
    let mut minus = StateTensor::zeros(nm, d);
    for ((p, m), (u, v)) in plus
        .as_flat_mut()
        .iter_mut()
        .zip(minus.as_flat_mut().iter_mut())
        .zip(drift.as_flat().iter().zip(x.as_flat()))
    {
        *p = (*u + *v * sh) * 0.5;
        *m = (*u - *v * sh) * 0.5;
    }
    let tp = physical_trace(&plus, &ct.field);
    let tm = physical_trace(&minus, &ct.field);
    let mut p_plus = tp / (tp + tm);
    if !(0.0..=1.0).contains(&p_plus) {
        ct.warnings.homodyne_clamp += 1;
        p_plus = p_plus.clamp(0.0, 1.0);
    }
    Ok(HomodyneBranches { p_plus, plus, minus, signal })
}

fn homodyne_parts(ct: &mut ConditionalTensor, hier: &Hierarchy, t: f64, h: f64, lo_phase: f64) -> Result<(StateTensor, StateTensor)> {
    let mut drift = ct.tensor.clone();
    let wp = hier.packet();
    let mut rhs = |ts: f64, x: &[C64], out: &mut [C64]| hier.rhs_into(cell_xi(wp, ts, t, h), x, out);
    ct.rk.step(&mut rhs, drift.as_flat_mut(), t, h)?;
    let mut x = StateTensor::zeros(hier.n_max(), hier.sys_dim());
    cross_into(hier, mid_xi(hier, t, h), lo_phase, ct.tensor.as_flat(), x.as_flat_mut());
    Ok((drift, x))
}

/// One binary homodyne interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomodyneOutcome {
    pub sign: i8,
    pub p_plus: f64,
    /// `±√h − E[±√h]`
    pub dw: f64,
}

/// Draws ± with the two-outcome quadrature probabilities and updates.
pub fn homodyne_step<R: RngCore>(
    ct: &mut ConditionalTensor,
    hier: &Hierarchy,
    t: f64,
    h: f64,
    lo_phase: f64,
    rng: &mut R,
) -> Result<HomodyneOutcome> {
    let br = homodyne_branches(ct, hier, t, h, lo_phase)?;
    let u: f64 = rng.random();
    let sh = h.sqrt();
    let mean = sh * (2.0 * br.p_plus - 1.0);
    if u < br.p_plus {
        ct.replace(br.plus, t)?;
        Ok(HomodyneOutcome { sign: 1, p_plus: br.p_plus, dw: sh - mean })
    } else {
        ct.replace(br.minus, t)?;
        Ok(HomodyneOutcome { sign: -1, p_plus: br.p_plus, dw: -sh - mean })
    }
}

/// Gaussian-noise homodyne update `Φ_h(ρ) + dW (X(ρ) − ⟨X⟩ρ)`.
///
/// A diffusive approximation of the binary measurement; returns `(dQ, dW)`
/// with `dQ = ⟨X⟩h + dW`.
pub fn homodyne_step_gaussian<R: RngCore>(
    ct: &mut ConditionalTensor,
    hier: &Hierarchy,
    t: f64,
    h: f64,
    lo_phase: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    check_dims(ct, hier)?;
    let (mut drift, x) = homodyne_parts(ct, hier, t, h, lo_phase)?;
    let signal = physical_trace(&x, &ct.field) / ct.physical_trace();
    let dw = standard_normal(rng) * h.sqrt();
    let cdw = C64::new(dw, 0.0);
    for ((u, v), r) in drift.as_flat_mut().iter_mut().zip(x.as_flat()).zip(ct.tensor.as_flat()) {
        *u += cdw * (*v - *r * signal);
    }
    ct.replace(drift, t)?;
    Ok((signal * h + dw, dw))
}

/// Uniformly picks φ' ∈ {0, π/2} and delegates to [`homodyne_step`].
pub fn heterodyne_step<R: RngCore>(
    ct: &mut ConditionalTensor,
    hier: &Hierarchy,
    t: f64,
    h: f64,
    rng: &mut R,
) -> Result<(u8, HomodyneOutcome)> {
    let quad = u8::from(rng.random::<f64>() >= 0.5);
    let phase = if quad == 0 { 0.0 } else { FRAC_PI_2 };
    Ok((quad, homodyne_step(ct, hier, t, h, phase, rng)?))
}

/// Box-Muller on two uniforms, so every step consumes a fixed number of words.
fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// ChaCha20 words reserved for each step.
const WORDS_PER_STEP: u128 = 32;

/// Counter-based generator for step `step` of stream `stream_id`.
///
/// Draws depend only on `(seed, stream_id, step)`, so trajectories are
/// reproducible regardless of scheduling.
pub fn step_rng(seed: u64, stream_id: u64, step: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng.set_word_pos(u128::from(step) * WORDS_PER_STEP);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Unraveling {
    Counting,
    Homodyne { lo_phase: f64 },
    Heterodyne,
}

impl Unraveling {
    pub fn kind(&self) -> RecordKind {
        match self {
            Self::Counting => RecordKind::Counting,
            Self::Homodyne { .. } => RecordKind::Homodyne,
            Self::Heterodyne => RecordKind::Heterodyne,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HomodyneNoise {
    /// The two-outcome ±√h measurement.
    #[default]
    Binary,
    /// Gaussian dW, faster to converge but an approximation at finite h.
    Gaussian,
}

/// Everything needed to run trajectories of a two-level system.
#[derive(Debug, Clone)]
pub struct TrajectoryConfig {
    pub hier: Hierarchy,
    pub field: FieldState,
    pub rho0: CMatrix,
    pub grid: TimeGrid,
    pub unraveling: Unraveling,
    pub noise: HomodyneNoise,
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hier.sys_dim() != 2 {
            return Err(invalid("trajectory observables are defined for a two-level system"));
        }
        if self.field.n_max() != self.hier.n_max() {
            return Err(invalid("field and hierarchy truncations differ"));
        }
        if !self.rho0.is_density_matrix(1e-10) || self.rho0.dim() != 2 {
            return Err(invalid("rho0 must be a 2x2 density matrix"));
        }
        Ok(())
    }
}

/// Physical-state observables at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub record: MeasurementRecord,
    pub pe: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub purity: Vec<f64>,
    pub warnings: StepWarnings,
}

/// Runs one trajectory with draws keyed by `(seed, stream_id, step)`.
pub fn run_trajectory(cfg: &TrajectoryConfig, seed: u64, stream_id: u64) -> Result<Trajectory> {
    cfg.validate()?;
    let b = two_level_basis();
    let grid = &cfg.grid;
    let h = grid.h();
    let steps = grid.steps();
    let lo = match cfg.unraveling {
        Unraveling::Homodyne { lo_phase } => lo_phase,
        _ => 0.0,
    };
    let mut record = MeasurementRecord::new(cfg.unraveling.kind(), lo, seed, stream_id, steps);
    let mut ct = ConditionalTensor::new(&cfg.rho0, cfg.field.clone())?;
    let mut traj = Trajectory {
        record: MeasurementRecord::new(cfg.unraveling.kind(), lo, seed, stream_id, 0),
        pe: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        purity: Vec::with_capacity(steps + 1),
        warnings: StepWarnings::default(),
    };
    let observe = |ct: &ConditionalTensor, traj: &mut Trajectory| {
        let rho = ct.physical_state();
        let [x, y, _] = b.bloch(&rho);
        traj.pe.push(b.excited_population(&rho));
        traj.x.push(x);
        traj.y.push(y);
        traj.purity.push(purity(&rho));
    };
    observe(&ct, &mut traj);
    for k in 0..steps {
        let t = grid.node(k);
        let mut rng = step_rng(seed, stream_id, k as u64);
        match (cfg.unraveling, cfg.noise) {
            (Unraveling::Counting, _) => {
                let p = jump_probability(&ct, &cfg.hier, t, h)?;
                let n = counting_step(&mut ct, &cfg.hier, t, h, &mut rng)?;
                record.push(t, Outcome::Count(n), p, f64::from(n) - p);
            }
            (Unraveling::Homodyne { lo_phase }, HomodyneNoise::Binary) => {
                let o = homodyne_step(&mut ct, &cfg.hier, t, h, lo_phase, &mut rng)?;
                record.push(t, Outcome::Sign(o.sign), h.sqrt() * (2.0 * o.p_plus - 1.0), o.dw);
            }
            (Unraveling::Homodyne { lo_phase }, HomodyneNoise::Gaussian) => {
                let (dq, dw) = homodyne_step_gaussian(&mut ct, &cfg.hier, t, h, lo_phase, &mut rng)?;
                record.push(t, Outcome::Increment(dq), dq - dw, dw);
            }
            (Unraveling::Heterodyne, _) => {
                let (quad, o) = heterodyne_step(&mut ct, &cfg.hier, t, h, &mut rng)?;
                record.push(t, Outcome::Hetero { quad, sign: o.sign }, h.sqrt() * (2.0 * o.p_plus - 1.0), o.dw);
            }
        }
        observe(&ct, &mut traj);
    }
    traj.record = record;
    traj.warnings = ct.warnings;
    Ok(traj)
}

/// Ensemble mean and standard error at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub pe_mean: Vec<f64>,
    pub pe_stderr: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub x_stderr: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_stderr: Vec<f64>,
    pub purity_mean: Vec<f64>,
    /// Click times of each successful trajectory, in stream order.
    pub jump_times: Vec<Vec<f64>>,
    pub n_used: usize,
    /// `(stream_id, error)` of trajectories excluded from the means.
    pub failures: Vec<(u64, Error)>,
    pub warnings: StepWarnings,
}

impl EnsembleSummary {
    /// Aggregates trajectory results given in stream order.
    pub fn from_results(grid: &TimeGrid, results: Vec<(u64, Result<Trajectory>)>) -> Result<Self> {
        let nodes: Vec<f64> = grid.nodes().collect();
        let len = nodes.len();
        let mut acc = [vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]];
        let mut acc2 = [vec![0.0; len], vec![0.0; len], vec![0.0; len]];
        let mut jump_times = Vec::new();
        let mut failures = Vec::new();
        let mut warnings = StepWarnings::default();
        let mut n = 0usize;
        for (stream, res) in results {
            match res {
                Ok(tr) => {
                    for (k, series) in [&tr.pe, &tr.x, &tr.y, &tr.purity].into_iter().enumerate() {
                        for (i, v) in series.iter().enumerate() {
                            acc[k][i] += v;
                            if k < 3 {
                                acc2[k][i] += v * v;
                            }
                        }
                    }
                    warnings.negative_probability += tr.warnings.negative_probability;
                    warnings.large_jump_probability += tr.warnings.large_jump_probability;
                    warnings.homodyne_clamp += tr.warnings.homodyne_clamp;
                    jump_times.push(tr.record.jump_times());
                    n += 1;
                }
                Err(e) => failures.push((stream, e)),
            }
        }
        if n == 0 {
            return Err(invalid("every trajectory failed"));
        }
        let nf = n as f64;
        let mean = |s: &[f64]| s.iter().map(|v| v / nf).collect::<Vec<_>>();
        let stderr = |s: &[f64], s2: &[f64]| {
            s.iter()
                .zip(s2)
                .map(|(a, b)| {
                    if n < 2 {
                        return 0.0;
                    }
                    let m = a / nf;
                    let var = ((b / nf - m * m) * nf / (nf - 1.0)).max(0.0);
                    (var / nf).sqrt()
                })
                .collect::<Vec<_>>()
        };
        Ok(Self {
            times: nodes,
            pe_mean: mean(&acc[0]),
            pe_stderr: stderr(&acc[0], &acc2[0]),
            x_mean: mean(&acc[1]),
            x_stderr: stderr(&acc[1], &acc2[1]),
            y_mean: mean(&acc[2]),
            y_stderr: stderr(&acc[2], &acc2[2]),
            purity_mean: mean(&acc[3]),
            jump_times,
            n_used: n,
            failures,
            warnings,
        })
    }

    /// Lines `t,Pe_mean,Pe_stderr,x_mean,y_mean,purity_mean`.
    pub fn to_csv(&self) -> String {
        use core::fmt::Write;
        use crate::csv_number as num;
        let mut s = String::from("t,Pe_mean,Pe_stderr,x_mean,y_mean,purity_mean\n");
        for i in 0..self.times.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                num(self.times[i]),
                num(self.pe_mean[i]),
                num(self.pe_stderr[i]),
                num(self.x_mean[i]),
                num(self.y_mean[i]),
                num(self.purity_mean[i])
            );
        }
        s
    }
}

/// Sequential ensemble; streams are `0..n_traj` under `base_seed`.
pub fn simulate_ensemble(cfg: &TrajectoryConfig, n_traj: usize, base_seed: u64) -> Result<EnsembleSummary> {
    if n_traj == 0 {
        return Err(invalid("n_traj must be at least 1"));
    }
    cfg.validate()?;
    let results = (0..n_traj as u64).map(|s| (s, run_trajectory(cfg, base_seed, s))).collect();
    EnsembleSummary::from_results(&cfg.grid, results)
}

/// Pearson χ² of binned innovations against zero mean.
///
/// Innovations are grouped into `bins` consecutive batches; each batch sum
/// is standardized by its predicted variance. Returns `(χ², dof)`.
pub fn martingale_chi2(innovations: &[f64], variances: &[f64], bins: usize) -> Result<(f64, usize)> {
    if innovations.len() != variances.len() || bins == 0 || innovations.len() < bins {
        return Err(invalid("martingale_chi2 needs matching series at least `bins` long"));
    }
    let per = innovations.len() / bins;
    let mut chi2 = 0.0;
    for b in 0..bins {
        let r = b * per..(b + 1) * per;
        let s: f64 = innovations[r.clone()].iter().sum();
        let v: f64 = variances[r].iter().sum();
        if v > 0.0 {
            chi2 += s * s / v;
        }
    }
    Ok((chi2, bins))
}

/// Ensemble version of [`martingale_chi2`]: the time axis is cut into
/// `bins` consecutive blocks and each block's innovation sum is pooled over
/// all records before standardizing. Records must share one grid.
pub fn pooled_martingale_chi2(records: &[&MeasurementRecord], h: f64, bins: usize) -> Result<(f64, usize)> {
    let len = records.first().map_or(0, |r| r.innovations.len());
    if records.iter().any(|r| r.innovations.len() != len) {
        return Err(invalid("records have different lengths"));
    }
    let mut sums = vec![0.0; len];
    let mut vars = vec![0.0; len];
    for r in records {
        for (k, (i, v)) in r.innovations.iter().zip(r.innovation_variances(h)).enumerate() {
            sums[k] += i;
            vars[k] += v;
        }
    }
    martingale_chi2(&sums, &vars, bins)
}
