//! Fixed-step RK4 propagation, the channel induced by one wave-packet
//! interaction and its Choi-matrix diagnostics.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::hierarchy::{init_tensor, init_tensor_unchecked, reduce_state, FieldState, Hierarchy, StateTensor};
use crate::operator::{hermitian_eigenvalues, two_level_basis, CMatrix, SlhTriple, SuperOp, ONE, ZERO};
use crate::squeezing::{SqueezeParams, WavePacket};

/// Uniform grid `t0, t0 + h, …, t1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(invalid("time grid needs t1 > t0"));
        }
        if steps == 0 {
            return Err(invalid("time grid needs at least one step"));
        }
        Ok(Self { t0, t1, steps })
    }

    /// Grid on `[t0, t1]` whose step does not exceed `h_max`.
    pub fn with_max_step(t0: f64, t1: f64, h_max: f64) -> Result<Self> {
        if !(h_max > 0.0) {
            return Err(invalid("step must be positive"));
        }
        let steps = ((t1 - t0) / h_max - 1e-9).ceil().max(1.0) as usize;
        Self::new(t0, t1, steps)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn h(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t1
        } else {
            self.t0 + k as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.node(k))
    }
}

/// Scratch space for classical RK4 on a flat complex vector.
#[derive(Debug, Clone, Default)]
pub struct Rk4 {
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
}

impl Rk4 {
    pub fn new(len: usize) -> Self {
        Self {
            k1: vec![ZERO; len],
            k2: vec![ZERO; len],
            k3: vec![ZERO; len],
            k4: vec![ZERO; len],
            tmp: vec![ZERO; len],
        }
    }

    /// Advances `state` from `t` to `t + h` in place.
    pub fn step<F>(&mut self, rhs: &mut F, state: &mut [C64], t: f64, h: f64) -> Result<()>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        if !(h > 0.0) {
            return Err(invalid("step must be positive"));
        }
        let n = state.len();
        if self.k1.len() != n {
            *self = Self::new(n);
        }
        let hh = C64::new(h / 2.0, 0.0);
        rhs(t, state, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = state[i] + hh * self.k1[i];
        }
        rhs(t + h / 2.0, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = state[i] + hh * self.k2[i];
        }
        rhs(t + h / 2.0, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = state[i] + self.k3[i] * h;
        }
        rhs(t + h, &self.tmp, &mut self.k4);
        let w = h / 6.0;
        let mut finite = true;
        for i in 0..n {
            let z = state[i] + (self.k1[i] + (self.k2[i] + self.k3[i]) * 2.0 + self.k4[i]) * w;
            finite &= z.re.is_finite() && z.im.is_finite();
            state[i] = z;
        }
        if finite {
            Ok(())
        } else {
            Err(Error::NumericalBlowup { t, h })
        }
    }
}

/// One RK4 step returning the new state.
pub fn rk4_step<F>(mut rhs: F, state: &[C64], t: f64, h: f64) -> Result<Vec<C64>>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let mut out = state.to_vec();
    Rk4::new(state.len()).step(&mut rhs, &mut out, t, h)?;
    Ok(out)
}

/// Integrates over `grid`, calling `observer(k, t_k, state)` at every node
/// including both ends. Returns the final state.
pub fn propagate<F, O>(mut rhs: F, state0: &[C64], grid: &TimeGrid, mut observer: O) -> Result<Vec<C64>>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    O: FnMut(usize, f64, &[C64]),
{
    let mut state = state0.to_vec();
    let mut rk = Rk4::new(state.len());
    let h = grid.h();
    observer(0, grid.t0, &state);
    for k in 0..grid.steps {
        let t = grid.node(k);
        rk.step(&mut rhs, &mut state, t, h)?;
        observer(k + 1, grid.node(k + 1), &state);
    }
    Ok(state)
}

/// Envelope value at an RK4 stage time, clamped into the open cell
/// `(t, t + h)` so a packet edge on a grid node is never sampled on the
/// wrong side.
pub(crate) fn cell_xi(wp: &WavePacket, t_stage: f64, t: f64, h: f64) -> C64 {
    let eps = 1e-9 * h;
    wp.sample(t_stage.clamp(t + eps, t + h - eps))
}

/// RK4 stepping of a hierarchy with per-cell envelope sampling.
#[derive(Debug, Clone)]
pub struct HierarchyStepper<'a> {
    hier: &'a Hierarchy,
    rk: Rk4,
}

impl<'a> HierarchyStepper<'a> {
    pub fn new(hier: &'a Hierarchy) -> Self {
        Self { hier, rk: Rk4::new(hier.state_len()) }
    }

    pub fn step(&mut self, state: &mut [C64], t: f64, h: f64) -> Result<()> {
        let hier = self.hier;
        let wp = hier.packet();
        let mut rhs = |ts: f64, x: &[C64], out: &mut [C64]| hier.rhs_into(cell_xi(wp, ts, t, h), x, out);
        self.rk.step(&mut rhs, state, t, h)
    }
}

/// Propagates a state tensor over `grid`, observing every node.
pub fn propagate_hierarchy<O>(hier: &Hierarchy, st0: &StateTensor, grid: &TimeGrid, mut observer: O) -> Result<StateTensor>
where
    O: FnMut(usize, f64, &StateTensor),
{
    let mut st = st0.clone();
    let mut stepper = HierarchyStepper::new(hier);
    let h = grid.h();
    observer(0, grid.t0(), &st);
    for k in 0..grid.steps() {
        stepper.step(st.as_flat_mut(), grid.node(k), h)?;
        observer(k + 1, grid.node(k + 1), &st);
    }
    Ok(st)
}

/// Complete-positivity report for a linear map built from matrix-unit probes.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelReport {
    pub choi: CMatrix,
    /// Ascending Choi eigenvalues.
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    pub is_cp: bool,
    /// Largest `|tr Φ(|i⟩⟨j|) − δ_ij|`; for the extended map this is taken
    /// over every diagonal hierarchy block.
    pub trace_preserving_residual: f64,
}

impl ChannelReport {
    pub const CP_THRESHOLD: f64 = -1e-8;

    /// `images[i * d_in + j]` is `Φ(|i⟩⟨j|)`, a `d_out × d_out` matrix.
    pub fn from_images(d_in: usize, images: &[CMatrix], tp_residual: f64) -> Result<Self> {
        if images.len() != d_in * d_in {
            return Err(invalid("need one image per matrix unit"));
        }
        let d_out = images[0].dim();
        let mut choi = CMatrix::zeros(d_in * d_out);
        for i in 0..d_in {
            for j in 0..d_in {
                let img = &images[i * d_in + j];
                if img.dim() != d_out {
                    return Err(invalid("channel images differ in dimension"));
                }
                for a in 0..d_out {
                    for b in 0..d_out {
                        choi[(i * d_out + a, j * d_out + b)] = img[(a, b)];
                    }
                }
            }
        }
        let eigenvalues = hermitian_eigenvalues(&choi)?;
        let min_eigenvalue = eigenvalues.first().copied().unwrap_or(0.0);
        Ok(Self {
            choi,
            is_cp: min_eigenvalue >= Self::CP_THRESHOLD,
            eigenvalues,
            min_eigenvalue,
            trace_preserving_residual: tp_residual,
        })
    }
}

/// Hierarchy tensor after propagating `|i⟩⟨j|` placed on every diagonal block.
pub fn propagate_unit(hier: &Hierarchy, grid: &TimeGrid, i: usize, j: usize) -> Result<StateTensor> {
    let unit = CMatrix::unit(hier.sys_dim(), i, j);
    let st0 = init_tensor_unchecked(&unit, hier.n_max());
    propagate_hierarchy(hier, &st0, grid, |_, _, _| {})
}

/// `Σ_{m,n} ρ^{(m,n)} ⊗ |m⟩⟨n|`, system index outer.
pub fn embed_tensor(st: &StateTensor) -> CMatrix {
    let (d, k) = (st.sys_dim(), st.levels());
    let mut out = CMatrix::zeros(d * k);
    for m in 0..k {
        for n in 0..k {
            let blk = st.block_slice(m, n);
            for a in 0..d {
                for b in 0..d {
                    out[(a * k + m, b * k + n)] = blk[a * d + b];
                }
            }
        }
    }
    out
}

fn unit_trace_residual(st: &StateTensor, i: usize, j: usize) -> f64 {
    let want = if i == j { ONE } else { ZERO };
    let d = st.sys_dim();
    (0..st.levels())
        .map(|n| (crate::operator::dense::trace(d, st.block_slice(n, n)) - want).norm())
        .fold(0.0, f64::max)
}

/// Both channel views of one unit probe: the reduced system output and the
/// full system ⊗ hierarchy embedding.
pub fn channel_probe(hier: &Hierarchy, field: &FieldState, grid: &TimeGrid, i: usize, j: usize) -> Result<(CMatrix, CMatrix, f64)> {
    let st = propagate_unit(hier, grid, i, j)?;
    let reduced = reduce_state(&st, field)?;
    let want = if i == j { ONE } else { ZERO };
    let tp_reduced = (reduced.trace() - want).norm();
    Ok((reduced, embed_tensor(&st), tp_reduced.max(unit_trace_residual(&st, i, j))))
}

/// Reduced channel `ρ0 ↦ reduce_state(propagate(init_tensor(ρ0)))` and the
/// extended map `ρ0 ↦ Σ ρ^{(m,n)} ⊗ |m⟩⟨n|` into system plus hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyChannel {
    pub reduced: ChannelReport,
    pub extended: ChannelReport,
}

/// Assembles reports from probe results ordered `i * d + j`.
pub fn channel_from_probes(d: usize, probes: Vec<(CMatrix, CMatrix, f64)>) -> Result<HierarchyChannel> {
    let tp = probes.iter().map(|p| p.2).fold(0.0, f64::max);
    let (reduced, extended): (Vec<_>, Vec<_>) = probes.into_iter().map(|(r, e, _)| (r, e)).unzip();
    Ok(HierarchyChannel {
        reduced: ChannelReport::from_images(d, &reduced, tp)?,
        extended: ChannelReport::from_images(d, &extended, tp)?,
    })
}

/// Sequential channel construction over the `d²` matrix units.
pub fn hierarchy_channel(hier: &Hierarchy, field: &FieldState, grid: &TimeGrid) -> Result<HierarchyChannel> {
    let d = hier.sys_dim();
    let probes = (0..d * d)
        .map(|k| channel_probe(hier, field, grid, k / d, k % d))
        .collect::<Result<Vec<_>>>()?;
    channel_from_probes(d, probes)
}

/// Superoperator of the reduced channel (column-stacking convention).
pub fn reduced_superop(d: usize, images: &[CMatrix]) -> Result<SuperOp> {
    let mut m = CMatrix::zeros(d * d);
    for i in 0..d {
        for j in 0..d {
            let col = j * d + i;
            for (row, z) in images[i * d + j].vec().into_iter().enumerate() {
                m[(row, col)] = z;
            }
        }
    }
    SuperOp::from_matrix(d, m)
}

/// `|P_e^hier(t) − e^{−Γt}|` for the vacuum written in the squeezed basis.
#[derive(Debug, Clone, PartialEq)]
pub struct VacuumDiff {
    pub times: Vec<f64>,
    pub diff: Vec<f64>,
    pub sup: f64,
    pub warning: Option<String>,
}

/// Evolves an initially excited atom (`Γ = 1`, `L = σ−`, `S = I`, `H = 0`)
/// against a square packet of length `t_packet` whose field is the vacuum
/// expanded in the squeezed basis at squeezing `r`.
pub fn vacuum_in_squeezed_basis_diff(r: f64, t_packet: f64, n_max: usize, grid: &TimeGrid) -> Result<VacuumDiff> {
    let b = two_level_basis();
    let slh = SlhTriple::with_identity_scattering(b.sigma_minus.clone(), CMatrix::zeros(2))?;
    let sq = SqueezeParams::new(r, 0.0)?;
    let wp = WavePacket::square(t_packet)?;
    let field = FieldState::vacuum_in_squeezed_basis(&sq, n_max);
    let hier = Hierarchy::squeezed(slh, wp, sq, n_max);
    let st0 = init_tensor(&b.excited, n_max)?;
    let mut times = Vec::with_capacity(grid.steps() + 1);
    let mut diff = Vec::with_capacity(grid.steps() + 1);
    let mut failure = None;
    propagate_hierarchy(&hier, &st0, grid, |_, t, st| match reduce_state(st, &field) {
        Ok(rho) => {
            times.push(t);
            diff.push((rho[(1, 1)].re - (-t).exp()).abs());
        }
        Err(e) => failure = Some(e),
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let sup = diff.iter().copied().fold(0.0, f64::max);
    Ok(VacuumDiff { times, diff, sup, warning: field.warning().map(String::from) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::HierarchyKind;
    use crate::operator::dissipator;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn zero_rhs_keeps_state() {
        let s = [c(1.0), C64::new(0.0, 2.0)];
        let out = rk4_step(|_, _, o: &mut [C64]| o.fill(ZERO), &s, 0.0, 0.1).unwrap();
        assert_eq!(out, s.to_vec());
    }

    #[test]
    fn scalar_decay_step() {
        let out = rk4_step(|_, x: &[C64], o: &mut [C64]| o[0] = -x[0], &[c(1.0)], 0.0, 0.1).unwrap();
        assert!((out[0].re - 0.9048375).abs() < 1e-7);
        assert!((out[0].re - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn linear_system_step_matches_exponential() {
        // rotation generator: exp(hA) is known in closed form
        let w = 1.7;
        let rhs = |_: f64, x: &[C64], o: &mut [C64]| {
            o[0] = x[1] * (-w);
            o[1] = x[0] * w;
        };
        for &h in &[0.1, 0.05] {
            let out = rk4_step(rhs, &[c(1.0), c(0.0)], 0.0, h).unwrap();
            let err = (out[0].re - (w * h).cos()).abs() + (out[1].re - (w * h).sin()).abs();
            assert!(err < 0.02 * (w * h).powi(5), "h={h} err={err}");
        }
    }

    #[test]
    fn blowup_is_reported() {
        let err = rk4_step(|_, _, o: &mut [C64]| o[0] = c(f64::NAN), &[c(1.0)], 2.0, 0.5);
        assert_eq!(err, Err(Error::NumericalBlowup { t: 2.0, h: 0.5 }));
    }

    #[test]
    fn grid_edges() {
        assert!(TimeGrid::new(1.0, 1.0, 3).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        let g = TimeGrid::new(0.0, 1e-9, 1).unwrap();
        let out = propagate(|_, x: &[C64], o: &mut [C64]| o[0] = -x[0], &[c(1.0)], &g, |_, _, _| {}).unwrap();
        assert!((out[0].re - 1.0).abs() < 1e-8);
        let g = TimeGrid::with_max_step(0.0, 4.0, 1e-3).unwrap();
        assert_eq!(g.steps(), 4000);
        assert_eq!(g.node(4000), 4.0);
    }

    fn vacuum_decay_error(steps: usize) -> f64 {
        let b = two_level_basis();
        let l = b.sigma_minus.clone();
        let rhs = |_: f64, x: &[C64], o: &mut [C64]| {
            let rho = CMatrix::unvec(2, x);
            o.copy_from_slice(&dissipator(&l, &rho).unwrap().vec());
        };
        let grid = TimeGrid::new(0.0, 5.0, steps).unwrap();
        let mut err: f64 = 0.0;
        let mut count = 0;
        propagate(rhs, &b.excited.vec(), &grid, |_, t, x| {
            count += 1;
            err = err.max((x[3].re - (-t).exp()).abs());
        })
        .unwrap();
        assert_eq!(count, steps + 1);
        err
    }

    #[test]
    fn vacuum_decay_and_order() {
        assert!(vacuum_decay_error(5000) < 1e-6);
        let coarse = vacuum_decay_error(50);
        let fine = vacuum_decay_error(100);
        assert!(coarse / fine >= 12.0, "{coarse} {fine}");
    }

    #[test]
    fn identity_and_vacuum_channels_are_cp() {
        let b = two_level_basis();
        let slh = SlhTriple::with_identity_scattering(b.sigma_minus.clone(), CMatrix::zeros(2)).unwrap();
        // ξ = 0 on the whole grid: packet lives on [0, 1), grid starts at 2
        let wp = WavePacket::square(1.0).unwrap();
        let hier = Hierarchy::squeezed(slh, wp, SqueezeParams::new(0.7, 0.0).unwrap(), 3);
        let grid = TimeGrid::new(2.0, 2.5, 500).unwrap();
        let ch = hierarchy_channel(&hier, &FieldState::ground(3), &grid).unwrap();
        assert!(ch.reduced.is_cp, "{:?}", ch.reduced.eigenvalues);
        assert!(ch.extended.is_cp, "{:?}", ch.extended.eigenvalues);
        assert!(ch.reduced.trace_preserving_residual < 1e-10);
        // amplitude damping with p = 1 − e^{−0.5}: Choi entry ⟨e,g|C|e,g⟩ = p
        let p = 1.0 - (-0.5f64).exp();
        assert!((ch.reduced.choi[(2, 2)].re - p).abs() < 1e-10);
    }

    #[test]
    fn fock_channel_number_state_is_tp_and_cp() {
        let b = two_level_basis();
        let slh = SlhTriple::with_identity_scattering(b.sigma_minus.clone(), CMatrix::zeros(2)).unwrap();
        let wp = WavePacket::square(1.0).unwrap();
        let hier = Hierarchy::fock(slh, wp, 2);
        assert_eq!(hier.kind(), HierarchyKind::Fock);
        let grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let ch = hierarchy_channel(&hier, &FieldState::number(2, 2).unwrap(), &grid).unwrap();
        assert!(ch.reduced.is_cp, "{:?}", ch.reduced.eigenvalues);
        assert!(ch.extended.is_cp, "{:?}", ch.extended.eigenvalues);
        assert!(ch.reduced.trace_preserving_residual < 1e-8);
    }

    #[test]
    fn vacuum_diff_zero_squeezing() {
        let grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let d = vacuum_in_squeezed_basis_diff(0.0, 1.0, 2, &grid).unwrap();
        assert!(d.sup < 1e-8, "{}", d.sup);
        assert!(d.warning.is_none());
    }
}
