//! The state tensor `ρ^{(m,n)}` and the right-hand sides of the squeezed and
//! Fock wave-packet hierarchies.
//!
//! Blocks are stored row-major (m outer, n inner) in one contiguous vector,
//! each block itself row-major. That flat vector is what the integrator
//! advances.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use num_complex::Complex64 as C64;

use crate::error::{invalid, Result};
use crate::operator::{dense, CMatrix, SlhTriple, ONE, ZERO};
use crate::squeezing::{
    discarded_population_fock, squeezed_vacuum_amplitudes, vacuum_in_squeezed_basis, SqueezeParams, WavePacket,
};

/// `(n_max+1)²` generalized state matrices of dimension `sys_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTensor {
    n_max: usize,
    sys_dim: usize,
    data: Vec<C64>,
}

impl StateTensor {
    pub fn zeros(n_max: usize, sys_dim: usize) -> Self {
        let len = (n_max + 1) * (n_max + 1) * sys_dim * sys_dim;
        Self { n_max, sys_dim, data: vec![ZERO; len] }
    }

    pub fn from_flat(n_max: usize, sys_dim: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != (n_max + 1) * (n_max + 1) * sys_dim * sys_dim {
            return Err(invalid("flat state length does not match tensor shape"));
        }
        Ok(Self { n_max, sys_dim, data })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn sys_dim(&self) -> usize {
        self.sys_dim
    }

    pub fn levels(&self) -> usize {
        self.n_max + 1
    }

    pub fn as_flat(&self) -> &[C64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<C64> {
        self.data
    }

    /// Offset of block `(m, n)` in the flat vector.
    pub fn offset(&self, m: usize, n: usize) -> usize {
        block_offset(self.n_max, self.sys_dim, m, n)
    }

    pub fn block_slice(&self, m: usize, n: usize) -> &[C64] {
        let o = self.offset(m, n);
        &self.data[o..o + self.sys_dim * self.sys_dim]
    }

    pub fn block_slice_mut(&mut self, m: usize, n: usize) -> &mut [C64] {
        let o = self.offset(m, n);
        let dd = self.sys_dim * self.sys_dim;
        &mut self.data[o..o + dd]
    }

    pub fn block(&self, m: usize, n: usize) -> CMatrix {
        CMatrix::from_slice(self.sys_dim, self.block_slice(m, n))
    }

    pub fn set_block(&mut self, m: usize, n: usize, value: &CMatrix) {
        assert_eq!(value.dim(), self.sys_dim);
        self.block_slice_mut(m, n).copy_from_slice(value.as_slice());
    }

    /// Largest deviation from `ρ^{(n,m)} = ρ^{(m,n)}†`.
    pub fn dagger_pairing_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for m in 0..self.levels() {
            for n in m..self.levels() {
                let d = self.block(m, n).max_abs_diff(&self.block(n, m).dagger());
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn scale(&mut self, s: C64) {
        self.data.iter_mut().for_each(|z| *z *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

pub(crate) fn block_offset(n_max: usize, d: usize, m: usize, n: usize) -> usize {
    (m * (n_max + 1) + n) * d * d
}

/// Field state matrix `Υ = Σ c_{m,n} |m⟩⟨n|` in the hierarchy's basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    n_max: usize,
    coeffs: Vec<C64>,
    warning: Option<String>,
}

impl FieldState {
    /// Validated dense coefficient matrix, row-major `(n_max+1)²`.
    pub fn from_coeffs(n_max: usize, coeffs: Vec<C64>) -> Result<Self> {
        let k = n_max + 1;
        if coeffs.len() != k * k {
            return Err(invalid("field coefficient matrix has the wrong size"));
        }
        let tr: C64 = (0..k).map(|i| coeffs[i * k + i]).sum();
        if (tr - ONE).norm() > 1e-10 {
            return Err(invalid(alloc::format!("field state trace is {tr}, expected 1")));
        }
        for m in 0..k {
            for n in 0..k {
                if (coeffs[m * k + n] - coeffs[n * k + m].conj()).norm() > 1e-12 {
                    return Err(invalid("field coefficients must satisfy c_nm = c_mn*"));
                }
            }
        }
        Ok(Self { n_max, coeffs, warning: None })
    }

    /// Sparse constructor from `((m, n), c)` entries.
    pub fn from_entries(n_max: usize, entries: &[((usize, usize), C64)]) -> Result<Self> {
        let k = n_max + 1;
        let mut coeffs = vec![ZERO; k * k];
        for &((m, n), c) in entries {
            if m > n_max || n > n_max {
                return Err(invalid(alloc::format!("field index ({m},{n}) exceeds n_max = {n_max}")));
            }
            coeffs[m * k + n] = c;
        }
        Self::from_coeffs(n_max, coeffs)
    }

    /// The basis vacuum `|0⟩⟨0|` (squeezed vacuum for the squeezed hierarchy).
    pub fn ground(n_max: usize) -> Self {
        Self::number(n_max, 0).expect("0 ≤ n_max")
    }

    /// `|n⟩⟨n|`
    pub fn number(n_max: usize, n: usize) -> Result<Self> {
        Self::from_entries(n_max, &[((n, n), ONE)])
    }

    /// Pure field state `|ψ⟩⟨ψ|` from (possibly truncated) amplitudes,
    /// renormalized. A warning is attached when more than 1e-6 of the
    /// population was lost to truncation.
    pub fn from_amplitudes(amps: &[C64], missing: f64) -> Result<Self> {
        if amps.is_empty() {
            return Err(invalid("need at least one amplitude"));
        }
        let kept: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !(kept > 0.0) {
            return Err(invalid("amplitudes have zero norm"));
        }
        let k = amps.len();
        let mut coeffs = vec![ZERO; k * k];
        for m in 0..k {
            for n in 0..k {
                coeffs[m * k + n] = amps[m] * amps[n].conj() / kept;
            }
        }
        let warning = (missing > 1e-6).then(|| {
            alloc::format!("truncating the field at n_max = {} discards population {missing:.3e}", k - 1)
        });
        Ok(Self { n_max: k - 1, coeffs, warning })
    }

    /// The unsqueezed field vacuum written in the squeezed basis.
    pub fn vacuum_in_squeezed_basis(sq: &SqueezeParams, n_max: usize) -> Self {
        let (amps, missing) = vacuum_in_squeezed_basis(sq, n_max);
        Self::from_amplitudes(&amps, missing).expect("vacuum overlap is nonzero")
    }

    /// Squeezed vacuum written in the ordinary Fock basis (for the Fock
    /// hierarchy).
    pub fn squeezed_vacuum_in_fock_basis(sq: &SqueezeParams, n_max: usize) -> Self {
        let amps = squeezed_vacuum_amplitudes(sq, n_max);
        let missing = discarded_population_fock(n_max, sq.r());
        Self::from_amplitudes(&amps, missing).expect("vacuum overlap is nonzero")
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn coeff(&self, m: usize, n: usize) -> C64 {
        self.coeffs[m * (self.n_max + 1) + n]
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    /// Largest index with a nonzero coefficient.
    pub fn max_index(&self) -> usize {
        let k = self.n_max + 1;
        (0..k * k)
            .filter(|&i| self.coeffs[i] != ZERO)
            .map(|i| (i / k).max(i % k))
            .max()
            .unwrap_or(0)
    }

    /// Nonzero `((m, n), c)` entries.
    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), C64)> + '_ {
        let k = self.n_max + 1;
        (0..k * k).filter(|&i| self.coeffs[i] != ZERO).map(move |i| ((i / k, i % k), self.coeffs[i]))
    }
}

/// Tensor with `rho0` on every diagonal block and zeros elsewhere.
pub fn init_tensor(rho0: &CMatrix, n_max: usize) -> Result<StateTensor> {
    if !rho0.is_density_matrix(1e-10) {
        return Err(invalid("initial state must be a density matrix"));
    }
    Ok(init_tensor_unchecked(rho0, n_max))
}

/// Same layout as [`init_tensor`] for an arbitrary (e.g. matrix-unit) seed.
pub fn init_tensor_unchecked(rho0: &CMatrix, n_max: usize) -> StateTensor {
    let mut st = StateTensor::zeros(n_max, rho0.dim());
    for n in 0..=n_max {
        st.set_block(n, n, rho0);
    }
    st
}

/// `Σ c_{m,n} ρ^{(m,n)}`
pub fn reduce_state(st: &StateTensor, field: &FieldState) -> Result<CMatrix> {
    let d = st.sys_dim();
    let mut out = CMatrix::zeros(d);
    for ((m, n), c) in field.entries() {
        if m > st.n_max() || n > st.n_max() {
            return Err(invalid(alloc::format!(
                "field index ({m},{n}) exceeds tensor n_max = {}",
                st.n_max()
            )));
        }
        dense::axpy(c, st.block_slice(m, n), out.as_mut_slice());
    }
    Ok(out)
}

/// Closure applied to hierarchy indices beyond `n_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruncationPolicy {
    /// Blocks above the cutoff read as zero.
    #[default]
    HardZero,
}

/// Which set of equations to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HierarchyKind {
    /// Squeezed Fock basis, couples both up and down.
    Squeezed,
    /// Unsqueezed Fock basis, downward coupling only.
    Fock,
}

/// Everything needed to evaluate the hierarchy right-hand side.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    kind: HierarchyKind,
    n_max: usize,
    d: usize,
    slh: SlhTriple,
    wp: WavePacket,
    sq: SqueezeParams,
    policy: TruncationPolicy,
    // G = −iH − ½L†L, so that −i[H,ρ] + D[L]ρ = Gρ + ρG† + LρL†
    g: Vec<C64>,
    g_dag: Vec<C64>,
    l: Vec<C64>,
    l_dag: Vec<C64>,
    s: Vec<C64>,
    s_dag: Vec<C64>,
    s_is_identity: bool,
}

impl Hierarchy {
    pub fn squeezed(slh: SlhTriple, wp: WavePacket, sq: SqueezeParams, n_max: usize) -> Self {
        Self::build(HierarchyKind::Squeezed, slh, wp, sq, n_max)
    }

    /// The Fock hierarchy ignores the squeezing entirely.
    pub fn fock(slh: SlhTriple, wp: WavePacket, n_max: usize) -> Self {
        Self::build(HierarchyKind::Fock, slh, wp, SqueezeParams::vacuum(), n_max)
    }

    fn build(kind: HierarchyKind, slh: SlhTriple, wp: WavePacket, sq: SqueezeParams, n_max: usize) -> Self {
        let d = slh.dim();
        let l = slh.l().clone();
        let l_dag = l.dagger();
        let k = &l_dag * &l;
        let g = &slh.h().scale(C64::new(0.0, -1.0)) - &k.scale(C64::new(0.5, 0.0));
        let s_is_identity = slh.s().max_abs_diff(&CMatrix::identity(d)) == 0.0;
        Self {
            kind,
            n_max,
            d,
            g_dag: g.dagger().as_slice().to_vec(),
            g: g.as_slice().to_vec(),
            l: l.as_slice().to_vec(),
            l_dag: l_dag.as_slice().to_vec(),
            s: slh.s().as_slice().to_vec(),
            s_dag: slh.s().dagger().as_slice().to_vec(),
            s_is_identity,
            slh,
            wp,
            sq,
            policy: TruncationPolicy::HardZero,
        }
    }

    pub fn with_policy(mut self, policy: TruncationPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn kind(&self) -> HierarchyKind {
        self.kind
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn sys_dim(&self) -> usize {
        self.d
    }

    pub fn slh(&self) -> &SlhTriple {
        &self.slh
    }

    pub fn packet(&self) -> &WavePacket {
        &self.wp
    }

    pub fn squeeze(&self) -> &SqueezeParams {
        &self.sq
    }

    pub fn policy(&self) -> TruncationPolicy {
        self.policy
    }

    pub fn state_len(&self) -> usize {
        (self.n_max + 1) * (self.n_max + 1) * self.d * self.d
    }

    /// Derivative of the whole tensor at time `t` (ξ sampled at `t`).
    pub fn rhs(&self, t: f64, st: &StateTensor) -> StateTensor {
        let mut out = StateTensor::zeros(self.n_max, self.d);
        self.rhs_into(self.wp.sample(t), st.as_flat(), out.as_flat_mut());
        out
    }

    /// Flat-vector derivative for a given envelope value.
    pub fn rhs_into(&self, xi: C64, state: &[C64], out: &mut [C64]) {
        match self.kind {
            HierarchyKind::Squeezed => self.squeezed_rhs_into(xi, state, out),
            HierarchyKind::Fock => self.fock_rhs_into(xi, state, out),
        }
    }

    /// Row-major `(L, L†, S, S†)`.
    pub(crate) fn coupling_slices(&self) -> (&[C64], &[C64], &[C64], &[C64]) {
        (&self.l, &self.l_dag, &self.s, &self.s_dag)
    }

    /// `(c, s e^{2iφ})`; the right ladder uses the conjugate phase.
    fn ladder_coeffs(&self) -> (f64, C64) {
        (self.sq.cosh_r(), self.sq.phase2() * self.sq.sinh_r())
    }

    /// `(M_sq^‡ ρ)_{m,n} = c√m ρ_{m−1,n} − s e^{2iφ}√(m+1) ρ_{m+1,n}`
    pub(crate) fn left_ladder(&self, state: &[C64], m: usize, n: usize, out: &mut [C64]) {
        let (c, se) = self.ladder_coeffs();
        let (nm, d) = (self.n_max, self.d);
        out.iter_mut().for_each(|z| *z = ZERO);
        if m > 0 {
            let o = block_offset(nm, d, m - 1, n);
            dense::axpy(C64::new(c * (m as f64).sqrt(), 0.0), &state[o..o + d * d], out);
        }
        if m < nm && se != ZERO {
            let o = block_offset(nm, d, m + 1, n);
            dense::axpy(-se * ((m + 1) as f64).sqrt(), &state[o..o + d * d], out);
        }
    }

    /// `(ρ M_sq)_{m,n} = c√n ρ_{m,n−1} − s e^{−2iφ}√(n+1) ρ_{m,n+1}`
    pub(crate) fn right_ladder(&self, state: &[C64], m: usize, n: usize, out: &mut [C64]) {
        let (c, se) = self.ladder_coeffs();
        let (nm, d) = (self.n_max, self.d);
        out.iter_mut().for_each(|z| *z = ZERO);
        if n > 0 {
            let o = block_offset(nm, d, m, n - 1);
            dense::axpy(C64::new(c * (n as f64).sqrt(), 0.0), &state[o..o + d * d], out);
        }
        if n < nm && se != ZERO {
            let o = block_offset(nm, d, m, n + 1);
            dense::axpy(-se.conj() * ((n + 1) as f64).sqrt(), &state[o..o + d * d], out);
        }
    }

    /// `(M_sq^‡ ρ M_sq)_{m,n}`, the four-term two-photon combination.
    pub(crate) fn both_ladders(&self, state: &[C64], m: usize, n: usize, out: &mut [C64]) {
        let (c, se) = self.ladder_coeffs();
        let (nm, d) = (self.n_max, self.d);
        let (mf, nf) = (m as f64, n as f64);
        out.iter_mut().for_each(|z| *z = ZERO);
        let mut add = |coef: C64, mm: usize, nn: usize| {
            let o = block_offset(nm, d, mm, nn);
            dense::axpy(coef, &state[o..o + d * d], out);
        };
        if m > 0 && n > 0 {
            add(C64::new(c * c * (mf * nf).sqrt(), 0.0), m - 1, n - 1);
        }
        if se != ZERO {
            if m > 0 && n < nm {
                add(-se.conj() * c * (mf * (nf + 1.0)).sqrt(), m - 1, n + 1);
            }
            if m < nm && n > 0 {
                add(-se * c * ((mf + 1.0) * nf).sqrt(), m + 1, n - 1);
            }
            if m < nm && n < nm {
                add(C64::new(se.norm_sqr() * ((mf + 1.0) * (nf + 1.0)).sqrt(), 0.0), m + 1, n + 1);
            }
        }
    }

    /// `Gρ + ρG† + LρL†` for one block, written into `out`.
    pub(crate) fn lindblad_block(&self, rho: &[C64], tmp: &mut [C64], out: &mut [C64]) {
        let d = self.d;
        dense::mul_into(d, &self.g, rho, out);
        dense::mul_acc(d, ONE, rho, &self.g_dag, out);
        dense::sandwich_acc(d, ONE, &self.l, rho, &self.l_dag, tmp, out);
    }

    fn squeezed_rhs_into(&self, xi: C64, state: &[C64], out: &mut [C64]) {
        let (nm, d) = (self.n_max, self.d);
        let dd = d * d;
        let mut a = vec![ZERO; dd];
        let mut sa = vec![ZERO; dd];
        let mut tmp = vec![ZERO; dd];
        let xi2 = xi.norm_sqr();
        for m in 0..=nm {
            for n in 0..=nm {
                let o = block_offset(nm, d, m, n);
                let (rho, dst) = (&state[o..o + dd], &mut out[o..o + dd]);
                self.lindblad_block(rho, &mut tmp, dst);
                if xi == ZERO {
                    continue;
                }
                // ξ [S A, L†] with A = (M_sq^‡ρ)_{m,n}
                self.left_ladder(state, m, n, &mut a);
                let sa_ref: &[C64] = if self.s_is_identity {
                    &a
                } else {
                    dense::mul_into(d, &self.s, &a, &mut sa);
                    &sa
                };
                dense::mul_acc(d, xi, sa_ref, &self.l_dag, dst);
                dense::mul_acc(d, -xi, &self.l_dag, sa_ref, dst);
                // ξ* [L, B S†] with B = (ρM_sq)_{m,n}
                self.right_ladder(state, m, n, &mut a);
                let bs_ref: &[C64] = if self.s_is_identity {
                    &a
                } else {
                    dense::mul_into(d, &a, &self.s_dag, &mut sa);
                    &sa
                };
                dense::mul_acc(d, xi.conj(), &self.l, bs_ref, dst);
                dense::mul_acc(d, -xi.conj(), bs_ref, &self.l, dst);
                // |ξ|² D[S](C); S unitary so D[S]C = SCS† − C
                if !self.s_is_identity {
                    self.both_ladders(state, m, n, &mut a);
                    dense::sandwich_acc(d, C64::new(xi2, 0.0), &self.s, &a, &self.s_dag, &mut tmp, dst);
                    dense::axpy(C64::new(-xi2, 0.0), &a, dst);
                }
            }
        }
    }

    /// The `r = 0` equations, coded separately with downward couplings only.
    fn fock_rhs_into(&self, xi: C64, state: &[C64], out: &mut [C64]) {
        let (nm, d) = (self.n_max, self.d);
        let dd = d * d;
        let mut tmp = vec![ZERO; dd];
        let mut x = vec![ZERO; dd];
        let xi2 = xi.norm_sqr();
        let blk = |m: usize, n: usize| {
            let o = block_offset(nm, d, m, n);
            &state[o..o + dd]
        };
        for m in 0..=nm {
            for n in 0..=nm {
                let o = block_offset(nm, d, m, n);
                let dst = &mut out[o..o + dd];
                self.lindblad_block(blk(m, n), &mut tmp, dst);
                if xi == ZERO {
                    continue;
                }
                if m > 0 {
                    // ξ√m [S ρ_{m−1,n}, L†]
                    let w = xi * (m as f64).sqrt();
                    dense::mul_into(d, &self.s, blk(m - 1, n), &mut x);
                    dense::mul_acc(d, w, &x, &self.l_dag, dst);
                    dense::mul_acc(d, -w, &self.l_dag, &x, dst);
                }
                if n > 0 {
                    // ξ*√n [L, ρ_{m,n−1} S†]
                    let w = xi.conj() * (n as f64).sqrt();
                    dense::mul_into(d, blk(m, n - 1), &self.s_dag, &mut x);
                    dense::mul_acc(d, w, &self.l, &x, dst);
                    dense::mul_acc(d, -w, &x, &self.l, dst);
                }
                if m > 0 && n > 0 {
                    // |ξ|²√(mn) (S ρ_{m−1,n−1} S† − ρ_{m−1,n−1})
                    let w = xi2 * ((m * n) as f64).sqrt();
                    let src = blk(m - 1, n - 1);
                    dense::sandwich_acc(d, C64::new(w, 0.0), &self.s, src, &self.s_dag, &mut tmp, dst);
                    dense::axpy(C64::new(-w, 0.0), src, dst);
                }
            }
        }
    }

    /// Output photon flux for field level `n`:
    /// `tr[L†L ρ^{(n,n)}] + |ξ_t|²(c²n + s²(n+1))`.
    pub fn output_flux(&self, t: f64, st: &StateTensor, n: usize) -> Result<f64> {
        self.check_level(n)?;
        let rho = st.block(n, n);
        let l = self.slh.l();
        let emitted = (&l.dagger() * l).expectation(&rho).re;
        let (c, s) = (self.sq.cosh_r(), self.sq.sinh_r());
        let nf = n as f64;
        Ok(emitted + self.wp.sample(t).norm_sqr() * (c * c * nf + s * s * (nf + 1.0)))
    }

    /// `(e^{−iφ'}⟨L⟩ + c.c.)/√2` on block `(n, n)`.
    pub fn output_quadrature(&self, st: &StateTensor, n: usize, lo_phase: f64) -> Result<f64> {
        self.check_level(n)?;
        let mean_l = self.slh.l().expectation(&st.block(n, n));
        Ok(2.0 * (C64::from_polar(1.0, -lo_phase) * mean_l).re / core::f64::consts::SQRT_2)
    }

    fn check_level(&self, n: usize) -> Result<()> {
        if n > self.n_max {
            return Err(invalid(alloc::format!("level {n} exceeds n_max = {}", self.n_max)));
        }
        Ok(())
    }

    /// `max|ξ| · n_max · cosh r · h`; keep this ≪ 1.
    pub fn step_gate_value(&self, h: f64) -> f64 {
        self.wp.max_abs() * self.n_max as f64 * self.sq.cosh_r() * h
    }

    /// Warning text when the step gate reaches 0.1.
    pub fn step_gate_warning(&self, h: f64) -> Option<String> {
        let v = self.step_gate_value(h);
        (v >= 0.1).then(|| alloc::format!("step h = {h} gives max|ξ|·n_max·cosh r·h = {v:.3} ≥ 0.1"))
    }

    /// `min(1e-3, 0.05 / (max|ξ| (n_max+1) cosh r))` in units of 1/Γ.
    pub fn default_step(&self) -> f64 {
        default_step(&self.wp, &self.sq, self.n_max)
    }
}

pub fn default_step(wp: &WavePacket, sq: &SqueezeParams, n_max: usize) -> f64 {
    let denom = wp.max_abs() * (n_max + 1) as f64 * sq.cosh_r();
    if denom > 0.0 {
        (0.05 / denom).min(1e-3)
    } else {
        1e-3
    }
}

/// Free-function form of the squeezed hierarchy derivative.
pub fn squeezed_rhs(
    t: f64,
    st: &StateTensor,
    slh: &SlhTriple,
    wp: &WavePacket,
    sq: &SqueezeParams,
) -> StateTensor {
    Hierarchy::squeezed(slh.clone(), wp.clone(), *sq, st.n_max()).rhs(t, st)
}

/// Free-function form of the Fock hierarchy derivative.
pub fn fock_rhs(t: f64, st: &StateTensor, slh: &SlhTriple, wp: &WavePacket) -> StateTensor {
    Hierarchy::fock(slh.clone(), wp.clone(), st.n_max()).rhs(t, st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{commutator, dissipator, two_level_basis};

    fn atom(gamma: f64, h: CMatrix) -> SlhTriple {
        let b = two_level_basis();
        SlhTriple::with_identity_scattering(&b.sigma_minus * gamma.sqrt(), h).unwrap()
    }

    fn random_tensor(n_max: usize, seed: u64) -> StateTensor {
        // small LCG; only needs to be generic, not random-quality
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut st = StateTensor::zeros(n_max, 2);
        for z in st.as_flat_mut() {
            *z = C64::new(next(), next());
        }
        st
    }

    /// Literal transcription of the main-result equation for one block.
    fn reference_block(h: &Hierarchy, xi: C64, st: &StateTensor, m: usize, n: usize) -> CMatrix {
        let slh = h.slh();
        let (s_op, l) = (slh.s(), slh.l());
        let (c, s) = (h.squeeze().cosh_r(), h.squeeze().sinh_r());
        let e2 = h.squeeze().phase2();
        let nm = h.n_max() as isize;
        let get = |a: isize, b: isize| {
            if a < 0 || b < 0 || a > nm || b > nm {
                CMatrix::zeros(2)
            } else {
                st.block(a as usize, b as usize)
            }
        };
        let (mi, ni) = (m as isize, n as isize);
        let (mf, nf) = (m as f64, n as f64);
        let rho = get(mi, ni);
        let mut out = &commutator(slh.h(), &rho).unwrap().scale(C64::new(0.0, -1.0)) + &dissipator(l, &rho).unwrap();
        let ld = l.dagger();
        let sd = s_op.dagger();
        out += &commutator(&(s_op * &get(mi - 1, ni)), &ld).unwrap().scale(xi * c * mf.sqrt());
        out += &commutator(l, &(&get(mi, ni - 1) * &sd)).unwrap().scale(xi.conj() * c * nf.sqrt());
        out += &commutator(&ld, &(s_op * &get(mi + 1, ni))).unwrap().scale(xi * s * e2 * (mf + 1.0).sqrt());
        out += &commutator(&(&get(mi, ni + 1) * &sd), l).unwrap().scale(xi.conj() * s * e2.conj() * (nf + 1.0).sqrt());
        let mut inner = get(mi - 1, ni - 1).scale(C64::new(c * c * (mf * nf).sqrt(), 0.0));
        inner -= &get(mi - 1, ni + 1).scale(e2.conj() * c * s * (mf * (nf + 1.0)).sqrt());
        inner -= &get(mi + 1, ni - 1).scale(e2 * c * s * ((mf + 1.0) * nf).sqrt());
        inner += &get(mi + 1, ni + 1).scale(C64::new(s * s * ((mf + 1.0) * (nf + 1.0)).sqrt(), 0.0));
        out += &dissipator(s_op, &inner).unwrap().scale(C64::new(xi.norm_sqr(), 0.0));
        out
    }

    #[test]
    fn rhs_matches_literal_equation() {
        let b = two_level_basis();
        let ham = b.sigma_x.scale(C64::new(0.7, 0.0));
        let s_op = CMatrix::from_rows([
            [C64::new(0.6, 0.0), C64::new(0.0, 0.8)],
            [C64::new(0.0, 0.8), C64::new(0.6, 0.0)],
        ]);
        let l = &b.sigma_minus * 1.3f64.sqrt();
        for &(s_matrix, r) in &[(false, 0.5181), (true, 0.8), (true, 0.0)] {
            let s = if s_matrix { s_op.clone() } else { CMatrix::identity(2) };
            let slh = SlhTriple::new(s, l.clone(), ham.clone()).unwrap();
            let wp = WavePacket::square(2.0).unwrap().with_detuning(0.4);
            let sq = SqueezeParams::new(r, 0.37).unwrap();
            let h = Hierarchy::squeezed(slh, wp.clone(), sq, 3);
            let st = random_tensor(3, 7);
            let t = 0.9;
            let out = h.rhs(t, &st);
            for m in 0..4 {
                for n in 0..4 {
                    let want = reference_block(&h, wp.sample(t), &st, m, n);
                    assert!(out.block(m, n).max_abs_diff(&want) < 1e-13, "({m},{n}) r={r}");
                }
            }
        }
    }

    #[test]
    fn zero_squeezing_equals_fock() {
        let b = two_level_basis();
        let s_op = CMatrix::from_rows([
            [C64::new(0.0, 1.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        ]);
        let slh = SlhTriple::new(s_op, &b.sigma_minus * 0.9, b.sigma_z.scale(C64::new(0.3, 0.0))).unwrap();
        let wp = WavePacket::square(1.0).unwrap();
        let sq = SqueezeParams::new(0.0, 0.2).unwrap();
        let st = random_tensor(4, 3);
        let a = squeezed_rhs(0.5, &st, &slh, &wp, &sq);
        let f = fock_rhs(0.5, &st, &slh, &wp);
        let diff = a.as_flat().iter().zip(f.as_flat()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn vacuum_envelope_decouples_blocks() {
        let b = two_level_basis();
        let slh = atom(1.0, b.sigma_x.clone());
        let wp = WavePacket::square(1.0).unwrap();
        let sq = SqueezeParams::new(0.6, 0.0).unwrap();
        let st = random_tensor(2, 11);
        let out = squeezed_rhs(1.5, &st, &slh, &wp, &sq);
        for m in 0..3 {
            for n in 0..3 {
                let rho = st.block(m, n);
                let want = &commutator(slh.h(), &rho).unwrap().scale(C64::new(0.0, -1.0)) + &dissipator(slh.l(), &rho).unwrap();
                assert!(out.block(m, n).max_abs_diff(&want) < 1e-14);
            }
        }
    }

    #[test]
    fn init_and_reduce() {
        let b = two_level_basis();
        let st = init_tensor(&b.excited, 2).unwrap();
        for m in 0..3 {
            for n in 0..3 {
                let want = if m == n { b.excited.clone() } else { CMatrix::zeros(2) };
                assert_eq!(st.block(m, n), want);
                assert!((st.block(m, n).trace() - if m == n { ONE } else { ZERO }).norm() < 1e-15);
            }
        }
        assert!(init_tensor(&b.sigma_x, 2).is_err());
        assert_eq!(reduce_state(&st, &FieldState::ground(2)).unwrap(), b.excited);
        let half = C64::new(0.5, 0.0);
        let mix = FieldState::from_entries(2, &[((0, 0), half), ((1, 1), half)]).unwrap();
        let mut st2 = random_tensor(2, 5);
        let want = (&st2.block(0, 0) + &st2.block(1, 1)).scale(half);
        assert!(reduce_state(&st2, &mix).unwrap().max_abs_diff(&want) < 1e-15);
        st2 = StateTensor::zeros(0, 2);
        assert!(reduce_state(&st2, &mix).is_err());
        assert!(FieldState::from_entries(1, &[((2, 2), ONE)]).is_err());
        assert!(FieldState::from_entries(2, &[((0, 0), half)]).is_err());
    }

    #[test]
    fn vacuum_field_in_squeezed_basis() {
        let sq = SqueezeParams::new(0.3, 0.1).unwrap();
        let f = FieldState::vacuum_in_squeezed_basis(&sq, 12);
        let tr: C64 = (0..13).map(|i| f.coeff(i, i)).sum();
        assert!((tr - ONE).norm() < 1e-12);
        assert!(f.warning().is_none());
        let f = FieldState::vacuum_in_squeezed_basis(&SqueezeParams::new(2f64.ln(), 0.0).unwrap(), 2);
        assert!(f.warning().is_some());
        let r0 = FieldState::vacuum_in_squeezed_basis(&SqueezeParams::vacuum(), 3);
        assert_eq!(r0, FieldState::ground(3));
    }

    #[test]
    fn flux_examples() {
        let b = two_level_basis();
        let wp = WavePacket::square(2.0).unwrap();
        let sq = SqueezeParams::new(0.5, 0.0).unwrap();
        let uncoupled = SlhTriple::with_identity_scattering(CMatrix::zeros(2), CMatrix::zeros(2)).unwrap();
        let st = init_tensor(&b.ground, 2).unwrap();
        let h = Hierarchy::squeezed(uncoupled.clone(), wp.clone(), sq, 2);
        let f = h.output_flux(1.0, &st, 0).unwrap();
        assert!((f - 0.5 * 0.5f64.sinh().powi(2)).abs() < 1e-15);
        let h = Hierarchy::squeezed(uncoupled, wp.clone(), SqueezeParams::vacuum(), 2);
        assert!((h.output_flux(1.0, &st, 1).unwrap() - 0.5).abs() < 1e-15);
        let rho = b.from_bloch([0.0, 0.0, 0.2]);
        let st = init_tensor(&rho, 0).unwrap();
        let h = Hierarchy::squeezed(atom(1.7, CMatrix::zeros(2)), wp, SqueezeParams::vacuum(), 0);
        assert!((h.output_flux(5.0, &st, 0).unwrap() - 1.7 * 0.6).abs() < 1e-14);
        assert!(h.output_flux(5.0, &st, 1).is_err());
    }

    #[test]
    fn quadrature_examples() {
        let b = two_level_basis();
        let wp = WavePacket::square(1.0).unwrap();
        let gamma: f64 = 2.0;
        let h = Hierarchy::squeezed(atom(gamma, CMatrix::zeros(2)), wp.clone(), SqueezeParams::vacuum(), 0);
        let ground = init_tensor(&b.ground, 0).unwrap();
        assert_eq!(h.output_quadrature(&ground, 0, 0.3).unwrap(), 0.0);
        let plus = init_tensor(&b.from_bloch([1.0, 0.0, 0.0]), 0).unwrap();
        // ⟨σ−⟩ = 1/2 in |+⟩, so the quadrature is 2·√Γ/2/√2 = √(Γ/2)
        assert!((h.output_quadrature(&plus, 0, 0.0).unwrap() - (gamma / 2.0).sqrt()).abs() < 1e-14);
        let free = SlhTriple::with_identity_scattering(CMatrix::zeros(2), CMatrix::zeros(2)).unwrap();
        let h0 = Hierarchy::squeezed(free, wp, SqueezeParams::vacuum(), 0);
        assert_eq!(h0.output_quadrature(&plus, 0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn step_gate() {
        let b = two_level_basis();
        let wp = WavePacket::square(1.0).unwrap();
        let sq = SqueezeParams::new(2f64.ln(), 0.0).unwrap();
        let h = Hierarchy::squeezed(atom(1.0, b.sigma_x.clone()), wp, sq, 9);
        assert!(h.step_gate_warning(0.1).is_some());
        let step = h.default_step();
        assert!(step <= 1e-3 && h.step_gate_warning(step).is_none());
    }
}
