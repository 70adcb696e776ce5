//! Reference Markovian evolutions: the broadband squeezed master equation,
//! its Bloch decay rates, the short-packet convergence check and the
//! quasi-Markoffian master equation with its principal-value corrections.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::hierarchy::{init_tensor, Hierarchy};
use crate::integrator::{propagate_hierarchy, TimeGrid};
use crate::operator::{commutator, dissipator, superop_of, two_level_basis, CMatrix, SlhTriple, ZERO};
use crate::squeezing::{broadband_nm, BroadbandParams, SqueezeParams, WavePacket};

/// `−i[H,ρ] + (N+1)D[L]ρ + N D[L†]ρ + ½M*[L,[L,ρ]] + ½M[L†,[L†,ρ]]`
pub fn broadband_rhs(rho: &CMatrix, slh: &SlhTriple, nm: &BroadbandParams) -> CMatrix {
    let (l, h) = (slh.l(), slh.h());
    let ld = l.dagger();
    let half = C64::new(0.5, 0.0);
    let mut out = commutator(h, rho).expect("dims checked by SlhTriple").scale(C64::new(0.0, -1.0));
    out += &dissipator(l, rho).expect("dims").scale(C64::new(nm.n + 1.0, 0.0));
    if nm.n != 0.0 {
        out += &dissipator(&ld, rho).expect("dims").scale(C64::new(nm.n, 0.0));
    }
    if nm.m != ZERO {
        let ll = commutator(l, &commutator(l, rho).expect("dims")).expect("dims");
        let dd = commutator(&ld, &commutator(&ld, rho).expect("dims")).expect("dims");
        out += &ll.scale(nm.m.conj() * half);
        out += &dd.scale(nm.m * half);
    }
    out
}

/// `(Γ_x, Γ_y) = ((N + M + ½), (N − M + ½))` in units of Γ for real `M`.
pub fn bloch_rates(nm: &BroadbandParams) -> Result<(f64, f64)> {
    if nm.m.im.abs() > 1e-12 {
        return Err(invalid("bloch_rates needs a real M; rotate the squeezing phase first"));
    }
    Ok((nm.n + nm.m.re + 0.5, nm.n - nm.m.re + 0.5))
}

/// Unique trace-one fixed point of a Lindblad generator.
///
/// One row of `vec(ℒ)` is replaced by the trace functional and the linear
/// system solved by LU. Fails when the generator has no unique steady state.
pub fn steady_state<F>(generator: F, d: usize) -> Result<CMatrix>
where
    F: Fn(&CMatrix) -> CMatrix,
{
    let sup = superop_of(generator, d);
    let n = d * d;
    let mut a = nalgebra::DMatrix::<C64>::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            a[(r, c)] = sup.matrix()[(r, c)];
        }
    }
    for c in 0..n {
        a[(0, c)] = if c % (d + 1) == 0 { C64::new(1.0, 0.0) } else { ZERO };
    }
    let mut b = nalgebra::DVector::<C64>::zeros(n);
    b[0] = C64::new(1.0, 0.0);
    let x = a.lu().solve(&b).ok_or_else(|| invalid("generator has no unique steady state"))?;
    let rho = CMatrix::unvec(d, x.as_slice()).hermitian_part();
    if !rho.as_slice().iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(invalid("generator has no unique steady state"));
    }
    Ok(rho)
}

/// One row of the short-packet convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub dt: f64,
    /// `‖Δρ/Δt − broadband_rhs(ρ0)‖` in operator norm.
    pub deviation: f64,
}

/// Evolves the squeezed hierarchy across one square packet of width `Δt`
/// and compares the finite-difference rate of the physical block with the
/// broadband master equation. Requires `S = I` and `H = 0`.
pub fn short_packet_convergence(
    sq: &SqueezeParams,
    dt_list: &[f64],
    slh: &SlhTriple,
    rho0: &CMatrix,
    n_max: usize,
    steps_per_packet: usize,
) -> Result<Vec<ConvergenceRow>> {
    let d = slh.dim();
    if slh.s().max_abs_diff(&CMatrix::identity(d)) > 1e-12 || slh.h().max_abs() > 1e-12 {
        return Err(invalid("short-packet convergence assumes S = I and H = 0"));
    }
    if n_max < 2 {
        return Err(invalid("short-packet convergence needs n_max ≥ 2"));
    }
    let target = broadband_rhs(rho0, slh, &broadband_nm(sq));
    let st0 = init_tensor(rho0, n_max)?;
    dt_list
        .iter()
        .map(|&dt| {
            let wp = WavePacket::square(dt)?;
            let hier = Hierarchy::squeezed(slh.clone(), wp, *sq, n_max);
            let grid = TimeGrid::new(0.0, dt, steps_per_packet)?;
            let st = propagate_hierarchy(&hier, &st0, &grid, |_, _, _| {})?;
            let rate = (&st.block(0, 0) - rho0).scale(C64::new(1.0 / dt, 0.0));
            Ok(ConvergenceRow { dt, deviation: (&rate - &target).operator_norm() })
        })
        .collect()
}

/// Spectral data entering the quasi-Markoffian master equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiMarkoffSpectra {
    /// `N(ω_A)`
    pub n_a: f64,
    /// `N(ω_A ± Ω)`
    pub n_p: f64,
    pub m_a: C64,
    pub m_p: C64,
    pub phi_l: f64,
    pub f: C64,
    pub g: C64,
}

impl QuasiMarkoffSpectra {
    pub fn new(n_a: f64, n_p: f64, m_a: C64, m_p: C64, phi_l: f64, f: C64, g: C64) -> Result<Self> {
        for (n, m) in [(n_a, m_a), (n_p, m_p)] {
            BroadbandParams::new(n, m)?;
        }
        Ok(Self { n_a, n_p, m_a, m_p, phi_l, f, g })
    }

    /// Flat spectra with no principal-value corrections.
    pub fn flat(nm: &BroadbandParams) -> Self {
        Self { n_a: nm.n, n_p: nm.n, m_a: nm.m, m_p: nm.m, phi_l: 0.0, f: ZERO, g: ZERO }
    }
}

/// The quasi-Markoffian master equation for a driven two-level atom, term
/// by term as in the appendix. The `G` term is read literally as the double
/// commutator `G[σ_z, [σ_x, ρ]]`; it is trace-free, but with the purely
/// imaginary `G` of the principal-value formula it is not Hermiticity
/// preserving.
pub fn quasi_markoffian_rhs(rho: &CMatrix, sp: &QuasiMarkoffSpectra, gamma: f64, omega: f64, omega_a: f64) -> CMatrix {
    let b = two_level_basis();
    let (sp_, sm) = (&b.sigma_plus, &b.sigma_minus);
    let pm = sp_ * sm;
    let mp = sm * sp_;
    let sand = |a: &CMatrix, c: &CMatrix| &(a * rho) * c;
    let left = |a: &CMatrix| a * rho;
    let right = |a: &CMatrix| rho * a;
    let (ppp, mmm, mrp, prm) = (sand(sp_, sp_), sand(sm, sm), sand(sm, sp_), sand(sp_, sm));
    let two = C64::new(2.0, 0.0);

    // (1+N_A)(σ+σ−ρ + ρσ+σ− − σ+ρσ+ − σ−ρσ− − 2σ−ρσ+)
    let g1 = &(&(&(&left(&pm) + &right(&pm)) - &ppp) - &mmm) - &mrp.scale(two);
    // N_A(σ−σ+ρ + ρσ−σ+ − σ+ρσ+ − σ−ρσ− − 2σ+ρσ−)
    let g2 = &(&(&(&left(&mp) + &right(&mp)) - &ppp) - &mmm) - &prm.scale(two);
    // (1+N_+Ω)(σ+σ−ρ + ρσ+σ− + σ+ρσ+ + σ−ρσ− − 2σ−ρσ+)
    let g3 = &(&(&(&left(&pm) + &right(&pm)) + &ppp) + &mmm) - &mrp.scale(two);
    // N_+Ω(σ−σ+ρ + ρσ−σ+ + σ+ρσ+ + σ−ρσ− − 2σ+ρσ−)
    let g4 = &(&(&(&left(&mp) + &right(&mp)) + &ppp) + &mmm) - &prm.scale(two);
    // −M_A e^{−2iφ}(σ−σ+ρ + ρσ+σ− − 2σ+ρσ+ − σ+ρσ− − σ−ρσ+)
    let g5 = &(&(&(&left(&mp) + &right(&pm)) - &ppp.scale(two)) - &prm) - &mrp;
    // −M_A* e^{2iφ}(σ+σ−ρ + ρσ−σ+ − 2σ−ρσ− − σ+ρσ− − σ−ρσ+)
    let g6 = &(&(&(&left(&pm) + &right(&mp)) - &mmm.scale(two)) - &prm) - &mrp;
    // −M_+Ω e^{−2iφ}(−σ−σ+ρ − ρσ+σ− − 2σ+ρσ+ + σ+ρσ− + σ−ρσ+)
    let g7 = &(&(&(&(-&left(&mp)) - &right(&pm)) - &ppp.scale(two)) + &prm) + &mrp;
    // −M_+Ω* e^{2iφ}(−σ+σ−ρ − ρσ−σ+ − 2σ−ρσ− + σ+ρσ− + σ−ρσ+)
    let g8 = &(&(&(&(-&left(&pm)) - &right(&mp)) - &mmm.scale(two)) + &prm) + &mrp;

    let e = C64::from_polar(1.0, -2.0 * sp.phi_l);
    let mut brace = g1.scale(C64::new(1.0 + sp.n_a, 0.0));
    brace += &g2.scale(C64::new(sp.n_a, 0.0));
    brace += &g3.scale(C64::new(1.0 + sp.n_p, 0.0));
    brace += &g4.scale(C64::new(sp.n_p, 0.0));
    brace -= &g5.scale(sp.m_a * e);
    brace -= &g6.scale(sp.m_a.conj() * e.conj());
    brace -= &g7.scale(sp.m_p * e);
    brace -= &g8.scale(sp.m_p.conj() * e.conj());

    let mut out = brace.scale(C64::new(-gamma / 4.0, 0.0));
    let cx = commutator(&b.sigma_x, rho).expect("2x2");
    out -= &cx.scale(C64::new(0.0, omega / 2.0));
    if omega_a != 0.0 {
        out -= &commutator(&b.sigma_z, rho).expect("2x2").scale(C64::new(0.0, omega_a / 2.0));
    }
    if sp.f != ZERO {
        let a = sp_ - sm;
        let f_term = &(&cx - &(&(&b.sigma_z * rho) * &a)) - &(&(&a * rho) * &b.sigma_z);
        out += &f_term.scale(sp.f);
    }
    if sp.g != ZERO {
        let g_term = commutator(&b.sigma_z, &cx).expect("2x2");
        out += &g_term.scale(sp.g);
    }
    out
}

/// Principal-value integral `P∫ f(Δ)/(Δ − pole) dΔ` over the real line.
///
/// The integrand is folded about the pole, integrated outside a symmetric
/// exclusion of half-width ε ∈ {1e-2, 1e-3, 1e-4}·`scale`, and the three
/// values are Richardson-extrapolated to ε → 0. The upper limit is doubled
/// until the tail contribution stops changing.
pub fn principal_value<F>(f: F, pole: f64, scale: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let g = |u: f64| (f(pole + u) - f(pole - u)) / u;
    let mut upper = 64.0 * scale.max(pole.abs()).max(1.0);
    let eps = [1e-2 * scale, 1e-3 * scale, 1e-4 * scale];
    let core_part = |lo: f64, hi: f64| adaptive_simpson(&g, lo, hi, tol * 1e-2, 50);
    // contribution between the largest ε and the running cutoff
    let mut body = core_part(eps[0], upper);
    let mut converged = false;
    for _ in 0..30 {
        let extra = core_part(upper, 2.0 * upper);
        body += extra;
        upper *= 2.0;
        if extra.abs() < tol {
            converged = true;
            break;
        }
    }
    if !converged || !body.is_finite() {
        return Err(Error::IntegrationFailure(alloc::format!(
            "principal-value tail did not converge (upper = {upper:.3e}, value = {body:.6e})"
        )));
    }
    let i0 = body;
    let i1 = i0 + core_part(eps[1], eps[0]);
    let i2 = i1 + core_part(eps[2], eps[1]);
    // I(ε) = I + aε + bε²: eliminate with the 10× spacing
    let r1 = (10.0 * i1 - i0) / 9.0;
    let r2 = (10.0 * i2 - i1) / 9.0;
    Ok((100.0 * r2 - r1) / 99.0)
}

fn adaptive_simpson<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson<G: Fn(f64) -> f64>(g: &G, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = g(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    fn recurse<G: Fn(f64) -> f64>(
        g: &G,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(g, a, fa, m, fm);
        let (rm, frm, right) = simpson(g, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(g, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                + recurse(g, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
        }
    }
    // split on a log scale so both small-u and large-u features resolve
    let mut total = 0.0;
    let mut lo = a;
    while lo < b {
        let hi = (lo * 4.0).max(lo + 1e-300).min(b);
        let (fa, fb) = (g(lo), g(hi));
        let (m, fm, whole) = simpson(g, lo, fa, hi, fb);
        total += recurse(g, lo, fa, hi, fb, m, fm, whole, tol, depth);
        lo = hi;
    }
    total
}

/// The `F` and `G` corrections with `K² = Γ/2π`. `n_of` and `m_of` take the
/// detuning `Δ = ω − ω_a`.
pub fn principal_value_fg<N, M>(n_of: N, m_of: M, omega: f64, gamma: f64, phi_l: f64) -> Result<(C64, C64)>
where
    N: Fn(f64) -> f64,
    M: Fn(f64) -> C64,
{
    let e = C64::from_polar(1.0, -2.0 * phi_l);
    let m_part = |d: f64| 2.0 * (m_of(d) * e).re;
    let scale = gamma.max(1e-3);
    let pv_m = principal_value(m_part, -omega, scale, 1e-10)?;
    let pv_n = principal_value(|d| 2.0 * n_of(d), -omega, scale, 1e-10)?;
    let pref = C64::new(0.0, -0.25 * gamma / (2.0 * PI));
    Ok((pref * (pv_m + pv_n), pref * pv_m))
}
