//! Two-time correlations through the regression hierarchy and
//! reference-time dependent fluorescence spectra.
//!
//! Normalization: `S(ω, t) = Re ∫₀^{τmax} e^{iωτ} C(τ) w(τ) dτ`, a one-sided
//! transform. For `C(τ) = e^{−Γτ/2}` this is a Lorentzian of peak `2/Γ`, and
//! `∫ S dω / 2π = C(0)/2`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use num_complex::Complex64 as C64;

use crate::error::{invalid, Result};
use crate::hierarchy::{reduce_state, FieldState, Hierarchy, StateTensor};
use crate::integrator::{HierarchyStepper, TimeGrid};
use crate::operator::{dense, CMatrix, ZERO};

/// `Λ^{(m,n)}_{t+τ,t}`; blocks are generally not Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimeTensor {
    pub reference_time: f64,
    pub tensor: StateTensor,
}

/// Right-multiplies every block by `a`.
pub fn qrt_boundary(st: &StateTensor, a: &CMatrix, reference_time: f64) -> Result<TwoTimeTensor> {
    let d = st.sys_dim();
    if a.dim() != d {
        return Err(invalid("operator and state tensor dimensions differ"));
    }
    let mut out = st.clone();
    for m in 0..=st.n_max() {
        for n in 0..=st.n_max() {
            dense::mul_into(d, st.block_slice(m, n), a.as_slice(), out.block_slice_mut(m, n));
        }
    }
    Ok(TwoTimeTensor { reference_time, tensor: out })
}

/// `C(τ) = ⟨A(t)B(t+τ)⟩` on the nodes of `tau`, together with the
/// factorized part `⟨A⟩_t ⟨B⟩_{t+τ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub reference_time: f64,
    pub taus: Vec<f64>,
    pub values: Vec<C64>,
    pub coherent: Vec<C64>,
}

impl Correlation {
    /// `C(τ) − ⟨A⟩⟨B⟩`
    pub fn incoherent(&self) -> Vec<C64> {
        self.values.iter().zip(&self.coherent).map(|(c, k)| c - k).collect()
    }
}

/// Evolves `st` (the tensor at time `t`) through the regression hierarchy.
///
/// `tau` must start at zero. The envelope is sampled at absolute time
/// `t + τ`, so correlations keep evolving under vacuum dynamics after the
/// packet has passed.
pub fn correlation_from(
    hier: &Hierarchy,
    field: &FieldState,
    st: &StateTensor,
    t: f64,
    tau: &TimeGrid,
    a: &CMatrix,
    b: &CMatrix,
) -> Result<Correlation> {
    if tau.t0() != 0.0 {
        return Err(invalid("tau grid must start at 0"));
    }
    if b.dim() != hier.sys_dim() {
        return Err(invalid("operator and system dimensions differ"));
    }
    let mut lam = qrt_boundary(st, a, t)?.tensor;
    let mut rho = st.clone();
    let a_mean = a.expectation(&reduce_state(st, field)?);
    let mut stepper = HierarchyStepper::new(hier);
    let h = tau.h();
    let mut taus = Vec::with_capacity(tau.steps() + 1);
    let mut values = Vec::with_capacity(tau.steps() + 1);
    let mut coherent = Vec::with_capacity(tau.steps() + 1);
    let mut record = |k: usize, lam: &StateTensor, rho: &StateTensor| -> Result<()> {
        taus.push(tau.node(k));
        values.push((b * &reduce_state(lam, field)?).trace());
        coherent.push(a_mean * b.expectation(&reduce_state(rho, field)?));
        Ok(())
    };
    record(0, &lam, &rho)?;
    for k in 0..tau.steps() {
        let ts = t + tau.node(k);
        stepper.step(lam.as_flat_mut(), ts, h)?;
        stepper.step(rho.as_flat_mut(), ts, h)?;
        record(k + 1, &lam, &rho)?;
    }
    Ok(Correlation { reference_time: t, taus, values, coherent })
}

/// Propagates `st0` from 0 to `t`, then evaluates the correlation.
pub fn two_time_correlation(
    hier: &Hierarchy,
    field: &FieldState,
    st0: &StateTensor,
    t: f64,
    tau: &TimeGrid,
    a: &CMatrix,
    b: &CMatrix,
) -> Result<Correlation> {
    let st = advance(hier, st0, 0.0, t, tau.h())?;
    correlation_from(hier, field, &st, t, tau, a, b)
}

fn advance(hier: &Hierarchy, st: &StateTensor, t0: f64, t1: f64, h_max: f64) -> Result<StateTensor> {
    let mut st = st.clone();
    if t1 > t0 {
        let grid = TimeGrid::with_max_step(t0, t1, h_max)?;
        let mut stepper = HierarchyStepper::new(hier);
        for k in 0..grid.steps() {
            stepper.step(st.as_flat_mut(), grid.node(k), grid.h())?;
        }
    } else if t1 < t0 {
        return Err(invalid("reference times must be nondecreasing"));
    }
    Ok(st)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Rect,
    /// `½(1 + cos(πτ/τmax))`, the falling half of a Hann window.
    Hann,
}

impl Window {
    pub fn weight(&self, tau: f64, tau_max: f64) -> f64 {
        match self {
            Self::Rect => 1.0,
            Self::Hann => 0.5 * (1.0 + (PI * tau / tau_max).cos()),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Rect => "rect",
            Self::Hann => "hann",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub reference_time: f64,
    pub omega: Vec<f64>,
    pub values: Vec<f64>,
    pub window: Window,
    pub tau_max: f64,
    pub coherent_subtracted: bool,
}

impl SpectrumResult {
    /// `omega,S` with `#` header lines carrying the metadata and `extra`.
    pub fn to_csv(&self, extra: &[(&str, String)]) -> String {
        use core::fmt::Write;
        let mut s = format!(
            "# t={}\n# tau_max={}\n# window={}\n# coherent_subtracted={}\n",
            self.reference_time,
            self.tau_max,
            self.window.as_str(),
            self.coherent_subtracted
        );
        for (k, v) in extra {
            let _ = writeln!(s, "# {k}={v}");
        }
        s.push_str("omega,S\n");
        for (w, v) in self.omega.iter().zip(&self.values) {
            let _ = writeln!(s, "{},{}", crate::csv_number(*w), crate::csv_number(*v));
        }
        s
    }

    /// Index of the largest value within `[lo, hi]`.
    pub fn argmax_in(&self, lo: f64, hi: f64) -> Option<usize> {
        (0..self.omega.len())
            .filter(|&i| self.omega[i] >= lo && self.omega[i] <= hi)
            .max_by(|&i, &j| self.values[i].total_cmp(&self.values[j]))
    }

    /// `∫ S dω / 2π` by the trapezoid rule.
    pub fn total_power(&self) -> f64 {
        trapezoid(&self.omega, &self.values) / (2.0 * PI)
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// `S(ω) = Re ∫₀^{τmax} e^{iωτ} C(τ) w(τ) dτ` by the trapezoid rule.
pub fn fluorescence_spectrum(c: &[C64], dtau: f64, omega: &[f64], window: Window) -> Result<Vec<f64>> {
    if c.len() < 2 || !(dtau > 0.0) {
        return Err(invalid("need at least two correlation samples and dtau > 0"));
    }
    if omega.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("omega grid must be strictly increasing"));
    }
    let n = c.len();
    let tau_max = dtau * (n - 1) as f64;
    let weighted: Vec<C64> = c
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let edge = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            z * (edge * dtau * window.weight(k as f64 * dtau, tau_max))
        })
        .collect();
    Ok(omega
        .iter()
        .map(|&w| {
            // rotate by e^{iω dτ} incrementally
            let step = C64::from_polar(1.0, w * dtau);
            let mut phase = C64::new(1.0, 0.0);
            let mut acc = ZERO;
            for (k, z) in weighted.iter().enumerate() {
                if k % 256 == 0 {
                    phase = C64::from_polar(1.0, w * dtau * k as f64);
                }
                acc += z * phase;
                phase *= step;
            }
            acc.re
        })
        .collect())
}

/// Spectrum of a correlation, optionally with the coherent part removed.
pub fn spectrum_of(corr: &Correlation, omega: &[f64], window: Window, subtract_coherent: bool) -> Result<SpectrumResult> {
    let c = if subtract_coherent { corr.incoherent() } else { corr.values.clone() };
    let dtau = corr.taus.get(1).copied().unwrap_or(0.0) - corr.taus[0];
    Ok(SpectrumResult {
        reference_time: corr.reference_time,
        omega: omega.to_vec(),
        values: fluorescence_spectrum(&c, dtau, omega, window)?,
        window,
        tau_max: *corr.taus.last().unwrap_or(&0.0),
        coherent_subtracted: subtract_coherent,
    })
}

/// Settings shared by every spectrum of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSettings {
    pub tau: TimeGrid,
    pub omega: Vec<f64>,
    pub window: Window,
    pub subtract_coherent: bool,
}

/// `⟨σ+(t)σ−(t+τ)⟩` spectra for each reference time in `t_list`.
///
/// The state is carried forward once through the sorted reference times.
pub fn reference_time_sweep(
    hier: &Hierarchy,
    field: &FieldState,
    st0: &StateTensor,
    t_list: &[f64],
    settings: &SpectrumSettings,
    sigma_plus: &CMatrix,
) -> Result<Vec<SpectrumResult>> {
    if t_list.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("reference times must be sorted"));
    }
    let sigma_minus = sigma_plus.dagger();
    let mut st = st0.clone();
    let mut now = 0.0;
    let mut out = Vec::with_capacity(t_list.len());
    for &t in t_list {
        st = advance(hier, &st, now, t, settings.tau.h())?;
        now = t;
        let corr = correlation_from(hier, field, &st, t, &settings.tau, sigma_plus, &sigma_minus)?;
        out.push(spectrum_of(&corr, &settings.omega, settings.window, settings.subtract_coherent)?);
    }
    Ok(out)
}

/// `max|a − b| / max|b|` between two spectra on the same grid.
pub fn relative_sup_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// `n` points evenly spaced on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::init_tensor;
    use crate::markovian::{broadband_rhs, steady_state};
    use crate::operator::{two_level_basis, SlhTriple};
    use crate::squeezing::{BroadbandParams, WavePacket};

    fn driven(omega: f64) -> SlhTriple {
        let b = two_level_basis();
        SlhTriple::with_identity_scattering(b.sigma_minus.clone(), b.sigma_x.scale(C64::new(omega / 2.0, 0.0))).unwrap()
    }

    #[test]
    fn boundary_cases() {
        let b = two_level_basis();
        let st = init_tensor(&b.excited, 2).unwrap();
        assert_eq!(qrt_boundary(&st, &b.identity, 0.0).unwrap().tensor, st);
        let lam = qrt_boundary(&st, &b.sigma_plus, 0.0).unwrap().tensor;
        for n in 0..=2 {
            // |e⟩⟨e|σ+ = |e⟩⟨g|
            assert_eq!(lam.block(n, n), b.sigma_plus.clone());
        }
        let rho = b.from_bloch([0.3, -0.2, 0.1]);
        let st = init_tensor(&rho, 1).unwrap();
        let lam = qrt_boundary(&st, &b.sigma_x, 0.0).unwrap().tensor;
        assert!((lam.block(0, 0).trace() - b.sigma_x.expectation(&rho)).norm() < 1e-15);
    }

    #[test]
    fn vacuum_coherence_decay() {
        let b = two_level_basis();
        let hier = Hierarchy::fock(driven(0.0), WavePacket::square(1.0).unwrap(), 1);
        let field = FieldState::ground(1);
        let st0 = init_tensor(&b.excited, 1).unwrap();
        let tau = TimeGrid::new(0.0, 4.0, 800).unwrap();
        let corr = two_time_correlation(&hier, &field, &st0, 0.5, &tau, &b.sigma_plus, &b.sigma_minus).unwrap();
        let pe = (-0.5f64).exp();
        for (t, c) in corr.taus.iter().zip(&corr.values) {
            assert!((c - C64::new(pe * (-t / 2.0).exp(), 0.0)).norm() < 1e-9);
        }
        // B = I gives the constant ⟨A⟩
        let corr = two_time_correlation(&hier, &field, &st0, 0.5, &tau, &b.sigma_z, &b.identity).unwrap();
        let z = 2.0 * pe - 1.0;
        assert!(corr.values.iter().all(|c| (c - C64::new(z, 0.0)).norm() < 1e-8));
    }

    #[test]
    fn stationary_hermitian_symmetry() {
        let b = two_level_basis();
        let slh = driven(3.0);
        let ss = steady_state(|r| broadband_rhs(r, &slh, &BroadbandParams::vacuum()), 2).unwrap();
        let hier = Hierarchy::fock(slh, WavePacket::square(1.0).unwrap(), 0);
        let field = FieldState::ground(0);
        let st = init_tensor(&ss, 0).unwrap();
        let tau = TimeGrid::new(0.0, 3.0, 600).unwrap();
        // ⟨σ+(t)σ−(t+τ)⟩ vs ⟨σ+(t+τ)σ−(t)⟩ = tr(σ+ e^{ℒτ}(σ−ρ))
        let c1 = correlation_from(&hier, &field, &st, 0.0, &tau, &b.sigma_plus, &b.sigma_minus).unwrap();
        let mut lam = st.clone();
        let lb = &b.sigma_minus * &ss;
        lam.set_block(0, 0, &lb);
        let mut stepper = HierarchyStepper::new(&hier);
        let mut c2 = alloc::vec![(&b.sigma_plus * &lb).trace()];
        for k in 0..tau.steps() {
            stepper.step(lam.as_flat_mut(), tau.node(k), tau.h()).unwrap();
            c2.push((&b.sigma_plus * &lam.block(0, 0)).trace());
        }
        for (x, y) in c1.values.iter().zip(&c2) {
            assert!((x - y.conj()).norm() < 1e-10);
        }
    }

    #[test]
    fn lorentzian_transform() {
        let dtau = 0.01;
        let c: Vec<C64> = (0..=4000).map(|k| C64::new((-(k as f64) * dtau / 2.0).exp(), 0.0)).collect();
        let omega = linspace(-5.0, 5.0, 401);
        let s = fluorescence_spectrum(&c, dtau, &omega, Window::Rect).unwrap();
        let peak = s[200];
        assert!((peak - 2.0).abs() < 0.04, "{peak}");
        // HWHM 1/2
        let half = s[omega.iter().position(|&w| (w - 0.5).abs() < 1e-9).unwrap()];
        assert!((half / peak - 0.5).abs() < 0.02);
        let res = SpectrumResult {
            reference_time: 0.0,
            omega: linspace(-400.0, 400.0, 80001),
            values: fluorescence_spectrum(&c, dtau, &linspace(-400.0, 400.0, 80001), Window::Rect).unwrap(),
            window: Window::Rect,
            tau_max: 40.0,
            coherent_subtracted: false,
        };
        assert!((res.total_power() - 0.5).abs() < 0.025, "{}", res.total_power());
        let zero = fluorescence_spectrum(&[ZERO; 10], dtau, &omega, Window::Hann).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        assert!(fluorescence_spectrum(&c, dtau, &[1.0, 0.0], Window::Rect).is_err());
    }

    #[test]
    fn mollow_triplet() {
        let b = two_level_basis();
        let slh = driven(8.0);
        let ss = steady_state(|r| broadband_rhs(r, &slh, &BroadbandParams::vacuum()), 2).unwrap();
        let hier = Hierarchy::fock(slh, WavePacket::square(1.0).unwrap(), 0);
        let settings = SpectrumSettings {
            tau: TimeGrid::new(0.0, 12.0, 2400).unwrap(),
            omega: linspace(-16.0, 16.0, 321),
            window: Window::Rect,
            subtract_coherent: true,
        };
        let st = init_tensor(&ss, 0).unwrap();
        let sp = reference_time_sweep(&hier, &FieldState::ground(0), &st, &[0.0], &settings, &b.sigma_plus).unwrap();
        let s = &sp[0];
        let cell = 0.1 + 1e-9;
        let centre = s.argmax_in(-2.0, 2.0).unwrap();
        let lo = s.argmax_in(-12.0, -4.0).unwrap();
        let hi = s.argmax_in(4.0, 12.0).unwrap();
        assert!(s.omega[centre].abs() <= cell);
        assert!((s.omega[lo] + 8.0).abs() <= cell && (s.omega[hi] - 8.0).abs() <= cell);
        assert!((s.values[lo] - s.values[hi]).abs() / s.values[hi] < 0.03);
        assert!(s.values[centre] > s.values[hi]);
    }

    #[test]
    fn stationary_sweep_is_flat() {
        let b = two_level_basis();
        let slh = driven(4.0);
        let ss = steady_state(|r| broadband_rhs(r, &slh, &BroadbandParams::vacuum()), 2).unwrap();
        let hier = Hierarchy::fock(slh, WavePacket::square(1.0).unwrap(), 0);
        let settings = SpectrumSettings {
            tau: TimeGrid::new(0.0, 8.0, 1600).unwrap(),
            omega: linspace(-8.0, 8.0, 81),
            window: Window::Hann,
            subtract_coherent: false,
        };
        let st = init_tensor(&ss, 0).unwrap();
        let sp = reference_time_sweep(&hier, &FieldState::ground(0), &st, &[0.0, 1.0, 2.5], &settings, &b.sigma_plus).unwrap();
        assert!(relative_sup_diff(&sp[1].values, &sp[0].values) < 1e-8);
        assert!(relative_sup_diff(&sp[2].values, &sp[0].values) < 1e-8);
        assert!(sp[0].to_csv(&[("omega_drive", "4".into())]).contains("omega,S\n"));
    }
}
