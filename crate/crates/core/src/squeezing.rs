//! Squeezing parameters, wave-packet envelopes, broadband noise moments and
//! truncation-error estimates.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{LN_10, PI};

#[allow(unused_imports)]
use num_traits::Float;
use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};

/// Squeezing magnitude and angle, `γ = r e^{2iφ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezeParams {
    r: f64,
    phi: f64,
}

impl SqueezeParams {
    /// Negative `r` is folded onto `r ≥ 0` by shifting `φ` by π/2, which
    /// leaves `γ` unchanged.
    pub fn new(r: f64, phi: f64) -> Result<Self> {
        if !r.is_finite() || !phi.is_finite() {
            return Err(invalid("squeezing parameters must be finite"));
        }
        if r < 0.0 {
            Ok(Self { r: -r, phi: phi + PI / 2.0 })
        } else {
            Ok(Self { r, phi })
        }
    }

    pub fn vacuum() -> Self {
        Self { r: 0.0, phi: 0.0 }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn cosh_r(&self) -> f64 {
        self.r.cosh()
    }

    pub fn sinh_r(&self) -> f64 {
        self.r.sinh()
    }

    pub fn gamma(&self) -> C64 {
        C64::from_polar(self.r, 2.0 * self.phi)
    }

    /// `e^{2iφ}`
    pub fn phase2(&self) -> C64 {
        C64::from_polar(1.0, 2.0 * self.phi)
    }
}

/// Stationary white-noise squeezing moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadbandParams {
    pub n: f64,
    pub m: C64,
}

impl BroadbandParams {
    pub fn new(n: f64, m: C64) -> Result<Self> {
        if n < 0.0 || !n.is_finite() {
            return Err(invalid("N must be a nonnegative real"));
        }
        if m.norm_sqr() > n * (n + 1.0) + 1e-12 {
            return Err(invalid("|M|² must not exceed N(N+1)"));
        }
        Ok(Self { n, m })
    }

    pub fn vacuum() -> Self {
        Self { n: 0.0, m: C64::new(0.0, 0.0) }
    }
}

/// `N = sinh²r`, `M = −e^{2iφ} sinh r cosh r`.
pub fn broadband_nm(p: &SqueezeParams) -> BroadbandParams {
    let (s, c) = (p.sinh_r(), p.cosh_r());
    BroadbandParams { n: s * s, m: -p.phase2() * (s * c) }
}

/// `10 log₁₀ e^{2r}`
pub fn r_to_db(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(invalid("r must be nonnegative"));
    }
    Ok(20.0 * r / LN_10)
}

pub fn db_to_r(db: f64) -> Result<f64> {
    if !(db >= 0.0) {
        return Err(invalid("decibels must be nonnegative"));
    }
    Ok(db * LN_10 / 20.0)
}

/// Population of a squeezed vacuum that lies above Fock level `n_max`.
pub fn discarded_population_fock(n_max: usize, r: f64) -> f64 {
    let r = r.abs();
    if r == 0.0 {
        return 0.0;
    }
    let t2 = r.tanh().powi(2);
    let k0 = n_max / 2 + 1;
    let p0 = 1.0 / r.cosh();
    // p_{k+1} / p_k = tanh²r (2k+1)/(2k+2)
    let next = |p: f64, k: usize| p * t2 * (2 * k + 1) as f64 / (2 * k + 2) as f64;
    if t2 > 0.9 {
        let mut head = 0.0;
        let mut p = p0;
        for k in 0..k0 {
            head += p;
            p = next(p, k);
        }
        return (1.0 - head).clamp(0.0, 1.0);
    }
    let mut p = p0;
    for k in 0..k0 {
        p = next(p, k);
    }
    let mut tail = 0.0f64;
    let mut k = k0;
    while p > 1e-16 * tail.max(f64::MIN_POSITIVE) && k < 100_000 {
        tail += p;
        p = next(p, k);
        k += 1;
    }
    tail.clamp(0.0, 1.0)
}

/// `((cosh r − 1)/(cosh r + 1))^{n_max+1}`
pub fn discarded_population_squeezed(n_max: usize, r: f64) -> f64 {
    let c = r.cosh();
    ((c - 1.0) / (c + 1.0)).powi(n_max as i32 + 1)
}

/// Smallest `n_max` whose squeezed-basis discarded population is `≤ eps`.
pub fn nmax_for_tolerance(eps: f64, r: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        if eps >= 1.0 {
            return Ok(0);
        }
        return Err(invalid("tolerance must lie in (0, 1)"));
    }
    if r == 0.0 {
        return Ok(0);
    }
    let c = r.abs().cosh();
    let denom = (c + 1.0).ln() - (c - 1.0).ln();
    let est = (-eps.ln() / denom - 1.0).ceil().max(0.0) as usize;
    // guard against rounding at exact powers
    let mut n = est.saturating_sub(1);
    while discarded_population_squeezed(n, r) > eps {
        n += 1;
    }
    Ok(n)
}

/// Fock amplitudes `⟨n|S(r,φ)|0⟩` for `n = 0..=n_max`.
pub fn squeezed_vacuum_amplitudes(sq: &SqueezeParams, n_max: usize) -> Vec<C64> {
    squeezed_amplitudes_with_sign(sq, n_max, -1.0)
}

/// Amplitudes `⟨n_γ|vac⟩ = ⟨n|S†|0⟩` of the field vacuum in the squeezed
/// Fock basis, plus the population missing above `n_max`.
pub fn vacuum_in_squeezed_basis(sq: &SqueezeParams, n_max: usize) -> (Vec<C64>, f64) {
    let a = squeezed_amplitudes_with_sign(sq, n_max, 1.0);
    let kept: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    (a, (1.0 - kept).max(0.0))
}

fn squeezed_amplitudes_with_sign(sq: &SqueezeParams, n_max: usize, sign: f64) -> Vec<C64> {
    let mut out = alloc::vec![C64::new(0.0, 0.0); n_max + 1];
    let ratio = sq.phase2() * (sign * sq.r().tanh());
    let mut amp = C64::new(1.0 / sq.cosh_r().sqrt(), 0.0);
    let mut k = 0usize;
    while 2 * k <= n_max {
        out[2 * k] = amp;
        // √((2k+2)!)/(2^{k+1}(k+1)!) over √((2k)!)/(2^k k!) = √((2k+1)(2k+2))/(2(k+1))
        let f = (((2 * k + 1) * (2 * k + 2)) as f64).sqrt() / (2 * (k + 1)) as f64;
        amp = amp * ratio * f;
        k += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// `1/√T` on `[0, T)`.
    Square { duration: f64 },
    /// Gaussian in `|ξ|²` with standard deviation `sigma`, truncated at
    /// `center ± 5σ` and renormalized.
    Gaussian { center: f64, sigma: f64 },
    /// Linearly interpolated samples, renormalized.
    Custom { times: Vec<f64>, values: Vec<C64> },
}

/// Normalized temporal mode `ξ_t`, optionally detuned by `Δ_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavePacket {
    shape: Shape,
    detuning: f64,
    norm: f64,
}

impl WavePacket {
    pub fn square(duration: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(invalid("packet duration must be positive"));
        }
        Ok(Self { shape: Shape::Square { duration }, detuning: 0.0, norm: 1.0 / duration.sqrt() })
    }

    pub fn gaussian(center: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && center.is_finite()) {
            return Err(invalid("gaussian width must be positive"));
        }
        if center - 5.0 * sigma < -1e-12 {
            return Err(invalid("gaussian packet must start at t ≥ 0 (center ≥ 5σ)"));
        }
        let mass = libm::erf(5.0 / core::f64::consts::SQRT_2);
        let norm = 1.0 / ((2.0 * PI * sigma * sigma).sqrt() * mass).sqrt();
        Ok(Self { shape: Shape::Gaussian { center, sigma }, detuning: 0.0, norm })
    }

    pub fn custom(times: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(invalid("custom packet needs at least two (t, ξ) samples"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("custom packet times must be strictly increasing"));
        }
        if times[0] < 0.0 {
            return Err(invalid("custom packet must start at t ≥ 0"));
        }
        // exact ∫|ξ|² for piecewise-linear ξ
        let mass: f64 = times
            .windows(2)
            .zip(values.windows(2))
            .map(|(t, v)| (t[1] - t[0]) * (v[0].norm_sqr() + (v[0].conj() * v[1]).re + v[1].norm_sqr()) / 3.0)
            .sum();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(invalid("custom packet has zero norm"));
        }
        Ok(Self { shape: Shape::Custom { times, values }, detuning: 0.0, norm: 1.0 / mass.sqrt() })
    }

    /// Applies `ξ_t ↦ e^{−iΔ_c t} ξ_t`.
    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn detuning(&self) -> f64 {
        self.detuning
    }

    /// Time interval outside which `ξ_t = 0`.
    pub fn support(&self) -> (f64, f64) {
        match &self.shape {
            Shape::Square { duration } => (0.0, *duration),
            Shape::Gaussian { center, sigma } => (center - 5.0 * sigma, center + 5.0 * sigma),
            Shape::Custom { times, .. } => (times[0], times[times.len() - 1]),
        }
    }

    pub fn duration(&self) -> f64 {
        let (a, b) = self.support();
        b - a
    }

    fn envelope(&self, t: f64) -> C64 {
        match &self.shape {
            Shape::Square { duration } => {
                if (0.0..*duration).contains(&t) {
                    C64::new(self.norm, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }
            Shape::Gaussian { center, sigma } => {
                let d = t - center;
                if d.abs() > 5.0 * sigma {
                    C64::new(0.0, 0.0)
                } else {
                    C64::new(self.norm * (-d * d / (4.0 * sigma * sigma)).exp(), 0.0)
                }
            }
            Shape::Custom { times, values } => {
                let n = times.len();
                if t < times[0] || t > times[n - 1] {
                    return C64::new(0.0, 0.0);
                }
                let i = match times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
                    Ok(i) => return values[i] * self.norm,
                    Err(i) => i - 1,
                };
                let s = (t - times[i]) / (times[i + 1] - times[i]);
                (values[i] * (1.0 - s) + values[i + 1] * s) * self.norm
            }
        }
    }

    pub fn sample(&self, t: f64) -> C64 {
        let e = self.envelope(t);
        if self.detuning == 0.0 {
            e
        } else {
            e * C64::from_polar(1.0, -self.detuning * t)
        }
    }

    /// Upper bound on `|ξ_t|`.
    pub fn max_abs(&self) -> f64 {
        match &self.shape {
            Shape::Square { .. } | Shape::Gaussian { .. } => self.norm,
            Shape::Custom { values, .. } => values.iter().map(|v| v.norm()).fold(0.0, f64::max) * self.norm,
        }
    }

    /// `∫|ξ_t|² dt` by midpoint sampling on `steps` uniform cells of `[t0, t1]`.
    pub fn grid_norm(&self, t0: f64, t1: f64, steps: usize) -> f64 {
        let h = (t1 - t0) / steps as f64;
        (0..steps).map(|k| self.sample(t0 + (k as f64 + 0.5) * h).norm_sqr()).sum::<f64>() * h
    }
}

/// Spectral window of the main peak of a square packet, `Δ_c ± 2π/T`.
pub fn wavepacket_bandwidth_note(wp: &WavePacket) -> Result<(f64, f64)> {
    match wp.shape {
        Shape::Square { duration } => {
            let half = if duration.is_infinite() { 0.0 } else { 2.0 * PI / duration };
            Ok((wp.detuning - half, wp.detuning + half))
        }
        _ => Err(Error::Unsupported(String::from("bandwidth note is defined for square packets only"))),
    }
}

/// Parses whitespace-separated `time re im` lines; `#` starts a comment.
pub fn parse_packet_samples(text: &str) -> Result<(Vec<f64>, Vec<C64>)> {
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| invalid(alloc::format!("line {}: cannot parse '{s}'", lineno + 1)))
        };
        match fields.as_slice() {
            [t, re, im] => {
                times.push(parse(t)?);
                values.push(C64::new(parse(re)?, parse(im)?));
            }
            [t, re] => {
                times.push(parse(t)?);
                values.push(C64::new(parse(re)?, 0.0));
            }
            _ => return Err(invalid(alloc::format!("line {}: expected 'time re im'", lineno + 1))),
        }
    }
    Ok((times, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decibel_conversions() {
        assert!((r_to_db(0.5181).unwrap() - 4.50).abs() < 5e-3);
        assert!((r_to_db(2f64.ln()).unwrap() - 6.02).abs() < 5e-3);
        assert_eq!(r_to_db(0.0).unwrap(), 0.0);
        assert!(r_to_db(-0.1).is_err());
        assert!(db_to_r(-1.0).is_err());
    }

    #[test]
    fn broadband_moments() {
        let bb = broadband_nm(&SqueezeParams::vacuum());
        assert_eq!((bb.n, bb.m), (0.0, C64::new(0.0, 0.0)));
        let bb = broadband_nm(&SqueezeParams::new(0.0957, 0.0).unwrap());
        assert!((bb.n - 0.00920).abs() < 5e-5, "{}", bb.n);
        assert!((bb.m.re + 0.09629).abs() < 5e-6, "{}", bb.m);
        assert!((bb.m.norm_sqr() - bb.n * (bb.n + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn negative_r_is_folded() {
        let a = SqueezeParams::new(-0.3, 0.2).unwrap();
        let b = SqueezeParams::new(0.3, 0.2 + PI / 2.0).unwrap();
        assert!((a.gamma() - b.gamma()).norm() < 1e-15);
        assert!((a.gamma() - C64::from_polar(-0.3, 0.4)).norm() < 1e-15);
    }

    #[test]
    fn squeezed_truncation_examples() {
        let r = 2f64.ln();
        assert!((discarded_population_squeezed(0, r) - 1.0 / 9.0).abs() < 1e-15);
        assert!((discarded_population_squeezed(3, r) - (1.0f64 / 9.0).powi(4)).abs() < 1e-18);
        assert_eq!(discarded_population_squeezed(4, 0.0), 0.0);
        assert_eq!(nmax_for_tolerance(0.2, r).unwrap(), 0);
        assert_eq!(nmax_for_tolerance(1e-4, r).unwrap(), 4);
        assert_eq!(nmax_for_tolerance(0.999_999, r).unwrap(), 0);
        assert_eq!(nmax_for_tolerance(1e-4, 0.0).unwrap(), 0);
        assert_eq!(nmax_for_tolerance(1e-4, 0.5181).unwrap(), 3);
    }

    #[test]
    fn fock_truncation_examples() {
        for n in 0..6 {
            assert_eq!(discarded_population_fock(n, 0.0), 0.0);
        }
        let r = 0.7;
        assert!((discarded_population_fock(0, r) - (1.0 - 1.0 / r.cosh())).abs() < 1e-14);
        assert_eq!(discarded_population_fock(0, r), discarded_population_fock(1, r));
        assert_eq!(discarded_population_fock(4, r), discarded_population_fock(5, r));
    }

    #[test]
    fn fock_truncation_matches_amplitudes() {
        for &r in &[0.1, 0.5181, 2f64.ln(), 1.6] {
            let sq = SqueezeParams::new(r, 0.3).unwrap();
            let amps = squeezed_vacuum_amplitudes(&sq, 12);
            for n_max in 0..12 {
                let kept: f64 = amps[..=n_max].iter().map(|a| a.norm_sqr()).sum();
                let d = discarded_population_fock(n_max, r);
                assert!((1.0 - kept - d).abs() < 1e-12, "r={r} n={n_max}");
            }
            assert!(amps.iter().skip(1).step_by(2).all(|a| a.norm() == 0.0));
        }
    }

    #[test]
    fn squeezed_amplitude_sign() {
        // ⟨2|S|0⟩ = −e^{2iφ} tanh r / (√2 √cosh r)
        let sq = SqueezeParams::new(0.4, 0.25).unwrap();
        let a = squeezed_vacuum_amplitudes(&sq, 2);
        let expected = -sq.phase2() * (0.4f64.tanh() / (2f64.sqrt() * 0.4f64.cosh().sqrt()));
        assert!((a[2] - expected).norm() < 1e-15);
        let (v, miss) = vacuum_in_squeezed_basis(&sq, 2);
        assert!((v[2] + expected).norm() < 1e-15);
        assert!((miss - discarded_population_fock(2, 0.4)).abs() < 1e-14);
    }

    #[test]
    fn bandwidth_notes() {
        let (lo, hi) = wavepacket_bandwidth_note(&WavePacket::square(4.0).unwrap()).unwrap();
        assert!((lo + PI / 2.0).abs() < 1e-15 && (hi - PI / 2.0).abs() < 1e-15);
        let omega = 8.0;
        let wp = WavePacket::square(2.0).unwrap().with_detuning(-omega);
        let (lo, hi) = wavepacket_bandwidth_note(&wp).unwrap();
        assert!((lo - (-omega - PI)).abs() < 1e-12 && (hi - (-omega + PI)).abs() < 1e-12);
        let (lo, hi) = wavepacket_bandwidth_note(&WavePacket::square(f64::INFINITY).unwrap()).unwrap();
        assert_eq!((lo, hi), (0.0, 0.0));
        let g = WavePacket::gaussian(5.0, 1.0).unwrap();
        assert!(matches!(wavepacket_bandwidth_note(&g), Err(Error::Unsupported(_))));
    }

    #[test]
    fn packet_normalization() {
        let sq = WavePacket::square(4.0).unwrap();
        assert!((sq.grid_norm(0.0, 4.0, 4000) - 1.0).abs() < 1e-12);
        assert_eq!(sq.sample(4.0), C64::new(0.0, 0.0));
        let g = WavePacket::gaussian(5.0, 1.0).unwrap();
        assert!((g.grid_norm(0.0, 10.0, 10_000) - 1.0).abs() < 1e-6);
        let c = WavePacket::custom(alloc::vec![0.0, 1.0, 3.0], alloc::vec![C64::new(0.0, 0.0), C64::new(2.0, 1.0), C64::new(0.0, 0.0)]).unwrap();
        assert!((c.grid_norm(0.0, 3.0, 30_000) - 1.0).abs() < 1e-6);
        let d = g.clone().with_detuning(3.0);
        for &t in &[2.0, 5.0, 7.3] {
            assert!((d.sample(t).norm() - g.sample(t).norm()).abs() < 1e-15);
        }
    }

    #[test]
    fn packet_parsing() {
        let text = "# t re im\n0 0 0\n1.0 1.5 -0.5  # peak\n\n2 0 0\n";
        let (t, v) = parse_packet_samples(text).unwrap();
        assert_eq!(t, alloc::vec![0.0, 1.0, 2.0]);
        assert_eq!(v[1], C64::new(1.5, -0.5));
        assert!(parse_packet_samples("0 a 1").is_err());
        assert!(WavePacket::custom(alloc::vec![1.0, 0.5], alloc::vec![C64::new(1.0, 0.0); 2]).is_err());
    }
}
