//! Dense complex matrices, superoperators, Choi matrices and the two-level
//! atom operator basis.
//!
//! Vectorization convention (used everywhere in the crate): `vec(ρ)` stacks
//! the columns of `ρ` top to bottom, so entry `ρ[(r, c)]` lands at index
//! `c * dim + r`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use nalgebra::DMatrix;
#[allow(unused_imports)]
use num_traits::Float;
use num_complex::Complex64 as C64;

use crate::error::{invalid, Result};

pub(crate) const I: C64 = C64::new(0.0, 1.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);

/// Square complex matrix with row-major storage.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major data; rejects non-square shapes.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows != cols {
            return Err(invalid(alloc::format!("matrix must be square, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(invalid(alloc::format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { dim: rows, data })
    }

    pub fn from_rows<const N: usize>(rows: [[C64; N]; N]) -> Self {
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self { dim: N, data }
    }

    /// Real-valued convenience constructor.
    pub fn from_real_rows<const N: usize>(rows: [[f64; N]; N]) -> Self {
        let data = rows.iter().flat_map(|r| r.iter().map(|&x| C64::new(x, 0.0))).collect();
        Self { dim: N, data }
    }

    /// `|a⟩⟨b|` as a `dim`-dimensional matrix unit.
    pub fn unit(dim: usize, row: usize, col: usize) -> Self {
        let mut m = Self::zeros(dim);
        m[(row, col)] = ONE;
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub(crate) fn from_slice(dim: usize, data: &[C64]) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        Self { dim, data: data.to_vec() }
    }

    pub fn dagger(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for r in 0..d {
            for c in 0..d {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "matmul dimension mismatch");
        let mut out = Self::zeros(self.dim);
        dense::mul_into(self.dim, &self.data, &rhs.data, &mut out.data);
        out
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Spectral norm (largest singular value).
    pub fn operator_norm(&self) -> f64 {
        let gram = self.dagger().matmul(self);
        let ev = hermitian_eigenvalues(&gram).expect("gram matrix is square");
        ev.last().copied().unwrap_or(0.0).max(0.0).sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.dagger()) <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.dagger().matmul(self).max_abs_diff(&Self::identity(self.dim)) <= tol
    }

    /// `(m + m†) / 2`
    pub fn hermitian_part(&self) -> Self {
        (self + &self.dagger()).scale(C64::new(0.5, 0.0))
    }

    /// Column-stacked vectorization.
    pub fn vec(&self) -> Vec<C64> {
        let d = self.dim;
        let mut v = Vec::with_capacity(d * d);
        for c in 0..d {
            for r in 0..d {
                v.push(self[(r, c)]);
            }
        }
        v
    }

    /// Inverse of [`CMatrix::vec`].
    pub fn unvec(dim: usize, v: &[C64]) -> Self {
        assert_eq!(v.len(), dim * dim, "unvec length mismatch");
        let mut m = Self::zeros(dim);
        for c in 0..dim {
            for r in 0..dim {
                m[(r, c)] = v[c * dim + r];
            }
        }
        m
    }

    /// `tr(self · rho)`
    pub fn expectation(&self, rho: &Self) -> C64 {
        assert_eq!(self.dim, rho.dim);
        let d = self.dim;
        let mut acc = ZERO;
        for i in 0..d {
            for k in 0..d {
                acc += self[(i, k)] * rho[(k, i)];
            }
        }
        acc
    }

    pub fn is_density_matrix(&self, tol: f64) -> bool {
        if !self.is_hermitian(tol) || (self.trace() - ONE).norm() > tol {
            return false;
        }
        match hermitian_eigenvalues(self) {
            Ok(ev) => ev.first().map_or(true, |&e| e >= -tol),
            Err(_) => false,
        }
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.dim + c]
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{}) [", self.dim, self.dim)?;
        for r in 0..self.dim {
            write!(f, "  ")?;
            for c in 0..self.dim {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

macro_rules! elementwise {
    ($tr:ident, $method:ident, $op:tt) => {
        impl $tr<&CMatrix> for &CMatrix {
            type Output = CMatrix;
            fn $method(self, rhs: &CMatrix) -> CMatrix {
                assert_eq!(self.dim, rhs.dim, "dimension mismatch");
                CMatrix {
                    dim: self.dim,
                    data: self.data.iter().zip(&rhs.data).map(|(a, b)| a $op b).collect(),
                }
            }
        }
        impl $tr<CMatrix> for CMatrix {
            type Output = CMatrix;
            fn $method(self, rhs: CMatrix) -> CMatrix {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&CMatrix> for CMatrix {
            type Output = CMatrix;
            fn $method(self, rhs: &CMatrix) -> CMatrix {
                (&self).$method(rhs)
            }
        }
    };
}
elementwise!(Add, add, +);
elementwise!(Sub, sub, -);

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        self.data.iter_mut().zip(&rhs.data).for_each(|(a, b)| *a += b);
    }
}

impl SubAssign<&CMatrix> for CMatrix {
    fn sub_assign(&mut self, rhs: &CMatrix) {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        self.data.iter_mut().zip(&rhs.data).for_each(|(a, b)| *a -= b);
    }
}

impl Mul<&CMatrix> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

impl Mul<CMatrix> for CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: CMatrix) -> CMatrix {
        self.matmul(&rhs)
    }
}

impl Mul<C64> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, s: C64) -> CMatrix {
        self.scale(s)
    }
}

impl Mul<f64> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, s: f64) -> CMatrix {
        self.scale(C64::new(s, 0.0))
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale(-ONE)
    }
}

fn check_dims(a: &CMatrix, b: &CMatrix) -> Result<()> {
    if a.dim != b.dim {
        return Err(invalid(alloc::format!("dimension mismatch: {} vs {}", a.dim, b.dim)));
    }
    Ok(())
}

/// `[a, b] = ab − ba`
pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    check_dims(a, b)?;
    Ok(&(a * b) - &(b * a))
}

/// Lindblad dissipator `D[l]ρ = lρl† − ½(l†lρ + ρl†l)`.
///
/// `rho` need not be Hermitian; the hierarchy applies this to generalized
/// state matrices.
pub fn dissipator(l: &CMatrix, rho: &CMatrix) -> Result<CMatrix> {
    check_dims(l, rho)?;
    let ld = l.dagger();
    let ldl = &ld * l;
    let jump = &(l * rho) * &ld;
    let anti = &(&ldl * rho) + &(rho * &ldl);
    Ok(&jump - &anti.scale(C64::new(0.5, 0.0)))
}

/// The system description `(S, L, H)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlhTriple {
    s: CMatrix,
    l: CMatrix,
    h: CMatrix,
}

impl SlhTriple {
    pub const TOLERANCE: f64 = 1e-10;

    pub fn new(s: CMatrix, l: CMatrix, h: CMatrix) -> Result<Self> {
        check_dims(&s, &l)?;
        check_dims(&s, &h)?;
        if !s.is_unitary(Self::TOLERANCE) {
            return Err(invalid("scattering matrix S must be unitary"));
        }
        if !h.is_hermitian(Self::TOLERANCE) {
            return Err(invalid("Hamiltonian H must be Hermitian"));
        }
        Ok(Self { s, l, h })
    }

    /// `S = I` with the given jump operator and Hamiltonian.
    pub fn with_identity_scattering(l: CMatrix, h: CMatrix) -> Result<Self> {
        let s = CMatrix::identity(l.dim());
        Self::new(s, l, h)
    }

    pub fn dim(&self) -> usize {
        self.s.dim
    }

    pub fn s(&self) -> &CMatrix {
        &self.s
    }

    pub fn l(&self) -> &CMatrix {
        &self.l
    }

    pub fn h(&self) -> &CMatrix {
        &self.h
    }
}

/// Linear map on `dim × dim` matrices, stored as a `dim² × dim²` matrix
/// acting on column-stacked vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperOp {
    dim: usize,
    matrix: CMatrix,
}

impl SuperOp {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn from_matrix(dim: usize, matrix: CMatrix) -> Result<Self> {
        if matrix.dim() != dim * dim {
            return Err(invalid("superoperator matrix must be dim² × dim²"));
        }
        Ok(Self { dim, matrix })
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        assert_eq!(rho.dim(), self.dim);
        let v = rho.vec();
        let n = self.dim * self.dim;
        let mut out = vec![ZERO; n];
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..n).map(|c| self.matrix[(r, c)] * v[c]).sum();
        }
        CMatrix::unvec(self.dim, &out)
    }
}

/// Column `j` of the result is `vec(map(E_j))`, where `E_j` is the `j`-th
/// matrix unit under column stacking.
pub fn superop_of<F>(map: F, dim: usize) -> SuperOp
where
    F: Fn(&CMatrix) -> CMatrix,
{
    let n = dim * dim;
    let mut matrix = CMatrix::zeros(n);
    for j in 0..n {
        let (row, col) = (j % dim, j / dim);
        let image = map(&CMatrix::unit(dim, row, col)).vec();
        for (i, z) in image.into_iter().enumerate() {
            matrix[(i, j)] = z;
        }
    }
    SuperOp { dim, matrix }
}

/// Unnormalized Choi matrix `Σ_ij |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)`.
pub fn choi_of(s: &SuperOp) -> CMatrix {
    let d = s.dim;
    let mut c = CMatrix::zeros(d * d);
    for i in 0..d {
        for j in 0..d {
            let col = j * d + i;
            for a in 0..d {
                for b in 0..d {
                    c[(i * d + a, j * d + b)] = s.matrix[(b * d + a, col)];
                }
            }
        }
    }
    c
}

/// Ascending eigenvalues of the Hermitian part of `m`.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    let sym = m.hermitian_part().to_nalgebra();
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    Ok(ev)
}

/// Ascending eigenvalues of a raw row-major matrix.
pub fn hermitian_eigenvalues_raw(rows: usize, cols: usize, data: Vec<C64>) -> Result<Vec<f64>> {
    hermitian_eigenvalues(&CMatrix::from_row_major(rows, cols, data)?)
}

/// Operators of a two-level atom in the basis `(|g⟩, |e⟩)`.
#[derive(Debug, Clone)]
pub struct TwoLevel {
    pub sigma_minus: CMatrix,
    pub sigma_plus: CMatrix,
    pub sigma_x: CMatrix,
    pub sigma_y: CMatrix,
    pub sigma_z: CMatrix,
    pub excited: CMatrix,
    pub ground: CMatrix,
    pub identity: CMatrix,
}

pub fn two_level_basis() -> TwoLevel {
    let sigma_minus = CMatrix::from_real_rows([[0.0, 1.0], [0.0, 0.0]]);
    let sigma_plus = sigma_minus.dagger();
    TwoLevel {
        sigma_x: &sigma_plus + &sigma_minus,
        sigma_y: CMatrix::from_rows([[ZERO, I], [-I, ZERO]]),
        sigma_z: CMatrix::from_real_rows([[-1.0, 0.0], [0.0, 1.0]]),
        excited: CMatrix::from_real_rows([[0.0, 0.0], [0.0, 1.0]]),
        ground: CMatrix::from_real_rows([[1.0, 0.0], [0.0, 0.0]]),
        identity: CMatrix::identity(2),
        sigma_minus,
        sigma_plus,
    }
}

impl TwoLevel {
    /// Bloch components `(x, y, z)` of a state.
    pub fn bloch(&self, rho: &CMatrix) -> [f64; 3] {
        [
            self.sigma_x.expectation(rho).re,
            self.sigma_y.expectation(rho).re,
            self.sigma_z.expectation(rho).re,
        ]
    }

    /// `(I + x σx + y σy + z σz) / 2`
    pub fn from_bloch(&self, [x, y, z]: [f64; 3]) -> CMatrix {
        let mut m = self.identity.clone();
        m += &(&self.sigma_x * x);
        m += &(&self.sigma_y * y);
        m += &(&self.sigma_z * z);
        m.scale(C64::new(0.5, 0.0))
    }

    pub fn excited_population(&self, rho: &CMatrix) -> f64 {
        rho[(1, 1)].re
    }
}

/// `tr(ρ²)` for Hermitian ρ.
pub fn purity(rho: &CMatrix) -> f64 {
    rho.expectation(rho).re
}

/// Slice-level kernels for the hot loops of the hierarchy.
pub(crate) mod dense {
    use super::{C64, ZERO};

    #[inline]
    pub fn mul_into(d: usize, a: &[C64], b: &[C64], out: &mut [C64]) {
        for r in 0..d {
            for c in 0..d {
                let mut acc = ZERO;
                for k in 0..d {
                    acc += a[r * d + k] * b[k * d + c];
                }
                out[r * d + c] = acc;
            }
        }
    }

    /// `out += s · a · b`
    #[inline]
    pub fn mul_acc(d: usize, s: C64, a: &[C64], b: &[C64], out: &mut [C64]) {
        for r in 0..d {
            for c in 0..d {
                let mut acc = ZERO;
                for k in 0..d {
                    acc += a[r * d + k] * b[k * d + c];
                }
                out[r * d + c] += s * acc;
            }
        }
    }

    /// `out += s · a · x · b`
    #[inline]
    pub fn sandwich_acc(d: usize, s: C64, a: &[C64], x: &[C64], b: &[C64], tmp: &mut [C64], out: &mut [C64]) {
        mul_into(d, a, x, tmp);
        mul_acc(d, s, tmp, b, out);
    }

    #[inline]
    pub fn axpy(s: C64, x: &[C64], out: &mut [C64]) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o += s * v;
        }
    }

    #[inline]
    pub fn trace(d: usize, a: &[C64]) -> C64 {
        (0..d).map(|i| a[i * d + i]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn commutator_identities() {
        let b = two_level_basis();
        let zero = CMatrix::zeros(2);
        assert_eq!(commutator(&b.sigma_x, &b.sigma_x).unwrap(), zero);
        let xy = commutator(&b.sigma_x, &b.sigma_y).unwrap();
        assert!(xy.max_abs_diff(&b.sigma_z.scale(c(0.0, 2.0))) < 1e-15);
        let pm = commutator(&b.sigma_plus, &b.sigma_minus).unwrap();
        assert!(pm.max_abs_diff(&b.sigma_z) < 1e-15);
    }

    #[test]
    fn commutator_dimension_mismatch() {
        let err = commutator(&CMatrix::identity(2), &CMatrix::identity(3));
        assert!(matches!(err, Err(crate::Error::InvalidArgument(_))));
        assert!(dissipator(&CMatrix::identity(2), &CMatrix::identity(3)).is_err());
    }

    #[test]
    fn dissipator_examples() {
        let b = two_level_basis();
        let gamma: f64 = 0.7;
        let l = &b.sigma_minus * gamma.sqrt();
        let out = dissipator(&l, &b.excited).unwrap();
        let expected = (&b.ground - &b.excited).scale(c(gamma, 0.0));
        assert!(out.max_abs_diff(&expected) < 1e-15);
        assert_eq!(dissipator(&CMatrix::zeros(2), &b.excited).unwrap(), CMatrix::zeros(2));
        assert!(dissipator(&l, &b.ground).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn two_level_relations() {
        let b = two_level_basis();
        // σ−|e⟩ = |g⟩ : column e of σ− is |g⟩
        assert_eq!(b.sigma_minus[(0, 1)], ONE);
        assert_eq!(b.sigma_minus[(1, 1)], ZERO);
        assert!((&b.sigma_plus * &b.sigma_minus).max_abs_diff(&b.excited) < 1e-15);
        assert!((&b.sigma_plus + &b.sigma_minus).max_abs_diff(&b.sigma_x) < 1e-15);
        let rho = b.from_bloch([0.3, -0.2, 0.5]);
        let [x, y, z] = b.bloch(&rho);
        assert!((x - 0.3).abs() < 1e-15 && (y + 0.2).abs() < 1e-15 && (z - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identity_superop_and_choi() {
        let s = superop_of(|m| m.clone(), 2);
        assert_eq!(s.matrix(), &CMatrix::identity(4));
        let choi = choi_of(&s);
        let ev = hermitian_eigenvalues(&choi).unwrap();
        let expected = [0.0, 0.0, 0.0, 2.0];
        for (a, b) in ev.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn depolarizing_choi_is_half_identity() {
        let s = superop_of(|m| CMatrix::identity(2).scale(m.trace() * 0.5), 2);
        let choi = choi_of(&s);
        assert!(choi.max_abs_diff(&CMatrix::identity(4).scale(c(0.5, 0.0))) < 1e-15);
    }

    #[test]
    fn conjugation_superop_on_matrix_units() {
        let b = two_level_basis();
        let map = |m: &CMatrix| &(&b.sigma_x * m) * &b.sigma_x;
        let s = superop_of(map, 2);
        for r in 0..2 {
            for col in 0..2 {
                let e = CMatrix::unit(2, r, col);
                assert!(s.apply(&e).max_abs_diff(&map(&e)) < 1e-15);
            }
        }
        assert!(s.apply(&b.excited).max_abs_diff(&b.ground) < 1e-15);
    }

    #[test]
    fn amplitude_damping_superop_spectrum() {
        // The generator of D[√Γ σ−] has eigenvalues {0, −Γ/2, −Γ/2, −Γ}; four
        // independent eigenvectors pin the whole spectrum.
        let b = two_level_basis();
        let gamma: f64 = 1.3;
        let l = &b.sigma_minus * gamma.sqrt();
        let s = superop_of(|m| dissipator(&l, m).unwrap(), 2);
        let pairs = [
            (b.ground.clone(), 0.0),
            (b.sigma_minus.clone(), -gamma / 2.0),
            (b.sigma_plus.clone(), -gamma / 2.0),
            (&b.excited - &b.ground, -gamma),
        ];
        for (v, lambda) in pairs {
            assert!(s.apply(&v).max_abs_diff(&(&v * lambda)) < 1e-14);
        }
    }

    #[test]
    fn amplitude_damping_channel_choi_is_positive() {
        // Closed-form amplitude damping channel for Γt = 0.5.
        let p = 1.0 - (-0.5f64).exp();
        let k0 = CMatrix::from_real_rows([[1.0, 0.0], [0.0, (1.0 - p).sqrt()]]);
        let k1 = CMatrix::from_real_rows([[0.0, p.sqrt()], [0.0, 0.0]]);
        let s = superop_of(
            |m| &(&(&k0 * m) * &k0.dagger()) + &(&(&k1 * m) * &k1.dagger()),
            2,
        );
        let ev = hermitian_eigenvalues(&choi_of(&s)).unwrap();
        assert!(ev[0] >= -1e-10, "{ev:?}");
    }

    #[test]
    fn eigenvalue_examples() {
        let b = two_level_basis();
        assert_eq!(hermitian_eigenvalues(&b.sigma_z).unwrap(), vec![-1.0, 1.0]);
        let ev = hermitian_eigenvalues(&CMatrix::identity(4)).unwrap();
        assert!(ev.iter().all(|e| (e - 1.0).abs() < 1e-14));
        let err = hermitian_eigenvalues_raw(2, 3, vec![ZERO; 6]);
        assert!(matches!(err, Err(crate::Error::InvalidArgument(_))));
    }

    #[test]
    fn slh_validation() {
        let b = two_level_basis();
        assert!(SlhTriple::new(b.sigma_x.clone(), b.sigma_minus.clone(), b.sigma_z.clone()).is_ok());
        assert!(SlhTriple::new(b.sigma_minus.clone(), b.sigma_minus.clone(), b.sigma_z.clone()).is_err());
        assert!(SlhTriple::new(b.identity.clone(), b.sigma_minus.clone(), b.sigma_minus.clone()).is_err());
        assert!(SlhTriple::new(CMatrix::identity(3), b.sigma_minus.clone(), b.sigma_z.clone()).is_err());
    }

    #[test]
    fn vec_is_column_stacking() {
        let m = CMatrix::from_real_rows([[1.0, 2.0], [3.0, 4.0]]);
        let v: Vec<f64> = m.vec().iter().map(|z| z.re).collect();
        assert_eq!(v, vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(CMatrix::unvec(2, &m.vec()), m);
    }

    #[test]
    fn operator_norm_of_sigma_minus() {
        let b = two_level_basis();
        assert!((b.sigma_minus.operator_norm() - 1.0).abs() < 1e-12);
        assert!((b.sigma_x.scale(c(3.0, 0.0)).operator_norm() - 3.0).abs() < 1e-12);
    }
}
