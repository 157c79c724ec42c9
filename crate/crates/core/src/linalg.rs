// Copyright 2026 The pinnctl Authors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex matrices sized for spin registers of up to four spins.
//!
//! Everything here works on `dim x dim` row-major storage. The exponential of
//! a Hermitian generator and its Fréchet derivative are both taken from one
//! eigendecomposition, so a propagator segment and its adjoint pullback share
//! the same spectral data.

use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Square complex matrix in row-major layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct OperatorMatrix {
    dim: usize,
    data: Vec<C64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    dim: usize,
    entries: Vec<C64>,
}

impl TryFrom<MatrixRepr> for OperatorMatrix {
    type Error = Error;

    fn try_from(repr: MatrixRepr) -> Result<Self> {
        if repr.entries.len() != repr.dim * repr.dim {
            return Err(Error::Dimension {
                expected: repr.dim * repr.dim,
                got: repr.entries.len(),
            });
        }
        Ok(Self {
            dim: repr.dim,
            data: repr.entries,
        })
    }
}

impl From<OperatorMatrix> for MatrixRepr {
    fn from(m: OperatorMatrix) -> Self {
        MatrixRepr {
            dim: m.dim,
            entries: m.data,
        }
    }
}

impl OperatorMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * dim + i] = C64::new(d, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries; `entries.len()` must be a square.
    pub fn from_row_major(dim: usize, entries: Vec<C64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::Dimension {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        Ok(Self { dim, data: entries })
    }

    /// Outer product |a⟩⟨b|.
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        assert_eq!(a.len(), b.len());
        Self::from_fn(a.len(), |i, j| a[i] * b[j].conj())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.data[i * self.dim + j] = value;
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(j, i).conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(j, i))
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Tr(self · other) without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut acc = ZERO;
        for i in 0..n {
            for k in 0..n {
                acc += self.data[i * n + k] * other.data[k * n + i];
            }
        }
        acc
    }

    /// Real Hilbert-Schmidt inner product Re Tr(self† · other).
    pub fn hs_inner(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_off_diagonal(&self) -> f64 {
        let n = self.dim;
        let mut m = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m = m.max(self.get(i, j).norm());
                }
            }
        }
        m
    }

    /// ‖A − A†‖_F.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.dim;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self.get(i, j) - self.get(j, i).conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_residual() < tol
    }

    /// ‖U†U − 𝟙‖_F.
    pub fn unitarity_residual(&self) -> f64 {
        (&(&self.adjoint() * self) - &Self::identity(self.dim)).frobenius_norm()
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    /// self += c · other
    pub fn axpy(&mut self, c: C64, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    /// self += c · other, real coefficient.
    pub fn axpy_real(&mut self, c: f64, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            a.re += c * b.re;
            a.im += c * b.im;
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|z| *z = ZERO);
    }

    /// out = a · b, reusing `out`'s storage.
    pub fn mul_into(a: &Self, b: &Self, out: &mut Self) {
        let n = a.dim;
        debug_assert_eq!(n, b.dim);
        out.dim = n;
        out.data.resize(n * n, ZERO);
        for i in 0..n {
            let row = &a.data[i * n..(i + 1) * n];
            let dst = &mut out.data[i * n..(i + 1) * n];
            dst.iter_mut().for_each(|z| *z = ZERO);
            for (k, &aik) in row.iter().enumerate() {
                if aik == ZERO {
                    continue;
                }
                let brow = &b.data[k * n..(k + 1) * n];
                for (d, &bkj) in dst.iter_mut().zip(brow) {
                    *d += aik * bkj;
                }
            }
        }
    }

    /// [self, other]
    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    /// {self, other}
    pub fn anticommutator(&self, other: &Self) -> Self {
        &(self * other) + &(other * self)
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (n, m) = (self.dim, other.dim);
        Self::from_fn(n * m, |r, c| {
            self.get(r / m, c / m) * other.get(r % m, c % m)
        })
    }

    /// ⟨ψ|self|ψ⟩.
    pub fn expectation(&self, psi: &[C64]) -> C64 {
        let n = self.dim;
        let mut acc = ZERO;
        for i in 0..n {
            let mut row = ZERO;
            for j in 0..n {
                row += self.get(i, j) * psi[j];
            }
            acc += psi[i].conj() * row;
        }
        acc
    }

    /// Hermitian part (A + A†)/2; used to scrub round-off before an eigensolve.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |i, j| (self.get(i, j) + self.get(j, i).conj()) * 0.5)
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    /// Eigendecomposition of a Hermitian matrix.
    pub fn eigh(&self) -> Result<HermitianEigen> {
        let residual = self.hermiticity_residual();
        let scale = self.frobenius_norm().max(1.0);
        if !(residual <= 1e-9 * scale) {
            return Err(Error::NotHermitian { residual });
        }
        let eig = self.hermitian_part().to_nalgebra().symmetric_eigen();
        let n = self.dim;
        let vectors = Self::from_fn(n, |i, j| eig.eigenvectors[(i, j)]);
        Ok(HermitianEigen {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors,
        })
    }

    /// Eigenvalues of a Hermitian matrix in descending order.
    pub fn eigenvalues_desc(&self) -> Result<Vec<f64>> {
        let mut values = self.eigh()?.values;
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(values)
    }

    /// Largest absolute eigenvalue of a Hermitian matrix.
    pub fn spectral_norm_hermitian(&self) -> Result<f64> {
        Ok(self
            .eigh()?
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs())))
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;

    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        let mut out = OperatorMatrix::zeros(self.dim);
        OperatorMatrix::mul_into(self, rhs, &mut out);
        out
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;

    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dim, rhs.dim);
        OperatorMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;

    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_eq!(self.dim, rhs.dim);
        OperatorMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// H = V diag(values) V†, eigenvectors stored as columns of `vectors`.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: OperatorMatrix,
}

impl HermitianEigen {
    /// V · diag(d) · V†
    pub fn reconstruct_with(&self, diag: &[C64]) -> OperatorMatrix {
        let n = self.values.len();
        let v = &self.vectors;
        OperatorMatrix::from_fn(n, |i, j| {
            let mut acc = ZERO;
            for k in 0..n {
                acc += v.get(i, k) * diag[k] * v.get(j, k).conj();
            }
            acc
        })
    }

    /// V† · A · V
    pub fn to_eigenbasis(&self, a: &OperatorMatrix) -> OperatorMatrix {
        let v = &self.vectors;
        &(&v.adjoint() * a) * v
    }

    /// V · A · V†
    pub fn from_eigenbasis(&self, a: &OperatorMatrix) -> OperatorMatrix {
        let v = &self.vectors;
        &(v * a) * &v.adjoint()
    }
}

/// exp(−i H dt) of one piecewise-constant segment, with the spectral data
/// needed for its Fréchet derivative.
#[derive(Debug, Clone)]
pub struct SegmentExp {
    eig: HermitianEigen,
    dt: f64,
    phases: Vec<C64>,
    propagator: OperatorMatrix,
}

impl SegmentExp {
    pub fn new(h: &OperatorMatrix, dt: f64) -> Result<Self> {
        let eig = h.eigh()?;
        let phases: Vec<C64> = eig
            .values
            .iter()
            .map(|&l| C64::from_polar(1.0, -l * dt))
            .collect();
        let propagator = eig.reconstruct_with(&phases);
        Ok(Self {
            eig,
            dt,
            phases,
            propagator,
        })
    }

    pub fn propagator(&self) -> &OperatorMatrix {
        &self.propagator
    }

    pub fn into_propagator(self) -> OperatorMatrix {
        self.propagator
    }

    /// Divided differences of f(λ) = exp(−iλ dt), evaluated in a form that
    /// stays accurate for (nearly) degenerate eigenvalues.
    fn divided_difference(&self, j: usize, k: usize) -> C64 {
        let (lj, lk) = (self.eig.values[j], self.eig.values[k]);
        let mean = 0.5 * (lj + lk);
        let half = 0.5 * (lj - lk) * self.dt;
        let sinc = if half.abs() < 1e-8 {
            1.0 - half * half / 6.0
        } else {
            half.sin() / half
        };
        C64::new(0.0, -self.dt) * C64::from_polar(1.0, -mean * self.dt) * sinc
    }

    /// Directional derivative of exp(−i H dt) along a Hermitian perturbation E of H.
    pub fn frechet(&self, direction: &OperatorMatrix) -> OperatorMatrix {
        let n = self.phases.len();
        let e = self.eig.to_eigenbasis(direction);
        let inner = OperatorMatrix::from_fn(n, |j, k| e.get(j, k) * self.divided_difference(j, k));
        self.eig.from_eigenbasis(&inner)
    }

    /// Returns Z such that Tr(M · dU[E]) = Tr(Z · E) for every direction E.
    pub fn frechet_pullback(&self, m: &OperatorMatrix) -> OperatorMatrix {
        let n = self.phases.len();
        let p = self.eig.to_eigenbasis(m);
        let inner = OperatorMatrix::from_fn(n, |k, j| p.get(k, j) * self.divided_difference(j, k));
        self.eig.from_eigenbasis(&inner)
    }
}

/// exp(−i H dt) for Hermitian H.
pub fn expm_hermitian(h: &OperatorMatrix, dt: f64) -> Result<OperatorMatrix> {
    if dt == 0.0 {
        h.eigh()?;
        return Ok(OperatorMatrix::identity(h.dim()));
    }
    Ok(SegmentExp::new(h, dt)?.into_propagator())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_hermitian(dim: usize, rng: &mut impl Rng, scale: f64) -> OperatorMatrix {
        let a = OperatorMatrix::from_fn(dim, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        (&a + &a.adjoint()).scale_real(0.5 * scale)
    }

    /// Scaling-and-squaring with a [6/6] Padé approximant, independent of the
    /// eigendecomposition path.
    fn pade_expm(a: &DMatrix<C64>) -> DMatrix<C64> {
        let n = a.nrows();
        let norm = a.iter().map(|z| z.norm()).sum::<f64>();
        let s = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as i32
        } else {
            0
        };
        let a = a / C64::new(2f64.powi(s), 0.0);
        let c = [
            1.0,
            1.0 / 2.0,
            5.0 / 44.0,
            1.0 / 66.0,
            1.0 / 792.0,
            1.0 / 15840.0,
            1.0 / 665280.0,
        ];
        let id = DMatrix::<C64>::identity(n, n);
        let mut num = id.clone() * C64::new(c[0], 0.0);
        let mut den = id.clone() * C64::new(c[0], 0.0);
        let mut pow = id.clone();
        for (k, &ck) in c.iter().enumerate().skip(1) {
            pow = &pow * &a;
            let term = &pow * C64::new(ck, 0.0);
            num += &term;
            if k % 2 == 0 {
                den += &term;
            } else {
                den -= &term;
            }
        }
        let mut r = den.lu().solve(&num).unwrap();
        for _ in 0..s {
            r = &r * &r;
        }
        r
    }

    #[test]
    fn zero_time_gives_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_hermitian(4, &mut rng, 100.0);
        assert_eq!(expm_hermitian(&h, 0.0).unwrap(), OperatorMatrix::identity(4));
    }

    #[test]
    fn diagonal_coupling_phases() {
        let w = 2.0 * std::f64::consts::PI * 48.2;
        let h = OperatorMatrix::from_real_diagonal(&[w / 4.0, -w / 4.0, -w / 4.0, w / 4.0]);
        let dt = 3.7e-3;
        let u = expm_hermitian(&h, dt).unwrap();
        for (i, sign) in [1.0, -1.0, -1.0, 1.0].iter().enumerate() {
            let expected = C64::from_polar(1.0, -sign * w * dt / 4.0);
            assert_abs_diff_eq!(u.get(i, i).re, expected.re, epsilon = 1e-14);
            assert_abs_diff_eq!(u.get(i, i).im, expected.im, epsilon = 1e-14);
        }
        assert!(u.max_abs_off_diagonal() < 1e-15);
    }

    #[test]
    fn matches_pade_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for dim in [2, 4, 8, 16] {
            for _ in 0..5 {
                let h = random_hermitian(dim, &mut rng, 3.0);
                let dt = rng.random_range(0.1..2.0);
                let u = expm_hermitian(&h, dt).unwrap();
                let gen = h.to_nalgebra() * C64::new(0.0, -dt);
                let oracle = pade_expm(&gen);
                let diff = (0..dim * dim)
                    .map(|k| (u.as_slice()[k] - oracle[(k / dim, k % dim)]).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(diff < 1e-10, "dim {dim}: diff {diff:e}");
                assert!(u.unitarity_residual() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = OperatorMatrix::zeros(2);
        m.set(0, 1, C64::new(1.0, 0.0));
        assert!(matches!(
            expm_hermitian(&m, 1.0),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn frechet_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_hermitian(4, &mut rng, 5.0);
        let e = random_hermitian(4, &mut rng, 1.0);
        let dt = 0.7;
        let seg = SegmentExp::new(&h, dt).unwrap();
        let d = seg.frechet(&e);
        let step = 1e-6;
        let plus = expm_hermitian(&(&h + &e.scale_real(step)), dt).unwrap();
        let minus = expm_hermitian(&(&h - &e.scale_real(step)), dt).unwrap();
        let fd = (&plus - &minus).scale_real(0.5 / step);
        assert!((&fd - &d).frobenius_norm() < 1e-8);
    }

    #[test]
    fn frechet_handles_degenerate_spectrum() {
        let h = OperatorMatrix::from_real_diagonal(&[1.0, 1.0, -2.0, -2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = random_hermitian(4, &mut rng, 1.0);
        let seg = SegmentExp::new(&h, 0.3).unwrap();
        let step = 1e-6;
        let plus = expm_hermitian(&(&h + &e.scale_real(step)), 0.3).unwrap();
        let minus = expm_hermitian(&(&h - &e.scale_real(step)), 0.3).unwrap();
        let fd = (&plus - &minus).scale_real(0.5 / step);
        assert!((&fd - &seg.frechet(&e)).frobenius_norm() < 1e-8);
    }

    #[test]
    fn pullback_is_adjoint_of_frechet() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_hermitian(4, &mut rng, 2.0);
        let e = random_hermitian(4, &mut rng, 1.0);
        let m = OperatorMatrix::from_fn(4, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let seg = SegmentExp::new(&h, 1.3).unwrap();
        let lhs = m.trace_product(&seg.frechet(&e));
        let rhs = seg.frechet_pullback(&m).trace_product(&e);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn kron_and_trace_product() {
        let a = OperatorMatrix::from_real_diagonal(&[1.0, 2.0]);
        let b = OperatorMatrix::from_real_diagonal(&[3.0, 5.0]);
        let k = a.kron(&b);
        assert_eq!(k, OperatorMatrix::from_real_diagonal(&[3.0, 5.0, 6.0, 10.0]));
        assert_eq!(a.trace_product(&b), C64::new(13.0, 0.0));
    }
}
