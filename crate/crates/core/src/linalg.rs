//! Complex vectors, Hermitian matrices and the `vecs` real parameterization.
//!
//! A [`HermitianMatrix`] is stored densely (row-major) but its upper triangle is
//! always the exact conjugate mirror of the lower triangle, and the diagonal is
//! exactly real. Everything that builds one goes through the lower triangle, so
//! accumulated rounding can never make it drift away from Hermitian symmetry.

use std::ops::Index;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance used when ingesting a full matrix that should be Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// A complex column vector of finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CVector(Vec<C64>);

impl CVector {
    pub fn new(entries: Vec<C64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParameter("vector must have at least one entry".into()));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("vector entries must be finite".into()));
        }
        Ok(Self(entries))
    }

    /// Builds a vector without validation; callers guarantee finiteness.
    pub(crate) fn from_vec_unchecked(entries: Vec<C64>) -> Self {
        Self(entries)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![C64::new(0.0, 0.0); n])
    }

    /// The `k`-th canonical basis vector of dimension `n`.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[k] = C64::new(1.0, 0.0);
        v
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, C64> {
        self.0.iter()
    }

    /// Inner product `selfᴴ · other`.
    pub fn dot(&self, other: &CVector) -> C64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(C64::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scaled(&self, c: C64) -> CVector {
        CVector(self.0.iter().map(|z| z * c).collect())
    }

    /// `self − c·other`
    pub fn minus_scaled(&self, c: C64, other: &CVector) -> CVector {
        CVector(self.0.iter().zip(&other.0).map(|(a, b)| a - c * b).collect())
    }
}

impl Index<usize> for CVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

/// Dense N×N Hermitian matrix with the lower triangle as canonical storage.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    n: usize,
    data: Vec<C64>,
}

impl HermitianMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![C64::new(0.0, 0.0); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = C64::new(d, 0.0);
        }
        m
    }

    /// Builds the matrix from its lower triangle, `f(i, j)` for `j <= i`.
    /// The imaginary part of diagonal values is dropped.
    pub fn from_lower_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                m.data[i * n + j] = f(i, j);
            }
        }
        m.mirror_lower();
        m
    }

    /// Ingests a full row-major matrix. Rejects it if it departs from Hermitian
    /// symmetry by more than `HERMITIAN_TOL` (relative to its largest entry),
    /// otherwise keeps the lower triangle.
    pub fn from_rows(n: usize, rows: &[C64]) -> Result<Self> {
        if rows.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, actual: rows.len() });
        }
        if rows.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("matrix entries must be finite".into()));
        }
        let scale = rows.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
        let mut deviation = 0.0_f64;
        for i in 0..n {
            for j in 0..=i {
                let d = (rows[i * n + j] - rows[j * n + i].conj()).norm();
                deviation = deviation.max(d);
            }
        }
        let tolerance = HERMITIAN_TOL * scale;
        if deviation > tolerance {
            return Err(Error::NotHermitian { deviation, tolerance });
        }
        Ok(Self::from_lower_fn(n, |i, j| rows[i * n + j]))
    }

    /// Copies the lower triangle onto the upper one and zeroes the imaginary
    /// diagonal, restoring exact Hermitian symmetry.
    fn mirror_lower(&mut self) {
        let n = self.n;
        for i in 0..n {
            self.data[i * n + i].im = 0.0;
            for j in 0..i {
                self.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.n + j]
    }

    /// Row-major view of all N² entries.
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[i * self.n + i].re).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|z| z * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self::from_lower_fn(self.n, |i, j| self.get(i, j) + other.get(i, j)))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self::from_lower_fn(self.n, |i, j| self.get(i, j) - other.get(i, j)))
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.n, actual: other.n });
        }
        Ok(())
    }

    /// `Σ x xᴴ` over a set of vectors.
    pub fn outer_sum<'a>(n: usize, vectors: impl IntoIterator<Item = &'a CVector>) -> Result<Self> {
        let mut m = Self::zeros(n);
        for x in vectors {
            if x.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: x.dim() });
            }
            m.add_outer_lower(x.as_slice(), 1.0);
        }
        m.mirror_lower();
        Ok(m)
    }

    /// Adds `w·x xᴴ` to the lower triangle only; callers must mirror afterwards.
    fn add_outer_lower(&mut self, x: &[C64], w: f64) {
        let n = self.n;
        for i in 0..n {
            let xi = x[i] * w;
            let row = &mut self.data[i * n..i * n + i + 1];
            for (j, dst) in row.iter_mut().enumerate() {
                *dst += xi * x[j].conj();
            }
        }
    }

    pub fn mul_vec(&self, x: &CVector) -> CVector {
        let n = self.n;
        let out = (0..n)
            .map(|i| {
                self.data[i * n..(i + 1) * n]
                    .iter()
                    .zip(x.as_slice())
                    .fold(C64::new(0.0, 0.0), |acc, (a, b)| acc + a * b)
            })
            .collect();
        CVector::from_vec_unchecked(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::factor(self)
    }

    /// `U·self·Uᴴ` for a square `U` given row-major.
    pub fn congruence(&self, u: &[C64]) -> Result<Self> {
        let n = self.n;
        if u.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, actual: u.len() });
        }
        // tmp = U·A
        let mut tmp = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let uik = u[i * n + k];
                for j in 0..n {
                    tmp[i * n + j] += uik * self.data[k * n + j];
                }
            }
        }
        Ok(Self::from_lower_fn(n, |i, j| {
            (0..n).fold(C64::new(0.0, 0.0), |acc, k| acc + tmp[i * n + k] * u[j * n + k].conj())
        }))
    }
}

/// Lower-triangular Cholesky factor `L` with `H = L·Lᴴ` and a real positive diagonal.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<C64>,
}

impl Cholesky {
    pub fn factor(h: &HermitianMatrix) -> Result<Self> {
        let n = h.dim();
        let mut l = vec![C64::new(0.0, 0.0); n * n];
        for j in 0..n {
            let mut d = h.get(j, j).re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            // pivots at roundoff level relative to the diagonal mean a singular matrix
            let floor = 8.0 * n as f64 * f64::EPSILON * h.get(j, j).re.abs();
            if !(d > floor) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: d });
            }
            let ljj = d.sqrt();
            l[j * n + j] = C64::new(ljj, 0.0);
            for i in j + 1..n {
                let mut s = h.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry `(i, j)` of `L` (zero above the diagonal).
    pub fn l(&self, i: usize, j: usize) -> C64 {
        self.l[i * self.n + j]
    }

    /// `ln |H| = 2 Σ ln L_ii`
    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].re.ln()).sum::<f64>()
    }

    /// Forward substitution: returns `L⁻¹ b`.
    pub fn whiten(&self, b: &CVector) -> Result<CVector> {
        let n = self.n;
        if b.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: b.dim() });
        }
        let mut y = b.as_slice().to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i].re;
        }
        Ok(CVector::from_vec_unchecked(y))
    }

    /// Returns `H⁻¹ b`.
    pub fn solve(&self, b: &CVector) -> Result<CVector> {
        let n = self.n;
        let mut y = self.whiten(b)?.into_vec();
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[k * n + i].conj() * y[k];
            }
            y[i] = s / self.l[i * n + i].re;
        }
        Ok(CVector::from_vec_unchecked(y))
    }

    /// `aᴴ H⁻¹ b`
    pub fn quad_form(&self, a: &CVector, b: &CVector) -> Result<C64> {
        Ok(a.dot(&self.solve(b)?))
    }

    /// `H⁻¹` as a Hermitian matrix.
    pub fn inverse(&self) -> HermitianMatrix {
        let n = self.n;
        let cols: Vec<CVector> = (0..n)
            .map(|k| self.solve(&CVector::basis(n, k)).expect("dimension checked"))
            .collect();
        HermitianMatrix::from_lower_fn(n, |i, j| cols[j][i])
    }

    /// `L·Lᴴ`
    pub fn reconstruct(&self) -> HermitianMatrix {
        let n = self.n;
        HermitianMatrix::from_lower_fn(n, |i, j| {
            (0..=j).fold(C64::new(0.0, 0.0), |acc, k| acc + self.l[i * n + k] * self.l[j * n + k].conj())
        })
    }

    /// `L·z`, used to colour white noise.
    pub fn mul_lower(&self, z: &[C64]) -> Vec<C64> {
        let n = self.n;
        (0..n)
            .map(|i| (0..=i).fold(C64::new(0.0, 0.0), |acc, k| acc + self.l[i * n + k] * z[k]))
            .collect()
    }
}

pub fn cholesky(h: &HermitianMatrix) -> Result<Cholesky> {
    Cholesky::factor(h)
}

pub fn logdet(h: &HermitianMatrix) -> Result<f64> {
    Ok(Cholesky::factor(h)?.logdet())
}

pub fn solve(h: &HermitianMatrix, b: &CVector) -> Result<CVector> {
    Cholesky::factor(h)?.solve(b)
}

/// `aᴴ H⁻¹ b`
pub fn quad_form(h: &HermitianMatrix, a: &CVector, b: &CVector) -> Result<C64> {
    Cholesky::factor(h)?.quad_form(a, b)
}

/// Number of strictly-lower entries of an N×N matrix.
fn lower_count(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Real parameterization of a Hermitian matrix:
/// `[diag (N); Re strictly-lower (column order); Im strictly-lower (column order)]`.
pub fn vecs(h: &HermitianMatrix) -> Vec<f64> {
    let n = h.dim();
    let nl = lower_count(n);
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i] = h.get(i, i).re;
    }
    let mut k = 0;
    for col in 0..n {
        for row in col + 1..n {
            let z = h.get(row, col);
            out[n + k] = z.re;
            out[n + nl + k] = z.im;
            k += 1;
        }
    }
    out
}

/// Inverse of [`vecs`].
pub fn unvecs(m: &[f64]) -> Result<HermitianMatrix> {
    let n = (m.len() as f64).sqrt().round() as usize;
    if n == 0 || n * n != m.len() {
        return Err(Error::NotSquareLength(m.len()));
    }
    let nl = lower_count(n);
    let mut h = HermitianMatrix::zeros(n);
    for i in 0..n {
        h.data[i * n + i] = C64::new(m[i], 0.0);
    }
    let mut k = 0;
    for col in 0..n {
        for row in col + 1..n {
            h.data[row * n + col] = C64::new(m[n + k], m[n + nl + k]);
            k += 1;
        }
    }
    h.mirror_lower();
    Ok(h)
}

/// Position of vecs coordinate `k` as `(row, col, part)` in the matrix, where
/// `part` is 0 for a diagonal entry, 1 for the real part and 2 for the
/// imaginary part of a strictly-lower entry.
pub fn vecs_index(n: usize, k: usize) -> (usize, usize, u8) {
    let nl = lower_count(n);
    if k < n {
        return (k, k, 0);
    }
    let (mut r, part) = if k < n + nl { (k - n, 1) } else { (k - n - nl, 2) };
    for col in 0..n {
        let len = n - col - 1;
        if r < len {
            return (col + 1 + r, col, part);
        }
        r -= len;
    }
    unreachable!("vecs index {k} out of range for n = {n}")
}

/// θ = [η; μ] with η = [Re α, Im α] and μ = vecs(Φ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealParamVector {
    pub eta: [f64; 2],
    pub mu: Vec<f64>,
}

impl RealParamVector {
    pub fn new(alpha: C64, phi: &HermitianMatrix) -> Self {
        Self { eta: [alpha.re, alpha.im], mu: vecs(phi) }
    }

    pub fn alpha(&self) -> C64 {
        C64::new(self.eta[0], self.eta[1])
    }

    pub fn phi(&self) -> Result<HermitianMatrix> {
        unvecs(&self.mu)
    }

    pub fn dim(&self) -> usize {
        2 + self.mu.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.eta.to_vec();
        v.extend_from_slice(&self.mu);
        v
    }
}

/// Primary cells (possibly carrying the signal), secondary signal-free cells,
/// and the steering vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub primary: Vec<CVector>,
    pub secondary: Vec<CVector>,
    pub steering: CVector,
}

impl Dataset {
    /// Checks shapes. `M₀ < N` is accepted here; anything that needs `S₀`
    /// positive definite will fail on it later.
    pub fn new(primary: Vec<CVector>, secondary: Vec<CVector>, steering: CVector) -> Result<Self> {
        let n = steering.dim();
        if primary.is_empty() {
            return Err(Error::InvalidParameter("primary data must hold at least one vector".into()));
        }
        if steering.norm_sqr() == 0.0 {
            return Err(Error::InvalidParameter("steering vector must be nonzero".into()));
        }
        for x in primary.iter().chain(&secondary) {
            if x.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: x.dim() });
            }
        }
        Ok(Self { primary, secondary, steering })
    }

    pub fn n(&self) -> usize {
        self.steering.dim()
    }

    pub fn m1(&self) -> usize {
        self.primary.len()
    }

    pub fn m0(&self) -> usize {
        self.secondary.len()
    }

    pub fn m(&self) -> usize {
        self.m1() + self.m0()
    }

    /// Multiplies every data vector (not the steering vector) by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let s = |xs: &[CVector]| xs.iter().map(|x| x.scaled(C64::new(c, 0.0))).collect();
        Self { primary: s(&self.primary), secondary: s(&self.secondary), steering: self.steering.clone() }
    }
}
