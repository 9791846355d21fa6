//! Dense complex vectors and matrices.
//!
//! Every model in this crate lives in a Hilbert space of at most a few dozen
//! dimensions, so everything here is dense, row-major and allocation-light.
//! The hot loops of the jump engine go through [`ComplexMat::mul_vec_into`]
//! and [`inner`], which write into caller-owned buffers.

use std::ops::{Add, AddAssign, Deref, DerefMut, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use nalgebra::DMatrix;
pub use num_complex::Complex64;

use crate::error::{Error, Result};

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `<a|b>`, antilinear in the first argument.
#[inline]
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    Complex64::new(re, im)
}

/// `Re <a|b>` without computing the imaginary part.
#[inline]
pub fn inner_re(a: &[Complex64], b: &[Complex64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// A state vector of probability amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVec(Vec<Complex64>);

impl ComplexVec {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![ZERO; dim])
    }

    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidDimension(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut v = Self::zeros(dim);
        v.0[index] = ONE;
        Ok(v)
    }

    pub fn from_vec(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidDimension("empty vector".into()));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("non-finite amplitude".into()));
        }
        Ok(Self(amplitudes))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&mut self, s: Complex64) {
        for z in &mut self.0 {
            *z *= s;
        }
    }

    pub fn scale_re(&mut self, s: f64) {
        for z in &mut self.0 {
            *z *= s;
        }
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::InvalidParameter("cannot normalize the zero vector".into()));
        }
        self.scale_re(1.0 / n);
        Ok(self)
    }

    /// `|self><other|`
    pub fn outer(&self, other: &ComplexVec) -> ComplexMat {
        let n = self.dim();
        ComplexMat::from_fn(n, |i, j| self.0[i] * other.0[j].conj())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Deref for ComplexVec {
    type Target = [Complex64];
    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

impl DerefMut for ComplexVec {
    fn deref_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }
}

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMat {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMat {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![ZERO; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    pub fn from_diag(diag: &[Complex64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, |i, j| if i == j { diag[i] } else { ZERO })
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, |i, j| if i == j { c(diag[i], 0.0) } else { ZERO })
    }

    /// Builds a matrix from row-major data; fails on non-square or non-finite input.
    pub fn from_row_major(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::InvalidDimension(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("non-finite matrix entry".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidDimension("matrix is not square".into()));
        }
        Self::from_row_major(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, rhs: &ComplexMat) -> Self {
        assert_eq!(self.dim, rhs.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let rhs_row = &rhs.data[k * n..(k + 1) * n];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `out = self * v`
    #[inline]
    pub fn mul_vec_into(&self, v: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(v.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        for (row, o) in self.data.chunks_exact(self.dim).zip(out.iter_mut()) {
            let mut re = 0.0;
            let mut im = 0.0;
            for (a, x) in row.iter().zip(v) {
                re += a.re * x.re - a.im * x.im;
                im += a.re * x.im + a.im * x.re;
            }
            *o = Complex64::new(re, im);
        }
    }

    pub fn mul_vec(&self, v: &ComplexVec) -> ComplexVec {
        let mut out = ComplexVec::zeros(self.dim);
        self.mul_vec_into(v, &mut out);
        out
    }

    /// `<a|self|b>`
    pub fn expectation(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        let mut tmp = vec![ZERO; self.dim];
        self.mul_vec_into(b, &mut tmp);
        inner(a, &tmp)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn commutator(&self, other: &ComplexMat) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    pub fn anticommutator(&self, other: &ComplexMat) -> Self {
        &self.matmul(other) + &other.matmul(self)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry modulus restricted to the block `range x range`.
    pub fn max_abs_in(&self, range: std::ops::Range<usize>) -> f64 {
        let mut m: f64 = 0.0;
        for i in range.clone() {
            for j in range.clone() {
                m = m.max(self[(i, j)].norm());
            }
        }
        m
    }

    /// `max |M - M^dagger|`
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.dim;
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                m = m.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        m
    }

    /// `(M + M^dagger) / 2`
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |i, j| 0.5 * (self[(i, j)] + self[(j, i)].conj()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn diag(&self) -> Vec<Complex64> {
        (0..self.dim).map(|i| self[(i, i)]).collect()
    }

    /// Adds `s * other` in place.
    pub fn axpy(&mut self, s: Complex64, other: &ComplexMat) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }
}

impl Index<(usize, usize)> for ComplexMat {
    type Output = Complex64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &ComplexMat {
    type Output = ComplexMat;
    fn add(self, rhs: &ComplexMat) -> ComplexMat {
        assert_eq!(self.dim, rhs.dim);
        ComplexMat {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMat {
    type Output = ComplexMat;
    fn sub(self, rhs: &ComplexMat) -> ComplexMat {
        assert_eq!(self.dim, rhs.dim);
        ComplexMat {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &ComplexMat {
    type Output = ComplexMat;
    fn neg(self) -> ComplexMat {
        self.scale_re(-1.0)
    }
}

impl Mul for &ComplexMat {
    type Output = ComplexMat;
    fn mul(self, rhs: &ComplexMat) -> ComplexMat {
        self.matmul(rhs)
    }
}

impl AddAssign<&ComplexMat> for ComplexMat {
    fn add_assign(&mut self, rhs: &ComplexMat) {
        assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&ComplexMat> for ComplexMat {
    fn sub_assign(&mut self, rhs: &ComplexMat) {
        assert_eq!(self.dim, rhs.dim);
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

/// Truncated Fock-space lowering and raising operators.
pub fn ladder_ops(n_levels: usize) -> Result<(ComplexMat, ComplexMat)> {
    if n_levels < 2 {
        return Err(Error::InvalidDimension(format!(
            "ladder operators need at least 2 levels, got {n_levels}"
        )));
    }
    let lower = ComplexMat::from_fn(n_levels, |i, j| {
        if j == i + 1 {
            c((j as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    });
    let raise = lower.adjoint();
    Ok((lower, raise))
}

/// Position and momentum of a harmonic oscillator in its truncated Fock basis.
pub fn position_momentum(
    n_levels: usize,
    mass: f64,
    omega: f64,
    hbar: f64,
) -> Result<(ComplexMat, ComplexMat)> {
    for (name, v) in [("mass", mass), ("omega", omega), ("hbar", hbar)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    let (a, ad) = ladder_ops(n_levels)?;
    let q_scale = (hbar / (2.0 * mass * omega)).sqrt();
    let p_scale = (mass * hbar * omega / 2.0).sqrt();
    let q = (&a + &ad).scale_re(q_scale);
    let p = (&ad - &a).scale(c(0.0, p_scale));
    Ok((q, p))
}

/// Spectrum and eigenvectors of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: ComplexMat,
}

impl EigenSystem {
    pub fn eigenvector(&self, k: usize) -> ComplexVec {
        let n = self.vectors.dim();
        ComplexVec((0..n).map(|i| self.vectors[(i, k)]).collect())
    }

    /// `V diag(values) V^dagger`
    pub fn reconstruct(&self) -> ComplexMat {
        let n = self.vectors.dim();
        ComplexMat::from_fn(n, |i, j| {
            (0..n)
                .map(|k| self.vectors[(i, k)] * self.values[k] * self.vectors[(j, k)].conj())
                .sum()
        })
    }

    /// Expresses `m` in the eigenbasis: `V^dagger m V`.
    pub fn to_eigenbasis(&self, m: &ComplexMat) -> ComplexMat {
        self.vectors.adjoint().matmul(m).matmul(&self.vectors)
    }

    /// Maps `m` from the eigenbasis back: `V m V^dagger`.
    pub fn from_eigenbasis(&self, m: &ComplexMat) -> ComplexMat {
        self.vectors.matmul(m).matmul(&self.vectors.adjoint())
    }
}

pub fn hermitian_eigen(m: &ComplexMat, tol: f64) -> Result<EigenSystem> {
    let residual = m.hermiticity_residual();
    if !(residual < tol) {
        return Err(Error::HermiticityViolation { residual, tol });
    }
    let n = m.dim();
    let eig = m.hermitian_part().to_nalgebra().symmetric_eigen();
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMat::from_fn(n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(EigenSystem { values, vectors })
}
