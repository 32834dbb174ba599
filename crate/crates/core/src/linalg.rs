//! Dense complex matrix primitives.
//!
//! Every composite operator in the crate uses a single row-major tensor
//! ordering. Four-party operators are laid out as `A ⊗ A' ⊗ B' ⊗ B`, two-party
//! operators as `A ⊗ B`. The helpers here (Kronecker products, partial
//! transposes, the ancilla embedding `Π_D`) all follow that convention.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Deviation from Hermiticity tolerated before symmetrization.
pub const HERMITIAN_TOL: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense complex matrix stored in row-major order.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Real diagonal matrix.
    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// `|u⟩⟨v|`.
    pub fn outer(u: &[Complex64], v: &[Complex64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
    }

    /// Rank-one projector `|v⟩⟨v|`.
    pub fn projector(v: &[Complex64]) -> Self {
        Self::outer(v, v)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &ComplexMatrix) -> Complex64 {
        assert_eq!(self.cols, other.rows, "trace_product shape mismatch");
        assert_eq!(self.rows, other.cols, "trace_product shape mismatch");
        let mut acc = ZERO;
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_complex(&self, s: Complex64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// `self += s · other`.
    pub fn add_scaled(&mut self, s: f64, other: &ComplexMatrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add_scaled shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "max_abs_diff shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Elementwise `max |M − M†|`; infinite for non-square input.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut dev: f64 = 0.0;
        for i in 0..self.rows {
            for j in i..self.cols {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    /// `(M + M†)/2`.
    pub fn hermitian_part(&self) -> Self {
        assert!(self.is_square(), "hermitian_part of a non-square matrix");
        Self::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    /// Symmetrizes after checking the pre-symmetrization deviation against
    /// [`HERMITIAN_TOL`].
    pub fn symmetrized(&self) -> Result<Self> {
        let deviation = self.hermitian_deviation();
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(self.hermitian_part())
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len(), "mul_vec shape mismatch");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// `⟨v|M|v⟩`.
    pub fn expectation(&self, v: &[Complex64]) -> Complex64 {
        let mv = self.mul_vec(v);
        v.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum()
    }

    /// Eigenvalues of a Hermitian matrix in nondecreasing order.
    pub fn eigenvalues_hermitian(&self) -> Result<Vec<f64>> {
        let h = self.symmetrized()?;
        let mat = h.to_faer();
        mat.self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Numerical(format!("eigenvalue solver: {e:?}")))
    }

    /// Eigenvalues and orthonormal eigenvectors (as columns) of a Hermitian matrix.
    pub fn eigen_hermitian(&self) -> Result<(Vec<f64>, ComplexMatrix)> {
        let h = self.symmetrized()?;
        let evd = h
            .to_faer()
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Numerical(format!("eigen decomposition: {e:?}")))?;
        let s = evd.S();
        let u = evd.U();
        let values = (0..self.rows).map(|i| s[i].re).collect();
        let vectors = ComplexMatrix::from_fn(self.rows, self.cols, |i, j| u[(i, j)]);
        Ok((values, vectors))
    }

    /// Singular values in nonincreasing order.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        self.to_faer()
            .singular_values()
            .map_err(|e| Error::Numerical(format!("svd: {e:?}")))
    }

    pub(crate) fn to_faer(&self) -> Mat<Complex64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub shape mismatch");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }
}

/// Dense real matrix, used for real embeddings of Hermitian operators.
#[derive(Clone, Debug, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (i..self.cols).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Eigenvalues of a symmetric matrix in nondecreasing order.
    pub fn eigenvalues_symmetric(&self) -> Result<Vec<f64>> {
        if !self.is_symmetric(HERMITIAN_TOL) {
            return Err(Error::Validation("matrix is not symmetric".into()));
        }
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Numerical(format!("eigenvalue solver: {e:?}")))
    }
}

impl Index<(usize, usize)> for RealMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for RealMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Ordered tensor-factor dimensions of a composite system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsystemDims(Vec<usize>);

impl SubsystemDims {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Dimension(format!("subsystem dimensions must be positive, got {dims:?}")));
        }
        Ok(Self(dims))
    }

    /// `[d_A, d_B]`.
    pub fn bipartite(d_a: usize, d_b: usize) -> Self {
        Self(vec![d_a, d_b])
    }

    /// `[d, D, D, d]` for the `A A' B' B` ordering.
    pub fn with_ancillas(d: usize, schmidt_dim: usize) -> Self {
        Self(vec![d, schmidt_dim, schmidt_dim, d])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    fn split(&self, mut index: usize, digits: &mut [usize]) {
        for k in (0..self.0.len()).rev() {
            digits[k] = index % self.0[k];
            index /= self.0[k];
        }
    }

    fn join(&self, digits: &[usize]) -> usize {
        digits.iter().zip(&self.0).fold(0, |acc, (&i, &d)| acc * d + i)
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (rb, cb) = (b.rows, b.cols);
    let mut out = ComplexMatrix::zeros(a.rows * rb, a.cols * cb);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Kronecker product of two state vectors.
pub fn kron_vec(u: &[Complex64], v: &[Complex64]) -> Vec<Complex64> {
    u.iter().flat_map(|a| v.iter().map(move |b| a * b)).collect()
}

/// Transposes the tensor factors listed in `subsystems`, leaving the others untouched.
pub fn partial_transpose(
    m: &ComplexMatrix,
    dims: &SubsystemDims,
    subsystems: &[usize],
) -> Result<ComplexMatrix> {
    check_square_dims(m, dims)?;
    if let Some(&bad) = subsystems.iter().find(|&&s| s >= dims.len()) {
        return Err(Error::Dimension(format!(
            "subsystem {bad} does not exist in a {}-party system",
            dims.len()
        )));
    }
    let n = m.rows;
    let parties = dims.len();
    let mut flip = vec![false; parties];
    for &s in subsystems {
        flip[s] = true;
    }
    let mut ri = vec![0; parties];
    let mut ci = vec![0; parties];
    let mut out = ComplexMatrix::zeros(n, n);
    for r in 0..n {
        dims.split(r, &mut ri);
        for c in 0..n {
            dims.split(c, &mut ci);
            for k in 0..parties {
                if flip[k] {
                    std::mem::swap(&mut ri[k], &mut ci[k]);
                }
            }
            out[(r, c)] = m[(dims.join(&ri), dims.join(&ci))];
            // restore the row digits for the next column
            for k in 0..parties {
                if flip[k] {
                    std::mem::swap(&mut ri[k], &mut ci[k]);
                }
            }
        }
    }
    Ok(out)
}

/// Traces out the tensor factors listed in `traced`.
pub fn partial_trace(m: &ComplexMatrix, dims: &SubsystemDims, traced: &[usize]) -> Result<ComplexMatrix> {
    check_square_dims(m, dims)?;
    let parties = dims.len();
    let kept: Vec<usize> = (0..parties).filter(|k| !traced.contains(k)).collect();
    let kept_dims = SubsystemDims(kept.iter().map(|&k| dims.0[k]).collect());
    let out_n = kept_dims.total();
    let mut out = ComplexMatrix::zeros(out_n, out_n);
    let mut ri = vec![0; parties];
    let mut ci = vec![0; parties];
    let mut rk = vec![0; kept.len()];
    let mut ck = vec![0; kept.len()];
    for r in 0..m.rows {
        dims.split(r, &mut ri);
        for c in 0..m.cols {
            dims.split(c, &mut ci);
            if traced.iter().any(|&t| ri[t] != ci[t]) {
                continue;
            }
            for (slot, &k) in kept.iter().enumerate() {
                rk[slot] = ri[k];
                ck[slot] = ci[k];
            }
            out[(kept_dims.join(&rk), kept_dims.join(&ck))] += m[(r, c)];
        }
    }
    Ok(out)
}

fn check_square_dims(m: &ComplexMatrix, dims: &SubsystemDims) -> Result<()> {
    if !m.is_square() || m.rows != dims.total() {
        return Err(Error::Dimension(format!(
            "{}x{} matrix does not match subsystem dimensions {:?}",
            m.rows,
            m.cols,
            dims.dims()
        )));
    }
    Ok(())
}

/// The embedding `Π_D = I_A ⊗ |ψ_D⁺⟩_{A'B'} ⊗ I_B` with un-normalized
/// `|ψ_D⁺⟩ = Σ_i |i⟩|i⟩`, as a `(d·D·D·d) × d²` matrix.
pub fn build_pi(d: usize, schmidt_dim: usize) -> ComplexMatrix {
    let big = SubsystemDims::with_ancillas(d, schmidt_dim);
    let mut pi = ComplexMatrix::zeros(big.total(), d * d);
    for a in 0..d {
        for b in 0..d {
            for i in 0..schmidt_dim {
                pi[(big.join(&[a, i, i, b]), a * d + b)] = ONE;
            }
        }
    }
    pi
}

/// Real symmetric embedding `[[Re h, −Im h], [Im h, Re h]]` of a Hermitian matrix.
pub fn real_embedding(h: &ComplexMatrix) -> Result<RealMatrix> {
    let h = h.symmetrized()?;
    let n = h.rows;
    Ok(RealMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = h[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    }))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(h: &ComplexMatrix) -> Result<f64> {
    if !h.is_square() {
        return Err(Error::Dimension("min_eigenvalue of a non-square matrix".into()));
    }
    if h.rows == 0 {
        return Err(Error::Dimension("min_eigenvalue of an empty matrix".into()));
    }
    Ok(h.eigenvalues_hermitian()?[0])
}

/// Smallest and largest eigenvalue of a Hermitian matrix.
pub fn eigenvalue_range(h: &ComplexMatrix) -> Result<(f64, f64)> {
    let ev = h.eigenvalues_hermitian()?;
    match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) => Ok((lo, hi)),
        _ => Err(Error::Dimension("eigenvalues of an empty matrix".into())),
    }
}
