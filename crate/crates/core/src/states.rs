//! Target states and random states.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{kron_vec, partial_trace, ComplexMatrix, SubsystemDims};

/// Default singular-value cutoff for [`schmidt_rank`].
pub const SCHMIDT_TOL: f64 = 1e-7;

/// Smallest squared Schmidt coefficient produced by [`random_pure_schmidt`].
pub const SCHMIDT_FLOOR: f64 = 1e-4;

const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-9;
const NORM_TOL: f64 = 1e-12;

/// A bipartite density matrix on `ℂ^{d_A} ⊗ ℂ^{d_B}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    d_a: usize,
    d_b: usize,
}

impl DensityMatrix {
    /// Validates and symmetrizes `matrix`.
    pub fn new(matrix: ComplexMatrix, d_a: usize, d_b: usize) -> Result<Self> {
        if !matrix.is_square() || matrix.rows() != d_a * d_b {
            return Err(Error::Dimension(format!(
                "{}x{} matrix is not an operator on {d_a}x{d_b}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let matrix = matrix.symmetrized()?;
        let tr = matrix.trace().re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::Validation(format!("density matrix has trace {tr}")));
        }
        let min = matrix.eigenvalues_hermitian()?[0];
        if min < -PSD_TOL {
            return Err(Error::Validation(format!("density matrix has eigenvalue {min:.3e}")));
        }
        Ok(Self { matrix, d_a, d_b })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn d_a(&self) -> usize {
        self.d_a
    }

    pub fn d_b(&self) -> usize {
        self.d_b
    }

    pub fn dims(&self) -> SubsystemDims {
        SubsystemDims::bipartite(self.d_a, self.d_b)
    }

    /// `tr(op · ρ)`, real part.
    pub fn expectation(&self, op: &ComplexMatrix) -> f64 {
        op.trace_product(&self.matrix).re
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }
}

/// A normalized bipartite pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    vector: Vec<Complex64>,
    d_a: usize,
    d_b: usize,
}

impl PureState {
    pub fn new(vector: Vec<Complex64>, d_a: usize, d_b: usize) -> Result<Self> {
        if vector.len() != d_a * d_b {
            return Err(Error::Dimension(format!(
                "{} amplitudes for a {d_a}x{d_b} system",
                vector.len()
            )));
        }
        let norm = norm(&vector);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Validation(format!("state has norm {norm}")));
        }
        Ok(Self { vector, d_a, d_b })
    }

    /// Rescales a nonzero vector to unit norm.
    pub fn normalized(mut vector: Vec<Complex64>, d_a: usize, d_b: usize) -> Result<Self> {
        let n = norm(&vector);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Validation("cannot normalize a zero vector".into()));
        }
        vector.iter_mut().for_each(|z| *z /= n);
        Self::new(vector, d_a, d_b)
    }

    pub fn vector(&self) -> &[Complex64] {
        &self.vector
    }

    pub fn d_a(&self) -> usize {
        self.d_a
    }

    pub fn d_b(&self) -> usize {
        self.d_b
    }

    /// `d_A × d_B` coefficient matrix `ψ_{ij}` with `|ψ⟩ = Σ ψ_{ij} |i⟩|j⟩`.
    pub fn coefficients(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.d_a, self.d_b, |i, j| self.vector[i * self.d_b + j])
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix {
            matrix: ComplexMatrix::projector(&self.vector).hermitian_part(),
            d_a: self.d_a,
            d_b: self.d_b,
        }
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn basis_pair(d: usize, i: usize, j: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); d * d];
    v[i * d + j] = Complex64::new(1.0, 0.0);
    v
}

/// `(1/√k) Σ_{i<k} |ii⟩` inside `ℂ^d ⊗ ℂ^d`.
fn embedded_max_entangled(k: usize, d: usize) -> Vec<Complex64> {
    let amp = 1.0 / (k as f64).sqrt();
    let mut v = vec![Complex64::new(0.0, 0.0); d * d];
    for i in 0..k {
        v[i * d + i] = Complex64::new(amp, 0.0);
    }
    v
}

/// `|Ψ_d⟩ = (1/√d) Σ_i |ii⟩`.
pub fn max_entangled(d: usize) -> Result<PureState> {
    if d == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    PureState::new(embedded_max_entangled(d, d), d, d)
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("mixing parameter {p} is outside [0, 1]")));
    }
    Ok(())
}

/// `(1−p)|Ψ₃⟩⟨Ψ₃| + p|φ⟩⟨φ|` on `ℂ⁴⊗ℂ⁴`, with `|φ⟩ = (|23⟩+|32⟩)/√2`.
pub fn rho_unf(p: f64) -> Result<DensityMatrix> {
    check_probability(p)?;
    let psi3 = embedded_max_entangled(3, 4);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let phi: Vec<Complex64> = basis_pair(4, 2, 3)
        .iter()
        .zip(basis_pair(4, 3, 2))
        .map(|(a, b)| (a + b) * s)
        .collect();
    let mut m = ComplexMatrix::projector(&psi3).scale(1.0 - p);
    m.add_scaled(p, &ComplexMatrix::projector(&phi));
    DensityMatrix::new(m, 4, 4)
}

/// `(1−p)|Ψ₂⟩⟨Ψ₂| + (p/16)·I` on `ℂ⁴⊗ℂ⁴`.
pub fn rho_iso2(p: f64) -> Result<DensityMatrix> {
    check_probability(p)?;
    let psi2 = embedded_max_entangled(2, 4);
    let mut m = ComplexMatrix::projector(&psi2).scale(1.0 - p);
    m.add_scaled(p / 16.0, &ComplexMatrix::identity(16));
    DensityMatrix::new(m, 4, 4)
}

/// Haar-random `d × d` unitary: Gram–Schmidt on complex Gaussian columns.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<Complex64> = (0..d)
            .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        for u in &cols {
            let overlap: Complex64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= overlap * y);
        }
        let n = norm(&v);
        if n < 1e-10 {
            continue;
        }
        v.iter_mut().for_each(|z| *z /= n);
        cols.push(v);
    }
    ComplexMatrix::from_fn(d, d, |i, j| cols[j][i])
}

/// Flat Dirichlet sample on the `r`-simplex conditioned on every weight being
/// at least [`SCHMIDT_FLOOR`].
pub fn flat_dirichlet<R: Rng + ?Sized>(r: usize, rng: &mut R) -> Vec<f64> {
    if r == 1 {
        return vec![1.0];
    }
    loop {
        let draws: Vec<f64> = (0..r).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draws.iter().sum();
        let w: Vec<f64> = draws.iter().map(|x| x / total).collect();
        if w.iter().all(|&x| x >= SCHMIDT_FLOOR) {
            return w;
        }
    }
}

/// Random pure state on `ℂ^d⊗ℂ^d` with Schmidt rank exactly `r`, drawn from `rng`.
pub fn random_pure_schmidt_with<R: Rng + ?Sized>(d: usize, r: usize, rng: &mut R) -> Result<PureState> {
    if r == 0 || r > d {
        return Err(Error::Domain(format!("Schmidt rank {r} is not in 1..={d}")));
    }
    let weights = flat_dirichlet(r, rng);
    let u = haar_unitary(d, rng);
    let v = haar_unitary(d, rng);
    let mut psi = vec![Complex64::new(0.0, 0.0); d * d];
    for (k, w) in weights.iter().enumerate() {
        let s = w.sqrt();
        for i in 0..d {
            for j in 0..d {
                psi[i * d + j] += u[(i, k)] * v[(j, k)] * s;
            }
        }
    }
    PureState::normalized(psi, d, d)
}

/// Seeded variant of [`random_pure_schmidt_with`].
pub fn random_pure_schmidt(d: usize, r: usize, seed: u64) -> Result<PureState> {
    random_pure_schmidt_with(d, r, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Random product state `|α⟩|β⟩` on `ℂ^d⊗ℂ^d`.
pub fn random_product_state(d: usize, seed: u64) -> Result<PureState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = haar_unitary(d, &mut rng);
    let v = haar_unitary(d, &mut rng);
    let a: Vec<Complex64> = (0..d).map(|i| u[(i, 0)]).collect();
    let b: Vec<Complex64> = (0..d).map(|i| v[(i, 0)]).collect();
    PureState::normalized(kron_vec(&a, &b), d, d)
}

/// Number of singular values of the coefficient matrix above `tol`.
pub fn schmidt_rank(psi: &PureState, tol: f64) -> Result<usize> {
    Ok(psi.coefficients().singular_values()?.iter().filter(|&&s| s > tol).count())
}

/// Reduced state on subsystem A.
pub fn reduced_a(rho: &DensityMatrix) -> Result<ComplexMatrix> {
    partial_trace(rho.matrix(), &rho.dims(), &[1])
}

/// Reduced state on subsystem B.
pub fn reduced_b(rho: &DensityMatrix) -> Result<ComplexMatrix> {
    partial_trace(rho.matrix(), &rho.dims(), &[0])
}
