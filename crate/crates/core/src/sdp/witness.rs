//! Schmidt-number witnesses for a fixed effective POVM element `M_C`.
//!
//! A certificate for `tr(σ M_C) ≤ p` on all `σ` of Schmidt number at most `D`
//! is a decomposition `Π(p·I − M_C)Π† = Λ¹ + (Λ²)^{T_B'B} + λ(ΠΠ† − I/D)` with
//! `Λ¹, Λ² ⪰ 0`. Averaging any such decomposition over `U ⊗ Ū` on `A'B'`
//! gives one of the form
//!
//! `Λ¹ = Z₀ ⊗ (I − P⁺) + Z₁ ⊗ P⁺`, `Λ² = Y_s ⊗ Sym + Y_a ⊗ Anti`,
//!
//! with `P⁺` the normalized maximally entangled projector and `Sym`, `Anti`
//! the symmetric and antisymmetric projectors on `A'B'`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conic::{solve, RawSolution, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::linalg::{build_pi, partial_transpose, ComplexMatrix, SubsystemDims};
use crate::states::{haar_unitary, random_pure_schmidt_with};

use super::assemble::{witness_program, AssembledProgram, ProgramForm, WitnessPart};

/// Dual infeasibility below which a dual bound is trusted for an infeasibility verdict.
const DUAL_TRUST: f64 = 1e-7;

/// The averaged witness on `AB`, all parts `d² × d²`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedWitness {
    pub d: usize,
    pub schmidt_dim: usize,
    pub lambda: f64,
    /// Absent for `D = 1`, where `I − P⁺` vanishes.
    pub z0: Option<ComplexMatrix>,
    pub z1: ComplexMatrix,
    pub ys: ComplexMatrix,
    /// Absent for `D = 1`, where the antisymmetric subspace is empty.
    pub ya: Option<ComplexMatrix>,
}

impl ReducedWitness {
    /// `Λ¹` on `A A' B' B`.
    pub fn lambda1(&self) -> ComplexMatrix {
        let (d, dd) = (self.d, self.schmidt_dim);
        let mut out = lift(&self.z1, &ancilla_projector(dd, Ancilla::Psi), d, dd);
        if let Some(z0) = &self.z0 {
            out = &out + &lift(z0, &ancilla_projector(dd, Ancilla::PsiComplement), d, dd);
        }
        out
    }

    /// `Λ²` on `A A' B' B`.
    pub fn lambda2(&self) -> ComplexMatrix {
        let (d, dd) = (self.d, self.schmidt_dim);
        let mut out = lift(&self.ys, &ancilla_projector(dd, Ancilla::Sym), d, dd);
        if let Some(ya) = &self.ya {
            out = &out + &lift(ya, &ancilla_projector(dd, Ancilla::Anti), d, dd);
        }
        out
    }

    /// Smallest eigenvalue over all PSD parts.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut lo = f64::INFINITY;
        for m in [Some(&self.z1), Some(&self.ys), self.z0.as_ref(), self.ya.as_ref()].into_iter().flatten() {
            lo = lo.min(crate::linalg::min_eigenvalue(m)?);
        }
        Ok(lo)
    }
}

#[derive(Clone, Copy)]
enum Ancilla {
    Psi,
    PsiComplement,
    Sym,
    Anti,
}

/// Projectors on `A'B'` (dimension `D²`, index `i·D + j`).
fn ancilla_projector(dd: usize, which: Ancilla) -> ComplexMatrix {
    let n = dd * dd;
    ComplexMatrix::from_fn(n, n, |r, c| {
        let (i, j) = (r / dd, r % dd);
        let (ip, jp) = (c / dd, c % dd);
        let id = if r == c { 1.0 } else { 0.0 };
        let psi = if i == j && ip == jp { 1.0 / dd as f64 } else { 0.0 };
        let swap = if i == jp && j == ip { 1.0 } else { 0.0 };
        let v = match which {
            Ancilla::Psi => psi,
            Ancilla::PsiComplement => id - psi,
            Ancilla::Sym => 0.5 * (id + swap),
            Ancilla::Anti => 0.5 * (id - swap),
        };
        Complex64::new(v, 0.0)
    })
}

/// `X_AB ⊗ Y_A'B'` reordered to `A A' B' B`.
fn lift(x: &ComplexMatrix, y: &ComplexMatrix, d: usize, dd: usize) -> ComplexMatrix {
    let n = d * dd * dd * d;
    let split = |k: usize| {
        let b = k % d;
        let j = (k / d) % dd;
        let i = (k / (d * dd)) % dd;
        let a = k / (d * dd * dd);
        (a * d + b, i * dd + j)
    };
    ComplexMatrix::from_fn(n, n, |r, c| {
        let (xr, yr) = split(r);
        let (xc, yc) = split(c);
        x[(xr, xc)] * y[(yr, yc)]
    })
}

/// Partial transpose on `B` of a `d² × d²` operator.
fn gamma(m: &ComplexMatrix, d: usize) -> Result<ComplexMatrix> {
    partial_transpose(m, &SubsystemDims::bipartite(d, d), &[1])
}

/// Projection onto the PSD cone.
fn psd_part(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (values, vectors) = m.hermitian_part().eigen_hermitian()?;
    let n = m.rows();
    let mut out = ComplexMatrix::zeros(n, n);
    for (k, &v) in values.iter().enumerate() {
        if v <= 0.0 {
            continue;
        }
        let col: Vec<Complex64> = (0..n).map(|r| vectors[(r, k)]).collect();
        out.add_scaled(v, &ComplexMatrix::projector(&col));
    }
    Ok(out)
}

/// Turns approximate `Y_s, Y_a, λ` into an exact witness and the smallest
/// `p` it certifies: the negative parts of `Y_s, Y_a` are dropped, `λ` is
/// raised until `Z₀ ⪰ 0`, and `p` is chosen so that `Z₁ ⪰ 0`.
pub fn round_witness(
    m_c: &ComplexMatrix,
    d: usize,
    schmidt_dim: usize,
    ys: &ComplexMatrix,
    ya: Option<&ComplexMatrix>,
    lambda: f64,
) -> Result<(f64, ReducedWitness)> {
    let n = d * d;
    let m_c = m_c.hermitian_part();
    let ys = psd_part(ys)?;
    let ys_g = gamma(&ys, d)?;
    let eye = ComplexMatrix::identity(n);
    if schmidt_dim == 1 {
        let h = &m_c + &ys_g;
        let p = *h.eigenvalues_hermitian()?.last().unwrap_or(&0.0);
        let z1 = (&eye.scale(p) - &h).hermitian_part();
        return Ok((p, ReducedWitness { d, schmidt_dim, lambda: 0.0, z0: None, z1, ys, ya: None }));
    }
    let df = schmidt_dim as f64;
    let ya = match ya {
        Some(ya) => psd_part(ya)?,
        None => ComplexMatrix::zeros(n, n),
    };
    let ya_g = gamma(&ya, d)?;
    let half_sum = (&ys_g + &ya_g).scale(0.5);
    let mut lambda = lambda;
    let mut z0 = (&eye.scale(lambda / df) - &half_sum).hermitian_part();
    let e0 = crate::linalg::min_eigenvalue(&z0)?;
    if e0 < 0.0 {
        lambda -= e0 * df;
        z0 = (&eye.scale(lambda / df) - &half_sum).hermitian_part();
    }
    // D·p·I = D·M_C + Z₁ + H
    let mut h = m_c.scale(df);
    h.add_scaled(0.5 * (1.0 + df), &ys_g);
    h.add_scaled(0.5 * (1.0 - df), &ya_g);
    h.add_scaled(lambda * (df - 1.0 / df), &eye);
    let top = *h.eigenvalues_hermitian()?.last().unwrap_or(&0.0);
    let p = top / df;
    let z1 = (&eye.scale(top) - &h).hermitian_part();
    Ok((p, ReducedWitness { d, schmidt_dim, lambda, z0: Some(z0), z1, ys, ya: Some(ya) }))
}

/// Max-norm of `Π(p·I − M_C)Π† − Λ¹ − (Λ²)^{T_B'B} − λ(ΠΠ† − I/D)`.
pub fn witness_residual(
    m_c: &ComplexMatrix,
    p1: f64,
    schmidt_dim: usize,
    lambda1: &ComplexMatrix,
    lambda2: &ComplexMatrix,
    lambda: f64,
) -> Result<f64> {
    let n_ab = m_c.rows();
    let d = (n_ab as f64).sqrt().round() as usize;
    if d * d != n_ab {
        return Err(Error::Dimension(format!("M_C of size {n_ab} is not bipartite with equal local dimensions")));
    }
    let dims = SubsystemDims::with_ancillas(d, schmidt_dim);
    let n = dims.total();
    if lambda1.rows() != n || lambda2.rows() != n {
        return Err(Error::Dimension(format!("witness parts must be {n}x{n}")));
    }
    let pi = build_pi(d, schmidt_dim);
    let pid = pi.adjoint();
    let eye_ab = ComplexMatrix::identity(n_ab);
    let lhs = &(&pi * &(&eye_ab.scale(p1) - m_c)) * &pid;
    let pipi = &pi * &pid;
    let mut rhs = lambda1 + &partial_transpose(lambda2, &dims, &[2, 3])?;
    rhs.add_scaled(lambda, &pipi);
    rhs.add_scaled(-lambda / schmidt_dim as f64, &ComplexMatrix::identity(n));
    Ok(lhs.max_abs_diff(&rhs))
}

/// Rounded witness read from a solved reduced program.
pub(crate) fn round_from_solution(
    sol: &RawSolution,
    assembled: &AssembledProgram,
    m_c: &ComplexMatrix,
) -> Result<(f64, ReducedWitness)> {
    let layout = &assembled.layout;
    if layout.form != ProgramForm::Reduced {
        return Err(Error::Extraction("witness rounding needs a reduced-form solution".into()));
    }
    let read = |part| -> Result<Option<ComplexMatrix>> {
        match layout.part(part) {
            None => Ok(None),
            Some(h) => {
                let x = sol.primal[h.block]
                    .matrix()
                    .ok_or_else(|| Error::Extraction(format!("block {} is not a matrix", h.block)))?;
                Ok(Some(h.read(x)))
            }
        }
    };
    let ys = read(WitnessPart::Ys)?.ok_or_else(|| Error::Extraction("missing Y_s block".into()))?;
    let ya = read(WitnessPart::Ya)?;
    let lambda = layout.lambda.map(|c| sol.value(c)).unwrap_or(0.0);
    round_witness(m_c, layout.d, layout.schmidt_dim, &ys, ya.as_ref(), lambda)
}

/// Solves `min p` over witnesses for a fixed `M_C` and rounds the result.
pub fn solve_witness(
    m_c: &ComplexMatrix,
    d: usize,
    schmidt_dim: usize,
    options: &SolverOptions,
) -> Result<(RawSolution, Option<(f64, ReducedWitness)>)> {
    let assembled = witness_program(m_c, d, schmidt_dim, ProgramForm::Reduced)?;
    let sol = solve(&assembled.program, options)?;
    let rounded = if sol.status.is_usable() { Some(round_from_solution(&sol, &assembled, m_c)?) } else { None };
    Ok((sol, rounded))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessStatus {
    Feasible,
    Infeasible,
    Indeterminate,
}

/// Outcome of [`verify_witness`].
#[derive(Clone, Debug)]
pub struct WitnessReport {
    pub status: WitnessStatus,
    /// The bound that was checked.
    pub p1: f64,
    /// Smallest bound with an explicit witness, if one was found.
    pub certified_p: Option<f64>,
    /// Solver lower bound on the smallest certifiable bound.
    pub lower_bound: f64,
    /// Residual of the witness equality at `p1`, when feasible.
    pub residual: Option<f64>,
    /// Smallest eigenvalue of the witness parts, when feasible.
    pub min_eigenvalue: Option<f64>,
    pub solver_status: SolveStatus,
    pub witness: Option<ReducedWitness>,
}

/// Checks whether `p1·ΠΠ† − Π M_C Π†` has a level-1 witness decomposition,
/// i.e. whether `tr(σ M_C) ≤ p1` is certified on Schmidt number `D`.
pub fn verify_witness(m_c: &ComplexMatrix, p1: f64, d: usize, schmidt_dim: usize, tol: f64) -> Result<WitnessReport> {
    verify_witness_with(m_c, p1, d, schmidt_dim, tol, &SolverOptions::default())
}

pub fn verify_witness_with(
    m_c: &ComplexMatrix,
    p1: f64,
    d: usize,
    schmidt_dim: usize,
    tol: f64,
    options: &SolverOptions,
) -> Result<WitnessReport> {
    let (sol, rounded) = solve_witness(m_c, d, schmidt_dim, options)?;
    let mut report = WitnessReport {
        status: WitnessStatus::Indeterminate,
        p1,
        certified_p: None,
        lower_bound: sol.dual_objective,
        residual: None,
        min_eigenvalue: None,
        solver_status: sol.status,
        witness: None,
    };
    if let Some((p, mut w)) = rounded {
        report.certified_p = Some(p);
        if p <= p1 + tol {
            // slack p1 − p goes into Z₁ (or the P⁺ part of Λ¹)
            let slack = (p1 - p).max(0.0) * schmidt_dim as f64;
            w.z1.add_scaled(slack, &ComplexMatrix::identity(d * d));
            let residual = witness_residual(m_c, p1.max(p), schmidt_dim, &w.lambda1(), &w.lambda2(), w.lambda)?;
            report.residual = Some(residual);
            report.min_eigenvalue = Some(w.min_eigenvalue()?);
            report.status = WitnessStatus::Feasible;
            report.witness = Some(w);
            return Ok(report);
        }
    }
    if sol.status != SolveStatus::Failed && sol.dual_infeasibility <= DUAL_TRUST && sol.dual_objective > p1 + tol {
        report.status = WitnessStatus::Infeasible;
    }
    Ok(report)
}

/// Result of [`randomized_witness_oracle`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub max_overlap: f64,
    pub samples: usize,
    pub bound: f64,
    /// `max_overlap > bound + 1e-6`.
    pub violated: bool,
}

/// Largest `⟨ψ|M_C|ψ⟩` over random pure states of Schmidt rank `1..=D`.
pub fn randomized_witness_oracle(
    m_c: &ComplexMatrix,
    p1: f64,
    schmidt_dim: usize,
    n_samples: usize,
    seed: u64,
) -> Result<OracleReport> {
    let d = local_dim(m_c)?;
    if schmidt_dim == 0 || schmidt_dim > d {
        return Err(Error::Domain(format!("Schmidt rank {schmidt_dim} is outside 1..={d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = if n_samples == 0 { 0.0 } else { f64::NEG_INFINITY };
    for k in 0..n_samples {
        let r = 1 + k % schmidt_dim;
        let psi = random_pure_schmidt_with(d, r, &mut rng)?;
        best = f64::max(best, m_c.expectation(psi.vector()).re);
    }
    Ok(OracleReport { max_overlap: best, samples: n_samples, bound: p1, violated: best > p1 + 1e-6 })
}

fn local_dim(m_c: &ComplexMatrix) -> Result<usize> {
    let n = m_c.rows();
    let d = (n as f64).sqrt().round() as usize;
    if !m_c.is_square() || d * d != n {
        return Err(Error::Dimension(format!("{}x{} is not an operator on C^d ⊗ C^d", m_c.rows(), m_c.cols())));
    }
    Ok(d)
}

/// Lower bound on `max ⟨ψ|M_C|ψ⟩` over Schmidt rank `≤ D` by alternating
/// optimization of the factors of `ψ = Σ_k |a_k⟩|b_k⟩`.
pub fn seesaw_max_overlap(m_c: &ComplexMatrix, schmidt_dim: usize, restarts: usize, seed: u64) -> Result<f64> {
    let d = local_dim(m_c)?;
    let dd = schmidt_dim.min(d).max(1);
    let m_c = m_c.hermitian_part();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..restarts.max(1) {
        // columns of the unitary give orthonormal starting factors
        let u = haar_unitary(d, &mut rng);
        let mut fixed: Vec<Vec<Complex64>> = (0..dd).map(|k| (0..d).map(|r| u[(r, k)]).collect()).collect();
        let mut value = f64::NEG_INFINITY;
        for sweep in 0..200 {
            // optimize Alice's factor with Bob's fixed, then swap roles
            let side = sweep % 2;
            let (v, free) = best_factor(&m_c, &fixed, d, side)?;
            fixed = orthonormalize(free);
            if (v - value).abs() < 1e-13 && sweep > 1 {
                value = v;
                break;
            }
            value = v;
        }
        best = best.max(value);
    }
    Ok(best)
}

/// Top eigenpair of `L† M L` where `L` maps a factor on one side to the state
/// with the other side's orthonormal factor fixed.
fn best_factor(m_c: &ComplexMatrix, fixed: &[Vec<Complex64>], d: usize, side: usize) -> Result<(f64, Vec<Vec<Complex64>>)> {
    let dd = fixed.len();
    let n = d * dd;
    // column (e, k) of L: |e⟩ ⊗ |f_k⟩ (side 0) or |f_k⟩ ⊗ |e⟩ (side 1)
    let l = ComplexMatrix::from_fn(d * d, n, |ab, col| {
        let (e, k) = (col / dd, col % dd);
        let (a, b) = (ab / d, ab % d);
        if side == 0 {
            if a == e {
                fixed[k][b]
            } else {
                Complex64::new(0.0, 0.0)
            }
        } else if b == e {
            fixed[k][a]
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let reduced = &(&l.adjoint() * m_c) * &l;
    let (values, vectors) = reduced.hermitian_part().eigen_hermitian()?;
    let top = n - 1;
    let free: Vec<Vec<Complex64>> = (0..dd).map(|k| (0..d).map(|e| vectors[(e * dd + k, top)]).collect()).collect();
    Ok((values[top], free))
}

fn orthonormalize(vectors: Vec<Vec<Complex64>>) -> Vec<Vec<Complex64>> {
    let d = vectors.first().map_or(0, Vec::len);
    let mut out: Vec<Vec<Complex64>> = Vec::with_capacity(vectors.len());
    for mut v in vectors {
        for q in &out {
            let c: Complex64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-10 {
            v.iter_mut().for_each(|z| *z /= norm);
            out.push(v);
        } else {
            // degenerate factor: replace by a basis vector outside the span
            for e in 0..d {
                let mut w = vec![Complex64::new(0.0, 0.0); d];
                w[e] = Complex64::new(1.0, 0.0);
                for q in &out {
                    let c: Complex64 = q.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                    w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
                let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if norm > 1e-6 {
                    w.iter_mut().for_each(|z| *z /= norm);
                    out.push(w);
                    break;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::max_entangled;

    #[test]
    fn trivial_povm_elements_verify() {
        let d = 3;
        let zero = ComplexMatrix::zeros(9, 9);
        let r = verify_witness(&zero, 0.0, d, 1, 1e-6).unwrap();
        assert_eq!(r.status, WitnessStatus::Feasible);
        assert!(r.residual.unwrap() <= 1e-6);
        let eye = ComplexMatrix::identity(9);
        for dd in [1, 2] {
            let r = verify_witness(&eye, 1.0, d, dd, 1e-6).unwrap();
            assert_eq!(r.status, WitnessStatus::Feasible, "D={dd}");
            assert!(r.residual.unwrap() <= 1e-6);
        }
    }

    #[test]
    fn maximally_entangled_projector_bounds() {
        // ⟨Ψ|σ|Ψ⟩ ≤ D/d on Schmidt number D, and the level-1 relaxation is tight here
        let d = 3;
        let proj = max_entangled(d).unwrap().density().into_matrix();
        for dd in 1..d {
            let bound = dd as f64 / d as f64;
            let r = verify_witness(&proj, bound, d, dd, 1e-6).unwrap();
            assert_eq!(r.status, WitnessStatus::Feasible, "D={dd}");
            assert!((r.certified_p.unwrap() - bound).abs() < 1e-5);
            assert!(r.residual.unwrap() <= 1e-6);
            assert!(r.min_eigenvalue.unwrap() > -1e-9);
            let r = verify_witness(&proj, bound - 0.05, d, dd, 1e-6).unwrap();
            assert_eq!(r.status, WitnessStatus::Infeasible, "D={dd}");
        }
    }

    #[test]
    fn oracle_trivial_cases() {
        let zero = ComplexMatrix::zeros(16, 16);
        assert_eq!(randomized_witness_oracle(&zero, 0.0, 2, 50, 1).unwrap().max_overlap, 0.0);
        let eye = ComplexMatrix::identity(16);
        let r = randomized_witness_oracle(&eye, 1.0, 3, 50, 1).unwrap();
        assert!((r.max_overlap - 1.0).abs() < 1e-12);
        assert!(!r.violated);
    }

    #[test]
    fn seesaw_finds_schmidt_overlap() {
        let d = 4;
        let proj = max_entangled(d).unwrap().density().into_matrix();
        for dd in 1..=3 {
            let v = seesaw_max_overlap(&proj, dd, 3, 7).unwrap();
            assert!((v - dd as f64 / d as f64).abs() < 1e-9, "D={dd}: {v}");
        }
    }

    #[test]
    fn ancilla_projectors_resolve_identity() {
        for dd in 1..=3 {
            let n = dd * dd;
            let eye = ComplexMatrix::identity(n);
            let a = &ancilla_projector(dd, Ancilla::Psi) + &ancilla_projector(dd, Ancilla::PsiComplement);
            let b = &ancilla_projector(dd, Ancilla::Sym) + &ancilla_projector(dd, Ancilla::Anti);
            assert!(a.max_abs_diff(&eye) < 1e-15);
            assert!(b.max_abs_diff(&eye) < 1e-15);
        }
    }
}
