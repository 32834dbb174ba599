//! Conic programs for the optimal one-way protocol and its witness.
//!
//! Complex Hermitian variables `H` of size `n` live in real PSD blocks `X` of
//! size `2n` and are read as `Re H = (X₁₁ + X₂₂)/2`, `Im H = (X₂₁ − X₁₂)/2`.
//! Every PSD `X` yields a PSD `H` and every PSD `H` arises this way, so no
//! structure constraints on `X` are needed.

use num_complex::Complex64;

use crate::conic::{Block, ConicProgram, Coord};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, RealMatrix};
use crate::measurements::MeasurementSet;
use crate::states::DensityMatrix;

use super::policy::ProductOperators;

/// Which formulation of the witness constraint is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProgramForm {
    /// Operators `Λ¹, Λ²` on the full `A A' B' B` space of dimension `d·D·D·d`.
    Full,
    /// Operators on `AB` only, after averaging over `U ⊗ Ū` on `A'B'`.
    Reduced,
}

/// Role of a Hermitian PSD variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WitnessPart {
    /// Full form: the PSD operator `Λ¹`.
    Lambda1,
    /// Full form: the operator `Λ²` whose `B'B` partial transpose enters.
    Lambda2,
    /// Reduced form: `Λ¹` on the complement of `ψ⁺`.
    Z0,
    /// Reduced form: `Λ¹` on `ψ⁺`.
    Z1,
    /// Reduced form: `Λ²` on the symmetric subspace.
    Ys,
    /// Reduced form: `Λ²` on the antisymmetric subspace.
    Ya,
}

/// A complex Hermitian `n × n` variable embedded in PSD block `block` of size `2n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HermitianVar {
    pub block: usize,
    pub n: usize,
}

impl HermitianVar {
    /// Reads `H` from a value of the embedding block.
    pub fn read(self, x: &RealMatrix) -> ComplexMatrix {
        let n = self.n;
        ComplexMatrix::from_fn(n, n, |k, l| {
            Complex64::new(0.5 * (x[(k, l)] + x[(n + k, n + l)]), 0.5 * (x[(n + k, l)] - x[(k, n + l)]))
        })
    }

    fn re_terms(self, k: usize, l: usize, s: f64) -> [(Coord, f64); 2] {
        let n = self.n;
        [(Coord::entry(self.block, k, l), 0.5 * s), (Coord::entry(self.block, n + k, n + l), 0.5 * s)]
    }

    fn im_terms(self, k: usize, l: usize, s: f64) -> [(Coord, f64); 2] {
        let n = self.n;
        [(Coord::entry(self.block, n + k, l), 0.5 * s), (Coord::entry(self.block, k, n + l), -0.5 * s)]
    }
}

/// Block indices of the policy variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicyBlocks {
    /// `2·m²·d²` scalars, index `(((x·m + y)·2 + c)·d + a)·d + b` with `c = 0` for `C`.
    pub table: usize,
    /// `m²·d` scalars, index `(x·m + y)·d + a`.
    pub marginal_q: usize,
    /// `m` scalars.
    pub marginal_r: usize,
}

impl PolicyBlocks {
    pub fn table_index(m: usize, d: usize, x: usize, y: usize, c: usize, a: usize, b: usize) -> usize {
        (((x * m + y) * 2 + c) * d + a) * d + b
    }
}

/// Where every quantity of interest lives in an assembled program.
#[derive(Clone, Debug, PartialEq)]
pub struct VariableLayout {
    pub form: ProgramForm,
    pub d: usize,
    pub m: usize,
    pub schmidt_dim: usize,
    /// Absent for witness programs with a fixed effective POVM.
    pub policy: Option<PolicyBlocks>,
    pub p1: Coord,
    pub p2: Option<Coord>,
    /// The scalar multiplier of `ΠΠ† − I/D`; absent for `D = 1`.
    pub lambda: Option<Coord>,
    pub witness: Vec<(WitnessPart, HermitianVar)>,
}

impl VariableLayout {
    pub fn part(&self, part: WitnessPart) -> Option<HermitianVar> {
        self.witness.iter().find(|(p, _)| *p == part).map(|&(_, h)| h)
    }
}

#[derive(Clone, Debug)]
pub struct AssembledProgram {
    pub program: ConicProgram,
    pub layout: VariableLayout,
}

/// Rows `Re E[k][l] = rhs` (`k ≤ l`) and `Im E[k][l] = rhs` (`k < l`) of a
/// Hermitian affine equation `E = 0`.
struct HermitianRows {
    n: usize,
    terms: Vec<Vec<(Coord, f64)>>,
    rhs: Vec<f64>,
}

impl HermitianRows {
    fn new(n: usize) -> Self {
        Self { n, terms: vec![Vec::new(); n * n], rhs: vec![0.0; n * n] }
    }

    /// `E += s · H[map(k, l)]`.
    fn add_var(&mut self, h: HermitianVar, s: f64, map: impl Fn(usize, usize) -> (usize, usize)) {
        let n = self.n;
        for k in 0..n {
            for l in k..n {
                let (kp, lp) = map(k, l);
                self.terms[k * n + l].extend(h.re_terms(kp, lp, s));
                if k < l {
                    self.terms[l * n + k].extend(h.im_terms(kp, lp, s));
                }
            }
        }
    }

    /// `E += s · v · K` for the nonzero upper entries of `K`.
    fn add_scalar(&mut self, v: Coord, s: f64, entries: impl IntoIterator<Item = (usize, usize, Complex64)>) {
        let n = self.n;
        for (k, l, z) in entries {
            if k > l {
                continue;
            }
            if z.re != 0.0 {
                self.terms[k * n + l].push((v, s * z.re));
            }
            if k < l && z.im != 0.0 {
                self.terms[l * n + k].push((v, s * z.im));
            }
        }
    }

    /// `E += s · K` for a constant `K`.
    fn add_const(&mut self, s: f64, entries: impl IntoIterator<Item = (usize, usize, Complex64)>) {
        let n = self.n;
        for (k, l, z) in entries {
            if k > l {
                continue;
            }
            self.rhs[k * n + l] -= s * z.re;
            if k < l {
                self.rhs[l * n + k] -= s * z.im;
            }
        }
    }

    fn emit(self, prog: &mut ConicProgram) -> Result<()> {
        for (terms, rhs) in self.terms.into_iter().zip(self.rhs) {
            if terms.is_empty() {
                if rhs.abs() > 1e-12 {
                    return Err(Error::Assembly("constant witness equation is violated".into()));
                }
                continue;
            }
            prog.add_row(terms, rhs);
        }
        Ok(())
    }
}

fn dense_entries(m: &ComplexMatrix) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
    let n = m.cols();
    m.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, z)| z.norm_sqr() > 0.0)
        .map(move |(i, &z)| (i / n, i % n, z))
}

fn identity_entries(n: usize, s: f64) -> impl Iterator<Item = (usize, usize, Complex64)> {
    (0..n).map(move |k| (k, k, Complex64::new(s, 0.0)))
}

/// Partial transpose on `B` of `d² × d²` index pairs.
fn gamma(d: usize) -> impl Fn(usize, usize) -> (usize, usize) {
    move |k, l| {
        let (a, b) = (k / d, k % d);
        let (ap, bp) = (l / d, l % d);
        (a * d + bp, ap * d + b)
    }
}

/// Partial transpose on `B'B` of `(a, i, j, b)` index pairs.
fn gamma_full(d: usize, big_d: usize) -> impl Fn(usize, usize) -> (usize, usize) {
    let tail = big_d * d;
    move |k, l| {
        let (hk, tk) = (k / tail, k % tail);
        let (hl, tl) = (l / tail, l % tail);
        (hk * tail + tl, hl * tail + tk)
    }
}

/// `Π K Π†` as sparse entries over `(a, i, j, b)`.
fn lift_entries(k_mat: &ComplexMatrix, d: usize, big_d: usize) -> Vec<(usize, usize, Complex64)> {
    let idx = |ab: usize, i: usize| ((ab / d * big_d + i) * big_d + i) * d + ab % d;
    let mut out = Vec::new();
    for (r, c, z) in dense_entries(k_mat) {
        for i in 0..big_d {
            for ip in 0..big_d {
                out.push((idx(r, i), idx(c, ip), z));
            }
        }
    }
    out
}

/// Source of the effective POVM element `M_C` in the witness equations.
enum EffectivePovm<'a> {
    Policy { table: usize, m: usize, products: &'a ProductOperators },
    Fixed(&'a ComplexMatrix),
}

fn check_shape(target: &DensityMatrix, meas: &MeasurementSet, schmidt_dim: usize, level: u32) -> Result<usize> {
    if level != 1 {
        return Err(Error::UnsupportedLevel(level));
    }
    let d = meas.local_dim();
    if target.d_a() != d || target.d_b() != d {
        return Err(Error::Assembly(format!(
            "target of dimension {}x{} does not match measurements of dimension {d}",
            target.d_a(),
            target.d_b()
        )));
    }
    check_schmidt_dim(d, schmidt_dim)?;
    Ok(d)
}

fn check_schmidt_dim(d: usize, schmidt_dim: usize) -> Result<()> {
    if schmidt_dim == 0 || schmidt_dim >= d {
        return Err(Error::Domain(format!("Schmidt dimension must satisfy 1 <= D < d = {d}, got {schmidt_dim}")));
    }
    Ok(())
}

/// Full-form program over the policy and `Λ¹, Λ²` on `A A' B' B`.
pub fn assemble_program(target: &DensityMatrix, meas: &MeasurementSet, schmidt_dim: usize) -> Result<AssembledProgram> {
    assemble(target, meas, schmidt_dim, 1, ProgramForm::Full)
}

/// Reduced-form program with the same optimum as [`assemble_program`].
pub fn assemble_reduced(target: &DensityMatrix, meas: &MeasurementSet, schmidt_dim: usize) -> Result<AssembledProgram> {
    assemble(target, meas, schmidt_dim, 1, ProgramForm::Reduced)
}

/// Minimizes `p_I + p_II` over one-way policies whose `M_C` admits a
/// Schmidt-number-`D` witness at hierarchy level `level` (only level 1 exists).
pub fn assemble(
    target: &DensityMatrix,
    meas: &MeasurementSet,
    schmidt_dim: usize,
    level: u32,
    form: ProgramForm,
) -> Result<AssembledProgram> {
    let d = check_shape(target, meas, schmidt_dim, level)?;
    let m = meas.num_settings();
    let products = ProductOperators::new(meas);
    let born = products.born(target);

    let mut prog = ConicProgram::new();
    let table = prog.add_block(Block::Nonneg(2 * m * m * d * d));
    let marginal_q = prog.add_block(Block::Nonneg(m * m * d));
    let marginal_r = prog.add_block(Block::Nonneg(m));
    let errors = prog.add_block(Block::Nonneg(2));
    let p1 = Coord::scalar(errors, 0);
    let p2 = Coord::scalar(errors, 1);
    prog.add_objective(p1, 1.0);
    prog.add_objective(p2, 1.0);

    let t = |x, y, c, a, b| Coord::scalar(table, PolicyBlocks::table_index(m, d, x, y, c, a, b));
    let q = |x: usize, y: usize, a: usize| Coord::scalar(marginal_q, (x * m + y) * d + a);
    for x in 0..m {
        for y in 0..m {
            for a in 0..d {
                for b in 0..d {
                    prog.add_row(vec![(t(x, y, 0, a, b), 1.0), (t(x, y, 1, a, b), 1.0), (q(x, y, a), -1.0)], 0.0);
                }
            }
        }
    }
    for x in 0..m {
        for a in 0..d {
            let mut terms: Vec<(Coord, f64)> = (0..m).map(|y| (q(x, y, a), 1.0)).collect();
            terms.push((Coord::scalar(marginal_r, x), -1.0));
            prog.add_row(terms, 0.0);
        }
    }
    prog.add_row((0..m).map(|x| (Coord::scalar(marginal_r, x), 1.0)).collect(), 1.0);
    // p_II = tr(M_U ρ) = 1 − tr(M_C ρ)
    let mut terms = Vec::with_capacity(m * m * d * d + 1);
    for x in 0..m {
        for y in 0..m {
            for a in 0..d {
                for b in 0..d {
                    let w = born[((x * m + y) * d + a) * d + b];
                    if w != 0.0 {
                        terms.push((t(x, y, 0, a, b), w));
                    }
                }
            }
        }
    }
    terms.push((p2, 1.0));
    prog.add_row(terms, 1.0);

    let source = EffectivePovm::Policy { table, m, products: &products };
    let (lambda, witness) = add_witness(&mut prog, form, d, schmidt_dim, p1, &source)?;
    prog.validate()?;
    Ok(AssembledProgram {
        program: prog,
        layout: VariableLayout {
            form,
            d,
            m,
            schmidt_dim,
            policy: Some(PolicyBlocks { table, marginal_q, marginal_r }),
            p1,
            p2: Some(p2),
            lambda,
            witness,
        },
    })
}

/// `min p` such that `p·ΠΠ† − Π M_C Π†` has a Schmidt-number-`D` witness
/// decomposition, for a fixed `d² × d²` operator `M_C`.
pub fn witness_program(m_c: &ComplexMatrix, d: usize, schmidt_dim: usize, form: ProgramForm) -> Result<AssembledProgram> {
    if m_c.rows() != d * d || !m_c.is_square() {
        return Err(Error::Dimension(format!("M_C is {}x{}, expected {}x{}", m_c.rows(), m_c.cols(), d * d, d * d)));
    }
    check_schmidt_dim(d, schmidt_dim)?;
    let m_c = m_c.symmetrized()?;
    let mut prog = ConicProgram::new();
    let pb = prog.add_block(Block::Free(1));
    let p1 = Coord::scalar(pb, 0);
    prog.add_objective(p1, 1.0);
    let (lambda, witness) = add_witness(&mut prog, form, d, schmidt_dim, p1, &EffectivePovm::Fixed(&m_c))?;
    prog.validate()?;
    Ok(AssembledProgram {
        program: prog,
        layout: VariableLayout { form, d, m: 0, schmidt_dim, policy: None, p1, p2: None, lambda, witness },
    })
}

type WitnessVars = (Option<Coord>, Vec<(WitnessPart, HermitianVar)>);

fn add_witness(
    prog: &mut ConicProgram,
    form: ProgramForm,
    d: usize,
    big_d: usize,
    p1: Coord,
    mc: &EffectivePovm<'_>,
) -> Result<WitnessVars> {
    let lambda = (big_d >= 2).then(|| Coord::scalar(prog.add_block(Block::Free(1)), 0));
    let herm = |prog: &mut ConicProgram, part, n: usize| {
        (part, HermitianVar { block: prog.add_block(Block::Psd(2 * n)), n })
    };
    match form {
        ProgramForm::Reduced => {
            let n = d * d;
            let df = big_d as f64;
            if let Some(lambda) = lambda {
                let parts = vec![
                    herm(prog, WitnessPart::Z0, n),
                    herm(prog, WitnessPart::Z1, n),
                    herm(prog, WitnessPart::Ys, n),
                    herm(prog, WitnessPart::Ya, n),
                ];
                let (z0, z1, ys, ya) = (parts[0].1, parts[1].1, parts[2].1, parts[3].1);
                // Z0 + (Ys^Γ + Ya^Γ)/2 − (λ/D) I = 0
                let mut eq = HermitianRows::new(n);
                eq.add_var(z0, 1.0, |k, l| (k, l));
                eq.add_var(ys, 0.5, gamma(d));
                eq.add_var(ya, 0.5, gamma(d));
                eq.add_scalar(lambda, -1.0 / df, identity_entries(n, 1.0));
                eq.emit(prog)?;
                // Z1 + ((1+D) Ys^Γ + (1−D) Ya^Γ)/2 + λ(D − 1/D) I − D p I + D M_C = 0
                let mut eq = HermitianRows::new(n);
                eq.add_var(z1, 1.0, |k, l| (k, l));
                eq.add_var(ys, 0.5 * (1.0 + df), gamma(d));
                eq.add_var(ya, 0.5 * (1.0 - df), gamma(d));
                eq.add_scalar(lambda, df - 1.0 / df, identity_entries(n, 1.0));
                eq.add_scalar(p1, -df, identity_entries(n, 1.0));
                add_mc(&mut eq, mc, df, |mat| dense_entries(mat).collect());
                eq.emit(prog)?;
                Ok((Some(lambda), parts))
            } else {
                let parts = vec![herm(prog, WitnessPart::Z1, n), herm(prog, WitnessPart::Ys, n)];
                let (z1, ys) = (parts[0].1, parts[1].1);
                // Z1 + Ys^Γ − p I + M_C = 0
                let mut eq = HermitianRows::new(n);
                eq.add_var(z1, 1.0, |k, l| (k, l));
                eq.add_var(ys, 1.0, gamma(d));
                eq.add_scalar(p1, -1.0, identity_entries(n, 1.0));
                add_mc(&mut eq, mc, 1.0, |mat| dense_entries(mat).collect());
                eq.emit(prog)?;
                Ok((None, parts))
            }
        }
        ProgramForm::Full => {
            let n = d * big_d * big_d * d;
            let parts = vec![herm(prog, WitnessPart::Lambda1, n), herm(prog, WitnessPart::Lambda2, n)];
            let (l1, l2) = (parts[0].1, parts[1].1);
            let pipi = lift_entries(&ComplexMatrix::identity(d * d), d, big_d);
            // Λ¹ + Λ²^{T_B'B} + λ(ΠΠ† − I/D) − p ΠΠ† + Π M_C Π† = 0
            let mut eq = HermitianRows::new(n);
            eq.add_var(l1, 1.0, |k, l| (k, l));
            eq.add_var(l2, 1.0, gamma_full(d, big_d));
            if let Some(lambda) = lambda {
                eq.add_scalar(lambda, 1.0, pipi.iter().copied());
                eq.add_scalar(lambda, -1.0 / big_d as f64, identity_entries(n, 1.0));
            }
            eq.add_scalar(p1, -1.0, pipi.iter().copied());
            add_mc(&mut eq, mc, 1.0, |mat| lift_entries(mat, d, big_d));
            eq.emit(prog)?;
            Ok((lambda, parts))
        }
    }
}

fn add_mc(
    eq: &mut HermitianRows,
    mc: &EffectivePovm<'_>,
    s: f64,
    entries: impl Fn(&ComplexMatrix) -> Vec<(usize, usize, Complex64)>,
) {
    match mc {
        EffectivePovm::Policy { table, m, products } => {
            let (m, d) = (*m, products.outcomes());
            for x in 0..m {
                for y in 0..m {
                    for a in 0..d {
                        for b in 0..d {
                            let op = &products.ops()[((x * m + y) * d + a) * d + b];
                            let v = Coord::scalar(*table, PolicyBlocks::table_index(m, d, x, y, 0, a, b));
                            eq.add_scalar(v, s, entries(op));
                        }
                    }
                }
            }
        }
        EffectivePovm::Fixed(mat) => eq.add_const(s, entries(mat)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{build_pi, partial_transpose, SubsystemDims};
    use crate::measurements::{appendix_settings, SettingFamily};
    use crate::states::rho_unf;

    #[test]
    fn gamma_matches_partial_transpose() {
        let d = 3;
        let m = ComplexMatrix::from_fn(9, 9, |i, j| Complex64::new((i * 9 + j) as f64, (i as f64) - (j as f64)));
        let pt = partial_transpose(&m, &SubsystemDims::bipartite(d, d), &[1]).unwrap();
        let g = gamma(d);
        for k in 0..9 {
            for l in 0..9 {
                let (kp, lp) = g(k, l);
                assert_eq!(pt[(k, l)], m[(kp, lp)]);
            }
        }
    }

    #[test]
    fn gamma_full_matches_partial_transpose() {
        let (d, big_d) = (3, 2);
        let n = d * big_d * big_d * d;
        let m = ComplexMatrix::from_fn(n, n, |i, j| Complex64::new((i * n + j) as f64, 0.5 * i as f64));
        let pt = partial_transpose(&m, &SubsystemDims::with_ancillas(d, big_d), &[2, 3]).unwrap();
        let g = gamma_full(d, big_d);
        for k in 0..n {
            for l in 0..n {
                let (kp, lp) = g(k, l);
                assert_eq!(pt[(k, l)], m[(kp, lp)]);
            }
        }
    }

    #[test]
    fn lift_matches_pi_conjugation() {
        let (d, big_d) = (3, 2);
        let k_mat = ComplexMatrix::from_fn(9, 9, |i, j| Complex64::new(i as f64 + 1.0, j as f64 - 2.0));
        let pi = build_pi(d, big_d);
        let expected = &(&pi * &k_mat) * &pi.adjoint();
        let n = expected.rows();
        let mut got = ComplexMatrix::zeros(n, n);
        for (r, c, z) in lift_entries(&k_mat, d, big_d) {
            got[(r, c)] += z;
        }
        assert!(got.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn hermitian_read_inverts_embedding() {
        let h = ComplexMatrix::from_fn(3, 3, |i, j| {
            Complex64::new((i + j) as f64, if i == j { 0.0 } else { (i as f64) - (j as f64) })
        });
        let x = crate::linalg::real_embedding(&h).unwrap();
        let v = HermitianVar { block: 0, n: 3 };
        assert!(v.read(&x).max_abs_diff(&h) < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let rho = rho_unf(0.5).unwrap();
        let meas = appendix_settings(SettingFamily::Unf);
        assert!(matches!(assemble_reduced(&rho, &meas, 4), Err(Error::Domain(_))));
        assert!(matches!(assemble_reduced(&rho, &meas, 0), Err(Error::Domain(_))));
        assert!(matches!(assemble(&rho, &meas, 2, 2, ProgramForm::Reduced), Err(Error::UnsupportedLevel(2))));
        let q = crate::states::max_entangled(3).unwrap().density();
        assert!(matches!(assemble_reduced(&q, &meas, 2), Err(Error::Assembly(_))));
    }

    #[test]
    fn layout_block_counts() {
        let rho = rho_unf(0.5).unwrap();
        let meas = appendix_settings(SettingFamily::Unf);
        let prog = assemble_reduced(&rho, &meas, 2).unwrap();
        assert_eq!(prog.layout.witness.len(), 4);
        assert!(prog.layout.lambda.is_some());
        let prog = assemble_reduced(&rho, &meas, 1).unwrap();
        assert_eq!(prog.layout.witness.len(), 2);
        assert!(prog.layout.lambda.is_none());
        assert_eq!(prog.program.blocks()[prog.layout.policy.unwrap().table], Block::Nonneg(2 * 9 * 16));
    }
}
