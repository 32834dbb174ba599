//! Reading an optimal protocol and its witness off a solved program.

use serde::{Deserialize, Serialize};

use crate::conic::{solve, RawSolution, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::measurements::MeasurementSet;
use crate::states::DensityMatrix;

use super::assemble::{assemble_reduced, AssembledProgram, PolicyBlocks};
use super::policy::{effective_povm, LoccPolicy, ZERO_THRESHOLD};
use super::witness::{round_from_solution, solve_witness, witness_residual, ReducedWitness};

/// Allowed marginal violation of an extracted policy.
pub const EXTRACTION_TOL: f64 = 1e-6;

/// Rounding may exceed the solver's `p_I` by this much before the witness is re-solved.
const ROUNDING_SLACK: f64 = 1e-6;

/// Cleaning may degrade `p_I + p_II` by this much before the raw policy is kept.
const CLEANING_SLACK: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
    /// `p_I` and `p_II` as returned by the solver, before cleaning and rounding.
    pub solver_p1: f64,
    pub solver_p2: f64,
    /// Whether the sparsified policy was kept.
    pub cleaned: bool,
    /// Whether the witness was re-solved for the cleaned `M_C`.
    pub witness_resolved: bool,
    pub message: String,
}

/// A one-way protocol with certified type-I error bound `p1` against all
/// states of Schmidt number at most `schmidt_dim`.
#[derive(Clone, Debug)]
pub struct ProtocolCertificate {
    pub p1: f64,
    pub p2: f64,
    pub schmidt_dim: usize,
    pub policy: LoccPolicy,
    pub m_c: ComplexMatrix,
    pub m_u: ComplexMatrix,
    pub lambda1: ComplexMatrix,
    pub lambda2: ComplexMatrix,
    pub lambda_scalar: f64,
    pub solver_status: SolveStatus,
    pub duality_gap: f64,
    pub witness_residual: f64,
    pub witness: ReducedWitness,
    pub diagnostics: SolverDiagnostics,
}

impl ProtocolCertificate {
    /// `1 − p_I − p_II`.
    pub fn robustness(&self) -> f64 {
        1.0 - self.p1 - self.p2
    }

    /// Checks the bounds on `p1, p2`, `M_C + M_U = I` and the witness residual.
    pub fn check_invariants(&self) -> Result<()> {
        let tol = 1e-7;
        for (name, v) in [("p1", self.p1), ("p2", self.p2)] {
            if !(-tol..=1.0 + tol).contains(&v) {
                return Err(Error::Validation(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        let n = self.m_c.rows();
        let dev = (&self.m_c + &self.m_u).max_abs_diff(&ComplexMatrix::identity(n));
        if dev > tol {
            return Err(Error::Validation(format!("M_C + M_U deviates from I by {dev:.3e}")));
        }
        if self.witness_residual > 1e-6 {
            return Err(Error::Validation(format!("witness residual {:.3e} exceeds 1e-6", self.witness_residual)));
        }
        self.policy.validate(EXTRACTION_TOL)
    }
}

fn read_policy(sol: &RawSolution, assembled: &AssembledProgram) -> Result<LoccPolicy> {
    let layout = &assembled.layout;
    let blocks = layout.policy.ok_or_else(|| Error::Extraction("program has no policy variables".into()))?;
    let (m, d) = (layout.m, layout.d);
    let scalars = |b: usize| -> Result<Vec<f64>> {
        sol.primal
            .get(b)
            .and_then(|v| v.scalars())
            .map(<[f64]>::to_vec)
            .ok_or_else(|| Error::Extraction(format!("block {b} is missing from the solution")))
    };
    let table = scalars(blocks.table)?;
    let n = m * m * d * d;
    let (mut c, mut u) = (vec![0.0; n], vec![0.0; n]);
    for x in 0..m {
        for y in 0..m {
            for a in 0..d {
                for b in 0..d {
                    let k = ((x * m + y) * d + a) * d + b;
                    c[k] = table[PolicyBlocks::table_index(m, d, x, y, 0, a, b)];
                    u[k] = table[PolicyBlocks::table_index(m, d, x, y, 1, a, b)];
                }
            }
        }
    }
    LoccPolicy::from_tables(m, d, c, u, scalars(blocks.marginal_q)?, scalars(blocks.marginal_r)?)
}

struct Candidate {
    policy: LoccPolicy,
    m_c: ComplexMatrix,
    m_u: ComplexMatrix,
    p1: f64,
    p2: f64,
    witness: ReducedWitness,
    resolved: bool,
}

fn evaluate(
    policy: LoccPolicy,
    target: &DensityMatrix,
    meas: &MeasurementSet,
    schmidt_dim: usize,
    hint: Option<(&RawSolution, &AssembledProgram)>,
    solver_p1: Option<f64>,
    options: &SolverOptions,
) -> Result<Candidate> {
    let (m_c, m_u) = effective_povm(&policy, meas)?;
    let p2 = target.expectation(&m_u);
    let mut best = match hint {
        Some((sol, assembled)) => Some(round_from_solution(sol, assembled, &m_c)?),
        None => None,
    };
    let mut resolved = false;
    let acceptable = |p: f64| solver_p1.is_some_and(|s| p <= s + ROUNDING_SLACK);
    if !best.as_ref().is_some_and(|(p, _)| acceptable(*p)) {
        let (_, rounded) = solve_witness(&m_c, meas.local_dim(), schmidt_dim, options)?;
        if let Some((p, w)) = rounded {
            if best.as_ref().is_none_or(|(q, _)| p < *q) {
                best = Some((p, w));
                resolved = true;
            }
        }
    }
    let (p1, witness) = best.ok_or_else(|| Error::Solver("witness program did not converge".into()))?;
    Ok(Candidate { policy, m_c, m_u, p1, p2, witness, resolved })
}

/// Builds the certificate from a solved program: the policy is read off,
/// clipped and sparsified at `1e-5`, `M_C`, `M_U` and `p_II` are recomputed
/// from it, and the witness is rounded to an exact one for that `M_C`.
pub fn extract_protocol(
    sol: &RawSolution,
    assembled: &AssembledProgram,
    target: &DensityMatrix,
    meas: &MeasurementSet,
) -> Result<ProtocolCertificate> {
    extract_protocol_with(sol, assembled, target, meas, &SolverOptions::default())
}

pub fn extract_protocol_with(
    sol: &RawSolution,
    assembled: &AssembledProgram,
    target: &DensityMatrix,
    meas: &MeasurementSet,
    options: &SolverOptions,
) -> Result<ProtocolCertificate> {
    if !sol.status.is_usable() {
        return Err(Error::Solver(format!("cannot extract from a solve with status {:?}: {}", sol.status, sol.message)));
    }
    let layout = &assembled.layout;
    let schmidt_dim = layout.schmidt_dim;
    let raw = read_policy(sol, assembled)?;
    let solver_p1 = sol.value(layout.p1);
    let solver_p2 = layout.p2.map(|c| sol.value(c)).unwrap_or(f64::NAN);
    let hint = (layout.form == super::assemble::ProgramForm::Reduced).then_some((sol, assembled));

    let cleaned = raw.cleaned(ZERO_THRESHOLD)?;
    let mut chosen = evaluate(cleaned, target, meas, schmidt_dim, hint, Some(solver_p1), options)?;
    let mut kept_clean = true;
    if chosen.p1 + chosen.p2 > sol.primal_objective + CLEANING_SLACK {
        let plain = evaluate(raw.cleaned(0.0)?, target, meas, schmidt_dim, hint, Some(solver_p1), options)?;
        if plain.p1 + plain.p2 < chosen.p1 + chosen.p2 {
            chosen = plain;
            kept_clean = false;
        }
    }
    let violation = chosen.policy.max_violation();
    if violation > EXTRACTION_TOL {
        return Err(Error::Extraction(format!("cleaned policy violates its constraints by {violation:.3e}")));
    }

    let lambda1 = chosen.witness.lambda1();
    let lambda2 = chosen.witness.lambda2();
    let residual = witness_residual(&chosen.m_c, chosen.p1, schmidt_dim, &lambda1, &lambda2, chosen.witness.lambda)?;
    Ok(ProtocolCertificate {
        p1: chosen.p1,
        p2: chosen.p2,
        schmidt_dim,
        policy: chosen.policy,
        m_c: chosen.m_c,
        m_u: chosen.m_u,
        lambda1,
        lambda2,
        lambda_scalar: chosen.witness.lambda,
        solver_status: sol.status,
        duality_gap: sol.duality_gap,
        witness_residual: residual,
        witness: chosen.witness,
        diagnostics: SolverDiagnostics {
            primal_objective: sol.primal_objective,
            dual_objective: sol.dual_objective,
            primal_infeasibility: sol.primal_infeasibility,
            dual_infeasibility: sol.dual_infeasibility,
            iterations: sol.iterations,
            solver_p1,
            solver_p2,
            cleaned: kept_clean,
            witness_resolved: chosen.resolved,
            message: sol.message.clone(),
        },
    })
}

/// Assembles the reduced program, solves it and extracts the certificate.
pub fn synthesize(
    target: &DensityMatrix,
    meas: &MeasurementSet,
    schmidt_dim: usize,
    options: &SolverOptions,
) -> Result<ProtocolCertificate> {
    let assembled = assemble_reduced(target, meas, schmidt_dim)?;
    let sol = solve(&assembled.program, options)?;
    extract_protocol_with(&sol, &assembled, target, meas, options)
}

/// Certifies a given policy: `p_II` from the target, `p_I` from the optimal
/// witness for its `M_C`.
pub fn certify_policy(
    policy: &LoccPolicy,
    target: &DensityMatrix,
    meas: &MeasurementSet,
    schmidt_dim: usize,
    options: &SolverOptions,
) -> Result<ProtocolCertificate> {
    policy.validate(EXTRACTION_TOL)?;
    let (m_c, m_u) = effective_povm(policy, meas)?;
    let (sol, rounded) = solve_witness(&m_c, meas.local_dim(), schmidt_dim, options)?;
    let (p1, witness) = rounded
        .ok_or_else(|| Error::Solver(format!("witness program ended with status {:?}: {}", sol.status, sol.message)))?;
    let p2 = target.expectation(&m_u);
    let lambda1 = witness.lambda1();
    let lambda2 = witness.lambda2();
    let residual = witness_residual(&m_c, p1, schmidt_dim, &lambda1, &lambda2, witness.lambda)?;
    Ok(ProtocolCertificate {
        p1,
        p2,
        schmidt_dim,
        policy: policy.clone(),
        m_c,
        m_u,
        lambda1,
        lambda2,
        lambda_scalar: witness.lambda,
        solver_status: sol.status,
        duality_gap: sol.duality_gap,
        witness_residual: residual,
        witness,
        diagnostics: SolverDiagnostics {
            primal_objective: sol.primal_objective,
            dual_objective: sol.dual_objective,
            primal_infeasibility: sol.primal_infeasibility,
            dual_infeasibility: sol.dual_infeasibility,
            iterations: sol.iterations,
            solver_p1: sol.primal_objective,
            solver_p2: p2,
            cleaned: false,
            witness_resolved: true,
            message: sol.message,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurements::{appendix_settings, SettingFamily};
    use crate::sdp::assemble::assemble_program;
    use crate::states::{rho_iso2, rho_unf};

    #[test]
    fn iso2_half_d1() {
        let cert = synthesize(&rho_iso2(0.5).unwrap(), &appendix_settings(SettingFamily::Iso2), 1, &SolverOptions::default())
            .unwrap();
        assert!((cert.robustness() - 0.145833).abs() < 1e-4, "{}", cert.robustness());
        cert.check_invariants().unwrap();
    }

    #[test]
    fn maximally_mixed_is_not_certified() {
        let cert = synthesize(&rho_iso2(1.0).unwrap(), &appendix_settings(SettingFamily::Iso2), 1, &SolverOptions::default())
            .unwrap();
        assert!(cert.robustness().abs() < 1e-4, "{}", cert.robustness());
        cert.check_invariants().unwrap();
    }

    #[test]
    fn full_form_extraction_matches_reduced() {
        // smallest full-form instance: two settings, D = 1
        let meas = appendix_settings(SettingFamily::Unf).subset(&[0, 1]).unwrap();
        let rho = rho_unf(0.2).unwrap();
        let opts = SolverOptions::default();
        let full = assemble_program(&rho, &meas, 1).unwrap();
        let sol = solve(&full.program, &opts).unwrap();
        let from_full = extract_protocol(&sol, &full, &rho, &meas).unwrap();
        let reduced = synthesize(&rho, &meas, 1, &opts).unwrap();
        assert!((from_full.robustness() - reduced.robustness()).abs() < 1e-5);
        from_full.check_invariants().unwrap();
    }

    #[test]
    fn certify_given_policy() {
        let meas = appendix_settings(SettingFamily::Unf);
        let policy = LoccPolicy::always_u(3, 4);
        let cert = certify_policy(&policy, &rho_unf(0.0).unwrap(), &meas, 2, &SolverOptions::default()).unwrap();
        assert!(cert.p1.abs() < 1e-6);
        assert!((cert.p2 - 1.0).abs() < 1e-12);
        cert.check_invariants().unwrap();
    }
}
