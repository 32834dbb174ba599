//! Robustness versus sparsity of optimal protocols on random Schmidt-rank-2 targets.

use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::conic::SolverOptions;
use crate::error::{Error, Result};
use crate::measurements::{projective_setting, MeasurementSet};
use crate::sdp::{synthesize, LoccPolicy, ProtocolCertificate};
use crate::states::{random_pure_schmidt_with, DensityMatrix};

/// Policy entries above this count as nonzero.
pub const NONZERO_THRESHOLD: f64 = 1e-5;

/// Number of entries of the `C` and `U` tables above `threshold`.
pub fn count_nonzero(policy: &LoccPolicy, threshold: f64) -> usize {
    policy.table_c().iter().chain(policy.table_u()).filter(|&&v| v > threshold).count()
}

/// The 13 eigenbases of the generalized Gell-Mann generators of su(4).
///
/// Order: for each pair `j < k` in lexicographic order, the eigenbasis of
/// `|j⟩⟨k| + |k⟩⟨j|`, namely `(|j⟩ ± |k⟩)/√2` completed by the two remaining
/// computational kets; then for each pair the eigenbasis of
/// `−i|j⟩⟨k| + i|k⟩⟨j|`, namely `(|j⟩ ± i|k⟩)/√2` completed the same way;
/// last the computational basis shared by the three diagonal generators.
pub fn su4_eigenbasis_settings() -> MeasurementSet {
    let d = 4;
    let ket = |k: usize| -> Vec<Complex64> { (0..d).map(|i| Complex64::new(if i == k { 1.0 } else { 0.0 }, 0.0)).collect() };
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut settings = Vec::with_capacity(13);
    for phase in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
        for j in 0..d {
            for k in j + 1..d {
                let mut plus = vec![Complex64::new(0.0, 0.0); d];
                let mut minus = plus.clone();
                plus[j] = Complex64::new(s, 0.0);
                minus[j] = Complex64::new(s, 0.0);
                plus[k] = phase * s;
                minus[k] = -phase * s;
                let mut basis = vec![plus, minus];
                basis.extend((0..d).filter(|&l| l != j && l != k).map(ket));
                settings.push(projective_setting(&basis).expect("Gell-Mann eigenbases are orthonormal"));
            }
        }
    }
    settings.push(projective_setting(&(0..d).map(ket).collect::<Vec<_>>()).expect("computational basis"));
    MeasurementSet::new(d, settings).expect("projective settings are valid POVMs")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchStatus {
    Optimal,
    NearOptimal,
    Error,
}

/// One benchmark row. The certificate is kept in memory only.
#[derive(Clone, Debug, Serialize)]
pub struct BenchRecord {
    pub seed: u64,
    pub state_index: usize,
    #[serde(skip)]
    pub setting_family: String,
    pub robustness: f64,
    pub nonzero_count: usize,
    pub solve_time_s: f64,
    pub status: BenchStatus,
    #[serde(skip)]
    pub certificate: Option<ProtocolCertificate>,
    #[serde(skip)]
    pub error: Option<String>,
}

/// The `index`-th random Schmidt-rank-2 state on `ℂ⁴ ⊗ ℂ⁴` of a batch.
pub fn benchmark_state(seed: u64, index: usize) -> Result<DensityMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    Ok(random_pure_schmidt_with(4, 2, &mut rng)?.density())
}

/// Solves the `D`-certification program for `n_states` random Schmidt-rank-2
/// targets and records robustness and sparsity of each optimal protocol.
pub fn run_benchmark(
    n_states: usize,
    meas: &MeasurementSet,
    family: &str,
    schmidt_dim: usize,
    seed: u64,
    options: &SolverOptions,
) -> Result<Vec<BenchRecord>> {
    if n_states == 0 {
        return Err(Error::Domain("n_states must be at least 1".into()));
    }
    let states: Result<Vec<DensityMatrix>> = (0..n_states).map(|k| benchmark_state(seed, k)).collect();
    Ok(benchmark_states(&states?, meas, family, schmidt_dim, seed, options))
}

/// Benchmarks explicit targets; failures are recorded, never propagated.
pub fn benchmark_states(
    states: &[DensityMatrix],
    meas: &MeasurementSet,
    family: &str,
    schmidt_dim: usize,
    seed: u64,
    options: &SolverOptions,
) -> Vec<BenchRecord> {
    states
        .par_iter()
        .enumerate()
        .map(|(state_index, rho)| {
            let start = Instant::now();
            let result = synthesize(rho, meas, schmidt_dim, options);
            let solve_time_s = start.elapsed().as_secs_f64();
            let mut record = BenchRecord {
                seed,
                state_index,
                setting_family: family.to_string(),
                robustness: f64::NAN,
                nonzero_count: 0,
                solve_time_s,
                status: BenchStatus::Error,
                certificate: None,
                error: None,
            };
            match result {
                Ok(cert) => {
                    record.robustness = cert.robustness();
                    record.nonzero_count = count_nonzero(&cert.policy, NONZERO_THRESHOLD);
                    record.status = match cert.solver_status {
                        crate::conic::SolveStatus::Optimal => BenchStatus::Optimal,
                        _ => BenchStatus::NearOptimal,
                    };
                    record.certificate = Some(cert);
                }
                Err(e) => record.error = Some(e.to_string()),
            }
            record
        })
        .collect()
}

/// Writes `seed,state_index,robustness,nonzero_count,solve_time_s,status`.
pub fn write_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| Error::Validation(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::Validation(format!("csv: {e}")))?;
    Ok(())
}
