//! Hypothesis testing on top of a certified protocol: p-values, the expected
//! p-value bound, `p_II` from estimated statistics, and Monte-Carlo rounds.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurements::MeasurementSet;
use crate::sdp::{LoccPolicy, ProductOperators};
use crate::states::DensityMatrix;

/// Default significance level for the `certified` verdict.
pub const DEFAULT_SIGNIFICANCE: f64 = 0.01;

/// Rounds per parallel work unit in [`simulate_rounds`].
const CHUNK: usize = 4096;

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("{name} = {p} is outside [0, 1]")));
    }
    Ok(())
}

/// `Σ_{k=v}^{n} C(n,k) p1^k (1−p1)^{n−k}`: the largest probability that a
/// state of Schmidt number at most `D` yields `C` at least `v` times.
pub fn p_value(v: u64, n: u64, p1: f64) -> Result<f64> {
    check_probability("p1", p1)?;
    if v > n {
        return Err(Error::Domain(format!("count {v} exceeds the number of rounds {n}")));
    }
    if v == 0 || p1 == 1.0 {
        return Ok(1.0);
    }
    if p1 == 0.0 {
        return Ok(0.0);
    }
    if v == n {
        return Ok((0..n).fold(1.0, |acc, _| acc * p1));
    }
    let (lp, lq) = (p1.ln(), (-p1).ln_1p());
    // log C(n, v)
    let log_binom: f64 = (1..=v.min(n - v)).map(|i| ((n - i + 1) as f64 / i as f64).ln()).sum();
    let mut log_term = log_binom + v as f64 * lp + (n - v) as f64 * lq;
    let log_ratio = lp - lq;
    let mut max = log_term;
    let mut sum = 1.0;
    for k in v..n {
        log_term += ((n - k) as f64 / (k + 1) as f64).ln() + log_ratio;
        if log_term > max {
            sum = sum * (max - log_term).exp() + 1.0;
            max = log_term;
        } else {
            let t = (log_term - max).exp();
            sum += t;
            // past the mode the terms decrease geometrically
            if t < 1e-18 * sum && (k as f64 + 1.0) > n as f64 * p1 {
                break;
            }
        }
    }
    Ok((max + sum.ln()).exp().min(1.0))
}

/// `[1 − (1 − p1 − p2)²]^n`, the bound on the expected p-value after `n`
/// rounds on the target state.
pub fn expected_pvalue_bound(p1: f64, p2: f64, n: u64) -> Result<f64> {
    let s = p1 + p2;
    if !(0.0..=1.0 + 1e-12).contains(&s) || p1 < 0.0 || p2 < 0.0 {
        return Err(Error::Domain(format!("p1 + p2 = {s} must lie in [0, 1]")));
    }
    let gap = (1.0 - s).max(0.0);
    Ok((1.0 - gap * gap).powf(n as f64))
}

/// Outcome probabilities `p(a, b | x, y)`, some setting pairs possibly missing.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityTable {
    m: usize,
    d: usize,
    probs: Vec<f64>,
    present: Vec<bool>,
}

impl ProbabilityTable {
    /// Born probabilities of `rho`.
    pub fn exact(rho: &DensityMatrix, meas: &MeasurementSet) -> Self {
        let (m, d) = (meas.num_settings(), meas.local_dim());
        Self { m, d, probs: ProductOperators::new(meas).born(rho), present: vec![true; m * m] }
    }

    pub fn num_settings(&self) -> usize {
        self.m
    }

    pub fn outcomes(&self) -> usize {
        self.d
    }

    pub fn is_present(&self, x: usize, y: usize) -> bool {
        self.present[x * self.m + y]
    }

    pub fn get(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.probs[((x * self.m + y) * self.d + a) * self.d + b]
    }
}

/// Tallies `n(a, b | x, y)` of an experiment with a fixed number of rounds
/// per setting pair. Pairs that were never measured have no counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub dims: usize,
    pub settings: usize,
    pub rounds_per_pair: u64,
    /// Indexed `[x][y][a][b]`; an empty `[x][y]` entry marks a missing pair.
    pub counts: Vec<Vec<Vec<Vec<u64>>>>,
}

impl ExperimentRecord {
    /// Checks shapes and that every present pair sums to `rounds_per_pair`.
    pub fn validate(&self) -> Result<()> {
        let (m, d) = (self.settings, self.dims);
        if self.counts.len() != m {
            return Err(Error::Validation(format!("counts has {} rows, expected {m}", self.counts.len())));
        }
        for (x, row) in self.counts.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Validation(format!("counts[{x}] has {} entries, expected {m}", row.len())));
            }
            for (y, table) in row.iter().enumerate() {
                if table.is_empty() {
                    continue;
                }
                if table.len() != d || table.iter().any(|r| r.len() != d) {
                    return Err(Error::Validation(format!("counts[{x}][{y}] is not a {d}x{d} table")));
                }
                let total: u64 = table.iter().flatten().sum();
                if total != self.rounds_per_pair {
                    return Err(Error::Validation(format!(
                        "counts[{x}][{y}] sums to {total}, expected {}",
                        self.rounds_per_pair
                    )));
                }
            }
        }
        if self.rounds_per_pair == 0 {
            return Err(Error::Validation("rounds_per_pair must be positive".into()));
        }
        Ok(())
    }

    /// `p̂(a, b | x, y) = n(a, b | x, y) / rounds_per_pair`.
    pub fn estimated_probs(&self) -> Result<ProbabilityTable> {
        self.validate()?;
        let (m, d) = (self.settings, self.dims);
        let mut probs = vec![0.0; m * m * d * d];
        let mut present = vec![false; m * m];
        for x in 0..m {
            for y in 0..m {
                let table = &self.counts[x][y];
                if table.is_empty() {
                    continue;
                }
                present[x * m + y] = true;
                for a in 0..d {
                    for b in 0..d {
                        probs[((x * m + y) * d + a) * d + b] = table[a][b] as f64 / self.rounds_per_pair as f64;
                    }
                }
            }
        }
        Ok(ProbabilityTable { m, d, probs, present })
    }

    /// Samples `rounds_per_pair` rounds of every setting pair on `rho`.
    pub fn sample(rho: &DensityMatrix, meas: &MeasurementSet, rounds_per_pair: u64, seed: u64) -> Result<Self> {
        let exact = ProbabilityTable::exact(rho, meas);
        let (m, d) = (exact.m, exact.d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![vec![vec![vec![0u64; d]; d]; m]; m];
        for x in 0..m {
            for y in 0..m {
                let w: Vec<f64> = (0..d * d).map(|k| exact.get(x, y, k / d, k % d).max(0.0)).collect();
                let dist = WeightedIndex::new(&w).map_err(|e| Error::Simulation(e.to_string()))?;
                for _ in 0..rounds_per_pair {
                    let k = dist.sample(&mut rng);
                    counts[x][y][k / d][k % d] += 1;
                }
            }
        }
        Ok(Self { dims: d, settings: m, rounds_per_pair, counts })
    }

    /// [`p2_exp`] on the estimated probabilities.
    pub fn p2_exp(&self, policy: &LoccPolicy) -> Result<f64> {
        p2_exp(&self.estimated_probs()?, policy)
    }
}

/// `Σ P(x, y, U | a, b) · p̂(a, b | x, y)`.
pub fn p2_exp(probs: &ProbabilityTable, policy: &LoccPolicy) -> Result<f64> {
    let (m, d) = (policy.num_settings(), policy.outcomes());
    if probs.m != m || probs.d != d {
        return Err(Error::Dimension(format!(
            "record with m={}, d={} does not match policy with m={m}, d={d}",
            probs.m, probs.d
        )));
    }
    let mut missing = Vec::new();
    let mut total = 0.0;
    for x in 0..m {
        for y in 0..m {
            let needed = (0..d * d).any(|k| policy.p(x, y, crate::sdp::Outcome::U, k / d, k % d) != 0.0);
            if !needed {
                continue;
            }
            if !probs.is_present(x, y) {
                missing.push((x, y));
                continue;
            }
            for a in 0..d {
                for b in 0..d {
                    total += policy.p(x, y, crate::sdp::Outcome::U, a, b) * probs.get(x, y, a, b);
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompleteData { missing });
    }
    Ok(total)
}

/// Result of a run of `n` rounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationOutcome {
    pub c_count: u64,
    pub rounds: u64,
    pub p1_used: f64,
    pub p_value: f64,
    pub significance: f64,
    /// `p_value < significance`.
    pub certified: bool,
}

impl CertificationOutcome {
    pub fn new(c_count: u64, rounds: u64, p1: f64, significance: f64) -> Result<Self> {
        check_probability("significance", significance)?;
        let p_value = p_value(c_count, rounds, p1)?;
        Ok(Self { c_count, rounds, p1_used: p1, p_value, significance, certified: p_value < significance })
    }
}

/// Everything needed to sample one round.
struct RoundSampler {
    m: usize,
    d: usize,
    setting: WeightedIndex<f64>,
    /// Alice's outcome given `x`.
    alice: Vec<Option<WeightedIndex<f64>>>,
    /// Bob's setting given `(x, a)`.
    bob_setting: Vec<Option<WeightedIndex<f64>>>,
    /// Bob's outcome given `(x, y, a)`.
    bob: Vec<Option<WeightedIndex<f64>>>,
    /// `P(C | x, y, a, b)`.
    accept: Vec<f64>,
}

fn weighted(w: &[f64]) -> Option<WeightedIndex<f64>> {
    WeightedIndex::new(w.iter().map(|v| v.max(0.0))).ok()
}

impl RoundSampler {
    fn new(rho: &DensityMatrix, meas: &MeasurementSet, policy: &LoccPolicy) -> Result<Self> {
        let (m, d) = (policy.num_settings(), policy.outcomes());
        let born = ProbabilityTable::exact(rho, meas);
        let setting = weighted(policy.marginal_r())
            .ok_or_else(|| Error::Simulation("setting distribution P(x) has no positive mass".into()))?;
        let mut alice = Vec::with_capacity(m);
        let mut bob_setting = Vec::with_capacity(m * d);
        let mut bob = Vec::with_capacity(m * m * d);
        let mut accept = vec![0.0; m * m * d * d];
        for x in 0..m {
            // Alice's marginal does not depend on Bob's setting
            let pa: Vec<f64> = (0..d).map(|a| (0..d).map(|b| born.get(x, 0, a, b)).sum()).collect();
            alice.push(weighted(&pa));
            for a in 0..d {
                let w: Vec<f64> = (0..m).map(|y| policy.q(x, y, a)).collect();
                bob_setting.push(weighted(&w));
            }
            for y in 0..m {
                for a in 0..d {
                    let w: Vec<f64> = (0..d).map(|b| born.get(x, y, a, b)).collect();
                    bob.push(weighted(&w));
                    let q = policy.q(x, y, a);
                    for b in 0..d {
                        accept[((x * m + y) * d + a) * d + b] =
                            if q > 0.0 { (policy.p(x, y, crate::sdp::Outcome::C, a, b) / q).clamp(0.0, 1.0) } else { 0.0 };
                    }
                }
            }
        }
        Ok(Self { m, d, setting, alice, bob_setting, bob, accept })
    }

    fn round<R: Rng>(&self, rng: &mut R) -> Result<bool> {
        let (m, d) = (self.m, self.d);
        let x = self.setting.sample(rng);
        let a = self.alice[x]
            .as_ref()
            .ok_or_else(|| Error::Simulation(format!("setting {x} has no outcome with positive probability")))?
            .sample(rng);
        let y = self.bob_setting[x * d + a]
            .as_ref()
            .ok_or_else(|| Error::Simulation(format!("P(x={x}, y | a={a}) vanishes for a reached outcome")))?
            .sample(rng);
        let b = self.bob[(x * m + y) * d + a]
            .as_ref()
            .ok_or_else(|| Error::Simulation(format!("Bob's outcome is undefined at x={x}, y={y}, a={a}")))?
            .sample(rng);
        Ok(rng.gen::<f64>() < self.accept[((x * m + y) * d + a) * d + b])
    }
}

/// Plays `n` independent rounds of the protocol on fresh copies of `rho` and
/// tests the outcome against the certified bound `p1`.
///
/// Round `k` draws from a ChaCha8 stream keyed by `(seed, k / 4096)`, so the
/// result does not depend on thread scheduling.
pub fn simulate_rounds(
    rho: &DensityMatrix,
    meas: &MeasurementSet,
    policy: &LoccPolicy,
    p1: f64,
    n: u64,
    seed: u64,
) -> Result<CertificationOutcome> {
    simulate_rounds_with(rho, meas, policy, p1, n, seed, DEFAULT_SIGNIFICANCE)
}

pub fn simulate_rounds_with(
    rho: &DensityMatrix,
    meas: &MeasurementSet,
    policy: &LoccPolicy,
    p1: f64,
    n: u64,
    seed: u64,
    significance: f64,
) -> Result<CertificationOutcome> {
    check_probability("p1", p1)?;
    if policy.num_settings() != meas.num_settings() || policy.outcomes() != meas.local_dim() {
        return Err(Error::Dimension("policy does not match the measurement settings".into()));
    }
    if rho.d_a() != meas.local_dim() || rho.d_b() != meas.local_dim() {
        return Err(Error::Dimension("state does not match the measurement settings".into()));
    }
    policy.validate(1e-6).map_err(|e| Error::Simulation(format!("inconsistent policy: {e}")))?;
    let sampler = RoundSampler::new(rho, meas, policy)?;
    let chunks = n.div_ceil(CHUNK as u64);
    let counts: Result<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let len = (n - chunk * CHUNK as u64).min(CHUNK as u64);
            let mut v = 0;
            for _ in 0..len {
                v += u64::from(sampler.round(&mut rng)?);
            }
            Ok(v)
        })
        .collect();
    let v = counts?.into_iter().sum();
    CertificationOutcome::new(v, n, p1, significance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurements::{appendix_settings, SettingFamily};
    use crate::sdp::effective_povm;
    use crate::states::rho_unf;

    #[test]
    fn p_value_edge_cases() {
        assert_eq!(p_value(0, 17, 0.3).unwrap(), 1.0);
        assert_eq!(p_value(5, 5, 0.3).unwrap(), 0.3 * 0.3 * 0.3 * 0.3 * 0.3);
        assert!((p_value(2, 3, 0.1).unwrap() - 0.028).abs() < 1e-15);
        assert_eq!(p_value(1, 3, 0.0).unwrap(), 0.0);
        assert_eq!(p_value(3, 3, 1.0).unwrap(), 1.0);
        assert!(p_value(4, 3, 0.5).is_err());
        assert!(p_value(1, 3, 1.5).is_err());
    }

    #[test]
    fn p_value_large_n() {
        // far tail underflows gracefully, near tail stays close to one
        let n = 1_000_000;
        assert!(p_value(n, n, 0.5).unwrap() == 0.0);
        let near = p_value(499_000, n, 0.5).unwrap();
        assert!(near > 0.97 && near <= 1.0);
        let mid = p_value(500_000, n, 0.5).unwrap();
        assert!((mid - 0.5004).abs() < 1e-3, "{mid}");
    }

    #[test]
    fn expected_bound_examples() {
        assert_eq!(expected_pvalue_bound(0.4, 0.3, 0).unwrap(), 1.0);
        assert_eq!(expected_pvalue_bound(0.4, 0.6, 50).unwrap(), 1.0);
        assert!((expected_pvalue_bound(0.833, 0.0, 1).unwrap() - 0.972111).abs() < 1e-9);
        assert!(expected_pvalue_bound(0.7, 0.6, 1).is_err());
    }

    #[test]
    fn always_u_never_certifies() {
        let meas = appendix_settings(SettingFamily::Unf);
        let policy = LoccPolicy::always_u(3, 4);
        let out = simulate_rounds(&rho_unf(0.0).unwrap(), &meas, &policy, 0.5, 1000, 3).unwrap();
        assert_eq!(out.c_count, 0);
        assert_eq!(out.p_value, 1.0);
        assert!(!out.certified);
        let probs = ProbabilityTable::exact(&rho_unf(0.0).unwrap(), &meas);
        assert!((p2_exp(&probs, &policy).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_record_matches_povm() {
        let rows = [(0, 0, 0, 1, 0.459), (1, 1, 1, 1, 0.39), (0, 0, 0, 3, 0.229), (2, 2, 3, 1, 0.104)];
        let policy = LoccPolicy::complete_from_c(3, 4, &rows).unwrap();
        let meas = appendix_settings(SettingFamily::Unf);
        let rho = rho_unf(0.3).unwrap();
        let (_, m_u) = effective_povm(&policy, &meas).unwrap();
        let direct = rho.expectation(&m_u);
        let via = p2_exp(&ProbabilityTable::exact(&rho, &meas), &policy).unwrap();
        assert!((direct - via).abs() < 1e-12);
    }

    #[test]
    fn missing_pairs_are_listed() {
        let meas = appendix_settings(SettingFamily::Unf);
        let rho = rho_unf(0.3).unwrap();
        let mut record = ExperimentRecord::sample(&rho, &meas, 50, 1).unwrap();
        record.validate().unwrap();
        record.counts[0][0].clear();
        record.counts[2][1].clear();
        let policy = LoccPolicy::complete_from_c(3, 4, &[(2, 1, 0, 0, 0.1)]).unwrap();
        match record.p2_exp(&policy) {
            Err(Error::IncompleteData { missing }) => assert_eq!(missing, vec![(0, 0), (2, 1)]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn record_validation() {
        let mut r = ExperimentRecord { dims: 2, settings: 1, rounds_per_pair: 4, counts: vec![vec![vec![vec![1, 1], vec![1, 1]]]] };
        r.validate().unwrap();
        r.counts[0][0][0][0] = 2;
        assert!(r.validate().is_err());
        let p = ExperimentRecord { dims: 2, settings: 1, rounds_per_pair: 4, counts: vec![vec![vec![vec![1, 1], vec![1, 1]]]] }
            .estimated_probs()
            .unwrap();
        assert_eq!(p.get(0, 0, 1, 0), 0.25);
    }

    #[test]
    fn simulation_is_reproducible() {
        let rows = [(0, 0, 0, 1, 0.459), (1, 1, 1, 1, 0.39), (0, 0, 0, 3, 0.229)];
        let policy = LoccPolicy::complete_from_c(3, 4, &rows).unwrap();
        let meas = appendix_settings(SettingFamily::Unf);
        let rho = rho_unf(0.4).unwrap();
        let a = simulate_rounds(&rho, &meas, &policy, 0.5, 10_000, 11).unwrap();
        let b = simulate_rounds(&rho, &meas, &policy, 0.5, 10_000, 11).unwrap();
        assert_eq!(a, b);
    }
}
