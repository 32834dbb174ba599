//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::Instant;

use dimcert_core::benchmark::{run_benchmark, su4_eigenbasis_settings};
use dimcert_core::certify::{expected_pvalue_bound, p2_exp, p_value, simulate_rounds, ProbabilityTable};
use dimcert_core::conic::SolverOptions;
use dimcert_core::fixtures::reference_tables;
use dimcert_core::linalg::{eigenvalue_range, ComplexMatrix};
use dimcert_core::measurements::{appendix_settings, MeasurementSet, SettingFamily};
use dimcert_core::sdp::{
    effective_povm, randomized_witness_oracle, synthesize, verify_witness, ProtocolCertificate, WitnessStatus,
};
use dimcert_core::states::{max_entangled, random_product_state, rho_iso2, rho_unf, DensityMatrix};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

struct Instance {
    label: String,
    rho: DensityMatrix,
    meas: MeasurementSet,
    schmidt_dim: usize,
    cert: ProtocolCertificate,
    seconds: f64,
}

fn solve_instance(label: &str, rho: DensityMatrix, family: SettingFamily, schmidt_dim: usize) -> Result<Instance, String> {
    let meas = appendix_settings(family);
    let start = Instant::now();
    let cert = synthesize(&rho, &meas, schmidt_dim, &SolverOptions::default()).map_err(|e| format!("{label}: {e}"))?;
    Ok(Instance { label: label.into(), rho, meas, schmidt_dim, cert, seconds: start.elapsed().as_secs_f64() })
}

fn report(results: &mut Vec<bool>, id: usize, name: &str, outcome: Result<String, String>) {
    let (ok, detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    println!("criterion {id} [{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    results.push(ok);
}

fn reference_instances() -> Result<Vec<Instance>, String> {
    let mut out = Vec::new();
    for (p, _) in TABLE_UNF {
        out.push(solve_instance(&format!("UNF p={p}"), rho_unf(p).unwrap(), SettingFamily::Unf, 2)?);
    }
    for (p, _) in TABLE_ISO2 {
        out.push(solve_instance(&format!("ISO2 p={p}"), rho_iso2(p).unwrap(), SettingFamily::Iso2, 1)?);
    }
    Ok(out)
}

const TABLE_UNF: [(f64, f64); 6] = [(0.0, 0.167), (0.2, 0.112), (0.4, 0.070), (0.6, 0.040), (0.8, 0.018), (1.0, 0.0)];
const TABLE_ISO2: [(f64, f64); 6] = [(0.5, 0.146), (0.6, 0.108), (0.7, 0.071), (0.8, 0.033), (0.9, 0.0), (1.0, 0.0)];

fn criterion_1(instances: &[Instance]) -> Result<String, String> {
    let expected: Vec<f64> = TABLE_UNF.iter().chain(&TABLE_ISO2).map(|&(_, r)| r).collect();
    let mut worst: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    let mut bad = Vec::new();
    for (inst, want) in instances.iter().zip(expected) {
        let got = inst.cert.robustness();
        let dev = (got - want).abs();
        worst = worst.max(dev);
        slowest = slowest.max(inst.seconds);
        if dev > 0.005 || inst.seconds > 60.0 {
            bad.push(format!("{} got {got:.4} want {want:.3} in {:.1}s", inst.label, inst.seconds));
        }
    }
    let values: Vec<String> = instances.iter().map(|i| format!("{:.4}", i.cert.robustness())).collect();
    let detail = format!("12 rows, max |dev| {worst:.2e} (tol 5e-3), slowest {slowest:.2}s; values [{}]", values.join(", "));
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; failing: {}", bad.join("; ")))
    }
}

fn criterion_2(inst: &Instance) -> Result<String, String> {
    let got = inst.cert.robustness();
    let detail = format!("robustness {got:.5}, want 0.084 +- 0.01, {:.2}s", inst.seconds);
    if (got - 0.084).abs() <= 0.01 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_3(instances: &[Instance]) -> Result<String, String> {
    let mut worst_res: f64 = 0.0;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut bad = Vec::new();
    for (k, inst) in instances.iter().enumerate() {
        let c = &inst.cert;
        let d = inst.meas.local_dim();
        let bound = c.p1 + 1e-6;
        match verify_witness(&c.m_c, bound, d, inst.schmidt_dim, 0.0) {
            Ok(r) if r.status == WitnessStatus::Feasible => {
                let res = r.residual.unwrap_or(f64::INFINITY).max(c.witness_residual);
                worst_res = worst_res.max(res);
                if res > 1e-6 || r.min_eigenvalue.unwrap_or(-1.0) < -1e-9 {
                    bad.push(format!("{}: residual {res:.2e}", inst.label));
                }
            }
            Ok(r) => bad.push(format!("{}: verify status {:?}", inst.label, r.status)),
            Err(e) => bad.push(format!("{}: {e}", inst.label)),
        }
        match randomized_witness_oracle(&c.m_c, c.p1, inst.schmidt_dim, 2000, 1000 + k as u64) {
            Ok(o) => {
                worst_margin = worst_margin.max(o.max_overlap - c.p1);
                if o.max_overlap > c.p1 + 1e-6 {
                    bad.push(format!("{}: oracle {:.6} > p1 {:.6}", inst.label, o.max_overlap, c.p1));
                }
            }
            Err(e) => bad.push(format!("{}: {e}", inst.label)),
        }
    }
    let detail = format!(
        "{} certificates, max residual {worst_res:.2e} (tol 1e-6), max oracle overlap - p1 = {worst_margin:.3e} (tol 1e-6)",
        instances.len()
    );
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; failing: {}", bad.join("; ")))
    }
}

fn criterion_4(instances: &[Instance]) -> Result<String, String> {
    let (mut sum_dev, mut p2_dev, mut exp_dev): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for inst in instances {
        let c = &inst.cert;
        let n = c.m_c.rows();
        sum_dev = sum_dev.max((&c.m_c + &c.m_u).max_abs_diff(&ComplexMatrix::identity(n)));
        let (_, m_u) = effective_povm(&c.policy, &inst.meas).map_err(|e| e.to_string())?;
        let direct = inst.rho.expectation(&m_u);
        p2_dev = p2_dev.max((c.p2 - direct).abs());
        let via = p2_exp(&ProbabilityTable::exact(&inst.rho, &inst.meas), &c.policy).map_err(|e| e.to_string())?;
        exp_dev = exp_dev.max((via - direct).abs());
    }
    let detail = format!(
        "|M_C+M_U-I| {sum_dev:.2e} (tol 1e-7), |p2-tr(M_U rho)| {p2_dev:.2e} (tol 1e-9), |p2_exp-tr(M_U rho)| {exp_dev:.2e} (tol 1e-12)"
    );
    if sum_dev <= 1e-7 && p2_dev <= 1e-9 && exp_dev <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn binomial_tail_oracle(v: u64, n: u64, num: u64, bits: u32) -> f64 {
    let den = 1u64 << bits;
    let mut binom = BigUint::one();
    let mut total = BigUint::zero();
    for k in 0..=n {
        if k >= v {
            total += &binom * BigUint::from(num).pow(k as u32) * BigUint::from(den - num).pow((n - k) as u32);
        }
        binom = binom * BigUint::from(n - k) / BigUint::from(k + 1);
    }
    total.to_f64().unwrap() / BigUint::from(den).pow(n as u32).to_f64().unwrap()
}

fn criterion_5() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for n in 0..=50u64 {
        for v in 0..=n {
            for num in [1u64, 77, 128, 333, 512, 700, 1000, 1023] {
                let exact = binomial_tail_oracle(v, n, num, 10);
                if exact < 1e-300 {
                    continue;
                }
                let got = p_value(v, n, num as f64 / 1024.0).map_err(|e| e.to_string())?;
                worst = worst.max(((got - exact) / exact).abs());
                checked += 1;
            }
        }
    }
    let mut edges = true;
    for n in [0u64, 1, 7, 50, 1000] {
        for p in [0.0, 0.1, 0.5, 0.833, 1.0] {
            edges &= p_value(0, n, p).unwrap() == 1.0;
            edges &= p_value(n, n, p).unwrap() == (0..n).fold(1.0, |acc, _| acc * p);
        }
    }
    let bound = expected_pvalue_bound(0.833, 0.0, 1).map_err(|e| e.to_string())?;
    let detail = format!(
        "{checked} oracle comparisons, max rel err {worst:.2e} (tol 1e-12); edge cases exact: {edges}; bound(0.833, n=1) = {bound:.6}"
    );
    if worst <= 1e-12 && edges && (bound - 0.972111).abs() < 5e-7 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_6(iso: &Instance) -> Result<String, String> {
    let n = 100_000u64;
    let c = &iso.cert;
    let start = Instant::now();
    let on_target = simulate_rounds(&iso.rho, &iso.meas, &c.policy, c.p1, n, 2024).map_err(|e| e.to_string())?;
    let q = 1.0 - c.p2;
    let sigma = (q * (1.0 - q) / n as f64).sqrt();
    let rate = on_target.c_count as f64 / n as f64;
    let z_target = (rate - q) / sigma;
    let product = random_product_state(4, 77).map_err(|e| e.to_string())?.density();
    let off = simulate_rounds(&product, &iso.meas, &c.policy, c.p1, n, 2025).map_err(|e| e.to_string())?;
    let sigma1 = (c.p1 * (1.0 - c.p1) / n as f64).sqrt();
    let rate1 = off.c_count as f64 / n as f64;
    let z_product = (rate1 - c.p1) / sigma1;
    let detail = format!(
        "target v/n {rate:.5} vs 1-p2 {q:.5} ({z_target:+.2} sigma); product v/n {rate1:.5} vs p1 {:.5} ({z_product:+.2} sigma); target p-value {:.2e}; {:.2}s",
        c.p1,
        on_target.p_value,
        start.elapsed().as_secs_f64()
    );
    if z_target.abs() <= 4.0 && z_product <= 4.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_7() -> Result<String, String> {
    let rho = rho_unf(0.2).unwrap();
    let meas = appendix_settings(SettingFamily::Unf);
    let opts = SolverOptions::default();
    let objective = |m: &MeasurementSet, dd: usize| -> Result<f64, String> {
        let c = synthesize(&rho, m, dd, &opts).map_err(|e| e.to_string())?;
        Ok(c.p1 + c.p2)
    };
    let full = objective(&meas, 2)?;
    let mut worst_subset = f64::INFINITY;
    for keep in [vec![0, 1], vec![0, 2], vec![1, 2], vec![0], vec![1], vec![2]] {
        let sub = meas.subset(&keep).map_err(|e| e.to_string())?;
        worst_subset = worst_subset.min(objective(&sub, 2)? - full);
    }
    let by_d: Vec<f64> = (1..=3).map(|dd| objective(&meas, dd)).collect::<Result<_, _>>()?;
    let worst_d = by_d.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let detail = format!(
        "min over subsets of (subset - full) {worst_subset:+.2e}; objectives D=1,2,3 {:.6} {:.6} {:.6}, min step {worst_d:+.2e} (slack 1e-6)",
        by_d[0], by_d[1], by_d[2]
    );
    if worst_subset >= -1e-6 && worst_d >= -1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8() -> Result<String, String> {
    let n = 200;
    let opts = SolverOptions::default();
    let start = Instant::now();
    let three = run_benchmark(n, &appendix_settings(SettingFamily::Unf), "unf", 1, 8, &opts).map_err(|e| e.to_string())?;
    let thirteen = run_benchmark(n, &su4_eigenbasis_settings(), "su4", 1, 8, &opts).map_err(|e| e.to_string())?;
    let mean = |r: &[dimcert_core::benchmark::BenchRecord]| {
        let ok: Vec<f64> = r.iter().filter(|x| x.certificate.is_some()).map(|x| x.robustness).collect();
        (ok.iter().sum::<f64>() / ok.len() as f64, r.len() - ok.len())
    };
    let (m3, e3) = mean(&three);
    let (m13, e13) = mean(&thirteen);
    let max_nz = three.iter().map(|r| r.nonzero_count).max().unwrap_or(0);
    let wins = three.iter().zip(&thirteen).filter(|(a, b)| b.robustness > a.robustness).count();
    let detail = format!(
        "{n} paired states: mean robustness 13 settings {m13:.5} vs 3 settings {m3:.5}; 13-setting better on {wins}/{n}; failures {e3}+{e13}; max nonzero (3 settings) {max_nz} <= 288; {:.1}s",
        start.elapsed().as_secs_f64()
    );
    if m13 > m3 && e3 == 0 && e13 == 0 && max_nz <= 288 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_9() -> Result<String, String> {
    let tables = reference_tables().map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut ok = true;
    for t in &tables {
        let policy = t.policy().map_err(|e| format!("{}: {e}", t.name))?;
        let (m_c, _) = effective_povm(&policy, &t.measurements()).map_err(|e| e.to_string())?;
        let (lo, hi) = eigenvalue_range(&m_c).map_err(|e| e.to_string())?;
        ok &= lo >= -1e-6 && hi <= 1.0 + 1e-6;
        lines.push(format!("{} [{lo:.3}, {hi:.3}]", t.name));
    }
    let detail = format!("{} tables parsed; eig(M_C): {}", tables.len(), lines.join(", "));
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let mut results = Vec::new();
    let table = reference_instances();
    let psi4 = solve_instance("PSI4", max_entangled(4).unwrap().density(), SettingFamily::Psi4, 3);
    match &table {
        Ok(inst) => report(&mut results, 1, "reference robustness values", criterion_1(inst)),
        Err(e) => report(&mut results, 1, "reference robustness values", Err(e.clone())),
    }
    match &psi4 {
        Ok(inst) => report(&mut results, 2, "Psi_4 instance", criterion_2(inst)),
        Err(e) => report(&mut results, 2, "Psi_4 instance", Err(e.clone())),
    }
    let mut all: Vec<&Instance> = Vec::new();
    if let Ok(t) = &table {
        all.extend(t.iter());
    }
    if let Ok(p) = &psi4 {
        all.push(p);
    }
    let owned: Vec<Instance> = all
        .iter()
        .map(|i| Instance {
            label: i.label.clone(),
            rho: i.rho.clone(),
            meas: i.meas.clone(),
            schmidt_dim: i.schmidt_dim,
            cert: i.cert.clone(),
            seconds: i.seconds,
        })
        .collect();
    report(&mut results, 3, "witness soundness", criterion_3(&owned));
    report(&mut results, 4, "consistency identities", criterion_4(&owned));
    report(&mut results, 5, "statistics", criterion_5());
    match owned.iter().find(|i| i.label == "ISO2 p=0.5") {
        Some(iso) => report(&mut results, 6, "simulation concentration", criterion_6(iso)),
        None => report(&mut results, 6, "simulation concentration", Err("ISO2 p=0.5 instance unavailable".into())),
    }
    report(&mut results, 7, "monotonicity", criterion_7());
    report(&mut results, 8, "benchmark trend", criterion_8());
    report(&mut results, 9, "fixture load", criterion_9());
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
