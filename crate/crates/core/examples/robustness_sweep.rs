//! Prints `1 − p_I − p_II` for the UNF (D = 2) and ISO2 (D = 1) families.
//!
//! cargo run --release -p dimcert-core --example robustness_sweep

use std::time::Instant;

use dimcert_core::conic::SolverOptions;
use dimcert_core::measurements::{appendix_settings, SettingFamily};
use dimcert_core::sdp::synthesize;
use dimcert_core::states::{rho_iso2, rho_unf};

fn main() -> dimcert_core::Result<()> {
    let opts = SolverOptions::default();
    println!("{:<6} {:>4} {:>2} {:>10} {:>10} {:>10} {:>8}", "family", "p", "D", "p_I", "p_II", "1-pI-pII", "time");
    for (family, ps, dd) in [
        (SettingFamily::Unf, [0.0, 0.2, 0.4, 0.6, 0.8, 1.0], 2),
        (SettingFamily::Iso2, [0.5, 0.6, 0.7, 0.8, 0.9, 1.0], 1),
    ] {
        let meas = appendix_settings(family);
        for p in ps {
            let rho = if family == SettingFamily::Unf { rho_unf(p)? } else { rho_iso2(p)? };
            let start = Instant::now();
            let cert = synthesize(&rho, &meas, dd, &opts)?;
            println!(
                "{:<6} {:>4.1} {:>2} {:>10.6} {:>10.6} {:>10.6} {:>7.2}s",
                family.name(),
                p,
                dd,
                cert.p1,
                cert.p2,
                cert.robustness(),
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
