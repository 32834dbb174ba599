//! Instances shared by the criterion benches.

use dimcert_core::measurements::{appendix_settings, MeasurementSet, SettingFamily};
use dimcert_core::states::{max_entangled, rho_iso2, rho_unf, DensityMatrix};

pub struct Instance {
    pub name: &'static str,
    pub target: DensityMatrix,
    pub meas: MeasurementSet,
    pub schmidt_dim: usize,
}

/// One representative instance per reference measurement family.
pub fn reference_instances() -> Vec<Instance> {
    vec![
        Instance {
            name: "unf-0.4-D2",
            target: rho_unf(0.4).expect("valid mixing parameter"),
            meas: appendix_settings(SettingFamily::Unf),
            schmidt_dim: 2,
        },
        Instance {
            name: "iso2-0.5-D1",
            target: rho_iso2(0.5).expect("valid mixing parameter"),
            meas: appendix_settings(SettingFamily::Iso2),
            schmidt_dim: 1,
        },
        Instance {
            name: "psi4-D3",
            target: max_entangled(4).expect("valid dimension").density(),
            meas: appendix_settings(SettingFamily::Psi4),
            schmidt_dim: 3,
        },
    ]
}
