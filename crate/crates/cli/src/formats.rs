//! JSON documents read and written by `dimcert`.
//!
//! Complex numbers are `[re, im]` pairs and matrices are row-major nested
//! arrays. Every document carries `schema_version`.

use dimcert_core::benchmark::su4_eigenbasis_settings;
use dimcert_core::conic::SolveStatus;
use dimcert_core::linalg::ComplexMatrix;
use dimcert_core::measurements::{appendix_settings, MeasurementSet, SettingFamily};
use dimcert_core::sdp::{LoccPolicy, Outcome, PolicyEntry, ProtocolCertificate, SolverDiagnostics};
use dimcert_core::states::{max_entangled, rho_iso2, rho_unf, DensityMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

/// A failure tied to a location in an input document.
#[derive(Debug)]
pub struct InputError {
    pub field: String,
    pub message: String,
}

impl InputError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

pub type Complex = [f64; 2];
pub type MatrixDoc = Vec<Vec<Complex>>;

pub fn matrix_to_doc(m: &ComplexMatrix) -> MatrixDoc {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn matrix_from_doc(doc: &MatrixDoc, field: &str) -> Result<ComplexMatrix, InputError> {
    let n = doc.len();
    if n == 0 {
        return Err(InputError::new(field, "matrix is empty"));
    }
    for (i, row) in doc.iter().enumerate() {
        if row.len() != n {
            return Err(InputError::new(format!("{field}[{i}]"), format!("row has {} entries, expected {n}", row.len())));
        }
        for (j, z) in row.iter().enumerate() {
            if !z[0].is_finite() || !z[1].is_finite() {
                return Err(InputError::new(format!("{field}[{i}][{j}]"), "entry is not finite"));
            }
        }
    }
    Ok(ComplexMatrix::from_fn(n, n, |i, j| Complex64::new(doc[i][j][0], doc[i][j][1])))
}

/// Parses `text` as a `T`, reporting the failing field path on error.
pub fn parse_document<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T, InputError> {
    let value: Value = serde_json::from_str(text).map_err(|e| InputError::new(what, format!("invalid JSON: {e}")))?;
    check_schema(&value, what)?;
    serde_json::from_value(value).map_err(|e| InputError::new(field_of(&e.to_string()).unwrap_or(what), e.to_string()))
}

fn check_schema(value: &Value, what: &str) -> Result<(), InputError> {
    match value.get("schema_version") {
        None => Err(InputError::new("schema_version", format!("{what} has no schema_version"))),
        Some(v) if v.as_u64() == Some(SCHEMA_VERSION as u64) => Ok(()),
        Some(v) => Err(InputError::new("schema_version", format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"))),
    }
}

fn field_of(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

/// `{"schema_version", "d_a", "d_b", "matrix"}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDoc {
    pub schema_version: u32,
    pub d_a: usize,
    pub d_b: usize,
    pub matrix: MatrixDoc,
}

impl StateDoc {
    pub fn from_state(rho: &DensityMatrix) -> Self {
        Self { schema_version: SCHEMA_VERSION, d_a: rho.d_a(), d_b: rho.d_b(), matrix: matrix_to_doc(rho.matrix()) }
    }

    pub fn to_state(&self) -> Result<DensityMatrix, InputError> {
        let m = matrix_from_doc(&self.matrix, "matrix")?;
        if m.rows() != self.d_a * self.d_b {
            return Err(InputError::new("matrix", format!("size {} does not match d_a*d_b = {}", m.rows(), self.d_a * self.d_b)));
        }
        DensityMatrix::new(m, self.d_a, self.d_b).map_err(|e| InputError::new("matrix", e.to_string()))
    }
}

/// `{"schema_version", "local_dim", "settings": [[matrix, ...], ...]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementDoc {
    pub schema_version: u32,
    pub local_dim: usize,
    pub settings: Vec<Vec<MatrixDoc>>,
}

impl MeasurementDoc {
    pub fn from_set(set: &MeasurementSet) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            local_dim: set.local_dim(),
            settings: set.settings().iter().map(|s| s.iter().map(matrix_to_doc).collect()).collect(),
        }
    }

    pub fn to_set(&self) -> Result<MeasurementSet, InputError> {
        let mut settings = Vec::with_capacity(self.settings.len());
        for (x, s) in self.settings.iter().enumerate() {
            let mut elems = Vec::with_capacity(s.len());
            for (a, m) in s.iter().enumerate() {
                let field = format!("settings[{x}][{a}]");
                let e = matrix_from_doc(m, &field)?;
                if e.rows() != self.local_dim {
                    return Err(InputError::new(field, format!("element is {0}x{0}, expected local_dim {1}", e.rows(), self.local_dim)));
                }
                elems.push(e);
            }
            settings.push(elems);
        }
        MeasurementSet::new(self.local_dim, settings).map_err(|e| InputError::new("settings", e.to_string()))
    }
}

/// Named target families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[value(name = "max_entangled", alias = "max-entangled")]
    MaxEntangled,
    Unf,
    Iso2,
}

/// Target of a certificate: a named family or an explicit density matrix.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    Family {
        family: Family,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    Explicit {
        d_a: usize,
        d_b: usize,
        matrix: MatrixDoc,
    },
}

impl TargetSpec {
    pub fn build(&self) -> Result<DensityMatrix, InputError> {
        match self {
            TargetSpec::Family { family, p, dim } => {
                let need_p = || p.ok_or_else(|| InputError::new("p", format!("family {family:?} needs a mixing parameter")));
                let r = match family {
                    Family::MaxEntangled => max_entangled(dim.unwrap_or(4)).map(|s| s.density()),
                    Family::Unf => rho_unf(need_p()?),
                    Family::Iso2 => rho_iso2(need_p()?),
                };
                r.map_err(|e| InputError::new("p", e.to_string()))
            }
            TargetSpec::Explicit { d_a, d_b, matrix } => {
                StateDoc { schema_version: SCHEMA_VERSION, d_a: *d_a, d_b: *d_b, matrix: matrix.clone() }.to_state()
            }
        }
    }
}

/// Measurement families known by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SettingsName {
    Unf,
    Iso2,
    Psi4,
    Su4,
}

impl SettingsName {
    pub fn build(self) -> MeasurementSet {
        match self {
            SettingsName::Unf => appendix_settings(SettingFamily::Unf),
            SettingsName::Iso2 => appendix_settings(SettingFamily::Iso2),
            SettingsName::Psi4 => appendix_settings(SettingFamily::Psi4),
            SettingsName::Su4 => su4_eigenbasis_settings(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SettingsName::Unf => "unf",
            SettingsName::Iso2 => "iso2",
            SettingsName::Psi4 => "psi4",
            SettingsName::Su4 => "su4",
        }
    }
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SettingsSpec {
    Named { name: SettingsName },
    Explicit { local_dim: usize, settings: Vec<Vec<MatrixDoc>> },
}

impl SettingsSpec {
    pub fn build(&self) -> Result<MeasurementSet, InputError> {
        match self {
            SettingsSpec::Named { name } => Ok(name.build()),
            SettingsSpec::Explicit { local_dim, settings } => {
                MeasurementDoc { schema_version: SCHEMA_VERSION, local_dim: *local_dim, settings: settings.clone() }.to_set()
            }
        }
    }
}

/// One policy probability as `[x, y, c, a, b, value]`, `c` being 0 for `C`
/// and 1 for `U`, indices 0-based.
pub type SparseEntry = (usize, usize, u8, usize, usize, f64);

pub fn sparse_policy(policy: &LoccPolicy) -> Vec<SparseEntry> {
    policy
        .entries(0.0)
        .into_iter()
        .map(|e| (e.x, e.y, if e.c == Outcome::C { 0 } else { 1 }, e.a, e.b, e.value))
        .collect()
}

pub fn policy_from_sparse(m: usize, d: usize, entries: &[SparseEntry]) -> Result<LoccPolicy, InputError> {
    let mut out = Vec::with_capacity(entries.len());
    for (k, &(x, y, c, a, b, value)) in entries.iter().enumerate() {
        let c = match c {
            0 => Outcome::C,
            1 => Outcome::U,
            _ => return Err(InputError::new(format!("policy[{k}]"), "outcome must be 0 (C) or 1 (U)")),
        };
        if !(0.0..=1.0 + 1e-9).contains(&value) {
            return Err(InputError::new(format!("policy[{k}]"), format!("probability {value} is outside [0, 1]")));
        }
        out.push(PolicyEntry { x, y, c, a, b, value });
    }
    let policy = LoccPolicy::from_entries(m, d, &out).map_err(|e| InputError::new("policy", e.to_string()))?;
    policy.validate(1e-6).map_err(|e| InputError::new("policy", e.to_string()))?;
    Ok(policy)
}

#[derive(Serialize, Deserialize)]
pub struct CertificateDoc {
    pub schema_version: u32,
    pub target: TargetSpec,
    pub settings: SettingsSpec,
    pub schmidt_dim: usize,
    pub num_settings: usize,
    pub outcomes: usize,
    pub status: SolveStatus,
    pub p1: f64,
    pub p2: f64,
    pub robustness: f64,
    pub policy: Vec<SparseEntry>,
    pub witness_residual: f64,
    pub duality_gap: f64,
    pub diagnostics: SolverDiagnostics,
}

impl CertificateDoc {
    pub fn new(target: TargetSpec, settings: SettingsSpec, cert: &ProtocolCertificate) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            target,
            settings,
            schmidt_dim: cert.schmidt_dim,
            num_settings: cert.policy.num_settings(),
            outcomes: cert.policy.outcomes(),
            status: cert.solver_status,
            p1: cert.p1,
            p2: cert.p2,
            robustness: cert.robustness(),
            policy: sparse_policy(&cert.policy),
            witness_residual: cert.witness_residual,
            duality_gap: cert.duality_gap,
            diagnostics: cert.diagnostics.clone(),
        }
    }

    pub fn policy(&self) -> Result<LoccPolicy, InputError> {
        policy_from_sparse(self.num_settings, self.outcomes, &self.policy)
    }
}
