//! Reference protocols: the nonzero `C`-outcome probabilities
//! `P(x, y, C | a, b)` for the UNF and ISO2 target families.
//!
//! The tables omit `U` entries and marginals; [`ReferenceTable::policy`]
//! completes them with [`LoccPolicy::complete_from_c`].

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::measurements::{appendix_settings, MeasurementSet, SettingFamily};
use crate::sdp::LoccPolicy;

/// One row `x,y,a,b,p` with 0-based indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixtureRow {
    pub x: usize,
    pub y: usize,
    pub a: usize,
    pub b: usize,
    pub p: f64,
}

#[derive(Deserialize)]
struct CsvRow {
    x: usize,
    y: usize,
    a: usize,
    b: usize,
    p: f64,
}

/// A reference protocol and the targets it applies to.
#[derive(Clone, Debug)]
pub struct ReferenceTable {
    pub name: &'static str,
    pub family: SettingFamily,
    /// Mixing parameters of the targets the protocol applies to.
    pub params: &'static [f64],
    pub rows: Vec<FixtureRow>,
}

impl ReferenceTable {
    pub fn measurements(&self) -> MeasurementSet {
        appendix_settings(self.family)
    }

    pub fn policy(&self) -> Result<LoccPolicy> {
        let meas = self.measurements();
        let entries: Vec<_> = self.rows.iter().map(|r| (r.x, r.y, r.a, r.b, r.p)).collect();
        LoccPolicy::complete_from_c(meas.num_settings(), meas.local_dim(), &entries)
    }
}

const TABLES: [(&str, SettingFamily, &[f64], &str); 7] = [
    ("unf-0.4", SettingFamily::Unf, &[0.4, 0.6], include_str!("../fixtures/unf-0.4.csv")),
    ("unf-0.0", SettingFamily::Unf, &[0.0], include_str!("../fixtures/unf-0.0.csv")),
    ("unf-0.2", SettingFamily::Unf, &[0.2], include_str!("../fixtures/unf-0.2.csv")),
    ("unf-0.8", SettingFamily::Unf, &[0.8], include_str!("../fixtures/unf-0.8.csv")),
    ("iso2-0.5", SettingFamily::Iso2, &[0.5, 0.6, 0.7, 0.8], include_str!("../fixtures/iso2-0.5.csv")),
    ("iso2-0.9", SettingFamily::Iso2, &[0.9], include_str!("../fixtures/iso2-0.9.csv")),
    ("unf-1.0", SettingFamily::Unf, &[1.0], include_str!("../fixtures/unf-1.0.csv")),
];

/// Parses a `x,y,a,b,p` table with 1-based indices.
pub fn parse_table(text: &str) -> Result<Vec<FixtureRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, rec) in reader.deserialize::<CsvRow>().enumerate() {
        let r = rec.map_err(|e| Error::Validation(format!("table row {}: {e}", line + 1)))?;
        if r.x == 0 || r.y == 0 || r.a == 0 || r.b == 0 {
            return Err(Error::Validation(format!("table row {}: indices are 1-based", line + 1)));
        }
        if !(0.0..=1.0).contains(&r.p) {
            return Err(Error::Validation(format!("table row {}: probability {} is outside [0, 1]", line + 1, r.p)));
        }
        rows.push(FixtureRow { x: r.x - 1, y: r.y - 1, a: r.a - 1, b: r.b - 1, p: r.p });
    }
    Ok(rows)
}

/// All bundled reference tables.
pub fn reference_tables() -> Result<Vec<ReferenceTable>> {
    TABLES
        .iter()
        .map(|&(name, family, params, text)| Ok(ReferenceTable { name, family, params, rows: parse_table(text)? }))
        .collect()
}
