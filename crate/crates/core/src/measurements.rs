//! Local measurement settings.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// Tolerance for orthonormality, completeness and positivity checks.
pub const POVM_TOL: f64 = 1e-9;

/// POVM elements `N_{a|x}` indexed `[x][a]`, all acting on `ℂ^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    local_dim: usize,
    settings: Vec<Vec<ComplexMatrix>>,
}

impl MeasurementSet {
    /// Builds a set and rejects it if [`validate_povm`] flags any setting.
    pub fn new(local_dim: usize, settings: Vec<Vec<ComplexMatrix>>) -> Result<Self> {
        let set = Self::unchecked(local_dim, settings)?;
        let report = validate_povm(&set);
        if let Some(msg) = report.first_violation(POVM_TOL) {
            return Err(Error::Validation(msg));
        }
        Ok(set)
    }

    /// Builds a set checking only shapes.
    pub fn unchecked(local_dim: usize, settings: Vec<Vec<ComplexMatrix>>) -> Result<Self> {
        if local_dim == 0 || settings.is_empty() {
            return Err(Error::Dimension("a measurement set needs a positive dimension and a setting".into()));
        }
        for (x, s) in settings.iter().enumerate() {
            if s.len() != local_dim {
                return Err(Error::Dimension(format!(
                    "setting {x} has {} outcomes, expected {local_dim}",
                    s.len()
                )));
            }
            if let Some(a) = s.iter().position(|n| n.rows() != local_dim || n.cols() != local_dim) {
                return Err(Error::Dimension(format!("element ({x}, {a}) is not {local_dim}x{local_dim}")));
            }
        }
        Ok(Self { local_dim, settings })
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    /// Number of settings `m`.
    pub fn num_settings(&self) -> usize {
        self.settings.len()
    }

    pub fn settings(&self) -> &[Vec<ComplexMatrix>] {
        &self.settings
    }

    /// `N_{a|x}`.
    pub fn element(&self, x: usize, a: usize) -> &ComplexMatrix {
        &self.settings[x][a]
    }

    /// The set restricted to the listed settings, in the given order.
    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        if let Some(&bad) = keep.iter().find(|&&x| x >= self.settings.len()) {
            return Err(Error::Dimension(format!("setting {bad} does not exist")));
        }
        Self::unchecked(self.local_dim, keep.iter().map(|&x| self.settings[x].clone()).collect())
    }
}

/// Per-setting diagnostics from [`validate_povm`].
#[derive(Clone, Debug, PartialEq)]
pub struct SettingReport {
    pub hermitian_deviation: f64,
    pub min_eigenvalue: f64,
    pub completeness_deviation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PovmReport {
    pub settings: Vec<SettingReport>,
}

impl PovmReport {
    pub fn is_valid(&self, tol: f64) -> bool {
        self.first_violation(tol).is_none()
    }

    pub fn first_violation(&self, tol: f64) -> Option<String> {
        self.settings.iter().enumerate().find_map(|(x, r)| {
            if r.hermitian_deviation > tol {
                Some(format!("setting {x}: Hermiticity deviation {:.3e}", r.hermitian_deviation))
            } else if r.min_eigenvalue < -tol {
                Some(format!("setting {x}: negative eigenvalue {:.3e}", r.min_eigenvalue))
            } else if r.completeness_deviation > tol {
                Some(format!("setting {x}: elements miss the identity by {:.3e}", r.completeness_deviation))
            } else {
                None
            }
        })
    }
}

/// Reports Hermiticity, positivity and completeness of every setting.
pub fn validate_povm(set: &MeasurementSet) -> PovmReport {
    let d = set.local_dim;
    let settings = set
        .settings
        .iter()
        .map(|elements| {
            let mut sum = ComplexMatrix::zeros(d, d);
            let mut herm: f64 = 0.0;
            let mut min_eig = f64::INFINITY;
            for n in elements {
                sum.add_scaled(1.0, n);
                herm = herm.max(n.hermitian_deviation());
                let e = n.hermitian_part().eigenvalues_hermitian().map(|v| v[0]).unwrap_or(f64::NEG_INFINITY);
                min_eig = min_eig.min(e);
            }
            SettingReport {
                hermitian_deviation: herm,
                min_eigenvalue: min_eig,
                completeness_deviation: sum.max_abs_diff(&ComplexMatrix::identity(d)),
            }
        })
        .collect();
    PovmReport { settings }
}

/// Rank-one projectors onto an orthonormal basis.
pub fn projective_setting(vectors: &[Vec<Complex64>]) -> Result<Vec<ComplexMatrix>> {
    let d = vectors.len();
    if let Some(v) = vectors.iter().find(|v| v.len() != d) {
        return Err(Error::Dimension(format!("{d} vectors of length {} do not form a basis", v.len())));
    }
    let mut worst = (0, 0, 0.0);
    for i in 0..d {
        for j in 0..d {
            let g: Complex64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a.conj() * b).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            let dev = (g - target).norm();
            if dev > worst.2 {
                worst = (i, j, dev);
            }
        }
    }
    if worst.2 > POVM_TOL {
        return Err(Error::NotOrthonormal { row: worst.0, col: worst.1, deviation: worst.2 });
    }
    Ok(vectors.iter().map(|v| ComplexMatrix::projector(v)).collect())
}

/// The measurement families used by the reference protocols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SettingFamily {
    Unf,
    Iso2,
    Psi4,
}

impl SettingFamily {
    pub fn name(self) -> &'static str {
        match self {
            SettingFamily::Unf => "unf",
            SettingFamily::Iso2 => "iso2",
            SettingFamily::Psi4 => "psi4",
        }
    }
}

impl fmt::Display for SettingFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SettingFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unf" => Ok(SettingFamily::Unf),
            "iso2" => Ok(SettingFamily::Iso2),
            "psi4" => Ok(SettingFamily::Psi4),
            other => Err(Error::Domain(format!("unknown setting family `{other}`"))),
        }
    }
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn ket(k: usize) -> Vec<Complex64> {
    let mut v = vec![re(0.0); 4];
    v[k] = re(1.0);
    v
}

/// `(α|i⟩ + β|j⟩)/√2`.
fn pair(i: usize, alpha: Complex64, j: usize, beta: Complex64) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = vec![re(0.0); 4];
    v[i] += alpha * s;
    v[j] += beta * s;
    v
}

/// The 3-dimensional Fourier-type triple on three chosen levels of `ℂ⁴`,
/// with `w₁ = (−√3−3i)/6` and `w₂ = (−√3+3i)/6`.
fn fourier_triple(levels: [usize; 3]) -> [Vec<Complex64>; 3] {
    let r3 = 3f64.sqrt();
    let first = re(1.0 / r3);
    let w1 = Complex64::new(-r3, -3.0) / 6.0;
    let w2 = Complex64::new(-r3, 3.0) / 6.0;
    let build = |coeffs: [Complex64; 3]| {
        let mut v = vec![re(0.0); 4];
        for (l, c) in levels.iter().zip(coeffs) {
            v[*l] = c;
        }
        v
    };
    [build([first, w1, w2]), build([first, w2, w1]), build([first, first, first])]
}

fn family_kets(family: SettingFamily) -> Vec<Vec<Vec<Complex64>>> {
    let i = Complex64::i();
    let one = re(1.0);
    match family {
        SettingFamily::Unf => {
            let [f1, f2, f3] = fourier_triple([0, 1, 2]);
            vec![
                vec![f1, f2, f3, ket(3)],
                vec![ket(2), ket(1), ket(3), ket(0)],
                vec![pair(3, one, 2, -i), pair(1, one, 0, i), pair(3, one, 2, i), pair(1, one, 0, -i)],
            ]
        }
        SettingFamily::Iso2 => vec![
            vec![pair(0, -one, 1, one), ket(3), ket(2), pair(0, one, 1, one)],
            vec![ket(3), ket(2), pair(0, -i, 1, one), pair(0, i, 1, one)],
            vec![ket(3), ket(2), ket(1), ket(0)],
        ],
        SettingFamily::Psi4 => {
            let [a1, a2, a3] = fourier_triple([1, 2, 3]);
            let [b1, b2, b3] = fourier_triple([0, 2, 3]);
            vec![vec![ket(0), a1, a2, a3], vec![b1, ket(1), b2, b3]]
        }
    }
}

/// The reference measurement settings on `ℂ⁴` for one family, used by both parties.
pub fn appendix_settings(family: SettingFamily) -> MeasurementSet {
    let settings = family_kets(family)
        .iter()
        .map(|basis| projective_setting(basis).expect("reference kets are orthonormal"))
        .collect();
    MeasurementSet::new(4, settings).expect("reference settings are valid POVMs")
}

#[cfg(test)]
mod tests {
    use super::*;

    const FAMILIES: [SettingFamily; 3] = [SettingFamily::Unf, SettingFamily::Iso2, SettingFamily::Psi4];

    #[test]
    fn computational_basis_gives_diagonal_projectors() {
        let set = projective_setting(&(0..4).map(ket).collect::<Vec<_>>()).unwrap();
        for (a, n) in set.iter().enumerate() {
            let mut diag = [0.0; 4];
            diag[a] = 1.0;
            assert_eq!(n, &ComplexMatrix::diag(&diag));
        }
    }

    #[test]
    fn fourier_basis_of_qubit() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let set = projective_setting(&[vec![re(s), re(s)], vec![re(s), re(-s)]]).unwrap();
        let sum = &set[0] + &set[1];
        assert!(sum.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
        assert!((set[0][(0, 1)] - re(0.5)).norm() < 1e-15);
        assert!((set[1][(0, 1)] - re(-0.5)).norm() < 1e-15);
    }

    #[test]
    fn non_orthonormal_input_reports_gram_entry() {
        let err = projective_setting(&[vec![re(1.0), re(0.0)], vec![re(1.0), re(0.1)]]).unwrap_err();
        match err {
            Error::NotOrthonormal { row, col, deviation } => {
                assert!(deviation > 0.01);
                assert!((row, col) == (1, 1) || (row, col) == (0, 1) || (row, col) == (1, 0));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unf_first_setting_is_complete() {
        let set = appendix_settings(SettingFamily::Unf);
        let mut sum = ComplexMatrix::zeros(4, 4);
        for a in 0..4 {
            sum.add_scaled(1.0, set.element(0, a));
        }
        assert!(sum.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-12);
        assert_eq!(set.element(0, 3), &ComplexMatrix::projector(&ket(3)));
    }

    #[test]
    fn documented_permuted_bases() {
        let unf = appendix_settings(SettingFamily::Unf);
        for (a, k) in [2, 1, 3, 0].into_iter().enumerate() {
            assert_eq!(unf.element(1, a), &ComplexMatrix::projector(&ket(k)));
        }
        let iso = appendix_settings(SettingFamily::Iso2);
        for (a, k) in [3, 2, 1, 0].into_iter().enumerate() {
            assert_eq!(iso.element(2, a), &ComplexMatrix::projector(&ket(k)));
        }
    }

    #[test]
    fn family_sizes() {
        assert_eq!(appendix_settings(SettingFamily::Unf).num_settings(), 3);
        assert_eq!(appendix_settings(SettingFamily::Iso2).num_settings(), 3);
        assert_eq!(appendix_settings(SettingFamily::Psi4).num_settings(), 2);
    }

    #[test]
    fn all_elements_are_rank_one_projectors() {
        for family in FAMILIES {
            let set = appendix_settings(family);
            assert!(validate_povm(&set).is_valid(1e-9));
            for x in 0..set.num_settings() {
                for a in 0..4 {
                    let ev = set.element(x, a).eigenvalues_hermitian().unwrap();
                    assert!(ev[..3].iter().all(|e| e.abs() < 1e-9), "{family} {x} {a}");
                    assert!((ev[3] - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn unf_first_setting_restricts_to_fourier_type_basis() {
        let kets = &family_kets(SettingFamily::Unf)[0];
        for a in 0..3 {
            assert_eq!(kets[a][3], re(0.0));
            for b in 0..3 {
                let g: Complex64 = kets[a][..3].iter().zip(&kets[b][..3]).map(|(u, v)| u.conj() * v).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((g.norm_sqr() - target).abs() < 1e-9);
            }
            for l in 0..3 {
                assert!((kets[a][l].norm_sqr() - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn validate_flags_defects() {
        let good = appendix_settings(SettingFamily::Iso2);
        let report = validate_povm(&good);
        assert!(report.settings.iter().all(|r| r.hermitian_deviation < 1e-9
            && r.min_eigenvalue > -1e-9
            && r.completeness_deviation < 1e-9));

        let mut scaled = good.settings().to_vec();
        scaled[1][0] = scaled[1][0].scale(1.01);
        let report = validate_povm(&MeasurementSet::unchecked(4, scaled.clone()).unwrap());
        assert!((report.settings[1].completeness_deviation - 0.01).abs() < 1e-9);
        assert!(!report.is_valid(1e-9));
        assert!(MeasurementSet::new(4, scaled).is_err());

        let mut negated = good.settings().to_vec();
        negated[0][2] = negated[0][2].scale(-1.0);
        let report = validate_povm(&MeasurementSet::unchecked(4, negated).unwrap());
        assert!(report.settings[0].min_eigenvalue < -0.5);
        assert!(report.first_violation(1e-9).unwrap().contains("negative eigenvalue"));
    }

    #[test]
    fn subset_keeps_order() {
        let set = appendix_settings(SettingFamily::Unf);
        let sub = set.subset(&[2, 0]).unwrap();
        assert_eq!(sub.num_settings(), 2);
        assert_eq!(sub.element(0, 1), set.element(2, 1));
        assert!(set.subset(&[3]).is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in FAMILIES {
            assert_eq!(f.name().parse::<SettingFamily>().unwrap(), f);
        }
        assert!("ghz".parse::<SettingFamily>().is_err());
    }
}
