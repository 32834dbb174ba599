//! Normal-equation matrix `M = A D Aᵀ` of the interior-point method.
//!
//! Rows are split into light rows (few LP terms, no PSD terms) and dense rows.
//! Light rows come first in the internal ordering; dense rows form a trailing
//! block that is accumulated in a dense buffer and copied into the sparse
//! upper-triangular storage before every factorization.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};

/// Rows with more LP terms than this are treated as dense.
const DENSE_LP_TERMS: usize = 40;

pub(super) struct Schur {
    m: usize,
    /// internal index -> row
    perm: Vec<usize>,
    /// row -> internal index
    inv: Vec<usize>,
    n_light: usize,
    nd: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    light_in_col: Vec<usize>,
    diag_pos: Vec<usize>,
    symbolic: SymbolicLlt<usize>,
    /// per LP variable: (value slot, a_i·a_j) for pairs involving a light row
    lp_light: Vec<Vec<(usize, f64)>>,
    /// per LP variable: (dense index, a_i), sorted by dense index
    lp_dense: Vec<Vec<(usize, f64)>>,
    values: Vec<f64>,
    base: Vec<f64>,
    dense: Vec<f64>,
    factor: Option<Llt<usize, f64>>,
    pub(super) regularization: f64,
}

impl Schur {
    pub(super) fn new(
        m: usize,
        rows_lp: &[Vec<(usize, f64)>],
        cols_lp: &[Vec<(usize, f64)>],
        touches_psd: &[bool],
    ) -> Result<Self, String> {
        let is_dense: Vec<bool> = (0..m).map(|i| touches_psd[i] || rows_lp[i].len() > DENSE_LP_TERMS).collect();
        let mut perm: Vec<usize> = (0..m).filter(|&i| !is_dense[i]).collect();
        let n_light = perm.len();
        perm.extend((0..m).filter(|&i| is_dense[i]));
        let nd = m - n_light;
        let mut inv = vec![0; m];
        for (k, &i) in perm.iter().enumerate() {
            inv[i] = k;
        }

        // light rows coupled to each column through a shared LP variable
        let mut light_rows: Vec<Vec<usize>> = (0..m).map(|j| if j < n_light { vec![j] } else { Vec::new() }).collect();
        for col in cols_lp {
            let idx: Vec<usize> = col.iter().map(|&(r, _)| inv[r]).collect();
            for &a in &idx {
                if a >= n_light {
                    continue;
                }
                for &b in &idx {
                    if a < b || (a == b && b < n_light) {
                        light_rows[b].push(a);
                    }
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(m + 1);
        let mut row_idx = Vec::new();
        let mut light_in_col = Vec::with_capacity(m);
        let mut diag_pos = Vec::with_capacity(m);
        col_ptr.push(0);
        for (j, rows) in light_rows.iter_mut().enumerate() {
            rows.sort_unstable();
            rows.dedup();
            light_in_col.push(rows.len());
            row_idx.extend_from_slice(rows);
            if j >= n_light {
                row_idx.extend(n_light..=j);
            }
            diag_pos.push(row_idx.len() - 1);
            col_ptr.push(row_idx.len());
        }

        let slot = |i: usize, j: usize| -> usize {
            let start = col_ptr[j];
            let lights = &row_idx[start..start + light_in_col[j]];
            start + lights.binary_search(&i).expect("pattern covers every light coupling")
        };
        let mut lp_light = Vec::with_capacity(cols_lp.len());
        let mut lp_dense = Vec::with_capacity(cols_lp.len());
        for col in cols_lp {
            let mut entries: Vec<(usize, f64)> = col.iter().map(|&(r, v)| (inv[r], v)).collect();
            entries.sort_unstable_by_key(|e| e.0);
            let mut light = Vec::new();
            for (ka, &(a, va)) in entries.iter().enumerate() {
                if a >= n_light {
                    break;
                }
                for &(b, vb) in &entries[ka..] {
                    light.push((slot(a, b), va * vb));
                }
            }
            lp_light.push(light);
            lp_dense.push(entries.iter().filter(|e| e.0 >= n_light).map(|&(r, v)| (r - n_light, v)).collect());
        }

        let symbolic = SymbolicLlt::try_new(
            SymbolicSparseColMatRef::new_checked(m, m, &col_ptr, None, &row_idx),
            Side::Upper,
        )
        .map_err(|e| format!("symbolic factorization: {e:?}"))?;
        let nnz = row_idx.len();
        Ok(Self {
            m,
            perm,
            inv,
            n_light,
            nd,
            col_ptr,
            row_idx,
            light_in_col,
            diag_pos,
            symbolic,
            lp_light,
            lp_dense,
            values: vec![0.0; nnz],
            base: vec![0.0; nnz],
            dense: vec![0.0; nd * nd],
            factor: None,
            regularization: 0.0,
        })
    }

    /// Dense-block index of a row, if the row is dense.
    pub(super) fn dense_index(&self, row: usize) -> Option<usize> {
        self.inv[row].checked_sub(self.n_light)
    }

    pub(super) fn reset(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
        self.dense.iter_mut().for_each(|v| *v = 0.0);
        self.factor = None;
    }

    /// Adds `Σ_l scale_l a_l a_lᵀ` over LP variables.
    pub(super) fn add_lp(&mut self, scale: &[f64]) {
        let nd = self.nd;
        for (l, &s) in scale.iter().enumerate() {
            for &(slot, prod) in &self.lp_light[l] {
                self.values[slot] += s * prod;
            }
            let rows = &self.lp_dense[l];
            for (ka, &(a, va)) in rows.iter().enumerate() {
                let sa = s * va;
                let row = &mut self.dense[a * nd..(a + 1) * nd];
                for &(b, vb) in &rows[ka..] {
                    row[b] += sa * vb;
                }
            }
        }
    }

    /// Adds `v` to the dense entry `(a, b)` with `a ≤ b` (dense indices).
    #[inline]
    pub(super) fn add_dense(&mut self, a: usize, b: usize, v: f64) {
        debug_assert!(a <= b);
        self.dense[a * self.nd + b] += v;
    }

    /// Factorizes, adding diagonal regularization if the plain factorization fails.
    pub(super) fn factorize(&mut self) -> Result<(), String> {
        for j in 0..self.nd {
            let col = self.n_light + j;
            let start = self.col_ptr[col] + self.light_in_col[col];
            for i in 0..=j {
                self.values[start + i] = self.dense[i * self.nd + j];
            }
        }
        self.base.copy_from_slice(&self.values);
        let max_diag = self.diag_pos.iter().map(|&p| self.base[p].abs()).fold(0.0, f64::max).max(1e-300);
        let mut delta = 0.0;
        for _ in 0..12 {
            if delta > 0.0 {
                for &p in &self.diag_pos {
                    self.values[p] = self.base[p] + delta * max_diag;
                }
            }
            let sym = SymbolicSparseColMatRef::new_checked(self.m, self.m, &self.col_ptr, None, &self.row_idx);
            let mat = SparseColMatRef::new(sym, &self.values);
            if let Ok(f) = Llt::try_new_with_symbolic(self.symbolic.clone(), mat, Side::Upper) {
                self.factor = Some(f);
                self.regularization = delta;
                return Ok(());
            }
            delta = if delta == 0.0 { 1e-14 } else { delta * 100.0 };
        }
        Err("normal equations could not be factorized".into())
    }

    fn matvec_internal(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.m {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[k];
                let v = self.base[k];
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
    }

    fn solve_internal(&self, rhs: &mut [f64]) {
        let f = self.factor.as_ref().expect("factorize before solve");
        f.solve_in_place(MatMut::from_column_major_slice_mut(rhs, self.m, 1));
    }

    /// Solves `M Δy = rhs` with two steps of iterative refinement.
    pub(super) fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b: Vec<f64> = self.perm.iter().map(|&i| rhs[i]).collect();
        let mut x = b.clone();
        self.solve_internal(&mut x);
        let mut r = vec![0.0; self.m];
        for _ in 0..2 {
            self.matvec_internal(&x, &mut r);
            r.iter_mut().zip(&b).for_each(|(ri, bi)| *ri = bi - *ri);
            self.solve_internal(&mut r);
            x.iter_mut().zip(&r).for_each(|(xi, ri)| *xi += ri);
        }
        let mut out = vec![0.0; self.m];
        for (k, &i) in self.perm.iter().enumerate() {
            out[i] = x[k];
        }
        out
    }
}
