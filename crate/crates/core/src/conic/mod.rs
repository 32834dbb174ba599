//! Solver-agnostic conic programs.
//!
//! A [`ConicProgram`] is a linear objective and a list of linear equality
//! rows over a product of cones: free scalars, nonnegative scalars and real
//! symmetric PSD matrices. Any type implementing [`ConicSolver`] can solve it;
//! [`InteriorPoint`] is the bundled primal-dual path-following method.

mod ipm;
mod schur;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::RealMatrix;

pub use ipm::InteriorPoint;

/// One cone factor of the variable space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    /// `n` unconstrained scalars.
    Free(usize),
    /// `n` scalars constrained to be `≥ 0`.
    Nonneg(usize),
    /// An `n × n` real symmetric PSD matrix.
    Psd(usize),
}

impl Block {
    /// Number of scalar slots (`n` for scalar blocks, `n(n+1)/2` for PSD blocks).
    pub fn scalar_count(self) -> usize {
        match self {
            Block::Free(n) | Block::Nonneg(n) => n,
            Block::Psd(n) => n * (n + 1) / 2,
        }
    }
}

/// Position of a single variable inside a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Coord {
    Scalar { block: usize, index: usize },
    /// `X[row][col]` of a PSD block; stored with `row ≤ col`.
    Entry { block: usize, row: usize, col: usize },
}

impl Coord {
    pub fn scalar(block: usize, index: usize) -> Self {
        Coord::Scalar { block, index }
    }

    pub fn entry(block: usize, row: usize, col: usize) -> Self {
        Coord::Entry { block, row: row.min(col), col: row.max(col) }
    }

    pub fn block(self) -> usize {
        match self {
            Coord::Scalar { block, .. } | Coord::Entry { block, .. } => block,
        }
    }
}

/// `Σ coeff · var = rhs`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<(Coord, f64)>,
    pub rhs: f64,
}

/// `min Σ c·var` subject to equality rows and cone membership of every block.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConicProgram {
    blocks: Vec<Block>,
    objective: Vec<(Coord, f64)>,
    rows: Vec<LinearRow>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block and returns its index.
    pub fn add_block(&mut self, block: Block) -> usize {
        self.blocks.push(block);
        self.blocks.len() - 1
    }

    pub fn add_objective(&mut self, coord: Coord, coeff: f64) {
        self.objective.push((normalize(coord), coeff));
    }

    /// Appends an equality row and returns its index.
    pub fn add_row(&mut self, terms: Vec<(Coord, f64)>, rhs: f64) -> usize {
        let terms = terms.into_iter().map(|(c, v)| (normalize(c), v)).collect();
        self.rows.push(LinearRow { terms, rhs });
        self.rows.len() - 1
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn objective(&self) -> &[(Coord, f64)] {
        &self.objective
    }

    pub fn rows(&self) -> &[LinearRow] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Checks that every coordinate exists, every coefficient is finite and
    /// every PSD block has even size.
    pub fn validate(&self) -> Result<()> {
        for (k, b) in self.blocks.iter().enumerate() {
            match *b {
                Block::Psd(n) if n == 0 || n % 2 != 0 => {
                    return Err(Error::Assembly(format!("PSD block {k} has odd or zero size {n}")))
                }
                Block::Free(0) | Block::Nonneg(0) => {
                    return Err(Error::Assembly(format!("block {k} is empty")))
                }
                _ => {}
            }
        }
        for (coord, v) in &self.objective {
            self.check_coord(*coord, *v, "objective")?;
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::Assembly(format!("row {i} has a non-finite right-hand side")));
            }
            for (coord, v) in &row.terms {
                self.check_coord(*coord, *v, &format!("row {i}"))?;
            }
        }
        Ok(())
    }

    fn check_coord(&self, coord: Coord, v: f64, ctx: &str) -> Result<()> {
        if !v.is_finite() {
            return Err(Error::Assembly(format!("{ctx}: non-finite coefficient on {coord:?}")));
        }
        let ok = match (coord, self.blocks.get(coord.block())) {
            (Coord::Scalar { index, .. }, Some(Block::Free(n) | Block::Nonneg(n))) => index < *n,
            (Coord::Entry { row, col, .. }, Some(Block::Psd(n))) => row <= col && col < *n,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Assembly(format!("{ctx}: {coord:?} does not reference a declared block")))
        }
    }

    /// Evaluates the objective at a point.
    pub fn objective_value(&self, x: &[BlockValue]) -> f64 {
        self.objective.iter().map(|(c, v)| v * value_at(x, *c)).sum()
    }

    /// Largest absolute row residual at a point.
    pub fn max_row_residual(&self, x: &[BlockValue]) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.terms.iter().map(|(c, v)| v * value_at(x, *c)).sum::<f64>() - r.rhs).abs())
            .fold(0.0, f64::max)
    }

    /// Merges duplicate coordinates within every row and the objective.
    pub(crate) fn merged_rows(&self) -> Vec<Vec<(Coord, f64)>> {
        self.rows.iter().map(|r| merge(&r.terms)).collect()
    }

    pub(crate) fn merged_objective(&self) -> Vec<(Coord, f64)> {
        merge(&self.objective)
    }
}

fn normalize(c: Coord) -> Coord {
    match c {
        Coord::Entry { block, row, col } => Coord::entry(block, row, col),
        s => s,
    }
}

fn merge(terms: &[(Coord, f64)]) -> Vec<(Coord, f64)> {
    let mut acc: BTreeMap<Coord, f64> = BTreeMap::new();
    for (c, v) in terms {
        *acc.entry(*c).or_insert(0.0) += v;
    }
    acc.into_iter().filter(|(_, v)| *v != 0.0).collect()
}

fn value_at(x: &[BlockValue], c: Coord) -> f64 {
    match (c, &x[c.block()]) {
        (Coord::Scalar { index, .. }, BlockValue::Scalars(v)) => v[index],
        (Coord::Entry { row, col, .. }, BlockValue::Matrix(m)) => m[(row, col)],
        _ => f64::NAN,
    }
}

/// Value of one block at a solution.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockValue {
    Scalars(Vec<f64>),
    Matrix(RealMatrix),
}

impl BlockValue {
    pub fn scalars(&self) -> Option<&[f64]> {
        match self {
            BlockValue::Scalars(v) => Some(v),
            BlockValue::Matrix(_) => None,
        }
    }

    pub fn matrix(&self) -> Option<&RealMatrix> {
        match self {
            BlockValue::Matrix(m) => Some(m),
            BlockValue::Scalars(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    NearOptimal,
    Infeasible,
    Failed,
}

impl SolveStatus {
    /// `true` for [`SolveStatus::Optimal`] and [`SolveStatus::NearOptimal`].
    pub fn is_usable(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::NearOptimal)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Relative primal and dual infeasibility required for `optimal`.
    pub feas_tol: f64,
    /// Absolute duality gap required for `optimal`.
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Looser feasibility accepted as `near_optimal`.
    pub near_feas_tol: f64,
    /// Looser gap accepted as `near_optimal`.
    pub near_gap_tol: f64,
    /// Print one line per iteration to standard error.
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { feas_tol: 1e-8, gap_tol: 1e-7, max_iter: 100, near_feas_tol: 1e-6, near_gap_tol: 1e-5, verbose: false }
    }
}

/// Solver output: primal and dual values plus diagnostics.
#[derive(Clone, Debug)]
pub struct RawSolution {
    pub status: SolveStatus,
    /// Primal value of every block, in declaration order.
    pub primal: Vec<BlockValue>,
    /// Dual slack of every block.
    pub dual_slack: Vec<BlockValue>,
    /// Multipliers of the equality rows.
    pub multipliers: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
    pub message: String,
}

impl RawSolution {
    pub fn value(&self, c: Coord) -> f64 {
        value_at(&self.primal, c)
    }
}

/// Anything that can solve a [`ConicProgram`].
pub trait ConicSolver {
    /// Malformed programs are errors; numerical trouble is reported through
    /// [`RawSolution::status`].
    fn solve(&self, program: &ConicProgram, options: &SolverOptions) -> Result<RawSolution>;
}

/// Solves with the bundled interior-point method.
pub fn solve(program: &ConicProgram, options: &SolverOptions) -> Result<RawSolution> {
    InteriorPoint.solve(program, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_rejects_bad_coordinates() {
        let mut p = ConicProgram::new();
        let b = p.add_block(Block::Nonneg(2));
        p.add_row(vec![(Coord::scalar(b, 2), 1.0)], 1.0);
        assert!(matches!(p.validate(), Err(Error::Assembly(_))));

        let mut p = ConicProgram::new();
        p.add_block(Block::Psd(3));
        assert!(p.validate().is_err());

        let mut p = ConicProgram::new();
        let s = p.add_block(Block::Psd(2));
        p.add_row(vec![(Coord::entry(s, 1, 0), 1.0), (Coord::scalar(s, 0), 1.0)], 0.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn entries_are_normalized_and_merged() {
        let mut p = ConicProgram::new();
        let s = p.add_block(Block::Psd(2));
        p.add_row(vec![(Coord::entry(s, 1, 0), 1.0), (Coord::entry(s, 0, 1), 2.0)], 0.0);
        p.validate().unwrap();
        assert_eq!(p.merged_rows()[0], vec![(Coord::entry(s, 0, 1), 3.0)]);
    }

    fn lp_toy() -> ConicProgram {
        let mut p = ConicProgram::new();
        let x = p.add_block(Block::Nonneg(2));
        p.add_objective(Coord::scalar(x, 0), 1.0);
        p.add_objective(Coord::scalar(x, 1), 2.0);
        p.add_row(vec![(Coord::scalar(x, 0), 1.0), (Coord::scalar(x, 1), 1.0)], 1.0);
        p
    }

    #[test]
    fn solves_small_lp() {
        let sol = solve(&lp_toy(), &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.message);
        assert!((sol.primal_objective - 1.0).abs() < 1e-7);
        assert!((sol.value(Coord::scalar(0, 0)) - 1.0).abs() < 1e-6);
        assert!(sol.dual_objective <= sol.primal_objective + 1e-8);
    }

    #[test]
    fn solves_min_eigenvalue_sdp() {
        // min ⟨C, X⟩ s.t. tr X = 1 gives the smallest eigenvalue of C
        let c = [[2.0, 1.0, 0.0, 0.5], [1.0, 2.0, 0.3, 0.0], [0.0, 0.3, 1.5, -0.2], [0.5, 0.0, -0.2, 3.0]];
        let mut p = ConicProgram::new();
        let s = p.add_block(Block::Psd(4));
        for i in 0..4 {
            for j in i..4 {
                let v = if i == j { c[i][i] } else { 2.0 * c[i][j] };
                p.add_objective(Coord::entry(s, i, j), v);
            }
        }
        p.add_row((0..4).map(|i| (Coord::entry(s, i, i), 1.0)).collect(), 1.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.message);
        let cm = RealMatrix::from_fn(4, 4, |i, j| c[i][j]);
        let lmin = cm.eigenvalues_symmetric().unwrap()[0];
        assert!((sol.primal_objective - lmin).abs() < 1e-7);
        assert!(sol.duality_gap <= 1e-7);
    }

    #[test]
    fn handles_free_variables() {
        // min t  s.t.  t ≥ |f|, f = −3
        let mut p = ConicProgram::new();
        let t = p.add_block(Block::Nonneg(3));
        let f = p.add_block(Block::Free(1));
        p.add_objective(Coord::scalar(t, 0), 1.0);
        p.add_row(vec![(Coord::scalar(t, 0), 1.0), (Coord::scalar(f, 0), -1.0), (Coord::scalar(t, 1), -1.0)], 0.0);
        p.add_row(vec![(Coord::scalar(t, 0), 1.0), (Coord::scalar(f, 0), 1.0), (Coord::scalar(t, 2), -1.0)], 0.0);
        p.add_row(vec![(Coord::scalar(f, 0), 1.0)], -3.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal, "{}", sol.message);
        assert!((sol.primal_objective - 3.0).abs() < 1e-7);
        assert!((sol.value(Coord::scalar(f, 0)) + 3.0).abs() < 1e-6);
    }

    #[test]
    fn contradictory_equalities_are_infeasible() {
        let mut p = ConicProgram::new();
        let x = p.add_block(Block::Nonneg(1));
        p.add_objective(Coord::scalar(x, 0), 1.0);
        p.add_row(vec![(Coord::scalar(x, 0), 1.0)], 1.0);
        p.add_row(vec![(Coord::scalar(x, 0), 1.0)], 2.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible, "{}", sol.message);
    }

    #[test]
    fn negative_requirement_is_infeasible() {
        let mut p = ConicProgram::new();
        let x = p.add_block(Block::Nonneg(2));
        p.add_row(vec![(Coord::scalar(x, 0), 1.0), (Coord::scalar(x, 1), 1.0)], -1.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible, "{}", sol.message);
    }

    #[test]
    fn unbounded_objective_is_reported() {
        let mut p = ConicProgram::new();
        let x = p.add_block(Block::Nonneg(2));
        p.add_objective(Coord::scalar(x, 0), -1.0);
        p.add_row(vec![(Coord::scalar(x, 0), 1.0), (Coord::scalar(x, 1), -1.0)], 0.0);
        let sol = solve(&p, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible, "{}", sol.message);
        assert!(sol.message.contains("unbounded"));
    }

    #[test]
    fn weak_duality_holds_on_optimal_runs() {
        let sol = solve(&lp_toy(), &SolverOptions::default()).unwrap();
        assert!(sol.dual_objective <= sol.primal_objective + 1e-8);
    }
}
