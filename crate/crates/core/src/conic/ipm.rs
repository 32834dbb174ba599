//! Infeasible-start primal-dual interior-point method.
//!
//! HKM search direction with Mehrotra predictor-corrector steps. Free scalars
//! are split into differences of nonnegative pairs.

use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Mat, Par, Side};

use super::schur::Schur;
use super::{Block, BlockValue, ConicProgram, ConicSolver, Coord, RawSolution, SolveStatus, SolverOptions};
use crate::error::Result;
use crate::linalg::RealMatrix;

/// The bundled conic solver.
#[derive(Clone, Copy, Debug, Default)]
pub struct InteriorPoint;

impl ConicSolver for InteriorPoint {
    fn solve(&self, program: &ConicProgram, options: &SolverOptions) -> Result<RawSolution> {
        program.validate()?;
        let data = Compiled::new(program);
        Ok(run(&data, options))
    }
}

#[derive(Clone, Copy)]
enum Layout {
    Nonneg(usize),
    /// pair `(start + 2i, start + 2i + 1)` holds `x⁺, x⁻`
    Free(usize),
    Psd(usize),
}

type PsdTerms = Vec<(usize, usize, f64)>;

struct Compiled {
    m: usize,
    b: Vec<f64>,
    n_lp: usize,
    c_lp: Vec<f64>,
    rows_lp: Vec<Vec<(usize, f64)>>,
    cols_lp: Vec<Vec<(usize, f64)>>,
    sizes: Vec<usize>,
    c_psd: Vec<Mat<f64>>,
    /// per PSD block: rows touching it with their entries `(p ≤ q, v)`
    block_rows: Vec<Vec<(usize, PsdTerms)>>,
    free_pairs: Vec<(usize, usize)>,
    layout: Vec<Layout>,
    blocks: Vec<Block>,
}

impl Compiled {
    fn new(program: &ConicProgram) -> Self {
        let mut n_lp = 0;
        let mut sizes = Vec::new();
        let mut free_pairs = Vec::new();
        let layout: Vec<Layout> = program
            .blocks()
            .iter()
            .map(|b| match *b {
                Block::Nonneg(n) => {
                    n_lp += n;
                    Layout::Nonneg(n_lp - n)
                }
                Block::Free(n) => {
                    let start = n_lp;
                    for i in 0..n {
                        free_pairs.push((start + 2 * i, start + 2 * i + 1));
                    }
                    n_lp += 2 * n;
                    Layout::Free(start)
                }
                Block::Psd(n) => {
                    sizes.push(n);
                    Layout::Psd(sizes.len() - 1)
                }
            })
            .collect();

        let m = program.num_rows();
        let mut rows_lp: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut cols_lp: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_lp];
        let mut block_rows: Vec<Vec<(usize, PsdTerms)>> = vec![Vec::new(); sizes.len()];
        for (i, terms) in program.merged_rows().into_iter().enumerate() {
            let mut per_block: Vec<PsdTerms> = vec![Vec::new(); sizes.len()];
            for (coord, v) in terms {
                match (coord, layout[coord.block()]) {
                    (Coord::Scalar { index, .. }, Layout::Nonneg(s)) => rows_lp[i].push((s + index, v)),
                    (Coord::Scalar { index, .. }, Layout::Free(s)) => {
                        rows_lp[i].push((s + 2 * index, v));
                        rows_lp[i].push((s + 2 * index + 1, -v));
                    }
                    (Coord::Entry { row, col, .. }, Layout::Psd(k)) => per_block[k].push((row, col, v)),
                    _ => unreachable!("validated program"),
                }
            }
            for &(l, v) in &rows_lp[i] {
                cols_lp[l].push((i, v));
            }
            for (k, t) in per_block.into_iter().enumerate() {
                if !t.is_empty() {
                    block_rows[k].push((i, t));
                }
            }
        }

        let mut c_lp = vec![0.0; n_lp];
        let mut c_psd: Vec<Mat<f64>> = sizes.iter().map(|&n| Mat::zeros(n, n)).collect();
        for (coord, v) in program.merged_objective() {
            match (coord, layout[coord.block()]) {
                (Coord::Scalar { index, .. }, Layout::Nonneg(s)) => c_lp[s + index] += v,
                (Coord::Scalar { index, .. }, Layout::Free(s)) => {
                    c_lp[s + 2 * index] += v;
                    c_lp[s + 2 * index + 1] -= v;
                }
                (Coord::Entry { row, col, .. }, Layout::Psd(k)) => {
                    if row == col {
                        c_psd[k][(row, row)] += v;
                    } else {
                        c_psd[k][(row, col)] += 0.5 * v;
                        c_psd[k][(col, row)] += 0.5 * v;
                    }
                }
                _ => unreachable!("validated program"),
            }
        }
        let b = program.rows().iter().map(|r| r.rhs).collect();
        Self { m, b, n_lp, c_lp, rows_lp, cols_lp, sizes, c_psd, block_rows, free_pairs, layout, blocks: program.blocks().to_vec() }
    }

    /// `A(x, X)`.
    fn apply(&self, x: &[f64], xs: &[Mat<f64>]) -> Vec<f64> {
        let mut out: Vec<f64> = self.rows_lp.iter().map(|r| r.iter().map(|&(l, v)| v * x[l]).sum()).collect();
        for (k, rows) in self.block_rows.iter().enumerate() {
            for (i, terms) in rows {
                out[*i] += sym_inner(terms, &xs[k]);
            }
        }
        out
    }

    /// `Aᵀ y`.
    fn adjoint(&self, y: &[f64]) -> (Vec<f64>, Vec<Mat<f64>>) {
        let lp = self.cols_lp.iter().map(|c| c.iter().map(|&(i, v)| v * y[i]).sum()).collect();
        let psd = self
            .block_rows
            .iter()
            .zip(&self.sizes)
            .map(|(rows, &n)| {
                let mut s = Mat::zeros(n, n);
                for (i, terms) in rows {
                    add_sym(&mut s, terms, y[*i]);
                }
                s
            })
            .collect();
        (lp, psd)
    }

    fn c_norm(&self) -> f64 {
        (norm2(&self.c_lp).powi(2) + self.c_psd.iter().map(|c| fro(c).powi(2)).sum::<f64>()).sqrt()
    }
}

/// `⟨A, S⟩` for symmetric `S`, with `A` given by upper-triangular entries.
fn sym_inner(terms: &PsdTerms, s: &Mat<f64>) -> f64 {
    terms.iter().map(|&(p, q, v)| v * if p == q { s[(p, p)] } else { 0.5 * (s[(p, q)] + s[(q, p)]) }).sum()
}

fn add_sym(s: &mut Mat<f64>, terms: &PsdTerms, scale: f64) {
    for &(p, q, v) in terms {
        if p == q {
            s[(p, p)] += scale * v;
        } else {
            s[(p, q)] += 0.5 * scale * v;
            s[(q, p)] += 0.5 * scale * v;
        }
    }
}

fn terms_fro(terms: &PsdTerms) -> f64 {
    terms.iter().map(|&(p, q, v)| if p == q { v * v } else { 0.5 * v * v }).sum::<f64>().sqrt()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fro(a: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    s.sqrt()
}

fn inner(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * b[(i, j)];
        }
    }
    s
}

fn sym(a: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

fn lin(a: f64, x: &Mat<f64>, b: f64, y: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(x.nrows(), x.ncols(), |i, j| a * x[(i, j)] + b * y[(i, j)])
}

fn scaled_identity(n: usize, s: f64) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if i == j { s } else { 0.0 })
}

fn spd_inverse(a: &Mat<f64>) -> Option<Mat<f64>> {
    use faer::linalg::solvers::DenseSolveCore;
    let llt = a.llt(Side::Lower).ok()?;
    Some(sym(&llt.inverse()))
}

/// Largest `α` with `X + αΔX ⪰ 0` (infinite if every step keeps it PSD).
fn max_step_psd(x: &Mat<f64>, dx: &Mat<f64>) -> f64 {
    let Ok(llt) = x.llt(Side::Lower) else { return 0.0 };
    let l = llt.L();
    let mut w = dx.clone();
    solve_lower_triangular_in_place(l, w.as_mut(), Par::Seq);
    let mut wt = w.transpose().to_owned();
    solve_lower_triangular_in_place(l, wt.as_mut(), Par::Seq);
    match sym(&wt).self_adjoint_eigenvalues(Side::Lower) {
        Ok(ev) => {
            let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
            if min >= 0.0 {
                f64::INFINITY
            } else {
                -1.0 / min
            }
        }
        Err(_) => 0.0,
    }
}

fn max_step_lp(x: &[f64], dx: &[f64]) -> f64 {
    x.iter().zip(dx).filter(|(_, d)| **d < 0.0).map(|(xi, di)| -xi / di).fold(f64::INFINITY, f64::min)
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    z: Vec<f64>,
    xs: Vec<Mat<f64>>,
    zs: Vec<Mat<f64>>,
    y: Vec<f64>,
}

#[derive(Clone, Copy, Default)]
struct Metrics {
    pobj: f64,
    dobj: f64,
    relp: f64,
    reld: f64,
    gap: f64,
    compl: f64,
}

impl Metrics {
    fn meets(&self, feas: f64, gap: f64) -> bool {
        self.relp <= feas && self.reld <= feas && self.gap <= gap && self.compl <= gap
    }

    fn score(&self, o: &SolverOptions) -> f64 {
        (self.relp / o.near_feas_tol).max(self.reld / o.near_feas_tol).max(self.gap / o.near_gap_tol)
    }
}

struct Residuals {
    rp: Vec<f64>,
    rd_lp: Vec<f64>,
    rd_psd: Vec<Mat<f64>>,
    metrics: Metrics,
    /// `‖Aᵀy + z‖`
    dual_ray: f64,
    /// `‖A(x)‖`
    primal_ray: f64,
}

fn residuals(data: &Compiled, it: &Iterate, b_norm: f64, c_norm: f64) -> Residuals {
    let ax = data.apply(&it.x, &it.xs);
    let rp: Vec<f64> = data.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let (aty_lp, aty_psd) = data.adjoint(&it.y);
    let rd_lp: Vec<f64> = (0..data.n_lp).map(|l| data.c_lp[l] - aty_lp[l] - it.z[l]).collect();
    let rd_psd: Vec<Mat<f64>> = (0..data.sizes.len())
        .map(|k| {
            let t = lin(1.0, &data.c_psd[k], -1.0, &aty_psd[k]);
            lin(1.0, &t, -1.0, &it.zs[k])
        })
        .collect();
    let ray_lp: f64 = aty_lp.iter().zip(&it.z).map(|(a, z)| (a + z).powi(2)).sum();
    let ray_psd: f64 = aty_psd.iter().zip(&it.zs).map(|(a, z)| fro(&lin(1.0, a, 1.0, z)).powi(2)).sum();
    let pobj = dot(&data.c_lp, &it.x) + data.c_psd.iter().zip(&it.xs).map(|(c, x)| inner(c, x)).sum::<f64>();
    let dobj = dot(&data.b, &it.y);
    let compl = dot(&it.x, &it.z) + it.xs.iter().zip(&it.zs).map(|(x, z)| inner(x, z)).sum::<f64>();
    let rd_norm = (norm2(&rd_lp).powi(2) + rd_psd.iter().map(|r| fro(r).powi(2)).sum::<f64>()).sqrt();
    Residuals {
        metrics: Metrics {
            pobj,
            dobj,
            relp: norm2(&rp) / (1.0 + b_norm),
            reld: rd_norm / (1.0 + c_norm),
            gap: (pobj - dobj).abs(),
            compl,
        },
        rp,
        rd_lp,
        rd_psd,
        dual_ray: (ray_lp + ray_psd).sqrt(),
        primal_ray: norm2(&ax),
    }
}

fn starting_point(data: &Compiled) -> Iterate {
    let m = data.m;
    let row_lp_norm: Vec<f64> = data.rows_lp.iter().map(|r| r.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()).collect();
    let mut x = vec![0.0; data.n_lp];
    let mut z = vec![0.0; data.n_lp];
    if data.n_lp > 0 {
        let n = data.n_lp as f64;
        let mut xi: f64 = 10f64.max(n.sqrt());
        let mut eta: f64 = 10f64.max(n.sqrt()).max(norm2(&data.c_lp));
        for i in 0..m {
            xi = xi.max(n.sqrt() * (1.0 + data.b[i].abs()) / (1.0 + row_lp_norm[i]));
            eta = eta.max(row_lp_norm[i]);
        }
        x.iter_mut().for_each(|v| *v = xi);
        z.iter_mut().for_each(|v| *v = eta);
    }
    let mut xs = Vec::new();
    let mut zs = Vec::new();
    for (k, &n) in data.sizes.iter().enumerate() {
        let nf = n as f64;
        let mut xi: f64 = 10f64.max(nf.sqrt());
        let mut eta: f64 = 10f64.max(nf.sqrt()).max(fro(&data.c_psd[k]));
        for (i, terms) in &data.block_rows[k] {
            let a = terms_fro(terms);
            xi = xi.max(nf.sqrt() * (1.0 + data.b[*i].abs()) / (1.0 + a));
            eta = eta.max(a);
        }
        xs.push(scaled_identity(n, xi));
        zs.push(scaled_identity(n, eta));
    }
    Iterate { x, z, xs, zs, y: vec![0.0; m] }
}

struct Direction {
    dx: Vec<f64>,
    dz: Vec<f64>,
    dxs: Vec<Mat<f64>>,
    dzs: Vec<Mat<f64>>,
    dy: Vec<f64>,
}

/// Solves the Newton system for given complementarity right-hand sides
/// `rc_lp`, `rc_psd` (the targets for `Δx`, `ΔX` before the `ΔZ` coupling).
#[allow(clippy::too_many_arguments)]
fn direction(
    data: &Compiled,
    schur: &Schur,
    it: &Iterate,
    res: &Residuals,
    dlp: &[f64],
    zinv: &[Mat<f64>],
    rc_lp: &[f64],
    rc_psd: &[Mat<f64>],
) -> Direction {
    // rhs = rp − A(Rc − X Rd Z⁻¹)
    let t_lp: Vec<f64> = (0..data.n_lp).map(|l| rc_lp[l] - dlp[l] * res.rd_lp[l]).collect();
    let t_psd: Vec<Mat<f64>> = (0..data.sizes.len())
        .map(|k| {
            let xrz = &(&it.xs[k] * &res.rd_psd[k]) * &zinv[k];
            sym(&lin(1.0, &rc_psd[k], -1.0, &xrz))
        })
        .collect();
    let at = data.apply(&t_lp, &t_psd);
    let rhs: Vec<f64> = res.rp.iter().zip(&at).map(|(r, a)| r - a).collect();
    let dy = schur.solve(&rhs);
    let (ady_lp, ady_psd) = data.adjoint(&dy);
    let dz: Vec<f64> = (0..data.n_lp).map(|l| res.rd_lp[l] - ady_lp[l]).collect();
    let dx: Vec<f64> = (0..data.n_lp).map(|l| rc_lp[l] - dlp[l] * dz[l]).collect();
    let dzs: Vec<Mat<f64>> = (0..data.sizes.len()).map(|k| lin(1.0, &res.rd_psd[k], -1.0, &ady_psd[k])).collect();
    let dxs: Vec<Mat<f64>> = (0..data.sizes.len())
        .map(|k| {
            let t = &(&it.xs[k] * &dzs[k]) * &zinv[k];
            lin(1.0, &rc_psd[k], -1.0, &sym(&t))
        })
        .collect();
    Direction { dx, dz, dxs, dzs, dy }
}

fn step_lengths(it: &Iterate, d: &Direction) -> (f64, f64) {
    let mut ap = max_step_lp(&it.x, &d.dx);
    let mut ad = max_step_lp(&it.z, &d.dz);
    for k in 0..it.xs.len() {
        ap = ap.min(max_step_psd(&it.xs[k], &d.dxs[k]));
        ad = ad.min(max_step_psd(&it.zs[k], &d.dzs[k]));
    }
    (ap, ad)
}

/// Adds the PSD part `tr(A_i X A_j Z⁻¹)` of the normal equations.
fn add_psd_schur(data: &Compiled, schur: &mut Schur, xs: &[Mat<f64>], zinv: &[Mat<f64>]) {
    for (k, rows) in data.block_rows.iter().enumerate() {
        let n = data.sizes[k];
        // row-major copies for tight loops
        let xr: Vec<f64> = (0..n * n).map(|t| xs[k][(t / n, t % n)]).collect();
        let zr: Vec<f64> = (0..n * n).map(|t| zinv[k][(t / n, t % n)]).collect();
        let idx: Vec<usize> = rows.iter().map(|(i, _)| schur.dense_index(*i).expect("PSD rows are dense")).collect();
        let mut g = vec![0.0; n * n];
        for (a, (_, ta)) in rows.iter().enumerate() {
            g.iter_mut().for_each(|v| *v = 0.0);
            // G = X A_a Z⁻¹
            for &(p, q, v) in ta {
                let pairs: &[(usize, usize, f64)] =
                    if p == q { &[(p, p, 1.0)] } else { &[(p, q, 0.5), (q, p, 0.5)] };
                for &(s, t, w) in pairs {
                    let coef = v * w;
                    let zrow = &zr[t * n..(t + 1) * n];
                    for r in 0..n {
                        let xv = coef * xr[r * n + s];
                        if xv == 0.0 {
                            continue;
                        }
                        let grow = &mut g[r * n..(r + 1) * n];
                        for (gc, zc) in grow.iter_mut().zip(zrow) {
                            *gc += xv * zc;
                        }
                    }
                }
            }
            let ia = idx[a];
            for (b, (_, tb)) in rows.iter().enumerate() {
                let ib = idx[b];
                if ib < ia {
                    continue;
                }
                let val: f64 = tb
                    .iter()
                    .map(|&(p, q, v)| v * if p == q { g[p * n + p] } else { 0.5 * (g[p * n + q] + g[q * n + p]) })
                    .sum();
                schur.add_dense(ia, ib, val);
            }
        }
    }
}

fn to_real(m: &Mat<f64>) -> RealMatrix {
    RealMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn block_values(data: &Compiled, lp: &[f64], psd: &[Mat<f64>], dual: bool, sizes: &[Block]) -> Vec<BlockValue> {
    data.layout
        .iter()
        .zip(sizes)
        .map(|(lay, blk)| match (*lay, *blk) {
            (Layout::Nonneg(s), Block::Nonneg(n)) => BlockValue::Scalars(lp[s..s + n].to_vec()),
            (Layout::Free(s), Block::Free(n)) => BlockValue::Scalars(
                (0..n)
                    .map(|i| if dual { lp[s + 2 * i] } else { lp[s + 2 * i] - lp[s + 2 * i + 1] })
                    .collect(),
            ),
            (Layout::Psd(k), Block::Psd(_)) => BlockValue::Matrix(to_real(&psd[k])),
            _ => unreachable!("layout mirrors the block list"),
        })
        .collect()
}

struct Outcome {
    status: SolveStatus,
    it: Iterate,
    metrics: Metrics,
    iterations: usize,
    message: String,
}

fn run(data: &Compiled, opts: &SolverOptions) -> RawSolution {
    let outcome = iterate(data, opts);
    let blocks = &data.blocks;
    let it = &outcome.it;
    RawSolution {
        status: outcome.status,
        primal: block_values(data, &it.x, &it.xs, false, blocks),
        dual_slack: block_values(data, &it.z, &it.zs, true, blocks),
        multipliers: it.y.clone(),
        primal_objective: outcome.metrics.pobj,
        dual_objective: outcome.metrics.dobj,
        duality_gap: outcome.metrics.gap,
        primal_infeasibility: outcome.metrics.relp,
        dual_infeasibility: outcome.metrics.reld,
        iterations: outcome.iterations,
        message: outcome.message,
    }
}

fn iterate(data: &Compiled, opts: &SolverOptions) -> Outcome {
    let b_norm = norm2(&data.b);
    let c_norm = data.c_norm();
    let nu = (data.n_lp + data.sizes.iter().sum::<usize>()) as f64;
    let mut it = starting_point(data);
    let touches: Vec<bool> = {
        let mut t = vec![false; data.m];
        for rows in &data.block_rows {
            for (i, _) in rows {
                t[*i] = true;
            }
        }
        t
    };
    let mut schur = match Schur::new(data.m, &data.rows_lp, &data.cols_lp, &touches) {
        Ok(s) => s,
        Err(e) => {
            return Outcome { status: SolveStatus::Failed, it, metrics: Metrics::default(), iterations: 0, message: e }
        }
    };

    let mut best: Option<(Iterate, Metrics)> = None;
    let mut stalls = 0;
    let mut message = String::from("iteration limit reached");
    let mut last = Metrics::default();
    let mut iterations = 0;
    for iter in 0..=opts.max_iter {
        iterations = iter;
        let res = residuals(data, &it, b_norm, c_norm);
        let mt = res.metrics;
        last = mt;
        if opts.verbose {
            eprintln!(
                "{iter:3} pobj {:+.8e} dobj {:+.8e} relp {:.2e} reld {:.2e} gap {:.2e}",
                mt.pobj, mt.dobj, mt.relp, mt.reld, mt.gap
            );
        }
        if !(mt.pobj.is_finite() && mt.dobj.is_finite() && mt.relp.is_finite() && mt.reld.is_finite()) {
            message = "numerical breakdown (non-finite iterate)".into();
            break;
        }
        if mt.meets(opts.feas_tol, opts.gap_tol) {
            return Outcome { status: SolveStatus::Optimal, it, metrics: mt, iterations: iter, message: "converged".into() };
        }
        if mt.meets(opts.near_feas_tol, opts.near_gap_tol)
            && best.as_ref().is_none_or(|(_, bm)| mt.score(opts) < bm.score(opts))
        {
            best = Some((it.clone(), mt));
        }
        if mt.dobj > 0.0 && res.dual_ray / mt.dobj < opts.feas_tol {
            return Outcome {
                status: SolveStatus::Infeasible,
                it,
                metrics: mt,
                iterations: iter,
                message: "primal infeasible: Farkas ray found".into(),
            };
        }
        if mt.pobj < 0.0 && res.primal_ray / -mt.pobj < opts.feas_tol {
            return Outcome {
                status: SolveStatus::Infeasible,
                it,
                metrics: mt,
                iterations: iter,
                message: "dual infeasible: primal objective unbounded below".into(),
            };
        }
        if iter == opts.max_iter {
            break;
        }

        let mu = mt.compl / nu;
        let dlp: Vec<f64> = it.x.iter().zip(&it.z).map(|(x, z)| x / z).collect();
        let zinv: Vec<Mat<f64>> = match it.zs.iter().map(spd_inverse).collect::<Option<Vec<_>>>() {
            Some(v) => v,
            None => {
                message = "dual slack lost definiteness".into();
                break;
            }
        };
        schur.reset();
        schur.add_lp(&dlp);
        add_psd_schur(data, &mut schur, &it.xs, &zinv);
        if let Err(e) = schur.factorize() {
            message = e;
            break;
        }

        // predictor
        let rc_lp: Vec<f64> = it.x.iter().map(|x| -x).collect();
        let rc_psd: Vec<Mat<f64>> = it.xs.iter().map(|x| lin(-1.0, x, 0.0, x)).collect();
        let aff = direction(data, &schur, &it, &res, &dlp, &zinv, &rc_lp, &rc_psd);
        let (ap, ad) = step_lengths(&it, &aff);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut compl_aff = 0.0;
        for l in 0..data.n_lp {
            compl_aff += (it.x[l] + ap * aff.dx[l]) * (it.z[l] + ad * aff.dz[l]);
        }
        for k in 0..data.sizes.len() {
            compl_aff += inner(&lin(1.0, &it.xs[k], ap, &aff.dxs[k]), &lin(1.0, &it.zs[k], ad, &aff.dzs[k]));
        }
        let mu_aff = (compl_aff / nu).max(0.0);
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

        // corrector
        let rc_lp: Vec<f64> = (0..data.n_lp)
            .map(|l| sigma * mu / it.z[l] - it.x[l] - aff.dx[l] * aff.dz[l] / it.z[l])
            .collect();
        let rc_psd: Vec<Mat<f64>> = (0..data.sizes.len())
            .map(|k| {
                let second = sym(&(&(&aff.dxs[k] * &aff.dzs[k]) * &zinv[k]));
                let t = lin(sigma * mu, &zinv[k], -1.0, &it.xs[k]);
                lin(1.0, &t, -1.0, &second)
            })
            .collect();
        let dir = direction(data, &schur, &it, &res, &dlp, &zinv, &rc_lp, &rc_psd);
        let (mp, md) = step_lengths(&it, &dir);
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let ap = (gamma * mp).min(1.0);
        let ad = (gamma * md).min(1.0);
        if !(ap.is_finite() && ad.is_finite()) {
            message = "numerical breakdown (step length)".into();
            break;
        }

        for l in 0..data.n_lp {
            it.x[l] += ap * dir.dx[l];
            it.z[l] += ad * dir.dz[l];
        }
        for k in 0..data.sizes.len() {
            it.xs[k] = sym(&lin(1.0, &it.xs[k], ap, &dir.dxs[k]));
            it.zs[k] = sym(&lin(1.0, &it.zs[k], ad, &dir.dzs[k]));
        }
        it.y.iter_mut().zip(&dir.dy).for_each(|(y, d)| *y += ad * d);
        for &(p, n) in &data.free_pairs {
            let shift = 0.8 * it.x[p].min(it.x[n]);
            it.x[p] -= shift;
            it.x[n] -= shift;
        }

        if ap.min(ad) < 1e-8 {
            stalls += 1;
            if stalls >= 5 {
                message = "stalled: step lengths vanished".into();
                break;
            }
        } else {
            stalls = 0;
        }
    }

    match best {
        Some((bit, bm)) => Outcome {
            status: SolveStatus::NearOptimal,
            it: bit,
            metrics: bm,
            iterations,
            message: format!("{message}; returning best near-optimal iterate"),
        },
        None => Outcome { status: SolveStatus::Failed, it, metrics: last, iterations, message },
    }
}
