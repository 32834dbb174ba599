//! One-way LOCC decision policies and the effective two-outcome POVM they induce.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kron, ComplexMatrix};
use crate::measurements::MeasurementSet;
use crate::states::DensityMatrix;

/// Entries below this are treated as absent when sparsifying a policy.
pub const ZERO_THRESHOLD: f64 = 1e-5;

/// Tolerance of the marginal consistency checks.
pub const POLICY_TOL: f64 = 1e-7;

/// Verdict of one round: certified (`C`) or uncertified (`U`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    C,
    U,
}

/// One nonzero policy probability `P(x, y, c | a, b)` (0-based indices).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub x: usize,
    pub y: usize,
    pub c: Outcome,
    pub a: usize,
    pub b: usize,
    pub value: f64,
}

/// Distribution tables `P(x)`, `P(x, y | a)` and `P(x, y, c | a, b)` of a
/// one-way protocol: Alice draws `x`, measures `a`, announces `(x, a)`; Bob
/// draws `y`, measures `b`, and the pair outputs `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoccPolicy {
    m: usize,
    d: usize,
    table_c: Vec<f64>,
    table_u: Vec<f64>,
    marginal_q: Vec<f64>,
    marginal_r: Vec<f64>,
}

impl LoccPolicy {
    pub fn zeros(m: usize, d: usize) -> Self {
        let n = m * m * d * d;
        Self {
            m,
            d,
            table_c: vec![0.0; n],
            table_u: vec![0.0; n],
            marginal_q: vec![0.0; m * m * d],
            marginal_r: vec![0.0; m],
        }
    }

    /// Tables indexed `((x·m + y)·d + a)·d + b`, `(x·m + y)·d + a` and `x`.
    pub fn from_tables(
        m: usize,
        d: usize,
        table_c: Vec<f64>,
        table_u: Vec<f64>,
        marginal_q: Vec<f64>,
        marginal_r: Vec<f64>,
    ) -> Result<Self> {
        let n = m * m * d * d;
        if table_c.len() != n || table_u.len() != n || marginal_q.len() != m * m * d || marginal_r.len() != m {
            return Err(Error::Dimension(format!("policy tables do not match m={m}, d={d}")));
        }
        Ok(Self { m, d, table_c, table_u, marginal_q, marginal_r })
    }

    /// Always outputs `U` after measuring setting 0 on both sides.
    pub fn always_u(m: usize, d: usize) -> Self {
        let mut p = Self::zeros(m, d);
        p.marginal_r[0] = 1.0;
        for a in 0..d {
            let qi = p.q_index(0, 0, a);
            p.marginal_q[qi] = 1.0;
            for b in 0..d {
                let k = p.index(0, 0, a, b);
                p.table_u[k] = 1.0;
            }
        }
        p
    }

    pub fn num_settings(&self) -> usize {
        self.m
    }

    pub fn outcomes(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, a: usize, b: usize) -> usize {
        ((x * self.m + y) * self.d + a) * self.d + b
    }

    #[inline]
    pub fn q_index(&self, x: usize, y: usize, a: usize) -> usize {
        (x * self.m + y) * self.d + a
    }

    pub fn p(&self, x: usize, y: usize, c: Outcome, a: usize, b: usize) -> f64 {
        let k = self.index(x, y, a, b);
        match c {
            Outcome::C => self.table_c[k],
            Outcome::U => self.table_u[k],
        }
    }

    pub fn q(&self, x: usize, y: usize, a: usize) -> f64 {
        self.marginal_q[self.q_index(x, y, a)]
    }

    pub fn r(&self, x: usize) -> f64 {
        self.marginal_r[x]
    }

    pub fn table_c(&self) -> &[f64] {
        &self.table_c
    }

    pub fn table_u(&self) -> &[f64] {
        &self.table_u
    }

    pub fn marginal_q(&self) -> &[f64] {
        &self.marginal_q
    }

    pub fn marginal_r(&self) -> &[f64] {
        &self.marginal_r
    }

    /// Largest violation of nonnegativity and of the three marginal identities.
    pub fn max_violation(&self) -> f64 {
        let (m, d) = (self.m, self.d);
        let mut worst: f64 = 0.0;
        for v in self.table_c.iter().chain(&self.table_u).chain(&self.marginal_q).chain(&self.marginal_r) {
            worst = worst.max(-v);
        }
        for x in 0..m {
            for y in 0..m {
                for a in 0..d {
                    let q = self.q(x, y, a);
                    for b in 0..d {
                        let k = self.index(x, y, a, b);
                        worst = worst.max((self.table_c[k] + self.table_u[k] - q).abs());
                    }
                }
            }
            for a in 0..d {
                let s: f64 = (0..m).map(|y| self.q(x, y, a)).sum();
                worst = worst.max((s - self.r(x)).abs());
            }
        }
        worst.max((self.marginal_r.iter().sum::<f64>() - 1.0).abs())
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let v = self.max_violation();
        if v > tol {
            return Err(Error::Validation(format!("policy violates its marginal constraints by {v:.3e}")));
        }
        Ok(())
    }

    /// Clips negatives, zeroes entries below `threshold` and restores exact
    /// marginal consistency.
    pub fn cleaned(&self, threshold: f64) -> Result<Self> {
        let (m, d) = (self.m, self.d);
        let chop = |v: f64| if v < threshold { 0.0 } else { v };
        let mut out = Self::zeros(m, d);
        let total: f64 = self.marginal_r.iter().map(|&v| chop(v)).sum();
        if total <= 0.0 {
            return Err(Error::Extraction("setting distribution vanishes after cleaning".into()));
        }
        for x in 0..m {
            out.marginal_r[x] = chop(self.marginal_r[x]) / total;
        }
        for x in 0..m {
            let r = out.marginal_r[x];
            for a in 0..d {
                let raw: Vec<f64> = (0..m).map(|y| chop(self.q(x, y, a))).collect();
                let s: f64 = raw.iter().sum();
                for y in 0..m {
                    let q = if r == 0.0 {
                        0.0
                    } else if s == 0.0 {
                        if y == 0 {
                            r
                        } else {
                            0.0
                        }
                    } else {
                        raw[y] * r / s
                    };
                    let qi = out.q_index(x, y, a);
                    out.marginal_q[qi] = q;
                }
            }
        }
        for x in 0..m {
            for y in 0..m {
                for a in 0..d {
                    let q = out.q(x, y, a);
                    for b in 0..d {
                        let k = self.index(x, y, a, b);
                        let mut pc = chop(self.table_c[k]).min(q);
                        let mut pu = q - pc;
                        if pu < threshold {
                            pc = q;
                            pu = 0.0;
                        } else if pc == 0.0 {
                            pu = q;
                        }
                        out.table_c[k] = pc;
                        out.table_u[k] = pu;
                    }
                }
            }
        }
        Ok(out)
    }

    /// All entries of the `C` and `U` tables above `threshold`.
    pub fn entries(&self, threshold: f64) -> Vec<PolicyEntry> {
        let (m, d) = (self.m, self.d);
        let mut out = Vec::new();
        for x in 0..m {
            for y in 0..m {
                for c in [Outcome::C, Outcome::U] {
                    for a in 0..d {
                        for b in 0..d {
                            let value = self.p(x, y, c, a, b);
                            if value > threshold {
                                out.push(PolicyEntry { x, y, c, a, b, value });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Rebuilds a policy from its nonzero entries, recovering the marginals
    /// from the `C + U` sums.
    pub fn from_entries(m: usize, d: usize, entries: &[PolicyEntry]) -> Result<Self> {
        let mut p = Self::zeros(m, d);
        for e in entries {
            if e.x >= m || e.y >= m || e.a >= d || e.b >= d {
                return Err(Error::Dimension(format!("policy entry {e:?} is out of range for m={m}, d={d}")));
            }
            let k = p.index(e.x, e.y, e.a, e.b);
            match e.c {
                Outcome::C => p.table_c[k] = e.value,
                Outcome::U => p.table_u[k] = e.value,
            }
        }
        for x in 0..m {
            for y in 0..m {
                for a in 0..d {
                    let q = (0..d)
                        .map(|b| {
                            let k = p.index(x, y, a, b);
                            p.table_c[k] + p.table_u[k]
                        })
                        .fold(0.0, f64::max);
                    let qi = p.q_index(x, y, a);
                    p.marginal_q[qi] = q;
                }
            }
            p.marginal_r[x] = (0..d).map(|a| (0..m).map(|y| p.q(x, y, a)).sum::<f64>()).fold(0.0, f64::max);
        }
        Ok(p)
    }

    /// Completes a table of `C` probabilities into a full policy, assigning all
    /// residual marginal mass to `U`. Leftover setting mass goes to `x = 0`,
    /// leftover `y` mass to `y = 0`.
    pub fn complete_from_c(m: usize, d: usize, c_entries: &[(usize, usize, usize, usize, f64)]) -> Result<Self> {
        let mut p = Self::zeros(m, d);
        for &(x, y, a, b, v) in c_entries {
            if x >= m || y >= m || a >= d || b >= d || !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("invalid table entry ({x}, {y}, {a}, {b}, {v})")));
            }
            let k = p.index(x, y, a, b);
            p.table_c[k] = v;
        }
        // minimal marginals: Q(x,y|a) ≥ max_b P_C, R(x) ≥ Σ_y Q(x,y|a) for every a
        let mut need_r = vec![0.0; m];
        for x in 0..m {
            for a in 0..d {
                let mut s = 0.0;
                for y in 0..m {
                    let q = (0..d).map(|b| p.table_c[p.index(x, y, a, b)]).fold(0.0, f64::max);
                    let qi = p.q_index(x, y, a);
                    p.marginal_q[qi] = q;
                    s += q;
                }
                need_r[x] = f64::max(need_r[x], s);
            }
        }
        let total: f64 = need_r.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::Validation(format!("table needs total setting mass {total:.6} > 1")));
        }
        need_r[0] += (1.0 - total).max(0.0);
        p.marginal_r = need_r;
        for x in 0..m {
            for a in 0..d {
                let s: f64 = (0..m).map(|y| p.q(x, y, a)).sum();
                let qi = p.q_index(x, 0, a);
                p.marginal_q[qi] += p.marginal_r[x] - s;
            }
        }
        for x in 0..m {
            for y in 0..m {
                for a in 0..d {
                    let q = p.q(x, y, a);
                    for b in 0..d {
                        let k = p.index(x, y, a, b);
                        p.table_u[k] = q - p.table_c[k];
                    }
                }
            }
        }
        Ok(p)
    }
}

/// The operators `N_{a|x} ⊗ N_{b|y}` for all `(x, y, a, b)`, in policy order.
#[derive(Clone, Debug)]
pub struct ProductOperators {
    m: usize,
    d: usize,
    ops: Vec<ComplexMatrix>,
}

impl ProductOperators {
    pub fn new(meas: &MeasurementSet) -> Self {
        let (m, d) = (meas.num_settings(), meas.local_dim());
        let mut ops = Vec::with_capacity(m * m * d * d);
        for x in 0..m {
            for y in 0..m {
                for a in 0..d {
                    for b in 0..d {
                        ops.push(kron(meas.element(x, a), meas.element(y, b)));
                    }
                }
            }
        }
        Self { m, d, ops }
    }

    pub fn num_settings(&self) -> usize {
        self.m
    }

    pub fn outcomes(&self) -> usize {
        self.d
    }

    pub fn ops(&self) -> &[ComplexMatrix] {
        &self.ops
    }

    /// Born probabilities `tr(ρ N_{a|x} ⊗ N_{b|y})` in policy order.
    pub fn born(&self, rho: &DensityMatrix) -> Vec<f64> {
        self.ops.iter().map(|op| rho.expectation(op)).collect()
    }

    /// `Σ w_k · op_k`.
    pub fn combine(&self, weights: &[f64]) -> ComplexMatrix {
        let n = self.d * self.d;
        let mut out = ComplexMatrix::zeros(n, n);
        for (w, op) in weights.iter().zip(&self.ops) {
            if *w != 0.0 {
                out.add_scaled(*w, op);
            }
        }
        out
    }
}

/// `(M_C, M_U)` with `M_c = Σ P(x,y,c|a,b) N_{a|x} ⊗ N_{b|y}`.
pub fn effective_povm(policy: &LoccPolicy, meas: &MeasurementSet) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if policy.num_settings() != meas.num_settings() || policy.outcomes() != meas.local_dim() {
        return Err(Error::Dimension(format!(
            "policy with m={}, d={} does not match {} settings of dimension {}",
            policy.num_settings(),
            policy.outcomes(),
            meas.num_settings(),
            meas.local_dim()
        )));
    }
    let products = ProductOperators::new(meas);
    Ok((products.combine(policy.table_c()).hermitian_part(), products.combine(policy.table_u()).hermitian_part()))
}
