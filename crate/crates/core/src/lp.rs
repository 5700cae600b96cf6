//! Dense linear programming for the polytope engine.
//!
//! Problems have the inequality form `max cᵀx  s.t.  A x ≤ b` with free `x`.
//! They are solved through their dual `min bᵀy  s.t.  Aᵀy = c, y ≥ 0`, which
//! has one equality row per primal variable. The polytopes handled here have
//! few parameters and many constraints, so the dual tableau stays small.
//! The primal point is read off the simplex multipliers of the dual.
//!
//! Pivoting follows Bland's rule throughout, so degenerate problems cannot cycle.

use nalgebra::{DMatrix, DVector};

/// Reduced-cost and ratio-test tolerance.
pub const LP_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: DVector<f64>, value: f64 },
    Unbounded,
    Infeasible,
}

impl LpOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }
}

#[derive(Debug, PartialEq)]
enum StdStatus {
    Optimal,
    Unbounded,
    Infeasible,
    IterationLimit,
}

/// Two-phase tableau for `min fᵀy  s.t.  G y = h, y ≥ 0`.
struct Tableau {
    rows: usize,
    real: usize,
    /// rows × (real + rows + 1); last column is the right-hand side.
    t: Vec<f64>,
    /// Reduced costs over all columns; last entry is minus the objective.
    d: Vec<f64>,
    basis: Vec<usize>,
    signs: Vec<f64>,
}

impl Tableau {
    fn width(&self) -> usize {
        self.real + self.rows + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width() + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width() - 1)
    }

    fn new(g: &DMatrix<f64>, h: &DVector<f64>) -> Self {
        let rows = g.nrows();
        let real = g.ncols();
        let width = real + rows + 1;
        let mut t = vec![0.0; rows * width];
        let mut signs = vec![1.0; rows];
        for i in 0..rows {
            let s = if h[i] < 0.0 { -1.0 } else { 1.0 };
            signs[i] = s;
            for j in 0..real {
                t[i * width + j] = s * g[(i, j)];
            }
            t[i * width + real + i] = 1.0;
            t[i * width + width - 1] = s * h[i];
        }
        Tableau {
            rows,
            real,
            t,
            d: vec![0.0; width],
            basis: (real..real + rows).collect(),
            signs,
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width();
        let p = self.t[r * w + c];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (x, pv) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * pv;
                }
            }
        }
        let f = self.d[c];
        if f != 0.0 {
            for (x, pv) in self.d.iter_mut().zip(prow.iter()) {
                *x -= f * pv;
            }
        }
        self.basis[r] = c;
    }

    /// Reduced costs from scratch for cost vector `cost` (length real + rows).
    fn price(&mut self, cost: &[f64]) {
        let w = self.width();
        for j in 0..w {
            let base = if j < w - 1 { cost[j] } else { 0.0 };
            let mut acc = base;
            for i in 0..self.rows {
                acc -= cost[self.basis[i]] * self.t[i * w + j];
            }
            self.d[j] = acc;
        }
    }

    /// Bland's rule simplex over columns `0..allowed`.
    fn run(&mut self, allowed: usize, scale: f64) -> StdStatus {
        for _ in 0..MAX_PIVOTS {
            let Some(c) = (0..allowed).find(|&j| self.d[j] < -LP_TOL * scale) else {
                return StdStatus::Optimal;
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, c);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-12 * (1.0 + br.abs())
                                || (ratio <= br + 1e-12 * (1.0 + br.abs())
                                    && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                None => return StdStatus::Unbounded,
                Some((r, _)) => self.pivot(r, c),
            }
        }
        StdStatus::IterationLimit
    }
}

struct StdSolution {
    status: StdStatus,
    /// Simplex multipliers of the equality rows (the primal point).
    multipliers: Option<DVector<f64>>,
}

fn solve_standard(g: &DMatrix<f64>, h: &DVector<f64>, f: &DVector<f64>) -> StdSolution {
    let rows = g.nrows();
    let real = g.ncols();
    let mut tab = Tableau::new(g, h);
    let hscale = 1.0 + h.amax();
    let fscale = 1.0 + f.amax();

    // Phase 1: minimise the sum of artificials.
    let mut cost1 = vec![0.0; real + rows];
    for c in cost1.iter_mut().skip(real) {
        *c = 1.0;
    }
    tab.price(&cost1);
    let st = tab.run(real, 1.0);
    if st == StdStatus::IterationLimit {
        return StdSolution {
            status: st,
            multipliers: None,
        };
    }
    let infeas: f64 = (0..rows)
        .filter(|&i| tab.basis[i] >= real)
        .map(|i| tab.rhs(i))
        .sum();
    if infeas > 1e-9 * hscale {
        return StdSolution {
            status: StdStatus::Infeasible,
            multipliers: None,
        };
    }
    // Drive remaining artificials out of the basis where possible.
    for i in 0..rows {
        if tab.basis[i] >= real {
            if let Some(j) = (0..real).find(|&j| tab.at(i, j).abs() > 1e-9) {
                tab.pivot(i, j);
            }
        }
    }

    // Phase 2.
    let mut cost2 = vec![0.0; real + rows];
    cost2[..real].copy_from_slice(f.as_slice());
    tab.price(&cost2);
    let st = tab.run(real, fscale);
    if st != StdStatus::Optimal {
        return StdSolution {
            status: st,
            multipliers: None,
        };
    }
    let mult = DVector::from_fn(rows, |i, _| -tab.d[real + i] * tab.signs[i]);
    StdSolution {
        status: StdStatus::Optimal,
        multipliers: Some(mult),
    }
}

/// `max cᵀx  s.t.  A x ≤ b`, `x` free.
pub fn maximize(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> LpOutcome {
    assert_eq!(
        a.ncols(),
        c.len(),
        "objective length must equal column count"
    );
    assert_eq!(a.nrows(), b.len(), "rhs length must equal row count");
    if a.nrows() == 0 {
        return if c.amax() == 0.0 {
            LpOutcome::Optimal {
                x: DVector::zeros(c.len()),
                value: 0.0,
            }
        } else {
            LpOutcome::Unbounded
        };
    }
    let sol = solve_standard(&a.transpose(), c, b);
    match sol.status {
        StdStatus::Optimal => {
            let x = sol
                .multipliers
                .expect("optimal solution carries multipliers");
            let value = c.dot(&x);
            LpOutcome::Optimal { x, value }
        }
        // Dual unbounded: primal infeasible.
        StdStatus::Unbounded => LpOutcome::Infeasible,
        // Dual infeasible: primal is unbounded or infeasible.
        StdStatus::Infeasible => {
            if chebyshev_center(a, b).is_some_and(|(_, r)| r >= -LP_TOL) {
                LpOutcome::Unbounded
            } else {
                LpOutcome::Infeasible
            }
        }
        StdStatus::IterationLimit => LpOutcome::Infeasible,
    }
}

/// Centre and radius of the largest ball inside `{x : A x ≤ b}`, with the
/// radius capped at 1. A negative radius means the set is empty; its
/// magnitude is the smallest uniform (norm-scaled) relaxation that makes it
/// nonempty. Returns `None` only on solver breakdown.
pub fn chebyshev_center(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let m = a.nrows();
    let n = a.ncols();
    let mut ext = DMatrix::zeros(m + 1, n + 1);
    let mut rhs = DVector::zeros(m + 1);
    for i in 0..m {
        let row = a.row(i);
        let nrm = row.norm();
        for j in 0..n {
            ext[(i, j)] = row[j];
        }
        ext[(i, n)] = nrm;
        rhs[i] = b[i];
    }
    ext[(m, n)] = 1.0;
    rhs[m] = 1.0;
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    // The dual of this problem is always feasible (y = e_{m+1}).
    let sol = solve_standard(&ext.transpose(), &c, &rhs);
    if sol.status != StdStatus::Optimal {
        return None;
    }
    let z = sol.multipliers?;
    let x = z.rows(0, n).into_owned();
    Some((x, z[n]))
}

/// Whether `{x : A x ≤ b}` is nonempty, up to `LP_TOL` constraint slack.
pub fn is_feasible(a: &DMatrix<f64>, b: &DVector<f64>) -> bool {
    if a.nrows() == 0 {
        return true;
    }
    chebyshev_center(a, b).is_some_and(|(_, r)| r >= -LP_TOL)
}
