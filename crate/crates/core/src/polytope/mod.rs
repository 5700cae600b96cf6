//! Convex polytopes over the masked adversary parameters.
//!
//! Rows of an [`HPolytope`] are stored with unit-norm normals, so LP values
//! and tolerances are distances.

mod vertices;
mod volume;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lp::{self, LpOutcome};

pub use vertices::{enumerate_vertices, VPolytope};
pub use volume::{monte_carlo_volume, VolumeEstimate, MC_SAMPLES};

/// A new row is kept only if it cuts deeper than this into the current set.
pub const TOL_RED: f64 = 1e-9;
/// Vertices closer than this are merged.
pub const TOL_MERGE: f64 = 1e-9;
/// Feasibility slack used when filtering vertex candidates.
pub const TOL_FEAS: f64 = 1e-9;

/// `{θ : Eθ ≤ b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    e: DMatrix<f64>,
    b: DVector<f64>,
}

impl HPolytope {
    /// Builds the polytope, normalizing every row. Zero rows are rejected.
    pub fn new(e: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if e.nrows() != b.len() {
            return Err(Error::Input("E and b have different row counts".into()));
        }
        if e.ncols() == 0 {
            return Err(Error::Input("polytope dimension must be positive".into()));
        }
        let mut e = e;
        let mut b = b;
        for i in 0..e.nrows() {
            let n = e.row(i).norm();
            if !(n > 0.0) || !n.is_finite() || !b[i].is_finite() {
                return Err(Error::Input(format!(
                    "constraint row {i} is zero or not finite"
                )));
            }
            e.row_mut(i).scale_mut(1.0 / n);
            b[i] /= n;
        }
        Ok(HPolytope { e, b })
    }

    /// Axis-aligned box `lower ≤ θ ≤ upper`.
    pub fn from_box(lower: &DVector<f64>, upper: &DVector<f64>) -> Result<Self> {
        let p = lower.len();
        if upper.len() != p || p == 0 {
            return Err(Error::Input(
                "box bounds must have equal positive length".into(),
            ));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(Error::Input("box lower bound exceeds upper bound".into()));
        }
        let mut e = DMatrix::zeros(2 * p, p);
        let mut b = DVector::zeros(2 * p);
        for i in 0..p {
            e[(2 * i, i)] = 1.0;
            b[2 * i] = upper[i];
            e[(2 * i + 1, i)] = -1.0;
            b[2 * i + 1] = -lower[i];
        }
        Self::new(e, b)
    }

    pub fn dim(&self) -> usize {
        self.e.ncols()
    }

    pub fn num_constraints(&self) -> usize {
        self.e.nrows()
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn contains(&self, theta: &DVector<f64>, tol: f64) -> bool {
        (&self.e * theta - &self.b).iter().all(|&v| v <= tol)
    }

    /// Largest violation `max_i (E_i θ − b_i)`; nonpositive inside.
    pub fn max_violation(&self, theta: &DVector<f64>) -> f64 {
        (&self.e * theta - &self.b).max()
    }

    pub fn is_empty(&self) -> bool {
        !lp::is_feasible(&self.e, &self.b)
    }

    /// Chebyshev centre and inradius, or `None` when empty.
    pub fn chebyshev_center(&self) -> Option<(DVector<f64>, f64)> {
        lp::chebyshev_center(&self.e, &self.b).filter(|(_, r)| *r >= -lp::LP_TOL)
    }

    /// Intersects with `{θ : E_new θ ≤ b_new}`. With `prune`, only rows that
    /// cut the current set are inserted, and stored rows made redundant by
    /// them are dropped afterwards.
    pub fn add_halfspaces(
        &self,
        e_new: &DMatrix<f64>,
        b_new: &DVector<f64>,
        prune: bool,
    ) -> Result<HPolytope> {
        if e_new.ncols() != self.dim() {
            return Err(Error::Input(format!(
                "new constraints have {} columns, polytope dimension is {}",
                e_new.ncols(),
                self.dim()
            )));
        }
        let incoming = HPolytope::new(e_new.clone(), b_new.clone())?;
        let mut rows: Vec<(DVector<f64>, f64)> = self.rows().collect();
        let base = rows.len();
        if !prune {
            rows.extend(incoming.rows());
            let out = Self::from_row_list(self.dim(), &rows);
            if out.is_empty() {
                return Err(Error::Infeasible(
                    "intersection with new constraints is empty".into(),
                ));
            }
            return Ok(out);
        }
        let mut added = 0;
        for (a, beta) in incoming.rows() {
            let current = Self::from_row_list(self.dim(), &rows);
            match lp::maximize(&a, &current.e, &current.b) {
                LpOutcome::Optimal { value, .. } if value <= beta + TOL_RED => {}
                LpOutcome::Infeasible => {
                    return Err(Error::Infeasible("polytope became empty".into()));
                }
                _ => {
                    rows.push((a, beta));
                    added += 1;
                }
            }
        }
        let mut out = Self::from_row_list(self.dim(), &rows);
        if out.is_empty() {
            return Err(Error::Infeasible(
                "intersection with new constraints is empty".into(),
            ));
        }
        if added > 0 {
            out = out.remove_redundant(0..base);
        }
        Ok(out)
    }

    /// Drops rows among `candidates` that are implied by the remaining ones.
    pub fn remove_redundant(&self, candidates: std::ops::Range<usize>) -> HPolytope {
        let mut keep = vec![true; self.num_constraints()];
        for i in candidates {
            keep[i] = false;
            let others: Vec<(DVector<f64>, f64)> = self
                .rows()
                .enumerate()
                .filter(|(k, _)| keep[*k])
                .map(|(_, r)| r)
                .collect();
            if others.is_empty() {
                keep[i] = true;
                continue;
            }
            let rest = Self::from_row_list(self.dim(), &others);
            let row = self.e.row(i).transpose();
            keep[i] = match lp::maximize(&row, &rest.e, &rest.b) {
                LpOutcome::Optimal { value, .. } => value > self.b[i] + TOL_RED,
                _ => true,
            };
        }
        let rows: Vec<_> = self
            .rows()
            .enumerate()
            .filter(|(k, _)| keep[*k])
            .map(|(_, r)| r)
            .collect();
        Self::from_row_list(self.dim(), &rows)
    }

    /// True iff `±e_i·θ` is bounded above on the set for every axis.
    pub fn is_bounded(&self) -> bool {
        let p = self.dim();
        for i in 0..p {
            for s in [1.0, -1.0] {
                let mut c = DVector::zeros(p);
                c[i] = s;
                if matches!(lp::maximize(&c, &self.e, &self.b), LpOutcome::Unbounded) {
                    return false;
                }
            }
        }
        true
    }

    pub fn rows(&self) -> impl Iterator<Item = (DVector<f64>, f64)> + '_ {
        (0..self.num_constraints()).map(move |i| (self.e.row(i).transpose(), self.b[i]))
    }

    fn from_row_list(p: usize, rows: &[(DVector<f64>, f64)]) -> HPolytope {
        let mut e = DMatrix::zeros(rows.len(), p);
        let mut b = DVector::zeros(rows.len());
        for (i, (a, beta)) in rows.iter().enumerate() {
            e.row_mut(i).copy_from(&a.transpose());
            b[i] = *beta;
        }
        HPolytope { e, b }
    }

    pub fn to_record(&self) -> HPolytopeRecord {
        HPolytopeRecord {
            e: linalg::to_rows(&self.e),
            b: self.b.iter().copied().collect(),
        }
    }

    pub fn from_record(r: &HPolytopeRecord) -> Result<Self> {
        let e = linalg::from_rows(&r.e)?;
        Self::new(e, DVector::from_vec(r.b.clone()))
    }
}

/// Data test: the polytope built from these regressors is
/// bounded iff they span the state space.
pub fn is_bounded_by_data(states: &[DVector<f64>]) -> bool {
    let Some(first) = states.first() else {
        return false;
    };
    let nx = first.len();
    let m = DMatrix::from_columns(states);
    linalg::numerical_rank(&m, 1e-8) == nx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HPolytopeRecord {
    #[serde(rename = "E")]
    pub e: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}
