//! Vertex enumeration: combinatorial active sets for small blocks, double
//! description for larger ones.
//!
//! Coordinates that share no constraint are split into independent blocks
//! first; the vertex set is the Cartesian product of the block vertex sets.

use nalgebra::{DMatrix, DVector};

use super::{HPolytope, TOL_FEAS, TOL_MERGE};
use crate::error::{Error, Result};

/// Blocks up to this dimension use the combinatorial method.
const COMBINATORIAL_MAX_DIM: usize = 3;
const DD_ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct VPolytope {
    pub vertices: Vec<DVector<f64>>,
    /// The source set has empty interior.
    pub lower_dimensional: bool,
}

impl VPolytope {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn centroid(&self) -> Option<DVector<f64>> {
        let first = self.vertices.first()?;
        let mut c = DVector::zeros(first.len());
        for v in &self.vertices {
            c += v;
        }
        Some(c / self.vertices.len() as f64)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.vertices
            .iter()
            .map(|v| v.iter().copied().collect())
            .collect()
    }
}

fn push_unique(out: &mut Vec<DVector<f64>>, v: DVector<f64>) {
    let scale = 1.0 + v.amax();
    if !out.iter().any(|u| (u - &v).amax() <= TOL_MERGE * scale) {
        out.push(v);
    }
}

/// Connected components of columns linked through shared rows.
fn column_blocks(e: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let p = e.ncols();
    let mut parent: Vec<usize> = (0..p).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut k = i;
        while parent[k] != r {
            let next = parent[k];
            parent[k] = r;
            k = next;
        }
        r
    }
    for i in 0..e.nrows() {
        let support: Vec<usize> = (0..p).filter(|&j| e[(i, j)] != 0.0).collect();
        for w in support.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of: Vec<Option<usize>> = vec![None; p];
    for j in 0..p {
        let r = find(&mut parent, j);
        match root_of[r] {
            Some(g) => groups[g].push(j),
            None => {
                root_of[r] = Some(groups.len());
                groups.push(vec![j]);
            }
        }
    }
    groups
}

/// Rows touching only `cols`, restricted to those columns.
fn block_system(poly: &HPolytope, cols: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let rows: Vec<usize> = (0..poly.num_constraints())
        .filter(|&i| cols.iter().any(|&j| poly.e()[(i, j)] != 0.0))
        .collect();
    let e = DMatrix::from_fn(rows.len(), cols.len(), |i, j| poly.e()[(rows[i], cols[j])]);
    let b = DVector::from_fn(rows.len(), |i, _| poly.b()[rows[i]]);
    (e, b)
}

fn feasible(e: &DMatrix<f64>, b: &DVector<f64>, v: &DVector<f64>) -> bool {
    let tol = TOL_FEAS * (1.0 + b.amax().max(v.amax()));
    (e * v - b).iter().all(|&r| r <= tol)
}

fn next_subset(idx: &mut [usize], m: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < m - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Solves every nonsingular `p×p` active set and keeps the feasible points.
fn combinatorial(e: &DMatrix<f64>, b: &DVector<f64>) -> Vec<DVector<f64>> {
    let (m, p) = e.shape();
    let mut out = Vec::new();
    if m < p {
        return out;
    }
    let mut idx: Vec<usize> = (0..p).collect();
    loop {
        let sub = DMatrix::from_fn(p, p, |i, j| e[(idx[i], j)]);
        let rhs = DVector::from_fn(p, |i, _| b[idx[i]]);
        let sv = sub.clone().singular_values();
        if sv.min() > 1e-10 * sv.max().max(1.0) {
            if let Some(v) = sub.lu().solve(&rhs) {
                if feasible(e, b, &v) {
                    push_unique(&mut out, v);
                }
            }
        }
        if !next_subset(&mut idx, m) {
            break;
        }
    }
    out
}

#[derive(Clone)]
struct Ray {
    v: DVector<f64>,
    zero: Vec<u64>,
}

fn bit_set(bits: &mut [u64], i: usize) {
    bits[i / 64] |= 1 << (i % 64);
}

fn is_subset(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x & !y == 0)
}

fn popcount(a: &[u64]) -> u32 {
    a.iter().map(|w| w.count_ones()).sum()
}

/// Double description on the homogenized cone `{(t, θ) : bt − Eθ ≥ 0, t ≥ 0}`.
fn double_description(e: &DMatrix<f64>, b: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let (m, p) = e.shape();
    let d = p + 1;
    // Row 0 is t ≥ 0; row i+1 is b_i t − E_i θ ≥ 0.
    let h = DMatrix::from_fn(m + 1, d, |i, j| match (i, j) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        (i, 0) => b[i - 1],
        (i, j) => -e[(i - 1, j - 1)],
    });
    let words = (m + 1).div_ceil(64);

    // Greedy choice of d independent rows for the initial simplicial cone.
    let mut basis: Vec<usize> = Vec::with_capacity(d);
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(d);
    for i in 0..=m {
        let mut r = h.row(i).transpose();
        let n0 = r.norm();
        for u in &q {
            let c = u.dot(&r);
            r -= u * c;
        }
        if r.norm() > 1e-9 * n0.max(1e-300) {
            let n = r.norm();
            q.push(r / n);
            basis.push(i);
            if basis.len() == d {
                break;
            }
        }
    }
    if basis.len() < d {
        return Err(Error::Contract(
            "vertex enumeration needs a bounded polytope".into(),
        ));
    }
    let hs = DMatrix::from_fn(d, d, |i, j| h[(basis[i], j)]);
    let inv = hs
        .try_inverse()
        .ok_or_else(|| Error::Numerical("initial cone basis is singular".into()))?;
    let mut rays: Vec<Ray> = (0..d)
        .map(|j| {
            let v = inv.column(j).into_owned();
            let n = v.norm();
            let mut zero = vec![0u64; words];
            for (i, &bi) in basis.iter().enumerate() {
                if i != j {
                    bit_set(&mut zero, bi);
                }
            }
            Ray { v: v / n, zero }
        })
        .collect();

    for c in 0..=m {
        if basis.contains(&c) {
            continue;
        }
        let hc = h.row(c).transpose();
        let hn = hc.norm();
        let vals: Vec<f64> = rays.iter().map(|r| hc.dot(&r.v)).collect();
        let tol = DD_ZERO_TOL * hn;
        let plus: Vec<usize> = (0..rays.len()).filter(|&k| vals[k] > tol).collect();
        let minus: Vec<usize> = (0..rays.len()).filter(|&k| vals[k] < -tol).collect();
        if minus.is_empty() {
            for (k, r) in rays.iter_mut().enumerate() {
                if vals[k].abs() <= tol {
                    bit_set(&mut r.zero, c);
                }
            }
            continue;
        }
        let mut fresh: Vec<Ray> = Vec::new();
        let mut common = vec![0u64; words];
        for &ip in &plus {
            for &im in &minus {
                for (w, (x, y)) in common
                    .iter_mut()
                    .zip(rays[ip].zero.iter().zip(&rays[im].zero))
                {
                    *w = x & y;
                }
                if (popcount(&common) as usize) + 2 < d {
                    continue;
                }
                let adjacent = !rays
                    .iter()
                    .enumerate()
                    .any(|(k, r)| k != ip && k != im && is_subset(&common, &r.zero));
                if !adjacent {
                    continue;
                }
                let v = &rays[im].v * vals[ip] - &rays[ip].v * vals[im];
                let n = v.norm();
                if !(n > 0.0) {
                    continue;
                }
                let mut zero = common.clone();
                bit_set(&mut zero, c);
                fresh.push(Ray { v: v / n, zero });
            }
        }
        let mut kept: Vec<Ray> = Vec::with_capacity(rays.len() + fresh.len());
        for (k, mut r) in rays.into_iter().enumerate() {
            if vals[k] < -tol {
                continue;
            }
            if vals[k] <= tol {
                bit_set(&mut r.zero, c);
            }
            kept.push(r);
        }
        kept.extend(fresh);
        rays = kept;
    }

    let mut out = Vec::new();
    for r in rays {
        if r.v[0] <= DD_ZERO_TOL {
            return Err(Error::Contract(
                "vertex enumeration needs a bounded polytope".into(),
            ));
        }
        let v = r.v.rows(1, p).into_owned() / r.v[0];
        if feasible(e, b, &v) {
            push_unique(&mut out, v);
        }
    }
    Ok(out)
}

fn block_vertices(e: &DMatrix<f64>, b: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let p = e.ncols();
    if p == 1 {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for i in 0..e.nrows() {
            let a = e[(i, 0)];
            if a > 0.0 {
                hi = hi.min(b[i] / a);
            } else if a < 0.0 {
                lo = lo.max(b[i] / a);
            }
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Contract(
                "vertex enumeration needs a bounded polytope".into(),
            ));
        }
        let mut out = vec![DVector::from_element(1, lo)];
        push_unique(&mut out, DVector::from_element(1, hi.max(lo)));
        return Ok(out);
    }
    if p <= COMBINATORIAL_MAX_DIM {
        Ok(combinatorial(e, b))
    } else {
        double_description(e, b)
    }
}

/// Independent coordinate blocks with their restricted systems.
pub(crate) fn column_blocks_of(poly: &HPolytope) -> Vec<(Vec<usize>, DMatrix<f64>, DVector<f64>)> {
    column_blocks(poly.e())
        .into_iter()
        .map(|cols| {
            let (e, b) = block_system(poly, &cols);
            (cols, e, b)
        })
        .collect()
}

/// Exact vertex set of a bounded, nonempty polytope.
pub fn enumerate_vertices(poly: &HPolytope) -> Result<VPolytope> {
    let radius = match poly.chebyshev_center() {
        Some((_, r)) => r,
        None => {
            return Err(Error::Infeasible(
                "cannot enumerate vertices of an empty polytope".into(),
            ))
        }
    };
    if !poly.is_bounded() {
        return Err(Error::Contract(
            "vertex enumeration needs a bounded polytope".into(),
        ));
    }
    let p = poly.dim();
    let mut vertices: Vec<DVector<f64>> = vec![DVector::zeros(p)];
    for (cols, e, b) in column_blocks_of(poly) {
        let local = block_vertices(&e, &b)?;
        if local.is_empty() {
            return Err(Error::Numerical(
                "vertex enumeration found no vertex".into(),
            ));
        }
        let mut next = Vec::with_capacity(vertices.len() * local.len());
        for v in &vertices {
            for l in &local {
                let mut w = v.clone();
                for (k, &j) in cols.iter().enumerate() {
                    w[j] = l[k];
                }
                next.push(w);
            }
        }
        vertices = next;
    }
    Ok(VPolytope {
        vertices,
        lower_dimensional: radius <= TOL_MERGE,
    })
}
