//! Primal-dual interior-point solver for small block-diagonal LMI problems.
//!
//! Solves `min cᵀy  s.t.  F_b(y) = F_b0 + Σ_i y_i F_bi ⪰ 0` for every block `b`.
//! Internally this is the dual form `max -cᵀy, Z = C - Σ y_i A_i ⪰ 0` with
//! `C = F0`, `A_i = -F_i`; the primal partner is
//! `min <C, X>  s.t.  <A_i, X> = -c_i, X ⪰ 0`.
//!
//! Search directions are HKM with Mehrotra predictor-corrector steps from an
//! infeasible start. Each block stores only the variables that touch it, so
//! problems with thousands of small vertex blocks stay cheap.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{frob_dot, symmetrize};

/// Accuracy at which an iterate is kept as a fallback answer.
const FALLBACK_TOL: f64 = 1e-7;
const BACKTRACK_STEPS: usize = 40;
const BACKTRACK_FACTOR: f64 = 0.7;
const MIN_STEP: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub f0: DMatrix<f64>,
    /// `(variable index, coefficient matrix)`; coefficients must be symmetric.
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

impl LmiBlock {
    pub fn dim(&self) -> usize {
        self.f0.nrows()
    }

    pub fn evaluate(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.f0.clone();
        for (i, f) in &self.terms {
            m += f * y[*i];
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct LmiProblem {
    pub c: DVector<f64>,
    pub blocks: Vec<LmiBlock>,
}

#[derive(Debug, Clone, Copy)]
pub struct SdpSettings {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iters: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SdpSettings {
    fn default() -> Self {
        SdpSettings {
            gap_tol: 1e-9,
            feas_tol: 1e-9,
            max_iters: 120,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpResult {
    pub y: DVector<f64>,
    pub objective: f64,
    /// Relative primal-dual objective gap at termination.
    pub gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
}

struct Block<'a> {
    lmi: &'a LmiBlock,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
}

/// Largest `α ≤ 1` with `M + α D ⪰ 0` scaled by `fraction`; `M` must be PD.
fn max_step(m: &DMatrix<f64>, d: &DMatrix<f64>, fraction: f64) -> f64 {
    let Some(ch) = Cholesky::new(m.clone()) else {
        return 0.0;
    };
    let l = ch.l();
    let linv = match l.clone().try_inverse() {
        Some(v) => v,
        None => return 0.0,
    };
    let s = symmetrize(&(&linv * d * linv.transpose()));
    let lmin = s.symmetric_eigenvalues().min();
    if lmin >= 0.0 {
        1.0
    } else {
        (fraction * (-1.0 / lmin)).min(1.0)
    }
}

pub fn solve(problem: &LmiProblem, settings: &SdpSettings) -> Result<SdpResult> {
    let m = problem.c.len();
    let n_total: usize = problem.blocks.iter().map(LmiBlock::dim).sum();
    if n_total == 0 {
        return Err(Error::Input("LMI problem has no blocks".into()));
    }
    let b = -&problem.c;
    let norm_b = b.norm();
    let norm_c: f64 = problem
        .blocks
        .iter()
        .map(|bl| bl.f0.norm_squared())
        .sum::<f64>()
        .sqrt();

    let mut a_norm = vec![0.0f64; m];
    for bl in &problem.blocks {
        for (i, f) in &bl.terms {
            a_norm[*i] += f.norm_squared();
        }
    }
    for v in a_norm.iter_mut() {
        *v = v.sqrt();
    }
    if a_norm.iter().any(|&v| v == 0.0) {
        return Err(Error::Input("an LMI variable appears in no block".into()));
    }
    let sqrt_n = (n_total as f64).sqrt();
    let xi = (0..m)
        .map(|i| (1.0 + b[i].abs()) / (1.0 + a_norm[i]))
        .fold(10.0f64.max(sqrt_n), f64::max);
    let eta = a_norm
        .iter()
        .copied()
        .fold(10.0f64.max(sqrt_n).max(norm_c), f64::max);

    let mut blocks: Vec<Block> = problem
        .blocks
        .iter()
        .map(|lmi| {
            let k = lmi.dim();
            Block {
                lmi,
                x: DMatrix::identity(k, k) * xi,
                z: DMatrix::identity(k, k) * eta,
            }
        })
        .collect();
    let mut y = DVector::zeros(m);
    let mut best: Option<SdpResult> = None;

    for iter in 0..settings.max_iters {
        // Residuals.
        let mut ax = DVector::zeros(m);
        let mut rd: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
        let mut rd_norm2 = 0.0;
        let mut xz = 0.0;
        let mut pobj = 0.0;
        for bl in &blocks {
            // C - Σ y_i A_i - Z = F0 + Σ y_i F_i - Z
            let r = bl.lmi.evaluate(&y) - &bl.z;
            rd_norm2 += r.norm_squared();
            rd.push(r);
            for (i, f) in &bl.lmi.terms {
                ax[*i] -= frob_dot(f, &bl.x);
            }
            xz += frob_dot(&bl.x, &bl.z);
            pobj += frob_dot(&bl.lmi.f0, &bl.x);
        }
        let rp = &b - &ax;
        let dobj = b.dot(&y);
        let mu = xz / n_total as f64;
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let pinf = rp.norm() / (1.0 + norm_b);
        let dinf = rd_norm2.sqrt() / (1.0 + norm_c);

        if gap <= settings.gap_tol && pinf <= settings.feas_tol && dinf <= settings.feas_tol {
            return Ok(SdpResult {
                objective: problem.c.dot(&y),
                y,
                gap,
                primal_infeasibility: pinf,
                dual_infeasibility: dinf,
                iterations: iter,
            });
        }
        // Fallback if later iterations break down numerically.
        if gap <= FALLBACK_TOL && pinf <= FALLBACK_TOL && dinf <= FALLBACK_TOL {
            let better = best.as_ref().is_none_or(|b: &SdpResult| {
                gap.max(pinf).max(dinf)
                    < b.gap.max(b.primal_infeasibility).max(b.dual_infeasibility)
            });
            if better {
                best = Some(SdpResult {
                    objective: problem.c.dot(&y),
                    y: y.clone(),
                    gap,
                    primal_infeasibility: pinf,
                    dual_infeasibility: dinf,
                    iterations: iter,
                });
            }
        }

        // Certificate of infeasibility of the LMI: X ⪰ 0, A(X) ≈ 0, <C, X> < 0.
        let tr_x: f64 = blocks.iter().map(|bl| bl.x.trace()).sum();
        if tr_x > 1e6 && pobj < 0.0 {
            let norm_ax = ax.norm() / tr_x;
            if -pobj / tr_x > 1e-6 && norm_ax < 1e-3 * (-pobj / tr_x) {
                return Err(Error::RobustInfeasible(format!(
                    "LMI system infeasible (Farkas certificate: <C,X>/tr X = {:.3e}, |A(X)|/tr X = {:.3e})",
                    pobj / tr_x,
                    norm_ax
                )));
            }
        }
        if !(pobj.is_finite() && dobj.is_finite()) {
            return Err(Error::Numerical("non-finite SDP iterate".into()));
        }

        // Schur complement M_ij = Σ_b Tr(A_i X A_j Z⁻¹).
        let mut zinv: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
        let mut schur = DMatrix::zeros(m, m);
        for bl in &blocks {
            let zi = match bl.z.clone().cholesky() {
                Some(ch) => symmetrize(&ch.inverse()),
                None => return Err(Error::Numerical("dual slack lost definiteness".into())),
            };
            let g: Vec<DMatrix<f64>> = bl.lmi.terms.iter().map(|(_, f)| &bl.x * f * &zi).collect();
            for (p, (i, fi)) in bl.lmi.terms.iter().enumerate() {
                for (q, (j, _)) in bl.lmi.terms.iter().enumerate().skip(p) {
                    // A_i = -F_i, so the two signs cancel.
                    let v = fi.component_mul(&g[q].transpose()).sum();
                    schur[(*i, *j)] += v;
                    if p != q {
                        schur[(*j, *i)] += v;
                    }
                }
            }
            zinv.push(zi);
        }
        let schur = symmetrize(&schur);
        let chol = match schur.clone().cholesky() {
            Some(c) => c,
            None => {
                let mut reg = schur.clone();
                let shift = 1e-12 * (1.0 + schur.diagonal().amax());
                for k in 0..m {
                    reg[(k, k)] += shift;
                }
                reg.cholesky().ok_or_else(|| {
                    Error::Numerical("Schur complement is not positive definite".into())
                })?
            }
        };

        // Direction for a given complementarity target H (ΔX = H Z⁻¹ - X ΔZ Z⁻¹).
        let direction = |h: &[DMatrix<f64>],
                         blocks: &[Block]|
         -> (DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
            let mut rhs = rp.clone();
            let mut base: Vec<DMatrix<f64>> = Vec::with_capacity(blocks.len());
            for (k, bl) in blocks.iter().enumerate() {
                let t = (&h[k] - &bl.x * &rd[k]) * &zinv[k];
                for (i, f) in &bl.lmi.terms {
                    // rhs_i = rp_i - <A_i, T> = rp_i + <F_i, T>
                    rhs[*i] += frob_dot(f, &t);
                }
                base.push(t);
            }
            let dy = chol.solve(&rhs);
            let mut dxs = Vec::with_capacity(blocks.len());
            let mut dzs = Vec::with_capacity(blocks.len());
            for (k, bl) in blocks.iter().enumerate() {
                // ΔZ = Rd - Σ Δy_j A_j = Rd + Σ Δy_j F_j
                let mut dz = rd[k].clone();
                for (j, f) in &bl.lmi.terms {
                    dz += f * dy[*j];
                }
                let dx = &base[k] - &bl.x * &dz * &zinv[k] + &bl.x * &rd[k] * &zinv[k];
                dxs.push(symmetrize(&dx));
                dzs.push(symmetrize(&dz));
            }
            (dy, dxs, dzs)
        };

        let step_lengths = |dxs: &[DMatrix<f64>], dzs: &[DMatrix<f64>], blocks: &[Block]| {
            let mut ap: f64 = 1.0;
            let mut ad: f64 = 1.0;
            for (k, bl) in blocks.iter().enumerate() {
                ap = ap.min(max_step(&bl.x, &dxs[k], settings.step_fraction));
                ad = ad.min(max_step(&bl.z, &dzs[k], settings.step_fraction));
            }
            (ap, ad)
        };

        // Predictor.
        let h_aff: Vec<DMatrix<f64>> = blocks.iter().map(|bl| -(&bl.x * &bl.z)).collect();
        let (_, dx_a, dz_a) = direction(&h_aff, &blocks);
        let (ap_a, ad_a) = step_lengths(&dx_a, &dz_a, &blocks);
        let mut xz_aff = 0.0;
        for (k, bl) in blocks.iter().enumerate() {
            let xn = &bl.x + &dx_a[k] * ap_a;
            let zn = &bl.z + &dz_a[k] * ad_a;
            xz_aff += frob_dot(&xn, &zn);
        }
        let mu_aff = xz_aff / n_total as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let h_cor: Vec<DMatrix<f64>> = blocks
            .iter()
            .enumerate()
            .map(|(k, bl)| {
                let k_dim = bl.x.nrows();
                DMatrix::identity(k_dim, k_dim) * (sigma * mu) - &bl.x * &bl.z - &dx_a[k] * &dz_a[k]
            })
            .collect();
        let (dy, dx, dz) = direction(&h_cor, &blocks);
        let (mut ap, mut ad) = step_lengths(&dx, &dz, &blocks);
        // Rounding can leave a boundary step marginally indefinite; shorten it until
        // every block factors.
        let new_x = |a: f64, blocks: &[Block]| -> Option<Vec<DMatrix<f64>>> {
            blocks
                .iter()
                .enumerate()
                .map(|(k, bl)| {
                    let m = symmetrize(&(&bl.x + &dx[k] * a));
                    m.clone().cholesky().map(|_| m)
                })
                .collect()
        };
        let new_z = |a: f64, blocks: &[Block]| -> Option<Vec<DMatrix<f64>>> {
            blocks
                .iter()
                .enumerate()
                .map(|(k, bl)| {
                    let m = symmetrize(&(&bl.z + &dz[k] * a));
                    m.clone().cholesky().map(|_| m)
                })
                .collect()
        };
        let mut xs = None;
        for _ in 0..BACKTRACK_STEPS {
            xs = new_x(ap, &blocks);
            if xs.is_some() {
                break;
            }
            ap *= BACKTRACK_FACTOR;
        }
        let mut zs = None;
        for _ in 0..BACKTRACK_STEPS {
            zs = new_z(ad, &blocks);
            if zs.is_some() {
                break;
            }
            ad *= BACKTRACK_FACTOR;
        }
        let (Some(xs), Some(zs)) = (xs, zs) else {
            return best.ok_or_else(|| {
                Error::Numerical(format!(
                    "interior-point step lost definiteness at iteration {iter} (gap {gap:.2e}, pinf {pinf:.2e}, dinf {dinf:.2e})"
                ))
            });
        };
        if ap < MIN_STEP && ad < MIN_STEP {
            return best.ok_or_else(|| {
                Error::Numerical(format!(
                    "interior-point iteration stalled at iteration {iter} (gap {gap:.2e}, pinf {pinf:.2e}, dinf {dinf:.2e})"
                ))
            });
        }
        for ((bl, x), z) in blocks.iter_mut().zip(xs).zip(zs) {
            bl.x = x;
            bl.z = z;
        }
        y += dy * ad;
    }
    best.ok_or(Error::Convergence {
        iterations: settings.max_iters,
        detail: "interior-point method did not reach the requested accuracy".into(),
    })
}
