//! Set-membership identification of the adversary policy, the least-squares
//! baseline, and the per-row optimal bounding ellipsoid monitor.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{DisturbanceBox, ParamMask};
use crate::polytope::{enumerate_vertices, HPolytope, VPolytope};
use crate::sim::Sample;

/// Regressor rows with a smaller norm carry no information about the parameters.
const ZERO_ROW: f64 = 1e-14;
const LS_RIDGE: f64 = 1e-10;
/// Upper cap on the DH mixing weight; must stay below 1.
pub const OBE_ALPHA: f64 = 0.999;

/// `ẋ − A x − B1 u1`: the part of the derivative driven by the adversary
/// policy and the lumped disturbance.
pub fn innovation(s: &Sample, a: &DMatrix<f64>, b1: &DMatrix<f64>) -> DVector<f64> {
    &s.xdot - a * &s.x - b1 * &s.u1
}

/// `E_k θ ≤ b_k` with `E_k = (x_kᵀ ⊗ Gw)` on the masked columns and
/// `b_k = gw − Gw(ẋ_k − A x_k − B1 u1,k)`.
pub fn constraints_from_sample(
    s: &Sample,
    a: &DMatrix<f64>,
    b1: &DMatrix<f64>,
    dbox: &DisturbanceBox,
    mask: &ParamMask,
) -> (DMatrix<f64>, DVector<f64>) {
    let m = dbox.gw.nrows();
    let e = DMatrix::from_fn(m, mask.len(), |row, k| {
        let (r, c) = mask.entries()[k];
        s.x[c] * dbox.gw[(row, r)]
    });
    let b = &dbox.g - &dbox.gw * innovation(s, a, b1);
    (e, b)
}

#[derive(Debug, Clone)]
pub struct OmegaSet {
    pub hrep: HPolytope,
    vrep_cache: Option<VPolytope>,
    pub iteration: usize,
    /// Whether the last update inserted a non-redundant constraint.
    pub changed: bool,
}

impl OmegaSet {
    pub fn new(hrep: HPolytope) -> Self {
        OmegaSet {
            hrep,
            vrep_cache: None,
            iteration: 0,
            changed: true,
        }
    }

    pub fn vertices(&self) -> Option<&VPolytope> {
        self.vrep_cache.as_ref()
    }

    /// Enumerates and caches the vertex set if needed.
    pub fn ensure_vertices(&mut self) -> Result<&VPolytope> {
        if self.vrep_cache.is_none() {
            self.vrep_cache = Some(enumerate_vertices(&self.hrep)?);
        }
        Ok(self.vrep_cache.as_ref().expect("cache filled above"))
    }

    pub fn contains(&self, theta: &DVector<f64>, tol: f64) -> bool {
        self.hrep.contains(theta, tol)
    }

    /// `Ω ← Ω ∩ {θ : E_k θ ≤ b_k ∀k}` with pruning. `first_sample` is the
    /// global index of `batch[0]`, used in falsification errors.
    pub fn update(
        &self,
        batch: &[(DMatrix<f64>, DVector<f64>)],
        first_sample: usize,
    ) -> Result<OmegaSet> {
        let mut hrep = self.hrep.clone();
        for (k, (e, b)) in batch.iter().enumerate() {
            let sample_index = first_sample + k;
            let mut rows = Vec::new();
            for i in 0..e.nrows() {
                if e.row(i).norm() <= ZERO_ROW {
                    if b[i] < -1e-9 {
                        return Err(Error::Falsification {
                            sample_index,
                            reason: format!("zero regressor with negative slack {:.3e}", b[i]),
                        });
                    }
                } else {
                    rows.push(i);
                }
            }
            if rows.is_empty() {
                continue;
            }
            let ek = DMatrix::from_fn(rows.len(), e.ncols(), |i, j| e[(rows[i], j)]);
            let bk = DVector::from_fn(rows.len(), |i, _| b[rows[i]]);
            hrep = hrep.add_halfspaces(&ek, &bk, true).map_err(|err| match err {
                Error::Infeasible(msg) => Error::Falsification {
                    sample_index,
                    reason: format!("unfalsified set became empty ({msg}); the lumped disturbance bound is too small"),
                },
                other => other,
            })?;
        }
        let changed = hrep != self.hrep;
        Ok(OmegaSet {
            vrep_cache: if changed {
                None
            } else {
                self.vrep_cache.clone()
            },
            hrep,
            iteration: self.iteration + 1,
            changed,
        })
    }
}

/// Free function form of [`OmegaSet::update`].
pub fn update_omega(prev: &OmegaSet, batch: &[(DMatrix<f64>, DVector<f64>)]) -> Result<OmegaSet> {
    prev.update(batch, 0)
}

/// Least-squares point estimate of the masked policy parameters.
pub fn least_squares_estimate(
    samples: &[Sample],
    a: &DMatrix<f64>,
    b1: &DMatrix<f64>,
    mask: &ParamMask,
) -> Result<DVector<f64>> {
    let nx = mask.nx();
    let p = mask.len();
    // Stacked (x_kᵀ ⊗ I) θ = −(ẋ − A x − B1 u1).
    let mut phi = DMatrix::zeros(samples.len() * nx, p);
    let mut y = DVector::zeros(samples.len() * nx);
    for (k, s) in samples.iter().enumerate() {
        let inn = innovation(s, a, b1);
        for r in 0..nx {
            y[k * nx + r] = -inn[r];
        }
        for (j, &(r, c)) in mask.entries().iter().enumerate() {
            phi[(k * nx + r, j)] = s.x[c];
        }
    }
    if phi.nrows() < p || linalg::numerical_rank(&phi, 1e-8) < p {
        let detail = if phi.nrows() == 0 {
            "no samples".to_string()
        } else {
            let svd = phi.clone().svd(false, true);
            let vt = svd.v_t.expect("requested right singular vectors");
            let (idx, _) = svd
                .singular_values
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("nonempty");
            format!(
                "unexcited direction {:?}",
                vt.row(idx).iter().collect::<Vec<_>>()
            )
        };
        return Err(Error::Estimation(format!(
            "regressor is rank deficient: {detail}"
        )));
    }
    let normal = phi.transpose() * &phi;
    let rhs = phi.transpose() * y;
    if let Some(ch) = normal.clone().cholesky() {
        return Ok(ch.solve(&rhs));
    }
    let ridge = &normal + DMatrix::identity(p, p) * LS_RIDGE * (1.0 + normal.diagonal().amax());
    linalg::solve_spd(&ridge, &rhs)
        .ok_or_else(|| Error::Estimation("normal equations are singular".into()))
}

/// `{θ : (θ − c)ᵀ S⁻¹ (θ − c) ≤ σ²}` for the parameters of one matrix row.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub sigma2: f64,
    pub row: usize,
}

impl Ellipsoid {
    /// Smallest axis-aligned ellipsoid of this family containing the box
    /// `lower ≤ θ ≤ upper`, normalized to `σ² = γ²`.
    pub fn from_box(
        lower: &DVector<f64>,
        upper: &DVector<f64>,
        gamma: f64,
        row: usize,
    ) -> Result<Self> {
        let p = lower.len();
        if !(gamma > 0.0) {
            return Err(Error::Input("ellipsoid bound must be positive".into()));
        }
        let center = (lower + upper) * 0.5;
        let half = (upper - lower) * 0.5;
        let diag = half.map(|h| (p as f64 * h * h).max(1e-12) / (gamma * gamma));
        Ok(Ellipsoid {
            center,
            shape: DMatrix::from_diagonal(&diag),
            sigma2: gamma * gamma,
            row,
        })
    }

    /// `(θ − c)ᵀ S⁻¹ (θ − c) / σ²`; at most 1 inside.
    pub fn normalized_distance(&self, theta: &DVector<f64>) -> f64 {
        let d = theta - &self.center;
        let sinv = self
            .shape
            .clone()
            .try_inverse()
            .unwrap_or_else(|| self.shape.clone().pseudo_inverse(1e-14).unwrap());
        if self.sigma2 <= 0.0 {
            return if d.amax() == 0.0 { 0.0 } else { f64::INFINITY };
        }
        (d.transpose() * sinv * d)[0] / self.sigma2
    }

    /// Largest semi-axis `σ √λmax(S)`.
    pub fn max_semi_axis(&self) -> f64 {
        (self.sigma2.max(0.0) * linalg::max_eigenvalue_sym(&self.shape)).sqrt()
    }
}

/// One Dasgupta–Huang bounding-ellipsoid step for `y = θᵀx + v`, `|v| ≤ γ`.
pub fn obe_update(e: &Ellipsoid, x: &DVector<f64>, y: f64, gamma: f64) -> Result<Ellipsoid> {
    if !(gamma > 0.0) {
        return Err(Error::Input("OBE bound must be positive".into()));
    }
    let delta = y - e.center.dot(x);
    let px = &e.shape * x;
    let g = x.dot(&px);
    let sigma = e.sigma2.max(0.0).sqrt();
    if delta.abs() > gamma + sigma * g.max(0.0).sqrt() * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::Falsification {
            sample_index: 0,
            reason: format!(
                "data slab misses the ellipsoid of row {} (innovation {delta:.3e})",
                e.row + 1
            ),
        });
    }
    let d2 = delta * delta;
    // No information: the slab already contains the ellipsoid, or it cannot shrink σ².
    if e.sigma2 + d2 <= gamma * gamma
        || delta.abs() + sigma * g.max(0.0).sqrt() <= gamma
        || g <= 0.0
    {
        return Ok(e.clone());
    }
    let beta = (gamma * gamma - e.sigma2) / d2;
    let nu = if (g - 1.0).abs() < 1e-12 {
        (1.0 - beta) / 2.0
    } else if 1.0 + beta * (g - 1.0) <= 0.0 {
        OBE_ALPHA
    } else {
        (1.0 - (g / (1.0 + beta * (g - 1.0))).sqrt()) / (1.0 - g)
    };
    let lambda = OBE_ALPHA.min(nu);
    if !(lambda > 0.0) {
        return Ok(e.clone());
    }
    let den = 1.0 - lambda + lambda * g;
    let shape =
        linalg::symmetrize(&((&e.shape - &px * px.transpose() * (lambda / den)) / (1.0 - lambda)));
    let center = &e.center + &shape * x * (lambda * delta);
    let sigma2 = ((1.0 - lambda) * e.sigma2 + lambda * gamma * gamma
        - lambda * (1.0 - lambda) * d2 / den)
        .max(0.0);
    Ok(Ellipsoid {
        center,
        shape,
        sigma2,
        row: e.row,
    })
}

/// Per-row ellipsoid recursions over the masked parameters.
#[derive(Debug, Clone)]
pub struct ObeMonitor {
    pub ellipsoids: Vec<Ellipsoid>,
    /// Masked-parameter indices of each ellipsoid.
    pub params: Vec<Vec<usize>>,
    pub gamma: Vec<f64>,
}

impl ObeMonitor {
    /// One ellipsoid for every matrix row holding a masked parameter,
    /// initialized around the box `lower ≤ θ ≤ upper`.
    pub fn from_box(
        mask: &ParamMask,
        lower: &DVector<f64>,
        upper: &DVector<f64>,
        gamma: &DVector<f64>,
    ) -> Result<Self> {
        let mut ellipsoids = Vec::new();
        let mut params = Vec::new();
        let mut gam = Vec::new();
        for r in 0..mask.nx() {
            let idx = mask.row_params(r);
            if idx.is_empty() {
                continue;
            }
            let lo = DVector::from_iterator(idx.len(), idx.iter().map(|&k| lower[k]));
            let hi = DVector::from_iterator(idx.len(), idx.iter().map(|&k| upper[k]));
            ellipsoids.push(Ellipsoid::from_box(&lo, &hi, gamma[r], r)?);
            params.push(idx);
            gam.push(gamma[r]);
        }
        Ok(ObeMonitor {
            ellipsoids,
            params,
            gamma: gam,
        })
    }

    /// Absorbs one sample into every row ellipsoid.
    pub fn update(
        &mut self,
        s: &Sample,
        a: &DMatrix<f64>,
        b1: &DMatrix<f64>,
        mask: &ParamMask,
        sample_index: usize,
    ) -> Result<()> {
        let inn = innovation(s, a, b1);
        for (k, e) in self.ellipsoids.iter_mut().enumerate() {
            let idx = &self.params[k];
            let x =
                DVector::from_iterator(idx.len(), idx.iter().map(|&j| s.x[mask.entries()[j].1]));
            // (B2K2)_{r,:} x = −innovation_r + w̃_r
            let y = -inn[e.row];
            *e = obe_update(e, &x, y, self.gamma[k]).map_err(|err| match err {
                Error::Falsification { reason, .. } => Error::Falsification {
                    sample_index,
                    reason,
                },
                other => other,
            })?;
        }
        Ok(())
    }

    /// Whether `theta` (full masked vector) lies in every row ellipsoid.
    pub fn contains(&self, theta: &DVector<f64>, tol: f64) -> bool {
        self.ellipsoids.iter().zip(&self.params).all(|(e, idx)| {
            let t = DVector::from_iterator(idx.len(), idx.iter().map(|&k| theta[k]));
            e.normalized_distance(&t) <= 1.0 + tol
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationReport {
    pub alpha1: f64,
    pub alpha2: f64,
    pub window: usize,
}

/// Extreme eigenvalues of `Σ_k [x_k; w̃_k,i][x_k; w̃_k,i]ᵀ` over the window.
pub fn excitation_metric(
    states: &[DVector<f64>],
    disturbance_i: &[f64],
) -> Result<ExcitationReport> {
    if states.is_empty() || states.len() != disturbance_i.len() {
        return Err(Error::Input(
            "excitation window needs matching, nonempty sequences".into(),
        ));
    }
    let n = states[0].len() + 1;
    let mut m = DMatrix::zeros(n, n);
    for (x, &w) in states.iter().zip(disturbance_i) {
        let phi = DVector::from_iterator(n, x.iter().copied().chain(std::iter::once(w)));
        m += &phi * phi.transpose();
    }
    let eig = linalg::symmetrize(&m).symmetric_eigenvalues();
    Ok(ExcitationReport {
        alpha1: eig.min().max(0.0),
        alpha2: eig.max().max(0.0),
        window: states.len(),
    })
}
