//! ε-Nash certificate for the learned gain from the terminal uncertainty set.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Ellipsoid;
use crate::linalg;
use crate::model::{CostWeights, GameModel, ParamMask};
use crate::riccati::{solve_care, trajectory_gram};

pub const DELTA_METHOD: &str = "vertex-resolve";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCertificate {
    pub gamma: f64,
    pub lambda_max_s: f64,
    pub l_max: f64,
    pub da1_bound: f64,
    /// Bound on `‖K̂1 − K1*‖`: vertex spread plus the offset of `K̂1` from the center gain.
    pub delta: f64,
    pub delta_vertex: f64,
    pub gain_offset: f64,
    pub trace_p1: f64,
    pub epsilon: f64,
    pub delta_method: String,
}

impl EpsilonCertificate {
    /// Recomputes ε from the stored inputs and the given Nash gain.
    pub fn is_consistent(&self, k1_star: &DMatrix<f64>, r1: &DMatrix<f64>) -> bool {
        let e = epsilon_bound(self.delta, k1_star, r1, self.trace_p1);
        let fields = [
            self.gamma,
            self.lambda_max_s,
            self.l_max,
            self.da1_bound,
            self.delta,
            self.trace_p1,
            self.epsilon,
        ];
        fields.iter().all(|&v| v >= 0.0)
            && self.l_max <= self.gamma * self.lambda_max_s.sqrt() * (1.0 + 1e-12)
            && (e - self.epsilon).abs() <= 1e-9 * (1.0 + e.abs())
    }
}

/// `nx · max γ_i · √(max λmax(S_i))`.
pub fn perturbation_bound(ellipsoids: &[Ellipsoid], gamma: &[f64], nx: usize) -> f64 {
    let g = gamma.iter().copied().fold(0.0, f64::max);
    let lam = ellipsoids
        .iter()
        .map(|e| linalg::max_eigenvalue_sym(&e.shape))
        .fold(0.0, f64::max);
    nx as f64 * g * lam.sqrt()
}

/// Policy perturbations over which the best-response gain is re-solved.
pub enum Uncertainty<'a> {
    /// Full `B2K2` matrices at the vertices of Ω.
    Vertices(&'a [DMatrix<f64>]),
    /// `±bound` on each masked entry around the center.
    Scalar { bound: f64, mask: &'a ParamMask },
}

fn best_response(
    a: &DMatrix<f64>,
    b1: &DMatrix<f64>,
    w: &CostWeights,
    policy: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    solve_care(&(a - policy), b1, &w.q, &w.r)
        .map(|s| s.k)
        .map_err(|e| Error::Certificate(format!("perturbed best response is unsolvable ({e}); the uncertainty is too large for a local bound")))
}

/// `max ‖K1(perturbed) − K1(center)‖₂` over the perturbation set.
pub fn delta_gain_bound(
    model: &GameModel,
    w1: &CostWeights,
    center: &DMatrix<f64>,
    uncertainty: Uncertainty<'_>,
) -> Result<f64> {
    let k_center = best_response(&model.a, &model.b1, w1, center)?;
    let policies: Vec<DMatrix<f64>> = match uncertainty {
        Uncertainty::Vertices(v) => v.to_vec(),
        Uncertainty::Scalar { bound, mask } => {
            if bound == 0.0 {
                return Ok(0.0);
            }
            let mut out = Vec::with_capacity(2 * mask.len());
            for &(r, c) in mask.entries() {
                for s in [-1.0, 1.0] {
                    let mut p = center.clone();
                    p[(r, c)] += s * bound;
                    out.push(p);
                }
            }
            out
        }
    };
    let deltas: Vec<Result<f64>> = policies
        .par_iter()
        .map(|p| best_response(&model.a, &model.b1, w1, p).map(|k| linalg::norm2(&(k - &k_center))))
        .collect();
    let mut worst: f64 = 0.0;
    for d in deltas {
        worst = worst.max(d?);
    }
    Ok(worst)
}

/// `(2‖K1*ᵀR1‖δ + ‖R1‖δ²) Tr(P1)` with induced 2-norms.
pub fn epsilon_bound(delta: f64, k1_star: &DMatrix<f64>, r1: &DMatrix<f64>, trace_p1: f64) -> f64 {
    let a = linalg::norm2(&(k1_star.transpose() * r1));
    let b = linalg::norm2(r1);
    (2.0 * a * delta + b * delta * delta) * trace_p1
}

/// Inputs of a certificate computation.
pub struct CertificateInputs<'a> {
    pub model: &'a GameModel,
    pub w1: &'a CostWeights,
    /// Terminal vertices of Ω as full `B2K2` matrices.
    pub vertex_policies: &'a [DMatrix<f64>],
    pub k1_hat: &'a DMatrix<f64>,
    pub k1_star: &'a DMatrix<f64>,
    pub x0: &'a DVector<f64>,
    pub ellipsoids: &'a [Ellipsoid],
    pub gamma: &'a [f64],
}

pub fn certify(inp: &CertificateInputs<'_>) -> Result<EpsilonCertificate> {
    if inp.vertex_policies.is_empty() {
        return Err(Error::Certificate(
            "the terminal set has no vertices".into(),
        ));
    }
    let nx = inp.model.nx();
    let mut center = DMatrix::zeros(nx, nx);
    for v in inp.vertex_policies {
        center += v;
    }
    center /= inp.vertex_policies.len() as f64;
    let k_center = best_response(&inp.model.a, &inp.model.b1, inp.w1, &center)?;
    let delta_vertex = delta_gain_bound(
        inp.model,
        inp.w1,
        &center,
        Uncertainty::Vertices(inp.vertex_policies),
    )?;
    let gain_offset = linalg::norm2(&(inp.k1_hat - &k_center));
    let delta = delta_vertex + gain_offset;
    let a_cl = &inp.model.a - &center - &inp.model.b1 * &k_center;
    let (_, trace_p1) = trajectory_gram(&a_cl, inp.x0)?;
    let gamma = inp.gamma.iter().copied().fold(0.0, f64::max);
    let lambda_max_s = inp
        .ellipsoids
        .iter()
        .map(|e| linalg::max_eigenvalue_sym(&e.shape).max(0.0))
        .fold(0.0, f64::max);
    let l_max = inp
        .ellipsoids
        .iter()
        .map(|e| e.max_semi_axis())
        .fold(0.0, f64::max)
        .min(gamma * lambda_max_s.sqrt());
    Ok(EpsilonCertificate {
        gamma,
        lambda_max_s,
        l_max,
        da1_bound: perturbation_bound(inp.ellipsoids, inp.gamma, nx),
        delta,
        delta_vertex,
        gain_offset,
        trace_p1,
        epsilon: epsilon_bound(delta, inp.k1_star, &inp.w1.r, trace_p1),
        delta_method: DELTA_METHOD.to_string(),
    })
}
