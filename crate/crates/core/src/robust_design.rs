//! Vertex-constrained semidefinite design of a gain that quadratically
//! stabilizes every adversary policy in the unfalsified set.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, symmetrize};
use crate::model::{CostWeights, GameModel, ParamMask};
use crate::polytope::VPolytope;
use crate::sdp::{self, LmiBlock, LmiProblem, SdpSettings};

pub const DEFAULT_VERTEX_CAP: usize = 512;
/// Realizes `Wc ≻ 0` as `Wc ⪰ WC_FLOOR·I`.
pub const WC_FLOOR: f64 = 1e-8;
pub const KKT_TOL: f64 = 1e-7;
/// Tolerance on vertex LMI eigenvalues in verification.
pub const LMI_TOL: f64 = 1e-7;
const DEDUP_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct RobustLqrProblem {
    pub a: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub q1: DMatrix<f64>,
    pub r1: DMatrix<f64>,
    /// Candidate `B2K2` matrices, one per vertex of Ω (duplicates removed).
    pub vertex_policies: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub wc: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub objective: f64,
    pub k1: DMatrix<f64>,
    pub kkt_gap: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolutionRecord {
    pub wc: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub k1: Vec<Vec<f64>>,
    pub objective: f64,
    pub kkt_gap: f64,
}

impl SdpSolution {
    pub fn to_record(&self) -> SdpSolutionRecord {
        SdpSolutionRecord {
            wc: linalg::to_rows(&self.wc),
            y: linalg::to_rows(&self.y),
            x: linalg::to_rows(&self.x),
            k1: linalg::to_rows(&self.k1),
            objective: self.objective,
            kkt_gap: self.kkt_gap,
        }
    }

    /// Same certificate with a different gain (`Y = K1·Wc`), used to test
    /// how verification reacts to a wrong gain.
    pub fn with_gain(&self, k1: DMatrix<f64>) -> SdpSolution {
        SdpSolution {
            y: &k1 * &self.wc,
            k1,
            ..self.clone()
        }
    }
}

impl RobustLqrProblem {
    pub fn new(
        a: DMatrix<f64>,
        b1: DMatrix<f64>,
        q1: DMatrix<f64>,
        r1: DMatrix<f64>,
        policies: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let nx = a.nrows();
        if policies.is_empty() {
            return Err(Error::Design("the vertex list is empty".into()));
        }
        if policies.iter().any(|p| p.shape() != (nx, nx)) {
            return Err(Error::Config("vertex policy has the wrong shape".into()));
        }
        if b1.nrows() != nx || q1.shape() != (nx, nx) || r1.shape() != (b1.ncols(), b1.ncols()) {
            return Err(Error::Config(
                "design matrices have inconsistent shapes".into(),
            ));
        }
        let mut vertex_policies: Vec<DMatrix<f64>> = Vec::with_capacity(policies.len());
        for p in policies {
            if !vertex_policies
                .iter()
                .any(|q| (q - &p).amax() <= DEDUP_TOL * (1.0 + p.amax()))
            {
                vertex_policies.push(p);
            }
        }
        Ok(RobustLqrProblem {
            a,
            b1,
            q1,
            r1,
            vertex_policies,
        })
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu1(&self) -> usize {
        self.b1.ncols()
    }

    /// `(A − Δ)Wc + Wc(A − Δ)ᵀ − B1Y − YᵀB1ᵀ + I` at a policy `Δ`.
    pub fn lmi_at(
        &self,
        delta: &DMatrix<f64>,
        wc: &DMatrix<f64>,
        y: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        let acl = &self.a - delta;
        let by = &self.b1 * y;
        let nx = self.nx();
        symmetrize(
            &(&acl * wc + wc * acl.transpose() - &by - by.transpose() + DMatrix::identity(nx, nx)),
        )
    }
}

/// Maps vertex coordinates back to full `B2K2` matrices (unmasked entries zero).
pub fn build_problem(
    model: &GameModel,
    weights: &CostWeights,
    vertices: &VPolytope,
    mask: &ParamMask,
    vertex_cap: usize,
) -> Result<RobustLqrProblem> {
    if vertices.is_empty() {
        return Err(Error::Design(
            "the unfalsified set has no vertices; collect more data so that it becomes bounded"
                .into(),
        ));
    }
    if vertices.len() > vertex_cap {
        return Err(Error::Design(format!(
            "{} vertices exceed the cap of {vertex_cap}; prune the set or raise the cap",
            vertices.len()
        )));
    }
    if vertices.vertices[0].len() != mask.len() {
        return Err(Error::Config(
            "vertex dimension does not match the parameter mask".into(),
        ));
    }
    let policies = vertices.vertices.iter().map(|v| mask.embed(v)).collect();
    RobustLqrProblem::new(
        model.a.clone(),
        model.b1.clone(),
        weights.q.clone(),
        weights.r.clone(),
        policies,
    )
}

/// Index layout of the decision vector: `svec(Wc)`, `vec(Y)`, `svec(X)`.
struct Layout {
    nx: usize,
    nu: usize,
}

impl Layout {
    fn sym_pairs(n: usize) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                v.push((i, j));
            }
        }
        v
    }

    fn n_wc(&self) -> usize {
        self.nx * (self.nx + 1) / 2
    }

    fn n_y(&self) -> usize {
        self.nu * self.nx
    }

    fn len(&self) -> usize {
        self.n_wc() + self.n_y() + self.nu * (self.nu + 1) / 2
    }

    fn sym_basis(n: usize, i: usize, j: usize) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(n, n);
        e[(i, j)] = 1.0;
        e[(j, i)] = 1.0;
        e
    }

    fn unpack(&self, y: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let mut wc = DMatrix::zeros(self.nx, self.nx);
        for (k, (i, j)) in Self::sym_pairs(self.nx).into_iter().enumerate() {
            wc[(i, j)] = y[k];
            wc[(j, i)] = y[k];
        }
        let off = self.n_wc();
        let yy = DMatrix::from_fn(self.nu, self.nx, |a, b| y[off + b * self.nu + a]);
        let off = off + self.n_y();
        let mut x = DMatrix::zeros(self.nu, self.nu);
        for (k, (i, j)) in Self::sym_pairs(self.nu).into_iter().enumerate() {
            x[(i, j)] = y[off + k];
            x[(j, i)] = y[off + k];
        }
        (wc, yy, x)
    }
}

fn assemble(p: &RobustLqrProblem) -> Result<(LmiProblem, Layout)> {
    let nx = p.nx();
    let nu = p.nu1();
    let lay = Layout { nx, nu };
    let wc_pairs = Layout::sym_pairs(nx);
    let x_pairs = Layout::sym_pairs(nu);
    let r_half = linalg::psd_sqrt(&p.r1)?;

    let mut c = DVector::zeros(lay.len());
    for (k, &(i, j)) in wc_pairs.iter().enumerate() {
        c[k] = if i == j {
            p.q1[(i, i)]
        } else {
            2.0 * p.q1[(i, j)]
        };
    }
    let x_off = lay.n_wc() + lay.n_y();
    for (k, &(i, j)) in x_pairs.iter().enumerate() {
        if i == j {
            c[x_off + k] = 1.0;
        }
    }

    let mut blocks = Vec::with_capacity(p.vertex_policies.len() + 2);
    // Y coefficients are the same in every vertex block.
    let mut y_terms = Vec::with_capacity(lay.n_y());
    for b in 0..nx {
        for a in 0..nu {
            let col = p.b1.column(a);
            let mut f = DMatrix::zeros(nx, nx);
            for r in 0..nx {
                f[(r, b)] += col[r];
                f[(b, r)] += col[r];
            }
            y_terms.push((lay.n_wc() + b * nu + a, f));
        }
    }
    for delta in &p.vertex_policies {
        let acl = &p.a - delta;
        let mut terms = Vec::with_capacity(lay.n_wc() + lay.n_y());
        for (k, &(i, j)) in wc_pairs.iter().enumerate() {
            let e = Layout::sym_basis(nx, i, j);
            let f = -(&acl * &e + &e * acl.transpose());
            terms.push((k, symmetrize(&f)));
        }
        terms.extend(y_terms.iter().cloned());
        blocks.push(LmiBlock {
            f0: -DMatrix::identity(nx, nx),
            terms,
        });
    }

    // Schur complement block for Tr(R^{1/2} Y Wc⁻¹ Yᵀ R^{1/2}) ≤ Tr(X).
    let n = nu + nx;
    let mut terms = Vec::new();
    for (k, &(i, j)) in wc_pairs.iter().enumerate() {
        let mut f = DMatrix::zeros(n, n);
        f[(nu + i, nu + j)] = 1.0;
        f[(nu + j, nu + i)] = 1.0;
        terms.push((k, f));
    }
    for b in 0..nx {
        for a in 0..nu {
            let mut f = DMatrix::zeros(n, n);
            for r in 0..nu {
                f[(r, nu + b)] = r_half[(r, a)];
                f[(nu + b, r)] = r_half[(r, a)];
            }
            terms.push((lay.n_wc() + b * nu + a, f));
        }
    }
    for (k, &(i, j)) in x_pairs.iter().enumerate() {
        let mut f = DMatrix::zeros(n, n);
        f[(i, j)] = 1.0;
        f[(j, i)] = 1.0;
        terms.push((x_off + k, f));
    }
    blocks.push(LmiBlock {
        f0: DMatrix::zeros(n, n),
        terms,
    });

    let terms = wc_pairs
        .iter()
        .enumerate()
        .map(|(k, &(i, j))| (k, Layout::sym_basis(nx, i, j)))
        .collect();
    blocks.push(LmiBlock {
        f0: -DMatrix::identity(nx, nx) * WC_FLOOR,
        terms,
    });
    Ok((LmiProblem { c, blocks }, lay))
}

pub fn solve_robust_lqr(p: &RobustLqrProblem) -> Result<SdpSolution> {
    let (lmi, lay) = assemble(p)?;
    let settings = SdpSettings::default();
    let res = sdp::solve(&lmi, &settings).map_err(|e| match e {
        Error::RobustInfeasible(msg) => Error::RobustInfeasible(format!(
            "{msg}; no common quadratic certificate exists for the {} vertex policies",
            p.vertex_policies.len()
        )),
        Error::Convergence { iterations, detail } => Error::Numerical(format!(
            "robust LQR SDP did not converge after {iterations} iterations: {detail}"
        )),
        other => other,
    })?;
    let (wc, y, x) = lay.unpack(&res.y);
    let wc = symmetrize(&wc);
    let ch = wc.clone().cholesky().ok_or_else(|| {
        Error::Numerical("Wc returned by the SDP is not positive definite".into())
    })?;
    // K1 = Y Wc⁻¹  ⇔  Wc K1ᵀ = Yᵀ.
    let k1 = ch.solve(&y.transpose()).transpose();
    if res.gap > KKT_TOL {
        return Err(Error::Numerical(format!(
            "SDP gap {:.3e} above {KKT_TOL:.0e}; Wc = {:?}, Y = {:?}",
            res.gap,
            linalg::to_rows(&wc),
            linalg::to_rows(&y)
        )));
    }
    Ok(SdpSolution {
        wc,
        y,
        x,
        objective: res.objective,
        k1,
        kkt_gap: res.gap,
        iterations: res.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub n_vertices: usize,
    pub n_combos: usize,
    /// Largest eigenvalue of the enforced vertex LMI over all vertices.
    pub worst_vertex_lmi: f64,
    pub worst_combo_lmi: f64,
    /// Largest closed-loop spectral abscissa at the vertices.
    pub worst_vertex_abscissa: f64,
    pub worst_combo_abscissa: f64,
    pub failures: Vec<String>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Random point of the probability simplex (uniform Dirichlet).
pub fn random_simplex_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Checks every vertex LMI and closed loop, then `n_combos` random convex
/// combinations of the vertex policies.
pub fn verify_quadratic_stability(
    sol: &SdpSolution,
    p: &RobustLqrProblem,
    n_combos: usize,
    seed: u64,
) -> VerificationReport {
    let y = &sol.k1 * &sol.wc;
    let mut failures = Vec::new();
    let mut worst_vertex_lmi = f64::NEG_INFINITY;
    let mut worst_vertex_abscissa = f64::NEG_INFINITY;
    for (i, d) in p.vertex_policies.iter().enumerate() {
        let lmi = linalg::max_eigenvalue_sym(&p.lmi_at(d, &sol.wc, &y));
        let abscissa = linalg::spectral_abscissa(&(&p.a - d - &p.b1 * &sol.k1));
        worst_vertex_lmi = worst_vertex_lmi.max(lmi);
        worst_vertex_abscissa = worst_vertex_abscissa.max(abscissa);
        if lmi > LMI_TOL {
            failures.push(format!("vertex {i}: LMI eigenvalue {lmi:.3e} > 0"));
        }
        if abscissa >= 0.0 {
            failures.push(format!(
                "vertex {i}: closed loop not Hurwitz (abscissa {abscissa:.3e})"
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_combo_lmi = f64::NEG_INFINITY;
    let mut worst_combo_abscissa = f64::NEG_INFINITY;
    let nx = p.nx();
    for c in 0..n_combos {
        let w = random_simplex_weights(p.vertex_policies.len(), &mut rng);
        let mut d = DMatrix::zeros(nx, nx);
        for (wi, v) in w.iter().zip(&p.vertex_policies) {
            d += v * *wi;
        }
        let lmi = linalg::max_eigenvalue_sym(&p.lmi_at(&d, &sol.wc, &y));
        let abscissa = linalg::spectral_abscissa(&(&p.a - &d - &p.b1 * &sol.k1));
        worst_combo_lmi = worst_combo_lmi.max(lmi);
        worst_combo_abscissa = worst_combo_abscissa.max(abscissa);
        if lmi > worst_vertex_lmi.max(0.0) + LMI_TOL {
            failures.push(format!(
                "combination {c}: LMI eigenvalue {lmi:.3e} exceeds the vertex maximum"
            ));
        }
        if abscissa >= 0.0 {
            failures.push(format!("combination {c}: closed loop not Hurwitz"));
        }
    }
    VerificationReport {
        n_vertices: p.vertex_policies.len(),
        n_combos,
        worst_vertex_lmi,
        worst_combo_lmi,
        worst_vertex_abscissa,
        worst_combo_abscissa,
        failures,
    }
}
