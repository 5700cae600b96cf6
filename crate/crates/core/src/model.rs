//! Game model, cost weights, disturbance sets and well-posedness checks.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, min_eigenvalue_sym};
use crate::lp::{self, LpOutcome};
use crate::sim::Trajectory;

/// Relative singular-value tolerance of the PBH rank tests.
pub const RANK_TOL: f64 = 1e-8;
const WEIGHT_TOL: f64 = 1e-10;

/// Which entries of the adversary policy matrix `B2·K2` are unknown.
///
/// Parameters are ordered as in the column-major `vec` of the `nx×nx`
/// matrix, so entry `(r, c)` sits at `vec` index `c·nx + r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamMask {
    nx: usize,
    /// Masked `(row, col)` pairs in column-major order.
    entries: Vec<(usize, usize)>,
}

impl ParamMask {
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let nx = rows.len();
        if rows.iter().any(|r| r.len() != nx) {
            return Err(Error::Config("param_mask must be square".into()));
        }
        let mut entries = Vec::new();
        for c in 0..nx {
            for (r, row) in rows.iter().enumerate() {
                if row[c] {
                    entries.push((r, c));
                }
            }
        }
        if entries.is_empty() {
            return Err(Error::Config("param_mask has no unknown entry".into()));
        }
        Ok(ParamMask { nx, entries })
    }

    pub fn full(nx: usize) -> Self {
        let entries = (0..nx).flat_map(|c| (0..nx).map(move |r| (r, c))).collect();
        ParamMask { nx, entries }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Number of unknown parameters `p`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    /// Parameter indices (into the masked vector) belonging to matrix row `r`.
    pub fn row_params(&self, r: usize) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, &(er, _))| er == r)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<bool>> {
        let mut rows = vec![vec![false; self.nx]; self.nx];
        for &(r, c) in &self.entries {
            rows[r][c] = true;
        }
        rows
    }

    /// Full `nx×nx` matrix with the masked entries set from `theta`.
    pub fn embed(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nx, self.nx);
        for (k, &(r, c)) in self.entries.iter().enumerate() {
            m[(r, c)] = theta[k];
        }
        m
    }

    pub fn extract(&self, m: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.entries.iter().map(|&(r, c)| m[(r, c)]))
    }

    /// Largest absolute value of `m` outside the mask.
    pub fn off_mask_magnitude(&self, m: &DMatrix<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for c in 0..self.nx {
            for r in 0..self.nx {
                if !self.entries.contains(&(r, c)) {
                    worst = worst.max(m[(r, c)].abs());
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct GameModel {
    pub a: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    /// Adversary input matrix; simulation truth only.
    pub b2: DMatrix<f64>,
    pub param_mask: ParamMask,
}

impl GameModel {
    pub fn new(
        a: DMatrix<f64>,
        b1: DMatrix<f64>,
        b2: DMatrix<f64>,
        param_mask: ParamMask,
    ) -> Result<Self> {
        let nx = a.nrows();
        if nx == 0 || a.ncols() != nx {
            return Err(Error::Config(format!(
                "A must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b1.nrows() != nx || b1.ncols() == 0 {
            return Err(Error::Config(format!(
                "B1 must have {nx} rows and at least one column"
            )));
        }
        if b2.nrows() != nx || b2.ncols() == 0 {
            return Err(Error::Config(format!(
                "B2 must have {nx} rows and at least one column"
            )));
        }
        if param_mask.nx() != nx {
            return Err(Error::Config(format!("param_mask must be {nx}x{nx}")));
        }
        Ok(GameModel {
            a,
            b1,
            b2,
            param_mask,
        })
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu1(&self) -> usize {
        self.b1.ncols()
    }

    pub fn nu2(&self) -> usize {
        self.b2.ncols()
    }

    /// Checks that the true `B2·K2` vanishes outside the mask.
    pub fn check_mask(&self, k2: &DMatrix<f64>) -> Result<()> {
        if k2.nrows() != self.nu2() || k2.ncols() != self.nx() {
            return Err(Error::Config(format!(
                "K2 must be {}x{}",
                self.nu2(),
                self.nx()
            )));
        }
        let policy = &self.b2 * k2;
        let off = self.param_mask.off_mask_magnitude(&policy);
        if off > 1e-12 * (1.0 + policy.amax()) {
            return Err(Error::Config(format!(
                "param_mask excludes a nonzero entry of B2*K2 (magnitude {off:.3e})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub owner: usize,
}

impl CostWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, owner: usize) -> Result<Self> {
        if !(owner == 1 || owner == 2) {
            return Err(Error::Config(format!(
                "cost owner must be 1 or 2, got {owner}"
            )));
        }
        if q.nrows() != q.ncols() || r.nrows() != r.ncols() || r.nrows() == 0 {
            return Err(Error::Config(format!(
                "player {owner}: Q and R must be square"
            )));
        }
        let qs = q.amax().max(1.0);
        if (&q - q.transpose()).amax() > WEIGHT_TOL * qs
            || min_eigenvalue_sym(&q) < -WEIGHT_TOL * qs
        {
            return Err(Error::Config(format!(
                "player {owner}: Q must be symmetric PSD"
            )));
        }
        let rs = r.amax().max(1.0);
        if (&r - r.transpose()).amax() > WEIGHT_TOL * rs
            || min_eigenvalue_sym(&r) <= WEIGHT_TOL * rs
        {
            return Err(Error::Config(format!(
                "player {owner}: R must be symmetric PD"
            )));
        }
        Ok(CostWeights { q, r, owner })
    }
}

/// Polytopic bound `{w : Gw·w ≤ gw}` with per-axis bounds `|w_i| ≤ γ_i`
/// that contain it.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceBox {
    pub gw: DMatrix<f64>,
    pub g: DVector<f64>,
    pub per_axis_gamma: DVector<f64>,
}

impl DisturbanceBox {
    /// The axis-aligned box `|w_i| ≤ γ_i`, i.e. `Gw = [I; −I]`, `gw = [γ; γ]`.
    pub fn axis_aligned(gamma: &DVector<f64>) -> Result<Self> {
        let n = gamma.len();
        let mut gw = DMatrix::zeros(2 * n, n);
        let mut g = DVector::zeros(2 * n);
        for i in 0..n {
            gw[(i, i)] = 1.0;
            gw[(n + i, i)] = -1.0;
            g[i] = gamma[i];
            g[n + i] = gamma[i];
        }
        Self::new(gw, g, gamma.clone())
    }

    pub fn new(gw: DMatrix<f64>, g: DVector<f64>, per_axis_gamma: DVector<f64>) -> Result<Self> {
        let n = per_axis_gamma.len();
        if gw.ncols() != n || gw.nrows() != g.len() {
            return Err(Error::Config("disturbance set dimensions disagree".into()));
        }
        if per_axis_gamma.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Config("disturbance bounds must be positive".into()));
        }
        if g.iter().any(|&v| v < 0.0) {
            return Err(Error::Config(
                "disturbance set must contain the origin".into(),
            ));
        }
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut c = DVector::zeros(n);
                c[i] = sign;
                match lp::maximize(&c, &gw, &g) {
                    LpOutcome::Optimal { value, .. } => {
                        if value > per_axis_gamma[i] * (1.0 + 1e-9) + 1e-12 {
                            return Err(Error::Config(format!(
                                "disturbance set exceeds gamma_{} = {}",
                                i + 1,
                                per_axis_gamma[i]
                            )));
                        }
                    }
                    _ => return Err(Error::Config("disturbance set is unbounded".into())),
                }
            }
        }
        Ok(DisturbanceBox {
            gw,
            g,
            per_axis_gamma,
        })
    }

    pub fn dim(&self) -> usize {
        self.per_axis_gamma.len()
    }

    pub fn contains(&self, w: &DVector<f64>, tol: f64) -> bool {
        (&self.gw * w - &self.g).iter().all(|&v| v <= tol)
    }
}

/// `ũ(t) = amplitude·cos(ω t)·exp(−decay·t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UTilde {
    pub amplitude: Vec<f64>,
    pub omega: f64,
    pub decay: f64,
}

impl UTilde {
    pub fn zero(nu2: usize) -> Self {
        UTilde {
            amplitude: vec![0.0; nu2],
            omega: 0.0,
            decay: 0.0,
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let s = (self.omega * t).cos() * (-self.decay * t).exp();
        DVector::from_iterator(self.amplitude.len(), self.amplitude.iter().map(|a| a * s))
    }

    /// `sup_{t ≥ 0} |ũ_j(t)|`.
    pub fn envelope(&self) -> Vec<f64> {
        self.amplitude.iter().map(|a| a.abs()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct NashGroundTruth {
    pub k2_star: DMatrix<f64>,
    pub u_tilde: UTilde,
}

impl NashGroundTruth {
    pub fn new(k2_star: DMatrix<f64>, u_tilde: UTilde) -> Result<Self> {
        if u_tilde.amplitude.len() != k2_star.nrows() {
            return Err(Error::Config(
                "u_tilde amplitude length must equal nu2".into(),
            ));
        }
        if u_tilde.decay < 0.0 || !u_tilde.decay.is_finite() {
            return Err(Error::Config("u_tilde decay must be nonnegative".into()));
        }
        Ok(NashGroundTruth { k2_star, u_tilde })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub player1_ok: bool,
    pub player2_ok: bool,
    /// Eigenvalues failing the PBH test, per player: `(re, im, reason)`.
    pub failures: Vec<(usize, f64, f64, String)>,
}

/// PBH test of stabilizability of `(A, B)` and detectability of `(A, C)`.
fn stabilizable_detectable(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Vec<(Complex<f64>, &'static str)> {
    let nx = a.nrows();
    let ac = linalg::to_complex(a);
    let bc = linalg::to_complex(b);
    let cc = linalg::to_complex(c);
    let mut bad = Vec::new();
    let eigs = linalg::eigenvalues(a);
    for lam in eigs {
        if lam.re < 0.0 {
            continue;
        }
        let shifted = &ac - DMatrix::<Complex<f64>>::identity(nx, nx) * lam;
        let mut ctrl = DMatrix::zeros(nx, nx + b.ncols());
        ctrl.view_mut((0, 0), (nx, nx)).copy_from(&shifted);
        ctrl.view_mut((0, nx), (nx, b.ncols())).copy_from(&bc);
        if linalg::complex_rank(&ctrl, RANK_TOL) < nx {
            bad.push((lam, "unstabilizable"));
        }
        let mut obs = DMatrix::zeros(nx + c.nrows(), nx);
        obs.view_mut((0, 0), (nx, nx)).copy_from(&shifted);
        obs.view_mut((nx, 0), (c.nrows(), nx)).copy_from(&cc);
        if linalg::complex_rank(&obs, RANK_TOL) < nx {
            bad.push((lam, "undetectable"));
        }
    }
    bad
}

/// Passes iff at least one of `(A, B1, √Q1)` and `(A, B2, √Q2)` is
/// stabilizable-detectable.
pub fn validate_model(
    model: &GameModel,
    q1: &CostWeights,
    q2: &CostWeights,
) -> Result<ValidationReport> {
    let nx = model.nx();
    for (w, nu) in [(q1, model.nu1()), (q2, model.nu2())] {
        if w.q.nrows() != nx || w.r.nrows() != nu {
            return Err(Error::Config(format!(
                "player {} weights must be Q {nx}x{nx} and R {nu}x{nu}",
                w.owner
            )));
        }
    }
    let mut failures = Vec::new();
    let mut ok = [false; 2];
    for (k, (b, w)) in [(&model.b1, q1), (&model.b2, q2)].into_iter().enumerate() {
        let sq = linalg::psd_sqrt(&w.q)?;
        let bad = stabilizable_detectable(&model.a, b, &sq);
        ok[k] = bad.is_empty();
        failures.extend(
            bad.into_iter()
                .map(|(l, why)| (k + 1, l.re, l.im, why.to_string())),
        );
    }
    if !ok[0] && !ok[1] {
        let detail = failures
            .iter()
            .map(|(p, re, im, why)| format!("player {p}: {why} mode {re:.4}{im:+.4}i"))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::AssumptionViolation(format!(
            "no player's triple is stabilizable-detectable ({detail})"
        )));
    }
    Ok(ValidationReport {
        player1_ok: ok[0],
        player2_ok: ok[1],
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostValue {
    /// Trapezoidal approximation of `∫ (xᵀQx + uᵀRu) dt`.
    pub value: f64,
    /// Length of the recorded horizon the integral was truncated to.
    pub horizon: f64,
}

/// Quadratic cost of the trajectory under `u = −K x`.
pub fn evaluate_cost(
    traj: &Trajectory,
    weights: &CostWeights,
    gain: &DMatrix<f64>,
) -> Result<CostValue> {
    if traj.is_empty() {
        return Err(Error::Input(
            "cannot evaluate the cost of an empty trajectory".into(),
        ));
    }
    let nx = traj.states[0].len();
    if gain.ncols() != nx || gain.nrows() != weights.r.nrows() || weights.q.nrows() != nx {
        return Err(Error::Input(
            "gain and weights do not match the trajectory".into(),
        ));
    }
    let stage = |x: &DVector<f64>| {
        let u = -(gain * x);
        (x.transpose() * &weights.q * x)[0] + (u.transpose() * &weights.r * &u)[0]
    };
    let mut total = 0.0;
    let mut prev = stage(&traj.states[0]);
    for k in 1..traj.len() {
        let cur = stage(&traj.states[k]);
        total += 0.5 * (prev + cur) * (traj.times[k] - traj.times[k - 1]);
        prev = cur;
    }
    Ok(CostValue {
        value: total,
        horizon: traj.times[traj.len() - 1] - traj.times[0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    fn weights(q: DMatrix<f64>, r: f64, owner: usize) -> CostWeights {
        CostWeights::new(q, DMatrix::from_element(1, 1, r), owner).unwrap()
    }

    fn contact_robot() -> GameModel {
        GameModel::new(
            mat(2, 2, &[0.0, 1.0, 0.0, 0.2 / 6.0]),
            mat(2, 1, &[0.0, 1.0 / 6.0]),
            mat(2, 1, &[0.0, 0.8 / 6.0]),
            ParamMask::from_rows(&[vec![false, false], vec![true, true]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn mask_orders_parameters_column_major() {
        let m = ParamMask::full(2);
        assert_eq!(m.entries(), &[(0, 0), (1, 0), (0, 1), (1, 1)]);
        let theta = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.embed(&theta), mat(2, 2, &[1.0, 3.0, 2.0, 4.0]));
        assert_eq!(m.extract(&m.embed(&theta)), theta);
        assert!(ParamMask::from_rows(&[vec![false]]).is_err());
    }

    #[test]
    fn contact_robot_passes_validation() {
        let m = contact_robot();
        let q1 = weights(
            DMatrix::from_diagonal(&DVector::from_vec(vec![25.0, 0.1])),
            0.1,
            1,
        );
        let q2 = weights(
            DMatrix::from_diagonal(&DVector::from_vec(vec![15.0, 0.3])),
            0.15,
            2,
        );
        let rep = validate_model(&m, &q1, &q2).unwrap();
        assert!(rep.player1_ok && rep.player2_ok);
    }

    #[test]
    fn stable_plant_without_inputs_passes() {
        let m = GameModel::new(
            -DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 1),
            ParamMask::full(2),
        )
        .unwrap();
        let q = weights(DMatrix::identity(2, 2), 1.0, 1);
        let q2 = weights(DMatrix::zeros(2, 2), 1.0, 2);
        assert!(validate_model(&m, &q, &q2).is_ok());
    }

    #[test]
    fn uncontrollable_unstable_mode_fails() {
        let m = GameModel::new(
            DMatrix::identity(2, 2),
            mat(2, 1, &[1.0, 0.0]),
            DMatrix::zeros(2, 1),
            ParamMask::full(2),
        )
        .unwrap();
        let q = weights(DMatrix::identity(2, 2), 1.0, 1);
        let q2 = weights(DMatrix::identity(2, 2), 1.0, 2);
        let err = validate_model(&m, &q, &q2).unwrap_err();
        assert!(matches!(err, Error::AssumptionViolation(_)));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let m = contact_robot();
        let q = weights(DMatrix::identity(3, 3), 1.0, 1);
        let q2 = weights(DMatrix::identity(2, 2), 1.0, 2);
        assert!(matches!(validate_model(&m, &q, &q2), Err(Error::Config(_))));
        assert!(GameModel::new(
            DMatrix::zeros(2, 3),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 1),
            ParamMask::full(2)
        )
        .is_err());
    }

    #[test]
    fn weights_reject_indefinite_matrices() {
        assert!(CostWeights::new(mat(1, 1, &[-1.0]), mat(1, 1, &[1.0]), 1).is_err());
        assert!(CostWeights::new(mat(1, 1, &[1.0]), mat(1, 1, &[0.0]), 1).is_err());
        assert!(CostWeights::new(mat(1, 1, &[1.0]), mat(1, 1, &[1.0]), 3).is_err());
    }

    #[test]
    fn mask_check_rejects_hidden_entries() {
        let m = contact_robot();
        assert!(m.check_mask(&mat(1, 2, &[2.69, 1.37])).is_ok());
        let bad = GameModel {
            b2: mat(2, 1, &[0.1, 0.8 / 6.0]),
            ..m
        };
        assert!(bad.check_mask(&mat(1, 2, &[2.69, 1.37])).is_err());
    }

    #[test]
    fn box_vertices_respect_gamma() {
        let b = DisturbanceBox::axis_aligned(&DVector::from_vec(vec![0.5, 0.25])).unwrap();
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                let v = DVector::from_vec(vec![0.5 * sx, 0.25 * sy]);
                assert!(b.contains(&v, 1e-12));
            }
        }
        // A diamond |w1| + |w2| ≤ 1 is not inside |w_i| ≤ 0.9.
        let gw = mat(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let g = DVector::from_element(4, 1.0);
        assert!(DisturbanceBox::new(gw.clone(), g.clone(), DVector::from_element(2, 0.9)).is_err());
        assert!(DisturbanceBox::new(gw, g, DVector::from_element(2, 1.0)).is_ok());
        assert!(DisturbanceBox::axis_aligned(&DVector::from_vec(vec![0.0])).is_err());
    }

    #[test]
    fn zero_trajectory_has_zero_cost() {
        let t = Trajectory::from_states(
            (0..11).map(|k| k as f64 * 0.1).collect(),
            vec![DVector::zeros(2); 11],
        );
        let w = weights(DMatrix::identity(2, 2), 1.0, 1);
        let c = evaluate_cost(&t, &w, &mat(1, 2, &[1.0, 2.0])).unwrap();
        assert_eq!(c.value, 0.0);
        assert!((c.horizon - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_decay_cost_matches_closed_form() {
        // x = e^{-t}, ∫_0^20 x² dt ≈ 1/2.
        let dt = 1e-3;
        let n = 20_000;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
        let states = times
            .iter()
            .map(|t| DVector::from_element(1, (-t).exp()))
            .collect();
        let t = Trajectory::from_states(times, states);
        let w = CostWeights {
            q: mat(1, 1, &[1.0]),
            r: mat(1, 1, &[0.0]),
            owner: 1,
        };
        let c = evaluate_cost(&t, &w, &mat(1, 1, &[0.0])).unwrap();
        assert!((c.value - 0.5).abs() < 1e-3);
    }

    #[test]
    fn empty_trajectory_is_input_error() {
        let t = Trajectory::from_states(vec![], vec![]);
        let w = weights(DMatrix::identity(1, 1), 1.0, 1);
        assert!(matches!(
            evaluate_cost(&t, &w, &mat(1, 1, &[0.0])),
            Err(Error::Input(_))
        ));
    }

    proptest! {
        #[test]
        fn validation_is_coordinate_invariant(
            t in proptest::collection::vec(-1.0f64..1.0, 4),
            a in proptest::collection::vec(-2.0f64..2.0, 4),
            b in proptest::collection::vec(-1.0f64..1.0, 2),
            zero_b in any::<bool>(),
        ) {
            let tm = DMatrix::identity(2, 2) * 2.0 + mat(2, 2, &t);
            prop_assume!(tm.determinant().abs() > 0.5);
            let tinv = tm.clone().try_inverse().unwrap();
            let am = mat(2, 2, &a);
            let bm = if zero_b { DMatrix::zeros(2, 1) } else { mat(2, 1, &b) };
            let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
            let sq = linalg::psd_sqrt(&q).unwrap();
            let base = stabilizable_detectable(&am, &bm, &sq).is_empty();
            let moved = stabilizable_detectable(&(&tm * &am * &tinv), &(&tm * &bm), &(&sq * &tinv)).is_empty();
            prop_assert_eq!(base, moved);
        }

        #[test]
        fn cost_is_monotone_in_horizon(xs in proptest::collection::vec(-5.0f64..5.0, 2..60)) {
            let n = xs.len();
            let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.1).collect();
            let states: Vec<DVector<f64>> = xs.iter().map(|&v| DVector::from_element(1, v)).collect();
            let w = weights(mat(1, 1, &[2.0]), 0.5, 1);
            let k = mat(1, 1, &[1.3]);
            let mut last = 0.0;
            for m in 1..=n {
                let t = Trajectory::from_states(times[..m].to_vec(), states[..m].to_vec());
                let c = evaluate_cost(&t, &w, &k).unwrap().value;
                prop_assert!(c >= last - 1e-12);
                last = c;
            }
        }
    }
}
