//! Lyapunov and algebraic Riccati solvers and the coupled Nash equations.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::linalg::{self, spectral_abscissa, symmetrize};

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 100;
pub const COUPLED_TOL: f64 = 1e-10;
pub const COUPLED_MAX_ITERS: usize = 500;

#[derive(Debug, Clone)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    /// `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖_F / (1 + ‖P‖_F)`.
    pub residual_norm: f64,
    pub closed_loop_eigs: Vec<Complex<f64>>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct NashSolution {
    pub p1: DMatrix<f64>,
    pub p2: DMatrix<f64>,
    pub k1_star: DMatrix<f64>,
    pub k2_star: DMatrix<f64>,
    /// Scaled residuals of the two coupled equations.
    pub residuals: (f64, f64),
    /// Eigenvalues of `A − B1K1* − B2K2*`.
    pub coupled_eigs: Vec<Complex<f64>>,
    pub iterations: usize,
}

/// Solves `AᵀX + XA + Q = 0` for Hurwitz `A` through the Kronecker system.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(Error::Contract(
            "Lyapunov solve needs square matching matrices".into(),
        ));
    }
    if !linalg::is_hurwitz(a) {
        return Err(Error::Contract(format!(
            "Lyapunov solve needs a Hurwitz matrix (spectral abscissa {:.3e})",
            spectral_abscissa(a)
        )));
    }
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    // vec(AᵀX) = (I ⊗ Aᵀ) vec X,  vec(XA) = (Aᵀ ⊗ I) vec X.
    let l = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DMatrix::from_column_slice(n * n, 1, q.as_slice());
    let sol = l
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("Lyapunov system is singular".into()))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok(symmetrize(&x))
}

pub fn care_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<f64> {
    let rinv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Input("R is singular".into()))?;
    let res = a.transpose() * p + p * a - p * b * rinv * b.transpose() * p + q;
    Ok(res.norm() / (1.0 + p.norm()))
}

/// A gain with `A − BK` Hurwitz: zero when `A` already is, else Bass's
/// eigenvalue-shift construction.
pub fn stabilizing_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = b.ncols();
    if linalg::is_hurwitz(a) {
        return Ok(DMatrix::zeros(m, n));
    }
    let shift = 1.0 + spectral_abscissa(&(-a)).max(0.0);
    // Ā = −(A + βI) is Hurwitz; Ā Z + Z Āᵀ = −2BBᵀ gives K = Bᵀ Z⁻¹.
    let abar = -(a + DMatrix::identity(n, n) * shift);
    let z = solve_lyapunov(&abar.transpose(), &(b * b.transpose() * 2.0))?;
    let zinv = match z.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => z
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Numerical(e.to_string()))?,
    };
    let k = b.transpose() * zinv;
    if !linalg::is_hurwitz(&(a - b * &k)) {
        return Err(Error::AssumptionViolation(
            "no stabilizing initial gain: (A, B) is not stabilizable".into(),
        ));
    }
    Ok(k)
}

/// Stabilizing solution of `AᵀP + PA − PBR⁻¹BᵀP + Q = 0` by Newton–Kleinman.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<CareSolution> {
    let n = a.nrows();
    if a.ncols() != n
        || b.nrows() != n
        || q.shape() != (n, n)
        || r.shape() != (b.ncols(), b.ncols())
    {
        return Err(Error::Input("CARE dimensions disagree".into()));
    }
    let rinv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Input("R is singular".into()))?;
    let mut k = stabilizing_gain(a, b)?;
    let mut p = DMatrix::zeros(n, n);
    let mut iterations = 0;
    for it in 1..=NEWTON_MAX_ITERS {
        iterations = it;
        let acl = a - b * &k;
        let rhs = q + k.transpose() * r * &k;
        p = solve_lyapunov(&acl, &rhs).map_err(|e| match e {
            Error::Contract(msg) => {
                Error::AssumptionViolation(format!("Newton iterate lost stability: {msg}"))
            }
            other => other,
        })?;
        let k_new = &rinv * b.transpose() * &p;
        let change = (&k_new - &k).norm();
        k = k_new;
        if change <= NEWTON_TOL * (1.0 + k.norm()) {
            break;
        }
    }
    let acl = a - b * &k;
    if !linalg::is_hurwitz(&acl) {
        return Err(Error::AssumptionViolation(
            "Riccati solution is not stabilizing".into(),
        ));
    }
    Ok(CareSolution {
        residual_norm: care_residual(a, b, q, r, &p)?,
        closed_loop_eigs: linalg::eigenvalues(&acl),
        p,
        k,
        iterations,
    })
}

/// Feedback Nash equilibrium by Gauss–Seidel best responses.
#[allow(clippy::too_many_arguments)]
pub fn solve_coupled_care(
    a: &DMatrix<f64>,
    b1: &DMatrix<f64>,
    b2: &DMatrix<f64>,
    q1: &DMatrix<f64>,
    q2: &DMatrix<f64>,
    r1: &DMatrix<f64>,
    r2: &DMatrix<f64>,
) -> Result<NashSolution> {
    let n = a.nrows();
    let mut k2 = DMatrix::zeros(b2.ncols(), n);
    let mut k1 = DMatrix::zeros(b1.ncols(), n);
    let mut p1 = DMatrix::zeros(n, n);
    let mut p2 = DMatrix::zeros(n, n);
    let mut last_change = f64::INFINITY;
    for it in 1..=COUPLED_MAX_ITERS {
        let s1 = solve_care(&(a - b2 * &k2), b1, q1, r1)?;
        let s2 = solve_care(&(a - b1 * &s1.k), b2, q2, r2)?;
        let change = (&s1.k - &k1).norm().max((&s2.k - &k2).norm());
        k1 = s1.k;
        k2 = s2.k;
        p1 = s1.p;
        p2 = s2.p;
        last_change = change;
        if change < COUPLED_TOL {
            let r = coupled_residuals(a, b1, b2, q1, q2, r1, r2, &p1, &p2)?;
            let acl = a - b1 * &k1 - b2 * &k2;
            return Ok(NashSolution {
                coupled_eigs: linalg::eigenvalues(&acl),
                p1,
                p2,
                k1_star: k1,
                k2_star: k2,
                residuals: r,
                iterations: it,
            });
        }
    }
    let _ = (p1, p2);
    Err(Error::Convergence {
        iterations: COUPLED_MAX_ITERS,
        detail: format!(
            "coupled Riccati alternation stalled (last gain change {last_change:.3e}, K1 = {:?}, K2 = {:?})",
            k1.as_slice(),
            k2.as_slice()
        ),
    })
}

/// Residuals of `AᵀPi + PiA + Qi − PiSiPi − PiSjPj − PjSjPi = 0`,
/// `Si = Bi Ri⁻¹ Biᵀ`, scaled by `1 + ‖Pi‖`.
#[allow(clippy::too_many_arguments)]
pub fn coupled_residuals(
    a: &DMatrix<f64>,
    b1: &DMatrix<f64>,
    b2: &DMatrix<f64>,
    q1: &DMatrix<f64>,
    q2: &DMatrix<f64>,
    r1: &DMatrix<f64>,
    r2: &DMatrix<f64>,
    p1: &DMatrix<f64>,
    p2: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    let inv = |r: &DMatrix<f64>| {
        r.clone()
            .try_inverse()
            .ok_or_else(|| Error::Input("R is singular".into()))
    };
    let s1 = b1 * inv(r1)? * b1.transpose();
    let s2 = b2 * inv(r2)? * b2.transpose();
    let res = |pi: &DMatrix<f64>,
               pj: &DMatrix<f64>,
               qi: &DMatrix<f64>,
               si: &DMatrix<f64>,
               sj: &DMatrix<f64>| {
        let m = a.transpose() * pi + pi * a + qi - pi * si * pi - pi * sj * pj - pj * sj * pi;
        m.norm() / (1.0 + pi.norm())
    };
    Ok((res(p1, p2, q1, &s1, &s2), res(p2, p1, q2, &s2, &s1)))
}

/// `P1 = ∫₀^∞ x xᵀ dt` for `ẋ = A_cl x`, `x(0) = x0`, and its trace.
pub fn trajectory_gram(
    a_cl: &DMatrix<f64>,
    x0: &nalgebra::DVector<f64>,
) -> Result<(DMatrix<f64>, f64)> {
    let p = solve_lyapunov(&a_cl.transpose(), &(x0 * x0.transpose()))?;
    let tr = p.trace();
    Ok((p, tr))
}
