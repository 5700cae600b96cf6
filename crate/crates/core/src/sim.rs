//! Closed-loop simulation of the game and sample collection.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{GameModel, NashGroundTruth};

/// States beyond this norm count as divergence.
const BLOWUP: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub u1: Vec<DVector<f64>>,
    pub u2: Vec<DVector<f64>>,
    /// Exogenous disturbance held over `[t_k, t_{k+1})`.
    pub w: Vec<DVector<f64>>,
}

impl Trajectory {
    /// A state-only trajectory; input and disturbance channels are empty vectors.
    pub fn from_states(times: Vec<f64>, states: Vec<DVector<f64>>) -> Self {
        let n = times.len();
        assert_eq!(n, states.len(), "times and states must have equal length");
        Trajectory {
            times,
            states,
            u1: vec![DVector::zeros(0); n],
            u2: vec![DVector::zeros(0); n],
            w: vec![DVector::zeros(0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }

    /// Appends `other`, dropping its first point when it repeats our last time.
    pub fn extend(&mut self, other: &Trajectory) {
        let skip = match (self.times.last(), other.times.first()) {
            (Some(a), Some(b)) if (a - b).abs() <= 1e-12 * (1.0 + a.abs()) => 1,
            _ => 0,
        };
        if skip == 1 {
            // The continuing segment owns the disturbance for the next step.
            let n = self.len();
            self.u1[n - 1] = other.u1[0].clone();
            self.u2[n - 1] = other.u2[0].clone();
            self.w[n - 1] = other.w[0].clone();
        }
        self.times.extend_from_slice(&other.times[skip..]);
        self.states.extend_from_slice(&other.states[skip..]);
        self.u1.extend_from_slice(&other.u1[skip..]);
        self.u2.extend_from_slice(&other.u2[skip..]);
        self.w.extend_from_slice(&other.w[skip..]);
    }

    /// CSV with header `t,x1..xnx,u1_1..,u2_1..,w_1..`.
    pub fn to_csv(&self) -> String {
        let nx = self.states.first().map_or(0, |v| v.len());
        let nu1 = self.u1.first().map_or(0, |v| v.len());
        let nu2 = self.u2.first().map_or(0, |v| v.len());
        let nw = self.w.first().map_or(0, |v| v.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=nx).map(|i| format!("x{i}")));
        header.extend((1..=nu1).map(|i| format!("u1_{i}")));
        header.extend((1..=nu2).map(|i| format!("u2_{i}")));
        header.extend((1..=nw).map(|i| format!("w_{i}")));
        let mut out = header.join(",");
        out.push('\n');
        for k in 0..self.len() {
            let mut fields = vec![self.times[k].to_string()];
            for v in [&self.states[k], &self.u1[k], &self.u2[k], &self.w[k]] {
                fields.extend(v.iter().map(f64::to_string));
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub xdot: DVector<f64>,
    pub x: DVector<f64>,
    pub u1: DVector<f64>,
    pub t: f64,
}

/// `u2 = −K2*·x + ũ(t)`.
pub fn adversary_input(truth: &NashGroundTruth, x: &DVector<f64>, t: f64) -> DVector<f64> {
    -(&truth.k2_star * x) + truth.u_tilde.eval(t)
}

/// Uniform draw from `|w_i| ≤ bound_i`.
pub fn sample_disturbance<R: Rng + ?Sized>(bounds: &DVector<f64>, rng: &mut R) -> DVector<f64> {
    bounds.map(|g| {
        let u: f64 = rng.random();
        g * (2.0 * u - 1.0)
    })
}

fn rhs(
    model: &GameModel,
    k1: &DMatrix<f64>,
    truth: &NashGroundTruth,
    x: &DVector<f64>,
    t: f64,
    w: &DVector<f64>,
) -> DVector<f64> {
    let u1 = -(k1 * x);
    let u2 = adversary_input(truth, x, t);
    &model.a * x + &model.b1 * u1 + &model.b2 * u2 + w
}

/// Fixed-step RK4 of `ẋ = A x + B1 u1 + B2 u2 + w` with `u1 = −K1 x` and the
/// disturbance drawn from `bounds` and held constant over each step.
#[allow(clippy::too_many_arguments)]
pub fn simulate<R: Rng + ?Sized>(
    model: &GameModel,
    k1: &DMatrix<f64>,
    truth: &NashGroundTruth,
    bounds: &DVector<f64>,
    x0: &DVector<f64>,
    t0: f64,
    t1: f64,
    dt_integrate: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    if !(dt_integrate > 0.0) || !(t1 > t0) {
        return Err(Error::Input(format!(
            "simulate needs dt > 0 and t1 > t0 (dt = {dt_integrate}, t0 = {t0}, t1 = {t1})"
        )));
    }
    let nx = model.nx();
    if x0.len() != nx || bounds.len() != nx || k1.nrows() != model.nu1() || k1.ncols() != nx {
        return Err(Error::Input("simulate: dimension mismatch".into()));
    }
    let steps = ((t1 - t0) / dt_integrate).round().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let mut traj = Trajectory::default();
    let mut x = x0.clone();
    for k in 0..=steps {
        let t = t0 + k as f64 * h;
        let w = sample_disturbance(bounds, rng);
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.u1.push(-(k1 * &x));
        traj.u2.push(adversary_input(truth, &x, t));
        traj.w.push(w.clone());
        if k == steps {
            break;
        }
        let k1s = rhs(model, k1, truth, &x, t, &w);
        let k2s = rhs(model, k1, truth, &(&x + &k1s * (0.5 * h)), t + 0.5 * h, &w);
        let k3s = rhs(model, k1, truth, &(&x + &k2s * (0.5 * h)), t + 0.5 * h, &w);
        let k4s = rhs(model, k1, truth, &(&x + &k3s * h), t + h, &w);
        x += (k1s + k2s * 2.0 + k3s * 2.0 + k4s) * (h / 6.0);
        if !x.iter().all(|v| v.is_finite()) || x.norm() > BLOWUP {
            return Err(Error::Divergence { time: t + h });
        }
    }
    Ok(traj)
}

/// Samples `(ẋ, x, u1)` at grid times, with `ẋ` evaluated from the dynamics at
/// the recorded signals.
pub fn collect_samples(
    traj: &Trajectory,
    model: &GameModel,
    sample_times: &[f64],
) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(sample_times.len());
    for &s in sample_times {
        let tol = 1e-9 * (1.0 + s.abs());
        let k = traj
            .times
            .iter()
            .position(|&t| (t - s).abs() <= tol)
            .ok_or_else(|| {
                Error::Input(format!("sample time {s} is not on the trajectory grid"))
            })?;
        let x = traj.states[k].clone();
        let xdot = &model.a * &x + &model.b1 * &traj.u1[k] + &model.b2 * &traj.u2[k] + &traj.w[k];
        out.push(Sample {
            xdot,
            x,
            u1: traj.u1[k].clone(),
            t: traj.times[k],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ParamMask, UTilde};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mat(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    fn robot() -> GameModel {
        GameModel::new(
            mat(2, 2, &[0.0, 1.0, 0.0, 0.2 / 6.0]),
            mat(2, 1, &[0.0, 1.0 / 6.0]),
            mat(2, 1, &[0.0, 0.8 / 6.0]),
            ParamMask::from_rows(&[vec![false, false], vec![true, true]]).unwrap(),
        )
        .unwrap()
    }

    fn truth(k2: &[f64], amp: f64) -> NashGroundTruth {
        NashGroundTruth::new(
            mat(1, 2, k2),
            UTilde {
                amplitude: vec![amp],
                omega: 2.0 * std::f64::consts::PI,
                decay: 0.2,
            },
        )
        .unwrap()
    }

    #[test]
    fn adversary_input_examples() {
        let tr = truth(&[2.69, 1.37], 2.0);
        let u = adversary_input(&tr, &DVector::zeros(2), 0.0);
        assert!((u[0] - 2.0).abs() < 1e-15);
        let tr0 = truth(&[2.69, 1.37], 0.0);
        let x = DVector::from_vec(vec![1.0, 0.0]);
        assert!((adversary_input(&tr0, &x, 3.0)[0] + 2.69).abs() < 1e-15);
        // Decay drives ũ to zero.
        assert!((adversary_input(&tr, &x, 200.0)[0] + 2.69).abs() < 1e-15);
    }

    #[test]
    fn disturbance_draws_stay_in_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = DVector::from_vec(vec![0.5, 0.5]);
        for _ in 0..100_000 {
            let w = sample_disturbance(&b, &mut rng);
            assert!(w.iter().all(|v| v.abs() <= 0.5));
        }
        let z = DVector::zeros(2);
        assert_eq!(sample_disturbance(&z, &mut rng), DVector::zeros(2));
    }

    #[test]
    fn disturbance_mean_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = DVector::from_vec(vec![0.5]);
        let n = 1_000_000;
        let mean: f64 = (0..n)
            .map(|_| sample_disturbance(&b, &mut rng)[0])
            .sum::<f64>()
            / n as f64;
        let se = 0.5 / 3f64.sqrt() / (n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn nash_closed_loop_settles() {
        let m = robot();
        let tr = truth(&[2.6878, 1.3656], 0.0);
        let k1 = mat(1, 2, &[13.8067, 12.0488]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x0 = DVector::from_vec(vec![-3.0, 0.0]);
        let t = simulate(
            &m,
            &k1,
            &tr,
            &DVector::zeros(2),
            &x0,
            0.0,
            10.0,
            1e-3,
            &mut rng,
        )
        .unwrap();
        assert!(t.last_state().unwrap().norm() < 1e-2);
    }

    #[test]
    fn open_loop_matches_matrix_exponential() {
        let a = mat(2, 2, &[-1.0, 2.0, -0.5, -0.7]);
        let m = GameModel::new(
            a.clone(),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 1),
            ParamMask::full(2),
        )
        .unwrap();
        let tr = NashGroundTruth::new(DMatrix::zeros(1, 2), UTilde::zero(1)).unwrap();
        let x0 = DVector::from_vec(vec![1.0, -2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = simulate(
            &m,
            &DMatrix::zeros(1, 2),
            &tr,
            &DVector::zeros(2),
            &x0,
            0.0,
            3.0,
            1e-3,
            &mut rng,
        )
        .unwrap();
        let exact = (a * 3.0).exp() * &x0;
        assert!((t.last_state().unwrap() - exact).amax() < 1e-6);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let a = mat(2, 2, &[0.0, 1.0, -4.0, -0.3]);
        let m = GameModel::new(
            a,
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 1),
            ParamMask::full(2),
        )
        .unwrap();
        let tr = NashGroundTruth::new(DMatrix::zeros(1, 2), UTilde::zero(1)).unwrap();
        let x0 = DVector::from_vec(vec![1.0, 0.0]);
        let run = |dt: f64| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            simulate(
                &m,
                &DMatrix::zeros(1, 2),
                &tr,
                &DVector::zeros(2),
                &x0,
                0.0,
                2.0,
                dt,
                &mut rng,
            )
            .unwrap()
            .last_state()
            .unwrap()
            .clone()
        };
        let dt = 0.04;
        let reference = run(dt / 8.0);
        let e1 = (run(dt) - &reference).norm();
        let e2 = (run(dt / 2.0) - &reference).norm();
        let ratio = e1 / e2;
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn equilibrium_stays_at_rest() {
        let m = robot();
        let tr = truth(&[2.69, 1.37], 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = simulate(
            &m,
            &mat(1, 2, &[1.0, 1.0]),
            &tr,
            &DVector::zeros(2),
            &DVector::zeros(2),
            0.0,
            1.0,
            1e-2,
            &mut rng,
        )
        .unwrap();
        assert!(t.states.iter().all(|x| x.amax() == 0.0));
    }

    #[test]
    fn divergence_is_reported() {
        let m = GameModel::new(
            mat(1, 1, &[50.0]),
            mat(1, 1, &[1.0]),
            mat(1, 1, &[0.0]),
            ParamMask::full(1),
        )
        .unwrap();
        let tr = NashGroundTruth::new(DMatrix::zeros(1, 1), UTilde::zero(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = simulate(
            &m,
            &mat(1, 1, &[0.0]),
            &tr,
            &DVector::zeros(1),
            &DVector::from_element(1, 1.0),
            0.0,
            10.0,
            1e-2,
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Divergence { time } if time > 0.0 && time < 10.0));
        assert_eq!(err.exit_code(), 5);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let m = robot();
        let tr = truth(&[2.69, 1.37], 2.0);
        let k1 = mat(1, 2, &[10.0, 10.0]);
        let b = DVector::from_vec(vec![0.5, 0.5]);
        let x0 = DVector::from_vec(vec![-3.0, 0.0]);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            simulate(&m, &k1, &tr, &b, &x0, 0.0, 1.0, 1e-3, &mut rng).unwrap()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn samples_are_exact_rhs_evaluations() {
        let m = robot();
        let tr = truth(&[2.69, 1.37], 2.0);
        let k1 = mat(1, 2, &[10.0, 10.0]);
        let gamma = DVector::from_vec(vec![0.5, 0.5]);
        let x0 = DVector::from_vec(vec![-3.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = simulate(&m, &k1, &tr, &gamma, &x0, 0.0, 0.03, 1e-3, &mut rng).unwrap();
        let s = collect_samples(&t, &m, &[0.0, 0.01, 0.02]).unwrap();
        assert_eq!(s.len(), 3);
        assert!(collect_samples(&t, &m, &[]).unwrap().is_empty());
        assert!(matches!(
            collect_samples(&t, &m, &[0.0105]),
            Err(Error::Input(_))
        ));
        // Membership in the lumped set w + B2 ũ, with the true policy.
        let policy = &m.b2 * &tr.k2_star;
        let lumped = DVector::from_vec(vec![0.5, 0.5 + 0.8 / 6.0 * 2.0]);
        for smp in &s {
            let k = t.times.iter().position(|&tt| tt == smp.t).unwrap();
            let expect =
                &m.a * &t.states[k] - &m.b1 * (&k1 * &t.states[k]) + &m.b2 * &t.u2[k] + &t.w[k];
            assert!((&smp.xdot - expect).amax() <= 1e-15);
            let wt = &smp.xdot - &m.a * &smp.x - &m.b1 * &smp.u1 + &policy * &smp.x;
            assert!(wt
                .iter()
                .zip(lumped.iter())
                .all(|(v, g)| v.abs() <= *g + 1e-12));
        }
    }

    #[test]
    fn csv_has_expected_header() {
        let m = robot();
        let tr = truth(&[2.69, 1.37], 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = simulate(
            &m,
            &mat(1, 2, &[1.0, 1.0]),
            &tr,
            &DVector::from_vec(vec![0.5, 0.5]),
            &DVector::zeros(2),
            0.0,
            0.01,
            1e-3,
            &mut rng,
        )
        .unwrap();
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,u1_1,u2_1,w_1,w_2");
        assert_eq!(lines.count(), 11);
    }

    #[test]
    fn extend_joins_segments() {
        let m = robot();
        let tr = truth(&[2.69, 1.37], 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let k = mat(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![0.5, 0.5]);
        let mut a = simulate(
            &m,
            &k,
            &tr,
            &b,
            &DVector::zeros(2),
            0.0,
            0.01,
            1e-3,
            &mut rng,
        )
        .unwrap();
        let x = a.last_state().unwrap().clone();
        let b2 = simulate(&m, &k, &tr, &b, &x, 0.01, 0.02, 1e-3, &mut rng).unwrap();
        a.extend(&b2);
        assert_eq!(a.len(), 21);
        assert!(a.times.windows(2).all(|w| w[1] > w[0]));
    }
}
