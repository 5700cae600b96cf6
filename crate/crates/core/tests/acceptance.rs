//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lqgame::config::Scenario;
use lqgame::estimator::{obe_update, Ellipsoid};
use lqgame::harness::{
    measured_cost_gap, run_algorithm1, sweep_ls_comparison, DataGain, Experiment,
};
use lqgame::linalg;
use lqgame::lp::{self, LpOutcome};
use lqgame::polytope::{enumerate_vertices, HPolytope, VPolytope};
use lqgame::riccati::{care_residual, solve_care};
use lqgame::robust_design::{
    build_problem, random_simplex_weights, solve_robust_lqr, verify_quadratic_stability,
};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn within_time(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure!(
        t < limit,
        "took {:.1} s, limit {:.0} s",
        t.as_secs_f64(),
        limit.as_secs_f64()
    );
    Ok(t)
}

fn contact() -> Result<Scenario, String> {
    ok(Scenario::builtin("contact_robot"))
}

fn contact_run(seed: u64) -> Result<Experiment, String> {
    let mut s = contact()?;
    s.seed = seed;
    ok(run_algorithm1(&s))
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let setup = ok(contact()?.build())?;
    let t = within_time(start, Duration::from_secs(1))?;
    let k1 = &setup.nash.k1_star;
    let k2 = &setup.nash.k2_star;
    let close =
        |m: &DMatrix<f64>, want: [f64; 2]| (0..2).all(|j| (m[(0, j)] - want[j]).abs() <= 0.05);
    ensure!(close(k1, [13.81, 12.05]), "K1* = {:?}", linalg::to_rows(k1));
    ensure!(close(k2, [2.69, 1.37]), "K2* = {:?}", linalg::to_rows(k2));
    Ok(format!(
        "K1* = [{:.4}, {:.4}], K2* = [{:.4}, {:.4}] in {:.1} ms",
        k1[(0, 0)],
        k1[(0, 1)],
        k2[(0, 0)],
        k2[(0, 1)],
        t.as_secs_f64() * 1e3
    ))
}

fn criterion_2() -> Check {
    let start = Instant::now();
    let exp = contact_run(contact()?.seed)?;
    let t = within_time(start, Duration::from_secs(30))?;
    let term = exp.record.terminal.as_ref().ok_or("no terminal record")?;
    let iters = exp.record.iterations.len() - 1;
    ensure!(iters <= 40, "{iters} iterations");
    ensure!(
        term.gap_inf <= 0.5,
        "gap {:.3} > 0.5 (K1 = {:?})",
        term.gap_inf,
        term.k1_final
    );
    Ok(format!(
        "K1 = [{:.3}, {:.3}], gap {:.3} after {iters} iterations ({}) in {:.2} s",
        term.k1_final[0][0],
        term.k1_final[0][1],
        term.gap_inf,
        term.stop_reason,
        t.as_secs_f64()
    ))
}

fn criterion_3() -> Check {
    let exp = contact_run(contact()?.seed)?;
    let vols = exp.record.volumes();
    for j in 1..vols.len() {
        ensure!(
            vols[j] <= vols[j - 1] * (1.0 + 1e-12),
            "volume rises at iteration {j}: {} -> {}",
            vols[j - 1],
            vols[j]
        );
    }
    let term = exp.record.terminal.as_ref().ok_or("no terminal record")?;
    let last = exp.record.iterations.last().ok_or("no iterations")?;
    let omega = ok(HPolytope::from_record(&last.omega))?;
    let truth = DVector::from_vec(term.theta_true.clone());
    ensure!(
        (truth[0] - 0.36).abs() < 0.005 && (truth[1] - 0.18).abs() < 0.005,
        "true point {:?}",
        term.theta_true
    );
    ensure!(
        omega.contains(&truth, 1e-9),
        "terminal polygon misses the true point"
    );
    Ok(format!(
        "{} volumes nonincreasing ({:.3e} -> {:.3e}); terminal polygon ({} vertices) contains ({:.4}, {:.4})",
        vols.len(),
        vols[0],
        vols[vols.len() - 1],
        last.vertex_count,
        truth[0],
        truth[1]
    ))
}

fn criterion_4() -> Check {
    let start = Instant::now();
    let s = contact()?;
    let seeds: Vec<u64> = (0..20).collect();
    let records = ok(sweep_ls_comparison(&s, 9, &seeds, DataGain::Nash)
        .into_iter()
        .collect::<lqgame::Result<Vec<_>>>())?;
    let t = within_time(start, Duration::from_secs(60))?;
    for r in &records {
        ensure!(
            r.robust_all_stable,
            "seed {}: robust gain destabilizes a vertex",
            r.seed
        );
    }
    let failing: Vec<u64> = records
        .iter()
        .filter(|r| !r.ls_all_stable)
        .map(|r| r.seed)
        .collect();
    ensure!(
        !failing.is_empty(),
        "no seed shows an unstable LS vertex loop"
    );
    let worst = records
        .iter()
        .flat_map(|r| r.ls_abscissa.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let vertices: Vec<usize> = records.iter().map(|r| r.vertices.len()).collect();
    Ok(format!(
        "robust stable at all vertices on 20/20 seeds (vertex counts {}..{}); LS unstable on seeds {failing:?} (max abscissa {worst:.3}) in {:.1} s",
        vertices.iter().min().unwrap(),
        vertices.iter().max().unwrap(),
        t.as_secs_f64()
    ))
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let s = ok(Scenario::builtin("example2"))?;
    let exp = ok(run_algorithm1(&s))?;
    let t = within_time(start, Duration::from_secs(300))?;
    let term = exp.record.terminal.as_ref().ok_or("no terminal record")?;
    let k = ok(linalg::from_rows(&term.k1_final))?;
    let k_star = ok(linalg::from_rows(&term.k1_star))?;
    let rel = (&k - &k_star).norm() / k_star.norm();
    ensure!(rel <= 0.10, "relative error {rel:.3} > 0.10");
    for it in &exp.record.iterations {
        ensure!(
            it.max_vertex_abscissa < 0.0,
            "iteration {}: vertex abscissa {:.3e}",
            it.iteration,
            it.max_vertex_abscissa
        );
    }
    let max_v = exp
        .record
        .iterations
        .iter()
        .map(|i| i.vertex_count)
        .max()
        .unwrap_or(0);
    let worst = exp
        .record
        .iterations
        .iter()
        .map(|i| i.max_vertex_abscissa)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(format!(
        "relative error {:.2}% after {} iterations; every gain stabilizes every vertex (worst abscissa {worst:.3}, up to {max_v} vertices) in {:.1} s",
        rel * 100.0,
        exp.record.iterations.len() - 1,
        t.as_secs_f64()
    ))
}

fn never_falsify() -> Check {
    let mut checked = 0;
    for seed in 0..10 {
        let exp = contact_run(seed).map_err(|e| format!("seed {seed}: {e}"))?;
        let term = exp.record.terminal.as_ref().ok_or("no terminal record")?;
        let truth = DVector::from_vec(term.theta_true.clone());
        for it in &exp.record.iterations {
            let omega = ok(HPolytope::from_record(&it.omega))?;
            ensure!(
                omega.contains(&truth, 1e-9),
                "seed {seed}: truth outside Ω at iteration {}",
                it.iteration
            );
            checked += 1;
        }
        let mask = ok(exp.record.config.build())?.model.param_mask;
        for e in &term.ellipsoids {
            let e = ok(e.to_ellipsoid())?;
            let idx = mask.row_params(e.row);
            let sub = DVector::from_fn(idx.len(), |i, _| truth[idx[i]]);
            ensure!(
                e.normalized_distance(&sub) <= 1.0 + 1e-9,
                "seed {seed}: truth outside the row ellipsoid"
            );
        }
    }
    Ok(format!("truth in {checked} Ω iterates over 10 seeds"))
}

fn convex_combination() -> Check {
    let exp = contact_run(contact()?.seed)?;
    let setup = ok(contact()?.build())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut solutions = 0;
    for it in exp.record.iterations.iter().step_by(5) {
        let omega = ok(HPolytope::from_record(&it.omega))?;
        let v = ok(enumerate_vertices(&omega))?;
        let p = ok(build_problem(
            &setup.model,
            &setup.w1,
            &v,
            &setup.model.param_mask,
            512,
        ))?;
        let sol = ok(solve_robust_lqr(&p))?;
        let report = verify_quadratic_stability(&sol, &p, 100, it.iteration as u64);
        ensure!(
            report.passed(),
            "iteration {}: {:?}",
            it.iteration,
            report.failures
        );
        let y = &sol.k1 * &sol.wc;
        for _ in 0..100 {
            let w = random_simplex_weights(p.vertex_policies.len(), &mut rng);
            let mut d = DMatrix::zeros(2, 2);
            let mut combined = DMatrix::zeros(2, 2);
            for (wi, vp) in w.iter().zip(&p.vertex_policies) {
                d += vp * *wi;
                combined += p.lmi_at(vp, &sol.wc, &y) * *wi;
            }
            let direct = p.lmi_at(&d, &sol.wc, &y);
            ensure!(
                (&direct - &combined).amax() <= 1e-9 * (1.0 + combined.amax()),
                "LMI is not affine in the policy"
            );
        }
        solutions += 1;
    }
    Ok(format!("{solutions} solutions x 100 combinations"))
}

fn random_care() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let n = rng.random_range(2..=6);
        let m = rng.random_range(1..=3);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let mq = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let mr = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let q = mq.transpose() * &mq + DMatrix::identity(n, n) * 0.1;
        let r = mr.transpose() * &mr + DMatrix::identity(m, m);
        let sol = solve_care(&a, &b, &q, &r).map_err(|e| format!("system {k}: {e}"))?;
        let res = ok(care_residual(&a, &b, &q, &r, &sol.p))?;
        ensure!(res <= 1e-8, "system {k}: scaled residual {res:.2e}");
        worst = worst.max(res);
    }
    Ok(format!("100 systems, worst scaled residual {worst:.1e}"))
}

fn random_polytope(p: usize, cuts: usize, rng: &mut ChaCha8Rng) -> HPolytope {
    let mut e = DMatrix::zeros(cuts, p);
    let mut b = DVector::zeros(cuts);
    for i in 0..cuts {
        let a: DVector<f64> = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
        e.row_mut(i).copy_from(&a.transpose());
        b[i] = rng.random_range(0.3..0.9) * a.norm();
    }
    let cube = HPolytope::from_box(
        &DVector::from_element(p, -1.0),
        &DVector::from_element(p, 1.0),
    )
    .unwrap();
    cube.add_halfspaces(&e, &b, false).unwrap()
}

/// Whether `x` lies in the convex hull of the vertices: no hyperplane
/// `cᵀθ = t` with `‖c‖∞ ≤ 1` separates it (LP in `(c, t)`).
fn in_hull(v: &VPolytope, x: &DVector<f64>) -> bool {
    let n = v.len();
    let p = x.len();
    let mut a = DMatrix::zeros(n + 2 * p, p + 1);
    let mut b = DVector::zeros(n + 2 * p);
    for (i, vi) in v.vertices.iter().enumerate() {
        for r in 0..p {
            a[(i, r)] = vi[r];
        }
        a[(i, p)] = -1.0;
    }
    for r in 0..p {
        a[(n + 2 * r, r)] = 1.0;
        a[(n + 2 * r + 1, r)] = -1.0;
        b[n + 2 * r] = 1.0;
        b[n + 2 * r + 1] = 1.0;
    }
    let mut c = DVector::from_element(p + 1, -1.0);
    c.rows_mut(0, p).copy_from(x);
    match lp::maximize(&c, &a, &b) {
        LpOutcome::Optimal { value, .. } => value <= 1e-8,
        other => panic!("separation LP: {other:?}"),
    }
}

fn polytope_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut parts = Vec::new();
    for (p, cuts, points) in [(2, 8, 10_000), (5, 10, 3_000), (9, 12, 1_000)] {
        let poly = random_polytope(p, cuts, &mut rng);
        let v = ok(enumerate_vertices(&poly))?;
        let mut compared = 0;
        while compared < points {
            let x = DVector::from_fn(p, |_, _| rng.random_range(-1.05..1.05));
            if poly.max_violation(&x).abs() < 1e-6 {
                continue;
            }
            ensure!(
                poly.contains(&x, 0.0) == in_hull(&v, &x),
                "{p}-D: H and V membership disagree at {x:?}"
            );
            compared += 1;
        }
        parts.push(format!("{p}-D {} vertices x {points} points", v.len()));
    }
    Ok(parts.join(", "))
}

fn obe_containment() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let trials = 300;
    for trial in 0..trials {
        let p = rng.random_range(1..=4);
        let gamma = rng.random_range(0.05..1.0);
        let lower = DVector::from_element(p, -2.0);
        let upper = DVector::from_element(p, 2.0);
        let theta = DVector::from_fn(p, |_, _| rng.random_range(-2.0..2.0));
        let mut e = ok(Ellipsoid::from_box(&lower, &upper, gamma, 0))?;
        for step in 0..60 {
            let x = DVector::from_fn(p, |_, _| rng.random_range(-3.0..3.0));
            let y = theta.dot(&x) + rng.random_range(-gamma..gamma);
            e = obe_update(&e, &x, y, gamma)
                .map_err(|err| format!("trial {trial} step {step}: {err}"))?;
            ensure!(
                e.normalized_distance(&theta) <= 1.0 + 1e-9,
                "trial {trial} step {step}: truth left the ellipsoid"
            );
        }
    }
    Ok(format!("{trials} trials x 60 steps"))
}

fn epsilon_soundness() -> Check {
    let s = contact()?;
    let exp = ok(run_algorithm1(&s))?;
    let term = exp.record.terminal.as_ref().ok_or("no terminal record")?;
    ensure!(
        term.stop_reason == "converged",
        "run did not converge ({})",
        term.stop_reason
    );
    let cert = term
        .certificate
        .as_ref()
        .ok_or_else(|| format!("no certificate: {:?}", term.certificate_error))?;
    let k1 = ok(linalg::from_rows(&term.k1_final))?;
    let gap = ok(measured_cost_gap(&s, &k1))?;
    ensure!(
        gap <= cert.epsilon,
        "measured gap {gap:.4} > ε {:.4}",
        cert.epsilon
    );
    Ok(format!("measured gap {gap:.4} <= ε {:.4}", cert.epsilon))
}

fn criterion_6() -> Check {
    let suites: [(&str, fn() -> Check); 6] = [
        ("never-falsify", never_falsify),
        ("convex-combination", convex_combination),
        ("CARE", random_care),
        ("round-trip", polytope_round_trip),
        ("OBE", obe_containment),
        ("ε-soundness", epsilon_soundness),
    ];
    let mut parts = Vec::new();
    for (name, f) in suites {
        match f() {
            Ok(m) => parts.push(format!("{name}: {m}")),
            Err(m) => return Err(format!("{name}: {m}")),
        }
    }
    Ok(parts.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 6] = [
        ("1 Nash ground truth", criterion_1),
        ("2 convergence", criterion_2),
        ("3 uncertainty contraction", criterion_3),
        ("4 robustness vs least squares", criterion_4),
        ("5 scalability", criterion_5),
        ("6 property suites", criterion_6),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(m) => println!("PASS criterion {name}: {m} [{secs:.1} s]"),
            Err(m) => {
                failed += 1;
                println!("FAIL criterion {name}: {m} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
