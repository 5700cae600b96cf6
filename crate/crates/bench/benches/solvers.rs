use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use lqgame::config::Scenario;
use lqgame::harness::run_algorithm1;
use lqgame::lp;
use lqgame::polytope::enumerate_vertices;
use lqgame::riccati::{solve_care, solve_coupled_care};
use lqgame::robust_design::{build_problem, solve_robust_lqr};
use lqgame_bench::{matrix, random_polytope};
use nalgebra::{DMatrix, DVector};

fn linear_programs(c: &mut Criterion) {
    let poly = random_polytope(9, 30, 1);
    c.bench_function("lp_chebyshev_9d", |b| {
        b.iter(|| lp::chebyshev_center(black_box(poly.e()), black_box(poly.b())))
    });
    let dir = DVector::from_element(9, 1.0);
    c.bench_function("lp_maximize_9d", |b| {
        b.iter(|| lp::maximize(black_box(&dir), poly.e(), poly.b()))
    });
}

fn vertices(c: &mut Criterion) {
    for (p, cuts) in [(2, 12), (5, 10), (9, 6)] {
        let poly = random_polytope(p, cuts, 2);
        c.bench_function(&format!("vertices_{p}d"), |b| {
            b.iter(|| enumerate_vertices(black_box(&poly)).unwrap())
        });
    }
}

fn riccati(c: &mut Criterion) {
    let n = 6;
    let a = matrix(3, n, n);
    let b1 = matrix(4, n, 2);
    let q = DMatrix::identity(n, n);
    let r = DMatrix::identity(2, 2);
    c.bench_function("care_6x6", |b| {
        b.iter(|| solve_care(black_box(&a), &b1, &q, &r).unwrap())
    });
    let s = Scenario::builtin("contact_robot").unwrap();
    let m = |rows: &Vec<Vec<f64>>| lqgame::linalg::from_rows(rows).unwrap();
    let (a, b1, b2) = (m(&s.a), m(&s.b1), m(&s.b2));
    let (q1, q2, r1, r2) = (m(&s.q1), m(&s.q2), m(&s.r1), m(&s.r2));
    c.bench_function("coupled_care_contact", |b| {
        b.iter(|| solve_coupled_care(&a, &b1, &b2, &q1, &q2, &r1, &r2).unwrap())
    });
}

fn robust_sdp(c: &mut Criterion) {
    let setup = Scenario::builtin("contact_robot").unwrap().build().unwrap();
    let v = enumerate_vertices(&setup.omega0).unwrap();
    let p = build_problem(&setup.model, &setup.w1, &v, &setup.model.param_mask, 512).unwrap();
    c.bench_function("robust_sdp_box_4_vertices", |b| {
        b.iter(|| solve_robust_lqr(black_box(&p)).unwrap())
    });
}

fn full_run(c: &mut Criterion) {
    let s = Scenario::builtin("contact_robot").unwrap();
    let mut g = c.benchmark_group("algorithm");
    g.sample_size(10);
    g.bench_function("contact_robot_run", |b| {
        b.iter(|| run_algorithm1(black_box(&s)).unwrap())
    });
    g.finish();
}

criterion_group!(
    benches,
    linear_programs,
    vertices,
    riccati,
    robust_sdp,
    full_run
);
criterion_main!(benches);
