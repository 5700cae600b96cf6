//! Fixed inputs shared by the solver benchmarks.

use lqgame::polytope::HPolytope;
use nalgebra::{DMatrix, DVector};

/// Deterministic pseudo-random values in `[-1, 1)` (no RNG dependency).
fn values(seed: u64, n: usize) -> Vec<f64> {
    let mut s = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

pub fn matrix(seed: u64, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_vec(r, c, values(seed, r * c))
}

/// Unit cube in `p` dimensions cut by `cuts` random halfspaces.
pub fn random_polytope(p: usize, cuts: usize, seed: u64) -> HPolytope {
    let e = matrix(seed, cuts, p);
    let offsets = values(seed ^ 0x9e37, cuts);
    let b = DVector::from_fn(cuts, |i, _| (0.55 + 0.35 * offsets[i]) * e.row(i).norm());
    let cube = HPolytope::from_box(
        &DVector::from_element(p, -1.0),
        &DVector::from_element(p, 1.0),
    )
    .expect("box");
    cube.add_halfspaces(&e, &b, true).expect("bounded cut")
}
