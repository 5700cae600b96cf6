//! Polytope volume: exact up to three dimensions per independent block,
//! Monte-Carlo above.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::vertices::{column_blocks_of, enumerate_vertices};
use super::HPolytope;
use crate::error::{Error, Result};

pub const MC_SAMPLES: usize = 1_000_000;
const MC_SEED: u64 = 0x5eed_f00d;
const MC_CHUNK: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    /// Zero for exact results.
    pub std_error: f64,
}

impl VolumeEstimate {
    fn exact(value: f64) -> Self {
        VolumeEstimate {
            value,
            std_error: 0.0,
        }
    }
}

/// Area of a convex polygon from its unordered vertices.
fn polygon_area(points: &[DVector<f64>]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p[0], p[1])).collect();
    pts.sort_by(|a, b| {
        let ta = (a.1 - cy).atan2(a.0 - cx);
        let tb = (b.1 - cy).atan2(b.0 - cx);
        ta.total_cmp(&tb)
    });
    let mut s = 0.0;
    for i in 0..pts.len() {
        let (x0, y0) = pts[i];
        let (x1, y1) = pts[(i + 1) % pts.len()];
        s += x0 * y1 - x1 * y0;
    }
    0.5 * s.abs()
}

/// Volume of a 3-D polytope as a sum of pyramids over its facets.
fn polyhedron_volume(e: &DMatrix<f64>, b: &DVector<f64>, vertices: &[DVector<f64>]) -> f64 {
    if vertices.len() < 4 {
        return 0.0;
    }
    let mut c = DVector::zeros(3);
    for v in vertices {
        c += v;
    }
    c /= vertices.len() as f64;
    let scale = 1.0 + b.amax();
    let mut total = 0.0;
    for i in 0..e.nrows() {
        let n = e.row(i).transpose();
        let on: Vec<&DVector<f64>> = vertices
            .iter()
            .filter(|v| (n.dot(v) - b[i]).abs() <= 1e-9 * scale)
            .collect();
        if on.len() < 3 {
            continue;
        }
        // Orthonormal basis (u, w) of the facet plane.
        let pick = if n[0].abs() < 0.9 {
            DVector::from_vec(vec![1.0, 0.0, 0.0])
        } else {
            DVector::from_vec(vec![0.0, 1.0, 0.0])
        };
        let u = {
            let t = &pick - &n * n.dot(&pick);
            let l = t.norm();
            t / l
        };
        let w = DVector::from_vec(vec![
            n[1] * u[2] - n[2] * u[1],
            n[2] * u[0] - n[0] * u[2],
            n[0] * u[1] - n[1] * u[0],
        ]);
        let flat: Vec<DVector<f64>> = on
            .iter()
            .map(|v| DVector::from_vec(vec![u.dot(v), w.dot(v)]))
            .collect();
        let mut uniq: Vec<DVector<f64>> = Vec::new();
        for f in flat {
            if !uniq.iter().any(|g| (g - &f).amax() <= 1e-12 * scale) {
                uniq.push(f);
            }
        }
        let area = polygon_area(&uniq);
        let height = b[i] - n.dot(&c);
        total += area * height / 3.0;
    }
    total.max(0.0)
}

/// Hit-ratio estimate over the bounding box of `vertices` with a seeded stream.
pub fn monte_carlo_volume(
    poly: &HPolytope,
    vertices: &[DVector<f64>],
    samples: usize,
    seed: u64,
) -> VolumeEstimate {
    let p = poly.dim();
    if vertices.is_empty() || samples == 0 {
        return VolumeEstimate::exact(0.0);
    }
    let mut lo = vertices[0].clone();
    let mut hi = vertices[0].clone();
    for v in vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    let box_volume: f64 = (0..p).map(|j| hi[j] - lo[j]).product();
    if !(box_volume > 0.0) {
        return VolumeEstimate::exact(0.0);
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(c as u64));
            let n = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut x = DVector::zeros(p);
            let mut count = 0;
            for _ in 0..n {
                for j in 0..p {
                    x[j] = lo[j] + (hi[j] - lo[j]) * rng.random::<f64>();
                }
                if poly.contains(&x, 0.0) {
                    count += 1;
                }
            }
            count
        })
        .sum();
    let ratio = hits as f64 / samples as f64;
    VolumeEstimate {
        value: box_volume * ratio,
        std_error: box_volume * (ratio * (1.0 - ratio) / samples as f64).sqrt(),
    }
}

impl HPolytope {
    /// Volume of a bounded polytope; an empty set has volume 0.
    ///
    /// Independent coordinate blocks multiply. Blocks of dimension ≤ 3 are
    /// exact (interval, shoelace, facet pyramids); larger blocks use
    /// [`monte_carlo_volume`] with [`MC_SAMPLES`] draws.
    pub fn volume(&self) -> Result<VolumeEstimate> {
        if self.is_empty() {
            return Ok(VolumeEstimate::exact(0.0));
        }
        if !self.is_bounded() {
            return Err(Error::Contract("volume needs a bounded polytope".into()));
        }
        let mut value = 1.0;
        let mut rel_var = 0.0;
        for (k, (cols, e, b)) in column_blocks_of(self).into_iter().enumerate() {
            let block = HPolytope { e, b };
            let v = enumerate_vertices(&block)?;
            let est = match cols.len() {
                1 => {
                    let xs: Vec<f64> = v.vertices.iter().map(|x| x[0]).collect();
                    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
                    VolumeEstimate::exact(hi - lo)
                }
                2 => VolumeEstimate::exact(polygon_area(&v.vertices)),
                3 => VolumeEstimate::exact(polyhedron_volume(&block.e, &block.b, &v.vertices)),
                _ => monte_carlo_volume(
                    &block,
                    &v.vertices,
                    MC_SAMPLES,
                    MC_SEED.wrapping_add(k as u64),
                ),
            };
            if est.value == 0.0 {
                return Ok(VolumeEstimate::exact(0.0));
            }
            rel_var += (est.std_error / est.value).powi(2);
            value *= est.value;
        }
        Ok(VolumeEstimate {
            value,
            std_error: value * rel_var.sqrt(),
        })
    }
}
