use rand::Rng;
use rayon::prelude::*;

use super::similarity::Similarity;
use crate::error::{Error, Result};
use crate::measures::tessellate;
use crate::numeric::rng_from_seed;
use crate::points::Points;
use crate::region::BoxRegion;

#[derive(Clone, Debug, PartialEq)]
pub enum InitStrategy {
    /// k-means++ style seeding with weights `min loss^(r/2)`.
    KmeansPlusPlus,
    /// Cell midpoints of an `m^d >= n` grid on the sample bounding box.
    Grid,
    Given(Points),
}

/// `n` midpoints of the cells of the coarsest `m`-per-axis grid on `region`
/// with `m^d >= n`; when `m^d > n`, cells `floor(k m^d / n)` are kept.
pub fn grid_points(region: &BoxRegion, n: usize) -> Result<Points> {
    if n == 0 {
        return Err(Error::InvalidParameter("level n must be >= 1".into()));
    }
    let d = region.dim();
    let mut m = (n as f64).powf(1.0 / d as f64).round().max(1.0) as usize;
    while m.pow(d as u32) < n {
        m += 1;
    }
    while m > 1 && (m - 1).pow(d as u32) >= n {
        m -= 1;
    }
    let unit = tessellate(&BoxRegion::unit(d), m)?;
    let total = unit.num_cells();
    let widths = region.widths();
    let mut out = Points::with_capacity(d, n);
    for k in 0..n {
        let c = unit.cell(k * total / n).center;
        let p: Vec<f64> = (0..d).map(|i| region.lo[i] + widths[i] * c[i]).collect();
        out.push(&p);
    }
    Ok(out)
}

/// Initial codewords for Lloyd iterations.
pub fn init_seed(
    samples: &Points,
    n: usize,
    r: f64,
    sim: &Similarity,
    strategy: &InitStrategy,
    seed: u64,
) -> Result<Points> {
    if n == 0 {
        return Err(Error::InvalidParameter("level n must be >= 1".into()));
    }
    match strategy {
        InitStrategy::Given(p) => {
            if p.len() != n {
                return Err(Error::InvalidParameter(format!(
                    "given codebook has {} codewords, expected {n}",
                    p.len()
                )));
            }
            if p.dim() != sim.dim() {
                return Err(Error::Dimension {
                    expected: sim.dim(),
                    got: p.dim(),
                });
            }
            p.iter().try_for_each(|a| sim.domain().check(a))?;
            Ok(p.clone())
        }
        InitStrategy::Grid => {
            let bbox = samples
                .bounding_box()
                .ok_or_else(|| Error::Empty("no samples".into()))?;
            // flat directions get a unit-width box around the common value
            let lo: Vec<f64> = bbox
                .lo
                .iter()
                .zip(&bbox.hi)
                .map(|(a, b)| if a < b { *a } else { a - 0.5 })
                .collect();
            let hi: Vec<f64> = bbox
                .lo
                .iter()
                .zip(&bbox.hi)
                .map(|(a, b)| if a < b { *b } else { b + 0.5 })
                .collect();
            let mut pts = grid_points(&BoxRegion::new(lo, hi)?, n)?;
            for i in 0..pts.len() {
                sim.domain().project(pts.row_mut(i), 1e-9);
            }
            Ok(pts)
        }
        InitStrategy::KmeansPlusPlus => kmeans_pp(samples, n, r, sim, seed),
    }
}

fn pick<R: Rng>(rng: &mut R, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            acc += w;
            last_positive = Some(i);
            if u < acc {
                return Some(i);
            }
        }
    }
    last_positive
}

fn kmeans_pp(samples: &Points, n: usize, r: f64, sim: &Similarity, seed: u64) -> Result<Points> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples".into()));
    }
    let mut rng = rng_from_seed(seed);
    let d = samples.dim();
    let mut chosen = Points::with_capacity(d, n);
    let first = rng.random_range(0..samples.len());
    chosen.push(samples.row(first));
    let mut best: Vec<f64> = vec![f64::INFINITY; samples.len()];
    let mut weights = vec![0.0; samples.len()];
    for _ in 1..n {
        let a = chosen.row(chosen.len() - 1).to_vec();
        best.par_iter_mut()
            .zip(weights.par_iter_mut())
            .enumerate()
            .for_each(|(i, (b, w))| {
                let xi = samples.row(i);
                let v = if xi == a.as_slice() {
                    0.0
                } else {
                    sim.eval(xi, &a).max(0.0)
                };
                if v < *b {
                    *b = v;
                }
                *w = b.powf(0.5 * r);
            });
        let next = pick(&mut rng, &weights).ok_or_else(|| {
            Error::Degenerate(format!(
                "fewer than {n} distinct samples for k-means++ seeding"
            ))
        })?;
        chosen.push(samples.row(next));
    }
    Ok(chosen)
}
