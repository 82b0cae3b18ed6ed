use super::codebook::Codebook;
use super::init::grid_points;
use crate::divergence::DivergenceSpec;
use crate::error::{Error, Result};
use crate::measures::{ProxyMeasure, Tessellation};
use crate::points::Points;

/// Reverse-Hölder level allocation: `x_i = y_i^(d/(d+r)) / sum_j y_j^(d/(d+r))`
/// and `n_i = floor(n x_i)`, so `sum n_i <= n`.
pub fn allocate_levels(weights: &[f64], n: usize, d: usize, r: f64) -> Result<Vec<usize>> {
    if weights.is_empty() {
        return Err(Error::Empty("no weights to allocate".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "allocation weights must be positive, got {w}"
        )));
    }
    let p = d as f64 / (d as f64 + r);
    let powered: Vec<f64> = weights.iter().map(|w| w.powf(p)).collect();
    let total: f64 = powered.iter().sum();
    let mut levels: Vec<usize> = powered
        .iter()
        .map(|y| (n as f64 * y / total + 1e-9).floor() as usize)
        .collect();
    // the 1e-9 nudge absorbs rounding below exact integers; never exceed n
    while levels.iter().sum::<usize>() > n {
        let k = (0..levels.len())
            .max_by_key(|&k| (levels[k], usize::MAX - k))
            .expect("non-empty");
        levels[k] -= 1;
    }
    Ok(levels)
}

/// Largest deviation `|hess(x) - hess(c_i)|` (spectral norm) between cell
/// centers and the corners and face centers of their active cells.
pub fn hessian_modulus(spec: &DivergenceSpec, tess: &Tessellation) -> f64 {
    let d = tess.dim();
    let mut worst = 0.0f64;
    for &i in tess.active() {
        let cell = tess.cell(i);
        let h0 = spec.hess(&cell.center);
        let mut probes: Vec<Vec<f64>> = (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|k| {
                        cell.center[k]
                            + if mask >> k & 1 == 1 { 1.0 } else { -1.0 } * cell.half_width
                    })
                    .collect()
            })
            .collect();
        for k in 0..d {
            for s in [-1.0, 1.0] {
                let mut p = cell.center.clone();
                p[k] += s * cell.half_width;
                probes.push(p);
            }
        }
        for p in probes.iter().filter(|p| spec.domain().contains_guarded(p)) {
            let diff = spec.hess(p) - &h0;
            worst = worst.max(
                diff.symmetric_eigenvalues()
                    .iter()
                    .fold(0.0f64, |a, v| a.max(v.abs())),
            );
        }
    }
    worst
}

/// Concatenation of per-cell grid codebooks with reverse-Hölder level counts.
///
/// Cell `i` carries weight `y_i = det(hess(c_i))^(r/(2d)) p_i`; cells with
/// `p_i = 0` receive no codewords.
pub fn compose_local(
    tess: &Tessellation,
    proxy: &ProxyMeasure,
    spec: &DivergenceSpec,
    r: f64,
    n: usize,
) -> Result<Codebook> {
    let d = tess.dim();
    if spec.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            got: spec.dim(),
        });
    }
    let probs = proxy.probs();
    let cells: Vec<usize> = tess
        .active()
        .iter()
        .copied()
        .filter(|&i| probs[i] > 0.0)
        .collect();
    if cells.is_empty() {
        return Err(Error::Degenerate("all cell weights are zero".into()));
    }
    let mut weights = Vec::with_capacity(cells.len());
    for &i in &cells {
        let c = tess.cell(i).center;
        spec.domain().check(&c)?;
        let det = spec.hess(&c).determinant();
        if !(det > 0.0) {
            return Err(Error::NotSpd(format!(
                "Hessian at cell center {c:?} has determinant {det}"
            )));
        }
        weights.push(det.powf(r / (2.0 * d as f64)) * probs[i]);
    }
    let levels = allocate_levels(&weights, n, d, r)?;
    let mut points = Points::with_capacity(d, n);
    for (&i, &k) in cells.iter().zip(&levels) {
        if k == 0 {
            continue;
        }
        let local = grid_points(&tess.cell_box(i), k)?;
        for p in local.iter() {
            points.push(p);
        }
    }
    if points.is_empty() {
        return Err(Error::Degenerate(format!(
            "level {n} leaves every cell without codewords"
        )));
    }
    Ok(Codebook::new(points, spec.name(), r))
}
