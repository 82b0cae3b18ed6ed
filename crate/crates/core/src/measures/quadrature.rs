//! Gauss-Legendre rules, adaptive Simpson and box integration.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{derive_seed, pairwise_sum, rng_from_seed};
use crate::region::BoxRegion;

/// Default absolute tolerance of the 1D adaptive rule.
pub const SIMPSON_TOL: f64 = 1e-10;
/// Maximum recursion depth of the 1D adaptive rule.
pub const SIMPSON_MAX_DEPTH: usize = 40;
/// Integrand evaluations after which the 1D adaptive rule stops refining.
pub const SIMPSON_MAX_EVALS: usize = 1 << 20;
/// Nodes per axis of the 2D tensor rule.
pub const TENSOR_NODES: usize = 8;
/// Largest number of splits per axis tried by [`integrate_2d`].
pub const TENSOR_MAX_SPLITS: usize = 64;

/// An integral value together with an estimate of its absolute error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

/// `n`-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // three-term recurrence for P_n and its derivative
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = nf * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (c + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

struct Simpson<'a, F> {
    f: &'a mut F,
    max_depth: usize,
    evals: usize,
    failed: bool,
}

impl<F: FnMut(f64) -> f64> Simpson<'_, F> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &mut self,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> (f64, f64) {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = ((self.f)(lm), (self.f)(rm));
        self.evals += 2;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        // below the rounding floor further splits only chase noise
        let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        if depth >= 4 && delta.abs() <= 15.0 * tol.max(floor) {
            return (left + right + delta / 15.0, delta.abs() / 15.0);
        }
        // noise in the integrand itself can keep `delta` above `tol` at every depth
        if depth >= self.max_depth || self.evals >= SIMPSON_MAX_EVALS {
            self.failed = true;
            return (left + right + delta / 15.0, delta.abs() / 15.0);
        }
        let (v1, e1) = self.recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1);
        let (v2, e2) = self.recurse(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
        (v1 + v2, e1 + e2)
    }
}

/// Adaptive Simpson quadrature with Richardson correction to absolute `tol`.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
        });
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut s = Simpson {
        f: &mut f,
        max_depth,
        evals: 3,
        failed: false,
    };
    let (value, error) = s.recurse(a, b, fa, fm, fb, whole, tol, 0);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("integral over [{a}, {b}]")));
    }
    if s.failed && error > tol {
        return Err(Error::ToleranceNotMet {
            estimate: value,
            achieved: error,
            tol,
        });
    }
    Ok(QuadResult { value, error })
}

/// Adaptive Simpson with a tolerance relative to a coarse Gauss estimate of the integral.
pub fn adaptive_simpson_rel<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_floor: f64,
) -> Result<QuadResult> {
    let coarse = GaussLegendre::new(8).integrate(a, b, &mut f).abs();
    adaptive_simpson(
        f,
        a,
        b,
        (rel_tol * coarse).max(abs_floor),
        SIMPSON_MAX_DEPTH,
    )
}

fn tensor_2d<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    rule: &GaussLegendre,
    lo: [f64; 2],
    hi: [f64; 2],
    splits: usize,
) -> f64 {
    let hx = (hi[0] - lo[0]) / splits as f64;
    let hy = (hi[1] - lo[1]) / splits as f64;
    let mut parts = Vec::with_capacity(splits * splits);
    let mut p = [0.0; 2];
    for i in 0..splits {
        let (ax, bx) = (lo[0] + i as f64 * hx, lo[0] + (i + 1) as f64 * hx);
        for j in 0..splits {
            let (ay, by) = (lo[1] + j as f64 * hy, lo[1] + (j + 1) as f64 * hy);
            let mut acc = 0.0;
            for (x, wx) in rule.mapped(ax, bx) {
                p[0] = x;
                for (y, wy) in rule.mapped(ay, by) {
                    p[1] = y;
                    acc += wx * wy * f(&p);
                }
            }
            parts.push(acc);
        }
    }
    pairwise_sum(&parts)
}

/// 2D tensor Gauss rule compared against the same rule on a 2 x 2 split;
/// splitting doubles while the two disagree by more than `tol`.
pub fn integrate_2d<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    region: &BoxRegion,
    tol: f64,
) -> Result<QuadResult> {
    let rule = GaussLegendre::new(TENSOR_NODES);
    let lo = [region.lo[0], region.lo[1]];
    let hi = [region.hi[0], region.hi[1]];
    let mut coarse = tensor_2d(&mut f, &rule, lo, hi, 1);
    let mut splits = 2;
    loop {
        let fine = tensor_2d(&mut f, &rule, lo, hi, splits);
        let err = (fine - coarse).abs();
        if !fine.is_finite() {
            return Err(Error::NonFinite("2D integral".into()));
        }
        if err <= tol {
            return Ok(QuadResult {
                value: fine,
                error: err,
            });
        }
        if splits >= TENSOR_MAX_SPLITS {
            return Err(Error::ToleranceNotMet {
                estimate: fine,
                achieved: err,
                tol,
            });
        }
        coarse = fine;
        splits *= 2;
    }
}

/// Stratified Monte Carlo over an `m^d` grid of the box with `per_cell` draws per stratum.
/// The error field is one standard error.
pub fn integrate_stratified<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    region: &BoxRegion,
    m: usize,
    per_cell: usize,
    seed: u64,
) -> QuadResult {
    let d = region.dim();
    let cells = m.pow(d as u32);
    let widths = region.widths();
    let cell_vol: f64 = widths.iter().map(|w| w / m as f64).product();
    let mut totals = Vec::with_capacity(cells);
    let mut var = 0.0;
    let mut x = vec![0.0; d];
    for c in 0..cells {
        let mut rng = rng_from_seed(derive_seed(seed, &[c as u64]));
        let mut rem = c;
        let mut idx = vec![0usize; d];
        for k in (0..d).rev() {
            idx[k] = rem % m;
            rem /= m;
        }
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..per_cell {
            for k in 0..d {
                let u: f64 = rng.random();
                x[k] = region.lo[k] + widths[k] * (idx[k] as f64 + u) / m as f64;
            }
            let v = f(&x);
            s += v;
            s2 += v * v;
        }
        let n = per_cell as f64;
        let mean = s / n;
        let sample_var = if per_cell > 1 {
            ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        totals.push(cell_vol * mean);
        var += cell_vol * cell_vol * sample_var / n;
    }
    QuadResult {
        value: pairwise_sum(&totals),
        error: var.sqrt(),
    }
}

/// Integral of `f` over a bounded box: adaptive Simpson in 1D, tensor Gauss in
/// 2D, stratified Monte Carlo for `d >= 3`.
pub fn integrate_box<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    region: &BoxRegion,
    tol: f64,
) -> Result<QuadResult> {
    if !region.is_bounded() {
        return Err(Error::InvalidParameter(
            "integration region must be bounded".into(),
        ));
    }
    match region.dim() {
        1 => {
            let mut p = [0.0];
            adaptive_simpson(
                |x| {
                    p[0] = x;
                    f(&p)
                },
                region.lo[0],
                region.hi[0],
                tol,
                SIMPSON_MAX_DEPTH,
            )
        }
        2 => integrate_2d(f, region, tol),
        d => {
            let m = if d == 3 { 8 } else { 4 };
            Ok(integrate_stratified(f, region, m, 64, 0x005E_ED0F_B0C5))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 3, 5, 8, 16, 32] {
            let rule = GaussLegendre::new(n);
            let wsum: f64 = rule.weights().iter().sum();
            assert_relative_eq!(wsum, 2.0, max_relative = 1e-13);
            let deg = 2 * n - 1;
            // int_0^1 x^deg = 1 / (deg + 1)
            let v = rule.integrate(0.0, 1.0, |x| x.powi(deg as i32));
            assert_relative_eq!(v, 1.0 / (deg as f64 + 1.0), max_relative = 1e-12);
        }
    }

    #[test]
    fn simpson_matches_closed_form() {
        // int_1^2 x^(-2/3) dx = 3 (2^(1/3) - 1)
        let q = adaptive_simpson(|x: f64| x.powf(-2.0 / 3.0), 1.0, 2.0, 1e-12, 40).unwrap();
        assert!((q.value - 3.0 * (2f64.cbrt() - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn simpson_reports_unmet_tolerance() {
        let r = adaptive_simpson(
            |x: f64| if x < 0.3 { 0.0 } else { 1.0 / (x - 0.3).sqrt() },
            0.0,
            1.0,
            1e-14,
            12,
        );
        match r {
            Err(Error::ToleranceNotMet { estimate, .. }) => assert!(estimate.is_finite()),
            other => panic!("expected tolerance error, got {other:?}"),
        }
    }

    #[test]
    fn tensor_rule_on_smooth_function() {
        let b = BoxRegion::new(vec![0.0, 1.0], vec![1.0, 3.0]).unwrap();
        let q = integrate_2d(|p| p[0] * p[0] * p[1].exp(), &b, 1e-12).unwrap();
        let exact = (1.0 / 3.0) * (3f64.exp() - 1f64.exp());
        assert_relative_eq!(q.value, exact, max_relative = 1e-13);
    }

    #[test]
    fn stratified_mc_is_unbiased_within_error() {
        let b = BoxRegion::unit(3);
        let q = integrate_stratified(|p| p[0] + p[1] * p[2], &b, 6, 32, 9);
        assert!((q.value - 0.75).abs() < 4.0 * q.error + 1e-12);
    }
}
