//! Cube shrinking, ε-interiors and firewall nets.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::divergence::{DivergenceSpec, DomainKind, DomainSpec};
use crate::error::{Error, Result};
use crate::measures::{Cube, DistributionSpec};
use crate::numeric::{derive_seed, rng_from_seed};
use crate::points::Points;
use crate::region::BoxRegion;

/// Nets with more points than this are refused.
pub const MAX_NET_POINTS: usize = 1 << 24;
/// Auto mode gives up once ρ drops below this.
pub const RHO_FLOOR: f64 = 1e-3;
/// Relative slack for the exterior-reduction check.
pub const REDUCTION_SLACK: f64 = 1e-10;
/// Interior samples that also run the exterior-reduction check against every bulk point.
pub const REDUCTION_SAMPLES: usize = 256;

/// The open set `{x : d(x, U^c) > eps}`.
pub fn epsilon_interior(domain: &DomainSpec, eps: f64) -> Result<DomainSpec> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if matches!(domain.kind, DomainKind::FullSpace) {
        return Ok(domain.clone());
    }
    let (lo, hi) = domain.bounds();
    let mut nlo = Vec::with_capacity(domain.dim);
    let mut nhi = Vec::with_capacity(domain.dim);
    for (a, b) in lo.iter().zip(&hi) {
        if a.is_finite() && b.is_finite() && eps >= 0.5 * (b - a) {
            return Err(Error::Degenerate(format!(
                "eps {eps} leaves an empty interior of ({a}, {b})"
            )));
        }
        nlo.push(a + eps);
        nhi.push(b - eps);
    }
    DomainSpec::open_box(nlo, nhi)
}

/// Same center, half-width reduced by `varpi`.
pub fn shrink_cube(cell: &Cube, varpi: f64) -> Result<Cube> {
    if !(varpi > 0.0 && varpi < cell.half_width) {
        return Err(Error::InvalidParameter(format!(
            "shrink {varpi} must lie in (0, {}) for this cell",
            cell.half_width
        )));
    }
    Ok(Cube {
        center: cell.center.clone(),
        half_width: cell.half_width - varpi,
    })
}

/// Grid points on the boundary of `cube` such that every boundary point is
/// within `rho * edge` of one of them, corners included.
///
/// Each face carries a `k^(d-1)` grid with `k - 1 >= sqrt(d-1) / (2 rho)`;
/// all faces share the same axis grid so shared edges are not duplicated.
pub fn boundary_net(cube: &Cube, rho: f64) -> Result<Points> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rho must lie in (0, 1], got {rho}"
        )));
    }
    let d = cube.dim();
    let k = per_axis(d, rho);
    let total = (k as f64).powi(d as i32) - ((k - 2) as f64).powi(d as i32);
    if total > MAX_NET_POINTS as f64 {
        return Err(Error::InvalidParameter(format!(
            "net would hold {total} points"
        )));
    }
    let axis = |c: f64, idx: usize| {
        if idx + 1 == k {
            c + cube.half_width
        } else {
            c - cube.half_width + 2.0 * cube.half_width * idx as f64 / (k - 1) as f64
        }
    };
    let mut pts = Points::with_capacity(d, total as usize);
    let mut idx = vec![0usize; d];
    let mut row = vec![0.0; d];
    loop {
        if idx.iter().any(|&i| i == 0 || i + 1 == k) {
            for j in 0..d {
                row[j] = axis(cube.center[j], idx[j]);
            }
            pts.push(&row);
        }
        let mut j = d;
        loop {
            if j == 0 {
                return Ok(pts);
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < k {
                break;
            }
            idx[j] = 0;
        }
    }
}

fn per_axis(d: usize, rho: f64) -> usize {
    let need = ((d as f64 - 1.0).sqrt() / (2.0 * rho)).ceil() as usize;
    (need + 1).max(2)
}

/// Finite point set on the boundary of a shrunken cell.
#[derive(Clone, Debug)]
pub struct FirewallNet {
    pub cell: usize,
    pub varpi: f64,
    pub rho: f64,
    /// The shrunken cube `C_{i, varpi}`.
    pub shrunk: Cube,
    pub points: Points,
}

impl FirewallNet {
    pub fn new(cell: usize, cube: &Cube, varpi: f64, rho: f64) -> Result<Self> {
        let shrunk = shrink_cube(cube, varpi)?;
        let points = boundary_net(&shrunk, rho)?;
        Ok(Self {
            cell,
            varpi,
            rho,
            shrunk,
            points,
        })
    }

    pub fn nu(&self) -> usize {
        self.points.len()
    }

    /// Guaranteed covering distance `rho * (edge - 2 varpi)`.
    pub fn covering_radius(&self) -> f64 {
        self.rho * 2.0 * self.shrunk.half_width
    }
}

/// Sample counts for [`verify_firewall`].
#[derive(Clone, Debug, PartialEq)]
pub struct FirewallSampling {
    pub interior: usize,
    /// Exterior points drawn on `∂C_i`.
    pub boundary: usize,
    /// Exterior points drawn uniformly from `outer \ C_i`.
    pub bulk: usize,
    pub seed: u64,
}

impl Default for FirewallSampling {
    fn default() -> Self {
        Self {
            interior: 10_000,
            boundary: 1_000,
            bulk: 4_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FirewallReport {
    /// Interior samples whose net minimum exceeds some exterior value.
    pub violations: usize,
    /// Smallest `min_exterior - min_net` over interior samples.
    pub worst_margin: f64,
    pub rho_used: f64,
    pub nu: usize,
    pub interior: usize,
    pub exterior: usize,
    /// Bulk pairs where the crossing point on `∂C_i` scores worse than the bulk point.
    pub reduction_violations: usize,
    pub reduction_pairs: usize,
}

/// `phi(., x) = F(.) - c_x - <g_x, .>` for each row `x`; `None` when the
/// generator is not Bregman.
fn affine_parts(spec: &DivergenceSpec, pts: &Points) -> Option<(Vec<f64>, Points)> {
    if !spec.is_bregman() {
        return None;
    }
    let mut c = Vec::with_capacity(pts.len());
    let mut g = Points::with_capacity(pts.dim(), pts.len());
    for x in pts.iter() {
        let gx = spec.grad(x);
        c.push(spec.f(x) - gx.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        g.push(&gx);
    }
    Some((c, g))
}

fn scores(
    spec: &DivergenceSpec,
    parts: &Option<(Vec<f64>, Points)>,
    pts: &Points,
    xi: &[f64],
    out: &mut Vec<f64>,
) {
    out.clear();
    match parts {
        Some((c, g)) => {
            let f = spec.f(xi);
            out.extend(
                c.iter()
                    .zip(g.iter())
                    .map(|(c, g)| f - c - g.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>()),
            );
        }
        None => out.extend(pts.iter().map(|x| spec.phi(xi, x))),
    }
}

/// Uniform point on the surface of `cube`.
fn surface_point<R: Rng>(rng: &mut R, cube: &Cube, out: &mut [f64]) {
    let d = cube.dim();
    let face = rng.random_range(0..2 * d);
    for (k, o) in out.iter_mut().enumerate() {
        let u: f64 = rng.random();
        *o = cube.center[k] + cube.half_width * (2.0 * u - 1.0);
    }
    let sign = if face % 2 == 0 { -1.0 } else { 1.0 };
    out[face / 2] = cube.center[face / 2] + sign * cube.half_width;
}

fn strictly_inside(cube: &Cube, x: &[f64]) -> bool {
    x.iter()
        .zip(&cube.center)
        .all(|(v, c)| (v - c).abs() < cube.half_width)
}

/// Point where the segment from `xi` (inside) towards `x` (outside) leaves `cube`.
fn exit_point(cube: &Cube, xi: &[f64], x: &[f64], out: &mut [f64]) {
    let mut t = 1.0f64;
    for k in 0..xi.len() {
        let dx = x[k] - xi[k];
        if dx != 0.0 {
            let face = cube.center[k] + dx.signum() * cube.half_width;
            t = t.min((face - xi[k]) / dx);
        }
    }
    for k in 0..xi.len() {
        out[k] = xi[k] + t * (x[k] - xi[k]);
    }
}

/// Checks `min_{a in net} phi(xi, a) <= min_x phi(xi, x)` for sampled interior
/// points `xi` of the shrunken cell and exterior points `x` of `outer \ C_i`.
pub fn verify_firewall(
    net: &FirewallNet,
    cell: &Cube,
    spec: &DivergenceSpec,
    outer: &BoxRegion,
    sampling: &FirewallSampling,
) -> Result<FirewallReport> {
    let d = cell.dim();
    if spec.dim() != d || outer.dim() != d || net.shrunk.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            got: spec.dim(),
        });
    }
    if !outer.contains_box(&cell.to_box()) {
        return Err(Error::InvalidParameter(
            "outer box must contain the cell".into(),
        ));
    }
    let interior = DistributionSpec::uniform(net.shrunk.to_box())?
        .sample(sampling.interior, derive_seed(sampling.seed, &[0]));

    let mut exterior = Points::with_capacity(d, sampling.boundary + sampling.bulk);
    let mut row = vec![0.0; d];
    let mut rng = rng_from_seed(derive_seed(sampling.seed, &[1]));
    for _ in 0..sampling.boundary {
        surface_point(&mut rng, cell, &mut row);
        exterior.push(&row);
    }
    let n_boundary = exterior.len();
    if sampling.bulk > 0 {
        if outer.volume() <= cell.to_box().volume() * (1.0 + 1e-12) {
            return Err(Error::Degenerate(
                "outer box has no room outside the cell".into(),
            ));
        }
        let mut rng = rng_from_seed(derive_seed(sampling.seed, &[2]));
        let mut drawn = 0;
        let mut tries = 0usize;
        while drawn < sampling.bulk {
            tries += 1;
            if tries > 1000 * sampling.bulk + 1_000_000 {
                return Err(Error::Degenerate(
                    "exterior rejection sampling stalled".into(),
                ));
            }
            outer.sample_uniform(&mut rng, &mut row);
            if !strictly_inside(cell, &row) {
                exterior.push(&row);
                drawn += 1;
            }
        }
    }
    for x in exterior
        .iter()
        .chain(net.points.iter())
        .chain(interior.iter())
    {
        spec.domain().check(x)?;
    }

    let net_parts = affine_parts(spec, &net.points);
    let ext_parts = affine_parts(spec, &exterior);
    let per_sample: Vec<(f64, usize)> = (0..interior.len())
        .into_par_iter()
        .map_init(
            || (vec![0.0; d], Vec::new()),
            |(buf, vals), i| {
                let xi = interior.row(i);
                scores(spec, &net_parts, &net.points, xi, vals);
                let net_min = vals.iter().copied().fold(f64::INFINITY, f64::min);
                scores(spec, &ext_parts, &exterior, xi, vals);
                let ext_min = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let mut bad = 0;
                if i < REDUCTION_SAMPLES {
                    for x in exterior.iter().skip(n_boundary) {
                        let v = spec.phi(xi, x);
                        exit_point(cell, xi, x, buf);
                        if spec.phi(xi, buf) > v + REDUCTION_SLACK * (1.0 + v.abs()) {
                            bad += 1;
                        }
                    }
                }
                (ext_min - net_min, bad)
            },
        )
        .collect();
    Ok(FirewallReport {
        violations: per_sample.iter().filter(|(m, _)| *m < 0.0).count(),
        worst_margin: per_sample
            .iter()
            .map(|(m, _)| *m)
            .fold(f64::INFINITY, f64::min),
        rho_used: net.rho,
        nu: net.nu(),
        interior: interior.len(),
        exterior: exterior.len(),
        reduction_violations: per_sample.iter().map(|(_, b)| b).sum(),
        reduction_pairs: interior.len().min(REDUCTION_SAMPLES) * (exterior.len() - n_boundary),
    })
}

/// Builds the net for `cell` at `rho = min(1, varpi / edge)` and halves `rho`
/// until [`verify_firewall`] reports no violation.
pub fn auto_firewall(
    index: usize,
    cell: &Cube,
    varpi: f64,
    spec: &DivergenceSpec,
    outer: &BoxRegion,
    sampling: &FirewallSampling,
) -> Result<(FirewallNet, FirewallReport)> {
    let mut rho = (varpi / (2.0 * cell.half_width)).min(1.0);
    while rho >= RHO_FLOOR {
        let net = FirewallNet::new(index, cell, varpi, rho)?;
        let report = verify_firewall(&net, cell, spec, outer, sampling)?;
        if report.violations == 0 {
            return Ok((net, report));
        }
        rho *= 0.5;
    }
    Err(Error::Convergence(format!(
        "no rho >= {RHO_FLOOR} gives a violation-free firewall"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::ScalarKind;
    use crate::measures::Tessellation;
    use crate::numeric::dist_sq;
    use proptest::prelude::*;

    fn cell(center: &[f64], h: f64) -> Cube {
        Cube {
            center: center.to_vec(),
            half_width: h,
        }
    }

    #[test]
    fn interior_of_boxes_and_full_space() {
        let u = DomainSpec::unit_box(1);
        let e = epsilon_interior(&u, 0.1).unwrap();
        assert_eq!(e.bounds(), (vec![0.1], vec![0.9]));
        let f = DomainSpec::full(3);
        assert_eq!(epsilon_interior(&f, 7.0).unwrap(), f);
        let p = epsilon_interior(&DomainSpec::positive_orthant(2), 0.5).unwrap();
        assert!(p.contains(&[0.6, 1e9]) && !p.contains(&[0.4, 1.0]));
        assert!(epsilon_interior(&u, 0.5).is_err());
        assert!(epsilon_interior(&u, 0.0).is_err());
    }

    #[test]
    fn interiors_are_nested() {
        let dom = DomainSpec::open_box(vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap();
        let inner = epsilon_interior(&dom, 0.3).unwrap();
        let outer = epsilon_interior(&dom, 0.1).unwrap();
        let mut rng = rng_from_seed(3);
        let b = BoxRegion::new(vec![-1.0, 0.0], vec![1.0, 3.0]).unwrap();
        let mut x = [0.0; 2];
        for _ in 0..1000 {
            b.sample_uniform(&mut rng, &mut x);
            if inner.contains(&x) {
                assert!(outer.contains(&x) && dom.contains(&x));
            }
            // distance to the complement, computed directly
            let dist = (x[0] + 1.0).min(1.0 - x[0]).min(x[1]).min(3.0 - x[1]);
            assert_eq!(inner.contains(&x), dist > 0.3);
        }
    }

    #[test]
    fn shrinking() {
        let c = shrink_cube(&cell(&[0.5], 0.25), 0.05).unwrap();
        assert!((c.half_width - 0.2).abs() < 1e-15 && c.center == vec![0.5]);
        assert!(shrink_cube(&cell(&[0.5], 0.25), 0.25).is_err());
        assert!(shrink_cube(&cell(&[0.5], 0.25), 0.0).is_err());
        // volume ratio (1 - 2 varpi m / L)^d with L / m = 0.5
        let big = cell(&[0.0, 0.0, 0.0], 0.25);
        let small = shrink_cube(&big, 0.05).unwrap();
        let ratio = small.to_box().volume() / big.to_box().volume();
        assert!((ratio - (1.0f64 - 2.0 * 0.05 / 0.5).powi(3)).abs() < 1e-14);
    }

    #[test]
    fn one_dimensional_net_is_the_endpoints() {
        for rho in [1.0, 0.3, 0.01] {
            let net = boundary_net(&cell(&[2.0], 0.5), rho).unwrap();
            assert_eq!(net.to_rows(), vec![vec![1.5], vec![2.5]]);
        }
    }

    fn covered(net: &Points, c: &Cube, radius: f64, samples: usize, seed: u64) -> usize {
        let mut rng = rng_from_seed(seed);
        let mut y = vec![0.0; c.dim()];
        let mut uncovered = 0;
        for _ in 0..samples {
            surface_point(&mut rng, c, &mut y);
            let best = net
                .iter()
                .map(|a| dist_sq(a, &y))
                .fold(f64::INFINITY, f64::min);
            if best.sqrt() > radius * (1.0 + 1e-12) {
                uncovered += 1;
            }
        }
        uncovered
    }

    #[test]
    fn square_net_covers_its_boundary() {
        let c = cell(&[0.3, 0.7], 0.1);
        let net = boundary_net(&c, 0.5).unwrap();
        assert_eq!(net.len(), 4);
        let corners = [[0.2, 0.6], [0.2, 0.8], [0.4, 0.6], [0.4, 0.8]];
        for k in corners {
            assert!(net.iter().any(|p| dist_sq(p, &k) < 1e-30));
        }
        assert_eq!(covered(&net, &c, 0.5 * 0.2, 10_000, 1), 0);
    }

    #[test]
    fn coverage_in_three_dimensions() {
        let c = cell(&[0.0, 0.0, 0.0], 0.5);
        let net = FirewallNet {
            cell: 0,
            varpi: 0.0,
            rho: 0.2,
            shrunk: c.clone(),
            points: boundary_net(&c, 0.2).unwrap(),
        };
        assert_eq!(
            covered(&net.points, &c, net.covering_radius(), 100_000, 2),
            0
        );
        for p in net.points.iter() {
            assert!(p.iter().any(|v| (v.abs() - 0.5).abs() < 1e-15));
        }
    }

    proptest! {
        #[test]
        fn net_size_is_monotone_and_translation_invariant(d in 1usize..4, rho in 0.02f64..1.0, shift in -5.0f64..5.0) {
            let a = boundary_net(&cell(&vec![0.0; d], 1.0), rho).unwrap();
            let b = boundary_net(&cell(&vec![shift; d], 1.0), rho).unwrap();
            let c = boundary_net(&cell(&vec![0.0; d], 1.0), rho / 2.0).unwrap();
            prop_assert_eq!(a.len(), b.len());
            prop_assert!(c.len() >= a.len());
        }
    }

    #[test]
    fn euclidean_firewall_holds() {
        let tess = Tessellation::new(vec![0.0, 0.0], 1.0, 4).unwrap();
        let spec = DivergenceSpec::sq_euclid(2);
        let sampling = FirewallSampling {
            interior: 2000,
            ..Default::default()
        };
        for i in [0, 5, 15] {
            let c = tess.cell(i);
            let net = FirewallNet::new(i, &c, 0.2 * 0.25, 0.1).unwrap();
            let rep = verify_firewall(&net, &c, &spec, &BoxRegion::unit(2), &sampling).unwrap();
            assert_eq!(rep.violations, 0, "{rep:?}");
            assert_eq!(rep.reduction_violations, 0);
            assert!(rep.worst_margin > 0.0);
        }
    }

    #[test]
    fn coarse_net_with_tiny_shrink_is_reported() {
        let spec = DivergenceSpec::sq_euclid(2);
        let c = cell(&[0.5, 0.5], 0.25);
        let net = FirewallNet::new(0, &c, 1e-4, 1.0).unwrap();
        let sampling = FirewallSampling {
            interior: 2000,
            seed: 4,
            ..Default::default()
        };
        let rep = verify_firewall(&net, &c, &spec, &BoxRegion::unit(2), &sampling).unwrap();
        assert!(rep.violations > 0 && rep.worst_margin < 0.0, "{rep:?}");
        assert_eq!(rep.reduction_violations, 0);
    }

    #[test]
    fn auto_rho_for_softplus() {
        let spec = DivergenceSpec::separable(ScalarKind::Softplus { a: 1.0 }, 2);
        let tess = Tessellation::new(vec![0.0, 0.0], 1.0, 4).unwrap();
        let c = tess.cell(6);
        let sampling = FirewallSampling {
            interior: 10_000,
            boundary: 200,
            bulk: 800,
            seed: 9,
        };
        let (net, rep) = auto_firewall(6, &c, 0.05, &spec, &BoxRegion::unit(2), &sampling).unwrap();
        assert_eq!(rep.violations, 0);
        assert_eq!(rep.reduction_violations, 0);
        assert_eq!(rep.nu, net.nu());
        assert!(rep.rho_used <= 0.2);
    }
}
