//! Probability inputs, tessellations, proxy measures and the integrals built on them.

pub mod distribution;
pub mod proxy;
pub mod quadrature;
pub mod tessellation;

pub use distribution::{DistributionSpec, SAMPLE_BLOCK};
pub use proxy::{build_proxy, ProxyMeasure, ProxyMode};
pub use quadrature::{adaptive_simpson, integrate_box, GaussLegendre, QuadResult};
pub use tessellation::{tessellate, Cube, Tessellation};

use crate::error::{Error, Result};
use crate::numeric::{norm, par_sum};
use crate::region::BoxRegion;

/// Samples a distribution; alias of [`DistributionSpec::sample`].
pub fn sample(dist: &DistributionSpec, n: usize, seed: u64) -> crate::points::Points {
    dist.sample(n, seed)
}

/// `(int g^p)^(1/p)` over a bounded box, with the quadrature error propagated to the norm.
pub fn pseudo_norm<G: Fn(&[f64]) -> f64>(
    g: G,
    p: f64,
    region: &BoxRegion,
    tol: f64,
) -> Result<QuadResult> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "pseudo-norm exponent must lie in (0, 1], got {p}"
        )));
    }
    let mut negative = false;
    let integral = integrate_box(
        |x| {
            let v = g(x);
            if v < 0.0 {
                negative = true;
            }
            v.max(0.0).powf(p)
        },
        region,
        tol,
    )?;
    if negative {
        return Err(Error::InvalidParameter(
            "pseudo-norm integrand must be non-negative".into(),
        ));
    }
    let value = integral.value.max(0.0).powf(1.0 / p);
    let slope = if integral.value > 0.0 {
        value / (p * integral.value)
    } else {
        0.0
    };
    Ok(QuadResult {
        value,
        error: slope * integral.error,
    })
}

/// How a moment is evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MomentMode {
    Quadrature {
        tol: f64,
    },
    /// `2n` draws; the estimate on the first `n` is kept for the growth check.
    MonteCarlo {
        n: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentEstimate {
    /// `(int |x - c|^s dP)^(1/s)`.
    pub value: f64,
    pub std_error: f64,
    /// Shift `c`: the mean when centered, otherwise the origin.
    pub center: Vec<f64>,
}

/// Upper bound `(int |x - c|^s dP)^(1/s)` on the Pierce moment, with `c`
/// the mean of `P` when `centered` and the origin otherwise.
///
/// In Monte Carlo mode the raw moment on `2n` draws is compared with the one
/// on the first `n`; at least a doubling is reported as divergent growth.
pub fn moment_sigma(
    dist: &DistributionSpec,
    s: f64,
    mode: MomentMode,
    centered: bool,
) -> Result<MomentEstimate> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "moment order must be positive, got {s}"
        )));
    }
    let d = dist.dim();
    if let DistributionSpec::PointMass { point } = dist {
        let center = if centered {
            point.clone()
        } else {
            vec![0.0; d]
        };
        let value = if centered { 0.0 } else { norm(point) };
        return Ok(MomentEstimate {
            value,
            std_error: 0.0,
            center,
        });
    }
    match mode {
        MomentMode::Quadrature { tol } => {
            let support = dist
                .support()
                .filter(|_| dist.has_density())
                .ok_or_else(|| {
                    Error::UnsupportedMode(format!(
                        "quadrature moment needs a density, got {}",
                        dist.label()
                    ))
                })?;
            let h = |x: &[f64]| dist.density(x).unwrap_or(0.0);
            let center = if centered {
                (0..d)
                    .map(|k| integrate_box(|x| x[k] * h(x), &support, tol).map(|q| q.value))
                    .collect::<Result<Vec<_>>>()?
            } else {
                vec![0.0; d]
            };
            let mut diff = vec![0.0; d];
            let q = integrate_box(
                |x| {
                    for k in 0..d {
                        diff[k] = x[k] - center[k];
                    }
                    norm(&diff).powf(s) * h(x)
                },
                &support,
                tol,
            )?;
            let value = q.value.max(0.0).powf(1.0 / s);
            let slope = if q.value > 0.0 {
                value / (s * q.value)
            } else {
                0.0
            };
            Ok(MomentEstimate {
                value,
                std_error: slope * q.error,
                center,
            })
        }
        MomentMode::MonteCarlo { n, seed } => {
            if n == 0 {
                return Err(Error::InvalidParameter(
                    "Monte Carlo moment needs n >= 1".into(),
                ));
            }
            let pts = dist.sample(2 * n, seed);
            let center = if centered {
                pts.mean().expect("non-empty sample")
            } else {
                vec![0.0; d]
            };
            let term = |i: usize| {
                let p = pts.row(i);
                p.iter()
                    .zip(&center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
                    .sqrt()
                    .powf(s)
            };
            let small = par_sum(n, term) / n as f64;
            let total = par_sum(2 * n, term);
            let large = total / (2 * n) as f64;
            let sq = par_sum(2 * n, |i| (term(i) - large).powi(2));
            if !large.is_finite() {
                return Err(Error::NonFinite("empirical moment".into()));
            }
            if large > 0.0 && large >= 2.0 * small {
                return Err(Error::MomentDivergence {
                    small: small.powf(1.0 / s),
                    large: large.powf(1.0 / s),
                });
            }
            let se_m = (sq / ((2 * n - 1).max(1) as f64) / (2 * n) as f64).sqrt();
            let value = large.powf(1.0 / s);
            let slope = if large > 0.0 {
                value / (s * large)
            } else {
                0.0
            };
            Ok(MomentEstimate {
                value,
                std_error: slope * se_m,
                center,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudo_norm_examples() {
        let unit = BoxRegion::unit(1);
        for p in [0.2, 0.5, 1.0] {
            assert!((pseudo_norm(|_| 1.0, p, &unit, 1e-12).unwrap().value - 1.0).abs() < 1e-12);
        }
        // g = x^-2, p = 1/3: int_1^2 x^(-2/3) = 3 (2^(1/3) - 1)
        let b = BoxRegion::new(vec![1.0], vec![2.0]).unwrap();
        let v = pseudo_norm(|x| x[0].powi(-2), 1.0 / 3.0, &b, 1e-12)
            .unwrap()
            .value;
        let exact = (3.0 * (2f64.cbrt() - 1.0)).powi(3);
        assert!((v - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn pseudo_norm_with_unit_exponent_is_plain_integral() {
        let b = BoxRegion::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        let f = |x: &[f64]| x[0] * x[0] + x[1];
        let a = pseudo_norm(f, 1.0, &b, 1e-12).unwrap().value;
        let q = integrate_box(f, &b, 1e-12).unwrap().value;
        assert_eq!(a, q);
        assert!((a - (8.0 / 3.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn pseudo_norm_rejects_bad_input() {
        let b = BoxRegion::unit(1);
        assert!(pseudo_norm(|_| 1.0, 0.0, &b, 1e-10).is_err());
        assert!(pseudo_norm(|_| 1.0, 1.5, &b, 1e-10).is_err());
        assert!(pseudo_norm(|x| x[0] - 0.5, 0.5, &b, 1e-10).is_err());
    }

    #[test]
    fn moments() {
        let pm = DistributionSpec::point_mass(vec![0.0, 0.0]);
        assert_eq!(
            moment_sigma(&pm, 2.0, MomentMode::Quadrature { tol: 1e-10 }, false)
                .unwrap()
                .value,
            0.0
        );
        let u = DistributionSpec::uniform(BoxRegion::unit(1)).unwrap();
        let q = moment_sigma(&u, 2.0, MomentMode::Quadrature { tol: 1e-12 }, false).unwrap();
        assert!((q.value - (1.0f64 / 3.0).sqrt()).abs() < 1e-10);
        let c = moment_sigma(&u, 2.0, MomentMode::Quadrature { tol: 1e-12 }, true).unwrap();
        assert!(c.value <= q.value);
        assert!((c.value - (1.0f64 / 12.0).sqrt()).abs() < 1e-10);
        let mc = moment_sigma(
            &u,
            2.0,
            MomentMode::MonteCarlo { n: 50_000, seed: 3 },
            false,
        )
        .unwrap();
        assert!((mc.value - q.value).abs() < 4.0 * mc.std_error);
        let mcc =
            moment_sigma(&u, 2.0, MomentMode::MonteCarlo { n: 50_000, seed: 3 }, true).unwrap();
        assert!(mcc.value <= mc.value);
    }

    #[test]
    fn heavy_growth_is_flagged() {
        // one far outlier beyond the first half of the sample doubles the estimate
        let mut pts = vec![0.0; 8191];
        pts.push(1e9);
        let e = DistributionSpec::empirical(crate::points::Points::from_scalars(&pts)).unwrap();
        let mut flagged = false;
        for seed in 0..20 {
            if let Err(Error::MomentDivergence { .. }) =
                moment_sigma(&e, 2.0, MomentMode::MonteCarlo { n: 4096, seed }, false)
            {
                flagged = true;
            }
        }
        assert!(flagged);
    }
}
