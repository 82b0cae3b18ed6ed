use serde::Serialize;

use super::DivergenceSpec;
use crate::error::{Error, Result};
use crate::numeric::{dot, norm};

/// Affine functional `g(xi) = normal . xi + offset` with `|normal| = 1`,
/// scaled so that `phi(xi, a) - phi(xi, b) = scale * g(xi)`.
///
/// `g(xi) <= 0` exactly when `xi` is at least as close to `a` as to `b`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bisector {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub scale: f64,
}

impl Bisector {
    pub fn g(&self, xi: &[f64]) -> f64 {
        dot(&self.normal, xi) + self.offset
    }

    /// `phi(xi, a) - phi(xi, b)` reconstructed from the affine form.
    pub fn difference(&self, xi: &[f64]) -> f64 {
        self.scale * self.g(xi)
    }

    /// The boundary point in one dimension.
    pub fn point_1d(&self) -> Option<f64> {
        (self.normal.len() == 1).then(|| -self.offset / self.normal[0])
    }
}

/// Bisector of the Bregman-Voronoi pair `(a, b)`.
pub fn bregman_bisector(spec: &DivergenceSpec, a: &[f64], b: &[f64]) -> Result<Bisector> {
    if !spec.is_bregman() {
        return Err(Error::UnsupportedMode(format!(
            "{} has no affine bisectors",
            spec.name()
        )));
    }
    spec.domain().check(a)?;
    spec.domain().check(b)?;
    if a == b {
        return Err(Error::Degenerate("bisector of identical points".into()));
    }
    let ga = spec.grad(a);
    let gb = spec.grad(b);
    // phi(xi,a) - phi(xi,b) = <gb - ga, xi> + F(b) - F(a) - <gb, b> + <ga, a>
    let raw: Vec<f64> = gb.iter().zip(&ga).map(|(p, q)| p - q).collect();
    let raw_offset = spec.f(b) - spec.f(a) - dot(&gb, b) + dot(&ga, a);
    let scale = norm(&raw);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Degenerate("bisector normal vanishes".into()));
    }
    Ok(Bisector {
        normal: raw.iter().map(|v| v / scale).collect(),
        offset: raw_offset / scale,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn euclidean_midpoint() {
        let s = DivergenceSpec::sq_euclid(1);
        let b = bregman_bisector(&s, &[0.0], &[1.0]).unwrap();
        assert_relative_eq!(b.point_1d().unwrap(), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn itakura_saito_boundary() {
        let s = DivergenceSpec::itakura_saito();
        let (a, b) = (1.0f64, 2.0f64);
        let k = crate::divergence::ScalarKind::ItakuraSaito;
        // solve the affine equation in closed form
        let oracle = (k.f(a) - k.f(b) - a * k.df(a) + b * k.df(b)) / (k.df(b) - k.df(a));
        assert_relative_eq!(oracle, 2.0 * 2f64.ln(), max_relative = 1e-14);
        let bis = bregman_bisector(&s, &[a], &[b]).unwrap();
        assert_relative_eq!(bis.point_1d().unwrap(), oracle, max_relative = 1e-13);
    }

    #[test]
    fn antisymmetry() {
        let s = DivergenceSpec::itakura_saito();
        let ab = bregman_bisector(&s, &[0.7], &[3.0]).unwrap();
        let ba = bregman_bisector(&s, &[3.0], &[0.7]).unwrap();
        for xi in [0.2, 1.0, 2.5, 9.0] {
            assert_relative_eq!(
                ab.difference(&[xi]),
                -ba.difference(&[xi]),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn identical_points_rejected() {
        let s = DivergenceSpec::sq_euclid(2);
        assert!(matches!(
            bregman_bisector(&s, &[1.0, 1.0], &[1.0, 1.0]),
            Err(Error::Degenerate(_))
        ));
    }
}
