//! Bregman divergences `phi_F(xi, x) = F(xi) - F(x) - <grad F(x), xi - x>`,
//! the built-in catalog, matrix-field similarities and affine bisectors.

mod bisector;
mod catalog;
mod domain;
mod field;
mod generator;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

pub use bisector::{bregman_bisector, Bisector};
pub use catalog::{
    builtin, builtin_divergence, builtin_field, validate_spd, CatalogEntry, CatalogParams,
    CATALOG_NAMES,
};
pub use domain::{DomainKind, DomainSpec, DOMAIN_GUARD};
pub use field::{eval_field_similarity, ConstField, HessianField, MatrixField, MatrixFieldSpec};
pub use generator::{
    ConvexFunction, ProductForm, ProductMarginal, Quadratic, Regularized, ScalarKind, Separable,
    SoftmaxMarginal,
};

use crate::error::{Error, Result};
use crate::measures::quadrature::GaussLegendre;

/// Values in `[-NEG_CLAMP * (1 + |F(xi)|), 0)` are rounded up to zero.
pub const NEG_CLAMP: f64 = 1e-12;

/// A Bregman divergence: generator, domain and optional comparison constants.
#[derive(Clone)]
pub struct DivergenceSpec {
    name: String,
    domain: DomainSpec,
    generator: Arc<dyn ConvexFunction>,
    lip_grad: Option<f64>,
    alpha: Option<f64>,
}

impl fmt::Debug for DivergenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DivergenceSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("lip_grad", &self.lip_grad)
            .field("alpha", &self.alpha)
            .finish()
    }
}

impl DivergenceSpec {
    pub fn new(
        name: impl Into<String>,
        domain: DomainSpec,
        generator: Arc<dyn ConvexFunction>,
    ) -> Result<Self> {
        if generator.dim() != domain.dim {
            return Err(Error::Dimension {
                expected: domain.dim,
                got: generator.dim(),
            });
        }
        Ok(Self {
            name: name.into(),
            domain,
            generator,
            lip_grad: None,
            alpha: None,
        })
    }

    /// Attaches the Lipschitz constant of `grad F` and the coercivity constant
    /// of `F` on the region of interest.
    pub fn with_bounds(mut self, lip_grad: Option<f64>, alpha: Option<f64>) -> Self {
        self.lip_grad = lip_grad;
        self.alpha = alpha;
        self
    }

    /// Squared Euclidean divergence `|xi - x|^2` in dimension `dim`.
    pub fn sq_euclid(dim: usize) -> Self {
        Self::separable(ScalarKind::Square, dim)
    }

    pub fn itakura_saito() -> Self {
        Self::separable(ScalarKind::ItakuraSaito, 1)
    }

    /// Coordinate-wise sum of a scalar catalog member.
    pub fn separable(kind: ScalarKind, dim: usize) -> Self {
        let domain = match kind {
            ScalarKind::Square | ScalarKind::Softplus { .. } | ScalarKind::Exponential { .. } => {
                DomainSpec::full(dim)
            }
            ScalarKind::Logistic => DomainSpec::unit_box(dim),
            _ => DomainSpec::positive_orthant(dim),
        };
        let (lip, alpha) = kind.curvature_bounds();
        let name = if dim == 1 {
            kind.label()
        } else {
            format!("{}-sum(d={dim})", kind.label())
        };
        Self {
            name,
            domain,
            generator: Arc::new(Separable { kind, dim }),
            lip_grad: lip,
            alpha,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn generator(&self) -> &Arc<dyn ConvexFunction> {
        &self.generator
    }

    pub fn lip_grad(&self) -> Option<f64> {
        self.lip_grad
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn is_bregman(&self) -> bool {
        self.generator.is_bregman()
    }

    pub fn f(&self, x: &[f64]) -> f64 {
        self.generator.value(x)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.generator.gradient(x, &mut g);
        g
    }

    pub fn hess(&self, x: &[f64]) -> DMatrix<f64> {
        self.generator.hessian(x)
    }

    /// Divergence without domain checks; tiny negative rounding is clamped to zero.
    #[inline]
    pub fn phi(&self, xi: &[f64], x: &[f64]) -> f64 {
        let v = self.generator.divergence(xi, x);
        if v < 0.0 && v >= -NEG_CLAMP * (1.0 + self.generator.value(xi).abs()) {
            0.0
        } else {
            v
        }
    }

    /// Divergence `phi_F(xi, x)` with domain checks on both arguments.
    pub fn eval_phi(&self, xi: &[f64], x: &[f64]) -> Result<f64> {
        self.domain.check(xi)?;
        self.domain.check(x)?;
        let v = self.phi(xi, x);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "phi({xi:?}, {x:?}) in {}",
                self.name
            )));
        }
        Ok(v)
    }

    /// Integral form `int_0^1 (1-u) hess(x + u(xi-x))[xi-x, xi-x] du` evaluated
    /// with a `nodes`-point Gauss-Legendre rule.
    pub fn eval_phi_quadrature(&self, xi: &[f64], x: &[f64], nodes: usize) -> Result<f64> {
        self.domain.check(xi)?;
        self.domain.check(x)?;
        if nodes == 0 {
            return Err(Error::InvalidParameter(
                "quadrature needs at least one node".into(),
            ));
        }
        let diff: Vec<f64> = xi.iter().zip(x).map(|(a, b)| a - b).collect();
        let rule = GaussLegendre::new(nodes);
        let mut y = vec![0.0; x.len()];
        let v = rule.integrate(0.0, 1.0, |u| {
            for k in 0..y.len() {
                y[k] = x[k] + u * diff[k];
            }
            let h = self.generator.hessian(&y);
            (1.0 - u) * generator::quad_form(&h, &diff, &diff)
        });
        Ok(v)
    }

    /// `F + eps |x|^2`; the divergence gains `eps |xi - x|^2` and the Hessian `2 eps I`.
    pub fn regularize(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "regularization needs eps > 0, got {eps}"
            )));
        }
        Ok(Self {
            name: format!("{}+{eps}|x|^2", self.name),
            domain: self.domain.clone(),
            generator: Arc::new(Regularized {
                inner: self.generator.clone(),
                eps,
            }),
            lip_grad: self.lip_grad.map(|l| l + 2.0 * eps),
            alpha: Some(self.alpha.unwrap_or(0.0) + 2.0 * eps),
        })
    }

    /// Checks `(alpha/2)|xi-x|^2 <= phi <= (lip/2)|xi-x|^2` on every pair.
    pub fn verify_bounds(&self, pairs: &[(Vec<f64>, Vec<f64>)]) -> BoundsReport {
        let mut report = BoundsReport {
            checked: 0,
            lower_violations: 0,
            upper_violations: 0,
            min_lower_slack: f64::INFINITY,
            min_upper_slack: f64::INFINITY,
        };
        for (xi, x) in pairs {
            let phi = self.phi(xi, x);
            let sq = crate::numeric::dist_sq(xi, x);
            let tol = 1e-12 * (1.0 + phi.abs());
            report.checked += 1;
            if let Some(alpha) = self.alpha {
                let slack = phi - 0.5 * alpha * sq;
                report.min_lower_slack = report.min_lower_slack.min(slack);
                if slack < -tol {
                    report.lower_violations += 1;
                }
            }
            if let Some(lip) = self.lip_grad {
                let slack = 0.5 * lip * sq - phi;
                report.min_upper_slack = report.min_upper_slack.min(slack);
                if slack < -tol {
                    report.upper_violations += 1;
                }
            }
        }
        report
    }

    /// Central finite-difference checks of `grad` against `F` and `hess` against `grad`.
    pub fn check_derivatives(&self, points: &[Vec<f64>], step: f64) -> DerivativeReport {
        let d = self.dim();
        let mut worst_grad: f64 = 0.0;
        let mut worst_hess: f64 = 0.0;
        for x in points {
            let g = self.grad(x);
            let h = self.hess(x);
            for k in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += step;
                xm[k] -= step;
                let fd = (self.f(&xp) - self.f(&xm)) / (2.0 * step);
                worst_grad = worst_grad.max((fd - g[k]).abs() / (1.0 + g[k].abs()));
                let gp = self.grad(&xp);
                let gm = self.grad(&xm);
                for j in 0..d {
                    let fd = (gp[j] - gm[j]) / (2.0 * step);
                    worst_hess = worst_hess.max((fd - h[(j, k)]).abs() / (1.0 + h[(j, k)].abs()));
                }
            }
        }
        DerivativeReport {
            max_grad_error: worst_grad,
            max_hess_error: worst_hess,
        }
    }

    /// Smallest Hessian eigenvalue and worst asymmetry over `points`.
    pub fn check_spd(&self, points: &[Vec<f64>]) -> SpdReport {
        let mut min_eig = f64::INFINITY;
        let mut asym: f64 = 0.0;
        for x in points {
            let h = self.hess(x);
            asym = asym.max((&h - h.transpose()).abs().max());
            let eig = nalgebra::SymmetricEigen::new(h);
            min_eig = min_eig.min(eig.eigenvalues.min());
        }
        SpdReport {
            min_eigenvalue: min_eig,
            max_asymmetry: asym,
        }
    }

    /// Uniform draws from `region ∩ domain` (with guard margin), for spot checks.
    pub fn sample_points<R: Rng>(
        &self,
        rng: &mut R,
        lo: f64,
        hi: f64,
        count: usize,
    ) -> Vec<Vec<f64>> {
        let (dlo, dhi) = self.domain.bounds();
        (0..count)
            .map(|_| {
                (0..self.dim())
                    .map(|k| {
                        let a = lo.max(dlo[k] + 1e-6);
                        let b = hi.min(dhi[k] - 1e-6);
                        a + (b - a) * rng.random::<f64>()
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsReport {
    pub checked: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    /// `min (phi - alpha/2 |xi-x|^2)`; infinite when no lower constant is set.
    pub min_lower_slack: f64,
    /// `min (lip/2 |xi-x|^2 - phi)`; infinite when no upper constant is set.
    pub min_upper_slack: f64,
}

impl BoundsReport {
    pub fn violations(&self) -> usize {
        self.lower_violations + self.upper_violations
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeReport {
    pub max_grad_error: f64,
    pub max_hess_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpdReport {
    pub min_eigenvalue: f64,
    pub max_asymmetry: f64,
}
