use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::field::{ConstField, MatrixFieldSpec};
use super::generator::{ProductForm, ProductMarginal, Quadratic, ScalarKind, SoftmaxMarginal};
use super::{DivergenceSpec, DomainSpec};
use crate::error::{Error, Result};

pub const CATALOG_NAMES: &[&str] = &[
    "sq-euclid",
    "norm-like",
    "itakura-saito",
    "kl",
    "logistic",
    "softplus",
    "exponential",
    "mahalanobis",
    "marginal-additive",
    "marginal-multiplicative",
    "softmax-marginal",
    "const-field",
];

/// Parameters for [`builtin`]. Unset fields take the catalog defaults
/// (`a = 3/2` for norm-like, `a = 1` for softplus, `rho = 1`, `lambda = 1`, `dim = 1`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CatalogParams {
    pub dim: Option<usize>,
    pub a: Option<f64>,
    pub rho: Option<f64>,
    pub lambda: Option<f64>,
    /// Scalar generator used by the marginal constructions.
    pub f: Option<String>,
    /// Row-major symmetric positive definite matrix.
    pub s: Option<Vec<Vec<f64>>>,
    /// `generator-factors` (default) or `divergence-factors` for the multiplicative marginal.
    pub variant: Option<String>,
}

impl CatalogParams {
    pub fn dim(dim: usize) -> Self {
        Self {
            dim: Some(dim),
            ..Self::default()
        }
    }
}

/// A resolved catalog entry.
#[derive(Clone, Debug)]
pub enum CatalogEntry {
    Divergence(DivergenceSpec),
    Field(MatrixFieldSpec),
}

fn scalar_kind(name: &str, p: &CatalogParams) -> Result<Option<ScalarKind>> {
    let kind = match name {
        "sq-euclid" => ScalarKind::Square,
        "norm-like" => {
            let a = p.a.unwrap_or(1.5);
            if !(a > 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "norm-like needs a > 1, got {a}"
                )));
            }
            ScalarKind::NormLike { a }
        }
        "itakura-saito" => ScalarKind::ItakuraSaito,
        "kl" => ScalarKind::KullbackLeibler,
        "logistic" => ScalarKind::Logistic,
        "softplus" => {
            let a = p.a.unwrap_or(1.0);
            if !(a > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "softplus needs a > 0, got {a}"
                )));
            }
            ScalarKind::Softplus { a }
        }
        "exponential" => {
            let rho = p.rho.unwrap_or(1.0);
            if rho == 0.0 || !rho.is_finite() {
                return Err(Error::InvalidParameter("exponential needs rho != 0".into()));
            }
            ScalarKind::Exponential { rho }
        }
        _ => return Ok(None),
    };
    Ok(Some(kind))
}

fn marginal_scalar(p: &CatalogParams) -> Result<ScalarKind> {
    let fname =
        p.f.as_deref()
            .ok_or_else(|| Error::InvalidParameter("marginal divergences need `f`".into()))?;
    scalar_kind(fname, p)?.ok_or_else(|| Error::UnknownName(fname.to_string()))
}

fn scalar_domain(kind: ScalarKind, dim: usize) -> DomainSpec {
    match kind {
        ScalarKind::Square | ScalarKind::Softplus { .. } | ScalarKind::Exponential { .. } => {
            DomainSpec::full(dim)
        }
        ScalarKind::Logistic => DomainSpec::unit_box(dim),
        _ => DomainSpec::positive_orthant(dim),
    }
}

/// Parses and validates a symmetric positive definite matrix.
pub(crate) fn spd_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::NotSpd("matrix must be square and nonempty".into()));
    }
    let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
    validate_spd(&m)?;
    Ok(m)
}

/// Checks that `m` is finite, symmetric and positive definite.
pub fn validate_spd(m: &DMatrix<f64>) -> Result<()> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NotSpd("non-finite entry".into()));
    }
    let scale = m.abs().max().max(1e-300);
    if (m - m.transpose()).abs().max() > 1e-12 * scale {
        return Err(Error::NotSpd("matrix is not symmetric".into()));
    }
    if m.clone().cholesky().is_none() {
        return Err(Error::NotSpd("matrix is not positive definite".into()));
    }
    Ok(())
}

/// Looks up a catalog member by name.
pub fn builtin(name: &str, params: &CatalogParams) -> Result<CatalogEntry> {
    let dim = params.dim.unwrap_or(1);
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if let Some(kind) = scalar_kind(name, params)? {
        return Ok(CatalogEntry::Divergence(DivergenceSpec::separable(
            kind, dim,
        )));
    }
    let entry = match name {
        "mahalanobis" => {
            let rows = params
                .s
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("mahalanobis needs S".into()))?;
            let s = spd_matrix(rows)?;
            let eig = nalgebra::SymmetricEigen::new(s.clone());
            let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
            let d = s.nrows();
            let spec = DivergenceSpec::new(
                "mahalanobis",
                DomainSpec::full(d),
                Arc::new(Quadratic { s }),
            )?
            .with_bounds(Some(2.0 * hi), Some(2.0 * lo));
            CatalogEntry::Divergence(spec)
        }
        "marginal-additive" => {
            let kind = marginal_scalar(params)?;
            let mut spec = DivergenceSpec::separable(kind, dim);
            spec.name = format!("marginal-additive({})", kind.label());
            CatalogEntry::Divergence(spec)
        }
        "marginal-multiplicative" => {
            let kind = marginal_scalar(params)?;
            let form = match params.variant.as_deref() {
                None | Some("generator-factors") => ProductForm::GeneratorFactors,
                Some("divergence-factors") => ProductForm::DivergenceFactors,
                Some(other) => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown variant `{other}`"
                    )))
                }
            };
            let spec = DivergenceSpec::new(
                format!("marginal-multiplicative({})", kind.label()),
                scalar_domain(kind, dim),
                Arc::new(ProductMarginal { kind, dim, form }),
            )?;
            CatalogEntry::Divergence(spec)
        }
        "softmax-marginal" => {
            let kind = marginal_scalar(params)?;
            let lambda = params.lambda.unwrap_or(1.0);
            if !(lambda > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "softmax-marginal needs lambda > 0, got {lambda}"
                )));
            }
            let spec = DivergenceSpec::new(
                format!("softmax-marginal({}, lambda={lambda})", kind.label()),
                scalar_domain(kind, dim),
                Arc::new(SoftmaxMarginal { kind, lambda, dim }),
            )?;
            CatalogEntry::Divergence(spec)
        }
        "const-field" => {
            let rows = params
                .s
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("const-field needs S".into()))?;
            let s = spd_matrix(rows)?;
            CatalogEntry::Field(MatrixFieldSpec::new(
                "const-field",
                DomainSpec::full(s.nrows()),
                Arc::new(ConstField { s }),
            )?)
        }
        other => return Err(Error::UnknownName(other.to_string())),
    };
    Ok(entry)
}

/// [`builtin`] restricted to Bregman divergences.
pub fn builtin_divergence(name: &str, params: &CatalogParams) -> Result<DivergenceSpec> {
    match builtin(name, params)? {
        CatalogEntry::Divergence(d) => Ok(d),
        CatalogEntry::Field(_) => Err(Error::InvalidParameter(format!(
            "`{name}` is a matrix field, not a divergence"
        ))),
    }
}

/// [`builtin`] restricted to matrix fields.
pub fn builtin_field(name: &str, params: &CatalogParams) -> Result<MatrixFieldSpec> {
    match builtin(name, params)? {
        CatalogEntry::Field(f) => Ok(f),
        CatalogEntry::Divergence(_) => Err(Error::InvalidParameter(format!(
            "`{name}` is a divergence, not a field"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn kl_example() {
        let kl = builtin_divergence("kl", &CatalogParams::default()).unwrap();
        let e = std::f64::consts::E;
        // xi (log(xi/x) - 1 + x/xi) at xi = 1, x = e
        let oracle = 1.0 * ((1.0 / e).ln() - 1.0 + e / 1.0);
        assert_relative_eq!(oracle, e - 2.0, max_relative = 1e-15);
        assert_relative_eq!(
            kl.eval_phi(&[1.0], &[e]).unwrap(),
            e - 2.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn mahalanobis_identity_reduces_to_sq_euclid() {
        let p = CatalogParams {
            s: Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            ..Default::default()
        };
        let m = builtin_divergence("mahalanobis", &p).unwrap();
        let e = builtin_divergence("sq-euclid", &CatalogParams::dim(2)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let xi: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert_relative_eq!(m.phi(&xi, &x), e.phi(&xi, &x), max_relative = 1e-13);
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(matches!(
            builtin("nope", &CatalogParams::default()),
            Err(Error::UnknownName(_))
        ));
        let bad = CatalogParams {
            s: Some(vec![vec![1.0, 2.0], vec![2.0, 1.0]]),
            ..Default::default()
        };
        assert!(matches!(
            builtin("mahalanobis", &bad),
            Err(Error::NotSpd(_))
        ));
        let asym = CatalogParams {
            s: Some(vec![vec![2.0, 0.5], vec![0.0, 2.0]]),
            ..Default::default()
        };
        assert!(matches!(
            builtin("mahalanobis", &asym),
            Err(Error::NotSpd(_))
        ));
        let p = CatalogParams {
            a: Some(1.0),
            ..Default::default()
        };
        assert!(builtin("norm-like", &p).is_err());
        assert!(builtin("marginal-additive", &CatalogParams::default()).is_err());
    }

    #[test]
    fn catalog_domains() {
        let is = builtin_divergence("itakura-saito", &CatalogParams::default()).unwrap();
        assert_eq!(is.domain().kind, super::super::DomainKind::PositiveOrthant);
        let lg = builtin_divergence("logistic", &CatalogParams::dim(3)).unwrap();
        assert_eq!(lg.domain().kind, super::super::DomainKind::OpenUnitBox);
        assert_eq!(lg.dim(), 3);
    }

    #[test]
    fn multiplicative_variants() {
        let base = CatalogParams {
            dim: Some(2),
            f: Some("kl".into()),
            ..Default::default()
        };
        let gen = builtin_divergence("marginal-multiplicative", &base).unwrap();
        let alt = builtin_divergence(
            "marginal-multiplicative",
            &CatalogParams {
                variant: Some("divergence-factors".into()),
                ..base.clone()
            },
        )
        .unwrap();
        assert!(!gen.is_bregman());
        let k = ScalarKind::KullbackLeibler;
        let (xi, x) = ([1.5, 2.5], [2.0, 3.0]);
        let expect = k.phi(xi[0], x[0]) * k.f(x[1]) + k.phi(xi[1], x[1]) * k.f(x[0]);
        assert_relative_eq!(gen.phi(&xi, &x), expect, max_relative = 1e-14);
        let expect_alt =
            k.phi(xi[0], x[0]) * k.phi(xi[0], x[1]) + k.phi(xi[1], x[1]) * k.phi(xi[1], x[0]);
        assert_relative_eq!(alt.phi(&xi, &x), expect_alt, max_relative = 1e-14);
    }
}
