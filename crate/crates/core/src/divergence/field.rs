use std::fmt::{self, Debug};
use std::sync::Arc;

use nalgebra::DMatrix;

use super::generator::quad_form;
use super::{DivergenceSpec, DomainSpec};
use crate::error::{Error, Result};

/// A field `x -> S(x)` of symmetric positive definite matrices.
pub trait MatrixField: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> DMatrix<f64>;

    /// The matrix when the field is constant.
    fn constant(&self) -> Option<DMatrix<f64>> {
        None
    }
}

#[derive(Clone, Debug)]
pub struct ConstField {
    pub s: DMatrix<f64>,
}

impl MatrixField for ConstField {
    fn dim(&self) -> usize {
        self.s.nrows()
    }

    fn eval(&self, _x: &[f64]) -> DMatrix<f64> {
        self.s.clone()
    }

    fn constant(&self) -> Option<DMatrix<f64>> {
        Some(self.s.clone())
    }
}

/// The Hessian field `x -> hess F(x)` of a divergence.
#[derive(Clone, Debug)]
pub struct HessianField {
    pub spec: DivergenceSpec,
}

impl MatrixField for HessianField {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        self.spec.hess(x)
    }

    fn constant(&self) -> Option<DMatrix<f64>> {
        self.spec.generator().constant_hessian()
    }
}

/// Similarity `(xi - a)^T S(a) (xi - a)` driven by a matrix field.
#[derive(Clone)]
pub struct MatrixFieldSpec {
    name: String,
    domain: DomainSpec,
    field: Arc<dyn MatrixField>,
}

impl Debug for MatrixFieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixFieldSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .finish()
    }
}

impl MatrixFieldSpec {
    pub fn new(
        name: impl Into<String>,
        domain: DomainSpec,
        field: Arc<dyn MatrixField>,
    ) -> Result<Self> {
        if field.dim() != domain.dim {
            return Err(Error::Dimension {
                expected: domain.dim,
                got: field.dim(),
            });
        }
        Ok(Self {
            name: name.into(),
            domain,
            field,
        })
    }

    /// Constant field `S`.
    pub fn constant(s: DMatrix<f64>) -> Result<Self> {
        super::catalog::validate_spd(&s)?;
        let d = s.nrows();
        Self::new(
            "const-field",
            DomainSpec::full(d),
            Arc::new(ConstField { s }),
        )
    }

    /// The Hessian field of `spec`, giving `H_F(xi, a) = (xi-a)^T hess F(a) (xi-a)`.
    pub fn hessian_of(spec: &DivergenceSpec) -> Self {
        Self {
            name: format!("hessian-field({})", spec.name()),
            domain: spec.domain().clone(),
            field: Arc::new(HessianField { spec: spec.clone() }),
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

    pub fn matrix(&self, x: &[f64]) -> DMatrix<f64> {
        self.field.eval(x)
    }

    /// The matrix of a constant field.
    pub fn constant_matrix(&self) -> Option<DMatrix<f64>> {
        self.field.constant()
    }

    /// Unchecked similarity.
    #[inline]
    pub fn similarity(&self, xi: &[f64], a: &[f64]) -> f64 {
        let s = self.field.eval(a);
        similarity_with(&s, xi, a)
    }
}

/// `(xi - a)^T s (xi - a)` for a precomputed matrix.
#[inline]
pub(crate) fn similarity_with(s: &DMatrix<f64>, xi: &[f64], a: &[f64]) -> f64 {
    let diff: Vec<f64> = xi.iter().zip(a).map(|(x, y)| x - y).collect();
    quad_form(s, &diff, &diff).max(0.0)
}

/// `(xi - a)^T S(a) (xi - a)` with domain checks.
pub fn eval_field_similarity(field: &MatrixFieldSpec, xi: &[f64], a: &[f64]) -> Result<f64> {
    field.domain.check(xi)?;
    field.domain.check(a)?;
    Ok(field.similarity(xi, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::{builtin, CatalogEntry, CatalogParams};

    #[test]
    fn identity_field() {
        let f = MatrixFieldSpec::constant(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(
            eval_field_similarity(&f, &[1.0, 1.0], &[0.0, 0.0]).unwrap(),
            2.0
        );
        assert_eq!(
            eval_field_similarity(&f, &[0.4, 0.1], &[0.4, 0.1]).unwrap(),
            0.0
        );
    }

    #[test]
    fn scaled_identity_field() {
        let f = MatrixFieldSpec::constant(DMatrix::identity(2, 2) * 2.0).unwrap();
        assert_eq!(
            eval_field_similarity(&f, &[1.0, 0.0], &[0.0, 0.0]).unwrap(),
            2.0
        );
    }

    #[test]
    fn mahalanobis_matches_constant_field() {
        let rows = vec![vec![3.0, 0.5], vec![0.5, 1.0]];
        let p = CatalogParams {
            s: Some(rows.clone()),
            ..Default::default()
        };
        let CatalogEntry::Divergence(m) = builtin("mahalanobis", &p).unwrap() else {
            panic!()
        };
        let CatalogEntry::Field(f) = builtin("const-field", &p).unwrap() else {
            panic!()
        };
        let (xi, a) = ([0.2, -1.3], [1.1, 0.7]);
        assert!((m.phi(&xi, &a) - f.similarity(&xi, &a)).abs() < 1e-13);
    }

    #[test]
    fn hessian_field_of_sq_euclid_is_twice_euclid() {
        let f = MatrixFieldSpec::hessian_of(&DivergenceSpec::sq_euclid(2));
        assert!((f.similarity(&[1.0, 2.0], &[0.0, 0.0]) - 10.0).abs() < 1e-14);
    }
}
