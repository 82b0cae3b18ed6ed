//! Strictly convex generators `F` with closed-form gradient and Hessian.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// A twice differentiable strictly convex function on an open convex set.
pub trait ConvexFunction: Send + Sync + Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], out: &mut [f64]);

    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;

    /// `F(xi) - F(x) - <grad F(x), xi - x>`; implementors may override with a
    /// closed form that loses less precision.
    fn divergence(&self, xi: &[f64], x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.gradient(x, &mut g);
        let lin: f64 = g
            .iter()
            .zip(xi.iter().zip(x))
            .map(|(gk, (a, b))| gk * (a - b))
            .sum();
        self.value(xi) - self.value(x) - lin
    }

    /// False for catalog members whose divergence is given by a formula that
    /// is not the Bregman divergence of `value` (affine bisectors do not apply).
    fn is_bregman(&self) -> bool {
        true
    }

    /// The Hessian when it does not depend on the point.
    fn constant_hessian(&self) -> Option<DMatrix<f64>> {
        None
    }
}

/// One-dimensional generators of the catalog.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ScalarKind {
    Square,
    NormLike { a: f64 },
    ItakuraSaito,
    KullbackLeibler,
    Logistic,
    Softplus { a: f64 },
    Exponential { rho: f64 },
}

/// `u - ln(1 + u)` without cancellation for small `u`.
fn u_minus_ln1p(u: f64) -> f64 {
    if u.abs() > 0.25 {
        return u - u.ln_1p();
    }
    // alternating series sum_{k >= 2} (-1)^k u^k / k
    let mut term = u * u;
    let mut sum: f64 = 0.0;
    let mut k = 2.0;
    while term.abs() > 1e-18 * sum.abs() || k == 2.0 {
        sum += term / k;
        term *= -u;
        k += 1.0;
        if term == 0.0 {
            break;
        }
    }
    sum
}

/// Numerically stable `ln(1 + e^t)`.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl ScalarKind {
    pub fn f(&self, x: f64) -> f64 {
        match *self {
            ScalarKind::Square => x * x,
            ScalarKind::NormLike { a } => x.powf(a),
            ScalarKind::ItakuraSaito => -x.ln(),
            ScalarKind::KullbackLeibler => x * x.ln(),
            ScalarKind::Logistic => x * x.ln() + (1.0 - x) * (1.0 - x).ln(),
            ScalarKind::Softplus { a } => softplus(a * x) / a,
            ScalarKind::Exponential { rho } => (rho * x).exp(),
        }
    }

    pub fn df(&self, x: f64) -> f64 {
        match *self {
            ScalarKind::Square => 2.0 * x,
            ScalarKind::NormLike { a } => a * x.powf(a - 1.0),
            ScalarKind::ItakuraSaito => -1.0 / x,
            ScalarKind::KullbackLeibler => x.ln() + 1.0,
            ScalarKind::Logistic => (x / (1.0 - x)).ln(),
            ScalarKind::Softplus { a } => sigmoid(a * x),
            ScalarKind::Exponential { rho } => rho * (rho * x).exp(),
        }
    }

    pub fn d2f(&self, x: f64) -> f64 {
        match *self {
            ScalarKind::Square => 2.0,
            ScalarKind::NormLike { a } => a * (a - 1.0) * x.powf(a - 2.0),
            ScalarKind::ItakuraSaito => 1.0 / (x * x),
            ScalarKind::KullbackLeibler => 1.0 / x,
            ScalarKind::Logistic => 1.0 / (x * (1.0 - x)),
            ScalarKind::Softplus { a } => {
                let s = sigmoid(a * x);
                a * s * (1.0 - s)
            }
            ScalarKind::Exponential { rho } => rho * rho * (rho * x).exp(),
        }
    }

    /// Closed-form scalar divergence from the one-dimensional catalog.
    pub fn phi(&self, xi: f64, x: f64) -> f64 {
        match *self {
            ScalarKind::Square => (xi - x) * (xi - x),
            ScalarKind::NormLike { a } => {
                xi.powf(a) + (a - 1.0) * x.powf(a) - a * xi * x.powf(a - 1.0)
            }
            ScalarKind::ItakuraSaito => u_minus_ln1p((xi - x) / x),
            ScalarKind::KullbackLeibler => {
                let u = (xi - x) / x;
                x * (u * u - (1.0 + u) * u_minus_ln1p(u))
            }
            ScalarKind::Logistic => xi * (xi / x).ln() + (1.0 - xi) * ((1.0 - xi) / (1.0 - x)).ln(),
            ScalarKind::Softplus { a } => {
                (softplus(a * xi) - softplus(a * x)) / a - sigmoid(a * x) * (xi - x)
            }
            ScalarKind::Exponential { rho } => {
                let ex = (rho * x).exp();
                (rho * xi).exp() - ex - rho * ex * (xi - x)
            }
        }
    }

    /// Global bounds `(sup F'', inf F'')` on the natural domain, when finite and positive.
    pub fn curvature_bounds(&self) -> (Option<f64>, Option<f64>) {
        match *self {
            ScalarKind::Square => (Some(2.0), Some(2.0)),
            ScalarKind::Softplus { a } => (Some(a / 4.0), None),
            _ => (None, None),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            ScalarKind::Square => "sq-euclid".into(),
            ScalarKind::NormLike { a } => format!("norm-like(a={a})"),
            ScalarKind::ItakuraSaito => "itakura-saito".into(),
            ScalarKind::KullbackLeibler => "kl".into(),
            ScalarKind::Logistic => "logistic".into(),
            ScalarKind::Softplus { a } => format!("softplus(a={a})"),
            ScalarKind::Exponential { rho } => format!("exponential(rho={rho})"),
        }
    }
}

/// `F(x) = sum_i f(x_i)`.
#[derive(Clone, Debug)]
pub struct Separable {
    pub kind: ScalarKind,
    pub dim: usize,
}

impl ConvexFunction for Separable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.kind.f(v)).sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = self.kind.df(v);
        }
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            x.len(),
            x.iter().map(|&v| self.kind.d2f(v)),
        ))
    }

    fn divergence(&self, xi: &[f64], x: &[f64]) -> f64 {
        xi.iter().zip(x).map(|(&a, &b)| self.kind.phi(a, b)).sum()
    }

    fn constant_hessian(&self) -> Option<DMatrix<f64>> {
        matches!(self.kind, ScalarKind::Square).then(|| DMatrix::identity(self.dim, self.dim) * 2.0)
    }
}

/// `F(x) = x^T S x` for a symmetric positive definite `S`.
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub s: DMatrix<f64>,
}

impl ConvexFunction for Quadratic {
    fn dim(&self) -> usize {
        self.s.nrows()
    }

    fn value(&self, x: &[f64]) -> f64 {
        quad_form(&self.s, x, x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        for i in 0..d {
            out[i] = 2.0 * (0..d).map(|j| self.s[(i, j)] * x[j]).sum::<f64>();
        }
    }

    fn hessian(&self, _x: &[f64]) -> DMatrix<f64> {
        &self.s * 2.0
    }

    fn divergence(&self, xi: &[f64], x: &[f64]) -> f64 {
        let diff: Vec<f64> = xi.iter().zip(x).map(|(a, b)| a - b).collect();
        quad_form(&self.s, &diff, &diff)
    }

    fn constant_hessian(&self) -> Option<DMatrix<f64>> {
        Some(&self.s * 2.0)
    }
}

/// `u^T S v`.
pub(crate) fn quad_form(s: &DMatrix<f64>, u: &[f64], v: &[f64]) -> f64 {
    let d = u.len();
    let mut acc = 0.0;
    for i in 0..d {
        let mut row = 0.0;
        for j in 0..d {
            row += s[(i, j)] * v[j];
        }
        acc += u[i] * row;
    }
    acc
}

/// `F(x) = (1/lambda) log sum_i exp(lambda f(x_i))`.
#[derive(Clone, Debug)]
pub struct SoftmaxMarginal {
    pub kind: ScalarKind,
    pub lambda: f64,
    pub dim: usize,
}

impl SoftmaxMarginal {
    fn weights(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = x.iter().map(|&v| self.lambda * self.kind.f(v)).collect();
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }
}

impl ConvexFunction for SoftmaxMarginal {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let z: Vec<f64> = x.iter().map(|&v| self.lambda * self.kind.f(v)).collect();
        let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (zmax + z.iter().map(|v| (v - zmax).exp()).sum::<f64>().ln()) / self.lambda
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let w = self.weights(x);
        for i in 0..x.len() {
            out[i] = w[i] * self.kind.df(x[i]);
        }
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let w = self.weights(x);
        let v: Vec<f64> = (0..d).map(|i| w[i] * self.kind.df(x[i])).collect();
        let mut h = DMatrix::zeros(d, d);
        for i in 0..d {
            let fp = self.kind.df(x[i]);
            h[(i, i)] = w[i] * (self.kind.d2f(x[i]) + self.lambda * fp * fp);
            for j in 0..d {
                h[(i, j)] -= self.lambda * v[i] * v[j];
            }
        }
        h
    }
}

/// How the multiplicative marginal divergence weights its coordinate terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProductForm {
    /// `sum_i phi_f(xi_i, x_i) prod_{j != i} f(x_j)`
    GeneratorFactors,
    /// `sum_i phi_f(xi_i, x_i) prod_{j != i} phi_f(xi_i, x_j)`
    DivergenceFactors,
}

/// `F(x) = prod_i f(x_i)` with the catalog's coordinate-wise divergence formula.
#[derive(Clone, Debug)]
pub struct ProductMarginal {
    pub kind: ScalarKind,
    pub dim: usize,
    pub form: ProductForm,
}

impl ConvexFunction for ProductMarginal {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.kind.f(v)).product()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            let others: f64 = (0..x.len())
                .filter(|&j| j != i)
                .map(|j| self.kind.f(x[j]))
                .product();
            out[i] = self.kind.df(x[i]) * others;
        }
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let mut h = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let rest: f64 = (0..d)
                    .filter(|&k| k != i && k != j)
                    .map(|k| self.kind.f(x[k]))
                    .product();
                h[(i, j)] = if i == j {
                    self.kind.d2f(x[i]) * rest
                } else {
                    self.kind.df(x[i]) * self.kind.df(x[j]) * rest
                };
            }
        }
        h
    }

    fn divergence(&self, xi: &[f64], x: &[f64]) -> f64 {
        let d = x.len();
        (0..d)
            .map(|i| {
                let weight: f64 = (0..d)
                    .filter(|&j| j != i)
                    .map(|j| match self.form {
                        ProductForm::GeneratorFactors => self.kind.f(x[j]),
                        ProductForm::DivergenceFactors => self.kind.phi(xi[i], x[j]),
                    })
                    .product();
                self.kind.phi(xi[i], x[i]) * weight
            })
            .sum()
    }

    fn is_bregman(&self) -> bool {
        false
    }
}

/// `F(x) + eps |x|^2`.
#[derive(Clone, Debug)]
pub struct Regularized {
    pub inner: Arc<dyn ConvexFunction>,
    pub eps: f64,
}

impl ConvexFunction for Regularized {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x) + self.eps * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.inner.gradient(x, out);
        for (o, v) in out.iter_mut().zip(x) {
            *o += 2.0 * self.eps * v;
        }
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut h = self.inner.hessian(x);
        for i in 0..x.len() {
            h[(i, i)] += 2.0 * self.eps;
        }
        h
    }

    fn divergence(&self, xi: &[f64], x: &[f64]) -> f64 {
        self.inner.divergence(xi, x) + self.eps * crate::numeric::dist_sq(xi, x)
    }

    fn is_bregman(&self) -> bool {
        self.inner.is_bregman()
    }

    fn constant_hessian(&self) -> Option<DMatrix<f64>> {
        self.inner
            .constant_hessian()
            .map(|h| h + DMatrix::identity(self.dim(), self.dim()) * (2.0 * self.eps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_closed_forms_match_generic_definition() {
        let kinds = [
            (ScalarKind::Square, 0.3, 1.7),
            (ScalarKind::NormLike { a: 1.5 }, 0.4, 2.2),
            (ScalarKind::ItakuraSaito, 0.7, 1.9),
            (ScalarKind::KullbackLeibler, 0.2, 3.1),
            (ScalarKind::Logistic, 0.15, 0.8),
            (ScalarKind::Softplus { a: 2.0 }, -1.2, 0.9),
            (ScalarKind::Exponential { rho: -0.7 }, -0.5, 1.3),
        ];
        for (k, xi, x) in kinds {
            let generic = k.f(xi) - k.f(x) - k.df(x) * (xi - x);
            assert!((k.phi(xi, x) - generic).abs() < 1e-12, "{}", k.label());
            assert!(k.phi(xi, x) > 0.0);
        }
    }

    #[test]
    fn logarithmic_divergences_keep_relative_accuracy_near_the_diagonal() {
        let x = 2.0;
        for v in [1e-3f64, -2e-5, 3e-8, 0.2, -0.24] {
            // xi - x is exact and x is a power of two, so u is exact
            let xi = x * (1.0 + v);
            let u = (xi - x) / x;
            // Taylor oracle in u, truncated where the next term is below 1e-17 relative
            let series = |c: &dyn Fn(i32) -> f64| (2..40).map(|k| c(k) * u.powi(k)).sum::<f64>();
            let is = series(&|k| if k % 2 == 0 { 1.0 } else { -1.0 } / k as f64);
            let kl = series(&|k| if k % 2 == 0 { 1.0 } else { -1.0 } / (k * (k - 1)) as f64);
            let got_is = ScalarKind::ItakuraSaito.phi(xi, x);
            let got_kl = ScalarKind::KullbackLeibler.phi(xi, x) / x;
            assert!(
                (got_is - is).abs() <= 1e-13 * is,
                "IS u={u}: {got_is} vs {is}"
            );
            assert!(
                (got_kl - kl).abs() <= 1e-13 * kl,
                "KL u={u}: {got_kl} vs {kl}"
            );
        }
    }

    #[test]
    fn softplus_is_stable_for_large_arguments() {
        let k = ScalarKind::Softplus { a: 1.0 };
        assert!(k.f(800.0).is_finite());
        assert!((k.f(-800.0)).abs() < 1e-300);
        assert!(k.phi(700.0, 650.0).is_finite());
    }
}
