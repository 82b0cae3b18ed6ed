use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points closer than this to the boundary of a bounded-below domain are rejected.
pub const DOMAIN_GUARD: f64 = 1e-12;

/// Shape of an open convex domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DomainKind {
    FullSpace,
    PositiveOrthant,
    /// Open box `(lo, hi)`; bounds may be infinite.
    OpenBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    OpenUnitBox,
}

/// An open convex subset of R^d on which a generator is defined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub dim: usize,
}

impl DomainSpec {
    pub fn full(dim: usize) -> Self {
        Self {
            kind: DomainKind::FullSpace,
            dim,
        }
    }

    pub fn positive_orthant(dim: usize) -> Self {
        Self {
            kind: DomainKind::PositiveOrthant,
            dim,
        }
    }

    pub fn unit_box(dim: usize) -> Self {
        Self {
            kind: DomainKind::OpenUnitBox,
            dim,
        }
    }

    pub fn open_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Dimension {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidParameter(
                "open box needs lo < hi on every axis".into(),
            ));
        }
        let dim = lo.len();
        Ok(Self {
            kind: DomainKind::OpenBox { lo, hi },
            dim,
        })
    }

    /// Lower and upper bounds per axis (possibly infinite).
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.kind {
            DomainKind::FullSpace => (
                vec![f64::NEG_INFINITY; self.dim],
                vec![f64::INFINITY; self.dim],
            ),
            DomainKind::PositiveOrthant => (vec![0.0; self.dim], vec![f64::INFINITY; self.dim]),
            DomainKind::OpenBox { lo, hi } => (lo.clone(), hi.clone()),
            DomainKind::OpenUnitBox => (vec![0.0; self.dim], vec![1.0; self.dim]),
        }
    }

    fn axis_bounds(&self, k: usize) -> (f64, f64) {
        match &self.kind {
            DomainKind::FullSpace => (f64::NEG_INFINITY, f64::INFINITY),
            DomainKind::PositiveOrthant => (0.0, f64::INFINITY),
            DomainKind::OpenBox { lo, hi } => (lo[k], hi[k]),
            DomainKind::OpenUnitBox => (0.0, 1.0),
        }
    }

    /// Membership in the open set.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_with_margin(x, 0.0)
    }

    /// Membership with the evaluation guard margin applied at finite faces.
    pub fn contains_guarded(&self, x: &[f64]) -> bool {
        self.contains_with_margin(x, DOMAIN_GUARD)
    }

    fn contains_with_margin(&self, x: &[f64], margin: f64) -> bool {
        if x.len() != self.dim {
            return false;
        }
        x.iter().enumerate().all(|(k, &v)| {
            let (lo, hi) = self.axis_bounds(k);
            v.is_finite() && v > lo + margin && v < hi - margin
        })
    }

    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        if self.contains_guarded(x) {
            Ok(())
        } else {
            Err(Error::Domain {
                point: x.to_vec(),
                domain: self.label(),
            })
        }
    }

    /// Clamps `x` in place so it sits at least `margin` inside every finite face.
    /// Returns whether any coordinate moved.
    pub fn project(&self, x: &mut [f64], margin: f64) -> bool {
        let mut moved = false;
        for (k, v) in x.iter_mut().enumerate() {
            let (lo, hi) = self.axis_bounds(k);
            if lo.is_finite() && *v < lo + margin {
                *v = lo + margin;
                moved = true;
            }
            if hi.is_finite() && *v > hi - margin {
                *v = hi - margin;
                moved = true;
            }
        }
        moved
    }

    pub fn label(&self) -> String {
        match &self.kind {
            DomainKind::FullSpace => format!("R^{}", self.dim),
            DomainKind::PositiveOrthant => format!("(0,inf)^{}", self.dim),
            DomainKind::OpenBox { lo, hi } => format!("open box {lo:?}..{hi:?}"),
            DomainKind::OpenUnitBox => format!("(0,1)^{}", self.dim),
        }
    }
}
