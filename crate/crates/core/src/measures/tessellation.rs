use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::region::BoxRegion;

/// Closed axis-aligned cube given by center and half edge length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub center: Vec<f64>,
    pub half_width: f64,
}

impl Cube {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.half_width * (self.dim() as f64).sqrt()
    }

    pub fn to_box(&self) -> BoxRegion {
        BoxRegion {
            lo: self.center.iter().map(|c| c - self.half_width).collect(),
            hi: self.center.iter().map(|c| c + self.half_width).collect(),
        }
    }
}

/// Partition of a cube `C` of edge `L` into `m^d` congruent cells.
///
/// Cells are half-open `[a, a + L/m)` per axis except the last one on each
/// axis, which also contains the upper face of `C`. Cell indices are
/// row-major in the per-axis multi-index.
#[derive(Clone, Debug, PartialEq)]
pub struct Tessellation {
    lo: Vec<f64>,
    edge: f64,
    m: usize,
    active: Vec<usize>,
}

/// Tessellates the smallest cube sharing the lower corner of `region` that contains it.
pub fn tessellate(region: &BoxRegion, m: usize) -> Result<Tessellation> {
    let edge = region.widths().into_iter().fold(0.0, f64::max);
    Tessellation::new(region.lo.clone(), edge, m)
}

impl Tessellation {
    pub fn new(lo: Vec<f64>, edge: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("tessellation needs m >= 1".into()));
        }
        if lo.is_empty() || !(edge > 0.0) || !edge.is_finite() || lo.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "bad tessellation cube lo={lo:?} edge={edge}"
            )));
        }
        let n = m
            .checked_pow(lo.len() as u32)
            .filter(|n| *n <= 1 << 28)
            .ok_or_else(|| {
                Error::InvalidParameter(format!("m^d too large for m={m}, d={}", lo.len()))
            })?;
        Ok(Self {
            lo,
            edge,
            m,
            active: (0..n).collect(),
        })
    }

    /// Restricts the active set to cells meeting `support` with positive volume.
    pub fn with_support(mut self, support: &BoxRegion) -> Self {
        self.active = (0..self.num_cells())
            .filter(|&i| self.cell_box(i).intersect(support).is_some())
            .collect();
        self
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edge(&self) -> f64 {
        self.edge
    }

    pub fn cell_width(&self) -> f64 {
        self.edge / self.m as f64
    }

    pub fn num_cells(&self) -> usize {
        self.m.pow(self.dim() as u32)
    }

    pub fn cube(&self) -> BoxRegion {
        BoxRegion {
            lo: self.lo.clone(),
            hi: self.lo.iter().map(|a| a + self.edge).collect(),
        }
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn cell_diameter(&self) -> f64 {
        (self.dim() as f64).sqrt() * self.cell_width()
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = i % self.m;
            i /= self.m;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &j| acc * self.m + j)
    }

    pub fn cell(&self, i: usize) -> Cube {
        let h = self.cell_width();
        Cube {
            center: self
                .multi_index(i)
                .iter()
                .zip(&self.lo)
                .map(|(&j, a)| a + (j as f64 + 0.5) * h)
                .collect(),
            half_width: 0.5 * h,
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = Cube> + '_ {
        (0..self.num_cells()).map(|i| self.cell(i))
    }

    pub fn cell_box(&self, i: usize) -> BoxRegion {
        let h = self.cell_width();
        let idx = self.multi_index(i);
        BoxRegion {
            lo: idx
                .iter()
                .zip(&self.lo)
                .map(|(&j, a)| a + j as f64 * h)
                .collect(),
            hi: idx
                .iter()
                .zip(&self.lo)
                .map(|(&j, a)| a + (j + 1) as f64 * h)
                .collect(),
        }
    }

    /// Cell containing `x`, by coordinate floor; `None` outside `C`.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut flat = 0;
        for (v, a) in x.iter().zip(&self.lo) {
            let t = (v - a) / self.edge;
            if !(0.0..=1.0).contains(&t) {
                return None;
            }
            let j = ((t * self.m as f64).floor() as usize).min(self.m - 1);
            flat = flat * self.m + j;
        }
        Some(flat)
    }
}
