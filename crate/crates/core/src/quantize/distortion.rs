use rayon::prelude::*;
use serde::Serialize;

use super::codebook::Codebook;
use super::similarity::{Prepared, Similarity};
use crate::divergence::{bregman_bisector, DivergenceSpec};
use crate::error::{Error, Result};
use crate::measures::quadrature::adaptive_simpson_rel;
use crate::measures::DistributionSpec;
use crate::numeric::{pairwise_sum, par_sum};
use crate::points::Points;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMethod {
    #[serde(rename = "exact-1d")]
    Exact1d,
    Mc,
}

/// Estimate of the distortion `E min_a loss(X, a)^(r/2)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorEstimate {
    /// `e_r^r`.
    pub value: f64,
    pub r: f64,
    pub method: ErrorMethod,
    pub std_error: Option<f64>,
    /// Sample count (Monte Carlo) or absent.
    pub samples: Option<usize>,
    /// Quadrature tolerance (exact-1d) or absent.
    pub tol: Option<f64>,
}

impl ErrorEstimate {
    /// `e_r = value^(1/r)`.
    pub fn e_r(&self) -> f64 {
        self.value.max(0.0).powf(1.0 / self.r)
    }

    /// Standard error of `e_r` by the delta method.
    pub fn e_r_std_error(&self) -> Option<f64> {
        let se = self.std_error?;
        if self.value > 0.0 {
            Some(self.e_r() * se / (self.r * self.value))
        } else {
            Some(0.0)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DistortionMode {
    /// Cellwise adaptive quadrature in one dimension with relative tolerance `tol`.
    Exact1d {
        tol: f64,
    },
    MonteCarlo {
        n: usize,
        seed: u64,
    },
}

/// Index of the nearest codeword to `xi`; ties go to the lowest index.
pub fn assign(cb: &Codebook, xi: &[f64], sim: &Similarity) -> Result<usize> {
    if cb.is_empty() {
        return Err(Error::Empty("codebook has no codewords".into()));
    }
    if cb.dim() != sim.dim() {
        return Err(Error::Dimension {
            expected: sim.dim(),
            got: cb.dim(),
        });
    }
    sim.domain().check(xi)?;
    let origin = vec![0.0; xi.len()];
    let prepared = sim.prepare(&cb.points, &origin);
    let mut buf = vec![0.0; xi.len()];
    Ok(prepared.nearest(xi, &mut buf).index)
}

/// Nearest codeword index and loss for every point.
pub(crate) fn assign_all(prepared: &Prepared<'_>, pts: &Points) -> (Vec<usize>, Vec<f64>) {
    let d = pts.dim();
    let pairs: Vec<(usize, f64)> = pts
        .as_flat()
        .par_chunks(d)
        .map_init(
            || vec![0.0; d],
            |buf, xi| {
                let nn = prepared.nearest(xi, buf);
                (nn.index, nn.value)
            },
        )
        .collect();
    pairs.into_iter().unzip()
}

pub(crate) fn check_codewords(cb: &Codebook, sim: &Similarity) -> Result<()> {
    if cb.is_empty() {
        return Err(Error::Empty("codebook has no codewords".into()));
    }
    if cb.dim() != sim.dim() {
        return Err(Error::Dimension {
            expected: sim.dim(),
            got: cb.dim(),
        });
    }
    cb.points.iter().try_for_each(|a| sim.domain().check(a))
}

/// Every sample must lie in the domain of the loss.
pub(crate) fn check_samples(pts: &Points, sim: &Similarity) -> Result<()> {
    if pts.dim() != sim.dim() {
        return Err(Error::Dimension {
            expected: sim.dim(),
            got: pts.dim(),
        });
    }
    let d = pts.dim();
    pts.as_flat()
        .par_chunks(d)
        .try_for_each(|x| sim.domain().check(x))
}

/// Monte Carlo distortion over a fixed sample.
pub fn distortion_on_samples(
    cb: &Codebook,
    pts: &Points,
    r: f64,
    sim: &Similarity,
) -> Result<ErrorEstimate> {
    check_codewords(cb, sim)?;
    if pts.is_empty() {
        return Err(Error::Empty("no samples".into()));
    }
    check_samples(pts, sim)?;
    let centroid = pts.mean().expect("non-empty");
    let prepared = sim.prepare(&cb.points, &centroid);
    let (_, losses) = assign_all(&prepared, pts);
    mc_estimate(&losses, r)
}

pub(crate) fn mc_estimate(losses: &[f64], r: f64) -> Result<ErrorEstimate> {
    let n = losses.len();
    let term = |i: usize| losses[i].max(0.0).powf(0.5 * r);
    let mean = par_sum(n, term) / n as f64;
    if !mean.is_finite() {
        return Err(Error::NonFinite(
            "distortion (a sample lies outside the domain?)".into(),
        ));
    }
    let var = if n > 1 {
        par_sum(n, |i| (term(i) - mean).powi(2)) / (n - 1) as f64
    } else {
        0.0
    };
    Ok(ErrorEstimate {
        value: mean,
        r,
        method: ErrorMethod::Mc,
        std_error: Some((var / n as f64).sqrt()),
        samples: Some(n),
        tol: None,
    })
}

type Cells1d = (Vec<(usize, f64)>, Vec<f64>);

/// Codewords sorted ascending with their original indices, and the bisector
/// points between neighbours.
pub(crate) fn cells_1d(spec: &DivergenceSpec, codewords: &[f64]) -> Result<Cells1d> {
    let mut order: Vec<(usize, f64)> = codewords.iter().copied().enumerate().collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut bounds = Vec::with_capacity(order.len().saturating_sub(1));
    for w in order.windows(2) {
        let (a, b) = (w[0].1, w[1].1);
        if a == b {
            bounds.push(a);
            continue;
        }
        let t = bregman_bisector(spec, &[a], &[b])?
            .point_1d()
            .expect("one-dimensional bisector");
        bounds.push(t.clamp(a, b));
    }
    Ok((order, bounds))
}

/// Distortion of `cb` under `dist`.
pub fn distortion(
    cb: &Codebook,
    dist: &DistributionSpec,
    r: f64,
    sim: &Similarity,
    mode: DistortionMode,
) -> Result<ErrorEstimate> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "order r must be positive, got {r}"
        )));
    }
    check_codewords(cb, sim)?;
    if dist.dim() != sim.dim() {
        return Err(Error::Dimension {
            expected: sim.dim(),
            got: dist.dim(),
        });
    }
    match mode {
        DistortionMode::MonteCarlo { n, seed } => {
            if n == 0 {
                return Err(Error::InvalidParameter(
                    "Monte Carlo distortion needs n >= 1".into(),
                ));
            }
            distortion_on_samples(cb, &dist.sample(n, seed), r, sim)
        }
        DistortionMode::Exact1d { tol } => {
            let spec = sim.bregman().ok_or_else(|| {
                Error::UnsupportedMode(format!(
                    "exact-1d needs a Bregman divergence, got {}",
                    sim.name()
                ))
            })?;
            if sim.dim() != 1 || !dist.has_density() {
                return Err(Error::UnsupportedMode(format!(
                    "exact-1d needs d = 1 and a density, got {}",
                    dist.label()
                )));
            }
            let support = dist
                .support()
                .ok_or_else(|| Error::UnsupportedMode(dist.label()))?;
            let (lo, hi) = (support.lo[0], support.hi[0]);
            let codewords: Vec<f64> = cb.points.as_flat().to_vec();
            let (order, bounds) = cells_1d(spec, &codewords)?;
            let mut parts = Vec::with_capacity(2 * order.len());
            for (k, &(_, a)) in order.iter().enumerate() {
                let left = if k == 0 { lo } else { bounds[k - 1].max(lo) };
                let right = if k + 1 == order.len() {
                    hi
                } else {
                    bounds[k].min(hi)
                };
                if !(left < right) {
                    continue;
                }
                let integrand = |x: f64| {
                    let h = dist.density(&[x]).unwrap_or(0.0);
                    if h == 0.0 {
                        0.0
                    } else {
                        spec.phi(&[x], &[a]).max(0.0).powf(0.5 * r) * h
                    }
                };
                let split = a.clamp(left, right);
                for (s, t) in [(left, split), (split, right)] {
                    if s < t {
                        parts.push(adaptive_simpson_rel(integrand, s, t, tol, 1e-300)?.value);
                    }
                }
            }
            Ok(ErrorEstimate {
                value: pairwise_sum(&parts),
                r,
                method: ErrorMethod::Exact1d,
                std_error: None,
                samples: None,
                tol: Some(tol),
            })
        }
    }
}
