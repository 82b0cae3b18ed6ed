use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::proxy::ProxyMeasure;
use super::quadrature::{adaptive_simpson, SIMPSON_MAX_DEPTH};
use crate::error::{Error, Result};
use crate::numeric::{derive_seed, rng_from_seed};
use crate::points::Points;
use crate::region::BoxRegion;

/// Points drawn per independently seeded block.
pub const SAMPLE_BLOCK: usize = 8192;

/// A probability input: a sampler, its support and optionally a density.
#[derive(Clone, Debug)]
pub enum DistributionSpec {
    /// Uniform on a bounded box.
    Uniform { region: BoxRegion },
    /// Product density `prod 2 x_k` on `[0,1]^d`.
    Triangular { dim: usize },
    /// Independent Gaussian coordinates conditioned on a bounded box.
    TruncatedGaussian {
        region: BoxRegion,
        mean: Vec<f64>,
        sigma: Vec<f64>,
        axis_mass: Vec<f64>,
    },
    /// Dirac mass.
    PointMass { point: Vec<f64> },
    /// Empirical measure of a fixed point set; sampling resamples with replacement.
    Empirical { points: Arc<Points> },
    /// Piecewise-constant density of a proxy measure.
    Piecewise { proxy: Arc<ProxyMeasure> },
}

fn normal_pdf(x: f64, mu: f64, s: f64) -> f64 {
    let z = (x - mu) / s;
    (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

impl DistributionSpec {
    pub fn uniform(region: BoxRegion) -> Result<Self> {
        if !region.is_bounded() {
            return Err(Error::InvalidParameter(
                "uniform distribution needs a bounded box".into(),
            ));
        }
        Ok(Self::Uniform { region })
    }

    pub fn triangular(dim: usize) -> Self {
        Self::Triangular { dim }
    }

    pub fn truncated_gaussian(region: BoxRegion, mean: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let d = region.dim();
        if mean.len() != d || sigma.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: mean.len().min(sigma.len()),
            });
        }
        if !region.is_bounded() || sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(
                "truncated Gaussian needs a bounded box and sigma > 0".into(),
            ));
        }
        let mut axis_mass = Vec::with_capacity(d);
        for k in 0..d {
            let (mu, s) = (mean[k], sigma[k]);
            let q = adaptive_simpson(
                |x| normal_pdf(x, mu, s),
                region.lo[k],
                region.hi[k],
                1e-14,
                SIMPSON_MAX_DEPTH,
            )?;
            if q.value < 1e-6 {
                return Err(Error::InvalidParameter(format!(
                    "truncation box carries Gaussian mass {} on axis {k}",
                    q.value
                )));
            }
            axis_mass.push(q.value);
        }
        Ok(Self::TruncatedGaussian {
            region,
            mean,
            sigma,
            axis_mass,
        })
    }

    pub fn point_mass(point: Vec<f64>) -> Self {
        Self::PointMass { point }
    }

    pub fn empirical(points: Points) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("empirical distribution without points".into()));
        }
        Ok(Self::Empirical {
            points: Arc::new(points),
        })
    }

    /// Reads one point per CSV row, plain decimal columns, no header.
    pub fn empirical_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec =
                rec.map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| {
                    Error::InvalidParameter(format!("{} row {}: {e}", path.display(), i + 1))
                })?;
            rows.push(row);
        }
        Self::empirical(Points::from_rows(&rows)?)
    }

    pub fn piecewise(proxy: ProxyMeasure) -> Self {
        Self::Piecewise {
            proxy: Arc::new(proxy),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Uniform { region } | Self::TruncatedGaussian { region, .. } => region.dim(),
            Self::Triangular { dim } => *dim,
            Self::PointMass { point } => point.len(),
            Self::Empirical { points } => points.dim(),
            Self::Piecewise { proxy } => proxy.tessellation().dim(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Uniform { region } => {
                format!("uniform-box(lo={:?}, hi={:?})", region.lo, region.hi)
            }
            Self::Triangular { dim } => format!("triangular(d={dim})"),
            Self::TruncatedGaussian { mean, sigma, .. } => {
                format!("gaussian-truncated(mean={mean:?}, sigma={sigma:?})")
            }
            Self::PointMass { point } => format!("point-mass({point:?})"),
            Self::Empirical { points } => format!("empirical(n={})", points.len()),
            Self::Piecewise { proxy } => format!("piecewise(m={})", proxy.tessellation().m()),
        }
    }

    /// Smallest closed box carrying all the mass; `None` for a point mass.
    pub fn support(&self) -> Option<BoxRegion> {
        match self {
            Self::Uniform { region } | Self::TruncatedGaussian { region, .. } => {
                Some(region.clone())
            }
            Self::Triangular { dim } => Some(BoxRegion::unit(*dim)),
            Self::PointMass { .. } => None,
            Self::Empirical { points } => points
                .bounding_box()
                .filter(|b| b.lo.iter().zip(&b.hi).all(|(a, c)| a < c)),
            Self::Piecewise { proxy } => Some(proxy.tessellation().cube()),
        }
    }

    pub fn has_density(&self) -> bool {
        !matches!(self, Self::PointMass { .. } | Self::Empirical { .. })
    }

    /// Lebesgue density at `x`, `None` when the measure has none.
    pub fn density(&self, x: &[f64]) -> Option<f64> {
        match self {
            Self::Uniform { region } => Some(if region.contains(x) {
                1.0 / region.volume()
            } else {
                0.0
            }),
            Self::Triangular { dim } => {
                let inside = x.len() == *dim && x.iter().all(|v| (0.0..=1.0).contains(v));
                Some(if inside {
                    x.iter().map(|v| 2.0 * v).product()
                } else {
                    0.0
                })
            }
            Self::TruncatedGaussian {
                region,
                mean,
                sigma,
                axis_mass,
            } => {
                if !region.contains(x) {
                    return Some(0.0);
                }
                Some(
                    (0..x.len())
                        .map(|k| normal_pdf(x[k], mean[k], sigma[k]) / axis_mass[k])
                        .product(),
                )
            }
            Self::Piecewise { proxy } => Some(proxy.density(x)),
            Self::PointMass { .. } | Self::Empirical { .. } => None,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Self::Uniform { region } => region.sample_uniform(rng, out),
            Self::Triangular { .. } => {
                for o in out.iter_mut() {
                    let u: f64 = rng.random();
                    *o = u.sqrt();
                }
            }
            Self::TruncatedGaussian {
                region,
                mean,
                sigma,
                ..
            } => {
                for (k, o) in out.iter_mut().enumerate() {
                    loop {
                        let z: f64 = StandardNormal.sample(rng);
                        let v = mean[k] + sigma[k] * z;
                        if region.lo[k] <= v && v <= region.hi[k] {
                            *o = v;
                            break;
                        }
                    }
                }
            }
            Self::PointMass { point } => out.copy_from_slice(point),
            Self::Empirical { points } => {
                let i = rng.random_range(0..points.len());
                out.copy_from_slice(points.row(i));
            }
            Self::Piecewise { proxy } => proxy.draw(rng, out),
        }
    }

    /// `n` draws; block `j` of [`SAMPLE_BLOCK`] points uses its own derived
    /// seed, so any prefix of a larger sample equals the smaller sample.
    pub fn sample(&self, n: usize, seed: u64) -> Points {
        let d = self.dim();
        let blocks: Vec<Vec<f64>> = (0..n.div_ceil(SAMPLE_BLOCK))
            .into_par_iter()
            .map(|j| {
                let count = SAMPLE_BLOCK.min(n - j * SAMPLE_BLOCK);
                let mut rng = rng_from_seed(derive_seed(seed, &[j as u64]));
                let mut buf = vec![0.0; count * d];
                for row in buf.chunks_exact_mut(d) {
                    self.draw(&mut rng, row);
                }
                buf
            })
            .collect();
        Points::from_flat(d, blocks.concat()).expect("block sizes are multiples of the dimension")
    }
}
