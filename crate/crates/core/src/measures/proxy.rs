use rand::Rng;

use super::distribution::DistributionSpec;
use super::quadrature::integrate_box;
use super::tessellation::Tessellation;
use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;

/// How cell probabilities are obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProxyMode {
    /// Integrate the density over each cell to absolute tolerance `tol`.
    Quadrature { tol: f64 },
    /// Empirical cell frequencies of `n` draws.
    MonteCarlo { n: usize, seed: u64 },
}

impl Default for ProxyMode {
    fn default() -> Self {
        Self::Quadrature { tol: 1e-10 }
    }
}

/// Measure that is uniform on each tessellation cell with the cell's probability.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxyMeasure {
    tess: Tessellation,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    /// Mass of the source measure found inside the tessellated cube before normalization.
    pub mass_captured: f64,
}

impl ProxyMeasure {
    /// Proxy from explicit non-negative cell weights, normalized to sum 1.
    pub fn from_probs(tess: Tessellation, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != tess.num_cells() {
            return Err(Error::Dimension {
                expected: tess.num_cells(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(
                "cell weights must be finite and non-negative".into(),
            ));
        }
        let total = pairwise_sum(&weights);
        if !(total > 0.0) {
            return Err(Error::Degenerate("proxy measure without mass".into()));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self {
            tess,
            probs,
            cumulative,
            mass_captured: total,
        })
    }

    pub fn tessellation(&self) -> &Tessellation {
        &self.tess
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `h_m(x) = (m/L)^d p_i` on cell `i`, zero outside the cube.
    pub fn density(&self, x: &[f64]) -> f64 {
        match self.tess.locate(x) {
            Some(i) => self.probs[i] / self.tess.cell_width().powi(self.tess.dim() as i32),
            None => 0.0,
        }
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let u: f64 = rng.random::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        let mut i = self
            .cumulative
            .partition_point(|c| *c <= u)
            .min(self.probs.len() - 1);
        while self.probs[i] == 0.0 && i > 0 {
            i -= 1;
        }
        self.tess.cell_box(i).sample_uniform(rng, out);
    }

    /// `||h_m - h||_1` against the density of `dist`, including mass of `dist` outside the cube.
    pub fn l1_distance(&self, dist: &DistributionSpec, tol: f64) -> Result<f64> {
        let support = dist
            .support()
            .filter(|_| dist.has_density())
            .ok_or_else(|| {
                Error::UnsupportedMode(format!("L1 distance needs a density, got {}", dist.label()))
            })?;
        let scale = self.tess.cell_width().powi(self.tess.dim() as i32);
        let n = self.tess.num_cells();
        let cell_tol = tol / n as f64;
        let mut diffs = Vec::with_capacity(n);
        let mut inner = Vec::with_capacity(n);
        for i in 0..n {
            let cell = self.tess.cell_box(i);
            let c = self.probs[i] / scale;
            let d = integrate_box(
                |x| (c - dist.density(x).unwrap_or(0.0)).abs(),
                &cell,
                cell_tol,
            )?;
            diffs.push(d.value);
            if let Some(part) = cell.intersect(&support) {
                inner.push(
                    integrate_box(|x| dist.density(x).unwrap_or(0.0), &part, cell_tol)?.value,
                );
            }
        }
        let outside = (1.0 - pairwise_sum(&inner)).max(0.0);
        Ok(pairwise_sum(&diffs) + if outside > tol { outside } else { 0.0 })
    }
}

/// Cell probabilities of `dist` on `tess`.
pub fn build_proxy(
    dist: &DistributionSpec,
    tess: &Tessellation,
    mode: ProxyMode,
) -> Result<ProxyMeasure> {
    if dist.dim() != tess.dim() {
        return Err(Error::Dimension {
            expected: tess.dim(),
            got: dist.dim(),
        });
    }
    match mode {
        ProxyMode::Quadrature { tol } => {
            if !dist.has_density() {
                return Err(Error::UnsupportedMode(format!(
                    "quadrature proxy needs a density, got {}",
                    dist.label()
                )));
            }
            let support = dist
                .support()
                .ok_or_else(|| Error::UnsupportedMode(dist.label()))?;
            let cell_tol = tol / tess.num_cells() as f64;
            let mut weights = vec![0.0; tess.num_cells()];
            for (i, w) in weights.iter_mut().enumerate() {
                if let Some(part) = tess.cell_box(i).intersect(&support) {
                    *w = integrate_box(|x| dist.density(x).unwrap_or(0.0), &part, cell_tol)?
                        .value
                        .max(0.0);
                }
            }
            ProxyMeasure::from_probs(tess.clone(), weights)
        }
        ProxyMode::MonteCarlo { n, seed } => {
            if n == 0 {
                return Err(Error::InvalidParameter(
                    "Monte Carlo proxy needs n >= 1".into(),
                ));
            }
            let pts = dist.sample(n, seed);
            let mut counts = vec![0.0; tess.num_cells()];
            for p in pts.iter() {
                if let Some(i) = tess.locate(p) {
                    counts[i] += 1.0;
                }
            }
            let mut proxy = ProxyMeasure::from_probs(tess.clone(), counts)?;
            proxy.mass_captured /= n as f64;
            Ok(proxy)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::tessellation::tessellate;
    use crate::region::BoxRegion;

    #[test]
    fn uniform_halves_exactly() {
        let u = DistributionSpec::uniform(BoxRegion::unit(1)).unwrap();
        let p = build_proxy(
            &u,
            &tessellate(&BoxRegion::unit(1), 2).unwrap(),
            ProxyMode::default(),
        )
        .unwrap();
        assert!(p.probs().iter().all(|v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn triangular_quarters() {
        let t = DistributionSpec::triangular(1);
        let p = build_proxy(
            &t,
            &tessellate(&BoxRegion::unit(1), 2).unwrap(),
            ProxyMode::default(),
        )
        .unwrap();
        assert!((p.probs()[0] - 0.25).abs() < 1e-12 && (p.probs()[1] - 0.75).abs() < 1e-12);
        assert!((p.density(&[0.1]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_within_binomial_band() {
        let t = DistributionSpec::triangular(2);
        let tess = tessellate(&BoxRegion::unit(2), 3).unwrap();
        let q = build_proxy(&t, &tess, ProxyMode::default()).unwrap();
        let n = 200_000;
        let mc = build_proxy(&t, &tess, ProxyMode::MonteCarlo { n, seed: 4 }).unwrap();
        for (a, b) in q.probs().iter().zip(mc.probs()) {
            assert!((a - b).abs() <= 3.0 * (a * (1.0 - a) / n as f64).sqrt() + 1e-12);
        }
        assert!((mc.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn l1_distance_triangular_closed_form() {
        // each cell of width w contributes w^2 / 2, so the total is 1 / (2m)
        let t = DistributionSpec::triangular(1);
        for m in [4, 8] {
            let tess = tessellate(&BoxRegion::unit(1), m).unwrap();
            let p = build_proxy(&t, &tess, ProxyMode::default()).unwrap();
            let l1 = p.l1_distance(&t, 1e-10).unwrap();
            assert!((l1 - 0.5 / m as f64).abs() < 1e-9, "m={m}: {l1}");
        }
    }

    #[test]
    fn quadrature_mode_rejects_empirical() {
        let e =
            DistributionSpec::empirical(crate::points::Points::from_scalars(&[0.2, 0.4])).unwrap();
        let tess = tessellate(&BoxRegion::unit(1), 2).unwrap();
        assert!(matches!(
            build_proxy(&e, &tess, ProxyMode::default()),
            Err(Error::UnsupportedMode(_))
        ));
        assert!(build_proxy(&e, &tess, ProxyMode::MonteCarlo { n: 10, seed: 1 }).is_ok());
    }
}
