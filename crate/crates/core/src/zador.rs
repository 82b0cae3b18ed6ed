//! Sharp-rate constants, rate experiments and the Mahalanobis, dilation and
//! Pierce checks.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::divergence::{validate_spd, DivergenceSpec};
use crate::error::{Error, Result};
use crate::measures::{moment_sigma, pseudo_norm, DistributionSpec, MomentMode};
use crate::numeric::{derive_seed, fmt_g17};
use crate::points::Points;
use crate::quantize::{
    distortion, distortion_on_samples, train, Codebook, DistortionMode, ErrorEstimate, LloydInput,
    Similarity, TrainConfig,
};
use crate::region::BoxRegion;

/// Where a value of `Q_r([0,1]^d)` comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    #[serde(rename = "exact-1d")]
    Exact1d,
    #[serde(rename = "hexagonal-2d")]
    Hexagonal2d,
    #[serde(rename = "conjecture-3d")]
    Conjecture3d,
    Empirical,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantEstimate {
    pub value: f64,
    pub provenance: Provenance,
    /// Absolute uncertainty; zero for closed forms.
    pub uncertainty: f64,
    /// Assumption checks that failed; they do not invalidate the value.
    pub warnings: Vec<String>,
}

/// Settings for estimating `Q_r([0,1]^d)` when no closed form is known.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalQ {
    /// Two levels `n_a < n_b` for the extrapolation in `1/n`.
    pub levels: [usize; 2],
    pub training: usize,
    pub evaluation: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for EmpiricalQ {
    fn default() -> Self {
        Self {
            levels: [32, 64],
            training: 100_000,
            evaluation: 200_000,
            restarts: 3,
            seed: 0,
        }
    }
}

/// `Q_r([0,1]^d)` under the Euclidean norm.
pub fn q_r_cube(d: usize, r: f64) -> Result<ConstantEstimate> {
    q_r_cube_with(d, r, &EmpiricalQ::default())
}

pub fn q_r_cube_with(d: usize, r: f64, cfg: &EmpiricalQ) -> Result<ConstantEstimate> {
    if d == 0 || !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need d >= 1 and r > 0, got d = {d}, r = {r}"
        )));
    }
    let closed = |value, provenance| {
        Ok(ConstantEstimate {
            value,
            provenance,
            uncertainty: 0.0,
            warnings: vec![],
        })
    };
    if d == 1 {
        // limit of (n e_{r,n})^r with e_{r,n} = 1 / (2n (r+1)^(1/r))
        return closed(1.0 / (2f64.powf(r) * (r + 1.0)), Provenance::Exact1d);
    }
    if r == 2.0 && d == 2 {
        return closed(5.0 / (18.0 * 3f64.sqrt()), Provenance::Hexagonal2d);
    }
    if r == 2.0 && d == 3 {
        return closed(19.0 / (64.0 * 2f64.cbrt()), Provenance::Conjecture3d);
    }
    empirical_q(d, r, cfg)
}

/// Lloyd on the uniform cube at two levels and linear extrapolation of
/// `n^(r/d) e_{r,n}^r` in `1/n`.
fn empirical_q(d: usize, r: f64, cfg: &EmpiricalQ) -> Result<ConstantEstimate> {
    let [na, nb] = cfg.levels;
    if !(na >= 1 && na < nb) {
        return Err(Error::InvalidParameter(format!(
            "extrapolation levels must increase, got {:?}",
            cfg.levels
        )));
    }
    let exp = RateConfig {
        r,
        levels: vec![na, nb],
        restarts: cfg.restarts,
        seed: cfg.seed,
        training: Training::Samples { n: cfg.training },
        evaluation: Evaluation::MonteCarlo { n: cfg.evaluation },
        ..RateConfig::default()
    };
    let dist = DistributionSpec::uniform(BoxRegion::unit(d))?;
    let res = rate_experiment(&DivergenceSpec::sq_euclid(d).into(), &dist, &exp, None)?;
    let q = |l: &LevelResult| -> Result<(f64, f64)> {
        let est = l
            .estimate
            .as_ref()
            .ok_or_else(|| Error::Convergence(l.error.clone().unwrap_or_default()))?;
        let scale = (l.n as f64).powf(r / d as f64);
        Ok((scale * est.value, scale * est.std_error.unwrap_or(0.0)))
    };
    let (qa, sa) = q(&res.results[0])?;
    let (qb, sb) = q(&res.results[1])?;
    let (fa, fb) = (na as f64, nb as f64);
    let value = (fb * qb - fa * qa) / (fb - fa);
    let noise = (fb * fb * sb * sb + fa * fa * sa * sa).sqrt() / (fb - fa);
    Ok(ConstantEstimate {
        value,
        provenance: Provenance::Empirical,
        uncertainty: (qb - value).abs() + 2.0 * noise,
        warnings: vec![],
    })
}

fn local_matrix(sim: &Similarity, x: &[f64]) -> DMatrix<f64> {
    match sim {
        Similarity::Divergence(s) => s.hess(x),
        Similarity::Field(s) => s.matrix(x),
    }
}

/// Grid of `k^d` points over `region`, corners included.
fn probe_points(region: &BoxRegion, k: usize) -> Points {
    let d = region.dim();
    let total = k.pow(d as u32);
    let mut pts = Points::with_capacity(d, total);
    let mut row = vec![0.0; d];
    for flat in 0..total {
        let mut rest = flat;
        for j in (0..d).rev() {
            let i = rest % k;
            rest /= k;
            row[j] = region.lo[j] + (region.hi[j] - region.lo[j]) * i as f64 / (k - 1) as f64;
        }
        pts.push(&row);
    }
    pts
}

/// Spectral norm on the support above which the local matrix is reported as unbounded.
pub const HESSIAN_NORM_LIMIT: f64 = 1e12;

/// `Q_r(phi, P)`: `2^(-r/2) Q_r([0,1]^d) ||det(hess F)^(r/2d) h||_{d/(d+r)}` for
/// divergences and `Q_r([0,1]^d) ||det(S)^(r/2d) h||_{d/(d+r)}` for matrix fields.
pub fn zador_constant(
    sim: &Similarity,
    dist: &DistributionSpec,
    r: f64,
    tol: f64,
) -> Result<ConstantEstimate> {
    let d = sim.dim();
    if dist.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            got: dist.dim(),
        });
    }
    let support = dist
        .support()
        .filter(|s| dist.has_density() && s.is_bounded())
        .ok_or_else(|| {
            Error::UnsupportedMode(format!(
                "the constant needs a density with bounded support, got {}",
                dist.label()
            ))
        })?;
    let cube = q_r_cube(d, r)?;
    let mut warnings = cube.warnings.clone();
    let corners_inside = probe_points(&support, 2)
        .iter()
        .all(|c| sim.domain().contains(c));
    if !corners_inside {
        warnings.push(format!(
            "support {:?}..{:?} is not contained in the domain {}",
            support.lo,
            support.hi,
            sim.domain().label()
        ));
    } else {
        let worst = probe_points(&support, if d <= 2 { 33 } else { 5 })
            .iter()
            .map(|x| {
                local_matrix(sim, x)
                    .symmetric_eigenvalues()
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()))
            })
            .fold(0.0f64, |m, v| {
                if v.is_finite() {
                    m.max(v)
                } else {
                    f64::INFINITY
                }
            });
        if !(worst <= HESSIAN_NORM_LIMIT) {
            warnings.push(format!(
                "local matrix norm reaches {worst:e} on the support"
            ));
        }
    }
    let p = d as f64 / (d as f64 + r);
    let e = r / (2.0 * d as f64);
    let g = |x: &[f64]| {
        let h = dist.density(x).unwrap_or(0.0);
        if h == 0.0 {
            0.0
        } else {
            local_matrix(sim, x).determinant().max(0.0).powf(e) * h
        }
    };
    let norm = pseudo_norm(g, p, &support, tol)?;
    let factor = match sim {
        Similarity::Divergence(_) => 2f64.powf(-r / 2.0),
        Similarity::Field(_) => 1.0,
    };
    Ok(ConstantEstimate {
        value: factor * cube.value * norm.value,
        provenance: cube.provenance,
        uncertainty: factor * (cube.uncertainty * norm.value + cube.value * norm.error),
        warnings,
    })
}

/// How codebooks are trained in a rate experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Training {
    /// Lloyd against the density (one-dimensional Bregman only).
    Density,
    /// Lloyd on `n` draws.
    Samples { n: usize },
}

/// How trained codebooks are scored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Evaluation {
    Exact1d {
        tol: f64,
    },
    /// Independent draws, shared by all levels.
    MonteCarlo {
        n: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateConfig {
    pub r: f64,
    pub levels: Vec<usize>,
    pub restarts: usize,
    /// Master seed; training draws, restarts and evaluation draws derive from it.
    pub seed: u64,
    pub training: Training,
    pub evaluation: Evaluation,
    /// Lloyd settings; `r` is overridden.
    pub train: TrainConfig,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            r: 2.0,
            levels: vec![8, 16, 32, 64],
            restarts: 5,
            seed: 0,
            training: Training::Density,
            evaluation: Evaluation::Exact1d { tol: 1e-10 },
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelResult {
    pub n: usize,
    pub estimate: Option<ErrorEstimate>,
    /// `e_{r,n}`; NaN when the level failed.
    pub e_rn: f64,
    pub std_err: f64,
    /// `n^(1/d) e_{r,n}`.
    pub q_n: f64,
    pub restarts_used: usize,
    pub error: Option<String>,
    #[serde(skip)]
    pub codebook: Option<Codebook>,
}

/// Least-squares line through `(log n, log e_{r,n})`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    pub levels_used: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RateExperiment {
    pub r: f64,
    pub d: usize,
    pub divergence: String,
    pub distribution: String,
    pub levels: Vec<usize>,
    pub restarts: usize,
    pub seed: u64,
    pub results: Vec<LevelResult>,
    /// `Q_r(phi, P)`, the limit of `q_n^r`.
    pub theoretical_constant: Option<f64>,
    pub fit: Option<PowerFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateSummary {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub theoretical_constant: Option<f64>,
    pub n_max: usize,
    pub q_at_max: f64,
    /// `q_n / Q^(1/r)` at the largest level.
    pub ratio_at_max: Option<f64>,
    /// `q_n^r >= 0.8 Q` at the largest level.
    pub lower_bound_ok: Option<bool>,
}

impl RateExperiment {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,e_rn,std_err,q_n,restarts_used\n");
        for l in &self.results {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                l.n,
                fmt_g17(l.e_rn),
                fmt_g17(l.std_err),
                fmt_g17(l.q_n),
                l.restarts_used
            ));
        }
        out
    }

    pub fn summary(&self) -> RateSummary {
        let last = self.results.iter().rev().find(|l| l.estimate.is_some());
        let (n_max, q_at_max) = last.map_or((0, f64::NAN), |l| (l.n, l.q_n));
        let c = self.theoretical_constant;
        RateSummary {
            slope: self.fit.as_ref().map(|f| f.slope),
            intercept: self.fit.as_ref().map(|f| f.intercept),
            theoretical_constant: c,
            n_max,
            q_at_max,
            ratio_at_max: c
                .filter(|_| last.is_some())
                .map(|c| q_at_max / c.powf(1.0 / self.r)),
            lower_bound_ok: c
                .filter(|_| last.is_some())
                .map(|c| q_at_max.powf(self.r) >= 0.8 * c),
        }
    }
}

/// Least squares on the largest half of the successful levels.
pub fn fit_power_law(points: &[(usize, f64)]) -> Option<PowerFit> {
    let ok: Vec<(usize, f64)> = points
        .iter()
        .copied()
        .filter(|(_, e)| e.is_finite() && *e > 0.0)
        .collect();
    let take = ok.len().div_ceil(2).max(2);
    if ok.len() < 2 {
        return None;
    }
    let used = &ok[ok.len() - take.min(ok.len())..];
    let xs: Vec<f64> = used.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let ys: Vec<f64> = used.iter().map(|(_, e)| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Some(PowerFit {
        slope,
        intercept: my - slope * mx,
        levels_used: used.iter().map(|(n, _)| *n).collect(),
    })
}

/// Best-of-restarts codebooks and their distortion at every level.
///
/// Levels run concurrently; a failing level is recorded and the others continue.
pub fn rate_experiment(
    sim: &Similarity,
    dist: &DistributionSpec,
    cfg: &RateConfig,
    theoretical_constant: Option<f64>,
) -> Result<RateExperiment> {
    let d = sim.dim();
    if dist.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            got: dist.dim(),
        });
    }
    if cfg.levels.is_empty() {
        return Err(Error::Empty(
            "rate experiment needs at least one level".into(),
        ));
    }
    if cfg.levels.windows(2).any(|w| w[0] >= w[1]) || cfg.levels[0] == 0 {
        return Err(Error::InvalidParameter(format!(
            "levels must be positive and strictly increasing, got {:?}",
            cfg.levels
        )));
    }
    let training_points = match cfg.training {
        Training::Density => None,
        Training::Samples { n } => Some(dist.sample(n, derive_seed(cfg.seed, &[0]))),
    };
    let input = match &training_points {
        Some(p) => LloydInput::Samples(p),
        None => LloydInput::Density(dist),
    };
    let eval_points = match cfg.evaluation {
        Evaluation::MonteCarlo { n } => Some(dist.sample(n, derive_seed(cfg.seed, &[2]))),
        Evaluation::Exact1d { .. } => None,
    };
    let inv_d = 1.0 / d as f64;
    let results: Vec<LevelResult> = cfg
        .levels
        .par_iter()
        .enumerate()
        .map(|(idx, &n)| {
            let mut tc = cfg.train.clone();
            tc.lloyd.r = cfg.r;
            tc.restarts = cfg.restarts;
            tc.seed = derive_seed(cfg.seed, &[1, idx as u64]);
            let run = train(input, n, sim, &tc).and_then(|t| {
                let cb = t.best.codebook;
                let est = match (&eval_points, cfg.evaluation) {
                    (Some(p), _) => distortion_on_samples(&cb, p, cfg.r, sim)?,
                    (None, Evaluation::Exact1d { tol }) => {
                        distortion(&cb, dist, cfg.r, sim, DistortionMode::Exact1d { tol })?
                    }
                    (None, Evaluation::MonteCarlo { .. }) => {
                        unreachable!("evaluation draws exist in Monte Carlo mode")
                    }
                };
                Ok((cb, est, t.restarts_used))
            });
            match run {
                Ok((cb, est, used)) => {
                    let e = est.e_r();
                    LevelResult {
                        n,
                        e_rn: e,
                        std_err: est.e_r_std_error().unwrap_or(0.0),
                        q_n: (n as f64).powf(inv_d) * e,
                        restarts_used: used,
                        estimate: Some(est),
                        error: None,
                        codebook: Some(cb),
                    }
                }
                Err(err) => LevelResult {
                    n,
                    estimate: None,
                    e_rn: f64::NAN,
                    std_err: f64::NAN,
                    q_n: f64::NAN,
                    restarts_used: 0,
                    error: Some(err.to_string()),
                    codebook: None,
                },
            }
        })
        .collect();
    let fit = fit_power_law(&results.iter().map(|l| (l.n, l.e_rn)).collect::<Vec<_>>());
    Ok(RateExperiment {
        r: cfg.r,
        d,
        divergence: sim.name().to_string(),
        distribution: dist.label(),
        levels: cfg.levels.clone(),
        restarts: cfg.restarts,
        seed: cfg.seed,
        results,
        theoretical_constant,
        fit,
    })
}

/// Symmetric square root by eigendecomposition.
pub fn spd_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    validate_spd(s)?;
    let eig = s.clone().symmetric_eigen();
    let root = eig.eigenvalues.map(f64::sqrt);
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransformReport {
    pub samples: usize,
    /// Largest per-sample relative difference of the two minima.
    pub max_rel_residual: f64,
    /// Samples whose nearest codeword differs between the two problems.
    pub argmin_mismatches: usize,
    pub e_r_direct: f64,
    pub e_r_transformed: f64,
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn quad_form(s: &DMatrix<f64>, v: &[f64]) -> f64 {
    let d = v.len();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            acc += v[i] * s[(i, j)] * v[j];
        }
    }
    acc
}

fn argmin_by(n: usize, mut f: impl FnMut(usize) -> f64) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for j in 0..n {
        let v = f(j);
        if v < best.1 {
            best = (j, v);
        }
    }
    best
}

fn check_shapes(s: &DMatrix<f64>, cb: &Codebook, samples: &Points) -> Result<usize> {
    let d = s.nrows();
    if cb.dim() != d || samples.dim() != d {
        return Err(Error::Dimension {
            expected: d,
            got: cb.dim().max(samples.dim()),
        });
    }
    if cb.is_empty() || samples.is_empty() {
        return Err(Error::Empty(
            "codebook and samples must be non-empty".into(),
        ));
    }
    Ok(d)
}

/// Compares `min_a (xi - a)^T S (xi - a)` with `min_a |sqrt(S) xi - sqrt(S) a|^2`
/// sample by sample.
pub fn mahalanobis_transform_check(
    s: &DMatrix<f64>,
    cb: &Codebook,
    samples: &Points,
    r: f64,
) -> Result<TransformReport> {
    let d = check_shapes(s, cb, samples)?;
    let root = spd_sqrt(s)?;
    let map = |x: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|i| (0..d).map(|j| root[(i, j)] * x[j]).sum())
            .collect()
    };
    let mapped_cb: Vec<Vec<f64>> = cb.points.iter().map(map).collect();
    let rows: Vec<(f64, f64, bool)> = (0..samples.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; d],
            |diff, i| {
                let xi = samples.row(i);
                let (ja, va) = argmin_by(cb.len(), |j| {
                    let a = cb.points.row(j);
                    for k in 0..d {
                        diff[k] = xi[k] - a[k];
                    }
                    quad_form(s, diff)
                });
                let y = map(xi);
                let (jb, vb) = argmin_by(cb.len(), |j| {
                    y.iter()
                        .zip(&mapped_cb[j])
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum()
                });
                (va, vb, ja != jb)
            },
        )
        .collect();
    let n = rows.len() as f64;
    let mean_pow = |f: &dyn Fn(&(f64, f64, bool)) -> f64| {
        (rows.iter().map(|t| f(t).powf(r / 2.0)).sum::<f64>() / n).powf(1.0 / r)
    };
    Ok(TransformReport {
        samples: rows.len(),
        max_rel_residual: rows.iter().map(|(a, b, _)| rel(*a, *b)).fold(0.0, f64::max),
        argmin_mismatches: rows.iter().filter(|t| t.2).count(),
        e_r_direct: mean_pow(&|t| t.0),
        e_r_transformed: mean_pow(&|t| t.1),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DilationReport {
    pub samples: usize,
    /// Largest per-sample relative difference between the dilated minimum and
    /// `(B - A)^2` times the unit-cube minimum.
    pub max_rel_residual: f64,
    pub e_r_unit: f64,
    pub e_r_dilated: f64,
}

/// Maps samples `u` of `[0,1]^d` and the codebook by `x -> A + (B - A) x` and
/// compares the per-sample minima of `(xi - a)^T S (xi - a)`.
pub fn dilation_check(
    s: &DMatrix<f64>,
    a: f64,
    b: f64,
    cb: &Codebook,
    samples: &Points,
    r: f64,
) -> Result<DilationReport> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "dilation needs finite A < B, got A = {a}, B = {b}"
        )));
    }
    let d = check_shapes(s, cb, samples)?;
    validate_spd(s)?;
    let w = b - a;
    let dilate = |x: &[f64]| -> Vec<f64> { x.iter().map(|v| a + w * v).collect() };
    let big_cb: Vec<Vec<f64>> = cb.points.iter().map(dilate).collect();
    let rows: Vec<(f64, f64)> = (0..samples.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; d],
            |diff, i| {
                let u = samples.row(i);
                let (_, v0) = argmin_by(cb.len(), |j| {
                    let c = cb.points.row(j);
                    for k in 0..d {
                        diff[k] = u[k] - c[k];
                    }
                    quad_form(s, diff)
                });
                let xi = dilate(u);
                let (_, v1) = argmin_by(cb.len(), |j| {
                    for k in 0..d {
                        diff[k] = xi[k] - big_cb[j][k];
                    }
                    quad_form(s, diff)
                });
                (v0, v1)
            },
        )
        .collect();
    let n = rows.len() as f64;
    let e = |f: &dyn Fn(&(f64, f64)) -> f64| {
        (rows.iter().map(|t| f(t).powf(r / 2.0)).sum::<f64>() / n).powf(1.0 / r)
    };
    Ok(DilationReport {
        samples: rows.len(),
        max_rel_residual: rows
            .iter()
            .map(|(v0, v1)| rel(w * w * v0, *v1))
            .fold(0.0, f64::max),
        e_r_unit: e(&|t| t.0),
        e_r_dilated: e(&|t| t.1),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PierceConfig {
    pub r: f64,
    pub delta: f64,
    pub levels: Vec<usize>,
    pub moment: MomentMode,
    /// Training and evaluation settings; `r` and `levels` are taken from above.
    pub rate: RateConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PierceLevel {
    pub n: usize,
    pub e_rn: f64,
    /// `n^(1/d) e_{r,n} / sigma`.
    pub b_n: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PierceReport {
    /// `sigma_{r(1+delta)}`, centered at the mean.
    pub sigma: f64,
    pub sigma_std_error: f64,
    pub levels: Vec<PierceLevel>,
    pub max_b: f64,
    pub median_b: f64,
    /// `max_b <= 2 median_b`.
    pub bounded: bool,
    pub failures: Vec<String>,
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// The normalized sequence `b_n = n^(1/d) e_{r,n} / sigma_{r(1+delta)}` and
/// whether it stays within twice its median.
pub fn pierce_check(
    dist: &DistributionSpec,
    sim: &Similarity,
    cfg: &PierceConfig,
) -> Result<PierceReport> {
    if !(cfg.delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must be positive, got {}",
            cfg.delta
        )));
    }
    let sigma = moment_sigma(dist, cfg.r * (1.0 + cfg.delta), cfg.moment, true)?;
    let d = dist.dim() as f64;
    let (pairs, failures): (Vec<(usize, f64)>, Vec<String>) =
        if let DistributionSpec::PointMass { .. } = dist {
            // one codeword on the atom is exact at every level
            (cfg.levels.iter().map(|&n| (n, 0.0)).collect(), vec![])
        } else {
            let rc = RateConfig {
                r: cfg.r,
                levels: cfg.levels.clone(),
                ..cfg.rate.clone()
            };
            let exp = rate_experiment(sim, dist, &rc, None)?;
            let failures = exp
                .results
                .iter()
                .filter_map(|l| l.error.as_ref().map(|e| format!("n = {}: {e}", l.n)))
                .collect();
            (
                exp.results
                    .iter()
                    .filter(|l| l.estimate.is_some())
                    .map(|l| (l.n, l.e_rn))
                    .collect(),
                failures,
            )
        };
    let levels: Vec<PierceLevel> = pairs
        .iter()
        .map(|&(n, e)| {
            let b_n = if e == 0.0 {
                0.0
            } else {
                (n as f64).powf(1.0 / d) * e / sigma.value
            };
            PierceLevel { n, e_rn: e, b_n }
        })
        .collect();
    let bs: Vec<f64> = levels.iter().map(|l| l.b_n).collect();
    let max_b = bs.iter().copied().fold(0.0, f64::max);
    let median_b = median(&bs);
    Ok(PierceReport {
        sigma: sigma.value,
        sigma_std_error: sigma.std_error,
        bounded: !levels.is_empty() && max_b <= 2.0 * median_b,
        levels,
        max_b,
        median_b,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::MatrixFieldSpec;
    use crate::measures::adaptive_simpson;
    use crate::numeric::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn is_on_12() -> (Similarity, DistributionSpec) {
        let spec = DivergenceSpec::itakura_saito();
        (
            spec.into(),
            DistributionSpec::uniform(BoxRegion::new(vec![1.0], vec![2.0]).unwrap()).unwrap(),
        )
    }

    #[test]
    fn closed_form_cube_constants() {
        let q = q_r_cube(1, 2.0).unwrap();
        assert_eq!(q.provenance, Provenance::Exact1d);
        assert!((q.value - 1.0 / 12.0).abs() < 1e-16);
        for r in [1.0, 3.0, 4.5] {
            // oracle: (n e_{r,n})^r from the exact midpoint error
            let e1 = 1.0 / (2.0 * (r + 1.0f64).powf(1.0 / r));
            assert!((q_r_cube(1, r).unwrap().value - e1.powf(r)).abs() < 1e-15);
        }
        let q2 = q_r_cube(2, 2.0).unwrap();
        assert_eq!(q2.provenance, Provenance::Hexagonal2d);
        assert!((q2.value - 0.160_375_074_774_896_07).abs() < 1e-15);
        let q3 = q_r_cube(3, 2.0).unwrap();
        assert_eq!(q3.provenance, Provenance::Conjecture3d);
        assert!((q3.value - 19.0 / (64.0 * 2f64.powf(1.0 / 3.0))).abs() < 1e-15);
        assert!(q_r_cube(0, 2.0).is_err() && q_r_cube(2, 0.0).is_err());
    }

    #[test]
    fn empirical_constant_tracks_the_hexagonal_value() {
        // run the estimator where the answer is known
        let cfg = EmpiricalQ {
            levels: [16, 32],
            training: 40_000,
            evaluation: 100_000,
            restarts: 2,
            seed: 1,
        };
        let est = empirical_q(2, 2.0, &cfg).unwrap();
        assert_eq!(est.provenance, Provenance::Empirical);
        let exact = 5.0 / (18.0 * 3f64.sqrt());
        assert!((est.value - exact).abs() < 0.05 * exact, "{est:?}");
        assert!(est.uncertainty > 0.0);
    }

    #[test]
    fn euclidean_factors_cancel() {
        for d in [1, 2] {
            let sim: Similarity = DivergenceSpec::sq_euclid(d).into();
            let u = DistributionSpec::uniform(BoxRegion::unit(d)).unwrap();
            let z = zador_constant(&sim, &u, 2.0, 1e-10).unwrap();
            let q = q_r_cube(d, 2.0).unwrap();
            assert!(
                (z.value - q.value).abs() < 1e-12,
                "{} vs {}",
                z.value,
                q.value
            );
            assert!(z.warnings.is_empty());
        }
    }

    #[test]
    fn itakura_saito_constant() {
        let grow = adaptive_simpson(|x| x.powf(-2.0 / 3.0), 1.0, 2.0, 1e-13, 40)
            .unwrap()
            .value;
        let closed = 3.0 * (2f64.cbrt() - 1.0);
        assert!((grow - closed).abs() < 1e-10);
        let (sim, u) = is_on_12();
        let z = zador_constant(&sim, &u, 2.0, 1e-10).unwrap();
        let expected = closed.powi(3) / 24.0;
        assert!(
            (z.value - expected).abs() < 1e-9 * expected,
            "{} vs {expected}",
            z.value
        );
    }

    #[test]
    fn identity_field_drops_the_power_of_two() {
        let f = MatrixFieldSpec::constant(DMatrix::identity(2, 2)).unwrap();
        let region = BoxRegion::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        let u = DistributionSpec::uniform(region).unwrap();
        let z = zador_constant(&f.into(), &u, 2.0, 1e-10).unwrap();
        // ||h||_{1/2} for h = 1/2 on an area-2 box is (2 * sqrt(1/2))^2 = 2
        assert!((z.value - q_r_cube(2, 2.0).unwrap().value * 2.0).abs() < 1e-12);
    }

    #[test]
    fn support_touching_the_domain_boundary_warns() {
        let sim: Similarity = DivergenceSpec::itakura_saito().into();
        let u = DistributionSpec::uniform(BoxRegion::unit(1)).unwrap();
        let z = zador_constant(&sim, &u, 2.0, 1e-6);
        match z {
            Ok(c) => assert!(!c.warnings.is_empty()),
            Err(e) => assert!(
                matches!(e, Error::ToleranceNotMet { .. } | Error::NonFinite(_)),
                "{e}"
            ),
        }
    }

    #[test]
    fn uniform_rate_matches_midpoint_formula() {
        let sim: Similarity = DivergenceSpec::sq_euclid(1).into();
        let u = DistributionSpec::uniform(BoxRegion::unit(1)).unwrap();
        let cfg = RateConfig {
            levels: vec![2, 4, 8, 16, 32, 64],
            restarts: 2,
            ..RateConfig::default()
        };
        let exp = rate_experiment(&sim, &u, &cfg, Some(1.0 / 12.0)).unwrap();
        let fit = exp.fit.clone().unwrap();
        assert!((fit.slope + 1.0).abs() < 0.02, "{fit:?}");
        let s = exp.summary();
        assert!((s.q_at_max - 1.0 / (2.0 * 3f64.sqrt())).abs() < 0.005 / (2.0 * 3f64.sqrt()));
        assert!((s.ratio_at_max.unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(s.lower_bound_ok, Some(true));
        let csv = exp.to_csv();
        assert!(csv.starts_with("n,e_rn,std_err,q_n,restarts_used\n"));
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn field_of_four_doubles_the_error() {
        let u = DistributionSpec::uniform(BoxRegion::unit(1)).unwrap();
        let cfg = RateConfig {
            levels: vec![3, 5],
            restarts: 1,
            training: Training::Samples { n: 5_000 },
            evaluation: Evaluation::MonteCarlo { n: 5_000 },
            ..RateConfig::default()
        };
        let one = MatrixFieldSpec::constant(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let four = MatrixFieldSpec::constant(DMatrix::from_element(1, 1, 4.0)).unwrap();
        let a = rate_experiment(&one.into(), &u, &cfg, None).unwrap();
        let b = rate_experiment(&four.into(), &u, &cfg, None).unwrap();
        for (x, y) in a.results.iter().zip(&b.results) {
            assert!(
                (y.e_rn - 2.0 * x.e_rn).abs() < 1e-12 * x.e_rn,
                "{} {}",
                x.e_rn,
                y.e_rn
            );
        }
    }

    #[test]
    fn failing_levels_are_recorded() {
        // samples outside the Itakura-Saito domain make every restart fail
        let dist = DistributionSpec::empirical(Points::from_scalars(&[-1.0, 0.5, 0.9])).unwrap();
        let cfg = RateConfig {
            levels: vec![1, 2],
            restarts: 2,
            training: Training::Samples { n: 50 },
            evaluation: Evaluation::MonteCarlo { n: 10 },
            ..RateConfig::default()
        };
        let exp =
            rate_experiment(&DivergenceSpec::itakura_saito().into(), &dist, &cfg, None).unwrap();
        assert!(
            exp.results
                .iter()
                .all(|l| l.error.is_some() && l.e_rn.is_nan()),
            "{:?}",
            exp.results
        );
        assert!(exp.fit.is_none());
        assert!(exp.to_csv().contains("1,NaN,NaN,NaN,0"));
    }

    #[test]
    fn power_fit_recovers_exact_lines() {
        let pts: Vec<(usize, f64)> = [4usize, 8, 16, 32]
            .iter()
            .map(|&n| (n, 3.0 * (n as f64).powf(-0.5)))
            .collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12 && (fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert_eq!(fit.levels_used, vec![16, 32]);
        assert!(fit_power_law(&pts[..1]).is_none());
    }

    fn random_spd<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        &m * m.transpose() + DMatrix::identity(d, d) * 0.1
    }

    fn uniform_points<R: Rng>(rng: &mut R, n: usize, d: usize) -> Points {
        Points::from_flat(d, (0..n * d).map(|_| rng.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn mahalanobis_identity_holds_per_sample() {
        let mut rng = rng_from_seed(5);
        let samples = uniform_points(&mut rng, 20_000, 2);
        let cb = Codebook::new(uniform_points(&mut rng, 7, 2), "random", 2.0);
        let id = mahalanobis_transform_check(&DMatrix::identity(2, 2), &cb, &samples, 2.0).unwrap();
        assert_eq!(id.max_rel_residual, 0.0);
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let rep = mahalanobis_transform_check(&s, &cb, &samples, 2.0).unwrap();
        assert!(
            rep.max_rel_residual <= 1e-10 && rep.argmin_mismatches == 0,
            "{rep:?}"
        );
        assert!((rep.e_r_direct - rep.e_r_transformed).abs() < 1e-12);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            mahalanobis_transform_check(&bad, &cb, &samples, 2.0),
            Err(Error::NotSpd(_))
        ));
    }

    #[test]
    fn square_root_squares_back() {
        let mut rng = rng_from_seed(8);
        let s = random_spd(&mut rng, 3);
        let r = spd_sqrt(&s).unwrap();
        assert!((&r * &r - &s).abs().max() < 1e-12);
    }

    #[test]
    fn dilation_identity() {
        let mut rng = rng_from_seed(6);
        let samples = uniform_points(&mut rng, 10_000, 2);
        let cb = Codebook::new(uniform_points(&mut rng, 5, 2), "random", 2.0);
        let id = DMatrix::identity(2, 2);
        let same = dilation_check(&id, 0.0, 1.0, &cb, &samples, 2.0).unwrap();
        assert_eq!(same.max_rel_residual, 0.0);
        let twice = dilation_check(&id, 0.0, 2.0, &cb, &samples, 2.0).unwrap();
        assert!(twice.max_rel_residual < 1e-15);
        assert!((twice.e_r_dilated - 2.0 * twice.e_r_unit).abs() < 1e-12);
        assert!(dilation_check(&id, 1.0, 1.0, &cb, &samples, 2.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn dilation_holds_for_random_configurations(seed in 0u64..1000, a in -3.0f64..3.0, w in 0.1f64..5.0) {
            let mut rng = rng_from_seed(seed);
            let s = random_spd(&mut rng, 3);
            let samples = uniform_points(&mut rng, 2_000, 3);
            let cb = Codebook::new(uniform_points(&mut rng, 6, 3), "random", 2.0);
            let rep = dilation_check(&s, a, a + w, &cb, &samples, 2.0).unwrap();
            prop_assert!(rep.max_rel_residual <= 1e-12, "{:?}", rep);
        }
    }

    #[test]
    fn pierce_on_uniform_interval() {
        let u = DistributionSpec::uniform(BoxRegion::unit(1)).unwrap();
        let cfg = PierceConfig {
            r: 2.0,
            delta: 1.0,
            levels: vec![4, 8, 16, 32, 64, 128, 256],
            moment: MomentMode::Quadrature { tol: 1e-10 },
            rate: RateConfig {
                restarts: 1,
                ..RateConfig::default()
            },
        };
        let rep = pierce_check(&u, &DivergenceSpec::sq_euclid(1).into(), &cfg).unwrap();
        // sigma_4 about the mean is (1/80)^(1/4)
        assert!((rep.sigma - (1.0f64 / 80.0).powf(0.25)).abs() < 1e-9);
        assert!(rep.bounded);
        assert!(
            rep.levels.iter().all(|l| (0.2..=1.0).contains(&l.b_n)),
            "{rep:?}"
        );
    }

    #[test]
    fn pierce_on_point_mass() {
        let p = DistributionSpec::point_mass(vec![0.3, 0.4]);
        let cfg = PierceConfig {
            r: 2.0,
            delta: 1.0,
            levels: vec![1, 2, 4],
            moment: MomentMode::MonteCarlo { n: 100, seed: 0 },
            rate: RateConfig::default(),
        };
        let rep = pierce_check(&p, &DivergenceSpec::sq_euclid(2).into(), &cfg).unwrap();
        assert!(rep.bounded && rep.levels.iter().all(|l| l.e_rn == 0.0 && l.b_n == 0.0));
    }
}
