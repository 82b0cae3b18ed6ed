use rayon::prelude::*;

use super::codebook::Codebook;
use super::distortion::{cells_1d, check_samples, mc_estimate};
use super::similarity::{apply, Prepared, Similarity, TIE_TOL};
use crate::divergence::DivergenceSpec;
use crate::error::{Error, Result};
use crate::measures::{DistributionSpec, GaussLegendre};
use crate::numeric::{dist_sq, pairwise_sum, par_sum_vec};
use crate::points::Points;

#[derive(Clone, Debug, PartialEq)]
pub struct LloydConfig {
    /// Order `r >= 2`.
    pub r: f64,
    /// Stop once the relative distortion decrease falls below `tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Tolerance of the weighted-centroid fixed point used for `r > 2`.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    /// Codewords closer than this to a finite face of the domain are pulled back to it.
    pub guard_margin: f64,
    /// Gauss-Legendre nodes per half cell in density mode.
    pub quad_nodes: usize,
}

impl Default for LloydConfig {
    fn default() -> Self {
        Self {
            r: 2.0,
            tol: 1e-9,
            max_iter: 500,
            inner_tol: 1e-10,
            inner_max_iter: 100,
            guard_margin: 1e-9,
            quad_nodes: 16,
        }
    }
}

/// What the codebook is fitted to.
#[derive(Clone, Copy, Debug)]
pub enum LloydInput<'a> {
    Samples(&'a Points),
    /// One-dimensional density, integrated cell by cell (Bregman divergences only).
    Density(&'a DistributionSpec),
}

#[derive(Clone, Debug)]
pub struct LloydResult {
    pub codebook: Codebook,
    /// Distortion `e_r^r` after every assignment step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest move `|x_i - update(x_i)|` proposed at the returned codebook.
    pub residual: f64,
    pub empty_repairs: usize,
    /// Centroid proposals rejected because they raised their cell cost.
    pub guard_rejections: usize,
}

/// Generalized Lloyd iteration from `init`.
pub fn lloyd(
    input: LloydInput<'_>,
    init: &Points,
    sim: &Similarity,
    cfg: &LloydConfig,
) -> Result<LloydResult> {
    if !(cfg.r >= 2.0) || !cfg.r.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Lloyd updates need r >= 2, got {}",
            cfg.r
        )));
    }
    if init.is_empty() {
        return Err(Error::InvalidParameter("Lloyd needs n >= 1".into()));
    }
    if init.dim() != sim.dim() {
        return Err(Error::Dimension {
            expected: sim.dim(),
            got: init.dim(),
        });
    }
    match input {
        LloydInput::Samples(pts) => lloyd_samples(pts, init, sim, cfg),
        LloydInput::Density(dist) => {
            let spec = sim.bregman().ok_or_else(|| {
                Error::UnsupportedMode(format!(
                    "density mode needs a Bregman divergence, got {}",
                    sim.name()
                ))
            })?;
            if sim.dim() != 1 || !dist.has_density() || dist.dim() != 1 {
                return Err(Error::UnsupportedMode(format!(
                    "density mode needs d = 1 and a density, got {}",
                    dist.label()
                )));
            }
            lloyd_density(dist, init, spec, sim, cfg)
        }
    }
}

fn check_monotone(trace: &[f64]) -> Result<()> {
    if let [.., prev, cur] = trace {
        if *cur > *prev + 1e-12 * prev.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Convergence(format!(
                "distortion increased from {prev} to {cur}"
            )));
        }
    }
    Ok(())
}

fn stop(trace: &[f64], tol: f64) -> bool {
    match trace {
        [.., prev, cur] => *cur == 0.0 || (prev - cur) <= tol * prev,
        [cur] => *cur == 0.0,
        [] => false,
    }
}

/// Codebook data the pruning bounds of the next assignment step are measured against.
enum Snapshot {
    Affine { kappa: Vec<f64>, grads: Vec<f64> },
    Metric { mapped: Vec<f64> },
}

fn snapshot(p: &Prepared<'_>) -> Option<Snapshot> {
    match p {
        Prepared::Affine { kappa, grads, .. } => Some(Snapshot::Affine {
            kappa: kappa.clone(),
            grads: grads.clone(),
        }),
        Prepared::Metric { mapped, .. } => Some(Snapshot::Metric {
            mapped: mapped.clone(),
        }),
        Prepared::Direct { .. } => None,
    }
}

/// How far codewords moved since the snapshot.
enum Drift {
    None,
    /// Every affine score moves by at most `mk + mg |xi - o|`.
    Affine {
        mk: f64,
        mg: f64,
    },
    /// Mapped codeword displacements: the largest, its index and the runner-up.
    Metric {
        top: f64,
        top_idx: usize,
        second: f64,
    },
}

fn drift(p: &Prepared<'_>, prev: &Option<Snapshot>, d: usize) -> Drift {
    match (p, prev) {
        (
            Prepared::Affine { kappa, grads, .. },
            Some(Snapshot::Affine {
                kappa: k0,
                grads: g0,
            }),
        ) => {
            let n = kappa.len();
            let mk = kappa
                .iter()
                .zip(k0)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let mg = (0..n)
                .map(|j| dist_sq(&grads[j * d..(j + 1) * d], &g0[j * d..(j + 1) * d]).sqrt())
                .fold(0.0, f64::max);
            Drift::Affine { mk, mg }
        }
        (Prepared::Metric { mapped, .. }, Some(Snapshot::Metric { mapped: m0 })) => {
            let (mut top, mut top_idx, mut second) = (0.0, 0, 0.0);
            for j in 0..mapped.len() / d {
                let v = dist_sq(&mapped[j * d..(j + 1) * d], &m0[j * d..(j + 1) * d]).sqrt();
                if v > top {
                    second = top;
                    top = v;
                    top_idx = j;
                } else if v > second {
                    second = v;
                }
            }
            Drift::Metric {
                top,
                top_idx,
                second,
            }
        }
        _ => Drift::None,
    }
}

/// Per-sample assignment state, valid for the codebook kept in the snapshot.
/// Affine searches keep in `gaps` a lower bound on the score gap between the
/// runner-up and the assigned codeword and in `scores` the assigned score;
/// metric searches keep in `gaps` a lower bound on the runner-up distance.
struct SampleState {
    labels: Vec<usize>,
    gaps: Vec<f64>,
    scores: Vec<f64>,
    losses: Vec<f64>,
}

fn lloyd_samples(
    pts: &Points,
    init: &Points,
    sim: &Similarity,
    cfg: &LloydConfig,
) -> Result<LloydResult> {
    if pts.is_empty() {
        return Err(Error::Empty("Lloyd needs a non-empty working set".into()));
    }
    check_samples(pts, sim)?;
    let (n_pts, d, n) = (pts.len(), pts.dim(), init.len());
    let half_r = 0.5 * cfg.r;
    let origin = pts.mean().expect("non-empty");
    let radius: Vec<f64> = pts.iter().map(|p| dist_sq(p, &origin).sqrt()).collect();
    let mut cw = init.clone();
    for j in 0..n {
        sim.domain().project(cw.row_mut(j), cfg.guard_margin);
    }
    let mut state = SampleState {
        labels: vec![0; n_pts],
        gaps: vec![f64::NEG_INFINITY; n_pts],
        scores: vec![0.0; n_pts],
        losses: vec![0.0; n_pts],
    };
    let mut previous: Option<Snapshot> = None;
    let mut trace = Vec::new();
    let (mut empty_repairs, mut guard_rejections) = (0, 0);
    let converged;
    let mut iterations = 0;
    let residual;
    loop {
        let prepared = sim.prepare(&cw, &origin);
        let drift = drift(&prepared, &previous, d);
        let metric = matches!(prepared, Prepared::Metric { .. });
        let bounded = !matches!(prepared, Prepared::Direct { .. });
        let changed: usize = state
            .labels
            .par_iter_mut()
            .zip(state.gaps.par_iter_mut())
            .zip(state.scores.par_iter_mut())
            .zip(state.losses.par_iter_mut())
            .enumerate()
            .map_init(
                || vec![0.0; d],
                |buf, (i, (((label, gap), score), loss))| {
                    let xi = pts.row(i);
                    let b = *label;
                    if gap.is_finite() {
                        let keep = match (&drift, &prepared) {
                            (Drift::Affine { mk, mg }, _) => {
                                for k in 0..d {
                                    buf[k] = xi[k] - origin[k];
                                }
                                let s = prepared.score(b, &buf[..d]);
                                // exact change for the assigned codeword, worst case for the rest
                                let bound = *gap + (*score - s) - (mk + mg * radius[i]);
                                (bound > 4.0 * TIE_TOL * (1.0 + s.abs())).then(|| {
                                    *score = s;
                                    bound
                                })
                            }
                            (
                                Drift::Metric {
                                    top,
                                    top_idx,
                                    second,
                                },
                                Prepared::Metric { factor, mapped, .. },
                            ) => {
                                apply(factor, xi, &mut buf[..d]);
                                let u = dist_sq(&buf[..d], &mapped[b * d..(b + 1) * d]).sqrt();
                                let lower = *gap - if b == *top_idx { *second } else { *top };
                                (lower > u && lower * lower - u * u > 4.0 * TIE_TOL * (1.0 + u * u))
                                    .then_some(lower)
                            }
                            _ => None,
                        };
                        if let Some(bound) = keep {
                            *gap = bound;
                            *loss = sim.eval(xi, cw.row(b));
                            return 0;
                        }
                    }
                    let nn = prepared.nearest(xi, buf);
                    let moved = usize::from(nn.index != b);
                    *label = nn.index;
                    *gap = match (bounded, metric) {
                        (false, _) => f64::NEG_INFINITY,
                        (true, false) => nn.gap,
                        (true, true) => nn.score + nn.gap,
                    };
                    *score = nn.score;
                    *loss = nn.value;
                    moved
                },
            )
            .sum();
        let est = mc_estimate(&state.losses, cfg.r)?;
        trace.push(est.value);
        check_monotone(&trace)?;
        iterations += 1;
        let labels_stable = trace.len() > 1 && changed == 0;

        // proposal: cell centroids on the current partition
        let stats = par_sum_vec(n_pts, n * (d + 1), |i, acc| {
            let l = state.labels[i];
            acc[l * (d + 1)] += 1.0;
            for (k, v) in pts.row(i).iter().enumerate() {
                acc[l * (d + 1) + 1 + k] += v;
            }
        });
        let counts: Vec<f64> = (0..n).map(|j| stats[j * (d + 1)]).collect();
        let mut proposal = cw.clone();
        for j in 0..n {
            if counts[j] > 0.0 {
                let row = proposal.row_mut(j);
                for k in 0..d {
                    row[k] = stats[j * (d + 1) + 1 + k] / counts[j];
                }
            }
        }
        if cfg.r > 2.0 {
            weighted_centroids(pts, &state.labels, &counts, &mut proposal, sim, cfg)?;
        }
        let mut moved_by_guard = vec![false; n];
        for j in 0..n {
            moved_by_guard[j] = sim.domain().project(proposal.row_mut(j), cfg.guard_margin);
        }
        let res = (0..n)
            .filter(|&j| counts[j] > 0.0)
            .map(|j| dist_sq(cw.row(j), proposal.row(j)).sqrt())
            .fold(0.0, f64::max);

        if labels_stable || stop(&trace, cfg.tol) || iterations >= cfg.max_iter {
            converged = labels_stable || stop(&trace, cfg.tol);
            residual = res;
            break;
        }

        // a mean is the exact minimizer of a Bregman cell cost; every other
        // proposal is accepted only if it does not raise the cell cost
        let exact = sim.bregman().is_some() && cfg.r == 2.0;
        if !exact || moved_by_guard.iter().any(|m| *m) {
            let costs = par_sum_vec(n_pts, n, |i, acc| {
                let l = state.labels[i];
                acc[l] += sim.eval(pts.row(i), proposal.row(l)).max(0.0).powf(half_r)
                    - state.losses[i].max(0.0).powf(half_r);
            });
            for j in 0..n {
                if counts[j] > 0.0
                    && (costs[j] > 0.0 || !costs[j].is_finite())
                    && (!exact || moved_by_guard[j])
                {
                    let old = cw.row(j).to_vec();
                    proposal.row_mut(j).copy_from_slice(&old);
                    guard_rejections += 1;
                }
            }
        }

        // empty cells take the worst-represented samples
        let empty: Vec<usize> = (0..n).filter(|&j| counts[j] == 0.0).collect();
        let mut reset_bounds = false;
        if !empty.is_empty() {
            let mut order: Vec<usize> = (0..n_pts).collect();
            order.sort_by(|&a, &b| state.losses[b].total_cmp(&state.losses[a]).then(a.cmp(&b)));
            let mut used: Vec<&[f64]> = Vec::new();
            let mut cursor = order.into_iter();
            for &j in &empty {
                let pick = cursor
                    .by_ref()
                    .find(|&i| state.losses[i] > 0.0 && !used.contains(&pts.row(i)));
                if let Some(i) = pick {
                    used.push(pts.row(i));
                    proposal.row_mut(j).copy_from_slice(pts.row(i));
                    empty_repairs += 1;
                    reset_bounds = true;
                }
            }
        }

        previous = snapshot(&prepared);
        if reset_bounds {
            previous = None;
            state.gaps.iter_mut().for_each(|g| *g = f64::NEG_INFINITY);
        }
        cw = proposal;
    }

    let mut codebook = Codebook::new(cw, sim.name(), cfg.r);
    codebook.distortion = trace.last().copied();
    codebook.iterations = Some(iterations);
    Ok(LloydResult {
        codebook,
        trace,
        iterations,
        converged,
        residual,
        empty_repairs,
        guard_rejections,
    })
}

/// Per cell: `sum w`, `sum w xi` (d entries) and `sum loss^(r/2)`, with
/// `w = loss(xi, a_l)^(r/2 - 1)`.
fn cell_stats(pts: &Points, labels: &[usize], cw: &Points, sim: &Similarity, r: f64) -> Vec<f64> {
    let (n, d) = (cw.len(), cw.dim());
    par_sum_vec(pts.len(), n * (d + 2), |i, acc| {
        let l = labels[i];
        let xi = pts.row(i);
        let loss = sim.eval(xi, cw.row(l)).max(0.0);
        let w = loss.powf(0.5 * r - 1.0);
        let base = l * (d + 2);
        acc[base] += w;
        for k in 0..d {
            acc[base + 1 + k] += w * xi[k];
        }
        acc[base + d + 1] += loss.powf(0.5 * r);
    })
}

/// Accepts a trial step when the cell cost does not grow beyond rounding
/// and the fixed-point residual shrinks.
fn accept_step(cost: f64, trial_cost: f64, res: f64, trial_res: f64) -> bool {
    trial_cost <= cost + 1e-12 * cost.abs() && trial_res < res
}

/// Solves `a = sum w xi / sum w` with `w = loss(xi, a)^(r/2 - 1)` per cell.
///
/// The map `T(a) = sum w xi / sum w` can overshoot (its slope is -2 at the
/// symmetric point of a uniform cell for r = 4), so each step
/// `a + beta (T(a) - a)` halves `beta` until [`accept_step`] holds.
fn weighted_centroids(
    pts: &Points,
    labels: &[usize],
    counts: &[f64],
    cw: &mut Points,
    sim: &Similarity,
    cfg: &LloydConfig,
) -> Result<()> {
    let (n, d) = (cw.len(), cw.dim());
    let scale = pts
        .bounding_box()
        .map(|b| b.widths().iter().fold(0.0f64, |a, w| a.max(*w)))
        .unwrap_or(1.0)
        .max(1e-300);
    let residual = |stats: &[f64], cw: &Points, j: usize| -> Result<(Vec<f64>, f64)> {
        let w = stats[j * (d + 2)];
        if !w.is_finite() {
            return Err(Error::NonFinite(format!("centroid weights of cell {j}")));
        }
        if w == 0.0 {
            // every sample sits on the codeword
            return Ok((vec![0.0; d], 0.0));
        }
        let delta: Vec<f64> = (0..d)
            .map(|k| stats[j * (d + 2) + 1 + k] / w - cw.row(j)[k])
            .collect();
        let size = delta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok((delta, size))
    };
    let mut done: Vec<bool> = counts.iter().map(|c| *c == 0.0).collect();
    let mut stats = cell_stats(pts, labels, cw, sim, cfg.r);
    for _ in 0..cfg.inner_max_iter {
        let mut steps = Vec::with_capacity(n);
        for j in 0..n {
            let (delta, size) = residual(&stats, cw, j)?;
            if size <= cfg.inner_tol * scale {
                done[j] = true;
            }
            steps.push((delta, size));
        }
        if done.iter().all(|x| *x) {
            return Ok(());
        }
        let current = cw.clone();
        let mut beta = vec![1.0; n];
        let mut pending: Vec<usize> = (0..n).filter(|&j| !done[j]).collect();
        for _ in 0..60 {
            if pending.is_empty() {
                break;
            }
            let mut trial_cw = cw.clone();
            for &j in &pending {
                let row = trial_cw.row_mut(j);
                for k in 0..d {
                    row[k] = current.row(j)[k] + beta[j] * steps[j].0[k];
                }
            }
            let trial = cell_stats(pts, labels, &trial_cw, sim, cfg.r);
            let mut still = Vec::new();
            for &j in &pending {
                let (_, trial_size) = residual(&trial, &trial_cw, j)?;
                let cost = stats[j * (d + 2) + d + 1];
                if accept_step(cost, trial[j * (d + 2) + d + 1], steps[j].1, trial_size) {
                    cw.row_mut(j).copy_from_slice(trial_cw.row(j));
                    stats[j * (d + 2)..(j + 1) * (d + 2)]
                        .copy_from_slice(&trial[j * (d + 2)..(j + 1) * (d + 2)]);
                } else {
                    beta[j] *= 0.5;
                    still.push(j);
                }
            }
            pending = still;
        }
        // no admissible step: the codeword is stationary to working precision
        for &j in &pending {
            done[j] = true;
        }
    }
    if done.iter().all(|x| *x) {
        Ok(())
    } else {
        Err(Error::Convergence(format!(
            "weighted centroid did not settle in {} iterations",
            cfg.inner_max_iter
        )))
    }
}

struct CellMoments {
    weight: f64,
    first: f64,
    cost: f64,
}

/// `int w h`, `int w xi h` and `int loss^(r/2) h` over `[left, right]`, with
/// `w = loss(xi, a)^(r/2 - 1)` and the rule split at `a`.
fn cell_moments(
    spec: &DivergenceSpec,
    dist: &DistributionSpec,
    rule: &GaussLegendre,
    a: f64,
    left: f64,
    right: f64,
    r: f64,
) -> CellMoments {
    let mut m = CellMoments {
        weight: 0.0,
        first: 0.0,
        cost: 0.0,
    };
    if !(left < right) {
        return m;
    }
    let split = a.clamp(left, right);
    for (s, t) in [(left, split), (split, right)] {
        if !(s < t) {
            continue;
        }
        for (x, wq) in rule.mapped(s, t) {
            let h = dist.density(&[x]).unwrap_or(0.0);
            if h == 0.0 {
                continue;
            }
            let loss = spec.phi(&[x], &[a]).max(0.0);
            let w = if r == 2.0 {
                1.0
            } else {
                loss.powf(0.5 * r - 1.0)
            };
            m.weight += wq * w * h;
            m.first += wq * w * x * h;
            m.cost += wq * loss.powf(0.5 * r) * h;
        }
    }
    m
}

fn intervals(bounds: &[f64], lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let left = if k == 0 {
                lo
            } else {
                bounds[k - 1].clamp(lo, hi)
            };
            let right = if k + 1 == n {
                hi
            } else {
                bounds[k].clamp(lo, hi)
            };
            (left, right)
        })
        .collect()
}

fn lloyd_density(
    dist: &DistributionSpec,
    init: &Points,
    spec: &DivergenceSpec,
    sim: &Similarity,
    cfg: &LloydConfig,
) -> Result<LloydResult> {
    let support = dist
        .support()
        .ok_or_else(|| Error::UnsupportedMode(dist.label()))?;
    let (lo, hi) = (support.lo[0], support.hi[0]);
    let rule = GaussLegendre::new(cfg.quad_nodes);
    let r = cfg.r;
    let mut cw: Vec<f64> = init.as_flat().to_vec();
    for a in cw.iter_mut() {
        let mut v = [*a];
        sim.domain().project(&mut v, cfg.guard_margin);
        *a = v[0];
    }
    cw.sort_by(f64::total_cmp);
    let n = cw.len();
    let mut trace = Vec::new();
    let (mut empty_repairs, mut guard_rejections, mut iterations) = (0, 0, 0);
    let converged;
    let residual;
    loop {
        let (_, bounds) = cells_1d(spec, &cw)?;
        let cells = intervals(&bounds, lo, hi, n);
        let moments: Vec<CellMoments> = cells
            .iter()
            .zip(&cw)
            .map(|(&(s, t), &a)| cell_moments(spec, dist, &rule, a, s, t, r))
            .collect();
        let costs: Vec<f64> = moments.iter().map(|m| m.cost).collect();
        let total = pairwise_sum(&costs);
        if !total.is_finite() {
            return Err(Error::NonFinite("density-mode distortion".into()));
        }
        trace.push(total);
        check_monotone(&trace)?;
        iterations += 1;

        let mut proposal = cw.clone();
        for k in 0..n {
            if moments[k].weight > 0.0 {
                proposal[k] = moments[k].first / moments[k].weight;
            }
        }
        if r > 2.0 {
            for k in 0..n {
                if moments[k].weight <= 0.0 {
                    continue;
                }
                let (s, t) = cells[k];
                let mut settled = false;
                let mut m = cell_moments(spec, dist, &rule, proposal[k], s, t, r);
                for _ in 0..cfg.inner_max_iter {
                    let a = proposal[k];
                    if !m.weight.is_finite() {
                        return Err(Error::NonFinite(format!("centroid weights of cell {k}")));
                    }
                    if m.weight == 0.0 {
                        settled = true;
                        break;
                    }
                    let delta = m.first / m.weight - a;
                    if delta.abs() <= cfg.inner_tol * (hi - lo) {
                        settled = true;
                        break;
                    }
                    let mut beta = 1.0;
                    let mut accepted = None;
                    for _ in 0..60 {
                        let trial = cell_moments(spec, dist, &rule, a + beta * delta, s, t, r);
                        let trial_res = if trial.weight > 0.0 {
                            (trial.first / trial.weight - (a + beta * delta)).abs()
                        } else {
                            0.0
                        };
                        if accept_step(m.cost, trial.cost, delta.abs(), trial_res) {
                            accepted = Some(trial);
                            break;
                        }
                        beta *= 0.5;
                    }
                    match accepted {
                        Some(trial) => {
                            proposal[k] = a + beta * delta;
                            m = trial;
                        }
                        None => {
                            settled = true;
                            break;
                        }
                    }
                }
                if !settled {
                    return Err(Error::Convergence(format!(
                        "weighted centroid of cell {k} did not settle"
                    )));
                }
            }
        }
        for v in proposal.iter_mut() {
            let mut x = [*v];
            sim.domain().project(&mut x, cfg.guard_margin);
            *v = x[0];
        }
        let res = (0..n)
            .filter(|&k| moments[k].weight > 0.0)
            .map(|k| (proposal[k] - cw[k]).abs())
            .fold(0.0, f64::max);
        if stop(&trace, cfg.tol) || res == 0.0 || iterations >= cfg.max_iter {
            converged = stop(&trace, cfg.tol) || res == 0.0;
            residual = res;
            break;
        }
        for k in 0..n {
            if moments[k].weight > 0.0 {
                let (s, t) = cells[k];
                if cell_moments(spec, dist, &rule, proposal[k], s, t, r).cost > costs[k] {
                    proposal[k] = cw[k];
                    guard_rejections += 1;
                }
            }
        }
        // empty cells move into the costliest cell, halfway to its far edge
        for k in 0..n {
            if moments[k].weight > 0.0 {
                continue;
            }
            let worst = (0..n)
                .max_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(b.cmp(&a)))
                .expect("n >= 1");
            if costs[worst] <= 0.0 {
                break;
            }
            let (s, t) = cells[worst];
            let a = proposal[worst];
            proposal[k] = if a - s > t - a {
                0.5 * (s + a)
            } else {
                0.5 * (a + t)
            };
            empty_repairs += 1;
        }
        proposal.sort_by(f64::total_cmp);
        cw = proposal;
    }
    let mut codebook = Codebook::new(Points::from_scalars(&cw), sim.name(), r);
    codebook.distortion = trace.last().copied();
    codebook.iterations = Some(iterations);
    Ok(LloydResult {
        codebook,
        trace,
        iterations,
        converged,
        residual,
        empty_repairs,
        guard_rejections,
    })
}
