//! Experiment runner behind the `bregquant` binary.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ErrorMode, ExperimentConfig, IdentityKind, Subcommand, TrainingMode};
use crate::divergence::{eval_field_similarity, validate_spd, BoundsReport, DivergenceSpec};
use crate::error::Error;
use crate::geometry::{
    auto_firewall, verify_firewall, FirewallNet, FirewallReport, FirewallSampling,
};
use crate::measures::{tessellate, DistributionSpec, MomentMode};
use crate::numeric::{derive_seed, fmt_g17, json_g17, rng_from_seed};
use crate::points::Points;
use crate::quantize::{Codebook, Similarity};
use crate::zador::{
    dilation_check, mahalanobis_transform_check, pierce_check, rate_experiment, zador_constant,
    ConstantEstimate, DilationReport, Evaluation, PierceConfig, PowerFit, RateConfig,
    RateExperiment, RateSummary, Training, TransformReport,
};

/// Environment variable read for the worker count when `--workers` is absent.
pub const WORKERS_ENV: &str = "BREGQUANT_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numeric(#[from] Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numeric(_) => 3,
            Self::Io { .. } => 1,
        }
    }
}

fn config_err(e: Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Files written by a run and warnings that did not stop it.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

struct Writer {
    dir: PathBuf,
    out: RunOutput,
}

impl Writer {
    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        self.out.files.push(path);
        Ok(())
    }
}

/// Runs `sub` with `cfg`, writing artifacts into `out`.
pub fn run(sub: Subcommand, cfg: &ExperimentConfig, out: &Path) -> Result<RunOutput, CliError> {
    if let Some(s) = cfg.subcommand {
        if s != sub {
            return Err(CliError::Config(format!(
                "config is for `{}`, not `{}`",
                s.name(),
                sub.name()
            )));
        }
    }
    fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let mut w = Writer {
        dir: out.to_path_buf(),
        out: RunOutput::default(),
    };
    match sub {
        Subcommand::DivergenceEval => divergence_eval(cfg, &mut w)?,
        Subcommand::Quantize => quantize(cfg, &mut w)?,
        Subcommand::ZadorVerify => zador_verify(cfg, &mut w)?,
        Subcommand::IdentityCheck => identity_check(cfg, &mut w)?,
        Subcommand::FirewallCheck => firewall_check(cfg, &mut w)?,
        Subcommand::PierceCheck => pierce(cfg, &mut w)?,
    }
    Ok(w.out)
}

fn csv_row(values: impl IntoIterator<Item = f64>) -> String {
    let mut line = values
        .into_iter()
        .map(fmt_g17)
        .collect::<Vec<_>>()
        .join(",");
    line.push('\n');
    line
}

#[derive(Serialize)]
struct DivergenceEvalJson {
    divergence: String,
    dim: usize,
    pairs: usize,
    bounds: Option<BoundsReport>,
}

fn divergence_eval(cfg: &ExperimentConfig, w: &mut Writer) -> Result<(), CliError> {
    let sim = cfg.similarity().map_err(config_err)?;
    let d = sim.dim();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = match (&cfg.xi, &cfg.x) {
        (Some(xi), Some(x)) => {
            if xi.len() != x.len() {
                return Err(CliError::Config(
                    "`xi` and `x` must have the same length".into(),
                ));
            }
            xi.iter().cloned().zip(x.iter().cloned()).collect()
        }
        (None, None) => {
            let dist = cfg.distribution_spec().map_err(config_err)?;
            let n = cfg.pairs.unwrap_or(1000);
            let a = dist.sample(n, derive_seed(cfg.seed, &[0]));
            let b = dist.sample(n, derive_seed(cfg.seed, &[1]));
            a.iter()
                .zip(b.iter())
                .map(|(p, q)| (p.to_vec(), q.to_vec()))
                .collect()
        }
        _ => {
            return Err(CliError::Config(
                "`xi` and `x` must be given together".into(),
            ))
        }
    };
    let mut csv = String::new();
    let head: Vec<String> = (0..d)
        .map(|k| format!("xi_{k}"))
        .chain((0..d).map(|k| format!("x_{k}")))
        .chain(["value".to_string()])
        .collect();
    csv.push_str(&head.join(","));
    csv.push('\n');
    for (xi, x) in &pairs {
        let v = match &sim {
            Similarity::Divergence(s) => s.eval_phi(xi, x)?,
            Similarity::Field(f) => eval_field_similarity(f, xi, x)?,
        };
        csv.push_str(&csv_row(xi.iter().chain(x.iter()).copied().chain([v])));
    }
    let bounds = match &sim {
        Similarity::Divergence(s) if s.lip_grad().is_some() || s.alpha().is_some() => {
            Some(s.verify_bounds(&pairs))
        }
        _ => None,
    };
    w.write("divergence.csv", &csv)?;
    w.write(
        "divergence.json",
        &json_g17(&DivergenceEvalJson {
            divergence: sim.name().to_string(),
            dim: d,
            pairs: pairs.len(),
            bounds,
        }),
    )
}

/// Rate experiment settings shared by `quantize`, `zador-verify` and `pierce-check`.
fn rate_config(
    cfg: &ExperimentConfig,
    sim: &Similarity,
    dist: &DistributionSpec,
) -> Result<RateConfig, CliError> {
    if cfg.levels.is_empty() {
        return Err(CliError::Config(
            "`levels` must list at least one codebook size".into(),
        ));
    }
    let one_dim_bregman = sim.dim() == 1 && sim.bregman().is_some() && dist.has_density();
    let training = match cfg.training {
        Some(TrainingMode::Density) => Training::Density,
        Some(TrainingMode::Samples) => Training::Samples {
            n: cfg.train_samples.unwrap_or(200_000),
        },
        None if one_dim_bregman => Training::Density,
        None => Training::Samples {
            n: cfg.train_samples.unwrap_or(200_000),
        },
    };
    let tol = cfg.tol.unwrap_or(1e-10);
    let evaluation = match cfg.mode {
        Some(ErrorMode::Exact1d) => Evaluation::Exact1d { tol },
        Some(ErrorMode::Mc) => Evaluation::MonteCarlo {
            n: cfg.samples.unwrap_or(1_000_000),
        },
        None if one_dim_bregman => Evaluation::Exact1d { tol },
        None => Evaluation::MonteCarlo {
            n: cfg.samples.unwrap_or(1_000_000),
        },
    };
    let mut rc = RateConfig {
        r: cfg.r,
        levels: cfg.levels.clone(),
        restarts: cfg.restarts,
        seed: cfg.seed,
        training,
        evaluation,
        ..RateConfig::default()
    };
    if let Some(m) = cfg.max_iter {
        rc.train.lloyd.max_iter = m;
    }
    Ok(rc)
}

fn loss_and_law(cfg: &ExperimentConfig) -> Result<(Similarity, DistributionSpec), CliError> {
    let sim = cfg.similarity().map_err(config_err)?;
    let dist = cfg.distribution_spec().map_err(config_err)?;
    if sim.dim() != dist.dim() {
        return Err(CliError::Config(format!(
            "divergence has dimension {} but the distribution {}",
            sim.dim(),
            dist.dim()
        )));
    }
    Ok((sim, dist))
}

fn level_warnings(exp: &RateExperiment, w: &mut Writer) -> Result<(), CliError> {
    for l in &exp.results {
        if let Some(e) = &l.error {
            w.out.warnings.push(format!("level {}: {e}", l.n));
        }
    }
    if exp.results.iter().all(|l| l.error.is_some()) {
        return Err(Error::Convergence("every level failed".into()).into());
    }
    Ok(())
}

fn quantize(cfg: &ExperimentConfig, w: &mut Writer) -> Result<(), CliError> {
    let (sim, dist) = loss_and_law(cfg)?;
    let rc = rate_config(cfg, &sim, &dist)?;
    let exp = rate_experiment(&sim, &dist, &rc, None)?;
    level_warnings(&exp, w)?;
    for l in &exp.results {
        if let Some(cb) = &l.codebook {
            w.write(&format!("codebook_n{}.csv", l.n), &cb.to_csv())?;
            w.write(&format!("codebook_n{}.json", l.n), &cb.to_json())?;
        }
    }
    w.write("distortion.csv", &exp.to_csv())
}

#[derive(Serialize)]
struct ZadorJson<'a> {
    divergence: &'a str,
    distribution: &'a str,
    r: f64,
    d: usize,
    levels: &'a [usize],
    restarts: usize,
    seed: u64,
    constant: &'a ConstantEstimate,
    fit: Option<&'a PowerFit>,
    summary: RateSummary,
}

fn zador_verify(cfg: &ExperimentConfig, w: &mut Writer) -> Result<(), CliError> {
    let (sim, dist) = loss_and_law(cfg)?;
    let rc = rate_config(cfg, &sim, &dist)?;
    let constant = zador_constant(&sim, &dist, cfg.r, cfg.tol.unwrap_or(1e-10))?;
    w.out.warnings.extend(constant.warnings.iter().cloned());
    let exp = rate_experiment(&sim, &dist, &rc, Some(constant.value))?;
    level_warnings(&exp, w)?;
    w.write("rate.csv", &exp.to_csv())?;
    let json = ZadorJson {
        divergence: &exp.divergence,
        distribution: &exp.distribution,
        r: exp.r,
        d: exp.d,
        levels: &exp.levels,
        restarts: exp.restarts,
        seed: exp.seed,
        constant: &constant,
        fit: exp.fit.as_ref(),
        summary: exp.summary(),
    };
    w.write("zador.json", &json_g17(&json))
}

fn random_spd<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &m * m.transpose() + DMatrix::identity(d, d) * 0.1
}

fn uniform_points<R: Rng>(rng: &mut R, n: usize, d: usize) -> Points {
    Points::from_flat(d, (0..n * d).map(|_| rng.random::<f64>()).collect())
        .expect("flat length matches")
}

#[derive(Serialize)]
struct IdentityJson {
    dim: usize,
    samples: usize,
    codewords: usize,
    max_mahalanobis_residual: Option<f64>,
    max_dilation_residual: Option<f64>,
    mahalanobis: Vec<TransformReport>,
    dilation: Vec<DilationCase>,
}

#[derive(Serialize)]
struct DilationCase {
    a: f64,
    b: f64,
    report: DilationReport,
}

fn identity_check(cfg: &ExperimentConfig, w: &mut Writer) -> Result<(), CliError> {
    let d = cfg.dimension();
    let kind = cfg.check.unwrap_or(IdentityKind::Both);
    let count = if cfg.s.is_some() {
        1
    } else {
        cfg.matrices.unwrap_or(20)
    };
    let n_samples = cfg.samples.unwrap_or(100_000);
    let n_code = cfg.codewords.unwrap_or(8);
    if count == 0 || n_samples == 0 || n_code == 0 {
        return Err(CliError::Config(
            "matrices, samples and codewords must be positive".into(),
        ));
    }
    let fixed = match &cfg.s {
        Some(rows) => {
            let k = rows.len();
            if rows.iter().any(|r| r.len() != k) {
                return Err(CliError::Config("`s` must be a square matrix".into()));
            }
            let m = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
            validate_spd(&m).map_err(config_err)?;
            Some(m)
        }
        None => None,
    };
    let mut json = IdentityJson {
        dim: fixed.as_ref().map_or(d, |m| m.nrows()),
        samples: n_samples,
        codewords: n_code,
        max_mahalanobis_residual: None,
        max_dilation_residual: None,
        mahalanobis: vec![],
        dilation: vec![],
    };
    let d = json.dim;
    for k in 0..count {
        let mut rng = rng_from_seed(derive_seed(cfg.seed, &[k as u64]));
        let s = fixed.clone().unwrap_or_else(|| random_spd(&mut rng, d));
        let cb = Codebook::new(uniform_points(&mut rng, n_code, d), "random", cfg.r);
        let samples = uniform_points(&mut rng, n_samples, d);
        if matches!(kind, IdentityKind::Mahalanobis | IdentityKind::Both) {
            json.mahalanobis
                .push(mahalanobis_transform_check(&s, &cb, &samples, cfg.r)?);
        }
        if matches!(kind, IdentityKind::Dilation | IdentityKind::Both) {
            let a = cfg
                .dilation_a
                .unwrap_or_else(|| rng.random_range(-2.0..2.0));
            let b = cfg
                .dilation_b
                .unwrap_or_else(|| a + rng.random_range(0.1..4.0));
            let report = dilation_check(&s, a, b, &cb, &samples, cfg.r).map_err(config_err)?;
            json.dilation.push(DilationCase { a, b, report });
        }
    }
    json.max_mahalanobis_residual = json
        .mahalanobis
        .iter()
        .map(|r| r.max_rel_residual)
        .reduce(f64::max);
    json.max_dilation_residual = json
        .dilation
        .iter()
        .map(|c| c.report.max_rel_residual)
        .reduce(f64::max);
    w.write("identity.json", &json_g17(&json))
}

#[derive(Serialize)]
struct FirewallJson {
    divergence: String,
    cell: usize,
    center: Vec<f64>,
    edge: f64,
    varpi: f64,
    auto_rho: bool,
    #[serde(flatten)]
    report: FirewallReport,
}

fn firewall_check(cfg: &ExperimentConfig, w: &mut Writer) -> Result<(), CliError> {
    let spec: DivergenceSpec = match cfg.similarity().map_err(config_err)? {
        Similarity::Divergence(s) => s,
        Similarity::Field(_) => {
            return Err(CliError::Config("firewall-check needs a divergence".into()))
        }
    };
    let outer = cfg.region().map_err(config_err)?;
    if outer.dim() != spec.dim() {
        return Err(CliError::Config(
            "box and divergence dimensions differ".into(),
        ));
    }
    let tess = tessellate(&outer, cfg.cells.unwrap_or(4)).map_err(config_err)?;
    let index = cfg.cell.unwrap_or(0);
    if index >= tess.num_cells() {
        return Err(CliError::Config(format!(
            "cell {index} is out of range (0..{})",
            tess.num_cells()
        )));
    }
    let cube = tess.cell(index);
    if !outer.contains_box(&cube.to_box()) {
        return Err(CliError::Config("the cell must lie inside the box".into()));
    }
    let varpi = cfg.varpi.unwrap_or(0.2 * 2.0 * cube.half_width);
    let sampling = FirewallSampling {
        interior: cfg.interior.unwrap_or(10_000),
        boundary: cfg.boundary.unwrap_or(1_000),
        bulk: cfg.bulk.unwrap_or(4_000),
        seed: cfg.seed,
    };
    let report = match cfg.net_rho {
        Some(rho) => {
            let net = FirewallNet::new(index, &cube, varpi, rho).map_err(config_err)?;
            verify_firewall(&net, &cube, &spec, &outer, &sampling)?
        }
        None => auto_firewall(index, &cube, varpi, &spec, &outer, &sampling)?.1,
    };
    let json = FirewallJson {
        divergence: spec.name().to_string(),
        cell: index,
        center: cube.center.clone(),
        edge: 2.0 * cube.half_width,
        varpi,
        auto_rho: cfg.net_rho.is_none(),
        report,
    };
    w.write("firewall.json", &json_g17(&json))
}

fn pierce(cfg: &ExperimentConfig, w: &mut Writer) -> Result<(), CliError> {
    let (sim, dist) = loss_and_law(cfg)?;
    let rc = rate_config(cfg, &sim, &dist)?;
    let quadrature =
        dist.has_density() && dist.dim() <= 2 && dist.support().is_some_and(|s| s.is_bounded());
    let moment = if quadrature {
        MomentMode::Quadrature {
            tol: cfg.tol.unwrap_or(1e-10),
        }
    } else {
        MomentMode::MonteCarlo {
            n: cfg.samples.unwrap_or(1_000_000),
            seed: derive_seed(cfg.seed, &[3]),
        }
    };
    let pc = PierceConfig {
        r: cfg.r,
        delta: cfg.delta.unwrap_or(1.0),
        levels: cfg.levels.clone(),
        moment,
        rate: rc,
    };
    let report = pierce_check(&dist, &sim, &pc)?;
    w.out.warnings.extend(report.failures.iter().cloned());
    let mut csv = String::from("n,e_rn,b_n\n");
    for l in &report.levels {
        csv.push_str(&format!("{},{},{}\n", l.n, fmt_g17(l.e_rn), fmt_g17(l.b_n)));
    }
    w.write("pierce.csv", &csv)?;
    w.write("pierce.json", &json_g17(&report))
}
