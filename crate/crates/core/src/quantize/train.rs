use super::init::{grid_points, init_seed, InitStrategy};
use super::lloyd::{lloyd, LloydConfig, LloydInput, LloydResult};
use super::similarity::Similarity;
use crate::error::{Error, Result};
use crate::numeric::derive_seed;
use crate::points::Points;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lloyd: LloydConfig,
    /// Restart 0 starts from a grid, the others from k-means++ seeds.
    pub restarts: usize,
    pub seed: u64,
    /// Draws used for k-means++ seeding in density mode.
    pub seeding_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lloyd: LloydConfig::default(),
            restarts: 5,
            seed: 0,
            seeding_samples: 20_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub best: LloydResult,
    pub best_restart: usize,
    pub restarts_used: usize,
    /// Messages of restarts that failed.
    pub failures: Vec<String>,
}

fn initial(
    input: LloydInput<'_>,
    n: usize,
    sim: &Similarity,
    cfg: &TrainConfig,
    restart: usize,
) -> Result<Points> {
    let seed = derive_seed(cfg.seed, &[restart as u64]);
    match input {
        LloydInput::Samples(pts) => {
            let strategy = if restart == 0 {
                InitStrategy::Grid
            } else {
                InitStrategy::KmeansPlusPlus
            };
            init_seed(pts, n, cfg.lloyd.r, sim, &strategy, seed)
        }
        LloydInput::Density(dist) => {
            if restart == 0 {
                let support = dist
                    .support()
                    .ok_or_else(|| Error::UnsupportedMode(dist.label()))?;
                grid_points(&support, n)
            } else {
                let pts = dist.sample(cfg.seeding_samples.max(n), derive_seed(seed, &[1]));
                init_seed(
                    &pts,
                    n,
                    cfg.lloyd.r,
                    sim,
                    &InitStrategy::KmeansPlusPlus,
                    seed,
                )
            }
        }
    }
}

/// Best of several Lloyd runs; ties go to the earliest restart.
pub fn train_from(
    input: LloydInput<'_>,
    inits: impl IntoIterator<Item = Result<Points>>,
    sim: &Similarity,
    cfg: &LloydConfig,
) -> Result<TrainResult> {
    let mut best: Option<(usize, LloydResult)> = None;
    let mut failures = Vec::new();
    let mut used = 0;
    for (k, init) in inits.into_iter().enumerate() {
        match init.and_then(|p| lloyd(input, &p, sim, cfg)) {
            Ok(res) => {
                used += 1;
                let better = match &best {
                    None => true,
                    Some((_, b)) => res.codebook.distortion < b.codebook.distortion,
                };
                if better {
                    best = Some((k, res));
                }
            }
            Err(e) => failures.push(format!("restart {k}: {e}")),
        }
    }
    match best {
        Some((best_restart, best)) => Ok(TrainResult {
            best,
            best_restart,
            restarts_used: used,
            failures,
        }),
        None => Err(Error::Convergence(format!(
            "every restart failed: {}",
            failures.join("; ")
        ))),
    }
}

/// Best-of-restarts Lloyd training at level `n`.
pub fn train(
    input: LloydInput<'_>,
    n: usize,
    sim: &Similarity,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    if cfg.restarts == 0 {
        return Err(Error::InvalidParameter(
            "at least one restart is required".into(),
        ));
    }
    let inits = (0..cfg.restarts).map(|k| initial(input, n, sim, cfg, k));
    train_from(input, inits, sim, &cfg.lloyd)
}
