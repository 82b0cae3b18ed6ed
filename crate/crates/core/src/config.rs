//! Flat TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::divergence::{builtin, CatalogEntry, CatalogParams};
use crate::error::{Error, Result};
use crate::measures::DistributionSpec;
use crate::quantize::Similarity;
use crate::region::BoxRegion;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    DivergenceEval,
    Quantize,
    ZadorVerify,
    IdentityCheck,
    FirewallCheck,
    PierceCheck,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Self::DivergenceEval => "divergence-eval",
            Self::Quantize => "quantize",
            Self::ZadorVerify => "zador-verify",
            Self::IdentityCheck => "identity-check",
            Self::FirewallCheck => "firewall-check",
            Self::PierceCheck => "pierce-check",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMode {
    #[serde(rename = "exact-1d")]
    Exact1d,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingMode {
    Density,
    Samples,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentityKind {
    Mahalanobis,
    Dilation,
    Both,
}

/// Every setting of one run. Unset optional keys take per-subcommand defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subcommand: Option<Subcommand>,

    // loss
    pub divergence: String,
    pub dim: Option<usize>,
    pub a: Option<f64>,
    pub rho: Option<f64>,
    pub lambda: Option<f64>,
    pub f: Option<String>,
    pub variant: Option<String>,
    /// Row-major symmetric positive definite matrix.
    pub s: Option<Vec<Vec<f64>>>,
    /// Adds `eps |x|^2` to the generator.
    pub regularize: Option<f64>,
    /// Overrides for the comparison constants of the divergence.
    pub lip: Option<f64>,
    pub alpha: Option<f64>,

    // distribution
    pub distribution: Option<String>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub mean: Option<Vec<f64>>,
    pub sigma: Option<Vec<f64>>,
    pub point: Option<Vec<f64>>,
    pub path: Option<String>,

    // experiment
    pub r: f64,
    pub levels: Vec<usize>,
    pub restarts: usize,
    pub seed: u64,
    pub mode: Option<ErrorMode>,
    /// Monte Carlo sample count `N`.
    pub samples: Option<usize>,
    pub training: Option<TrainingMode>,
    pub train_samples: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub out_dir: Option<String>,

    // divergence-eval
    pub xi: Option<Vec<Vec<f64>>>,
    pub x: Option<Vec<Vec<f64>>>,
    pub pairs: Option<usize>,

    // identity-check
    pub check: Option<IdentityKind>,
    pub matrices: Option<usize>,
    pub codewords: Option<usize>,
    pub dilation_a: Option<f64>,
    pub dilation_b: Option<f64>,

    // firewall-check
    pub cells: Option<usize>,
    pub cell: Option<usize>,
    pub varpi: Option<f64>,
    /// Covering parameter of the net; unset selects it automatically.
    pub net_rho: Option<f64>,
    pub interior: Option<usize>,
    pub boundary: Option<usize>,
    pub bulk: Option<usize>,

    // pierce-check
    pub delta: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            subcommand: None,
            divergence: "sq-euclid".into(),
            dim: None,
            a: None,
            rho: None,
            lambda: None,
            f: None,
            variant: None,
            s: None,
            regularize: None,
            lip: None,
            alpha: None,
            distribution: None,
            lo: None,
            hi: None,
            mean: None,
            sigma: None,
            point: None,
            path: None,
            r: 2.0,
            levels: Vec::new(),
            restarts: 5,
            seed: 0,
            mode: None,
            samples: None,
            training: None,
            train_samples: None,
            tol: None,
            max_iter: None,
            out_dir: None,
            xi: None,
            x: None,
            pairs: None,
            check: None,
            matrices: None,
            codewords: None,
            dilation_a: None,
            dilation_b: None,
            cells: None,
            cell: None,
            varpi: None,
            net_rho: None,
            interior: None,
            boundary: None,
            bulk: None,
            delta: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Dimension from `dim`, the matrix, or the box, in that order.
    pub fn dimension(&self) -> usize {
        self.dim
            .or_else(|| self.s.as_ref().map(Vec::len))
            .or_else(|| self.lo.as_ref().map(Vec::len))
            .or_else(|| self.point.as_ref().map(Vec::len))
            .unwrap_or(1)
    }

    fn catalog_params(&self) -> CatalogParams {
        CatalogParams {
            dim: Some(self.dimension()),
            a: self.a,
            rho: self.rho,
            lambda: self.lambda,
            f: self.f.clone(),
            s: self.s.clone(),
            variant: self.variant.clone(),
        }
    }

    pub fn similarity(&self) -> Result<Similarity> {
        match builtin(&self.divergence, &self.catalog_params())? {
            CatalogEntry::Divergence(mut spec) => {
                if let Some(eps) = self.regularize {
                    spec = spec.regularize(eps)?;
                }
                if self.lip.is_some() || self.alpha.is_some() {
                    let (lip, alpha) = (self.lip.or(spec.lip_grad()), self.alpha.or(spec.alpha()));
                    spec = spec.with_bounds(lip, alpha);
                }
                Ok(spec.into())
            }
            CatalogEntry::Field(field) => {
                if self.regularize.is_some() || self.lip.is_some() || self.alpha.is_some() {
                    return Err(Error::InvalidParameter(
                        "regularize, lip and alpha apply to divergences only".into(),
                    ));
                }
                Ok(field.into())
            }
        }
    }

    /// The box given by `lo`/`hi`, or the unit cube.
    pub fn region(&self) -> Result<BoxRegion> {
        match (&self.lo, &self.hi) {
            (Some(lo), Some(hi)) => BoxRegion::new(lo.clone(), hi.clone()),
            (None, None) => Ok(BoxRegion::unit(self.dimension())),
            _ => Err(Error::InvalidParameter(
                "`lo` and `hi` must be given together".into(),
            )),
        }
    }

    pub fn distribution_spec(&self) -> Result<DistributionSpec> {
        let name = self.distribution.as_deref().unwrap_or("uniform");
        let need = |v: &Option<Vec<f64>>, key: &str| {
            v.clone().ok_or_else(|| {
                Error::InvalidParameter(format!("distribution `{name}` needs `{key}`"))
            })
        };
        match name {
            "uniform" => DistributionSpec::uniform(self.region()?),
            "triangular" => Ok(DistributionSpec::triangular(self.dimension())),
            "truncated-gaussian" => DistributionSpec::truncated_gaussian(
                self.region()?,
                need(&self.mean, "mean")?,
                need(&self.sigma, "sigma")?,
            ),
            "point-mass" => Ok(DistributionSpec::point_mass(need(&self.point, "point")?)),
            "empirical" => {
                let path = self.path.as_ref().ok_or_else(|| {
                    Error::InvalidParameter("distribution `empirical` needs `path`".into())
                })?;
                DistributionSpec::empirical_csv(Path::new(path))
            }
            other => Err(Error::UnknownName(other.to_string())),
        }
    }

    pub fn out_path(&self) -> PathBuf {
        PathBuf::from(self.out_dir.as_deref().unwrap_or("."))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let cfg = ExperimentConfig {
            subcommand: Some(Subcommand::ZadorVerify),
            divergence: "mahalanobis".into(),
            s: Some(vec![vec![2.0, 0.1], vec![0.1, 1.0 / 3.0]]),
            distribution: Some("truncated-gaussian".into()),
            lo: Some(vec![-3.0, -3.0]),
            hi: Some(vec![3.0, 3.0]),
            mean: Some(vec![0.0, 0.0]),
            sigma: Some(vec![1.0, 0.7]),
            levels: vec![8, 16, 32],
            seed: 17,
            mode: Some(ErrorMode::Mc),
            samples: Some(1_000_000),
            tol: Some(1e-10),
            net_rho: Some(0.1),
            ..ExperimentConfig::default()
        };
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn parses_hand_written_files() {
        let text = r#"
            subcommand = "quantize"
            divergence = "itakura-saito"
            distribution = "uniform"
            lo = [1.0]
            hi = [2.0]
            levels = [4]
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.subcommand, Some(Subcommand::Quantize));
        assert_eq!(cfg.r, 2.0);
        assert_eq!(cfg.similarity().unwrap().name(), "itakura-saito");
        assert_eq!(
            cfg.distribution_spec().unwrap().support().unwrap().lo,
            vec![1.0]
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::from_toml("levels = [1,").is_err());
        assert!(ExperimentConfig::from_toml("unknown_key = 1").is_err());
        assert!(ExperimentConfig::from_toml("r = \"two\"").is_err());
        let cfg = ExperimentConfig {
            divergence: "nope".into(),
            ..ExperimentConfig::default()
        };
        assert!(matches!(cfg.similarity(), Err(Error::UnknownName(_))));
        let cfg = ExperimentConfig {
            lo: Some(vec![0.0]),
            ..ExperimentConfig::default()
        };
        assert!(cfg.region().is_err());
    }
}
