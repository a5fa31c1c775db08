//! Experiment configuration: domain, truncation, potential family, exponent
//! and time grids, all serializable to TOML with unknown keys rejected.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::HarmonicBasis;
use crate::error::{Error, Result};
use crate::operators::PotentialField;

/// Named potential family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    Constant { value: f64 },
    /// cos(theta): angle on the circle, colatitude on the sphere.
    CosLowfreq,
    /// Truncated random harmonic series rescaled to a Lipschitz cap;
    /// axisymmetric on the sphere.
    RandomLipschitz { lipschitz: f64, degree: usize },
}

impl PotentialSpec {
    pub fn build(&self, basis: &HarmonicBasis, seed: u64) -> Result<PotentialField> {
        Ok(match self {
            PotentialSpec::Zero => PotentialField::zero(basis.grid()),
            PotentialSpec::Constant { value } => PotentialField::constant(basis.grid(), *value),
            PotentialSpec::CosLowfreq => PotentialField::cos_lowfreq(basis.grid()),
            PotentialSpec::RandomLipschitz { lipschitz, degree } => {
                PotentialField::random_lipschitz(basis, seed, *lipschitz, *degree)?
            }
        })
    }

    /// Highest harmonic degree present in the potential.
    pub fn degree(&self) -> usize {
        match self {
            PotentialSpec::Zero | PotentialSpec::Constant { .. } => 0,
            PotentialSpec::CosLowfreq => 1,
            PotentialSpec::RandomLipschitz { degree, .. } => *degree,
        }
    }
}

impl FromStr for PotentialSpec {
    type Err = Error;

    /// CLI form: zero | constant:C | cos-lowfreq | random-lipschitz:lip=L,deg=D
    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        match name {
            "zero" => Ok(PotentialSpec::Zero),
            "constant" => {
                let v = params
                    .ok_or_else(|| Error::Config("constant potential needs a value".into()))?
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad constant value: {e}")))?;
                Ok(PotentialSpec::Constant { value: v })
            }
            "cos-lowfreq" => Ok(PotentialSpec::CosLowfreq),
            "random-lipschitz" => {
                let mut lip = 1.0;
                let mut deg = 8usize;
                if let Some(p) = params {
                    for part in p.split(',') {
                        match part.split_once('=') {
                            Some(("lip", v)) => {
                                lip = v
                                    .parse()
                                    .map_err(|e| Error::Config(format!("bad lip: {e}")))?
                            }
                            Some(("deg", v)) => {
                                deg = v
                                    .parse()
                                    .map_err(|e| Error::Config(format!("bad deg: {e}")))?
                            }
                            _ => {
                                return Err(Error::Config(format!(
                                    "unknown potential parameter '{part}'"
                                )))
                            }
                        }
                    }
                }
                Ok(PotentialSpec::RandomLipschitz {
                    lipschitz: lip,
                    degree: deg,
                })
            }
            other => Err(Error::Config(format!("unknown potential family '{other}'"))),
        }
    }
}

/// Dyadic time grid: t = 2^-j for j in exp_min..=exp_max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub exp_min: u32,
    pub exp_max: u32,
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        (self.exp_min..=self.exp_max)
            .map(|j| 2f64.powi(-(j as i32)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Boundary dimension, 1 or 2.
    pub dim: usize,
    pub max_degree: usize,
    pub potential: PotentialSpec,
    /// Exponents for norm sweeps; "inf" is accepted by TOML as f64 infinity.
    pub p_list: Vec<f64>,
    pub alpha_list: Vec<f64>,
    pub t_grid: TimeGrid,
    /// Window (lambda_min, lambda_max) of the exponent fits.
    pub lambda_window: (f64, f64),
    /// Nodal/quadrature oversampling factor.
    pub refinement: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn default_for_dim(dim: usize) -> Result<Self> {
        match dim {
            1 => Ok(ExperimentConfig {
                dim: 1,
                max_degree: 128,
                potential: PotentialSpec::CosLowfreq,
                p_list: vec![2.0, 4.0, f64::INFINITY],
                alpha_list: vec![0.5, 1.0, 1.5],
                t_grid: TimeGrid {
                    exp_min: 3,
                    exp_max: 7,
                },
                lambda_window: (8.0, 128.0),
                refinement: 8,
                out_dir: PathBuf::from("out/dim1"),
                seed: 7,
            }),
            2 => Ok(ExperimentConfig {
                dim: 2,
                max_degree: 96,
                potential: PotentialSpec::RandomLipschitz {
                    lipschitz: 1.0,
                    degree: 8,
                },
                p_list: vec![2.0, 4.0, 6.0, f64::INFINITY],
                alpha_list: vec![0.5, 1.0, 1.5],
                t_grid: TimeGrid {
                    exp_min: 3,
                    exp_max: 7,
                },
                lambda_window: (8.0, 96.0),
                refinement: 8,
                out_dir: PathBuf::from("out/dim2"),
                seed: 7,
            }),
            d => Err(Error::Config(format!("dim must be 1 or 2, got {d}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::Config(format!("dim must be 1 or 2, got {}", self.dim)));
        }
        if self.max_degree < 4 || self.max_degree > 512 {
            return Err(Error::Config(format!(
                "max_degree must lie in 4..=512, got {}",
                self.max_degree
            )));
        }
        if self.p_list.iter().any(|p| p.is_nan() || *p < 1.0) {
            return Err(Error::Config("p_list entries must satisfy p >= 1".into()));
        }
        if self.alpha_list.iter().any(|a| !(*a > 0.0 && *a < 2.0)) {
            return Err(Error::Config("alpha_list entries must lie in (0, 2)".into()));
        }
        if self.t_grid.exp_min > self.t_grid.exp_max {
            return Err(Error::Config("t_grid.exp_min must be <= exp_max".into()));
        }
        if self.lambda_window.0 >= self.lambda_window.1 || self.lambda_window.0 <= 0.0 {
            return Err(Error::Config("lambda_window must be a positive interval".into()));
        }
        if self.refinement < 4 {
            return Err(Error::Config("refinement must be >= 4".into()));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hex hash of the canonical serialized form; embedded in every output.
    /// The output directory is not part of the experiment identity.
    pub fn hash(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let text = canonical.to_toml_string()?;
        let digest = Sha256::digest(text.as_bytes());
        Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
    }
}
