//! Experiment configuration: a single JSON document.
//!
//! ```json
//! {
//!   "lattice": { "rows": 30, "cols": 30 },
//!   "model": { "p": 1, "q": 2, "h": 1, "density": "normal", "linear": false },
//!   "covariates": { "columns": [ { "dist": "normal", "sd": 1.5 }, { "dist": "normal", "sd": 3.0 } ] },
//!   "simulation": { "T": 30, "burn_in": 200, "seed": 7 },
//!   "theta": { "phi0": 0.6, "phi": [-0.274], "beta": [], "lambda": [1.5], "gamma": [[0.75, -0.35]] },
//!   "optim": { "n_starts": 5, "tol": 1e-8 },
//!   "replicate": { "R": 200, "fixed_design": false }
//! }
//! ```
//!
//! `adjacency` (`{"path": "edges.csv", "n": 3107}` or `{"edges": [[0, 1]], "n": 2}`)
//! replaces `lattice` for irregular regions.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::density::ErrorDensity;
use crate::error::{Error, Result};
use crate::estimator::FitOptions;
use crate::io::read_adjacency_file;
use crate::model::{ModelSpec, ParameterVector};
use crate::simulate::{CovariateConfig, SimulationOptions, DEFAULT_BURN_IN};
use crate::weights::WeightMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjacencyConfig {
    pub n: usize,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub edges: Option<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "one")]
    pub p: usize,
    pub q: usize,
    pub h: usize,
    #[serde(default = "normal")]
    pub density: ErrorDensity,
    #[serde(default = "yes")]
    pub linear: bool,
    #[serde(default)]
    pub intercept: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn normal() -> ErrorDensity {
    ErrorDensity::Normal
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(rename = "T")]
    pub t_len: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicateConfig {
    #[serde(rename = "R", default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub fixed_design: bool,
}

fn default_replicates() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub lattice: Option<LatticeConfig>,
    #[serde(default)]
    pub adjacency: Option<AdjacencyConfig>,
    #[serde(default = "yes")]
    pub standardize: bool,
    pub model: ModelConfig,
    #[serde(default)]
    pub covariates: Option<CovariateConfig>,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub theta: Option<ParameterVector>,
    #[serde(default)]
    pub optim: FitOptions,
    #[serde(default)]
    pub replicate: Option<ReplicateConfig>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        match (&self.lattice, &self.adjacency) {
            (Some(_), Some(_)) => return Err(Error::invalid("config has both `lattice` and `adjacency`")),
            (None, None) => return Err(Error::invalid("config needs a `lattice` or an `adjacency` section")),
            (None, Some(a)) if a.path.is_some() == a.edges.is_some() => {
                return Err(Error::invalid("`adjacency` needs exactly one of `path` or `edges`"))
            }
            _ => {}
        }
        if let Some(c) = &self.covariates {
            if c.q() != self.model.q {
                return Err(Error::invalid(format!(
                    "`covariates` yields q = {} but `model.q` = {}",
                    c.q(),
                    self.model.q
                )));
            }
            if self.model.intercept != c.intercept {
                return Err(Error::invalid("`model.intercept` and `covariates.intercept` disagree"));
            }
        }
        if let Some(r) = &self.replicate {
            if r.replicates < 2 {
                return Err(Error::invalid("`replicate.R` must be at least 2"));
            }
        }
        Ok(())
    }

    pub fn weights(&self, standardize: bool) -> Result<WeightMatrix> {
        if let Some(l) = &self.lattice {
            return if standardize {
                WeightMatrix::queen_lattice(l.rows, l.cols)
            } else {
                WeightMatrix::queen_lattice_unstandardized(l.rows, l.cols)
            };
        }
        let a = self.adjacency.as_ref().expect("checked on load");
        let edges = match (&a.edges, &a.path) {
            (Some(e), _) => e.clone(),
            (None, Some(p)) => read_adjacency_file(&self.base_dir.join(p))?,
            (None, None) => unreachable!("checked on load"),
        };
        if standardize {
            WeightMatrix::from_adjacency(&edges, a.n)
        } else {
            WeightMatrix::from_adjacency_unstandardized(&edges, a.n)
        }
    }

    /// Model from the config. `no_standardize` overrides `standardize`.
    pub fn model_spec(&self, no_standardize: bool) -> Result<ModelSpec> {
        let w = self.weights(self.standardize && !no_standardize)?;
        let m = &self.model;
        let spec = ModelSpec::new(Arc::new(w), m.p, m.q, m.h, m.density)
            .with_linear(m.linear)
            .with_intercept(m.intercept);
        spec.validate()?;
        Ok(spec)
    }

    pub fn theta(&self, spec: &ModelSpec) -> Result<ParameterVector> {
        let theta = self
            .theta
            .clone()
            .ok_or_else(|| Error::invalid("config has no `theta` section"))?;
        theta.check_shape(spec)?;
        Ok(theta)
    }

    pub fn covariates(&self) -> Result<CovariateConfig> {
        self.covariates
            .clone()
            .ok_or_else(|| Error::invalid("config has no `covariates` section"))
    }

    pub fn simulation_options(&self, seed: Option<u64>) -> Result<SimulationOptions> {
        let s = self
            .simulation
            .as_ref()
            .ok_or_else(|| Error::invalid("config has no `simulation` section"))?;
        Ok(SimulationOptions {
            t_len: s.t_len,
            burn_in: s.burn_in,
            seed: seed.unwrap_or(s.seed),
            zero_noise: false,
        })
    }
}
