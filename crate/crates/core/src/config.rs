//! JSON configuration files.

use serde::Deserialize;
use thiserror::Error;

use crate::domain::{DomainPoint, MeasureError, MeasureSpec};
use crate::expr::{Expr, ParseError};
use crate::integrate::{DEFAULT_MAX_CELLS, DEFAULT_RESOLUTION, DEFAULT_TOLERANCE};
use crate::pipeline::Problem;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Interval { a: f64, b: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Discrete { atoms: Vec<AtomConfig> },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub point: PointConfig,
    pub mass: f64,
}

/// A point given either as a bare number or as a coordinate list.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PointConfig {
    Scalar(f64),
    Coords(Vec<f64>),
}

impl From<&PointConfig> for DomainPoint {
    fn from(p: &PointConfig) -> Self {
        match p {
            PointConfig::Scalar(t) => DomainPoint::scalar(*t),
            PointConfig::Coords(c) => DomainPoint::new(c.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionConfig {
    pub expr: String,
    #[serde(default = "yes")]
    pub continuous: bool,
}

fn yes() -> bool {
    true
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub domain: DomainConfig,
    #[serde(default)]
    pub density: Option<String>,
    pub functions: Vec<FunctionConfig>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub unnormalized: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed config: {0}")]
    Json(String),
    #[error("function {index}: {source}")]
    Expr { index: usize, source: ParseError },
    #[error("density: {0}")]
    Density(ParseError),
    #[error("function list is empty")]
    NoFunctions,
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("function {index} uses x{needed} but the domain has dimension {dimension}")]
    Dimension {
        index: usize,
        needed: usize,
        dimension: usize,
    },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn measure(&self) -> Result<MeasureSpec, ConfigError> {
        let measure = match &self.domain {
            DomainConfig::Interval { a, b } => MeasureSpec::interval(*a, *b)?,
            DomainConfig::Box { lo, hi } => MeasureSpec::boxed(lo.clone(), hi.clone())?,
            DomainConfig::Discrete { atoms } => MeasureSpec::discrete(
                atoms
                    .iter()
                    .map(|a| (DomainPoint::from(&a.point), a.mass))
                    .collect(),
            )?,
        };
        match &self.density {
            None => Ok(measure),
            Some(text) => {
                let density = Expr::parse(text).map_err(ConfigError::Density)?;
                Ok(measure.with_density(density)?)
            }
        }
    }

    /// Validates the config and turns it into a [`Problem`].
    pub fn problem(&self) -> Result<Problem, ConfigError> {
        if !(self.tolerance > 0.0) {
            return Err(ConfigError::Tolerance(self.tolerance));
        }
        if self.functions.is_empty() {
            return Err(ConfigError::NoFunctions);
        }
        let measure = self.measure()?;
        let dimension = measure.dimension();
        let mut functions = Vec::with_capacity(self.functions.len());
        for (index, f) in self.functions.iter().enumerate() {
            let expr =
                Expr::parse(&f.expr).map_err(|source| ConfigError::Expr { index, source })?;
            let needed = expr.required_dimension();
            if needed > dimension {
                return Err(ConfigError::Dimension {
                    index,
                    needed,
                    dimension,
                });
            }
            functions.push(expr);
        }
        Ok(Problem {
            functions,
            continuous: self.functions.iter().map(|f| f.continuous).collect(),
            measure,
            tolerance: self.tolerance,
            resolution: self.resolution,
            seed: self.seed,
            unnormalized: self.unnormalized,
            max_cells: DEFAULT_MAX_CELLS,
        })
    }
}
