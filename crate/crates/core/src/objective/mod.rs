//! Multi-fidelity evaluation model: `Y = f_z(x) + eps`, with a cost `lambda(z)`
//! charged per query.

mod subprocess;
mod synthetic;

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::fidelity::CostFunction;
use crate::partition::{BoxDomain, DomainError};

pub use subprocess::{SubprocessObjective, DEFAULT_TIMEOUT};
pub use synthetic::{branin, by_name, currin, hartmann3, hartmann6, SYNTHETIC_NAMES};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("fidelity {0} outside [0, 1]")]
    Fidelity(f64),
    #[error("objective `{0}` has no closed-form mean")]
    NoMean(String),
    #[error("objective process: {0}")]
    Protocol(String),
    #[error("objective process did not answer within {0:?}")]
    Timeout(std::time::Duration),
    #[error("objective process i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// One noisy query of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Vec<f64>,
    pub z: f64,
    pub y: f64,
    pub cost: f64,
    /// Position in the caller's evaluation sequence; 0 until assigned.
    pub seq: u64,
}

/// Known maximizer of the top-fidelity function.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub value: f64,
}

/// A function to maximize, observable at any fidelity `z` in `[0, 1]`.
pub trait MultiFidelityObjective: Send + Sync {
    fn name(&self) -> &str;

    fn domain(&self) -> &BoxDomain;

    fn cost_model(&self) -> &CostFunction;

    fn cost(&self, z: f64) -> f64 {
        self.cost_model().eval(z)
    }

    /// Standard deviation of the observation noise.
    fn sigma(&self) -> f64;

    /// Noiseless value `f_z(x)`, when the objective can compute it.
    fn mean(&self, x: &[f64], z: f64) -> Option<f64>;

    fn optimum(&self) -> Option<Optimum> {
        None
    }

    /// Whether `evaluate` may be called from several threads at once.
    fn concurrent(&self) -> bool {
        true
    }

    /// Draws `Y = mean(x, z) + sigma * N(0, 1)` and charges `cost(z)`. A
    /// noiseless objective draws nothing from `rng`.
    fn evaluate(&self, x: &[f64], z: f64, rng: &mut dyn RngCore) -> Result<Observation, EvalError> {
        self.domain().check(x)?;
        check_fidelity(z)?;
        let mean = self
            .mean(x, z)
            .ok_or_else(|| EvalError::NoMean(self.name().to_string()))?;
        let sigma = self.sigma();
        let y = if sigma > 0.0 {
            let noise: f64 = StandardNormal.sample(rng);
            mean + sigma * noise
        } else {
            mean
        };
        Ok(Observation {
            x: x.to_vec(),
            z,
            y,
            cost: self.cost(z),
            seq: 0,
        })
    }
}

pub(crate) fn check_fidelity(z: f64) -> Result<(), EvalError> {
    if (0.0..=1.0).contains(&z) {
        Ok(())
    } else {
        Err(EvalError::Fidelity(z))
    }
}

type MeanFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// Objective with a closed-form mean and Gaussian noise.
#[derive(Clone)]
pub struct Synthetic {
    name: String,
    domain: BoxDomain,
    cost: CostFunction,
    sigma: f64,
    mean: MeanFn,
    optimum: Option<Optimum>,
}

impl Synthetic {
    pub fn new(
        name: impl Into<String>,
        domain: BoxDomain,
        cost: CostFunction,
        sigma: f64,
        mean: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            domain,
            cost,
            sigma,
            mean: Arc::new(mean),
            optimum: None,
        }
    }

    pub fn with_optimum(mut self, x: Vec<f64>, value: f64) -> Self {
        self.optimum = Some(Optimum { x, value });
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_cost(mut self, cost: CostFunction) -> Self {
        self.cost = cost;
        self
    }
}

impl fmt::Debug for Synthetic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Synthetic")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("cost", &self.cost)
            .field("sigma", &self.sigma)
            .field("optimum", &self.optimum)
            .finish_non_exhaustive()
    }
}

impl MultiFidelityObjective for Synthetic {
    fn name(&self) -> &str {
        &self.name
    }

    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn cost_model(&self) -> &CostFunction {
        &self.cost
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn mean(&self, x: &[f64], z: f64) -> Option<f64> {
        Some((self.mean)(x, z))
    }

    fn optimum(&self) -> Option<Optimum> {
        self.optimum.clone()
    }
}
