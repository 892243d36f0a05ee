//! Experiment configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments start with '#'
//! function   = hartmann3          # currin | hartmann3 | hartmann6 | branin | subprocess
//! algorithm  = mfpoo              # mfhoo | mfpoo | hoo | poo
//! budgets    = 10, 20, 30         # cost units, ascending
//! seeds      = 0..9               # inclusive range or comma list
//! sigma      = 0.1                # noise standard deviation (default: per function)
//! rho_max    = 0.95
//! nu_max     = auto               # or a positive number
//! known_bias = false              # true: use bias_c instead of estimating
//! bias_c     = 0.5
//! recommendation = practical      # practical | theoretical
//! refresh    = path               # path | whole_tree
//! out_dir    = results
//! wall_time  = true               # false writes 0 for reproducible output
//! parallel   = true               # run the (budget, seed) grid on the thread pool
//! parallel_instances = false      # run MFPOO instances concurrently
//!
//! # subprocess objectives
//! command    = python3 train.py
//! bounds     = 0:1, -3:3          # lower:upper per coordinate
//! cost       = 0.05, 0.95, 3      # offset, scale, exponent (or one constant)
//! timeout_s  = 3600
//! ```

use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::fidelity::CostFunction;
use crate::mfhoo::{Nu, RecommendationMode, RefreshScope};
use crate::objective::{self, DEFAULT_TIMEOUT};
use crate::partition::BoxDomain;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {value:?}")]
    Value { key: String, value: String },
    #[error("missing `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Mfhoo,
    Mfpoo,
    Hoo,
    Poo,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mfhoo => "mfhoo",
            Algorithm::Mfpoo => "mfpoo",
            Algorithm::Hoo => "hoo",
            Algorithm::Poo => "poo",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mfhoo" => Some(Algorithm::Mfhoo),
            "mfpoo" => Some(Algorithm::Mfpoo),
            "hoo" => Some(Algorithm::Hoo),
            "poo" => Some(Algorithm::Poo),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum FunctionSpec {
    Synthetic(String),
    Subprocess {
        command: String,
        domain: BoxDomain,
        cost: CostFunction,
        timeout: Duration,
    },
}

impl FunctionSpec {
    pub fn name(&self) -> &str {
        match self {
            FunctionSpec::Synthetic(name) => name,
            FunctionSpec::Subprocess { .. } => "subprocess",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub function: FunctionSpec,
    pub algorithm: Algorithm,
    pub budgets: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Noise standard deviation; `None` keeps the function's default.
    pub sigma: Option<f64>,
    pub rho_max: f64,
    pub nu_max: Nu,
    /// Slope of a known linear bias; `None` estimates it online.
    pub known_bias: Option<f64>,
    pub recommendation: RecommendationMode,
    pub refresh: RefreshScope,
    pub out_dir: PathBuf,
    pub wall_time: bool,
    pub parallel: bool,
    pub parallel_instances: bool,
}

impl ExperimentConfig {
    pub fn new(
        function: FunctionSpec,
        algorithm: Algorithm,
        budgets: Vec<f64>,
        seeds: Vec<u64>,
    ) -> Self {
        Self {
            function,
            algorithm,
            budgets,
            seeds,
            sigma: None,
            rho_max: 0.95,
            nu_max: Nu::Auto,
            known_bias: None,
            recommendation: RecommendationMode::Practical,
            refresh: RefreshScope::Path,
            out_dir: PathBuf::from("results"),
            wall_time: true,
            parallel: true,
            parallel_instances: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.budgets.is_empty() {
            return Err(ConfigError::Missing("budgets"));
        }
        if self.budgets.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(ConfigError::Invalid("budgets must be positive".into()));
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConfigError::Invalid(
                "budgets must be strictly ascending".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Missing("seeds"));
        }
        if !(self.rho_max > 0.0 && self.rho_max < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "rho_max must lie in (0, 1), got {}",
                self.rho_max
            )));
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(ConfigError::Invalid(format!(
                    "sigma must be nonnegative, got {s}"
                )));
            }
        }
        if let Nu::Fixed(nu) = self.nu_max {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(ConfigError::Invalid(format!(
                    "nu_max must be positive, got {nu}"
                )));
            }
        }
        if let FunctionSpec::Synthetic(name) = &self.function {
            if objective::by_name(name).is_none() {
                return Err(ConfigError::Value {
                    key: "function".into(),
                    value: name.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Raw settings collected from a file and command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    entries: Vec<(String, String)>,
}

const KEYS: &[&str] = &[
    "function",
    "algorithm",
    "budgets",
    "seeds",
    "sigma",
    "rho_max",
    "nu_max",
    "known_bias",
    "bias_c",
    "recommendation",
    "refresh",
    "out_dir",
    "wall_time",
    "parallel",
    "parallel_instances",
    "command",
    "bounds",
    "cost",
    "timeout_s",
];

fn canonical(key: &str) -> &str {
    match key {
        "algo" => "algorithm",
        "budget" => "budgets",
        "seed" => "seeds",
        other => other,
    }
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut settings = Settings::default();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: k + 1 })?;
            settings.set(key.trim(), value.trim())?;
        }
        Ok(settings)
    }

    /// Sets `key`; later values replace earlier ones.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = canonical(key);
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.entries.retain(|(k, _)| k != key);
        self.entries.push((key.to_string(), value.to_string()));
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|_| ConfigError::Value {
                    key: key.to_string(),
                    value: v.to_string(),
                })
            })
            .transpose()
    }

    fn invalid(&self, key: &str) -> ConfigError {
        ConfigError::Value {
            key: key.to_string(),
            value: self.get(key).unwrap_or_default().to_string(),
        }
    }

    pub fn build(&self) -> Result<ExperimentConfig, ConfigError> {
        let function_name = self
            .get("function")
            .ok_or(ConfigError::Missing("function"))?;
        let function = if function_name == "subprocess" {
            let command = self
                .get("command")
                .ok_or(ConfigError::Missing("command"))?
                .to_string();
            let bounds = parse_bounds(self.get("bounds").ok_or(ConfigError::Missing("bounds"))?)
                .ok_or_else(|| self.invalid("bounds"))?;
            let domain = BoxDomain::new(bounds).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let cost = match self.get("cost") {
                Some(c) => CostFunction::parse(c).ok_or_else(|| self.invalid("cost"))?,
                None => CostFunction::Constant(1.0),
            };
            let timeout = match self.parsed::<f64>("timeout_s")? {
                Some(s) if s > 0.0 && s.is_finite() => Duration::from_secs_f64(s),
                Some(_) => return Err(self.invalid("timeout_s")),
                None => DEFAULT_TIMEOUT,
            };
            FunctionSpec::Subprocess {
                command,
                domain,
                cost,
                timeout,
            }
        } else {
            FunctionSpec::Synthetic(function_name.to_string())
        };

        let algorithm = match self.get("algorithm") {
            Some(a) => Algorithm::parse(a).ok_or_else(|| self.invalid("algorithm"))?,
            None => Algorithm::Mfpoo,
        };
        let budgets =
            parse_list::<f64>(self.get("budgets").ok_or(ConfigError::Missing("budgets"))?)
                .ok_or_else(|| self.invalid("budgets"))?;
        let seeds = match self.get("seeds") {
            Some(s) => parse_seeds(s).ok_or_else(|| self.invalid("seeds"))?,
            None => vec![0],
        };

        let mut cfg = ExperimentConfig::new(function, algorithm, budgets, seeds);
        cfg.sigma = self.parsed("sigma")?;
        if let Some(r) = self.parsed("rho_max")? {
            cfg.rho_max = r;
        }
        cfg.nu_max = match self.get("nu_max") {
            None | Some("auto") => Nu::Auto,
            Some(v) => Nu::Fixed(v.parse().map_err(|_| self.invalid("nu_max"))?),
        };
        if self.parsed::<bool>("known_bias")?.unwrap_or(false) {
            let c = self
                .parsed::<f64>("bias_c")?
                .ok_or(ConfigError::Missing("bias_c"))?;
            if !(c > 0.0 && c.is_finite()) {
                return Err(self.invalid("bias_c"));
            }
            cfg.known_bias = Some(c);
        }
        cfg.recommendation = match self.get("recommendation") {
            None | Some("practical") => RecommendationMode::Practical,
            Some("theoretical") => RecommendationMode::Theoretical,
            Some(_) => return Err(self.invalid("recommendation")),
        };
        cfg.refresh = match self.get("refresh") {
            None | Some("path") => RefreshScope::Path,
            Some("whole_tree") => RefreshScope::WholeTree,
            Some(_) => return Err(self.invalid("refresh")),
        };
        if let Some(dir) = self.get("out_dir") {
            cfg.out_dir = PathBuf::from(dir);
        }
        if let Some(w) = self.parsed("wall_time")? {
            cfg.wall_time = w;
        }
        if let Some(p) = self.parsed("parallel")? {
            cfg.parallel = p;
        }
        if let Some(p) = self.parsed("parallel_instances")? {
            cfg.parallel_instances = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().ok())
        .collect()
}

/// `a..b` (inclusive) or a comma list.
pub fn parse_seeds(s: &str) -> Option<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().ok()?;
        let b: u64 = b.trim().trim_start_matches('=').parse().ok()?;
        return (a <= b).then(|| (a..=b).collect());
    }
    parse_list(s)
}

fn parse_bounds(s: &str) -> Option<Vec<(f64, f64)>> {
    s.split(',')
        .map(|pair| {
            let (lo, hi) = pair.trim().split_once(':')?;
            Some((lo.trim().parse().ok()?, hi.trim().parse().ok()?))
        })
        .collect()
}
