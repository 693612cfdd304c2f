use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use dyson_core::dixon_anderson::OrderedVector;
use dyson_core::partitions::Partition;
use dyson_core::sde::{parse_statistics, Scheme, Statistic};
use dyson_core::stats::DEFAULT_WORKERS;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Every tunable of a run. Flags and the optional JSON config file share
/// this shape; flags win field by field.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Jack / kernel parameter θ (= β/2)
    #[arg(long, global = true, conflicts_with = "beta")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Inverse temperature β (= 2θ)
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Number of variables / particles at the lower level
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Partition, e.g. 2,1
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<String>,
    /// Time horizon
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Time step (default 1e-3·t)
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Monte Carlo paths / samples
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    /// Random seed; DYSON_SEED is used when absent
    #[arg(long, global = true, env = "DYSON_SEED")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Random stream count (results depend on it)
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Upper-level points, e.g. 0,1,3
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top: Option<String>,
    /// Initial state of a simulation, e.g. -1,0,1
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<String>,
    /// Time-stepping scheme: implicit, euler_sorted, euler_reflect
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    /// Statistics, e.g. p1,p2,p1sq,jack:2
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<String>,
    /// |z| bound for Monte Carlo checks
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_tol: Option<f64>,
    /// Scaled absolute tolerance for exact checks
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Output format
    #[arg(long, global = true, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    /// Write output here instead of stdout
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

macro_rules! merge_fields {
    ($top:ident, $under:ident; $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($under.$f)),* }
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// `self` over `under`. θ and β are one setting: if either is given
    /// here, neither is taken from `under`.
    pub fn merge_over(self, mut under: RunConfig) -> RunConfig {
        if self.theta.is_some() || self.beta.is_some() {
            under.theta = None;
            under.beta = None;
        }
        let top = self;
        merge_fields!(top, under; theta, beta, k, kappa, t, dt, paths, seed, workers, top, x0, scheme, stats, z_tol, tol, format, output)
    }

    /// θ from whichever of θ/β was given.
    pub fn theta(&self) -> CliResult<f64> {
        match (self.theta, self.beta) {
            (Some(_), Some(_)) => Err(CliError::Usage("give exactly one of --theta and --beta".into())),
            (Some(t), None) => Ok(t),
            (None, Some(b)) => Ok(b / 2.0),
            (None, None) => Err(CliError::Usage("missing --theta or --beta".into())),
        }
    }

    pub fn beta(&self) -> CliResult<f64> {
        self.theta().map(|t| 2.0 * t)
    }

    pub fn seed(&self) -> CliResult<u64> {
        self.seed.ok_or_else(|| CliError::Usage("missing --seed (or DYSON_SEED); stochastic runs need an explicit seed".into()))
    }

    pub fn k(&self) -> CliResult<usize> {
        self.k.ok_or_else(|| CliError::Usage("missing --k".into()))
    }

    pub fn kappa(&self) -> CliResult<Partition> {
        let s = self.kappa.as_deref().ok_or_else(|| CliError::Usage("missing --kappa".into()))?;
        s.parse().map_err(|e| CliError::Usage(format!("--kappa: {e}")))
    }

    pub fn t(&self) -> CliResult<f64> {
        self.t.ok_or_else(|| CliError::Usage("missing --t".into()))
    }

    pub fn top(&self) -> CliResult<OrderedVector> {
        parse_points("--top", self.top.as_deref())
    }

    pub fn x0(&self) -> CliResult<OrderedVector> {
        parse_points("--x0", self.x0.as_deref())
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(DEFAULT_WORKERS)
    }

    pub fn scheme(&self) -> CliResult<Scheme> {
        match &self.scheme {
            None => Ok(Scheme::Implicit),
            Some(s) => s.parse().map_err(|e| CliError::Usage(format!("--scheme: {e}"))),
        }
    }

    pub fn stats(&self, default: Vec<Statistic>) -> CliResult<Vec<Statistic>> {
        match &self.stats {
            None => Ok(default),
            Some(s) => parse_statistics(s).map_err(|e| CliError::Usage(format!("--stats: {e}"))),
        }
    }

    pub fn z_tol(&self) -> f64 {
        self.z_tol.unwrap_or(3.0)
    }

    pub fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }
}

fn parse_points(flag: &str, s: Option<&str>) -> CliResult<OrderedVector> {
    let s = s.ok_or_else(|| CliError::Usage(format!("missing {flag}")))?;
    let raw: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("{flag}: {e}")))?;
    OrderedVector::from_unsorted(raw).map_err(|e| CliError::Usage(format!("{flag}: {e}")))
}
