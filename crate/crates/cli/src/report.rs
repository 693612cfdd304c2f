//! Verification reports. A check's verdict is computed from its value and
//! criterion when it is built; there is no way to set it by hand.

use serde::Serialize;
use serde_json::Value;

use dyson_core::stats::Estimate;

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Mathematical statement each check exercises. Check names map to exactly
/// one of these.
pub mod anchors {
    pub const SEMIGROUP: &str = "semigroup intertwining L P_k(t) = P_{k+1}(t) L";
    pub const GENERATOR: &str = "generator intertwining L A_k = A_{k+1} L";
    pub const GENERATOR_OU: &str = "generator intertwining for the Ornstein-Uhlenbeck generator A - B3/2";
    pub const COMMUTATOR: &str = "commutator identity A = B1 B2 - B2 B1";
    pub const NORM: &str = "Jack normalization J_kappa(1_k)";
    pub const KERNEL_MOMENT: &str = "Dixon-Anderson eigenrelation L J_kappa = c_kappa J_kappa";
    pub const KERNEL_LAW: &str = "Dixon-Anderson density (k = 1: Beta(theta, theta))";
    pub const MC_DIAGRAM: &str = "intertwining diagram, both Monte Carlo pipelines";
    pub const CORNERS: &str = "corner spectra of matrix Brownian motion at beta = 1";
    pub const INTERLACING: &str = "Cauchy interlacing of corner eigenvalues";
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    /// `score = |value − reference| / scale ≤ bound`.
    ScaledError { scale: f64, bound: f64 },
    /// `score = |value − reference| / |reference| ≤ bound`.
    Relative { bound: f64 },
    /// `score = (value − reference)/SE`, `|score| ≤ bound`.
    ZScore { std_error: f64, bound: f64 },
    /// Two independent estimates; `reference` is the second mean.
    TwoSample { std_error: f64, reference_std_error: f64, bound: f64 },
    /// `score = value ≤ bound` (counts, statistics).
    AtMost { bound: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    name: String,
    anchor: &'static str,
    value: f64,
    reference: f64,
    criterion: Criterion,
    score: f64,
    pass: bool,
}

impl Check {
    fn build(name: impl Into<String>, anchor: &'static str, value: f64, reference: f64, criterion: Criterion) -> Check {
        let (score, pass) = match &criterion {
            Criterion::ScaledError { scale, bound } => {
                let s = (value - reference).abs() / scale;
                (s, s <= *bound)
            }
            Criterion::Relative { bound } => {
                let s = (value - reference).abs() / reference.abs().max(f64::MIN_POSITIVE);
                (s, s <= *bound)
            }
            Criterion::ZScore { std_error, bound } => {
                let z = Estimate { mean: value, std_error: *std_error, n: 0 }.z_against(reference);
                (z, z.abs() <= *bound)
            }
            Criterion::TwoSample { std_error, reference_std_error, bound } => {
                let a = Estimate { mean: value, std_error: *std_error, n: 0 };
                let b = Estimate { mean: reference, std_error: *reference_std_error, n: 0 };
                let z = a.z_between(&b);
                (z, z.abs() <= *bound)
            }
            Criterion::AtMost { bound } => (value, value <= *bound),
        };
        Check { name: name.into(), anchor, value, reference, criterion, score, pass }
    }

    /// Exact-path error already measured against its own scale.
    pub fn scaled_error(name: impl Into<String>, anchor: &'static str, error: f64, scale: f64, bound: f64) -> Check {
        Check::build(name, anchor, error, 0.0, Criterion::ScaledError { scale, bound })
    }

    pub fn relative(name: impl Into<String>, anchor: &'static str, value: f64, reference: f64, bound: f64) -> Check {
        Check::build(name, anchor, value, reference, Criterion::Relative { bound })
    }

    pub fn z(name: impl Into<String>, anchor: &'static str, est: &Estimate, reference: f64, bound: f64) -> Check {
        Check::build(name, anchor, est.mean, reference, Criterion::ZScore { std_error: est.std_error, bound })
    }

    pub fn two_sample(name: impl Into<String>, anchor: &'static str, a: &Estimate, b: &Estimate, bound: f64) -> Check {
        Check::build(
            name,
            anchor,
            a.mean,
            b.mean,
            Criterion::TwoSample { std_error: a.std_error, reference_std_error: b.std_error, bound },
        )
    }

    pub fn at_most(name: impl Into<String>, anchor: &'static str, value: f64, bound: f64) -> Check {
        Check::build(name, anchor, value, bound, Criterion::AtMost { bound })
    }

    #[cfg(test)]
    pub fn passed(&self) -> bool {
        self.pass
    }

    fn bound(&self) -> f64 {
        match &self.criterion {
            Criterion::ScaledError { bound, .. }
            | Criterion::Relative { bound }
            | Criterion::ZScore { bound, .. }
            | Criterion::TwoSample { bound, .. }
            | Criterion::AtMost { bound } => *bound,
        }
    }

    fn kind(&self) -> &'static str {
        match &self.criterion {
            Criterion::ScaledError { .. } => "scaled_error",
            Criterion::Relative { .. } => "relative",
            Criterion::ZScore { .. } => "z_score",
            Criterion::TwoSample { .. } => "two_sample",
            Criterion::AtMost { .. } => "at_most",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub schema: u32,
    pub command: String,
    pub config: RunConfig,
    /// Unix seconds; only recorded on request so that reports stay
    /// byte-identical across reruns.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
    /// Free-form facts about the run (conventions, schemes, grids).
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    pub notes: serde_json::Map<String, Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub metadata: Metadata,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Report {
    pub fn new(command: &str, config: &RunConfig) -> Report {
        Report {
            metadata: Metadata {
                tool: "dyson",
                version: env!("CARGO_PKG_VERSION"),
                schema: SCHEMA_VERSION,
                command: command.to_string(),
                config: config.clone(),
                timestamp: None,
                notes: Default::default(),
            },
            checks: Vec::new(),
            passed: true,
        }
    }

    pub fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.metadata.notes.insert(key.to_string(), value.into());
    }

    pub fn push(&mut self, check: Check) {
        self.passed &= check.pass;
        self.checks.push(check);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut t = Table::new(&["name", "anchor", "kind", "value", "reference", "score", "bound", "pass"]);
        for c in &self.checks {
            t.row(vec![
                c.name.clone(),
                c.anchor.to_string(),
                c.kind().to_string(),
                num(c.value),
                num(c.reference),
                num(c.score),
                num(c.bound()),
                c.pass.to_string(),
            ]);
        }
        t.to_csv()
    }
}

/// Shortest round-trip decimal; stable across runs.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Plain CSV table for sample dumps and listings.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Table {
        Table { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in std::iter::once(&self.header).chain(&self.rows) {
            let cells: Vec<String> = line.iter().map(|c| quote(c)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn quote(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}
