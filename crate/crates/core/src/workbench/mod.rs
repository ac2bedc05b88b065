//! Experiment plumbing: datasets, verification suites and JSON reports.

mod data;
mod suite;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

use crate::optim::{SolverConfig, Weights};
use crate::responsibility::{FeasibilityVerdict, RecoveryResult};
use crate::risk::RiskError;
use crate::safe_learner::{AdversaryResult, MinimaxResult};

pub use data::{generate_synthetic, load_csv, sample_outside_margin, write_csv, SyntheticSpec};
pub use suite::{instance_rng, run_suite};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error("csv line {line}: {msg}")]
    Csv { line: u64, msg: String },
    #[error("io error: {0}")]
    Io(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] RiskError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Recover,
    Adversary,
    Minimax,
    Conditions,
    All,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Recover => "recover",
            Suite::Adversary => "adversary",
            Suite::Minimax => "minimax",
            Suite::Conditions => "conditions",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = WorkbenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "recover" => Suite::Recover,
            "adversary" => Suite::Adversary,
            "minimax" => Suite::Minimax,
            "conditions" => Suite::Conditions,
            "all" => Suite::All,
            _ => return Err(WorkbenchError::Config(format!("unknown suite `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub loss: String,
    pub lambda: f64,
    pub source: DataSource,
    pub seed: u64,
    pub suite: Suite,
    pub output: Option<PathBuf>,
    pub solver: SolverConfig,
    /// Number of synthetic instances; a CSV source is a single instance.
    pub instances: usize,
}

/// The result each check instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// Responsibilities computed per object reproduce the supervised fit.
    RecoveryOfSupervisedSolution,
    /// Decreasing losses: every other classifier loses under some hard labeling.
    HardLabelImpossibility,
    /// Decreasing losses: the supervised solution is the only safe one.
    SoftLabelImpossibility,
    /// Increasing-tail losses improve when all unlabeled points are outside the margin.
    OutsideMarginImprovement,
    /// Quadratic loss with `d >= U`: the unique responsibility `(1 + a) / 2`.
    QuadraticUniqueResponsibility,
    /// Quadratic loss with `d <= U`: `||a||_2 > sqrt(U)` forces improvement.
    QuadraticNormBound,
    /// The worst-case difference of the pessimistic learner is never positive.
    PessimisticValueCeiling,
    /// Minimax and maximin values coincide.
    MinimaxMaximinEquality,
    /// Soft and hard worst cases agree because the difference is affine in `q`.
    VertexAttainment,
    /// Improvement happens exactly when `w_sup` is not attainable.
    ConstraintSetCharacterization,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub property: String,
    pub anchor: Anchor,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub suite: Suite,
    pub instance: usize,
    pub variant: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_sup: Option<Weights>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery: Option<RecoveryResult>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub verdicts: Vec<FeasibilityVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adversary: Option<AdversaryResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimax: Option<MinimaxResult>,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Record {
    pub(crate) fn new(suite: Suite, instance: usize, variant: &str) -> Self {
        Self {
            suite,
            instance,
            variant: variant.to_string(),
            w_sup: None,
            recovery: None,
            verdicts: Vec::new(),
            adversary: None,
            minimax: None,
            checks: Vec::new(),
            notes: Vec::new(),
            error: None,
        }
    }

    pub(crate) fn check(&mut self, property: &str, anchor: Anchor, passed: bool, detail: String) {
        self.checks.push(Check {
            property: property.to_string(),
            anchor,
            passed,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    /// Seconds since the Unix epoch; ignored by [`Report::canonical_json`].
    pub generated_at: u64,
    pub config: ExperimentConfig,
    pub records: Vec<Record>,
    pub passed: bool,
}

impl Report {
    pub(crate) fn new(config: ExperimentConfig, records: Vec<Record>) -> Self {
        let passed = records.iter().all(Record::passed);
        let generated_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Self {
            schema_version: SCHEMA_VERSION,
            generated_at,
            config,
            records,
            passed,
        }
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = (&Record, &Check)> {
        self.records
            .iter()
            .flat_map(|r| r.checks.iter().filter(|c| !c.passed).map(move |c| (r, c)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON without the timestamp, for reproducibility comparisons.
    pub fn canonical_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("generated_at");
        }
        serde_json::to_string_pretty(&value).expect("report serializes")
    }
}
