//! Versioned JSON run reports.

use std::path::{Path, PathBuf};

use ckb_core::alignment::{AlignmentConfig, LossRecord, TrainReport};
use ckb_core::DiscrepancyReport;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{AdaptArgs, ConvergeArgs, GenerateArgs, MetricArgs, VerifyArgs};
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the default directory for reports.
pub const OUT_DIR_ENV: &str = "CKB_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema_version: u32,
    pub artifact_version: String,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub wall_clock_ms: f64,
    pub config: Config,
    pub result: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Config {
    Metric(MetricArgs),
    Verify(VerifyArgs),
    Converge(ConvergeArgs),
    Adapt(Box<AdaptConfig>),
    Generate(GenerateArgs),
}

/// Command-line arguments plus the trainer configuration they resolve to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptConfig {
    pub args: AdaptArgs,
    pub trainer: AlignmentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Outcome {
    Metric(DiscrepancyReport),
    Verify(VerifyOutcome),
    Converge(ConvergeOutcome),
    Adapt(Box<AdaptOutcome>),
    Generate(GenerateOutcome),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyInstance {
    pub seed: u64,
    pub dim: usize,
    pub classes: usize,
    pub n: usize,
    pub m: usize,
    pub epsilon: f64,
    pub kernel_value: f64,
    pub primal_value: f64,
    /// `|kernel - primal| / max(1, |primal|)`
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyOutcome {
    pub tolerance: f64,
    pub max_deviation: f64,
    pub worst_seed: u64,
    pub passed: bool,
    pub instances: Vec<VerifyInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeRow {
    pub size: usize,
    pub epsilon: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeOutcome {
    pub rows: Vec<ConvergeRow>,
    /// Least-squares slope of `ln(median)` against `ln(size)`.
    pub slope: f64,
    /// Number of consecutive sizes where the median did not decrease.
    pub inversions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptOutcome {
    pub train: TrainReport,
    pub history: Vec<LossRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<TrainReport>,
    /// Target accuracy after training minus the baseline's, in points.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_points: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateOutcome {
    pub source: PathBuf,
    pub target: PathBuf,
    pub n_source: usize,
    pub n_target: usize,
}

impl RunReport {
    pub fn new(
        command: &str,
        seed: Option<u64>,
        wall_clock_ms: f64,
        config: Config,
        result: Outcome,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            wall_clock_ms,
            config,
            result,
        }
    }

    /// Serializes after checking that every number is finite. Absent
    /// optional fields are omitted, so any `null` marks a NaN or infinity.
    pub fn to_json(&self) -> Result<String, CliError> {
        let value = serde_json::to_value(self).map_err(|e| CliError::Internal(e.to_string()))?;
        if let Some(path) = find_null(&value, "$") {
            return Err(CliError::Numerical(format!(
                "non-finite value in report at {path}"
            )));
        }
        serde_json::to_string_pretty(&value).map_err(|e| CliError::Internal(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, CliError> {
        let report: RunReport =
            serde_json::from_str(s).map_err(|e| CliError::Input(format!("report: {e}")))?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(CliError::Input(format!(
                "unsupported report schema version {} (expected {SCHEMA_VERSION})",
                report.schema_version
            )));
        }
        Ok(report)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let json = self.to_json()?;
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        std::fs::write(path, json + "\n").map_err(|e| io_error(path, e))
    }
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn find_null(v: &Value, path: &str) -> Option<String> {
    match v {
        Value::Null => Some(path.to_string()),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .find_map(|(i, x)| find_null(x, &format!("{path}[{i}]"))),
        Value::Object(map) => map
            .iter()
            .find_map(|(k, x)| find_null(x, &format!("{path}.{k}"))),
        _ => None,
    }
}

/// Where a report goes when `--out` is absent: `$CKB_OUT_DIR/<command>.json`
/// if the variable is set, otherwise nowhere (stdout only).
pub fn default_report_path(command: &str) -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV).map(|dir| PathBuf::from(dir).join(format!("{command}.json")))
}
