//! Command-line arguments. Every argument struct is serializable so the
//! resolved configuration can be embedded in the run report.

use std::path::PathBuf;
use std::str::FromStr;

use ckb_core::alignment::{Reduction, Variant};
use ckb_core::{Factorization, DEFAULT_EPSILON};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "ckb",
    version,
    about = "Conditional kernel Bures discrepancy tools"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute one discrepancy between two CSV datasets.
    Metric(MetricArgs),
    /// Check the kernel estimator against the explicit-covariance oracle.
    Verify(VerifyArgs),
    /// Median estimate on same-distribution pairs across sample sizes.
    Converge(ConvergeArgs),
    /// Train the shallow conditional alignment model.
    Adapt(AdaptArgs),
    /// Write a synthetic source/target pair as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricArg {
    Bures,
    KernelBures,
    Ckb,
    Mmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelArg {
    Gaussian,
    Linear,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactorizationArg {
    #[default]
    Evd,
    Cholesky,
    LowRank,
}

impl From<FactorizationArg> for Factorization {
    fn from(f: FactorizationArg) -> Self {
        match f {
            FactorizationArg::Evd => Factorization::Evd,
            FactorizationArg::Cholesky => Factorization::Cholesky,
            FactorizationArg::LowRank => Factorization::LowRank,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    Ckb,
    #[value(name = "ckb+mmd")]
    #[serde(rename = "ckb+mmd")]
    CkbMmd,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Ckb => Variant::Ckb,
            VariantArg::CkbMmd => Variant::CkbPlusMmd,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionArg {
    #[default]
    Mean,
    Sum,
}

impl From<ReductionArg> for Reduction {
    fn from(r: ReductionArg) -> Self {
        match r {
            ReductionArg::Mean => Reduction::Mean,
            ReductionArg::Sum => Reduction::Sum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkArg {
    /// Three classes on a circle, 30 degree rotation plus unit translation.
    Default,
    /// Two antipodal classes rotated by 180 degrees.
    Swap,
    /// Identical source and target conditionals.
    NoShift,
}

/// Deliberate defects for checking that verification can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Add the cross term instead of subtracting it.
    CrossSign,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricArg::Ckb)]
    pub metric: MetricArg,
    #[arg(long, value_enum, default_value_t = KernelArg::Gaussian)]
    pub kernel_x: KernelArg,
    #[arg(long, value_enum, default_value_t = KernelArg::Gaussian)]
    pub kernel_y: KernelArg,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Fixed feature bandwidth; adaptive per matrix when omitted.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    /// Fixed label bandwidth; adaptive per matrix when omitted.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2_y: Option<f64>,
    #[arg(long, value_enum, default_value_t)]
    pub factorization: FactorizationArg,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Comma-separated list parsed from one flag value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: std::fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let items = s
            .split(',')
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<Vec<T>, String>>()?;
        if items.is_empty() {
            return Err("empty list".into());
        }
        Ok(List(items))
    }
}

impl<T: std::fmt::Display> std::fmt::Display for List<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyArgs {
    /// Number of random instances.
    #[arg(long, default_value_t = 50)]
    pub seeds: u64,
    /// First instance seed; instance `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "1,2,5,10")]
    pub dims: List<usize>,
    #[arg(long, default_value = "10,25,50,100")]
    pub sizes: List<usize>,
    #[arg(long, default_value = "2,3,5")]
    pub classes: List<usize>,
    #[arg(long, default_value = "0.001,0.01,0.1")]
    pub epsilons: List<f64>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, value_enum, hide = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<Fault>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// `power:<exponent>` gives `eps_n = n^exponent`; `const:<value>` fixes it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsilonSchedule {
    Power { exponent: f64 },
    Const { value: f64 },
}

impl EpsilonSchedule {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            EpsilonSchedule::Power { exponent } => (n as f64).powf(exponent),
            EpsilonSchedule::Const { value } => value,
        }
    }
}

impl FromStr for EpsilonSchedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| format!("expected power:<exponent> or const:<value>, got `{s}`"))?;
        let v: f64 = value.parse().map_err(|e| format!("`{value}`: {e}"))?;
        match kind {
            "power" => Ok(EpsilonSchedule::Power { exponent: v }),
            "const" if v > 0.0 && v.is_finite() => Ok(EpsilonSchedule::Const { value: v }),
            "const" => Err(format!("constant epsilon must be > 0, got {v}")),
            other => Err(format!("unknown schedule `{other}`")),
        }
    }
}

impl std::fmt::Display for EpsilonSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EpsilonSchedule::Power { exponent } => write!(f, "power:{exponent}"),
            EpsilonSchedule::Const { value } => write!(f, "const:{value}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeArgs {
    #[arg(long, default_value = "32,64,128,256,512,1024,2048")]
    pub sizes: List<usize>,
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "power:-0.25")]
    pub epsilon_schedule: EpsilonSchedule,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Factor of the conditioning matrix; the value does not depend on it.
    #[arg(long, value_enum, default_value_t = FactorizationArg::LowRank)]
    pub factorization: FactorizationArg,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// CSV of per-size medians.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptArgs {
    /// Labeled source CSV; the built-in benchmark is used when omitted.
    #[arg(long, requires = "target")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
    /// Target CSV; a label column, if present, is used only for evaluation.
    #[arg(long, requires = "source")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = BenchmarkArg::Default, conflicts_with = "source")]
    pub benchmark: BenchmarkArg,
    #[arg(long, value_enum, default_value_t = VariantArg::Ckb)]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 0.5)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda2: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5)]
    pub warmup_epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub learning_rate: f64,
    #[arg(long, value_enum, default_value_t)]
    pub reduction: ReductionArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also train with lambda2 = 0 from the same initialization.
    #[arg(long)]
    pub baseline: bool,
    /// CSV of per-step loss terms.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curves: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value_t = BenchmarkArg::Default)]
    pub benchmark: BenchmarkArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub samples_per_class: usize,
    /// Directory for `source.csv` and `target.csv`; defaults to `$CKB_OUT_DIR` or `.`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}
