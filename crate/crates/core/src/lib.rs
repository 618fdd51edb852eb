//! Conditional kernel Bures (CKB) discrepancy between labeled domains.
//!
//! The crate provides Gram-matrix construction with adaptive Gaussian
//! bandwidths, the CKB estimator and its marginal/MMD relatives, an
//! explicit-covariance oracle for linear kernels, a shallow conditional
//! alignment trainer and a synthetic conditional-shift generator.

pub mod alignment;
pub mod datagen;
pub mod discrepancy;
pub mod error;
pub mod kernels;
mod linalg;
pub mod oracle;

pub use datagen::{DomainPair, LabeledDataset, ShiftConfig};
pub use discrepancy::{DiscrepancyReport, Factorization, MetricKind, DEFAULT_EPSILON};
pub use error::{Error, Result};
pub use kernels::{Bandwidths, GramBundle, Kernel, KernelSpec};
