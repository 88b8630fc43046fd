//! Locally differentially private kernel density estimation.
//!
//! Each data owner releases a noisy copy of its kernel curve `K_h(X_i − ·)`,
//! either with per-point Laplace noise or with a Gaussian process whose
//! covariance is the kernel itself. The analyst averages the releases and
//! picks a bandwidth with a Lepski-type rule that accounts for the privacy
//! noise.

pub mod error;
pub mod estimator;
pub mod gp;
pub mod kernels;
pub mod lepski;
pub mod privacy;
pub mod quadrature;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use estimator::{
    variance_bound, variance_bound_with_coefficient, BandwidthNoise, DatasetMetadata, LaplaceReleaser,
    PrivateCurve, PrivateDataset, Releaser,
};
pub use gp::{build_gram, sample_path, GpReleaser, GramMatrix};
pub use kernels::{KernelName, KernelSpec};
pub use lepski::{build_grid, select_adaptive, select_oracle, BandwidthGrid, LepskiConfig, SelectionTrace, Thresholds};
pub use privacy::{calibrate, noise_coefficient, Mechanism, NoiseScale, PrivacyBudget};
pub use simulate::{audit_privacy, run_mse, AuditConfig, AuditReport, BandwidthRule, Density, MseConfig, MseReport, Verdict};

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
