//! Simulation harness: test densities, Monte Carlo risk and privacy audits.

pub mod audit;
pub mod density;
pub mod mse;

pub use audit::{audit_privacy, AuditConfig, AuditReport, Verdict};
pub use density::{smoothed_target, smoothed_target_spatial, Density};
pub use mse::{fit_log_log, fit_rate, run_mse, run_sweep, BandwidthRule, MseConfig, MseReport, MseRow, RateFit};
