//! Noise calibration for (α, β)-differential privacy and budget composition.
//!
//! Two release mechanisms are supported:
//!
//! * **Laplace**: `Z = g(X) + b·ξ`, `ξ ~ Laplace(1)`, private as soon as
//!   `b ≥ Δ / (α − log(1 − β))`. Works for every `β ∈ [0, 1]`, including pure
//!   DP at `β = 0`.
//! * **Gaussian process**: `Z = g(X) + σ·Ξ`, private when
//!   `σ ≥ (Δ/α)·√(2 log(1/(2β)) + 2α)` and `β ∈ (0, 1/2)`.
//!
//! All scales are set at equality, the smallest admissible value.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    #[serde(rename = "laplace")]
    Laplace,
    #[serde(rename = "gp")]
    GaussianProcess,
}

impl Mechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Laplace => "laplace",
            Mechanism::GaussianProcess => "gp",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplace" => Ok(Mechanism::Laplace),
            "gp" | "gaussian_process" => Ok(Mechanism::GaussianProcess),
            other => Err(Error::invalid(format!(
                "unknown mechanism `{other}` (expected laplace | gp)"
            ))),
        }
    }
}

#[derive(Deserialize)]
struct BudgetRepr {
    alpha: f64,
    beta: f64,
    #[serde(default = "one")]
    n_releases: u64,
}

fn one() -> u64 {
    1
}

/// A total budget `(α, β)` split evenly across `n_releases` conditionally
/// independent releases, each run at `(α/n_releases, β/n_releases)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BudgetRepr")]
pub struct PrivacyBudget {
    alpha: f64,
    beta: f64,
    n_releases: u64,
    alpha_eff: f64,
    beta_eff: f64,
}

impl TryFrom<BudgetRepr> for PrivacyBudget {
    type Error = Error;

    fn try_from(r: BudgetRepr) -> Result<Self> {
        PrivacyBudget::new(r.alpha, r.beta)?.compose(r.n_releases)
    }
}

impl PrivacyBudget {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::BudgetOutOfRange(format!("alpha must be > 0, got {alpha}")));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::BudgetOutOfRange(format!("beta must lie in [0, 1], got {beta}")));
        }
        Ok(PrivacyBudget {
            alpha,
            beta,
            n_releases: 1,
            alpha_eff: alpha,
            beta_eff: beta,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n_releases(&self) -> u64 {
        self.n_releases
    }

    /// Per-release `α′ = α / n_releases`.
    pub fn alpha_eff(&self) -> f64 {
        self.alpha_eff
    }

    /// Per-release `β′ = β / n_releases`.
    pub fn beta_eff(&self) -> f64 {
        self.beta_eff
    }

    /// Splits the budget over `k` further releases. By the composition lemma
    /// the `n_releases · k` releases jointly satisfy `(α, β)`-DP.
    pub fn compose(&self, k: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("cannot compose over zero releases"));
        }
        let n = self
            .n_releases
            .checked_mul(k)
            .ok_or_else(|| Error::invalid("release count overflow"))?;
        Ok(PrivacyBudget {
            alpha: self.alpha,
            beta: self.beta,
            n_releases: n,
            alpha_eff: self.alpha / n as f64,
            beta_eff: self.beta / n as f64,
        })
    }

    /// Fails unless `β′ ∈ (0, 1/2)`, the range where Gaussian noise is private.
    pub fn check_gaussian(&self) -> Result<()> {
        if self.beta_eff > 0.0 && self.beta_eff < 0.5 {
            Ok(())
        } else {
            Err(Error::BudgetOutOfRange(format!(
                "Gaussian mechanism requires per-release beta in (0, 1/2), got {}",
                self.beta_eff
            )))
        }
    }
}

/// A calibrated noise level. `scale` is `b` (Laplace) or `σ` (Gaussian
/// process). `c_ab` is `h` times the per-point noise standard deviation, so the
/// noise at bandwidth `h` has standard deviation `c_ab / h`; it does not depend
/// on `h` once the sensitivity scales as `1/h`. The bandwidth-free
/// constructors [`laplace_scale`] and [`gaussian_scale`] take `h = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScale {
    pub mechanism: Mechanism,
    pub scale: f64,
    pub c_ab: f64,
}

impl NoiseScale {
    /// Standard deviation of the added noise at one evaluation point.
    pub fn point_std(&self) -> f64 {
        match self.mechanism {
            Mechanism::Laplace => std::f64::consts::SQRT_2 * self.scale,
            Mechanism::GaussianProcess => self.scale,
        }
    }
}

fn check_sensitivity(delta: f64) -> Result<()> {
    if delta.is_finite() && delta >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("sensitivity must be finite and >= 0, got {delta}")))
    }
}

fn laplace_denominator(budget: &PrivacyBudget) -> f64 {
    // β′ = 1 gives +∞ and hence b = 0: the value may be published as is.
    budget.alpha_eff() - (1.0 - budget.beta_eff()).ln()
}

fn gaussian_factor(budget: &PrivacyBudget) -> f64 {
    let a = budget.alpha_eff();
    (2.0 * (1.0 / (2.0 * budget.beta_eff())).ln() + 2.0 * a).sqrt() / a
}

/// Smallest Laplace scale `b = Δ/(α′ − log(1 − β′))`.
pub fn laplace_scale(delta: f64, budget: &PrivacyBudget) -> Result<NoiseScale> {
    check_sensitivity(delta)?;
    let scale = delta / laplace_denominator(budget);
    Ok(NoiseScale {
        mechanism: Mechanism::Laplace,
        scale,
        c_ab: std::f64::consts::SQRT_2 * scale,
    })
}

/// Smallest Gaussian scale `σ = (Δ/α′)·√(2 log(1/(2β′)) + 2α′)`.
pub fn gaussian_scale(delta: f64, budget: &PrivacyBudget) -> Result<NoiseScale> {
    check_sensitivity(delta)?;
    budget.check_gaussian()?;
    let scale = delta * gaussian_factor(budget);
    Ok(NoiseScale {
        mechanism: Mechanism::GaussianProcess,
        scale,
        c_ab: scale,
    })
}

/// Noise for releasing `K_h(X − ·)` with the given kernel and mechanism:
/// Laplace uses the pointwise sensitivity `2‖K‖∞/h`, the Gaussian process the
/// RKHS sensitivity `Δ′`.
pub fn calibrate(
    spec: &KernelSpec,
    h: f64,
    budget: &PrivacyBudget,
    mechanism: Mechanism,
) -> Result<NoiseScale> {
    let mut noise = match mechanism {
        Mechanism::Laplace => laplace_scale(spec.pointwise_sensitivity(h)?, budget)?,
        Mechanism::GaussianProcess => {
            budget.check_gaussian()?;
            gaussian_scale(spec.rkhs_sensitivity(h)?, budget)?
        }
    };
    noise.c_ab = noise.point_std() * h;
    Ok(noise)
}

/// The bandwidth-free constant `C_{α′β′}`:
/// `C^𝓛 = 2√2‖K‖∞/(α′ − log(1 − β′))` or `C^GP = (Δ′h)·√(2 log(1/(2β′)) + 2α′)/α′`.
pub fn noise_coefficient(spec: &KernelSpec, budget: &PrivacyBudget, mechanism: Mechanism) -> Result<f64> {
    match mechanism {
        Mechanism::Laplace => Ok(2.0 * std::f64::consts::SQRT_2 * spec.sup_norm / laplace_denominator(budget)),
        Mechanism::GaussianProcess => {
            budget.check_gaussian()?;
            Ok(spec.rkhs_sensitivity(1.0)? * gaussian_factor(budget))
        }
    }
}

/// `1 ≤ exp(α′ − Δ/b) + β′`, the condition the Laplace scale must satisfy.
pub fn laplace_condition_holds(b: f64, delta: f64, budget: &PrivacyBudget) -> bool {
    if delta == 0.0 {
        return b >= 0.0;
    }
    if b <= 0.0 {
        return budget.beta_eff() >= 1.0;
    }
    // Compared in log space to avoid cancellation.
    let lhs = budget.alpha_eff() - delta / b;
    lhs >= (1.0 - budget.beta_eff()).ln() - 1e-12 * lhs.abs().max(1.0)
}

/// `σ ≥ (Δ/α′)·√(2 log(1/(2β′)) + 2α′)`.
pub fn gaussian_condition_holds(sigma: f64, delta: f64, budget: &PrivacyBudget) -> bool {
    if budget.check_gaussian().is_err() {
        return false;
    }
    let bound = delta * gaussian_factor(budget);
    sigma >= bound * (1.0 - 1e-12)
}

/// One draw from the standard Laplace distribution (density `e^{−|x|}/2`).
pub fn sample_laplace<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Inverse CDF on u ∈ [−1/2, 1/2).
    let u: f64 = rng.random::<f64>() - 0.5;
    let tail = 1.0 - 2.0 * u.abs();
    if tail <= 0.0 {
        return 0.0;
    }
    -u.signum() * tail.ln()
}

/// `value + b·ξ` with `b` calibrated to the pointwise sensitivity of `K_h`.
/// `value` is the caller's `K_h(X_i − t)`.
pub fn release_scalar_laplace<R: Rng + ?Sized>(
    value: f64,
    spec: &KernelSpec,
    h: f64,
    budget: &PrivacyBudget,
    rng: &mut R,
) -> Result<f64> {
    let noise = laplace_scale(spec.pointwise_sensitivity(h)?, budget)?;
    Ok(value + noise.scale * sample_laplace(rng))
}
