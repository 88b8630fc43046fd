//! Kernel functions with certified metadata.
//!
//! Every kernel plays two roles. As a density-estimation kernel `K(u)` it is
//! normalized so that `∫K = 1`. Kernels for which `(x, y) ↦ K(x − y)` is
//! positive definite also serve as the covariance of the masking Gaussian
//! process; there the *covariance form* `k(u)` with `k(0) = 1` is used, and
//! `K = c · k` for a kernel-specific normalizer `c`. The two forms are exposed
//! through separate accessors ([`KernelSpec::eval`] and
//! [`KernelSpec::covariance`]) so the factor `c` never gets lost.
//!
//! RKHS sensitivity. The released function `K_h(x − ·) = (c/h) k((x − ·)/h)`
//! lives in the RKHS of `k((· − ·)/h)`, so
//!
//! ```text
//! ‖K_h(x − ·) − K_h(x′ − ·)‖²_𝔥 = (c²/h²) · (2k(0) − 2k((x − x′)/h))
//!                               ≤ (c²/h²) · 2 (k(0) − k_floor),
//! ```
//!
//! where `k_floor` is a lower bound on `k`. This gives `Δ′ = coeff / h` with
//! `coeff = c · √(2 (1 − k_floor))`:
//!
//! | kernel      | c        | k_floor | coeff   |
//! |-------------|----------|---------|---------|
//! | gaussian    | 1/√(2π)  | 0       | 1/√π    |
//! | sinc        | 1        | −0.3    | √2.6    |
//! | triangular  | 1        | 0       | √2      |
//! | exponential | 1/2      | 0       | 1/√2    |
//!
//! The triangular and exponential constants are derived here; the sinc floor
//! −0.3 is a rounded bound on `min sinc ≈ −0.2172`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Location of the global minimum of `sin(πu)/(πu)` on `u > 0`.
pub const SINC_ARGMIN: f64 = 1.430_296_653_124_202_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    Sinc,
    Gaussian,
    Triangular,
    Exponential,
    Rectangular,
    Epanechnikov,
    Biweight,
}

impl KernelName {
    pub const ALL: [KernelName; 7] = [
        KernelName::Sinc,
        KernelName::Gaussian,
        KernelName::Triangular,
        KernelName::Exponential,
        KernelName::Rectangular,
        KernelName::Epanechnikov,
        KernelName::Biweight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelName::Sinc => "sinc",
            KernelName::Gaussian => "gaussian",
            KernelName::Triangular => "triangular",
            KernelName::Exponential => "exponential",
            KernelName::Rectangular => "rectangular",
            KernelName::Epanechnikov => "epanechnikov",
            KernelName::Biweight => "biweight",
        }
    }

    pub fn spec(self) -> KernelSpec {
        KernelSpec::new(self)
    }
}

impl fmt::Display for KernelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelName::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown kernel `{s}`")))
    }
}

/// A kernel together with its norms, positive-definiteness status and RKHS
/// sensitivity coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub name: KernelName,
    /// `sup_u |K(u)|`.
    pub sup_norm: f64,
    /// `∫ K(u)² du`.
    pub l2_norm_sq: f64,
    pub is_positive_definite: bool,
    /// `c` with `Δ′ = c / h`; present exactly for positive definite kernels.
    pub rkhs_sensitivity_coeff: Option<f64>,
}

fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        // sin(πu)/(πu) = 1 − (πu)²/6 + O(u⁴)
        1.0 - (PI * u).powi(2) / 6.0
    } else {
        sin_pi(u) / (PI * u)
    }
}

/// `sin(πu)` with the argument reduced exactly first, so that nonzero
/// integers give exactly 0 and large `u` loses no accuracy.
fn sin_pi(u: f64) -> f64 {
    let k = u.round();
    let r = u - k;
    let s = (PI * r).sin();
    if k % 2.0 == 0.0 {
        s
    } else {
        -s
    }
}

impl KernelSpec {
    pub fn new(name: KernelName) -> Self {
        let (sup_norm, l2_norm_sq) = match name {
            KernelName::Sinc => (1.0, 1.0),
            KernelName::Gaussian => (1.0 / (2.0 * PI).sqrt(), 1.0 / (2.0 * PI.sqrt())),
            KernelName::Triangular => (1.0, 2.0 / 3.0),
            KernelName::Exponential => (0.5, 0.25),
            KernelName::Rectangular => (0.5, 0.5),
            KernelName::Epanechnikov => (0.75, 0.6),
            KernelName::Biweight => (15.0 / 16.0, 5.0 / 7.0),
        };
        let is_positive_definite = matches!(
            name,
            KernelName::Sinc | KernelName::Gaussian | KernelName::Triangular | KernelName::Exponential
        );
        let mut spec = KernelSpec {
            name,
            sup_norm,
            l2_norm_sq,
            is_positive_definite,
            rkhs_sensitivity_coeff: None,
        };
        if is_positive_definite {
            let (c, floor) = spec.covariance_normalizer_and_floor();
            spec.rkhs_sensitivity_coeff = Some(c * (2.0 * (1.0 - floor)).sqrt());
        }
        spec
    }

    /// `(c, k_floor)` with `K = c·k` and `k ≥ k_floor`. Only meaningful for
    /// positive definite kernels.
    fn covariance_normalizer_and_floor(&self) -> (f64, f64) {
        match self.name {
            KernelName::Sinc => (1.0, -0.3),
            KernelName::Gaussian => (1.0 / (2.0 * PI).sqrt(), 0.0),
            KernelName::Triangular => (1.0, 0.0),
            KernelName::Exponential => (0.5, 0.0),
            _ => (f64::NAN, f64::NAN),
        }
    }

    /// Density-normalized kernel value `K(u)`, `∫K = 1`.
    pub fn eval(&self, u: f64) -> f64 {
        let a = u.abs();
        match self.name {
            KernelName::Sinc => sinc(u),
            KernelName::Gaussian => (-0.5 * u * u).exp() / (2.0 * PI).sqrt(),
            KernelName::Triangular => (1.0 - a).max(0.0),
            KernelName::Exponential => 0.5 * (-a).exp(),
            KernelName::Rectangular => {
                if a <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            KernelName::Epanechnikov => {
                if a <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelName::Biweight => {
                if a <= 1.0 {
                    let s = 1.0 - u * u;
                    15.0 / 16.0 * s * s
                } else {
                    0.0
                }
            }
        }
    }

    /// Checked variant of [`eval`](Self::eval).
    pub fn try_eval(&self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::invalid(format!("kernel argument {u} is not finite")));
        }
        Ok(self.eval(u))
    }

    /// `K_h(u) = K(u/h)/h`.
    #[inline]
    pub fn eval_scaled(&self, u: f64, h: f64) -> f64 {
        self.eval(u / h) / h
    }

    /// Covariance form `k(u)` with `k(0) = 1`, used for Gram matrices.
    pub fn covariance(&self, u: f64) -> Result<f64> {
        if !self.is_positive_definite {
            return Err(self.not_pd("no Gaussian-process covariance form exists"));
        }
        let a = u.abs();
        Ok(match self.name {
            KernelName::Sinc => sinc(u),
            KernelName::Gaussian => (-0.5 * u * u).exp(),
            KernelName::Triangular => (1.0 - a).max(0.0),
            KernelName::Exponential => (-a).exp(),
            _ => unreachable!("checked positive definite above"),
        })
    }

    /// Points where the kernel (or a derivative) is non-smooth, for quadrature.
    pub fn breakpoints(&self) -> &'static [f64] {
        match self.name {
            KernelName::Sinc | KernelName::Gaussian => &[],
            KernelName::Exponential => &[0.0],
            KernelName::Triangular => &[-1.0, 0.0, 1.0],
            KernelName::Rectangular | KernelName::Epanechnikov | KernelName::Biweight => &[-1.0, 1.0],
        }
    }

    /// Half-width of the integration window in `u` that captures the kernel's
    /// mass; `None` for sinc, whose tails need oscillation-aware treatment.
    pub fn effective_support(&self) -> Option<f64> {
        match self.name {
            KernelName::Sinc => None,
            KernelName::Gaussian => Some(40.0),
            KernelName::Exponential => Some(60.0),
            _ => Some(1.0),
        }
    }

    /// Sensitivity bound `2‖K‖∞/h` of the scalar release `K_h(X − t)`.
    pub fn pointwise_sensitivity(&self, h: f64) -> Result<f64> {
        check_bandwidth(h)?;
        Ok(2.0 * self.sup_norm / h)
    }

    /// RKHS sensitivity `Δ′ = coeff/h` bounding
    /// `‖K_h(x − ·) − K_h(x′ − ·)‖_𝔥` over all `x, x′`.
    pub fn rkhs_sensitivity(&self, h: f64) -> Result<f64> {
        check_bandwidth(h)?;
        let coeff = self
            .rkhs_sensitivity_coeff
            .ok_or_else(|| self.not_pd("RKHS sensitivity is undefined"))?;
        Ok(coeff / h)
    }

    /// The quadratic form `Σᵢⱼ aᵢ aⱼ K(xᵢ − xⱼ)`. A negative value certifies
    /// that the kernel is not positive definite.
    pub fn certify_positive_definite(&self, points: &[f64], coeffs: &[f64]) -> Result<f64> {
        if points.len() != coeffs.len() {
            return Err(Error::invalid(format!(
                "{} points but {} coefficients",
                points.len(),
                coeffs.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::invalid("witness must contain at least one point"));
        }
        if points.iter().chain(coeffs).any(|v| !v.is_finite()) {
            return Err(Error::invalid("witness contains non-finite values"));
        }
        let mut form = 0.0;
        for (xi, ai) in points.iter().zip(coeffs) {
            for (xj, aj) in points.iter().zip(coeffs) {
                form += ai * aj * self.eval(xi - xj);
            }
        }
        Ok(form)
    }

    /// A witness `(points, coeffs)` with a negative quadratic form, for the
    /// kernels that are not positive definite.
    pub fn non_pd_witness(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self.name {
            KernelName::Rectangular => Some((vec![0.0, 0.75, 1.5], vec![1.0, -1.0, 1.0])),
            KernelName::Epanechnikov => Some((vec![0.0, 0.5, 1.0], vec![-0.9, 1.0, -0.9])),
            KernelName::Biweight => Some((
                vec![0.25, -0.25, -0.75, 0.5],
                vec![0.7, -0.4, 0.2, -0.5],
            )),
            _ => None,
        }
    }

    /// `argmin_u K(u)`: the offset `x′ − t = h·u` that, with `x = t`,
    /// maximizes `|K_h(x − t) − K_h(x′ − t)|`.
    pub fn adversarial_offset(&self) -> f64 {
        match self.name {
            KernelName::Sinc => SINC_ARGMIN,
            KernelName::Gaussian | KernelName::Exponential => 60.0,
            _ => 2.0,
        }
    }

    fn not_pd(&self, context: &str) -> Error {
        Error::UnsupportedKernel {
            kernel: self.name.as_str(),
            context: context.to_string(),
        }
    }
}

impl From<KernelName> for KernelSpec {
    fn from(name: KernelName) -> Self {
        KernelSpec::new(name)
    }
}

pub(crate) fn check_bandwidth(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("bandwidth must be positive and finite, got {h}")))
    }
}

/// `∫ (K_h(u) − K_η(u))² du`.
///
/// For sinc the Fourier supports `[−π/h, π/h]` nest, so Plancherel gives
/// `|1/η − 1/h|` exactly; other kernels use quadrature.
pub fn l2_distance_sq(spec: &KernelSpec, h: f64, eta: f64) -> Result<f64> {
    check_bandwidth(h)?;
    check_bandwidth(eta)?;
    if spec.name == KernelName::Sinc {
        return Ok((1.0 / eta - 1.0 / h).abs());
    }
    let cross = l2_cross_term(spec, h, eta)?;
    Ok((spec.l2_norm_sq / h + spec.l2_norm_sq / eta - 2.0 * cross).max(0.0))
}

/// `∫ K_h(u) K_η(u) du` by quadrature over the narrower kernel's support.
pub(crate) fn l2_cross_term(spec: &KernelSpec, h: f64, eta: f64) -> Result<f64> {
    let support = spec
        .effective_support()
        .ok_or_else(|| Error::Numerical("cross term requires a kernel with effective support".into()))?;
    let width = support * h.min(eta);
    let mut cuts: Vec<f64> = Vec::new();
    for &b in spec.breakpoints() {
        cuts.push(b * h);
        cuts.push(b * eta);
    }
    crate::quadrature::integrate_pieces(
        |u| spec.eval_scaled(u, h) * spec.eval_scaled(u, eta),
        -width,
        width,
        &cuts,
        crate::quadrature::Tolerance { abs: 1e-12, rel: 1e-12 },
    )
}
