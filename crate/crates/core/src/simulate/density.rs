//! Test densities with known smoothness, and the smoothed target
//! `f_h(t) = (K_h ⋆ f)(t)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::kernels::{check_bandwidth, KernelName, KernelSpec};
use crate::privacy::sample_laplace;
use crate::quadrature::{integrate, integrate_pieces, Tolerance};

const TARGET_TOL: Tolerance = Tolerance { abs: 1e-10, rel: 1e-10 };

// Two-component mixture: weights, means, standard deviations.
const MIX_W: [f64; 2] = [0.4, 0.6];
const MIX_MU: [f64; 2] = [-1.0, 1.5];
const MIX_SD: [f64; 2] = [0.5, 0.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Density {
    /// N(0, 1).
    GaussianStd,
    /// `e^{−|x|}/2`, characteristic function `1/(1 + ω²)`.
    LaplaceDensity,
    /// `0.4·N(−1, 0.5²) + 0.6·N(1.5, 0.8²)`.
    GaussianMixture,
    /// `(1/2π)(sin(x/2)/(x/2))²`, band-limited to `|ω| ≤ 1`.
    Fejer,
    /// Uniform on `[0, 1]`.
    Uniform,
}

impl Density {
    pub const ALL: [Density; 5] = [
        Density::GaussianStd,
        Density::LaplaceDensity,
        Density::GaussianMixture,
        Density::Fejer,
        Density::Uniform,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Density::GaussianStd => "gaussian_std",
            Density::LaplaceDensity => "laplace_density",
            Density::GaussianMixture => "gaussian_mixture",
            Density::Fejer => "fejer",
            Density::Uniform => "uniform",
        }
    }

    pub fn pdf(self, x: f64) -> f64 {
        match self {
            Density::GaussianStd => normal_pdf(x, 0.0, 1.0),
            Density::LaplaceDensity => 0.5 * (-x.abs()).exp(),
            Density::GaussianMixture => (0..2).map(|i| MIX_W[i] * normal_pdf(x, MIX_MU[i], MIX_SD[i])).sum(),
            Density::Fejer => {
                if x.abs() < 1e-8 {
                    1.0 / (2.0 * PI)
                } else {
                    let s = (x / 2.0).sin() / (x / 2.0);
                    s * s / (2.0 * PI)
                }
            }
            Density::Uniform => {
                if (0.0..=1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cdf(self, x: f64) -> f64 {
        match self {
            Density::GaussianStd => normal_cdf(x, 0.0, 1.0),
            Density::LaplaceDensity => {
                if x < 0.0 {
                    0.5 * x.exp()
                } else {
                    1.0 - 0.5 * (-x).exp()
                }
            }
            Density::GaussianMixture => (0..2).map(|i| MIX_W[i] * normal_cdf(x, MIX_MU[i], MIX_SD[i])).sum(),
            Density::Fejer => {
                // No elementary antiderivative. Far tails: ∫_x^∞ ≈ 1/(πx).
                let half = |a: f64| {
                    if a > 1e4 {
                        0.5 - 1.0 / (PI * a)
                    } else {
                        let pieces = (a / (2.0 * PI)).ceil() as usize;
                        (0..pieces)
                            .map(|k| {
                                let lo = a * k as f64 / pieces as f64;
                                let hi = a * (k + 1) as f64 / pieces as f64;
                                integrate(|u| self.pdf(u), lo, hi, TARGET_TOL).unwrap_or(f64::NAN)
                            })
                            .sum()
                    }
                };
                if x >= 0.0 {
                    0.5 + half(x)
                } else {
                    0.5 - half(-x)
                }
            }
            Density::Uniform => x.clamp(0.0, 1.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Density::GaussianStd => rng.sample(StandardNormal),
            Density::LaplaceDensity => sample_laplace(rng),
            Density::GaussianMixture => {
                let i = usize::from(rng.random::<f64>() >= MIX_W[0]);
                let z: f64 = rng.sample(StandardNormal);
                MIX_MU[i] + MIX_SD[i] * z
            }
            Density::Fejer => loop {
                // Cauchy(0, 2) proposal: f/g = sin²(x/2)(4 + x²)/x² ≤ 2.
                let x = 2.0 * (PI * (rng.random::<f64>() - 0.5)).tan();
                let ratio = if x.abs() < 1e-8 {
                    1.0
                } else {
                    let s = (x / 2.0).sin();
                    s * s * (4.0 + x * x) / (x * x)
                };
                if rng.random::<f64>() * 2.0 <= ratio {
                    break x;
                }
            },
            Density::Uniform => rng.random::<f64>(),
        }
    }

    /// `(Re φ(ω), Im φ(ω))` with `φ(ω) = E e^{iωX}`.
    pub fn characteristic_function(self, w: f64) -> (f64, f64) {
        match self {
            Density::GaussianStd => ((-0.5 * w * w).exp(), 0.0),
            Density::LaplaceDensity => (1.0 / (1.0 + w * w), 0.0),
            Density::GaussianMixture => (0..2).fold((0.0, 0.0), |(re, im), i| {
                let amp = MIX_W[i] * (-0.5 * (MIX_SD[i] * w).powi(2)).exp();
                (re + amp * (MIX_MU[i] * w).cos(), im + amp * (MIX_MU[i] * w).sin())
            }),
            Density::Fejer => ((1.0 - w.abs()).max(0.0), 0.0),
            Density::Uniform => {
                if w.abs() < 1e-12 {
                    (1.0, 0.0)
                } else {
                    let s = (w / 2.0).sin() / (w / 2.0);
                    (s * (w / 2.0).cos(), s * (w / 2.0).sin())
                }
            }
        }
    }

    pub fn sup_norm(self) -> f64 {
        match self {
            Density::GaussianStd => 1.0 / (2.0 * PI).sqrt(),
            Density::LaplaceDensity => 0.5,
            Density::GaussianMixture => mixture_sup(),
            Density::Fejer => 1.0 / (2.0 * PI),
            Density::Uniform => 1.0,
        }
    }

    /// Effective Sobolev smoothness; `None` means every `s`.
    pub fn sobolev_s(self) -> Option<f64> {
        match self {
            Density::GaussianStd | Density::GaussianMixture | Density::Fejer => None,
            // φ ~ ω⁻² gives s < 3/2; discontinuity of the uniform gives s < 1/2.
            Density::LaplaceDensity => Some(1.5),
            Density::Uniform => Some(0.5),
        }
    }

    /// Points where the density is not smooth.
    pub fn breakpoints(self) -> &'static [f64] {
        match self {
            Density::LaplaceDensity => &[0.0],
            Density::Uniform => &[0.0, 1.0],
            _ => &[],
        }
    }

    /// Interval outside of which the density mass is below `1e-14`, or the
    /// tail bound used by the sinc spatial quadrature.
    fn spatial_window(self) -> (f64, f64) {
        match self {
            Density::GaussianStd => (-9.0, 9.0),
            Density::LaplaceDensity => (-33.0, 33.0),
            Density::GaussianMixture => (-6.0, 9.0),
            Density::Fejer => (-1e4, 1e4),
            Density::Uniform => (0.0, 1.0),
        }
    }
}

impl fmt::Display for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Density {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Density::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown density `{s}` (expected gaussian_std | laplace_density | gaussian_mixture | fejer | uniform)"
                ))
            })
    }
}

fn normal_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

fn normal_cdf(x: f64, mu: f64, sd: f64) -> f64 {
    0.5 * (1.0 + erf((x - mu) / (sd * std::f64::consts::SQRT_2)))
}

fn mixture_sup() -> f64 {
    let f = |x: f64| Density::GaussianMixture.pdf(x);
    let (mut best, mut arg) = (0.0, 0.0);
    for i in 0..=4000 {
        let x = -3.0 + 6.0 * i as f64 / 4000.0;
        if f(x) > best {
            best = f(x);
            arg = x;
        }
    }
    // Golden-section refinement around the coarse maximizer.
    let (mut a, mut b) = (arg - 0.002, arg + 0.002);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b))
}

/// `f_h(t) = ∫ K_h(u − t) f(u) du`.
///
/// Sinc goes through the Fourier form `(1/π)∫₀^{π/h} Re(e^{−itω}φ(ω)) dω`,
/// which is an integral over a finite range of a smooth function. Other
/// kernels integrate `K(v) f(t + hv)` over the kernel's support.
pub fn smoothed_target(density: Density, spec: &KernelSpec, h: f64, t: f64) -> Result<f64> {
    check_bandwidth(h)?;
    if !t.is_finite() {
        return Err(Error::invalid(format!("evaluation point {t} is not finite")));
    }
    if spec.name == KernelName::Sinc {
        return sinc_fourier(density, h, t);
    }
    let support = spec.effective_support().expect("non-sinc kernels have a window");
    let mut cuts: Vec<f64> = spec.breakpoints().to_vec();
    cuts.extend(density.breakpoints().iter().map(|&b| (b - t) / h));
    // Cut at integers so that wide windows are not under-resolved.
    cuts.extend((-(support as i64)..=support as i64).map(|k| k as f64));
    integrate_pieces(|v| spec.eval(v) * density.pdf(t + h * v), -support, support, &cuts, TARGET_TOL)
        .map_err(|e| Error::Numerical(format!("smoothed target of {density} at h = {h}, t = {t}: {e}")))
}

fn sinc_fourier(density: Density, h: f64, t: f64) -> Result<f64> {
    let mut top = PI / h;
    // φ is negligible (< 1e-16) beyond these frequencies.
    top = match density {
        Density::GaussianStd => top.min(9.0),
        Density::GaussianMixture => top.min(11.5),
        Density::Fejer => top.min(1.0),
        _ => top,
    };
    let period = if t == 0.0 { PI } else { (PI / t.abs()).min(PI) };
    let pieces = ((top / period).ceil() as usize).max(1);
    let mut total = 0.0;
    for k in 0..pieces {
        let lo = top * k as f64 / pieces as f64;
        let hi = top * (k + 1) as f64 / pieces as f64;
        total += integrate(
            |w| {
                let (re, im) = density.characteristic_function(w);
                (t * w).cos() * re + (t * w).sin() * im
            },
            lo,
            hi,
            TARGET_TOL,
        )
        .map_err(|e| Error::Numerical(format!("sinc Fourier target of {density} at h = {h}: {e}")))?;
    }
    Ok(total / PI)
}

/// Spatial quadrature of `∫ K_h(u − t) f(u) du` for sinc, integrating
/// lobe by lobe over a window where the density mass outside is below
/// `1e-14`. Since `|K_h(v)| ≤ 1/(π|v|)`, truncation at distance `W` from `t`
/// costs at most `P(|X − t| > W)/(πW)`. Slower than the Fourier route; kept
/// as an independent cross-check.
pub fn smoothed_target_spatial(density: Density, h: f64, t: f64) -> Result<f64> {
    check_bandwidth(h)?;
    let spec = KernelName::Sinc.spec();
    let (lo, hi) = density.spatial_window();
    let mut cuts: Vec<f64> = density.breakpoints().to_vec();
    // Zeros of the sinc lobes.
    let first = ((lo - t) / h).ceil() as i64;
    let last = ((hi - t) / h).floor() as i64;
    cuts.extend((first..=last).map(|k| t + k as f64 * h));
    integrate_pieces(|u| spec.eval_scaled(u - t, h) * density.pdf(u), lo, hi, &cuts, TARGET_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pdfs_integrate_to_one() {
        for d in Density::ALL {
            let (lo, hi) = d.spatial_window();
            let mut cuts = d.breakpoints().to_vec();
            if d == Density::Fejer {
                cuts.extend((-1600..=1600).map(|k| k as f64 * 2.0 * PI));
            }
            let mass = integrate_pieces(|x| d.pdf(x), lo, hi, &cuts, TARGET_TOL).unwrap();
            // The Fejér window leaves 2/(π·10⁴) of mass in the tails.
            let tail = if d == Density::Fejer { 2.0 / (PI * 1e4) } else { 0.0 };
            assert!((mass + tail - 1.0).abs() < 1e-6, "{d}: {mass}");
        }
    }

    #[test]
    fn sup_norms() {
        for d in Density::ALL {
            let scan = (0..=200_000)
                .map(|i| d.pdf(-5.0 + 10.0 * i as f64 / 200_000.0))
                .fold(0.0, f64::max);
            assert!(scan <= d.sup_norm() * (1.0 + 1e-12), "{d}");
            assert!(scan >= d.sup_norm() * (1.0 - 1e-6), "{d}");
        }
    }

    #[test]
    fn samplers_match_cdf() {
        for d in Density::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            let mut xs: Vec<f64> = (0..10_000).map(|_| d.sample(&mut rng)).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = xs.len() as f64;
            let ks = xs
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let f = d.cdf(x);
                    (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks <= 0.02, "{d}: KS = {ks}");
        }
    }

    #[test]
    fn characteristic_functions_match_quadrature() {
        for d in [Density::GaussianMixture, Density::Uniform, Density::LaplaceDensity] {
            let (lo, hi) = d.spatial_window();
            for w in [0.3, 1.7] {
                let re = integrate_pieces(|x| (w * x).cos() * d.pdf(x), lo, hi, d.breakpoints(), TARGET_TOL).unwrap();
                let im = integrate_pieces(|x| (w * x).sin() * d.pdf(x), lo, hi, d.breakpoints(), TARGET_TOL).unwrap();
                let (cre, cim) = d.characteristic_function(w);
                assert!((re - cre).abs() < 1e-8 && (im - cim).abs() < 1e-8, "{d} {w}");
            }
        }
    }

    #[test]
    fn gaussian_kernel_target_converges_to_density() {
        let spec = KernelName::Gaussian.spec();
        let f0 = Density::GaussianStd.pdf(0.0);
        let mut prev = f64::INFINITY;
        for h in [1e-1, 1e-2, 1e-3] {
            let v = smoothed_target(Density::GaussianStd, &spec, h, 0.0).unwrap();
            // Exact: N(0, 1 + h²) density at 0.
            assert!((v - 1.0 / (2.0 * PI * (1.0 + h * h)).sqrt()).abs() < 1e-10);
            assert!((v - f0).abs() < prev);
            prev = (v - f0).abs();
        }
        assert!(prev < 1e-6);
        assert!((f0 - 0.398_94).abs() < 1e-5);
    }

    #[test]
    fn sinc_target_of_gaussian_is_truncated_fourier_mass() {
        for h in [0.1, 0.5, 1.0, 2.0] {
            let v = smoothed_target(Density::GaussianStd, &KernelName::Sinc.spec(), h, 0.0).unwrap();
            // (1/2π)∫_{|ω|≤π/h} e^{−ω²/2} dω = erf(π/(h√2))/√(2π).
            let exact = erf(PI / (h * std::f64::consts::SQRT_2)) / (2.0 * PI).sqrt();
            assert!((v - exact).abs() < 1e-10, "{h}");
        }
    }

    #[test]
    fn sinc_fourier_and_spatial_routes_agree() {
        for d in [Density::GaussianStd, Density::LaplaceDensity, Density::GaussianMixture, Density::Uniform] {
            for (h, t) in [(0.2, 0.0), (0.5, 0.7), (1.0, -0.3)] {
                let fourier = smoothed_target(d, &KernelName::Sinc.spec(), h, t).unwrap();
                let spatial = smoothed_target_spatial(d, h, t).unwrap();
                assert!((fourier - spatial).abs() < 1e-8, "{d} {h} {t}: {fourier} vs {spatial}");
            }
        }
    }

    #[test]
    fn band_limited_density_has_no_sinc_bias() {
        // φ vanishes beyond |ω| = 1 < π/h for every h ≤ π.
        for h in [0.1, 1.0, 3.0] {
            let v = smoothed_target(Density::Fejer, &KernelName::Sinc.spec(), h, 0.4).unwrap();
            assert!((v - Density::Fejer.pdf(0.4)).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_window_average() {
        let v = smoothed_target(Density::Uniform, &KernelName::Triangular.spec(), 0.25, 0.5).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let v = smoothed_target(Density::Uniform, &KernelName::Rectangular.spec(), 0.5, 0.0).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn laplace_density_with_exponential_kernel() {
        // f_h(0) = ∫ e^{−|v|}/2 · e^{−h|v|}/2 dv = 1/(2(1 + h)).
        for h in [0.1, 0.7] {
            let v = smoothed_target(Density::LaplaceDensity, &KernelName::Exponential.spec(), h, 0.0).unwrap();
            assert!((v - 0.5 / (1.0 + h)).abs() < 1e-10);
        }
    }

    #[test]
    fn names_round_trip() {
        for d in Density::ALL {
            assert_eq!(d.as_str().parse::<Density>().unwrap(), d);
        }
        assert!("cauchy".parse::<Density>().is_err());
    }
}
