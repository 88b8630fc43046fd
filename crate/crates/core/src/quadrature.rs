//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use crate::error::{Error, Result};

// 15-point Kronrod abscissae (nonnegative half) and weights, with the embedded
// 7-point Gauss weights on the odd-indexed nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_DEPTH: u32 = 48;

/// Tolerances for [`integrate`]. The recursion stops on an interval once the
/// Kronrod/Gauss discrepancy is below `max(abs, rel * |estimate|)` scaled to
/// the interval's share of the whole range.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-10, rel: 1e-12 }
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: (f64, f64),
    tol: Tolerance,
    depth: u32,
) -> Result<(f64, f64)> {
    let (value, err) = gk15(f, a, b);
    if !value.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite integrand on [{a}, {b}]"
        )));
    }
    let share = (b - a) / (whole.1 - whole.0);
    let target = tol.abs.max(tol.rel * value.abs()) * share.max(1e-3);
    if err <= target || depth >= MAX_DEPTH || (b - a) <= f64::EPSILON * a.abs().max(b.abs()) {
        return Ok((value, err));
    }
    let mid = 0.5 * (a + b);
    let (lv, le) = adapt(f, a, mid, whole, tol, depth + 1)?;
    let (rv, re) = adapt(f, mid, b, whole, tol, depth + 1)?;
    Ok((lv + rv, le + re))
}

/// Integrates `f` over `[a, b]`. Returns the estimate; fails if the integrand
/// produced non-finite values or the error estimate stayed far above tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid(format!("integration bounds [{a}, {b}] not finite")));
    }
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate(f, b, a, tol).map(|v| -v);
    }
    let (value, err) = adapt(&f, a, b, (a, b), tol, 0)?;
    let allowed = 1e3 * tol.abs.max(tol.rel * value.abs());
    if err > allowed {
        return Err(Error::Numerical(format!(
            "quadrature on [{a}, {b}] did not converge (error estimate {err:e})"
        )));
    }
    Ok(value)
}

/// Integrates over `[a, b]` splitting at every breakpoint strictly inside the
/// interval. Use this for integrands with kinks or jumps.
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: Tolerance,
) -> Result<f64> {
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&c| c > a && c < b)
        .collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    cuts.dedup();
    let mut total = 0.0;
    let mut lo = a;
    for &c in cuts.iter().chain(std::iter::once(&b)) {
        total += integrate(&f, lo, c, tol)?;
        lo = c;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| x.powi(5) - 3.0 * x * x + 1.0, -1.0, 2.0, Tolerance::default()).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0) + 3.0;
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn gaussian_mass() {
        let v = integrate(
            |x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            -40.0,
            40.0,
            Tolerance::default(),
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kinked_integrand_with_breakpoints() {
        let v = integrate_pieces(|x: f64| x.abs(), -1.0, 3.0, &[0.0], Tolerance::default()).unwrap();
        assert!((v - 5.0).abs() < 1e-13);
    }

    #[test]
    fn reversed_bounds_negate() {
        let v = integrate(|x| x, 1.0, 0.0, Tolerance::default()).unwrap();
        assert!((v + 0.5).abs() < 1e-14);
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        assert!(integrate(|x| 1.0 / x, -1.0, 1.0, Tolerance::default()).is_err());
    }
}
