//! Empirical check of `Q(A | x) ≤ e^α Q(A | x′) + β` over threshold events.
//!
//! Releases are drawn under two neighbouring inputs `x` and `x′`. For the
//! Laplace mechanism the release is the scalar `Z(t)`. For the Gaussian
//! process it is the curve on a grid, projected onto the likelihood-ratio
//! direction `w = G⁻¹(g(x) − g(x′))`, so threshold events on `⟨w, Z⟩` are
//! exactly the events that matter. For each event `A = {S ≤ c}` or
//! `{S > c}` the excess `P̂_x(A) − e^α P̂_x′(A)` is compared with
//! `β + 5·SE`, in both directions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::LaplaceReleaser;
use crate::gp::GpReleaser;
use crate::kernels::{check_bandwidth, KernelName};
use crate::privacy::{Mechanism, PrivacyBudget};
use crate::rng;

const SE_MULTIPLIER: f64 = 5.0;
const N_THRESHOLDS: usize = 2000;
const STREAM_LABEL: u64 = 0xA0D17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub mechanism: Mechanism,
    pub kernel: KernelName,
    pub h: f64,
    pub budget: PrivacyBudget,
    pub x: f64,
    pub x_prime: f64,
    /// Laplace: the evaluation point. Gaussian process: the curve grid.
    pub grid: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Multiplies the calibrated noise scale; `< 1` gives a negative control.
    pub scale_factor: f64,
}

impl AuditConfig {
    /// A neighbouring pair that is hard to tell apart. Laplace: `x = t` and
    /// `x′ = t + h·argmin K`, which nearly attains the sensitivity bound.
    /// Gaussian process: `x` and `x′ = x + 10h` with the grid `{x, x′}`.
    pub fn adversarial(mechanism: Mechanism, kernel: KernelName, h: f64, budget: PrivacyBudget) -> Self {
        let spec = kernel.spec();
        let (x, x_prime, grid) = match mechanism {
            Mechanism::Laplace => (0.0, spec.adversarial_offset() * h, vec![0.0]),
            Mechanism::GaussianProcess => (0.0, 10.0 * h, vec![0.0, 10.0 * h]),
        };
        AuditConfig {
            mechanism,
            kernel,
            h,
            budget,
            x,
            x_prime,
            grid,
            samples: 1_000_000,
            seed: 0,
            scale_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub verdict: Verdict,
    /// Largest observed `P̂_x(A) − e^α P̂_x′(A)` over events and directions.
    pub max_excess: f64,
    /// Largest `excess − 5·SE`; the verdict is PASS iff this is `≤ β`.
    pub max_excess_minus_se: f64,
    /// Standard error of the excess at the worst event.
    pub se_at_worst: f64,
    pub alpha: f64,
    pub beta: f64,
    pub noise_scale: f64,
    pub samples: usize,
    pub events: usize,
}

fn draw_statistics(cfg: &AuditConfig, input: f64, label: u64) -> Result<(Vec<f64>, f64)> {
    let spec = cfg.kernel.spec();
    let chunks = 64usize;
    let per = cfg.samples.div_ceil(chunks);
    let (project, scale): (Box<dyn Fn(&mut rng::Stream) -> Result<f64> + Sync>, f64) = match cfg.mechanism {
        Mechanism::Laplace => {
            let r = LaplaceReleaser::new(&spec, &cfg.grid, cfg.h, &cfg.budget)?;
            let r = r.clone().with_scale(r.scale() * cfg.scale_factor);
            let scale = r.scale();
            (Box::new(move |s: &mut rng::Stream| Ok(r.release(input, 0, s)?.values[0])), scale)
        }
        Mechanism::GaussianProcess => {
            let r = GpReleaser::new(&spec, &cfg.grid, cfg.h, &cfg.budget)?;
            let r = r.clone().with_sigma(r.sigma() * cfg.scale_factor);
            let diff: Vec<f64> = r
                .exact_curve(cfg.x)
                .iter()
                .zip(r.exact_curve(cfg.x_prime))
                .map(|(a, b)| a - b)
                .collect();
            let w = r.gram().solve(&diff)?;
            let scale = r.sigma();
            (
                Box::new(move |s: &mut rng::Stream| {
                    let z = r.release(input, 0, s)?.values;
                    Ok(z.iter().zip(&w).map(|(a, b)| a * b).sum())
                }),
                scale,
            )
        }
    };
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut stream = rng::stream(cfg.seed, label, c as u64);
            let count = per.min(cfg.samples.saturating_sub(c * per));
            (0..count).map(|_| project(&mut stream)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<f64> = parts.into_iter().flatten().collect();
    all.sort_by(|a, b| a.partial_cmp(b).expect("finite release"));
    Ok((all, scale))
}

/// `P̂(S ≤ c)` from sorted draws.
fn ecdf(sorted: &[f64], c: f64) -> f64 {
    sorted.partition_point(|&v| v <= c) as f64 / sorted.len() as f64
}

pub fn audit_privacy(cfg: &AuditConfig) -> Result<AuditReport> {
    check_bandwidth(cfg.h)?;
    if cfg.samples < 100 {
        return Err(Error::invalid("audit needs at least 100 samples per input"));
    }
    if !(cfg.x.is_finite() && cfg.x_prime.is_finite()) {
        return Err(Error::invalid("audit inputs must be finite"));
    }
    if !(cfg.scale_factor.is_finite() && cfg.scale_factor > 0.0) {
        return Err(Error::invalid("scale factor must be > 0"));
    }
    if cfg.mechanism == Mechanism::Laplace && cfg.grid.len() != 1 {
        return Err(Error::invalid("the Laplace audit uses a single evaluation point"));
    }
    let (sx, scale) = draw_statistics(cfg, cfg.x, STREAM_LABEL)?;
    let (sy, _) = draw_statistics(cfg, cfg.x_prime, STREAM_LABEL + 1)?;

    // Thresholds at pooled quantiles.
    let mut pooled: Vec<f64> = Vec::with_capacity(2 * N_THRESHOLDS);
    for s in [&sx, &sy] {
        for i in 0..N_THRESHOLDS {
            pooled.push(s[(i * (s.len() - 1)) / (N_THRESHOLDS - 1)]);
        }
    }
    pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    pooled.dedup();

    let ea = cfg.budget.alpha_eff().exp();
    let n = cfg.samples as f64;
    let mut max_excess = f64::NEG_INFINITY;
    let mut worst = (f64::NEG_INFINITY, 0.0);
    let mut events = 0;
    for &c in &pooled {
        let (px, py) = (ecdf(&sx, c), ecdf(&sy, c));
        // Events {S ≤ c} and {S > c}, each checked in both directions.
        for (p, q) in [(px, py), (1.0 - px, 1.0 - py), (py, px), (1.0 - py, 1.0 - px)] {
            events += 1;
            let excess = p - ea * q;
            let se = (p * (1.0 - p) / n + ea * ea * q * (1.0 - q) / n).sqrt();
            max_excess = max_excess.max(excess);
            if excess - SE_MULTIPLIER * se > worst.0 {
                worst = (excess - SE_MULTIPLIER * se, se);
            }
        }
    }
    let beta = cfg.budget.beta_eff();
    Ok(AuditReport {
        verdict: if worst.0 <= beta { Verdict::Pass } else { Verdict::Fail },
        max_excess,
        max_excess_minus_se: worst.0,
        se_at_worst: worst.1,
        alpha: cfg.budget.alpha_eff(),
        beta,
        noise_scale: scale,
        samples: cfg.samples,
        events,
    })
}
