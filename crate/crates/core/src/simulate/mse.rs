//! Monte Carlo mean squared error of `f̂_h(t)` and log-log rate fitting.
//!
//! Each replication samples `X₁..X_n`, lets every owner release its noisy
//! kernel value at `t` (the single-point curve release), averages, and
//! records the squared error against `f(t)`. Replication `r` of sample size
//! `n` draws from `rng::stream(seed, n, r)`, so results do not depend on
//! the thread count, and rules sharing a seed share their random numbers.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelName, KernelSpec};
use crate::lepski::{build_grid, grid_biases, LepskiConfig, Thresholds};
use crate::privacy::{calibrate, sample_laplace, Mechanism, PrivacyBudget};
use crate::rng;
use crate::simulate::density::{smoothed_target, Density};

/// How `h` is chosen in each replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandwidthRule {
    Fixed { h: f64 },
    /// `h = n^{−exponent}`.
    Rate { exponent: f64 },
    /// `h*` from the true density, on the Lepski grid.
    Oracle,
    /// `ĥ` from the private releases.
    Adaptive,
}

impl BandwidthRule {
    pub fn label(&self) -> &'static str {
        match self {
            BandwidthRule::Fixed { .. } => "fixed",
            BandwidthRule::Rate { .. } => "rate",
            BandwidthRule::Oracle => "oracle",
            BandwidthRule::Adaptive => "adaptive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseConfig {
    pub density: Density,
    pub kernel: KernelName,
    pub mechanism: Mechanism,
    /// Total budget per owner. Grid rules compose it over the grid.
    pub budget: PrivacyBudget,
    /// `false` turns the noise off (non-private baseline).
    pub private: bool,
    pub t: f64,
    pub replications: usize,
    pub seed: u64,
    pub kappa: f64,
    pub grid_a: f64,
    pub grid_h_max: f64,
    /// `M`; defaults to `‖f‖∞` of the density.
    pub m_bound: Option<f64>,
}

impl MseConfig {
    pub fn new(density: Density, kernel: KernelName, mechanism: Mechanism, budget: PrivacyBudget) -> Self {
        MseConfig {
            density,
            kernel,
            mechanism,
            budget,
            private: true,
            t: 0.0,
            replications: 500,
            seed: 0,
            kappa: 2.0,
            grid_a: 2.0,
            grid_h_max: 1.0,
            m_bound: None,
        }
    }

    pub fn m_bound(&self) -> f64 {
        self.m_bound.unwrap_or_else(|| self.density.sup_norm())
    }

    pub fn lepski(&self) -> LepskiConfig {
        LepskiConfig {
            kappa: self.kappa,
            m_bound: self.m_bound(),
            kernel: self.kernel.spec(),
            mechanism: self.mechanism,
            budget: self.budget,
            t: self.t,
        }
    }
}

/// One `(n, rule)` cell of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub n: usize,
    pub rule: String,
    /// The bandwidth used; for the adaptive rule, the mean selected `h`.
    pub h: f64,
    pub mse: f64,
    pub mc_se: f64,
    pub reps: usize,
    pub mean_estimate: f64,
    /// Variance of the estimates across replications (divisor `reps`).
    pub variance: f64,
    /// `f(t)`.
    pub target: f64,
    /// `f_h(t)` when a single bandwidth is used throughout.
    pub smoothed_target: Option<f64>,
    /// Per-replication noise standard deviation at one point, per owner.
    pub noise_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub config: MseConfig,
    pub rule: BandwidthRule,
    pub rows: Vec<MseRow>,
    pub fit: Option<RateFit>,
}

impl MseReport {
    /// `n,rule,h,mse,mc_se,reps`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Data(e.to_string());
        w.write_record(["n", "rule", "h", "mse", "mc_se", "reps"]).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.rule.clone(),
                crate::fmt_f64(r.h),
                crate::fmt_f64(r.mse),
                crate::fmt_f64(r.mc_se),
                r.reps.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))
    }
}

/// What a replication needs: bandwidths, per-owner noise scale at each, and
/// the index of the bandwidth to score (`None`: select adaptively).
struct Plan {
    bandwidths: Vec<f64>,
    scales: Vec<f64>,
    pick: Option<usize>,
    thresholds: Option<Thresholds>,
}

fn plan(cfg: &MseConfig, n: usize, rule: BandwidthRule) -> Result<Plan> {
    let spec = cfg.kernel.spec();
    let scale_for = |h: f64, budget: &PrivacyBudget| -> Result<f64> {
        if !cfg.private {
            return Ok(0.0);
        }
        Ok(calibrate(&spec, h, budget, cfg.mechanism)?.scale)
    };
    match rule {
        BandwidthRule::Fixed { .. } | BandwidthRule::Rate { .. } => {
            let h = match rule {
                BandwidthRule::Fixed { h } => h,
                BandwidthRule::Rate { exponent } => (n as f64).powf(-exponent),
                _ => unreachable!(),
            };
            crate::kernels::check_bandwidth(h)?;
            Ok(Plan { bandwidths: vec![h], scales: vec![scale_for(h, &cfg.budget)?], pick: Some(0), thresholds: None })
        }
        BandwidthRule::Oracle | BandwidthRule::Adaptive => {
            let grid = build_grid(n, cfg.grid_a, cfg.grid_h_max)?;
            let lep = cfg.lepski();
            let per_h = lep.per_bandwidth_budget(&grid)?;
            let thresholds = if cfg.private {
                Thresholds::new(&lep, &grid)?
            } else {
                Thresholds::with_coefficient(&lep, &grid, 0.0)?
            };
            let scales = grid.bandwidths().iter().map(|&h| scale_for(h, &per_h)).collect::<Result<_>>()?;
            let pick = match rule {
                BandwidthRule::Oracle => {
                    Some(thresholds.oracle_index(&grid_biases(cfg.density, &spec, &grid, cfg.t)?)?)
                }
                _ => None,
            };
            Ok(Plan { bandwidths: grid.bandwidths().to_vec(), scales, pick, thresholds: Some(thresholds) })
        }
    }
}

/// `f̂_h(t)` at every planned bandwidth for one replication.
fn replicate<R: Rng + ?Sized>(cfg: &MseConfig, spec: &KernelSpec, n: usize, plan: &Plan, rng: &mut R) -> Vec<f64> {
    let xs: Vec<f64> = (0..n).map(|_| cfg.density.sample(rng)).collect();
    plan.bandwidths
        .iter()
        .zip(&plan.scales)
        .map(|(&h, &scale)| {
            let mut sum = 0.0;
            for &x in &xs {
                let noise = if scale == 0.0 {
                    0.0
                } else {
                    match cfg.mechanism {
                        Mechanism::Laplace => sample_laplace(rng),
                        Mechanism::GaussianProcess => rng.sample::<f64, _>(StandardNormal),
                    }
                };
                sum += spec.eval_scaled(x - cfg.t, h) + scale * noise;
            }
            sum / n as f64
        })
        .collect()
}

fn validate(cfg: &MseConfig, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if cfg.replications < 2 {
        return Err(Error::invalid("at least 2 replications are needed for a standard error"));
    }
    if !cfg.t.is_finite() {
        return Err(Error::invalid("t must be finite"));
    }
    if cfg.private && cfg.mechanism == Mechanism::GaussianProcess {
        cfg.budget.check_gaussian()?;
        if !cfg.kernel.spec().is_positive_definite {
            return Err(Error::UnsupportedKernel {
                kernel: cfg.kernel.as_str(),
                context: "the Gaussian-process mechanism needs a positive definite kernel".into(),
            });
        }
    }
    Ok(())
}

/// Monte Carlo estimate of `E(f̂(t) − f(t))²` at sample size `n`.
pub fn run_mse(cfg: &MseConfig, n: usize, rule: BandwidthRule) -> Result<MseRow> {
    validate(cfg, n)?;
    let spec = cfg.kernel.spec();
    let plan = plan(cfg, n, rule)?;
    let label = n as u64 & 0xFF_FFFF;
    let picks: Vec<(f64, f64)> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng::stream(cfg.seed, label, r as u64);
            let est = replicate(cfg, &spec, n, &plan, &mut stream);
            let j = match (plan.pick, &plan.thresholds) {
                (Some(j), _) => j,
                (None, Some(thr)) => thr.select_index(&est)?,
                (None, None) => unreachable!("adaptive plans carry thresholds"),
            };
            Ok((est[j], plan.bandwidths[j]))
        })
        .collect::<Result<_>>()?;

    let target = cfg.density.pdf(cfg.t);
    let reps = picks.len() as f64;
    let sq: Vec<f64> = picks.iter().map(|(e, _)| (e - target).powi(2)).collect();
    let mse = sq.iter().sum::<f64>() / reps;
    let sq_var = sq.iter().map(|s| (s - mse).powi(2)).sum::<f64>() / (reps - 1.0);
    let mean_estimate = picks.iter().map(|(e, _)| e).sum::<f64>() / reps;
    let variance = picks.iter().map(|(e, _)| (e - mean_estimate).powi(2)).sum::<f64>() / reps;
    let mean_h = picks.iter().map(|(_, h)| h).sum::<f64>() / reps;
    let smoothed = match plan.pick {
        Some(j) => Some(smoothed_target(cfg.density, &spec, plan.bandwidths[j], cfg.t)?),
        None => None,
    };
    let scored = plan.pick.unwrap_or(0);
    let noise_std = match cfg.mechanism {
        Mechanism::Laplace => std::f64::consts::SQRT_2 * plan.scales[scored],
        Mechanism::GaussianProcess => plan.scales[scored],
    };
    Ok(MseRow {
        n,
        rule: rule.label().to_string(),
        h: mean_h,
        mse,
        mc_se: (sq_var / reps).sqrt(),
        reps: picks.len(),
        mean_estimate,
        variance,
        target,
        smoothed_target: smoothed,
        noise_std,
    })
}

/// Runs every `n` and fits the log-log slope when there are at least four.
pub fn run_sweep(cfg: &MseConfig, ns: &[usize], rule: BandwidthRule) -> Result<MseReport> {
    let rows = ns.iter().map(|&n| run_mse(cfg, n, rule)).collect::<Result<Vec<_>>>()?;
    let fit = fit_rate(&rows).ok();
    Ok(MseReport { config: *cfg, rule, rows, fit })
}

/// Least squares on `(log n, log mse)` with the slope's standard error.
pub fn fit_rate(rows: &[MseRow]) -> Result<RateFit> {
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.mse)).collect();
    fit_log_log(&points)
}

/// [`fit_rate`] on raw `(n, mse)` pairs.
pub fn fit_log_log(points: &[(f64, f64)]) -> Result<RateFit> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::invalid(format!(
            "rate fit needs at least 4 distinct n values, got {}",
            distinct.len()
        )));
    }
    if points.iter().any(|&(n, m)| !(n > 0.0 && m > 0.0 && m.is_finite())) {
        return Err(Error::invalid("rate fit needs positive n and mse"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let slope_se = (rss / (k - 2.0) / sxx).sqrt();
    Ok(RateFit { slope, slope_se, intercept })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> MseConfig {
        let mut c = MseConfig::new(
            Density::GaussianStd,
            KernelName::Sinc,
            Mechanism::Laplace,
            PrivacyBudget::new(1.0, 0.0).unwrap(),
        );
        c.replications = 200;
        c.seed = 11;
        c
    }

    #[test]
    fn fit_recovers_power_laws() {
        for p in [1.0, 1.0 / 3.0] {
            let pts: Vec<(f64, f64)> = [256.0_f64, 1024.0, 4096.0, 16384.0].iter().map(|&n| (n, 3.0 * n.powf(-p))).collect();
            let fit = fit_log_log(&pts).unwrap();
            assert!((fit.slope + p).abs() < 1e-12);
            assert!(fit.slope_se < 1e-10);
        }
        assert!(fit_log_log(&[(1.0, 1.0), (2.0, 0.5), (4.0, 0.25)]).is_err());
        assert!(fit_log_log(&[(1.0, 1.0), (2.0, 0.5), (2.0, 0.4), (4.0, 0.25)]).is_err());
    }

    #[test]
    fn reproducible_with_fixed_seed() {
        let a = run_mse(&cfg(), 300, BandwidthRule::Fixed { h: 0.5 }).unwrap();
        let b = run_mse(&cfg(), 300, BandwidthRule::Fixed { h: 0.5 }).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| run_mse(&cfg(), 300, BandwidthRule::Fixed { h: 0.5 }).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn bias_variance_decomposition() {
        let row = run_mse(&cfg(), 500, BandwidthRule::Fixed { h: 0.5 }).unwrap();
        let f_h = row.smoothed_target.unwrap();
        // MSE = variance + (mean − f)² exactly; the mean must match f_h(t)
        // within Monte Carlo error.
        let identity = row.variance + (row.mean_estimate - row.target).powi(2);
        assert!((row.mse - identity).abs() <= 1e-10 * row.mse);
        let mean_se = (row.variance / row.reps as f64).sqrt();
        assert!((row.mean_estimate - f_h).abs() <= 4.0 * mean_se);
    }

    #[test]
    fn noiseless_mse_falls_to_bias_floor() {
        let mut c = cfg();
        c.private = false;
        c.kernel = KernelName::Gaussian;
        c.replications = 2000;
        // f_h(0) = 1/√(2π·2) at h = 1: bias² ≈ 0.0137, far above the variance.
        let h = 1.0;
        let rows: Vec<MseRow> = [4, 40, 4000]
            .iter()
            .map(|&n| run_mse(&c, n, BandwidthRule::Fixed { h }).unwrap())
            .collect();
        assert!(rows[0].mse > rows[1].mse && rows[1].mse > rows[2].mse);
        let floor = (rows[2].smoothed_target.unwrap() - rows[2].target).powi(2);
        assert!((floor - (1.0 / (4.0 * std::f64::consts::PI).sqrt() - rows[2].target).powi(2)).abs() < 1e-12);
        assert!(rows[2].mse >= floor * 0.95);
        assert!(rows[2].mse <= floor * 1.05);
    }

    #[test]
    fn grid_rules_run() {
        let mut c = cfg();
        c.replications = 50;
        let o = run_mse(&c, 1000, BandwidthRule::Oracle).unwrap();
        let a = run_mse(&c, 1000, BandwidthRule::Adaptive).unwrap();
        let grid = build_grid(1000, 2.0, 1.0).unwrap();
        assert!(grid.index_of(o.h).is_some());
        assert!(a.h >= grid.h_min() && a.h <= 1.0);
        assert!(a.smoothed_target.is_none());
    }

    #[test]
    fn csv_header() {
        let report = MseReport {
            config: cfg(),
            rule: BandwidthRule::Fixed { h: 0.5 },
            rows: vec![run_mse(&cfg(), 100, BandwidthRule::Fixed { h: 0.5 }).unwrap()],
            fit: None,
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,rule,h,mse,mc_se,reps\n100,fixed,5.0000000000000000e-1,"));
    }

    #[test]
    fn gp_needs_pd_kernel_and_beta() {
        let mut c = cfg();
        c.mechanism = Mechanism::GaussianProcess;
        assert!(run_mse(&c, 100, BandwidthRule::Fixed { h: 0.5 }).is_err());
        c.budget = PrivacyBudget::new(1.0, 0.05).unwrap();
        c.kernel = KernelName::Epanechnikov;
        assert!(matches!(
            run_mse(&c, 100, BandwidthRule::Fixed { h: 0.5 }),
            Err(Error::UnsupportedKernel { .. })
        ));
    }
}
