//! Lepski-type pointwise bandwidth selection adapted to the privacy noise.
//!
//! Candidate bandwidths form the geometric grid `h̄·a^{−j}`. Bandwidth `h`
//! is admissible when `f̂_h(t)` stays within `ψ(h, η)` of every `f̂_η(t)` with
//! `η ≤ h`; the selection is the largest admissible `h`. All grid lookups go
//! through the index `j`, never through float equality on `h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::PrivateDataset;
use crate::kernels::{l2_distance_sq, KernelSpec};
use crate::privacy::{noise_coefficient, Mechanism, PrivacyBudget};
use crate::simulate::density::{smoothed_target, Density};

/// `{h̄·a^{−j} : j ≥ 0} ∩ [h̲, h̄]`, largest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthGrid {
    a: f64,
    h_max: f64,
    h_min: f64,
    n: usize,
    bandwidths: Vec<f64>,
}

impl BandwidthGrid {
    /// Checks `a·log(h̄√n)/√n ≤ h̄ ≤ 1` and sets `h̲ = (log(h̄√n) ∨ 1)/√n`.
    pub fn new(n: usize, a: f64, h_max: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!("n must be >= 3, got {n}")));
        }
        if !(a.is_finite() && a > 1.0) {
            return Err(Error::InvalidGrid(format!("ratio a must exceed 1, got {a}")));
        }
        if !(h_max.is_finite() && h_max > 0.0) {
            return Err(Error::InvalidGrid(format!("h_max must be positive, got {h_max}")));
        }
        let root_n = (n as f64).sqrt();
        let log_term = (h_max * root_n).ln();
        if h_max > 1.0 {
            return Err(Error::InvalidGrid(format!("h_max = {h_max} violates h_max <= 1")));
        }
        if a * log_term / root_n > h_max {
            return Err(Error::InvalidGrid(format!(
                "a*log(h_max*sqrt(n))/sqrt(n) = {:.6} exceeds h_max = {h_max} (n = {n}, a = {a})",
                a * log_term / root_n
            )));
        }
        let h_min = log_term.max(1.0) / root_n;
        let mut bandwidths = Vec::new();
        let mut j = 0;
        loop {
            let h = h_max * a.powi(-j);
            if h < h_min {
                break;
            }
            bandwidths.push(h);
            j += 1;
        }
        if bandwidths.is_empty() {
            return Err(Error::InvalidGrid(format!(
                "no grid element in [{h_min}, {h_max}]"
            )));
        }
        Ok(BandwidthGrid { a, h_max, h_min, n, bandwidths })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn len(&self) -> usize {
        self.bandwidths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bandwidths.is_empty()
    }

    /// `j` with `h = h̄·a^{−j}`, if `h` is (to rounding) a grid element.
    pub fn index_of(&self, h: f64) -> Option<usize> {
        if !(h.is_finite() && h > 0.0) {
            return None;
        }
        let j = ((self.h_max / h).ln() / self.a.ln()).round();
        if j < 0.0 || j as usize >= self.bandwidths.len() {
            return None;
        }
        let j = j as usize;
        ((self.bandwidths[j] - h).abs() <= 1e-9 * h).then_some(j)
    }
}

/// Grid construction under its usual name.
pub fn build_grid(n: usize, a: f64, h_max: f64) -> Result<BandwidthGrid> {
    BandwidthGrid::new(n, a, h_max)
}

/// Selection parameters. `budget` is the total budget; it is composed over
/// the grid before any noise constant is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LepskiConfig {
    pub kappa: f64,
    /// Known bound `M ≥ ‖f‖∞`.
    pub m_bound: f64,
    pub kernel: KernelSpec,
    pub mechanism: Mechanism,
    pub budget: PrivacyBudget,
    pub t: f64,
}

impl LepskiConfig {
    fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::invalid(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !(self.m_bound.is_finite() && self.m_bound > 0.0) {
            return Err(Error::invalid(format!("M must be > 0, got {}", self.m_bound)));
        }
        if !self.t.is_finite() {
            return Err(Error::invalid("evaluation point t must be finite"));
        }
        Ok(())
    }

    /// `(α/|H|, β/|H|)`.
    pub fn per_bandwidth_budget(&self, grid: &BandwidthGrid) -> Result<PrivacyBudget> {
        self.budget.compose(grid.len() as u64)
    }
}

/// Precomputed `v`, `λ` and `ψ` for one `(config, grid)` pair.
#[derive(Debug, Clone)]
pub struct Thresholds {
    grid: BandwidthGrid,
    kappa: f64,
    m_bound: f64,
    l2_norm_sq: f64,
    c: f64,
    v: Vec<f64>,
    lambda: Vec<f64>,
    /// `psi[j][k - j]` for `k ≥ j`.
    psi: Vec<Vec<f64>>,
}

impl Thresholds {
    pub fn new(cfg: &LepskiConfig, grid: &BandwidthGrid) -> Result<Self> {
        cfg.validate()?;
        let c = noise_coefficient(&cfg.kernel, &cfg.per_bandwidth_budget(grid)?, cfg.mechanism)?;
        Self::with_coefficient(cfg, grid, c)
    }

    /// As [`new`](Self::new) with the noise constant `C` given directly
    /// (`C = 0` is the non-private procedure).
    pub fn with_coefficient(cfg: &LepskiConfig, grid: &BandwidthGrid, c: f64) -> Result<Self> {
        cfg.validate()?;
        let n = grid.n() as f64;
        let hs = grid.bandwidths();
        let l2 = cfg.kernel.l2_norm_sq;
        let v: Vec<f64> = hs
            .iter()
            .map(|&h| (cfg.m_bound * l2 / (n * h) + c * c / (n * h * h)).sqrt())
            .collect();
        let lambda: Vec<f64> = (0..hs.len())
            .map(|j| (cfg.kappa * j as f64 * grid.a().ln()).sqrt().max(1.0))
            .collect();
        let mut psi = Vec::with_capacity(hs.len());
        for j in 0..hs.len() {
            let mut row = Vec::with_capacity(hs.len() - j);
            for k in j..hs.len() {
                let (h, eta) = (hs[j], hs[k]);
                let pair = cfg.m_bound / n * l2_distance_sq(&cfg.kernel, h, eta)?
                    + c * c / (n * h * h)
                    + c * c / (n * eta * eta);
                row.push(v[j] * lambda[j] + pair.sqrt() * lambda[k]);
            }
            psi.push(row);
        }
        Ok(Thresholds {
            grid: grid.clone(),
            kappa: cfg.kappa,
            m_bound: cfg.m_bound,
            l2_norm_sq: l2,
            c,
            v,
            lambda,
            psi,
        })
    }

    pub fn grid(&self) -> &BandwidthGrid {
        &self.grid
    }

    pub fn noise_constant(&self) -> f64 {
        self.c
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `v(h_j)`.
    pub fn v(&self, j: usize) -> f64 {
        self.v[j]
    }

    /// `v²(h) = M∫K²/(nh) + C²/(nh²)` at any `h`, on the grid or not.
    pub fn v2_at(&self, h: f64) -> f64 {
        let n = self.grid.n() as f64;
        self.m_bound * self.l2_norm_sq / (n * h) + self.c * self.c / (n * h * h)
    }

    /// `λ(h_j) = max(1, √(κ log(h̄/h_j)))`, with `log(h̄/h_j) = j log a`.
    pub fn lambda(&self, j: usize) -> f64 {
        self.lambda[j]
    }

    /// `ψ(h_j, h_k)` for `k ≥ j` (that is, `η ≤ h`).
    pub fn psi(&self, j: usize, k: usize) -> f64 {
        assert!(k >= j, "psi requires eta <= h");
        self.psi[j][k - j]
    }

    /// Whether `h_j` satisfies every pairwise condition.
    fn admissible(&self, estimates: &[f64], j: usize) -> bool {
        (j..estimates.len()).all(|k| (estimates[j] - estimates[k]).abs() <= self.psi(j, k))
    }

    fn check_estimates(&self, estimates: &[f64]) -> Result<()> {
        if estimates.len() != self.grid.len() {
            return Err(Error::invalid(format!(
                "{} estimates for a grid of {} bandwidths",
                estimates.len(),
                self.grid.len()
            )));
        }
        if estimates.iter().any(|e| !e.is_finite()) {
            return Err(Error::Numerical("non-finite estimate".into()));
        }
        Ok(())
    }

    /// Index of `ĥ` given `f̂_{h_j}(t)` for every grid element, largest `h`
    /// first. The smallest bandwidth is always admissible.
    pub fn select_index(&self, estimates: &[f64]) -> Result<usize> {
        self.check_estimates(estimates)?;
        Ok((0..estimates.len())
            .find(|&j| self.admissible(estimates, j))
            .expect("the last grid element is always admissible"))
    }

    /// [`select_index`](Self::select_index) with every pairwise check recorded.
    pub fn select_with_trace(&self, estimates: &[f64], t: f64) -> Result<SelectionTrace> {
        let selected = self.select_index(estimates)?;
        let hs = self.grid.bandwidths();
        let mut checks = Vec::new();
        for j in 0..hs.len() {
            for k in j..hs.len() {
                let diff = (estimates[j] - estimates[k]).abs();
                let psi = self.psi(j, k);
                checks.push(PairCheck { h: hs[j], eta: hs[k], abs_diff: diff, psi, holds: diff <= psi });
            }
        }
        Ok(SelectionTrace {
            t,
            n: self.grid.n(),
            kappa: self.kappa,
            noise_constant: self.c,
            bandwidths: hs.to_vec(),
            estimates: estimates.to_vec(),
            admissible: (0..hs.len()).map(|j| self.admissible(estimates, j)).collect(),
            checks,
            selected_h: hs[selected],
            selected_index: selected,
        })
    }

    /// Index of `h*`: the largest `h` with `|f_η(t) − f(t)| ≤ v(h)λ(h)/2` for
    /// all `η ≤ h`, given the biases `|f_{h_j}(t) − f(t)|`. When no grid
    /// element qualifies, the smallest one is returned.
    pub fn oracle_index(&self, abs_bias: &[f64]) -> Result<usize> {
        self.check_estimates(abs_bias)?;
        let last = abs_bias.len() - 1;
        Ok((0..abs_bias.len())
            .find(|&j| (j..abs_bias.len()).all(|k| abs_bias[k] <= 0.5 * self.v[j] * self.lambda[j]))
            .unwrap_or(last))
    }
}

/// One `|f̂_h − f̂_η| ≤ ψ(h, η)` check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub h: f64,
    pub eta: f64,
    pub abs_diff: f64,
    pub psi: f64,
    pub holds: bool,
}

/// Full record of one selection, for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub t: f64,
    pub n: usize,
    pub kappa: f64,
    pub noise_constant: f64,
    pub bandwidths: Vec<f64>,
    pub estimates: Vec<f64>,
    pub admissible: Vec<bool>,
    pub checks: Vec<PairCheck>,
    pub selected_h: f64,
    pub selected_index: usize,
}

/// `v²(h)` for the given configuration.
pub fn v2(cfg: &LepskiConfig, grid: &BandwidthGrid, h: f64) -> Result<f64> {
    let c = noise_coefficient(&cfg.kernel, &cfg.per_bandwidth_budget(grid)?, cfg.mechanism)?;
    crate::estimator::variance_bound_with_coefficient(cfg.kernel.l2_norm_sq, c, cfg.m_bound, grid.n(), h)
}

/// `v²(h, η) = (M/n)∫(K_h − K_η)² + C²/(nh²) + C²/(nη²)`.
pub fn v2_pair(cfg: &LepskiConfig, grid: &BandwidthGrid, h: f64, eta: f64) -> Result<f64> {
    let c = noise_coefficient(&cfg.kernel, &cfg.per_bandwidth_budget(grid)?, cfg.mechanism)?;
    let n = grid.n() as f64;
    Ok(cfg.m_bound / n * l2_distance_sq(&cfg.kernel, h, eta)? + c * c / (n * h * h) + c * c / (n * eta * eta))
}

/// `λ(h) = max(1, √(κ log(h̄/h)))`.
pub fn lambda(kappa: f64, grid: &BandwidthGrid, h: f64) -> Result<f64> {
    let j = grid.index_of(h).ok_or(Error::MissingBandwidth { h })?;
    Ok((kappa * j as f64 * grid.a().ln()).sqrt().max(1.0))
}

/// `ψ(h, η) = v(h)λ(h) + v(h, η)λ(η)` for `η ≤ h`.
pub fn psi(cfg: &LepskiConfig, grid: &BandwidthGrid, h: f64, eta: f64) -> Result<f64> {
    if eta > h {
        return Err(Error::invalid(format!("psi requires eta <= h, got eta = {eta}, h = {h}")));
    }
    Ok(v2(cfg, grid, h)?.sqrt() * lambda(cfg.kappa, grid, h)?
        + v2_pair(cfg, grid, h, eta)?.sqrt() * lambda(cfg.kappa, grid, eta)?)
}

/// `f̂_h(cfg.t)` for every grid bandwidth in a released dataset.
pub fn dataset_estimates(dataset: &PrivateDataset, cfg: &LepskiConfig, grid: &BandwidthGrid) -> Result<Vec<f64>> {
    grid.bandwidths().iter().map(|&h| dataset.aggregate(h, cfg.t)).collect()
}

/// `ĥ` for a released dataset, with its selection trace.
pub fn select_adaptive(dataset: &PrivateDataset, cfg: &LepskiConfig, grid: &BandwidthGrid) -> Result<SelectionTrace> {
    if dataset.n() != grid.n() {
        return Err(Error::invalid(format!(
            "grid built for n = {} but the dataset has {} owners",
            grid.n(),
            dataset.n()
        )));
    }
    let estimates = dataset_estimates(dataset, cfg, grid)?;
    Thresholds::new(cfg, grid)?.select_with_trace(&estimates, cfg.t)
}

/// `|f_{h_j}(t) − f(t)|` for every grid bandwidth.
pub fn grid_biases(density: Density, spec: &KernelSpec, grid: &BandwidthGrid, t: f64) -> Result<Vec<f64>> {
    let f = density.pdf(t);
    grid.bandwidths()
        .iter()
        .map(|&h| Ok((smoothed_target(density, spec, h, t)? - f).abs()))
        .collect()
}

/// `h*` for a known density (simulation only).
pub fn select_oracle(density: Density, cfg: &LepskiConfig, grid: &BandwidthGrid) -> Result<f64> {
    let thr = Thresholds::new(cfg, grid)?;
    let bias = grid_biases(density, &cfg.kernel, grid, cfg.t)?;
    Ok(grid.bandwidths()[thr.oracle_index(&bias)?])
}

/// The bias–variance benchmark
/// `r_n = inf_h [ sup_{η ≤ h} |f_η(t) − f(t)|² + M∫K² log n/(nh) + C² log n/(nh²) ]`
/// over `h ∈ [h̲, 1]`. Scanned on 256 log-spaced points, then refined around
/// the best point until the value moves by less than `1e-4` relative. The
/// supremum over `η` runs over every bandwidth evaluated so far below `h`.
pub fn r_n(density: Density, cfg: &LepskiConfig, grid: &BandwidthGrid) -> Result<RiskBenchmark> {
    cfg.validate()?;
    let c = noise_coefficient(&cfg.kernel, &cfg.per_bandwidth_budget(grid)?, cfg.mechanism)?;
    let n = grid.n() as f64;
    let log_n = n.ln();
    let f = density.pdf(cfg.t);
    let variance = |h: f64| (cfg.m_bound * cfg.kernel.l2_norm_sq / (n * h) + c * c / (n * h * h)) * log_n;
    let bias2 = |h: f64| -> Result<f64> { Ok((smoothed_target(density, &cfg.kernel, h, cfg.t)? - f).powi(2)) };

    // Evaluated (h, bias²) pairs, kept sorted by h.
    let mut evals: Vec<(f64, f64)> = Vec::new();
    let add = |lo: f64, hi: f64, evals: &mut Vec<(f64, f64)>| -> Result<()> {
        for i in 0..256 {
            let h = lo * (hi / lo).powf(i as f64 / 255.0);
            evals.push((h, bias2(h)?));
        }
        evals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
        Ok(())
    };
    let objective = |evals: &[(f64, f64)]| -> (usize, f64) {
        let mut running = 0.0_f64;
        let mut best = (0, f64::INFINITY);
        for (i, &(h, b2)) in evals.iter().enumerate() {
            running = running.max(b2);
            let value = running + variance(h);
            if value < best.1 {
                best = (i, value);
            }
        }
        best
    };

    let h_lo = grid.h_min().min(1.0);
    add(h_lo, 1.0, &mut evals)?;
    let (mut idx, mut value) = objective(&evals);
    for _ in 0..20 {
        let lo = evals[idx.saturating_sub(1)].0;
        let hi = evals[(idx + 1).min(evals.len() - 1)].0;
        if hi <= lo * (1.0 + 1e-12) {
            break;
        }
        add(lo, hi, &mut evals)?;
        let (i, v) = objective(&evals);
        let done = (value - v).abs() <= 1e-4 * v;
        idx = i;
        value = v;
        if done {
            break;
        }
    }
    Ok(RiskBenchmark { value, argmin: evals[idx].0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskBenchmark {
    pub value: f64,
    pub argmin: f64,
}

/// Smallest integer `κ` for which the adaptive risk bound's proof goes
/// through: `κ′/2 − 2 > 0` with `κ′ = κ/64 ∧ κC/(32‖K‖∞)` (Laplace) or
/// `κ′ = κ/8` (Gaussian process). `budget` is the per-bandwidth budget.
pub fn theoretical_kappa(spec: &KernelSpec, mechanism: Mechanism, budget: &PrivacyBudget) -> Result<f64> {
    let bound = match mechanism {
        Mechanism::Laplace => {
            let c = noise_coefficient(spec, budget, mechanism)?;
            256.0_f64.max(128.0 * spec.sup_norm / c)
        }
        Mechanism::GaussianProcess => 32.0,
    };
    Ok(bound.floor() + 1.0)
}
