//! Gaussian-process masking of whole kernel curves.
//!
//! A data owner releases `t ↦ K_h(x − t) + σ·Ξ(t)` on a finite grid, where `Ξ`
//! is a centred Gaussian process with covariance `k((s − t)/h)`. The noise is
//! calibrated once from the RKHS sensitivity `Δ′`, which bounds the
//! Mahalanobis distance on *every* finite grid, so refining the grid costs no
//! extra budget.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimator::PrivateCurve;
use crate::kernels::{check_bandwidth, KernelSpec};
use crate::privacy::{calibrate, Mechanism, PrivacyBudget};

/// Grids larger than this are rejected.
pub const MAX_GRID: usize = 4096;

/// Jitter escalation stops after `10^MAX_JITTER_STEPS · ε · m · k(0)`.
const MAX_JITTER_STEPS: i32 = 16;

/// Covariance matrix of the masking process on a grid, with its Cholesky
/// factor.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    points: Vec<f64>,
    h: f64,
    entries: DMatrix<f64>,
    jitter_applied: f64,
    factor: Cholesky<f64, Dyn>,
}

impl GramMatrix {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    /// Entries `k((tᵢ − tⱼ)/h)`, without jitter.
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Diagonal loading added to make the factorization succeed; 0 when the
    /// plain matrix factored.
    pub fn jitter_applied(&self) -> f64 {
        self.jitter_applied
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `entries + jitter·I`, the covariance actually sampled.
    pub fn effective_covariance(&self) -> DMatrix<f64> {
        &self.entries + DMatrix::identity(self.len(), self.len()) * self.jitter_applied
    }

    /// Lower-triangular `L` with `L Lᵀ = entries + jitter·I`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.factor.l()
    }

    /// Solves `(entries + jitter·I) w = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.len() {
            return Err(Error::invalid("right-hand side length differs from grid size"));
        }
        let v = DVector::from_column_slice(rhs);
        Ok(self.factor.solve(&v).as_slice().to_vec())
    }
}

/// Builds the Gram matrix of `k((tᵢ − tⱼ)/h)` and factors it, escalating the
/// diagonal jitter through `10^j · ε · m · k(0)`, `j = 0, 1, 2, …` only if the
/// plain factorization fails.
pub fn build_gram(spec: &KernelSpec, points: &[f64], h: f64) -> Result<GramMatrix> {
    if !spec.is_positive_definite {
        return Err(Error::UnsupportedKernel {
            kernel: spec.name.as_str(),
            context: "Gaussian-process release needs a positive definite kernel".into(),
        });
    }
    check_bandwidth(h)?;
    let m = points.len();
    if m == 0 || m > MAX_GRID {
        return Err(Error::invalid(format!("grid size {m} outside 1..={MAX_GRID}")));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("grid contains non-finite points"));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("grid contains duplicate points"));
    }

    let mut entries = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let v = spec.covariance((points[i] - points[j]) / h)?;
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }

    if let Some(factor) = Cholesky::new(entries.clone()) {
        return Ok(GramMatrix {
            points: points.to_vec(),
            h,
            entries,
            jitter_applied: 0.0,
            factor,
        });
    }
    let base = f64::EPSILON * m as f64 * spec.covariance(0.0)?;
    for step in 0..=MAX_JITTER_STEPS {
        let jitter = base * 10f64.powi(step);
        let loaded = &entries + DMatrix::identity(m, m) * jitter;
        if let Some(factor) = Cholesky::new(loaded) {
            return Ok(GramMatrix {
                points: points.to_vec(),
                h,
                entries,
                jitter_applied: jitter,
                factor,
            });
        }
    }
    Err(Error::DegenerateGram(format!(
        "Cholesky failed for m = {m}, h = {h} even with jitter {:e}",
        base * 10f64.powi(MAX_JITTER_STEPS)
    )))
}

/// One path `L z`, `z` i.i.d. standard normal.
pub fn sample_path<R: Rng + ?Sized>(gram: &GramMatrix, rng: &mut R) -> Vec<f64> {
    let m = gram.len();
    let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    let l = gram.factor.l_dirty();
    // Only the lower triangle of `l_dirty` is meaningful.
    (0..m)
        .map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum())
        .collect()
}

/// Reusable Gaussian-process releaser for one `(kernel, grid, h, budget)`:
/// the Gram factorization and `σ` are computed once and shared by all owners.
#[derive(Debug, Clone)]
pub struct GpReleaser {
    spec: KernelSpec,
    gram: GramMatrix,
    sigma: f64,
}

impl GpReleaser {
    pub fn new(spec: &KernelSpec, points: &[f64], h: f64, budget: &PrivacyBudget) -> Result<Self> {
        let noise = calibrate(spec, h, budget, Mechanism::GaussianProcess)?;
        let gram = build_gram(spec, points, h)?;
        Ok(GpReleaser {
            spec: *spec,
            gram,
            sigma: noise.scale,
        })
    }

    /// Overrides `σ`, e.g. for audit negative controls. Releases made after
    /// this call carry no privacy guarantee unless `sigma` is at least the
    /// calibrated value.
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    /// Exact curve `K_h(x − tⱼ)` on the grid.
    pub fn exact_curve(&self, x: f64) -> Vec<f64> {
        let h = self.gram.h;
        self.gram
            .points
            .iter()
            .map(|&t| self.spec.eval_scaled(x - t, h))
            .collect()
    }

    pub fn release<R: Rng + ?Sized>(&self, x: f64, owner_id: u64, rng: &mut R) -> Result<PrivateCurve> {
        if !x.is_finite() {
            return Err(Error::invalid(format!("observation {x} is not finite")));
        }
        let path = sample_path(&self.gram, rng);
        let values = self
            .exact_curve(x)
            .into_iter()
            .zip(path)
            .map(|(k, xi)| k + self.sigma * xi)
            .collect();
        Ok(PrivateCurve {
            grid: self.gram.points.clone(),
            values,
            mechanism: Mechanism::GaussianProcess,
            h: self.gram.h,
            noise_scale: self.sigma,
            owner_id,
        })
    }
}

/// Releases one owner's masked kernel curve. Builds the Gram matrix on every
/// call; use [`GpReleaser`] when many owners share the grid.
pub fn release_curve<R: Rng + ?Sized>(
    spec: &KernelSpec,
    x: f64,
    points: &[f64],
    h: f64,
    budget: &PrivacyBudget,
    rng: &mut R,
) -> Result<PrivateCurve> {
    GpReleaser::new(spec, points, h, budget)?.release(x, 0, rng)
}
