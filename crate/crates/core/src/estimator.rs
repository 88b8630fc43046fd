//! The averaged private density estimator `f̂_h(t) = (1/n) Σᵢ Z_{i,h}(t)`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::GpReleaser;
use crate::kernels::{check_bandwidth, KernelName, KernelSpec};
use crate::privacy::{calibrate, noise_coefficient, sample_laplace, Mechanism, PrivacyBudget};

/// One owner's released noisy kernel curve `Z_{i,h}` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivateCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub mechanism: Mechanism,
    pub h: f64,
    /// `b` (Laplace) or `σ` (Gaussian process) used for this curve.
    pub noise_scale: f64,
    pub owner_id: u64,
}

impl PrivateCurve {
    fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.grid.len() != self.values.len() {
            return Err(Error::Data(format!(
                "owner {}: grid has {} points but {} values",
                self.owner_id,
                self.grid.len(),
                self.values.len()
            )));
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Data(format!("owner {}: grid is not strictly increasing", self.owner_id)));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("owner {}: non-finite released value", self.owner_id)));
        }
        check_bandwidth(self.h)?;
        Ok(())
    }
}

/// Per-point Laplace release of a kernel curve. Each grid point is a separate
/// release, so the budget is split over the `m` points internally.
#[derive(Debug, Clone)]
pub struct LaplaceReleaser {
    spec: KernelSpec,
    grid: Vec<f64>,
    h: f64,
    scale: f64,
}

impl LaplaceReleaser {
    pub fn new(spec: &KernelSpec, grid: &[f64], h: f64, budget: &PrivacyBudget) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::invalid("empty evaluation grid"));
        }
        let per_point = budget.compose(grid.len() as u64)?;
        let noise = calibrate(spec, h, &per_point, Mechanism::Laplace)?;
        Ok(LaplaceReleaser {
            spec: *spec,
            grid: grid.to_vec(),
            h,
            scale: noise.scale,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn release<R: Rng + ?Sized>(&self, x: f64, owner_id: u64, rng: &mut R) -> Result<PrivateCurve> {
        if !x.is_finite() {
            return Err(Error::invalid(format!("observation {x} is not finite")));
        }
        let values = self
            .grid
            .iter()
            .map(|&t| self.spec.eval_scaled(x - t, self.h) + self.scale * sample_laplace(rng))
            .collect();
        Ok(PrivateCurve {
            grid: self.grid.clone(),
            values,
            mechanism: Mechanism::Laplace,
            h: self.h,
            noise_scale: self.scale,
            owner_id,
        })
    }
}

/// Either release mechanism behind one interface.
#[derive(Debug, Clone)]
pub enum Releaser {
    Laplace(LaplaceReleaser),
    GaussianProcess(GpReleaser),
}

impl Releaser {
    /// `budget` is the per-bandwidth budget (already composed over the
    /// bandwidth set, if several bandwidths are released).
    pub fn new(
        spec: &KernelSpec,
        mechanism: Mechanism,
        grid: &[f64],
        h: f64,
        budget: &PrivacyBudget,
    ) -> Result<Self> {
        Ok(match mechanism {
            Mechanism::Laplace => Releaser::Laplace(LaplaceReleaser::new(spec, grid, h, budget)?),
            Mechanism::GaussianProcess => Releaser::GaussianProcess(GpReleaser::new(spec, grid, h, budget)?),
        })
    }

    pub fn release<R: Rng + ?Sized>(&self, x: f64, owner_id: u64, rng: &mut R) -> Result<PrivateCurve> {
        match self {
            Releaser::Laplace(r) => r.release(x, owner_id, rng),
            Releaser::GaussianProcess(r) => r.release(x, owner_id, rng),
        }
    }

    pub fn noise_scale(&self) -> f64 {
        match self {
            Releaser::Laplace(r) => r.scale(),
            Releaser::GaussianProcess(r) => r.sigma(),
        }
    }

    /// Jitter added to the Gram matrix (always 0 for Laplace).
    pub fn jitter(&self) -> f64 {
        match self {
            Releaser::Laplace(_) => 0.0,
            Releaser::GaussianProcess(r) => r.gram().jitter_applied(),
        }
    }
}

/// Noise metadata for one released bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthNoise {
    pub h: f64,
    pub noise_scale: f64,
    pub jitter: f64,
}

/// Sidecar metadata written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub kernel: KernelName,
    pub mechanism: Mechanism,
    /// Budget composed over the released bandwidths. Laplace releases split
    /// it further over the grid points.
    pub budget: PrivacyBudget,
    /// `C_{α′β′}` for the per-bandwidth budget.
    pub noise_coefficient: f64,
    pub grid: Vec<f64>,
    pub bandwidths: Vec<BandwidthNoise>,
    pub n: usize,
    /// Free-form configuration that produced the dataset.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub run_config: serde_json::Value,
}

/// Releases from `n` owners, each covering the same grid and bandwidth set.
#[derive(Debug, Clone)]
pub struct PrivateDataset {
    curves: Vec<PrivateCurve>,
    budget: PrivacyBudget,
    n: usize,
    grid: Vec<f64>,
    mechanism: Mechanism,
    /// Decreasing.
    bandwidths: Vec<f64>,
    /// `by_bandwidth[k]` lists curve indices for `bandwidths[k]`, by owner id.
    by_bandwidth: Vec<Vec<usize>>,
}

fn same_bandwidth(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

impl PrivateDataset {
    /// `budget` is recorded as given; see [`DatasetMetadata::budget`].
    pub fn new(curves: Vec<PrivateCurve>, budget: PrivacyBudget) -> Result<Self> {
        let first = curves.first().ok_or_else(|| Error::Data("dataset has no curves".into()))?;
        let grid = first.grid.clone();
        let mechanism = first.mechanism;
        let mut bandwidths: Vec<f64> = Vec::new();
        for c in &curves {
            c.validate()?;
            if c.grid != grid {
                return Err(Error::Data(format!("owner {}: grid differs from the dataset grid", c.owner_id)));
            }
            if c.mechanism != mechanism {
                return Err(Error::Data(format!("owner {}: mixed mechanisms", c.owner_id)));
            }
            if !bandwidths.iter().any(|&h| same_bandwidth(h, c.h)) {
                bandwidths.push(c.h);
            }
        }
        bandwidths.sort_by(|a, b| b.partial_cmp(a).expect("finite"));

        let mut per_owner: BTreeMap<u64, BTreeSet<usize>> = BTreeMap::new();
        let mut by_bandwidth = vec![Vec::new(); bandwidths.len()];
        for (idx, c) in curves.iter().enumerate() {
            let k = bandwidths
                .iter()
                .position(|&h| same_bandwidth(h, c.h))
                .expect("collected above");
            if !per_owner.entry(c.owner_id).or_default().insert(k) {
                return Err(Error::Data(format!(
                    "owner {} released bandwidth {} twice",
                    c.owner_id, c.h
                )));
            }
            by_bandwidth[k].push(idx);
        }
        if let Some((owner, set)) = per_owner.iter().find(|(_, s)| s.len() != bandwidths.len()) {
            return Err(Error::Data(format!(
                "owner {owner} released {} of {} bandwidths",
                set.len(),
                bandwidths.len()
            )));
        }
        for list in &mut by_bandwidth {
            list.sort_by_key(|&i| curves[i].owner_id);
        }
        Ok(PrivateDataset {
            n: per_owner.len(),
            curves,
            budget,
            grid,
            mechanism,
            bandwidths,
            by_bandwidth,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn budget(&self) -> &PrivacyBudget {
        &self.budget
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    /// Released bandwidths, largest first.
    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn curves(&self) -> &[PrivateCurve] {
        &self.curves
    }

    pub fn bandwidth_index(&self, h: f64) -> Result<usize> {
        self.bandwidths
            .iter()
            .position(|&b| same_bandwidth(b, h))
            .ok_or(Error::MissingBandwidth { h })
    }

    pub fn grid_index(&self, t: f64) -> Result<usize> {
        let tol = 1e-10 * t.abs().max(1.0);
        self.grid
            .iter()
            .enumerate()
            .filter(|(_, &g)| (g - t).abs() <= tol)
            .min_by(|a, b| (a.1 - t).abs().partial_cmp(&(b.1 - t).abs()).expect("finite"))
            .map(|(j, _)| j)
            .ok_or(Error::OutOfGrid { t })
    }

    fn mean_at(&self, k: usize, j: usize) -> f64 {
        let list = &self.by_bandwidth[k];
        list.iter().map(|&i| self.curves[i].values[j]).sum::<f64>() / list.len() as f64
    }

    /// `f̂_h(t)`: the mean of the owners' releases at grid point `t`.
    pub fn aggregate(&self, h: f64, t: f64) -> Result<f64> {
        let k = self.bandwidth_index(h)?;
        let j = self.grid_index(t)?;
        Ok(self.mean_at(k, j))
    }

    /// `f̂_h` on the whole grid.
    pub fn aggregate_curve(&self, h: f64) -> Result<Vec<f64>> {
        let k = self.bandwidth_index(h)?;
        Ok((0..self.grid.len()).map(|j| self.mean_at(k, j)).collect())
    }

    /// Linear interpolation of `f̂_h` between grid points. A convenience for
    /// plotting; the pointwise risk guarantees only hold on the grid itself.
    pub fn interpolate(&self, h: f64, t: f64) -> Result<f64> {
        let k = self.bandwidth_index(h)?;
        if let Ok(j) = self.grid_index(t) {
            return Ok(self.mean_at(k, j));
        }
        let upper = self.grid.iter().position(|&g| g > t).ok_or(Error::OutOfGrid { t })?;
        if upper == 0 {
            return Err(Error::OutOfGrid { t });
        }
        let (t0, t1) = (self.grid[upper - 1], self.grid[upper]);
        let w = (t - t0) / (t1 - t0);
        Ok((1.0 - w) * self.mean_at(k, upper - 1) + w * self.mean_at(k, upper))
    }

    /// Writes `owner_id,h,t,z` rows, one per owner, bandwidth and grid point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Data(e.to_string());
        w.write_record(["owner_id", "h", "t", "z"]).map_err(io)?;
        let mut order: Vec<usize> = (0..self.curves.len()).collect();
        order.sort_by(|&a, &b| {
            let (ca, cb) = (&self.curves[a], &self.curves[b]);
            ca.owner_id
                .cmp(&cb.owner_id)
                .then(cb.h.partial_cmp(&ca.h).expect("finite"))
        });
        for i in order {
            let c = &self.curves[i];
            for (t, z) in c.grid.iter().zip(&c.values) {
                w.write_record([
                    c.owner_id.to_string(),
                    crate::fmt_f64(c.h),
                    crate::fmt_f64(*t),
                    crate::fmt_f64(*z),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))?;
        Ok(())
    }

    /// Reads rows written by [`write_csv`](Self::write_csv); mechanism,
    /// budget and noise scales come from the metadata sidecar.
    pub fn read_csv<R: Read>(input: R, meta: &DatasetMetadata) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            owner_id: u64,
            h: f64,
            t: f64,
            z: f64,
        }
        let mut reader = csv::Reader::from_reader(input);
        let mut curves: BTreeMap<(u64, usize), PrivateCurve> = BTreeMap::new();
        for (line, rec) in reader.deserialize::<Row>().enumerate() {
            // Header is line 1.
            let line = line + 2;
            let row = rec.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
            if !(row.h.is_finite() && row.t.is_finite() && row.z.is_finite()) {
                return Err(Error::Data(format!("line {line}: non-finite value")));
            }
            let k = meta
                .bandwidths
                .iter()
                .position(|b| same_bandwidth(b.h, row.h))
                .ok_or_else(|| Error::Data(format!("line {line}: bandwidth {} not in metadata", row.h)))?;
            let curve = curves.entry((row.owner_id, k)).or_insert_with(|| PrivateCurve {
                grid: Vec::new(),
                values: Vec::new(),
                mechanism: meta.mechanism,
                h: meta.bandwidths[k].h,
                noise_scale: meta.bandwidths[k].noise_scale,
                owner_id: row.owner_id,
            });
            curve.grid.push(row.t);
            curve.values.push(row.z);
        }
        let ds = PrivateDataset::new(curves.into_values().collect(), meta.budget)?;
        if ds.n != meta.n {
            return Err(Error::Data(format!(
                "metadata declares n = {} but the data has {} owners",
                meta.n, ds.n
            )));
        }
        Ok(ds)
    }
}

/// `v²(h) = M ∫K² / (n h) + C² / (n h²)`, an upper bound on `Var f̂_h(t)`
/// whenever `‖f‖∞ ≤ M`. `budget` is the per-bandwidth budget.
pub fn variance_bound(
    spec: &KernelSpec,
    mechanism: Mechanism,
    budget: &PrivacyBudget,
    m_bound: f64,
    n: usize,
    h: f64,
) -> Result<f64> {
    let c = noise_coefficient(spec, budget, mechanism)?;
    variance_bound_with_coefficient(spec.l2_norm_sq, c, m_bound, n, h)
}

/// [`variance_bound`] with the noise constant supplied directly; `c = 0` is
/// the classical non-private bound.
pub fn variance_bound_with_coefficient(l2_norm_sq: f64, c: f64, m_bound: f64, n: usize, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if !(m_bound.is_finite() && m_bound > 0.0) {
        return Err(Error::invalid(format!("sup-norm bound M must be > 0, got {m_bound}")));
    }
    let n = n as f64;
    Ok(m_bound * l2_norm_sq / (n * h) + c * c / (n * h * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn curve(owner: u64, h: f64, values: Vec<f64>) -> PrivateCurve {
        PrivateCurve {
            grid: (0..values.len()).map(|i| i as f64 * 0.5).collect(),
            values,
            mechanism: Mechanism::Laplace,
            h,
            noise_scale: 1.0,
            owner_id: owner,
        }
    }

    fn budget() -> PrivacyBudget {
        PrivacyBudget::new(1.0, 0.0).unwrap()
    }

    #[test]
    fn singleton_mean_is_the_release() {
        let ds = PrivateDataset::new(vec![curve(4, 0.3, vec![1.5, -2.0])], budget()).unwrap();
        assert_eq!(ds.aggregate(0.3, 0.5).unwrap(), -2.0);
        assert_eq!(ds.n(), 1);
    }

    #[test]
    fn identical_constant_curves() {
        let curves = (0..7).map(|i| curve(i, 0.3, vec![2.25; 3])).collect();
        let ds = PrivateDataset::new(curves, budget()).unwrap();
        assert_eq!(ds.aggregate(0.3, 1.0).unwrap(), 2.25);
    }

    #[test]
    fn lookup_errors() {
        let ds = PrivateDataset::new(vec![curve(0, 0.3, vec![1.0, 2.0])], budget()).unwrap();
        assert!(matches!(ds.aggregate(0.3, 0.25), Err(Error::OutOfGrid { .. })));
        assert!(matches!(ds.aggregate(0.4, 0.0), Err(Error::MissingBandwidth { .. })));
        assert!(matches!(ds.interpolate(0.3, 2.0), Err(Error::OutOfGrid { .. })));
        assert!(matches!(ds.interpolate(0.3, -0.1), Err(Error::OutOfGrid { .. })));
        assert!((ds.interpolate(0.3, 0.25).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn heterogeneous_datasets_rejected() {
        let mut c = curve(1, 0.3, vec![1.0, 2.0]);
        c.grid = vec![0.0, 0.6];
        assert!(PrivateDataset::new(vec![curve(0, 0.3, vec![1.0, 2.0]), c], budget()).is_err());
        // Owner 1 misses bandwidth 0.1.
        let curves = vec![
            curve(0, 0.3, vec![1.0]),
            curve(0, 0.1, vec![1.0]),
            curve(1, 0.3, vec![1.0]),
        ];
        assert!(PrivateDataset::new(curves, budget()).is_err());
        assert!(PrivateDataset::new(vec![], budget()).is_err());
        let mut bad = curve(0, 0.3, vec![1.0, f64::NAN]);
        assert!(PrivateDataset::new(vec![bad.clone()], budget()).is_err());
        bad.values = vec![1.0];
        assert!(PrivateDataset::new(vec![bad], budget()).is_err());
    }

    #[test]
    fn aggregate_is_linear_and_order_independent() {
        let curves: Vec<PrivateCurve> = (0..5)
            .map(|i| curve(i, 0.2, vec![i as f64 * 0.3 - 0.1, 1.0 / (i as f64 + 1.0)]))
            .collect();
        let ds = PrivateDataset::new(curves.clone(), budget()).unwrap();
        let scaled: Vec<PrivateCurve> = curves
            .iter()
            .map(|c| PrivateCurve {
                values: c.values.iter().map(|v| 3.5 * v).collect(),
                ..c.clone()
            })
            .collect();
        let ds2 = PrivateDataset::new(scaled, budget()).unwrap();
        let a = ds.aggregate(0.2, 0.5).unwrap();
        assert!((ds2.aggregate(0.2, 0.5).unwrap() - 3.5 * a).abs() < 1e-14);
        let mut rev = curves;
        rev.reverse();
        let ds3 = PrivateDataset::new(rev, budget()).unwrap();
        assert_eq!(ds3.aggregate(0.2, 0.5).unwrap(), a);
    }

    #[test]
    fn noiseless_aggregate_matches_direct_kde() {
        let spec = KernelName::Sinc.spec();
        let h = 0.3;
        let grid = [-0.5, 0.0, 0.7];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        let r = LaplaceReleaser::new(&spec, &grid, h, &budget()).unwrap().with_scale(0.0);
        let curves = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| r.release(x, i as u64, &mut rng).unwrap())
            .collect();
        let ds = PrivateDataset::new(curves, budget()).unwrap();
        for &t in &grid {
            let direct = xs
                .iter()
                .map(|&x| ((x - t) / h * std::f64::consts::PI).sin() / ((x - t) / h * std::f64::consts::PI) / h)
                .sum::<f64>()
                / xs.len() as f64;
            assert!((ds.aggregate(h, t).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn laplace_releaser_splits_budget_over_points() {
        let spec = KernelName::Sinc.spec();
        let one = LaplaceReleaser::new(&spec, &[0.0], 1.0, &budget()).unwrap();
        let four = LaplaceReleaser::new(&spec, &[0.0, 1.0, 2.0, 3.0], 1.0, &budget()).unwrap();
        assert!((one.scale() - 2.0).abs() < 1e-15);
        assert!((four.scale() - 8.0).abs() < 1e-14);
    }

    #[test]
    fn variance_bound_examples() {
        let v = variance_bound_with_coefficient(1.0, 1.0, 1.0, 100, 0.5).unwrap();
        assert!((v - 0.06).abs() < 1e-15);
        let v = variance_bound_with_coefficient(0.6, 0.0, 2.0, 50, 0.25).unwrap();
        assert!((v - 2.0 * 0.6 / (50.0 * 0.25)).abs() < 1e-15);
        assert!(variance_bound_with_coefficient(1.0, 1.0, 1.0, 0, 0.5).is_err());
        let spec = KernelName::Sinc.spec();
        let v = variance_bound(&spec, Mechanism::Laplace, &budget(), 1.0, 100, 0.5).unwrap();
        assert!((v - (1.0 / 50.0 + 8.0 / 25.0)).abs() < 1e-14);
    }

    #[test]
    fn csv_round_trip() {
        let spec = KernelName::Gaussian.spec();
        let total = PrivacyBudget::new(1.0, 0.1).unwrap();
        let per_h = total.compose(2).unwrap();
        let grid = [-1.0, 0.0, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut curves = Vec::new();
        let mut noise = Vec::new();
        for h in [0.5, 0.25] {
            let r = Releaser::new(&spec, Mechanism::GaussianProcess, &grid, h, &per_h).unwrap();
            noise.push(BandwidthNoise { h, noise_scale: r.noise_scale(), jitter: r.jitter() });
            for owner in 0..3 {
                curves.push(r.release(0.1 * owner as f64, owner, &mut rng).unwrap());
            }
        }
        let ds = PrivateDataset::new(curves, total.compose(2).unwrap()).unwrap();
        let meta = DatasetMetadata {
            kernel: KernelName::Gaussian,
            mechanism: Mechanism::GaussianProcess,
            budget: *ds.budget(),
            noise_coefficient: noise_coefficient(&spec, &per_h, Mechanism::GaussianProcess).unwrap(),
            grid: grid.to_vec(),
            bandwidths: noise,
            n: 3,
            run_config: serde_json::Value::Null,
        };
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 2 * 3);
        let back = PrivateDataset::read_csv(&buf[..], &meta).unwrap();
        for h in [0.5, 0.25] {
            assert_eq!(back.aggregate_curve(h).unwrap(), ds.aggregate_curve(h).unwrap());
        }
        let json = serde_json::to_string(&meta).unwrap();
        assert_eq!(serde_json::from_str::<DatasetMetadata>(&json).unwrap(), meta);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let meta = DatasetMetadata {
            kernel: KernelName::Sinc,
            mechanism: Mechanism::Laplace,
            budget: budget(),
            noise_coefficient: 1.0,
            grid: vec![0.0],
            bandwidths: vec![BandwidthNoise { h: 1.0, noise_scale: 2.0, jitter: 0.0 }],
            n: 1,
            run_config: serde_json::Value::Null,
        };
        let data = "owner_id,h,t,z\n0,1,0,0.5\n1,1,0,oops\n";
        let err = PrivateDataset::read_csv(data.as_bytes(), &meta).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let data = "owner_id,h,t,z\n0,2,0,0.5\n";
        let err = PrivateDataset::read_csv(data.as_bytes(), &meta).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
