use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use privkde::simulate::smoothed_target;
use privkde::{
    build_gram, build_grid, rng, select_adaptive, Density, KernelName, LepskiConfig, Mechanism, PrivacyBudget,
    PrivateDataset, Releaser,
};

fn grid(m: usize) -> Vec<f64> {
    (0..m).map(|i| -3.0 + 6.0 * i as f64 / (m - 1) as f64).collect()
}

fn release(c: &mut Criterion) {
    let mut g = c.benchmark_group("release_curve");
    for m in [16usize, 64, 256] {
        let pts = grid(m);
        let lap = Releaser::new(
            &KernelName::Sinc.spec(),
            Mechanism::Laplace,
            &pts,
            0.5,
            &PrivacyBudget::new(1.0, 0.0).unwrap(),
        )
        .unwrap();
        let gp = Releaser::new(
            &KernelName::Gaussian.spec(),
            Mechanism::GaussianProcess,
            &pts,
            0.5,
            &PrivacyBudget::new(1.0, 0.01).unwrap(),
        )
        .unwrap();
        let mut s = rng::from_seed(1);
        g.bench_with_input(BenchmarkId::new("laplace", m), &m, |b, _| {
            b.iter(|| lap.release(black_box(0.3), 0, &mut s).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("gp", m), &m, |b, _| {
            b.iter(|| gp.release(black_box(0.3), 0, &mut s).unwrap())
        });
    }
    g.finish();
}

fn gram(c: &mut Criterion) {
    let mut g = c.benchmark_group("gram_cholesky");
    for m in [32usize, 128, 256] {
        let pts = grid(m);
        g.bench_with_input(BenchmarkId::from_parameter(m), &pts, |b, pts| {
            b.iter(|| build_gram(&KernelName::Sinc.spec(), pts, 0.5).unwrap())
        });
    }
    g.finish();
}

fn lepski(c: &mut Criterion) {
    let n = 2000;
    let bw = build_grid(n, 2.0, 1.0).unwrap();
    let cfg = LepskiConfig {
        kappa: 2.0,
        m_bound: 0.4,
        kernel: KernelName::Sinc.spec(),
        mechanism: Mechanism::Laplace,
        budget: PrivacyBudget::new(1.0, 0.0).unwrap(),
        t: 0.0,
    };
    let per_h = cfg.per_bandwidth_budget(&bw).unwrap();
    let mut s = rng::from_seed(2);
    let xs: Vec<f64> = (0..n).map(|_| Density::GaussianStd.sample(&mut s)).collect();
    let mut curves = Vec::new();
    for &h in bw.bandwidths() {
        let r = Releaser::new(&cfg.kernel, Mechanism::Laplace, &[0.0], h, &per_h).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            curves.push(r.release(x, i as u64, &mut s).unwrap());
        }
    }
    let ds = PrivateDataset::new(curves, per_h).unwrap();
    c.bench_function("lepski_select_n2000", |b| b.iter(|| select_adaptive(black_box(&ds), &cfg, &bw).unwrap()));
}

fn smoothing(c: &mut Criterion) {
    let mut g = c.benchmark_group("smoothed_target");
    for name in [KernelName::Sinc, KernelName::Gaussian, KernelName::Epanechnikov] {
        let spec = name.spec();
        g.bench_function(name.as_str(), |b| {
            b.iter(|| smoothed_target(Density::GaussianMixture, &spec, black_box(0.3), 0.2).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, release, gram, lepski, smoothing);
criterion_main!(benches);
