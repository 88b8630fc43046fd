use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use privkde::estimator::BandwidthNoise;
use privkde::lepski::theoretical_kappa;
use privkde::simulate::run_sweep;
use privkde::{
    audit_privacy, build_grid, fmt_f64, noise_coefficient, rng, select_adaptive, AuditConfig,
    BandwidthRule, DatasetMetadata, Density, KernelName, LepskiConfig, Mechanism, MseConfig, PrivacyBudget,
    PrivateCurve, PrivateDataset, Releaser,
};
use rayon::prelude::*;

use crate::config::{BandwidthSpec, RunConfig};
use crate::error::{CliError, CliResult};
use crate::{AdaptArgs, AuditArgs, Budget, EstimateArgs, ReleaseArgs, SimulateArgs};

fn parse_kernel(s: &str) -> CliResult<KernelName> {
    Ok(s.parse::<KernelName>()?)
}

fn parse_mechanism(s: &str) -> CliResult<Mechanism> {
    Ok(s.parse::<Mechanism>()?)
}

fn budget(b: &Budget) -> CliResult<PrivacyBudget> {
    Ok(PrivacyBudget::new(b.alpha, b.beta)?)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| CliError::config(format!("{what}: cannot parse `{}`", v.trim())))
        })
        .collect()
}

/// `lo:hi:count` (inclusive, evenly spaced) or a comma-separated list.
pub fn parse_points(s: &str) -> CliResult<Vec<f64>> {
    let pts = if let Some((lo, rest)) = s.split_once(':') {
        let (hi, count) = rest
            .split_once(':')
            .ok_or_else(|| CliError::config(format!("points `{s}`: expected lo:hi:count")))?;
        let bad = || CliError::config(format!("points `{s}`: expected lo:hi:count"));
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let count: usize = count.trim().parse().map_err(|_| bad())?;
        match count {
            0 => return Err(CliError::config("points: count must be at least 1")),
            1 => vec![lo],
            _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
        }
    } else {
        parse_list(s, "points")?
    };
    if pts.iter().any(|p| !p.is_finite()) || pts.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CliError::config(format!("points `{s}`: must be finite and strictly increasing")));
    }
    Ok(pts)
}

/// Observations, one per line; blank lines and `#` comments are skipped.
pub fn read_observations(path: &Path) -> CliResult<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut xs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let x: f64 = line
            .parse()
            .map_err(|_| CliError::data(format!("{} line {}: `{line}` is not a number", path.display(), i + 1)))?;
        if !x.is_finite() {
            return Err(CliError::data(format!("{} line {}: value is not finite", path.display(), i + 1)));
        }
        xs.push(x);
    }
    if xs.is_empty() {
        return Err(CliError::data(format!("{}: no observations", path.display())));
    }
    Ok(xs)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::data(format!("{}: {e}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::data(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn meta_path(data: &Path, meta: Option<&PathBuf>) -> PathBuf {
    meta.cloned().unwrap_or_else(|| data.with_extension("json"))
}

fn load_dataset(data: &Path, meta: Option<&PathBuf>) -> CliResult<(DatasetMetadata, PrivateDataset)> {
    let mp = meta_path(data, meta);
    let text = std::fs::read_to_string(&mp).map_err(|e| CliError::data(format!("cannot read {}: {e}", mp.display())))?;
    let m: DatasetMetadata =
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", mp.display())))?;
    let f = File::open(data).map_err(|e| CliError::data(format!("cannot read {}: {e}", data.display())))?;
    let ds = PrivateDataset::read_csv(io::BufReader::new(f), &m)?;
    Ok((m, ds))
}

pub fn run_config(a: &ReleaseArgs, n: usize, bandwidths: BandwidthSpec) -> RunConfig {
    RunConfig {
        subcommand: "release".into(),
        kernel: a.kernel.clone(),
        mechanism: a.mechanism.clone(),
        alpha: a.budget.alpha,
        beta: a.budget.beta,
        n,
        bandwidths,
        t: None,
        points: Some(a.points.clone()),
        seed: a.seed,
        output: a.out.display().to_string(),
        input: Some(a.input.display().to_string()),
    }
}

pub fn release(a: ReleaseArgs) -> CliResult<()> {
    let kernel = parse_kernel(&a.kernel)?;
    let mechanism = parse_mechanism(&a.mechanism)?;
    let total = budget(&a.budget)?;
    let points = parse_points(&a.points)?;
    let xs = read_observations(&a.input)?;
    let n = xs.len();

    let (spec_h, hs) = match (&a.h, a.grid_a, a.h_max) {
        (Some(h), None, None) => {
            let hs: Vec<f64> = parse_list(h, "h")?;
            (BandwidthSpec::Fixed { values: hs.clone() }, hs)
        }
        (None, Some(ga), Some(hm)) => {
            let g = build_grid(n, ga, hm)?;
            (BandwidthSpec::Grid { a: ga, h_max: hm }, g.bandwidths().to_vec())
        }
        _ => return Err(CliError::config("give either --h or both --grid-a and --h-max")),
    };
    let per_h = total.compose(hs.len() as u64)?;
    let spec = kernel.spec();

    let mut curves: Vec<PrivateCurve> = Vec::with_capacity(n * hs.len());
    let mut noise = Vec::with_capacity(hs.len());
    for (k, &h) in hs.iter().enumerate() {
        let rel = Releaser::new(&spec, mechanism, &points, h, &per_h)?;
        let batch: Vec<PrivateCurve> = xs
            .par_iter()
            .enumerate()
            .map(|(i, &x)| {
                let mut s = rng::stream(a.seed, k as u64, i as u64);
                rel.release(x, i as u64, &mut s)
            })
            .collect::<privkde::Result<_>>()?;
        curves.extend(batch);
        noise.push(BandwidthNoise { h, noise_scale: rel.noise_scale(), jitter: rel.jitter() });
    }
    let ds = PrivateDataset::new(curves, per_h)?;
    noise.sort_by(|p, q| q.h.total_cmp(&p.h));

    let run = run_config(&a, n, spec_h);
    let meta = DatasetMetadata {
        kernel,
        mechanism,
        budget: per_h,
        noise_coefficient: noise_coefficient(&spec, &per_h, mechanism)?,
        grid: points,
        bandwidths: noise,
        n,
        run_config: serde_json::to_value(&run).map_err(|e| CliError::data(e.to_string()))?,
    };

    let mut w = create(&a.out)?;
    ds.write_csv(&mut w)?;
    w.flush().map_err(io_err(&a.out))?;
    let mp = a.out.with_extension("json");
    write_json(&mp, &meta)?;
    let cp = a.out.with_extension("cfg");
    std::fs::write(&cp, run.to_config_file()).map_err(io_err(&cp))?;
    println!(
        "released n={} bandwidths={} points={} alpha_eff={} beta_eff={} csv={} meta={}",
        n,
        hs.len(),
        meta.grid.len(),
        fmt_f64(per_h.alpha_eff()),
        fmt_f64(per_h.beta_eff()),
        a.out.display(),
        mp.display()
    );
    Ok(())
}

pub fn estimate(a: EstimateArgs) -> CliResult<()> {
    let (_, ds) = load_dataset(&a.data, a.meta.as_ref())?;
    let pairs: Vec<(f64, f64)> = match a.t {
        Some(t) => vec![(t, ds.aggregate(a.h, t)?)],
        None => ds.grid().iter().copied().zip(ds.aggregate_curve(a.h)?).collect(),
    };
    let mut body = String::from("t,h,f_hat\n");
    for (t, v) in pairs {
        let v = if a.clip_zero { v.max(0.0) } else { v };
        body.push_str(&format!("{},{},{}\n", fmt_f64(t), fmt_f64(a.h), fmt_f64(v)));
    }
    match &a.out {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io_err(p))
        }
        None => io::stdout()
            .write_all(body.as_bytes())
            .map_err(|e| CliError::data(e.to_string())),
    }
}

pub fn adapt(a: AdaptArgs) -> CliResult<()> {
    let (meta, ds) = load_dataset(&a.data, a.meta.as_ref())?;
    let recorded: Option<RunConfig> = serde_json::from_value(meta.run_config.clone()).ok();
    let (ga, hm) = match (a.grid_a, a.h_max, recorded.map(|r| r.bandwidths)) {
        (Some(ga), Some(hm), _) => (ga, hm),
        (ga, hm, Some(BandwidthSpec::Grid { a: ra, h_max: rh })) => (ga.unwrap_or(ra), hm.unwrap_or(rh)),
        _ => {
            return Err(CliError::config(
                "the dataset was not released on a geometric grid; pass --grid-a and --h-max",
            ))
        }
    };
    let grid = build_grid(ds.n(), ga, hm)?;
    let total = PrivacyBudget::new(meta.budget.alpha(), meta.budget.beta())?;
    let spec = meta.kernel.spec();
    let mut cfg = LepskiConfig {
        kappa: a.kappa,
        m_bound: a.m_bound,
        kernel: spec,
        mechanism: meta.mechanism,
        budget: total,
        t: a.t,
    };
    let per_h = cfg.per_bandwidth_budget(&grid)?;
    if per_h.alpha_eff() != meta.budget.alpha_eff() {
        return Err(CliError::config(format!(
            "grid has {} bandwidths but the dataset budget was split over {}",
            grid.len(),
            meta.budget.n_releases()
        )));
    }
    if a.kappa_theory {
        cfg.kappa = theoretical_kappa(&spec, meta.mechanism, &per_h)?;
    }
    let trace = select_adaptive(&ds, &cfg, &grid)?;
    let tp = a.trace.clone().unwrap_or_else(|| a.data.with_extension("trace.json"));
    write_json(&tp, &trace)?;
    println!(
        "h_hat={} f_hat={} t={} kappa={} trace={}",
        fmt_f64(trace.selected_h),
        fmt_f64(trace.estimates[trace.selected_index]),
        fmt_f64(a.t),
        fmt_f64(cfg.kappa),
        tp.display()
    );
    Ok(())
}

fn parse_rule(s: &str) -> CliResult<BandwidthRule> {
    let bad = || CliError::config(format!("rule `{s}`: expected fixed:H, rate:P, oracle or adaptive"));
    Ok(match s.split_once(':') {
        Some(("fixed", h)) => BandwidthRule::Fixed { h: h.parse().map_err(|_| bad())? },
        Some(("rate", p)) => BandwidthRule::Rate { exponent: p.parse().map_err(|_| bad())? },
        None if s == "oracle" => BandwidthRule::Oracle,
        None if s == "adaptive" => BandwidthRule::Adaptive,
        _ => return Err(bad()),
    })
}

pub fn simulate(a: SimulateArgs) -> CliResult<()> {
    let density: Density = a.density.parse()?;
    let mut cfg = MseConfig::new(density, parse_kernel(&a.kernel)?, parse_mechanism(&a.mechanism)?, budget(&a.budget)?);
    cfg.private = !a.no_noise;
    cfg.t = a.t;
    cfg.replications = a.reps;
    cfg.seed = a.seed;
    cfg.kappa = a.kappa;
    cfg.grid_a = a.grid_a;
    cfg.grid_h_max = a.h_max;
    cfg.m_bound = a.m_bound;
    let rule = parse_rule(&a.rule)?;
    let ns: Vec<usize> = parse_list(&a.ns, "ns")?;
    let report = run_sweep(&cfg, &ns, rule)?;

    let mut w = create(&a.out)?;
    report.write_csv(&mut w)?;
    w.flush().map_err(io_err(&a.out))?;
    let jp = a.out.with_extension("json");
    write_json(&jp, &report)?;
    let slope = report.fit.map(|f| fmt_f64(f.slope)).unwrap_or_else(|| "none".into());
    println!("simulated rule={} rows={} slope={} csv={} summary={}", rule.label(), report.rows.len(), slope, a.out.display(), jp.display());
    Ok(())
}

pub fn audit(a: AuditArgs) -> CliResult<()> {
    let mut cfg = AuditConfig::adversarial(
        parse_mechanism(&a.mechanism)?,
        parse_kernel(&a.kernel)?,
        a.h,
        budget(&a.budget)?,
    );
    if let Some(x) = a.x {
        let shift = x - cfg.x;
        cfg.x = x;
        cfg.x_prime += shift;
        cfg.grid.iter_mut().for_each(|g| *g += shift);
    }
    if let Some(xp) = a.x_prime {
        cfg.x_prime = xp;
    }
    cfg.samples = a.samples;
    cfg.seed = a.seed;
    cfg.scale_factor = a.scale_factor;
    let report = audit_privacy(&cfg)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::data(e.to_string()))?;
    println!("{text}");
    if let Some(p) = &a.out {
        write_json(p, &report)?;
    }
    Ok(())
}
