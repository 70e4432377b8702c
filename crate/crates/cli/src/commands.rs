//! The command implementations. Each returns a [`Report`] and leaves file
//! writing to the caller.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use dkappa_core::basis::{make_basis, synthesize, unit_from_lat_lon, Domain, Point};
use dkappa_core::geodesic::d_kappa;
use dkappa_core::heatkde::{kde, DensityEstimate, SampleSet};
use dkappa_core::smoothing::{g_value, select_kappa, KappaStrategy, SmoothnessLevel};
use dkappa_core::testing::{
    baseline_distances, bootstrap_test, ks_test_1d, l1_separation, sample_mixture, BaselineSet, KappaRule, KsResult,
    TestResult,
};
use dkappa_core::wrap1d::{detect_boundary, wrap_samples, WrapMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::hurdat::{parse_hurdat2, tracks_to_samples, ExclusionReport, ParseMode, SelectionError, Stage};
use crate::output::{Report, Series};
use crate::samples::{read_samples_path, write_samples, SampleData};

/// Sample sets ready for estimation.
pub struct Loaded {
    pub sources: Vec<String>,
    pub sets: Vec<SampleSet>,
    /// Set when the inputs were real-line data wrapped onto the circle.
    pub wrap: Option<WrapMap>,
}

impl Loaded {
    fn domain(&self) -> Domain {
        self.sets[0].domain()
    }
}

pub fn load_inputs(paths: &[PathBuf], cfg: &RunConfig) -> Result<Loaded, CliError> {
    if paths.is_empty() {
        return Err(CliError::Validation("no input files".into()));
    }
    let files = paths.iter().map(|p| read_samples_path(p)).collect::<Result<Vec<_>, _>>()?;
    let sources: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    let lines: Vec<&[f64]> = files
        .iter()
        .filter_map(|f| match &f.data {
            SampleData::Line(x) => Some(x.as_slice()),
            SampleData::Points(_) => None,
        })
        .collect();
    let (sets, wrap) = if lines.is_empty() {
        let sets: Vec<SampleSet> = files
            .into_iter()
            .map(|f| match f.data {
                SampleData::Points(s) => s,
                SampleData::Line(_) => unreachable!(),
            })
            .collect();
        (sets, None)
    } else if lines.len() == files.len() {
        let map = detect_boundary(&lines, cfg.wrap_pad)?;
        let sets = lines
            .iter()
            .zip(&sources)
            .map(|(x, src)| Ok(wrap_samples(x, &map)?.with_label(src.clone())))
            .collect::<Result<Vec<_>, CliError>>()?;
        (sets, Some(map))
    } else {
        return Err(CliError::Validation("cannot mix real-line (x) files with circle or sphere files".into()));
    };
    let domain = sets[0].domain();
    if let Some((s, src)) = sets.iter().zip(&sources).find(|(s, _)| s.domain() != domain) {
        return Err(CliError::Validation(format!("{src} holds {:?} samples, expected {domain:?}", s.domain())));
    }
    if let Some(d) = cfg.domain {
        if d != domain {
            return Err(CliError::Validation(format!("config expects {d:?} samples, inputs are {domain:?}")));
        }
    }
    Ok(Loaded { sources, sets, wrap })
}

fn expect_inputs(paths: &[PathBuf], n: usize, command: &str) -> Result<(), CliError> {
    if paths.len() != n {
        return Err(CliError::Validation(format!("{command} needs {n} input files, got {}", paths.len())));
    }
    Ok(())
}

fn estimate_with_rule(set: &SampleSet, cfg: &RunConfig) -> Result<DensityEstimate, CliError> {
    let basis = make_basis(set.domain(), cfg.max_degree)?;
    let h = cfg.bandwidth.bandwidth(set.len())?;
    Ok(kde(set, h, &basis, None)?)
}

fn pair_kappa(rule: KappaRule, g: &[f64]) -> Result<SmoothnessLevel, CliError> {
    Ok(match rule {
        KappaRule::Fixed { value } => SmoothnessLevel::new(value)?,
        KappaRule::PairMin => select_kappa(g, KappaStrategy::PairMin)?,
    })
}

#[derive(Debug, Serialize)]
struct WrapInfo {
    a: f64,
    b: f64,
}

fn wrap_info(w: &Option<WrapMap>) -> Option<WrapInfo> {
    w.map(|m| {
        let (a, b) = m.interval();
        WrapInfo { a, b }
    })
}

#[derive(Debug, Serialize)]
struct EstimateItem {
    source: String,
    domain: Domain,
    sample_count: usize,
    bandwidth: f64,
    truncation: usize,
    g_value: f64,
    coefficients: Vec<f64>,
    series: String,
}

#[derive(Debug, Serialize)]
struct EstimateResult {
    max_degree: usize,
    wrap: Option<WrapInfo>,
    estimates: Vec<EstimateItem>,
}

fn plot_points(domain: Domain, grid: usize) -> Vec<Point> {
    match domain {
        Domain::Circle => (0..grid).map(|j| Point::Angle(-PI + 2.0 * PI * j as f64 / grid as f64)).collect(),
        Domain::Sphere2 => {
            let nlon = 2 * grid;
            (0..grid)
                .flat_map(|i| {
                    let lat = -90.0 + 180.0 * (i as f64 + 0.5) / grid as f64;
                    (0..nlon).map(move |j| {
                        let lon = -180.0 + 360.0 * (j as f64 + 0.5) / nlon as f64;
                        Point::Unit(unit_from_lat_lon(lat, lon))
                    })
                })
                .collect()
        }
    }
}

pub fn estimate(cfg: &RunConfig, paths: &[PathBuf]) -> Result<Report, CliError> {
    let loaded = load_inputs(paths, cfg)?;
    let domain = loaded.domain();
    let points = plot_points(domain, cfg.estimate.grid);
    let mut estimates = Vec::new();
    let mut series = Vec::new();
    for (i, (set, src)) in loaded.sets.iter().zip(&loaded.sources).enumerate() {
        let f = estimate_with_rule(set, cfg)?;
        let values = synthesize(&f.coeffs, &points, false)?;
        let name = format!("estimate_{i}");
        let desc = format!("density estimate of {src}");
        let mut s = match (domain, &loaded.wrap) {
            (Domain::Circle, None) => Series::new(&name, &desc, "theta", "density", &["theta", "density"]),
            (Domain::Circle, Some(_)) => Series::new(&name, &desc, "x", "line_density", &["theta", "density", "x", "line_density"]),
            (Domain::Sphere2, _) => Series::new(&name, &desc, "lon", "lat", &["lat", "lon", "density"]),
        };
        for (p, v) in points.iter().zip(&values) {
            match (p, &loaded.wrap) {
                (Point::Angle(t), None) => s.push(vec![*t, *v]),
                (Point::Angle(t), Some(m)) => s.push(vec![*t, *v, m.inverse(*t), m.line_density(*v)]),
                (Point::Unit(x), _) => {
                    let (lat, lon) = dkappa_core::basis::lat_lon_from_unit(x);
                    s.push(vec![lat, lon, *v]);
                }
            }
        }
        estimates.push(EstimateItem {
            source: src.clone(),
            domain,
            sample_count: f.sample_count,
            bandwidth: f.bandwidth,
            truncation: f.truncation,
            g_value: g_value(&f.coeffs),
            coefficients: f.coeffs.coeffs().to_vec(),
            series: name,
        });
        series.push(s);
    }
    let result = EstimateResult {
        max_degree: cfg.max_degree,
        wrap: wrap_info(&loaded.wrap),
        estimates,
    };
    Ok(Report {
        command: "estimate",
        result: serde_json::to_value(result)?,
        converged: true,
        series,
        files: Vec::new(),
    })
}

#[derive(Debug, Serialize)]
struct CompareResult {
    sources: [String; 2],
    domain: Domain,
    wrap: Option<WrapInfo>,
    sample_counts: [usize; 2],
    bandwidths: [f64; 2],
    g_values: [f64; 2],
    kappa: f64,
    flow_times: [f64; 2],
    d_kappa: f64,
    iterations: usize,
    grad_norm: f64,
    converged: bool,
    baselines: BaselineSet,
    ks: Option<KsResult>,
}

pub fn compare(cfg: &RunConfig, paths: &[PathBuf]) -> Result<Report, CliError> {
    expect_inputs(paths, 2, "compare")?;
    let loaded = load_inputs(paths, cfg)?;
    let (s1, s2) = (&loaded.sets[0], &loaded.sets[1]);
    let f1 = estimate_with_rule(s1, cfg)?;
    let f2 = estimate_with_rule(s2, cfg)?;
    let g = [g_value(&f1.coeffs), g_value(&f2.coeffs)];
    let kappa = pair_kappa(cfg.kappa, &g)?;
    let d = d_kappa(&f1, &f2, kappa, &cfg.geodesic)?;
    let ks = match loaded.wrap {
        Some(_) => Some(ks_test_1d(s1, s2)?),
        None => None,
    };
    let mut energy = Series::new("compare_energy", "path energy per accepted iteration", "iteration", "energy", &["iteration", "energy"]);
    for (i, e) in d.path.energy_log.iter().enumerate() {
        energy.push(vec![i as f64, *e]);
    }
    let result = CompareResult {
        sources: [loaded.sources[0].clone(), loaded.sources[1].clone()],
        domain: loaded.domain(),
        wrap: wrap_info(&loaded.wrap),
        sample_counts: [s1.len(), s2.len()],
        bandwidths: [f1.bandwidth, f2.bandwidth],
        g_values: g,
        kappa: kappa.value(),
        flow_times: [d.flow_times.0, d.flow_times.1],
        d_kappa: d.distance,
        iterations: d.path.iterations,
        grad_norm: d.path.grad_norm,
        converged: d.converged(),
        baselines: baseline_distances(&f1, &f2)?,
        ks,
    };
    Ok(Report {
        command: "compare",
        converged: result.converged,
        result: serde_json::to_value(result)?,
        series: vec![energy],
        files: Vec::new(),
    })
}

#[derive(Debug, Serialize)]
struct TestCommandResult {
    sources: [String; 2],
    domain: Domain,
    wrap: Option<WrapInfo>,
    #[serde(flatten)]
    test: TestResult,
    ks: Option<KsResult>,
}

pub fn test(cfg: &RunConfig, paths: &[PathBuf]) -> Result<Report, CliError> {
    expect_inputs(paths, 2, "test")?;
    let loaded = load_inputs(paths, cfg)?;
    let (s1, s2) = (&loaded.sets[0], &loaded.sets[1]);
    let r = bootstrap_test(s1, s2, &cfg.test_config())?;
    let ks = match loaded.wrap {
        Some(_) => Some(ks_test_1d(s1, s2)?),
        None => None,
    };
    let mut reps = Series::new(
        "test_replicates",
        "bootstrap replicate distances; compare with d0 in test.json",
        "replicate",
        "d_kappa",
        &["replicate", "d_kappa"],
    );
    for (b, d) in r.replicate_distances.iter().enumerate() {
        reps.push(vec![b as f64, *d]);
    }
    let converged = r.nonconverged == 0;
    let result = TestCommandResult {
        sources: [loaded.sources[0].clone(), loaded.sources[1].clone()],
        domain: loaded.domain(),
        wrap: wrap_info(&loaded.wrap),
        test: r,
        ks,
    };
    Ok(Report {
        command: "test",
        result: serde_json::to_value(result)?,
        converged,
        series: vec![reps],
        files: Vec::new(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PowerRow {
    pub scenario: String,
    pub l1_separation: f64,
    pub trials: usize,
    pub rejections: usize,
    pub rejection_fraction: f64,
    pub mean_p_value: f64,
    pub nonconverged: usize,
}

#[derive(Debug, Serialize)]
struct SimulateResult {
    domain: Domain,
    sample_size: usize,
    trials: usize,
    rows: Vec<PowerRow>,
}

/// Power table: for each scenario, the fraction of `trials` sample pairs the test rejects.
///
/// Trial `t` of scenario `s` draws its three seeds (two samples, bootstrap)
/// from ChaCha stream `s` of the configured seed.
pub fn simulate(cfg: &RunConfig) -> Result<Report, CliError> {
    let sim = &cfg.simulate;
    if sim.scenarios.is_empty() {
        return Err(CliError::Validation("simulate needs at least one [[simulate.scenarios]] entry".into()));
    }
    let domain = sim.scenarios[0].a.domain();
    if sim.scenarios.iter().any(|s| s.a.domain() != domain) {
        return Err(CliError::Validation("all scenarios must share one domain".into()));
    }
    let mut rows = Vec::new();
    for (idx, sc) in sim.scenarios.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.test.seed);
        rng.set_stream(idx as u64);
        let (mut rejections, mut p_sum, mut nonconverged) = (0, 0.0, 0);
        for _ in 0..sim.trials {
            let (sa, sb, st): (u64, u64, u64) = (rng.random(), rng.random(), rng.random());
            let x = sample_mixture(&sc.a, sim.sample_size, sa)?;
            let y = sample_mixture(&sc.b, sim.sample_size, sb)?;
            let mut tc = cfg.test_config();
            tc.seed = st;
            let r = bootstrap_test(&x, &y, &tc)?;
            rejections += usize::from(r.reject);
            p_sum += r.p_value;
            nonconverged += r.nonconverged;
        }
        rows.push(PowerRow {
            scenario: sc.name.clone(),
            l1_separation: l1_separation(&sc.a, &sc.b)?,
            trials: sim.trials,
            rejections,
            rejection_fraction: rejections as f64 / sim.trials as f64,
            mean_p_value: p_sum / sim.trials as f64,
            nonconverged,
        });
    }
    let mut power = Series::new(
        "simulate_power",
        "rejection fraction against L1 separation, one row per scenario",
        "l1_separation",
        "rejection_fraction",
        &["l1_separation", "rejection_fraction"],
    );
    for r in &rows {
        power.push(vec![r.l1_separation, r.rejection_fraction]);
    }
    let converged = rows.iter().all(|r| r.nonconverged == 0);
    let result = SimulateResult {
        domain,
        sample_size: sim.sample_size,
        trials: sim.trials,
        rows,
    };
    Ok(Report {
        command: "simulate",
        result: serde_json::to_value(result)?,
        converged,
        series: vec![power],
        files: Vec::new(),
    })
}

#[derive(Debug, Serialize)]
struct GridResult {
    sources: [String; 2],
    domain: Domain,
    bandwidths: Vec<f64>,
    kappa: f64,
    /// `d_kappa[i][j]`: first sample at `bandwidths[i]`, second at `bandwidths[j]`.
    d_kappa: Vec<Vec<f64>>,
    fisher_rao: Vec<Vec<f64>>,
    d_kappa_spread: f64,
    fisher_rao_spread: f64,
    nonconverged: usize,
}

/// `(max - min) / mean` over all entries.
pub fn relative_spread(m: &[Vec<f64>]) -> f64 {
    let v: Vec<f64> = m.iter().flatten().copied().collect();
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
    (hi - lo) / (v.iter().sum::<f64>() / v.len() as f64)
}

/// One sample pair over a bandwidth grid. Under `pair_min` the level is the
/// smallest G-value across the whole grid, so every cell uses the same section.
pub fn bandwidth_grid(cfg: &RunConfig, paths: &[PathBuf]) -> Result<Report, CliError> {
    expect_inputs(paths, 2, "bandwidth-grid")?;
    let loaded = load_inputs(paths, cfg)?;
    let basis = make_basis(loaded.domain(), cfg.max_degree)?;
    let hs = &cfg.bandwidth_grid.values;
    let est = |s: &SampleSet| hs.iter().map(|&h| kde(s, h, &basis, None)).collect::<Result<Vec<_>, _>>();
    let e1 = est(&loaded.sets[0])?;
    let e2 = est(&loaded.sets[1])?;
    let kappa = match cfg.kappa {
        KappaRule::Fixed { value } => SmoothnessLevel::new(value)?,
        KappaRule::PairMin => {
            let g: Vec<f64> = e1.iter().chain(&e2).map(|f| g_value(&f.coeffs)).collect();
            select_kappa(&g, KappaStrategy::Quantile(0.0))?
        }
    };
    let n = hs.len();
    let mut d = vec![vec![0.0; n]; n];
    let mut fr = vec![vec![0.0; n]; n];
    let mut nonconverged = 0;
    let mut series = Series::new(
        "bandwidth_grid",
        "d_kappa and Fisher-Rao distance for every bandwidth pair",
        "h1",
        "h2",
        &["h1", "h2", "d_kappa", "fisher_rao"],
    );
    for i in 0..n {
        for j in 0..n {
            let r = d_kappa(&e1[i], &e2[j], kappa, &cfg.geodesic)?;
            nonconverged += usize::from(!r.converged());
            d[i][j] = r.distance;
            fr[i][j] = baseline_distances(&e1[i], &e2[j])?.fisher_rao;
            series.push(vec![hs[i], hs[j], d[i][j], fr[i][j]]);
        }
    }
    let result = GridResult {
        sources: [loaded.sources[0].clone(), loaded.sources[1].clone()],
        domain: loaded.domain(),
        bandwidths: hs.clone(),
        kappa: kappa.value(),
        d_kappa_spread: relative_spread(&d),
        fisher_rao_spread: relative_spread(&fr),
        d_kappa: d,
        fisher_rao: fr,
        nonconverged,
    };
    Ok(Report {
        command: "bandwidth-grid",
        result: serde_json::to_value(result)?,
        converged: nonconverged == 0,
        series: vec![series],
        files: Vec::new(),
    })
}

#[derive(Debug, Serialize)]
struct SkippedStorm {
    line: usize,
    message: String,
}

#[derive(Debug, Serialize)]
struct StageOutput {
    stage: Stage,
    /// Sample file name, absent when no track reached the stage.
    file: Option<String>,
    #[serde(flatten)]
    report: ExclusionReport,
}

#[derive(Debug, Serialize)]
struct HurdatResult {
    source: String,
    strict: bool,
    tracks_parsed: usize,
    tracks_selected: usize,
    skipped: Vec<SkippedStorm>,
    stages: Vec<StageOutput>,
}

pub fn hurdat(cfg: &RunConfig, path: &Path, strict: bool) -> Result<Report, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
    let parsed = parse_hurdat2(&text, mode)?;
    let selected: Vec<_> = parsed.tracks.iter().filter(|t| cfg.hurdat.filter.accepts(t)).cloned().collect();
    if selected.is_empty() {
        return Err(CliError::Validation(format!(
            "no tracks pass the filter ({} parsed)",
            parsed.tracks.len()
        )));
    }
    let mut stages = Vec::new();
    let mut files = Vec::new();
    for &stage in &cfg.hurdat.stages {
        match tracks_to_samples(&selected, stage) {
            Ok((set, report)) => {
                let name = format!("hurdat_{}.csv", stage.name());
                let mut buf = Vec::new();
                write_samples(&set, cfg.hurdat.layout.into(), &mut buf)?;
                files.push((name.clone(), String::from_utf8(buf).expect("csv output is utf-8")));
                stages.push(StageOutput {
                    stage,
                    file: Some(name),
                    report,
                });
            }
            Err(SelectionError::AllExcluded(_)) => stages.push(StageOutput {
                stage,
                file: None,
                report: ExclusionReport {
                    used: 0,
                    too_short: selected.iter().map(|t| t.id.clone()).collect(),
                },
            }),
            Err(e) => return Err(e.into()),
        }
    }
    let result = HurdatResult {
        source: path.display().to_string(),
        strict,
        tracks_parsed: parsed.tracks.len(),
        tracks_selected: selected.len(),
        skipped: parsed
            .skipped
            .iter()
            .map(|e| SkippedStorm {
                line: e.line,
                message: e.kind.to_string(),
            })
            .collect(),
        stages,
    };
    Ok(Report {
        command: "hurdat",
        result: serde_json::to_value(result)?,
        converged: true,
        series: Vec::new(),
        files,
    })
}
