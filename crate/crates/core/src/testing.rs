//! Bootstrap two-sample test with `d_kappa` as statistic, baseline density
//! distances, and mixture generators for simulation studies.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{dot3, make_basis, quadrature_grid, synthesize, BasisSpec, BasisTable, CoeffVector, Domain, Point, QuadratureGrid};
use crate::geodesic::{d_kappa_coeffs, GeodesicOptions};
use crate::heatkde::{estimate_from_empirical, heat_kernel_circle, mean_rows, DensityEstimate, SampleSet};
use crate::smoothing::{g_value, select_kappa, KappaStrategy, SmoothnessLevel};
use crate::wrap1d::unroll;
use crate::{Error, Result};

pub const MIN_REPLICATES: usize = 50;

/// Redraws allowed per replicate when a resample gives a uniform estimate.
pub const MAX_REDRAWS: usize = 10;

/// Default `c` in the plug-in rule `h = c T^(-2/5)`: the value of
/// [`amise_plugin_scale`] for [`reference_circle_mixture`], to three digits.
pub const DEFAULT_PLUGIN_SCALE: f64 = 0.166;

/// Constant `c` making `c T^(-2/5)` the AMISE-optimal heat-kernel bandwidth
/// for a circle density with coefficients `c`.
///
/// The circle heat kernel at time `h` is a wrapped normal with variance `2h`,
/// so the Gaussian-kernel optimum `sigma^5 = 1 / (2 sqrt(pi) R(f'') T)` gives
/// `h = sigma^2 / 2`, with `R(f'') = sum lambda_n^2 c_n^2`.
pub fn amise_plugin_scale(c: &CoeffVector) -> Result<f64> {
    if c.domain() != Domain::Circle {
        return Err(Error::DomainMismatch(Domain::Circle, c.domain()));
    }
    let r: f64 = c
        .coeffs()
        .iter()
        .zip(c.basis().eigenvalues())
        .map(|(c, l)| l * l * c * c)
        .sum();
    if !(r > 0.0) {
        return Err(Error::UniformDensity);
    }
    Ok(0.5 * (2.0 * PI.sqrt() * r).powf(-0.4))
}

/// Two-component circle mixture on which [`DEFAULT_PLUGIN_SCALE`] is calibrated.
pub fn reference_circle_mixture() -> MixtureSpec {
    let part = |weight, mu, spread| MixtureComponent {
        weight,
        center: Point::Angle(mu),
        spread,
    };
    MixtureSpec::new(Domain::Circle, vec![part(0.5, -1.0, 0.1), part(0.5, 1.0, 0.15)]).expect("valid mixture")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", deny_unknown_fields)]
pub enum KappaRule {
    Fixed { value: f64 },
    /// The smaller of the two observed G-values.
    PairMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", deny_unknown_fields)]
pub enum BandwidthRule {
    Fixed { h: f64 },
    /// `h = scale * T^(-2/5)` for a sample of size `T`.
    PlugIn { scale: f64 },
}

impl Default for BandwidthRule {
    fn default() -> Self {
        BandwidthRule::PlugIn {
            scale: DEFAULT_PLUGIN_SCALE,
        }
    }
}

impl BandwidthRule {
    pub fn bandwidth(&self, sample_count: usize) -> Result<f64> {
        if sample_count == 0 {
            return Err(Error::EmptySamples);
        }
        let h = match *self {
            BandwidthRule::Fixed { h } => h,
            BandwidthRule::PlugIn { scale } => scale * (sample_count as f64).powf(-0.4),
        };
        if h.is_finite() && h > 0.0 {
            Ok(h)
        } else {
            Err(Error::InvalidArgument(format!("bandwidth rule produced {h}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub kappa: KappaRule,
    pub bandwidth: BandwidthRule,
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    pub max_degree: usize,
    #[serde(default)]
    pub geodesic: GeodesicOptions,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            kappa: KappaRule::PairMin,
            bandwidth: BandwidthRule::default(),
            replicates: 200,
            alpha: 0.05,
            seed: 0,
            max_degree: 10,
            geodesic: GeodesicOptions::default(),
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < MIN_REPLICATES {
            return Err(Error::InvalidArgument(format!(
                "need at least {MIN_REPLICATES} replicates, got {}",
                self.replicates
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if let KappaRule::Fixed { value } = self.kappa {
            SmoothnessLevel::new(value)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub d0: f64,
    pub replicate_distances: Vec<f64>,
    pub p_value: f64,
    pub reject: bool,
    pub kappa_used: f64,
    pub seed: u64,
    pub bandwidths: (f64, f64),
    /// Resamples discarded because they produced a uniform estimate.
    pub redraws: usize,
    /// Geodesic computations (observed or replicate) that hit the iteration cap.
    pub nonconverged: usize,
}

/// Add-one bootstrap p-value `(1 + #{d_b >= d0}) / (B + 1)`.
pub fn bootstrap_p_value(d0: f64, replicates: &[f64]) -> f64 {
    let exceed = replicates.iter().filter(|&&d| d >= d0).count();
    (1 + exceed) as f64 / (replicates.len() + 1) as f64
}

/// Both samples projected once onto the basis; estimates for any
/// selection of pooled indices are then row averages.
struct Pool {
    table: BasisTable,
    n1: usize,
    n2: usize,
    h1: f64,
    h2: f64,
}

impl Pool {
    fn estimate(&self, rows: &[usize], h: f64) -> Result<DensityEstimate> {
        let empirical = mean_rows(&self.table, rows.iter().copied())?;
        estimate_from_empirical(&empirical, rows.len(), h, None)
    }
}

/// Bootstrap test of `H0: s1 and s2 share a density`.
///
/// The statistic is `d_kappa` between the two heat-kernel estimates. Each
/// replicate draws `T1` and `T2` points with replacement from the pooled
/// sample and re-estimates with the same bandwidth rule. A fixed `kappa` is
/// shared by all replicates; under `PairMin` the level is re-selected from
/// each replicate pair, exactly as for the observed pair. Resampled estimates
/// are rougher than the originals (the pool's own noise adds to the
/// resampling noise), so holding the observed level fixed would flow them
/// further and bias the replicate distances low.
///
/// Replicate `b` uses ChaCha stream `b` of the configured seed, so results do
/// not depend on scheduling.
pub fn bootstrap_test(s1: &SampleSet, s2: &SampleSet, cfg: &TestConfig) -> Result<TestResult> {
    cfg.validate()?;
    if s1.domain() != s2.domain() {
        return Err(Error::DomainMismatch(s1.domain(), s2.domain()));
    }
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::EmptySamples);
    }
    let basis = make_basis(s1.domain(), cfg.max_degree)?;
    let points: Vec<Point> = s1.points().iter().chain(s2.points()).copied().collect();
    let pool = Pool {
        table: BasisTable::new(basis, &points)?,
        n1: s1.len(),
        n2: s2.len(),
        h1: cfg.bandwidth.bandwidth(s1.len())?,
        h2: cfg.bandwidth.bandwidth(s2.len())?,
    };
    let total = pool.n1 + pool.n2;
    let idx1: Vec<usize> = (0..pool.n1).collect();
    let idx2: Vec<usize> = (pool.n1..total).collect();
    let f1 = pool.estimate(&idx1, pool.h1)?;
    let f2 = pool.estimate(&idx2, pool.h2)?;
    let kappa = match cfg.kappa {
        KappaRule::Fixed { value } => SmoothnessLevel::new(value)?,
        KappaRule::PairMin => select_kappa(&[g_value(&f1.coeffs), g_value(&f2.coeffs)], KappaStrategy::PairMin)?,
    };
    let observed = d_kappa_coeffs(&f1.coeffs, &f2.coeffs, kappa, &cfg.geodesic)?;

    let replicates: Vec<(f64, usize, bool)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let mut redraws = 0;
            loop {
                let r1: Vec<usize> = (0..pool.n1).map(|_| rng.random_range(0..total)).collect();
                let r2: Vec<usize> = (0..pool.n2).map(|_| rng.random_range(0..total)).collect();
                let g1 = pool.estimate(&r1, pool.h1)?;
                let g2 = pool.estimate(&r2, pool.h2)?;
                if g_value(&g1.coeffs) > 0.0 && g_value(&g2.coeffs) > 0.0 {
                    let kappa = match cfg.kappa {
                        KappaRule::Fixed { .. } => kappa,
                        KappaRule::PairMin => {
                            select_kappa(&[g_value(&g1.coeffs), g_value(&g2.coeffs)], KappaStrategy::PairMin)?
                        }
                    };
                    let d = d_kappa_coeffs(&g1.coeffs, &g2.coeffs, kappa, &cfg.geodesic)?;
                    return Ok((d.distance, redraws, d.converged()));
                }
                redraws += 1;
                if redraws > MAX_REDRAWS {
                    return Err(Error::DegenerateResample { replicate: b, redraws });
                }
            }
        })
        .collect::<Result<_>>()?;

    let replicate_distances: Vec<f64> = replicates.iter().map(|r| r.0).collect();
    let p_value = bootstrap_p_value(observed.distance, &replicate_distances);
    Ok(TestResult {
        d0: observed.distance,
        p_value,
        reject: p_value <= cfg.alpha,
        kappa_used: kappa.value(),
        seed: cfg.seed,
        bandwidths: (pool.h1, pool.h2),
        redraws: replicates.iter().map(|r| r.1).sum(),
        nonconverged: replicates.iter().filter(|r| !r.2).count() + usize::from(!observed.converged()),
        replicate_distances,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    L2,
    ChiSq,
    Bhattacharyya,
    FisherRao,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::L2,
        BaselineKind::ChiSq,
        BaselineKind::Bhattacharyya,
        BaselineKind::FisherRao,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::L2 => "l2",
            BaselineKind::ChiSq => "chi_sq",
            BaselineKind::Bhattacharyya => "bhattacharyya",
            BaselineKind::FisherRao => "fisher_rao",
        }
    }
}

/// Quadrature grid used to compare densities of a given basis.
pub fn baseline_grid(spec: &BasisSpec) -> Result<QuadratureGrid> {
    let l = spec.max_degree();
    match spec.domain() {
        Domain::Circle => quadrature_grid(Domain::Circle, (8 * l).max(512)),
        Domain::Sphere2 => quadrature_grid(Domain::Sphere2, (4 * l).max(64)),
    }
}

fn clip_normalize(grid: &QuadratureGrid, values: &[f64]) -> Result<Vec<f64>> {
    let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let mass = grid.integrate(&clipped)?;
    if !(mass > 0.0) {
        return Err(Error::InvalidArgument("density has no positive mass".into()));
    }
    Ok(clipped.into_iter().map(|v| v / mass).collect())
}

/// Distance between two densities given by their values on `grid`.
///
/// L2 uses the raw values; the other kinds first clip negative values and
/// renormalize to unit mass.
pub fn baseline_from_values(grid: &QuadratureGrid, f1: &[f64], f2: &[f64], kind: BaselineKind) -> Result<f64> {
    if f1.len() != grid.len() || f2.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: if f1.len() != grid.len() { f1.len() } else { f2.len() },
        });
    }
    if kind == BaselineKind::L2 {
        let d: Vec<f64> = f1.iter().zip(f2).map(|(a, b)| (a - b) * (a - b)).collect();
        return Ok(grid.integrate(&d)?.max(0.0).sqrt());
    }
    let (p, q) = (clip_normalize(grid, f1)?, clip_normalize(grid, f2)?);
    match kind {
        BaselineKind::ChiSq => {
            let v: Vec<f64> = p
                .iter()
                .zip(&q)
                .map(|(a, b)| if a + b > 0.0 { (a - b) * (a - b) / (a + b) } else { 0.0 })
                .collect();
            grid.integrate(&v)
        }
        _ => {
            let v: Vec<f64> = p.iter().zip(&q).map(|(a, b)| (a * b).sqrt()).collect();
            let overlap = grid.integrate(&v)?;
            Ok(match kind {
                BaselineKind::Bhattacharyya => (1.0 - overlap).max(0.0),
                _ => overlap.clamp(-1.0, 1.0).acos(),
            })
        }
    }
}

/// One baseline distance between two estimates of the same basis.
pub fn baseline_distance(f1: &DensityEstimate, f2: &DensityEstimate, kind: BaselineKind) -> Result<f64> {
    Ok(baseline_distances(f1, f2)?.get(kind))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineSet {
    pub l2: f64,
    pub chi_sq: f64,
    pub bhattacharyya: f64,
    pub fisher_rao: f64,
}

impl BaselineSet {
    pub fn get(&self, kind: BaselineKind) -> f64 {
        match kind {
            BaselineKind::L2 => self.l2,
            BaselineKind::ChiSq => self.chi_sq,
            BaselineKind::Bhattacharyya => self.bhattacharyya,
            BaselineKind::FisherRao => self.fisher_rao,
        }
    }
}

/// All baseline distances, synthesizing both estimates once.
pub fn baseline_distances(f1: &DensityEstimate, f2: &DensityEstimate) -> Result<BaselineSet> {
    f1.coeffs.check_compatible(&f2.coeffs)?;
    let grid = baseline_grid(f1.basis())?;
    let v1 = synthesize(&f1.coeffs, grid.nodes(), false)?;
    let v2 = synthesize(&f2.coeffs, grid.nodes(), false)?;
    let get = |k| baseline_from_values(&grid, &v1, &v2, k);
    Ok(BaselineSet {
        l2: get(BaselineKind::L2)?,
        chi_sq: get(BaselineKind::ChiSq)?,
        bhattacharyya: get(BaselineKind::Bhattacharyya)?,
        fisher_rao: get(BaselineKind::FisherRao)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(x) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 x^2)`.
pub fn kolmogorov_q(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = sign * (-2.0 * (j * j) as f64 * x * x).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test on circle samples cut open from the line.
///
/// Angles are unrolled from each set's cut point, which preserves the order
/// of the original line samples. The p-value uses the asymptotic Kolmogorov
/// distribution with the usual small-sample correction
/// `x = (sqrt(n_e) + 0.12 + 0.11 / sqrt(n_e)) D`.
pub fn ks_test_1d(s1: &SampleSet, s2: &SampleSet) -> Result<KsResult> {
    let line = |s: &SampleSet| -> Result<Vec<f64>> {
        if s.domain() != Domain::Circle {
            return Err(Error::DomainMismatch(Domain::Circle, s.domain()));
        }
        let cut = s.cut().ok_or(Error::MissingCutPoint)?;
        let mut v: Vec<f64> = s.angles().unwrap_or_default().into_iter().map(|t| unroll(t, cut)).collect();
        v.sort_by(f64::total_cmp);
        Ok(v)
    };
    let (a, b) = (line(s1)?, line(s2)?);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    let ne = (n1 * n2 / (n1 + n2)).sqrt();
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q((ne + 0.12 + 0.11 / ne) * d),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub center: Point,
    /// Circle: heat-kernel bandwidth. Sphere: von Mises-Fisher concentration.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture")]
pub struct MixtureSpec {
    domain: Domain,
    components: Vec<MixtureComponent>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMixture {
    domain: Domain,
    components: Vec<MixtureComponent>,
}

impl TryFrom<RawMixture> for MixtureSpec {
    type Error = Error;

    fn try_from(raw: RawMixture) -> Result<Self> {
        MixtureSpec::new(raw.domain, raw.components)
    }
}

impl MixtureSpec {
    pub fn new(domain: Domain, components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        let mut total = 0.0;
        for c in &components {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::InvalidArgument(format!("weight {} must be positive", c.weight)));
            }
            if !(c.spread > 0.0 && c.spread.is_finite()) {
                return Err(Error::InvalidArgument(format!("spread {} must be positive", c.spread)));
            }
            c.center.validate(domain)?;
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { domain, components })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    /// Mixture density at `x`.
    pub fn density(&self, x: &Point) -> Result<f64> {
        let mut total = 0.0;
        for c in &self.components {
            total += c.weight * component_density(c, x)?;
        }
        Ok(total)
    }
}

/// vMF density `kappa / (4 pi sinh kappa) exp(kappa <mu, x>)`, written to avoid overflow.
fn vmf_density(mu: &[f64; 3], x: &[f64; 3], kappa: f64) -> f64 {
    let norm = kappa / (2.0 * PI * -(-2.0 * kappa).exp_m1());
    norm * (kappa * (dot3(mu, x) - 1.0)).exp()
}

fn component_density(c: &MixtureComponent, x: &Point) -> Result<f64> {
    match (&c.center, x) {
        (Point::Angle(mu), Point::Angle(t)) => heat_kernel_circle(*t, *mu, c.spread, None),
        (Point::Unit(mu), Point::Unit(u)) => Ok(vmf_density(mu, u, c.spread)),
        _ => Err(Error::DomainMismatch(c.center.domain(), x.domain())),
    }
}

fn wrap_angle(t: f64) -> f64 {
    let r = (t + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        -PI
    } else {
        r
    }
}

/// Unit tangent pair completing `mu` to an orthonormal frame.
fn frame(mu: &[f64; 3]) -> ([f64; 3], [f64; 3]) {
    let helper = if mu[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = dot3(&helper, mu);
    let mut e1 = [helper[0] - d * mu[0], helper[1] - d * mu[1], helper[2] - d * mu[2]];
    let n = dot3(&e1, &e1).sqrt();
    e1.iter_mut().for_each(|v| *v /= n);
    let e2 = [
        mu[1] * e1[2] - mu[2] * e1[1],
        mu[2] * e1[0] - mu[0] * e1[2],
        mu[0] * e1[1] - mu[1] * e1[0],
    ];
    (e1, e2)
}

fn sample_component(c: &MixtureComponent, rng: &mut ChaCha8Rng) -> Point {
    match c.center {
        // the circle heat kernel at time h is the wrapped normal with variance 2h
        Point::Angle(mu) => {
            let normal = Normal::new(0.0, (2.0 * c.spread).sqrt()).expect("positive spread");
            Point::Angle(wrap_angle(mu + normal.sample(rng)))
        }
        Point::Unit(mu) => {
            let kappa = c.spread;
            let u: f64 = 1.0 - rng.random::<f64>();
            let w = (1.0 + (u + (1.0 - u) * (-2.0 * kappa).exp()).ln() / kappa).clamp(-1.0, 1.0);
            let phi = 2.0 * PI * rng.random::<f64>();
            let s = (1.0 - w * w).max(0.0).sqrt();
            let (e1, e2) = frame(&mu);
            let mut x = [0.0; 3];
            for k in 0..3 {
                x[k] = w * mu[k] + s * (phi.cos() * e1[k] + phi.sin() * e2[k]);
            }
            let n = dot3(&x, &x).sqrt();
            Point::Unit([x[0] / n, x[1] / n, x[2] / n])
        }
    }
}

/// Draws `n` points and the index of the component each came from.
pub fn sample_mixture_labeled(spec: &MixtureSpec, n: usize, seed: u64) -> Result<(SampleSet, Vec<usize>)> {
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let last = spec.components.len() - 1;
    for _ in 0..n {
        let mut u: f64 = rng.random();
        let mut k = 0;
        while k < last && u >= spec.components[k].weight {
            u -= spec.components[k].weight;
            k += 1;
        }
        points.push(sample_component(&spec.components[k], &mut rng));
        labels.push(k);
    }
    Ok((SampleSet::new(spec.domain, points)?, labels))
}

/// `n` independent draws from the mixture, deterministic in `seed`.
pub fn sample_mixture(spec: &MixtureSpec, n: usize, seed: u64) -> Result<SampleSet> {
    Ok(sample_mixture_labeled(spec, n, seed)?.0)
}

/// Quadrature value of `int |g1 - g2|` over the domain.
pub fn l1_separation(a: &MixtureSpec, b: &MixtureSpec) -> Result<f64> {
    if a.domain != b.domain {
        return Err(Error::DomainMismatch(a.domain, b.domain));
    }
    let grid = match a.domain {
        Domain::Circle => quadrature_grid(Domain::Circle, 8192)?,
        Domain::Sphere2 => quadrature_grid(Domain::Sphere2, 512)?,
    };
    let diff = grid
        .nodes()
        .par_iter()
        .map(|x| Ok((a.density(x)? - b.density(x)?).abs()))
        .collect::<Result<Vec<f64>>>()?;
    grid.integrate(&diff)
}

/// Density of a mixture evaluated as coefficients of `spec` (for error studies).
pub fn mixture_coefficients(mixture: &MixtureSpec, spec: &Arc<BasisSpec>) -> Result<CoeffVector> {
    let grid = quadrature_grid(spec.domain(), crate::basis::min_analysis_resolution(spec).max(256))?;
    let values = grid
        .nodes()
        .iter()
        .map(|x| mixture.density(x))
        .collect::<Result<Vec<f64>>>()?;
    crate::basis::analyze(spec, &grid, &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::unit_from_lat_lon;
    use crate::heatkde::kde;
    use approx::assert_abs_diff_eq;

    fn circle_mix(parts: &[(f64, f64, f64)]) -> MixtureSpec {
        MixtureSpec::new(
            Domain::Circle,
            parts
                .iter()
                .map(|&(weight, mu, spread)| MixtureComponent {
                    weight,
                    center: Point::Angle(mu),
                    spread,
                })
                .collect(),
        )
        .unwrap()
    }

    fn small_cfg() -> TestConfig {
        TestConfig {
            replicates: 60,
            max_degree: 6,
            bandwidth: BandwidthRule::Fixed { h: 0.05 },
            ..Default::default()
        }
    }

    #[test]
    fn p_value_convention() {
        assert_abs_diff_eq!(bootstrap_p_value(1.0, &[0.5, 2.0, 1.0, 0.1]), 3.0 / 5.0);
        assert_abs_diff_eq!(bootstrap_p_value(9.0, &[0.5; 99]), 0.01);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TestConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.replicates = 49;
        assert!(cfg.validate().is_err());
        cfg.replicates = 50;
        cfg.alpha = 1.0;
        assert!(cfg.validate().is_err());
        cfg.alpha = 0.05;
        cfg.kappa = KappaRule::Fixed { value: -1.0 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_scale_is_calibrated_on_the_reference_mixture() {
        let basis = make_basis(Domain::Circle, 30).unwrap();
        let c = mixture_coefficients(&reference_circle_mixture(), &basis).unwrap();
        assert_abs_diff_eq!(amise_plugin_scale(&c).unwrap(), DEFAULT_PLUGIN_SCALE, epsilon = 5e-4);
        assert!(amise_plugin_scale(&CoeffVector::uniform(basis)).is_err());
    }

    #[test]
    fn amise_scale_for_a_single_mode() {
        // f = 1/2pi + a cos(t)/sqrt(pi): R(f'') = a^2
        let basis = make_basis(Domain::Circle, 2).unwrap();
        let mut c = CoeffVector::uniform(basis);
        c.coeffs_mut()[1] = 0.1;
        let expect = 0.5 * (2.0 * PI.sqrt() * 0.01f64).powf(-0.4);
        assert_abs_diff_eq!(amise_plugin_scale(&c).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn plug_in_rule() {
        let r = BandwidthRule::PlugIn { scale: 0.3 };
        assert_abs_diff_eq!(r.bandwidth(32).unwrap(), 0.3 * 32f64.powf(-0.4), epsilon = 1e-15);
        assert!(r.bandwidth(0).is_err());
        assert!(BandwidthRule::Fixed { h: -1.0 }.bandwidth(3).is_err());
    }

    #[test]
    fn identical_samples_never_reject() {
        let mix = circle_mix(&[(0.5, -1.0, 0.05), (0.5, 1.0, 0.1)]);
        let s = sample_mixture(&mix, 60, 4).unwrap();
        let r = bootstrap_test(&s, &s, &small_cfg()).unwrap();
        assert_eq!(r.d0, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.reject);
        assert_eq!(r.replicate_distances.len(), 60);
    }

    #[test]
    fn separated_samples_reject_and_runs_are_deterministic() {
        let a = sample_mixture(&circle_mix(&[(1.0, -1.5, 0.05)]), 80, 1).unwrap();
        let b = sample_mixture(&circle_mix(&[(1.0, 1.5, 0.05)]), 80, 2).unwrap();
        let cfg = small_cfg();
        let r = bootstrap_test(&a, &b, &cfg).unwrap();
        assert!(r.reject);
        assert_abs_diff_eq!(r.p_value, 1.0 / 61.0);
        assert_eq!(r, bootstrap_test(&a, &b, &cfg).unwrap());
        let other = bootstrap_test(&a, &b, &TestConfig { seed: 9, ..cfg }).unwrap();
        assert_ne!(other.replicate_distances, r.replicate_distances);
    }

    #[test]
    fn bootstrap_rejects_domain_mismatch() {
        let a = SampleSet::circle(vec![0.0, 1.0]).unwrap();
        let b = SampleSet::sphere(vec![[0.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(bootstrap_test(&a, &b, &small_cfg()), Err(Error::DomainMismatch(..))));
    }

    #[test]
    fn baselines_vanish_on_equal_inputs() {
        let basis = make_basis(Domain::Sphere2, 4).unwrap();
        let s = SampleSet::sphere(vec![unit_from_lat_lon(10.0, 20.0), unit_from_lat_lon(-30.0, 50.0)]).unwrap();
        let f = kde(&s, 0.2, &basis, None).unwrap();
        let all = baseline_distances(&f, &f).unwrap();
        for k in BaselineKind::ALL {
            assert!(all.get(k).abs() < 1e-7, "{k:?} {}", all.get(k));
        }
    }

    #[test]
    fn baselines_on_disjoint_supports() {
        let grid = quadrature_grid(Domain::Circle, 1000).unwrap();
        let half = 1.0 / PI;
        let (f1, f2): (Vec<f64>, Vec<f64>) = grid
            .nodes()
            .iter()
            .map(|p| match p {
                Point::Angle(t) if *t < 0.0 => (half, 0.0),
                _ => (0.0, half),
            })
            .unzip();
        let get = |k| baseline_from_values(&grid, &f1, &f2, k).unwrap();
        assert_abs_diff_eq!(get(BaselineKind::Bhattacharyya), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(get(BaselineKind::FisherRao), PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(get(BaselineKind::ChiSq), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(get(BaselineKind::L2), (2.0 * half * half * PI).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn chi_sq_closed_form_and_clipping() {
        let grid = quadrature_grid(Domain::Circle, 4096).unwrap();
        let u = 1.0 / (2.0 * PI);
        let (f1, f2): (Vec<f64>, Vec<f64>) = grid
            .nodes()
            .iter()
            .map(|p| match p {
                Point::Angle(t) => (u * (1.0 + 0.5 * t.cos()), u),
                _ => unreachable!(),
            })
            .unzip();
        // u a^2 int cos^2 / (2 + a cos) = 2 (2 / sqrt(4 - a^2) - 1) with a = 1/2
        let exact = 2.0 * (2.0 / 3.75f64.sqrt() - 1.0);
        let got = baseline_from_values(&grid, &f1, &f2, BaselineKind::ChiSq).unwrap();
        assert_abs_diff_eq!(got, exact, epsilon = 1e-9);

        // negative lobes are clipped before the overlap integral
        let neg: Vec<f64> = f1.iter().map(|v| v - 0.5 * u).collect();
        let fr = baseline_from_values(&grid, &neg, &f1, BaselineKind::FisherRao).unwrap();
        assert!(fr.is_finite() && fr > 0.0);
    }

    #[test]
    fn kolmogorov_series() {
        assert_eq!(kolmogorov_q(0.0), 1.0);
        // reference values of the Kolmogorov distribution
        assert_abs_diff_eq!(kolmogorov_q(1.0), 0.26999967, epsilon = 1e-7);
        assert_abs_diff_eq!(kolmogorov_q(1.36), 0.04946, epsilon = 1e-4);
        assert!(kolmogorov_q(5.0) < 1e-20);
    }

    #[test]
    fn ks_basics() {
        let cut = |v: Vec<f64>| SampleSet::circle(v).unwrap().with_cut(-PI);
        let s = cut(vec![0.1, 0.5, -2.0]);
        let r = ks_test_1d(&s, &s).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let r = ks_test_1d(&cut(vec![0.1, 0.2]), &cut(vec![0.8, 0.9])).unwrap();
        assert_eq!(r.statistic, 1.0);
        let raw = SampleSet::circle(vec![0.1]).unwrap();
        assert_eq!(ks_test_1d(&raw, &s), Err(Error::MissingCutPoint));
        // ties across samples
        let r = ks_test_1d(&cut(vec![0.0, 1.0]), &cut(vec![0.0, 2.0])).unwrap();
        assert_abs_diff_eq!(r.statistic, 0.5);
    }

    #[test]
    fn mixture_validation() {
        let c = |weight, spread| MixtureComponent {
            weight,
            center: Point::Angle(0.0),
            spread,
        };
        assert!(MixtureSpec::new(Domain::Circle, vec![]).is_err());
        assert!(MixtureSpec::new(Domain::Circle, vec![c(0.5, 0.1)]).is_err());
        assert!(MixtureSpec::new(Domain::Circle, vec![c(1.0, 0.0)]).is_err());
        assert!(MixtureSpec::new(Domain::Sphere2, vec![c(1.0, 0.1)]).is_err());
        assert!(MixtureSpec::new(Domain::Circle, vec![c(0.25, 0.1), c(0.75, 0.2)]).is_ok());
        let json = r#"{"domain":"circle","components":[{"weight":0.4,"center":{"Angle":0.0},"spread":0.1}]}"#;
        assert!(serde_json::from_str::<MixtureSpec>(json).is_err());
    }

    #[test]
    fn concentrated_components_sit_on_their_centers() {
        let mu = unit_from_lat_lon(40.0, -70.0);
        let spec = MixtureSpec::new(
            Domain::Sphere2,
            vec![MixtureComponent {
                weight: 1.0,
                center: Point::Unit(mu),
                spread: 1e9,
            }],
        )
        .unwrap();
        let s = sample_mixture(&spec, 500, 3).unwrap();
        for p in s.points() {
            let Point::Unit(x) = p else { unreachable!() };
            assert!(dot3(x, &mu).clamp(-1.0, 1.0).acos() < 1e-3);
        }
        let s = sample_mixture(&circle_mix(&[(1.0, 3.1, 1e-9)]), 500, 3).unwrap();
        for t in s.angles().unwrap() {
            assert!((-PI..PI).contains(&t));
            let d = (t - 3.1).abs().min(2.0 * PI - (t - 3.1).abs());
            assert!(d < 1e-3);
        }
    }

    #[test]
    fn vmf_mean_direction() {
        let mu = unit_from_lat_lon(-20.0, 135.0);
        let spec = MixtureSpec::new(
            Domain::Sphere2,
            vec![MixtureComponent {
                weight: 1.0,
                center: Point::Unit(mu),
                spread: 10.0,
            }],
        )
        .unwrap();
        let s = sample_mixture(&spec, 10_000, 11).unwrap();
        let mut m = [0.0; 3];
        for p in s.points() {
            let Point::Unit(x) = p else { unreachable!() };
            (0..3).for_each(|k| m[k] += x[k]);
        }
        let len = dot3(&m, &m).sqrt();
        let angle = (dot3(&m, &mu) / len).acos().to_degrees();
        assert!(angle < 5.0, "{angle}");
        // mean resultant length of vMF: coth(kappa) - 1/kappa
        let rbar = len / 10_000.0;
        assert_abs_diff_eq!(rbar, 1.0 / 10f64.tanh() - 0.1, epsilon = 0.01);
    }

    #[test]
    fn circle_components_match_the_heat_kernel() {
        let spec = circle_mix(&[(1.0, 0.5, 0.2)]);
        let s = sample_mixture(&spec, 20_000, 5).unwrap();
        // empirical E[cos(m (theta - mu))] equals exp(-m^2 h)
        for m in 1..=3 {
            let mean: f64 = s.angles().unwrap().iter().map(|t| (m as f64 * (t - 0.5)).cos()).sum::<f64>() / 20_000.0;
            assert_abs_diff_eq!(mean, (-(m * m) as f64 * 0.2).exp(), epsilon = 0.02);
        }
    }

    #[test]
    fn equal_weights_split_evenly() {
        let spec = circle_mix(&[(0.5, -1.0, 0.1), (0.5, 1.0, 0.1)]);
        let n = 4000;
        let (_, labels) = sample_mixture_labeled(&spec, n, 8).unwrap();
        let first = labels.iter().filter(|&&l| l == 0).count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((first - n as f64 / 2.0).abs() <= 3.0 * sigma);
        assert!(sample_mixture(&spec, 0, 1).is_err());
        assert_eq!(sample_mixture(&spec, 50, 1).unwrap(), sample_mixture(&spec, 50, 1).unwrap());
    }

    #[test]
    fn mixture_density_integrates_to_one() {
        let grid = quadrature_grid(Domain::Sphere2, 128).unwrap();
        let spec = MixtureSpec::new(
            Domain::Sphere2,
            vec![
                MixtureComponent {
                    weight: 0.3,
                    center: Point::Unit([0.0, 0.0, 1.0]),
                    spread: 5.0,
                },
                MixtureComponent {
                    weight: 0.7,
                    center: Point::Unit([1.0, 0.0, 0.0]),
                    spread: 50.0,
                },
            ],
        )
        .unwrap();
        let v: Vec<f64> = grid.nodes().iter().map(|x| spec.density(x).unwrap()).collect();
        assert_abs_diff_eq!(grid.integrate(&v).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn l1_separation_properties() {
        let a = circle_mix(&[(0.5, -1.0, 0.1), (0.5, 1.0, 0.1)]);
        let b = circle_mix(&[(1.0, 0.3, 0.2)]);
        assert_eq!(l1_separation(&a, &a).unwrap(), 0.0);
        assert_abs_diff_eq!(l1_separation(&a, &b).unwrap(), l1_separation(&b, &a).unwrap(), epsilon = 1e-14);
        let p = circle_mix(&[(1.0, -2.0, 1e-3)]);
        let q = circle_mix(&[(1.0, 2.0, 1e-3)]);
        assert_abs_diff_eq!(l1_separation(&p, &q).unwrap(), 2.0, epsilon = 1e-6);
        let vmf = |mu: [f64; 3]| {
            MixtureSpec::new(
                Domain::Sphere2,
                vec![MixtureComponent {
                    weight: 1.0,
                    center: Point::Unit(mu),
                    spread: 500.0,
                }],
            )
            .unwrap()
        };
        assert_abs_diff_eq!(
            l1_separation(&vmf([0.0, 0.0, 1.0]), &vmf([1.0, 0.0, 0.0])).unwrap(),
            2.0,
            epsilon = 1e-3
        );
        assert!(l1_separation(&a, &vmf([0.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn mixture_coefficients_match_kernel_coefficients() {
        // a single circle component at bandwidth h has coefficients exp(-m^2 h) phi_m(mu)
        let basis = make_basis(Domain::Circle, 6).unwrap();
        let c = mixture_coefficients(&circle_mix(&[(1.0, 0.7, 0.1)]), &basis).unwrap();
        let s = SampleSet::circle(vec![0.7]).unwrap();
        let f = kde(&s, 0.1, &basis, None).unwrap();
        for (a, b) in c.coeffs().iter().zip(f.coeffs.coeffs()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }
}
