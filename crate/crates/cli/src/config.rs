//! TOML run configuration. Every table rejects unknown keys.
//!
//! ```toml
//! max_degree = 10
//!
//! [bandwidth]
//! rule = "plug_in"
//! scale = 0.166
//!
//! [kappa]
//! rule = "pair_min"
//!
//! [geodesic]
//! segments = 30
//! max_iter = 200
//!
//! [test]
//! replicates = 200
//! alpha = 0.05
//! seed = 7
//! ```

use std::path::{Path, PathBuf};

use dkappa_core::basis::Domain;
use dkappa_core::geodesic::GeodesicOptions;
use dkappa_core::heatkde::MIN_BANDWIDTH;
use dkappa_core::testing::{BandwidthRule, KappaRule, MixtureSpec, TestConfig};
use dkappa_core::wrap1d::DEFAULT_PAD;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::hurdat::{Stage, TrackFilter};
use crate::samples::Layout;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Expected domain of the inputs; checked when set.
    pub domain: Option<Domain>,
    pub max_degree: usize,
    /// Padding fraction for wrapping real-line samples onto the circle.
    pub wrap_pad: f64,
    pub bandwidth: BandwidthRule,
    pub kappa: KappaRule,
    pub geodesic: GeodesicOptions,
    pub test: TestParams,
    pub io: IoParams,
    pub estimate: EstimateParams,
    pub bandwidth_grid: GridParams,
    pub simulate: SimulateParams,
    pub hurdat: HurdatParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: None,
            max_degree: 10,
            wrap_pad: DEFAULT_PAD,
            bandwidth: BandwidthRule::default(),
            kappa: KappaRule::PairMin,
            geodesic: GeodesicOptions::default(),
            test: TestParams::default(),
            io: IoParams::default(),
            estimate: EstimateParams::default(),
            bandwidth_grid: GridParams::default(),
            simulate: SimulateParams::default(),
            hurdat: HurdatParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestParams {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for TestParams {
    fn default() -> Self {
        let t = TestConfig::default();
        Self {
            replicates: t.replicates,
            alpha: t.alpha,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoParams {
    /// Sample files used when none are given on the command line.
    pub inputs: Vec<PathBuf>,
    /// Recorded in the metadata file, not the result, so results do not depend on where they are written.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
}

impl Default for IoParams {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            output_dir: PathBuf::from("dkappa-out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateParams {
    /// Plot grid: points on the circle, or latitude rows on the sphere (twice as many longitudes).
    pub grid: usize,
}

impl Default for EstimateParams {
    fn default() -> Self {
        Self { grid: 360 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    pub values: Vec<f64>,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            values: vec![0.05, 0.1, 0.15, 0.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub a: MixtureSpec,
    pub b: MixtureSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateParams {
    /// Size of each of the two samples.
    pub sample_size: usize,
    /// Monte Carlo trials per scenario.
    pub trials: usize,
    pub scenarios: Vec<Scenario>,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self {
            sample_size: 200,
            trials: 100,
            scenarios: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SphereLayout {
    LatLon,
    Xyz,
}

impl From<SphereLayout> for Layout {
    fn from(l: SphereLayout) -> Self {
        match l {
            SphereLayout::LatLon => Layout::LatLon,
            SphereLayout::Xyz => Layout::Xyz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HurdatParams {
    pub stages: Vec<Stage>,
    pub filter: TrackFilter,
    pub layout: SphereLayout,
}

impl Default for HurdatParams {
    fn default() -> Self {
        Self {
            stages: vec![Stage::Start, Stage::AfterHours { hours: 60.0 }, Stage::End],
            filter: TrackFilter::default(),
            layout: SphereLayout::LatLon,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn test_config(&self) -> TestConfig {
        TestConfig {
            kappa: self.kappa,
            bandwidth: self.bandwidth,
            replicates: self.test.replicates,
            alpha: self.test.alpha,
            seed: self.test.seed,
            max_degree: self.max_degree,
            geodesic: self.geodesic,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.max_degree == 0 {
            return fail("max_degree must be at least 1".into());
        }
        if !(self.wrap_pad >= 0.0 && self.wrap_pad.is_finite()) {
            return fail(format!("wrap_pad must be nonnegative, got {}", self.wrap_pad));
        }
        self.test_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        let g = &self.geodesic;
        if g.segments < 2 || g.max_iter == 0 || !(g.step > 0.0) || !(g.max_step >= g.step) {
            return fail("geodesic needs segments >= 2, max_iter >= 1 and 0 < step <= max_step".into());
        }
        if g.grad_tol.is_some_and(|t| !(t > 0.0)) {
            return fail("geodesic.grad_tol must be positive".into());
        }
        if let BandwidthRule::Fixed { h } = self.bandwidth {
            if !(h >= MIN_BANDWIDTH) {
                return fail(format!("bandwidth {h} below {MIN_BANDWIDTH}"));
            }
        }
        if self.estimate.grid < 4 {
            return fail("estimate.grid must be at least 4".into());
        }
        if self.bandwidth_grid.values.is_empty() || self.bandwidth_grid.values.iter().any(|h| !(*h >= MIN_BANDWIDTH)) {
            return fail(format!("bandwidth_grid.values must be nonempty and at least {MIN_BANDWIDTH}"));
        }
        let sim = &self.simulate;
        if sim.sample_size < 2 || sim.trials == 0 {
            return fail("simulate needs sample_size >= 2 and trials >= 1".into());
        }
        for s in &sim.scenarios {
            if s.a.domain() != s.b.domain() || self.domain.is_some_and(|d| d != s.a.domain()) {
                return fail(format!("scenario {:?} mixes domains", s.name));
            }
        }
        if self.hurdat.stages.is_empty() {
            return fail("hurdat.stages must not be empty".into());
        }
        for st in &self.hurdat.stages {
            if let Stage::AfterHours { hours } = st {
                if !(*hours >= 0.0 && hours.is_finite()) {
                    return fail(format!("stage hours must be nonnegative, got {hours}"));
                }
            }
        }
        Ok(())
    }
}
