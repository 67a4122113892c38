use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionParams;
use crate::mixture::{EmConfig, GridSpec};
use crate::scene::{Landmark, LandmarkMap, Target, TargetSpec};
use crate::sensor::{RadarModel, RadarPose};
use crate::sidelink::{ClockModel, Topology};
use crate::Point3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Isolated,
    Cooperation,
    Federation,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Isolated, Mode::Cooperation, Mode::Federation];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Isolated => "isolated",
            Mode::Cooperation => "cooperation",
            Mode::Federation => "federation",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isolated" => Ok(Mode::Isolated),
            "cooperation" | "coop" => Ok(Mode::Cooperation),
            "federation" | "fed" => Ok(Mode::Federation),
            other => Err(Error::config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Radar model as written in config files; angles in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarModelConfig {
    pub fov_azimuth_deg: f64,
    pub max_range: f64,
    pub range_resolution: f64,
    pub azimuth_resolution_deg: f64,
    pub noise_sigma: f64,
    pub outlier_rate: f64,
    pub detection_range_ref: f64,
    pub occlusion_width: f64,
    pub occlusion_attenuation: f64,
    pub outlier_height: f64,
}

impl Default for RadarModelConfig {
    fn default() -> Self {
        let m = RadarModel::default();
        Self {
            fov_azimuth_deg: m.fov_azimuth.to_degrees(),
            max_range: m.max_range,
            range_resolution: m.range_resolution,
            azimuth_resolution_deg: m.azimuth_resolution.to_degrees(),
            noise_sigma: m.noise_sigma,
            outlier_rate: m.outlier_rate,
            detection_range_ref: m.detection_range_ref,
            occlusion_width: m.occlusion_width,
            occlusion_attenuation: m.occlusion_attenuation,
            outlier_height: m.outlier_height,
        }
    }
}

impl RadarModelConfig {
    pub fn to_model(&self) -> RadarModel {
        RadarModel {
            fov_azimuth: self.fov_azimuth_deg.to_radians(),
            max_range: self.max_range,
            range_resolution: self.range_resolution,
            azimuth_resolution: self.azimuth_resolution_deg.to_radians(),
            noise_sigma: self.noise_sigma,
            outlier_rate: self.outlier_rate,
            detection_range_ref: self.detection_range_ref,
            occlusion_width: self.occlusion_width,
            occlusion_attenuation: self.occlusion_attenuation,
            outlier_height: self.outlier_height,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarConfig {
    pub position: [f64; 3],
    /// Boresight azimuth in the global frame, degrees.
    pub yaw_deg: f64,
    /// Replaces the scenario-wide radar model for this radar.
    #[serde(default)]
    pub model: Option<RadarModelConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub landmarks: Vec<Landmark>,
    pub targets: Vec<TargetSpec>,
    pub radars: Vec<RadarConfig>,
    #[serde(default)]
    pub radar_model: RadarModelConfig,
    /// Directed `(sender, receiver)` pairs; fully connected when absent.
    #[serde(default)]
    pub edges: Option<Vec<[usize; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub resolution: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 8.0,
            y_min: 0.0,
            y_max: 8.0,
            resolution: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbscanConfig {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for DbscanConfig {
    fn default() -> Self {
        Self { eps: 0.3, min_pts: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmSection {
    pub max_iters: usize,
    pub tol: f64,
    pub variance_floor: f64,
    /// Cap on mixture components per radar.
    pub m_max: usize,
}

impl Default for EmSection {
    fn default() -> Self {
        let em = EmConfig::default();
        Self {
            max_iters: em.max_iters,
            tol: em.tol,
            variance_floor: em.variance_floor,
            m_max: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Maximum target speed for the random walk, m/s. Defaults to the
    /// fastest configured target.
    pub speed: Option<f64>,
    /// Spread added to the random-walk step, meters.
    pub sigma_floor: f64,
    /// Prior value outside the predicted scene, relative to its peak.
    pub floor: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            speed: None,
            sigma_floor: RadarModel::default().range_resolution,
            floor: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KlConfig {
    /// Compute the global reference posterior and divergence samples.
    pub enabled: bool,
    /// Probability floor applied to both grids before the divergence.
    pub floor: f64,
}

impl Default for KlConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            floor: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub n_epochs: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
    /// Radar whose estimates give the headline metrics.
    #[serde(default)]
    pub observer: usize,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub dbscan: DbscanConfig,
    #[serde(default)]
    pub em: EmSection,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub kl: KlConfig,
    #[serde(default)]
    pub clock: ClockModel,
    pub scenario: ScenarioConfig,
}

fn default_dt() -> f64 {
    0.010
}

fn default_tau() -> f64 {
    0.45
}

fn default_min_separation() -> f64 {
    0.5
}

impl ExperimentConfig {
    /// Parse TOML, or JSON when the text starts with `{`.
    pub fn from_str_any(text: &str) -> std::result::Result<Self, String> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_str_any(&text).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config("dt must be > 0"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::config("tau must lie in (0, 1)"));
        }
        if !(self.min_separation.is_finite() && self.min_separation >= 0.0) {
            return Err(Error::config("min_separation must be >= 0"));
        }
        if self.scenario.radars.is_empty() {
            return Err(Error::config("at least one radar is required"));
        }
        if self.observer >= self.scenario.radars.len() {
            return Err(Error::config(format!(
                "observer {} is not one of the {} radars",
                self.observer,
                self.scenario.radars.len()
            )));
        }
        if !(self.dbscan.eps.is_finite() && self.dbscan.eps > 0.0) || self.dbscan.min_pts == 0 {
            return Err(Error::config("dbscan needs eps > 0 and min_pts >= 1"));
        }
        if self.em.max_iters == 0 || self.em.m_max == 0 || !(self.em.tol >= 0.0) || !(self.em.variance_floor > 0.0) {
            return Err(Error::config(
                "em needs max_iters >= 1, m_max >= 1, tol >= 0 and variance_floor > 0",
            ));
        }
        if !(self.prior.sigma_floor.is_finite() && self.prior.sigma_floor >= 0.0) {
            return Err(Error::config("prior.sigma_floor must be >= 0"));
        }
        if let Some(v) = self.prior.speed {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config("prior.speed must be >= 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.prior.floor) {
            return Err(Error::config("prior.floor must be in [0, 1]"));
        }
        if !(self.kl.floor > 0.0 && self.kl.floor < 1.0) {
            return Err(Error::config("kl.floor must lie in (0, 1)"));
        }
        self.clock.validate()?;
        self.grid_spec()?;
        self.topology()?;
        self.targets()?;
        let mut ids: Vec<u32> = self.scenario.targets.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("target ids must be unique"));
        }
        for (k, r) in self.scenario.radars.iter().enumerate() {
            if r.position.iter().chain([&r.yaw_deg]).any(|v| !v.is_finite()) {
                return Err(Error::config(format!("radar {k}: pose must be finite")));
            }
            self.radar_model(k).validate()?;
        }
        Ok(())
    }

    pub fn n_radars(&self) -> usize {
        self.scenario.radars.len()
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let g = &self.grid;
        GridSpec::new(g.x_min, g.x_max, g.y_min, g.y_max, g.resolution)
    }

    pub fn topology(&self) -> Result<Topology> {
        let n = self.n_radars();
        match &self.scenario.edges {
            None => Topology::fully_connected(n),
            Some(edges) => Topology::new(n, &edges.iter().map(|e| (e[0], e[1])).collect::<Vec<_>>()),
        }
    }

    pub fn targets(&self) -> Result<Vec<Target>> {
        let map = LandmarkMap::new(&self.scenario.landmarks)?;
        self.scenario
            .targets
            .iter()
            .map(|spec| Target::new(spec.clone(), &map))
            .collect()
    }

    pub fn poses(&self) -> Vec<RadarPose> {
        self.scenario
            .radars
            .iter()
            .map(|r| {
                RadarPose::new(
                    Point3::new(r.position[0], r.position[1], r.position[2]),
                    r.yaw_deg.to_radians(),
                )
            })
            .collect()
    }

    pub fn radar_model(&self, k: usize) -> RadarModel {
        self.scenario.radars[k]
            .model
            .as_ref()
            .unwrap_or(&self.scenario.radar_model)
            .to_model()
    }

    pub fn fusion_params(&self) -> Result<FusionParams> {
        Ok(FusionParams {
            grid: self.grid_spec()?,
            em: EmConfig {
                max_iters: self.em.max_iters,
                tol: self.em.tol,
                variance_floor: self.em.variance_floor,
            },
            m_max: self.em.m_max,
        })
    }

    /// Random-walk speed: the configured value or the fastest target.
    pub fn prior_speed(&self) -> f64 {
        self.prior
            .speed
            .unwrap_or_else(|| self.scenario.targets.iter().map(|t| t.speed).fold(0.0, f64::max))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }
}
