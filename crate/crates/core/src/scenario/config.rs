//! Scenario files: TOML documents naming a map, a path and run settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constraints::{BoxLimits, CorridorSettings};
use crate::dynamics::{VehicleParams, VehicleState};
use crate::grid::{GridMap, WorldPoint};
use crate::nmpc::{SqpSettings, Weights};
use crate::observer::CheckMode;
use crate::reachability::PedestrianTrack;
use crate::reference::{parse_path, ReferencePath};

use super::ScenarioError;

/// One constant-velocity segment of a scripted pedestrian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub vx: f64,
    pub vy: f64,
    /// Seconds.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedestrianSpec {
    pub x: f64,
    pub y: f64,
    /// Side of the square around the detected position, meters.
    #[serde(default = "default_footprint")]
    pub footprint: f64,
    /// Whether tracking reports the pedestrian's speed once visible.
    #[serde(default)]
    pub tracked: bool,
    /// Velocity script; the pedestrian stands still after the last leg.
    #[serde(default)]
    pub legs: Vec<Leg>,
}

fn default_footprint() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    #[serde(default)]
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Map file, relative to the scenario file.
    pub map: PathBuf,
    /// Waypoint file, relative to the scenario file.
    pub path: PathBuf,
    /// Extrapolation and prediction horizon in seconds.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_pedestrian_speed")]
    pub max_pedestrian_speed: f64,
    /// Advisor buffer, meters.
    #[serde(default)]
    pub buffer: f64,
    /// Lateral margin subtracted from probed free distances, meters.
    #[serde(default)]
    pub margin: f64,
    #[serde(default)]
    pub observer_mode: CheckMode,
    #[serde(default = "default_tick_limit")]
    pub tick_limit: usize,
    /// Defaults to the first waypoint at rest.
    #[serde(default)]
    pub start: Option<StartPose>,
    #[serde(default = "default_sqp_iterations")]
    pub sqp_iterations: usize,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub limits: BoxLimits,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default)]
    pub pedestrians: Vec<PedestrianSpec>,
}

fn default_horizon() -> f64 {
    1.5
}

fn default_pedestrian_speed() -> f64 {
    1.0
}

fn default_tick_limit() -> usize {
    1500
}

fn default_sqp_iterations() -> usize {
    3
}

impl ScenarioConfig {
    /// Config with defaults for everything except the two file names.
    pub fn new(map: impl Into<PathBuf>, path: impl Into<PathBuf>) -> Self {
        Self {
            map: map.into(),
            path: path.into(),
            horizon: default_horizon(),
            max_pedestrian_speed: default_pedestrian_speed(),
            buffer: 0.0,
            margin: 0.0,
            observer_mode: CheckMode::default(),
            tick_limit: default_tick_limit(),
            start: None,
            sqp_iterations: default_sqp_iterations(),
            vehicle: VehicleParams::default(),
            limits: BoxLimits::default(),
            weights: Weights::default(),
            pedestrians: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn corridor(&self) -> CorridorSettings {
        CorridorSettings {
            margin: self.margin,
            buffer: self.buffer,
            ..CorridorSettings::default()
        }
    }

    pub fn sqp(&self) -> SqpSettings {
        SqpSettings {
            iterations: self.sqp_iterations,
            ..SqpSettings::default()
        }
    }
}

/// `round(horizon / ts)` when the quotient is within one unit in the last
/// place of an integer.
pub fn horizon_steps(horizon: f64, ts: f64) -> Result<usize, ScenarioError> {
    let q = horizon / ts;
    let r = q.round();
    if !(q.is_finite() && r >= 1.0) {
        return Err(ScenarioError::Invalid(format!(
            "horizon {horizon} s must cover at least one step of {ts} s"
        )));
    }
    let ulp = f64::from_bits(r.to_bits() + 1) - r;
    if (q - r).abs() > ulp {
        return Err(ScenarioError::Invalid(format!(
            "horizon {horizon} s is not a whole number of {ts} s steps"
        )));
    }
    Ok(r as usize)
}

/// A validated configuration with its map and path loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub map: GridMap,
    pub path: ReferencePath,
}

impl Scenario {
    pub fn new(config: ScenarioConfig, map: GridMap, path: ReferencePath) -> Result<Self, ScenarioError> {
        let s = Self { config, map, path };
        s.validate()?;
        Ok(s)
    }

    /// Read a scenario file and the files it names.
    pub fn load(file: &Path) -> Result<Self, ScenarioError> {
        let text = read(file)?;
        let config = ScenarioConfig::from_toml(&text)?;
        let base = file.parent().unwrap_or(Path::new("."));
        let map = GridMap::parse(&read(&base.join(&config.map))?)?;
        let path = parse_path(&read(&base.join(&config.path))?)?;
        Self::new(config, map, path)
    }

    pub fn horizon_steps(&self) -> usize {
        horizon_steps(self.config.horizon, self.config.vehicle.ts).expect("validated scenario")
    }

    pub fn start_state(&self) -> VehicleState {
        match self.config.start {
            Some(s) => VehicleState::new(s.x, s.y, s.psi, s.v),
            None => {
                let w = self.path.waypoints()[0];
                VehicleState::new(w.x, w.y, w.h, 0.0)
            }
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let c = &self.config;
        c.vehicle.validate()?;
        c.limits.validate()?;
        c.weights.validate()?;
        horizon_steps(c.horizon, c.vehicle.ts)?;
        let checks = [
            (c.max_pedestrian_speed >= 0.0 && c.max_pedestrian_speed.is_finite(), "max_pedestrian_speed must be non-negative"),
            (c.buffer >= 0.0 && c.buffer.is_finite(), "buffer must be non-negative"),
            (c.margin >= 0.0 && c.margin.is_finite(), "margin must be non-negative"),
            (c.sqp_iterations >= 1, "sqp_iterations must be at least 1"),
        ];
        for (ok, message) in checks {
            if !ok {
                return Err(ScenarioError::Invalid(message.into()));
            }
        }
        let start = self.start_state();
        if !start.is_finite() || self.map.world_to_cell(start.position()).is_err() {
            return Err(ScenarioError::Invalid("start pose is outside the map".into()));
        }
        if let Some(i) = self
            .path
            .waypoints()
            .iter()
            .position(|w| self.map.world_to_cell(w.position()).is_err())
        {
            return Err(ScenarioError::Invalid(format!("waypoint {i} is outside the map")));
        }
        for (k, p) in c.pedestrians.iter().enumerate() {
            let legs_ok = p
                .legs
                .iter()
                .all(|l| l.vx.is_finite() && l.vy.is_finite() && l.duration >= 0.0 && l.duration.is_finite());
            if !(p.x.is_finite() && p.y.is_finite() && p.footprint > 0.0 && legs_ok) {
                return Err(ScenarioError::Invalid(format!("pedestrian {k} is malformed")));
            }
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A scripted pedestrian during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct PedestrianAgent {
    pub spec: PedestrianSpec,
    pub position: WorldPoint,
    pub elapsed: f64,
}

impl PedestrianAgent {
    pub fn new(spec: PedestrianSpec) -> Self {
        Self {
            position: WorldPoint::new(spec.x, spec.y),
            spec,
            elapsed: 0.0,
        }
    }

    /// Velocity of the leg active at the current time.
    pub fn velocity(&self) -> (f64, f64) {
        let mut t = self.elapsed;
        for leg in &self.spec.legs {
            if t < leg.duration {
                return (leg.vx, leg.vy);
            }
            t -= leg.duration;
        }
        (0.0, 0.0)
    }

    pub fn advance(&mut self, dt: f64) {
        let (vx, vy) = self.velocity();
        self.position = WorldPoint::new(self.position.x + vx * dt, self.position.y + vy * dt);
        self.elapsed += dt;
    }

    pub fn track(&self) -> PedestrianTrack {
        let (vx, vy) = self.velocity();
        PedestrianTrack {
            position: self.position,
            footprint: self.spec.footprint,
            observed_speed: self.spec.tracked.then(|| vx.hypot(vy)),
        }
    }
}
