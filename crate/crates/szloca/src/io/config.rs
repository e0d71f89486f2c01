//! JSON configuration for the pipeline and the scene simulator.
//!
//! Config structs are plain serde mirrors of the on-disk schema; `build_*`
//! methods turn them into validated runtime objects and surface every
//! inconsistency as a [`ConfigError`].

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anchor::AnchorConfig;
use crate::camera::{CameraIntrinsics, CameraPose, CameraRig, Projection};
use crate::ground::{GroundModel, GroundPlane, Heightfield};
use crate::lift::{GroundHomography, PixelPlanePair, PlaneFrame};
use crate::sim::{AgentSpec, NoiseParams, SimScene};
use crate::track::TrackerParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("rig: {0}")]
    Rig(#[from] crate::camera::CameraError),
    #[error("ground: {0}")]
    Ground(#[from] crate::ground::GroundError),
    #[error("anchor: {0}")]
    Anchor(#[from] crate::anchor::AnchorError),
    #[error("tracker: {0}")]
    Tracker(#[from] crate::track::TrackError),
    #[error("scene: {0}")]
    Scene(#[from] crate::sim::SimError),
    #[error("{0}")]
    Invalid(String),
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Json {
        path: path.to_owned(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionKind {
    Perspective,
    Orthographic,
}

/// Camera block of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigConfig {
    pub projection: ProjectionKind,
    /// `[width, height]` in pixels.
    pub image_size: [u32; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ortho_scale: Option<f64>,
    /// `[u0, v0]`; defaults to the image center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principal_point: Option<[f64; 2]>,
    pub position_m: [f64; 3],
    pub yaw_pitch_roll_deg: [f64; 3],
    /// Accept a rig that fails the must-look-downward check.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_level_view: bool,
    /// Pixel-to-ground map fitted by `calibrate`, row-major. When present it
    /// replaces ray casting for ground anchors (plane ground only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homography: Option<[[f64; 3]; 3]>,
}

impl RigConfig {
    pub fn build(&self) -> Result<CameraRig, ConfigError> {
        let projection = match self.projection {
            ProjectionKind::Perspective => {
                if self.ortho_scale.is_some() {
                    return Err(ConfigError::Invalid(
                        "rig: ortho_scale is meaningless for a perspective projection".into(),
                    ));
                }
                let focal_px = self.focal_px.ok_or_else(|| {
                    ConfigError::Invalid("rig: perspective projection requires focal_px".into())
                })?;
                Projection::Perspective { focal_px }
            }
            ProjectionKind::Orthographic => {
                if self.focal_px.is_some() {
                    return Err(ConfigError::Invalid(
                        "rig: focal_px is meaningless for an orthographic projection".into(),
                    ));
                }
                let metres_per_px = self.ortho_scale.ok_or_else(|| {
                    ConfigError::Invalid("rig: orthographic projection requires ortho_scale".into())
                })?;
                Projection::Orthographic { metres_per_px }
            }
        };
        let intrinsics = CameraIntrinsics::new(
            projection,
            self.image_size[0],
            self.image_size[1],
            self.principal_point.map(|[u, v]| (u, v)),
        )?;
        let [x, y, z] = self.position_m;
        let [yaw, pitch, roll] = self.yaw_pitch_roll_deg;
        let pose = CameraPose::from_euler_deg(Point3::new(x, y, z), yaw, pitch, roll)?;
        if self.allow_level_view {
            Ok(CameraRig::new_forced(intrinsics, pose))
        } else {
            Ok(CameraRig::new(intrinsics, pose)?)
        }
    }

    /// Instantiates the calibrated pixel-to-ground map, if configured.
    pub fn build_homography(
        &self,
        ground: &GroundModel,
    ) -> Result<Option<GroundHomography>, ConfigError> {
        let Some(rows) = self.homography else {
            return Ok(None);
        };
        let GroundModel::Plane(plane) = ground else {
            return Err(ConfigError::Invalid(
                "rig: a calibrated homography requires a plane ground".into(),
            ));
        };
        let h = Matrix3::from_iterator(rows.iter().flatten().copied()).transpose();
        if h.iter().any(|x| !x.is_finite()) || h.amax() < 1e-12 {
            return Err(ConfigError::Invalid("rig: homography is degenerate".into()));
        }
        Ok(Some(GroundHomography {
            h,
            frame: PlaneFrame::for_plane(plane),
        }))
    }
}

/// Ground block of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GroundConfig {
    Plane {
        anchor: [f64; 3],
        normal: [f64; 3],
    },
    Heightfield {
        /// World (x, z) of the grid corner at row 0, column 0.
        origin: [f64; 2],
        cell_size: f64,
        /// Heights row by row; rows advance along +z, columns along +x.
        rows: Vec<Vec<f64>>,
    },
}

impl Default for GroundConfig {
    fn default() -> Self {
        GroundConfig::Plane {
            anchor: [0.0, 0.0, 0.0],
            normal: [0.0, 1.0, 0.0],
        }
    }
}

impl GroundConfig {
    pub fn build(&self) -> Result<GroundModel, ConfigError> {
        match self {
            GroundConfig::Plane { anchor, normal } => Ok(GroundModel::Plane(GroundPlane::new(
                Point3::new(anchor[0], anchor[1], anchor[2]),
                Vector3::new(normal[0], normal[1], normal[2]),
            )?)),
            GroundConfig::Heightfield {
                origin,
                cell_size,
                rows,
            } => Ok(GroundModel::Field(Heightfield::new(
                (origin[0], origin[1]),
                *cell_size,
                rows.clone(),
            )?)),
        }
    }
}

fn default_osc_queue() -> usize {
    256
}

/// Input and output routing. The CLI fills these from flags; a config file
/// may preset them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoBlock {
    /// Detection records file (newline-delimited JSON).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
    /// UDP listen address for live detection records, `udp://host:port`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub listen: Option<String>,
    /// Track records output file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// OSC destination, `osc://host:port`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub emit: Option<String>,
    /// Bounded OSC queue length before oldest messages are dropped.
    #[serde(skip_serializing_if = "is_default_osc_queue")]
    pub osc_queue: usize,
}

fn is_default_osc_queue(n: &usize) -> bool {
    *n == default_osc_queue()
}

impl Default for IoBlock {
    fn default() -> Self {
        Self {
            detections: None,
            listen: None,
            out: None,
            emit: None,
            osc_queue: default_osc_queue(),
        }
    }
}

impl IoBlock {
    /// Exactly one input source and at least one sink must be routed.
    pub fn validate_routing(&self) -> Result<(), ConfigError> {
        let inputs = usize::from(self.detections.is_some()) + usize::from(self.listen.is_some());
        if inputs != 1 {
            return Err(ConfigError::Invalid(format!(
                "io: exactly one input source required (got {inputs}: detections file and/or UDP listen)"
            )));
        }
        if self.out.is_none() && self.emit.is_none() {
            return Err(ConfigError::Invalid(
                "io: at least one sink required (out file or OSC emit)".into(),
            ));
        }
        if self.osc_queue == 0 {
            return Err(ConfigError::Invalid("io: osc_queue must be positive".into()));
        }
        Ok(())
    }
}

fn default_true() -> bool {
    true
}

/// Top-level pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub rig: RigConfig,
    #[serde(default)]
    pub ground: GroundConfig,
    #[serde(default)]
    pub anchor: AnchorConfig,
    #[serde(default)]
    pub tracker: TrackerParams,
    /// Reconstruct full 3D skeletons for matched tracks.
    #[serde(default = "default_true")]
    pub place_skeletons: bool,
    #[serde(default)]
    pub io: IoBlock,
}

impl PipelineConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        read_json(path)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|source| ConfigError::Json {
            path: PathBuf::from("<inline>"),
            source,
        })
    }
}

fn default_area() -> [f64; 2] {
    [20.0, 20.0]
}

fn default_agent_count() -> usize {
    10
}

fn default_frame_rate() -> f64 {
    25.0
}

fn default_pixel_noise_std() -> f64 {
    NoiseParams::default().pixel_noise_std
}

fn default_dropout() -> f64 {
    NoiseParams::default().joint_dropout_prob
}

fn default_matching_radius() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub height_m: f64,
    pub speed_mps: f64,
    /// Ground waypoints `[x, z]` walked in order.
    pub waypoints: Vec<[f64; 2]>,
}

/// Scene description consumed by the `simulate` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub rig: RigConfig,
    #[serde(default)]
    pub ground: GroundConfig,
    /// `[width, depth]` of the walkable area, centered on the origin.
    #[serde(default = "default_area")]
    pub area_m: [f64; 2],
    /// Number of randomly sampled agents; ignored when `agents` is given.
    #[serde(default = "default_agent_count")]
    pub agent_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<AgentConfig>,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    pub duration_s: f64,
    #[serde(default = "default_pixel_noise_std")]
    pub pixel_noise_std: f64,
    #[serde(default = "default_dropout")]
    pub joint_dropout_prob: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub anchor: AnchorConfig,
    #[serde(default)]
    pub tracker: TrackerParams,
    /// Truth-to-track pairing radius used by the evaluation metrics.
    #[serde(default = "default_matching_radius")]
    pub matching_radius_m: f64,
}

impl SceneConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        read_json(path)
    }

    /// Builds the runnable scene; `seed_override` (the CLI `--seed`) wins
    /// over the file's seed.
    pub fn build_scene(&self, seed_override: Option<u64>) -> Result<SimScene, ConfigError> {
        let rig = self.rig.build()?;
        let seed = seed_override.unwrap_or(self.seed);
        let area = (self.area_m[0], self.area_m[1]);
        let mut scene = if self.agents.is_empty() {
            SimScene::random(self.agent_count, rig, area, self.duration_s, seed)
        } else {
            SimScene {
                area,
                agents: self
                    .agents
                    .iter()
                    .map(|a| AgentSpec {
                        height: a.height_m,
                        speed: a.speed_mps,
                        waypoints: a.waypoints.iter().map(|w| (w[0], w[1])).collect(),
                    })
                    .collect(),
                rig,
                frame_rate: self.frame_rate,
                duration: self.duration_s,
                noise: NoiseParams::default(),
                seed,
            }
        };
        scene.frame_rate = self.frame_rate;
        scene.noise = NoiseParams {
            pixel_noise_std: self.pixel_noise_std,
            joint_dropout_prob: self.joint_dropout_prob,
        };
        scene.validate()?;
        Ok(scene)
    }
}

/// Parses a calibration pairs file: one `u v x z` quadruple per line
/// (pixel coordinates, then ground meters). Blank lines and `#` comments
/// are skipped.
pub fn parse_calibration_pairs(text: &str) -> Result<Vec<PixelPlanePair>, ConfigError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(ConfigError::Invalid(format!(
                "pairs line {}: expected 4 fields `u v x z`, got {}",
                i + 1,
                fields.len()
            )));
        }
        let mut values = [0.0; 4];
        for (slot, field) in values.iter_mut().zip(&fields) {
            *slot = field.parse::<f64>().map_err(|_| {
                ConfigError::Invalid(format!("pairs line {}: bad number {field:?}", i + 1))
            })?;
        }
        pairs.push(((values[0], values[1]), (values[2], values[3])));
    }
    Ok(pairs)
}
