//! Identity-stable tracking of lifted detections.
//!
//! Per frame: predict every track forward with a constant-velocity model,
//! associate predictions to detections by gated minimum-cost assignment,
//! update matched filters, age unmatched tracks, spawn tracks for unmatched
//! detections, and emit the confirmed ones. The tracker is a single mutable
//! state machine; frames must arrive in time order.

mod assignment;
mod kalman;
mod smoother;

use std::collections::BTreeMap;

use nalgebra::Point3;
use thiserror::Error;

use crate::lift::LiftedDetection;
pub use assignment::{associate, Assignment};
use kalman::Kalman4;
use smoother::PointSmoother;
pub use smoother::{SmootherConfig, SmootherKind};

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("timestamps must strictly increase: frame {frame} has t = {t}, previous t = {prev}")]
    FrameOrder { frame: u64, t: f64, prev: f64 },
    #[error("tracker parameter {name} must be positive, got {value}")]
    BadParam { name: &'static str, value: f64 },
    #[error("ema_alpha must lie in (0, 1], got {0}")]
    BadEmaAlpha(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackLifecycle {
    Tentative,
    Confirmed,
    Lost,
}

impl TrackLifecycle {
    pub fn name(self) -> &'static str {
        match self {
            TrackLifecycle::Tentative => "tentative",
            TrackLifecycle::Confirmed => "confirmed",
            TrackLifecycle::Lost => "lost",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerParams {
    /// Consecutive-hit count promoting a tentative track to confirmed.
    pub n_init: u32,
    /// Misses tolerated before a track is dropped.
    pub max_age: u32,
    /// Association gate in meters of planar distance.
    pub gate_radius: f64,
    /// White-acceleration process noise, m/s².
    pub process_accel_std: f64,
    /// Planar measurement noise of lifted positions, meters.
    pub measurement_std: f64,
    /// Velocity uncertainty assigned to newborn tracks, m/s.
    pub initial_velocity_std: f64,
    pub smoother: SmootherConfig,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            n_init: 3,
            max_age: 15,
            gate_radius: 1.5,
            process_accel_std: 1.0,
            measurement_std: 0.15,
            initial_velocity_std: 2.0,
            smoother: SmootherConfig::default(),
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<(), TrackError> {
        for (name, value) in [
            ("n_init", self.n_init as f64),
            ("max_age", self.max_age as f64),
            ("gate_radius", self.gate_radius),
            ("process_accel_std", self.process_accel_std),
            ("measurement_std", self.measurement_std),
            ("initial_velocity_std", self.initial_velocity_std),
        ] {
            if !(value > 0.0) {
                return Err(TrackError::BadParam { name, value });
            }
        }
        self.smoother.validate()
    }
}

/// Internal per-track state; exposed read-only through [`Tracker::tracks`].
#[derive(Debug, Clone)]
pub struct TrackState {
    pub track_id: u64,
    kf: Kalman4,
    pub lifecycle: TrackLifecycle,
    pub hits: u32,
    pub misses: u32,
    pub last_skeleton3d: Option<BTreeMap<String, Point3<f64>>>,
    pub smoothed_position: Point3<f64>,
    ground_y: f64,
    smoother: PointSmoother,
    matched_this_frame: bool,
}

impl TrackState {
    pub fn position(&self) -> Point3<f64> {
        let (x, z) = self.kf.position();
        Point3::new(x, self.ground_y, z)
    }

    pub fn velocity(&self) -> (f64, f64) {
        self.kf.velocity()
    }

    pub fn min_cov_eigenvalue(&self) -> f64 {
        self.kf.min_cov_eigenvalue()
    }
}

/// One confirmed track's output for a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Track3D {
    pub id: u64,
    /// Filtered position; y is the ground height at the track location.
    pub position: Point3<f64>,
    /// Position after the configured output smoother.
    pub smoothed: Point3<f64>,
    /// Planar velocity (vx, vz), m/s.
    pub velocity: (f64, f64),
    /// World joints from this frame's matched detection, when present.
    pub skeleton3d: Option<BTreeMap<String, Point3<f64>>>,
    pub state: TrackLifecycle,
}

/// All confirmed tracks for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackFrame {
    pub frame: u64,
    pub t: f64,
    pub tracks: Vec<Track3D>,
}

#[derive(Debug)]
pub struct Tracker {
    params: TrackerParams,
    tracks: Vec<TrackState>,
    next_id: u64,
    last_time: Option<f64>,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Result<Self, TrackError> {
        params.validate()?;
        Ok(Self {
            params,
            tracks: Vec::new(),
            next_id: 1,
            last_time: None,
        })
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    /// Live tracks in id order (tentative ones included).
    pub fn tracks(&self) -> &[TrackState] {
        &self.tracks
    }

    /// Advances one frame and returns the confirmed tracks.
    pub fn step(
        &mut self,
        frame: u64,
        t: f64,
        detections: &[LiftedDetection],
    ) -> Result<TrackFrame, TrackError> {
        let dt = match self.last_time {
            Some(prev) => {
                if t <= prev {
                    return Err(TrackError::FrameOrder { frame, t, prev });
                }
                Some(t - prev)
            }
            None => None,
        };
        self.last_time = Some(t);

        if let Some(dt) = dt {
            for track in &mut self.tracks {
                track.kf.predict(dt, self.params.process_accel_std);
            }
        }

        let predicted: Vec<(f64, f64)> = self.tracks.iter().map(|tr| tr.kf.position()).collect();
        let measured: Vec<(f64, f64)> = detections
            .iter()
            .map(|d| (d.ground_point.x, d.ground_point.z))
            .collect();
        let assign = assignment::associate(&predicted, &measured, self.params.gate_radius);

        for track in &mut self.tracks {
            track.matched_this_frame = false;
        }
        for &(ti, di) in &assign.pairs {
            let track = &mut self.tracks[ti];
            let det = &detections[di];
            track.kf.update(measured[di], self.params.measurement_std);
            track.hits += 1;
            track.misses = 0;
            track.ground_y = det.ground_point.y;
            track.last_skeleton3d = det.skeleton3d.clone();
            track.matched_this_frame = true;
            if track.lifecycle == TrackLifecycle::Tentative && track.hits >= self.params.n_init {
                track.lifecycle = TrackLifecycle::Confirmed;
            }
        }
        for &ti in &assign.unmatched_tracks {
            let track = &mut self.tracks[ti];
            track.misses += 1;
            if track.misses > self.params.max_age {
                track.lifecycle = TrackLifecycle::Lost;
            }
        }
        for &di in &assign.unmatched_detections {
            let det = &detections[di];
            let mut track = TrackState {
                track_id: self.next_id,
                kf: Kalman4::new(
                    measured[di],
                    self.params.measurement_std,
                    self.params.initial_velocity_std,
                ),
                lifecycle: TrackLifecycle::Tentative,
                hits: 1,
                misses: 0,
                last_skeleton3d: det.skeleton3d.clone(),
                smoothed_position: det.ground_point,
                ground_y: det.ground_point.y,
                smoother: PointSmoother::new(&self.params.smoother),
                matched_this_frame: true,
            };
            self.next_id += 1;
            if track.hits >= self.params.n_init {
                track.lifecycle = TrackLifecycle::Confirmed;
            }
            self.tracks.push(track);
        }

        let mut outputs = Vec::new();
        for track in self.tracks.iter_mut() {
            if track.lifecycle == TrackLifecycle::Lost {
                continue;
            }
            let position = {
                let (x, z) = track.kf.position();
                Point3::new(x, track.ground_y, z)
            };
            track.smoothed_position = track.smoother.sample(position, t);
            if track.lifecycle == TrackLifecycle::Confirmed {
                // A coasting track has no fresh observation, so no skeleton.
                let skeleton3d = track
                    .matched_this_frame
                    .then(|| track.last_skeleton3d.clone())
                    .flatten();
                outputs.push(Track3D {
                    id: track.track_id,
                    position,
                    smoothed: track.smoothed_position,
                    velocity: track.kf.velocity(),
                    skeleton3d,
                    state: track.lifecycle,
                });
            }
        }
        self.tracks.retain(|tr| tr.lifecycle != TrackLifecycle::Lost);

        Ok(TrackFrame {
            frame,
            t,
            tracks: outputs,
        })
    }
}
