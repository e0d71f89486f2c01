//! Synthetic scenes with exact ground truth.
//!
//! Agents are stick figures walking waypoint paths on the y = 0 ground. Each
//! frame they are projected through the rig into noisy 2D detections, letting
//! every pipeline stage be verified against known 3D truth. Everything is
//! driven by a seed; per-frame RNG streams make runs reproducible regardless
//! of frame evaluation order.

use std::collections::BTreeMap;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::anchor::{BoundingBox, Detection2D, Keypoint};
use crate::camera::CameraRig;
use crate::track::TrackFrame;

/// Pixel padding around the joint hull when forming detection boxes.
const BBOX_PAD_PX: f64 = 5.0;

/// Width of the per-distance error buckets in [`Metrics`].
pub const DISTANCE_BUCKET_M: f64 = 5.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scene {name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("joint_dropout_prob must lie in [0,1], got {0}")]
    BadDropout(f64),
    #[error("pixel_noise_std must be non-negative, got {0}")]
    BadNoise(f64),
    #[error("agent {0} needs at least one waypoint")]
    NoWaypoints(usize),
}

/// Detector noise model: per-coordinate Gaussian jitter plus independent
/// joint dropout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub pixel_noise_std: f64,
    pub joint_dropout_prob: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            pixel_noise_std: 2.0,
            joint_dropout_prob: 0.05,
        }
    }
}

/// One walking agent: a height-scaled stick figure following waypoints at
/// constant speed.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub height: f64,
    pub speed: f64,
    /// Ground-plane waypoints (x, z), walked in order; the agent stops at
    /// the last one.
    pub waypoints: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct SimScene {
    /// Ground extent (width along x, depth along z), centered on the origin.
    pub area: (f64, f64),
    pub agents: Vec<AgentSpec>,
    pub rig: CameraRig,
    pub frame_rate: f64,
    pub duration: f64,
    pub noise: NoiseParams,
    pub seed: u64,
}

impl SimScene {
    /// Samples `agent_count` agents with uniform heights in [1.5, 1.9] m,
    /// speeds in [0.5, 1.5] m/s, and 2–4 waypoints inside the area. All
    /// randomness derives from `seed`.
    pub fn random(
        agent_count: usize,
        rig: CameraRig,
        area: (f64, f64),
        duration: f64,
        seed: u64,
    ) -> Self {
        // A stream index far above any frame index keeps scene sampling
        // independent of the per-frame noise streams.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        let (hw, hd) = (area.0 / 2.0, area.1 / 2.0);
        let agents = (0..agent_count)
            .map(|_| {
                let n_waypoints = rng.random_range(2..=4);
                AgentSpec {
                    height: rng.random_range(1.5..1.9),
                    speed: rng.random_range(0.5..1.5),
                    waypoints: (0..n_waypoints)
                        .map(|_| (rng.random_range(-hw..hw), rng.random_range(-hd..hd)))
                        .collect(),
                }
            })
            .collect();
        Self {
            area,
            agents,
            rig,
            frame_rate: 25.0,
            duration,
            noise: NoiseParams::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, value) in [
            ("area width", self.area.0),
            ("area depth", self.area.1),
            ("frame_rate", self.frame_rate),
            ("duration", self.duration),
        ] {
            if !(value > 0.0) {
                return Err(SimError::NonPositive { name, value });
            }
        }
        if !(0.0..=1.0).contains(&self.noise.joint_dropout_prob) {
            return Err(SimError::BadDropout(self.noise.joint_dropout_prob));
        }
        if !(self.noise.pixel_noise_std >= 0.0) {
            return Err(SimError::BadNoise(self.noise.pixel_noise_std));
        }
        for (i, agent) in self.agents.iter().enumerate() {
            if agent.waypoints.is_empty() {
                return Err(SimError::NoWaypoints(i));
            }
            for (name, value) in [("agent height", agent.height), ("agent speed", agent.speed)] {
                if !(value > 0.0) {
                    return Err(SimError::NonPositive { name, value });
                }
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> u64 {
        (self.duration * self.frame_rate).round() as u64
    }
}

/// Joint offsets of the canonical standing figure scaled to height `h`:
/// (name, lateral offset, vertical offset). Ankles touch the ground; sides
/// sit at ±0.10·h laterally.
pub fn template_joints(h: f64) -> [(&'static str, f64, f64); 7] {
    let w = 0.10 * h;
    [
        ("left_ankle", -w, 0.0),
        ("right_ankle", w, 0.0),
        ("left_hip", -w, 0.53 * h),
        ("right_hip", w, 0.53 * h),
        ("left_shoulder", -w, 0.82 * h),
        ("right_shoulder", w, 0.82 * h),
        ("nose", 0.0, 0.93 * h),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthAgent {
    pub agent_id: u64,
    pub footprint: Point3<f64>,
    pub joints: BTreeMap<String, Point3<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthFrame {
    pub frame: u64,
    pub t: f64,
    pub agents: Vec<TruthAgent>,
}

fn path_position(agent: &AgentSpec, t: f64) -> (f64, f64) {
    let mut remaining = agent.speed * t;
    let mut current = agent.waypoints[0];
    for next in agent.waypoints.iter().skip(1) {
        let (dx, dz) = (next.0 - current.0, next.1 - current.1);
        let len = (dx * dx + dz * dz).sqrt();
        if len < 1e-12 {
            current = *next;
            continue;
        }
        if remaining <= len {
            let f = remaining / len;
            return (current.0 + dx * f, current.1 + dz * f);
        }
        remaining -= len;
        current = *next;
    }
    current
}

/// Stick-figure joints at a footprint, facing the camera: the lateral axis is
/// horizontal and perpendicular to the camera's forward axis. Perspective
/// depth is measured along forward, so paired joints sit at exactly equal
/// depth and their pixel mean is the projection of their midpoint.
fn agent_joints(
    footprint: Point3<f64>,
    height: f64,
    forward: &Vector3<f64>,
) -> BTreeMap<String, Point3<f64>> {
    let mut lateral = Vector3::new(-forward.z, 0.0, forward.x);
    if lateral.norm() < 1e-9 {
        // Straight-down view: every horizontal direction is equal-depth.
        lateral = Vector3::x();
    } else {
        lateral.normalize_mut();
    }
    template_joints(height)
        .iter()
        .map(|&(name, side, up)| {
            (
                name.to_string(),
                footprint + lateral * side + Vector3::y() * up,
            )
        })
        .collect()
}

/// Exact per-frame agent states: waypoint interpolation at constant speed,
/// template joints translated to the footprint. Deterministic given the
/// scene.
pub fn generate_truth(scene: &SimScene) -> Vec<TruthFrame> {
    let forward = scene.rig.pose.forward();
    (0..scene.frame_count())
        .map(|frame| {
            let t = frame as f64 / scene.frame_rate;
            let agents = scene
                .agents
                .iter()
                .enumerate()
                .map(|(i, agent)| {
                    let (x, z) = path_position(agent, t);
                    let footprint = Point3::new(x, 0.0, z);
                    TruthAgent {
                        agent_id: i as u64 + 1,
                        footprint,
                        joints: agent_joints(footprint, agent.height, &forward),
                    }
                })
                .collect();
            TruthFrame { frame, t, agents }
        })
        .collect()
}

/// Projects a truth frame into 2D detections with Gaussian pixel noise and
/// joint dropout. Agents fully behind the camera are omitted; an agent whose
/// joints all drop out still yields a (useless) empty detection so skips stay
/// observable downstream. The RNG stream is the frame index, making each
/// frame's noise independent of processing order.
pub fn synthesize_detections(
    truth: &TruthFrame,
    rig: &CameraRig,
    noise: &NoiseParams,
    seed: u64,
) -> Vec<Detection2D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(truth.frame);
    let normal = Normal::new(0.0, noise.pixel_noise_std).expect("validated noise std");
    let mut detections = Vec::new();
    for agent in &truth.agents {
        let mut keypoints = BTreeMap::new();
        let mut any_visible = false;
        // Template order, not map order, so the RNG draw sequence is fixed.
        for (name, _, _) in template_joints(1.0) {
            let Some(joint) = agent.joints.get(name) else {
                continue;
            };
            let Some(((u, v), _depth)) = rig.world_to_screen(joint) else {
                continue;
            };
            any_visible = true;
            if rng.random_bool(noise.joint_dropout_prob) {
                continue;
            }
            let (du, dv) = (normal.sample(&mut rng), normal.sample(&mut rng));
            keypoints.insert(
                name.to_string(),
                Keypoint {
                    u: u + du,
                    v: v + dv,
                    confidence: 1.0,
                },
            );
        }
        if !any_visible {
            continue;
        }
        let bbox = hull_bbox(&keypoints);
        detections.push(Detection2D {
            keypoints,
            bbox,
            source_confidence: 1.0,
        });
    }
    detections
}

fn hull_bbox(keypoints: &BTreeMap<String, Keypoint>) -> Option<BoundingBox> {
    let mut bounds: Option<(f64, f64, f64, f64)> = None;
    for kp in keypoints.values() {
        bounds = Some(match bounds {
            None => (kp.u, kp.v, kp.u, kp.v),
            Some((u0, v0, u1, v1)) => (u0.min(kp.u), v0.min(kp.v), u1.max(kp.u), v1.max(kp.v)),
        });
    }
    bounds.map(|(u0, v0, u1, v1)| BoundingBox {
        u_min: u0 - BBOX_PAD_PX,
        v_min: v0 - BBOX_PAD_PX,
        width: u1 - u0 + 2.0 * BBOX_PAD_PX,
        height: v1 - v0 + 2.0 * BBOX_PAD_PX,
    })
}

/// Mean error within one camera-distance band.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DistanceBucket {
    pub lo: f64,
    pub hi: f64,
    pub mean_error: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Metrics {
    pub mean_error: f64,
    pub median_error: f64,
    pub max_error: f64,
    pub identity_switches: u64,
    /// Fraction of truth instances with no matched output.
    pub miss_rate: f64,
    /// Track ids never matched to any truth agent.
    pub false_tracks: u64,
    pub matched_pairs: u64,
    pub truth_instances: u64,
    pub distance_buckets: Vec<DistanceBucket>,
}

/// Scores pipeline output against truth by per-frame greedy nearest matching
/// within `matching_radius` (planar). Identity switches count changes of a
/// truth agent's matched track id between consecutive matched frames.
/// `camera` locates the rig for the per-distance buckets.
pub fn evaluate(
    truth: &[TruthFrame],
    output: &[TrackFrame],
    matching_radius: f64,
    camera: &Point3<f64>,
) -> Metrics {
    let mut errors: Vec<f64> = Vec::new();
    let mut switches = 0u64;
    let mut truth_instances = 0u64;
    let mut last_id: BTreeMap<u64, u64> = BTreeMap::new();
    let mut matched_ids: Vec<u64> = Vec::new();
    let mut all_ids: Vec<u64> = Vec::new();
    let mut bucket_sums: BTreeMap<u64, (f64, u64)> = BTreeMap::new();

    for (tf, of) in truth.iter().zip(output.iter()) {
        debug_assert_eq!(tf.frame, of.frame, "frame indexing must align");
        truth_instances += tf.agents.len() as u64;
        all_ids.extend(of.tracks.iter().map(|tr| tr.id));

        // Greedy: repeatedly take the globally closest admissible pair.
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (ai, agent) in tf.agents.iter().enumerate() {
            for (ti, track) in of.tracks.iter().enumerate() {
                let dx = agent.footprint.x - track.smoothed.x;
                let dz = agent.footprint.z - track.smoothed.z;
                let d = (dx * dx + dz * dz).sqrt();
                if d <= matching_radius {
                    candidates.push((d, ai, ti));
                }
            }
        }
        candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let mut agent_taken = vec![false; tf.agents.len()];
        let mut track_taken = vec![false; of.tracks.len()];
        for (d, ai, ti) in candidates {
            if agent_taken[ai] || track_taken[ti] {
                continue;
            }
            agent_taken[ai] = true;
            track_taken[ti] = true;
            errors.push(d);
            let agent = &tf.agents[ai];
            let track_id = of.tracks[ti].id;
            matched_ids.push(track_id);
            if let Some(prev) = last_id.insert(agent.agent_id, track_id) {
                if prev != track_id {
                    switches += 1;
                }
            }
            let dist = (agent.footprint - camera).norm();
            let bucket = (dist / DISTANCE_BUCKET_M).floor() as u64;
            let e = bucket_sums.entry(bucket).or_insert((0.0, 0));
            e.0 += d;
            e.1 += 1;
        }
    }

    matched_ids.sort_unstable();
    matched_ids.dedup();
    all_ids.sort_unstable();
    all_ids.dedup();
    let false_tracks = all_ids
        .iter()
        .filter(|id| matched_ids.binary_search(id).is_err())
        .count() as u64;

    let matched_pairs = errors.len() as u64;
    let mut sorted = errors.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    let median_error = match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2],
        n => (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0,
    };
    Metrics {
        mean_error: if errors.is_empty() {
            0.0
        } else {
            errors.iter().sum::<f64>() / errors.len() as f64
        },
        median_error,
        max_error: sorted.last().copied().unwrap_or(0.0),
        identity_switches: switches,
        miss_rate: if truth_instances == 0 {
            0.0
        } else {
            1.0 - matched_pairs as f64 / truth_instances as f64
        },
        false_tracks,
        matched_pairs,
        truth_instances,
        distance_buckets: bucket_sums
            .into_iter()
            .map(|(b, (sum, n))| DistanceBucket {
                lo: b as f64 * DISTANCE_BUCKET_M,
                hi: (b + 1) as f64 * DISTANCE_BUCKET_M,
                mean_error: sum / n as f64,
                samples: n,
            })
            .collect(),
    }
}
