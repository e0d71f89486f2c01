//! Lifts per-frame 2D detections (skeleton keypoints / bounding boxes) from a
//! single fixed camera into 3D world positions by casting rays against a known
//! ground surface, keeps track identities stable over time, and streams the
//! results over OSC/UDP.
//!
//! The crate is organised around the pipeline stages:
//!
//! - [`camera`]: coordinate conventions, pixel ↔ ray conversion for
//!   perspective and orthographic rigs.
//! - [`ground`]: ground plane / heightfield terrain and ray intersection.
//! - [`anchor`]: choosing the screen point the lifting ray passes through
//!   (head, feet, torso, bbox bottom-center) with a fallback chain.
//! - [`lift`]: ray-based lifting, billboard skeleton placement, and an
//!   independent homography route for cross-validation and calibration.
//! - [`track`]: constant-velocity filtering, gated optimal assignment,
//!   track lifecycle and output smoothing.
//! - [`sim`]: a synthetic-scene simulator that provides ground truth for
//!   verification, plus pipeline scoring.
//! - [`io`]: file/wire formats, the streaming pipeline, and the OSC emitter.
//!
//! World space is right-handed with +Y up; the default ground is the y = 0
//! plane. Camera space has +X right, +Y up and looks along −Z. Screen
//! coordinates have their origin at the top-left corner, +u right, +v down,
//! in pixels.

// Validation guards are written `!(x > 0.0)` on purpose: the negation is
// true for NaN, so NaN inputs fail validation instead of slipping through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anchor;
pub mod camera;
pub mod ground;
pub mod io;
pub mod lift;
pub mod sim;
pub mod track;

pub use anchor::{select_anchor, AnchorConfig, AnchorResult, AnchorStrategy, Detection2D, SkeletonLayout};
pub use camera::{rotation_from_euler_deg, CameraIntrinsics, CameraPose, CameraRig, Projection, Ray};
pub use ground::{intersect_heightfield, intersect_plane, GroundModel, GroundPlane, Heightfield};
pub use lift::{
    fit_ground_homography, homography_from_camera, lift_anchor, lift_via_homography, place_skeleton,
    FitReport, GroundHomography, LiftedDetection, PixelPlanePair, PlaneFrame,
};
pub use track::{associate, Assignment, SmootherConfig, Track3D, TrackFrame, Tracker, TrackerParams};
