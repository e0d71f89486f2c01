//! The streaming engine: detection records in, track records and OSC out.
//!
//! Processing is strictly per frame. Nothing accumulates with stream length,
//! so memory stays proportional to the live track count plus one frame of
//! detections no matter how long the input runs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::UdpSocket;

use serde::Serialize;
use thiserror::Error;

use crate::anchor::{select_anchor, AnchorConfig, AnchorResult, SkeletonLayout};
use crate::camera::CameraRig;
use crate::ground::GroundModel;
use crate::io::config::{ConfigError, PipelineConfig};
use crate::io::osc::{OscEmitter, OscError};
use crate::io::records::{
    serialize_track_frame, DetectionFrame, DetectionLineParser, DetectionStream, StreamError,
};
use crate::lift::{lift_anchor, lift_via_homography, place_skeleton, GroundHomography, LiftedDetection};
use crate::track::{TrackError, TrackFrame, Tracker};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error("tracker: {0}")]
    Track(#[from] TrackError),
    #[error("osc: {0}")]
    Osc(#[from] OscError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad address {given:?}: expected {expected}")]
    BadAddress { given: String, expected: &'static str },
}

/// Counters over one pipeline run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PipelineStats {
    /// Input frames processed (exactly one output record each).
    pub frames: u64,
    /// Detections seen across all frames.
    pub detections: u64,
    /// Detections that produced no anchor pixel (every strategy exhausted).
    pub no_anchor: u64,
    /// Anchored detections whose ray missed the ground.
    pub lift_misses: u64,
    /// Confirmed track outputs summed over all frames.
    pub tracks_emitted: u64,
    /// Live (tentative or confirmed) tracks when the run ended.
    pub live_tracks: u64,
    /// Stale frames discarded in UDP mode (reordered or duplicated packets).
    pub stale_dropped: u64,
    /// OSC messages discarded because the receiver fell behind.
    pub osc_dropped: u64,
}

/// Per-frame lift outcome counts, folded into [`PipelineStats`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LiftTally {
    pub no_anchor: u64,
    pub lift_misses: u64,
}

/// One frame's worth of processing: anchor, lift, place, track.
///
/// Owned state is the tracker only; each call to [`FrameEngine::step`]
/// consumes one detection frame and returns one track frame.
pub struct FrameEngine {
    rig: CameraRig,
    ground: GroundModel,
    anchor_cfg: AnchorConfig,
    layout: SkeletonLayout,
    homography: Option<GroundHomography>,
    place_skeletons: bool,
    tracker: Tracker,
}

impl FrameEngine {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, ConfigError> {
        let rig = cfg.rig.build()?;
        let ground = cfg.ground.build()?;
        let homography = cfg.rig.build_homography(&ground)?;
        cfg.anchor.validate()?;
        let tracker = Tracker::new(cfg.tracker)?;
        Ok(Self {
            rig,
            ground,
            anchor_cfg: cfg.anchor.clone(),
            layout: SkeletonLayout::coco17(),
            homography,
            place_skeletons: cfg.place_skeletons,
            tracker,
        })
    }

    pub fn rig(&self) -> &CameraRig {
        &self.rig
    }

    pub fn live_tracks(&self) -> usize {
        self.tracker.tracks().len()
    }

    fn lift(&self, anchor: &AnchorResult) -> Option<nalgebra::Point3<f64>> {
        // The calibrated map covers on-ground anchors; the torso correction
        // intersects a raised surface, which only the ray path can do.
        if let Some(h) = &self.homography {
            if !anchor.needs_torso_correction {
                return lift_via_homography(h, anchor.pixel);
            }
        }
        lift_anchor(anchor, &self.rig, &self.ground, &self.anchor_cfg)
    }

    /// Lifts one frame of detections and advances the tracker.
    pub fn step(
        &mut self,
        frame: &DetectionFrame,
    ) -> Result<(TrackFrame, LiftTally), TrackError> {
        let mut tally = LiftTally::default();
        let mut lifted = Vec::with_capacity(frame.detections.len());
        for (i, det) in frame.detections.iter().enumerate() {
            let Some(anchor) = select_anchor(det, &self.layout, &self.anchor_cfg) else {
                tally.no_anchor += 1;
                continue;
            };
            let Some(ground_point) = self.lift(&anchor) else {
                tally.lift_misses += 1;
                continue;
            };
            let skeleton3d = if self.place_skeletons {
                let placed = place_skeleton(det, &ground_point, &self.rig);
                (!placed.is_empty()).then_some(placed)
            } else {
                None
            };
            lifted.push(LiftedDetection {
                ground_point,
                anchor,
                skeleton3d,
                source_index: i,
            });
        }
        let out = self.tracker.step(frame.frame, frame.t, &lifted)?;
        Ok((out, tally))
    }
}

/// Strips `udp://` from a listen address.
pub fn parse_udp_addr(s: &str) -> Result<&str, PipelineError> {
    parse_prefixed(s, "udp://")
}

/// Strips `osc://` from an emit address.
pub fn parse_osc_addr(s: &str) -> Result<&str, PipelineError> {
    parse_prefixed(s, "osc://")
}

fn parse_prefixed<'a>(s: &'a str, scheme: &'static str) -> Result<&'a str, PipelineError> {
    let bad = || PipelineError::BadAddress {
        given: s.to_string(),
        expected: match scheme {
            "udp://" => "udp://HOST:PORT",
            _ => "osc://HOST:PORT",
        },
    };
    let rest = s.strip_prefix(scheme).ok_or_else(bad)?;
    // Require host and port; `rsplit` keeps IPv6 bracket forms working.
    let (host, port) = rest.rsplit_once(':').ok_or_else(bad)?;
    if host.is_empty() || port.parse::<u16>().is_err() {
        return Err(bad());
    }
    Ok(rest)
}

struct Sinks {
    out: Option<BufWriter<File>>,
    osc: Option<OscEmitter>,
}

impl Sinks {
    fn open(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let out = match &cfg.io.out {
            Some(path) => Some(BufWriter::new(File::create(path)?)),
            None => None,
        };
        let osc = match &cfg.io.emit {
            Some(addr) => Some(OscEmitter::connect(
                parse_osc_addr(addr)?,
                cfg.io.osc_queue,
            )?),
            None => None,
        };
        Ok(Self { out, osc })
    }

    fn deliver(&mut self, track_frame: &TrackFrame) -> Result<(), PipelineError> {
        if let Some(w) = &mut self.out {
            let line = serialize_track_frame(track_frame)?;
            w.write_all(line.as_bytes())?;
            w.write_all(b"\n")?;
        }
        if let Some(osc) = &self.osc {
            for track in &track_frame.tracks {
                // OSC carries int32 ids; practical id counts stay far below
                // the limit, and a clamped id beats a dead stream.
                let id = i32::try_from(track.id).unwrap_or(i32::MAX);
                osc.send(
                    id,
                    (
                        track.smoothed.x as f32,
                        track.smoothed.y as f32,
                        track.smoothed.z as f32,
                    ),
                )?;
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<u64, PipelineError> {
        if let Some(mut w) = self.out {
            w.flush()?;
        }
        Ok(self.osc.map_or(0, OscEmitter::shutdown))
    }
}

fn process_frame(
    engine: &mut FrameEngine,
    sinks: &mut Sinks,
    stats: &mut PipelineStats,
    frame: &DetectionFrame,
) -> Result<(), PipelineError> {
    stats.frames += 1;
    stats.detections += frame.detections.len() as u64;
    let (track_frame, tally) = engine.step(frame)?;
    stats.no_anchor += tally.no_anchor;
    stats.lift_misses += tally.lift_misses;
    stats.tracks_emitted += track_frame.tracks.len() as u64;
    sinks.deliver(&track_frame)
}

/// Runs the pipeline over the input named in `cfg.io`, delivering every
/// frame's tracks to all configured sinks. Each input frame yields exactly
/// one output record. `max_frames` bounds the run, which is how a UDP
/// session ends in tests; file runs stop at end of input anyway.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    max_frames: Option<u64>,
) -> Result<PipelineStats, PipelineError> {
    cfg.io.validate_routing()?;
    let mut engine = FrameEngine::from_config(cfg)?;
    let mut sinks = Sinks::open(cfg)?;
    let mut stats = PipelineStats::default();

    let done =
        |stats: &PipelineStats| max_frames.is_some_and(|limit| stats.frames >= limit);

    if let Some(path) = &cfg.io.detections {
        let reader = BufReader::new(File::open(path)?);
        for frame in DetectionStream::new(reader) {
            process_frame(&mut engine, &mut sinks, &mut stats, &frame?)?;
            if done(&stats) {
                break;
            }
        }
    } else {
        let addr = parse_udp_addr(cfg.io.listen.as_deref().expect("routing validated"))?;
        let socket = UdpSocket::bind(addr)?;
        let mut parser = DetectionLineParser::new();
        let mut buf = vec![0u8; 65_536];
        while !done(&stats) {
            let n = socket.recv(&mut buf)?;
            let text = match std::str::from_utf8(&buf[..n]) {
                Ok(t) => t,
                Err(_) => {
                    log::warn!("dropping non-UTF-8 datagram of {n} bytes");
                    continue;
                }
            };
            // One datagram may carry several record lines.
            for line in text.lines() {
                match parser.parse(line) {
                    Ok(None) => {}
                    Ok(Some(frame)) => {
                        process_frame(&mut engine, &mut sinks, &mut stats, &frame)?;
                        if done(&stats) {
                            break;
                        }
                    }
                    // Reordered or duplicated packets happen on real
                    // networks; dropping the stale frame keeps the stream
                    // monotonic without killing a live session.
                    Err(e @ (StreamError::FrameOrder { .. } | StreamError::TimeOrder { .. })) => {
                        stats.stale_dropped += 1;
                        log::warn!("dropping stale frame: {e}");
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }

    stats.live_tracks = engine.live_tracks() as u64;
    stats.osc_dropped = sinks.finish()?;
    Ok(stats)
}

/// Convenience wrapper for callers holding detections in memory (the
/// simulator and tests): runs the engine over `frames` and collects the
/// outputs instead of routing them through `cfg.io`.
pub fn run_frames(
    cfg: &PipelineConfig,
    frames: &[DetectionFrame],
) -> Result<(Vec<TrackFrame>, PipelineStats), PipelineError> {
    let mut engine = FrameEngine::from_config(cfg)?;
    let mut stats = PipelineStats::default();
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        stats.frames += 1;
        stats.detections += frame.detections.len() as u64;
        let (track_frame, tally) = engine.step(frame)?;
        stats.no_anchor += tally.no_anchor;
        stats.lift_misses += tally.lift_misses;
        stats.tracks_emitted += track_frame.tracks.len() as u64;
        out.push(track_frame);
    }
    stats.live_tracks = engine.live_tracks() as u64;
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::{Detection2D, Keypoint};
    use std::collections::BTreeMap;

    fn test_config() -> PipelineConfig {
        PipelineConfig::from_json(
            r#"{
                "rig": {
                    "projection": "perspective",
                    "image_size": [1920, 1080],
                    "focal_px": 1000.0,
                    "position_m": [0.0, 5.0, 0.0],
                    "yaw_pitch_roll_deg": [0.0, -90.0, 0.0]
                },
                "tracker": {"n_init": 1}
            }"#,
        )
        .unwrap()
    }

    fn ankle_frame(frame: u64, t: f64, u: f64, v: f64) -> DetectionFrame {
        let mut keypoints = BTreeMap::new();
        for name in ["left_ankle", "right_ankle"] {
            keypoints.insert(name.to_string(), Keypoint { u, v, confidence: 1.0 });
        }
        DetectionFrame {
            frame,
            t,
            detections: vec![Detection2D {
                keypoints,
                bbox: None,
                source_confidence: 1.0,
            }],
        }
    }

    #[test]
    fn engine_lifts_and_tracks_one_detection() {
        let mut engine = FrameEngine::from_config(&test_config()).unwrap();
        // Straight-down camera at 5 m with f=1000: 200 px right of center is
        // 1 m along +x.
        let (out, tally) = engine.step(&ankle_frame(0, 0.0, 1160.0, 540.0)).unwrap();
        assert_eq!(tally, LiftTally::default());
        assert_eq!(out.tracks.len(), 1);
        let track = &out.tracks[0];
        approx::assert_relative_eq!(track.position.x, 1.0, epsilon = 1e-9);
        approx::assert_relative_eq!(track.position.y, 0.0, epsilon = 1e-9);
        let skeleton = track.skeleton3d.as_ref().expect("skeletons placed by default");
        assert!(skeleton.contains_key("left_ankle"));
    }

    #[test]
    fn unanchored_and_missed_detections_are_counted() {
        let mut engine = FrameEngine::from_config(&test_config()).unwrap();
        let empty = Detection2D {
            keypoints: BTreeMap::new(),
            bbox: None,
            source_confidence: 1.0,
        };
        let frame = DetectionFrame {
            frame: 0,
            t: 0.0,
            detections: vec![empty],
        };
        let (out, tally) = engine.step(&frame).unwrap();
        assert_eq!(tally.no_anchor, 1);
        assert!(out.tracks.is_empty());

        // A plausible pixel for a straight-down camera always hits the
        // plane, so aim at a tiny heightfield instead: outside its footprint
        // the lift has nothing to hit.
        let mut cfg = test_config();
        cfg.ground = serde_json::from_str(
            r#"{"kind":"heightfield","origin":[100.0,100.0],"cell_size":1.0,"rows":[[0,0],[0,0]]}"#,
        )
        .unwrap();
        let mut engine = FrameEngine::from_config(&cfg).unwrap();
        let (out, tally) = engine.step(&ankle_frame(0, 0.0, 1160.0, 540.0)).unwrap();
        assert_eq!(tally.lift_misses, 1);
        assert!(out.tracks.is_empty());
    }

    #[test]
    fn homography_route_matches_ray_route() {
        let mut ray_cfg = test_config();
        ray_cfg.place_skeletons = false;
        let mut hom_cfg = ray_cfg.clone();
        // The exact pixel-to-ground map for this rig, expressed directly:
        // straight down from 5 m, f=1000 ⇒ x = (u−960)/200, z = (v−540)/200.
        hom_cfg.rig.homography = Some([
            [1.0 / 200.0, 0.0, -960.0 / 200.0],
            [0.0, 1.0 / 200.0, -540.0 / 200.0],
            [0.0, 0.0, 1.0],
        ]);
        let frames: Vec<DetectionFrame> = (0..5)
            .map(|i| ankle_frame(i, i as f64 * 0.04, 1160.0 + 10.0 * i as f64, 540.0))
            .collect();
        let (ray_out, _) = run_frames(&ray_cfg, &frames).unwrap();
        let (hom_out, _) = run_frames(&hom_cfg, &frames).unwrap();
        assert_eq!(ray_out.len(), hom_out.len());
        for (a, b) in ray_out.iter().zip(&hom_out) {
            assert_eq!(a.tracks.len(), b.tracks.len());
            for (ta, tb) in a.tracks.iter().zip(&b.tracks) {
                approx::assert_relative_eq!(ta.position.x, tb.position.x, epsilon = 1e-9);
                approx::assert_relative_eq!(ta.position.z, tb.position.z, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn every_input_frame_yields_exactly_one_output() {
        let cfg = test_config();
        let frames: Vec<DetectionFrame> = (0..50)
            .map(|i| {
                if i % 3 == 0 {
                    DetectionFrame {
                        frame: i,
                        t: i as f64 * 0.04,
                        detections: vec![],
                    }
                } else {
                    ankle_frame(i, i as f64 * 0.04, 1160.0, 540.0)
                }
            })
            .collect();
        let (out, stats) = run_frames(&cfg, &frames).unwrap();
        assert_eq!(out.len(), 50);
        assert_eq!(stats.frames, 50);
        for (i, track_frame) in out.iter().enumerate() {
            assert_eq!(track_frame.frame, i as u64);
        }
    }

    #[test]
    fn address_parsing() {
        assert_eq!(parse_udp_addr("udp://127.0.0.1:7000").unwrap(), "127.0.0.1:7000");
        assert_eq!(parse_osc_addr("osc://localhost:9000").unwrap(), "localhost:9000");
        assert!(parse_udp_addr("tcp://127.0.0.1:7000").is_err());
        assert!(parse_udp_addr("udp://127.0.0.1").is_err());
        assert!(parse_udp_addr("udp://:7000").is_err());
        assert!(parse_osc_addr("osc://host:notaport").is_err());
    }
}
