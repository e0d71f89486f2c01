//! Newline-delimited record formats.
//!
//! One text line per frame, both for detections (input) and tracks (output).
//! Serialization is hand-rendered with fixed six-decimal floats and a fixed
//! field order so identical data produces identical bytes on any platform;
//! parsing accepts exactly what serialization produces (and any other valid
//! JSON with the same shape).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use serde::Deserialize;
use thiserror::Error;

use crate::anchor::{BoundingBox, Detection2D, Keypoint};
use crate::track::{Track3D, TrackFrame, TrackLifecycle};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: frame {frame} does not increase (previous frame {prev})")]
    FrameOrder { line: u64, frame: u64, prev: u64 },
    #[error("line {line}: timestamp {t} does not increase (previous {prev})")]
    TimeOrder { line: u64, t: f64, prev: f64 },
    #[error("line {line}: {message}")]
    Invalid { line: u64, message: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("duplicate track id {0} in one record")]
    DuplicateTrackId(u64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// All detections of one input frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub frame: u64,
    pub t: f64,
    pub detections: Vec<Detection2D>,
}

#[derive(Deserialize)]
struct DetectionRecordWire {
    frame: u64,
    t: f64,
    #[serde(default)]
    detections: Vec<DetectionWire>,
}

#[derive(Deserialize)]
struct DetectionWire {
    #[serde(default)]
    bbox: Option<[f64; 4]>,
    #[serde(default)]
    kp: BTreeMap<String, [f64; 3]>,
    #[serde(default = "default_conf")]
    conf: f64,
}

fn default_conf() -> f64 {
    1.0
}

fn parse_detection_line(line: &str, line_no: u64) -> Result<DetectionFrame, StreamError> {
    let wire: DetectionRecordWire =
        serde_json::from_str(line).map_err(|e| StreamError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
    let invalid = |message: String| StreamError::Invalid {
        line: line_no,
        message,
    };
    if !wire.t.is_finite() {
        return Err(invalid("timestamp must be finite".into()));
    }
    let mut detections = Vec::with_capacity(wire.detections.len());
    for (i, det) in wire.detections.into_iter().enumerate() {
        let bbox = match det.bbox {
            None => None,
            Some([u, v, w, h]) => {
                if ![u, v, w, h].iter().all(|x| x.is_finite()) {
                    return Err(invalid(format!("detection {i}: bbox must be finite")));
                }
                if w <= 0.0 || h <= 0.0 {
                    return Err(invalid(format!(
                        "detection {i}: bbox extent must be positive, got {w}x{h}"
                    )));
                }
                Some(BoundingBox {
                    u_min: u,
                    v_min: v,
                    width: w,
                    height: h,
                })
            }
        };
        let mut keypoints = BTreeMap::new();
        for (name, [u, v, conf]) in det.kp {
            if !(u.is_finite() && v.is_finite()) {
                return Err(invalid(format!("detection {i}: joint {name:?} not finite")));
            }
            if !(0.0..=1.0).contains(&conf) {
                return Err(invalid(format!(
                    "detection {i}: joint {name:?} confidence {conf} outside [0,1]"
                )));
            }
            keypoints.insert(name, Keypoint { u, v, confidence: conf });
        }
        if !(0.0..=1.0).contains(&det.conf) {
            return Err(invalid(format!(
                "detection {i}: confidence {} outside [0,1]",
                det.conf
            )));
        }
        detections.push(Detection2D {
            keypoints,
            bbox,
            source_confidence: det.conf,
        });
    }
    Ok(DetectionFrame {
        frame: wire.frame,
        t: wire.t,
        detections,
    })
}

/// Stateful line parser enforcing strictly increasing frame indices and
/// timestamps across calls. An ordering violation leaves the accepted state
/// untouched, so a caller may drop the offending frame and keep going.
#[derive(Debug, Default)]
pub struct DetectionLineParser {
    line_no: u64,
    last: Option<(u64, f64)>,
}

impl DetectionLineParser {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses one line; blank (whitespace-only) lines yield `Ok(None)`.
    /// Every call advances the line counter used in error messages.
    pub fn parse(&mut self, raw: &str) -> Result<Option<DetectionFrame>, StreamError> {
        self.line_no += 1;
        let line = raw.trim();
        if line.is_empty() {
            return Ok(None);
        }
        let frame = parse_detection_line(line, self.line_no)?;
        if let Some((prev_frame, prev_t)) = self.last {
            if frame.frame <= prev_frame {
                return Err(StreamError::FrameOrder {
                    line: self.line_no,
                    frame: frame.frame,
                    prev: prev_frame,
                });
            }
            if frame.t <= prev_t {
                return Err(StreamError::TimeOrder {
                    line: self.line_no,
                    t: frame.t,
                    prev: prev_t,
                });
            }
        }
        self.last = Some((frame.frame, frame.t));
        Ok(Some(frame))
    }
}

/// Lazy line-by-line reader of detection records. Frames and timestamps must
/// strictly increase; violations and malformed lines surface with their line
/// number. Blank lines are skipped.
pub struct DetectionStream<R> {
    reader: R,
    parser: DetectionLineParser,
    buf: String,
}

impl<R: BufRead> DetectionStream<R> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            parser: DetectionLineParser::new(),
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for DetectionStream<R> {
    type Item = Result<DetectionFrame, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            match self.parser.parse(&self.buf) {
                Ok(None) => continue,
                Ok(Some(frame)) => return Some(Ok(frame)),
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

pub fn parse_detection_stream<R: BufRead>(reader: R) -> DetectionStream<R> {
    DetectionStream::new(reader)
}

fn push_f64(out: &mut String, x: f64, context: &'static str) -> Result<(), StreamError> {
    if !x.is_finite() {
        return Err(StreamError::NonFinite(context));
    }
    write!(out, "{x:.6}").expect("write to String cannot fail");
    Ok(())
}

fn push_triple(
    out: &mut String,
    p: (f64, f64, f64),
    context: &'static str,
) -> Result<(), StreamError> {
    out.push('[');
    push_f64(out, p.0, context)?;
    out.push(',');
    push_f64(out, p.1, context)?;
    out.push(',');
    push_f64(out, p.2, context)?;
    out.push(']');
    Ok(())
}

fn push_name(out: &mut String, name: &str) {
    out.push_str(&serde_json::to_string(name).expect("strings always serialize"));
}

/// Renders one detection frame as its canonical record line (no newline).
pub fn serialize_detection_frame(frame: &DetectionFrame) -> Result<String, StreamError> {
    let mut out = String::new();
    write!(out, "{{\"frame\":{},\"t\":", frame.frame).unwrap();
    push_f64(&mut out, frame.t, "t")?;
    out.push_str(",\"detections\":[");
    for (i, det) in frame.detections.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('{');
        if let Some(b) = det.bbox {
            out.push_str("\"bbox\":[");
            push_f64(&mut out, b.u_min, "bbox")?;
            out.push(',');
            push_f64(&mut out, b.v_min, "bbox")?;
            out.push(',');
            push_f64(&mut out, b.width, "bbox")?;
            out.push(',');
            push_f64(&mut out, b.height, "bbox")?;
            out.push_str("],");
        }
        out.push_str("\"kp\":{");
        for (j, (name, kp)) in det.keypoints.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            push_name(&mut out, name);
            out.push(':');
            push_triple(&mut out, (kp.u, kp.v, kp.confidence), "keypoint")?;
        }
        out.push_str("},\"conf\":");
        push_f64(&mut out, det.source_confidence, "conf")?;
        out.push('}');
    }
    out.push_str("]}");
    Ok(out)
}

/// Renders one track frame as its canonical record line (no newline).
pub fn serialize_track_frame(frame: &TrackFrame) -> Result<String, StreamError> {
    let mut out = String::new();
    write!(out, "{{\"frame\":{},\"t\":", frame.frame).unwrap();
    push_f64(&mut out, frame.t, "t")?;
    out.push_str(",\"tracks\":[");
    for (i, track) in frame.tracks.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{{\"id\":{},\"pos\":", track.id).unwrap();
        push_triple(
            &mut out,
            (track.position.x, track.position.y, track.position.z),
            "pos",
        )?;
        out.push_str(",\"smoothed\":");
        push_triple(
            &mut out,
            (track.smoothed.x, track.smoothed.y, track.smoothed.z),
            "smoothed",
        )?;
        out.push_str(",\"vel\":[");
        push_f64(&mut out, track.velocity.0, "vel")?;
        out.push(',');
        push_f64(&mut out, track.velocity.1, "vel")?;
        out.push(']');
        if let Some(skeleton) = &track.skeleton3d {
            out.push_str(",\"skeleton\":{");
            for (j, (name, p)) in skeleton.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                push_name(&mut out, name);
                out.push(':');
                push_triple(&mut out, (p.x, p.y, p.z), "skeleton")?;
            }
            out.push('}');
        }
        write!(out, ",\"state\":\"{}\"}}", track.state.name()).unwrap();
    }
    out.push_str("]}");
    Ok(out)
}

/// Renders one simulator truth frame (same float conventions as the other
/// record types): agent id, ground footprint, full joint set.
pub fn serialize_truth_frame(frame: &crate::sim::TruthFrame) -> Result<String, StreamError> {
    let mut out = String::new();
    write!(out, "{{\"frame\":{},\"t\":", frame.frame).unwrap();
    push_f64(&mut out, frame.t, "t")?;
    out.push_str(",\"agents\":[");
    for (i, agent) in frame.agents.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{{\"id\":{},\"footprint\":", agent.agent_id).unwrap();
        push_triple(
            &mut out,
            (agent.footprint.x, agent.footprint.y, agent.footprint.z),
            "footprint",
        )?;
        out.push_str(",\"joints\":{");
        for (j, (name, p)) in agent.joints.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            push_name(&mut out, name);
            out.push(':');
            push_triple(&mut out, (p.x, p.y, p.z), "joints")?;
        }
        out.push_str("}}");
    }
    out.push_str("]}");
    Ok(out)
}

#[derive(Deserialize)]
struct TrackRecordWire {
    frame: u64,
    t: f64,
    #[serde(default)]
    tracks: Vec<TrackWire>,
}

#[derive(Deserialize)]
struct TrackWire {
    id: u64,
    pos: [f64; 3],
    smoothed: [f64; 3],
    vel: [f64; 2],
    #[serde(default)]
    skeleton: Option<BTreeMap<String, [f64; 3]>>,
    state: String,
}

/// Parses one track record line (the inverse of [`serialize_track_frame`]).
pub fn parse_track_frame(line: &str, line_no: u64) -> Result<TrackFrame, StreamError> {
    let wire: TrackRecordWire = serde_json::from_str(line).map_err(|e| StreamError::Malformed {
        line: line_no,
        message: e.to_string(),
    })?;
    let mut seen = Vec::new();
    let mut tracks = Vec::with_capacity(wire.tracks.len());
    for tw in wire.tracks {
        if seen.contains(&tw.id) {
            return Err(StreamError::DuplicateTrackId(tw.id));
        }
        seen.push(tw.id);
        let all_finite = tw.pos.iter().chain(&tw.smoothed).chain(&tw.vel).all(|x| x.is_finite());
        if !all_finite {
            return Err(StreamError::Invalid {
                line: line_no,
                message: format!("track {}: non-finite value", tw.id),
            });
        }
        let state = match tw.state.as_str() {
            "tentative" => TrackLifecycle::Tentative,
            "confirmed" => TrackLifecycle::Confirmed,
            "lost" => TrackLifecycle::Lost,
            other => {
                return Err(StreamError::Invalid {
                    line: line_no,
                    message: format!("track {}: unknown state {other:?}", tw.id),
                })
            }
        };
        tracks.push(Track3D {
            id: tw.id,
            position: nalgebra::Point3::new(tw.pos[0], tw.pos[1], tw.pos[2]),
            smoothed: nalgebra::Point3::new(tw.smoothed[0], tw.smoothed[1], tw.smoothed[2]),
            velocity: (tw.vel[0], tw.vel[1]),
            skeleton3d: tw.skeleton.map(|m| {
                m.into_iter()
                    .map(|(k, [x, y, z])| (k, nalgebra::Point3::new(x, y, z)))
                    .collect()
            }),
            state,
        });
    }
    Ok(TrackFrame {
        frame: wire.frame,
        t: wire.t,
        tracks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn sample_detection_frame() -> DetectionFrame {
        let mut keypoints = BTreeMap::new();
        keypoints.insert(
            "left_ankle".to_string(),
            Keypoint {
                u: 100.0,
                v: 500.0,
                confidence: 0.9,
            },
        );
        keypoints.insert(
            "right_ankle".to_string(),
            Keypoint {
                u: 120.5,
                v: 500.25,
                confidence: 0.8,
            },
        );
        DetectionFrame {
            frame: 3,
            t: 0.12,
            detections: vec![Detection2D {
                keypoints,
                bbox: Some(BoundingBox {
                    u_min: 90.0,
                    v_min: 200.0,
                    width: 40.0,
                    height: 310.0,
                }),
                source_confidence: 0.95,
            }],
        }
    }

    #[test]
    fn empty_track_frame_has_golden_form() {
        let frame = TrackFrame {
            frame: 0,
            t: 0.0,
            tracks: vec![],
        };
        assert_eq!(
            serialize_track_frame(&frame).unwrap(),
            r#"{"frame":0,"t":0.000000,"tracks":[]}"#
        );
    }

    #[test]
    fn single_track_line_contains_expected_fields() {
        let frame = TrackFrame {
            frame: 7,
            t: 0.28,
            tracks: vec![Track3D {
                id: 1,
                position: Point3::new(1.0, 0.0, -5.0),
                smoothed: Point3::new(1.0, 0.0, -5.0),
                velocity: (0.5, -0.25),
                skeleton3d: None,
                state: TrackLifecycle::Confirmed,
            }],
        };
        let line = serialize_track_frame(&frame).unwrap();
        assert!(line.contains(r#""id":1"#), "{line}");
        assert!(line.contains(r#""pos":[1.000000,0.000000,-5.000000]"#), "{line}");
        assert!(line.contains(r#""state":"confirmed""#), "{line}");
        assert!(!line.contains("skeleton"), "{line}");
    }

    #[test]
    fn non_finite_values_refuse_to_serialize() {
        let frame = TrackFrame {
            frame: 0,
            t: f64::NAN,
            tracks: vec![],
        };
        assert!(matches!(
            serialize_track_frame(&frame),
            Err(StreamError::NonFinite("t"))
        ));
        let det = DetectionFrame {
            frame: 0,
            t: 0.0,
            detections: vec![Detection2D {
                keypoints: [(
                    "nose".to_string(),
                    Keypoint {
                        u: f64::INFINITY,
                        v: 0.0,
                        confidence: 1.0,
                    },
                )]
                .into_iter()
                .collect(),
                bbox: None,
                source_confidence: 1.0,
            }],
        };
        assert!(serialize_detection_frame(&det).is_err());
    }

    #[test]
    fn detection_frame_round_trips() {
        let frame = sample_detection_frame();
        let line = serialize_detection_frame(&frame).unwrap();
        let parsed = parse_detection_line(&line, 1).unwrap();
        assert_eq!(parsed, frame);
    }

    #[test]
    fn track_frame_round_trips_with_skeleton() {
        let mut skeleton = BTreeMap::new();
        skeleton.insert("nose".to_string(), Point3::new(1.0, 1.581, -5.0));
        skeleton.insert("left_ankle".to_string(), Point3::new(0.9, 0.0, -5.0));
        let frame = TrackFrame {
            frame: 12,
            t: 0.48,
            tracks: vec![Track3D {
                id: 4,
                position: Point3::new(1.0, 0.0, -5.0),
                smoothed: Point3::new(1.000001, 0.0, -4.999999),
                velocity: (1.25, 0.0),
                skeleton3d: Some(skeleton),
                state: TrackLifecycle::Confirmed,
            }],
        };
        let line = serialize_track_frame(&frame).unwrap();
        let parsed = parse_track_frame(&line, 1).unwrap();
        assert_eq!(parsed, frame);
    }

    #[test]
    fn empty_input_yields_no_frames() {
        let frames: Vec<_> = parse_detection_stream("".as_bytes()).collect();
        assert!(frames.is_empty());
        let frames: Vec<_> = parse_detection_stream("\n  \n".as_bytes()).collect();
        assert!(frames.is_empty());
    }

    #[test]
    fn single_line_with_two_detections() {
        let line = r#"{"frame":0,"t":0.0,"detections":[{"kp":{"nose":[10,20,0.9]},"conf":1.0},{"bbox":[0,0,5,5],"kp":{},"conf":0.5}]}"#;
        let mut stream = parse_detection_stream(line.as_bytes());
        let frame = stream.next().unwrap().unwrap();
        assert_eq!(frame.detections.len(), 2);
        assert!(stream.next().is_none());
        assert_eq!(frame.detections[0].keypoints["nose"].confidence, 0.9);
        assert_eq!(frame.detections[1].bbox.unwrap().width, 5.0);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let input = "{\"frame\":0,\"t\":0.0,\"detections\":[]}\nnot json\n";
        let results: Vec<_> = parse_detection_stream(input.as_bytes()).collect();
        assert!(results[0].is_ok());
        match &results[1] {
            Err(StreamError::Malformed { line, .. }) => assert_eq!(*line, 2),
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn non_increasing_frames_and_times_error() {
        let input = "{\"frame\":1,\"t\":0.04,\"detections\":[]}\n{\"frame\":1,\"t\":0.08,\"detections\":[]}\n";
        let results: Vec<_> = parse_detection_stream(input.as_bytes()).collect();
        assert!(matches!(results[1], Err(StreamError::FrameOrder { line: 2, .. })));

        let input = "{\"frame\":1,\"t\":0.08,\"detections\":[]}\n{\"frame\":2,\"t\":0.08,\"detections\":[]}\n";
        let results: Vec<_> = parse_detection_stream(input.as_bytes()).collect();
        assert!(matches!(results[1], Err(StreamError::TimeOrder { line: 2, .. })));
    }

    #[test]
    fn line_parser_recovers_after_stale_frame() {
        let mut parser = DetectionLineParser::new();
        parser.parse(r#"{"frame":5,"t":0.20,"detections":[]}"#).unwrap();
        assert!(parser.parse(r#"{"frame":4,"t":0.24,"detections":[]}"#).is_err());
        // The stale frame must not have poisoned the accepted state.
        let next = parser.parse(r#"{"frame":6,"t":0.24,"detections":[]}"#).unwrap();
        assert_eq!(next.unwrap().frame, 6);
    }

    #[test]
    fn bad_bbox_and_confidence_rejected() {
        let line = r#"{"frame":0,"t":0.0,"detections":[{"bbox":[0,0,-5,5],"kp":{},"conf":1.0}]}"#;
        assert!(parse_detection_line(line, 1).is_err());
        let line = r#"{"frame":0,"t":0.0,"detections":[{"kp":{"nose":[1,2,1.5]},"conf":1.0}]}"#;
        assert!(parse_detection_line(line, 1).is_err());
    }

    #[test]
    fn duplicate_track_ids_rejected() {
        let line = r#"{"frame":0,"t":0.0,"tracks":[
            {"id":1,"pos":[0,0,0],"smoothed":[0,0,0],"vel":[0,0],"state":"confirmed"},
            {"id":1,"pos":[1,0,0],"smoothed":[1,0,0],"vel":[0,0],"state":"confirmed"}]}"#
            .replace('\n', "");
        assert!(matches!(
            parse_track_frame(&line, 1),
            Err(StreamError::DuplicateTrackId(1))
        ));
    }
}
