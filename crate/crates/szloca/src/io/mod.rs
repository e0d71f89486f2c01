//! Formats, configuration, and the streaming pipeline.

pub mod config;
pub mod osc;
pub mod pipeline;
pub mod records;

pub use config::{ConfigError, GroundConfig, IoBlock, PipelineConfig, RigConfig, SceneConfig};
pub use osc::{encode_osc_track, OscEmitter, OscError, OSC_ADDRESS, OSC_MESSAGE_LEN};
pub use pipeline::{run_frames, run_pipeline, FrameEngine, PipelineError, PipelineStats};
pub use records::{
    parse_detection_stream, parse_track_frame, serialize_detection_frame, serialize_track_frame,
    DetectionFrame, DetectionLineParser, DetectionStream, StreamError,
};
