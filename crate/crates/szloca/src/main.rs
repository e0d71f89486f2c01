//! Command line front end.
//!
//! Exit codes: 0 on success, 2 for configuration problems (bad files, bad
//! flags, inconsistent rigs), 3 for runtime stream and data errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use szloca::io::config::{parse_calibration_pairs, ConfigError, PipelineConfig, SceneConfig};
use szloca::io::pipeline::{run_frames, run_pipeline, PipelineError, PipelineStats};
use szloca::io::records::{
    serialize_detection_frame, serialize_track_frame, serialize_truth_frame, DetectionFrame,
};
use szloca::io::StreamError;
use szloca::sim::{evaluate, generate_truth, synthesize_detections};
use szloca::{fit_ground_homography, GroundModel, PlaneFrame};

#[derive(Parser)]
#[command(
    name = "szloca",
    version,
    about = "Lifts 2D detections from a fixed camera onto a known ground surface and tracks them in 3D"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lift a detection records file into a track records file.
    Lift {
        /// Pipeline config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Detection records, one JSON object per line.
        #[arg(long)]
        detections: PathBuf,
        /// Track records output path.
        #[arg(long)]
        out: PathBuf,
        /// Optional live OSC destination, osc://HOST:PORT.
        #[arg(long)]
        emit: Option<String>,
    },
    /// Listen for detection records on UDP and emit tracks live.
    Stream {
        /// Pipeline config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// UDP listen address, udp://HOST:PORT.
        #[arg(long)]
        listen: String,
        /// OSC destination, osc://HOST:PORT.
        #[arg(long)]
        emit: Option<String>,
        /// Optional track records output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after this many frames (runs until killed otherwise).
        #[arg(long)]
        max_frames: Option<u64>,
    },
    /// Render a synthetic scene, run the pipeline on it, and score the result.
    Simulate {
        /// Scene description (JSON).
        #[arg(long)]
        scene: PathBuf,
        /// Overrides the scene's random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for truth.jsonl, detections.jsonl, and tracks.jsonl.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Metrics report path (stdout when omitted).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fit a pixel-to-ground homography from `u v x z` point pairs.
    Calibrate {
        /// Pairs file: one `u v x z` quadruple per line.
        #[arg(long)]
        pairs: PathBuf,
        /// Pipeline config naming the ground plane the pairs lie on.
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("SZLOCA_LOG", "warn"),
    )
    .format_timestamp(None)
    .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(PipelineError),
    #[error("{context}: {source}")]
    Data {
        context: String,
        #[source]
        source: Box<dyn std::error::Error>,
    },
}

impl From<PipelineError> for AppError {
    fn from(err: PipelineError) -> Self {
        match err {
            PipelineError::Config(c) => AppError::Config(c),
            other => AppError::Pipeline(other),
        }
    }
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Pipeline(PipelineError::BadAddress { .. }) => 2,
            _ => 3,
        }
    }

    fn data(context: impl Into<String>, source: impl std::error::Error + 'static) -> Self {
        AppError::Data {
            context: context.into(),
            source: Box::new(source),
        }
    }
}

fn run(command: Command) -> Result<(), AppError> {
    match command {
        Command::Lift {
            config,
            detections,
            out,
            emit,
        } => {
            let mut cfg = PipelineConfig::from_path(&config)?;
            cfg.io.detections = Some(detections);
            cfg.io.listen = None;
            cfg.io.out = Some(out);
            if emit.is_some() {
                cfg.io.emit = emit;
            }
            let stats = run_pipeline(&cfg, None)?;
            report_stats(&stats);
            Ok(())
        }
        Command::Stream {
            config,
            listen,
            emit,
            out,
            max_frames,
        } => {
            let mut cfg = PipelineConfig::from_path(&config)?;
            cfg.io.listen = Some(listen);
            cfg.io.detections = None;
            if emit.is_some() {
                cfg.io.emit = emit;
            }
            if out.is_some() {
                cfg.io.out = out;
            }
            let stats = run_pipeline(&cfg, max_frames)?;
            report_stats(&stats);
            Ok(())
        }
        Command::Simulate {
            scene,
            seed,
            out_dir,
            report,
        } => simulate(&scene, seed, out_dir.as_deref(), report.as_deref()),
        Command::Calibrate { pairs, config } => calibrate(&pairs, &config),
    }
}

fn report_stats(stats: &PipelineStats) {
    eprintln!(
        "stats: {}",
        serde_json::to_string(stats).expect("stats always serialize")
    );
}

fn write_lines<T>(
    path: &Path,
    items: impl IntoIterator<Item = T>,
    mut render: impl FnMut(&T) -> Result<String, StreamError>,
) -> Result<(), AppError> {
    let file = File::create(path)
        .map_err(|e| AppError::data(format!("cannot create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = render(&item).map_err(|e| AppError::data("serialize", e))?;
        writeln!(w, "{line}").map_err(|e| AppError::data("write", e))?;
    }
    w.flush().map_err(|e| AppError::data("write", e))?;
    Ok(())
}

fn simulate(
    scene_path: &Path,
    seed: Option<u64>,
    out_dir: Option<&Path>,
    report: Option<&Path>,
) -> Result<(), AppError> {
    let scene_cfg = SceneConfig::from_path(scene_path)?;
    let scene = scene_cfg.build_scene(seed)?;
    let truth = generate_truth(&scene);
    let det_frames: Vec<DetectionFrame> = truth
        .iter()
        .map(|tf| DetectionFrame {
            frame: tf.frame,
            t: tf.t,
            detections: synthesize_detections(tf, &scene.rig, &scene.noise, scene.seed),
        })
        .collect();

    let pipe_cfg = PipelineConfig {
        rig: scene_cfg.rig.clone(),
        ground: scene_cfg.ground.clone(),
        anchor: scene_cfg.anchor.clone(),
        tracker: scene_cfg.tracker,
        place_skeletons: true,
        io: Default::default(),
    };
    let (tracks, stats) = run_frames(&pipe_cfg, &det_frames)?;
    let metrics = evaluate(
        &truth,
        &tracks,
        scene_cfg.matching_radius_m,
        &scene.rig.pose.position,
    );

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| AppError::data(format!("cannot create {}", dir.display()), e))?;
        write_lines(&dir.join("truth.jsonl"), &truth, |f| serialize_truth_frame(f))?;
        write_lines(&dir.join("detections.jsonl"), &det_frames, |f| {
            serialize_detection_frame(f)
        })?;
        write_lines(&dir.join("tracks.jsonl"), &tracks, |f| serialize_track_frame(f))?;
    }

    let report_json = serde_json::json!({
        "scene": {
            "agents": scene.agents.len(),
            "frames": truth.len(),
            "seed": scene.seed,
        },
        "pipeline": stats,
        "metrics": metrics,
    });
    let text = serde_json::to_string_pretty(&report_json).expect("report always serializes");
    match report {
        Some(path) => std::fs::write(path, text + "\n")
            .map_err(|e| AppError::data(format!("cannot write {}", path.display()), e))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn calibrate(pairs_path: &Path, config_path: &Path) -> Result<(), AppError> {
    let text = std::fs::read_to_string(pairs_path)
        .map_err(|e| AppError::data(format!("cannot read {}", pairs_path.display()), e))?;
    let pairs = parse_calibration_pairs(&text).map_err(|e| AppError::data("pairs file", e))?;
    let cfg = PipelineConfig::from_path(config_path)?;
    let ground = cfg.ground.build()?;
    let GroundModel::Plane(plane) = ground else {
        return Err(AppError::Config(ConfigError::Invalid(
            "calibration requires a plane ground".into(),
        )));
    };
    let (hom, fit) = fit_ground_homography(&pairs, PlaneFrame::for_plane(&plane))
        .map_err(|e| AppError::data("fit", e))?;
    let rows: Vec<Vec<f64>> = (0..3)
        .map(|r| (0..3).map(|c| hom.h[(r, c)]).collect())
        .collect();
    let block = serde_json::json!({
        "homography": rows,
        "fit": {
            "pairs": pairs.len(),
            "rms_residual": fit.rms_residual,
            "max_residual": fit.max_residual,
            "condition": fit.condition,
        },
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&block).expect("block always serializes")
    );
    Ok(())
}
