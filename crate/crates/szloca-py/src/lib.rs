//! Python bindings: cameras, ground surfaces, single-pixel lifting, the
//! full streaming pipeline, calibration, and the OSC encoder.
//!
//! The module mirrors the Rust API at the granularity a Python caller
//! wants: tuples in, tuples out, JSON lines for the record formats.

use nalgebra::{Point3, Vector3};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use szloca::io::records::DetectionLineParser;
use szloca::io::{encode_osc_track as osc_encode, FrameEngine, PipelineConfig};
use szloca::{
    fit_ground_homography, intersect_plane, CameraIntrinsics, CameraPose, CameraRig, GroundModel,
    GroundPlane, Heightfield, PlaneFrame, Ray,
};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_point(p: (f64, f64, f64)) -> Point3<f64> {
    Point3::new(p.0, p.1, p.2)
}

fn from_point(p: &Point3<f64>) -> (f64, f64, f64) {
    (p.x, p.y, p.z)
}

/// A fixed camera: projection model, image geometry, and world pose.
#[pyclass(frozen)]
struct Rig {
    inner: CameraRig,
}

#[pymethods]
impl Rig {
    #[new]
    #[pyo3(signature = (
        projection,
        image_size,
        position,
        yaw_pitch_roll,
        focal_px = None,
        ortho_scale = None,
        principal_point = None,
        allow_level_view = false,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        projection: &str,
        image_size: (u32, u32),
        position: (f64, f64, f64),
        yaw_pitch_roll: (f64, f64, f64),
        focal_px: Option<f64>,
        ortho_scale: Option<f64>,
        principal_point: Option<(f64, f64)>,
        allow_level_view: bool,
    ) -> PyResult<Self> {
        let intrinsics = match (projection, focal_px, ortho_scale) {
            ("perspective", Some(f), None) => {
                CameraIntrinsics::perspective(image_size.0, image_size.1, f).map_err(value_err)?
            }
            ("orthographic", None, Some(s)) => {
                CameraIntrinsics::orthographic(image_size.0, image_size.1, s).map_err(value_err)?
            }
            ("perspective", None, _) => {
                return Err(PyValueError::new_err("perspective rig needs focal_px"))
            }
            ("orthographic", _, None) => {
                return Err(PyValueError::new_err("orthographic rig needs ortho_scale"))
            }
            ("perspective", _, Some(_)) | ("orthographic", Some(_), _) => {
                return Err(PyValueError::new_err(
                    "pass focal_px or ortho_scale, matching the projection",
                ))
            }
            (other, ..) => {
                return Err(PyValueError::new_err(format!(
                    "projection must be 'perspective' or 'orthographic', got {other:?}"
                )))
            }
        };
        let intrinsics = match principal_point {
            Some((u0, v0)) => CameraIntrinsics {
                principal_point: (u0, v0),
                ..intrinsics
            },
            None => intrinsics,
        };
        let pose = CameraPose::from_euler_deg(
            to_point(position),
            yaw_pitch_roll.0,
            yaw_pitch_roll.1,
            yaw_pitch_roll.2,
        )
        .map_err(value_err)?;
        let inner = if allow_level_view {
            CameraRig::new_forced(intrinsics, pose)
        } else {
            CameraRig::new(intrinsics, pose).map_err(value_err)?
        };
        Ok(Rig { inner })
    }

    /// World ray through a pixel as ((origin), (unit direction)).
    fn screen_to_ray(&self, pixel: (f64, f64)) -> ((f64, f64, f64), (f64, f64, f64)) {
        let Ray { origin, direction } = self.inner.screen_to_ray(pixel);
        (from_point(&origin), (direction.x, direction.y, direction.z))
    }

    /// Pixel and view-axis depth of a world point, or None behind the camera.
    fn world_to_screen(&self, point: (f64, f64, f64)) -> Option<((f64, f64), f64)> {
        self.inner.world_to_screen(&to_point(point))
    }

    #[getter]
    fn position(&self) -> (f64, f64, f64) {
        from_point(&self.inner.pose.position)
    }

    #[getter]
    fn forward(&self) -> (f64, f64, f64) {
        let f = self.inner.pose.forward();
        (f.x, f.y, f.z)
    }

    fn __repr__(&self) -> String {
        let (w, h) = (self.inner.intrinsics.image_width, self.inner.intrinsics.image_height);
        format!("Rig({w}x{h} at {:?})", from_point(&self.inner.pose.position))
    }
}

/// The known ground surface rays are cast against.
#[pyclass(frozen)]
struct Ground {
    inner: GroundModel,
}

#[pymethods]
impl Ground {
    /// Infinite plane through `anchor` with the given upward normal.
    #[staticmethod]
    #[pyo3(signature = (anchor = (0.0, 0.0, 0.0), normal = (0.0, 1.0, 0.0)))]
    fn plane(anchor: (f64, f64, f64), normal: (f64, f64, f64)) -> PyResult<Self> {
        let plane = GroundPlane::new(to_point(anchor), Vector3::new(normal.0, normal.1, normal.2))
            .map_err(value_err)?;
        Ok(Ground {
            inner: GroundModel::Plane(plane),
        })
    }

    /// Bilinear heightfield: `rows[r][c]` is the height at
    /// `(origin.0 + c*cell_size, origin.1 + r*cell_size)`.
    #[staticmethod]
    fn heightfield(origin: (f64, f64), cell_size: f64, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let hf = Heightfield::new(origin, cell_size, rows).map_err(value_err)?;
        Ok(Ground {
            inner: GroundModel::Field(hf),
        })
    }

    /// Surface height under (x, z); None outside a heightfield's footprint
    /// or under a vertical plane.
    fn height_at(&self, x: f64, z: f64) -> Option<f64> {
        match &self.inner {
            GroundModel::Plane(plane) => {
                let probe = Ray::new(Point3::new(x, 1.0e6, z), -Vector3::y());
                intersect_plane(&probe, plane).map(|p| p.y)
            }
            GroundModel::Field(hf) => hf.sample_height(x, z),
        }
    }

    fn __repr__(&self) -> String {
        match &self.inner {
            GroundModel::Plane(_) => "Ground.plane".to_string(),
            GroundModel::Field(_) => "Ground.heightfield".to_string(),
        }
    }
}

/// Casts the pixel's ray against the ground; the world hit or None.
#[pyfunction]
fn lift(rig: &Rig, ground: &Ground, pixel: (f64, f64)) -> Option<(f64, f64, f64)> {
    ground
        .inner
        .intersect(&rig.inner.screen_to_ray(pixel))
        .map(|p| from_point(&p))
}

/// The full lift-and-track pipeline, fed one detection record at a time.
#[pyclass]
struct Pipeline {
    engine: FrameEngine,
    parser: DetectionLineParser,
    frames: u64,
}

#[pymethods]
impl Pipeline {
    /// Builds from the same JSON document the CLI's --config takes.
    #[new]
    fn new(config_json: &str) -> PyResult<Self> {
        let cfg = PipelineConfig::from_json(config_json).map_err(value_err)?;
        let engine = FrameEngine::from_config(&cfg).map_err(value_err)?;
        Ok(Pipeline {
            engine,
            parser: DetectionLineParser::new(),
            frames: 0,
        })
    }

    /// Processes one detection record line; returns the track record line,
    /// or None for a blank input line.
    fn step_line(&mut self, line: &str) -> PyResult<Option<String>> {
        let Some(frame) = self.parser.parse(line).map_err(value_err)? else {
            return Ok(None);
        };
        let (out, _) = self.engine.step(&frame).map_err(value_err)?;
        self.frames += 1;
        let rendered =
            szloca::io::serialize_track_frame(&out).map_err(value_err)?;
        Ok(Some(rendered))
    }

    #[getter]
    fn live_tracks(&self) -> usize {
        self.engine.live_tracks()
    }

    #[getter]
    fn frames(&self) -> u64 {
        self.frames
    }
}

/// 40-byte OSC message `/szloca/track ,ifff id x y z`.
#[pyfunction]
fn encode_osc_track<'py>(
    py: Python<'py>,
    track_id: i32,
    position: (f32, f32, f32),
) -> PyResult<Bound<'py, PyBytes>> {
    let msg = osc_encode(track_id, position).map_err(value_err)?;
    Ok(PyBytes::new(py, &msg))
}

/// Fits the pixel-to-ground homography from ((u, v), (x, z)) pairs on the
/// y = 0 plane. Returns (rows, fit) where rows is the row-major 3x3 matrix
/// accepted by the rig config's "homography" key.
#[pyfunction]
fn fit_homography<'py>(
    py: Python<'py>,
    pairs: Vec<szloca::PixelPlanePair>,
) -> PyResult<(Vec<Vec<f64>>, Bound<'py, PyDict>)> {
    let (hom, fit) = fit_ground_homography(&pairs, PlaneFrame::y0()).map_err(value_err)?;
    let rows: Vec<Vec<f64>> = (0..3)
        .map(|r| (0..3).map(|c| hom.h[(r, c)]).collect())
        .collect();
    let report = PyDict::new(py);
    report.set_item("pairs", pairs.len())?;
    report.set_item("rms_residual", fit.rms_residual)?;
    report.set_item("max_residual", fit.max_residual)?;
    report.set_item("condition", fit.condition)?;
    Ok((rows, report))
}

#[pymodule]
fn szloca_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Rig>()?;
    m.add_class::<Ground>()?;
    m.add_class::<Pipeline>()?;
    m.add_function(wrap_pyfunction!(lift, m)?)?;
    m.add_function(wrap_pyfunction!(encode_osc_track, m)?)?;
    m.add_function(wrap_pyfunction!(fit_homography, m)?)?;
    m.add("OSC_ADDRESS", szloca::io::OSC_ADDRESS)?;
    m.add("OSC_MESSAGE_LEN", szloca::io::OSC_MESSAGE_LEN)?;
    Ok(())
}
