//! Ground surface models and ray intersection.
//!
//! The ground is either an infinite plane or a rectangular bilinear
//! heightfield (the stand-in for engine terrain). Intersections are values:
//! a missed ray is `None`, never an error.

use nalgebra::{Point3, Unit, Vector3};
use thiserror::Error;

use crate::camera::Ray;

/// Along-ray tolerance reached by the heightfield bisection stage.
pub const HEIGHTFIELD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum GroundError {
    #[error("plane normal must be a nonzero vector")]
    ZeroNormal,
    #[error("plane normal must face upward (normal·up = {0:.4})")]
    DownwardNormal(f64),
    #[error("heightfield cell size must be positive, got {0}")]
    NonPositiveCellSize(f64),
    #[error("heightfield grid must be at least 2x2, got {0}x{1}")]
    GridTooSmall(usize, usize),
    #[error("heightfield rows must all have the same length")]
    RaggedGrid,
    #[error("heightfield heights must be finite")]
    NonFiniteHeight,
}

/// An infinite plane with an upward-facing unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundPlane {
    pub anchor: Point3<f64>,
    pub normal: Unit<Vector3<f64>>,
}

impl GroundPlane {
    pub fn new(anchor: Point3<f64>, normal: Vector3<f64>) -> Result<Self, GroundError> {
        if normal.norm() < 1e-12 {
            return Err(GroundError::ZeroNormal);
        }
        let normal = Unit::new_normalize(normal);
        if normal.y <= 0.0 {
            return Err(GroundError::DownwardNormal(normal.y));
        }
        Ok(Self { anchor, normal })
    }

    /// The default y = 0 ground.
    pub fn y0() -> Self {
        Self {
            anchor: Point3::origin(),
            normal: Unit::new_unchecked(Vector3::y()),
        }
    }

    /// Signed distance of a point above the plane.
    pub fn height_above(&self, p: &Point3<f64>) -> f64 {
        (p - self.anchor).dot(&self.normal)
    }
}

/// Rectangular grid of terrain heights, interpolated bilinearly.
///
/// `heights` is row-major: row index walks +Z, column index walks +X, both
/// starting at `origin` and spaced by `cell_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightfield {
    origin: (f64, f64),
    cell_size: f64,
    heights: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Heightfield {
    pub fn new(origin: (f64, f64), cell_size: f64, rows: Vec<Vec<f64>>) -> Result<Self, GroundError> {
        if !(cell_size > 0.0) {
            return Err(GroundError::NonPositiveCellSize(cell_size));
        }
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if n_rows < 2 || n_cols < 2 {
            return Err(GroundError::GridTooSmall(n_rows, n_cols));
        }
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(GroundError::RaggedGrid);
        }
        let heights: Vec<f64> = rows.into_iter().flatten().collect();
        if heights.iter().any(|h| !h.is_finite()) {
            return Err(GroundError::NonFiniteHeight);
        }
        Ok(Self {
            origin,
            cell_size,
            heights,
            rows: n_rows,
            cols: n_cols,
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// World-space footprint as (x_min, z_min, x_max, z_max).
    pub fn footprint(&self) -> (f64, f64, f64, f64) {
        (
            self.origin.0,
            self.origin.1,
            self.origin.0 + self.cell_size * (self.cols - 1) as f64,
            self.origin.1 + self.cell_size * (self.rows - 1) as f64,
        )
    }

    fn grid_height(&self, row: usize, col: usize) -> f64 {
        self.heights[row * self.cols + col]
    }

    fn min_max_height(&self) -> (f64, f64) {
        self.heights
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &h| {
                (lo.min(h), hi.max(h))
            })
    }

    /// Bilinear interpolation of the four surrounding grid heights; `None`
    /// outside the grid footprint.
    pub fn sample_height(&self, x: f64, z: f64) -> Option<f64> {
        let (x_min, z_min, x_max, z_max) = self.footprint();
        if x < x_min || x > x_max || z < z_min || z > z_max {
            return None;
        }
        let fx = (x - x_min) / self.cell_size;
        let fz = (z - z_min) / self.cell_size;
        // Clamp the cell index, not the coordinate, so the far edge (where
        // floor(fx) = cols-1) reuses the last cell with tx = 1.
        let col = (fx.floor() as usize).min(self.cols - 2);
        let row = (fz.floor() as usize).min(self.rows - 2);
        let tx = fx - col as f64;
        let tz = fz - row as f64;
        let h00 = self.grid_height(row, col);
        let h01 = self.grid_height(row, col + 1);
        let h10 = self.grid_height(row + 1, col);
        let h11 = self.grid_height(row + 1, col + 1);
        Some(
            h00 * (1.0 - tx) * (1.0 - tz)
                + h01 * tx * (1.0 - tz)
                + h10 * (1.0 - tx) * tz
                + h11 * tx * tz,
        )
    }
}

/// One of the two ground representations.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundModel {
    Plane(GroundPlane),
    Field(Heightfield),
}

impl GroundModel {
    pub fn intersect(&self, ray: &Ray) -> Option<Point3<f64>> {
        match self {
            GroundModel::Plane(plane) => intersect_plane(ray, plane),
            GroundModel::Field(hf) => intersect_heightfield(ray, hf),
        }
    }

    /// Intersects the ray with this surface raised by `offset` along its
    /// normal direction (the plane normal, or vertically for a heightfield),
    /// without materialising the raised surface.
    pub(crate) fn intersect_raised(&self, ray: &Ray, offset: f64) -> Option<Point3<f64>> {
        match self {
            GroundModel::Plane(plane) => {
                let raised = GroundPlane {
                    anchor: plane.anchor + plane.normal.as_ref() * offset,
                    normal: plane.normal,
                };
                intersect_plane(ray, &raised)
            }
            GroundModel::Field(hf) => intersect_heightfield_offset(ray, hf, offset),
        }
    }

    /// Direction along which [`Self::intersect_raised`] offsets the surface.
    pub(crate) fn raise_direction(&self) -> Vector3<f64> {
        match self {
            GroundModel::Plane(plane) => plane.normal.into_inner(),
            GroundModel::Field(_) => Vector3::y(),
        }
    }
}

/// Ray/plane intersection in front of the ray origin.
///
/// Grazing rays (|direction·normal| ≤ 1e-12) and intersections at or behind
/// the origin (t ≤ 1e-9) are no-hit.
pub fn intersect_plane(ray: &Ray, plane: &GroundPlane) -> Option<Point3<f64>> {
    let denom = ray.direction.dot(&plane.normal);
    if denom.abs() <= 1e-12 {
        return None;
    }
    let t = (plane.anchor - ray.origin).dot(&plane.normal) / denom;
    if t <= 1e-9 {
        return None;
    }
    Some(ray.point_at(t))
}

/// First crossing of the ray with the bilinear terrain surface.
///
/// Marches the clipped ray parameter range in fixed sub-steps of
/// `cell_size / 4`, then bisects the first bracketing interval down to
/// [`HEIGHTFIELD_TOLERANCE`] along the ray. `None` if the ray never crosses
/// the surface inside the grid footprint.
pub fn intersect_heightfield(ray: &Ray, hf: &Heightfield) -> Option<Point3<f64>> {
    intersect_heightfield_offset(ray, hf, 0.0)
}

fn intersect_heightfield_offset(ray: &Ray, hf: &Heightfield, dy: f64) -> Option<Point3<f64>> {
    let (t_enter, t_exit) = clip_to_field(ray, hf, dy)?;
    // Signed height of the ray above the surface; a crossing is a sign change.
    let above = |t: f64| -> Option<f64> {
        let p = ray.point_at(t);
        hf.sample_height(p.x, p.z).map(|h| p.y - (h + dy))
    };
    let step = hf.cell_size() / 4.0;
    let mut t_prev = t_enter;
    let mut f_prev = above(t_prev)?;
    if f_prev == 0.0 {
        return Some(ray.point_at(t_prev));
    }
    let mut t = t_prev;
    while t < t_exit {
        t = (t + step).min(t_exit);
        let Some(f) = above(t) else { break };
        if f == 0.0 {
            return Some(ray.point_at(t));
        }
        if f.signum() != f_prev.signum() {
            // Bisect [t_prev, t] down to the along-ray tolerance.
            let (mut lo, mut hi) = (t_prev, t);
            let mut f_lo = f_prev;
            while hi - lo > HEIGHTFIELD_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                let f_mid = above(mid)?;
                if f_mid == 0.0 {
                    return Some(ray.point_at(mid));
                }
                if f_mid.signum() == f_lo.signum() {
                    lo = mid;
                    f_lo = f_mid;
                } else {
                    hi = mid;
                }
            }
            return Some(ray.point_at(0.5 * (lo + hi)));
        }
        t_prev = t;
        f_prev = f;
    }
    None
}

/// Clips the ray parameter to the range where a surface crossing is possible:
/// inside the xz footprint and within the terrain height band.
fn clip_to_field(ray: &Ray, hf: &Heightfield, dy: f64) -> Option<(f64, f64)> {
    let (x_min, z_min, x_max, z_max) = hf.footprint();
    let (h_min, h_max) = hf.min_max_height();
    // Small margin so grazing entries are not clipped out by rounding.
    let pad = HEIGHTFIELD_TOLERANCE;
    let mut t0: f64 = 1e-9;
    let mut t1 = f64::INFINITY;
    let slabs = [
        (ray.origin.x, ray.direction.x, x_min, x_max),
        (ray.origin.z, ray.direction.z, z_min, z_max),
        (ray.origin.y, ray.direction.y, h_min + dy - pad, h_max + dy + pad),
    ];
    for (o, d, lo, hi) in slabs {
        if d.abs() < 1e-15 {
            if o < lo || o > hi {
                return None;
            }
        } else {
            let (ta, tb) = ((lo - o) / d, (hi - o) / d);
            let (ta, tb) = if ta <= tb { (ta, tb) } else { (tb, ta) };
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
    }
    (t0 < t1).then_some((t0, t1))
}
