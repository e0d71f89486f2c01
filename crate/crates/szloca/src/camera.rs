//! Camera model: world/camera/screen conventions and pixel ↔ ray conversion.
//!
//! World space is right-handed, +Y up. Camera space has +X right, +Y up,
//! forward = −Z. Screen origin is the top-left pixel corner, +u right,
//! +v down. Angles are degrees in configs and radians internally.

use nalgebra::{Matrix3, Point3, Unit, Vector3};
use thiserror::Error;

/// Minimum downward component of the camera forward axis. A rig whose
/// forward axis has a world-up component above this is looking at (or above)
/// the horizon and is rejected at load; ground lifting needs the camera
/// tilted towards the floor.
pub const MIN_TILT_DOWN: f64 = -0.05;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("image dimensions must be positive, got {0}x{1}")]
    EmptyImage(u32, u32),
    #[error("focal length must be positive, got {0}")]
    NonPositiveFocal(f64),
    #[error("orthographic scale must be positive, got {0}")]
    NonPositiveOrthoScale(f64),
    #[error("principal point ({0}, {1}) lies outside the image {2}x{3}")]
    PrincipalPointOutsideImage(f64, f64, u32, u32),
    #[error("euler angles must be finite, got yaw={0} pitch={1} roll={2}")]
    NonFiniteAngles(f64, f64, f64),
    #[error("matrix is not a rotation (|R^T R - I|_inf = {ortho_err:.3e}, det = {det:.6})")]
    NotARotation { ortho_err: f64, det: f64 },
    #[error(
        "camera forward axis must point below the horizon: world-up component \
         {0:.4} exceeds {MIN_TILT_DOWN}; a horizontal camera cannot hit the ground \
         (set force_tilt to override)"
    )]
    InsufficientTilt(f64),
}

/// Projection kind plus its one scale parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    /// Pinhole camera; rays fan out from the camera position.
    Perspective { focal_px: f64 },
    /// Parallel rays along the view axis; `metres_per_px` converts pixel
    /// offsets from the principal point into world offsets.
    Orthographic { metres_per_px: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraIntrinsics {
    pub projection: Projection,
    pub image_width: u32,
    pub image_height: u32,
    /// (u0, v0) in pixels; defaults to the image center.
    pub principal_point: (f64, f64),
}

impl CameraIntrinsics {
    pub fn new(
        projection: Projection,
        image_width: u32,
        image_height: u32,
        principal_point: Option<(f64, f64)>,
    ) -> Result<Self, CameraError> {
        if image_width == 0 || image_height == 0 {
            return Err(CameraError::EmptyImage(image_width, image_height));
        }
        match projection {
            Projection::Perspective { focal_px } if !(focal_px > 0.0) => {
                return Err(CameraError::NonPositiveFocal(focal_px));
            }
            Projection::Orthographic { metres_per_px } if !(metres_per_px > 0.0) => {
                return Err(CameraError::NonPositiveOrthoScale(metres_per_px));
            }
            _ => {}
        }
        let (u0, v0) = principal_point
            .unwrap_or((f64::from(image_width) / 2.0, f64::from(image_height) / 2.0));
        if !(0.0..=f64::from(image_width)).contains(&u0)
            || !(0.0..=f64::from(image_height)).contains(&v0)
        {
            return Err(CameraError::PrincipalPointOutsideImage(
                u0,
                v0,
                image_width,
                image_height,
            ));
        }
        Ok(Self {
            projection,
            image_width,
            image_height,
            principal_point: (u0, v0),
        })
    }

    pub fn perspective(image_width: u32, image_height: u32, focal_px: f64) -> Result<Self, CameraError> {
        Self::new(Projection::Perspective { focal_px }, image_width, image_height, None)
    }

    pub fn orthographic(
        image_width: u32,
        image_height: u32,
        metres_per_px: f64,
    ) -> Result<Self, CameraError> {
        Self::new(Projection::Orthographic { metres_per_px }, image_width, image_height, None)
    }
}

/// Rotation matrix from yaw/pitch/roll in degrees.
///
/// Composition is `R_yaw` (about world-up Y) · `R_pitch` (about camera X) ·
/// `R_roll` (about camera Z). Pitch −90° points the camera straight down.
pub fn rotation_from_euler_deg(yaw: f64, pitch: f64, roll: f64) -> Result<Matrix3<f64>, CameraError> {
    if !(yaw.is_finite() && pitch.is_finite() && roll.is_finite()) {
        return Err(CameraError::NonFiniteAngles(yaw, pitch, roll));
    }
    let (sy, cy) = yaw.to_radians().sin_cos();
    let (sp, cp) = pitch.to_radians().sin_cos();
    let (sr, cr) = roll.to_radians().sin_cos();
    let r_yaw = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let r_pitch = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
    let r_roll = Matrix3::new(cr, -sr, 0.0, sr, cr, 0.0, 0.0, 0.0, 1.0);
    Ok(r_yaw * r_pitch * r_roll)
}

fn check_rotation(r: &Matrix3<f64>) -> Result<(), CameraError> {
    let residual = r.transpose() * r - Matrix3::identity();
    let ortho_err = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let det = r.determinant();
    if ortho_err >= 1e-9 || (det - 1.0).abs() >= 1e-9 {
        return Err(CameraError::NotARotation { ortho_err, det });
    }
    Ok(())
}

/// Camera position and orientation in world space.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub position: Point3<f64>,
    pub rotation: Matrix3<f64>,
}

impl CameraPose {
    /// Build from an explicit rotation matrix; rejects non-orthonormal input.
    pub fn from_matrix(position: Point3<f64>, rotation: Matrix3<f64>) -> Result<Self, CameraError> {
        check_rotation(&rotation)?;
        Ok(Self { position, rotation })
    }

    pub fn from_euler_deg(
        position: Point3<f64>,
        yaw: f64,
        pitch: f64,
        roll: f64,
    ) -> Result<Self, CameraError> {
        Ok(Self {
            position,
            rotation: rotation_from_euler_deg(yaw, pitch, roll)?,
        })
    }

    /// World-space view direction (camera −Z axis).
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation * Vector3::new(0.0, 0.0, -1.0)
    }
}

/// A fully specified camera: intrinsics plus pose, validated at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

impl CameraRig {
    /// Builds a rig and enforces the tilt check: the forward axis must point
    /// below the horizon by at least [`MIN_TILT_DOWN`].
    pub fn new(intrinsics: CameraIntrinsics, pose: CameraPose) -> Result<Self, CameraError> {
        let up_component = pose.forward().y;
        if up_component > MIN_TILT_DOWN {
            return Err(CameraError::InsufficientTilt(up_component));
        }
        Ok(Self { intrinsics, pose })
    }

    /// Builds a rig without the tilt check (the config `force_tilt` escape
    /// hatch). All other invariants still hold.
    pub fn new_forced(intrinsics: CameraIntrinsics, pose: CameraPose) -> Self {
        Self { intrinsics, pose }
    }

    /// Whether a pixel lies inside the image bounds. Detectors can emit
    /// marginal coordinates, so out-of-bounds pixels are still lifted; the
    /// pipeline only counts them.
    pub fn contains_pixel(&self, pixel: (f64, f64)) -> bool {
        let (u, v) = pixel;
        (0.0..=f64::from(self.intrinsics.image_width)).contains(&u)
            && (0.0..=f64::from(self.intrinsics.image_height)).contains(&v)
    }

    /// World-space ray through the given pixel.
    ///
    /// Perspective rays start at the camera position; orthographic rays are
    /// all parallel to the view axis and start on the camera plane, offset by
    /// the pixel displacement times the metres-per-pixel scale.
    pub fn screen_to_ray(&self, pixel: (f64, f64)) -> Ray {
        let (u, v) = pixel;
        let (u0, v0) = self.intrinsics.principal_point;
        let r = &self.pose.rotation;
        match self.intrinsics.projection {
            Projection::Perspective { focal_px } => {
                let dir_cam = Vector3::new((u - u0) / focal_px, (v0 - v) / focal_px, -1.0);
                Ray::new(self.pose.position, r * dir_cam)
            }
            Projection::Orthographic { metres_per_px } => {
                let offset_cam =
                    Vector3::new(metres_per_px * (u - u0), metres_per_px * (v0 - v), 0.0);
                Ray::new(
                    self.pose.position + r * offset_cam,
                    r * Vector3::new(0.0, 0.0, -1.0),
                )
            }
        }
    }

    /// Projects a world point to a pixel and its depth along the view axis.
    ///
    /// Returns `None` for points at or behind the camera plane (camera-space
    /// z ≥ −1e-9). This is the exact inverse of [`Self::screen_to_ray`]: the
    /// ray through the returned pixel passes through the input point.
    pub fn world_to_screen(&self, point: &Point3<f64>) -> Option<((f64, f64), f64)> {
        let p_cam = self.pose.rotation.transpose() * (point - self.pose.position);
        if p_cam.z >= -1e-9 {
            return None;
        }
        let depth = -p_cam.z;
        let (u0, v0) = self.intrinsics.principal_point;
        let (u, v) = match self.intrinsics.projection {
            Projection::Perspective { focal_px } => {
                (u0 + focal_px * p_cam.x / depth, v0 - focal_px * p_cam.y / depth)
            }
            Projection::Orthographic { metres_per_px } => {
                (u0 + p_cam.x / metres_per_px, v0 - p_cam.y / metres_per_px)
            }
        };
        Some(((u, v), depth))
    }
}

/// A world-space ray with a unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub direction: Unit<Vector3<f64>>,
}

impl Ray {
    pub fn new(origin: Point3<f64>, direction: Vector3<f64>) -> Self {
        Self {
            origin,
            direction: Unit::new_normalize(direction),
        }
    }

    pub fn point_at(&self, t: f64) -> Point3<f64> {
        self.origin + self.direction.as_ref() * t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn perspective_rig(position: Point3<f64>, pitch: f64, focal_px: f64) -> CameraRig {
        CameraRig::new(
            CameraIntrinsics::perspective(1920, 1080, focal_px).unwrap(),
            CameraPose::from_euler_deg(position, 0.0, pitch, 0.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn euler_identity() {
        let r = rotation_from_euler_deg(0.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(r, Matrix3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn euler_straight_down_points_forward_at_minus_y() {
        let r = rotation_from_euler_deg(0.0, -90.0, 0.0).unwrap();
        let forward = r * Vector3::new(0.0, 0.0, -1.0);
        assert_relative_eq!(forward, Vector3::new(0.0, -1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn euler_matches_hand_composed_matrices() {
        // Independent oracle: compose the two axis rotations from their
        // textbook definitions, written out entry by entry.
        let yaw = 30.0f64.to_radians();
        let pitch = -45.0f64.to_radians();
        let (sy, cy) = (yaw.sin(), yaw.cos());
        let (sp, cp) = (pitch.sin(), pitch.cos());
        let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
        let rx = [[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]];
        let mut expected = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for (k, rx_row) in rx.iter().enumerate() {
                    expected[i][j] += ry[i][k] * rx_row[j];
                }
            }
        }
        let r = rotation_from_euler_deg(30.0, -45.0, 0.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(r[(i, j)], expected[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn euler_rejects_non_finite() {
        assert!(matches!(
            rotation_from_euler_deg(f64::NAN, 0.0, 0.0),
            Err(CameraError::NonFiniteAngles(..))
        ));
        assert!(matches!(
            rotation_from_euler_deg(0.0, f64::INFINITY, 0.0),
            Err(CameraError::NonFiniteAngles(..))
        ));
    }

    #[test]
    fn pose_rejects_non_orthonormal_matrix() {
        let skewed = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            CameraPose::from_matrix(Point3::origin(), skewed),
            Err(CameraError::NotARotation { .. })
        ));
        // Proper reflection has det = -1.
        let mirror = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            CameraPose::from_matrix(Point3::origin(), mirror),
            Err(CameraError::NotARotation { .. })
        ));
    }

    #[test]
    fn rig_rejects_horizontal_camera() {
        let intr = CameraIntrinsics::perspective(1920, 1080, 1000.0).unwrap();
        let pose = CameraPose::from_euler_deg(Point3::new(0.0, 2.0, 0.0), 0.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            CameraRig::new(intr.clone(), pose.clone()),
            Err(CameraError::InsufficientTilt(_))
        ));
        // Force flag keeps the rig usable.
        let rig = CameraRig::new_forced(intr, pose);
        assert!(rig.pose.forward().y.abs() < 1e-12);
    }

    #[test]
    fn screen_to_ray_principal_point_straight_down() {
        let rig = perspective_rig(Point3::new(0.0, 10.0, 0.0), -90.0, 1000.0);
        let ray = rig.screen_to_ray((960.0, 540.0));
        assert_relative_eq!(ray.origin, Point3::new(0.0, 10.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(
            ray.direction.into_inner(),
            Vector3::new(0.0, -1.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn screen_to_ray_orthographic_offsets_origin() {
        // Oracle: (u - u0) * metres_per_px = 100 * 0.01 = 1 m along camera X.
        let rig = CameraRig::new(
            CameraIntrinsics::orthographic(1920, 1080, 0.01).unwrap(),
            CameraPose::from_euler_deg(Point3::new(0.0, 10.0, 0.0), 0.0, -90.0, 0.0).unwrap(),
        )
        .unwrap();
        let ray = rig.screen_to_ray((1060.0, 540.0));
        assert_relative_eq!(ray.origin, Point3::new(1.0, 10.0, 0.0), epsilon = 1e-9);
        assert_relative_eq!(
            ray.direction.into_inner(),
            Vector3::new(0.0, -1.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn screen_to_ray_tilted_matches_hand_algebra() {
        // Oracle: camera-space direction (0.2, 0, -1) pitched by -45 degrees
        // and normalized by hand.
        let rig = perspective_rig(Point3::new(0.0, 5.0, 0.0), -45.0, 1000.0);
        let ray = rig.screen_to_ray((1160.0, 540.0));
        assert_relative_eq!(ray.direction.x, 0.19612, epsilon = 1e-5);
        assert_relative_eq!(ray.direction.y, -0.69338, epsilon = 1e-5);
        assert_relative_eq!(ray.direction.z, -0.69338, epsilon = 1e-5);
    }

    #[test]
    fn world_to_screen_straight_down() {
        let rig = perspective_rig(Point3::new(0.0, 10.0, 0.0), -90.0, 1000.0);
        let ((u, v), depth) = rig.world_to_screen(&Point3::new(0.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(u, 960.0, epsilon = 1e-9);
        assert_relative_eq!(v, 540.0, epsilon = 1e-9);
        assert_relative_eq!(depth, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn world_to_screen_behind_camera() {
        let rig = perspective_rig(Point3::new(0.0, 10.0, 0.0), -90.0, 1000.0);
        assert!(rig.world_to_screen(&Point3::new(0.0, 12.0, 0.0)).is_none());
    }

    #[test]
    fn world_to_screen_round_trips_tilted_example() {
        // Forward projection by hand of the ray example above: the ray
        // direction (0.19612, -0.69338, -0.69338) from (0, 5, 0) hits y = 0
        // at (sqrt(2), 0, -5).
        let rig = perspective_rig(Point3::new(0.0, 5.0, 0.0), -45.0, 1000.0);
        let ((u, v), _) = rig
            .world_to_screen(&Point3::new(std::f64::consts::SQRT_2, 0.0, -5.0))
            .unwrap();
        assert_relative_eq!(u, 1160.0, epsilon = 0.01);
        assert_relative_eq!(v, 540.0, epsilon = 0.01);
    }

    #[test]
    fn orthographic_rays_are_parallel() {
        let rig = CameraRig::new(
            CameraIntrinsics::orthographic(1920, 1080, 0.02).unwrap(),
            CameraPose::from_euler_deg(Point3::new(3.0, 8.0, 2.0), 25.0, -50.0, 5.0).unwrap(),
        )
        .unwrap();
        let d0 = rig.screen_to_ray((0.0, 0.0)).direction.into_inner();
        for pixel in [(1920.0, 0.0), (17.0, 902.0), (960.0, 540.0)] {
            let d = rig.screen_to_ray(pixel).direction.into_inner();
            assert!((d - d0).norm() < 1e-12);
        }
    }

    #[test]
    fn perspective_rays_pass_through_camera_position() {
        let rig = perspective_rig(Point3::new(1.0, 6.0, -2.0), -35.0, 1400.0);
        for pixel in [(0.0, 0.0), (1919.0, 1079.0), (123.0, 456.0)] {
            let ray = rig.screen_to_ray(pixel);
            assert_eq!(ray.origin, rig.pose.position);
            assert!((ray.direction.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn contains_pixel_bounds() {
        let rig = perspective_rig(Point3::new(0.0, 5.0, 0.0), -45.0, 1000.0);
        assert!(rig.contains_pixel((0.0, 0.0)));
        assert!(rig.contains_pixel((1920.0, 1080.0)));
        assert!(!rig.contains_pixel((-0.1, 10.0)));
        assert!(!rig.contains_pixel((10.0, 1080.5)));
    }
}
