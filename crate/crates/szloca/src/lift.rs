//! Lifting anchored detections to 3D world positions.
//!
//! Two independent routes exist for planar ground under a perspective rig:
//! the ray route (screen_to_ray + intersect) and a closed-form ground
//! homography. They must agree; the homography also powers calibration from
//! pixel/ground point pairs. Heightfield ground only has the ray route.
//!
//! Skeletons are placed by intersecting each joint ray with a vertical
//! "billboard" plane through the lifted ground point, which reproduces the
//! perspective size change exactly: a farther plane spans larger world
//! extents for the same pixel footprint.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3, Point3, Unit, Vector3};
use thiserror::Error;

use crate::anchor::{AnchorConfig, AnchorResult, Detection2D};
use crate::camera::{CameraRig, Projection};
use crate::ground::{GroundModel, GroundPlane};

#[derive(Debug, Error)]
pub enum LiftError {
    #[error("ground homography requires a perspective rig")]
    OrthographicRig,
    #[error("camera height above the plane is {0:.3e} m; homography is degenerate")]
    CameraOnPlane(f64),
    #[error("homography fit needs at least 4 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("calibration pairs must be finite")]
    NonFinitePair,
    #[error("homography fit is rank-deficient (condition {0:.3e}); check for collinear pixels")]
    RankDeficient(f64),
    #[error("fitted homography is singular")]
    SingularFit,
}

/// A detection lifted to the ground, with optional placed skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedDetection {
    pub ground_point: Point3<f64>,
    pub anchor: AnchorResult,
    pub skeleton3d: Option<BTreeMap<String, Point3<f64>>>,
    /// Index of the source detection within its frame.
    pub source_index: usize,
}

/// Casts the anchor ray and intersects the ground.
///
/// Torso anchors intersect the ground raised by `torso_height_m` along its
/// normal and drop the hit back onto the true surface; everything else
/// intersects the ground directly. `None` means the ray misses (at or above
/// the horizon); such detections are skipped, never clamped.
pub fn lift_anchor(
    anchor: &AnchorResult,
    rig: &CameraRig,
    ground: &GroundModel,
    cfg: &AnchorConfig,
) -> Option<Point3<f64>> {
    let ray = rig.screen_to_ray(anchor.pixel);
    if anchor.needs_torso_correction {
        let hit = ground.intersect_raised(&ray, cfg.torso_height_m)?;
        Some(hit - ground.raise_direction() * cfg.torso_height_m)
    } else {
        ground.intersect(&ray)
    }
}

/// Places each present joint on the billboard plane through `ground_point`.
///
/// The plane is vertical and faces the camera horizontally: its normal is the
/// horizontal component of (camera position − ground point), or of the
/// reversed view direction for orthographic rigs (where position carries no
/// direction information). Joints whose rays run parallel to the plane or hit
/// behind the camera are omitted.
pub fn place_skeleton(
    det: &Detection2D,
    ground_point: &Point3<f64>,
    rig: &CameraRig,
) -> BTreeMap<String, Point3<f64>> {
    let normal = billboard_normal(rig, ground_point);
    let mut placed = BTreeMap::new();
    for (name, kp) in &det.keypoints {
        let ray = rig.screen_to_ray((kp.u, kp.v));
        let denom = ray.direction.dot(&normal);
        if denom.abs() <= 1e-12 {
            continue;
        }
        let t = (ground_point - ray.origin).dot(&normal) / denom;
        if t <= 1e-9 {
            continue;
        }
        placed.insert(name.clone(), ray.point_at(t));
    }
    placed
}

fn billboard_normal(rig: &CameraRig, ground_point: &Point3<f64>) -> Unit<Vector3<f64>> {
    let toward = match rig.intrinsics.projection {
        Projection::Perspective { .. } => rig.pose.position - ground_point,
        Projection::Orthographic { .. } => -rig.pose.forward(),
    };
    let mut horizontal = Vector3::new(toward.x, 0.0, toward.z);
    if horizontal.norm() < 1e-9 {
        // Camera directly overhead: face the reversed view direction instead.
        let f = rig.pose.forward();
        horizontal = Vector3::new(-f.x, 0.0, -f.z);
    }
    if horizontal.norm() < 1e-9 {
        // Straight-down view: any vertical plane orientation is as good.
        horizontal = Vector3::z();
    }
    Unit::new_normalize(horizontal)
}

/// Orthonormal 2D frame embedded in a ground plane.
///
/// The in-plane x-axis is the normalized projection of world +X onto the
/// plane (world +Z if the normal is parallel to +X); the y-axis completes it
/// so that for the default y = 0 plane, plane coords (a, b) equal world
/// (x, z).
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFrame {
    pub origin: Point3<f64>,
    pub e1: Unit<Vector3<f64>>,
    pub e2: Unit<Vector3<f64>>,
    pub normal: Unit<Vector3<f64>>,
}

impl PlaneFrame {
    pub fn for_plane(plane: &GroundPlane) -> Self {
        let n = plane.normal;
        let projected = Vector3::x() - n.as_ref() * Vector3::x().dot(&n);
        let e1 = if projected.norm() > 1e-9 {
            Unit::new_normalize(projected)
        } else {
            Unit::new_normalize(Vector3::z() - n.as_ref() * Vector3::z().dot(&n))
        };
        let e2 = Unit::new_normalize(e1.cross(&n));
        Self {
            origin: plane.anchor,
            e1,
            e2,
            normal: n,
        }
    }

    /// Frame of the default y = 0 ground: (a, b) = world (x, z).
    pub fn y0() -> Self {
        Self::for_plane(&GroundPlane::y0())
    }

    pub fn to_world(&self, a: f64, b: f64) -> Point3<f64> {
        self.origin + self.e1.as_ref() * a + self.e2.as_ref() * b
    }

    pub fn to_plane(&self, p: &Point3<f64>) -> (f64, f64) {
        let d = p - self.origin;
        (d.dot(&self.e1), d.dot(&self.e2))
    }
}

/// 3×3 projective map from homogeneous pixels (u, v, 1) to homogeneous
/// in-plane coordinates, plus the frame embedding those coordinates in world
/// space. Normalized so the largest-magnitude entry is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundHomography {
    pub h: Matrix3<f64>,
    pub frame: PlaneFrame,
}

impl GroundHomography {
    /// Maps a pixel to in-plane coordinates; `None` is the at-infinity signal
    /// (horizon pixel).
    pub fn apply(&self, pixel: (f64, f64)) -> Option<(f64, f64)> {
        let out = self.h * Vector3::new(pixel.0, pixel.1, 1.0);
        if out.z.abs() < 1e-12 {
            return None;
        }
        Some((out.x / out.z, out.y / out.z))
    }
}

/// Residual diagnostics of a homography fit, in plane units (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub rms_residual: f64,
    pub max_residual: f64,
    /// Ratio of the largest to the smallest constrained singular value of the
    /// design matrix; large values mean a poorly determined fit.
    pub condition: f64,
}

/// Closed-form pixel → ground-plane map of a perspective rig.
///
/// For pixel p, the ray direction is d = R·K·p with
/// K = [[1/f, 0, −u₀/f], [0, −1/f, v₀/f], [0, 0, −1]], and the plane-frame
/// coordinate a of the ray-plane hit satisfies
/// a·(d·n) = ((C−A)·e1)(d·n) + ((A−C)·n)(d·e1), linear in d and hence in p.
/// Stacking a, b, and the denominator gives the three rows of H.
pub fn homography_from_camera(
    rig: &CameraRig,
    plane: &GroundPlane,
) -> Result<GroundHomography, LiftError> {
    let focal = match rig.intrinsics.projection {
        Projection::Perspective { focal_px } => focal_px,
        Projection::Orthographic { .. } => return Err(LiftError::OrthographicRig),
    };
    let frame = PlaneFrame::for_plane(plane);
    let cam_to_anchor = rig.pose.position - plane.anchor;
    let height = cam_to_anchor.dot(&plane.normal);
    if height.abs() < 1e-9 {
        return Err(LiftError::CameraOnPlane(height));
    }
    let (u0, v0) = rig.intrinsics.principal_point;
    let k = Matrix3::new(
        1.0 / focal, 0.0, -u0 / focal,
        0.0, -1.0 / focal, v0 / focal,
        0.0, 0.0, -1.0,
    );
    let m = rig.pose.rotation * k;
    // Row vectors xᵀM materialised as Mᵀx.
    let mt = m.transpose();
    let row_n = mt * frame.normal.into_inner();
    let row_e1 = mt * frame.e1.into_inner();
    let row_e2 = mt * frame.e2.into_inner();
    let c_e1 = cam_to_anchor.dot(&frame.e1);
    let c_e2 = cam_to_anchor.dot(&frame.e2);
    let r1 = row_n * c_e1 - row_e1 * height;
    let r2 = row_n * c_e2 - row_e2 * height;
    let h = normalize_h(Matrix3::from_rows(&[
        r1.transpose(),
        r2.transpose(),
        row_n.transpose(),
    ]));
    Ok(GroundHomography { h, frame })
}

/// One calibration correspondence: pixel (u, v) and the in-plane point (a, b)
/// it shows.
pub type PixelPlanePair = ((f64, f64), (f64, f64));

/// Fits a pixel → plane homography from ≥ 4 (pixel, in-plane point) pairs by
/// the normalized direct linear transform: both point sets are translated to
/// centroid zero and scaled to RMS distance √2, the 8-dof homogeneous system
/// is solved by the smallest singular direction, and the result denormalized.
/// Plane points are interpreted in `frame`.
pub fn fit_ground_homography(
    pairs: &[PixelPlanePair],
    frame: PlaneFrame,
) -> Result<(GroundHomography, FitReport), LiftError> {
    if pairs.len() < 4 {
        return Err(LiftError::TooFewPairs(pairs.len()));
    }
    if pairs
        .iter()
        .any(|(p, q)| !(p.0.is_finite() && p.1.is_finite() && q.0.is_finite() && q.1.is_finite()))
    {
        return Err(LiftError::NonFinitePair);
    }
    let t_px = normalizing_transform(pairs.iter().map(|(p, _)| *p))?;
    let t_pl = normalizing_transform(pairs.iter().map(|(_, q)| *q))?;

    // At least 9 rows (zero-padded for the 4-pair case) so the thin SVD's
    // V^T is square and its last row is the true null-space direction.
    let mut a = DMatrix::zeros((2 * pairs.len()).max(9), 9);
    for (i, (p, q)) in pairs.iter().enumerate() {
        let (x, y) = apply_affine(&t_px, *p);
        let (u, v) = apply_affine(&t_pl, *q);
        a.set_row(i * 2, &nalgebra::RowDVector::from_row_slice(&[
            x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u,
        ]).row(0));
        a.set_row(i * 2 + 1, &nalgebra::RowDVector::from_row_slice(&[
            0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v,
        ]).row(0));
    }
    let svd = a.svd(false, true);
    let sv = &svd.singular_values;
    // sv[7] (not the smallest, sv[8]) guards the fit: an exact solution
    // zeroes sv[8] legitimately, while a degenerate point layout (e.g.
    // collinear) also collapses sv[7].
    let condition = sv[0] / sv[7].max(f64::MIN_POSITIVE);
    if sv[7] < sv[0] * 1e-12 {
        return Err(LiftError::RankDeficient(condition));
    }
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let hv = v_t.row(v_t.nrows() - 1);
    let h_norm = Matrix3::new(
        hv[0], hv[1], hv[2],
        hv[3], hv[4], hv[5],
        hv[6], hv[7], hv[8],
    );
    let h = normalize_h(t_pl.try_inverse().ok_or(LiftError::SingularFit)? * h_norm * t_px);
    if h.determinant().abs() < 1e-15 {
        return Err(LiftError::SingularFit);
    }
    let homography = GroundHomography { h, frame };

    let mut sum_sq = 0.0;
    let mut max_residual: f64 = 0.0;
    for (p, q) in pairs {
        let r = match homography.apply(*p) {
            Some((a, b)) => ((a - q.0).powi(2) + (b - q.1).powi(2)).sqrt(),
            None => f64::INFINITY,
        };
        sum_sq += r * r;
        max_residual = max_residual.max(r);
    }
    let report = FitReport {
        rms_residual: (sum_sq / pairs.len() as f64).sqrt(),
        max_residual,
        condition,
    };
    Ok((homography, report))
}

/// Applies the homography and embeds the result in world space. `None` is the
/// at-infinity signal for horizon pixels.
pub fn lift_via_homography(h: &GroundHomography, pixel: (f64, f64)) -> Option<Point3<f64>> {
    let (a, b) = h.apply(pixel)?;
    Some(h.frame.to_world(a, b))
}

/// Similarity transform taking the points to centroid 0, RMS radius √2.
fn normalizing_transform(
    points: impl Iterator<Item = (f64, f64)> + Clone,
) -> Result<Matrix3<f64>, LiftError> {
    let n = points.clone().count() as f64;
    let (cx, cy) = points
        .clone()
        .fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x, sy + y));
    let (cx, cy) = (cx / n, cy / n);
    let rms = (points
        .map(|(x, y)| (x - cx).powi(2) + (y - cy).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if rms < 1e-12 {
        return Err(LiftError::RankDeficient(f64::INFINITY));
    }
    let s = std::f64::consts::SQRT_2 / rms;
    Ok(Matrix3::new(
        s, 0.0, -s * cx,
        0.0, s, -s * cy,
        0.0, 0.0, 1.0,
    ))
}

fn apply_affine(t: &Matrix3<f64>, p: (f64, f64)) -> (f64, f64) {
    (t[(0, 0)] * p.0 + t[(0, 2)], t[(1, 1)] * p.1 + t[(1, 2)])
}

/// Scales H so its largest-magnitude entry becomes exactly 1.
fn normalize_h(h: Matrix3<f64>) -> Matrix3<f64> {
    let mut pivot = h[(0, 0)];
    for value in h.iter() {
        if value.abs() > pivot.abs() {
            pivot = *value;
        }
    }
    h / pivot
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::{
        select_anchor, AnchorStrategy, BoundingBox, Keypoint, SkeletonLayout,
    };
    use crate::camera::{CameraIntrinsics, CameraPose, CameraRig};
    use crate::ground::{intersect_plane, Heightfield};
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn perspective_rig(position: Point3<f64>, pitch_deg: f64) -> CameraRig {
        CameraRig::new(
            CameraIntrinsics::perspective(1920, 1080, 1000.0).unwrap(),
            CameraPose::from_euler_deg(position, 0.0, pitch_deg, 0.0).unwrap(),
        )
        .unwrap()
    }

    fn anchor_at(pixel: (f64, f64)) -> AnchorResult {
        AnchorResult {
            pixel,
            strategy_used: AnchorStrategy::Feet,
            needs_torso_correction: false,
        }
    }

    fn ground_y0() -> GroundModel {
        GroundModel::Plane(GroundPlane::y0())
    }

    /// World joints of a canonical standing figure at `footprint`, facing the
    /// camera: lateral axis horizontal and perpendicular to the camera
    /// direction, so both sides sit at equal depth.
    // Lateral axis horizontal and perpendicular to the camera forward axis:
    // paired joints then share perspective depth, so their pixel mean is the
    // projection of their midpoint and feet lifting is exact.
    fn stick_joints(
        footprint: Point3<f64>,
        h: f64,
        rig: &CameraRig,
    ) -> Vec<(&'static str, Point3<f64>)> {
        let forward = rig.pose.forward();
        let lateral = Vector3::new(-forward.z, 0.0, forward.x).normalize() * (0.10 * h);
        let up = Vector3::y();
        vec![
            ("left_ankle", footprint - lateral),
            ("right_ankle", footprint + lateral),
            ("left_hip", footprint - lateral + up * (0.53 * h)),
            ("right_hip", footprint + lateral + up * (0.53 * h)),
            ("left_shoulder", footprint - lateral + up * (0.82 * h)),
            ("right_shoulder", footprint + lateral + up * (0.82 * h)),
            ("nose", footprint + up * (0.93 * h)),
        ]
    }

    fn project_detection(joints: &[(&'static str, Point3<f64>)], rig: &CameraRig) -> Detection2D {
        let mut det = Detection2D {
            source_confidence: 1.0,
            ..Detection2D::default()
        };
        for (name, p) in joints {
            let ((u, v), _) = rig.world_to_screen(p).expect("joint in front of camera");
            det.keypoints.insert(
                name.to_string(),
                Keypoint {
                    u,
                    v,
                    confidence: 1.0,
                },
            );
        }
        det
    }

    #[test]
    fn straight_down_center_pixel_lifts_to_origin() {
        let rig = perspective_rig(Point3::new(0.0, 10.0, 0.0), -90.0);
        let p = lift_anchor(&anchor_at((960.0, 540.0)), &rig, &ground_y0(), &AnchorConfig::default())
            .unwrap();
        assert_relative_eq!(p, Point3::new(0.0, 0.0, 0.0), epsilon = 1e-9);
    }

    #[test]
    fn tilted_center_pixel_lifts_five_ahead() {
        let rig = perspective_rig(Point3::new(0.0, 5.0, 0.0), -45.0);
        let p = lift_anchor(&anchor_at((960.0, 540.0)), &rig, &ground_y0(), &AnchorConfig::default())
            .unwrap();
        assert_relative_eq!(p, Point3::new(0.0, 0.0, -5.0), epsilon = 1e-9);
    }

    #[test]
    fn above_horizon_anchor_is_no_hit() {
        let rig = perspective_rig(Point3::new(0.0, 5.0, 0.0), -45.0);
        // v = -600 aims above the horizontal; the ray never descends.
        assert!(
            lift_anchor(&anchor_at((960.0, -600.0)), &rig, &ground_y0(), &AnchorConfig::default())
                .is_none()
        );
    }

    #[test]
    fn torso_correction_recovers_footprint_on_plane() {
        // Hips exactly 1 m above (1, 0, -4); oracle is the forward projection.
        let rig = perspective_rig(Point3::new(0.0, 5.0, 0.0), -45.0);
        let hip_center = Point3::new(1.0, 1.0, -4.0);
        let ((u, v), _) = rig.world_to_screen(&hip_center).unwrap();
        let anchor = AnchorResult {
            pixel: (u, v),
            strategy_used: AnchorStrategy::TorsoGrounded,
            needs_torso_correction: true,
        };
        let cfg = AnchorConfig::default();
        let p = lift_anchor(&anchor, &rig, &ground_y0(), &cfg).unwrap();
        assert!((p - Point3::new(1.0, 0.0, -4.0)).norm() < 1e-6);
    }

    #[test]
    fn torso_correction_on_heightfield() {
        let rig = perspective_rig(Point3::new(0.0, 5.0, 0.0), -45.0);
        let field = Heightfield::new((-10.0, -10.0), 1.0, vec![vec![0.3; 21]; 21]).unwrap();
        let ground = GroundModel::Field(field);
        let hip_center = Point3::new(1.0, 1.3, -4.0);
        let ((u, v), _) = rig.world_to_screen(&hip_center).unwrap();
        let anchor = AnchorResult {
            pixel: (u, v),
            strategy_used: AnchorStrategy::TorsoGrounded,
            needs_torso_correction: true,
        };
        let p = lift_anchor(&anchor, &rig, &ground, &AnchorConfig::default()).unwrap();
        assert!((p - Point3::new(1.0, 0.3, -4.0)).norm() < 1e-3);
    }

    #[test]
    fn feet_lift_is_height_invariant_and_head_lift_is_not() {
        let rig = perspective_rig(Point3::new(0.0, 4.0, 6.0), -30.0);
        let footprint = Point3::new(1.0, 0.0, -4.0);
        let layout = SkeletonLayout::coco17();
        let ground = ground_y0();
        let mut feet_lifts = Vec::new();
        let mut head_errors = Vec::new();
        for h in [1.5, 1.6, 1.7, 1.8, 1.9] {
            let det = project_detection(&stick_joints(footprint, h, &rig), &rig);
            let feet_cfg = AnchorConfig::default();
            let a = select_anchor(&det, &layout, &feet_cfg).unwrap();
            assert_eq!(a.strategy_used, AnchorStrategy::Feet);
            feet_lifts.push(lift_anchor(&a, &rig, &ground, &feet_cfg).unwrap());

            let head_cfg = AnchorConfig {
                strategy: AnchorStrategy::Head,
                ..AnchorConfig::default()
            };
            let a = select_anchor(&det, &layout, &head_cfg).unwrap();
            let lifted = lift_anchor(&a, &rig, &ground, &head_cfg).unwrap();
            head_errors.push((lifted - footprint).norm());
        }
        for lift in &feet_lifts {
            assert!((lift - feet_lifts[0]).norm() < 1e-9);
            assert!((lift - footprint).norm() < 1e-6);
        }
        for w in head_errors.windows(2) {
            assert!(w[1] > w[0], "head error must grow with height: {head_errors:?}");
        }
    }

    #[test]
    fn placed_skeleton_height_is_distance_invariant() {
        let rig = perspective_rig(Point3::new(0.0, 5.0, 0.0), -20.0);
        let layout = SkeletonLayout::coco17();
        let cfg = AnchorConfig::default();
        let h = 1.70;
        for dist in [6.0, 18.0] {
            let footprint = Point3::new(0.0, 0.0, -dist);
            let det = project_detection(&stick_joints(footprint, h, &rig), &rig);
            let a = select_anchor(&det, &layout, &cfg).unwrap();
            let ground_point = lift_anchor(&a, &rig, &ground_y0(), &cfg).unwrap();
            let placed = place_skeleton(&det, &ground_point, &rig);
            let nose = placed["nose"];
            let ankle_y = (placed["left_ankle"].y + placed["right_ankle"].y) / 2.0;
            // The template nose sits at 0.93·h, so the nose-to-ankle span
            // recovers the agent height through that proportion.
            let estimated_height = (nose.y - ankle_y) / 0.93;
            assert!(
                (estimated_height - h).abs() / h < 0.01,
                "estimated {estimated_height} vs true {h} at {dist} m"
            );
        }
    }

    #[test]
    fn single_joint_lands_on_billboard_plane() {
        let rig = perspective_rig(Point3::new(0.0, 5.0, 0.0), -30.0);
        let mut det = Detection2D::default();
        det.keypoints.insert(
            "nose".into(),
            Keypoint {
                u: 1000.0,
                v: 400.0,
                confidence: 0.9,
            },
        );
        det.bbox = Some(BoundingBox {
            u_min: 980.0,
            v_min: 380.0,
            width: 40.0,
            height: 200.0,
        });
        let ground_point = Point3::new(0.5, 0.0, -6.0);
        let placed = place_skeleton(&det, &ground_point, &rig);
        assert_eq!(placed.len(), 1);
        let p = placed["nose"];
        let normal = billboard_normal(&rig, &ground_point);
        let residual = (p - ground_point).dot(&normal).abs();
        assert!(residual < 1e-9, "plane residual {residual}");
    }

    #[test]
    fn all_placed_joints_satisfy_plane_equation() {
        let rig = perspective_rig(Point3::new(2.0, 6.0, 8.0), -35.0);
        let footprint = Point3::new(-1.0, 0.0, -3.0);
        let det = project_detection(&stick_joints(footprint, 1.8, &rig), &rig);
        let cfg = AnchorConfig::default();
        let a = select_anchor(&det, &SkeletonLayout::coco17(), &cfg).unwrap();
        let ground_point = lift_anchor(&a, &rig, &ground_y0(), &cfg).unwrap();
        let placed = place_skeleton(&det, &ground_point, &rig);
        assert_eq!(placed.len(), 7);
        let normal = billboard_normal(&rig, &ground_point);
        for (name, p) in &placed {
            let residual = (p - ground_point).dot(&normal).abs();
            assert!(residual < 1e-9, "{name} residual {residual}");
        }
    }

    #[test]
    fn homography_straight_down_examples() {
        let rig = perspective_rig(Point3::new(0.0, 10.0, 0.0), -90.0);
        let h = homography_from_camera(&rig, &GroundPlane::y0()).unwrap();
        let (a, b) = h.apply((960.0, 540.0)).unwrap();
        assert_relative_eq!(a, 0.0, epsilon = 1e-9);
        assert_relative_eq!(b, 0.0, epsilon = 1e-9);
        // Similar triangles: 10 m · (100 px / 1000 px) = 1 m.
        let (a, b) = h.apply((1060.0, 540.0)).unwrap();
        assert_relative_eq!(a, 1.0, epsilon = 1e-9);
        assert_relative_eq!(b, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn homography_matches_ray_lift_on_random_pixels() {
        // Mutual cross-validation: two independent derivations of the same map.
        let rig = perspective_rig(Point3::new(1.0, 6.0, 3.0), -40.0);
        let plane = GroundPlane::y0();
        let h = homography_from_camera(&rig, &plane).unwrap();
        let mut rng = StdRng::seed_from_u64(23);
        let mut checked = 0;
        for _ in 0..500 {
            let pixel = (rng.random_range(0.0..1920.0), rng.random_range(0.0..1080.0));
            let ray = rig.screen_to_ray(pixel);
            if let Some(ray_hit) = intersect_plane(&ray, &plane) {
                let homog_hit = lift_via_homography(&h, pixel).unwrap();
                assert!(
                    (ray_hit - homog_hit).norm() < 1e-6,
                    "mismatch {} at {:?}",
                    (ray_hit - homog_hit).norm(),
                    pixel
                );
                checked += 1;
            }
        }
        assert!(checked > 200, "want most pixels below horizon, got {checked}");
    }

    #[test]
    fn homography_rejects_degenerate_rigs() {
        let on_plane = CameraRig::new_forced(
            CameraIntrinsics::perspective(1920, 1080, 1000.0).unwrap(),
            CameraPose::from_euler_deg(Point3::new(0.0, 0.0, 0.0), 0.0, -45.0, 0.0).unwrap(),
        );
        assert!(matches!(
            homography_from_camera(&on_plane, &GroundPlane::y0()),
            Err(LiftError::CameraOnPlane(_))
        ));
        let ortho = CameraRig::new(
            CameraIntrinsics::orthographic(1920, 1080, 0.02).unwrap(),
            CameraPose::from_euler_deg(Point3::new(0.0, 10.0, 0.0), 0.0, -90.0, 0.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            homography_from_camera(&ortho, &GroundPlane::y0()),
            Err(LiftError::OrthographicRig)
        ));
    }

    #[test]
    fn horizon_pixel_is_at_infinity() {
        let rig = perspective_rig(Point3::new(0.0, 5.0, 0.0), -45.0);
        let h = homography_from_camera(&rig, &GroundPlane::y0()).unwrap();
        // (v0 - v)/f = 1 tilts the pixel ray up by exactly 45°: horizontal.
        assert!(h.apply((960.0, -460.0)).is_none());
        assert!(lift_via_homography(&h, (960.0, -460.0)).is_none());
    }

    #[test]
    fn fit_identity_from_unit_square() {
        let pairs = [
            ((0.0, 0.0), (0.0, 0.0)),
            ((1.0, 0.0), (1.0, 0.0)),
            ((1.0, 1.0), (1.0, 1.0)),
            ((0.0, 1.0), (0.0, 1.0)),
        ];
        let (h, report) = fit_ground_homography(&pairs, PlaneFrame::y0()).unwrap();
        assert!(report.max_residual < 1e-9);
        let identity = Matrix3::identity();
        assert!((h.h - identity).norm() < 1e-9, "H = {}", h.h);
    }

    #[test]
    fn fit_recovers_known_homography_exactly() {
        let rig = perspective_rig(Point3::new(-2.0, 7.0, 5.0), -35.0);
        let truth = homography_from_camera(&rig, &GroundPlane::y0()).unwrap();
        let pixels = [
            (200.0, 900.0),
            (1700.0, 950.0),
            (960.0, 700.0),
            (400.0, 600.0),
            (1500.0, 620.0),
            (800.0, 1000.0),
            (1100.0, 820.0),
            (600.0, 760.0),
        ];
        let pairs: Vec<_> = pixels
            .iter()
            .map(|&p| (p, truth.apply(p).unwrap()))
            .collect();
        let (fit, report) = fit_ground_homography(&pairs, PlaneFrame::y0()).unwrap();
        assert!(report.max_residual < 1e-9, "residual {}", report.max_residual);
        for &p in &pixels {
            let (a0, b0) = truth.apply(p).unwrap();
            let (a1, b1) = fit.apply(p).unwrap();
            assert!(((a0 - a1).powi(2) + (b0 - b1).powi(2)).sqrt() < 1e-9);
        }
    }

    #[test]
    fn fit_from_noisy_pairs_stays_within_3cm_at_10m() {
        // Oracle: the generating rig's own noise-free lifts.
        let rig = perspective_rig(Point3::new(0.0, 6.0, 10.0), -30.0);
        let truth = homography_from_camera(&rig, &GroundPlane::y0()).unwrap();
        let mut rng = StdRng::seed_from_u64(41);
        let mut pairs = Vec::new();
        for i in 0..3 {
            for j in 0..4 {
                let p = (300.0 + 450.0 * j as f64, 500.0 + 220.0 * i as f64);
                let q = truth.apply(p).unwrap();
                let noisy = (
                    p.0 + rng.random_range(-0.5..0.5),
                    p.1 + rng.random_range(-0.5..0.5),
                );
                pairs.push((noisy, q));
            }
        }
        let (fit, _) = fit_ground_homography(&pairs, PlaneFrame::y0()).unwrap();
        let mut checked = 0;
        for _ in 0..200 {
            let p = (rng.random_range(300.0..1650.0), rng.random_range(500.0..1000.0));
            let exact = lift_via_homography(&truth, p).unwrap();
            let range = (exact - rig.pose.position).norm();
            if range > 11.5 {
                continue;
            }
            let fitted = lift_via_homography(&fit, p).unwrap();
            assert!(
                (exact - fitted).norm() < 0.03,
                "drift {} at range {}",
                (exact - fitted).norm(),
                range
            );
            checked += 1;
        }
        assert!(checked > 50);
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        assert!(matches!(
            fit_ground_homography(&[((0.0, 0.0), (0.0, 0.0)); 3], PlaneFrame::y0()),
            Err(LiftError::TooFewPairs(3))
        ));
        // All pixels on one line: rank-deficient.
        let collinear = [
            ((0.0, 0.0), (0.0, 0.0)),
            ((1.0, 1.0), (1.0, 0.0)),
            ((2.0, 2.0), (2.0, 0.0)),
            ((3.0, 3.0), (3.0, 1.0)),
        ];
        assert!(fit_ground_homography(&collinear, PlaneFrame::y0()).is_err());
    }

    #[test]
    fn plane_frame_round_trips_points() {
        let plane =
            GroundPlane::new(Point3::new(0.5, 1.0, -2.0), Vector3::new(0.2, 1.0, 0.1)).unwrap();
        let frame = PlaneFrame::for_plane(&plane);
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..100 {
            let (a, b) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let w = frame.to_world(a, b);
            let (a2, b2) = frame.to_plane(&w);
            assert_relative_eq!(a, a2, epsilon = 1e-9);
            assert_relative_eq!(b, b2, epsilon = 1e-9);
            assert!((w - plane.anchor).dot(&plane.normal).abs() < 1e-9);
        }
        // y = 0 frame: plane coords equal world (x, z).
        let f0 = PlaneFrame::y0();
        let p = f0.to_world(3.0, -4.0);
        assert_relative_eq!(p, Point3::new(3.0, 0.0, -4.0), epsilon = 1e-12);
    }
}
