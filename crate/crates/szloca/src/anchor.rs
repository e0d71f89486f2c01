//! Anchor selection: the screen point a detection is lifted through.
//!
//! A 2D detection covers many pixels; exactly one of them gets a ray. The
//! four strategies trade robustness against metric fidelity, and a fallback
//! chain keeps detections usable when joints are missing or low-confidence.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnchorError {
    #[error("unknown anchor strategy {0:?} (expected head, feet, torso, or bbox)")]
    UnknownStrategy(String),
    #[error("fallback chain must be non-empty")]
    EmptyFallbackChain,
    #[error("fallback chain contains duplicate strategy {0}")]
    DuplicateFallback(AnchorStrategy),
    #[error("min_joint_confidence must lie in [0,1], got {0}")]
    BadConfidence(f64),
    #[error("torso_height_m must be positive, got {0}")]
    BadTorsoHeight(f64),
}

/// Names of the joints the anchor strategies read.
///
/// The default is the common 17-joint human layout; custom layouts only need
/// to say which joints play the head, feet, and torso roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonLayout {
    pub joint_names: Vec<String>,
    pub head: Vec<String>,
    pub feet: Vec<String>,
    pub torso: Vec<String>,
}

impl SkeletonLayout {
    /// Standard 17-joint human body layout.
    pub fn coco17() -> Self {
        let joint_names = [
            "nose",
            "left_eye",
            "right_eye",
            "left_ear",
            "right_ear",
            "left_shoulder",
            "right_shoulder",
            "left_elbow",
            "right_elbow",
            "left_wrist",
            "right_wrist",
            "left_hip",
            "right_hip",
            "left_knee",
            "right_knee",
            "left_ankle",
            "right_ankle",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        Self {
            joint_names,
            head: vec!["nose".into()],
            feet: vec!["left_ankle".into(), "right_ankle".into()],
            torso: vec!["left_hip".into(), "right_hip".into()],
        }
    }

    fn role_joints(&self, strategy: AnchorStrategy) -> &[String] {
        match strategy {
            AnchorStrategy::Head => &self.head,
            AnchorStrategy::Feet => &self.feet,
            AnchorStrategy::TorsoGrounded => &self.torso,
            AnchorStrategy::BboxBottomCenter => &[],
        }
    }
}

impl Default for SkeletonLayout {
    fn default() -> Self {
        Self::coco17()
    }
}

/// One detected joint. Absence from the keypoint map means not present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub u: f64,
    pub v: f64,
    pub confidence: f64,
}

/// Axis-aligned pixel box as (top-left corner, extent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub u_min: f64,
    pub v_min: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn bottom_center(&self) -> (f64, f64) {
        (self.u_min + self.width / 2.0, self.v_min + self.height)
    }
}

/// A single per-frame 2D detection: named keypoints and/or a bounding box.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Detection2D {
    pub keypoints: BTreeMap<String, Keypoint>,
    pub bbox: Option<BoundingBox>,
    pub source_confidence: f64,
}

impl Detection2D {
    pub fn joint(&self, name: &str) -> Option<&Keypoint> {
        self.keypoints.get(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorStrategy {
    #[serde(rename = "head")]
    Head,
    #[serde(rename = "feet")]
    Feet,
    #[serde(rename = "torso")]
    TorsoGrounded,
    #[serde(rename = "bbox")]
    BboxBottomCenter,
}

impl AnchorStrategy {
    pub fn name(self) -> &'static str {
        match self {
            AnchorStrategy::Head => "head",
            AnchorStrategy::Feet => "feet",
            AnchorStrategy::TorsoGrounded => "torso",
            AnchorStrategy::BboxBottomCenter => "bbox",
        }
    }
}

impl fmt::Display for AnchorStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnchorStrategy {
    type Err = AnchorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "head" => Ok(AnchorStrategy::Head),
            "feet" => Ok(AnchorStrategy::Feet),
            "torso" => Ok(AnchorStrategy::TorsoGrounded),
            "bbox" => Ok(AnchorStrategy::BboxBottomCenter),
            other => Err(AnchorError::UnknownStrategy(other.to_string())),
        }
    }
}

/// Strategy choice plus the knobs shared between selection and lifting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnchorConfig {
    pub strategy: AnchorStrategy,
    pub min_joint_confidence: f64,
    pub fallback_chain: Vec<AnchorStrategy>,
    /// Nominal hip height used by the torso ground correction.
    pub torso_height_m: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            strategy: AnchorStrategy::Feet,
            min_joint_confidence: 0.3,
            fallback_chain: vec![
                AnchorStrategy::Feet,
                AnchorStrategy::BboxBottomCenter,
                AnchorStrategy::TorsoGrounded,
                AnchorStrategy::Head,
            ],
            torso_height_m: 1.0,
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<(), AnchorError> {
        if self.fallback_chain.is_empty() {
            return Err(AnchorError::EmptyFallbackChain);
        }
        for (i, s) in self.fallback_chain.iter().enumerate() {
            if self.fallback_chain[..i].contains(s) {
                return Err(AnchorError::DuplicateFallback(*s));
            }
        }
        if !(0.0..=1.0).contains(&self.min_joint_confidence) {
            return Err(AnchorError::BadConfidence(self.min_joint_confidence));
        }
        if !(self.torso_height_m > 0.0) {
            return Err(AnchorError::BadTorsoHeight(self.torso_height_m));
        }
        Ok(())
    }
}

/// The chosen anchor pixel and how it was chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorResult {
    pub pixel: (f64, f64),
    pub strategy_used: AnchorStrategy,
    /// True when the pixel is mid-body and lifting must drop it to the ground.
    pub needs_torso_correction: bool,
}

/// Picks the anchor pixel for a detection, walking the fallback chain when
/// the requested strategy's joints are missing or below the confidence
/// threshold. `None` means no strategy was usable and the detection should
/// be skipped.
pub fn select_anchor(
    det: &Detection2D,
    layout: &SkeletonLayout,
    cfg: &AnchorConfig,
) -> Option<AnchorResult> {
    let mut tried = Vec::with_capacity(1 + cfg.fallback_chain.len());
    tried.push(cfg.strategy);
    for s in &cfg.fallback_chain {
        if !tried.contains(s) {
            tried.push(*s);
        }
    }
    for strategy in tried {
        if let Some(pixel) = apply_strategy(det, layout, cfg, strategy) {
            return Some(AnchorResult {
                pixel,
                strategy_used: strategy,
                needs_torso_correction: strategy == AnchorStrategy::TorsoGrounded,
            });
        }
    }
    None
}

fn apply_strategy(
    det: &Detection2D,
    layout: &SkeletonLayout,
    cfg: &AnchorConfig,
    strategy: AnchorStrategy,
) -> Option<(f64, f64)> {
    if strategy == AnchorStrategy::BboxBottomCenter {
        return det.bbox.map(|b| b.bottom_center());
    }
    let joints = layout.role_joints(strategy);
    let mut sum = (0.0, 0.0);
    let mut n = 0usize;
    for name in joints {
        if let Some(kp) = det.joint(name) {
            if kp.confidence >= cfg.min_joint_confidence {
                sum.0 += kp.u;
                sum.1 += kp.v;
                n += 1;
            }
        }
    }
    (n > 0).then(|| (sum.0 / n as f64, sum.1 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(u: f64, v: f64, confidence: f64) -> Keypoint {
        Keypoint { u, v, confidence }
    }

    fn det_with(joints: &[(&str, Keypoint)]) -> Detection2D {
        Detection2D {
            keypoints: joints.iter().map(|(n, k)| (n.to_string(), *k)).collect(),
            bbox: None,
            source_confidence: 1.0,
        }
    }

    #[test]
    fn feet_is_mean_of_ankles() {
        let det = det_with(&[
            ("left_ankle", kp(100.0, 500.0, 0.9)),
            ("right_ankle", kp(120.0, 500.0, 0.9)),
        ]);
        let cfg = AnchorConfig::default();
        let r = select_anchor(&det, &SkeletonLayout::coco17(), &cfg).unwrap();
        assert_eq!(r.pixel, (110.0, 500.0));
        assert_eq!(r.strategy_used, AnchorStrategy::Feet);
        assert!(!r.needs_torso_correction);
    }

    #[test]
    fn one_ankle_suffices() {
        let det = det_with(&[("right_ankle", kp(120.0, 500.0, 0.9))]);
        let r = select_anchor(&det, &SkeletonLayout::coco17(), &AnchorConfig::default()).unwrap();
        assert_eq!(r.pixel, (120.0, 500.0));
        assert_eq!(r.strategy_used, AnchorStrategy::Feet);
    }

    #[test]
    fn low_confidence_ankles_fall_back_to_bbox() {
        let mut det = det_with(&[
            ("left_ankle", kp(100.0, 500.0, 0.0)),
            ("right_ankle", kp(120.0, 500.0, 0.0)),
        ]);
        det.bbox = Some(BoundingBox {
            u_min: 90.0,
            v_min: 200.0,
            width: 40.0,
            height: 310.0,
        });
        let r = select_anchor(&det, &SkeletonLayout::coco17(), &AnchorConfig::default()).unwrap();
        assert_eq!(r.pixel, (110.0, 510.0));
        assert_eq!(r.strategy_used, AnchorStrategy::BboxBottomCenter);
    }

    #[test]
    fn torso_is_mean_of_hips_and_flags_correction() {
        let det = det_with(&[
            ("left_hip", kp(108.0, 300.0, 0.8)),
            ("right_hip", kp(112.0, 304.0, 0.8)),
        ]);
        let cfg = AnchorConfig {
            strategy: AnchorStrategy::TorsoGrounded,
            ..AnchorConfig::default()
        };
        let r = select_anchor(&det, &SkeletonLayout::coco17(), &cfg).unwrap();
        assert_eq!(r.pixel, (110.0, 302.0));
        assert_eq!(r.strategy_used, AnchorStrategy::TorsoGrounded);
        assert!(r.needs_torso_correction);
    }

    #[test]
    fn requested_strategy_wins_when_usable() {
        let mut det = det_with(&[
            ("nose", kp(110.0, 100.0, 0.95)),
            ("left_ankle", kp(100.0, 500.0, 0.9)),
        ]);
        det.bbox = Some(BoundingBox {
            u_min: 90.0,
            v_min: 90.0,
            width: 40.0,
            height: 420.0,
        });
        for (strategy, expect) in [
            (AnchorStrategy::Head, (110.0, 100.0)),
            (AnchorStrategy::Feet, (100.0, 500.0)),
            (AnchorStrategy::BboxBottomCenter, (110.0, 510.0)),
        ] {
            let cfg = AnchorConfig {
                strategy,
                ..AnchorConfig::default()
            };
            let r = select_anchor(&det, &SkeletonLayout::coco17(), &cfg).unwrap();
            assert_eq!(r.strategy_used, strategy);
            assert_eq!(r.pixel, expect);
        }
    }

    #[test]
    fn exhausted_chain_yields_none() {
        let det = det_with(&[("left_wrist", kp(10.0, 10.0, 0.9))]);
        assert!(select_anchor(&det, &SkeletonLayout::coco17(), &AnchorConfig::default()).is_none());
    }

    #[test]
    fn selection_ignores_joint_insertion_order() {
        // BTreeMap already canonicalises order; build from both directions
        // and check the outputs are identical.
        let a = det_with(&[
            ("left_ankle", kp(100.0, 500.0, 0.9)),
            ("right_ankle", kp(120.0, 502.0, 0.9)),
        ]);
        let b = det_with(&[
            ("right_ankle", kp(120.0, 502.0, 0.9)),
            ("left_ankle", kp(100.0, 500.0, 0.9)),
        ]);
        let cfg = AnchorConfig::default();
        let layout = SkeletonLayout::coco17();
        assert_eq!(
            select_anchor(&a, &layout, &cfg).unwrap().pixel,
            select_anchor(&b, &layout, &cfg).unwrap().pixel
        );
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [
            AnchorStrategy::Head,
            AnchorStrategy::Feet,
            AnchorStrategy::TorsoGrounded,
            AnchorStrategy::BboxBottomCenter,
        ] {
            assert_eq!(s.name().parse::<AnchorStrategy>().unwrap(), s);
        }
        assert!("waist".parse::<AnchorStrategy>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AnchorConfig::default().validate().is_ok());
        let empty = AnchorConfig {
            fallback_chain: vec![],
            ..AnchorConfig::default()
        };
        assert!(empty.validate().is_err());
        let dup = AnchorConfig {
            fallback_chain: vec![AnchorStrategy::Feet, AnchorStrategy::Feet],
            ..AnchorConfig::default()
        };
        assert!(dup.validate().is_err());
        let bad_conf = AnchorConfig {
            min_joint_confidence: 1.5,
            ..AnchorConfig::default()
        };
        assert!(bad_conf.validate().is_err());
    }
}
