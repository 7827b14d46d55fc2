//! Training-side math: box labels, regression targets, losses and their
//! gradients, and turning regression outputs back into poses.

use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSet;
use crate::error::{PoseError, Result};
use crate::pose::{
    box_around, denormalize_from_box, iou, normalize_to_box, AnchorPose, BodyExtent, BoundingBox,
    Pose2D, Pose3D, DEFAULT_BOX_MARGIN,
};

/// Boxes overlapping every ground truth less than this are background.
pub const DEFAULT_LABEL_IOU: f64 = 0.5;

/// Probabilities at or below this are clamped before taking the log.
pub const LOG_EPSILON: f64 = 1e-12;

/// Width of one class slice of the regression output: 2D and 3D per joint.
pub fn residual_len(joint_count: usize) -> usize {
    5 * joint_count
}

/// A candidate box with its ground-truth class (0 = background) and, for
/// foreground boxes, the regression target for that class.
///
/// The target holds the unit-box 2D residual `(x0, y0, x1, y1, ..)`
/// followed by the 3D residual in meters `(X0, Y0, Z0, ..)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub bbox: BoundingBox,
    pub class_label: usize,
    pub target: Option<Vec<f64>>,
}

impl LabeledBox {
    pub fn background(bbox: BoundingBox) -> Self {
        LabeledBox {
            bbox,
            class_label: 0,
            target: None,
        }
    }

    /// Anchor id for a foreground label; classes are anchor id + 1.
    pub fn anchor_id(&self) -> Option<usize> {
        self.class_label.checked_sub(1)
    }
}

/// Class id of an anchor in the classifier output.
pub fn class_of_anchor(anchor_id: usize) -> usize {
    anchor_id + 1
}

/// Regression target `(p̃ - ã, P - A)` of a ground truth for one anchor and box.
pub fn regression_target(
    gt2d: &Pose2D,
    gt3d: &Pose3D,
    anchor: &AnchorPose,
    bbox: &BoundingBox,
) -> Result<Vec<f64>> {
    let j = anchor.pose3d.joint_count();
    for got in [gt2d.joint_count(), gt3d.joint_count(), anchor.pose2d.joint_count()] {
        if got != j {
            return Err(PoseError::JointCountMismatch { expected: j, got });
        }
    }
    let norm = normalize_to_box(gt2d, bbox);
    let mut t = Vec::with_capacity(residual_len(j));
    for (p, a) in norm.coords.iter().zip(&anchor.pose2d.coords) {
        t.push(p[0] - a[0]);
        t.push(p[1] - a[1]);
    }
    for (p, a) in gt3d.coords.iter().zip(&anchor.pose3d.coords) {
        t.extend((0..3).map(|d| p[d] - a[d]));
    }
    Ok(t)
}

/// Labels `bbox` against the ground-truth poses.
///
/// The ground truth with the highest IoU (first one on ties) decides the
/// label; below `iou_threshold` the box is background. Otherwise the class
/// is the nearest anchor in 3D, lowest id on ties. Ground-truth 3D poses are
/// expected to be torso-centered.
pub fn assign_label(
    bbox: &BoundingBox,
    gts: &[(Pose2D, Pose3D)],
    anchors: &AnchorSet,
    iou_threshold: f64,
) -> Result<LabeledBox> {
    assign_label_among(bbox, gts, anchors, iou_threshold, None)
}

/// Like [`assign_label`] but only considers anchors of one body extent.
pub fn assign_label_among(
    bbox: &BoundingBox,
    gts: &[(Pose2D, Pose3D)],
    anchors: &AnchorSet,
    iou_threshold: f64,
    extent: Option<BodyExtent>,
) -> Result<LabeledBox> {
    if anchors.is_empty() {
        return Err(PoseError::EmptyInput("anchor set"));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, (p2, _)) in gts.iter().enumerate() {
        let gt_box = box_around(p2, DEFAULT_BOX_MARGIN)?;
        let o = iou(bbox, &gt_box);
        if best.is_none_or(|(_, bo)| o > bo) {
            best = Some((i, o));
        }
    }
    let Some((gi, overlap)) = best else {
        return Ok(LabeledBox::background(*bbox));
    };
    if overlap < iou_threshold {
        return Ok(LabeledBox::background(*bbox));
    }
    let (gt2d, gt3d) = &gts[gi];
    let anchor_id = anchors.nearest(gt3d, extent)?;
    let target = regression_target(gt2d, gt3d, &anchors.anchors[anchor_id], bbox)?;
    Ok(LabeledBox {
        bbox: *bbox,
        class_label: class_of_anchor(anchor_id),
        target: Some(target),
    })
}

/// Places an anchor in a box and adds a regression residual.
pub fn apply_regression(
    anchor: &AnchorPose,
    bbox: &BoundingBox,
    residual: &[f64],
) -> Result<(Pose2D, Pose3D)> {
    let j = anchor.pose3d.joint_count();
    if residual.len() != residual_len(j) {
        return Err(PoseError::DimensionMismatch {
            what: "regression residual",
            expected: residual_len(j),
            got: residual.len(),
        });
    }
    let (r2, r3) = residual.split_at(2 * j);
    let unit = Pose2D::new(
        anchor
            .pose2d
            .coords
            .iter()
            .zip(r2.chunks_exact(2))
            .map(|(a, r)| [a[0] + r[0], a[1] + r[1]])
            .collect(),
    );
    let pose2d = denormalize_from_box(&unit, bbox);
    let pose3d = Pose3D::new(
        anchor
            .pose3d
            .coords
            .iter()
            .zip(r3.chunks_exact(3))
            .map(|(a, r)| [a[0] + r[0], a[1] + r[1], a[2] + r[2]])
            .collect(),
    );
    Ok((pose2d, pose3d))
}

/// Probability distribution over background plus one class per anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub u: Vec<f64>,
}

impl ClassScores {
    /// Numerically stable softmax.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        ClassScores {
            u: exps.into_iter().map(|e| e / sum).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.u.iter().enumerate() {
            if p > self.u[best] {
                best = i;
            }
        }
        best
    }
}

/// Log loss of the true class and its gradient with respect to the logits
/// that produced `scores` through a softmax.
pub fn classification_loss(scores: &ClassScores, class_label: usize) -> Result<(f64, Vec<f64>)> {
    if class_label >= scores.len() {
        return Err(PoseError::DimensionMismatch {
            what: "class label",
            expected: scores.len(),
            got: class_label,
        });
    }
    let loss = -scores.u[class_label].max(LOG_EPSILON).ln();
    let mut grad = scores.u.clone();
    grad[class_label] -= 1.0;
    Ok((loss, grad))
}

/// Smooth-L1: quadratic below 1, linear above.
pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

pub fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

/// Smooth-L1 applied per coordinate and summed.
pub fn smooth_l1_sum(xs: &[f64]) -> f64 {
    xs.iter().map(|&x| smooth_l1(x)).sum()
}

/// Flat regression output: one slice of `5 * J` values per class,
/// background included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionOutput {
    pub v: Vec<f64>,
}

impl RegressionOutput {
    pub fn class_slice(&self, class: usize, joint_count: usize) -> &[f64] {
        let w = residual_len(joint_count);
        &self.v[class * w..(class + 1) * w]
    }
}

/// Smooth-L1 distance between the label's target and the regression slice
/// of the label's class. Background boxes cost nothing.
pub fn regression_loss(
    output: &RegressionOutput,
    label: &LabeledBox,
    joint_count: usize,
) -> Result<(f64, Vec<f64>)> {
    let w = residual_len(joint_count);
    if output.v.is_empty() || output.v.len() % w != 0 {
        return Err(PoseError::DimensionMismatch {
            what: "regression output",
            expected: w,
            got: output.v.len(),
        });
    }
    let classes = output.v.len() / w;
    let mut grad = vec![0.0; output.v.len()];
    if label.class_label == 0 {
        return Ok((0.0, grad));
    }
    if label.class_label >= classes {
        return Err(PoseError::DimensionMismatch {
            what: "class label",
            expected: classes,
            got: label.class_label,
        });
    }
    let target = label
        .target
        .as_ref()
        .ok_or_else(|| PoseError::Malformed("foreground label without target".into()))?;
    if target.len() != w {
        return Err(PoseError::DimensionMismatch {
            what: "regression target",
            expected: w,
            got: target.len(),
        });
    }
    let offset = label.class_label * w;
    let slice = output.class_slice(label.class_label, joint_count);
    let mut loss = 0.0;
    for (i, (&t, &v)) in target.iter().zip(slice).enumerate() {
        let r = t - v;
        loss += smooth_l1(r);
        grad[offset + i] = -smooth_l1_grad(r);
    }
    Ok((loss, grad))
}

/// The three loss terms. Localization comes from the region proposal stage,
/// which is external here, so it is usually zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub localization: f64,
    pub classification: f64,
    pub regression: f64,
}

pub fn total_loss(terms: &LossTerms) -> f64 {
    terms.localization + terms.classification + terms.regression
}
