//! Camera projection and least-squares scene placement.

use serde::{Deserialize, Serialize};

use crate::error::{PoseError, Result};
use crate::pose::{Pose2D, Pose3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraModel {
    /// Fixed pixels-per-meter for every person.
    Orthographic,
    /// Per-person scale `focal / depth`.
    WeakPerspective,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub model: CameraModel,
    /// Pixels per meter (orthographic) or focal length in pixels.
    pub focal_px: f64,
    pub width: f64,
    pub height: f64,
}

impl Camera {
    /// Image-plane scale for a person at `depth` meters.
    pub fn scale_at(&self, depth: f64) -> f64 {
        match self.model {
            CameraModel::Orthographic => self.focal_px,
            CameraModel::WeakPerspective => self.focal_px / depth,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= 0.0 && p[0] <= self.width && p[1] >= 0.0 && p[1] <= self.height
    }
}

/// Image-plane similarity applied to a torso-centered pose:
/// `p = scale * Rz(roll) * (X, Y) + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub scale: f64,
    pub roll: f64,
    pub offset: [f64; 2],
}

impl Placement {
    pub fn apply(&self, p: [f64; 3]) -> [f64; 2] {
        let (s, c) = self.roll.sin_cos();
        [
            self.scale * (c * p[0] - s * p[1]) + self.offset[0],
            self.scale * (s * p[0] + c * p[1]) + self.offset[1],
        ]
    }
}

/// Projects a placed pose; joints outside the image are marked not visible
/// but keep their coordinates.
pub fn project(pose: &Pose3D, placement: &Placement, camera: &Camera) -> Pose2D {
    let coords: Vec<[f64; 2]> = pose.coords.iter().map(|&p| placement.apply(p)).collect();
    let visible = coords.iter().map(|&c| camera.contains(c)).collect();
    Pose2D { coords, visible }
}

/// Root-mean-square reprojection error over the visible joints.
pub fn reprojection_rms(pose2d: &Pose2D, pose3d: &Pose3D, placement: &Placement) -> f64 {
    let mut sum = 0.0;
    let mut n = 0;
    for (j, &p) in pose3d.coords.iter().enumerate() {
        if !pose2d.visible[j] {
            continue;
        }
        let q = placement.apply(p);
        let o = pose2d.coords[j];
        sum += (q[0] - o[0]).powi(2) + (q[1] - o[1]).powi(2);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedPlacement {
    pub placement: Placement,
    /// RMS reprojection error in pixels.
    pub residual: f64,
}

/// Least-squares placement of a 3D pose so its projection matches the
/// visible joints of a 2D pose.
///
/// Orthographic fits scale and offset (2+ joints); weak perspective also
/// fits an in-plane roll (3+ joints).
pub fn fit_placement(pose2d: &Pose2D, pose3d: &Pose3D, model: CameraModel) -> Result<FittedPlacement> {
    if pose2d.joint_count() != pose3d.joint_count() {
        return Err(PoseError::JointCountMismatch {
            expected: pose3d.joint_count(),
            got: pose2d.joint_count(),
        });
    }
    let idx: Vec<usize> = (0..pose2d.joint_count()).filter(|&j| pose2d.visible[j]).collect();
    let needed = match model {
        CameraModel::Orthographic => 2,
        CameraModel::WeakPerspective => 3,
    };
    if idx.len() < needed {
        return Err(PoseError::NotEnoughVisibleJoints { needed, have: idx.len() });
    }
    let n = idx.len() as f64;
    let mut src_mean = [0.0; 2];
    let mut dst_mean = [0.0; 2];
    for &j in &idx {
        for d in 0..2 {
            src_mean[d] += pose3d.coords[j][d] / n;
            dst_mean[d] += pose2d.coords[j][d] / n;
        }
    }
    let (mut dot, mut cross, mut var) = (0.0, 0.0, 0.0);
    for &j in &idx {
        let a = [pose3d.coords[j][0] - src_mean[0], pose3d.coords[j][1] - src_mean[1]];
        let b = [pose2d.coords[j][0] - dst_mean[0], pose2d.coords[j][1] - dst_mean[1]];
        dot += a[0] * b[0] + a[1] * b[1];
        cross += a[0] * b[1] - a[1] * b[0];
        var += a[0] * a[0] + a[1] * a[1];
    }
    let spread = idx
        .iter()
        .map(|&j| pose3d.coords[j][0].abs().max(pose3d.coords[j][1].abs()))
        .fold(0.0, f64::max);
    if !(var > 1e-18 * (1.0 + spread * spread)) {
        return Err(PoseError::Degenerate("visible joints project to a single point".into()));
    }
    let (scale, roll) = match model {
        CameraModel::Orthographic => (dot / var, 0.0),
        CameraModel::WeakPerspective => (dot.hypot(cross) / var, cross.atan2(dot)),
    };
    let (s, c) = roll.sin_cos();
    let rotated_mean = [c * src_mean[0] - s * src_mean[1], s * src_mean[0] + c * src_mean[1]];
    let placement = Placement {
        scale,
        roll,
        offset: [
            dst_mean[0] - scale * rotated_mean[0],
            dst_mean[1] - scale * rotated_mean[1],
        ],
    };
    Ok(FittedPlacement {
        placement,
        residual: reprojection_rms(pose2d, pose3d, &placement),
    })
}
