//! Pose, box and distance primitives.
//!
//! 2D poses are in pixels with the image y axis pointing down. 3D poses are
//! in meters in a camera-aligned frame (x right, y down, z away from the
//! camera) and centered on the torso, so dropping z gives the orthographic
//! image of the pose.

use serde::{Deserialize, Serialize};

use crate::error::{PoseError, Result};

/// Default margin added around the joints of a pose when building its box.
pub const DEFAULT_BOX_MARGIN: f64 = 0.10;

/// Neck and head joints used to extrapolate the top of the head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSegment {
    /// Joints averaged to obtain the neck point.
    pub neck: Vec<usize>,
    pub head: usize,
}

/// Joint-count convention shared by every pose in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub name: String,
    pub joint_names: Vec<String>,
    /// Joints whose mean defines the torso center.
    pub torso_anchor_joints: Vec<usize>,
    pub head: HeadSegment,
    /// Parent of each joint; `None` marks the root.
    pub parents: Vec<Option<usize>>,
    /// Hips, knees and ankles. Empty when the spec has no upper/lower split.
    pub lower_body_joints: Vec<usize>,
    /// Head and torso joints, optionally used for grouping boxes.
    pub head_torso_joints: Vec<usize>,
}

impl PoseSpec {
    /// 13-joint layout: ankles, knees, hips, wrists, elbows, shoulders, head.
    pub fn h13() -> Self {
        let names = [
            "r_ankle", "l_ankle", "r_knee", "l_knee", "r_hip", "l_hip", "r_wrist", "l_wrist",
            "r_elbow", "l_elbow", "r_shoulder", "l_shoulder", "head",
        ];
        let parents = vec![
            Some(2),
            Some(3),
            Some(4),
            Some(5),
            Some(10),
            Some(11),
            Some(8),
            Some(9),
            Some(10),
            Some(11),
            Some(12),
            Some(12),
            None,
        ];
        PoseSpec {
            name: "h13".into(),
            joint_names: names.iter().map(|s| s.to_string()).collect(),
            torso_anchor_joints: vec![4, 5, 10, 11],
            head: HeadSegment {
                neck: vec![10, 11],
                head: 12,
            },
            parents,
            lower_body_joints: vec![0, 1, 2, 3, 4, 5],
            head_torso_joints: vec![4, 5, 10, 11, 12],
        }
    }

    /// 17-joint layout adding pelvis, spine, thorax and neck.
    pub fn h17() -> Self {
        let names = [
            "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "spine",
            "thorax", "neck", "head", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder",
            "r_elbow", "r_wrist",
        ];
        let parents = vec![
            None,
            Some(0),
            Some(1),
            Some(2),
            Some(0),
            Some(4),
            Some(5),
            Some(0),
            Some(7),
            Some(8),
            Some(9),
            Some(8),
            Some(11),
            Some(12),
            Some(8),
            Some(14),
            Some(15),
        ];
        PoseSpec {
            name: "h17".into(),
            joint_names: names.iter().map(|s| s.to_string()).collect(),
            torso_anchor_joints: vec![1, 4, 11, 14],
            head: HeadSegment {
                neck: vec![9],
                head: 10,
            },
            parents,
            lower_body_joints: vec![1, 2, 3, 4, 5, 6],
            head_torso_joints: vec![1, 4, 11, 14, 9, 10],
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "h13" => Ok(Self::h13()),
            "h17" => Ok(Self::h17()),
            other => Err(PoseError::InvalidSpec(format!("unknown pose spec `{other}`"))),
        }
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn root(&self) -> Option<usize> {
        self.parents.iter().position(Option::is_none)
    }

    /// Returns `true` for joints outside the lower-body partition.
    pub fn is_upper_body(&self, joint: usize) -> bool {
        !self.lower_body_joints.contains(&joint)
    }

    /// Joint indices ordered so that every parent precedes its children.
    pub fn topological_order(&self) -> Vec<usize> {
        let j = self.joint_count();
        let mut order = Vec::with_capacity(j);
        let mut placed = vec![false; j];
        if let Some(root) = self.root() {
            order.push(root);
            placed[root] = true;
        }
        while order.len() < j {
            let before = order.len();
            for idx in 0..j {
                if placed[idx] {
                    continue;
                }
                if let Some(p) = self.parents[idx] {
                    if placed[p] {
                        order.push(idx);
                        placed[idx] = true;
                    }
                }
            }
            if order.len() == before {
                break;
            }
        }
        order
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.joint_count();
        let bad = |msg: String| Err(PoseError::InvalidSpec(msg));
        if j < 2 {
            return bad(format!("need at least 2 joints, got {j}"));
        }
        if self.parents.len() != j {
            return bad(format!("{} parents for {j} joints", self.parents.len()));
        }
        let roots = self.parents.iter().filter(|p| p.is_none()).count();
        if roots != 1 {
            return bad(format!("kinematic tree must have one root, found {roots}"));
        }
        if self.parents.iter().flatten().any(|&p| p >= j) {
            return bad("parent index out of range".into());
        }
        if self.topological_order().len() != j {
            return bad("kinematic tree is not connected or has a cycle".into());
        }
        if self.torso_anchor_joints.is_empty() {
            return bad("torso_anchor_joints is empty".into());
        }
        if self.head.neck.is_empty() {
            return bad("head segment has no neck joints".into());
        }
        let all_indices = self
            .torso_anchor_joints
            .iter()
            .chain(&self.head.neck)
            .chain(std::iter::once(&self.head.head))
            .chain(&self.lower_body_joints)
            .chain(&self.head_torso_joints);
        if all_indices.into_iter().any(|&i| i >= j) {
            return bad("joint index out of range".into());
        }
        Ok(())
    }
}

/// Axis-aligned box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(PoseError::InvalidBox(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        ]
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        BoundingBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    /// Euclidean distance from a point to the box; zero inside or on the boundary.
    pub fn distance_outside(&self, p: [f64; 2]) -> f64 {
        let dx = (self.x_min - p[0]).max(p[0] - self.x_max).max(0.0);
        let dy = (self.y_min - p[1]).max(p[1] - self.y_max).max(0.0);
        dx.hypot(dy)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Per-joint pixel coordinates with an annotation flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub coords: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
}

impl Pose2D {
    /// Pose with every joint visible.
    pub fn new(coords: Vec<[f64; 2]>) -> Self {
        let visible = vec![true; coords.len()];
        Pose2D { coords, visible }
    }

    pub fn with_visibility(coords: Vec<[f64; 2]>, visible: Vec<bool>) -> Result<Self> {
        if coords.len() != visible.len() {
            return Err(PoseError::JointCountMismatch {
                expected: coords.len(),
                got: visible.len(),
            });
        }
        let pose = Pose2D { coords, visible };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coords.len() != self.visible.len() {
            return Err(PoseError::JointCountMismatch {
                expected: self.coords.len(),
                got: self.visible.len(),
            });
        }
        for (j, (c, &v)) in self.coords.iter().zip(&self.visible).enumerate() {
            if v && !(c[0].is_finite() && c[1].is_finite()) {
                return Err(PoseError::Malformed(format!(
                    "visible joint {j} has non-finite coordinates"
                )));
            }
        }
        Ok(())
    }

    pub fn joint_count(&self) -> usize {
        self.coords.len()
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }

    /// Same coordinates with every joint marked visible.
    pub fn all_visible(&self) -> Self {
        Pose2D::new(self.coords.clone())
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Pose2D {
            coords: self.coords.iter().map(|c| [c[0] + dx, c[1] + dy]).collect(),
            visible: self.visible.clone(),
        }
    }
}

/// Per-joint 3D coordinates in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose3D {
    pub coords: Vec<[f64; 3]>,
}

impl Pose3D {
    pub fn new(coords: Vec<[f64; 3]>) -> Self {
        Pose3D { coords }
    }

    pub fn joint_count(&self) -> usize {
        self.coords.len()
    }

    pub fn torso_center(&self, spec: &PoseSpec) -> [f64; 3] {
        let mut c = [0.0; 3];
        for &j in &spec.torso_anchor_joints {
            for (acc, v) in c.iter_mut().zip(self.coords[j]) {
                *acc += v;
            }
        }
        let n = spec.torso_anchor_joints.len() as f64;
        c.map(|v| v / n)
    }

    /// Translates the pose so the torso anchor joints average to the origin.
    pub fn centered(&self, spec: &PoseSpec) -> Self {
        let c = self.torso_center(spec);
        Pose3D {
            coords: self
                .coords
                .iter()
                .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
                .collect(),
        }
    }

    pub fn is_centered(&self, spec: &PoseSpec, tol: f64) -> bool {
        self.torso_center(spec).iter().all(|v| v.abs() <= tol)
    }

    pub fn translated(&self, t: [f64; 3]) -> Self {
        Pose3D {
            coords: self
                .coords
                .iter()
                .map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]])
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyExtent {
    FullBody,
    UpperBody,
}

/// Paired canonical 2D layout (unit box coordinates) and torso-centered 3D pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorPose {
    pub id: usize,
    pub body_extent: BodyExtent,
    pub pose2d: Pose2D,
    pub pose3d: Pose3D,
}

fn check_same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(PoseError::JointCountMismatch {
            expected: a,
            got: b,
        });
    }
    Ok(())
}

pub(crate) fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

pub(crate) fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Mean per-joint Euclidean distance between two torso-centered 3D poses.
pub fn d3d(p: &Pose3D, q: &Pose3D) -> Result<f64> {
    check_same_len(p.joint_count(), q.joint_count())?;
    if p.coords.is_empty() {
        return Err(PoseError::EmptyInput("pose"));
    }
    let sum: f64 = p
        .coords
        .iter()
        .zip(&q.coords)
        .map(|(&a, &b)| dist3(a, b))
        .sum();
    Ok(sum / p.joint_count() as f64)
}

/// Mean Euclidean distance over the joints selected by `mask`.
///
/// Every masked joint must be visible in both poses.
pub fn d2d(p: &Pose2D, q: &Pose2D, mask: &[bool]) -> Result<f64> {
    check_same_len(p.joint_count(), q.joint_count())?;
    check_same_len(p.joint_count(), mask.len())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for j in 0..mask.len() {
        if !mask[j] {
            continue;
        }
        if !(p.visible[j] && q.visible[j]) {
            return Err(PoseError::Malformed(format!(
                "masked joint {j} is not visible in both poses"
            )));
        }
        sum += dist2(p.coords[j], q.coords[j]);
        n += 1;
    }
    if n == 0 {
        return Err(PoseError::EmptyMask);
    }
    Ok(sum / n as f64)
}

/// Tight box over the visible joints, grown by `margin_fraction` of its
/// width and height (half on each side).
pub fn box_around(pose: &Pose2D, margin_fraction: f64) -> Result<BoundingBox> {
    box_around_joints(pose, margin_fraction, |j| pose.visible[j])
}

/// Like [`box_around`] but restricted to the given joints (visible ones only).
pub fn box_around_subset(
    pose: &Pose2D,
    joints: &[usize],
    margin_fraction: f64,
) -> Result<BoundingBox> {
    box_around_joints(pose, margin_fraction, |j| {
        pose.visible[j] && joints.contains(&j)
    })
}

fn box_around_joints(
    pose: &Pose2D,
    margin_fraction: f64,
    include: impl Fn(usize) -> bool,
) -> Result<BoundingBox> {
    if !(margin_fraction >= 0.0 && margin_fraction.is_finite()) {
        return Err(PoseError::InvalidParameter(format!(
            "margin fraction {margin_fraction}"
        )));
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut n = 0usize;
    for (j, c) in pose.coords.iter().enumerate() {
        if !include(j) {
            continue;
        }
        n += 1;
        for a in 0..2 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    if n < 2 {
        return Err(PoseError::NotEnoughVisibleJoints { needed: 2, have: n });
    }
    let mx = 0.5 * margin_fraction * (hi[0] - lo[0]);
    let my = 0.5 * margin_fraction * (hi[1] - lo[1]);
    BoundingBox::new(lo[0] - mx, lo[1] - my, hi[0] + mx, hi[1] + my)
}

/// Maps pixel coordinates into the unit square spanned by `b`.
pub fn normalize_to_box(p: &Pose2D, b: &BoundingBox) -> Pose2D {
    let (w, h) = (b.width(), b.height());
    Pose2D {
        coords: p
            .coords
            .iter()
            .map(|c| [(c[0] - b.x_min) / w, (c[1] - b.y_min) / h])
            .collect(),
        visible: p.visible.clone(),
    }
}

/// Inverse of [`normalize_to_box`].
pub fn denormalize_from_box(p: &Pose2D, b: &BoundingBox) -> Pose2D {
    let (w, h) = (b.width(), b.height());
    Pose2D {
        coords: p
            .coords
            .iter()
            .map(|c| [c[0] * w + b.x_min, c[1] * h + b.y_min])
            .collect(),
        visible: p.visible.clone(),
    }
}

/// Neck point of a 2D pose: mean of the spec's neck joints.
pub fn neck_point(pose: &Pose2D, spec: &PoseSpec) -> [f64; 2] {
    let n = spec.head.neck.len() as f64;
    let mut acc = [0.0; 2];
    for &j in &spec.head.neck {
        acc[0] += pose.coords[j][0];
        acc[1] += pose.coords[j][1];
    }
    [acc[0] / n, acc[1] / n]
}

/// Top of the head, extrapolated from the neck through the head joint by
/// `ratio` times the neck-head length.
pub fn head_top(pose: &Pose2D, spec: &PoseSpec, ratio: f64) -> [f64; 2] {
    let neck = neck_point(pose, spec);
    let head = pose.coords[spec.head.head];
    [
        head[0] + ratio * (head[0] - neck[0]),
        head[1] + ratio * (head[1] - neck[1]),
    ]
}

/// Appends the extrapolated head top as an extra joint. Its visibility is the
/// conjunction of the head and neck joints' visibility.
pub fn with_head_top(pose: &Pose2D, spec: &PoseSpec, ratio: f64) -> Pose2D {
    let mut out = pose.clone();
    let vis = pose.visible[spec.head.head] && spec.head.neck.iter().all(|&j| pose.visible[j]);
    out.coords.push(head_top(pose, spec, ratio));
    out.visible.push(vis);
    out
}
