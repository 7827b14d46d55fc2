//! Articulated skeletons and forward kinematics.

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PoseError, Result};
use crate::pose::{Pose3D, PoseSpec};

/// Closed range of a joint angle in radians.
pub type AngleRange = (f64, f64);

/// Bone offsets in the rest pose plus per-joint Euler-angle ranges.
///
/// Each joint's rotation turns the bone from its parent (and, through
/// inheritance, every bone below it). The root's rotation is the global body
/// orientation. Rest offsets use the camera frame: x right, y down, z away
/// from the camera, with the person facing the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonModel {
    pub spec: PoseSpec,
    /// Offset of each joint from its parent in the rest pose (zero for the root).
    pub rest_offsets: Vec<[f64; 3]>,
    /// Ranges for rotations about x, y and z.
    pub angle_limits: Vec<[AngleRange; 3]>,
}

const FIXED: [AngleRange; 3] = [(0.0, 0.0); 3];
const ROOT: [AngleRange; 3] = [(-0.25, 0.25), (-std::f64::consts::PI, std::f64::consts::PI), (-0.15, 0.15)];
const FOREARM: [AngleRange; 3] = [(-2.0, 0.0), (0.0, 0.0), (-0.2, 0.2)];
const SHIN: [AngleRange; 3] = [(0.0, 1.6), (0.0, 0.0), (0.0, 0.0)];
const R_UPPER_ARM: [AngleRange; 3] = [(-1.6, 1.0), (-0.3, 0.3), (-0.2, 1.5)];
const L_UPPER_ARM: [AngleRange; 3] = [(-1.6, 1.0), (-0.3, 0.3), (-1.5, 0.2)];
const R_THIGH: [AngleRange; 3] = [(-1.3, 0.4), (-0.2, 0.2), (-0.1, 0.5)];
const L_THIGH: [AngleRange; 3] = [(-1.3, 0.4), (-0.2, 0.2), (-0.5, 0.1)];

// Segment lengths (meters) close to adult anthropometric means.
const UPPER_ARM: f64 = 0.28;
const FOREARM_LEN: f64 = 0.25;
const THIGH: f64 = 0.44;
const SHIN_LEN: f64 = 0.42;

impl SkeletonModel {
    /// Default 13-joint body rooted at the head.
    pub fn h13() -> Self {
        let spec = PoseSpec::h13();
        let mut off = vec![[0.0; 3]; 13];
        let mut lim = vec![FIXED; 13];
        off[10] = [-0.18, 0.22, 0.0];
        off[11] = [0.18, 0.22, 0.0];
        off[8] = [-0.05, UPPER_ARM, 0.0];
        off[9] = [0.05, UPPER_ARM, 0.0];
        off[6] = [0.0, FOREARM_LEN, 0.0];
        off[7] = [0.0, FOREARM_LEN, 0.0];
        off[4] = [0.06, 0.50, 0.0];
        off[5] = [-0.06, 0.50, 0.0];
        off[2] = [0.0, THIGH, 0.0];
        off[3] = [0.0, THIGH, 0.0];
        off[0] = [0.0, SHIN_LEN, 0.0];
        off[1] = [0.0, SHIN_LEN, 0.0];
        lim[12] = ROOT;
        lim[8] = R_UPPER_ARM;
        lim[9] = L_UPPER_ARM;
        lim[6] = FOREARM;
        lim[7] = FOREARM;
        lim[2] = R_THIGH;
        lim[3] = L_THIGH;
        lim[0] = SHIN;
        lim[1] = SHIN;
        SkeletonModel {
            spec,
            rest_offsets: off,
            angle_limits: lim,
        }
    }

    /// Default 17-joint body rooted at the pelvis.
    pub fn h17() -> Self {
        let spec = PoseSpec::h17();
        let mut off = vec![[0.0; 3]; 17];
        let mut lim = vec![FIXED; 17];
        off[1] = [-0.12, 0.0, 0.0];
        off[4] = [0.12, 0.0, 0.0];
        off[2] = [0.0, THIGH, 0.0];
        off[5] = [0.0, THIGH, 0.0];
        off[3] = [0.0, SHIN_LEN, 0.0];
        off[6] = [0.0, SHIN_LEN, 0.0];
        off[7] = [0.0, -0.22, 0.0];
        off[8] = [0.0, -0.25, 0.0];
        off[9] = [0.0, -0.10, 0.0];
        off[10] = [0.0, -0.12, 0.0];
        off[11] = [0.18, 0.0, 0.0];
        off[14] = [-0.18, 0.0, 0.0];
        off[12] = [0.05, UPPER_ARM, 0.0];
        off[15] = [-0.05, UPPER_ARM, 0.0];
        off[13] = [0.0, FOREARM_LEN, 0.0];
        off[16] = [0.0, FOREARM_LEN, 0.0];
        lim[0] = ROOT;
        lim[2] = R_THIGH;
        lim[5] = L_THIGH;
        lim[3] = SHIN;
        lim[6] = SHIN;
        lim[7] = [(-0.3, 0.1), (-0.2, 0.2), (-0.1, 0.1)];
        lim[8] = [(-0.1, 0.1), (-0.1, 0.1), (-0.05, 0.05)];
        lim[10] = [(-0.3, 0.3), (-0.4, 0.4), (-0.2, 0.2)];
        lim[12] = L_UPPER_ARM;
        lim[15] = R_UPPER_ARM;
        lim[13] = FOREARM;
        lim[16] = FOREARM;
        SkeletonModel {
            spec,
            rest_offsets: off,
            angle_limits: lim,
        }
    }

    pub fn for_spec(name: &str) -> Result<Self> {
        match name {
            "h13" => Ok(Self::h13()),
            "h17" => Ok(Self::h17()),
            other => Err(PoseError::InvalidSpec(format!("no skeleton for spec `{other}`"))),
        }
    }

    /// Length of the bone from each joint to its parent (`None` for the root).
    pub fn bone_lengths(&self) -> Vec<Option<f64>> {
        self.spec
            .parents
            .iter()
            .zip(&self.rest_offsets)
            .map(|(p, o)| p.map(|_| Vector3::from(*o).norm()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let j = self.spec.joint_count();
        if self.rest_offsets.len() != j || self.angle_limits.len() != j {
            return Err(PoseError::InvalidSpec("skeleton arrays do not match joint count".into()));
        }
        for (i, len) in self.bone_lengths().into_iter().enumerate() {
            if let Some(l) = len {
                if !(l > 0.0) {
                    return Err(PoseError::InvalidSpec(format!("bone to joint {i} has zero length")));
                }
            }
        }
        for lim in &self.angle_limits {
            if lim.iter().any(|&(lo, hi)| !(lo <= hi)) {
                return Err(PoseError::InvalidSpec("empty joint-angle range".into()));
            }
        }
        Ok(())
    }

    /// Forward kinematics from per-joint Euler angles, torso-centered.
    pub fn pose_from_angles(&self, angles: &[[f64; 3]]) -> Result<Pose3D> {
        let j = self.spec.joint_count();
        if angles.len() != j {
            return Err(PoseError::JointCountMismatch { expected: j, got: angles.len() });
        }
        let mut global: Vec<Rotation3<f64>> = vec![Rotation3::identity(); j];
        let mut pos = vec![Vector3::zeros(); j];
        for idx in self.spec.topological_order() {
            let [ax, ay, az] = angles[idx];
            let local = Rotation3::from_euler_angles(ax, ay, az);
            match self.spec.parents[idx] {
                None => {
                    global[idx] = local;
                    pos[idx] = Vector3::zeros();
                }
                Some(p) => {
                    global[idx] = global[p] * local;
                    pos[idx] = pos[p] + global[idx] * Vector3::from(self.rest_offsets[idx]);
                }
            }
        }
        let pose = Pose3D::new(pos.iter().map(|v| [v[0], v[1], v[2]]).collect());
        Ok(pose.centered(&self.spec))
    }

    pub fn rest_pose(&self) -> Pose3D {
        let zeros = vec![[0.0; 3]; self.spec.joint_count()];
        self.pose_from_angles(&zeros).expect("joint count matches")
    }

    pub fn sample_angles<R: Rng>(&self, rng: &mut R) -> Vec<[f64; 3]> {
        self.angle_limits
            .iter()
            .map(|lim| {
                lim.map(|(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
            })
            .collect()
    }

    pub fn sample_with<R: Rng>(&self, rng: &mut R) -> Pose3D {
        let angles = self.sample_angles(rng);
        self.pose_from_angles(&angles).expect("joint count matches")
    }
}

/// Samples one pose from a fresh generator seeded with `seed`.
pub fn sample_pose(model: &SkeletonModel, seed: u64) -> Pose3D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model.sample_with(&mut rng)
}
