//! Multi-person scenes with seeded, per-scene random streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PoseError, Result};
use crate::pose::{Pose2D, Pose3D, PoseSpec};

use super::camera::{project, Camera, CameraModel, Placement};
use super::skeleton::SkeletonModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePerson {
    /// Torso-centered, camera-oriented pose in meters.
    pub pose3d: Pose3D,
    /// Distance from the camera in meters.
    pub depth: f64,
    pub placement: Placement,
    /// Projection of `pose3d`; joints outside the image are not visible.
    pub pose2d: Pose2D,
}

impl ScenePerson {
    pub fn truncated(&self) -> bool {
        self.pose2d.visible.iter().any(|v| !v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub index: usize,
    pub camera: Camera,
    pub persons: Vec<ScenePerson>,
}

impl Scene {
    /// Checks every 2D pose against the projection of its 3D pose.
    pub fn validate(&self, tol_px: f64) -> Result<()> {
        for (i, person) in self.persons.iter().enumerate() {
            person.pose2d.validate()?;
            let expect = project(&person.pose3d, &person.placement, &self.camera);
            if expect.visible != person.pose2d.visible {
                return Err(PoseError::Malformed(format!("person {i}: visibility disagrees with camera")));
            }
            for (a, b) in expect.coords.iter().zip(&person.pose2d.coords) {
                if (a[0] - b[0]).abs() > tol_px || (a[1] - b[1]).abs() > tol_px {
                    return Err(PoseError::Malformed(format!("person {i}: 2D pose off its projection")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub spec: String,
    pub persons_min: usize,
    pub persons_max: usize,
    pub camera_model: CameraModel,
    /// Pixels per meter (orthographic) or focal length (weak perspective).
    pub focal_px: f64,
    pub width: f64,
    pub height: f64,
    pub depth_min: f64,
    pub depth_max: f64,
    /// Probability that a person is pushed down through the bottom edge.
    pub truncation_prob: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            spec: "h13".into(),
            persons_min: 1,
            persons_max: 5,
            camera_model: CameraModel::Orthographic,
            focal_px: 130.0,
            width: 1280.0,
            height: 720.0,
            depth_min: 3.0,
            depth_max: 6.0,
            truncation_prob: 0.15,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PoseError::InvalidParameter(m.to_string()));
        if self.persons_min == 0 || self.persons_min > self.persons_max {
            return bad("person range must satisfy 1 <= min <= max");
        }
        if !(self.focal_px > 0.0) || !(self.width > 0.0) || !(self.height > 0.0) {
            return bad("camera focal length and image size must be positive");
        }
        if !(self.depth_min > 0.0) || self.depth_min > self.depth_max {
            return bad("depth range must be positive and ordered");
        }
        if !(0.0..=1.0).contains(&self.truncation_prob) {
            return bad("truncation probability outside [0, 1]");
        }
        Ok(())
    }

    pub fn camera(&self) -> Camera {
        Camera {
            model: self.camera_model,
            focal_px: self.focal_px,
            width: self.width,
            height: self.height,
        }
    }
}

/// Random generator for one item of a seeded batch.
pub fn stream_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn generate_scene(model: &SkeletonModel, config: &SceneConfig, seed: u64, index: usize) -> Scene {
    let mut rng = stream_rng(seed, index);
    let camera = config.camera();
    let n = rng.random_range(config.persons_min..=config.persons_max);
    let slot = config.width / n as f64;
    let persons = (0..n)
        .map(|i| {
            let pose3d = model.sample_with(&mut rng);
            let depth = rng.random_range(config.depth_min..=config.depth_max);
            let scale = camera.scale_at(depth);
            let x = (i as f64 + 0.5) * slot + rng.random_range(-0.1..=0.1) * slot;
            let y = if rng.random_bool(config.truncation_prob) {
                // Torso center just above the bottom edge: hips and legs fall outside.
                config.height - 0.05 * scale
            } else {
                0.5 * config.height + rng.random_range(-0.05..=0.05) * config.height
            };
            let placement = Placement { scale, roll: 0.0, offset: [x, y] };
            let pose2d = project(&pose3d, &placement, &camera);
            ScenePerson { pose3d, depth, placement, pose2d }
        })
        .collect();
    Scene { index, camera, persons }
}

/// `count` scenes; scene `i` draws from stream `i` of the seeded generator.
pub fn generate_scenes(config: &SceneConfig, count: usize, seed: u64) -> Result<Vec<Scene>> {
    config.validate()?;
    let model = SkeletonModel::for_spec(&config.spec)?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| generate_scene(&model, config, seed, i))
        .collect())
}

/// Lower-body joints of `spec` hidden in `pose`.
pub fn lower_body_hidden(pose: &Pose2D, spec: &PoseSpec) -> bool {
    spec.lower_body_joints.iter().any(|&j| !pose.visible[j])
}
