//! Procedural ground truth: skeletons, cameras, scenes and simulated
//! detector proposals.

pub mod camera;
pub mod proposals;
pub mod scene;
pub mod skeleton;

pub use camera::{fit_placement, project, reprojection_rms, Camera, CameraModel, FittedPlacement, Placement};
pub use proposals::{simulate_proposals, ProposalNoiseModel, ScoreModel};
pub use scene::{generate_scene, generate_scenes, stream_rng, Scene, SceneConfig, ScenePerson};
pub use skeleton::{sample_pose, SkeletonModel};
