//! Multi-person 2D-3D pose detection toolkit: anchor-pose clustering,
//! proposal labeling and losses, pose proposal integration, pseudo ground
//! truth from 2D annotations, evaluation metrics and synthetic scenes.

pub mod anchors;
pub mod error;
pub mod eval;
pub mod labeling;
pub mod metrics;
pub mod pose;
pub mod ppi;
pub mod pseudo_gt;
pub mod schema;
pub mod synth;
pub mod toy;

pub use anchors::{add_upper_body_variants, kmeans_anchors, AnchorSet, Clustering, KMeansConfig};
pub use error::{PoseError, Result};
pub use eval::{EvalConfig, EvalReport, Protocol};
pub use labeling::{apply_regression, assign_label, regression_target, LabeledBox};
pub use metrics::{min_error_align, mpjpe_abs, mpjpe_aligned, pck3d, pckh, rigid_align};
pub use pose::{
    box_around, d2d, d3d, denormalize_from_box, iou, normalize_to_box, AnchorPose, BodyExtent, BoundingBox, Pose2D,
    Pose3D, PoseSpec,
};
pub use ppi::{nms, ppi, Detection, PoseProposal, PpiParams};
pub use pseudo_gt::{build_library, nn_annotate, MoCapCorpus, ProjectedPoseLibrary};
pub use synth::{generate_scenes, simulate_proposals, ProposalNoiseModel, Scene, SceneConfig, SkeletonModel};
pub use toy::{train, ToyConfig, ToyModel};
