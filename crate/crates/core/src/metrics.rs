//! Pose metrics: MPJPE before and after rigid alignment, PCKh, 3DPCK,
//! multi-person average precision, upper-bound selection and detection-rate
//! curves.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{PoseError, Result};
use crate::pose::{d2d, d3d, dist2, dist3, Pose2D, Pose3D, PoseSpec};

pub const DEFAULT_PCK3D_THRESHOLD: f64 = 0.15;
pub const DEFAULT_PCKH_ALPHA: f64 = 0.5;
/// Head top sits this many neck-head lengths above the head joint.
pub const DEFAULT_HEAD_TOP_RATIO: f64 = 1.0;
/// Head size is this multiple of the neck-to-head-top length.
pub const DEFAULT_HEAD_SIZE_FACTOR: f64 = 2.0;

/// Mean per-joint position error without alignment.
pub fn mpjpe_abs(pred: &Pose3D, gt: &Pose3D) -> Result<f64> {
    d3d(pred, gt)
}

/// Similarity transform `x -> scale * R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub scale: f64,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [0, 1, 2].map(|i| {
            self.scale * (r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2]) + self.translation[i]
        })
    }

    pub fn apply_pose(&self, pose: &Pose3D) -> Pose3D {
        Pose3D::new(pose.coords.iter().map(|&p| self.apply(p)).collect())
    }
}

fn to_vec(p: [f64; 3]) -> Vector3<f64> {
    Vector3::new(p[0], p[1], p[2])
}

/// Weighted least-squares similarity (rotation, translation and optional
/// uniform scale) mapping `pred` onto `gt`, without reflections.
fn weighted_fit(pred: &Pose3D, gt: &Pose3D, weights: &[f64], allow_scale: bool) -> RigidTransform {
    let total: f64 = weights.iter().sum();
    let mean = |pose: &Pose3D| {
        pose.coords.iter().zip(weights).fold(Vector3::zeros(), |a, (&p, &w)| a + w * to_vec(p)) / total
    };
    let (mu_p, mu_g) = (mean(pred), mean(gt));
    let mut cov = Matrix3::zeros();
    let mut var_p = 0.0;
    for ((&p, &g), &w) in pred.coords.iter().zip(&gt.coords).zip(weights) {
        let pc = to_vec(p) - mu_p;
        let gc = to_vec(g) - mu_g;
        cov += w * gc * pc.transpose();
        var_p += w * pc.norm_squared();
    }
    cov /= total;
    var_p /= total;
    let svd = cov.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut s = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let rot = u * s * v_t;
    let scale = if allow_scale {
        let d = svd.singular_values;
        (d[0] * s[(0, 0)] + d[1] * s[(1, 1)] + d[2] * s[(2, 2)]) / var_p
    } else {
        1.0
    };
    let t = mu_g - scale * rot * mu_p;
    RigidTransform {
        rotation: [0, 1, 2].map(|i| [rot[(i, 0)], rot[(i, 1)], rot[(i, 2)]]),
        translation: [t[0], t[1], t[2]],
        scale,
    }
}

/// Least-squares rotation and translation (and uniform scale when
/// `allow_scale`) mapping `pred` onto `gt`, without reflections.
pub fn rigid_align(pred: &Pose3D, gt: &Pose3D, allow_scale: bool) -> Result<(Pose3D, RigidTransform)> {
    let n = pred.joint_count();
    if n != gt.joint_count() {
        return Err(PoseError::JointCountMismatch {
            expected: gt.joint_count(),
            got: n,
        });
    }
    if n < 3 {
        return Err(PoseError::NotEnoughSamples { needed: 3, have: n });
    }
    let nf = n as f64;
    let mu_p = pred.coords.iter().fold(Vector3::zeros(), |a, &p| a + to_vec(p)) / nf;
    let mut spread_p = Matrix3::zeros();
    for &p in &pred.coords {
        let pc = to_vec(p) - mu_p;
        spread_p += pc * pc.transpose();
    }
    // Collinear (or coincident) joints leave the rotation about the line free.
    let sv = spread_p.symmetric_eigenvalues();
    let mut sv: Vec<f64> = sv.iter().map(|v| v.max(0.0)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if sv[0] <= 0.0 || sv[1] <= 1e-12 * sv[0] {
        return Err(PoseError::Degenerate("predicted joints are collinear".into()));
    }

    if pred.coords == gt.coords {
        return Ok((pred.clone(), RigidTransform::identity()));
    }
    let transform = weighted_fit(pred, gt, &vec![1.0; n], allow_scale);
    Ok((transform.apply_pose(pred), transform))
}

const REWEIGHT_MAX_ITERS: usize = 100;
const REWEIGHT_FLOOR: f64 = 1e-12;

/// Iteratively reweighted fits from `start`: each step solves the weighted
/// least-squares problem with weights `1 / distance`, which cannot raise the
/// mean joint distance. Steps that fail to lower it end the iteration.
fn reweighted_descent(pred: &Pose3D, gt: &Pose3D, start: RigidTransform, allow_scale: bool) -> (RigidTransform, f64) {
    let mut best = start;
    let mut best_err = d3d(&start.apply_pose(pred), gt).expect("joint counts checked");
    for _ in 0..REWEIGHT_MAX_ITERS {
        let moved = best.apply_pose(pred);
        let weights: Vec<f64> =
            moved.coords.iter().zip(&gt.coords).map(|(&a, &b)| 1.0 / dist3(a, b).max(REWEIGHT_FLOOR)).collect();
        let next = weighted_fit(pred, gt, &weights, allow_scale);
        let err = d3d(&next.apply_pose(pred), gt).expect("joint counts checked");
        if !(err < best_err) {
            break;
        }
        let gain = best_err - err;
        best = next;
        best_err = err;
        if gain <= 1e-15 * best_err.max(1e-300) {
            break;
        }
    }
    (best, best_err)
}

/// Rigid (or similarity) transform minimizing the mean per-joint distance.
///
/// Descends from the identity and from the least-squares fit and keeps the
/// better result, so the error never exceeds the unaligned error nor the
/// least-squares error. With `allow_scale` the rigid optimum is a further
/// starting point, so similarity alignment is never worse than rigid.
pub fn min_error_align(pred: &Pose3D, gt: &Pose3D, allow_scale: bool) -> Result<(Pose3D, RigidTransform)> {
    let (_, ls) = rigid_align(pred, gt, allow_scale)?;
    let mut starts = vec![RigidTransform::identity(), ls];
    if allow_scale {
        starts.push(min_error_align(pred, gt, false)?.1);
    }
    let mut best: Option<(RigidTransform, f64)> = None;
    for start in starts {
        let (t, err) = reweighted_descent(pred, gt, start, allow_scale);
        if best.is_none_or(|(_, e)| err < e) {
            best = Some((t, err));
        }
    }
    let (t, _) = best.expect("at least one start");
    if t == RigidTransform::identity() {
        return Ok((pred.clone(), t));
    }
    Ok((t.apply_pose(pred), t))
}

/// MPJPE after the rigid alignment of `pred` onto `gt` that minimizes it.
pub fn mpjpe_aligned(pred: &Pose3D, gt: &Pose3D, allow_scale: bool) -> Result<f64> {
    let (aligned, _) = min_error_align(pred, gt, allow_scale)?;
    d3d(&aligned, gt)
}

/// Sum of squared joint distances, the objective minimized by [`rigid_align`].
pub fn sum_squared_error(pred: &Pose3D, gt: &Pose3D) -> f64 {
    pred.coords
        .iter()
        .zip(&gt.coords)
        .map(|(&a, &b)| dist3(a, b).powi(2))
        .sum()
}

/// Fraction of joints strictly closer than `threshold` meters.
pub fn pck3d(pred: &Pose3D, gt: &Pose3D, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(PoseError::InvalidParameter(format!("threshold {threshold}")));
    }
    if pred.joint_count() != gt.joint_count() {
        return Err(PoseError::JointCountMismatch {
            expected: gt.joint_count(),
            got: pred.joint_count(),
        });
    }
    let hits = pred
        .coords
        .iter()
        .zip(&gt.coords)
        .filter(|(&a, &b)| dist3(a, b) < threshold)
        .count();
    Ok(hits as f64 / gt.joint_count() as f64)
}

fn check_head_size(head_size: f64) -> Result<()> {
    if !(head_size > 0.0) || !head_size.is_finite() {
        return Err(PoseError::InvalidParameter(format!("head size {head_size}")));
    }
    Ok(())
}

/// Per annotated ground-truth joint: is the prediction within
/// `alpha * head_size` pixels. `None` for unannotated joints.
pub fn pckh_hits(pred: &Pose2D, gt: &Pose2D, alpha: f64, head_size: f64) -> Result<Vec<Option<bool>>> {
    check_head_size(head_size)?;
    if pred.joint_count() != gt.joint_count() {
        return Err(PoseError::JointCountMismatch {
            expected: gt.joint_count(),
            got: pred.joint_count(),
        });
    }
    let thr = alpha * head_size;
    Ok(gt
        .coords
        .iter()
        .zip(&gt.visible)
        .zip(&pred.coords)
        .map(|((&g, &vis), &p)| vis.then(|| dist2(p, g) <= thr))
        .collect())
}

/// Fraction of annotated ground-truth joints within `alpha * head_size`.
pub fn pckh(pred: &Pose2D, gt: &Pose2D, alpha: f64, head_size: f64) -> Result<f64> {
    let hits = pckh_hits(pred, gt, alpha, head_size)?;
    let annotated = hits.iter().flatten().count();
    if annotated == 0 {
        return Err(PoseError::NotEnoughVisibleJoints { needed: 1, have: 0 });
    }
    Ok(hits.iter().flatten().filter(|&&h| h).count() as f64 / annotated as f64)
}

/// Head size of a ground-truth pose: `factor` times the distance from the
/// neck to the extrapolated head top.
pub fn head_size(gt: &Pose2D, spec: &PoseSpec, head_top_ratio: f64, factor: f64) -> f64 {
    let neck = crate::pose::neck_point(gt, spec);
    let top = crate::pose::head_top(gt, spec, head_top_ratio);
    factor * dist2(neck, top)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApConfig {
    pub alpha: f64,
    /// Fraction of annotated joints that must be within threshold for a
    /// detection to match a ground truth.
    pub min_joint_fraction: f64,
}

impl Default for ApConfig {
    fn default() -> Self {
        ApConfig {
            alpha: DEFAULT_PCKH_ALPHA,
            min_joint_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApGroundTruth {
    pub pose: Pose2D,
    pub head_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApDetection {
    pub pose: Pose2D,
    pub score: f64,
}

/// Detections and ground truths of one image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ApImage {
    pub detections: Vec<ApDetection>,
    pub gts: Vec<ApGroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    /// `None` for joints never annotated in the ground truth.
    pub per_joint: Vec<Option<f64>>,
    pub mean: f64,
    pub matched: usize,
    pub false_positives: usize,
    pub missed: usize,
}

/// Area under the precision-recall curve with the monotone precision
/// envelope, from score-sorted true/false positive flags.
pub fn average_precision(sorted_hits: &[bool], positives: usize) -> f64 {
    if positives == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(sorted_hits.len());
    let mut precision = Vec::with_capacity(sorted_hits.len());
    for (i, &h) in sorted_hits.iter().enumerate() {
        if h {
            tp += 1;
        }
        recall.push(tp as f64 / positives as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        if *r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = *r;
        }
    }
    ap
}

/// Multi-person AP per joint.
///
/// Within each image, detections are visited by decreasing score and matched
/// to the unclaimed ground truth with the most joints within
/// `alpha * head_size`, provided that fraction reaches
/// `min_joint_fraction`. A matched detection's joint is a true positive when
/// it lies within threshold of an annotated ground-truth joint; unmatched
/// detections are false positives on every joint.
pub fn multi_person_ap(images: &[ApImage], config: &ApConfig) -> Result<ApResult> {
    let j = images
        .iter()
        .flat_map(|im| im.gts.iter().map(|g| g.pose.joint_count()))
        .chain(images.iter().flat_map(|im| im.detections.iter().map(|d| d.pose.joint_count())))
        .next()
        .unwrap_or(0);
    let mut positives = vec![0usize; j];
    // (score, image, order, per-joint flag or None when not counted)
    let mut entries: Vec<(f64, usize, usize, Vec<Option<bool>>)> = Vec::new();
    let (mut matched, mut fps, mut total_gts) = (0, 0, 0);
    for (ii, im) in images.iter().enumerate() {
        for g in &im.gts {
            if g.pose.joint_count() != j {
                return Err(PoseError::JointCountMismatch { expected: j, got: g.pose.joint_count() });
            }
            total_gts += 1;
            for (jj, &v) in g.pose.visible.iter().enumerate() {
                if v {
                    positives[jj] += 1;
                }
            }
        }
        let mut order: Vec<usize> = (0..im.detections.len()).collect();
        order.sort_by(|&a, &b| im.detections[b].score.total_cmp(&im.detections[a].score).then(a.cmp(&b)));
        let mut claimed = vec![false; im.gts.len()];
        for (rank, &di) in order.iter().enumerate() {
            let det = &im.detections[di];
            let mut best: Option<(usize, f64, Vec<Option<bool>>)> = None;
            for (gi, g) in im.gts.iter().enumerate() {
                if claimed[gi] {
                    continue;
                }
                let hits = pckh_hits(&det.pose, &g.pose, config.alpha, g.head_size)?;
                let annotated = hits.iter().flatten().count();
                if annotated == 0 {
                    continue;
                }
                let frac = hits.iter().flatten().filter(|&&h| h).count() as f64 / annotated as f64;
                if frac >= config.min_joint_fraction && best.as_ref().is_none_or(|b| frac > b.1) {
                    best = Some((gi, frac, hits));
                }
            }
            let flags = match best {
                Some((gi, _, hits)) => {
                    claimed[gi] = true;
                    matched += 1;
                    hits
                }
                None => {
                    fps += 1;
                    vec![Some(false); j]
                }
            };
            entries.push((det.score, ii, rank, flags));
        }
    }
    entries.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let per_joint: Vec<Option<f64>> = (0..j)
        .map(|jj| {
            if positives[jj] == 0 {
                return None;
            }
            let hits: Vec<bool> = entries.iter().filter_map(|e| e.3[jj]).collect();
            Some(average_precision(&hits, positives[jj]))
        })
        .collect();
    let defined: Vec<f64> = per_joint.iter().flatten().copied().collect();
    let mean = if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    Ok(ApResult {
        per_joint,
        mean,
        matched,
        false_positives: fps,
        missed: total_gts - matched,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoseSpace {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    ThreeD,
}

/// Index of the candidate closest to the ground truth (first on ties).
/// 2D distances use the joints annotated in the ground truth.
pub fn upper_bound_select(
    candidates: &[(Pose2D, Pose3D)],
    gt: &(Pose2D, Pose3D),
    space: PoseSpace,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(PoseError::EmptyInput("proposal list"));
    }
    let mut best = (0, f64::INFINITY);
    for (i, (p2, p3)) in candidates.iter().enumerate() {
        let d = match space {
            PoseSpace::ThreeD => d3d(p3, &gt.1)?,
            PoseSpace::TwoD => d2d(&p2.all_visible(), &gt.0, &gt.0.visible)?,
        };
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

/// Fraction of errors at or below each threshold.
pub fn detection_rate_curve(errors: &[f64], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    if thresholds.windows(2).any(|w| w[1] < w[0]) {
        return Err(PoseError::InvalidParameter("thresholds must be sorted".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(thresholds
        .iter()
        .map(|&t| {
            let below = sorted.partition_point(|&e| e <= t);
            (t, if n == 0 { 0.0 } else { below as f64 / n as f64 })
        })
        .collect())
}

/// Evenly spaced thresholds from `lo` to `hi` inclusive.
pub fn threshold_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps < 2 {
        return vec![lo];
    }
    (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_pose(rng: &mut ChaCha8Rng) -> Pose3D {
        Pose3D::new(
            (0..13)
                .map(|_| [0, 1, 2].map(|_| rng.random_range(-0.8..0.8)))
                .collect(),
        )
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> nalgebra::Rotation3<f64> {
        let axis = nalgebra::Unit::new_normalize(Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ));
        nalgebra::Rotation3::from_axis_angle(&axis, rng.random_range(-3.1..3.1))
    }

    #[test]
    fn mpjpe_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt = rand_pose(&mut rng);
        assert_eq!(mpjpe_abs(&gt, &gt).unwrap(), 0.0);
        let mut pred = gt.clone();
        pred.coords[3][1] += 0.13;
        assert_abs_diff_eq!(mpjpe_abs(&pred, &gt).unwrap(), 0.01, epsilon = 1e-15);
    }

    #[test]
    fn rigid_align_recovers_exact_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let gt = rand_pose(&mut rng);
            let r = random_rotation(&mut rng);
            let t = Vector3::new(rng.random_range(-2.0..2.0), 0.3, -1.0);
            let pred = Pose3D::new(
                gt.coords
                    .iter()
                    .map(|&p| {
                        let q = r * to_vec(p) + t;
                        [q[0], q[1], q[2]]
                    })
                    .collect(),
            );
            let (aligned, tr) = rigid_align(&pred, &gt, false).unwrap();
            assert!(d3d(&aligned, &gt).unwrap() <= 1e-9);
            assert_eq!(tr.scale, 1.0);
        }
        let gt = rand_pose(&mut rng);
        let (aligned, tr) = rigid_align(&gt, &gt, false).unwrap();
        assert!(d3d(&aligned, &gt).unwrap() <= 1e-12);
        for i in 0..3 {
            for k in 0..3 {
                let e = if i == k { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(tr.rotation[i][k], e, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rigid_align_never_reflects() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt = rand_pose(&mut rng);
        let mirrored = Pose3D::new(gt.coords.iter().map(|p| [-p[0], p[1], p[2]]).collect());
        let (_, tr) = rigid_align(&mirrored, &gt, false).unwrap();
        let m = Matrix3::from_fn(|i, k| tr.rotation[i][k]);
        assert_abs_diff_eq!(m.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rigid_align_beats_random_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt = rand_pose(&mut rng);
        let pred = Pose3D::new(
            gt.coords
                .iter()
                .map(|p| p.map(|v| v + rng.random_range(-0.05..0.05)))
                .collect(),
        );
        let (aligned, _) = rigid_align(&pred, &gt, false).unwrap();
        let best = sum_squared_error(&aligned, &gt);
        assert!(best <= sum_squared_error(&pred, &gt));
        for _ in 0..1000 {
            let r = nalgebra::Rotation3::from_euler_angles(
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
            );
            let t = Vector3::new(
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.05..0.05),
            );
            let moved = Pose3D::new(
                aligned
                    .coords
                    .iter()
                    .map(|&p| {
                        let q = r * to_vec(p) + t;
                        [q[0], q[1], q[2]]
                    })
                    .collect(),
            );
            assert!(best <= sum_squared_error(&moved, &gt) + 1e-9);
        }
    }

    #[test]
    fn aligned_mpjpe_can_exceed_absolute_for_a_single_outlier() {
        // Least squares spreads one large joint error over all joints, which
        // raises the mean joint distance even though the squared error drops.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gt = rand_pose(&mut rng);
        let mut pred = gt.clone();
        pred.coords[0][0] += 1.0;
        let (aligned, _) = rigid_align(&pred, &gt, false).unwrap();
        assert!(sum_squared_error(&aligned, &gt) < sum_squared_error(&pred, &gt));
        assert!(d3d(&aligned, &gt).unwrap() > d3d(&pred, &gt).unwrap());
    }

    #[test]
    fn min_error_alignment_handles_the_outlier_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gt = rand_pose(&mut rng);
        let mut pred = gt.clone();
        pred.coords[0][0] += 1.0;
        let abs = mpjpe_abs(&pred, &gt).unwrap();
        let (ls, _) = rigid_align(&pred, &gt, false).unwrap();
        let aligned = mpjpe_aligned(&pred, &gt, false).unwrap();
        assert!(aligned <= abs);
        assert!(aligned <= d3d(&ls, &gt).unwrap());
    }

    #[test]
    fn min_error_alignment_beats_random_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let gt = rand_pose(&mut rng);
            let pred = Pose3D::new(gt.coords.iter().map(|p| p.map(|v| v + rng.random_range(-0.08..0.08))).collect());
            let (aligned, _) = min_error_align(&pred, &gt, false).unwrap();
            let best = d3d(&aligned, &gt).unwrap();
            assert!(best <= mpjpe_abs(&pred, &gt).unwrap());
            for _ in 0..1000 {
                let r = nalgebra::Rotation3::from_euler_angles(
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-0.1..0.1),
                );
                let t = Vector3::new(
                    rng.random_range(-0.03..0.03),
                    rng.random_range(-0.03..0.03),
                    rng.random_range(-0.03..0.03),
                );
                let moved = Pose3D::new(
                    aligned
                        .coords
                        .iter()
                        .map(|&p| {
                            let q = r * to_vec(p) + t;
                            [q[0], q[1], q[2]]
                        })
                        .collect(),
                );
                assert!(best <= d3d(&moved, &gt).unwrap() + 1e-9);
            }
            assert!(mpjpe_aligned(&pred, &gt, true).unwrap() <= best);
        }
    }

    #[test]
    fn scale_alignment_is_no_worse() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let gt = rand_pose(&mut rng);
        let pred = Pose3D::new(
            gt.coords
                .iter()
                .map(|p| p.map(|v| 1.1 * v + rng.random_range(-0.03..0.03)))
                .collect(),
        );
        let (rigid, _) = rigid_align(&pred, &gt, false).unwrap();
        let (sim, tr) = rigid_align(&pred, &gt, true).unwrap();
        assert!(sum_squared_error(&sim, &gt) <= sum_squared_error(&rigid, &gt) + 1e-12);
        assert!(tr.scale < 1.0);
    }

    #[test]
    fn collinear_joints_are_rejected() {
        let line = Pose3D::new((0..13).map(|j| [j as f64, 2.0 * j as f64, 0.0]).collect());
        assert!(matches!(rigid_align(&line, &line, false), Err(PoseError::Degenerate(_))));
    }

    #[test]
    fn pck3d_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gt = rand_pose(&mut rng);
        assert_eq!(pck3d(&gt, &gt, 0.15).unwrap(), 1.0);
        let off = gt.translated([0.2, 0.0, 0.0]);
        assert_eq!(pck3d(&off, &gt, 0.15).unwrap(), 0.0);
        let mut mixed = gt.clone();
        let mut expect = 0;
        for j in 0..13 {
            let d = 0.03 * j as f64;
            mixed.coords[j][2] += d;
            if d < 0.15 {
                expect += 1;
            }
        }
        assert_abs_diff_eq!(pck3d(&mixed, &gt, 0.15).unwrap(), expect as f64 / 13.0);
        assert!(pck3d(&gt, &gt, 0.0).is_err());
    }

    #[test]
    fn pckh_examples() {
        let gt = Pose2D::new((0..13).map(|j| [10.0 * j as f64, 5.0]).collect());
        assert_eq!(pckh(&gt, &gt, 0.5, 20.0).unwrap(), 1.0);
        let moved = gt.translated(0.6 * 20.0, 0.0);
        assert_eq!(pckh(&moved, &gt, 0.5, 20.0).unwrap(), 0.0);
        assert_eq!(pckh(&moved, &gt, 1.0, 20.0).unwrap(), 1.0);
        assert!(pckh(&gt, &gt, 0.5, 0.0).is_err());
        let mut partial = gt.clone();
        partial.visible[0] = false;
        let mut pred = gt.clone();
        pred.coords[0] = [1e6, 1e6];
        pred.coords[1] = [1e6, 1e6];
        assert_abs_diff_eq!(pckh(&pred, &partial, 0.5, 20.0).unwrap(), 11.0 / 12.0);
    }

    #[test]
    fn ap_trivial_cases() {
        let gt = Pose2D::new((0..5).map(|j| [10.0 * j as f64, 0.0]).collect());
        let g = ApGroundTruth { pose: gt.clone(), head_size: 10.0 };
        let exact = ApImage {
            detections: vec![ApDetection { pose: gt.clone(), score: 0.9 }],
            gts: vec![g.clone()],
        };
        let r = multi_person_ap(&[exact], &ApConfig::default()).unwrap();
        assert_eq!(r.mean, 1.0);
        let none = ApImage { detections: vec![], gts: vec![g] };
        let r = multi_person_ap(&[none], &ApConfig::default()).unwrap();
        assert_eq!(r.mean, 0.0);
        assert_eq!(r.missed, 1);
    }

    #[test]
    fn ap_precision_envelope() {
        // TP, FP, TP with 2 positives: envelope precision 1 up to recall 0.5,
        // then 2/3 up to recall 1.
        let ap = average_precision(&[true, false, true], 2);
        assert_abs_diff_eq!(ap, 0.5 + 0.5 * 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(average_precision(&[], 3), 0.0);
    }

    #[test]
    fn upper_bound_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gt3 = rand_pose(&mut rng);
        let gt2 = Pose2D::new(gt3.coords.iter().map(|c| [c[0] * 100.0, c[1] * 100.0]).collect());
        let mut cands: Vec<(Pose2D, Pose3D)> = (0..5)
            .map(|_| {
                let p = rand_pose(&mut rng);
                (Pose2D::new(p.coords.iter().map(|c| [c[0] * 100.0, c[1] * 100.0]).collect()), p)
            })
            .collect();
        cands.insert(3, (gt2.clone(), gt3.clone()));
        let gt = (gt2, gt3);
        assert_eq!(upper_bound_select(&cands, &gt, PoseSpace::ThreeD).unwrap(), 3);
        assert_eq!(upper_bound_select(&cands, &gt, PoseSpace::TwoD).unwrap(), 3);
        assert!(upper_bound_select(&[], &gt, PoseSpace::ThreeD).is_err());
    }

    #[test]
    fn detection_rate_examples() {
        let t = threshold_grid(0.0, 0.3, 7);
        let c = detection_rate_curve(&[0.0; 5], &t).unwrap();
        assert!(c.iter().all(|&(_, r)| r == 1.0));
        let c = detection_rate_curve(&[0.5, 0.7], &t).unwrap();
        assert!(c.iter().all(|&(_, r)| r == 0.0));
        assert!(detection_rate_curve(&[0.1], &[0.2, 0.1]).is_err());
        let errs = [0.05, 0.12, 0.2, 0.11, 0.31];
        let c = detection_rate_curve(&errs, &t).unwrap();
        for (thr, rate) in c {
            let cdf = errs.iter().filter(|&&e| e <= thr).count() as f64 / errs.len() as f64;
            assert_eq!(rate, cdf);
        }
    }
}
