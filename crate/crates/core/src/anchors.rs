//! Anchor-pose codebook: K-means over torso-centered 3D poses under the
//! mean per-joint distance, plus upper-body variants for truncated people.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PoseError, Result};
use crate::pose::{
    box_around, d3d, normalize_to_box, AnchorPose, BodyExtent, BoundingBox, Pose2D, Pose3D,
    PoseSpec, DEFAULT_BOX_MARGIN,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub spec: PoseSpec,
    /// Number of full-body anchors.
    pub k: usize,
    pub seed: u64,
    pub anchors: Vec<AnchorPose>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn has_upper_body(&self) -> bool {
        self.anchors
            .iter()
            .any(|a| a.body_extent == BodyExtent::UpperBody)
    }

    pub fn get(&self, id: usize) -> Option<&AnchorPose> {
        self.anchors.get(id)
    }

    /// Anchor closest to `pose` in 3D among anchors of the given extent.
    /// Ties go to the lowest id.
    pub fn nearest(&self, pose: &Pose3D, extent: Option<BodyExtent>) -> Result<usize> {
        let mut best: Option<(usize, f64)> = None;
        for a in &self.anchors {
            if extent.is_some_and(|e| e != a.body_extent) {
                continue;
            }
            let d = d3d(&a.pose3d, pose)?;
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((a.id, d));
            }
        }
        best.map(|(id, _)| id)
            .ok_or(PoseError::EmptyInput("anchor set"))
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        for (i, a) in self.anchors.iter().enumerate() {
            if a.id != i {
                return Err(PoseError::Malformed(format!(
                    "anchor ids must be dense: position {i} has id {}",
                    a.id
                )));
            }
            let j = self.spec.joint_count();
            if a.pose3d.joint_count() != j || a.pose2d.joint_count() != j {
                return Err(PoseError::JointCountMismatch {
                    expected: j,
                    got: a.pose3d.joint_count(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once no centroid moves by more than this (meters, mean per joint).
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            seed,
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

/// Clustering result together with its convergence trace.
#[derive(Debug, Clone)]
pub struct Clustering {
    pub set: AnchorSet,
    pub assignments: Vec<usize>,
    /// Objective (sum of squared distances to the assigned centroid) before
    /// the first iteration and after every iteration.
    pub distortion: Vec<f64>,
    pub iterations: usize,
}

/// Per-cluster sums of squared `d3d`, members visited in index order.
fn cluster_costs(poses: &[Pose3D], assign: &[usize], centroids: &[Pose3D]) -> Vec<f64> {
    let mut costs = vec![0.0; centroids.len()];
    for (p, &a) in poses.iter().zip(assign) {
        let d = d3d(p, &centroids[a]).expect("joint counts checked");
        costs[a] += d * d;
    }
    costs
}

fn total(costs: &[f64]) -> f64 {
    costs.iter().sum()
}

fn nearest_centroid(p: &Pose3D, centroids: &[Pose3D]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = d3d(p, c).expect("joint counts checked");
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn mean_pose(members: &[&Pose3D], j: usize) -> Pose3D {
    let mut acc = vec![[0.0; 3]; j];
    for m in members {
        for (a, c) in acc.iter_mut().zip(&m.coords) {
            for d in 0..3 {
                a[d] += c[d];
            }
        }
    }
    let n = members.len() as f64;
    Pose3D::new(acc.into_iter().map(|a| a.map(|v| v / n)).collect())
}

fn lerp(a: &Pose3D, b: &Pose3D, t: f64) -> Pose3D {
    Pose3D::new(
        a.coords
            .iter()
            .zip(&b.coords)
            .map(|(x, y)| [0, 1, 2].map(|d| x[d] + t * (y[d] - x[d])))
            .collect(),
    )
}

fn seed_plus_plus(poses: &[Pose3D], k: usize, rng: &mut ChaCha8Rng) -> Vec<Pose3D> {
    let n = poses.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![poses[first].clone()];
    let mut nearest: Vec<f64> = poses
        .iter()
        .map(|p| d3d(p, &centroids[0]).expect("joint counts checked"))
        .collect();
    while centroids.len() < k {
        let weights: Vec<f64> = nearest.iter().map(|d| d * d).collect();
        let sum: f64 = weights.iter().sum();
        let pick = if sum > 0.0 {
            let mut target = rng.random::<f64>() * sum;
            let mut pick = None;
            for (i, w) in weights.iter().enumerate() {
                if *w <= 0.0 {
                    continue;
                }
                pick = Some(i);
                target -= w;
                if target <= 0.0 {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            chosen.iter().position(|&c| !c).expect("n >= k")
        };
        chosen[pick] = true;
        centroids.push(poses[pick].clone());
        for (i, p) in poses.iter().enumerate() {
            let d = d3d(p, &poses[pick]).expect("joint counts checked");
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }
    centroids
}

/// Canonical unit-box layout of a 2D pose: every joint treated as annotated,
/// normalized into its box with the default margin.
pub fn unit_layout(p: &Pose2D) -> Result<Pose2D> {
    let all = p.all_visible();
    let b = box_around(&all, DEFAULT_BOX_MARGIN)?;
    Ok(normalize_to_box(&all, &b))
}

/// Clusters paired 2D-3D poses into `config.k` anchor poses.
///
/// Assignment uses the mean per-joint 3D distance. Each centroid moves to the
/// coordinate mean of its members; when that would raise the cluster's
/// squared-distance sum the move is shortened by halving until it does not,
/// so the objective never increases between iterations.
pub fn kmeans_anchors(
    poses: &[(Pose2D, Pose3D)],
    spec: &PoseSpec,
    config: &KMeansConfig,
) -> Result<Clustering> {
    spec.validate()?;
    let k = config.k;
    if k == 0 {
        return Err(PoseError::InvalidParameter("k must be at least 1".into()));
    }
    if poses.len() < k {
        return Err(PoseError::NotEnoughSamples {
            needed: k,
            have: poses.len(),
        });
    }
    let j = spec.joint_count();
    for (p2, p3) in poses {
        for got in [p2.joint_count(), p3.joint_count()] {
            if got != j {
                return Err(PoseError::JointCountMismatch { expected: j, got });
            }
        }
    }
    let layouts: Vec<Pose2D> = poses
        .iter()
        .map(|(p2, _)| unit_layout(p2))
        .collect::<Result<_>>()?;
    let points: Vec<Pose3D> = poses.iter().map(|(_, p3)| p3.centered(spec)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut centroids = seed_plus_plus(&points, k, &mut rng);
    let mut assign: Vec<usize> = points
        .iter()
        .map(|p| nearest_centroid(p, &centroids).0)
        .collect();
    let mut distortion = vec![total(&cluster_costs(&points, &assign, &centroids))];
    let mut iterations = 0;

    for _ in 0..config.max_iters {
        iterations += 1;
        // Assignment. A point only moves on a strictly smaller distance.
        for (i, p) in points.iter().enumerate() {
            let cur = d3d(p, &centroids[assign[i]]).expect("joint counts checked");
            let (best, d) = nearest_centroid(p, &centroids);
            if d < cur {
                assign[i] = best;
            }
        }
        reseed_empty(&points, &mut assign, &mut centroids);

        // Update.
        let before = cluster_costs(&points, &assign, &centroids);
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let members: Vec<usize> = (0..points.len()).filter(|&i| assign[i] == c).collect();
            let refs: Vec<&Pose3D> = members.iter().map(|&i| &points[i]).collect();
            let target = mean_pose(&refs, j);
            let cost_at = |cand: &Pose3D| -> f64 {
                members
                    .iter()
                    .map(|&i| {
                        let d = d3d(&points[i], cand).expect("joint counts checked");
                        d * d
                    })
                    .sum()
            };
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let cand = if step == 1.0 {
                    target.clone()
                } else {
                    lerp(&centroids[c], &target, step)
                };
                if cost_at(&cand) <= before[c] {
                    accepted = Some(cand);
                    break;
                }
                step *= 0.5;
            }
            if let Some(cand) = accepted {
                shift = shift.max(d3d(&cand, &centroids[c]).expect("joint counts checked"));
                centroids[c] = cand;
            }
        }
        distortion.push(total(&cluster_costs(&points, &assign, &centroids)));
        if shift < config.tol {
            break;
        }
    }

    // Final memberships for the 2D layouts.
    let anchors = (0..k)
        .map(|c| {
            let members: Vec<&Pose2D> = (0..points.len())
                .filter(|&i| assign[i] == c)
                .map(|i| &layouts[i])
                .collect();
            let mut acc = vec![[0.0; 2]; j];
            for m in &members {
                for (a, xy) in acc.iter_mut().zip(&m.coords) {
                    a[0] += xy[0];
                    a[1] += xy[1];
                }
            }
            let n = members.len().max(1) as f64;
            AnchorPose {
                id: c,
                body_extent: BodyExtent::FullBody,
                pose2d: Pose2D::new(acc.into_iter().map(|a| [a[0] / n, a[1] / n]).collect()),
                pose3d: centroids[c].centered(spec),
            }
        })
        .collect();

    Ok(Clustering {
        set: AnchorSet {
            spec: spec.clone(),
            k,
            seed: config.seed,
            anchors,
        },
        assignments: assign,
        distortion,
        iterations,
    })
}

/// Moves the point farthest from its centroid (among clusters with more than
/// one member) into each empty cluster, placing the centroid on it.
fn reseed_empty(points: &[Pose3D], assign: &mut [usize], centroids: &mut [Pose3D]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assign.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if sizes[assign[i]] < 2 {
                continue;
            }
            let d = d3d(p, &centroids[assign[i]]).expect("joint counts checked");
            if far.is_none_or(|(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        let Some((i, _)) = far else { return };
        assign[i] = empty;
        centroids[empty] = points[i].clone();
    }
}

/// Adds one upper-body variant per full-body anchor.
///
/// The variant keeps the 3D pose and rescales the 2D layout so the
/// upper-body joints span the unit box; lower-body joints that sit below the
/// upper body land at y > 1.
pub fn add_upper_body_variants(set: &AnchorSet) -> Result<AnchorSet> {
    let spec = &set.spec;
    let j = spec.joint_count();
    let lower = &spec.lower_body_joints;
    if lower.is_empty() || lower.len() >= j {
        return Err(PoseError::InvalidSpec(
            "spec has no upper/lower body partition".into(),
        ));
    }
    if set.has_upper_body() {
        return Err(PoseError::InvalidParameter(
            "anchor set already contains upper-body anchors".into(),
        ));
    }
    let upper: Vec<usize> = (0..j).filter(|&i| spec.is_upper_body(i)).collect();
    let n = set.anchors.len();
    let mut anchors = set.anchors.clone();
    for a in &set.anchors {
        let layout = &a.pose2d.coords;
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for &u in &upper {
            for d in 0..2 {
                lo[d] = lo[d].min(layout[u][d]);
                hi[d] = hi[d].max(layout[u][d]);
            }
        }
        let b = BoundingBox::new(lo[0], lo[1], hi[0], hi[1]).map_err(|_| {
            PoseError::Degenerate(format!("anchor {} has a flat upper body", a.id))
        })?;
        let mut pose2d = normalize_to_box(&a.pose2d, &b);
        // Pin the extreme upper joints exactly on the unit box edges.
        for &u in &upper {
            for d in 0..2 {
                if layout[u][d] == hi[d] {
                    pose2d.coords[u][d] = 1.0;
                }
                if layout[u][d] == lo[d] {
                    pose2d.coords[u][d] = 0.0;
                }
            }
        }
        anchors.push(AnchorPose {
            id: n + a.id,
            body_extent: BodyExtent::UpperBody,
            pose2d,
            pose3d: a.pose3d.clone(),
        });
    }
    Ok(AnchorSet {
        spec: spec.clone(),
        k: set.k,
        seed: set.seed,
        anchors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Normal};

    fn random_pairs(n: usize, seed: u64) -> Vec<(Pose2D, Pose3D)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = PoseSpec::h13();
        (0..n)
            .map(|_| {
                let p3 = Pose3D::new(
                    (0..13)
                        .map(|_| {
                            [
                                rng.random_range(-0.5..0.5),
                                rng.random_range(-0.9..0.9),
                                rng.random_range(-0.3..0.3),
                            ]
                        })
                        .collect(),
                )
                .centered(&spec);
                let p2 = Pose2D::new(
                    p3.coords
                        .iter()
                        .map(|c| [100.0 * c[0] + 300.0, 100.0 * c[1] + 200.0])
                        .collect(),
                );
                (p2, p3)
            })
            .collect()
    }

    #[test]
    fn k_one_is_the_mean_pose() {
        let spec = PoseSpec::h13();
        let data = random_pairs(40, 5);
        let out = kmeans_anchors(&data, &spec, &KMeansConfig::new(1, 3)).unwrap();
        let refs: Vec<&Pose3D> = data.iter().map(|(_, p)| p).collect();
        let mean = mean_pose(&refs, 13);
        for (a, b) in out.set.anchors[0].pose3d.coords.iter().zip(&mean.coords) {
            for d in 0..3 {
                assert_abs_diff_eq!(a[d], b[d], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn k_equal_n_gives_zero_distortion() {
        let spec = PoseSpec::h13();
        let data = random_pairs(12, 8);
        let out = kmeans_anchors(&data, &spec, &KMeansConfig::new(12, 1)).unwrap();
        assert_eq!(*out.distortion.last().unwrap(), 0.0);
        let mut seen = out.assignments.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 12);
    }

    #[test]
    fn too_few_poses_is_an_error() {
        let spec = PoseSpec::h13();
        let data = random_pairs(3, 8);
        assert!(matches!(
            kmeans_anchors(&data, &spec, &KMeansConfig::new(4, 1)),
            Err(PoseError::NotEnoughSamples { .. })
        ));
    }

    #[test]
    fn recovers_well_separated_modes() {
        let spec = PoseSpec::h13();
        let modes = random_pairs(3, 100);
        // Oracle check on the construction: modes are far apart.
        let spread = 0.01;
        for a in 0..3 {
            for b in (a + 1)..3 {
                assert!(d3d(&modes[a].1, &modes[b].1).unwrap() >= 10.0 * 2.0 * spread);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, spread / 3f64.sqrt()).unwrap();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30 {
            let m = i % 3;
            let p3 = Pose3D::new(
                modes[m]
                    .1
                    .coords
                    .iter()
                    .map(|c| c.map(|v| v + noise.sample(&mut rng)))
                    .collect(),
            )
            .centered(&spec);
            data.push((modes[m].0.clone(), p3));
            labels.push(m);
        }
        let out = kmeans_anchors(&data, &spec, &KMeansConfig::new(3, 11)).unwrap();
        // Brute-force nearest mode as oracle; map clusters to modes by majority.
        let mut agree = 0;
        for (i, (_, p)) in data.iter().enumerate() {
            let nearest_mode = (0..3)
                .min_by(|&a, &b| {
                    d3d(p, &modes[a].1)
                        .unwrap()
                        .total_cmp(&d3d(p, &modes[b].1).unwrap())
                })
                .unwrap();
            assert_eq!(nearest_mode, labels[i]);
            let cluster = out.assignments[i];
            let members: Vec<usize> = (0..30).filter(|&t| out.assignments[t] == cluster).collect();
            let majority = (0..3)
                .max_by_key(|&m| members.iter().filter(|&&t| labels[t] == m).count())
                .unwrap();
            if majority == labels[i] {
                agree += 1;
            }
        }
        assert!(agree as f64 / 30.0 >= 0.9, "agreement {agree}/30");
    }

    #[test]
    fn distortion_never_increases_and_is_deterministic() {
        let spec = PoseSpec::h13();
        let data = random_pairs(80, 21);
        let cfg = KMeansConfig::new(6, 77);
        let a = kmeans_anchors(&data, &spec, &cfg).unwrap();
        let b = kmeans_anchors(&data, &spec, &cfg).unwrap();
        assert_eq!(a.set, b.set);
        for w in a.distortion.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", a.distortion);
        }
        for anchor in &a.set.anchors {
            assert!(anchor.pose3d.is_centered(&spec, 1e-9));
        }
    }

    #[test]
    fn upper_body_variants() {
        let spec = PoseSpec::h13();
        // Arms above the hips: every upper joint sits above every lower joint.
        let mut coords = vec![[0.0; 3]; 13];
        let layout = [
            (0, [-0.15, 0.9]),
            (1, [0.15, 0.9]),
            (2, [-0.14, 0.5]),
            (3, [0.14, 0.5]),
            (4, [-0.12, 0.05]),
            (5, [0.12, 0.05]),
            (6, [-0.6, -0.6]),
            (7, [0.6, -0.6]),
            (8, [-0.4, -0.4]),
            (9, [0.4, -0.4]),
            (10, [-0.18, -0.45]),
            (11, [0.18, -0.45]),
            (12, [0.0, -0.7]),
        ];
        for (j, xy) in layout {
            coords[j] = [xy[0], xy[1], 0.0];
        }
        let p3 = Pose3D::new(coords).centered(&spec);
        let p2 = Pose2D::new(p3.coords.iter().map(|c| [c[0] * 100.0, c[1] * 100.0]).collect());
        let set = kmeans_anchors(&[(p2, p3)], &spec, &KMeansConfig::new(1, 0))
            .unwrap()
            .set;
        let doubled = add_upper_body_variants(&set).unwrap();
        assert_eq!(doubled.len(), 2);
        assert_eq!(doubled.anchors[0].id, 0);
        assert_eq!(doubled.anchors[1].id, 1);
        assert_eq!(doubled.anchors[0].pose3d, doubled.anchors[1].pose3d);
        let v = &doubled.anchors[1];
        assert_eq!(v.body_extent, BodyExtent::UpperBody);
        let max_upper = (0..13)
            .filter(|&j| spec.is_upper_body(j))
            .map(|j| v.pose2d.coords[j][1])
            .fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(max_upper, 1.0, epsilon = 1e-9);
        for &j in &spec.lower_body_joints {
            assert!(v.pose2d.coords[j][1] > 1.0);
        }
        assert!(add_upper_body_variants(&doubled).is_err());
    }

    #[test]
    fn upper_body_needs_partition() {
        let mut spec = PoseSpec::h13();
        let data = random_pairs(4, 2);
        let set = kmeans_anchors(&data, &spec, &KMeansConfig::new(2, 0))
            .unwrap()
            .set;
        spec.lower_body_joints.clear();
        let set = AnchorSet { spec, ..set };
        assert!(add_upper_body_variants(&set).is_err());
    }
}
