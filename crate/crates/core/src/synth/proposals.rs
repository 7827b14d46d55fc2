//! Noisy pose proposals standing in for a detector's output.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::anchors::AnchorSet;
use crate::error::{PoseError, Result};
use crate::pose::{box_around, denormalize_from_box, BodyExtent, BoundingBox, Pose2D, Pose3D, DEFAULT_BOX_MARGIN};
use crate::ppi::PoseProposal;

use super::scene::{lower_body_hidden, stream_rng, Scene};

/// Logistic score `sigmoid(offset - slope * err + noise)` with `err` the
/// proposal's 3D error in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub offset: f64,
    pub slope_per_m: f64,
    pub noise: f64,
    /// Offset used for background proposals.
    pub background_offset: f64,
}

/// Error model of the simulated detector.
///
/// Each person gets a shared bias (the detector's systematic error on that
/// person). Each proposal adds a viewpoint error (rotation about the
/// vertical axis) and independent joint noise, both scaled by a log-normal
/// quality factor. Confused proposals carry a wrong anchor id and are pulled
/// toward that anchor by `confusion_blend`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalNoiseModel {
    pub proposals_per_person: usize,
    pub box_jitter_px: f64,
    pub joint_noise_2d_px: f64,
    pub joint_noise_3d_m: f64,
    pub bias_2d_px: f64,
    pub bias_3d_m: f64,
    /// Per-proposal rotation about the vertical axis, radians.
    pub yaw_noise_rad: f64,
    pub quality_spread: f64,
    pub anchor_confusion_rate: f64,
    pub confusion_blend: f64,
    /// Share of background false positives in the final proposal list.
    pub background_fraction: f64,
    pub score: ScoreModel,
}

impl ProposalNoiseModel {
    pub fn zero() -> Self {
        ProposalNoiseModel {
            proposals_per_person: 16,
            box_jitter_px: 0.0,
            joint_noise_2d_px: 0.0,
            joint_noise_3d_m: 0.0,
            bias_2d_px: 0.0,
            bias_3d_m: 0.0,
            yaw_noise_rad: 0.0,
            quality_spread: 0.0,
            anchor_confusion_rate: 0.0,
            confusion_blend: 0.0,
            background_fraction: 0.0,
            score: ScoreModel { offset: 3.0, slope_per_m: 40.0, noise: 0.0, background_offset: -3.0 },
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(Self::zero()),
            "default" => Ok(Self::default()),
            other => Err(PoseError::InvalidParameter(format!("unknown noise preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            self.box_jitter_px,
            self.joint_noise_2d_px,
            self.joint_noise_3d_m,
            self.bias_2d_px,
            self.bias_3d_m,
            self.yaw_noise_rad,
            self.quality_spread,
            self.score.noise,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(PoseError::InvalidParameter("noise sigmas must be finite and >= 0".into()));
        }
        let rates = [self.anchor_confusion_rate, self.confusion_blend];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(PoseError::InvalidParameter("rates must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.background_fraction) {
            return Err(PoseError::InvalidParameter("background fraction must lie in [0, 1)".into()));
        }
        if self.proposals_per_person == 0 {
            return Err(PoseError::InvalidParameter("need at least one proposal per person".into()));
        }
        if !self.score.offset.is_finite() || !self.score.slope_per_m.is_finite() || !self.score.background_offset.is_finite() {
            return Err(PoseError::InvalidParameter("score model must be finite".into()));
        }
        Ok(())
    }

    /// Background proposals added for `person_proposals` real ones.
    pub fn background_count(&self, person_proposals: usize) -> usize {
        let f = self.background_fraction;
        (person_proposals as f64 * f / (1.0 - f)).round() as usize
    }
}

impl Default for ProposalNoiseModel {
    /// Systematic error dominates: proposals of one person are strongly
    /// correlated, so integration gains little over the top proposal while
    /// the closest proposal stays clearly better than both.
    fn default() -> Self {
        ProposalNoiseModel {
            proposals_per_person: 16,
            box_jitter_px: 6.0,
            joint_noise_2d_px: 2.0,
            joint_noise_3d_m: 0.01,
            bias_2d_px: 5.0,
            bias_3d_m: 0.04,
            yaw_noise_rad: 0.15,
            quality_spread: 1.0,
            anchor_confusion_rate: 0.1,
            confusion_blend: 0.5,
            background_fraction: 0.2,
            score: ScoreModel { offset: 3.0, slope_per_m: 40.0, noise: 0.5, background_offset: -3.0 },
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gaussian<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("sigma validated").sample(rng)
    }
}

fn jitter_box<R: Rng>(rng: &mut R, b: &BoundingBox, sigma: f64) -> BoundingBox {
    if sigma == 0.0 {
        return *b;
    }
    let x0 = b.x_min + gaussian(rng, sigma);
    let y0 = b.y_min + gaussian(rng, sigma);
    let x1 = (b.x_max + gaussian(rng, sigma)).max(x0 + 1.0);
    let y1 = (b.y_max + gaussian(rng, sigma)).max(y0 + 1.0);
    BoundingBox { x_min: x0, y_min: y0, x_max: x1, y_max: y1 }
}

fn rotate_y(coords: &[[f64; 3]], angle: f64) -> Vec<[f64; 3]> {
    let (s, c) = angle.sin_cos();
    coords.iter().map(|p| [c * p[0] + s * p[2], p[1], -s * p[0] + c * p[2]]).collect()
}

fn lerp2(a: &Pose2D, b: &Pose2D, t: f64) -> Vec<[f64; 2]> {
    a.coords
        .iter()
        .zip(&b.coords)
        .map(|(p, q)| [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])])
        .collect()
}

/// Proposals for one scene, drawn from stream `scene.index` of `seed`.
///
/// Person proposals come first, `proposals_per_person` per person in person
/// order, followed by background false positives.
pub fn simulate_proposals(
    scene: &Scene,
    anchors: &AnchorSet,
    noise: &ProposalNoiseModel,
    seed: u64,
) -> Result<Vec<PoseProposal>> {
    noise.validate()?;
    anchors.validate()?;
    if anchors.is_empty() {
        return Err(PoseError::EmptyInput("anchor set"));
    }
    let spec = &anchors.spec;
    let mut rng = stream_rng(seed, scene.index);
    let mut out = Vec::new();

    for person in &scene.persons {
        let gt2 = &person.pose2d;
        let gt3 = &person.pose3d;
        if gt2.joint_count() != spec.joint_count() {
            return Err(PoseError::JointCountMismatch { expected: spec.joint_count(), got: gt2.joint_count() });
        }
        let gt_box = box_around(gt2, DEFAULT_BOX_MARGIN)?;
        let extent = if anchors.has_upper_body() && lower_body_hidden(gt2, spec) {
            BodyExtent::UpperBody
        } else {
            BodyExtent::FullBody
        };
        let nearest = anchors.nearest(gt3, Some(extent))?;
        let same_extent: Vec<usize> = anchors
            .anchors
            .iter()
            .filter(|a| a.body_extent == extent && a.id != nearest)
            .map(|a| a.id)
            .collect();
        let j = spec.joint_count();
        let bias2: Vec<[f64; 2]> = (0..j).map(|_| [0; 2].map(|_| gaussian(&mut rng, noise.bias_2d_px))).collect();
        let bias3: Vec<[f64; 3]> = (0..j).map(|_| [0; 3].map(|_| gaussian(&mut rng, noise.bias_3d_m))).collect();

        for _ in 0..noise.proposals_per_person {
            let q = gaussian(&mut rng, noise.quality_spread).exp();
            let bbox = jitter_box(&mut rng, &gt_box, noise.box_jitter_px);
            let confused = !same_extent.is_empty() && rng.random_bool(noise.anchor_confusion_rate);
            let anchor_id = if confused {
                same_extent[rng.random_range(0..same_extent.len())]
            } else {
                nearest
            };
            let mut c2 = gt2.coords.clone();
            let yaw = q * gaussian(&mut rng, noise.yaw_noise_rad);
            let mut c3 = if yaw == 0.0 { gt3.coords.clone() } else { rotate_y(&gt3.coords, yaw) };
            let mut moved3d = yaw != 0.0;
            for k in 0..j {
                for d in 0..2 {
                    c2[k][d] += bias2[k][d] + q * gaussian(&mut rng, noise.joint_noise_2d_px);
                }
                for d in 0..3 {
                    let e = bias3[k][d] + q * gaussian(&mut rng, noise.joint_noise_3d_m);
                    moved3d |= e != 0.0;
                    c3[k][d] += e;
                }
            }
            let mut pose2d = Pose2D::new(c2);
            let mut pose3d = Pose3D::new(c3);
            if confused && noise.confusion_blend > 0.0 {
                let a = &anchors.anchors[anchor_id];
                let placed = denormalize_from_box(&a.pose2d, &bbox);
                pose2d = Pose2D::new(lerp2(&pose2d, &placed, noise.confusion_blend));
                let t = noise.confusion_blend;
                pose3d = Pose3D::new(
                    pose3d
                        .coords
                        .iter()
                        .zip(&a.pose3d.coords)
                        .map(|(p, q)| [0, 1, 2].map(|d| p[d] + t * (q[d] - p[d])))
                        .collect(),
                );
                moved3d = true;
            }
            if moved3d {
                pose3d = pose3d.centered(spec);
            }
            let err = crate::pose::d3d(&pose3d, gt3)?;
            let logit = noise.score.offset - noise.score.slope_per_m * err + gaussian(&mut rng, noise.score.noise);
            out.push(PoseProposal { anchor_id, bbox, pose2d, pose3d, score: sigmoid(logit), rescored: None });
        }
    }

    let n_bg = noise.background_count(out.len());
    let (w, h) = (scene.camera.width, scene.camera.height);
    for _ in 0..n_bg {
        let bw = rng.random_range(0.05..=0.2) * w;
        let bh = rng.random_range(0.2..=0.5) * h;
        let x0 = rng.random_range(0.0..=(w - bw));
        let y0 = rng.random_range(0.0..=(h - bh));
        let bbox = BoundingBox { x_min: x0, y_min: y0, x_max: x0 + bw, y_max: y0 + bh };
        let a = &anchors.anchors[rng.random_range(0..anchors.len())];
        let placed = denormalize_from_box(&a.pose2d, &bbox);
        let coords2 = placed
            .coords
            .iter()
            .map(|c| [c[0] + gaussian(&mut rng, noise.joint_noise_2d_px), c[1] + gaussian(&mut rng, noise.joint_noise_2d_px)])
            .collect();
        let coords3 = a
            .pose3d
            .coords
            .iter()
            .map(|c| c.map(|v| v + gaussian(&mut rng, noise.joint_noise_3d_m)))
            .collect();
        let logit = noise.score.background_offset + gaussian(&mut rng, noise.score.noise);
        out.push(PoseProposal {
            anchor_id: a.id,
            bbox,
            pose2d: Pose2D::new(coords2),
            pose3d: Pose3D::new(coords3).centered(spec),
            score: sigmoid(logit),
            rescored: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchors::{add_upper_body_variants, kmeans_anchors, KMeansConfig};
    use crate::pose::{d3d, PoseSpec};
    use crate::synth::scene::{generate_scenes, SceneConfig};
    use crate::synth::skeleton::{sample_pose, SkeletonModel};

    fn anchors(k: usize) -> AnchorSet {
        let m = SkeletonModel::h13();
        let cam = SceneConfig::default().camera();
        let poses: Vec<(Pose2D, Pose3D)> = (0..200)
            .map(|s| {
                let p3 = sample_pose(&m, s);
                let pl = super::super::camera::Placement { scale: 130.0, roll: 0.0, offset: [400.0, 300.0] };
                (super::super::camera::project(&p3, &pl, &cam), p3)
            })
            .collect();
        let set = kmeans_anchors(&poses, &PoseSpec::h13(), &KMeansConfig::new(k, 1)).unwrap().set;
        add_upper_body_variants(&set).unwrap()
    }

    fn ranks(xs: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        let mut r = vec![0.0; xs.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut k = i;
            while k + 1 < idx.len() && xs[idx[k + 1]] == xs[idx[i]] {
                k += 1;
            }
            let avg = (i + k) as f64 / 2.0;
            for &m in &idx[i..=k] {
                r[m] = avg;
            }
            i = k + 1;
        }
        r
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn zero_noise_reproduces_ground_truth() {
        let set = anchors(6);
        let scenes = generate_scenes(&SceneConfig::default(), 5, 3).unwrap();
        for s in &scenes {
            let props = simulate_proposals(s, &set, &ProposalNoiseModel::zero(), 3).unwrap();
            assert_eq!(props.len(), s.persons.len() * 16);
            for (i, p) in props.iter().enumerate() {
                let gt = &s.persons[i / 16];
                assert_eq!(p.pose3d, gt.pose3d);
                assert_eq!(p.pose2d.coords, gt.pose2d.coords);
            }
        }
    }

    #[test]
    fn counts_include_background() {
        let set = anchors(6);
        let noise = ProposalNoiseModel::default();
        for s in generate_scenes(&SceneConfig::default(), 10, 4).unwrap() {
            let props = simulate_proposals(&s, &set, &noise, 4).unwrap();
            let real = s.persons.len() * noise.proposals_per_person;
            assert_eq!(props.len(), real + noise.background_count(real));
            assert_eq!(noise.background_count(16), 4);
        }
    }

    #[test]
    fn scores_track_pose_error() {
        let set = anchors(6);
        let noise = ProposalNoiseModel { background_fraction: 0.0, ..ProposalNoiseModel::default() };
        let mut scores = Vec::new();
        let mut neg_err = Vec::new();
        for s in generate_scenes(&SceneConfig::default(), 40, 5).unwrap() {
            for (i, p) in simulate_proposals(&s, &set, &noise, 5).unwrap().iter().enumerate() {
                scores.push(p.score);
                neg_err.push(-d3d(&p.pose3d, &s.persons[i / 16].pose3d).unwrap());
            }
        }
        assert!(scores.len() >= 1000);
        let rho = pearson(&ranks(&scores), &ranks(&neg_err));
        assert!(rho > 0.5, "spearman {rho}");
    }

    #[test]
    fn deterministic_from_seed() {
        let set = anchors(6);
        let s = &generate_scenes(&SceneConfig::default(), 1, 6).unwrap()[0];
        let a = simulate_proposals(s, &set, &ProposalNoiseModel::default(), 6).unwrap();
        let b = simulate_proposals(s, &set, &ProposalNoiseModel::default(), 6).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_noise_is_rejected() {
        let mut n = ProposalNoiseModel::default();
        n.anchor_confusion_rate = 1.5;
        assert!(n.validate().is_err());
        n = ProposalNoiseModel::default();
        n.joint_noise_3d_m = -1.0;
        assert!(n.validate().is_err());
        assert!(ProposalNoiseModel::preset("loud").is_err());
    }
}
