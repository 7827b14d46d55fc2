//! Property tests for the stated invariants of each module.

use posekit::anchors::{kmeans_anchors, KMeansConfig};
use posekit::eval::compare_selection;
use posekit::labeling::{regression_loss, smooth_l1, smooth_l1_grad, LabeledBox, RegressionOutput};
use posekit::metrics::{average_precision, mpjpe_aligned, pck3d, pckh, rigid_align};
use posekit::pose::{BoundingBox, Pose2D, Pose3D, PoseSpec};
use posekit::ppi::{nms, ppi, rescore, PoseProposal, PpiParams};
use posekit::pseudo_gt::{build_library, nn_annotate, MoCapCorpus};
use posekit::synth::{generate_scenes, simulate_proposals, ProposalNoiseModel, SceneConfig, SkeletonModel};
use posekit::toy::{synthesize_dataset, train, DatasetConfig, ToyConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_pose3() -> impl Strategy<Value = Pose3D> {
    prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 13).prop_map(Pose3D::new)
}

fn arb_pose2() -> impl Strategy<Value = Pose2D> {
    prop::collection::vec(prop::array::uniform2(0.0f64..200.0), 13).prop_map(Pose2D::new)
}

fn arb_box() -> impl Strategy<Value = BoundingBox> {
    (0.0f64..150.0, 0.0f64..150.0, 10.0f64..150.0, 10.0f64..150.0)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, x + w, y + h).unwrap())
}

fn arb_proposal() -> impl Strategy<Value = PoseProposal> {
    (0usize..4, arb_box(), arb_pose2(), arb_pose3(), 0.0f64..2.0).prop_map(|(anchor_id, bbox, pose2d, pose3d, score)| {
        PoseProposal { anchor_id, bbox, pose2d, pose3d, score, rescored: None }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn smooth_l1_bounded_by_half_square(x in -5.0f64..5.0) {
        let half = 0.5 * x * x;
        prop_assert!(smooth_l1(x) <= half + 1e-15);
        if x.abs() <= 1.0 {
            prop_assert_eq!(smooth_l1(x), half);
        } else {
            prop_assert!(smooth_l1(x) < half);
        }
    }

    #[test]
    fn smooth_l1_is_c1_at_the_kink(eps in 1e-12f64..1e-6, sign in prop::bool::ANY) {
        let k = if sign { 1.0 } else { -1.0 };
        prop_assert!((smooth_l1(k - eps) - smooth_l1(k + eps)).abs() <= 3.0 * eps);
        prop_assert!((smooth_l1_grad(k - eps) - smooth_l1_grad(k + eps)).abs() <= 3.0 * eps);
    }

    #[test]
    fn regression_gradient_vanishes_outside_the_label_slice(
        v in prop::collection::vec(-2.0f64..2.0, 4 * 65),
        target in prop::collection::vec(-2.0f64..2.0, 65),
        class_label in 1usize..4,
    ) {
        let label = LabeledBox { bbox: BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), class_label, target: Some(target) };
        let (_, grad) = regression_loss(&RegressionOutput { v }, &label, 13).unwrap();
        for (i, g) in grad.iter().enumerate() {
            if i / 65 != class_label {
                prop_assert_eq!(*g, 0.0);
            }
        }
    }

    #[test]
    fn rescore_never_increases(p in arb_proposal(), sigma in 1.0f64..50.0) {
        let r = rescore(&p, sigma).rescored.unwrap();
        let inside = p.pose2d.coords.iter().all(|&c| p.bbox.contains(c));
        prop_assert!(r <= p.score);
        if inside {
            prop_assert_eq!(r, p.score);
        } else if p.score > 0.0 {
            prop_assert!(r < p.score);
        }
    }

    #[test]
    fn ppi_partitions_its_input(props in prop::collection::vec(arb_proposal(), 1..30)) {
        let params = PpiParams::default();
        let dets = ppi(&props, &params, None).unwrap();
        prop_assert!(dets.len() <= props.len());
        let mut seen = vec![0usize; props.len()];
        for d in &dets {
            let sum: f64 = d.members.iter().map(|&i| rescore(&props[i], params.sigma_b).rescored.unwrap()).sum();
            prop_assert!((d.score - sum).abs() <= 1e-12 * sum.max(1.0));
            for &m in &d.members {
                seen[m] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn identical_proposals_integrate_to_that_pose(p in arb_proposal(), n in 1usize..12) {
        let props = vec![p.clone(); n];
        let params = PpiParams::default();
        let dets = ppi(&props, &params, None).unwrap();
        prop_assert_eq!(dets.len(), 1);
        prop_assert_eq!(&dets[0].pose2d.coords, &p.pose2d.coords);
        prop_assert_eq!(&dets[0].pose3d.coords, &p.pose3d.coords);
        let s = rescore(&p, params.sigma_b).rescored.unwrap();
        prop_assert!((dets[0].score - s * n as f64).abs() <= 1e-12 * (s * n as f64).max(1.0));
    }

    #[test]
    fn nms_returns_unmodified_members(props in prop::collection::vec(arb_proposal(), 1..30)) {
        for d in nms(&props, &PpiParams::default(), None).unwrap() {
            prop_assert_eq!(d.members.len(), 1);
            let src = &props[d.members[0]];
            prop_assert_eq!(&d.pose2d, &src.pose2d);
            prop_assert_eq!(&d.pose3d, &src.pose3d);
        }
    }

    #[test]
    fn scale_alignment_is_no_worse(pred in arb_pose3(), gt in arb_pose3()) {
        let rigid = mpjpe_aligned(&pred, &gt, false).unwrap();
        let similar = mpjpe_aligned(&pred, &gt, true).unwrap();
        let sse = |p: &Pose3D| p.coords.iter().zip(&gt.coords).map(|(a, b)| (0..3).map(|d| (a[d] - b[d]).powi(2)).sum::<f64>()).sum::<f64>();
        let (r, _) = rigid_align(&pred, &gt, false).unwrap();
        let (s, _) = rigid_align(&pred, &gt, true).unwrap();
        prop_assert!(sse(&s) <= sse(&r) + 1e-9);
        prop_assert!(rigid.is_finite() && similar.is_finite());
    }

    #[test]
    fn pck_is_monotone_in_its_threshold(pred in arb_pose3(), gt in arb_pose3(), p2 in arb_pose2(), g2 in arb_pose2(),
                                        a in 0.0f64..1.0, b in 0.0f64..1.0, head in 1.0f64..80.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(pck3d(&pred, &gt, lo).unwrap() <= pck3d(&pred, &gt, hi).unwrap());
        prop_assert!(pckh(&p2, &g2, lo, head).unwrap() <= pckh(&p2, &g2, hi, head).unwrap());
    }

    #[test]
    fn ap_is_a_fraction(hits in prop::collection::vec(prop::bool::ANY, 0..40), extra in 0usize..5) {
        let tp = hits.iter().filter(|&&h| h).count();
        let positives = tp + extra;
        let ap = average_precision(&hits, positives);
        prop_assert!((0.0..=1.0).contains(&ap));
        let perfect = positives > 0 && extra == 0 && hits.iter().take(tp).all(|&h| h);
        prop_assert_eq!(ap == 1.0, perfect);
    }
}

#[test]
fn kmeans_is_deterministic_and_centered() {
    let spec = PoseSpec::h13();
    let scenes = generate_scenes(&SceneConfig::default(), 40, 3).unwrap();
    let poses: Vec<_> = scenes.iter().flat_map(|s| &s.persons).map(|p| (p.pose2d.clone(), p.pose3d.clone())).collect();
    let a = kmeans_anchors(&poses, &spec, &KMeansConfig::new(6, 11)).unwrap();
    let b = kmeans_anchors(&poses, &spec, &KMeansConfig::new(6, 11)).unwrap();
    assert_eq!(a.set, b.set);
    assert_eq!(a.assignments, b.assignments);
    for anchor in &a.set.anchors {
        assert!(anchor.pose3d.is_centered(&spec, 1e-12));
    }
}

#[test]
fn upper_bound_dominates_nms() {
    let spec = PoseSpec::h13();
    let train = generate_scenes(&SceneConfig::default(), 60, 5).unwrap();
    let poses: Vec<_> = train
        .iter()
        .flat_map(|s| &s.persons)
        .filter(|p| !p.truncated())
        .map(|p| (p.pose2d.clone(), p.pose3d.clone()))
        .collect();
    let anchors = posekit::add_upper_body_variants(&kmeans_anchors(&poses, &spec, &KMeansConfig::new(8, 5)).unwrap().set).unwrap();
    for seed in 0..5 {
        let scenes = generate_scenes(&SceneConfig::default(), 20, 100 + seed).unwrap();
        let noise = ProposalNoiseModel::default();
        let props: Vec<_> = scenes.iter().map(|s| simulate_proposals(s, &anchors, &noise, seed).unwrap()).collect();
        let cmp = compare_selection(&scenes, &props, &PpiParams::default(), &spec, 0.5).unwrap();
        assert!(cmp.mean_ub() <= cmp.mean_nms());
        for (u, n) in cmp.ub.iter().zip(&cmp.nms) {
            assert!(u <= n);
        }
    }
}

#[test]
fn toy_scores_form_a_sub_distribution_and_training_is_reproducible() {
    let spec = PoseSpec::h13();
    let scenes = generate_scenes(&SceneConfig::default(), 10, 8).unwrap();
    let poses: Vec<_> = scenes
        .iter()
        .flat_map(|s| &s.persons)
        .filter(|p| !p.truncated())
        .map(|p| (p.pose2d.clone(), p.pose3d.clone()))
        .collect();
    let anchors = kmeans_anchors(&poses, &spec, &KMeansConfig::new(4, 1)).unwrap().set;
    let data = synthesize_dataset(&scenes, &anchors, &DatasetConfig { feature_dim: 24, ..DatasetConfig::default() }).unwrap();
    let config = ToyConfig { iterations: 20, seed: 4, ..ToyConfig::default() };
    let (m1, h1) = train(&data, &anchors, &config).unwrap();
    let (m2, h2) = train(&data, &anchors, &config).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(h1, h2);
    for ex in &data {
        let u = m1.scores(&ex.feature).u;
        let fg: f64 = u[1..].iter().sum();
        assert!((fg - (1.0 - u[0])).abs() <= 1e-12);
    }
}

#[test]
fn pseudo_gt_keeps_visible_joints_exactly() {
    let model = SkeletonModel::h13();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let corpus = MoCapCorpus { spec: "h13".into(), poses: (0..40).map(|_| model.sample_with(&mut rng)).collect(), tags: vec![] };
    let lib = build_library(&corpus, 8, 2).unwrap();
    let scenes = generate_scenes(&SceneConfig { truncation_prob: 0.5, ..SceneConfig::default() }, 10, 4).unwrap();
    for p in scenes.iter().flat_map(|s| &s.persons) {
        let a = nn_annotate(&p.pose2d, &lib).unwrap();
        assert!(a.pose2d.visible.iter().all(|&v| v));
        for j in 0..13 {
            if p.pose2d.visible[j] {
                assert_eq!(a.pose2d.coords[j], p.pose2d.coords[j]);
            }
        }
    }
}
