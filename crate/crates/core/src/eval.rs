//! Scene-level evaluation: ground-truth matching, per-method summaries,
//! detection-rate curves and the NMS / PPI / upper-bound comparison.

use serde::{Deserialize, Serialize};

use crate::error::{PoseError, Result};
use crate::metrics::{
    detection_rate_curve, head_size, mpjpe_aligned, multi_person_ap, pck3d, pckh, threshold_grid, upper_bound_select,
    ApConfig, ApDetection, ApGroundTruth, ApImage, ApResult, PoseSpace, DEFAULT_HEAD_SIZE_FACTOR, DEFAULT_HEAD_TOP_RATIO,
    DEFAULT_PCK3D_THRESHOLD, DEFAULT_PCKH_ALPHA,
};
use crate::pose::{box_around_subset, d3d, dist2, dist3, iou, Pose2D, Pose3D, PoseSpec};
use crate::ppi::{nms, ppi, Detection, PoseProposal, PpiParams};
use crate::synth::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// PCKh of the matched detection per ground truth.
    Single,
    /// Multi-person AP.
    Multi,
    /// MPJPE and 3DPCK.
    #[serde(rename = "3d")]
    ThreeD,
}

impl std::str::FromStr for Protocol {
    type Err = PoseError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Protocol::Single),
            "multi" => Ok(Protocol::Multi),
            "3d" => Ok(Protocol::ThreeD),
            other => Err(PoseError::InvalidParameter(format!("unknown protocol `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub match_iou: f64,
    pub pckh_alpha: f64,
    pub pck3d_threshold: f64,
    pub head_top_ratio: f64,
    pub head_size_factor: f64,
    pub allow_scale: bool,
    pub ap: ApConfig,
    /// Largest 3D threshold of the detection-rate curves, meters.
    pub curve_max_m: f64,
    pub curve_steps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            match_iou: 0.5,
            pckh_alpha: DEFAULT_PCKH_ALPHA,
            pck3d_threshold: DEFAULT_PCK3D_THRESHOLD,
            head_top_ratio: DEFAULT_HEAD_TOP_RATIO,
            head_size_factor: DEFAULT_HEAD_SIZE_FACTOR,
            allow_scale: false,
            ap: ApConfig::default(),
            curve_max_m: 0.3,
            curve_steps: 31,
        }
    }
}

/// Scores of one matched (ground truth, prediction) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub method: String,
    pub scene: usize,
    pub person: usize,
    pub mpjpe_abs: f64,
    pub mpjpe_aligned: f64,
    pub pckh: f64,
    pub pck3d: f64,
    pub error_2d_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub name: String,
    pub matched: usize,
    pub missed: usize,
    pub false_positives: usize,
    pub mpjpe_abs: f64,
    pub mpjpe_aligned: f64,
    pub per_joint_mpjpe: Vec<f64>,
    pub error_2d_px: f64,
    pub pckh: f64,
    pub pck3d: f64,
    /// Absent for selections that bypass detection (the upper bound).
    pub ap: Option<ApResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub series: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub spec: String,
    pub config: EvalConfig,
    /// Head size rule used for PCKh and AP.
    pub head_size_rule: String,
    pub methods: Vec<MethodSummary>,
    pub curves: Vec<Curve>,
    pub records: Vec<PoseRecord>,
}

/// Predictions for one scene, already paired with ground-truth persons.
struct Paired<'a> {
    scene: usize,
    person: usize,
    pose2d: &'a Pose2D,
    pose3d: &'a Pose3D,
}

fn gt_box_subset(pose: &Pose2D) -> Vec<usize> {
    (0..pose.joint_count()).filter(|&j| pose.visible[j]).collect()
}

/// Greedy matching in decreasing detection score: each detection takes the
/// unmatched ground truth with the highest box IoU, if at least `min_iou`.
/// Boxes use the joints visible in the ground truth.
pub fn match_detections(gts: &[Pose2D], dets: &[Detection], min_iou: f64) -> Result<Vec<Option<usize>>> {
    let mut out = vec![None; gts.len()];
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    for di in order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if out[gi].is_some() {
                continue;
            }
            let subset = gt_box_subset(gt);
            let (Ok(gb), Ok(db)) = (
                box_around_subset(gt, &subset, 0.0),
                box_around_subset(&dets[di].pose2d.all_visible(), &subset, 0.0),
            ) else {
                continue;
            };
            let o = iou(&gb, &db);
            if o >= min_iou && best.is_none_or(|b| o > b.1) {
                best = Some((gi, o));
            }
        }
        if let Some((gi, _)) = best {
            out[gi] = Some(di);
        }
    }
    Ok(out)
}

fn gt_head_size(gt: &Pose2D, spec: &PoseSpec, config: &EvalConfig) -> f64 {
    head_size(gt, spec, config.head_top_ratio, config.head_size_factor)
}

fn summarize(
    name: &str,
    scenes: &[Scene],
    paired: &[Paired],
    spec: &PoseSpec,
    config: &EvalConfig,
    ap: Option<ApResult>,
    missed: usize,
    false_positives: usize,
) -> Result<(MethodSummary, Vec<PoseRecord>, Vec<f64>)> {
    let j = spec.joint_count();
    let mut per_joint = vec![0.0; j];
    let mut records = Vec::with_capacity(paired.len());
    let mut errors = Vec::with_capacity(paired.len());
    for p in paired {
        let gt = &scenes[p.scene].persons[p.person];
        for (k, acc) in per_joint.iter_mut().enumerate() {
            *acc += dist3(p.pose3d.coords[k], gt.pose3d.coords[k]);
        }
        let abs = d3d(p.pose3d, &gt.pose3d)?;
        let hs = gt_head_size(&gt.pose2d, spec, config);
        let visible: Vec<usize> = gt_box_subset(&gt.pose2d);
        let err2 = visible
            .iter()
            .map(|&k| dist2(p.pose2d.coords[k], gt.pose2d.coords[k]))
            .sum::<f64>()
            / visible.len().max(1) as f64;
        records.push(PoseRecord {
            method: name.to_string(),
            scene: scenes[p.scene].index,
            person: p.person,
            mpjpe_abs: abs,
            mpjpe_aligned: mpjpe_aligned(p.pose3d, &gt.pose3d, config.allow_scale)?,
            pckh: pckh(&p.pose2d.all_visible(), &gt.pose2d, config.pckh_alpha, hs)?,
            pck3d: pck3d(p.pose3d, &gt.pose3d, config.pck3d_threshold)?,
            error_2d_px: err2,
        });
        errors.push(abs);
    }
    let n = paired.len();
    let mean = |f: fn(&PoseRecord) -> f64| {
        if n == 0 {
            0.0
        } else {
            records.iter().map(f).sum::<f64>() / n as f64
        }
    };
    if n > 0 {
        per_joint.iter_mut().for_each(|v| *v /= n as f64);
    }
    let summary = MethodSummary {
        name: name.to_string(),
        matched: n,
        missed,
        false_positives,
        mpjpe_abs: per_joint.iter().sum::<f64>() / j as f64,
        mpjpe_aligned: mean(|r| r.mpjpe_aligned),
        per_joint_mpjpe: per_joint,
        error_2d_px: mean(|r| r.error_2d_px),
        pckh: mean(|r| r.pckh),
        pck3d: mean(|r| r.pck3d),
        ap,
    };
    Ok((summary, records, errors))
}

/// Evaluates one method's detections; `detections[i]` belongs to `scenes[i]`.
pub fn evaluate_method(
    name: &str,
    scenes: &[Scene],
    detections: &[Vec<Detection>],
    spec: &PoseSpec,
    config: &EvalConfig,
) -> Result<(MethodSummary, Vec<PoseRecord>, Vec<f64>)> {
    if scenes.len() != detections.len() {
        return Err(PoseError::DimensionMismatch {
            what: "detection lists per scene",
            expected: scenes.len(),
            got: detections.len(),
        });
    }
    let mut paired = Vec::new();
    let mut images = Vec::with_capacity(scenes.len());
    let (mut missed, mut fps) = (0, 0);
    for (si, (scene, dets)) in scenes.iter().zip(detections).enumerate() {
        let gts: Vec<Pose2D> = scene.persons.iter().map(|p| p.pose2d.clone()).collect();
        let m = match_detections(&gts, dets, config.match_iou)?;
        for (pi, d) in m.iter().enumerate() {
            match d {
                Some(di) => paired.push(Paired {
                    scene: si,
                    person: pi,
                    pose2d: &dets[*di].pose2d,
                    pose3d: &dets[*di].pose3d,
                }),
                None => missed += 1,
            }
        }
        fps += dets.len() - m.iter().flatten().count();
        images.push(ApImage {
            detections: dets
                .iter()
                .map(|d| ApDetection { pose: d.pose2d.all_visible(), score: d.score })
                .collect(),
            gts: scene
                .persons
                .iter()
                .map(|p| ApGroundTruth { pose: p.pose2d.clone(), head_size: gt_head_size(&p.pose2d, spec, config) })
                .collect(),
        });
    }
    let ap = multi_person_ap(&images, &config.ap)?;
    summarize(name, scenes, &paired, spec, config, Some(ap), missed, fps)
}

/// Upper bound: for every ground truth, the scene proposal closest in 3D.
pub fn evaluate_upper_bound(
    scenes: &[Scene],
    proposals: &[Vec<PoseProposal>],
    spec: &PoseSpec,
    config: &EvalConfig,
) -> Result<(MethodSummary, Vec<PoseRecord>, Vec<f64>)> {
    if scenes.len() != proposals.len() {
        return Err(PoseError::DimensionMismatch {
            what: "proposal lists per scene",
            expected: scenes.len(),
            got: proposals.len(),
        });
    }
    let mut paired = Vec::new();
    let mut missed = 0;
    for (si, (scene, props)) in scenes.iter().zip(proposals).enumerate() {
        let cands: Vec<(Pose2D, Pose3D)> = props.iter().map(|p| (p.pose2d.clone(), p.pose3d.clone())).collect();
        for (pi, person) in scene.persons.iter().enumerate() {
            if cands.is_empty() {
                missed += 1;
                continue;
            }
            let best = upper_bound_select(&cands, &(person.pose2d.clone(), person.pose3d.clone()), PoseSpace::ThreeD)?;
            paired.push(Paired {
                scene: si,
                person: pi,
                pose2d: &props[best].pose2d,
                pose3d: &props[best].pose3d,
            });
        }
    }
    summarize("ub", scenes, &paired, spec, config, None, missed, 0)
}

impl EvalReport {
    /// Builds a report from named detection sets plus an optional
    /// upper bound computed from the raw proposals.
    pub fn build(
        scenes: &[Scene],
        methods: &[(&str, &[Vec<Detection>])],
        proposals: Option<&[Vec<PoseProposal>]>,
        spec: &PoseSpec,
        config: &EvalConfig,
    ) -> Result<Self> {
        let grid = threshold_grid(0.0, config.curve_max_m, config.curve_steps);
        let mut report = EvalReport {
            spec: spec.name.clone(),
            config: config.clone(),
            head_size_rule: format!(
                "{} x neck-to-head-top distance, head top extrapolated with ratio {}",
                config.head_size_factor, config.head_top_ratio
            ),
            methods: Vec::new(),
            curves: Vec::new(),
            records: Vec::new(),
        };
        let mut push = |(summary, records, errors): (MethodSummary, Vec<PoseRecord>, Vec<f64>)| -> Result<()> {
            report.curves.push(Curve {
                series: summary.name.clone(),
                points: detection_rate_curve(&errors, &grid)?,
            });
            report.methods.push(summary);
            report.records.extend(records);
            Ok(())
        };
        for (name, dets) in methods {
            push(evaluate_method(name, scenes, dets, spec, config)?)?;
        }
        if let Some(props) = proposals {
            push(evaluate_upper_bound(scenes, props, spec, config)?)?;
        }
        Ok(report)
    }

    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.name == name)
    }
}

/// Per-person 3D errors of NMS, PPI and the upper bound on the ground
/// truths matched by both NMS and PPI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionComparison {
    pub persons: usize,
    pub unmatched: usize,
    pub nms: Vec<f64>,
    pub ppi: Vec<f64>,
    pub ub: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

impl SelectionComparison {
    pub fn mean_nms(&self) -> f64 {
        mean(&self.nms)
    }
    pub fn mean_ppi(&self) -> f64 {
        mean(&self.ppi)
    }
    pub fn mean_ub(&self) -> f64 {
        mean(&self.ub)
    }
}

/// Runs NMS and PPI on each scene's proposals and collects paired errors.
pub fn compare_selection(
    scenes: &[Scene],
    proposals: &[Vec<PoseProposal>],
    params: &PpiParams,
    spec: &PoseSpec,
    match_iou: f64,
) -> Result<SelectionComparison> {
    let mut cmp = SelectionComparison { persons: 0, unmatched: 0, nms: vec![], ppi: vec![], ub: vec![] };
    for (scene, props) in scenes.iter().zip(proposals) {
        let gts: Vec<Pose2D> = scene.persons.iter().map(|p| p.pose2d.clone()).collect();
        let n = nms(props, params, Some(spec))?;
        let p = ppi(props, params, Some(spec))?;
        let mn = match_detections(&gts, &n, match_iou)?;
        let mp = match_detections(&gts, &p, match_iou)?;
        let cands: Vec<(Pose2D, Pose3D)> = props.iter().map(|q| (q.pose2d.clone(), q.pose3d.clone())).collect();
        for (gi, person) in scene.persons.iter().enumerate() {
            cmp.persons += 1;
            let (Some(a), Some(b)) = (mn[gi], mp[gi]) else {
                cmp.unmatched += 1;
                continue;
            };
            let best = upper_bound_select(&cands, &(person.pose2d.clone(), person.pose3d.clone()), PoseSpace::ThreeD)?;
            cmp.nms.push(d3d(&n[a].pose3d, &person.pose3d)?);
            cmp.ppi.push(d3d(&p[b].pose3d, &person.pose3d)?);
            cmp.ub.push(d3d(&props[best].pose3d, &person.pose3d)?);
        }
    }
    Ok(cmp)
}
