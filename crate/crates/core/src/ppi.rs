//! Pose proposal integration: rescoring, greedy 2D grouping, 3D mode
//! extraction and score-weighted averaging, plus the NMS baseline.

use serde::{Deserialize, Serialize};

use crate::error::{PoseError, Result};
use crate::pose::{box_around, box_around_subset, d3d, BoundingBox, Pose2D, Pose3D, PoseSpec};

/// Falloff of the outside-box penalty, in pixels.
pub const DEFAULT_SIGMA_B: f64 = 25.0;
/// 3D distance below which proposals share a mode, in meters.
pub const DEFAULT_T3D: f64 = 0.125;
/// 2D overlap needed to join a group.
pub const DEFAULT_GROUP_IOU: f64 = 0.12;

/// A scored 2D-3D pose hypothesis inside a candidate box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseProposal {
    pub anchor_id: usize,
    pub bbox: BoundingBox,
    pub pose2d: Pose2D,
    pub pose3d: Pose3D,
    /// Classification score.
    pub score: f64,
    /// Score after the outside-box penalty; set by [`rescore`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rescored: Option<f64>,
}

impl PoseProposal {
    /// The rescored value when present, the raw score otherwise.
    pub fn effective_score(&self) -> f64 {
        self.rescored.unwrap_or(self.score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpiParams {
    pub iou_threshold: f64,
    pub t3d: f64,
    pub sigma_b: f64,
    #[serde(default)]
    pub min_score: Option<f64>,
    /// Build grouping boxes from head and torso joints only.
    #[serde(default)]
    pub head_torso_boxes: bool,
}

impl Default for PpiParams {
    fn default() -> Self {
        PpiParams {
            iou_threshold: DEFAULT_GROUP_IOU,
            t3d: DEFAULT_T3D,
            sigma_b: DEFAULT_SIGMA_B,
            min_score: None,
            head_torso_boxes: false,
        }
    }
}

impl PpiParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(PoseError::InvalidParameter(format!(
                "iou threshold {} outside [0, 1]",
                self.iou_threshold
            )));
        }
        if !(self.t3d > 0.0) || !self.t3d.is_finite() {
            return Err(PoseError::InvalidParameter(format!("t3d {}", self.t3d)));
        }
        if !(self.sigma_b > 0.0) || !self.sigma_b.is_finite() {
            return Err(PoseError::InvalidParameter(format!("sigma_b {}", self.sigma_b)));
        }
        Ok(())
    }
}

/// Final pose estimate with its accumulated score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub pose2d: Pose2D,
    pub pose3d: Pose3D,
    pub score: f64,
    pub member_count: usize,
    /// Indices of the contributing proposals in the input list.
    pub members: Vec<usize>,
    /// Set when every member had a zero score and an unweighted mean was used.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_weight: bool,
}

/// A 3D mode inside a group: its seed and the proposals averaged with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mode {
    pub seed: usize,
    pub members: Vec<usize>,
}

/// Penalizes joints outside the proposal box:
/// `s' = s * mean_j exp(-dist(p_j, B)^2 / sigma_b^2)`.
pub fn rescore(proposal: &PoseProposal, sigma_b: f64) -> PoseProposal {
    let j = proposal.pose2d.joint_count();
    let sum: f64 = proposal
        .pose2d
        .coords
        .iter()
        .map(|&c| {
            let d = proposal.bbox.distance_outside(c);
            if d == 0.0 {
                1.0
            } else {
                (-(d * d) / (sigma_b * sigma_b)).exp()
            }
        })
        .sum();
    let factor = if j == 0 { 1.0 } else { sum / j as f64 };
    let mut out = proposal.clone();
    out.rescored = Some(if factor == 1.0 {
        proposal.score
    } else {
        proposal.score * factor
    });
    out
}

pub fn rescore_all(proposals: &[PoseProposal], sigma_b: f64) -> Vec<PoseProposal> {
    proposals.iter().map(|p| rescore(p, sigma_b)).collect()
}

/// Box around the regressed 2D joints used for grouping.
pub fn overlap_box(proposal: &PoseProposal, spec: Option<&PoseSpec>, head_torso: bool) -> BoundingBox {
    let all = proposal.pose2d.all_visible();
    let b = match (head_torso, spec) {
        (true, Some(spec)) => box_around_subset(&all, &spec.head_torso_joints, 0.0),
        _ => box_around(&all, 0.0),
    };
    b.unwrap_or(proposal.bbox)
}

/// Indices sorted by decreasing effective score, lower index first on ties.
pub fn score_order(proposals: &[PoseProposal]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&a, &b| {
        proposals[b]
            .effective_score()
            .total_cmp(&proposals[a].effective_score())
            .then(a.cmp(&b))
    });
    order
}

/// Greedy grouping: the best unassigned proposal seeds a group that absorbs
/// every unassigned proposal overlapping it by at least `iou_threshold`.
///
/// Groups are listed in seed order; members keep score order.
pub fn group_by_overlap(boxes: &[BoundingBox], proposals: &[PoseProposal], iou_threshold: f64) -> Vec<Vec<usize>> {
    let order = score_order(proposals);
    let mut assigned = vec![false; proposals.len()];
    let mut groups = Vec::new();
    for &seed in &order {
        if assigned[seed] {
            continue;
        }
        let mut group = Vec::new();
        for &i in &order {
            if !assigned[i] && (i == seed || crate::pose::iou(&boxes[seed], &boxes[i]) >= iou_threshold) {
                assigned[i] = true;
                group.push(i);
            }
        }
        groups.push(group);
    }
    groups
}

/// Splits a score-ordered group into 3D modes. Each mode takes the best
/// uncovered proposal and every uncovered proposal within `t3d` of it.
pub fn extract_modes(group: &[usize], proposals: &[PoseProposal], t3d: f64) -> Result<Vec<Mode>> {
    let mut covered = vec![false; group.len()];
    let mut ordered: Vec<usize> = (0..group.len()).collect();
    ordered.sort_by(|&a, &b| {
        let (pa, pb) = (&proposals[group[a]], &proposals[group[b]]);
        pb.effective_score()
            .total_cmp(&pa.effective_score())
            .then(group[a].cmp(&group[b]))
    });
    let mut modes = Vec::new();
    for &s in &ordered {
        if covered[s] {
            continue;
        }
        let seed = group[s];
        let mut members = Vec::new();
        for &m in &ordered {
            if covered[m] {
                continue;
            }
            let d = d3d(&proposals[seed].pose3d, &proposals[group[m]].pose3d)?;
            if m == s || d < t3d {
                covered[m] = true;
                members.push(group[m]);
            }
        }
        modes.push(Mode { seed, members });
    }
    Ok(modes)
}

/// Score-weighted mean of the member poses. The detection score is the sum
/// of member scores.
pub fn average_mode(mode: &Mode, proposals: &[PoseProposal]) -> Result<Detection> {
    let members = &mode.members;
    let first = members
        .first()
        .map(|&i| &proposals[i])
        .ok_or(PoseError::EmptyInput("mode"))?;
    let j = first.pose3d.joint_count();
    let total: f64 = members.iter().map(|&i| proposals[i].effective_score()).sum();
    let zero_weight = total <= 0.0;
    let weight = |i: usize| {
        if zero_weight {
            1.0 / members.len() as f64
        } else {
            proposals[i].effective_score() / total
        }
    };
    // Accumulate offsets from the seed so identical members reproduce it exactly.
    let mut c2 = first.pose2d.coords.clone();
    let mut c3 = first.pose3d.coords.clone();
    for &i in members {
        let p = &proposals[i];
        if p.pose3d.joint_count() != j || p.pose2d.joint_count() != j {
            return Err(PoseError::JointCountMismatch {
                expected: j,
                got: p.pose3d.joint_count(),
            });
        }
    }
    for k in 0..j {
        let (b2, b3) = (first.pose2d.coords[k], first.pose3d.coords[k]);
        for &i in members {
            let p = &proposals[i];
            let w = weight(i);
            for d in 0..2 {
                c2[k][d] += w * (p.pose2d.coords[k][d] - b2[d]);
            }
            for d in 0..3 {
                c3[k][d] += w * (p.pose3d.coords[k][d] - b3[d]);
            }
        }
    }
    Ok(Detection {
        pose2d: Pose2D::new(c2),
        pose3d: Pose3D::new(c3),
        score: total.max(0.0),
        member_count: members.len(),
        members: members.clone(),
        zero_weight,
    })
}

fn grouped(
    proposals: &[PoseProposal],
    params: &PpiParams,
    spec: Option<&PoseSpec>,
) -> Result<(Vec<PoseProposal>, Vec<Vec<usize>>)> {
    params.validate()?;
    let rescored = rescore_all(proposals, params.sigma_b);
    let boxes: Vec<BoundingBox> = rescored
        .iter()
        .map(|p| overlap_box(p, spec, params.head_torso_boxes))
        .collect();
    let groups = group_by_overlap(&boxes, &rescored, params.iou_threshold);
    Ok((rescored, groups))
}

fn finish(mut dets: Vec<Detection>, params: &PpiParams) -> Vec<Detection> {
    if let Some(min) = params.min_score {
        dets.retain(|d| d.score >= min);
    }
    // Stable: equal scores keep generation order.
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
    dets
}

/// Full integration: rescore, group, extract modes, average, threshold.
/// `spec` is only needed for head-and-torso grouping boxes.
pub fn ppi(proposals: &[PoseProposal], params: &PpiParams, spec: Option<&PoseSpec>) -> Result<Vec<Detection>> {
    let (rescored, groups) = grouped(proposals, params, spec)?;
    let mut dets = Vec::new();
    for g in &groups {
        for mode in extract_modes(g, &rescored, params.t3d)? {
            dets.push(average_mode(&mode, &rescored)?);
        }
    }
    Ok(finish(dets, params))
}

/// Baseline: the top proposal of each overlap group, unchanged.
pub fn nms(proposals: &[PoseProposal], params: &PpiParams, spec: Option<&PoseSpec>) -> Result<Vec<Detection>> {
    let (rescored, groups) = grouped(proposals, params, spec)?;
    let dets = groups
        .iter()
        .map(|g| {
            let top = &rescored[g[0]];
            Detection {
                pose2d: top.pose2d.clone(),
                pose3d: top.pose3d.clone(),
                score: top.effective_score(),
                member_count: 1,
                members: vec![g[0]],
                zero_weight: false,
            }
        })
        .collect();
    Ok(finish(dets, params))
}
