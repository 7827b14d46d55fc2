//! Pseudo ground truth: a library of MoCap poses projected from random
//! virtual views, queried by nearest neighbour on normalized 2D poses.

use std::io::{Read, Write};

use nalgebra::Rotation3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PoseError, Result};
use crate::pose::{d2d, Pose2D, Pose3D, PoseSpec};

/// Elevation range of the virtual views, radians.
pub const MAX_ELEVATION: f64 = 20.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoCapCorpus {
    pub spec: String,
    pub poses: Vec<Pose3D>,
    /// Optional source tag per pose.
    #[serde(default)]
    pub tags: Vec<String>,
}

impl MoCapCorpus {
    pub fn validate(&self) -> Result<()> {
        let spec = PoseSpec::by_name(&self.spec)?;
        if self.poses.is_empty() {
            return Err(PoseError::EmptyInput("mocap corpus"));
        }
        if !self.tags.is_empty() && self.tags.len() != self.poses.len() {
            return Err(PoseError::DimensionMismatch { what: "corpus tags", expected: self.poses.len(), got: self.tags.len() });
        }
        for p in &self.poses {
            if p.joint_count() != spec.joint_count() {
                return Err(PoseError::JointCountMismatch { expected: spec.joint_count(), got: p.joint_count() });
            }
            if !p.is_centered(&spec, 1e-9) {
                return Err(PoseError::Malformed("corpus pose is not torso-centered".into()));
            }
        }
        Ok(())
    }
}

/// View angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub azimuth: f64,
    pub elevation: f64,
}

impl View {
    pub const IDENTITY: View = View { azimuth: 0.0, elevation: 0.0 };

    /// Camera rotation: azimuth about the vertical axis, then elevation
    /// about the horizontal image axis.
    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(self.elevation, 0.0, 0.0) * Rotation3::from_euler_angles(0.0, self.azimuth, 0.0)
    }

    pub fn orient(&self, pose: &Pose3D) -> Pose3D {
        if *self == View::IDENTITY {
            return pose.clone();
        }
        let r = self.rotation();
        Pose3D::new(
            pose.coords
                .iter()
                .map(|&p| {
                    let v = r * nalgebra::Vector3::from(p);
                    [v[0], v[1], v[2]]
                })
                .collect(),
        )
    }
}

/// Orthographic projection: drop the depth coordinate.
pub fn drop_depth(pose: &Pose3D) -> Pose2D {
    Pose2D::new(pose.coords.iter().map(|p| [p[0], p[1]]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub pose2d: Pose2D,
    /// Camera-oriented 3D pose whose projection is `pose2d`.
    pub pose3d: Pose3D,
    pub source: usize,
    pub view: View,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoseLibrary {
    pub spec: String,
    pub views_per_pose: usize,
    pub seed: u64,
    pub entries: Vec<LibraryEntry>,
}

impl ProjectedPoseLibrary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn entry(pose: &Pose3D, source: usize, view: View) -> LibraryEntry {
    let pose3d = view.orient(pose);
    LibraryEntry { pose2d: drop_depth(&pose3d), pose3d, source, view }
}

/// `views_per_pose` random views per corpus pose: azimuth uniform in
/// [0, 2π), elevation uniform in ±20°, no roll.
pub fn build_library(corpus: &MoCapCorpus, views_per_pose: usize, seed: u64) -> Result<ProjectedPoseLibrary> {
    corpus.validate()?;
    if views_per_pose == 0 {
        return Err(PoseError::InvalidParameter("views_per_pose must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(corpus.poses.len() * views_per_pose);
    for (i, pose) in corpus.poses.iter().enumerate() {
        for _ in 0..views_per_pose {
            let view = View {
                azimuth: rng.random_range(0.0..std::f64::consts::TAU),
                elevation: rng.random_range(-MAX_ELEVATION..=MAX_ELEVATION),
            };
            entries.push(entry(pose, i, view));
        }
    }
    Ok(ProjectedPoseLibrary { spec: corpus.spec.clone(), views_per_pose, seed, entries })
}

/// Library with the same explicit views for every corpus pose.
pub fn build_library_with_views(corpus: &MoCapCorpus, views: &[View]) -> Result<ProjectedPoseLibrary> {
    corpus.validate()?;
    if views.is_empty() {
        return Err(PoseError::InvalidParameter("need at least one view".into()));
    }
    let entries = corpus
        .poses
        .iter()
        .enumerate()
        .flat_map(|(i, p)| views.iter().map(move |&v| entry(p, i, v)))
        .collect();
    Ok(ProjectedPoseLibrary { spec: corpus.spec.clone(), views_per_pose: views.len(), seed: 0, entries })
}

/// Joints of `pose` under `mask`, centered on their centroid and divided by
/// their Frobenius norm. `None` when the masked joints coincide.
pub fn normalize_masked(pose: &Pose2D, mask: &[bool]) -> Option<Pose2D> {
    let idx: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
    if idx.is_empty() {
        return None;
    }
    let n = idx.len() as f64;
    let mut c = [0.0; 2];
    for &j in &idx {
        c[0] += pose.coords[j][0] / n;
        c[1] += pose.coords[j][1] / n;
    }
    let norm = idx
        .iter()
        .map(|&j| (pose.coords[j][0] - c[0]).powi(2) + (pose.coords[j][1] - c[1]).powi(2))
        .sum::<f64>()
        .sqrt();
    if !(norm > 0.0) {
        return None;
    }
    let coords = pose
        .coords
        .iter()
        .map(|p| [(p[0] - c[0]) / norm, (p[1] - c[1]) / norm])
        .collect();
    Some(Pose2D { coords, visible: mask.to_vec() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    /// Query joints where visible, matched joints mapped into the query
    /// frame elsewhere. All joints visible.
    pub pose2d: Pose2D,
    pub pose3d: Pose3D,
    /// Normalized 2D distance to the match.
    pub distance: f64,
    pub entry: usize,
}

/// Index and distance of the nearest library entry (lowest index on ties).
pub fn nearest_entry(query: &Pose2D, library: &ProjectedPoseLibrary) -> Result<(usize, f64)> {
    let have = query.visible_count();
    if have < 2 {
        return Err(PoseError::NotEnoughVisibleJoints { needed: 2, have });
    }
    if library.is_empty() {
        return Err(PoseError::EmptyInput("library"));
    }
    let mask = &query.visible;
    let q = normalize_masked(query, mask).ok_or_else(|| PoseError::Degenerate("visible query joints coincide".into()))?;
    let mut best = (0, f64::INFINITY);
    for (i, e) in library.entries.iter().enumerate() {
        if e.pose2d.joint_count() != query.joint_count() {
            return Err(PoseError::JointCountMismatch { expected: query.joint_count(), got: e.pose2d.joint_count() });
        }
        let Some(n) = normalize_masked(&e.pose2d, mask) else {
            continue;
        };
        let d = d2d(&q, &n, mask)?;
        if d < best.1 {
            best = (i, d);
        }
    }
    if !best.1.is_finite() {
        return Err(PoseError::Degenerate("no library entry is comparable".into()));
    }
    Ok(best)
}

/// Completes a partial 2D pose and attaches the matched entry's 3D pose.
pub fn nn_annotate(query: &Pose2D, library: &ProjectedPoseLibrary) -> Result<Annotation> {
    query.validate()?;
    let (idx, distance) = nearest_entry(query, library)?;
    let e = &library.entries[idx];
    let vis: Vec<usize> = (0..query.joint_count()).filter(|&j| query.visible[j]).collect();
    let n = vis.len() as f64;
    let (mut me, mut mq) = ([0.0; 2], [0.0; 2]);
    for &j in &vis {
        for d in 0..2 {
            me[d] += e.pose2d.coords[j][d] / n;
            mq[d] += query.coords[j][d] / n;
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &j in &vis {
        for d in 0..2 {
            let a = e.pose2d.coords[j][d] - me[d];
            num += a * (query.coords[j][d] - mq[d]);
            den += a * a;
        }
    }
    let s = num / den;
    let coords = (0..query.joint_count())
        .map(|j| {
            if query.visible[j] {
                query.coords[j]
            } else {
                [0, 1].map(|d| mq[d] + s * (e.pose2d.coords[j][d] - me[d]))
            }
        })
        .collect();
    Ok(Annotation { pose2d: Pose2D::new(coords), pose3d: e.pose3d.clone(), distance, entry: idx })
}

const MAGIC: &[u8; 4] = b"PPL1";

fn put_u64(w: &mut impl Write, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64(w: &mut impl Write, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

/// Binary layout (all integers u64 and floats f64, little endian):
/// `PPL1`, spec name length and bytes, joint count, views per pose, seed,
/// entry count, then per entry: source, azimuth, elevation, 2D coords,
/// 3D coords. Entries are exact projections so visibility is implied.
pub fn write_binary(lib: &ProjectedPoseLibrary, w: &mut impl Write) -> std::io::Result<()> {
    let j = lib.entries.first().map_or(0, |e| e.pose2d.joint_count());
    w.write_all(MAGIC)?;
    put_u64(w, lib.spec.len() as u64)?;
    w.write_all(lib.spec.as_bytes())?;
    put_u64(w, j as u64)?;
    put_u64(w, lib.views_per_pose as u64)?;
    put_u64(w, lib.seed)?;
    put_u64(w, lib.entries.len() as u64)?;
    for e in &lib.entries {
        put_u64(w, e.source as u64)?;
        put_f64(w, e.view.azimuth)?;
        put_f64(w, e.view.elevation)?;
        for c in &e.pose2d.coords {
            c.iter().try_for_each(|&v| put_f64(w, v))?;
        }
        for c in &e.pose3d.coords {
            c.iter().try_for_each(|&v| put_f64(w, v))?;
        }
    }
    Ok(())
}

struct Reader<'a, R: Read>(&'a mut R);

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0
            .read_exact(&mut b)
            .map_err(|e| PoseError::Malformed(format!("truncated library: {e}")))?;
        Ok(b)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

pub fn read_binary(r: &mut impl Read) -> Result<ProjectedPoseLibrary> {
    let mut rd = Reader(r);
    if &rd.bytes::<4>()? != MAGIC {
        return Err(PoseError::Malformed("missing PPL1 header".into()));
    }
    let name_len = rd.u64()? as usize;
    if name_len > 256 {
        return Err(PoseError::Malformed("spec name too long".into()));
    }
    let mut name = vec![0u8; name_len];
    rd.0.read_exact(&mut name).map_err(|e| PoseError::Malformed(e.to_string()))?;
    let spec = String::from_utf8(name).map_err(|e| PoseError::Malformed(e.to_string()))?;
    let j = rd.u64()? as usize;
    let views_per_pose = rd.u64()? as usize;
    let seed = rd.u64()?;
    let count = rd.u64()? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let source = rd.u64()? as usize;
        let view = View { azimuth: rd.f64()?, elevation: rd.f64()? };
        let mut c2 = Vec::with_capacity(j);
        for _ in 0..j {
            c2.push([rd.f64()?, rd.f64()?]);
        }
        let mut c3 = Vec::with_capacity(j);
        for _ in 0..j {
            c3.push([rd.f64()?, rd.f64()?, rd.f64()?]);
        }
        entries.push(LibraryEntry { pose2d: Pose2D::new(c2), pose3d: Pose3D::new(c3), source, view });
    }
    Ok(ProjectedPoseLibrary { spec, views_per_pose, seed, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{sample_pose, SkeletonModel};

    fn corpus(n: u64) -> MoCapCorpus {
        let m = SkeletonModel::h13();
        MoCapCorpus { spec: "h13".into(), poses: (0..n).map(|s| sample_pose(&m, s)).collect(), tags: vec![] }
    }

    #[test]
    fn identity_view_drops_depth() {
        let c = corpus(5);
        let lib = build_library_with_views(&c, &[View::IDENTITY]).unwrap();
        assert_eq!(lib.len(), 5);
        for (e, p) in lib.entries.iter().zip(&c.poses) {
            for (a, b) in e.pose2d.coords.iter().zip(&p.coords) {
                assert_eq!(*a, [b[0], b[1]]);
            }
        }
    }

    #[test]
    fn size_and_determinism() {
        let c = corpus(7);
        let a = build_library(&c, 3, 11).unwrap();
        assert_eq!(a.len(), 21);
        assert_eq!(a, build_library(&c, 3, 11).unwrap());
        for e in &a.entries {
            assert!(e.view.elevation.abs() <= MAX_ELEVATION);
            assert_eq!(e.pose2d, drop_depth(&e.pose3d));
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let c = MoCapCorpus { spec: "h13".into(), poses: vec![], tags: vec![] };
        assert!(build_library(&c, 4, 0).is_err());
        assert!(build_library(&corpus(2), 0, 0).is_err());
    }

    #[test]
    fn self_retrieval_full_and_masked() {
        let lib = build_library(&corpus(20), 4, 5).unwrap();
        for idx in [0, 17, 55, 79] {
            let e = &lib.entries[idx];
            let full = nn_annotate(&e.pose2d, &lib).unwrap();
            assert_eq!((full.entry, full.distance), (idx, 0.0));

            let mut masked = e.pose2d.clone();
            for j in [0, 3, 7, 12] {
                masked.visible[j] = false;
            }
            let a = nn_annotate(&masked, &lib).unwrap();
            assert_eq!(a.entry, idx);
            assert!(a.distance <= 1e-12);
            for (x, y) in a.pose2d.coords.iter().zip(&e.pose2d.coords) {
                assert!((x[0] - y[0]).abs() <= 1e-9 && (x[1] - y[1]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn completion_keeps_visible_joints() {
        let lib = build_library(&corpus(10), 4, 6).unwrap();
        let mut q = lib.entries[3].pose2d.translated(400.0, 250.0);
        q.coords.iter_mut().for_each(|c| {
            c[0] = 120.0 * c[0] + 3.0;
            c[1] = 120.0 * c[1] - 1.0;
        });
        q.visible[2] = false;
        let a = nn_annotate(&q, &lib).unwrap();
        for j in 0..13 {
            if q.visible[j] {
                assert_eq!(a.pose2d.coords[j], q.coords[j]);
            }
        }
        assert!(a.pose2d.visible.iter().all(|&v| v));
    }

    #[test]
    fn too_few_joints() {
        let lib = build_library(&corpus(3), 2, 0).unwrap();
        let mut q = lib.entries[0].pose2d.clone();
        q.visible = vec![false; 13];
        q.visible[4] = true;
        assert!(matches!(nn_annotate(&q, &lib), Err(PoseError::NotEnoughVisibleJoints { .. })));
    }

    #[test]
    fn binary_round_trip() {
        let lib = build_library(&corpus(4), 3, 8).unwrap();
        let mut buf = Vec::new();
        write_binary(&lib, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"PPL1");
        let back = read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(back, lib);
        assert!(read_binary(&mut &b"PPL0"[..]).is_err());
        assert!(read_binary(&mut &buf[..buf.len() - 3]).is_err());
    }
}
