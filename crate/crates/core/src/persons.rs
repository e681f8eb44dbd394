//! From per-joint proposals to persons.
//!
//! Every proposal is reprojected into the per-joint identity images of all
//! views and tagged with the set of 2D person ids found there; proposals that
//! hit no person are ghosts and dropped. Proposals with equal id sets form a
//! group, groups whose id sets mostly overlap are merged, and each group is
//! assembled into a skeleton from the torso outward with distance filters.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::{Duration, Instant};

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::CameraCalib;
use crate::config::FusionConfig;
use crate::depthmask::OccupancyGrid;
use crate::error::{Error, Result};
use crate::fusion::{apply_mask, find_peaks, project_heatmaps, GridGeometry, Proposal, RoomBounds};
use crate::heatmap2d::{
    check_detections, render_view, sample_id, Detection2D, HeatmapStack, IdImageStack, Keypoint2,
    RasterShape,
};
use crate::skeleton::SkeletonDef;

/// 2D person ids a proposal reprojects onto.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct IdSet(BTreeSet<u32>);

impl IdSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().copied()
    }

    pub fn intersection_len(&self, other: &IdSet) -> usize {
        self.0.intersection(&other.0).count()
    }

    pub fn union(&self, other: &IdSet) -> IdSet {
        IdSet(self.0.union(&other.0).copied().collect())
    }
}

impl FromIterator<u32> for IdSet {
    fn from_iter<T: IntoIterator<Item = u32>>(iter: T) -> Self {
        IdSet(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggedProposal {
    pub proposal: Proposal,
    pub ids: IdSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonGroup {
    pub ids: IdSet,
    /// Candidates per joint, best first.
    pub proposals: Vec<Vec<Proposal>>,
}

impl PersonGroup {
    pub fn proposal_count(&self) -> usize {
        self.proposals.iter().map(Vec::len).sum()
    }

    fn sort_candidates(&mut self) {
        for c in &mut self.proposals {
            c.sort_by(by_score_then_voxel);
        }
    }
}

fn by_score_then_voxel(a: &Proposal, b: &Proposal) -> Ordering {
    b.score.total_cmp(&a.score).then(a.voxel.cmp(&b.voxel))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseJoint {
    pub position: Point3<f64>,
    pub score: f64,
}

/// An assembled 3D skeleton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PoseDoc", try_from = "PoseDoc")]
pub struct Pose3D {
    pub joints: Vec<Option<PoseJoint>>,
    /// Mean score of the present joints.
    pub score: f64,
    /// Outlier-filtered group center used during assembly.
    pub center: Point3<f64>,
}

impl Pose3D {
    pub fn present_count(&self) -> usize {
        self.joints.iter().flatten().count()
    }

    pub fn position(&self, joint: usize) -> Option<Point3<f64>> {
        self.joints.get(joint).copied().flatten().map(|j| j.position)
    }

    pub fn positions(&self) -> Vec<Option<Point3<f64>>> {
        self.joints.iter().map(|j| j.map(|j| j.position)).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct PoseDoc {
    score: f64,
    center: [f64; 3],
    /// `[x, y, z, score]` or null
    joints: Vec<Option<[f64; 4]>>,
}

impl From<Pose3D> for PoseDoc {
    fn from(p: Pose3D) -> Self {
        PoseDoc {
            score: p.score,
            center: p.center.coords.into(),
            joints: p
                .joints
                .iter()
                .map(|j| j.map(|j| [j.position.x, j.position.y, j.position.z, j.score]))
                .collect(),
        }
    }
}

impl TryFrom<PoseDoc> for Pose3D {
    type Error = String;

    fn try_from(d: PoseDoc) -> std::result::Result<Self, String> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&d.center) || !d.score.is_finite() {
            return Err("non-finite pose value".into());
        }
        let mut joints = Vec::with_capacity(d.joints.len());
        for j in d.joints {
            joints.push(match j {
                Some(a) if finite(&a) => Some(PoseJoint {
                    position: Point3::new(a[0], a[1], a[2]),
                    score: a[3],
                }),
                Some(_) => return Err("non-finite joint".into()),
                None => None,
            });
        }
        Ok(Pose3D {
            joints,
            score: d.score,
            center: Point3::from(d.center),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyConfig {
    pub center_outlier: f64,
    pub limb_max_dist: f64,
    pub fine_limb_max_dist: f64,
    pub min_joints: usize,
    pub merge_overlap: f64,
    /// Each 2D detection supports at most one person; see [`claim_ids`].
    pub exclusive_ids: bool,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self {
            center_outlier: 1300.0,
            limb_max_dist: 600.0,
            fine_limb_max_dist: 300.0,
            min_joints: 3,
            merge_overlap: 0.5,
            exclusive_ids: true,
        }
    }
}

/// Collects the person ids under the proposal's reprojection in every view.
/// `None` means no view had an id there and the proposal is discarded.
pub fn gather_ids(
    proposal: &Proposal,
    ids: &[IdImageStack],
    calibs: &[CameraCalib],
) -> Option<IdSet> {
    let set: IdSet = ids
        .iter()
        .zip(calibs)
        .filter_map(|(stack, calib)| {
            let px = calib.project(&proposal.position)?;
            sample_id(stack, proposal.joint, &px)
        })
        .collect();
    (!set.is_empty()).then_some(set)
}

/// Buckets proposals by exact id-set equality. Groups come out ordered by id
/// set.
pub fn group_proposals(tagged: Vec<TaggedProposal>, joints: usize) -> Vec<PersonGroup> {
    let mut map: BTreeMap<IdSet, Vec<Vec<Proposal>>> = BTreeMap::new();
    for t in tagged {
        let slot = map.entry(t.ids).or_insert_with(|| vec![Vec::new(); joints]);
        slot[t.proposal.joint].push(t.proposal);
    }
    map.into_iter()
        .map(|(ids, proposals)| {
            let mut g = PersonGroup { ids, proposals };
            g.sort_candidates();
            g
        })
        .collect()
}

/// `|A∩B| / min(|A|, |B|)` as a fraction (numerator, denominator).
fn overlap(a: &IdSet, b: &IdSet) -> (usize, usize) {
    (a.intersection_len(b), a.len().min(b.len()).max(1))
}

/// Repeatedly merges the pair of groups with the highest id overlap ratio
/// while it exceeds `min_overlap`. Ties go to the smaller combined id count,
/// then to the lexicographically smaller pair of id sets.
pub fn merge_groups(mut groups: Vec<PersonGroup>, min_overlap: f64) -> Vec<PersonGroup> {
    groups.sort_by(|a, b| a.ids.cmp(&b.ids));
    loop {
        let mut best: Option<(usize, usize, (usize, usize))> = None;
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let r = overlap(&groups[i].ids, &groups[j].ids);
                if (r.0 as f64) <= min_overlap * r.1 as f64 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bi, bj, br)) => {
                        // r.0/r.1 vs br.0/br.1 without rounding
                        match (r.0 * br.1).cmp(&(br.0 * r.1)) {
                            Ordering::Greater => true,
                            Ordering::Less => false,
                            Ordering::Equal => {
                                let size = groups[i].ids.len() + groups[j].ids.len();
                                let bsize = groups[bi].ids.len() + groups[bj].ids.len();
                                size < bsize
                                    || (size == bsize
                                        && (&groups[i].ids, &groups[j].ids)
                                            < (&groups[bi].ids, &groups[bj].ids))
                            }
                        }
                    }
                };
                if better {
                    best = Some((i, j, r));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        let absorbed = groups.remove(j);
        let target = &mut groups[i];
        target.ids = target.ids.union(&absorbed.ids);
        for (slot, extra) in target.proposals.iter_mut().zip(absorbed.proposals) {
            slot.extend(extra);
        }
        target.sort_candidates();
        groups.sort_by(|a, b| a.ids.cmp(&b.ids));
    }
    groups
}

fn mean(points: impl Iterator<Item = Point3<f64>>) -> Option<Point3<f64>> {
    let (sum, n) = points.fold((Vector3::zeros(), 0usize), |(s, n), p| (s + p.coords, n + 1));
    (n > 0).then(|| Point3::from(sum / n as f64))
}

/// Builds one person from a group, or `None` when fewer than
/// `cfg.min_joints` joints survive the distance filters.
pub fn assemble_person(
    group: &PersonGroup,
    skel: &SkeletonDef,
    cfg: &AssemblyConfig,
) -> Option<Pose3D> {
    // Face and hand points would drag the center towards the head and the
    // wrists, so only body joints place it when there are any.
    let coarse = group
        .proposals
        .iter()
        .enumerate()
        .any(|(j, c)| !c.is_empty() && !skel.group(j).is_fine());
    let best = || {
        group
            .proposals
            .iter()
            .enumerate()
            .filter(move |(j, _)| !coarse || !skel.group(*j).is_fine())
            .filter_map(|(_, c)| c.first())
    };
    let center0 = mean(best().map(|p| p.position))?;
    let center = mean(
        best()
            .map(|p| p.position)
            .filter(|p| (p - center0).norm() <= cfg.center_outlier),
    )
    .unwrap_or(center0);

    // survivors of the center rule, best score first, ties by center distance
    let candidates: Vec<Vec<&Proposal>> = group
        .proposals
        .iter()
        .map(|c| {
            let mut v: Vec<&Proposal> = c
                .iter()
                .filter(|p| (p.position - center).norm() <= cfg.center_outlier)
                .collect();
            v.sort_by(|a, b| {
                b.score.total_cmp(&a.score).then_with(|| {
                    (a.position - center)
                        .norm()
                        .total_cmp(&(b.position - center).norm())
                })
            });
            v
        })
        .collect();

    let mut assigned: Vec<Option<&Proposal>> = vec![None; skel.joint_count()];
    for &t in skel.torso_joints() {
        assigned[t] = candidates.get(t).and_then(|c| c.first().copied());
    }
    for &(parent, child) in skel.limb_chains() {
        let limit = if skel.group(child).is_fine() {
            cfg.fine_limb_max_dist
        } else {
            cfg.limb_max_dist
        };
        let anchor = assigned[parent].map(|p| p.position);
        assigned[child] = candidates.get(child).and_then(|c| {
            c.iter()
                .find(|p| anchor.is_none_or(|a| (p.position - a).norm() <= limit))
                .copied()
        });
    }

    let present = assigned.iter().flatten().count();
    if present < cfg.min_joints.max(1) {
        return None;
    }
    let score = assigned.iter().flatten().map(|p| p.score as f64).sum::<f64>() / present as f64;
    Some(Pose3D {
        joints: assigned
            .iter()
            .map(|p| {
                p.map(|p| PoseJoint {
                    position: p.position,
                    score: p.score as f64,
                })
            })
            .collect(),
        score,
        center,
    })
}

/// Wall time spent in each stage of [`fuse_frame_timed`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub heatmaps: Duration,
    pub projection: Duration,
    pub peaks: Duration,
    pub grouping: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.heatmaps + self.projection + self.peaks + self.grouping
    }
}

impl std::ops::AddAssign for StageTimings {
    fn add_assign(&mut self, o: Self) {
        self.heatmaps += o.heatmaps;
        self.projection += o.projection;
        self.peaks += o.peaks;
        self.grouping += o.grouping;
    }
}

/// Intermediate products of one fused frame, for inspection and plotting.
#[derive(Debug, Clone)]
pub struct FrameTrace {
    /// Camera ids in the order of `heatmaps` and `ids`.
    pub cameras: Vec<String>,
    pub heatmaps: Vec<HeatmapStack>,
    pub ids: Vec<IdImageStack>,
    pub grid: crate::fusion::VoxelGrid,
    pub proposals: Vec<Proposal>,
    pub groups: Vec<PersonGroup>,
    pub poses: Vec<Pose3D>,
    pub timings: StageTimings,
}

/// Full per-frame pipeline: render → fuse → peaks → association → assembly.
///
/// `detections[v]` are the 2D persons seen by `calibs[v]`. The result does
/// not depend on the order of the views or of the detections within a view,
/// nor on the person ids chosen by the caller. Persons come out in descending
/// score order.
pub fn fuse_frame(
    detections: &[Vec<Detection2D>],
    calibs: &[CameraCalib],
    skel: &SkeletonDef,
    bounds: &RoomBounds,
    cfg: &FusionConfig,
    mask: Option<&OccupancyGrid>,
) -> Result<Vec<Pose3D>> {
    Ok(fuse_frame_traced(detections, calibs, skel, bounds, cfg, mask)?.poses)
}

pub fn fuse_frame_timed(
    detections: &[Vec<Detection2D>],
    calibs: &[CameraCalib],
    skel: &SkeletonDef,
    bounds: &RoomBounds,
    cfg: &FusionConfig,
    mask: Option<&OccupancyGrid>,
) -> Result<(Vec<Pose3D>, StageTimings)> {
    let t = fuse_frame_traced(detections, calibs, skel, bounds, cfg, mask)?;
    Ok((t.poses, t.timings))
}

pub fn fuse_frame_traced(
    detections: &[Vec<Detection2D>],
    calibs: &[CameraCalib],
    skel: &SkeletonDef,
    bounds: &RoomBounds,
    cfg: &FusionConfig,
    mask: Option<&OccupancyGrid>,
) -> Result<FrameTrace> {
    cfg.validate()?;
    if detections.len() != calibs.len() {
        return Err(Error::InvalidInput(format!(
            "{} detection lists for {} cameras",
            detections.len(),
            calibs.len()
        )));
    }
    if calibs.len() < 2 {
        return Err(Error::TooFewViews(calibs.len()));
    }
    let geometry = GridGeometry::new(*bounds, cfg.voxel_size)?;
    let heat_cfg = cfg.heatmap();
    let mut timings = StageTimings::default();

    let t0 = Instant::now();
    let (views, canonical) = canonicalize(detections, calibs, skel, heat_cfg.stride)?;
    let view_calibs: Vec<CameraCalib> = views.iter().map(|&v| calibs[v].clone()).collect();
    let rendered: Vec<(HeatmapStack, IdImageStack)> = canonical
        .par_iter()
        .zip(&view_calibs)
        .map(|(dets, c)| {
            render_view(
                dets,
                skel,
                RasterShape::new(c.width(), c.height(), heat_cfg.stride),
                &heat_cfg,
            )
        })
        .collect::<Result<_>>()?;
    let (heatmaps, ids): (Vec<_>, Vec<_>) = rendered.into_iter().unzip();
    timings.heatmaps = t0.elapsed();

    let t1 = Instant::now();
    let mut grid = project_heatmaps(&heatmaps, &view_calibs, geometry, cfg.normalize_visible)?;
    if let Some(mask) = mask {
        grid = apply_mask(grid, mask)?;
    }
    timings.projection = t1.elapsed();

    let t2 = Instant::now();
    let proposals = find_peaks(&grid, cfg.peak_threshold, cfg.max_proposals);
    timings.peaks = t2.elapsed();

    let t3 = Instant::now();
    let tagged: Vec<TaggedProposal> = proposals
        .par_iter()
        .filter_map(|p| {
            gather_ids(p, &ids, &view_calibs).map(|ids| TaggedProposal { proposal: *p, ids })
        })
        .collect();
    let asm = cfg.assembly();
    let groups = merge_groups(group_proposals(tagged, skel.joint_count()), asm.merge_overlap);
    let mut assembled: Vec<(Pose3D, &IdSet)> = groups
        .iter()
        .filter_map(|g| assemble_person(g, skel, &asm).map(|p| (p, &g.ids)))
        .collect();
    assembled.sort_by(|a, b| pose_order(&a.0, &b.0));
    if asm.exclusive_ids {
        assembled = claim_ids(assembled);
    }
    let poses: Vec<Pose3D> = assembled.into_iter().map(|(p, _)| p).collect();
    timings.grouping = t3.elapsed();

    Ok(FrameTrace {
        cameras: view_calibs.iter().map(|c| c.id().to_string()).collect(),
        heatmaps,
        ids,
        grid,
        proposals,
        groups,
        poses,
        timings,
    })
}

fn pose_order(a: &Pose3D, b: &Pose3D) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.center.x.total_cmp(&b.center.x))
        .then(a.center.y.total_cmp(&b.center.y))
        .then(a.center.z.total_cmp(&b.center.z))
}

/// Descending score, ties by center coordinates.
pub fn sort_poses(poses: &mut [Pose3D]) {
    poses.sort_by(pose_order);
}

/// Walks persons best first; each claims its 2D person ids. A person is
/// kept only while at least two of its ids are still unclaimed, so it is
/// backed by detections from two views no better person already explains.
/// Beams of different people crossing in empty space produce exactly such
/// secondhand persons.
pub fn claim_ids<T>(ranked: Vec<(Pose3D, T)>) -> Vec<(Pose3D, T)>
where
    T: std::borrow::Borrow<IdSet>,
{
    let mut claimed: HashSet<u32> = HashSet::new();
    ranked
        .into_iter()
        .filter(|(_, ids)| {
            let ids = ids.borrow();
            let free = ids.iter().filter(|id| !claimed.contains(id)).count();
            if free < 2 {
                return false;
            }
            claimed.extend(ids.iter());
            true
        })
        .collect()
}

fn keypoint_key(a: &Option<Keypoint2>, b: &Option<Keypoint2>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(a), Some(b)) => a
            .u
            .total_cmp(&b.u)
            .then(a.v.total_cmp(&b.v))
            .then(a.confidence.total_cmp(&b.confidence)),
    }
}

/// Orders views by camera id and detections by content, then renumbers
/// persons 1.. in that order so the caller's labels cannot influence any
/// tie-break downstream.
fn canonicalize(
    detections: &[Vec<Detection2D>],
    calibs: &[CameraCalib],
    skel: &SkeletonDef,
    stride: u32,
) -> Result<(Vec<usize>, Vec<Vec<Detection2D>>)> {
    let mut views: Vec<usize> = (0..calibs.len()).collect();
    views.sort_by(|&a, &b| calibs[a].id().cmp(calibs[b].id()));
    if views.windows(2).any(|w| calibs[w[0]].id() == calibs[w[1]].id()) {
        return Err(Error::InvalidInput("duplicate camera id in frame".into()));
    }
    let mut seen = HashSet::new();
    for (dets, c) in detections.iter().zip(calibs) {
        check_detections(
            dets,
            skel.joint_count(),
            &RasterShape::new(c.width(), c.height(), stride),
        )?;
        for d in dets {
            if !seen.insert(d.person_id) {
                return Err(Error::DuplicatePersonId(d.person_id));
            }
        }
    }
    let mut next = 1u32;
    let canonical = views
        .iter()
        .map(|&v| {
            let mut dets = detections[v].clone();
            dets.sort_by(|a, b| {
                a.keypoints
                    .iter()
                    .zip(&b.keypoints)
                    .map(|(x, y)| keypoint_key(x, y))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            });
            for d in &mut dets {
                d.person_id = next;
                next += 1;
            }
            dets
        })
        .collect();
    Ok((views, canonical))
}
