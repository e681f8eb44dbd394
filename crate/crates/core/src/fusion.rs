//! Voxel fusion: heatmap beams from every view are averaged into one shared
//! grid per joint type, then thresholded peaks are extracted with 26-neighbour
//! suppression and refined to sub-voxel precision.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::CameraCalib;
use crate::depthmask::OccupancyGrid;
use crate::error::{Error, Result};
use crate::heatmap2d::{sample_bilinear, HeatmapStack};
use crate::skeleton::JointId;

/// Axis-aligned room box in world millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl RoomBounds {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if !(self.min[a].is_finite() && self.max[a].is_finite() && self.max[a] > self.min[a]) {
                return Err(Error::InvalidInput(format!(
                    "room bounds must satisfy max > min on every axis: {:?} / {:?}",
                    self.min, self.max
                )));
            }
        }
        Ok(())
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        )
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn union(&self, other: &RoomBounds) -> RoomBounds {
        let mut out = *self;
        for a in 0..3 {
            out.min[a] = out.min[a].min(other.min[a]);
            out.max[a] = out.max[a].max(other.max[a]);
        }
        out
    }
}

/// Voxelization of a [`RoomBounds`]. Voxel `(ix, iy, iz)` is centered at
/// `min + (i + ½)·voxel_size`; linear index is x-fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub bounds: RoomBounds,
    pub voxel_size: f64,
    pub dims: [usize; 3],
}

impl GridGeometry {
    pub fn new(bounds: RoomBounds, voxel_size: f64) -> Result<Self> {
        bounds.validate()?;
        if !(voxel_size.is_finite() && voxel_size > 0.0) {
            return Err(Error::InvalidInput(format!(
                "voxel size must be positive, got {voxel_size}"
            )));
        }
        let e = bounds.extent();
        let dims = [0, 1, 2].map(|a| (e[a] / voxel_size).ceil().max(1.0) as usize);
        Ok(Self {
            bounds,
            voxel_size,
            dims,
        })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.dims[1] + iy) * self.dims[0] + ix
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    #[inline]
    pub fn center(&self, ix: usize, iy: usize, iz: usize) -> Point3<f64> {
        let s = self.voxel_size;
        let m = &self.bounds.min;
        Point3::new(
            m[0] + (ix as f64 + 0.5) * s,
            m[1] + (iy as f64 + 0.5) * s,
            m[2] + (iz as f64 + 0.5) * s,
        )
    }

    pub fn center_of(&self, index: usize) -> Point3<f64> {
        let [x, y, z] = self.coords(index);
        self.center(x, y, z)
    }

    /// Voxel containing a world point, if inside the grid.
    pub fn locate(&self, p: &Point3<f64>) -> Option<usize> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let f = (p[a] - self.bounds.min[a]) / self.voxel_size;
            if !(f >= 0.0) || f >= self.dims[a] as f64 {
                return None;
            }
            c[a] = f as usize;
        }
        Some(self.index(c[0], c[1], c[2]))
    }

    /// Indices of the in-grid 3×3×3 neighbourhood (including `index`).
    pub fn neighborhood(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let [x, y, z] = self.coords(index);
        let range = |c: usize, n: usize| c.saturating_sub(1)..=(c + 1).min(n - 1);
        range(z, self.dims[2]).flat_map(move |zz| {
            range(y, self.dims[1]).flat_map(move |yy| {
                range(x, self.dims[0]).map(move |xx| self.index(xx, yy, zz))
            })
        })
    }
}

/// Per-joint score field over a [`GridGeometry`], scores in `[0, 1]`.
///
/// Stored voxel-major: the scores of all joints at one voxel are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    geometry: GridGeometry,
    joints: usize,
    scores: Vec<f32>,
}

impl VoxelGrid {
    pub fn zeros(geometry: GridGeometry, joints: usize) -> Self {
        Self {
            geometry,
            joints,
            scores: vec![0.0; geometry.len() * joints],
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn joint_count(&self) -> usize {
        self.joints
    }

    #[inline]
    pub fn score(&self, joint: JointId, index: usize) -> f32 {
        self.scores[index * self.joints + joint]
    }

    pub fn set_score(&mut self, joint: JointId, index: usize, value: f32) {
        self.scores[index * self.joints + joint] = value;
    }

    /// All scores of one joint channel, in voxel order.
    pub fn channel(&self, joint: JointId) -> impl Iterator<Item = f32> + '_ {
        self.scores.iter().skip(joint).step_by(self.joints).copied()
    }

    pub fn max_score(&self) -> f32 {
        self.scores.iter().copied().fold(0.0, f32::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub joint: JointId,
    /// Refined world position (mm).
    pub position: Point3<f64>,
    pub score: f32,
    /// Voxel the peak was found at.
    pub voxel: usize,
}

struct ViewSampler<'a> {
    calib: &'a CameraCalib,
    stack: &'a HeatmapStack,
    // per joint, pixel box outside of which every sample is zero
    support: Vec<Option<[f64; 4]>>,
}

/// Averages the heatmap beams of all views into a voxel grid.
///
/// Each voxel center is projected into every view and the joint heatmaps are
/// sampled bilinearly. Views where the center is behind the camera or off the
/// image contribute 0. The sum is divided by the number of views, or, with
/// `normalize_visible`, by the number of views in which the center is on the
/// image.
pub fn project_heatmaps(
    stacks: &[HeatmapStack],
    calibs: &[CameraCalib],
    geometry: GridGeometry,
    normalize_visible: bool,
) -> Result<VoxelGrid> {
    if stacks.len() != calibs.len() {
        return Err(Error::InvalidInput(format!(
            "{} heatmap stacks for {} cameras",
            stacks.len(),
            calibs.len()
        )));
    }
    if stacks.len() < 2 {
        return Err(Error::TooFewViews(stacks.len()));
    }
    let joints = stacks[0].joint_count();
    if stacks.iter().any(|s| s.joint_count() != joints) {
        return Err(Error::InvalidInput(
            "heatmap stacks disagree on joint count".into(),
        ));
    }
    for (s, c) in stacks.iter().zip(calibs) {
        if s.shape.image_width != c.width() || s.shape.image_height != c.height() {
            return Err(Error::InvalidInput(format!(
                "heatmap size does not match image size of camera {:?}",
                c.id()
            )));
        }
    }

    let samplers: Vec<ViewSampler<'_>> = stacks
        .iter()
        .zip(calibs)
        .map(|(stack, calib)| ViewSampler {
            calib,
            stack,
            support: (0..joints).map(|j| stack.support_bounds(j)).collect(),
        })
        .collect();
    let total_views = samplers.len() as f32;

    let mut grid = VoxelGrid::zeros(geometry, joints);
    if joints == 0 {
        return Ok(grid);
    }
    let [nx, ny, _] = geometry.dims;
    let slab = nx * ny * joints;
    grid.scores
        .par_chunks_mut(slab)
        .enumerate()
        .for_each(|(iz, out)| {
            let mut sums = vec![0f32; joints];
            for iy in 0..ny {
                for ix in 0..nx {
                    let center = geometry.center(ix, iy, iz);
                    sums.iter_mut().for_each(|s| *s = 0.0);
                    let mut visible = 0u32;
                    for view in &samplers {
                        let Some(px) = view.calib.project(&center) else {
                            continue;
                        };
                        if !view.calib.contains(&px) {
                            continue;
                        }
                        visible += 1;
                        let stride = view.stack.shape.stride as f64;
                        let (hx, hy) = (px.u / stride, px.v / stride);
                        for (j, sum) in sums.iter_mut().enumerate() {
                            let Some(b) = view.support[j] else { continue };
                            if px.u < b[0] || px.u > b[2] || px.v < b[1] || px.v > b[3] {
                                continue;
                            }
                            *sum += sample_bilinear(&view.stack.joints[j], &view.stack.shape, hx, hy);
                        }
                    }
                    let divisor = if normalize_visible {
                        visible as f32
                    } else {
                        total_views
                    };
                    let base = (iy * nx + ix) * joints;
                    if divisor > 0.0 {
                        for (j, sum) in sums.iter().enumerate() {
                            out[base + j] = (sum / divisor).min(1.0);
                        }
                    }
                }
            }
        });
    Ok(grid)
}

/// Thresholded local maxima per joint with greedy 26-neighbour suppression,
/// refined by [`sub_voxel_refine`]. At most `max_proposals` per joint, in
/// descending score order (ties by voxel index).
pub fn find_peaks(grid: &VoxelGrid, threshold: f32, max_proposals: usize) -> Vec<Proposal> {
    (0..grid.joint_count())
        .into_par_iter()
        .map(|j| find_joint_peaks(grid, j, threshold, max_proposals))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

fn find_joint_peaks(
    grid: &VoxelGrid,
    joint: JointId,
    threshold: f32,
    max_proposals: usize,
) -> Vec<Proposal> {
    let geo = grid.geometry();
    let mut candidates: Vec<(f32, usize)> = grid
        .channel(joint)
        .enumerate()
        .filter(|&(_, s)| s >= threshold && s > 0.0)
        .filter(|&(i, s)| geo.neighborhood(i).all(|n| grid.score(joint, n) <= s))
        .map(|(i, s)| (s, i))
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut accepted: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    for (score, index) in candidates {
        if out.len() >= max_proposals {
            break;
        }
        let c = geo.coords(index);
        let suppressed = accepted.iter().any(|&a| {
            let ac = geo.coords(a);
            (0..3).all(|k| c[k].abs_diff(ac[k]) <= 1)
        });
        if suppressed {
            continue;
        }
        accepted.push(index);
        out.push(Proposal {
            joint,
            position: sub_voxel_refine(grid, joint, index),
            score,
            voxel: index,
        });
    }
    out
}

/// Score-weighted centroid of the voxel centers in the 3×3×3 neighbourhood
/// (clipped at the grid border). An all-zero neighbourhood yields the voxel
/// center itself.
pub fn sub_voxel_refine(grid: &VoxelGrid, joint: JointId, index: usize) -> Point3<f64> {
    let geo = grid.geometry();
    let mut weighted = Vector3::zeros();
    let mut total = 0.0f64;
    for n in geo.neighborhood(index) {
        let w = grid.score(joint, n) as f64;
        if w > 0.0 {
            weighted += geo.center_of(n).coords * w;
            total += w;
        }
    }
    if total > 0.0 {
        Point3::from(weighted / total)
    } else {
        geo.center_of(index)
    }
}

/// Zeroes every voxel not filled in the occupancy mask.
pub fn apply_mask(mut grid: VoxelGrid, mask: &OccupancyGrid) -> Result<VoxelGrid> {
    if mask.geometry() != grid.geometry() {
        return Err(Error::GeometryMismatch(format!(
            "mask {:?} vs grid {:?}",
            mask.geometry().dims,
            grid.geometry().dims
        )));
    }
    let j = grid.joints;
    for (chunk, &filled) in grid.scores.chunks_mut(j.max(1)).zip(mask.filled()) {
        if !filled {
            chunk.iter_mut().for_each(|s| *s = 0.0);
        }
    }
    Ok(grid)
}
