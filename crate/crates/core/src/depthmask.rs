//! Voxel occupancy from depth data, used to suppress fused scores in empty
//! space.
//!
//! Depth pixels are back-projected with their own camera calibration (depth
//! sensors need not coincide with the color views), points are counted per
//! voxel, voxels with at least `min_points` are filled, and the filled set is
//! dilated by `dilation` 6-connected steps.

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::{CameraCalib, Pixel};
use crate::error::{Error, Result};
use crate::fusion::GridGeometry;

#[derive(Debug, Clone, PartialEq)]
pub enum DepthData {
    /// Row-major depth image in millimeters, 0 = invalid, taken by the camera
    /// named in [`DepthFrame::camera`].
    Image {
        width: u32,
        height: u32,
        depth_mm: Vec<u16>,
    },
    /// Points already in world millimeters.
    Points(Vec<Point3<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub camera: String,
    pub data: DepthData,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    /// Minimum points per voxel for it to count as filled.
    pub min_points: u32,
    /// 6-connected dilation steps applied to the filled set.
    pub dilation: u32,
    /// Use every n-th depth pixel in both directions.
    pub pixel_stride: u32,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            min_points: 2,
            dilation: 1,
            pixel_stride: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    geometry: GridGeometry,
    counts: Vec<u32>,
    filled: Vec<bool>,
}

impl OccupancyGrid {
    /// Mask with an explicit filled set and zero counts.
    pub fn from_filled(geometry: GridGeometry, filled: Vec<bool>) -> Self {
        assert_eq!(filled.len(), geometry.len(), "filled set size");
        Self {
            geometry,
            counts: vec![0; geometry.len()],
            filled,
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn filled(&self) -> &[bool] {
        &self.filled
    }

    pub fn is_filled(&self, index: usize) -> bool {
        self.filled[index]
    }

    pub fn filled_count(&self) -> usize {
        self.filled.iter().filter(|f| **f).count()
    }
}

/// World points of one depth frame.
pub fn depth_points(
    frame: &DepthFrame,
    calibs: &[CameraCalib],
    pixel_stride: u32,
) -> Result<Vec<Point3<f64>>> {
    match &frame.data {
        DepthData::Points(p) => Ok(p.clone()),
        DepthData::Image {
            width,
            height,
            depth_mm,
        } => {
            let calib = calibs
                .iter()
                .find(|c| c.id() == frame.camera)
                .ok_or_else(|| {
                    Error::InvalidInput(format!("depth frame from unknown camera {:?}", frame.camera))
                })?;
            if (*width, *height) != (calib.width(), calib.height()) {
                return Err(Error::InvalidInput(format!(
                    "depth image {}x{} does not match camera {:?} ({}x{})",
                    width,
                    height,
                    calib.id(),
                    calib.width(),
                    calib.height()
                )));
            }
            if depth_mm.len() != (*width as usize) * (*height as usize) {
                return Err(Error::InvalidInput("depth buffer size mismatch".into()));
            }
            let step = pixel_stride.max(1) as usize;
            let mut out = Vec::new();
            for y in (0..*height as usize).step_by(step) {
                for x in (0..*width as usize).step_by(step) {
                    let d = depth_mm[y * *width as usize + x];
                    if d == 0 {
                        continue;
                    }
                    out.push(calib.unproject_depth(Pixel::new(x as f64, y as f64), d as f64)?);
                }
            }
            Ok(out)
        }
    }
}

/// Builds the occupancy mask for one fused frame.
pub fn build_mask(
    frames: &[DepthFrame],
    calibs: &[CameraCalib],
    geometry: GridGeometry,
    cfg: &MaskConfig,
) -> Result<OccupancyGrid> {
    let partial: Vec<Vec<u32>> = frames
        .par_iter()
        .map(|f| {
            let mut counts = vec![0u32; geometry.len()];
            for p in depth_points(f, calibs, cfg.pixel_stride)? {
                if let Some(i) = geometry.locate(&p) {
                    counts[i] += 1;
                }
            }
            Ok(counts)
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0u32; geometry.len()];
    for c in &partial {
        for (total, n) in counts.iter_mut().zip(c) {
            *total += n;
        }
    }
    let min = cfg.min_points.max(1);
    let mut filled: Vec<bool> = counts.iter().map(|&c| c >= min).collect();
    for _ in 0..cfg.dilation {
        filled = dilate6(&geometry, &filled);
    }
    Ok(OccupancyGrid {
        geometry,
        counts,
        filled,
    })
}

/// One step of 6-connected binary dilation.
fn dilate6(geo: &GridGeometry, filled: &[bool]) -> Vec<bool> {
    let [nx, ny, nz] = geo.dims;
    let mut out = filled.to_vec();
    for (i, _) in filled.iter().enumerate().filter(|(_, f)| **f) {
        let [x, y, z] = geo.coords(i);
        if x > 0 {
            out[geo.index(x - 1, y, z)] = true;
        }
        if x + 1 < nx {
            out[geo.index(x + 1, y, z)] = true;
        }
        if y > 0 {
            out[geo.index(x, y - 1, z)] = true;
        }
        if y + 1 < ny {
            out[geo.index(x, y + 1, z)] = true;
        }
        if z > 0 {
            out[geo.index(x, y, z - 1)] = true;
        }
        if z + 1 < nz {
            out[geo.index(x, y, z + 1)] = true;
        }
    }
    out
}
