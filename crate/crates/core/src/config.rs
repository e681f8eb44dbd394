//! Effective fusion settings. Every field can be set from a TOML file and
//! overridden on the command line; the resolved config is embedded in the
//! prediction output.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::depthmask::MaskConfig;
use crate::error::{Error, Result};
use crate::fusion::RoomBounds;
use crate::heatmap2d::HeatmapConfig;
use crate::persons::AssemblyConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Voxel edge length in mm.
    pub voxel_size: f64,
    /// Minimum normalized voxel score for a keypoint proposal.
    pub peak_threshold: f32,
    /// Proposals kept per joint type.
    pub max_proposals: usize,
    /// Divide by the views that see a voxel instead of all views.
    pub normalize_visible: bool,
    pub sigma_px: f64,
    pub stride: u32,
    pub unit_peaks: bool,
    /// Outlier radius around the group center, mm.
    pub center_outlier: f64,
    /// Maximum child–parent distance during assembly, mm.
    pub limb_max_dist: f64,
    /// Same for face and hand keypoints, mm.
    pub fine_limb_max_dist: f64,
    pub min_joints: usize,
    /// Group merge threshold on |A∩B| / min(|A|, |B|).
    pub merge_overlap: f64,
    /// A 2D detection may back only one person.
    pub exclusive_ids: bool,
    /// Overrides the dataset's room box.
    pub bounds: Option<RoomBounds>,
    pub use_depth: bool,
    pub depth_min_points: u32,
    pub depth_dilation: u32,
    pub depth_stride: u32,
    /// Max |Δt| in seconds when pairing depth records with frames.
    pub depth_max_dt: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        let heat = HeatmapConfig::default();
        let mask = MaskConfig::default();
        let asm = AssemblyConfig::default();
        Self {
            voxel_size: 50.0,
            peak_threshold: 0.25,
            max_proposals: 10,
            normalize_visible: false,
            sigma_px: heat.sigma_px,
            stride: heat.stride,
            unit_peaks: heat.unit_peaks,
            center_outlier: asm.center_outlier,
            limb_max_dist: asm.limb_max_dist,
            fine_limb_max_dist: asm.fine_limb_max_dist,
            min_joints: asm.min_joints,
            merge_overlap: asm.merge_overlap,
            exclusive_ids: asm.exclusive_ids,
            bounds: None,
            use_depth: false,
            depth_min_points: mask.min_points,
            depth_dilation: mask.dilation,
            depth_stride: mask.pixel_stride,
            depth_max_dt: 0.05,
        }
    }
}

impl FusionConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.voxel_size.is_finite() && self.voxel_size > 0.0) {
            return bad(format!("voxel_size must be > 0, got {}", self.voxel_size));
        }
        if !(self.peak_threshold > 0.0 && self.peak_threshold <= 1.0) {
            return bad(format!(
                "peak_threshold must be in (0, 1], got {}",
                self.peak_threshold
            ));
        }
        if self.max_proposals == 0 {
            return bad("max_proposals must be >= 1".into());
        }
        for (name, v) in [
            ("center_outlier", self.center_outlier),
            ("limb_max_dist", self.limb_max_dist),
            ("fine_limb_max_dist", self.fine_limb_max_dist),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be > 0, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.merge_overlap) {
            return bad(format!(
                "merge_overlap must be in [0, 1), got {}",
                self.merge_overlap
            ));
        }
        if !(self.depth_max_dt > 0.0) {
            return bad("depth_max_dt must be > 0".into());
        }
        if let Some(b) = &self.bounds {
            b.validate()?;
        }
        self.heatmap().validate()
    }

    pub fn heatmap(&self) -> HeatmapConfig {
        HeatmapConfig {
            sigma_px: self.sigma_px,
            stride: self.stride,
            unit_peaks: self.unit_peaks,
        }
    }

    pub fn mask(&self) -> MaskConfig {
        MaskConfig {
            min_points: self.depth_min_points,
            dilation: self.depth_dilation,
            pixel_stride: self.depth_stride,
        }
    }

    pub fn assembly(&self) -> AssemblyConfig {
        AssemblyConfig {
            center_outlier: self.center_outlier,
            limb_max_dist: self.limb_max_dist,
            fine_limb_max_dist: self.fine_limb_max_dist,
            min_joints: self.min_joints,
            merge_overlap: self.merge_overlap,
            exclusive_ids: self.exclusive_ids,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = FusionConfig::default();
        assert_eq!(c.voxel_size, 50.0);
        assert_eq!(c.center_outlier, 1300.0);
        assert_eq!(c.limb_max_dist, 600.0);
        assert_eq!(c.min_joints, 3);
        assert_eq!(c.peak_threshold, 0.25);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = FusionConfig {
            voxel_size: 25.0,
            bounds: Some(RoomBounds::new([-1.0, -2.0, 0.0], [1.0, 2.0, 3.0]).unwrap()),
            ..Default::default()
        };
        let back = FusionConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);

        let partial = FusionConfig::from_toml_str("voxel_size = 100.0\nuse_depth = true\n").unwrap();
        assert_eq!(partial.voxel_size, 100.0);
        assert!(partial.use_depth);
        assert_eq!(partial.limb_max_dist, 600.0);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(FusionConfig::from_toml_str("voxel_sise = 3.0").is_err());
        assert!(FusionConfig::from_toml_str("voxel_size = -3.0").is_err());
        assert!(FusionConfig::from_toml_str("peak_threshold = 0.0").is_err());
        assert!(FusionConfig::from_toml_str("merge_overlap = 1.5").is_err());
        assert!(FusionConfig::from_toml_str("stride = 0").is_err());
    }
}
