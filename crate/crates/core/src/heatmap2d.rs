//! Per-view Gaussian joint heatmaps and person-identity images rendered from
//! 2D keypoint detections.
//!
//! Both images live at heatmap resolution: cell `(i, j)` sits at pixel
//! `(i·stride, j·stride)`. A keypoint contributes a Gaussian with peak equal
//! to its confidence and standard deviation `sigma_px / stride` cells, cut to
//! zero beyond 3σ. Persons overlapping in the same joint channel combine by
//! per-cell maximum; the identity image records which person won the cell,
//! with ties going to the lower person id.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::calib::Pixel;
use crate::error::{Error, Result};
use crate::skeleton::{JointId, SkeletonDef};

/// Gaussian support radius in standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Keypoint2 {
    pub u: f64,
    pub v: f64,
    pub confidence: f64,
}

impl From<[f64; 3]> for Keypoint2 {
    fn from(a: [f64; 3]) -> Self {
        Self {
            u: a[0],
            v: a[1],
            confidence: a[2],
        }
    }
}

impl From<Keypoint2> for [f64; 3] {
    fn from(k: Keypoint2) -> Self {
        [k.u, k.v, k.confidence]
    }
}

/// One person's keypoints in one view. `None` marks an invisible joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection2D {
    /// Unique across all views of a frame.
    #[serde(rename = "person")]
    pub person_id: u32,
    pub keypoints: Vec<Option<Keypoint2>>,
}

impl Detection2D {
    pub fn visible_count(&self) -> usize {
        self.keypoints.iter().flatten().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapConfig {
    /// Gaussian standard deviation in image pixels.
    pub sigma_px: f64,
    /// Image pixels per heatmap cell.
    pub stride: u32,
    /// Render every Gaussian with peak 1 instead of the keypoint confidence.
    pub unit_peaks: bool,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            sigma_px: 6.0,
            stride: 4,
            unit_peaks: false,
        }
    }
}

impl HeatmapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_px.is_finite() && self.sigma_px > 0.0) {
            return Err(Error::Config(format!("sigma_px must be > 0, got {}", self.sigma_px)));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// Shape shared by the heatmap and identity images of one view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RasterShape {
    pub image_width: u32,
    pub image_height: u32,
    pub stride: u32,
    pub width: usize,
    pub height: usize,
}

impl RasterShape {
    pub fn new(image_width: u32, image_height: u32, stride: u32) -> Self {
        Self {
            image_width,
            image_height,
            stride,
            width: image_width.div_ceil(stride) as usize,
            height: image_height.div_ceil(stride) as usize,
        }
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    fn contains_pixel(&self, px: &Pixel) -> bool {
        px.u >= 0.0
            && px.v >= 0.0
            && px.u < self.image_width as f64
            && px.v < self.image_height as f64
    }

    /// Nearest cell to an on-image pixel.
    pub fn nearest_cell(&self, px: &Pixel) -> Option<usize> {
        if !self.contains_pixel(px) {
            return None;
        }
        let s = self.stride as f64;
        let x = ((px.u / s).round() as usize).min(self.width - 1);
        let y = ((px.v / s).round() as usize).min(self.height - 1);
        Some(y * self.width + x)
    }
}

/// Per-joint score images of one view, scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    pub shape: RasterShape,
    pub joints: Vec<Vec<f32>>,
}

/// Per-joint person-id images of one view; 0 means no person.
#[derive(Debug, Clone, PartialEq)]
pub struct IdImageStack {
    pub shape: RasterShape,
    pub joints: Vec<Vec<u32>>,
}

impl HeatmapStack {
    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn value(&self, joint: JointId, x: usize, y: usize) -> f32 {
        self.joints[joint][y * self.shape.width + x]
    }

    /// Bilinear sample at a pixel position. Off-image pixels read 0, and
    /// cells past the grid edge count as 0.
    pub fn sample(&self, joint: JointId, px: &Pixel) -> f32 {
        if !self.shape.contains_pixel(px) {
            return 0.0;
        }
        let s = self.shape.stride as f64;
        sample_bilinear(&self.joints[joint], &self.shape, px.u / s, px.v / s)
    }

    /// Bounding box `[u0, v0, u1, v1]` in pixels of the nonzero cells of a
    /// joint channel, or `None` for an all-zero channel.
    pub fn support_bounds(&self, joint: JointId) -> Option<[f64; 4]> {
        let w = self.shape.width;
        let mut bounds: Option<[usize; 4]> = None;
        for (i, &v) in self.joints[joint].iter().enumerate() {
            if v > 0.0 {
                let (x, y) = (i % w, i / w);
                let b = bounds.get_or_insert([x, y, x, y]);
                b[0] = b[0].min(x);
                b[1] = b[1].min(y);
                b[2] = b[2].max(x);
                b[3] = b[3].max(y);
            }
        }
        let s = self.shape.stride as f64;
        // a bilinear sample is nonzero within one cell of a nonzero cell
        bounds.map(|b| {
            [
                (b[0] as f64 - 1.0) * s,
                (b[1] as f64 - 1.0) * s,
                (b[2] as f64 + 1.0) * s,
                (b[3] as f64 + 1.0) * s,
            ]
        })
    }
}

/// Bilinear interpolation over a row-major raster in cell coordinates.
#[inline]
pub(crate) fn sample_bilinear(data: &[f32], shape: &RasterShape, hx: f64, hy: f64) -> f32 {
    let x0f = hx.floor();
    let y0f = hy.floor();
    let fx = (hx - x0f) as f32;
    let fy = (hy - y0f) as f32;
    let (x0, y0) = (x0f as isize, y0f as isize);
    let (w, h) = (shape.width as isize, shape.height as isize);
    let at = |x: isize, y: isize| -> f32 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            data[(y * w + x) as usize]
        }
    };
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
    let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
    top * (1.0 - fy) + bottom * fy
}

impl IdImageStack {
    pub fn id_at(&self, joint: JointId, x: usize, y: usize) -> u32 {
        self.joints[joint][y * self.shape.width + x]
    }
}

/// Renders heatmaps only. Unlike [`render_id_images`] this never fails.
pub fn render_heatmaps(
    dets: &[Detection2D],
    skel: &SkeletonDef,
    shape: RasterShape,
    cfg: &HeatmapConfig,
) -> HeatmapStack {
    render_view_unchecked(dets, skel.joint_count(), shape, cfg).0
}

/// Renders identity images; rejects duplicate person ids.
pub fn render_id_images(
    dets: &[Detection2D],
    skel: &SkeletonDef,
    shape: RasterShape,
    cfg: &HeatmapConfig,
) -> Result<IdImageStack> {
    Ok(render_view(dets, skel, shape, cfg)?.1)
}

/// Renders both images for one view in a single pass.
pub fn render_view(
    dets: &[Detection2D],
    skel: &SkeletonDef,
    shape: RasterShape,
    cfg: &HeatmapConfig,
) -> Result<(HeatmapStack, IdImageStack)> {
    check_detections(dets, skel.joint_count(), &shape)?;
    let mut seen = HashSet::new();
    for d in dets {
        if !seen.insert(d.person_id) {
            return Err(Error::DuplicatePersonId(d.person_id));
        }
    }
    Ok(render_view_unchecked(dets, skel.joint_count(), shape, cfg))
}

/// Fraction of the image size a visible keypoint may lie outside the image.
pub const KEYPOINT_MARGIN: f64 = 0.2;

pub(crate) fn check_detections(
    dets: &[Detection2D],
    joints: usize,
    shape: &RasterShape,
) -> Result<()> {
    let (w, h) = (shape.image_width as f64, shape.image_height as f64);
    let (mu, mv) = (KEYPOINT_MARGIN * w, KEYPOINT_MARGIN * h);
    for d in dets {
        if d.person_id == 0 {
            return Err(Error::InvalidInput("person id 0 is reserved for background".into()));
        }
        if d.keypoints.len() != joints {
            return Err(Error::InvalidInput(format!(
                "person {} has {} keypoints, skeleton has {joints}",
                d.person_id,
                d.keypoints.len()
            )));
        }
        for k in d.keypoints.iter().flatten() {
            if !(k.u.is_finite() && k.v.is_finite() && k.confidence.is_finite())
                || !(0.0..=1.0).contains(&k.confidence)
            {
                return Err(Error::InvalidInput(format!(
                    "person {}: bad keypoint {:?}",
                    d.person_id, k
                )));
            }
            if k.u < -mu || k.u > w + mu || k.v < -mv || k.v > h + mv {
                return Err(Error::InvalidInput(format!(
                    "person {}: keypoint ({}, {}) too far outside the {w}x{h} image",
                    d.person_id, k.u, k.v
                )));
            }
        }
    }
    Ok(())
}

fn render_view_unchecked(
    dets: &[Detection2D],
    joints: usize,
    shape: RasterShape,
    cfg: &HeatmapConfig,
) -> (HeatmapStack, IdImageStack) {
    let cells = shape.cells();
    let mut heat = vec![vec![0f32; cells]; joints];
    let mut ids = vec![vec![0u32; cells]; joints];
    let s = shape.stride as f64;
    let sigma = cfg.sigma_px / s;
    let radius = TRUNCATION_SIGMAS * sigma;
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);

    for det in dets {
        for (j, kp) in det.keypoints.iter().enumerate() {
            let Some(kp) = kp else { continue };
            let peak = if cfg.unit_peaks { 1.0 } else { kp.confidence };
            if !(peak > 0.0) || j >= joints {
                continue;
            }
            let (hx, hy) = (kp.u / s, kp.v / s);
            let x_lo = (hx - radius).ceil().max(0.0);
            let x_hi = (hx + radius).floor().min(shape.width as f64 - 1.0);
            let y_lo = (hy - radius).ceil().max(0.0);
            let y_hi = (hy + radius).floor().min(shape.height as f64 - 1.0);
            if x_lo > x_hi || y_lo > y_hi {
                continue;
            }
            let (hm, idm) = (&mut heat[j], &mut ids[j]);
            for y in y_lo as usize..=y_hi as usize {
                let dy = y as f64 - hy;
                for x in x_lo as usize..=x_hi as usize {
                    let dx = x as f64 - hx;
                    let d2 = dx * dx + dy * dy;
                    if d2 > radius * radius {
                        continue;
                    }
                    let val = (peak * (-d2 * inv_two_var).exp()) as f32;
                    if val <= 0.0 {
                        continue;
                    }
                    let i = y * shape.width + x;
                    let cur = hm[i];
                    if val > cur || (val == cur && (idm[i] == 0 || det.person_id < idm[i])) {
                        hm[i] = val;
                        idm[i] = det.person_id;
                    }
                }
            }
        }
    }
    (
        HeatmapStack {
            shape,
            joints: heat,
        },
        IdImageStack { shape, joints: ids },
    )
}

/// Person id under a pixel for one joint channel, by nearest cell.
pub fn sample_id(ids: &IdImageStack, joint: JointId, px: &Pixel) -> Option<u32> {
    let cell = ids.shape.nearest_cell(px)?;
    match ids.joints[joint][cell] {
        0 => None,
        id => Some(id),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn skel() -> SkeletonDef {
        SkeletonDef::body13()
    }

    fn shape() -> RasterShape {
        RasterShape::new(200, 160, 4)
    }

    fn det(id: u32, joint: usize, u: f64, v: f64, c: f64) -> Detection2D {
        let mut keypoints = vec![None; 13];
        keypoints[joint] = Some(Keypoint2 { u, v, confidence: c });
        Detection2D {
            person_id: id,
            keypoints,
        }
    }

    #[test]
    fn shape_rounds_up() {
        let s = RasterShape::new(201, 160, 4);
        assert_eq!((s.width, s.height), (51, 40));
    }

    #[test]
    fn empty_input_gives_zero_images() {
        let (h, ids) = render_view(&[], &skel(), shape(), &HeatmapConfig::default()).unwrap();
        assert_eq!(h.joint_count(), 13);
        assert!(h.joints.iter().flatten().all(|&v| v == 0.0));
        assert!(ids.joints.iter().flatten().all(|&v| v == 0));
    }

    #[test]
    fn peak_at_keypoint_cell_and_monotone_decay() {
        let d = det(1, 3, 80.0, 40.0, 1.0);
        let h = render_heatmaps(&[d], &skel(), shape(), &HeatmapConfig::default());
        assert_eq!(h.value(3, 20, 10), 1.0);
        let mut prev = 1.0;
        for x in 21..30 {
            let v = h.value(3, x, 10);
            assert!(v <= prev);
            prev = v;
        }
        assert!(h.value(3, 21, 10) < 1.0);
        // 3σ = 4.5 cells: cell 24 inside, 25 outside
        assert!(h.value(3, 24, 10) > 0.0);
        assert_eq!(h.value(3, 25, 10), 0.0);
        // other joints untouched
        assert!(h.joints[4].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn overlap_takes_max_and_its_id() {
        let a = det(1, 0, 80.0, 40.0, 0.6);
        let b = det(2, 0, 80.0, 40.0, 0.9);
        let (h, ids) =
            render_view(&[a.clone(), b.clone()], &skel(), shape(), &HeatmapConfig::default())
                .unwrap();
        assert_eq!(h.value(0, 20, 10), 0.9);
        assert_eq!(ids.id_at(0, 20, 10), 2);
        let (h2, ids2) =
            render_view(&[b, a], &skel(), shape(), &HeatmapConfig::default()).unwrap();
        assert_eq!(h, h2);
        assert_eq!(ids, ids2);
    }

    #[test]
    fn equal_values_tie_to_lower_id() {
        let a = det(9, 0, 80.0, 40.0, 0.7);
        let b = det(4, 0, 80.0, 40.0, 0.7);
        let ids = render_id_images(&[a, b], &skel(), shape(), &HeatmapConfig::default()).unwrap();
        assert_eq!(ids.id_at(0, 20, 10), 4);
    }

    #[test]
    fn unit_peaks_ignores_confidence() {
        let cfg = HeatmapConfig {
            unit_peaks: true,
            ..Default::default()
        };
        let h = render_heatmaps(&[det(1, 0, 80.0, 40.0, 0.3)], &skel(), shape(), &cfg);
        assert_eq!(h.value(0, 20, 10), 1.0);
    }

    #[test]
    fn single_person_ids() {
        let mut d = det(7, 0, 80.0, 40.0, 1.0);
        d.keypoints[5] = Some(Keypoint2 {
            u: 10.0,
            v: 150.0,
            confidence: 0.5,
        });
        let ids = render_id_images(&[d], &skel(), shape(), &HeatmapConfig::default()).unwrap();
        let nonzero: Vec<u32> = ids.joints.iter().flatten().copied().filter(|&v| v != 0).collect();
        assert!(!nonzero.is_empty());
        assert!(nonzero.iter().all(|&v| v == 7));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = det(3, 0, 10.0, 10.0, 1.0);
        let b = det(3, 1, 50.0, 10.0, 1.0);
        assert!(matches!(
            render_id_images(&[a, b], &skel(), shape(), &HeatmapConfig::default()),
            Err(Error::DuplicatePersonId(3))
        ));
    }

    #[test]
    fn wrong_keypoint_count_rejected() {
        let d = Detection2D {
            person_id: 1,
            keypoints: vec![None; 5],
        };
        assert!(render_view(&[d], &skel(), shape(), &HeatmapConfig::default()).is_err());
    }

    #[test]
    fn keypoint_far_outside_rejected() {
        let d = det(1, 0, 300.0, 40.0, 1.0);
        assert!(render_view(&[d], &skel(), shape(), &HeatmapConfig::default()).is_err());
    }

    #[test]
    fn keypoint_outside_image_is_clipped() {
        // 20% outside the right edge: support partially on-image
        let d = det(1, 0, 205.0, 40.0, 1.0);
        let h = render_heatmaps(&[d], &skel(), shape(), &HeatmapConfig::default());
        assert!(h.value(0, 49, 10) > 0.0);
        let far = det(1, 0, 240.0, 40.0, 1.0);
        let h = render_heatmaps(&[far], &skel(), shape(), &HeatmapConfig::default());
        assert!(h.joints[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sample_id_lookups() {
        let d = det(5, 2, 100.0, 60.0, 1.0);
        let ids = render_id_images(&[d], &skel(), shape(), &HeatmapConfig::default()).unwrap();
        assert_eq!(sample_id(&ids, 2, &Pixel::new(100.0, 60.0)), Some(5));
        assert_eq!(sample_id(&ids, 2, &Pixel::new(101.3, 58.9)), Some(5));
        assert_eq!(sample_id(&ids, 2, &Pixel::new(10.0, 10.0)), None);
        assert_eq!(sample_id(&ids, 3, &Pixel::new(100.0, 60.0)), None);
        assert_eq!(sample_id(&ids, 2, &Pixel::new(-1.0, 60.0)), None);
        assert_eq!(sample_id(&ids, 2, &Pixel::new(100.0, 160.0)), None);
    }

    #[test]
    fn bilinear_sampling() {
        let d = det(1, 0, 80.0, 40.0, 1.0);
        let h = render_heatmaps(&[d], &skel(), shape(), &HeatmapConfig::default());
        assert_eq!(h.sample(0, &Pixel::new(80.0, 40.0)), 1.0);
        let mid = h.sample(0, &Pixel::new(82.0, 40.0));
        let expect = 0.5 * (h.value(0, 20, 10) + h.value(0, 21, 10));
        assert!((mid - expect).abs() < 1e-6);
        assert_eq!(h.sample(0, &Pixel::new(-0.5, 40.0)), 0.0);
        let b = h.support_bounds(0).unwrap();
        assert!(b[0] <= 80.0 - 18.0 && b[2] >= 80.0 + 18.0);
    }

    fn arb_dets() -> impl Strategy<Value = Vec<Detection2D>> {
        prop::collection::vec(
            prop::collection::vec(
                prop::option::of((-20.0..220.0f64, -20.0..180.0f64, 0.0..=1.0f64)),
                13,
            ),
            0..5,
        )
        .prop_map(|people| {
            people
                .into_iter()
                .enumerate()
                .map(|(i, kps)| Detection2D {
                    person_id: i as u32 + 1,
                    keypoints: kps
                        .into_iter()
                        .map(|k| k.map(|(u, v, c)| Keypoint2 { u, v, confidence: c }))
                        .collect(),
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn id_support_equals_heat_support(dets in arb_dets()) {
            let (h, ids) = render_view(&dets, &skel(), shape(), &HeatmapConfig::default()).unwrap();
            for j in 0..13 {
                for (hv, iv) in h.joints[j].iter().zip(&ids.joints[j]) {
                    prop_assert_eq!(*hv > 0.0, *iv != 0);
                    prop_assert!((0.0..=1.0).contains(hv));
                }
            }
        }

        #[test]
        fn rendering_ignores_input_order(dets in arb_dets()) {
            let cfg = HeatmapConfig::default();
            let a = render_view(&dets, &skel(), shape(), &cfg).unwrap();
            let mut rev = dets.clone();
            rev.reverse();
            let b = render_view(&rev, &skel(), shape(), &cfg).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
