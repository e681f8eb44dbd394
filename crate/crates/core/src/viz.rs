//! Static artifacts for looking at results: a PLY skeleton scene, SVG
//! overlays per view, and grayscale PNG dumps of grid slices and 2D
//! heatmaps.

use std::fmt::Write as _;
use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::calib::CameraCalib;
use crate::error::{Error, Result};
use crate::fusion::VoxelGrid;
use crate::heatmap2d::{Detection2D, HeatmapStack, IdImageStack};
use crate::persons::Pose3D;
use crate::skeleton::SkeletonDef;

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [128, 128, 0],
];

fn color(i: usize) -> [u8; 3] {
    PALETTE[i % PALETTE.len()]
}

/// Parent links plus the evaluated body parts, each once.
pub fn draw_edges(skel: &SkeletonDef) -> Vec<(usize, usize)> {
    let mut edges: Vec<_> = skel
        .bones()
        .chain(skel.pcp_parts().iter().copied())
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

fn present(pose: &Pose3D, edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<(usize, usize)> {
    edges
        .into_iter()
        .filter(|&(a, b)| pose.position(a).is_some() && pose.position(b).is_some())
        .collect()
}

/// Parent links of a pose with both ends present.
pub fn pose_bones(pose: &Pose3D, skel: &SkeletonDef) -> Vec<(usize, usize)> {
    present(pose, skel.bones())
}

/// Drawn edges of a pose with both ends present.
pub fn pose_edges(pose: &Pose3D, skel: &SkeletonDef) -> Vec<(usize, usize)> {
    present(pose, draw_edges(skel))
}

/// ASCII PLY with one colored vertex per present joint and one edge per
/// present parent link.
pub fn ply_string(poses: &[Pose3D], skel: &SkeletonDef) -> String {
    let mut verts = Vec::new();
    let mut edges = Vec::new();
    for (pi, pose) in poses.iter().enumerate() {
        let mut index = vec![usize::MAX; pose.joints.len()];
        for (j, p) in pose.positions().iter().enumerate() {
            if let Some(p) = p {
                index[j] = verts.len();
                verts.push((*p, color(pi)));
            }
        }
        for (a, b) in pose_bones(pose, skel) {
            edges.push((index[a], index[b]));
        }
    }
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", verts.len());
    s.push_str("property float x\nproperty float y\nproperty float z\n");
    s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    let _ = writeln!(s, "element edge {}", edges.len());
    s.push_str("property int vertex1\nproperty int vertex2\nend_header\n");
    for (p, c) in &verts {
        let _ = writeln!(s, "{:.3} {:.3} {:.3} {} {} {}", p.x, p.y, p.z, c[0], c[1], c[2]);
    }
    for (a, b) in &edges {
        let _ = writeln!(s, "{a} {b}");
    }
    s
}

/// Projected poses as colored polylines over the view's 2D detections
/// (gray dots).
pub fn svg_overlay(
    calib: &CameraCalib,
    poses: &[Pose3D],
    detections: Option<&[Detection2D]>,
    skel: &SkeletonDef,
) -> String {
    let (w, h) = (calib.width(), calib.height());
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r##"<rect width="{w}" height="{h}" fill="#202020"/>"##);
    let _ = writeln!(s, r#"<title>{}</title>"#, calib.id());
    for d in detections.unwrap_or(&[]) {
        for k in d.keypoints.iter().flatten() {
            let _ = writeln!(
                s,
                r##"<circle cx="{:.1}" cy="{:.1}" r="3" fill="#a0a0a0"/>"##,
                k.u, k.v
            );
        }
    }
    for (pi, pose) in poses.iter().enumerate() {
        let c = color(pi);
        let stroke = format!("rgb({},{},{})", c[0], c[1], c[2]);
        for (a, b) in pose_edges(pose, skel) {
            let (Some(pa), Some(pb)) = (
                pose.position(a).and_then(|p| calib.project(&p)),
                pose.position(b).and_then(|p| calib.project(&p)),
            ) else {
                continue;
            };
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{stroke}" stroke-width="2"/>"#,
                pa.u, pa.v, pb.u, pb.v
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Horizontal grid slice at layer `iz` (x right, y up in the image), max
/// over joints unless one is given.
pub fn grid_slice(grid: &VoxelGrid, iz: usize, joint: Option<usize>) -> Result<GrayImage> {
    let geo = grid.geometry();
    let [nx, ny, nz] = geo.dims;
    if iz >= nz {
        return Err(Error::InvalidInput(format!("slice {iz} outside 0..{nz}")));
    }
    let joints: Vec<usize> = match joint {
        Some(j) if j < grid.joint_count() => vec![j],
        Some(j) => return Err(Error::InvalidInput(format!("no joint {j}"))),
        None => (0..grid.joint_count()).collect(),
    };
    Ok(GrayImage::from_fn(nx as u32, ny as u32, |x, y| {
        let i = geo.index(x as usize, ny - 1 - y as usize, iz);
        let v = joints.iter().map(|&j| grid.score(j, i)).fold(0.0, f32::max);
        Luma([to_u8(v)])
    }))
}

/// Top view: max over height and joints.
pub fn grid_top_view(grid: &VoxelGrid) -> GrayImage {
    let geo = grid.geometry();
    let [nx, ny, nz] = geo.dims;
    let mut img = GrayImage::new(nx as u32, ny as u32);
    for iz in 0..nz {
        for iy in 0..ny {
            for ix in 0..nx {
                let i = geo.index(ix, iy, iz);
                let v = (0..grid.joint_count()).map(|j| grid.score(j, i)).fold(0.0, f32::max);
                let px = img.get_pixel_mut(ix as u32, (ny - 1 - iy) as u32);
                px.0[0] = px.0[0].max(to_u8(v));
            }
        }
    }
    img
}

/// Heatmap raster, max over joints unless one is given.
pub fn heatmap_image(stack: &HeatmapStack, joint: Option<usize>) -> GrayImage {
    let sh = stack.shape;
    GrayImage::from_fn(sh.width as u32, sh.height as u32, |x, y| {
        let v = match joint {
            Some(j) => stack.value(j, x as usize, y as usize),
            None => (0..stack.joint_count())
                .map(|j| stack.value(j, x as usize, y as usize))
                .fold(0.0, f32::max),
        };
        Luma([to_u8(v)])
    })
}

/// Person-id raster of one joint, one palette color per id.
pub fn id_image(ids: &IdImageStack, joint: usize) -> RgbImage {
    let sh = ids.shape;
    RgbImage::from_fn(sh.width as u32, sh.height as u32, |x, y| match ids.id_at(joint, x as usize, y as usize) {
        0 => Rgb([0, 0, 0]),
        id => Rgb(color(id as usize - 1)),
    })
}

pub fn save_png<P, C>(img: &image::ImageBuffer<P, C>, path: &Path) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
