//! JSON dataset and prediction files.
//!
//! A dataset is one `dataset.json` with calibrations, frames, optional 2D
//! detections, depth references and 3D labels; asset paths are relative to
//! the file. Units are millimeters and seconds. Fields this crate does not
//! know are kept and written back unchanged. See `FORMAT.md`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Point3, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::calib::{CameraCalib, Distortion};
use crate::config::FusionConfig;
use crate::depthmask::{DepthData, DepthFrame};
use crate::error::{Error, Result};
use crate::fusion::RoomBounds;
use crate::heatmap2d::Detection2D;
use crate::persons::Pose3D;
use crate::skeleton::SkeletonDef;

pub const SCHEMA_VERSION: u32 = 1;

pub type Extra = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDoc {
    pub schema: u32,
    pub name: String,
    pub skeleton: String,
    pub room: RoomBounds,
    pub cameras: Vec<CameraDoc>,
    pub frames: Vec<FrameDoc>,
    /// Depth records not yet attached to a frame; see [`pair_depth`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub depth_stream: Vec<DepthRecord>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraDoc {
    pub id: String,
    #[serde(rename = "K")]
    pub k: [[f64; 3]; 3],
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    pub t: [f64; 3],
    /// `[k1, k2, p1, p2, k3]`
    #[serde(default)]
    pub distortion: [f64; 5],
    /// `[width, height]`
    pub image_size: [u32; 2],
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDoc {
    pub id: String,
    pub timestamp: f64,
    pub views: Vec<ViewDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub depth: Vec<DepthRecord>,
    #[serde(default)]
    pub labels: Vec<LabelDoc>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewDoc {
    pub camera: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<Vec<Detection2D>>,
    #[serde(flatten)]
    pub extra: Extra,
}

/// One ground-truth person; `null` joints are not labeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDoc {
    pub joints: Vec<Option<[f64; 3]>>,
    #[serde(flatten)]
    pub extra: Extra,
}

/// Depth from one sensor: a 16-bit millimeter PNG taken by `camera`, or a
/// world-space point list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRecord {
    pub camera: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 3]>>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl CameraDoc {
    pub fn from_calib(c: &CameraCalib) -> Self {
        let m = |m: &Matrix3<f64>| {
            [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ]
        };
        let t = c.translation();
        Self {
            id: c.id().to_string(),
            k: m(c.intrinsics()),
            r: m(c.rotation()),
            t: [t.x, t.y, t.z],
            distortion: c.distortion().to_array(),
            image_size: [c.width(), c.height()],
            extra: Extra::new(),
        }
    }

    pub fn calib(&self) -> Result<CameraCalib> {
        let m = |a: &[[f64; 3]; 3]| Matrix3::from_fn(|r, c| a[r][c]);
        CameraCalib::new(
            self.id.clone(),
            m(&self.k),
            m(&self.r),
            Vector3::from(self.t),
            Distortion::from_array(self.distortion),
            (self.image_size[0], self.image_size[1]),
        )
    }
}

impl LabelDoc {
    pub fn new(joints: &[Option<Point3<f64>>]) -> Self {
        Self {
            joints: joints.iter().map(|j| j.map(|p| [p.x, p.y, p.z])).collect(),
            extra: Extra::new(),
        }
    }

    pub fn points(&self) -> Vec<Option<Point3<f64>>> {
        self.joints.iter().map(|j| j.map(Point3::from)).collect()
    }
}

impl DepthRecord {
    pub fn from_points(camera: impl Into<String>, timestamp: Option<f64>, points: &[Point3<f64>]) -> Self {
        Self {
            camera: camera.into(),
            timestamp,
            image: None,
            points: Some(points.iter().map(|p| [p.x, p.y, p.z]).collect()),
            extra: Extra::new(),
        }
    }

    /// Loads the depth data; image paths resolve against `base_dir`.
    pub fn load(&self, base_dir: &Path) -> Result<DepthFrame> {
        let data = match (&self.image, &self.points) {
            (Some(img), None) => {
                let path = base_dir.join(img);
                let (width, height, depth_mm) = read_depth_png(&path)?;
                DepthData::Image {
                    width,
                    height,
                    depth_mm,
                }
            }
            (None, Some(p)) => DepthData::Points(p.iter().map(|a| Point3::from(*a)).collect()),
            _ => {
                return Err(Error::InvalidInput(format!(
                    "depth record of camera {:?} needs exactly one of image/points",
                    self.camera
                )))
            }
        };
        Ok(DepthFrame {
            camera: self.camera.clone(),
            data,
        })
    }
}

impl DatasetDoc {
    pub fn new(name: impl Into<String>, skeleton: &SkeletonDef, room: RoomBounds, cameras: &[CameraCalib]) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            name: name.into(),
            skeleton: skeleton.name().to_string(),
            room,
            cameras: cameras.iter().map(CameraDoc::from_calib).collect(),
            frames: Vec::new(),
            depth_stream: Vec::new(),
            extra: Extra::new(),
        }
    }

    pub fn skeleton_def(&self) -> Result<SkeletonDef> {
        SkeletonDef::by_name(&self.skeleton)
    }

    /// Validated calibrations keyed by camera id.
    pub fn calibs(&self) -> Result<HashMap<String, CameraCalib>> {
        self.cameras
            .iter()
            .map(|c| Ok((c.id.clone(), c.calib()?)))
            .collect()
    }

    pub fn frame(&self, id: &str) -> Option<&FrameDoc> {
        self.frames.iter().find(|f| f.id == id)
    }

    /// Checks everything the type system cannot: versions, unique ids,
    /// camera references, timestamp order and joint counts.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::schema(
                "schema",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema),
            ));
        }
        let skel = self
            .skeleton_def()
            .map_err(|e| Error::schema("skeleton", e.to_string()))?;
        let joints = skel.joint_count();
        self.room
            .validate()
            .map_err(|e| Error::schema("room", e.to_string()))?;

        let mut cams = HashSet::new();
        for (i, c) in self.cameras.iter().enumerate() {
            if !cams.insert(c.id.as_str()) {
                return Err(Error::schema(
                    format!("cameras[{i}].id"),
                    format!("duplicate camera id {:?}", c.id),
                ));
            }
            c.calib()
                .map_err(|e| Error::schema(format!("cameras[{i}]"), e.to_string()))?;
        }

        let mut frame_ids = HashSet::new();
        let mut last_t = f64::NEG_INFINITY;
        for (fi, f) in self.frames.iter().enumerate() {
            let at = |rest: &str| format!("frames[{fi}]{rest}");
            let named = |msg: String| format!("frame {:?}: {msg}", f.id);
            if !frame_ids.insert(f.id.as_str()) {
                return Err(Error::schema(at(".id"), named("duplicate frame id".into())));
            }
            if !f.timestamp.is_finite() {
                return Err(Error::schema(at(".timestamp"), named("timestamp is not finite".into())));
            }
            if f.timestamp < last_t {
                return Err(Error::schema(
                    at(".timestamp"),
                    named(format!("timestamp {} decreases (previous {last_t})", f.timestamp)),
                ));
            }
            last_t = f.timestamp;
            let mut seen_views = HashSet::new();
            for (vi, v) in f.views.iter().enumerate() {
                if !cams.contains(v.camera.as_str()) {
                    return Err(Error::schema(
                        at(&format!(".views[{vi}].camera")),
                        named(format!("unknown camera {:?}", v.camera)),
                    ));
                }
                if !seen_views.insert(v.camera.as_str()) {
                    return Err(Error::schema(
                        at(&format!(".views[{vi}].camera")),
                        named(format!("camera {:?} appears twice", v.camera)),
                    ));
                }
                for (di, d) in v.detections.iter().flatten().enumerate() {
                    if d.keypoints.len() != joints {
                        return Err(Error::schema(
                            at(&format!(".views[{vi}].detections[{di}].keypoints")),
                            named(format!(
                                "{} keypoints, skeleton {} has {joints}",
                                d.keypoints.len(),
                                skel.name()
                            )),
                        ));
                    }
                }
            }
            for (li, l) in f.labels.iter().enumerate() {
                if l.joints.len() != joints {
                    return Err(Error::schema(
                        at(&format!(".labels[{li}].joints")),
                        named(format!("{} joints, skeleton has {joints}", l.joints.len())),
                    ));
                }
            }
            for (di, d) in f.depth.iter().enumerate() {
                check_depth_record(d, &cams).map_err(|m| Error::schema(at(&format!(".depth[{di}]")), named(m)))?;
            }
        }
        for (di, d) in self.depth_stream.iter().enumerate() {
            let path = format!("depth_stream[{di}]");
            check_depth_record(d, &cams).map_err(|m| Error::schema(path.clone(), m))?;
            if !d.timestamp.is_some_and(f64::is_finite) {
                return Err(Error::schema(path, "stream record needs a finite timestamp"));
            }
        }
        Ok(())
    }
}

fn check_depth_record(d: &DepthRecord, cams: &HashSet<&str>) -> std::result::Result<(), String> {
    match (&d.image, &d.points) {
        (Some(_), None) if !cams.contains(d.camera.as_str()) => {
            Err(format!("depth image from unknown camera {:?}", d.camera))
        }
        (Some(_), None) | (None, Some(_)) => Ok(()),
        _ => Err("depth record needs exactly one of image/points".into()),
    }
}

fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(path, e.into_inner().to_string())
    })
}

pub fn parse_dataset(text: &str) -> Result<DatasetDoc> {
    let doc: DatasetDoc = parse_json(text)?;
    doc.validate()?;
    Ok(doc)
}

pub fn read_dataset(path: &Path) -> Result<DatasetDoc> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text).map_err(|e| match e {
        Error::Schema { path: p, message } => Error::Schema {
            path: format!("{}: {p}", path.display()),
            message,
        },
        e => e,
    })
}

pub fn dataset_to_string(doc: &DatasetDoc) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("dataset serializes");
    s.push('\n');
    s
}

pub fn write_dataset(doc: &DatasetDoc, path: &Path) -> Result<()> {
    std::fs::write(path, dataset_to_string(doc)).map_err(|e| Error::io(path, e))
}

/// Concatenates datasets recorded with the same skeleton. Camera and frame
/// ids become `name/id`, frames are ordered by timestamp and the room is the
/// union of all rooms. A single dataset is returned unchanged.
pub fn merge_datasets(docs: &[DatasetDoc]) -> Result<DatasetDoc> {
    let Some(first) = docs.first() else {
        return Err(Error::InvalidInput("nothing to merge".into()));
    };
    if docs.len() == 1 {
        return Ok(first.clone());
    }
    if let Some(d) = docs.iter().find(|d| d.skeleton != first.skeleton) {
        return Err(Error::InvalidInput(format!(
            "cannot merge skeleton {:?} ({}) with {:?} ({})",
            d.skeleton, d.name, first.skeleton, first.name
        )));
    }
    let names: HashSet<&str> = docs.iter().map(|d| d.name.as_str()).collect();
    if names.len() != docs.len() {
        return Err(Error::InvalidInput("merged datasets need distinct names".into()));
    }
    let mut out = DatasetDoc {
        schema: SCHEMA_VERSION,
        name: docs.iter().map(|d| d.name.as_str()).collect::<Vec<_>>().join("+"),
        skeleton: first.skeleton.clone(),
        room: first.room,
        cameras: Vec::new(),
        frames: Vec::new(),
        depth_stream: Vec::new(),
        extra: first.extra.clone(),
    };
    for d in docs {
        let ns = |id: &str| format!("{}/{id}", d.name);
        out.room = out.room.union(&d.room);
        out.cameras.extend(d.cameras.iter().map(|c| CameraDoc {
            id: ns(&c.id),
            ..c.clone()
        }));
        let rename_depth = |r: &DepthRecord| DepthRecord {
            camera: ns(&r.camera),
            ..r.clone()
        };
        out.frames.extend(d.frames.iter().map(|f| FrameDoc {
            id: ns(&f.id),
            views: f
                .views
                .iter()
                .map(|v| ViewDoc {
                    camera: ns(&v.camera),
                    ..v.clone()
                })
                .collect(),
            depth: f.depth.iter().map(rename_depth).collect(),
            ..f.clone()
        }));
        out.depth_stream.extend(d.depth_stream.iter().map(rename_depth));
    }
    out.frames.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    out.depth_stream.sort_by(|a, b| {
        a.timestamp
            .unwrap_or(f64::NAN)
            .total_cmp(&b.timestamp.unwrap_or(f64::NAN))
    });
    Ok(out)
}

/// Depth records for every frame: the frame's own records followed by, per
/// depth sensor of the stream, the record nearest in time if within
/// `max_dt` seconds (ties go to the earlier record).
pub fn pair_depth(doc: &DatasetDoc, max_dt: f64) -> Result<Vec<Vec<&DepthRecord>>> {
    if !(max_dt > 0.0) {
        return Err(Error::InvalidInput(format!("max_dt must be > 0, got {max_dt}")));
    }
    let mut by_cam: BTreeMap<&str, Vec<&DepthRecord>> = BTreeMap::new();
    for r in &doc.depth_stream {
        by_cam.entry(r.camera.as_str()).or_default().push(r);
    }
    for v in by_cam.values_mut() {
        v.sort_by(|a, b| a.timestamp.unwrap_or(0.0).total_cmp(&b.timestamp.unwrap_or(0.0)));
    }
    Ok(doc
        .frames
        .iter()
        .map(|f| {
            let mut out: Vec<&DepthRecord> = f.depth.iter().collect();
            for recs in by_cam.values() {
                let mut best: Option<(f64, &DepthRecord)> = None;
                for r in recs {
                    let dt = (r.timestamp.unwrap_or(f64::NAN) - f.timestamp).abs();
                    if dt <= max_dt && best.is_none_or(|(b, _)| dt < b) {
                        best = Some((dt, r));
                    }
                }
                out.extend(best.map(|(_, r)| r));
            }
            out
        })
        .collect())
}

pub fn read_depth_png(path: &Path) -> Result<(u32, u32, Vec<u16>)> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_luma16();
    Ok((img.width(), img.height(), img.into_raw()))
}

pub fn write_depth_png(path: &Path, width: u32, height: u32, depth_mm: &[u16]) -> Result<()> {
    let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(width, height, depth_mm.to_vec())
        .ok_or_else(|| Error::InvalidInput("depth buffer size mismatch".into()))?;
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub frame: String,
    pub persons: Vec<Pose3D>,
}

/// Output of the `fuse` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionsDoc {
    pub schema: u32,
    pub skeleton: String,
    pub config: FusionConfig,
    pub frames: Vec<FramePrediction>,
}

impl PredictionsDoc {
    pub fn new(skeleton: &SkeletonDef, config: FusionConfig) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            skeleton: skeleton.name().to_string(),
            config,
            frames: Vec::new(),
        }
    }
}

pub fn parse_predictions(text: &str) -> Result<PredictionsDoc> {
    let doc: PredictionsDoc = parse_json(text)?;
    if doc.schema != SCHEMA_VERSION {
        return Err(Error::schema("schema", format!("unsupported schema version {}", doc.schema)));
    }
    let joints = SkeletonDef::by_name(&doc.skeleton)?.joint_count();
    for (fi, f) in doc.frames.iter().enumerate() {
        for (pi, p) in f.persons.iter().enumerate() {
            if p.joints.len() != joints {
                return Err(Error::schema(
                    format!("frames[{fi}].persons[{pi}].joints"),
                    format!("{} joints, skeleton has {joints}", p.joints.len()),
                ));
            }
        }
    }
    Ok(doc)
}

pub fn read_predictions(path: &Path) -> Result<PredictionsDoc> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text)
}

pub fn predictions_to_string(doc: &PredictionsDoc) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("predictions serialize");
    s.push('\n');
    s
}

pub fn write_predictions(doc: &PredictionsDoc, path: &Path) -> Result<()> {
    std::fs::write(path, predictions_to_string(doc)).map_err(|e| Error::io(path, e))
}

/// Directory against which a dataset's relative asset paths resolve.
pub fn base_dir(dataset_path: &Path) -> PathBuf {
    dataset_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap2d::Keypoint2;

    fn rig() -> Vec<CameraCalib> {
        ["a", "b"]
            .iter()
            .zip([-3000.0, 3000.0])
            .map(|(id, x)| {
                CameraCalib::look_at(
                    *id,
                    Point3::new(x, -3000.0, 2000.0),
                    Point3::new(0.0, 0.0, 1000.0),
                    Vector3::z(),
                    (700.0, 700.0),
                    (640.0, 480.0),
                    (1280, 960),
                )
                .unwrap()
            })
            .collect()
    }

    fn doc(name: &str, t0: f64) -> DatasetDoc {
        let skel = SkeletonDef::body13();
        let room = RoomBounds::new([-2000.0, -2000.0, 0.0], [2000.0, 2000.0, 2000.0]).unwrap();
        let mut d = DatasetDoc::new(name, &skel, room, &rig());
        for i in 0..3 {
            let mut kps = vec![None; 13];
            kps[0] = Some(Keypoint2 {
                u: 100.125 + i as f64,
                v: 0.1 + 0.2,
                confidence: 0.7,
            });
            d.frames.push(FrameDoc {
                id: format!("f{i}"),
                timestamp: t0 + i as f64 * 0.04,
                views: vec![
                    ViewDoc {
                        camera: "a".into(),
                        image: Some(format!("a/{i}.png")),
                        detections: Some(vec![Detection2D {
                            person_id: 1,
                            keypoints: kps,
                        }]),
                        extra: Extra::new(),
                    },
                    ViewDoc {
                        camera: "b".into(),
                        image: None,
                        detections: None,
                        extra: Extra::new(),
                    },
                ],
                depth: Vec::new(),
                labels: vec![LabelDoc::new(&[Some(Point3::new(1.0 / 3.0, 2.0, 3.0)); 13])],
                extra: Extra::new(),
            });
        }
        d
    }

    #[test]
    fn round_trip_is_exact() {
        let d = doc("x", 0.0);
        let text = dataset_to_string(&d);
        let back = parse_dataset(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(dataset_to_string(&back), text);
    }

    #[test]
    fn unknown_fields_survive() {
        let d = doc("x", 0.0);
        let mut v: Value = serde_json::to_value(&d).unwrap();
        v["vendor"] = serde_json::json!({"rig": "lab-3"});
        v["frames"][0]["weather"] = "fog".into();
        v["cameras"][1]["serial"] = 1234.into();
        v["frames"][1]["views"][0]["exposure"] = 0.25.into();
        let text = serde_json::to_string(&v).unwrap();
        let parsed = parse_dataset(&text).unwrap();
        assert_eq!(parsed.extra["vendor"]["rig"], "lab-3");
        let again: Value = serde_json::from_str(&dataset_to_string(&parsed)).unwrap();
        assert_eq!(again, v);
    }

    #[test]
    fn unknown_camera_names_the_frame() {
        let mut d = doc("x", 0.0);
        d.frames[2].views[1].camera = "zz".into();
        let err = parse_dataset(&dataset_to_string(&d)).unwrap_err().to_string();
        assert!(err.contains("frames[2]") && err.contains("\"f2\"") && err.contains("zz"), "{err}");
    }

    #[test]
    fn type_errors_carry_the_json_path() {
        let d = doc("x", 0.0);
        let mut v: Value = serde_json::to_value(&d).unwrap();
        v["frames"][1]["timestamp"] = "soon".into();
        let err = parse_dataset(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("frames[1].timestamp"), "{err}");
    }

    #[test]
    fn semantic_checks() {
        let mut d = doc("x", 0.0);
        d.frames[1].timestamp = -1.0;
        assert!(parse_dataset(&dataset_to_string(&d)).is_err());

        let mut d = doc("x", 0.0);
        d.cameras[1].id = "a".into();
        assert!(parse_dataset(&dataset_to_string(&d)).is_err());

        let mut d = doc("x", 0.0);
        d.frames[0].labels[0].joints.pop();
        let err = parse_dataset(&dataset_to_string(&d)).unwrap_err().to_string();
        assert!(err.contains("labels[0]"), "{err}");

        let mut d = doc("x", 0.0);
        d.schema = 2;
        assert!(parse_dataset(&dataset_to_string(&d)).is_err());
    }

    #[test]
    fn merging() {
        let a = doc("a", 0.0);
        let b = doc("b", 0.02);
        assert!(merge_datasets(&[]).is_err());
        assert_eq!(merge_datasets(std::slice::from_ref(&a)).unwrap(), a);

        let m = merge_datasets(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(m.frames.len(), a.frames.len() + b.frames.len());
        assert_eq!(m.cameras.len(), 4);
        m.validate().unwrap();
        let ts: Vec<f64> = m.frames.iter().map(|f| f.timestamp).collect();
        assert!(ts.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(m.frames[1].id, "b/f0");
        assert_eq!(m.frames[1].views[0].camera, "b/a");

        let mut c = doc("c", 0.0);
        c.skeleton = "coco17".into();
        assert!(merge_datasets(&[a, c]).is_err());
    }

    #[test]
    fn depth_pairing() {
        let mut d = doc("x", 0.0);
        let p = [Point3::new(0.0, 0.0, 0.0)];
        d.depth_stream = vec![
            DepthRecord::from_points("k", Some(0.0), &p),
            DepthRecord::from_points("k", Some(0.035), &p),
            DepthRecord::from_points("k", Some(0.045), &p),
            DepthRecord::from_points("k", Some(0.2), &p),
        ];
        d.validate().unwrap();
        let pairs = pair_depth(&d, 0.01).unwrap();
        // frames at 0.0, 0.04, 0.08
        assert_eq!(pairs[0].len(), 1);
        assert_eq!(pairs[0][0].timestamp, Some(0.0));
        // 0.035 and 0.045 are equally near; the earlier wins
        assert_eq!(pairs[1][0].timestamp, Some(0.035));
        assert!(pairs[2].is_empty());
        assert!(pair_depth(&d, 0.0).is_err());
    }

    #[test]
    fn depth_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let data: Vec<u16> = (0..12).map(|i| i * 5000).collect();
        write_depth_png(&path, 4, 3, &data).unwrap();
        assert_eq!(read_depth_png(&path).unwrap(), (4, 3, data.clone()));
        let rec = DepthRecord {
            camera: "a".into(),
            timestamp: None,
            image: Some("d.png".into()),
            points: None,
            extra: Extra::new(),
        };
        match rec.load(dir.path()).unwrap().data {
            DepthData::Image { depth_mm, .. } => assert_eq!(depth_mm, data),
            _ => panic!("expected an image"),
        }
    }

    #[test]
    fn predictions_round_trip() {
        let skel = SkeletonDef::body13();
        let mut p = PredictionsDoc::new(&skel, FusionConfig::default());
        p.frames.push(FramePrediction {
            frame: "f0".into(),
            persons: vec![Pose3D {
                joints: (0..13)
                    .map(|j| {
                        (j != 4).then_some(crate::persons::PoseJoint {
                            position: Point3::new(j as f64 * 0.1, 1.0 / 7.0, 3.0),
                            score: 0.5,
                        })
                    })
                    .collect(),
                score: 0.5,
                center: Point3::new(1.0, 2.0, 3.0),
            }],
        });
        let text = predictions_to_string(&p);
        assert_eq!(parse_predictions(&text).unwrap(), p);
    }
}
