//! Python bindings: cameras, skeletons, single-frame fusion, datasets,
//! evaluation and the synthetic generator.

use std::collections::HashMap;
use std::path::PathBuf;

use nalgebra::{Matrix3, Point3, Vector3};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyType};

use vkf_core::dataio::{self, DatasetDoc, PredictionsDoc};
use vkf_core::heatmap2d::{Detection2D, Keypoint2};
use vkf_core::metrics;
use vkf_core::pipeline::{self, RunOptions};
use vkf_core::synthgen::{self, SynthConfig};
use vkf_core::{CameraCalib, Distortion, Error, Pixel, RoomBounds};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn json_loads<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn json_dumps(obj: &Bound<'_, PyAny>) -> PyResult<String> {
    obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()
}

type Xyz = (f64, f64, f64);

fn point(p: Xyz) -> Point3<f64> {
    Point3::new(p.0, p.1, p.2)
}

#[pyclass(module = "vkfusion", name = "Camera", frozen, from_py_object)]
#[derive(Clone)]
struct PyCamera(CameraCalib);

#[pymethods]
impl PyCamera {
    /// `K`, `R` as row-major 3×3 nested lists, `t` in mm, distortion
    /// `[k1, k2, p1, p2, k3]`.
    #[new]
    #[pyo3(signature = (id, k, r, t, image_size, distortion=None))]
    fn new(
        id: String,
        k: [[f64; 3]; 3],
        r: [[f64; 3]; 3],
        t: [f64; 3],
        image_size: (u32, u32),
        distortion: Option<[f64; 5]>,
    ) -> PyResult<Self> {
        let m = |a: [[f64; 3]; 3]| Matrix3::from_fn(|i, j| a[i][j]);
        CameraCalib::new(
            id,
            m(k),
            m(r),
            Vector3::from(t),
            Distortion::from_array(distortion.unwrap_or_default()),
            image_size,
        )
        .map(Self)
        .map_err(err)
    }

    #[classmethod]
    #[pyo3(signature = (id, eye, target, image_size, focal=600.0, up=(0.0, 0.0, 1.0)))]
    fn look_at(
        _cls: &Bound<'_, PyType>,
        id: String,
        eye: Xyz,
        target: Xyz,
        image_size: (u32, u32),
        focal: f64,
        up: Xyz,
    ) -> PyResult<Self> {
        CameraCalib::look_at(
            id,
            point(eye),
            point(target),
            Vector3::new(up.0, up.1, up.2),
            (focal, focal),
            (image_size.0 as f64 / 2.0, image_size.1 as f64 / 2.0),
            image_size,
        )
        .map(Self)
        .map_err(err)
    }

    #[getter]
    fn id(&self) -> String {
        self.0.id().to_string()
    }

    #[getter]
    fn image_size(&self) -> (u32, u32) {
        (self.0.width(), self.0.height())
    }

    #[getter]
    fn center(&self) -> Xyz {
        let c = self.0.center();
        (c.x, c.y, c.z)
    }

    /// Pixel of a world point, `None` behind the camera.
    fn project(&self, p: Xyz) -> Option<(f64, f64)> {
        self.0.project(&point(p)).map(|px| (px.u, px.v))
    }

    fn unproject_depth(&self, pixel: (f64, f64), depth: f64) -> PyResult<Xyz> {
        let p = self.0.unproject_depth(Pixel::new(pixel.0, pixel.1), depth).map_err(err)?;
        Ok((p.x, p.y, p.z))
    }

    fn __repr__(&self) -> String {
        format!("Camera({:?}, {}x{})", self.0.id(), self.0.width(), self.0.height())
    }
}

#[pyclass(module = "vkfusion", name = "Skeleton", frozen)]
struct PySkeleton(vkf_core::SkeletonDef);

#[pymethods]
impl PySkeleton {
    /// "body13", "coco17" or "wholebody133".
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        vkf_core::SkeletonDef::by_name(name).map(Self).map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    #[getter]
    fn joint_names(&self) -> Vec<String> {
        self.0.joint_names().to_vec()
    }

    #[getter]
    fn parents(&self) -> Vec<usize> {
        (0..self.0.joint_count()).map(|j| self.0.parent_of(j)).collect()
    }

    #[getter]
    fn bones(&self) -> Vec<(usize, usize)> {
        self.0.bones().collect()
    }

    fn __len__(&self) -> usize {
        self.0.joint_count()
    }
}

#[pyclass(module = "vkfusion", name = "FusionConfig", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFusionConfig(vkf_core::FusionConfig);

#[pymethods]
impl PyFusionConfig {
    /// Defaults overridden by keyword arguments named like the TOML keys.
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let cfg = match kwargs {
            None => vkf_core::FusionConfig::default(),
            Some(kw) => serde_json_from_py(kw)?,
        };
        cfg.validate().map_err(err)?;
        Ok(Self(cfg))
    }

    #[classmethod]
    fn from_toml(_cls: &Bound<'_, PyType>, text: &str) -> PyResult<Self> {
        vkf_core::FusionConfig::from_toml_str(text).map(Self).map_err(err)
    }

    fn to_toml(&self) -> String {
        self.0.to_toml_string()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_loads(py, &to_json(&self.0))
    }

    /// A copy with some settings changed.
    #[pyo3(signature = (**kwargs))]
    fn replace(&self, py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let d = self.to_dict(py)?;
        if let Some(kw) = kwargs {
            d.call_method1("update", (kw,))?;
        }
        let cfg: vkf_core::FusionConfig = serde_json_from_py(&d)?;
        cfg.validate().map_err(err)?;
        Ok(Self(cfg))
    }

    fn __getattr__<'py>(&self, py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
        self.to_dict(py)?
            .get_item(name)
            .map_err(|_| pyo3::exceptions::PyAttributeError::new_err(name.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("FusionConfig({})", to_json(&self.0))
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializes")
}

fn serde_json_from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    serde_json::from_str(&json_dumps(obj)?).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyclass(module = "vkfusion", name = "Pose", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPose(vkf_core::Pose3D);

#[pymethods]
impl PyPose {
    /// `(x, y, z, score)` per joint, `None` where missing.
    #[getter]
    fn joints(&self) -> Vec<Option<(f64, f64, f64, f64)>> {
        self.0
            .joints
            .iter()
            .map(|j| j.map(|j| (j.position.x, j.position.y, j.position.z, j.score)))
            .collect()
    }

    #[getter]
    fn positions(&self) -> Vec<Option<Xyz>> {
        self.0.positions().iter().map(|p| p.map(|p| (p.x, p.y, p.z))).collect()
    }

    #[getter]
    fn score(&self) -> f64 {
        self.0.score
    }

    #[getter]
    fn center(&self) -> Xyz {
        (self.0.center.x, self.0.center.y, self.0.center.z)
    }

    fn __len__(&self) -> usize {
        self.0.present_count()
    }

    fn __repr__(&self) -> String {
        format!("Pose({} joints, score {:.3})", self.0.present_count(), self.0.score)
    }
}

type PyDetection = (u32, Vec<Option<(f64, f64, f64)>>);

/// Fuses one frame. `detections[v]` lists `(person_id, keypoints)` seen by
/// `cameras[v]`, keypoints as `(u, v, confidence)` or `None`.
#[pyfunction]
#[pyo3(signature = (detections, cameras, skeleton, bounds, config=None))]
fn fuse_frame(
    detections: Vec<Vec<PyDetection>>,
    cameras: Vec<PyCamera>,
    skeleton: &PySkeleton,
    bounds: (Xyz, Xyz),
    config: Option<&PyFusionConfig>,
) -> PyResult<Vec<PyPose>> {
    let dets: Vec<Vec<Detection2D>> = detections
        .into_iter()
        .map(|view| {
            view.into_iter()
                .map(|(person_id, kps)| Detection2D {
                    person_id,
                    keypoints: kps
                        .into_iter()
                        .map(|k| k.map(|(u, v, confidence)| Keypoint2 { u, v, confidence }))
                        .collect(),
                })
                .collect()
        })
        .collect();
    let calibs: Vec<CameraCalib> = cameras.into_iter().map(|c| c.0).collect();
    let (lo, hi) = bounds;
    let room = RoomBounds::new([lo.0, lo.1, lo.2], [hi.0, hi.1, hi.2]).map_err(err)?;
    let cfg = config.map(|c| c.0.clone()).unwrap_or_default();
    let poses = vkf_core::fuse_frame(&dets, &calibs, &skeleton.0, &room, &cfg, None).map_err(err)?;
    Ok(poses.into_iter().map(PyPose).collect())
}

#[pyclass(module = "vkfusion", name = "Dataset", frozen)]
struct PyDataset {
    doc: DatasetDoc,
    base_dir: PathBuf,
}

#[pymethods]
impl PyDataset {
    #[classmethod]
    fn read(_cls: &Bound<'_, PyType>, path: PathBuf) -> PyResult<Self> {
        let doc = dataio::read_dataset(&path).map_err(err)?;
        Ok(Self {
            doc,
            base_dir: dataio::base_dir(&path),
        })
    }

    #[classmethod]
    fn from_json(_cls: &Bound<'_, PyType>, text: &str) -> PyResult<Self> {
        Ok(Self {
            doc: dataio::parse_dataset(text).map_err(err)?,
            base_dir: PathBuf::from("."),
        })
    }

    fn to_json(&self) -> String {
        dataio::dataset_to_string(&self.doc)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        dataio::write_dataset(&self.doc, &path).map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.doc.name.clone()
    }

    #[getter]
    fn skeleton(&self) -> PyResult<PySkeleton> {
        self.doc.skeleton_def().map(PySkeleton).map_err(err)
    }

    #[getter]
    fn frame_ids(&self) -> Vec<String> {
        self.doc.frames.iter().map(|f| f.id.clone()).collect()
    }

    #[getter]
    fn cameras(&self) -> PyResult<Vec<PyCamera>> {
        self.doc
            .cameras
            .iter()
            .map(|c| c.calib().map(PyCamera).map_err(err))
            .collect()
    }

    /// Ground-truth joint positions per person of one frame.
    fn labels(&self, frame: &str) -> PyResult<Vec<Vec<Option<Xyz>>>> {
        let f = self
            .doc
            .frame(frame)
            .ok_or_else(|| PyValueError::new_err(format!("unknown frame {frame:?}")))?;
        Ok(f.labels
            .iter()
            .map(|l| l.points().iter().map(|p| p.map(|p| (p.x, p.y, p.z))).collect())
            .collect())
    }

    /// Fuses every frame.
    #[pyo3(signature = (config=None, cameras=None, jobs=0))]
    fn fuse(&self, py: Python<'_>, config: Option<&PyFusionConfig>, cameras: Option<usize>, jobs: usize) -> PyResult<PyPredictions> {
        let opts = RunOptions {
            config: config.map(|c| c.0.clone()).unwrap_or_default(),
            cameras,
            jobs,
        };
        let doc = py
            .detach(|| pipeline::fuse_dataset(&self.doc, &self.base_dir, &opts))
            .map_err(err)?;
        Ok(PyPredictions(doc))
    }

    fn __len__(&self) -> usize {
        self.doc.frames.len()
    }
}

#[pyclass(module = "vkfusion", name = "Predictions", frozen)]
struct PyPredictions(PredictionsDoc);

#[pymethods]
impl PyPredictions {
    #[classmethod]
    fn read(_cls: &Bound<'_, PyType>, path: PathBuf) -> PyResult<Self> {
        dataio::read_predictions(&path).map(Self).map_err(err)
    }

    #[classmethod]
    fn from_json(_cls: &Bound<'_, PyType>, text: &str) -> PyResult<Self> {
        dataio::parse_predictions(text).map(Self).map_err(err)
    }

    fn to_json(&self) -> String {
        dataio::predictions_to_string(&self.0)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        dataio::write_predictions(&self.0, &path).map_err(err)
    }

    #[getter]
    fn config(&self) -> PyFusionConfig {
        PyFusionConfig(self.0.config.clone())
    }

    /// Poses per frame id.
    #[getter]
    fn frames(&self) -> HashMap<String, Vec<PyPose>> {
        self.0
            .frames
            .iter()
            .map(|f| (f.frame.clone(), f.persons.iter().cloned().map(PyPose).collect()))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.0.frames.len()
    }
}

/// Metric report as a dict (PCP, PCK, MPJPE, Recall, Invalid, F1, ...).
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, predictions: &PyPredictions, dataset: &PyDataset) -> PyResult<Bound<'py, PyAny>> {
    let r = pipeline::evaluate(&predictions.0, &dataset.doc).map_err(err)?;
    json_loads(py, &to_json(&r))
}

/// Matches predicted to ground-truth persons (lists of joint positions or
/// `None`). Returns `(pairs, unmatched_gt, invalid_predictions)` with pairs
/// as `(pred, gt, error_mm)`.
#[pyfunction]
#[pyo3(signature = (predictions, ground_truth, scores=None))]
#[allow(clippy::type_complexity)]
fn match_persons(
    predictions: Vec<Vec<Option<Xyz>>>,
    ground_truth: Vec<Vec<Option<Xyz>>>,
    scores: Option<Vec<f64>>,
) -> PyResult<(Vec<(usize, usize, f64)>, Vec<usize>, Vec<usize>)> {
    let conv = |v: Vec<Vec<Option<Xyz>>>| -> Vec<Vec<Option<Point3<f64>>>> {
        v.into_iter().map(|p| p.into_iter().map(|j| j.map(point)).collect()).collect()
    };
    let scores = scores.unwrap_or_else(|| vec![1.0; predictions.len()]);
    if scores.len() != predictions.len() {
        return Err(PyValueError::new_err("one score per prediction"));
    }
    let m = metrics::match_persons(&conv(predictions), &scores, &conv(ground_truth));
    Ok((
        m.pairs.iter().map(|p| (p.pred, p.gt, p.error)).collect(),
        m.unmatched_gt,
        m.invalid_predictions,
    ))
}

/// F1 from the Invalid and Recall@500 percentages.
#[pyfunction]
fn f1(invalid_pct: f64, recall500: f64) -> f64 {
    metrics::f1(invalid_pct, recall500)
}

/// Synthetic dataset; keyword arguments as the `vkf synth` flags.
#[pyfunction]
#[pyo3(signature = (
    persons=1, frames=10, cameras=4, skeleton="body13", scenario="random", rig="corners",
    jitter=0.0, dropout=0.0, pose_noise=0.0, depth_points=0, seed=0, fps=25.0, name="synth",
))]
#[allow(clippy::too_many_arguments)]
fn synth(
    persons: usize,
    frames: usize,
    cameras: usize,
    skeleton: &str,
    scenario: &str,
    rig: &str,
    jitter: f64,
    dropout: f64,
    pose_noise: f64,
    depth_points: usize,
    seed: u64,
    fps: f64,
    name: &str,
) -> PyResult<PyDataset> {
    let cfg = SynthConfig {
        name: name.into(),
        skeleton: skeleton.into(),
        scenario: scenario.parse().map_err(err)?,
        cameras,
        rig: rig.parse().map_err(err)?,
        persons,
        frames,
        fps,
        jitter_px: jitter,
        dropout,
        pose_noise,
        depth_points_per_joint: depth_points,
        room: synthgen::default_room(),
        seed,
    };
    Ok(PyDataset {
        doc: synthgen::generate(&cfg).map_err(err)?,
        base_dir: PathBuf::from("."),
    })
}

#[pymodule]
fn vkfusion(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCamera>()?;
    m.add_class::<PySkeleton>()?;
    m.add_class::<PyFusionConfig>()?;
    m.add_class::<PyPose>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPredictions>()?;
    m.add_function(wrap_pyfunction!(fuse_frame, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(match_persons, m)?)?;
    m.add_function(wrap_pyfunction!(f1, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    Ok(())
}
