//! Dataset-level drivers behind the command line: fuse every frame, score
//! predictions against labels, time the stages.

use std::collections::HashMap;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::calib::CameraCalib;
use crate::config::FusionConfig;
use crate::dataio::{pair_depth, DatasetDoc, FrameDoc, FramePrediction, PredictionsDoc};
use crate::depthmask::{build_mask, OccupancyGrid};
use crate::error::{Error, Result};
use crate::fusion::{GridGeometry, RoomBounds};
use crate::heatmap2d::Detection2D;
use crate::metrics::{MetricAccumulator, MetricReport};
use crate::persons::{fuse_frame_traced, FrameTrace, StageTimings};
use crate::skeleton::SkeletonDef;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub config: FusionConfig,
    /// Use only the first `k` cameras of the dataset.
    pub cameras: Option<usize>,
    /// Worker threads; 0 picks the machine default.
    pub jobs: usize,
}

impl RunOptions {
    pub fn new(config: FusionConfig) -> Self {
        Self {
            config,
            cameras: None,
            jobs: 0,
        }
    }
}

/// Everything needed to fuse frames of one dataset.
pub struct Prepared<'a> {
    pub doc: &'a DatasetDoc,
    pub skel: SkeletonDef,
    pub calibs: HashMap<String, CameraCalib>,
    pub bounds: RoomBounds,
    allowed: Option<Vec<String>>,
    depth: Option<Vec<Vec<crate::depthmask::DepthFrame>>>,
    opts: RunOptions,
}

impl<'a> Prepared<'a> {
    pub fn new(doc: &'a DatasetDoc, base_dir: &Path, opts: &RunOptions) -> Result<Self> {
        opts.config.validate()?;
        doc.validate()?;
        let skel = doc.skeleton_def()?;
        let calibs = doc.calibs()?;
        let bounds = opts.config.bounds.unwrap_or(doc.room);
        let allowed = match opts.cameras {
            None => None,
            Some(k) if k < 2 => return Err(Error::TooFewViews(k)),
            Some(k) if k > doc.cameras.len() => {
                return Err(Error::InvalidInput(format!(
                    "asked for {k} cameras, dataset has {}",
                    doc.cameras.len()
                )))
            }
            Some(k) => Some(doc.cameras[..k].iter().map(|c| c.id.clone()).collect()),
        };
        let depth = if opts.config.use_depth {
            let paired = pair_depth(doc, opts.config.depth_max_dt)?;
            Some(
                paired
                    .iter()
                    .map(|recs| recs.iter().map(|r| r.load(base_dir)).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(Self {
            doc,
            skel,
            calibs,
            bounds,
            allowed,
            depth,
            opts: opts.clone(),
        })
    }

    /// Views of a frame that take part in fusion: views with detections from
    /// the selected cameras.
    fn views(&self, frame: &FrameDoc) -> Result<(Vec<Vec<Detection2D>>, Vec<CameraCalib>)> {
        let mut dets = Vec::new();
        let mut calibs = Vec::new();
        for v in &frame.views {
            if let Some(allowed) = &self.allowed {
                if !allowed.contains(&v.camera) {
                    continue;
                }
            }
            let Some(d) = &v.detections else { continue };
            dets.push(d.clone());
            calibs.push(self.calibs[&v.camera].clone());
        }
        if calibs.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "frame {:?}: {} view(s) with 2D detections, need at least 2",
                frame.id,
                calibs.len()
            )));
        }
        Ok((dets, calibs))
    }

    fn mask(&self, index: usize) -> Result<Option<OccupancyGrid>> {
        let Some(depth) = &self.depth else {
            return Ok(None);
        };
        let frames = &depth[index];
        if frames.is_empty() {
            return Ok(None);
        }
        let geometry = GridGeometry::new(self.bounds, self.opts.config.voxel_size)?;
        let all: Vec<CameraCalib> = self.calibs.values().cloned().collect();
        build_mask(frames, &all, geometry, &self.opts.config.mask()).map(Some)
    }

    /// Runs the full pipeline on frame `index`, keeping intermediates.
    pub fn trace(&self, index: usize) -> Result<FrameTrace> {
        let frame = &self.doc.frames[index];
        let (dets, calibs) = self.views(frame)?;
        let t = Instant::now();
        let mask = self.mask(index)?;
        let mask_time = t.elapsed();
        let mut trace = fuse_frame_traced(
            &dets,
            &calibs,
            &self.skel,
            &self.bounds,
            &self.opts.config,
            mask.as_ref(),
        )
        .map_err(|e| match e {
            Error::InvalidInput(m) => Error::InvalidInput(format!("frame {:?}: {m}", frame.id)),
            e => e,
        })?;
        trace.timings.projection += mask_time;
        Ok(trace)
    }

    pub fn frame_index(&self, id: &str) -> Option<usize> {
        self.doc.frames.iter().position(|f| f.id == id)
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Fuses every frame. Output frames follow dataset order whatever the
/// thread count.
pub fn fuse_dataset(doc: &DatasetDoc, base_dir: &Path, opts: &RunOptions) -> Result<PredictionsDoc> {
    let prep = Prepared::new(doc, base_dir, opts)?;
    let frames = with_pool(opts.jobs, || {
        (0..doc.frames.len())
            .into_par_iter()
            .map(|i| {
                Ok(FramePrediction {
                    frame: doc.frames[i].id.clone(),
                    persons: prep.trace(i)?.poses,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut out = PredictionsDoc::new(&prep.skel, opts.config.clone());
    out.frames = frames;
    Ok(out)
}

/// Scores predictions against the dataset labels. Dataset frames missing
/// from the predictions count as frames without predictions.
pub fn evaluate(preds: &PredictionsDoc, doc: &DatasetDoc) -> Result<MetricReport> {
    Ok(evaluate_frames(preds, doc)?.report())
}

pub fn evaluate_frames(preds: &PredictionsDoc, doc: &DatasetDoc) -> Result<MetricAccumulator> {
    if preds.skeleton != doc.skeleton {
        return Err(Error::InvalidInput(format!(
            "predictions use skeleton {:?}, dataset {:?}",
            preds.skeleton, doc.skeleton
        )));
    }
    let skel = doc.skeleton_def()?;
    let mut by_frame: HashMap<&str, &FramePrediction> = HashMap::new();
    for p in &preds.frames {
        if doc.frame(&p.frame).is_none() {
            return Err(Error::InvalidInput(format!(
                "prediction for unknown frame {:?}",
                p.frame
            )));
        }
        if by_frame.insert(p.frame.as_str(), p).is_some() {
            return Err(Error::InvalidInput(format!(
                "frame {:?} predicted twice",
                p.frame
            )));
        }
    }
    let mut acc = MetricAccumulator::new();
    for f in &doc.frames {
        let gts: Vec<_> = f.labels.iter().map(|l| l.points()).collect();
        let (pp, scores) = match by_frame.get(f.id.as_str()) {
            Some(p) => (
                p.persons.iter().map(|x| x.positions()).collect(),
                p.persons.iter().map(|x| x.score).collect(),
            ),
            None => (Vec::new(), Vec::new()),
        };
        acc.add_frame(&pp, &scores, &gts, &skel);
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub frames: usize,
    pub repeats: usize,
    pub voxels: usize,
    pub heatmaps_ms: f64,
    pub projection_ms: f64,
    pub peaks_ms: f64,
    pub grouping_ms: f64,
    pub total_ms: f64,
    pub fps: f64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Per-frame stage times averaged over all frames and repeats, one frame at
/// a time.
pub fn bench(doc: &DatasetDoc, base_dir: &Path, opts: &RunOptions, repeats: usize) -> Result<BenchReport> {
    let prep = Prepared::new(doc, base_dir, opts)?;
    let repeats = repeats.max(1);
    let n = doc.frames.len();
    let mut total = StageTimings::default();
    with_pool(opts.jobs, || -> Result<()> {
        for _ in 0..repeats {
            for i in 0..n {
                total += prep.trace(i)?.timings;
            }
        }
        Ok(())
    })??;
    let runs = (n * repeats).max(1) as f64;
    let per = |d: Duration| ms(d) / runs;
    let total_ms = per(total.total());
    Ok(BenchReport {
        frames: n,
        repeats,
        voxels: GridGeometry::new(prep.bounds, opts.config.voxel_size)?.len(),
        heatmaps_ms: per(total.heatmaps),
        projection_ms: per(total.projection),
        peaks_ms: per(total.peaks),
        grouping_ms: per(total.grouping),
        total_ms,
        fps: if total_ms > 0.0 { 1e3 / total_ms } else { 0.0 },
    })
}
