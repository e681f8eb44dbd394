//! Synthetic multi-camera scenes with exact ground truth.
//!
//! All randomness comes from ChaCha8 seeded through `seed_from_u64`, with a
//! separate stream per purpose and frame, so a seed reproduces the same
//! dataset on every platform.
//!
//! World frame: z up, millimeters. Persons stand on `z = 0` facing a random
//! direction; limbs are built by forward kinematics from bounded joint angles
//! so no child is more than 600 mm from its parent.

use std::f64::consts::{FRAC_PI_2, PI};
use std::str::FromStr;

use nalgebra::{Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitBall};

use crate::calib::CameraCalib;
use crate::dataio::{DatasetDoc, DepthRecord, Extra, FrameDoc, LabelDoc, ViewDoc};
use crate::depthmask::{DepthData, DepthFrame};
use crate::error::{Error, Result};
use crate::fusion::RoomBounds;
use crate::heatmap2d::{Detection2D, Keypoint2};
use crate::skeleton::{SkeletonDef, COCO17_TO_BODY13, FACE_KEYPOINTS};

pub const IMAGE_SIZE: (u32, u32) = (1280, 960);
pub const FOCAL_PX: f64 = 600.0;
pub const CAMERA_HEIGHT: f64 = 2500.0;
/// Minimum distance between person centers in generated scenes.
pub const MIN_SEPARATION: f64 = 1000.0;
/// Longest child-parent distance any generated skeleton has.
pub const MAX_LIMB: f64 = 600.0;
/// Radius of the capsules depth points are drawn from.
pub const CAPSULE_RADIUS: f64 = 60.0;

/// Ground-truth joints of one person in skeleton order.
pub type Person = Vec<Point3<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RigStyle {
    /// Evenly spaced on a circle around the room.
    Ring,
    /// Like `Ring` but starting at the room diagonals, so four cameras sit in
    /// the corners.
    Corners,
}

impl FromStr for RigStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(RigStyle::Ring),
            "corners" => Ok(RigStyle::Corners),
            _ => Err(Error::InvalidInput(format!("unknown rig style {s:?} (ring|corners)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Random,
    /// Two cameras and a mirrored pair of persons whose rays cross exactly
    /// between them. The ghosts look as good as the real persons from
    /// these views.
    Ghost,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Scenario::Random),
            "ghost" => Ok(Scenario::Ghost),
            _ => Err(Error::InvalidInput(format!("unknown scenario {s:?} (random|ghost)"))),
        }
    }
}

// stream ids, one per consumer of randomness
const STREAM_RIG: u64 = 1;
const STREAM_SCENE: u64 = 2;
const STREAM_DETECTIONS: u64 = 3;
const STREAM_DEPTH: u64 = 4;

fn rng(seed: u64, stream: u64, frame: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream((stream << 40) | frame);
    r
}

pub fn default_room() -> RoomBounds {
    RoomBounds::new([-2000.0, -2000.0, 0.0], [2000.0, 2000.0, 2000.0]).expect("valid room")
}

fn camera(id: String, eye: Point3<f64>, target: Point3<f64>) -> Result<CameraCalib> {
    CameraCalib::look_at(
        id,
        eye,
        target,
        Vector3::z(),
        (FOCAL_PX, FOCAL_PX),
        (IMAGE_SIZE.0 as f64 / 2.0, IMAGE_SIZE.1 as f64 / 2.0),
        IMAGE_SIZE,
    )
}

/// Cameras around `room`, all aimed at a point 900 mm above the floor
/// center. The seed jitters azimuth (±5°) and height (±200 mm).
pub fn make_rig(n: usize, room: &RoomBounds, style: RigStyle, seed: u64) -> Result<Vec<CameraCalib>> {
    if n < 2 {
        return Err(Error::TooFewViews(n));
    }
    room.validate()?;
    let mut rng = rng(seed, STREAM_RIG, 0);
    let c = room.center();
    let e = room.extent();
    let radius = 0.5 * e[0].max(e[1]) + 2500.0;
    let target = Point3::new(c.x, c.y, room.min[2] + 900.0);
    let start = match style {
        RigStyle::Ring => 0.0,
        RigStyle::Corners => PI / 4.0,
    };
    (0..n)
        .map(|i| {
            let az = start + 2.0 * PI * i as f64 / n as f64 + rng.random_range(-5f64..5.0).to_radians();
            let h = room.min[2] + CAMERA_HEIGHT + rng.random_range(-200.0..200.0);
            let eye = Point3::new(c.x + radius * az.cos(), c.y + radius * az.sin(), h);
            camera(format!("cam{i}"), eye, target)
        })
        .collect()
}

/// Fixed rig of the ghost scenario: two cameras on one side of the room,
/// mirror images of each other across `x = 0`.
pub fn ghost_rig() -> Result<Vec<CameraCalib>> {
    let target = Point3::new(0.0, 0.0, 900.0);
    Ok(vec![
        camera("camA".into(), Point3::new(-4000.0, -4000.0, CAMERA_HEIGHT), target)?,
        camera("camB".into(), Point3::new(4000.0, -4000.0, CAMERA_HEIGHT), target)?,
    ])
}

/// Full 133-keypoint body in a person-local frame (x right, y forward, z up),
/// feet on the floor.
fn wholebody_local(rng: &mut ChaCha8Rng) -> Vec<Point3<f64>> {
    let s: f64 = rng.random_range(0.9..1.1);
    let deg = |r: &mut ChaCha8Rng, lo: f64, hi: f64| r.random_range(lo..hi).to_radians();
    let fwd = Vector3::y();
    let mut j = vec![Point3::origin(); 133];

    let lean = Rotation3::from_axis_angle(&Vector3::x_axis(), deg(rng, -8.0, 12.0));
    let hip_c = Point3::new(0.0, 0.0, 950.0 * s);
    let torso = |p: Vector3<f64>| hip_c + lean * p;
    j[11] = hip_c + Vector3::new(-110.0 * s, 0.0, 0.0);
    j[12] = hip_c + Vector3::new(110.0 * s, 0.0, 0.0);
    j[5] = torso(Vector3::new(-190.0 * s, 0.0, 500.0 * s));
    j[6] = torso(Vector3::new(190.0 * s, 0.0, 500.0 * s));

    let neck = torso(Vector3::new(0.0, 0.0, 550.0 * s));
    let head = lean * Rotation3::from_axis_angle(&Vector3::z_axis(), deg(rng, -30.0, 30.0));
    let at_head = |p: Vector3<f64>| neck + head * (p * s);
    j[0] = at_head(Vector3::new(0.0, 90.0, 120.0));
    j[1] = at_head(Vector3::new(-32.0, 70.0, 155.0));
    j[2] = at_head(Vector3::new(32.0, 70.0, 155.0));
    j[3] = at_head(Vector3::new(-75.0, -10.0, 135.0));
    j[4] = at_head(Vector3::new(75.0, -10.0, 135.0));
    for (k, p) in face_template().into_iter().enumerate() {
        j[23 + k] = j[0] + head * (p * s);
    }

    // side = -1 for the person's left
    for (side, sh, el, wr) in [(-1.0, 5, 7, 9), (1.0, 6, 8, 10)] {
        let abduct = Rotation3::from_axis_angle(&Vector3::y_axis(), -side * deg(rng, 0.0, 60.0));
        let flex = Rotation3::from_axis_angle(&Vector3::x_axis(), deg(rng, -30.0, 80.0));
        let upper = lean * flex * abduct * -Vector3::z();
        j[el] = j[sh] + upper * 290.0 * s;
        let lower = bend(&upper, &fwd, deg(rng, 0.0, 110.0));
        j[wr] = j[el] + lower * 250.0 * s;
        let root = 91 + if side < 0.0 { 0 } else { 21 };
        hand(rng, j[wr], &lower, side, s, &mut j[root..root + 21]);
    }

    for (side, hip, knee, ankle) in [(-1.0, 11, 13, 15), (1.0, 12, 14, 16)] {
        let abduct = Rotation3::from_axis_angle(&Vector3::y_axis(), -side * deg(rng, 0.0, 12.0));
        let flex = Rotation3::from_axis_angle(&Vector3::x_axis(), deg(rng, -20.0, 35.0));
        let thigh = flex * abduct * -Vector3::z();
        j[knee] = j[hip] + thigh * 430.0 * s;
        let shin = bend(&thigh, &-fwd, deg(rng, 0.0, 45.0));
        j[ankle] = j[knee] + shin * 420.0 * s;
    }
    // stand on the floor
    let lift = 110.0 * s - j[15].z.min(j[16].z);
    for p in j.iter_mut() {
        p.z += lift;
    }
    for (side, ankle, first) in [(-1.0, 15, 17), (1.0, 16, 20)] {
        let toe_dir = Rotation3::from_axis_angle(&Vector3::z_axis(), -side * deg(rng, 0.0, 20.0)) * fwd;
        let out = toe_dir.cross(&Vector3::z()) * -side;
        let a = j[ankle];
        j[first] = a + (toe_dir * 170.0 - out * 25.0 - Vector3::z() * 70.0) * s;
        j[first + 1] = a + (toe_dir * 150.0 + out * 35.0 - Vector3::z() * 70.0) * s;
        j[first + 2] = a + (toe_dir * -50.0 - Vector3::z() * 60.0) * s;
    }
    j
}

/// `dir` rotated by `angle` towards the part of `towards` orthogonal to it.
fn bend(dir: &Vector3<f64>, towards: &Vector3<f64>, angle: f64) -> Vector3<f64> {
    let perp = towards - dir * dir.dot(towards);
    let perp = if perp.norm() < 1e-6 {
        dir.cross(&Vector3::x())
    } else {
        perp
    }
    .normalize();
    dir * angle.cos() + perp * angle.sin()
}

/// Hand root plus five four-joint fingers, roughly 190 mm long.
fn hand(rng: &mut ChaCha8Rng, wrist: Point3<f64>, forearm: &Vector3<f64>, side: f64, s: f64, out: &mut [Point3<f64>]) {
    let d = forearm.normalize();
    let a = {
        let c = d.cross(&Vector3::z());
        if c.norm() < 1e-6 { d.cross(&Vector3::x()) } else { c }
    }
    .normalize()
        * side;
    let b = d.cross(&a);
    let root = wrist + d * 20.0 * s;
    out[0] = root;
    for f in 0..5 {
        let curl: f64 = rng.random_range(0f64..50.0).to_radians();
        let (base, mut dir, segs) = if f == 0 {
            (root + (d * 25.0 - a * 30.0 + b * 10.0) * s, (d - a * 0.8).normalize(), [30.0, 30.0, 25.0])
        } else {
            let off = [0.0, -17.0, 0.0, 17.0, 33.0][f];
            (root + (d * 75.0 + a * off) * s, d, [40.0, 25.0, 20.0])
        };
        let k = 1 + f * 4;
        out[k] = base;
        for (i, len) in segs.iter().enumerate() {
            dir = bend(&dir, &b, curl / 3.0);
            out[k + i + 1] = out[k + i] + dir * (len * s);
        }
    }
}

/// 68 face points relative to the nose tip, within 100 mm of it.
fn face_template() -> Vec<Vector3<f64>> {
    let mut f = Vec::with_capacity(FACE_KEYPOINTS);
    for i in 0..17 {
        let t = -FRAC_PI_2 + PI * i as f64 / 16.0;
        f.push(Vector3::new(60.0 * t.sin(), -50.0 + 40.0 * t.cos(), -30.0 - 50.0 * t.cos()));
    }
    for side in [-1.0, 1.0] {
        for i in 0..5 {
            let x = side * (15.0 + 10.0 * if side < 0.0 { 4 - i } else { i } as f64);
            f.push(Vector3::new(x, -25.0, 45.0));
        }
    }
    for k in 0..4 {
        f.push(Vector3::new(0.0, -25.0 + 8.0 * k as f64, 40.0 - 12.0 * k as f64));
    }
    for i in 0..5 {
        f.push(Vector3::new(-16.0 + 8.0 * i as f64, -10.0, -12.0));
    }
    for side in [-1.0, 1.0] {
        for i in 0..6 {
            let t = PI * i as f64 / 3.0;
            f.push(Vector3::new(side * 33.0 - 12.0 * t.cos(), -20.0, 25.0 + 4.0 * t.sin()));
        }
    }
    for (n, rx, rz) in [(12, 25.0, 10.0), (8, 14.0, 4.0)] {
        for i in 0..n {
            let t = 2.0 * PI * i as f64 / n as f64;
            f.push(Vector3::new(-rx * t.cos(), -10.0, -40.0 + rz * t.sin()));
        }
    }
    debug_assert_eq!(f.len(), FACE_KEYPOINTS);
    f
}

/// Places a local-frame body at `(x, y)` with heading `yaw`.
fn place(local: &[Point3<f64>], x: f64, y: f64, yaw: f64) -> Vec<Point3<f64>> {
    let r = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
    let t = Vector3::new(x, y, 0.0);
    local.iter().map(|p| r * p + t).collect()
}

/// Restricts a 133-keypoint body to the joints of `skel`.
fn select(full: &[Point3<f64>], skel: &SkeletonDef) -> Result<Person> {
    match skel.joint_count() {
        133 => Ok(full.to_vec()),
        17 => Ok(full[..17].to_vec()),
        13 => Ok(COCO17_TO_BODY13.iter().map(|&c| full[c]).collect()),
        n => Err(Error::InvalidInput(format!("cannot synthesize a {n}-joint skeleton"))),
    }
}

/// Adds per-axis Gaussian noise of `sigma` mm, then pulls any joint that
/// drifted past [`MAX_LIMB`] from its parent back onto that sphere.
fn perturb(p: &mut Person, skel: &SkeletonDef, sigma: f64, rng: &mut ChaCha8Rng) {
    if sigma <= 0.0 {
        return;
    }
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    for q in p.iter_mut() {
        *q += Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng));
        // nothing sinks into the floor
        q.z = q.z.max(1.0);
    }
    for &(parent, child) in skel.limb_chains() {
        let d = p[child] - p[parent];
        if d.norm() > MAX_LIMB {
            p[child] = p[parent] + d * (MAX_LIMB / d.norm());
        }
    }
}

fn placement_area(room: &RoomBounds) -> Result<([f64; 2], [f64; 2])> {
    // arms reach about 750 mm from the body axis
    let m = 800.0;
    let lo = [room.min[0] + m, room.min[1] + m];
    let hi = [room.max[0] - m, room.max[1] - m];
    if lo[0] >= hi[0] || lo[1] >= hi[1] || room.extent()[2] < 2000.0 {
        return Err(Error::InvalidInput(
            "room too small for synthetic persons (needs > 1600 mm floor, 2000 mm height)".into(),
        ));
    }
    Ok((lo, hi))
}

/// `n` persons standing in `room`, centers at least [`MIN_SEPARATION`]
/// apart.
pub fn make_scene(n: usize, skel: &SkeletonDef, room: &RoomBounds, seed: u64, pose_noise: f64) -> Result<Vec<Person>> {
    scene_frame(n, skel, room, seed, 0, pose_noise)
}

fn scene_frame(n: usize, skel: &SkeletonDef, room: &RoomBounds, seed: u64, frame: u64, pose_noise: f64) -> Result<Vec<Person>> {
    if !(pose_noise >= 0.0 && pose_noise.is_finite()) {
        return Err(Error::InvalidInput(format!("pose noise must be >= 0, got {pose_noise}")));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let (lo, hi) = placement_area(room)?;
    let mut rng = rng(seed, STREAM_SCENE, frame);
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(n);
    let mut tries = 0;
    while centers.len() < n {
        tries += 1;
        if tries > 100_000 {
            return Err(Error::InvalidInput(format!("cannot place {n} persons in the room")));
        }
        let c = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
        if centers
            .iter()
            .all(|o| (o[0] - c[0]).hypot(o[1] - c[1]) >= MIN_SEPARATION)
        {
            centers.push(c);
        }
    }
    centers
        .iter()
        .map(|c| {
            let yaw = rng.random_range(0.0..2.0 * PI);
            let full = place(&wholebody_local(&mut rng), c[0], c[1], yaw);
            let mut p = select(&full, skel)?;
            perturb(&mut p, skel, pose_noise, &mut rng);
            Ok(p)
        })
        .collect()
}

/// Mirrored pair for the ghost rig: one person at `x < 0` and its reflection
/// across `x = 0`. Joint labels are not swapped, so every joint's rays from
/// `camA` and `camB` meet exactly on the mirror plane.
pub fn ghost_scene(skel: &SkeletonDef, seed: u64, frame: u64) -> Result<Vec<Person>> {
    let mut rng = rng(seed, STREAM_SCENE, frame);
    let x = rng.random_range(-1500.0..-600.0);
    let y = rng.random_range(-300.0..600.0);
    let yaw = rng.random_range(0.0..2.0 * PI);
    let full = place(&wholebody_local(&mut rng), x, y, yaw);
    let p1 = select(&full, skel)?;
    let p2 = p1.iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect();
    Ok(vec![p1, p2])
}

/// Projects every person into every camera. Pixel noise is Gaussian with
/// mean magnitude `jitter_px`; each joint is independently dropped with
/// `dropout`. Joints behind a camera or off its image are invisible and
/// persons without visible joints are omitted. Person ids count up from 1
/// across all views.
pub fn render_detections(
    persons: &[Person],
    rig: &[CameraCalib],
    jitter_px: f64,
    dropout: f64,
    seed: u64,
) -> Result<Vec<Vec<Detection2D>>> {
    render_detections_frame(persons, rig, jitter_px, dropout, seed, 0)
}

fn render_detections_frame(
    persons: &[Person],
    rig: &[CameraCalib],
    jitter_px: f64,
    dropout: f64,
    seed: u64,
    frame: u64,
) -> Result<Vec<Vec<Detection2D>>> {
    if !(jitter_px >= 0.0 && jitter_px.is_finite()) {
        return Err(Error::InvalidInput(format!("jitter must be >= 0, got {jitter_px}")));
    }
    if !(0.0..=1.0).contains(&dropout) {
        return Err(Error::InvalidInput(format!("dropout must be in [0, 1], got {dropout}")));
    }
    let mut rng = rng(seed, STREAM_DETECTIONS, frame);
    // mean of a 2D Gaussian's magnitude is σ·√(π/2)
    let axis = Normal::new(0.0, jitter_px / (PI / 2.0).sqrt()).expect("finite jitter");
    let mut next_id = 1u32;
    let mut views = Vec::with_capacity(rig.len());
    for cam in rig {
        let mut dets = Vec::new();
        for person in persons {
            let keypoints: Vec<Option<Keypoint2>> = person
                .iter()
                .map(|p| {
                    let mut px = cam.project(p)?;
                    if jitter_px > 0.0 {
                        px.u += axis.sample(&mut rng);
                        px.v += axis.sample(&mut rng);
                    }
                    if dropout > 0.0 && rng.random_bool(dropout) {
                        return None;
                    }
                    cam.contains(&px).then_some(Keypoint2 {
                        u: px.u,
                        v: px.v,
                        confidence: 1.0,
                    })
                })
                .collect();
            if keypoints.iter().any(Option::is_some) {
                dets.push(Detection2D {
                    person_id: next_id,
                    keypoints,
                });
                next_id += 1;
            }
        }
        views.push(dets);
    }
    Ok(views)
}

/// Depth point clouds, one per sensor in `depth_rig`. For every joint,
/// `points_per_joint` points are drawn: half in a ball around the joint and
/// half in the capsule around the segment to its parent (torso joints use
/// the torso edges). Only points a sensor sees are kept for it.
pub fn render_depth(
    persons: &[Person],
    skel: &SkeletonDef,
    depth_rig: &[CameraCalib],
    points_per_joint: usize,
    seed: u64,
) -> Vec<DepthFrame> {
    render_depth_frame(persons, skel, depth_rig, points_per_joint, seed, 0)
}

fn torso_partner(skel: &SkeletonDef, j: usize) -> Option<usize> {
    // walk the torso outline: left shoulder, right shoulder, right hip,
    // left hip
    let t = skel.torso_joints();
    let ring: Vec<usize> = match t {
        [ls, rs, lh, rh] => vec![*ls, *rs, *rh, *lh],
        _ => t.to_vec(),
    };
    let i = ring.iter().position(|&x| x == j)?;
    (ring.len() > 1).then(|| ring[(i + 1) % ring.len()])
}

fn render_depth_frame(
    persons: &[Person],
    skel: &SkeletonDef,
    depth_rig: &[CameraCalib],
    points_per_joint: usize,
    seed: u64,
    frame: u64,
) -> Vec<DepthFrame> {
    depth_rig
        .iter()
        .enumerate()
        .map(|(si, sensor)| {
            let mut rng = rng(seed, STREAM_DEPTH, (frame << 8) | si as u64);
            let mut points = Vec::new();
            for person in persons {
                for (j, p) in person.iter().enumerate() {
                    let parent = skel.parent_of(j);
                    let other = if parent != j {
                        Some(parent)
                    } else {
                        torso_partner(skel, j)
                    };
                    for k in 0..points_per_joint {
                        let on_axis = match other {
                            Some(o) if k % 2 == 1 => p + (person[o] - p) * rng.random_range(0.0..1.0),
                            _ => *p,
                        };
                        let ball: [f64; 3] = UnitBall.sample(&mut rng);
                        let q = on_axis + Vector3::from(ball) * CAPSULE_RADIUS;
                        if sensor.project(&q).is_some_and(|px| sensor.contains(&px)) {
                            points.push(q);
                        }
                    }
                }
            }
            DepthFrame {
                camera: sensor.id().to_string(),
                data: DepthData::Points(points),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub name: String,
    pub skeleton: String,
    pub scenario: Scenario,
    pub cameras: usize,
    pub rig: RigStyle,
    pub persons: usize,
    pub frames: usize,
    pub fps: f64,
    pub jitter_px: f64,
    pub dropout: f64,
    pub pose_noise: f64,
    /// 0 disables depth output.
    pub depth_points_per_joint: usize,
    pub room: RoomBounds,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            name: "synth".into(),
            skeleton: "body13".into(),
            scenario: Scenario::Random,
            cameras: 4,
            rig: RigStyle::Corners,
            persons: 1,
            frames: 10,
            fps: 25.0,
            jitter_px: 0.0,
            dropout: 0.0,
            pose_noise: 0.0,
            depth_points_per_joint: 0,
            room: default_room(),
            seed: 0,
        }
    }
}

/// Rig of a config, as [`generate`] builds it.
pub fn config_rig(cfg: &SynthConfig) -> Result<Vec<CameraCalib>> {
    match cfg.scenario {
        Scenario::Random => make_rig(cfg.cameras, &cfg.room, cfg.rig, cfg.seed),
        Scenario::Ghost => ghost_rig(),
    }
}

/// A complete dataset: rig, independent random scenes per frame, 2D
/// detections, labels and optionally per-frame depth point lists.
pub fn generate(cfg: &SynthConfig) -> Result<DatasetDoc> {
    if !(cfg.fps > 0.0) {
        return Err(Error::InvalidInput("fps must be > 0".into()));
    }
    let skel = SkeletonDef::by_name(&cfg.skeleton)?;
    let rig = config_rig(cfg)?;
    let mut room = cfg.room;
    if cfg.scenario == Scenario::Ghost {
        room = room.union(&RoomBounds::new([-2500.0, -2500.0, 0.0], [2500.0, 2500.0, 2000.0])?);
    }
    let mut doc = DatasetDoc::new(cfg.name.clone(), &skel, room, &rig);
    doc.extra.insert(
        "generator".into(),
        serde_json::json!({"prng": "chacha8", "seed": cfg.seed}),
    );
    for f in 0..cfg.frames {
        let fi = f as u64;
        let persons = match cfg.scenario {
            Scenario::Random => scene_frame(cfg.persons, &skel, &room, cfg.seed, fi, cfg.pose_noise)?,
            Scenario::Ghost => ghost_scene(&skel, cfg.seed, fi)?,
        };
        let dets = render_detections_frame(&persons, &rig, cfg.jitter_px, cfg.dropout, cfg.seed, fi)?;
        let depth = if cfg.depth_points_per_joint > 0 {
            render_depth_frame(&persons, &skel, &rig, cfg.depth_points_per_joint, cfg.seed, fi)
                .into_iter()
                .map(|d| match d.data {
                    DepthData::Points(p) => DepthRecord::from_points(d.camera, None, &p),
                    DepthData::Image { .. } => unreachable!("synthetic depth is point lists"),
                })
                .collect()
        } else {
            Vec::new()
        };
        doc.frames.push(FrameDoc {
            id: format!("{f:06}"),
            timestamp: f as f64 / cfg.fps,
            views: rig
                .iter()
                .zip(dets)
                .map(|(c, d)| ViewDoc {
                    camera: c.id().to_string(),
                    image: None,
                    detections: Some(d),
                    extra: Extra::new(),
                })
                .collect(),
            depth,
            labels: persons
                .iter()
                .map(|p| LabelDoc::new(&p.iter().map(|q| Some(*q)).collect::<Vec<_>>()))
                .collect(),
            extra: Extra::new(),
        });
    }
    Ok(doc)
}

/// Distance from `q` to segment `ab`.
pub fn segment_distance(q: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let ab = b - a;
    let t = if ab.norm_squared() > 0.0 {
        ((q - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (q - (a + ab * t)).norm()
}
