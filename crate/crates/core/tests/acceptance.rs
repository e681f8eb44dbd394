//! Acceptance suite. Runs every criterion, prints one line each and fails
//! the target if any criterion fails.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vkfusion::calib::{CameraCalib, Distortion, Pixel};
use vkfusion::config::FusionConfig;
use vkfusion::dataio::DatasetDoc;
use vkfusion::fusion::{find_peaks, project_heatmaps, sub_voxel_refine, GridGeometry, RoomBounds};
use vkfusion::heatmap2d::{render_heatmaps, Detection2D, Keypoint2, RasterShape};
use vkfusion::metrics::{f1, match_persons, mean_joint_error, MetricReport, MATCH_MAX_ERROR};
use vkfusion::persons::{fuse_frame, Pose3D};
use vkfusion::pipeline::{evaluate, fuse_dataset, RunOptions};
use vkfusion::skeleton::{JointGroup, SkeletonDef};
use vkfusion::synthgen::{generate, RigStyle, Scenario, SynthConfig};

const C1_MAX_MPJPE: f64 = 50.0;
const C1_MAX_SECONDS_PER_FRAME: f64 = 5.0;
const C3_TOLERANCE_MM: f64 = 2.0;
const C4_TOLERANCE_PTS: f64 = 2.0;
const C5_MAX_RECALL_DROP: f64 = 2.0;
const C6_TOLERANCE: f64 = 0.1;
const C10_MAX_ROUND_TRIP_PX: f64 = 1e-3;
const C10_MIN_REFINE_WINS: usize = 80;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run(doc: &DatasetDoc, config: FusionConfig) -> MetricReport {
    let preds = fuse_dataset(doc, Path::new("."), &RunOptions::new(config)).expect("fuse");
    evaluate(&preds, doc).expect("evaluate")
}

fn voxel(size: f64) -> FusionConfig {
    FusionConfig {
        voxel_size: size,
        ..Default::default()
    }
}

fn pose_invariants(p: &Pose3D, skel: &SkeletonDef, bounds: &RoomBounds, cfg: &FusionConfig) -> Result<(), String> {
    if p.joints.len() != skel.joint_count() {
        return Err(format!("{} joints", p.joints.len()));
    }
    if p.present_count() < cfg.min_joints {
        return Err(format!("only {} joints present", p.present_count()));
    }
    for (j, q) in p.positions().iter().enumerate() {
        let Some(q) = q else { continue };
        if !q.iter().all(|c| c.is_finite()) || !bounds.contains(q) {
            return Err(format!("joint {j} at {q:?} outside the room"));
        }
        let d = (q - p.center).norm();
        if d > cfg.center_outlier {
            return Err(format!("joint {j} {d:.0} mm from center"));
        }
        let parent = skel.parent_of(j);
        if parent != j && !skel.is_torso(j) {
            if let Some(pp) = p.position(parent) {
                let d = (q - pp).norm();
                if d > cfg.limb_max_dist {
                    return Err(format!("joint {j} {d:.0} mm from parent"));
                }
            }
        }
    }
    Ok(())
}

fn c1_oracle_reconstruction() -> Outcome {
    let doc = generate(&SynthConfig {
        cameras: 4,
        persons: 1,
        frames: 5,
        seed: 1,
        ..Default::default()
    })
    .unwrap();
    let t = Instant::now();
    let r = run(&doc, voxel(50.0));
    let spf = t.elapsed().as_secs_f64() / doc.frames.len() as f64;
    let mpjpe = r.mpjpe_mm.unwrap_or(f64::INFINITY);
    check(
        mpjpe <= C1_MAX_MPJPE && r.recall_100 == 100.0 && r.invalid_pct == 0.0 && spf < C1_MAX_SECONDS_PER_FRAME,
        format!(
            "MPJPE {mpjpe:.1} mm, Recall@100 {:.1}%, Invalid {:.1}%, {spf:.2} s/frame",
            r.recall_100, r.invalid_pct
        ),
    )
}

fn c2_multi_person() -> Outcome {
    let doc = generate(&SynthConfig {
        cameras: 5,
        rig: RigStyle::Ring,
        persons: 3,
        frames: 5,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let cfg = voxel(50.0);
    let preds = fuse_dataset(&doc, Path::new("."), &RunOptions::new(cfg.clone())).unwrap();
    let skel = doc.skeleton_def().unwrap();
    let mut counts = Vec::new();
    for f in &preds.frames {
        counts.push(f.persons.len());
        for p in &f.persons {
            pose_invariants(p, &skel, &doc.room, &cfg).map_err(|e| format!("frame {}: {e}", f.frame))?;
        }
    }
    let r = evaluate(&preds, &doc).unwrap();
    check(
        counts.iter().all(|&n| n == 3) && r.invalid_pct == 0.0,
        format!("persons per frame {counts:?}, Invalid {:.1}%, invariants hold", r.invalid_pct),
    )
}

fn c3_voxel_trend() -> Outcome {
    let doc = generate(&SynthConfig {
        persons: 2,
        frames: 20,
        jitter_px: 2.0,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    let m: Vec<f64> = [25.0, 50.0, 100.0]
        .iter()
        .map(|&s| run(&doc, voxel(s)).mpjpe_mm.unwrap_or(f64::INFINITY))
        .collect();
    check(
        m[0] <= m[1] + C3_TOLERANCE_MM && m[1] <= m[2] + C3_TOLERANCE_MM,
        format!("MPJPE 25/50/100 mm voxels: {:.1} / {:.1} / {:.1} mm", m[0], m[1], m[2]),
    )
}

fn c4_camera_trend() -> Outcome {
    let docs: Vec<DatasetDoc> = [3, 5, 10]
        .iter()
        .map(|&n| {
            generate(&SynthConfig {
                cameras: n,
                rig: RigStyle::Ring,
                persons: 3,
                frames: 10,
                jitter_px: 4.0,
                dropout: 0.4,
                seed: 4,
                ..Default::default()
            })
            .unwrap()
        })
        .collect();
    let same_scenes = docs
        .windows(2)
        .all(|w| w[0].frames.iter().zip(&w[1].frames).all(|(a, b)| a.labels == b.labels));
    if !same_scenes {
        return Err("scenes differ between rigs".into());
    }
    let r: Vec<f64> = docs.iter().map(|d| run(d, voxel(50.0)).recall_100).collect();
    check(
        r[0] <= r[1] + C4_TOLERANCE_PTS && r[1] <= r[2] + C4_TOLERANCE_PTS,
        format!("Recall@100 with 3/5/10 cameras: {:.1} / {:.1} / {:.1}%", r[0], r[1], r[2]),
    )
}

fn c5_depth_masking() -> Outcome {
    let doc = generate(&SynthConfig {
        scenario: Scenario::Ghost,
        frames: 20,
        depth_points_per_joint: 40,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let plain = run(&doc, FusionConfig::default());
    let masked = run(
        &doc,
        FusionConfig {
            use_depth: true,
            ..Default::default()
        },
    );
    check(
        masked.invalid_pct < plain.invalid_pct && masked.recall_500 >= plain.recall_500 - C5_MAX_RECALL_DROP,
        format!(
            "Invalid {:.1}% -> {:.1}%, Recall@500 {:.1}% -> {:.1}%",
            plain.invalid_pct, masked.invalid_pct, plain.recall_500, masked.recall_500
        ),
    )
}

fn c6_f1_rows() -> Outcome {
    let rows = [((0.0, 100.0), 100.0), ((1.0, 100.0), 99.5), ((16.6, 81.3), 82.4)];
    let got: Vec<f64> = rows.iter().map(|((i, r), _)| f1(*i, *r)).collect();
    check(
        rows.iter().zip(&got).all(|((_, want), g)| (g - want).abs() <= C6_TOLERANCE),
        format!("F1 {:.2} / {:.2} / {:.2}", got[0], got[1], got[2]),
    )
}

type Joints = Vec<Option<Point3<f64>>>;

/// All complete stable matchings under the ranking (error, prediction rank,
/// label index), found by enumerating every partial assignment.
fn brute_force_match(preds: &[Joints], scores: &[f64], gts: &[Joints]) -> Vec<Vec<(usize, usize)>> {
    let np = preds.len();
    let ng = gts.len();
    let mut order: Vec<usize> = (0..np).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut rank = vec![0; np];
    for (r, &p) in order.iter().enumerate() {
        rank[p] = r;
    }
    let err: Vec<Vec<Option<f64>>> = preds
        .iter()
        .map(|p| gts.iter().map(|g| mean_joint_error(p, g)).collect())
        .collect();
    let key = |p: usize, g: usize| (err[p][g].unwrap(), rank[p], g);
    let better = |a: (f64, usize, usize), b: (f64, usize, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)).is_lt();

    let mut results = Vec::new();
    let mut assign: Vec<Option<usize>> = vec![None; np];
    let total = (ng + 1).pow(np as u32);
    for code in 0..total {
        let mut c = code;
        let mut used = vec![false; ng];
        let mut valid = true;
        for a in assign.iter_mut() {
            let choice = c % (ng + 1);
            c /= ng + 1;
            *a = (choice < ng).then_some(choice);
            if let Some(g) = *a {
                if used[g] {
                    valid = false;
                }
                used[g] = true;
            }
        }
        let pairs_ok = assign
            .iter()
            .enumerate()
            .all(|(p, g)| g.is_none_or(|g| err[p][g].is_some()));
        if !valid || !pairs_ok {
            continue;
        }
        let mut holder = vec![None; ng];
        for (p, g) in assign.iter().enumerate() {
            if let Some(g) = g {
                holder[*g] = Some(p);
            }
        }
        let blocking = (0..np).any(|p| {
            (0..ng).any(|g| {
                err[p][g].is_some()
                    && assign[p] != Some(g)
                    && assign[p].is_none_or(|h| better(key(p, g), key(p, h)))
                    && holder[g].is_none_or(|q| better(key(p, g), key(q, g)))
            })
        });
        if !blocking {
            results.push(
                assign
                    .iter()
                    .enumerate()
                    .filter_map(|(p, g)| g.filter(|&g| err[p][g].unwrap() <= MATCH_MAX_ERROR).map(|g| (p, g)))
                    .collect(),
            );
        }
    }
    results
}

fn c7_matching_oracle() -> Outcome {
    fn random_person(rng: &mut ChaCha8Rng, base: [f64; 3]) -> Joints {
        (0..4)
            .map(|_| {
                rng.random_bool(0.8).then(|| {
                    Point3::new(
                        base[0] + rng.random_range(-400.0..400.0),
                        base[1] + rng.random_range(-400.0..400.0),
                        base[2] + rng.random_range(0.0..400.0),
                    )
                })
            })
            .collect()
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut disagreements = 0;
    let mut unmatched = 0;
    for _ in 0..1000 {
        let np = rng.random_range(0..=4);
        let ng = rng.random_range(0..=4);
        let gts: Vec<Joints> = (0..ng)
            .map(|_| {
                let base = [rng.random_range(-800.0..800.0), rng.random_range(-800.0..800.0), 0.0];
                random_person(&mut rng, base)
            })
            .collect();
        let preds: Vec<Joints> = (0..np)
            .map(|_| {
                let base = [rng.random_range(-800.0..800.0), rng.random_range(-800.0..800.0), 0.0];
                random_person(&mut rng, base)
            })
            .collect();
        let scores: Vec<f64> = (0..np).map(|_| rng.random_range(0..3) as f64).collect();
        let m = match_persons(&preds, &scores, &gts);
        let mut got: Vec<(usize, usize)> = m.pairs.iter().map(|x| (x.pred, x.gt)).collect();
        got.sort();
        let expect = brute_force_match(&preds, &scores, &gts);
        if expect.len() != 1 || expect[0] != got {
            disagreements += 1;
        }
        unmatched += m.invalid_predictions.len();
    }
    check(
        disagreements == 0,
        format!("{disagreements} of 1000 instances disagree ({unmatched} unmatched predictions in total)"),
    )
}

fn c8_wholebody() -> Outcome {
    let doc = generate(&SynthConfig {
        skeleton: "wholebody133".into(),
        persons: 2,
        frames: 3,
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let skel = doc.skeleton_def().unwrap();
    let preds = fuse_dataset(&doc, Path::new("."), &RunOptions::new(voxel(50.0))).unwrap();
    let r = evaluate(&preds, &doc).unwrap();
    let g = r.mpjpe_groups;
    let fine: Vec<usize> = (0..skel.joint_count())
        .filter(|&j| matches!(skel.group(j), JointGroup::Face | JointGroup::Hand))
        .collect();
    let mut cross = 0;
    let mut checked = 0;
    for (fp, frame) in preds.frames.iter().zip(&doc.frames) {
        let gts: Vec<Joints> = frame.labels.iter().map(|l| l.points()).collect();
        let pp: Vec<Joints> = fp.persons.iter().map(|p| p.positions()).collect();
        let scores: Vec<f64> = fp.persons.iter().map(|p| p.score).collect();
        for pair in match_persons(&pp, &scores, &gts).pairs {
            for &j in &fine {
                let Some(q) = pp[pair.pred][j] else { continue };
                checked += 1;
                let nearest = gts
                    .iter()
                    .enumerate()
                    .filter_map(|(k, gt)| Some((k, (q - gt[j]?).norm())))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|x| x.0);
                if nearest != Some(pair.gt) {
                    cross += 1;
                }
            }
        }
    }
    let reported = r.mpjpe_mm.is_some() && g.body.is_some() && g.face.is_some() && g.hands.is_some();
    let fmt = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.1}"));
    check(
        reported && cross == 0 && checked > 0 && r.invalid_pct == 0.0,
        format!(
            "MPJPE All|Body|Face|Hands {} | {} | {} | {} mm, {cross} of {checked} face/hand joints on the wrong person",
            fmt(r.mpjpe_mm),
            fmt(g.body),
            fmt(g.face),
            fmt(g.hands)
        ),
    )
}

fn c9_permutation_invariance() -> Outcome {
    let doc = generate(&SynthConfig {
        cameras: 5,
        rig: RigStyle::Ring,
        persons: 3,
        frames: 4,
        jitter_px: 2.0,
        dropout: 0.1,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let skel = doc.skeleton_def().unwrap();
    let calibs = doc.calibs().unwrap();
    let cfg = voxel(100.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut trials = 0;
    for frame in &doc.frames {
        let mut views: Vec<(Vec<Detection2D>, CameraCalib)> = frame
            .views
            .iter()
            .map(|v| (v.detections.clone().unwrap(), calibs[&v.camera].clone()))
            .collect();
        let fuse = |views: &[(Vec<Detection2D>, CameraCalib)]| {
            let dets: Vec<_> = views.iter().map(|v| v.0.clone()).collect();
            let cams: Vec<_> = views.iter().map(|v| v.1.clone()).collect();
            serde_json::to_string(&fuse_frame(&dets, &cams, &skel, &doc.room, &cfg, None).unwrap()).unwrap()
        };
        let reference = fuse(&views);
        for _ in 0..5 {
            views.shuffle(&mut rng);
            let mut fresh: Vec<u32> = (1..1000).collect();
            fresh.shuffle(&mut rng);
            let mut relabel: HashMap<u32, u32> = HashMap::new();
            for (dets, _) in &mut views {
                dets.shuffle(&mut rng);
                for d in dets.iter_mut() {
                    let next = fresh[relabel.len()];
                    d.person_id = *relabel.entry(d.person_id).or_insert(next);
                }
            }
            trials += 1;
            if fuse(&views) != reference {
                return Err(format!("frame {}: output changed after permutation {trials}", frame.id));
            }
        }
    }
    Ok(format!("{trials} random relabelings/reorderings, output byte-identical"))
}

fn random_camera(rng: &mut ChaCha8Rng, id: usize) -> CameraCalib {
    let axis = Unit::new_normalize(Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0f64),
    ));
    let rot = Rotation3::from_axis_angle(&axis, rng.random_range(0.0..std::f64::consts::PI));
    let fx = rng.random_range(300.0..2000.0);
    let fy = fx * rng.random_range(0.9..1.1);
    let w = (2.0 * fx * rng.random_range(0.3..0.6f64)).ceil();
    let h = (w * rng.random_range(0.5..1.0f64)).ceil();
    let k = Matrix3::new(
        fx,
        rng.random_range(-1.0..1.0),
        w / 2.0 + rng.random_range(-10.0..10.0),
        0.0,
        fy,
        h / 2.0 + rng.random_range(-10.0..10.0),
        0.0,
        0.0,
        1.0,
    );
    let dist = Distortion::from_array([
        rng.random_range(-0.2..0.2),
        rng.random_range(-0.05..0.05),
        rng.random_range(-1e-3..1e-3),
        rng.random_range(-1e-3..1e-3),
        rng.random_range(-0.01..0.01),
    ]);
    let t = Vector3::new(
        rng.random_range(-5000.0..5000.0),
        rng.random_range(-5000.0..5000.0),
        rng.random_range(-5000.0..5000.0),
    );
    CameraCalib::new(format!("r{id}"), k, *rot.matrix(), t, dist, (w as u32, h as u32)).unwrap()
}

fn c10_geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let cam = random_camera(&mut rng, i);
        let px = Pixel::new(
            rng.random_range(0.0..cam.width() as f64),
            rng.random_range(0.0..cam.height() as f64),
        );
        let depth = rng.random_range(200.0..20000.0);
        let world = cam.unproject_depth(px, depth).unwrap();
        let back = cam.project(&world).unwrap();
        worst = worst.max(back.distance(&px));
    }

    // single visible joint seen by four cameras, fused onto a 50 mm grid
    let skel = SkeletonDef::body13();
    let cfg = voxel(50.0);
    let bounds = RoomBounds::new([-1000.0, -1000.0, 0.0], [1000.0, 1000.0, 2000.0]).unwrap();
    let geo = GridGeometry::new(bounds, cfg.voxel_size).unwrap();
    let cams: Vec<CameraCalib> = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            CameraCalib::look_at(
                format!("c{i}"),
                Point3::new(3500.0 * x, 3500.0 * y, 2500.0),
                Point3::new(0.0, 0.0, 1000.0),
                Vector3::z(),
                (600.0, 600.0),
                (640.0, 480.0),
                (1280, 960),
            )
            .unwrap()
        })
        .collect();
    let mut wins = 0;
    let mut placements = 0;
    while placements < 100 {
        let p = Point3::new(
            rng.random_range(-600.0..600.0),
            rng.random_range(-600.0..600.0),
            rng.random_range(400.0..1600.0),
        );
        let stacks: Vec<_> = cams
            .iter()
            .map(|c| {
                let px = c.project(&p).unwrap();
                let mut keypoints = vec![None; skel.joint_count()];
                keypoints[0] = Some(Keypoint2 {
                    u: px.u,
                    v: px.v,
                    confidence: 1.0,
                });
                let det = Detection2D {
                    person_id: 1,
                    keypoints,
                };
                let shape = RasterShape::new(c.width(), c.height(), cfg.stride);
                render_heatmaps(&[det], &skel, shape, &cfg.heatmap())
            })
            .collect();
        let grid = project_heatmaps(&stacks, &cams, geo, false).unwrap();
        let Some(peak) = find_peaks(&grid, cfg.peak_threshold, 1).into_iter().find(|q| q.joint == 0) else {
            return Err(format!("no peak for point source at {p:?}"));
        };
        placements += 1;
        let refined = (sub_voxel_refine(&grid, 0, peak.voxel) - p).norm();
        let nearest = (geo.center_of(peak.voxel) - p).norm();
        if refined < nearest {
            wins += 1;
        }
    }
    check(
        worst < C10_MAX_ROUND_TRIP_PX && wins >= C10_MIN_REFINE_WINS,
        format!("round trip worst {worst:.2e} px over 1000 cameras, refinement better on {wins}/100 placements"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("oracle reconstruction", c1_oracle_reconstruction),
        ("multi-person", c2_multi_person),
        ("voxel-size trend", c3_voxel_trend),
        ("camera-count trend", c4_camera_trend),
        ("depth masking", c5_depth_masking),
        ("F1 rows", c6_f1_rows),
        ("matching oracle", c7_matching_oracle),
        ("whole-body", c8_wholebody),
        ("permutation invariance", c9_permutation_invariance),
        ("geometry", c10_geometry),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {n:>2} {name:<24} PASS  {d}  [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} {name:<24} FAIL  {d}  [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
