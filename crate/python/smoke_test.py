"""Smoke test for the vkfusion extension module.

Build and install first:  maturin develop -m crates/python/Cargo.toml
"""

import json
import math
import sys
import tempfile
from pathlib import Path

import vkfusion as vk


def check(cond, what):
    if not cond:
        sys.exit(f"FAIL: {what}")
    print(f"ok   {what}")


def main():
    skel = vk.Skeleton("body13")
    check(len(skel) == 13 and skel.joint_names[0] == "nose", "skeleton body13")

    cam = vk.Camera.look_at("c0", (0, -4000, 2000), (0, 0, 1000), (1280, 960))
    px = cam.project((100.0, 50.0, 900.0))
    back = cam.unproject_depth(px, 4000.0)
    check(cam.project(back) is not None and math.dist(cam.project(back), px) < 1e-6, "camera round trip")

    ds = vk.synth(persons=2, frames=3, seed=3, jitter=1.0)
    check(len(ds) == 3 and ds.skeleton.name == "body13", "synthetic dataset")

    cfg = vk.FusionConfig(voxel_size=100.0)
    check(cfg.voxel_size == 100.0 and cfg.replace(min_joints=4).min_joints == 4, "config")
    try:
        vk.FusionConfig(voxel_sise=1.0)
        check(False, "unknown config key rejected")
    except ValueError:
        check(True, "unknown config key rejected")

    preds = ds.fuse(cfg)
    report = vk.evaluate(preds, ds)
    check(report["invalid_pct"] == 0.0 and report["recall@500"] == 100.0, f"fuse + evaluate ({report['mpjpe_mm']:.1f} mm)")
    check(abs(report["f1"] - vk.f1(report["invalid_pct"], report["recall@500"])) < 1e-12, "f1 consistency")

    # single frame through the low-level call, with shuffled ids
    doc = json.loads(ds.to_json())
    frame = doc["frames"][0]
    cams = {c.id: c for c in ds.cameras}
    dets = [[(1000 + d["person"], [tuple(k) if k else None for k in d["keypoints"]]) for d in v["detections"]] for v in frame["views"]]
    room = doc["room"]
    poses = vk.fuse_frame(dets, [cams[v["camera"]] for v in frame["views"]], skel, (tuple(room["min"]), tuple(room["max"])), cfg)
    check([p.joints for p in poses] == [p.joints for p in preds.frames[frame["id"]]], "fuse_frame matches dataset fusion")

    pairs, unmatched, invalid = vk.match_persons([p.positions for p in poses], ds.labels(frame["id"]))
    check(len(pairs) == 2 and not unmatched and not invalid, "match_persons")

    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "p.json"
        preds.write(str(p))
        again = vk.Predictions.read(str(p))
        check(again.to_json() == preds.to_json(), "predictions file round trip")
    print("all good")


if __name__ == "__main__":
    main()
