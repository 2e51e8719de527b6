"""Acceptance gate: every headline behavior at its stated tolerance.

Each test covers one criterion and reports a single pass/fail line in
the terminal summary (see conftest.criterion).
"""

import time

import numpy as np
from conftest import criterion
from helpers import fd_gradient, max_rel_error

from flow4d import container
from flow4d.cli import main as cli_main
from flow4d.core import PropertyMaps
from flow4d.exceptions import CorruptContainer
from flow4d.geometry import project, solve_focal
from flow4d.losses import (
    LossConfig,
    loss_flow,
    loss_motion2d,
    loss_point,
    loss_pose,
    loss_viewpoint_flow,
    total_loss,
)
from flow4d.metrics import apd3d, epe, median_align
from flow4d.pose import decompose_flow, solve_pose_weighted
from flow4d.sequence import SequencePrediction, build_tracks
from flow4d.synthetic import make_scene, perturb


def pose_errors(solved, truth):
    rot = np.linalg.norm(solved.rotation - truth.rotation)
    tra = np.linalg.norm(solved.translation - truth.translation)
    return rot, tra


def test_static_scene_round_trip():
    with criterion("static-round-trip"):
        for seed in range(20):
            scene = make_scene(seed=seed, height=64, width=64)
            maps = scene.pair(1)
            start = time.perf_counter()
            dec = decompose_flow(maps)
            elapsed = time.perf_counter() - start
            rot, tra = pose_errors(dec.transform, scene.transforms[1])
            assert rot < 1e-9, f"seed {seed}: rotation error {rot}"
            assert tra < 1e-9, f"seed {seed}: translation error {tra}"
            assert np.abs(dec.flow_object).max() < 1e-9, f"seed {seed}"
            assert elapsed < 1.0, f"seed {seed}: {elapsed:.3f}s"


def test_dynamic_scene_decomposition():
    with criterion("dynamic-decomposition"):
        for seed in range(20):
            dyn = make_scene(seed=seed, height=64, width=64,
                             dynamic_fraction=0.3, displacement_scale=10.0)
            # same seed with zero motion: identical rng stream, so depth,
            # blob, and camera poses match; only the displacement differs
            still = make_scene(seed=seed, height=64, width=64,
                               dynamic_fraction=0.3, displacement_scale=0.0)
            np.testing.assert_array_equal(
                still.transforms[1].rotation, dyn.transforms[1].rotation)

            dec_dyn = decompose_flow(dyn.pair(1))
            dec_still = decompose_flow(still.pair(1))
            truth = dyn.transforms[1]
            rot_dyn, tra_dyn = pose_errors(dec_dyn.transform, truth)
            rot_still, tra_still = pose_errors(dec_still.transform, truth)
            assert rot_dyn < 1e-9 and tra_dyn < 1e-9, f"seed {seed}"
            assert abs(rot_dyn - rot_still) < 1e-12, f"seed {seed}"
            assert abs(tra_dyn - tra_still) < 1e-12, f"seed {seed}"

            gap = np.abs(dec_dyn.flow_object - dyn.object_flow(1)).max()
            assert gap < 1e-9, f"seed {seed}: object flow off by {gap}"


def test_focal_length_recovery():
    with criterion("focal-recovery"):
        worst_noisy = 0.0
        for seed in range(100):
            scene = make_scene(seed=seed, height=64, width=64)
            pixels = scene.grid.coords()
            f = solve_focal(scene.points, pixels, scene.grid, mask=scene.valid)
            rel = abs(f - scene.camera.f) / scene.camera.f
            assert rel < 1e-9, f"seed {seed}: noise-free rel error {rel}"

            rng = np.random.default_rng(10_000 + seed)
            noisy = pixels + rng.normal(0.0, 0.5, pixels.shape)
            f_n = solve_focal(scene.points, noisy, scene.grid, mask=scene.valid)
            rel_n = abs(f_n - scene.camera.f) / scene.camera.f
            worst_noisy = max(worst_noisy, rel_n)
        assert worst_noisy < 0.01, f"noisy rel error {worst_noisy}"


def test_loss_gradients_match_finite_differences():
    with criterion("loss-gradients"):
        config = LossConfig()
        assert config.alpha == 0.2
        assert (config.weight_point, config.weight_flow, config.weight_motion2d,
                config.weight_pose, config.weight_viewpoint) == (1.0, 0.5, 0.3, 0.5, 0.5)

        scene = make_scene(seed=40, height=8, width=8,
                           dynamic_fraction=0.3, displacement_scale=1.0)
        target = scene.pair(1)
        pred = perturb(target, sigma_points=0.05, sigma_confidence=0.2, seed=41)
        mask = target.valid
        step = 1e-5

        def check(grad_map, fn, arr, tol=1e-4, fd_step=step):
            idx, fd = fd_gradient(fn, arr.copy(), step=fd_step)
            analytic = np.array([grad_map[ix] for ix in idx])
            rel = max_rel_error(analytic, fd, floor=1e-8)
            assert rel < tol, f"gradient mismatch {rel}"

        _, g = loss_point(pred.points, target.points, pred.confidence, mask)
        check(g["points"],
              lambda a: loss_point(a, target.points, pred.confidence, mask)[0],
              pred.points)
        check(g["confidence"],
              lambda a: loss_point(pred.points, target.points, a, mask)[0],
              pred.confidence)

        _, g = loss_flow(pred.points_moved, target.points_moved,
                         pred.confidence, mask)
        check(g["points_moved"],
              lambda a: loss_flow(a, target.points_moved, pred.confidence, mask)[0],
              pred.points_moved)

        px = project(target.points_moved, scene.camera)
        mask2d = mask & px.valid
        _, g = loss_motion2d(pred.points, pred.points_moved, px.pixels,
                             scene.camera, mask2d)
        check(g["points_moved"],
              lambda a: loss_motion2d(pred.points, a, px.pixels,
                                      scene.camera, mask2d)[0],
              pred.points_moved)

        viewpoint = scene.transforms[1].apply(target.points)
        _, g = loss_viewpoint_flow(pred.points_moved, viewpoint, pred.confidence,
                                   mask, pose_weight=target.pose_weight)
        check(g["points_moved"],
              lambda a: loss_viewpoint_flow(a, viewpoint, pred.confidence, mask,
                                            pose_weight=target.pose_weight)[0],
              pred.points_moved)
        check(g["confidence"],
              lambda a: loss_viewpoint_flow(pred.points_moved, viewpoint, a, mask,
                                            pose_weight=target.pose_weight)[0],
              pred.confidence)

        rng = np.random.default_rng(42)
        w = rng.uniform(0.5, 1.5, size=(8, 8))
        w /= w.sum()
        _, g = loss_pose(pred.points, pred.points_moved, w, target.points,
                         scene.transforms[1], mask, valid=target.valid)
        check(g["pose_weight"],
              lambda a: loss_pose(pred.points, pred.points_moved, a,
                                  target.points, scene.transforms[1], mask,
                                  valid=target.valid)[0],
              w)

        # gradient-stopped tensors come back exactly zero
        only_pose = LossConfig(weight_point=0.0, weight_flow=0.0,
                               weight_motion2d=0.0, weight_viewpoint=0.0)
        report = total_loss(pred, target, scene.transforms[1],
                            camera=scene.camera, config=only_pose)
        assert np.all(report.grads["points"] == 0.0)
        assert np.all(report.grads["points_moved"] == 0.0)
        assert np.all(report.grads["confidence"] == 0.0)
        no_pose = LossConfig(weight_pose=0.0)
        report = total_loss(pred, target, scene.transforms[1],
                            camera=scene.camera, config=no_pose)
        assert np.all(report.grads["pose_weight"] == 0.0)


def test_pose_weight_gradient_descent():
    with criterion("pose-weight-descent"):
        scene = make_scene(seed=50, height=8, width=8,
                           dynamic_fraction=0.3, displacement_scale=2.0)
        target = scene.pair(1)
        truth = scene.transforms[1]
        n = target.pose_weight.size

        # moving weight mass from a dynamic to a static pixel lowers the
        # pose loss, strictly
        uniform = np.full((8, 8), 1.0 / n)
        dyn_idx = tuple(np.argwhere(scene.dynamic_mask)[0])
        sta_idx = tuple(np.argwhere(~scene.dynamic_mask)[0])
        base, _ = loss_pose(target.points, target.points_moved, uniform,
                            target.points, truth, target.valid,
                            valid=target.valid)
        for shift in (1e-4, 1e-3, 5e-3):
            shifted = uniform.copy()
            shifted[dyn_idx] -= shift
            shifted[sta_idx] += shift
            moved, _ = loss_pose(target.points, target.points_moved, shifted,
                                 target.points, truth, target.valid,
                                 valid=target.valid)
            assert moved < base, f"shift {shift}: {moved} !< {base}"

        # 2000 plain gradient steps on softmax logits reach the true pose
        logits = np.zeros(n)
        lr = 300.0
        start = time.perf_counter()
        for _ in range(2000):
            ez = np.exp(logits - logits.max())
            w = (ez / ez.sum()).reshape(8, 8)
            _, g = loss_pose(target.points, target.points_moved, w,
                             target.points, truth, target.valid,
                             valid=target.valid)
            gw = g["pose_weight"].reshape(-1)
            wf = w.reshape(-1)
            logits -= lr * wf * (gw - float(wf @ gw))
        elapsed = time.perf_counter() - start

        ez = np.exp(logits - logits.max())
        w = (ez / ez.sum()).reshape(8, 8)
        solved, _ = solve_pose_weighted(target.points, target.points_moved, w)
        rot_err = np.linalg.norm(solved.rotation - truth.rotation)
        assert rot_err < 1e-3, f"rotation error {rot_err} after descent"
        assert elapsed < 30.0, f"descent took {elapsed:.1f}s"


def test_tracking_metrics():
    with criterion("tracking-metrics"):
        rng = np.random.default_rng(60)
        gt = rng.normal(size=(6, 80, 3)) * 2.0 + [0, 0, 5.0]
        pred = gt + rng.normal(scale=0.15, size=gt.shape)
        pv = rng.random((6, 80)) > 0.15
        gv = rng.random((6, 80)) > 0.15

        per, mean = apd3d(pred, gt, pv, gv)
        err = epe(pred, gt, pv, gv)
        hits = {t: 0 for t in per}
        total = 0
        acc = 0.0
        for f in range(6):
            for i in range(80):
                if pv[f, i] and gv[f, i]:
                    total += 1
                    e = float(np.sqrt(((pred[f, i] - gt[f, i]) ** 2).sum()))
                    acc += e
                    for t in hits:
                        if e < t:
                            hits[t] += 1
        for t in per:
            assert abs(per[t] - 100.0 * hits[t] / total) < 1e-12
        assert abs(err - acc / total) < 1e-12

        offset = gt + np.array([0.2, 0.0, 0.0])
        per, mean = apd3d(offset, gt)
        assert per == {0.1: 0.0, 0.3: 100.0, 0.5: 100.0, 1.0: 100.0}
        assert mean == 75.0

        scale = median_align(pred * 3.1, gt)
        again = median_align(pred * 3.1 * scale, gt)
        assert abs(again - 1.0) < 1e-12

        long_pred = np.tile(pred[:1], (70, 1, 1)).copy()
        long_gt = np.tile(gt[:1], (70, 1, 1))
        long_pred[64:] += 1e9
        windowed, _ = apd3d(long_pred, long_gt, max_frames=64)
        clean, _ = apd3d(long_pred[:64], long_gt[:64], max_frames=64)
        assert windowed == clean


def test_sequence_tracks():
    with criterion("sequence-tracks"):
        scene = make_scene(seed=70, n_frames=8, height=32, width=32)
        prediction = SequencePrediction(tuple(scene.pairs()))
        tracks = build_tracks(prediction)
        assert tracks.frame_ok.all()
        for k in range(1, 8):
            drift = np.abs(tracks.positions[k] - tracks.positions[0]).max()
            assert drift < 1e-9, f"frame {k}: drift {drift}"
            gt_gap = np.abs(tracks.positions[k] - scene.track_points(k)).max()
            assert gt_gap < 1e-9, f"frame {k}: GT gap {gt_gap}"

        # one pair predicted at triple scale must come back exactly
        clean = build_tracks(prediction)
        pairs = list(scene.pairs())
        bad = pairs[3]
        pairs[3] = PropertyMaps(
            points=bad.points * 3.0, points_moved=bad.points_moved * 3.0,
            pose_weight=bad.pose_weight, confidence=bad.confidence,
            valid=bad.valid)
        fixed = build_tracks(SequencePrediction(tuple(pairs)))
        assert abs(fixed.factors[4] - 1.0 / 3.0) < 1e-12
        gap = np.abs(fixed.positions[4] - clean.positions[4]).max()
        assert gap < 1e-12, f"restored positions off by {gap}"


def test_binary_container(tmp_path):
    with criterion("binary-container"):
        rng = np.random.default_rng(80)
        tensors = {
            "a": rng.normal(size=(17, 9, 3)).astype(np.float32),
            "b": rng.normal(size=(4,)).astype(np.float32),
            "c/1": rng.normal(size=(3, 4)).astype(np.float32),
        }
        data = container.pack(tensors, {"kind": "test"})
        box = container.unpack(data)
        for name, arr in tensors.items():
            assert box.tensors[name].tobytes() == arr.tobytes(), name

        detected = 0
        for seed in range(100):
            r = np.random.default_rng(seed)
            pos = int(r.integers(0, len(data)))
            bit = int(r.integers(0, 8))
            bad = bytearray(data)
            bad[pos] ^= 1 << bit
            try:
                container.unpack(bytes(bad))
            except CorruptContainer:
                detected += 1
        assert detected == 100, f"only {detected}/100 corruptions detected"

        # CLI pipeline is byte-deterministic
        a, b = tmp_path / "a.f4r", tmp_path / "b.f4r"
        args = ["synth", "--seed", "7", "--hw", "16", "16", "--frames", "3",
                "--dynamic-fraction", "0.2", "--displacement", "0.5"]
        assert cli_main(args + ["--out", str(a)]) == 0
        assert cli_main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        da, db = tmp_path / "da.f4r", tmp_path / "db.f4r"
        assert cli_main(["decompose", "--in", str(a), "--out", str(da)]) == 0
        assert cli_main(["decompose", "--in", str(a), "--out", str(db)]) == 0
        assert da.read_bytes() == db.read_bytes()
