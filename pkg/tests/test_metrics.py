import numpy as np
import pytest

from flow4d.exceptions import ConfigInvalid, EmptyIntersection, ShapeMismatch
from flow4d.metrics import (
    MedianAligner,
    MetricConfig,
    MetricReport,
    apd3d,
    epe,
    evaluate_tracks,
    median_align,
)


def random_tracks(rng, frames=6, points=50, scale=1.0):
    gt = rng.normal(size=(frames, points, 3)) * 2.0 + [0, 0, 5.0]
    pred = gt + rng.normal(scale=0.2, size=gt.shape)
    return pred * scale, gt


class TestMedianAlign:
    def test_recovers_known_scale(self):
        rng = np.random.default_rng(0)
        pred, gt = random_tracks(rng)
        s = 0.25
        assert abs(median_align(pred * s, pred) - 1.0 / s) < 1e-12

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        pred, gt = random_tracks(rng, scale=3.7)
        s = median_align(pred, gt)
        again = median_align(pred * s, gt)
        assert abs(again - 1.0) < 1e-12

    def test_uses_only_mutually_valid(self):
        rng = np.random.default_rng(2)
        pred, gt = random_tracks(rng)
        pv = np.ones(pred.shape[:2], dtype=bool)
        gv = np.ones(pred.shape[:2], dtype=bool)
        spoiled = pred.copy()
        spoiled[0, :10] *= 100.0
        pv[0, :10] = False
        assert median_align(spoiled, gt, pv, gv) == median_align(
            pred, gt, pv, gv)

    def test_empty_intersection_raises(self):
        rng = np.random.default_rng(3)
        pred, gt = random_tracks(rng)
        none = np.zeros(pred.shape[:2], dtype=bool)
        with pytest.raises(EmptyIntersection):
            median_align(pred, gt, none, None)

    def test_aligner_estimator(self):
        rng = np.random.default_rng(4)
        pred, gt = random_tracks(rng)
        est = MedianAligner().fit(pred * 2.0, pred)
        assert abs(est.scale_ - 0.5) < 1e-12
        np.testing.assert_allclose(est.transform(pred * 2.0), pred, atol=1e-12)


class TestApd3d:
    def test_uniform_offset_thresholds(self):
        # every error exactly 0.2: strictly below 0.3/0.5/1.0, not 0.1
        rng = np.random.default_rng(5)
        gt = rng.normal(size=(4, 30, 3))
        pred = gt + np.array([0.2, 0.0, 0.0])
        per, mean = apd3d(pred, gt)
        assert per == {0.1: 0.0, 0.3: 100.0, 0.5: 100.0, 1.0: 100.0}
        assert mean == 75.0

    def test_threshold_boundary_is_strict(self):
        gt = np.zeros((1, 4, 3))
        pred = gt + np.array([0.1, 0.0, 0.0])  # error exactly at 0.1
        per, _ = apd3d(pred, gt, thresholds=(0.1,))
        assert per[0.1] == 0.0

    def test_brute_force_recount(self):
        rng = np.random.default_rng(6)
        pred, gt = random_tracks(rng, frames=5, points=40)
        pv = rng.random((5, 40)) > 0.2
        gv = rng.random((5, 40)) > 0.2
        thresholds = (0.1, 0.3, 0.5, 1.0)
        per, mean = apd3d(pred, gt, pv, gv, thresholds=thresholds)
        # naive loop recount
        for t in thresholds:
            hits = total = 0
            for f in range(5):
                for i in range(40):
                    if pv[f, i] and gv[f, i]:
                        total += 1
                        e = np.sqrt(((pred[f, i] - gt[f, i]) ** 2).sum())
                        if e < t:
                            hits += 1
            assert abs(per[t] - 100.0 * hits / total) < 1e-12
        assert abs(mean - np.mean(list(per.values()))) < 1e-12

    def test_frame_window_cuts_late_frames(self):
        rng = np.random.default_rng(7)
        pred, gt = random_tracks(rng, frames=70, points=10)
        pred[64:] += 1e6  # garbage outside the window must not matter
        a, _ = apd3d(pred, gt, max_frames=64)
        b, _ = apd3d(pred[:64], gt[:64], max_frames=64)
        assert a == b

    def test_subset_restricts_scoring(self):
        rng = np.random.default_rng(8)
        pred, gt = random_tracks(rng, frames=3, points=20)
        subset = np.zeros(20, dtype=bool)
        subset[:5] = True
        per_sub, _ = apd3d(pred, gt, subset=subset)
        per_manual, _ = apd3d(pred[:, :5], gt[:, :5])
        assert per_sub == per_manual

    def test_accepts_hw_layout(self):
        rng = np.random.default_rng(9)
        gt = rng.normal(size=(2, 4, 5, 3))
        pred = gt + 0.05
        per_hw, _ = apd3d(pred, gt)
        per_flat, _ = apd3d(pred.reshape(2, 20, 3), gt.reshape(2, 20, 3))
        assert per_hw == per_flat


class TestEpe:
    def test_matches_manual_mean(self):
        rng = np.random.default_rng(10)
        pred, gt = random_tracks(rng, frames=3, points=15)
        manual = np.linalg.norm((pred - gt).reshape(-1, 3), axis=1).mean()
        assert abs(epe(pred, gt) - manual) < 1e-12

    def test_shape_mismatch_raises(self):
        with pytest.raises(ShapeMismatch):
            epe(np.zeros((2, 5, 3)), np.zeros((2, 6, 3)))


class TestEvaluateTracks:
    def test_report_fields_and_alignment(self):
        rng = np.random.default_rng(11)
        pred, gt = random_tracks(rng, frames=6, points=30)
        report = evaluate_tracks(pred * 4.0, gt)
        direct = evaluate_tracks(pred, gt)
        assert abs(report.scale * 4.0 - direct.scale * 1.0) < 1e-9
        assert abs(report.epe - direct.epe) < 1e-9
        assert report.frames_evaluated == 6

    def test_dynamic_subset_section(self):
        rng = np.random.default_rng(12)
        pred, gt = random_tracks(rng, frames=3, points=20)
        subset = np.arange(20) < 8
        report = evaluate_tracks(pred, gt, dynamic_subset=subset, align=False)
        assert report.dynamic is not None
        manual = epe(pred, gt, subset=subset)
        assert abs(report.dynamic["epe"] - manual) < 1e-15

    def test_text_format_stable_order(self):
        rng = np.random.default_rng(13)
        pred, gt = random_tracks(rng, frames=2, points=10)
        text = evaluate_tracks(pred, gt).to_text()
        keys = [line.split()[0] for line in text.strip().split("\n")]
        assert keys == ["scale", "frames_evaluated", "samples", "epe",
                        "apd_0.1", "apd_0.3", "apd_0.5", "apd_1", "apd_mean"]

    def test_values_round_trip_from_text(self):
        rng = np.random.default_rng(14)
        pred, gt = random_tracks(rng, frames=2, points=10)
        report = evaluate_tracks(pred, gt)
        parsed = dict(line.split() for line in report.to_text().strip().split("\n"))
        assert float(parsed["epe"]) == report.epe
        assert float(parsed["apd_mean"]) == report.apd_mean


class TestMetricConfig:
    def test_rejects_empty_thresholds(self):
        with pytest.raises(ConfigInvalid):
            MetricConfig(thresholds=())

    def test_rejects_nonpositive_max_frames(self):
        with pytest.raises(ConfigInvalid):
            MetricConfig(max_frames=0)
