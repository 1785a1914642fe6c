"""One test per acceptance criterion; each records a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` and read the "acceptance
criteria" section at the end of the report.
"""

import numpy as np
import pytest

from adaptext.cli import run_grad_check
from adaptext.detection import Detection, GroundTruth, evaluate, match_detections, polygon_nms
from adaptext.geometry import convex_iou, polygon_area, polygon_iou, raster_iou
from adaptext.loss import Lambdas, Prediction, Target, multitask_loss, smooth_l1
from adaptext.nnet import anchor_grid, decoder_forward
from adaptext.representation import AdaptiveTextRegion, ProposalBox, denormalize_targets, normalize_targets, reduce_ctw1500
from adaptext.synth import make_ribbon
from adaptext.train import TrainConfig, point_error_on, split_dataset, train

from conftest import criterion, random_convex, random_ribbon14, rectangle14, tight_arc14


def box(x0, y0, x1, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)


def test_c1_smooth_l1_exact():
    with criterion("1", "smooth L1 exact values and derivative continuity"):
        xs = [0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0]
        want = [0.0, 0.125, 0.125, 0.5, 0.5, 1.5, 1.5]
        assert [smooth_l1(x) for x in xs] == want
        h = 1e-7
        for x0 in (-1.0, 1.0):
            left = (smooth_l1(x0) - smooth_l1(x0 - h)) / h
            right = (smooth_l1(x0 + h) - smooth_l1(x0)) / h
            assert abs(left - right) < 1e-6


def test_c2_loss_identity():
    with criterion("2", "multi-task loss identity and t = 0 gating", budget=1.0):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            k = int(rng.integers(2, 8))
            t = int(rng.integers(0, 2))
            p1 = rng.uniform()
            pred = Prediction((1 - p1, p1), rng.normal(size=4), rng.normal(size=4 * k), rng.normal(size=(k + 1, 2)))
            gt = Target(t, rng.normal(size=4), rng.normal(size=4 * k), [0] * k + [1])
            lam = Lambdas(*rng.uniform(0, 3, 3))
            out = multitask_loss(pred, gt, lam)
            assert out.total == out.cls + out.t * (lam.bbox * out.bbox + lam.points * out.points + lam.stop * out.stop)
            if t == 0:
                assert out.bbox == out.points == out.stop == 0.0
                assert out.total == out.cls


def test_c3_target_round_trip():
    with criterion("3", "normalize/denormalize round trip and scale invariance", budget=1.0):
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(1000):
            k = int(rng.integers(2, 8))
            region = AdaptiveTextRegion(rng.uniform(0, 1000, (k, 2)), rng.uniform(0, 1000, (k, 2)))
            prop = ProposalBox(*rng.uniform(0, 1000, 2), *rng.uniform(1, 500, 2))
            back = denormalize_targets(normalize_targets(region, prop), prop)
            worst = max(worst, float(np.max(np.abs(back.pairs - region.pairs))))
        assert worst <= 1e-12
        for _ in range(100):
            k = int(rng.integers(2, 8))
            region = AdaptiveTextRegion(rng.uniform(0, 1000, (k, 2)), rng.uniform(0, 1000, (k, 2)))
            prop = ProposalBox(*rng.uniform(0, 1000, 2), *rng.uniform(1, 500, 2))
            s = 2.0 ** int(rng.integers(-4, 5))
            scaled = AdaptiveTextRegion(region.tops * s, region.bottoms * s)
            sprop = ProposalBox(prop.x * s, prop.y * s, prop.w * s, prop.h * s)
            assert np.array_equal(normalize_targets(region, prop), normalize_targets(scaled, sprop))


def test_c4_gradient_check():
    with criterion("4", "decoder gradient check, 5 seeds", budget=30.0) as c:
        errs = [run_grad_check(seed, hidden_dim=32, steps=5, epsilon=1e-5).max_rel_error for seed in range(5)]
        c.detail = f"max rel error {max(errs):.2e}"
        assert max(errs) <= 1e-4


def test_c5_reduction_invariants():
    with criterion("5", "CTW1500 reduction invariants", budget=5.0):
        rng = np.random.default_rng(5)
        for _ in range(500):
            pts = random_ribbon14(rng)
            original = polygon_area(pts)
            trace = []
            region = reduce_ctw1500(pts, trace=trace)
            kept = list(range(7))
            for idx, ratio, removed in trace:
                if removed:
                    kept.remove(idx)
                    left = kept + [13 - j for j in reversed(kept)]
                    assert polygon_area(pts[left]) >= 0.93 * original
            assert region.num_pairs == len(kept)
            assert region.area() >= 0.93 * original
        trace = []
        assert reduce_ctw1500(rectangle14(), trace=trace).num_pairs == 2
        assert all(abs(r - 1.0) < 1e-12 for _, r, _ in trace)
        assert reduce_ctw1500(tight_arc14()).num_pairs == 7


def test_c6_iou_oracle():
    with criterion("6", "polygon IoU vs raster oracle", budget=10.0) as c:
        a, b = box(0, 0, 1, 1), box(0.5, 0, 1.5, 1)
        for p, q, want in ((a, a, 1.0), (a, box(3, 3, 4, 4), 0.0), (a, b, 1 / 3)):
            assert abs(convex_iou(p, q) - want) <= 1e-6
            assert abs(raster_iou(p, q, 512) - want) <= 0.01
        rng = np.random.default_rng(6)
        worst = 0.0
        for _ in range(100):
            p = random_convex(rng, center=(0, 0))
            q = random_convex(rng, center=rng.uniform(-1, 1, 2))
            worst = max(worst, abs(polygon_iou(p, q) - raster_iou(p, q, 512)))
        c.detail = f"worst gap {worst:.4f}"
        assert worst <= 0.01


def test_c7_nms_properties():
    with criterion("7", "polygon NMS invariants and chain fixture", budget=5.0):
        kept = polygon_nms([Detection(box(0, 0, 1, 1), 0.9), Detection(box(0, 0, 2, 1), 0.8),
                            Detection(box(1, 0, 2, 1), 0.7)], 0.3)
        assert [d.score for d in kept] == [0.9, 0.7]
        rng = np.random.default_rng(7)
        thr = 0.3
        for _ in range(200):
            dets = [Detection(random_convex(rng, center=rng.uniform(0, 6, 2)), float(rng.uniform()))
                    for _ in range(int(rng.integers(1, 9)))]
            kept = polygon_nms(dets, thr)
            assert [id(d) for d in polygon_nms(kept, thr)] == [id(d) for d in kept]
            for i in range(len(kept)):
                for j in range(i + 1, len(kept)):
                    assert polygon_iou(kept[i].polygon, kept[j].polygon) <= thr


def test_c8_evaluator_fixtures():
    with criterion("8", "evaluator hand-counted fixtures"):
        r = evaluate([[Detection(box(0, 0, 1, 1), 0.9)]], [[GroundTruth(box(0, 0, 1, 1)), GroundTruth(box(5, 5, 6, 6))]])
        assert (r.recall, r.precision, r.hmean) == (0.5, 1.0, 2 / 3)
        gts, dets = [], []
        for n_gt, n_hit, n_fp in ((4, 3, 1), (3, 2, 1), (3, 1, 0)):
            g = [GroundTruth(box(3 * i, 0, 3 * i + 1, 1)) for i in range(n_gt)]
            d = [Detection(g[i].polygon, 0.9) for i in range(n_hit)]
            d += [Detection(box(3 * i, 50, 3 * i + 1, 51), 0.5) for i in range(n_fp)]
            gts.append(g)
            dets.append(d)
        r = evaluate(dets, gts)
        assert (r.recall, r.precision) == (0.6, 0.75)
        assert abs(r.hmean - 2 / 3) < 1e-15
        m = match_detections([Detection(box(0, 0, 2, 1), 0.9)], [GroundTruth(box(0, 0, 1, 1))], 0.5)
        assert m.num_matched == 0


def test_c9_anchor_arithmetic():
    with criterion("9", "anchor count, areas and ratios"):
        sizes, ratios = (32, 64, 128, 256, 512), (0.5, 1.0, 2.0)
        anchors = anchor_grid(sizes, ratios, 16, 10, 10)
        assert len(anchors) == 1500
        combos = [(s, r) for s in sizes for r in ratios] * 100
        for a, (s, r) in zip(anchors, combos):
            assert abs(a.w * a.h - s * s) <= 1e-9 * s * s
            assert abs(a.h / a.w - r) <= 1e-12


# -- criterion 10: toy decoder -----------------------------------------------


@pytest.fixture(scope="module")
def toy_runs(tmp_path_factory):
    import time

    cfg = TrainConfig(seed=42)
    root = tmp_path_factory.mktemp("toy")
    t0 = time.perf_counter()
    first = train(cfg, root / "a")
    elapsed = time.perf_counter() - t0
    second = train(cfg, root / "b")
    fixed = train(TrainConfig(seed=42, fixed_pairs=7), write=False)
    return {"cfg": cfg, "root": root, "first": first, "second": second, "fixed": fixed, "elapsed": elapsed}


def test_c10_toy_decoder(toy_runs):
    with criterion("10", "toy decoder: error < 0.05, stop accuracy > 90%, bit-identical rerun") as c:
        cfg, first = toy_runs["cfg"], toy_runs["first"]
        final = first.final
        c.detail = (f"point error {final['point_error']:.4f}, stop accuracy {final['stop_accuracy']:.3f}, "
                    f"train {toy_runs['elapsed']:.0f} s")
        assert cfg.dataset_size == 200 and cfg.epochs <= 50
        assert toy_runs["elapsed"] < 300
        assert final["point_error"] < 0.05
        assert final["stop_accuracy"] > 0.9
        root = toy_runs["root"]
        for name in ("metrics.csv", "checkpoint.json"):
            assert (root / "a" / name).read_bytes() == (root / "b" / name).read_bytes()
        losses = [h["loss"] for h in first.history[1:6]]
        assert all(b < a for a, b in zip(losses, losses[1:]))


def _rectangle_ribbon():
    # straight 2-pair ribbon, axis aligned: fills its proposal exactly
    return make_ribbon(np.random.default_rng(2024), 2, max_rotation_deg=0.0)


def test_rectangle_ribbon_stops_after_two_pairs(toy_runs):
    cfg, params = toy_runs["cfg"], toy_runs["first"].params
    assert decoder_forward(params, _rectangle_ribbon().feature, cfg.max_steps).stop_step == 2
    _, test_set = split_dataset(cfg)
    for r in test_set:
        if r.num_pairs == 2:
            assert decoder_forward(params, r.feature, cfg.max_steps).stop_step == 2


@pytest.mark.xfail(strict=True, reason="worst coordinate is about 0.065 on the axis-aligned rectangle")
def test_rectangle_ribbon_coords_within_tolerance(toy_runs):
    r = _rectangle_ribbon()
    out = decoder_forward(toy_runs["first"].params, r.feature, toy_runs["cfg"].max_steps)
    assert np.max(np.abs(out.coords() - r.targets().ravel())) < 0.05


@pytest.mark.xfail(strict=True, reason="fixed-7 variant scores lower point error on 2-pair ribbons in this toy setup")
def test_c10_fixed_vs_adaptive_direction(toy_runs):
    with criterion("10b", "fixed-7 variant strictly worse than adaptive on 2-pair ribbons") as c:
        cfg = toy_runs["cfg"]
        _, test_set = split_dataset(cfg)
        two = [r for r in test_set if r.num_pairs == 2]
        adaptive = point_error_on(toy_runs["first"].params, two, cfg.max_steps)
        fixed = point_error_on(toy_runs["fixed"].params, two, cfg.max_steps, fixed_pairs=7)
        c.detail = f"{len(two)} ribbons, adaptive {adaptive:.4f}, fixed {fixed:.4f}"
        assert fixed > adaptive
