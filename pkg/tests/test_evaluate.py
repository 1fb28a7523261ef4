import math

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from textlines.evaluate import (
    EvalReport,
    GroundTruthEntry,
    ImageMatches,
    angle_difference,
    load_ground_truth,
    match_axis_aligned,
    match_rotated,
    report,
    save_ground_truth,
)
from textlines.filtering import Detection
from textlines.geometry import OrientedRect, axis_aligned_iou, rotated_iou


def _det(cx, cy, length, thickness, angle, score=1.0):
    return Detection(OrientedRect((cx, cy), (length, thickness), angle), score)


def _gt(cx, cy, length, thickness, angle, difficult=False):
    return GroundTruthEntry(OrientedRect((cx, cy), (length, thickness), angle), difficult)


# ---------------------------------------------------------------------------
# matching


def test_exact_detection_matches():
    m = match_rotated([_det(10, 10, 30, 8, 0.3)], [_gt(10, 10, 30, 8, 0.3)])
    assert m.pairs == ((0, 0),)
    r = report([m])
    assert r.precision == r.recall == r.f_measure == 1.0


def test_angle_gate_blocks_rotated_detection():
    # a square turned 45 degrees still overlaps well, the angle gate rejects it
    det = _det(10, 10, 20, 20, math.pi / 4)
    gt = _gt(10, 10, 20, 20, 0.0)
    assert rotated_iou(det.box, gt.box) > 0.5
    assert match_rotated([det], [gt]).pairs == ()


def test_axis_protocol_ignores_angle():
    det = _det(10, 10, 20, 20, math.pi / 4)
    gt = _gt(10, 10, 20, 20, 0.0)
    # the rotated square's hull is larger than the gt box, overlap 1/2 exactly
    assert match_axis_aligned([det], [gt], min_iou=0.45).pairs == ((0, 0),)


def test_axis_iou_boundary_is_strict():
    det = _det(5, 5, 10, 10, 0.0)
    gt = _gt(5, 2.5, 10, 5, 0.0)
    assert axis_aligned_iou(det.box, gt.box) == 0.5
    assert match_axis_aligned([det], [gt]).pairs == ()
    assert match_axis_aligned([det], [gt], min_iou=0.49).pairs == ((0, 0),)


def test_higher_score_takes_the_gt():
    a = _det(10, 10, 30, 8, 0.0, score=1.0)
    b = _det(10.5, 10, 30, 8, 0.0, score=2.0)
    m = match_rotated([a, b], [_gt(10, 10, 30, 8, 0.0)])
    assert m.pairs == ((1, 0),)


def test_each_gt_matched_once():
    dets = [_det(10, 10, 30, 8, 0.0, score=2.0), _det(10, 10, 30, 8, 0.0, score=1.0)]
    gts = [_gt(10, 10, 30, 8, 0.0), _gt(200, 10, 30, 8, 0.0)]
    m = match_rotated(dets, gts)
    assert m.pairs == ((0, 0),)


def test_detection_prefers_highest_overlap_gt():
    det = _det(12, 10, 30, 8, 0.0)
    gts = [_gt(16, 10, 30, 8, 0.0), _gt(12.5, 10, 30, 8, 0.0)]
    m = match_rotated(det and [det], gts)
    assert m.pairs == ((0, 1),)


def test_wrapped_angle_difference():
    assert angle_difference(math.pi / 2 - 0.01, -math.pi / 2 + 0.01) < 0.021
    assert abs(angle_difference(0.3, 0.3)) == 0.0


def test_difficult_gt_counts_for_precision_not_recall():
    det = _det(10, 10, 30, 8, 0.0)
    m = match_rotated([det], [_gt(10, 10, 30, 8, 0.0, difficult=True)])
    assert m.pairs == ((0, 0),)
    r = report([m])
    assert r.precision == 1.0
    assert r.recall == 0.0
    assert r.f_measure == 0.0


def _random_scene(rng):
    dets = [
        _det(
            float(rng.uniform(0, 60)),
            float(rng.uniform(0, 60)),
            float(rng.uniform(10, 40)),
            float(rng.uniform(4, 10)),
            float(rng.uniform(-1.5, 1.5)),
            score=float(np.round(rng.uniform(0, 5), 1)),
        )
        for _ in range(int(rng.integers(0, 7)))
    ]
    gts = [
        _gt(
            float(rng.uniform(0, 60)),
            float(rng.uniform(0, 60)),
            float(rng.uniform(10, 40)),
            float(rng.uniform(4, 10)),
            float(rng.uniform(-1.5, 1.5)),
            difficult=bool(rng.uniform() < 0.2),
        )
        for _ in range(int(rng.integers(0, 7)))
    ]
    return dets, gts


def _qualify_matrix(dets, gts, protocol):
    q = np.zeros((len(dets), len(gts)), dtype=bool)
    for i, d in enumerate(dets):
        for j, g in enumerate(gts):
            if protocol == "rotated":
                q[i, j] = rotated_iou(d.box, g.box) > 0.5 and angle_difference(
                    d.box.angle, g.box.angle
                ) < math.pi / 8
            else:
                q[i, j] = axis_aligned_iou(d.box, g.box) > 0.5
    return q


def _optimal_count(q):
    if q.size == 0:
        return 0
    rows, cols = linear_sum_assignment(-q.astype(float))
    return int(q[rows, cols].sum())


def test_greedy_never_beats_optimal_and_logs_gaps():
    rng = np.random.default_rng(17)
    gaps = 0
    for _ in range(20):
        dets, gts = _random_scene(rng)
        for protocol, match in (
            ("rotated", match_rotated),
            ("axis", match_axis_aligned),
        ):
            m = match(dets, gts)
            q = _qualify_matrix(dets, gts, protocol)
            for i, j in m.pairs:
                assert q[i, j]
            optimal = _optimal_count(q)
            assert len(m.pairs) <= optimal
            if len(m.pairs) < optimal:
                gaps += 1
                print(f"greedy {len(m.pairs)} < optimal {optimal} ({protocol})")
    print(f"greedy/optimal gaps over 40 runs: {gaps}")


def test_axis_match_equals_brute_force_greedy():
    rng = np.random.default_rng(23)
    for _ in range(20):
        dets, gts = _random_scene(rng)
        q = _qualify_matrix(dets, gts, "axis")
        iou = np.array(
            [[axis_aligned_iou(d.box, g.box) for g in gts] for d in dets]
        ).reshape(len(dets), len(gts))
        taken, pairs = set(), []
        for i in sorted(range(len(dets)), key=lambda i: (-dets[i].score, i)):
            cand = [(iou[i, j], -j) for j in range(len(gts)) if q[i, j] and j not in taken]
            if cand:
                j = -max(cand)[1]
                taken.add(j)
                pairs.append((i, j))
        assert match_axis_aligned(dets, gts).pairs == tuple(sorted(pairs))


# ---------------------------------------------------------------------------
# report arithmetic


def _counts(pairs, det_count, gt_count, difficult=None):
    difficult = tuple(difficult) if difficult else (False,) * gt_count
    return ImageMatches(tuple(pairs), det_count, gt_count, difficult)


def test_report_simple_ratio():
    r = report([_counts([(0, 0), (1, 1), (2, 2)], 3, 4)])
    assert r.precision == 1.0
    assert r.recall == 0.75
    assert abs(r.f_measure - 6 / 7) < 1e-12


def test_report_empty_everything():
    r = report([_counts([], 0, 0)])
    assert (r.precision, r.recall, r.f_measure) == (0.0, 0.0, 0.0)


def test_report_benchmark_style_rounding():
    pairs = [(i, i) for i in range(83)]
    r = report([_counts(pairs, 100, 124)])
    assert round(r.precision, 2) == 0.83
    assert round(r.recall, 2) == 0.67
    assert round(r.f_measure, 2) == 0.74


def test_report_harmonic_identity():
    rng = np.random.default_rng(3)
    for _ in range(100):
        gt = int(rng.integers(1, 20))
        det = int(rng.integers(1, 20))
        matched = int(rng.integers(0, min(gt, det) + 1))
        r = report([_counts([(i, i) for i in range(matched)], det, gt)])
        if r.precision + r.recall > 0:
            want = 2 * r.precision * r.recall / (r.precision + r.recall)
            assert abs(r.f_measure - want) < 1e-12
        else:
            assert r.f_measure == 0.0


def test_report_aggregates_across_images():
    a = _counts([(0, 0)], 2, 1)
    b = _counts([(0, 0)], 1, 3)
    r = report([a, b])
    assert r.precision == 2 / 3
    assert r.recall == 0.5


def test_removing_unmatched_det_never_hurts_precision():
    rng = np.random.default_rng(31)
    for _ in range(20):
        dets, gts = _random_scene(rng)
        m = match_rotated(dets, gts)
        matched = {i for i, _ in m.pairs}
        unmatched = [i for i in range(len(dets)) if i not in matched]
        if not unmatched:
            continue
        slim = [d for i, d in enumerate(dets) if i != unmatched[0]]
        before = report([m]).precision
        after = report([match_rotated(slim, gts)]).precision
        assert after >= before - 1e-12


def test_duplicate_matched_det_never_lifts_recall():
    rng = np.random.default_rng(37)
    for _ in range(20):
        dets, gts = _random_scene(rng)
        m = match_rotated(dets, gts)
        if not m.pairs:
            continue
        i = m.pairs[0][0]
        before = report([m]).recall
        after = report([match_rotated(dets + [dets[i]], gts)]).recall
        assert after <= before + 1e-12


def test_matches_validation():
    with pytest.raises(ValueError):
        _counts([(0, 0), (1, 0)], 2, 1)
    with pytest.raises(ValueError):
        _counts([(0, 0)], 0, 1)
    with pytest.raises(ValueError):
        ImageMatches((), 1, 2, (False,))


# ---------------------------------------------------------------------------
# ground-truth files


def test_gt_round_trip(tmp_path):
    entries = [
        _gt(10.25, 20.5, 30.0, 8.0, 0.37),
        _gt(50.0, 60.0, 40.0, 10.0, -0.9, difficult=True),
    ]
    path = tmp_path / "0001.txt"
    save_ground_truth(entries, path)
    assert load_ground_truth(path) == entries


def test_gt_five_fields_defaults_easy(tmp_path):
    path = tmp_path / "a.txt"
    path.write_text("1 2 30 8 0.5\n\n")
    (entry,) = load_ground_truth(path)
    assert entry.difficult is False
    assert entry.box.center == (1.0, 2.0)


def test_gt_malformed_line_names_lineno(tmp_path):
    path = tmp_path / "a.txt"
    path.write_text("1 2 30 8 0.5 0\n1 2 30\n")
    with pytest.raises(ValueError, match="line 2"):
        load_ground_truth(path)
    path.write_text("1 2 xx 8 0.5 0\n")
    with pytest.raises(ValueError, match="line 1"):
        load_ground_truth(path)
