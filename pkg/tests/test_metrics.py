import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from courttrack.metrics import (
    DEFAULT_ALPHAS,
    MetricsError,
    SimilarityParams,
    bbox_iou,
    evaluate_mot_iou,
    evaluate_track_id,
    id_sim,
    loc_sim,
    pdj,
    pdj_auc,
    solve_assignment,
    torso_length,
)
from courttrack.trackdata import (
    Detection,
    IdentityAttributes,
    PoseFrame,
    SequenceData,
)

OFF = "offense"
DEF = "defense"


def attrs(team=OFF, pos="top"):
    return IdentityAttributes(team=team, initial_position=pos)


def det(frame, tid, court, a=None, bbox=None):
    return Detection(
        frame_id=frame,
        tracklet_id=tid,
        bbox=bbox if bbox is not None else (0.0, 0.0, 10.0, 20.0),
        court_xy=court,
        attrs=a,
    )


def seq(dets, mode="indoor", **kw):
    return SequenceData(mode=mode, detections=tuple(dets), **kw)


class TestSimilarities:
    def test_loc_sim_values(self):
        assert loc_sim((2.0, 3.0), (2.0, 3.0)) == 1.0
        # Exactly the tolerance distance gives exactly 0.05.
        assert loc_sim((2.0, 3.0), (2.0, 4.0)) == 0.05
        assert loc_sim((0.0, 0.0), (0.0, 2.0)) == pytest.approx(0.05**4)
        assert loc_sim((0.0, 0.0), (0.0, 0.5)) == pytest.approx(0.05**0.25)

    def test_loc_sim_tau_scaling(self):
        assert loc_sim((0.0, 0.0), (0.0, 3.0), tau=3.0) == 0.05
        assert loc_sim((0.0, 0.0), (3.0, 4.0), tau=5.0) == 0.05

    def test_id_sim(self):
        assert id_sim(attrs(OFF, "top"), attrs(OFF, "top")) == 1
        assert id_sim(attrs(OFF, "top"), attrs(DEF, "top")) == 0
        assert id_sim(attrs(OFF, "top"), attrs(OFF, "left")) == 0
        o1 = IdentityAttributes(team=OFF, jersey_number=5)
        o2 = IdentityAttributes(team=OFF, jersey_number=5)
        o3 = IdentityAttributes(team=OFF, jersey_number=6)
        assert id_sim(o1, o2) == 1
        assert id_sim(o1, o3) == 0

    def test_id_sim_mode_mismatch(self):
        with pytest.raises(MetricsError):
            id_sim(attrs(), IdentityAttributes(team=OFF, jersey_number=5))

    def test_bbox_iou(self):
        a = (0.0, 0.0, 10.0, 10.0)
        assert bbox_iou(a, a) == 1.0
        assert bbox_iou(a, (20.0, 0.0, 10.0, 10.0)) == 0.0
        # Half-width shift: inter 50, union 150.
        assert bbox_iou(a, (5.0, 0.0, 10.0, 10.0)) == pytest.approx(1 / 3)

    def test_default_alphas(self):
        assert len(DEFAULT_ALPHAS) == 19
        assert DEFAULT_ALPHAS[0] == 0.05
        assert DEFAULT_ALPHAS[-1] == 0.95

    def test_params_validation(self):
        with pytest.raises(MetricsError):
            SimilarityParams(tau=0.0)
        with pytest.raises(MetricsError):
            SimilarityParams(alphas=(0.5, 0.3))
        with pytest.raises(MetricsError):
            SimilarityParams(alphas=(0.0, 0.5))


def _brute_force(m):
    """Exhaustive reference for solve_assignment (small matrices only)."""
    m = np.asarray(m, dtype=float)
    n_rows, n_cols = m.shape
    cols = list(range(n_cols)) + [None] * n_rows  # None = leave row unmatched
    best = None
    for combo in itertools.permutations(cols, n_rows):
        if len([c for c in combo if c is not None]) != len(
            {c for c in combo if c is not None}
        ):
            continue
        pairs = [
            (r, c) for r, c in enumerate(combo) if c is not None and m[r, c] > 0
        ]
        count = len(pairs)
        total = 0.0
        for r, c in pairs:
            total += m[r, c]
        key = tuple(c if (r, c) in pairs else n_cols for r, c in enumerate(combo))
        cand = (-count, -total, key)
        if best is None or cand < best:
            best = cand
            best_pairs = pairs
    return best_pairs


class TestSolveAssignment:
    def test_empty(self):
        assert solve_assignment(np.zeros((0, 3))) == []
        assert solve_assignment(np.zeros((3, 0))) == []

    def test_zero_matrix_unmatched(self):
        assert solve_assignment(np.zeros((3, 3))) == []

    def test_simple_diagonal(self):
        m = np.diag([1.0, 2.0, 3.0])
        assert solve_assignment(m) == [(0, 0), (1, 1), (2, 2)]

    def test_prefers_count_over_total(self):
        # Taking the single 10 blocks the two 1s; two matches win.
        m = np.array([[10.0, 1.0], [10.0, 0.0]])
        assert solve_assignment(m) == [(0, 1), (1, 0)]

    def test_tie_break_lexicographic(self):
        m = np.array([[1.0, 1.0], [1.0, 1.0]])
        assert solve_assignment(m) == [(0, 0), (1, 1)]

    def test_rectangular(self):
        m = np.array([[0.0, 5.0, 0.0]])
        assert solve_assignment(m) == [(0, 1)]

    def test_rejects_negative(self):
        with pytest.raises(MetricsError):
            solve_assignment(np.array([[-1.0]]))

    def test_rejects_too_wide(self):
        with pytest.raises(MetricsError):
            solve_assignment(np.zeros((1, 17)))

    def test_matches_brute_force_random(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            rows = int(rng.integers(1, 6))
            cols = int(rng.integers(1, 6))
            m = rng.uniform(0, 1, size=(rows, cols))
            m[rng.random(m.shape) < 0.35] = 0.0
            got = solve_assignment(m)
            expect = _brute_force(m)
            assert len(got) == len(expect)
            assert sum(m[r, c] for r, c in got) == sum(
                m[r, c] for r, c in expect
            )
            assert got == expect


def six_on_court():
    """Six well-separated players with distinct attributes."""
    spots = {
        1: ((3.0, 2.0), attrs(OFF, "left")),
        2: ((3.0, 6.0), attrs(DEF, "left")),
        3: ((7.5, 2.0), attrs(OFF, "top")),
        4: ((7.5, 6.0), attrs(DEF, "top")),
        5: ((12.0, 2.0), attrs(OFF, "right")),
        6: ((12.0, 6.0), attrs(DEF, "right")),
    }
    return spots


def make_gt(n_frames=20):
    spots = six_on_court()
    dets = [
        det(f, tid, pt, a) for f in range(n_frames) for tid, (pt, a) in spots.items()
    ]
    return seq(dets, total_frames=n_frames)


class TestEvaluateTrackId:
    def test_perfect(self):
        gt = make_gt()
        r = evaluate_track_id(gt, gt)
        assert r.hota == pytest.approx(100.0)
        assert r.deta == pytest.approx(100.0)
        assert r.assa == pytest.approx(100.0)
        assert r.task == "track-id"

    def test_fragmentation_halves_association(self):
        # Single 100-frame track split at frame 50.
        gt_dets = [det(f, 1, (5.0, 5.0), attrs()) for f in range(100)]
        pr_dets = [
            det(f, 1 if f < 50 else 7, (5.0, 5.0), attrs()) for f in range(100)
        ]
        r = evaluate_track_id(seq(pr_dets), seq(gt_dets))
        assert r.deta == pytest.approx(100.0)
        assert r.assa == pytest.approx(50.0)
        assert r.hota == pytest.approx(100.0 * math.sqrt(0.5))

    def test_attribute_flip_costs_detection(self):
        # One of six players carries wrong attributes on every frame:
        # per frame 5 TP, 1 FP, 1 FN.
        gt = make_gt()
        flipped = IdentityAttributes(team=DEF, initial_position="left")
        pr = seq(
            [
                d if d.tracklet_id != 1 else Detection(
                    frame_id=d.frame_id,
                    tracklet_id=d.tracklet_id,
                    bbox=d.bbox,
                    court_xy=d.court_xy,
                    attrs=flipped,
                )
                for d in gt.detections
            ],
            total_frames=gt.total_frames,
        )
        r = evaluate_track_id(pr, gt)
        assert r.deta == pytest.approx(100.0 * 5 / 7)
        assert r.assa == pytest.approx(100.0)
        assert r.hota == pytest.approx(100.0 * math.sqrt(5 / 7))

    def test_displaced_by_tau_matches_lowest_alpha_only(self):
        gt_dets = [det(f, 1, (5.0, 5.0), attrs()) for f in range(10)]
        pr_dets = [det(f, 1, (5.0, 6.0), attrs()) for f in range(10)]
        r = evaluate_track_id(seq(pr_dets), seq(gt_dets))
        assert r.deta == pytest.approx(100.0 / 19)
        assert r.hota == pytest.approx(100.0 / 19)
        matched = [s for s in r.per_alpha if s.tp > 0]
        assert [s.alpha for s in matched] == [0.05]

    def test_missing_attributes_never_match(self):
        gt_dets = [det(f, 1, (5.0, 5.0), attrs()) for f in range(5)]
        pr_dets = [det(f, 1, (5.0, 5.0), None) for f in range(5)]
        r = evaluate_track_id(seq(pr_dets), seq(gt_dets))
        assert r.hota == 0.0

    def test_missing_court_xy_rejected(self):
        gt_dets = [det(0, 1, (5.0, 5.0), attrs())]
        pr_dets = [det(0, 1, None, attrs())]
        with pytest.raises(MetricsError, match="court"):
            evaluate_track_id(seq(pr_dets), seq(gt_dets))

    def test_empty_both_sides_is_perfect(self):
        gt = seq([], frame_range=(0, 9))
        r = evaluate_track_id(gt, gt)
        assert r.hota == pytest.approx(100.0)

    def test_frame_range_mismatch_warns(self):
        gt = seq([det(f, 1, (5.0, 5.0), attrs()) for f in range(10)])
        pr = seq([det(f, 1, (5.0, 5.0), attrs()) for f in range(5)])
        with pytest.warns(UserWarning, match="frame ranges differ"):
            evaluate_track_id(pr, gt)

    def test_assa_per_pair_variant(self):
        # Split track: instance-weighted and pair-averaged association
        # agree at 0.5 here, but differ once pair sizes are unequal.
        gt_dets = [det(f, 1, (5.0, 5.0), attrs()) for f in range(100)]
        pr_dets = [
            det(f, 1 if f < 80 else 7, (5.0, 5.0), attrs()) for f in range(100)
        ]
        default = evaluate_track_id(seq(pr_dets), seq(gt_dets))
        per_pair = evaluate_track_id(
            seq(pr_dets), seq(gt_dets), assa_per_pair=True
        )
        # instance-weighted: (80*0.8 + 20*0.2)/100 = 0.68
        assert default.assa == pytest.approx(68.0)
        # pair-averaged: (0.8 + 0.2)/2 = 0.5
        assert per_pair.assa == pytest.approx(50.0)

    def test_association_counts_consistent(self):
        gt_dets = [det(f, 1, (5.0, 5.0), attrs()) for f in range(100)]
        pr_dets = [
            det(f, 1 if f < 50 else 7, (5.0, 5.0), attrs()) for f in range(100)
        ]
        r = evaluate_track_id(seq(pr_dets), seq(gt_dets))
        s = r.per_alpha[0]
        # Two pairs, each TPA=50*50=2500 weighted, FNA=50*50.
        assert s.tpa == 5000
        assert s.fna == 5000
        assert s.fpa == 0


class TestEvaluateMot:
    def test_identical(self):
        dets = [
            det(f, tid, None, None, bbox=(10.0 * tid, 0.0, 8.0, 8.0))
            for f in range(10)
            for tid in (1, 2)
        ]
        s = seq(dets, mode="drone")
        r = evaluate_mot_iou(s, s)
        assert r.hota == pytest.approx(100.0)
        assert r.id_switches == 0

    def test_single_id_switch(self):
        gt_dets = [
            det(f, 1, None, None, bbox=(0.0, 0.0, 8.0, 8.0)) for f in range(10)
        ]
        pr_dets = [
            det(f, 1 if f < 5 else 2, None, None, bbox=(0.0, 0.0, 8.0, 8.0))
            for f in range(10)
        ]
        r = evaluate_mot_iou(seq(pr_dets, mode="drone"), seq(gt_dets, mode="drone"))
        assert r.id_switches == 1
        assert r.deta == pytest.approx(100.0)
        assert r.assa == pytest.approx(50.0)

    def test_iou_threshold_sweep(self):
        # IoU exactly 0.6: matched for the 12 alphas 0.05..0.60 inclusive.
        gt_dets = [det(0, 1, None, None, bbox=(0.0, 0.0, 10.0, 10.0))]
        pr_dets = [det(0, 1, None, None, bbox=(2.5, 0.0, 10.0, 10.0))]
        assert bbox_iou(gt_dets[0].bbox, pr_dets[0].bbox) == 0.6
        r = evaluate_mot_iou(seq(pr_dets, mode="drone"), seq(gt_dets, mode="drone"))
        matched = [s.alpha for s in r.per_alpha if s.tp == 1]
        assert len(matched) == 12
        assert max(matched) == 0.60
        assert r.deta == pytest.approx(100.0 * 12 / 19)


def make_pose(frame=0, player=1, scale=1.0, displace=None):
    """Pose with torso length 2*scale; ``displace`` maps kp index -> (dx, dy)."""
    base = [
        (0.0, -3.0),  # head
        (-1.0, 0.0),  # l_shoulder
        (1.0, 0.0),  # r_shoulder
        (-2.0, 1.0),
        (2.0, 1.0),
        (-2.5, 2.0),
        (2.5, 2.0),
        (0.0, 2.0),  # center: torso = 2
        (-0.5, 6.0),
        (0.5, 6.0),
    ]
    pts = []
    for i, (x, y) in enumerate(base):
        dx, dy = (displace or {}).get(i, (0.0, 0.0))
        pts.append(((x + dx) * scale, (y + dy) * scale))
    return PoseFrame(frame_id=frame, player_id=player, points=tuple(pts))


class TestPdj:
    def test_torso_length(self):
        assert torso_length(make_pose()) == 2.0
        assert torso_length(make_pose(scale=10.0)) == 20.0

    def test_torso_requires_visible_keypoints(self):
        p = PoseFrame(
            frame_id=0,
            player_id=1,
            points=make_pose().points,
            visible=(True,) * 7 + (False, True, True),
        )
        with pytest.raises(MetricsError, match="center"):
            torso_length(p)

    def test_perfect(self):
        gt = [make_pose(f) for f in range(5)]
        r = pdj(gt, gt)
        assert r.mean_pdj == 100.0
        assert all(v == 100.0 for v in r.per_keypoint.values())
        assert r.unpaired == 0

    def test_threshold_is_strict(self):
        # Displacement of exactly 0.5 * torso (= 1.0) is NOT detected.
        gt = [make_pose()]
        pred = [make_pose(displace={0: (1.0, 0.0)})]
        r = pdj(pred, gt)
        assert r.per_keypoint["head"] == 0.0
        pred_in = [make_pose(displace={0: (0.999, 0.0)})]
        assert pdj(pred_in, gt).per_keypoint["head"] == 100.0

    def test_invisible_excluded_from_denominator(self):
        gt_pose = PoseFrame(
            frame_id=0,
            player_id=1,
            points=make_pose().points,
            visible=(False,) + (True,) * 9,
        )
        pred = [make_pose(displace={0: (99.0, 0.0)})]
        r = pdj(pred, [gt_pose])
        assert "head" not in r.per_keypoint
        assert r.mean_pdj == 100.0

    def test_unpaired_reported(self):
        gt = [make_pose(0), make_pose(1)]
        pred = [make_pose(0)]
        r = pdj(pred, gt)
        assert r.unpaired == 1

    def test_corruption_fraction_exact(self):
        # 3 of 10 samples of each keypoint pushed far away: PDJ 70 exactly.
        gt = [make_pose(f) for f in range(10)]
        pred = [
            make_pose(f, displace={i: (5.0, 5.0) for i in range(10)})
            if f < 3
            else make_pose(f)
            for f in range(10)
        ]
        r = pdj(pred, gt)
        assert r.mean_pdj == 70.0

    def test_scale_invariance(self):
        gt = [make_pose(f) for f in range(4)]
        pred = [make_pose(f, displace={2: (0.7, 0.0), 5: (3.0, 0.0)}) for f in range(4)]
        gt10 = [make_pose(f, scale=10.0) for f in range(4)]
        pred10 = [
            make_pose(f, scale=10.0, displace={2: (0.7, 0.0), 5: (3.0, 0.0)})
            for f in range(4)
        ]
        assert pdj(pred, gt).mean_pdj == pdj(pred10, gt10).mean_pdj
        assert pdj_auc(pred, gt) == pytest.approx(pdj_auc(pred10, gt10), abs=1e-12)

    def test_auc_perfect_is_half(self):
        gt = [make_pose(f) for f in range(3)]
        assert pdj_auc(gt, gt) == pytest.approx(0.5, abs=1e-9)

    def test_auc_below_pdj_ceiling(self):
        gt = [make_pose(f) for f in range(3)]
        pred = [make_pose(f, displace={0: (0.6, 0.0)}) for f in range(3)]
        auc = pdj_auc(pred, gt)
        # head detected only for thresholds > 0.3: loses area.
        assert 0.4 < auc < 0.5


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_solve_assignment_property(seed):
    rng = np.random.default_rng(seed)
    rows = int(rng.integers(1, 5))
    cols = int(rng.integers(1, 5))
    m = rng.uniform(0, 1, size=(rows, cols))
    m[rng.random(m.shape) < 0.4] = 0.0
    got = solve_assignment(m)
    # One-to-one, positive scores only.
    assert len({r for r, _ in got}) == len(got)
    assert len({c for _, c in got}) == len(got)
    assert all(m[r, c] > 0 for r, c in got)
    assert got == _brute_force(m)
