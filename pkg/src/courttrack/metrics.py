"""Tracking and pose evaluation metrics.

Implements the court-localized tracking-with-identification metric
(TI-HOTA with TI-DetA / TI-AssA sub-scores), the IoU-based HOTA family
with ID-switch counting for plain MOT evaluation, and PDJ / PDJ-AUC for
2D pose, plus the bipartite assignment solver underpinning all per-frame
matching.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .trackdata import (
    KEYPOINT_NAMES,
    Detection,
    IdentityAttributes,
    PoseFrame,
    SequenceData,
)

__all__ = [
    "MetricReport",
    "MetricsError",
    "PdjReport",
    "SimilarityParams",
    "bbox_iou",
    "evaluate_mot_iou",
    "evaluate_track_id",
    "id_sim",
    "loc_sim",
    "pdj",
    "pdj_auc",
    "solve_assignment",
    "torso_length",
]

DEFAULT_ALPHAS = tuple(i / 20 for i in range(1, 20))  # 0.05 .. 0.95


class MetricsError(ValueError):
    """Raised for invalid metric inputs."""


@dataclass(frozen=True)
class SimilarityParams:
    """Distance tolerance and the similarity threshold sweep."""

    tau: float = 1.0
    alphas: tuple[float, ...] = DEFAULT_ALPHAS

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise MetricsError("tau must be positive")
        a = tuple(self.alphas)
        if not a or any(not 0 < x < 1 for x in a) or list(a) != sorted(set(a)):
            raise MetricsError("alphas must be strictly increasing in (0, 1)")
        object.__setattr__(self, "alphas", a)


@dataclass(frozen=True)
class AlphaStats:
    """Per-threshold match counts and sub-scores (fractions in [0, 1])."""

    alpha: float
    tp: int
    fp: int
    fn: int
    tpa: int
    fpa: int
    fna: int
    deta: float
    assa: float
    hota: float


@dataclass(frozen=True)
class MetricReport:
    """HOTA-family scores in percent, with per-threshold detail."""

    task: str  # "track-id" | "mot"
    hota: float
    deta: float
    assa: float
    per_alpha: tuple[AlphaStats, ...]
    id_switches: Optional[int] = None

    def to_dict(self) -> dict:
        prefix = "ti_" if self.task == "track-id" else ""
        out = {
            "task": self.task,
            f"{prefix}hota": self.hota,
            f"{prefix}deta": self.deta,
            f"{prefix}assa": self.assa,
            "per_alpha": [
                {
                    "alpha": s.alpha,
                    "tp": s.tp,
                    "fp": s.fp,
                    "fn": s.fn,
                    "tpa": s.tpa,
                    "fpa": s.fpa,
                    "fna": s.fna,
                    "deta": s.deta,
                    "assa": s.assa,
                    "hota": s.hota,
                }
                for s in self.per_alpha
            ],
        }
        if self.id_switches is not None:
            out["id_switches"] = self.id_switches
        return out


def loc_sim(p: Sequence[float], g: Sequence[float], tau: float = 1.0) -> float:
    """Gaussian-decay localization similarity; equals 0.05 at distance tau."""
    d2 = (p[0] - g[0]) ** 2 + (p[1] - g[1]) ** 2
    return 0.05 ** (d2 / (tau * tau))


def id_sim(p_attrs: IdentityAttributes, g_attrs: IdentityAttributes) -> int:
    """1 iff every identity attribute matches exactly, else 0."""
    if p_attrs.mode != g_attrs.mode:
        raise MetricsError(
            f"attribute mode mismatch: {p_attrs.mode} vs {g_attrs.mode}"
        )
    return int(
        p_attrs.team == g_attrs.team
        and p_attrs.initial_position == g_attrs.initial_position
        and p_attrs.jersey_number == g_attrs.jersey_number
    )


def bbox_iou(
    a: tuple[float, float, float, float], b: tuple[float, float, float, float]
) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


_MAX_COLS = 16


def solve_assignment(score_matrix) -> list[tuple[int, int]]:
    """One-to-one matching over a non-negative score matrix.

    Maximizes, lexicographically, (number of matched pairs with positive
    score, total matched score); among optima the matching whose row-wise
    column sequence is smallest is returned, so results are deterministic.
    Zero-score pairs are never matched.
    """
    m = np.asarray(score_matrix, dtype=float)
    if m.ndim != 2:
        raise MetricsError("score matrix must be 2-D")
    if np.any(m < 0):
        raise MetricsError("scores must be non-negative")
    n_rows, n_cols = m.shape
    if n_rows == 0 or n_cols == 0:
        return []
    if n_cols > _MAX_COLS:
        raise MetricsError(f"assignment supports at most {_MAX_COLS} columns")

    sentinel = n_cols
    pos_cols = [
        [j for j in range(n_cols) if m[i, j] > 0] for i in range(n_rows)
    ]
    # DP over rows; state = bitmask of used columns.
    # Value = (count, total, key_seq); maximize count then total, then
    # minimize key_seq (matched column per row, sentinel when skipped).
    states: dict[int, tuple[int, float, tuple[int, ...]]] = {0: (0, 0.0, ())}
    for i in range(n_rows):
        row = m[i]
        nxt: dict[int, tuple[int, float, tuple[int, ...]]] = {}
        for mask, (cnt, tot, key) in states.items():
            cand = (cnt, tot, key + (sentinel,))
            best = nxt.get(mask)
            if best is None or _better(cand, best):
                nxt[mask] = cand
            for j in pos_cols[i]:
                bit = 1 << j
                if mask & bit:
                    continue
                cand = (cnt + 1, tot + row[j], key + (j,))
                new_mask = mask | bit
                best = nxt.get(new_mask)
                if best is None or _better(cand, best):
                    nxt[new_mask] = cand
        states = nxt
    best = None
    for value in states.values():
        if best is None or _better(value, best):
            best = value
    assert best is not None
    return [(i, j) for i, j in enumerate(best[2]) if j != sentinel]


def _better(
    a: tuple[int, float, tuple[int, ...]], b: tuple[int, float, tuple[int, ...]]
) -> bool:
    if a[0] != b[0]:
        return a[0] > b[0]
    if a[1] != b[1]:
        return a[1] > b[1]
    return a[2] < b[2]


def _frame_dets(seq: SequenceData, frame: int) -> list[Detection]:
    return sorted(seq.by_frame.get(frame, ()), key=lambda d: d.tracklet_id)


def _eval_frames(pred: SequenceData, gt: SequenceData) -> list[int]:
    if pred.frame_range != gt.frame_range:
        warnings.warn(
            f"frame ranges differ (pred {pred.frame_range}, "
            f"gt {gt.frame_range}); evaluating on the intersection",
            stacklevel=3,
        )
    lo = max(pred.frame_range[0], gt.frame_range[0])
    hi = min(pred.frame_range[1], gt.frame_range[1])
    frames = set(pred.by_frame) | set(gt.by_frame)
    return sorted(f for f in frames if lo <= f <= hi)


def _track_id_sim(p: Detection, g: Detection, tau: float) -> float:
    if p.court_xy is None or g.court_xy is None:
        raise MetricsError(
            f"detection missing court coordinates at frame {p.frame_id}"
        )
    if p.attrs is None or g.attrs is None:
        return 0.0
    s = id_sim(p.attrs, g.attrs)
    if s == 0:
        return 0.0
    return loc_sim(p.court_xy, g.court_xy, tau)


def _hota_accumulate(
    pred: SequenceData,
    gt: SequenceData,
    alphas: tuple[float, ...],
    sim_fn,
    count_id_switches: bool,
    assa_per_pair: bool,
) -> tuple[list["AlphaStats"], int]:
    frames = _eval_frames(pred, gt)
    n_alpha = len(alphas)
    alpha_arr = np.array(alphas)

    gt_count: dict[int, int] = {}
    pred_count: dict[int, int] = {}
    tp = [0] * n_alpha
    pair_counts: list[dict[tuple[int, int], int]] = [{} for _ in range(n_alpha)]
    total_gt = 0
    total_pred = 0

    switch_alpha = None
    if count_id_switches:
        # CLEAR-MOT style switches counted at IoU threshold 0.5.
        switch_alpha = min(
            range(n_alpha), key=lambda i: abs(alphas[i] - 0.5)
        )
    last_pred_for_gt: dict[int, int] = {}
    id_switches = 0

    for f in frames:
        p_dets = _frame_dets(pred, f)
        g_dets = _frame_dets(gt, f)
        total_pred += len(p_dets)
        total_gt += len(g_dets)
        for g in g_dets:
            gt_count[g.tracklet_id] = gt_count.get(g.tracklet_id, 0) + 1
        for p in p_dets:
            pred_count[p.tracklet_id] = pred_count.get(p.tracklet_id, 0) + 1
        if not p_dets or not g_dets:
            continue
        sim = np.array(
            [[sim_fn(p, g) for g in g_dets] for p in p_dets], dtype=float
        )
        # Matchings are identical for alphas that induce the same edge set;
        # solve once per distinct thresholded pattern.
        prev_mask: Optional[np.ndarray] = None
        matches: list[tuple[int, int]] = []
        for ai in range(n_alpha):
            mask = sim >= alpha_arr[ai]
            if prev_mask is None or not np.array_equal(mask, prev_mask):
                matches = solve_assignment(np.where(mask, sim, 0.0))
                prev_mask = mask
            if matches:
                tp[ai] += len(matches)
                counts = pair_counts[ai]
                for r, c in matches:
                    key = (p_dets[r].tracklet_id, g_dets[c].tracklet_id)
                    counts[key] = counts.get(key, 0) + 1
            if count_id_switches and ai == switch_alpha:
                for r, c in matches:
                    gid = g_dets[c].tracklet_id
                    pid = p_dets[r].tracklet_id
                    prev = last_pred_for_gt.get(gid)
                    if prev is not None and prev != pid:
                        id_switches += 1
                    last_pred_for_gt[gid] = pid

    per_alpha: list[AlphaStats] = []
    for ai, alpha in enumerate(alphas):
        tp_a = tp[ai]
        fp_a = total_pred - tp_a
        fn_a = total_gt - tp_a
        denom = tp_a + fp_a + fn_a
        deta = tp_a / denom if denom > 0 else 1.0
        tpa_sum = 0
        fpa_sum = 0
        fna_sum = 0
        assa_acc = 0.0
        pair_acc = 0.0
        for (pid, gid), m_pg in pair_counts[ai].items():
            a_c = m_pg / (gt_count[gid] + pred_count[pid] - m_pg)
            assa_acc += m_pg * a_c
            pair_acc += a_c
            tpa_sum += m_pg * m_pg
            fna_sum += m_pg * (gt_count[gid] - m_pg)
            fpa_sum += m_pg * (pred_count[pid] - m_pg)
        if tp_a > 0:
            if assa_per_pair:
                assa = pair_acc / len(pair_counts[ai])
            else:
                assa = assa_acc / tp_a
        else:
            assa = 1.0 if denom == 0 else 0.0
        per_alpha.append(
            AlphaStats(
                alpha=alpha,
                tp=tp_a,
                fp=fp_a,
                fn=fn_a,
                tpa=tpa_sum,
                fpa=fpa_sum,
                fna=fna_sum,
                deta=deta,
                assa=assa,
                hota=math.sqrt(deta * assa),
            )
        )
    return per_alpha, id_switches


def evaluate_track_id(
    pred: SequenceData,
    gt: SequenceData,
    params: SimilarityParams = SimilarityParams(),
    *,
    assa_per_pair: bool = False,
) -> MetricReport:
    """Evaluate court-localized tracking with identification.

    The per-pair candidate similarity is the product of the localization
    similarity (tolerance ``params.tau``) and the binary attribute match.
    Pairs with similarity >= alpha are matched per frame; the final score
    averages sqrt(DetA_a * AssA_a) over the threshold sweep.

    Detections lacking attributes on either side get zero similarity and
    can therefore never match. ``assa_per_pair`` switches the association
    average from per-TP-instance (the default) to per-distinct-pair.
    """
    tau = params.tau

    def sim_fn(p: Detection, g: Detection) -> float:
        return _track_id_sim(p, g, tau)

    per_alpha, _ = _hota_accumulate(
        pred, gt, params.alphas, sim_fn, False, assa_per_pair
    )
    return _finalize("track-id", per_alpha, None)


def evaluate_mot_iou(
    pred: SequenceData,
    gt: SequenceData,
    params: SimilarityParams = SimilarityParams(),
) -> MetricReport:
    """HOTA / DetA / AssA with IoU similarity, plus ID-switch count."""

    def sim_fn(p: Detection, g: Detection) -> float:
        return bbox_iou(p.bbox, g.bbox)

    per_alpha, switches = _hota_accumulate(
        pred, gt, params.alphas, sim_fn, True, False
    )
    return _finalize("mot", per_alpha, switches)


def _finalize(
    task: str, per_alpha: list[AlphaStats], id_switches: Optional[int]
) -> MetricReport:
    n = len(per_alpha)
    hota = 100.0 * sum(s.hota for s in per_alpha) / n
    deta = 100.0 * sum(s.deta for s in per_alpha) / n
    assa = 100.0 * sum(s.assa for s in per_alpha) / n
    return MetricReport(
        task=task,
        hota=hota,
        deta=deta,
        assa=assa,
        per_alpha=tuple(per_alpha),
        id_switches=id_switches,
    )


def torso_length(pose: PoseFrame) -> float:
    """Distance from the shoulder midpoint to the hip-midpoint keypoint."""
    for name in ("l_shoulder", "r_shoulder", "center"):
        if not pose.is_visible(name):
            raise MetricsError(
                f"keypoint {name!r} invisible; torso length undefined "
                f"(frame {pose.frame_id}, player {pose.player_id})"
            )
    ls = pose.point("l_shoulder")
    rs = pose.point("r_shoulder")
    cx, cy = pose.point("center")
    mx, my = (ls[0] + rs[0]) / 2.0, (ls[1] + rs[1]) / 2.0
    return math.hypot(mx - cx, my - cy)


@dataclass(frozen=True)
class PdjReport:
    """Per-keypoint detection rates (percent) and their mean."""

    per_keypoint: dict[str, float]
    mean_pdj: float
    threshold: float
    n_pairs: int
    unpaired: int


def _normalized_errors(
    pred_poses: Sequence[PoseFrame], gt_poses: Sequence[PoseFrame]
) -> tuple[list[list[float]], int]:
    """Torso-normalized keypoint errors per keypoint over matched poses."""
    pred_by_key = {(p.frame_id, p.player_id): p for p in pred_poses}
    errors: list[list[float]] = [[] for _ in KEYPOINT_NAMES]
    unpaired = 0
    for g in gt_poses:
        p = pred_by_key.get((g.frame_id, g.player_id))
        if p is None:
            unpaired += 1
            continue
        torso = torso_length(g)
        if torso <= 0:
            raise MetricsError(
                f"zero torso length (frame {g.frame_id}, "
                f"player {g.player_id})"
            )
        for k in range(len(KEYPOINT_NAMES)):
            if not g.visible[k]:
                continue
            gx, gy = g.points[k]
            px, py = p.points[k]
            errors[k].append(math.hypot(px - gx, py - gy) / torso)
    return errors, unpaired


def _rates(errors: list[list[float]], threshold: float) -> tuple[dict[str, float], float]:
    per_kp: dict[str, float] = {}
    valid = []
    for name, errs in zip(KEYPOINT_NAMES, errors):
        if not errs:
            continue
        rate = 100.0 * sum(1 for e in errs if e < threshold) / len(errs)
        per_kp[name] = rate
        valid.append(rate)
    mean = sum(valid) / len(valid) if valid else 0.0
    return per_kp, mean


def pdj(
    pred_poses: Sequence[PoseFrame],
    gt_poses: Sequence[PoseFrame],
    threshold: float = 0.5,
) -> PdjReport:
    """Percentage of Detected Joints at a torso-normalized threshold.

    A keypoint counts as detected when its distance to ground truth,
    divided by the ground-truth torso length, is strictly below the
    threshold. Invisible ground-truth keypoints are excluded from the
    denominators; keypoints with no visible samples are excluded from the
    mean.
    """
    errors, unpaired = _normalized_errors(pred_poses, gt_poses)
    per_kp, mean = _rates(errors, threshold)
    n_pairs = max((len(e) for e in errors), default=0)
    return PdjReport(
        per_keypoint=per_kp,
        mean_pdj=mean,
        threshold=threshold,
        n_pairs=n_pairs,
        unpaired=unpaired,
    )


def pdj_auc(
    pred_poses: Sequence[PoseFrame], gt_poses: Sequence[PoseFrame]
) -> float:
    """Area under the PDJ curve for thresholds 0, 0.01, ..., 0.5.

    Each threshold contributes mean-PDJ (as a fraction) times 0.01, so a
    perfect predictor scores 0.5.
    """
    errors, _ = _normalized_errors(pred_poses, gt_poses)
    auc = 0.0
    for i in range(51):
        t = i / 100.0
        _, mean = _rates(errors, t)
        auc += (mean / 100.0) * 0.01
    return auc
