"""Synthetic scenario generation and an independent brute-force metric oracle.

Scenarios produce a ground-truth sequence of six players walking on the
court plus a prediction derived from it by an ordered list of corruptions
(track fragmentation, ID exchange, localization noise, dropout, clutter
tracks). Generation is deterministic for a given spec and seed.

The oracle re-implements the tracking-with-identification metric by
exhaustive permutation search per frame and direct per-frame counting of
association terms; it shares no matching or accumulation code with
:mod:`.metrics`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from .court import CourtModel, Homography, indoor_court
from .metrics import AlphaStats, MetricReport, MetricsError, SimilarityParams
from .trackdata import (
    DRONE,
    INDOOR,
    OUTDOOR,
    Detection,
    IdentityAttributes,
    SequenceData,
)

__all__ = [
    "ClutterTrack",
    "Dropout",
    "Fragmentation",
    "IdExchange",
    "LocNoise",
    "ScenarioSpec",
    "SynthError",
    "camera_homography",
    "generate_scenario",
    "oracle_ti_hota",
]


class SynthError(ValueError):
    """Raised for infeasible scenario specifications."""


@dataclass(frozen=True)
class Fragmentation:
    """Split a prediction track: frames >= ``frame`` get a fresh ID."""

    track: int
    frame: int


@dataclass(frozen=True)
class IdExchange:
    """Swap two prediction track IDs from ``frame`` onward.

    Attributes stay with the ID (as a tracker would keep its per-tracklet
    identity decision), so the geometry and identity disagree afterwards.
    """

    track_a: int
    track_b: int
    frame: int


@dataclass(frozen=True)
class LocNoise:
    """Gaussian court-coordinate noise (meters) on every prediction."""

    sigma: float


@dataclass(frozen=True)
class Dropout:
    """Drop each prediction detection independently with this probability."""

    rate: float


@dataclass(frozen=True)
class ClutterTrack:
    """Extra non-player track confined to a court zone.

    ``zone`` is one of ``coffin_corner``, ``endline_band``, ``outside_3m``.
    The track runs from frame 0 for ``length`` frames and carries no
    identity attributes.
    """

    zone: str
    length: int


Corruption = Union[Fragmentation, IdExchange, LocNoise, Dropout, ClutterTrack]

_CLUTTER_BASE_ID = 900

# Synthetic fixed camera: image pixels are court meters times 100, so the
# image-to-court homography is a pure scale.
_CAMERA_SCALE = 0.01


def camera_homography() -> Homography:
    return Homography(
        np.array(
            [[_CAMERA_SCALE, 0.0, 0.0], [0.0, _CAMERA_SCALE, 0.0], [0.0, 0.0, 1.0]]
        )
    )


@dataclass(frozen=True)
class ScenarioSpec:
    """Deterministic description of one synthetic clip."""

    seed: int
    n_frames: int
    n_players: int = 6
    court: CourtModel = field(default_factory=indoor_court)
    step_sigma: float = 0.08
    corruptions: tuple[Corruption, ...] = ()
    mode: str = INDOOR

    def __post_init__(self) -> None:
        if self.n_frames <= 0:
            raise SynthError("n_frames must be positive")
        if not 1 <= self.n_players <= 6:
            raise SynthError("n_players must be between 1 and 6")
        if self.n_players != 6 and self.mode in (INDOOR, OUTDOOR):
            raise SynthError("attribute modes require exactly 6 players")
        if self.step_sigma < 0:
            raise SynthError("step_sigma must be non-negative")
        object.__setattr__(self, "corruptions", tuple(self.corruptions))


def _bbox_for_court_point(pt: Sequence[float]) -> tuple[float, float, float, float]:
    ax, ay = pt[0] / _CAMERA_SCALE, pt[1] / _CAMERA_SCALE
    return (ax - 20.0, ay - 80.0, 40.0, 80.0)


def _detection(
    frame: int, tid: int, pt: Sequence[float], attrs: Optional[IdentityAttributes]
) -> Detection:
    return Detection(
        frame_id=frame,
        tracklet_id=tid,
        bbox=_bbox_for_court_point(pt),
        court_xy=(float(pt[0]), float(pt[1])),
        attrs=attrs,
    )


def _start_layout(
    court: CourtModel, mode: str, rng: np.random.Generator
) -> dict[int, tuple[tuple[float, float], Optional[IdentityAttributes]]]:
    """Structured first-frame layout: three offense/defense pairs.

    Pair sites are well separated and the intra-pair offset points along
    the line to the end-line midpoint, so geometric attribute assignment
    recovers exactly these attributes from clean first-frame positions.
    """
    ax = court.width / 2.0
    jitter = lambda: rng.uniform(-0.3, 0.3)
    sites = {
        "top": (ax + jitter(), 6.0 + jitter()),
        "left": (ax - 4.0 + jitter(), 4.5 + jitter()),
        "right": (ax + 4.0 + jitter(), 4.5 + jitter()),
    }
    anchor = court.endline_midpoint
    out: dict[int, tuple[tuple[float, float], Optional[IdentityAttributes]]] = {}
    tid = 1
    for label in ("top", "left", "right"):
        sx, sy = sites[label]
        dx, dy = anchor[0] - sx, anchor[1] - sy
        norm = float(np.hypot(dx, dy))
        ux, uy = dx / norm, dy / norm
        offense_pt = (sx - 0.9 * ux, sy - 0.9 * uy)
        defense_pt = (sx + 0.9 * ux, sy + 0.9 * uy)
        for team, pt in (("offense", offense_pt), ("defense", defense_pt)):
            if mode == INDOOR:
                attrs = IdentityAttributes(team=team, initial_position=label)
            elif mode == OUTDOOR:
                attrs = IdentityAttributes(team=team, jersey_number=tid)
            else:
                attrs = None
            out[tid] = (pt, attrs)
            tid += 1
    return out


def _reflect(value: float, lo: float, hi: float) -> float:
    span = hi - lo
    while value < lo or value > hi:
        if value < lo:
            value = 2 * lo - value
        if value > hi:
            value = 2 * hi - value
        if span <= 0:
            return lo
    return value


def _walk(
    start: tuple[float, float],
    n_frames: int,
    sigma: float,
    bounds: tuple[float, float, float, float],
    rng: np.random.Generator,
) -> list[tuple[float, float]]:
    x_lo, x_hi, y_lo, y_hi = bounds
    x, y = start
    pts = [(x, y)]
    steps = rng.normal(0.0, sigma, size=(n_frames - 1, 2)) if n_frames > 1 else []
    for sx, sy in steps:
        x = _reflect(x + sx, x_lo, x_hi)
        y = _reflect(y + sy, y_lo, y_hi)
        pts.append((x, y))
    return pts


def _clutter_bounds(
    court: CourtModel, zone: str
) -> tuple[tuple[float, float], tuple[float, float, float, float]]:
    if zone == "coffin_corner":
        x0 = court.paint_x_range[1] + 1.2
        y_lo = max(10.2, court.depth - 2.8)
        y_hi = court.depth + 2.8
        if y_lo >= y_hi:
            raise SynthError("coffin corner zone is empty for this court")
        y0 = (y_lo + y_hi) / 2.0
        return (x0, y0), (x0 - 0.5, min(x0 + 0.5, court.width + 2.5), y_lo, y_hi)
    if zone == "endline_band":
        return ((court.width / 2.0, -1.0), (1.0, court.width - 1.0, -2.5, 0.8))
    if zone == "outside_3m":
        return ((court.width / 2.0, -5.0), (1.0, court.width - 1.0, -7.0, -3.5))
    raise SynthError(f"unknown clutter zone {zone!r}")


def generate_scenario(
    spec: ScenarioSpec,
) -> tuple[SequenceData, SequenceData, dict]:
    """Generate (ground truth, corrupted prediction, event manifest)."""
    rng = np.random.default_rng(spec.seed)
    court = spec.court
    layout = _start_layout(court, spec.mode, rng)
    if spec.n_players < len(layout):  # drone mode may use fewer walkers
        layout = {tid: layout[tid] for tid in sorted(layout)[: spec.n_players]}
    trajectories = {
        tid: _walk(pt, spec.n_frames, spec.step_sigma, (0.0, court.width, 0.0, court.depth), rng)
        for tid, (pt, _) in layout.items()
    }
    gt_dets: list[Detection] = []
    for frame in range(spec.n_frames):
        for tid in sorted(layout):
            gt_dets.append(
                _detection(frame, tid, trajectories[tid][frame], layout[tid][1])
            )
    gt = SequenceData(
        mode=spec.mode,
        detections=tuple(gt_dets),
        total_frames=spec.n_frames,
        frame_range=(0, spec.n_frames - 1),
    )

    pred_rows: list[Detection] = list(gt_dets)
    manifest_events: list[dict] = []
    next_frag_id = max(layout) + 1
    next_clutter_id = _CLUTTER_BASE_ID
    for corruption in spec.corruptions:
        if isinstance(corruption, Fragmentation):
            present = {d.tracklet_id for d in pred_rows}
            if corruption.track not in present:
                raise SynthError(
                    f"fragmentation target {corruption.track} not present"
                )
            if not 0 < corruption.frame < spec.n_frames:
                raise SynthError(
                    f"fragmentation frame {corruption.frame} out of range"
                )
            new_id = next_frag_id
            next_frag_id += 1
            pred_rows = [
                d
                if not (
                    d.tracklet_id == corruption.track
                    and d.frame_id >= corruption.frame
                )
                else Detection(
                    frame_id=d.frame_id,
                    tracklet_id=new_id,
                    bbox=d.bbox,
                    court_xy=d.court_xy,
                    attrs=d.attrs,
                )
                for d in pred_rows
            ]
            manifest_events.append(
                {
                    "type": "fragmentation",
                    "track": corruption.track,
                    "frame": corruption.frame,
                    "new_id": new_id,
                }
            )
        elif isinstance(corruption, IdExchange):
            a, b = corruption.track_a, corruption.track_b
            if a == b:
                raise SynthError("id_exchange requires two distinct tracks")
            attrs_by_id: dict[int, Optional[IdentityAttributes]] = {}
            for d in pred_rows:
                attrs_by_id.setdefault(d.tracklet_id, d.attrs)
            if a not in attrs_by_id or b not in attrs_by_id:
                raise SynthError(f"id_exchange tracks {a}/{b} not present")
            swapped: list[Detection] = []
            for d in pred_rows:
                if d.frame_id >= corruption.frame and d.tracklet_id in (a, b):
                    new_tid = b if d.tracklet_id == a else a
                    swapped.append(
                        Detection(
                            frame_id=d.frame_id,
                            tracklet_id=new_tid,
                            bbox=d.bbox,
                            court_xy=d.court_xy,
                            attrs=attrs_by_id[new_tid],
                        )
                    )
                else:
                    swapped.append(d)
            pred_rows = swapped
            manifest_events.append(
                {
                    "type": "id_exchange",
                    "track_a": a,
                    "track_b": b,
                    "frame": corruption.frame,
                }
            )
        elif isinstance(corruption, LocNoise):
            noisy: list[Detection] = []
            for d in pred_rows:
                nx, ny = rng.normal(0.0, corruption.sigma, size=2)
                pt = (d.court_xy[0] + nx, d.court_xy[1] + ny)
                noisy.append(
                    Detection(
                        frame_id=d.frame_id,
                        tracklet_id=d.tracklet_id,
                        bbox=_bbox_for_court_point(pt),
                        court_xy=pt,
                        attrs=d.attrs,
                    )
                )
            pred_rows = noisy
            manifest_events.append(
                {"type": "loc_noise", "sigma": corruption.sigma}
            )
        elif isinstance(corruption, Dropout):
            keep = rng.random(len(pred_rows)) >= corruption.rate
            pred_rows = [d for d, k in zip(pred_rows, keep) if k]
            manifest_events.append(
                {"type": "dropout", "rate": corruption.rate}
            )
        elif isinstance(corruption, ClutterTrack):
            length = min(corruption.length, spec.n_frames)
            if length <= 0:
                raise SynthError("clutter length must be positive")
            start, bounds = _clutter_bounds(court, corruption.zone)
            pts = _walk(start, length, 0.05, bounds, rng)
            tid = next_clutter_id
            next_clutter_id += 1
            for frame in range(length):
                pred_rows.append(_detection(frame, tid, pts[frame], None))
            manifest_events.append(
                {
                    "type": "clutter_track",
                    "zone": corruption.zone,
                    "length": length,
                    "track": tid,
                }
            )
        else:
            raise SynthError(f"unknown corruption {corruption!r}")

    pred = SequenceData(
        mode=spec.mode,
        detections=tuple(pred_rows),
        total_frames=spec.n_frames,
        frame_range=(0, spec.n_frames - 1),
    )
    manifest = {
        "seed": spec.seed,
        "mode": spec.mode,
        "n_frames": spec.n_frames,
        "court": {"depth": court.depth, "width": court.width},
        "players": {
            tid: None
            if attrs is None
            else {
                "team": attrs.team,
                "initial_position": attrs.initial_position,
                "jersey_number": attrs.jersey_number,
            }
            for tid, (_, attrs) in layout.items()
        },
        "corruptions": manifest_events,
        "camera_homography": camera_homography().to_json(),
    }
    return gt, pred, manifest


_MAX_ORACLE_AGENTS = 8


@lru_cache(maxsize=None)
def _perm_table(k: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(k))), dtype=np.intp)


def _oracle_attrs_equal(
    a: Optional[IdentityAttributes], b: Optional[IdentityAttributes]
) -> bool:
    if a is None or b is None:
        return False
    return (
        a.team == b.team
        and a.initial_position == b.initial_position
        and a.jersey_number == b.jersey_number
    )


def _oracle_best_matching(
    thr: np.ndarray, n_pred: int, n_gt: int
) -> list[tuple[int, int]]:
    """Exhaustive lexicographic optimum over all injective matchings."""
    if not np.any(thr > 0):
        return []
    # Rows/columns without any positive entry can never join a matching;
    # enumerating permutations of the active submatrix is still exhaustive.
    active_rows = np.flatnonzero((thr > 0).any(axis=1))
    active_cols = np.flatnonzero((thr > 0).any(axis=0))
    sub = thr[np.ix_(active_rows, active_cols)]
    nr, nc = sub.shape
    k = max(nr, nc)
    padded = np.zeros((k, k))
    padded[:nr, :nc] = sub
    perms = _perm_table(k)
    vals = padded[np.arange(k)[None, :], perms]
    counts = (vals > 0).sum(axis=1)
    totals = vals.sum(axis=1)
    max_count = counts.max()
    mask = counts == max_count
    max_total = totals[mask].max()
    cand = np.flatnonzero(mask & (totals == max_total))
    best_key: Optional[tuple[int, ...]] = None
    for idx in cand:
        perm = perms[idx]
        key = tuple(
            int(perm[r]) if perm[r] < nc and padded[r, perm[r]] > 0 else nc
            for r in range(nr)
        )
        if best_key is None or key < best_key:
            best_key = key
    assert best_key is not None
    return [
        (int(active_rows[r]), int(active_cols[c]))
        for r, c in enumerate(best_key)
        if c != nc
    ]


def oracle_ti_hota(
    pred: SequenceData,
    gt: SequenceData,
    params: SimilarityParams = SimilarityParams(),
) -> MetricReport:
    """Brute-force tracking-with-identification scores from first principles.

    Feasible for at most 8 agents per frame on either side. Shares the
    stated similarity formulas but no matching or accumulation code with
    the main metric implementation.
    """
    alphas = params.alphas
    tau2 = params.tau * params.tau
    lo = max(pred.frame_range[0], gt.frame_range[0])
    hi = min(pred.frame_range[1], gt.frame_range[1])
    frames = sorted(
        f
        for f in set(pred.by_frame) | set(gt.by_frame)
        if lo <= f <= hi
    )

    # Per alpha: list over frames of matched (pred_id, gt_id) pairs.
    matches_per_alpha: list[list[list[tuple[int, int]]]] = [
        [] for _ in alphas
    ]
    gt_frames: list[list[int]] = []  # gt ids present per frame
    pred_frames: list[list[int]] = []

    for f in frames:
        p_dets = sorted(pred.by_frame.get(f, ()), key=lambda d: d.tracklet_id)
        g_dets = sorted(gt.by_frame.get(f, ()), key=lambda d: d.tracklet_id)
        if len(p_dets) > _MAX_ORACLE_AGENTS or len(g_dets) > _MAX_ORACLE_AGENTS:
            raise MetricsError("oracle supports at most 8 agents per frame")
        gt_frames.append([d.tracklet_id for d in g_dets])
        pred_frames.append([d.tracklet_id for d in p_dets])
        n_p, n_g = len(p_dets), len(g_dets)
        if n_p == 0 or n_g == 0:
            for ai in range(len(alphas)):
                matches_per_alpha[ai].append([])
            continue
        sim = np.zeros((n_p, n_g))
        for r, p in enumerate(p_dets):
            for c, g in enumerate(g_dets):
                if not _oracle_attrs_equal(p.attrs, g.attrs):
                    continue
                if p.court_xy is None or g.court_xy is None:
                    raise MetricsError("detection missing court coordinates")
                d2 = (p.court_xy[0] - g.court_xy[0]) ** 2 + (
                    p.court_xy[1] - g.court_xy[1]
                ) ** 2
                sim[r, c] = 0.05 ** (d2 / tau2)
        prev_mask: Optional[np.ndarray] = None
        pairs: list[tuple[int, int]] = []
        for ai, alpha in enumerate(alphas):
            mask = sim >= alpha
            if prev_mask is None or not np.array_equal(mask, prev_mask):
                thr = np.where(mask, sim, 0.0)
                raw = _oracle_best_matching(thr, n_p, n_g)
                pairs = [
                    (p_dets[r].tracklet_id, g_dets[c].tracklet_id)
                    for r, c in raw
                ]
                prev_mask = mask
            matches_per_alpha[ai].append(pairs)

    total_gt = sum(len(ids) for ids in gt_frames)
    total_pred = sum(len(ids) for ids in pred_frames)
    per_alpha: list[AlphaStats] = []
    for ai, alpha in enumerate(alphas):
        frame_matches = matches_per_alpha[ai]
        tp = sum(len(m) for m in frame_matches)
        fp = total_pred - tp
        fn = total_gt - tp
        denom = tp + fp + fn
        deta = tp / denom if denom > 0 else 1.0

        distinct = sorted({pair for m in frame_matches for pair in m})
        assa_acc = 0.0
        tpa_sum = fpa_sum = fna_sum = 0
        for pid, gid in distinct:
            tpa = fna = fpa = 0
            for fi in range(len(frames)):
                matched_here = (pid, gid) in frame_matches[fi]
                if matched_here:
                    tpa += 1
                else:
                    if gid in gt_frames[fi]:
                        fna += 1
                if pid in pred_frames[fi] and not matched_here:
                    fpa += 1
            a_c = tpa / (tpa + fna + fpa)
            assa_acc += tpa * a_c
            tpa_sum += tpa * tpa
            fna_sum += tpa * fna
            fpa_sum += tpa * fpa
        if tp > 0:
            assa = assa_acc / tp
        else:
            assa = 1.0 if denom == 0 else 0.0
        per_alpha.append(
            AlphaStats(
                alpha=alpha,
                tp=tp,
                fp=fp,
                fn=fn,
                tpa=tpa_sum,
                fpa=fpa_sum,
                fna=fna_sum,
                deta=deta,
                assa=assa,
                hota=float(np.sqrt(deta * assa)),
            )
        )
    n = len(per_alpha)
    return MetricReport(
        task="track-id",
        hota=100.0 * sum(s.hota for s in per_alpha) / n,
        deta=100.0 * sum(s.deta for s in per_alpha) / n,
        assa=100.0 * sum(s.assa for s in per_alpha) / n,
        per_alpha=tuple(per_alpha),
        id_switches=None,
    )
