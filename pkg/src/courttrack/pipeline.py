"""Tracklet-processing stages turning raw tracker output into player tracks.

Stage order is fixed: detection-level exclusion, tracklet-level exclusion,
ID-switch merging, attribute identification (see :mod:`.identity`), linear
interpolation, endpoint extrapolation, and the per-frame detection cap.

A detection counts as "on court" when it exists at the frame and its court
point is within the detection buffer (default 3 m) of the court rectangle;
the same predicate feeds the merge cost, the continuity criterion, and the
per-frame cap ordering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import IO, Callable, Optional, Sequence

from .court import CourtModel, zone_test
from .trackdata import Detection, IdentityAttributes, SequenceData

__all__ = [
    "PipelineConfig",
    "PipelineError",
    "cap_detections_per_frame",
    "exclude_detections",
    "exclude_tracklets",
    "extrapolate_endpoints",
    "interpolate_gaps",
    "merge_id_switches",
    "run_pipeline",
]


class PipelineError(ValueError):
    """Raised for invalid pipeline input or configuration."""


@dataclass(frozen=True)
class PipelineConfig:
    """Tunable thresholds for the tracklet pipeline.

    ``t_overlap`` is the simultaneous-existence threshold of the ID-switch
    merge (10 for indoor clips, 50 for outdoor, matching the clip length
    scales).
    """

    t_overlap: int = 10
    detection_buffer_m: float = 3.0
    min_continuous_frames: int = 10
    endline_outer_m: float = 3.0
    endline_inner_m: float = 1.0
    coffin_endline_dist_m: float = 10.0
    occupancy_fraction: float = 0.5
    max_players: int = 6

    def __post_init__(self) -> None:
        for name in (
            "detection_buffer_m",
            "endline_outer_m",
            "endline_inner_m",
            "coffin_endline_dist_m",
        ):
            if getattr(self, name) < 0:
                raise PipelineError(f"{name} must be non-negative")
        if self.t_overlap < 0:
            raise PipelineError("t_overlap must be non-negative")
        if self.max_players < 1:
            raise PipelineError("max_players must be at least 1")
        if not 0 <= self.occupancy_fraction <= 1:
            raise PipelineError("occupancy_fraction must be in [0, 1]")

    def to_json(self) -> dict:
        return {
            "t_overlap": self.t_overlap,
            "detection_buffer_m": self.detection_buffer_m,
            "min_continuous_frames": self.min_continuous_frames,
            "endline_outer_m": self.endline_outer_m,
            "endline_inner_m": self.endline_inner_m,
            "coffin_endline_dist_m": self.coffin_endline_dist_m,
            "occupancy_fraction": self.occupancy_fraction,
            "max_players": self.max_players,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "PipelineConfig":
        return cls(**payload)

    @classmethod
    def load(cls, stream: IO[str]) -> "PipelineConfig":
        return cls.from_json(json.load(stream))


def _require_court_xy(d: Detection) -> tuple[float, float]:
    if d.court_xy is None:
        raise PipelineError(
            f"detection missing court coordinates (frame {d.frame_id}, "
            f"tracklet {d.tracklet_id})"
        )
    return d.court_xy


def _is_on_court(
    d: Detection, court: Optional[CourtModel], cfg: PipelineConfig
) -> bool:
    if court is None:
        return True
    return not zone_test(
        court,
        _require_court_xy(d),
        "outside_3m",
        outer_m=cfg.detection_buffer_m,
    )


def _on_court_frames(
    dets: Sequence[Detection], court: Optional[CourtModel], cfg: PipelineConfig
) -> set[int]:
    return {d.frame_id for d in dets if _is_on_court(d, court, cfg)}


def exclude_detections(
    seq: SequenceData,
    court: CourtModel,
    cfg: PipelineConfig = PipelineConfig(),
) -> SequenceData:
    """Drop detections strictly more than the buffer distance off court."""
    kept = [
        d
        for d in seq.detections
        if not zone_test(
            court,
            _require_court_xy(d),
            "outside_3m",
            outer_m=cfg.detection_buffer_m,
        )
    ]
    return seq.replace_detections(kept)


def _longest_run(frames: set[int]) -> int:
    best = 0
    run = 0
    prev = None
    for f in sorted(frames):
        run = run + 1 if prev is not None and f == prev + 1 else 1
        best = max(best, run)
        prev = f
    return best


def exclude_tracklets(
    seq: SequenceData,
    court: CourtModel,
    cfg: PipelineConfig = PipelineConfig(),
) -> SequenceData:
    """Remove non-player tracklets by continuity and zone occupancy.

    A tracklet is removed when it has no run of at least
    ``min_continuous_frames`` consecutive on-court frames, or when it
    spends more than ``occupancy_fraction`` of its frames in the end-line
    band or in the coffin-corner region (both typical referee areas).
    """
    removed: set[int] = set()
    for tid, dets in seq.by_tracklet.items():
        on_court = _on_court_frames(dets, court, cfg)
        if _longest_run(on_court) < cfg.min_continuous_frames:
            removed.add(tid)
            continue
        n = len(dets)
        band = sum(
            zone_test(
                court,
                _require_court_xy(d),
                "endline_band",
                outer_m=cfg.endline_outer_m,
                inner_m=cfg.endline_inner_m,
            )
            for d in dets
        )
        if band > cfg.occupancy_fraction * n:
            removed.add(tid)
            continue
        coffin = sum(
            zone_test(
                court,
                _require_court_xy(d),
                "coffin_corner",
                coffin_endline_dist_m=cfg.coffin_endline_dist_m,
            )
            for d in dets
        )
        if coffin > cfg.occupancy_fraction * n:
            removed.add(tid)
    return seq.replace_detections(
        d for d in seq.detections if d.tracklet_id not in removed
    )


def merge_id_switches(
    seq: SequenceData,
    court: Optional[CourtModel] = None,
    cfg: PipelineConfig = PipelineConfig(),
) -> SequenceData:
    """Merge tracklet IDs that appeared mid-clip into first-frame IDs.

    Every ID absent from the clip's first frame is considered against each
    first-frame ID: candidates whose simultaneous on-court existence
    reaches ``t_overlap`` frames are skipped; among the rest, the candidate
    minimizing overlap + (total_frames - union size) absorbs the new ID.
    New IDs with no candidate stay unmerged. After each relabeling,
    duplicate (frame, id) rows keep the first occurrence in data order.
    Relabeling is in place: later new IDs see earlier merges. Processing
    order is ascending first-appearance frame, then ascending ID.
    """
    if not seq.detections:
        raise PipelineError("empty sequence")
    f_max = seq.total_frames
    rows: list[Detection] = list(seq.detections)
    t0 = min(d.frame_id for d in rows)
    orig_ids = sorted({d.tracklet_id for d in rows if d.frame_id == t0})
    first_seen: dict[int, int] = {}
    for d in rows:
        if d.tracklet_id not in first_seen:
            first_seen[d.tracklet_id] = d.frame_id
        else:
            first_seen[d.tracklet_id] = min(
                first_seen[d.tracklet_id], d.frame_id
            )
    new_ids = sorted(
        (tid for tid in first_seen if tid not in orig_ids),
        key=lambda tid: (first_seen[tid], tid),
    )
    for new_id in new_ids:
        frames_new = _on_court_frames(
            [d for d in rows if d.tracklet_id == new_id], court, cfg
        )
        candidates: list[tuple[int, int]] = []
        for orig_id in orig_ids:
            frames_orig = _on_court_frames(
                [d for d in rows if d.tracklet_id == orig_id], court, cfg
            )
            overlap = len(frames_orig & frames_new)
            if overlap >= cfg.t_overlap:
                continue
            missing = f_max - len(frames_orig | frames_new)
            cost = overlap + missing
            candidates.append((cost, orig_id))
        if not candidates:
            continue
        _, best_id = min(candidates)
        rows = [
            replace(d, tracklet_id=best_id) if d.tracklet_id == new_id else d
            for d in rows
        ]
        seen: set[tuple[int, int]] = set()
        deduped: list[Detection] = []
        for d in rows:
            key = (d.frame_id, d.tracklet_id)
            if key in seen:
                continue
            seen.add(key)
            deduped.append(d)
        rows = deduped
    return seq.replace_detections(rows)


def _lerp(a: float, b: float, t: float) -> float:
    return a + (b - a) * t


def _interp_detection(
    left: Detection, right: Detection, frame: int
) -> Detection:
    t = (frame - left.frame_id) / (right.frame_id - left.frame_id)
    bbox = tuple(
        _lerp(la, ra, t) for la, ra in zip(left.bbox, right.bbox)
    )
    court_xy = None
    if left.court_xy is not None and right.court_xy is not None:
        court_xy = (
            _lerp(left.court_xy[0], right.court_xy[0], t),
            _lerp(left.court_xy[1], right.court_xy[1], t),
        )
    return Detection(
        frame_id=frame,
        tracklet_id=left.tracklet_id,
        bbox=bbox,  # type: ignore[arg-type]
        court_xy=court_xy,
        attrs=left.attrs,
    )


def interpolate_gaps(tracklet: Sequence[Detection]) -> list[Detection]:
    """Fill every missing frame between observed detections linearly."""
    dets = sorted(tracklet, key=lambda d: d.frame_id)
    if len(dets) < 2:
        return list(dets)
    out: list[Detection] = [dets[0]]
    for left, right in zip(dets, dets[1:]):
        for frame in range(left.frame_id + 1, right.frame_id):
            out.append(_interp_detection(left, right, frame))
        out.append(right)
    return out


def _extrapolated(
    base: Detection, step_bbox: tuple, step_court, frame: int, steps: int,
    court: Optional[CourtModel], cfg: PipelineConfig,
) -> Detection:
    bbox = tuple(b + s * steps for b, s in zip(base.bbox, step_bbox))
    court_xy = None
    if base.court_xy is not None and step_court is not None:
        court_xy = (
            base.court_xy[0] + step_court[0] * steps,
            base.court_xy[1] + step_court[1] * steps,
        )
        if court is not None:
            court_xy = court.clamp(court_xy, cfg.detection_buffer_m)
    return Detection(
        frame_id=frame,
        tracklet_id=base.tracklet_id,
        bbox=bbox,  # type: ignore[arg-type]
        court_xy=court_xy,
        attrs=base.attrs,
    )


def extrapolate_endpoints(
    tracklet: Sequence[Detection],
    frame_range: tuple[int, int],
    court: Optional[CourtModel] = None,
    cfg: PipelineConfig = PipelineConfig(),
) -> list[Detection]:
    """Extend a tracklet to the clip boundaries at constant velocity.

    The leading gap is filled backward from the difference of the first two
    observed detections, the trailing gap forward from the last two.
    Extended court points are clamped to the court rectangle expanded by
    the detection buffer.
    """
    dets = sorted(tracklet, key=lambda d: d.frame_id)
    if len(dets) < 2:
        return list(dets)
    lo, hi = frame_range
    out: list[Detection] = []
    first, second = dets[0], dets[1]
    dt = second.frame_id - first.frame_id
    step_bbox = tuple((b - a) / dt for a, b in zip(first.bbox, second.bbox))
    step_court = None
    if first.court_xy is not None and second.court_xy is not None:
        step_court = (
            (second.court_xy[0] - first.court_xy[0]) / dt,
            (second.court_xy[1] - first.court_xy[1]) / dt,
        )
    for frame in range(lo, first.frame_id):
        steps = frame - first.frame_id  # negative: walk backward
        out.append(
            _extrapolated(first, step_bbox, step_court, frame, steps, court, cfg)
        )
    out.extend(dets)
    last, prev = dets[-1], dets[-2]
    dt = last.frame_id - prev.frame_id
    step_bbox = tuple((b - a) / dt for a, b in zip(prev.bbox, last.bbox))
    step_court = None
    if prev.court_xy is not None and last.court_xy is not None:
        step_court = (
            (last.court_xy[0] - prev.court_xy[0]) / dt,
            (last.court_xy[1] - prev.court_xy[1]) / dt,
        )
    for frame in range(last.frame_id + 1, hi + 1):
        steps = frame - last.frame_id
        out.append(
            _extrapolated(last, step_bbox, step_court, frame, steps, court, cfg)
        )
    return out


def cap_detections_per_frame(
    seq: SequenceData,
    court: Optional[CourtModel] = None,
    cfg: PipelineConfig = PipelineConfig(),
) -> SequenceData:
    """Limit every frame to at most ``max_players`` detections.

    Excess detections are dropped in increasing order of their tracklet's
    total on-court frame count; ties drop the larger tracklet ID first.
    """
    on_court_count = {
        tid: len(_on_court_frames(dets, court, cfg))
        for tid, dets in seq.by_tracklet.items()
    }
    drop: set[tuple[int, int]] = set()
    for frame, dets in seq.by_frame.items():
        if len(dets) <= cfg.max_players:
            continue
        # Sort candidates so the weakest (fewest on-court frames, then
        # largest ID) come first.
        order = sorted(
            dets, key=lambda d: (on_court_count[d.tracklet_id], -d.tracklet_id)
        )
        for d in order[: len(dets) - cfg.max_players]:
            drop.add((frame, d.tracklet_id))
    return seq.replace_detections(
        d for d in seq.detections if (d.frame_id, d.tracklet_id) not in drop
    )


def apply_attributes(
    seq: SequenceData, mapping: dict[int, IdentityAttributes]
) -> SequenceData:
    """Stamp per-tracklet attributes; tracklets absent from the map are
    dropped (e.g. outdoor tracklets whose jersey number failed)."""
    out = [
        replace(d, attrs=mapping[d.tracklet_id])
        for d in seq.detections
        if d.tracklet_id in mapping
    ]
    return seq.replace_detections(out)


def run_pipeline(
    seq: SequenceData,
    court: CourtModel,
    cfg: PipelineConfig = PipelineConfig(),
    *,
    identity_assigner: Optional[
        Callable[[SequenceData], dict[int, IdentityAttributes]]
    ] = None,
    collect_stages: bool = False,
) -> SequenceData | tuple[SequenceData, dict[str, SequenceData]]:
    """Run all stages in their fixed order.

    ``identity_assigner`` receives the merged sequence and returns a
    tracklet-to-attributes map (see :mod:`.identity`); when None the
    attribute stage is skipped (useful for MOT-style processing).
    """
    stages: dict[str, SequenceData] = {}

    def record(name: str, s: SequenceData) -> SequenceData:
        if collect_stages:
            stages[name] = s
        return s

    s = record("exclude_detections", exclude_detections(seq, court, cfg))
    s = record("exclude_tracklets", exclude_tracklets(s, court, cfg))
    s = record("merge_id_switches", merge_id_switches(s, court, cfg))
    if identity_assigner is not None:
        mapping = identity_assigner(s)
        s = record("attributes", apply_attributes(s, mapping))
    dets: list[Detection] = []
    for _, track in sorted(s.by_tracklet.items()):
        dets.extend(interpolate_gaps(track))
    s = record("interpolate", s.replace_detections(dets))
    dets = []
    for _, track in sorted(s.by_tracklet.items()):
        dets.extend(
            extrapolate_endpoints(track, s.frame_range, court, cfg)
        )
    s = record("extrapolate", s.replace_detections(dets))
    s = record("cap", cap_detections_per_frame(s, court, cfg))
    if collect_stages:
        return s, stages
    return s
