"""Data model and file I/O for tracking, pose, and jersey-number data.

The canonical on-disk tracking format is a MOT-challenge-like CSV extended
with court coordinates and identity attributes:

    #frames=N
    #mode=indoor|outdoor|drone
    frame_id,tracklet_id,x,y,w,h[,court_x,court_y,team,role,conf]

Bounding boxes are top-left corner + width/height in image pixels. The
``role`` column carries ``top``/``left``/``right`` for indoor sequences and
a jersey number for outdoor ones. All types are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, Optional, Sequence

__all__ = [
    "INDOOR",
    "OUTDOOR",
    "DRONE",
    "KEYPOINT_NAMES",
    "Detection",
    "IdentityAttributes",
    "JerseyPrediction",
    "PoseFrame",
    "SequenceData",
    "TrackDataError",
    "map_coco17_to_10",
    "parse_jersey_csv",
    "parse_pose_csv",
    "parse_tracking_csv",
    "serialize_tracking_csv",
]

INDOOR = "indoor"
OUTDOOR = "outdoor"
DRONE = "drone"
_MODES = (INDOOR, OUTDOOR, DRONE)

# Reduced 10-keypoint skeleton: head, upper limbs, hip midpoint, ankles.
KEYPOINT_NAMES = (
    "head",
    "l_shoulder",
    "r_shoulder",
    "l_elbow",
    "r_elbow",
    "l_wrist",
    "r_wrist",
    "center",
    "l_ankle",
    "r_ankle",
)

# Standard whole-body 17-keypoint order used by upstream pose models.
COCO17_NAMES = (
    "nose",
    "l_eye",
    "r_eye",
    "l_ear",
    "r_ear",
    "l_shoulder",
    "r_shoulder",
    "l_elbow",
    "r_elbow",
    "l_wrist",
    "r_wrist",
    "l_hip",
    "r_hip",
    "l_knee",
    "r_knee",
    "l_ankle",
    "r_ankle",
)


class TrackDataError(ValueError):
    """Raised for malformed input files or invariant violations."""


@dataclass(frozen=True)
class IdentityAttributes:
    """Identification payload of a player detection.

    Indoor sequences identify a player by ``team`` + ``initial_position``;
    outdoor sequences by ``team`` + ``jersey_number``. The two role fields
    are mutually exclusive.
    """

    team: str  # "offense" | "defense"
    initial_position: Optional[str] = None  # "top" | "left" | "right"
    jersey_number: Optional[int] = None

    def __post_init__(self) -> None:
        if self.team not in ("offense", "defense"):
            raise TrackDataError(f"invalid team {self.team!r}")
        has_pos = self.initial_position is not None
        has_num = self.jersey_number is not None
        if has_pos == has_num:
            raise TrackDataError(
                "exactly one of initial_position / jersey_number must be set"
            )
        if has_pos and self.initial_position not in ("top", "left", "right"):
            raise TrackDataError(
                f"invalid initial_position {self.initial_position!r}"
            )
        if has_num and self.jersey_number < 0:
            raise TrackDataError("jersey_number must be non-negative")

    @property
    def mode(self) -> str:
        return INDOOR if self.initial_position is not None else OUTDOOR


@dataclass(frozen=True)
class Detection:
    """One bounding box at one frame, optionally court-localized."""

    frame_id: int
    tracklet_id: int
    bbox: tuple[float, float, float, float]  # (x, y, w, h), top-left corner
    court_xy: Optional[tuple[float, float]] = None
    attrs: Optional[IdentityAttributes] = None
    confidence: Optional[float] = None

    def __post_init__(self) -> None:
        if self.frame_id < 0:
            raise TrackDataError(f"negative frame_id {self.frame_id}")
        _, _, w, h = self.bbox
        if w <= 0 or h <= 0:
            raise TrackDataError(
                f"non-positive bbox dimensions {w}x{h} "
                f"(frame {self.frame_id}, tracklet {self.tracklet_id})"
            )
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise TrackDataError(f"confidence {self.confidence} outside [0, 1]")

    def anchor(self) -> tuple[float, float]:
        """Midpoint of the bottom edge of the bbox (ground contact point)."""
        x, y, w, h = self.bbox
        return (x + w / 2.0, y + h)


@dataclass(frozen=True)
class SequenceData:
    """Ground truth or predictions for one video clip.

    ``total_frames`` is the total frame count of the clip; frames may be
    missing from ``detections`` (e.g. trailing frames with no players), so
    it can exceed the span of observed frame ids.
    """

    mode: str
    detections: tuple[Detection, ...]
    total_frames: Optional[int] = None
    frame_range: Optional[tuple[int, int]] = None

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise TrackDataError(f"invalid mode {self.mode!r}")
        dets = tuple(self.detections)
        object.__setattr__(self, "detections", dets)
        seen: set[tuple[int, int]] = set()
        for d in dets:
            key = (d.frame_id, d.tracklet_id)
            if key in seen:
                raise TrackDataError(
                    f"duplicate detection for frame {d.frame_id}, "
                    f"tracklet {d.tracklet_id}"
                )
            seen.add(key)
        if dets:
            lo = min(d.frame_id for d in dets)
            hi = max(d.frame_id for d in dets)
        else:
            lo, hi = 0, 0
        if self.frame_range is None:
            object.__setattr__(self, "frame_range", (lo, hi))
        else:
            rlo, rhi = self.frame_range
            if dets and (lo < rlo or hi > rhi):
                raise TrackDataError(
                    f"detections span [{lo}, {hi}] outside frame_range "
                    f"[{rlo}, {rhi}]"
                )
        n_distinct = len({d.frame_id for d in dets})
        if self.total_frames is None:
            rlo, rhi = self.frame_range
            object.__setattr__(self, "total_frames", rhi - rlo + 1)
        elif self.total_frames < n_distinct:
            raise TrackDataError(
                f"total_frames={self.total_frames} below distinct frame "
                f"count {n_distinct}"
            )

    @cached_property
    def by_frame(self) -> dict[int, tuple[Detection, ...]]:
        out: dict[int, list[Detection]] = {}
        for d in self.detections:
            out.setdefault(d.frame_id, []).append(d)
        return {f: tuple(v) for f, v in out.items()}

    @cached_property
    def by_tracklet(self) -> dict[int, tuple[Detection, ...]]:
        out: dict[int, list[Detection]] = {}
        for d in self.detections:
            out.setdefault(d.tracklet_id, []).append(d)
        return {
            t: tuple(sorted(v, key=lambda d: d.frame_id))
            for t, v in out.items()
        }

    def tracklet_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.by_tracklet))

    def frames(self) -> tuple[int, ...]:
        return tuple(sorted(self.by_frame))

    def replace_detections(self, detections: Iterable[Detection]) -> "SequenceData":
        """New sequence with the same header but different detections."""
        return SequenceData(
            mode=self.mode,
            detections=tuple(detections),
            total_frames=self.total_frames,
            frame_range=self.frame_range,
        )


@dataclass(frozen=True)
class PoseFrame:
    """10-keypoint pose of one player at one frame.

    ``points`` follows :data:`KEYPOINT_NAMES` order; ``visible[i]`` is
    False for occluded or unannotated keypoints, which are excluded from
    metric denominators.
    """

    frame_id: int
    player_id: int
    points: tuple[tuple[float, float], ...]
    visible: tuple[bool, ...] = field(default=())

    def __post_init__(self) -> None:
        pts = tuple((float(x), float(y)) for x, y in self.points)
        if len(pts) != len(KEYPOINT_NAMES):
            raise TrackDataError(
                f"expected {len(KEYPOINT_NAMES)} keypoints, got {len(pts)}"
            )
        object.__setattr__(self, "points", pts)
        vis = tuple(self.visible) or (True,) * len(KEYPOINT_NAMES)
        if len(vis) != len(KEYPOINT_NAMES):
            raise TrackDataError("visibility length mismatch")
        object.__setattr__(self, "visible", tuple(bool(v) for v in vis))

    def point(self, name: str) -> tuple[float, float]:
        return self.points[KEYPOINT_NAMES.index(name)]

    def is_visible(self, name: str) -> bool:
        return self.visible[KEYPOINT_NAMES.index(name)]


@dataclass(frozen=True)
class JerseyPrediction:
    """Per-tracklet jersey number; ``number is None`` = recognition failed."""

    tracklet_id: int
    number: Optional[int] = None

    def __post_init__(self) -> None:
        if self.number is not None and self.number < 0:
            raise TrackDataError("jersey number must be non-negative")


_HEADER_BASE = ["frame_id", "tracklet_id", "x", "y", "w", "h"]
_HEADER_OPT = ["court_x", "court_y", "team", "role", "conf"]


def _parse_role(team: str, role: str, mode: str, lineno: int) -> IdentityAttributes:
    if mode == INDOOR:
        return IdentityAttributes(team=team, initial_position=role)
    if mode == OUTDOOR:
        try:
            number = int(role)
        except ValueError:
            raise TrackDataError(
                f"line {lineno}: outdoor role must be a jersey number, "
                f"got {role!r}"
            ) from None
        return IdentityAttributes(team=team, jersey_number=number)
    raise TrackDataError(f"line {lineno}: attributes not supported in mode {mode!r}")


def parse_tracking_csv(stream: IO[str], mode: Optional[str] = None) -> SequenceData:
    """Parse a tracking CSV into a validated :class:`SequenceData`.

    ``#frames=N`` and ``#mode=...`` pragma lines before the header are
    honoured; a ``#mode`` pragma takes precedence over the ``mode``
    argument. Errors report the 1-based line number of the offending row.
    """
    total_frames: Optional[int] = None
    header: Optional[list[str]] = None
    detections: list[Detection] = []
    lineno = 0
    for raw in stream:
        lineno += 1
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            key = key.strip().lower()
            if key == "frames":
                try:
                    total_frames = int(value)
                except ValueError:
                    raise TrackDataError(
                        f"line {lineno}: bad #frames pragma {value!r}"
                    ) from None
            elif key == "mode":
                mode = value.strip().lower()
            continue
        fields = next(csv.reader([line]))
        if header is None:
            if fields[: len(_HEADER_BASE)] != _HEADER_BASE:
                raise TrackDataError(
                    f"line {lineno}: unexpected header {fields!r}"
                )
            for extra in fields[len(_HEADER_BASE):]:
                if extra not in _HEADER_OPT:
                    raise TrackDataError(
                        f"line {lineno}: unknown column {extra!r}"
                    )
            header = fields
            continue
        if len(fields) != len(header):
            raise TrackDataError(
                f"line {lineno}: expected {len(header)} columns, "
                f"got {len(fields)}"
            )
        row = dict(zip(header, fields))
        try:
            frame_id = int(row["frame_id"])
            tracklet_id = int(row["tracklet_id"])
            bbox = tuple(float(row[k]) for k in ("x", "y", "w", "h"))
        except ValueError as exc:
            raise TrackDataError(f"line {lineno}: {exc}") from None
        court_xy = None
        if row.get("court_x", "") != "" and row.get("court_y", "") != "":
            try:
                court_xy = (float(row["court_x"]), float(row["court_y"]))
            except ValueError as exc:
                raise TrackDataError(f"line {lineno}: {exc}") from None
        attrs = None
        if row.get("team", "") != "":
            if mode is None:
                raise TrackDataError(
                    f"line {lineno}: attribute columns present but no mode "
                    "declared (pragma or argument)"
                )
            attrs = _parse_role(row["team"], row.get("role", ""), mode, lineno)
        confidence = None
        if row.get("conf", "") != "":
            try:
                confidence = float(row["conf"])
            except ValueError as exc:
                raise TrackDataError(f"line {lineno}: {exc}") from None
        try:
            detections.append(
                Detection(
                    frame_id=frame_id,
                    tracklet_id=tracklet_id,
                    bbox=bbox,  # type: ignore[arg-type]
                    court_xy=court_xy,
                    attrs=attrs,
                    confidence=confidence,
                )
            )
        except TrackDataError as exc:
            raise TrackDataError(f"line {lineno}: {exc}") from None
    if header is None:
        raise TrackDataError("missing header row")
    if mode is None:
        mode = DRONE if not any(d.attrs for d in detections) else None
    if mode is None:
        raise TrackDataError("sequence mode not declared")
    try:
        return SequenceData(
            mode=mode, detections=tuple(detections), total_frames=total_frames
        )
    except TrackDataError as exc:
        raise TrackDataError(str(exc)) from None


def _fmt(v: float) -> str:
    return repr(float(v))


def serialize_tracking_csv(seq: SequenceData, stream: IO[str]) -> None:
    """Inverse of :func:`parse_tracking_csv` (exact round-trip)."""
    stream.write(f"#frames={seq.total_frames}\n")
    stream.write(f"#mode={seq.mode}\n")
    stream.write(",".join(_HEADER_BASE + _HEADER_OPT) + "\n")
    for d in seq.detections:
        x, y, w, h = d.bbox
        cells = [
            str(d.frame_id),
            str(d.tracklet_id),
            _fmt(x),
            _fmt(y),
            _fmt(w),
            _fmt(h),
        ]
        if d.court_xy is not None:
            cells += [_fmt(d.court_xy[0]), _fmt(d.court_xy[1])]
        else:
            cells += ["", ""]
        if d.attrs is not None:
            role = (
                d.attrs.initial_position
                if d.attrs.initial_position is not None
                else str(d.attrs.jersey_number)
            )
            cells += [d.attrs.team, role]
        else:
            cells += ["", ""]
        cells.append("" if d.confidence is None else _fmt(d.confidence))
        stream.write(",".join(cells) + "\n")


def tracking_csv_string(seq: SequenceData) -> str:
    buf = io.StringIO()
    serialize_tracking_csv(seq, buf)
    return buf.getvalue()


def parse_pose_csv(stream: IO[str]) -> tuple[PoseFrame, ...]:
    """Parse a pose CSV: ``frame_id,player_id`` then 10 (kx, ky, kv) triplets.

    ``kv == 0`` marks an invisible keypoint.
    """
    n_cols = 2 + 3 * len(KEYPOINT_NAMES)
    poses: list[PoseFrame] = []
    lineno = 0
    for raw in stream:
        lineno += 1
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if lineno == 1 and fields and fields[0] == "frame_id":
            continue
        if len(fields) != n_cols:
            raise TrackDataError(
                f"line {lineno}: expected {n_cols} columns, got {len(fields)}"
            )
        try:
            frame_id = int(fields[0])
            player_id = int(fields[1])
            values = [float(v) for v in fields[2:]]
        except ValueError as exc:
            raise TrackDataError(f"line {lineno}: {exc}") from None
        points = []
        visible = []
        for i in range(len(KEYPOINT_NAMES)):
            kx, ky, kv = values[3 * i : 3 * i + 3]
            points.append((kx, ky))
            visible.append(kv != 0)
        poses.append(
            PoseFrame(
                frame_id=frame_id,
                player_id=player_id,
                points=tuple(points),
                visible=tuple(visible),
            )
        )
    return tuple(poses)


def serialize_pose_csv(poses: Sequence[PoseFrame], stream: IO[str]) -> None:
    cols = ["frame_id", "player_id"]
    for name in KEYPOINT_NAMES:
        cols += [f"{name}_x", f"{name}_y", f"{name}_v"]
    stream.write(",".join(cols) + "\n")
    for p in poses:
        cells = [str(p.frame_id), str(p.player_id)]
        for (x, y), v in zip(p.points, p.visible):
            cells += [_fmt(x), _fmt(y), "1" if v else "0"]
        stream.write(",".join(cells) + "\n")


def parse_jersey_csv(stream: IO[str]) -> dict[int, JerseyPrediction]:
    """Parse jersey predictions: ``tracklet_id,number`` (empty = failed)."""
    preds: dict[int, JerseyPrediction] = {}
    lineno = 0
    for raw in stream:
        lineno += 1
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if lineno == 1 and fields and fields[0] == "tracklet_id":
            continue
        if len(fields) != 2:
            raise TrackDataError(f"line {lineno}: expected 2 columns")
        try:
            tid = int(fields[0])
            number = int(fields[1]) if fields[1] != "" else None
        except ValueError as exc:
            raise TrackDataError(f"line {lineno}: {exc}") from None
        if tid in preds:
            raise TrackDataError(f"line {lineno}: duplicate tracklet {tid}")
        preds[tid] = JerseyPrediction(tracklet_id=tid, number=number)
    return preds


def map_coco17_to_10(
    keypoints17: Sequence[tuple[float, float]],
) -> tuple[tuple[float, float], ...]:
    """Reduce a 17-keypoint whole-body pose to the 10-keypoint skeleton.

    The nose becomes the head reference point and the hip midpoint becomes
    the center; eyes, ears, and knees are dropped.
    """
    if len(keypoints17) != 17:
        raise TrackDataError(
            f"expected 17 keypoints, got {len(keypoints17)}"
        )
    kp = {name: tuple(map(float, pt)) for name, pt in zip(COCO17_NAMES, keypoints17)}
    l_hip, r_hip = kp["l_hip"], kp["r_hip"]
    center = ((l_hip[0] + r_hip[0]) / 2.0, (l_hip[1] + r_hip[1]) / 2.0)
    return (
        kp["nose"],
        kp["l_shoulder"],
        kp["r_shoulder"],
        kp["l_elbow"],
        kp["r_elbow"],
        kp["l_wrist"],
        kp["r_wrist"],
        center,
        kp["l_ankle"],
        kp["r_ankle"],
    )
