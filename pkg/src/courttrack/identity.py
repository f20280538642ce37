"""Attribute identification: team and role assignment for player tracklets.

Indoor sequences are identified purely from first-frame geometry (pairing
offense/defense players and labelling pairs top/left/right); outdoor
sequences combine jersey-number predictions, a start-position anchor, and
torso color-histogram similarity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Optional, Sequence

import numpy as np

from .court import CourtModel
from .trackdata import IdentityAttributes, JerseyPrediction, SequenceData

__all__ = [
    "HIST_BINS",
    "IdentityError",
    "StartContext",
    "assign_indoor_attributes",
    "assign_outdoor_attributes",
    "histogram_from_crop",
    "js_divergence",
    "torso_histogram",
]

HIST_BINS = 512  # 8 x 8 x 8 over three 8-bit color channels


class IdentityError(ValueError):
    """Raised for invalid identification inputs."""


@dataclass(frozen=True)
class StartContext:
    """How the clip begins, and the court anchor the offense starts from."""

    start_type: str  # "top_checkball" | "free_throw"
    anchor_point: tuple[float, float]

    def __post_init__(self) -> None:
        if self.start_type not in ("top_checkball", "free_throw"):
            raise IdentityError(f"invalid start_type {self.start_type!r}")

    @classmethod
    def top_checkball(cls, court: CourtModel) -> "StartContext":
        return cls("top_checkball", court.far_line_midpoint)

    @classmethod
    def free_throw(cls, court: CourtModel) -> "StartContext":
        return cls("free_throw", court.free_throw_midpoint)


def histogram_from_crop(crop: np.ndarray) -> np.ndarray:
    """L1-normalized 8x8x8 color histogram of one 8-bit RGB crop."""
    arr = np.asarray(crop)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise IdentityError(f"crop must be HxWx3, got shape {arr.shape}")
    if arr.size == 0:
        raise IdentityError("zero-pixel crop")
    q = (arr.astype(np.uint16) // 32).reshape(-1, 3)
    idx = q[:, 0] * 64 + q[:, 1] * 8 + q[:, 2]
    hist = np.bincount(idx, minlength=HIST_BINS).astype(float)
    return hist / hist.sum()


def torso_histogram(
    crops: Iterable[tuple[int, np.ndarray]],
) -> np.ndarray:
    """Median color histogram of a tracklet's torso crops.

    Per-frame histograms are computed over the first 100 frames by
    ascending frame number; the output takes the per-bin median and is
    renormalized to sum 1.
    """
    ordered = sorted(crops, key=lambda item: item[0])[:100]
    if not ordered:
        raise IdentityError("no crops supplied")
    hists = np.stack([histogram_from_crop(c) for _, c in ordered])
    med = np.median(hists, axis=0)
    total = med.sum()
    if total <= 0:
        raise IdentityError("median histogram is empty")
    return med / total


def js_divergence(h1: np.ndarray, h2: np.ndarray) -> float:
    """Jensen-Shannon divergence in nats (bounded by ln 2)."""
    p = np.asarray(h1, dtype=float)
    q = np.asarray(h2, dtype=float)
    if p.shape != q.shape:
        raise IdentityError("histogram shape mismatch")
    m = 0.5 * (p + q)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl_p = np.where(p > 0, p * np.log(p / m), 0.0)
        kl_q = np.where(q > 0, q * np.log(q / m), 0.0)
    return float(0.5 * kl_p.sum() + 0.5 * kl_q.sum())


def _dist(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def _min_cost_pairing(
    ids: Sequence[int], positions: Mapping[int, tuple[float, float]]
) -> list[tuple[int, int]]:
    """Minimum-total-distance perfect matching of 6 points into 3 pairs.

    Brute force over all 15 pairings; exact ties resolved by lexicographic
    pair order.
    """
    ids = sorted(ids)
    best: Optional[tuple[float, list[tuple[int, int]]]] = None
    for pairing in _pairings(ids):
        cost = sum(_dist(positions[a], positions[b]) for a, b in pairing)
        key = sorted(pairing)
        if best is None or cost < best[0] or (cost == best[0] and key < best[1]):
            best = (cost, key)
    assert best is not None
    return best[1]


def _pairings(ids: Sequence[int]):
    if not ids:
        yield []
        return
    first, rest = ids[0], list(ids[1:])
    for i, partner in enumerate(rest):
        remaining = rest[:i] + rest[i + 1 :]
        for sub in _pairings(remaining):
            yield [(first, partner)] + sub


def assign_indoor_attributes(
    first_frame_positions: Mapping[int, tuple[float, float]],
    court: CourtModel,
) -> dict[int, IdentityAttributes]:
    """Assign team + initial position from first-frame court geometry.

    The six players are paired by minimum total intra-pair distance; in
    each pair the member closer to the end-line midpoint defends. The pair
    whose midpoint is closest to the court's central axis is labelled top;
    the remaining pairs are left/right by lateral offset as seen from
    behind the end line looking into the court (x below the axis = left).
    """
    if len(first_frame_positions) != 6:
        raise IdentityError(
            f"expected exactly 6 first-frame tracklets, got "
            f"{len(first_frame_positions)}"
        )
    pairs = _min_cost_pairing(list(first_frame_positions), first_frame_positions)
    endline_mid = court.endline_midpoint
    axis_x = court.width / 2.0

    midpoints = []
    for a, b in pairs:
        pa, pb = first_frame_positions[a], first_frame_positions[b]
        midpoints.append(((pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0))
    order = sorted(range(3), key=lambda i: abs(midpoints[i][0] - axis_x))
    labels = [""] * 3
    labels[order[0]] = "top"
    rest = order[1:]
    rest.sort(key=lambda i: midpoints[i][0])
    labels[rest[0]] = "left"
    labels[rest[1]] = "right"

    out: dict[int, IdentityAttributes] = {}
    for (a, b), label in zip(pairs, labels):
        pa, pb = first_frame_positions[a], first_frame_positions[b]
        if _dist(pa, endline_mid) <= _dist(pb, endline_mid):
            defender, attacker = a, b
        else:
            defender, attacker = b, a
        out[defender] = IdentityAttributes(
            team="defense", initial_position=label
        )
        out[attacker] = IdentityAttributes(
            team="offense", initial_position=label
        )
    return out


def assign_outdoor_attributes(
    first_frame_positions: Mapping[int, tuple[float, float]],
    jersey_preds: Mapping[int, JerseyPrediction],
    histograms: Mapping[int, np.ndarray],
    ctx: StartContext,
) -> dict[int, IdentityAttributes]:
    """Assign team + jersey number using the start anchor and bib colors.

    Tracklets without a recognized jersey number are dropped first (this
    removes referees). The tracklet nearest the start anchor seeds the
    offense. For a top check-ball start its nearest neighbour defends and
    the two lowest-divergence histograms (w.r.t. the seed) join the
    offense; for a free-throw start the two lowest-divergence tracklets
    join the offense directly. Everyone else defends.
    """
    survivors = {
        tid: pos
        for tid, pos in first_frame_positions.items()
        if tid in jersey_preds and jersey_preds[tid].number is not None
    }
    if len(survivors) < 6:
        raise IdentityError(
            f"fewer than 6 tracklets with recognized jersey numbers "
            f"({len(survivors)})"
        )
    missing_hist = [tid for tid in survivors if tid not in histograms]
    if missing_hist:
        raise IdentityError(f"missing histograms for tracklets {missing_hist}")

    seed = min(
        survivors,
        key=lambda tid: (_dist(survivors[tid], ctx.anchor_point), tid),
    )
    offense = {seed}
    defense: set[int] = set()
    candidates = set(survivors) - {seed}
    if ctx.start_type == "top_checkball":
        nearest_def = min(
            candidates,
            key=lambda tid: (_dist(survivors[tid], survivors[seed]), tid),
        )
        defense.add(nearest_def)
        candidates.remove(nearest_def)
    ranked = sorted(
        candidates,
        key=lambda tid: (js_divergence(histograms[tid], histograms[seed]), tid),
    )
    offense.update(ranked[:2])
    defense.update(ranked[2:])

    out: dict[int, IdentityAttributes] = {}
    for tid in survivors:
        team = "offense" if tid in offense else "defense"
        out[tid] = IdentityAttributes(
            team=team, jersey_number=jersey_preds[tid].number
        )
    return out


def first_frame_positions(seq: SequenceData) -> dict[int, tuple[float, float]]:
    """Court position of each tracklet at its earliest detection."""
    out: dict[int, tuple[float, float]] = {}
    for tid, dets in seq.by_tracklet.items():
        first = dets[0]
        if first.court_xy is None:
            raise IdentityError(
                f"tracklet {tid} has no court coordinates at its first frame"
            )
        out[tid] = first.court_xy
    return out


def tracklets_at_first_frame(
    seq: SequenceData,
) -> dict[int, tuple[float, float]]:
    """Court positions of tracklets present at the clip's first frame."""
    if not seq.detections:
        raise IdentityError("empty sequence")
    t0 = min(seq.by_frame)
    out: dict[int, tuple[float, float]] = {}
    for d in seq.by_frame[t0]:
        if d.court_xy is None:
            raise IdentityError(
                f"tracklet {d.tracklet_id} has no court coordinates at "
                f"frame {t0}"
            )
        out[d.tracklet_id] = d.court_xy
    return out


def load_crop_manifest(
    stream: IO[str],
) -> dict[int, list[tuple[int, str]]]:
    """Read a crop manifest CSV ``tracklet_id,frame_id,path``."""
    out: dict[int, list[tuple[int, str]]] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = next(csv.reader([line]))
        if lineno == 1 and cells[0] == "tracklet_id":
            continue
        if len(cells) != 3:
            raise IdentityError(f"line {lineno}: expected 3 columns")
        try:
            tid, fid = int(cells[0]), int(cells[1])
        except ValueError as exc:
            raise IdentityError(f"line {lineno}: {exc}") from None
        out.setdefault(tid, []).append((fid, cells[2]))
    return out


def histograms_from_manifest(
    manifest: Mapping[int, list[tuple[int, str]]],
) -> dict[int, np.ndarray]:
    """Compute per-tracklet torso histograms from crop image files."""
    from PIL import Image

    out: dict[int, np.ndarray] = {}
    for tid, entries in manifest.items():
        crops = []
        for fid, path in entries:
            with Image.open(path) as img:
                crops.append((fid, np.asarray(img.convert("RGB"))))
        out[tid] = torso_histogram(crops)
    return out
