"""Court geometry: homography fitting, projection, and zone predicates.

Court coordinate convention: the end line lies along the x-axis at y = 0,
y increases into the court, x in [0, width], y in [0, depth]. Width is the
length of the end line (15.05 m for both standard court presets).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .trackdata import Detection

__all__ = [
    "CourtModel",
    "GeometryError",
    "Homography",
    "fit_homography",
    "indoor_court",
    "load_correspondences_csv",
    "outdoor_court",
    "project_detection",
    "project_sequence",
    "reprojection_rmse",
    "zone_test",
]

ZONES = ("on_court", "outside_3m", "endline_band", "coffin_corner")


class GeometryError(ValueError):
    """Raised for degenerate geometry or invalid projective input."""


@dataclass(frozen=True)
class CourtModel:
    """Court dimensions and key (paint area) geometry in meters.

    The paint area defaults to the FIBA key: 4.9 m wide, extending 5.8 m
    into the court from the end line, centered on the court's long axis.
    ``both_endline_bands`` enables the referee band test at the far line as
    well (full-court setups); half-court setups use only the y = 0 line.
    """

    depth: float
    width: float
    paint_width: float = 4.9
    paint_depth: float = 5.8
    both_endline_bands: bool = False

    def __post_init__(self) -> None:
        if self.depth <= 0 or self.width <= 0:
            raise GeometryError("court dimensions must be positive")
        if not (0 < self.paint_width <= self.width):
            raise GeometryError("paint width outside court")
        if not (0 < self.paint_depth <= self.depth):
            raise GeometryError("paint depth outside court")

    @property
    def paint_x_range(self) -> tuple[float, float]:
        half = self.paint_width / 2.0
        return (self.width / 2.0 - half, self.width / 2.0 + half)

    @property
    def center(self) -> tuple[float, float]:
        return (self.width / 2.0, self.depth / 2.0)

    @property
    def endline_midpoint(self) -> tuple[float, float]:
        return (self.width / 2.0, 0.0)

    @property
    def far_line_midpoint(self) -> tuple[float, float]:
        """Midpoint of the outer court line parallel to the end line."""
        return (self.width / 2.0, self.depth)

    @property
    def free_throw_midpoint(self) -> tuple[float, float]:
        return (self.width / 2.0, self.paint_depth)

    def distance_to_rect(self, pt: Sequence[float]) -> float:
        """Euclidean distance to the court rectangle (0 inside)."""
        x, y = float(pt[0]), float(pt[1])
        dx = max(0.0 - x, 0.0, x - self.width)
        dy = max(0.0 - y, 0.0, y - self.depth)
        return float(np.hypot(dx, dy))

    def clamp(self, pt: Sequence[float], buffer_m: float = 0.0) -> tuple[float, float]:
        """Clamp a point to the court rectangle expanded by ``buffer_m``."""
        x = min(max(float(pt[0]), -buffer_m), self.width + buffer_m)
        y = min(max(float(pt[1]), -buffer_m), self.depth + buffer_m)
        return (x, y)


def indoor_court() -> CourtModel:
    """Half court used for the indoor fixed-camera setup (9.50 x 15.05 m)."""
    return CourtModel(depth=9.50, width=15.05)


def outdoor_court() -> CourtModel:
    """Outdoor 3x3 court (11.05 x 15.05 m)."""
    return CourtModel(depth=11.05, width=15.05)


def zone_test(
    court: CourtModel,
    pt: Sequence[float],
    zone: str,
    *,
    outer_m: float = 3.0,
    inner_m: float = 1.0,
    coffin_endline_dist_m: float = 10.0,
) -> bool:
    """Evaluate a court-zone predicate for a point in court coordinates.

    - ``on_court``: inside the court rectangle (edges inclusive).
    - ``outside_3m``: strictly more than ``outer_m`` from the rectangle.
    - ``endline_band``: in the strip from ``outer_m`` outside to ``inner_m``
      inside an end line, spanning the court width plus the lateral margin.
    - ``coffin_corner``: laterally outside both paint-extension lines and
      strictly farther than ``coffin_endline_dist_m`` from the end line.
    """
    x, y = float(pt[0]), float(pt[1])
    if zone == "on_court":
        return 0.0 <= x <= court.width and 0.0 <= y <= court.depth
    if zone == "outside_3m":
        return court.distance_to_rect(pt) > outer_m
    if zone == "endline_band":
        if not (-outer_m <= x <= court.width + outer_m):
            return False
        if -outer_m <= y <= inner_m:
            return True
        if court.both_endline_bands:
            return court.depth - inner_m <= y <= court.depth + outer_m
        return False
    if zone == "coffin_corner":
        px_lo, px_hi = court.paint_x_range
        lateral_out = x < px_lo or x > px_hi
        return lateral_out and y > coffin_endline_dist_m
    raise GeometryError(f"unknown zone {zone!r}")


@dataclass(frozen=True)
class Homography:
    """3x3 projective map from image plane to court plane, H[2][2] = 1."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise GeometryError(f"homography must be 3x3, got {m.shape}")
        if abs(m[2, 2]) < 1e-12:
            raise GeometryError("homography has vanishing scale entry")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-12:
            raise GeometryError("homography is singular")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def apply(self, pt: Sequence[float]) -> tuple[float, float]:
        """Map a single point, dehomogenizing the result."""
        v = self.matrix @ np.array([pt[0], pt[1], 1.0])
        if abs(v[2]) < 1e-12:
            raise GeometryError(f"point {tuple(pt)} maps to infinity")
        return (float(v[0] / v[2]), float(v[1] / v[2]))

    def apply_many(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        homo = np.hstack([pts, np.ones((len(pts), 1))])
        mapped = homo @ self.matrix.T
        w = mapped[:, 2]
        if np.any(np.abs(w) < 1e-12):
            raise GeometryError("a point maps to infinity")
        return mapped[:, :2] / w[:, None]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def to_json(self) -> list[list[float]]:
        return [[float(v) for v in row] for row in self.matrix]

    @classmethod
    def from_json(cls, rows: Sequence[Sequence[float]]) -> "Homography":
        return cls(np.array(rows, dtype=float))


def _normalization(pts: np.ndarray) -> np.ndarray:
    """Hartley normalization: centroid to origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    dists = np.linalg.norm(pts - centroid, axis=1)
    mean_dist = dists.mean()
    scale = np.sqrt(2.0) / mean_dist if mean_dist > 1e-12 else 1.0
    return np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def fit_homography(
    correspondences: Sequence[tuple[Sequence[float], Sequence[float]]],
) -> Homography:
    """Fit an image-to-court homography from point correspondences.

    Direct linear transform with Hartley normalization; least squares over
    all pairs when more than 4 are given. Requires at least 4
    correspondences in non-degenerate configuration.
    """
    if len(correspondences) < 4:
        raise GeometryError(
            f"need at least 4 correspondences, got {len(correspondences)}"
        )
    src = np.array([c[0] for c in correspondences], dtype=float)
    dst = np.array([c[1] for c in correspondences], dtype=float)
    t_src = _normalization(src)
    t_dst = _normalization(dst)
    src_n = (np.hstack([src, np.ones((len(src), 1))]) @ t_src.T)[:, :2]
    dst_n = (np.hstack([dst, np.ones((len(dst), 1))]) @ t_dst.T)[:, :2]
    rows = []
    for (sx, sy), (dx, dy) in zip(src_n, dst_n):
        rows.append([-sx, -sy, -1, 0, 0, 0, dx * sx, dx * sy, dx])
        rows.append([0, 0, 0, -sx, -sy, -1, dy * sx, dy * sy, dy])
    a = np.array(rows)
    _, s, vt = np.linalg.svd(a)
    # Rank must be 8 for a unique (up to scale) solution.
    if s[-2] < 1e-9 * s[0]:
        raise GeometryError("degenerate correspondence configuration")
    h_n = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_n @ t_src
    if abs(h[2, 2]) < 1e-12:
        raise GeometryError("fitted homography has vanishing scale entry")
    return Homography(h)


def reprojection_rmse(
    h: Homography,
    correspondences: Sequence[tuple[Sequence[float], Sequence[float]]],
) -> float:
    src = np.array([c[0] for c in correspondences], dtype=float)
    dst = np.array([c[1] for c in correspondences], dtype=float)
    mapped = h.apply_many(src)
    return float(np.sqrt(np.mean(np.sum((mapped - dst) ** 2, axis=1))))


def project_detection(h: Homography, det: Detection) -> tuple[float, float]:
    """Court coordinates of a detection's bottom-edge midpoint."""
    return h.apply(det.anchor())


def project_sequence(h: Homography, seq):
    """Return a copy of ``seq`` with court coordinates from ``h``."""
    from dataclasses import replace

    return seq.replace_detections(
        replace(d, court_xy=project_detection(h, d)) for d in seq.detections
    )


def load_correspondences_csv(
    stream: IO[str],
) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Read ``image_x,image_y,court_x,court_y`` rows (optional header)."""
    out = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = line.split(",")
        if lineno == 1 and cells[0] == "image_x":
            continue
        if len(cells) != 4:
            raise GeometryError(f"line {lineno}: expected 4 columns")
        try:
            ix, iy, cx, cy = (float(c) for c in cells)
        except ValueError as exc:
            raise GeometryError(f"line {lineno}: {exc}") from None
        out.append(((ix, iy), (cx, cy)))
    return out


def save_homography_json(h: Homography, stream: IO[str], rmse: float | None = None) -> None:
    payload: dict = {"H": h.to_json()}
    if rmse is not None:
        payload["reprojection_rmse"] = rmse
    json.dump(payload, stream, indent=2)
    stream.write("\n")


def load_homography_json(stream: IO[str]) -> Homography:
    payload = json.load(stream)
    return Homography.from_json(payload["H"])
