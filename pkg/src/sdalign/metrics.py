"""Alignment and diversity diagnostics.

Three independent views of how well a synthetic corpus matches the real one:
a sliced Wasserstein distance between embedding clouds, the convex-hull
coverage curve of a sampling order in 2-D projected space, and plain
vocabulary size.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import wasserstein_distance

from .corpus import Corpus, EmbeddingMatrix

DEFAULT_SLICES = 128
_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


@dataclass(frozen=True)
class Point2D:
    x: float
    y: float
    source_index: int

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError(f"non-finite coordinates for point {self.source_index}")


def _as_array(e: EmbeddingMatrix | np.ndarray) -> np.ndarray:
    arr = e.data if isinstance(e, EmbeddingMatrix) else np.asarray(e)
    return np.asarray(arr, dtype=np.float64)


def _points_array(points: Sequence[Point2D] | np.ndarray) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return np.array([[p.x, p.y] for p in points], dtype=np.float64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# sliced Wasserstein
# ---------------------------------------------------------------------------


def sliced_wasserstein(e_a, e_b, n_slices: int = DEFAULT_SLICES, seed: int = 0) -> float:
    """Average 1-D Wasserstein-1 distance over seeded random unit directions.

    Sample sizes may differ; each slice uses the closed-form quantile
    matching of the two projected empirical distributions. Symmetric in its
    arguments and invariant to translating both sets by the same vector.
    """
    a = _as_array(e_a)
    b = _as_array(e_b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("both embedding sets must be non-empty")
    if n_slices < 1:
        raise ValueError(f"n_slices must be >= 1, got {n_slices}")
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(n_slices):
        direction = rng.standard_normal(a.shape[1])
        norm = np.linalg.norm(direction)
        while norm < 1e-12:
            direction = rng.standard_normal(a.shape[1])
            norm = np.linalg.norm(direction)
        direction /= norm
        total += wasserstein_distance(a @ direction, b @ direction)
    return total / n_slices


# ---------------------------------------------------------------------------
# convex hulls
# ---------------------------------------------------------------------------


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Sequence[Point2D] | np.ndarray) -> np.ndarray:
    """Counter-clockwise convex hull by monotone chain.

    Degenerate inputs (fewer than 3 distinct points, or all collinear) return
    an empty (0, 2) array, which has area 0.
    """
    pts = _points_array(points)
    uniq = np.unique(pts, axis=0) if len(pts) else pts
    if len(uniq) < 3:
        return np.empty((0, 2))
    order = np.lexsort((uniq[:, 1], uniq[:, 0]))
    p = uniq[order]
    lower: list[np.ndarray] = []
    for q in p:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], q) <= 0:
            lower.pop()
        lower.append(q)
    upper: list[np.ndarray] = []
    for q in p[::-1]:
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], q) <= 0:
            upper.pop()
        upper.append(q)
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        return np.empty((0, 2))
    return hull


def polygon_area(polygon: np.ndarray) -> float:
    """Shoelace area of a simple polygon given as a vertex list."""
    if len(polygon) < 3:
        return 0.0
    x = polygon[:, 0]
    y = polygon[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, 1)) - np.dot(y, np.roll(x, 1))))


def _point_in_convex(polygon: np.ndarray, point: np.ndarray, eps: float = 1e-12) -> bool:
    # CCW polygon: inside (or on boundary) iff the point is left of every edge
    for i in range(len(polygon)):
        if _cross(polygon[i], polygon[(i + 1) % len(polygon)], point) < -eps:
            return False
    return True


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True

    def on_segment(a, b, c):
        return (
            min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12
            and min(a[1], b[1]) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12
        )

    if abs(d1) < 1e-12 and on_segment(q1, q2, p1):
        return True
    if abs(d2) < 1e-12 and on_segment(q1, q2, p2):
        return True
    if abs(d3) < 1e-12 and on_segment(p1, p2, q1):
        return True
    if abs(d4) < 1e-12 and on_segment(p1, p2, q2):
        return True
    return False


def hulls_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """True if the convex polygons touch: an edge crossing or a contained vertex."""
    if len(a) < 3 or len(b) < 3:
        return False
    for i in range(len(a)):
        for j in range(len(b)):
            if _segments_intersect(a[i], a[(i + 1) % len(a)], b[j], b[(j + 1) % len(b)]):
                return True
    if _point_in_convex(b, a[0]) or _point_in_convex(a, b[0]):
        return True
    return False


class HullSet:
    """Buffer of pairwise non-overlapping convex hulls; inserts merge to a fixed point."""

    def __init__(self):
        self.hulls: list[np.ndarray] = []

    @property
    def total_area(self) -> float:
        return float(sum(polygon_area(h) for h in self.hulls))

    def insert(self, hull: np.ndarray) -> None:
        if len(hull) < 3:
            return
        merged = hull
        changed = True
        while changed:
            changed = False
            for i, existing in enumerate(self.hulls):
                if hulls_overlap(merged, existing):
                    merged = convex_hull(np.vstack([merged, existing]))
                    del self.hulls[i]
                    changed = True
                    break
        self.hulls.append(merged)


@dataclass(frozen=True)
class CoverageReport:
    """Coverage-rate series for a sampling order; rates never decrease."""

    rates: tuple[float, ...]
    k: int
    steps: int
    projection: Literal["precomputed", "pca"] = "pca"

    def rate_at(self, step: int) -> float:
        """Rate after ``step`` sampling steps (1-based); short runs hold their last value."""
        if not self.rates:
            return 0.0
        return self.rates[min(step, len(self.rates)) - 1]


def _knn_indices(tree: cKDTree, coords: np.ndarray, target: int, k: int) -> list[int]:
    """k nearest neighbors of coords[target] excluding itself, distance ties by lowest index."""
    n = len(coords)
    k = min(k, n - 1)
    if k <= 0:
        return []
    dists, _ = tree.query(coords[target], k=k + 1)
    radius = float(np.max(dists))
    candidates = tree.query_ball_point(coords[target], radius + 1e-12)
    candidates = [c for c in candidates if c != target]
    d = np.linalg.norm(coords[candidates] - coords[target], axis=1)
    order = np.lexsort((candidates, d))
    return [candidates[i] for i in order[:k]]


def coverage_curve(
    points: Sequence[Point2D],
    sample_order: Sequence[int],
    k: int,
    steps: int,
) -> CoverageReport:
    """Convex-hull coverage of the full point set as samples accumulate.

    Per step, the hull of the sampled point and its k nearest original points
    is inserted into the buffer (merging any hulls it overlaps), and the rate
    is the buffer area over the hull area of all original points.
    """
    coords = _points_array(points)
    order = [int(i) for i in sample_order]
    if len(set(order)) != len(order):
        raise ValueError("sample_order indices must be distinct")
    if any(i < 0 or i >= len(coords) for i in order):
        raise ValueError("sample_order index out of range")
    if steps > len(order):
        raise ValueError(f"steps={steps} exceeds sample_order length {len(order)}")
    total = polygon_area(convex_hull(coords))
    tree = cKDTree(coords)
    buffer = HullSet()
    rates: list[float] = []
    for t in range(steps):
        i = order[t]
        neigh = _knn_indices(tree, coords, i, k)
        buffer.insert(convex_hull(coords[[i, *neigh]]))
        rates.append(buffer.total_area / total if total > 0 else 0.0)
    return CoverageReport(rates=tuple(rates), k=k, steps=steps)


# ---------------------------------------------------------------------------
# 2-D projection
# ---------------------------------------------------------------------------


def project_2d(
    e: EmbeddingMatrix | np.ndarray,
    mode: Literal["pca", "precomputed"] = "pca",
    coords_path: str | Path | None = None,
) -> list[Point2D]:
    """Reduce embeddings to 2-D points for the coverage experiment.

    ``pca`` takes the two leading principal-component scores with a
    deterministic sign convention (first nonzero loading positive);
    ``precomputed`` loads external coordinates, e.g. from a t-SNE run.
    """
    arr = _as_array(e)
    if mode == "precomputed":
        if coords_path is None:
            raise ValueError("precomputed mode requires coords_path")
        coords = load_coords(coords_path)
        if len(coords) != arr.shape[0]:
            raise ValueError(f"coords rows {len(coords)} do not match embedding rows {arr.shape[0]}")
        return coords
    if arr.shape[0] < 2:
        raise ValueError("pca mode needs at least 2 rows")
    centered = arr - arr.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    scores = np.zeros((arr.shape[0], 2))
    for comp in range(min(2, vt.shape[0])):
        loading = vt[comp]
        nz = np.flatnonzero(np.abs(loading) > 1e-12)
        flip = -1.0 if len(nz) and loading[nz[0]] < 0 else 1.0
        scores[:, comp] = flip * (centered @ loading)
    return [Point2D(x=float(p[0]), y=float(p[1]), source_index=i) for i, p in enumerate(scores)]


def load_coords(path: str | Path) -> list[Point2D]:
    """Read "x,y" CSV rows aligned to corpus order."""
    points = []
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].strip().lower() == "x":
                continue
            points.append(Point2D(x=float(row[0]), y=float(row[1]), source_index=len(points)))
    return points


def save_coords(points: Sequence[Point2D], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        for p in points:
            writer.writerow([repr(p.x), repr(p.y)])


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------


def vocabulary_size(corpus: Corpus) -> int:
    """Distinct lowercased tokens, split on any non-alphanumeric character."""
    vocab: set[str] = set()
    for rec in corpus.records:
        vocab.update(t for t in _TOKEN_SPLIT.split(rec.text.lower()) if t)
    return len(vocab)
