"""Two-objective Pareto utilities: dominance, hypervolume and the UHVI fitness.

All objectives are minimized. ``a`` dominates ``b`` when ``a <= b``
componentwise with at least one strict inequality; equal vectors do not
dominate each other.
"""

from __future__ import annotations

import bisect
import math
from typing import List, Sequence, Tuple

import numpy as np


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return np.zeros((0, 2))
    pts = pts.reshape(-1, pts.shape[-1])
    if pts.shape[1] != 2:
        raise ValueError(f"only two objectives are supported, got {pts.shape[1]}")
    return pts


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def weakly_dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    return bool(np.all(np.asarray(a) <= np.asarray(b)))


def nondominated_2d(points) -> np.ndarray:
    """Non-dominated subset sorted by the first objective; duplicates kept once."""
    pts = _as_points(points)
    if len(pts) == 0:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    f2 = pts[:, 1]
    best_before = np.empty_like(f2)
    best_before[0] = math.inf
    np.minimum.accumulate(f2[:-1], out=best_before[1:])
    return pts[f2 < best_before]


def _front_in_box(points, ref: Sequence[float]) -> np.ndarray:
    pts = _as_points(points)
    inside = (pts[:, 0] < ref[0]) & (pts[:, 1] < ref[1])
    return nondominated_2d(pts[inside])


def _sweep(front: np.ndarray, ref: Sequence[float]) -> float:
    if len(front) == 0:
        return 0.0
    right = np.append(front[1:, 0], ref[0])
    return float(np.sum((right - front[:, 0]) * (ref[1] - front[:, 1])))


def hypervolume_2d(points, ref: Sequence[float]) -> float:
    """Area dominated by ``points`` and bounded above by the reference point ``ref``."""
    return _sweep(_front_in_box(points, ref), ref)


def hvi(point: Sequence[float], points, ref: Sequence[float]) -> float:
    """Hypervolume gained by adding ``point`` to ``points``."""
    point = np.asarray(point, dtype=float)
    if not (point[0] < ref[0] and point[1] < ref[1]):
        return 0.0
    front = _front_in_box(points, ref)
    if len(front) and np.any(np.all(front <= point, axis=1)):
        return 0.0
    # only the part of the front inside point's box can overlap its contribution
    clipped = np.maximum(front, point)
    own = (ref[0] - point[0]) * (ref[1] - point[1])
    return max(0.0, own - hypervolume_2d(clipped, ref))


def _boundary_segments(front: np.ndarray, ref: Sequence[float]) -> List[Tuple[str, float, float, float]]:
    """Axis-aligned pieces of the border of the region where a point would add hypervolume.

    Each piece is ``("h", y, x_lo, x_hi)`` or ``("v", x, y_lo, y_hi)``. The
    border is the front's staircase, the top side of the reference box left
    of the front and its right side below the front.
    """
    r1, r2 = float(ref[0]), float(ref[1])
    if len(front) == 0:
        return [("h", r2, -math.inf, r1), ("v", r1, -math.inf, r2)]
    segs = [("h", r2, -math.inf, front[0, 0]), ("v", front[0, 0], front[0, 1], r2)]
    for (x0, y0), (x1, _) in zip(front[:-1], front[1:]):
        segs.append(("h", y0, x0, x1))
    for (_, y0), (x1, y1) in zip(front[:-1], front[1:]):
        segs.append(("v", x1, y1, y0))
    segs.append(("h", front[-1, 1], front[-1, 0], r1))
    segs.append(("v", r1, -math.inf, front[-1, 1]))
    return segs


def _distance_to_segments(point: np.ndarray, segs) -> float:
    px, py = float(point[0]), float(point[1])
    best = math.inf
    for kind, c, lo, hi in segs:
        if kind == "h":
            d_along = max(lo - px, 0.0, px - hi)
            d = math.hypot(d_along, py - c)
        else:
            d_along = max(lo - py, 0.0, py - hi)
            d = math.hypot(px - c, d_along)
        best = min(best, d)
    return best


def epf_distance(point: Sequence[float], points, ref: Sequence[float]) -> float:
    """Euclidean distance from ``point`` to the empirical Pareto front's staircase."""
    front = _front_in_box(points, ref)
    if len(front) == 0:
        raise ValueError("no point of the set lies inside the reference box")
    return _distance_to_segments(np.asarray(point, dtype=float), _boundary_segments(front, ref))


def uhvi(point: Sequence[float], points, ref: Sequence[float]) -> float:
    """Uncrowded hypervolume improvement.

    Positive hypervolume improvement for a point that would enlarge the
    dominated area; otherwise minus its distance to the region where it
    would, so that dominated points and points outside the reference box
    still get a useful ranking.
    """
    return float(uhvi_many([point], points, ref)[0])


def _staircase(points, ref: Sequence[float]) -> List[Tuple[float, float]]:
    """Non-dominated points strictly inside the box, sorted by the first objective."""
    r1, r2 = ref
    out: List[Tuple[float, float]] = []
    best = math.inf
    for a, b in sorted((a, b) for a, b in points if a < r1 and b < r2):
        if b < best:
            out.append((a, b))
            best = b
    return out


def _staircase_area(front: List[Tuple[float, float]], r1: float, r2: float) -> float:
    area = 0.0
    for k, (a, b) in enumerate(front):
        right = front[k + 1][0] if k + 1 < len(front) else r1
        area += (right - a) * (r2 - b)
    return area


def uhvi_many(candidates, points, ref: Sequence[float]) -> np.ndarray:
    """:func:`uhvi` of every row of ``candidates`` against the same set."""
    r1, r2 = float(ref[0]), float(ref[1])
    front = _staircase(_as_points(points).tolist(), (r1, r2))
    segs = None
    cands = _as_points(candidates).tolist()
    out = np.empty(len(cands))
    for k, (p1, p2) in enumerate(cands):
        if p1 < r1 and p2 < r2 and not any(a <= p1 and b <= p2 for a, b in front):
            clipped = _staircase([(max(a, p1), max(b, p2)) for a, b in front], (r1, r2))
            own = (r1 - p1) * (r2 - p2)
            out[k] = max(0.0, own - _staircase_area(clipped, r1, r2))
        else:
            if segs is None:
                segs = _boundary_segments(np.array(front).reshape(-1, 2), (r1, r2))
            out[k] = -_distance_to_segments((p1, p2), segs)
    return out


class ParetoArchive:
    """Every evaluated objective vector, plus its non-dominated subset.

    The subset is kept sorted by the first objective and updated point by
    point. The hypervolume is accumulated from each insertion's exact local
    contribution, so it never decreases, not even by round-off.
    """

    def __init__(self, reference_point: Sequence[float]):
        ref = np.asarray(reference_point, dtype=float).ravel()
        if ref.size != 2:
            raise ValueError(
                f"exact hypervolume is implemented for two objectives only, got {ref.size}"
            )
        self.reference_point = ref
        self._chunks: List[np.ndarray] = []
        self._size = 0
        # front as plain lists: first objective ascending, negated second ascending
        self._f1: List[float] = []
        self._g: List[float] = []
        self._hv = 0.0

    def __len__(self) -> int:
        return self._size

    def add(self, values) -> None:
        pts = _as_points(values)
        if len(pts) == 0:
            return
        self._chunks.append(pts.copy())
        self._size += len(pts)
        for p1, p2 in pts.tolist():
            self._insert(p1, p2)

    def _insert(self, p1: float, p2: float) -> None:
        f1, g = self._f1, self._g
        n = len(f1)
        i = bisect.bisect_left(f1, p1)
        if i > 0 and -g[i - 1] <= p2:
            return
        if i < n and f1[i] == p1 and -g[i] <= p2:
            return
        j = max(i, bisect.bisect_right(g, -p2))
        r1, r2 = float(self.reference_point[0]), float(self.reference_point[1])
        if p1 < r1 and p2 < r2:
            right = min(f1[j], r1) if j < n else r1
            top = min(-g[i - 1], r2) if i > 0 else r2
            # area of p's new box already covered by the points it displaces
            covered = 0.0
            for k in range(i, j):
                x = min(f1[k], right)
                nxt = min(f1[k + 1], right) if k + 1 < j else right
                covered += (nxt - x) * (top - min(-g[k], top))
            self._hv += max(0.0, (right - p1) * (top - p2) - covered)
        f1[i:j] = [p1]
        g[i:j] = [-p2]

    @property
    def points(self) -> np.ndarray:
        return np.vstack(self._chunks) if self._chunks else np.zeros((0, 2))

    @property
    def front(self) -> np.ndarray:
        return np.column_stack([np.array(self._f1), -np.array(self._g)]).reshape(-1, 2)

    def hypervolume(self) -> float:
        return self._hv

    def recompute_hypervolume(self) -> float:
        """Hypervolume of the current front from scratch (no accumulated round-off)."""
        return hypervolume_2d(self.front, self.reference_point)
