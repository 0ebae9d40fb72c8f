"""Sampling from the joint Gaussian/categorical distribution and discretisation.

Integer coordinates of a Gaussian sample are rounded to the level whose
interval contains them; the interval borders are the midpoints between
consecutive levels. A value sitting exactly on a border maps to the lower
level.
"""

from __future__ import annotations

import bisect
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .space import MixedSolution, SearchSpace

EIG_FLOOR = 1e-30


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


class ThresholdTable:
    """Midpoint thresholds of every integer dimension."""

    def __init__(self, space: SearchSpace):
        self.levels: List[np.ndarray] = [np.asarray(d) for d in space.integer_domains]
        self.thresholds: List[np.ndarray] = [
            (lv[1:] + lv[:-1]) / 2 for lv in self.levels
        ]
        self.threshold_lists = [t.tolist() for t in self.thresholds]

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, n: int) -> np.ndarray:
        return self.thresholds[n]

    def level_index(self, n: int, value: Union[float, np.ndarray]) -> Union[int, np.ndarray]:
        # number of thresholds strictly below value == 0-based level index
        return np.searchsorted(self.thresholds[n], value, side="left")

    def scalar_level_index(self, n: int, value: float) -> int:
        return bisect.bisect_left(self.threshold_lists[n], value)

    def encode_dim(self, n: int, value: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return self.levels[n][self.level_index(n, value)]

    def is_edge(self, n: int, value: float) -> bool:
        idx = self.scalar_level_index(n, value)
        return idx == 0 or idx == len(self.levels[n]) - 1


def build_thresholds(space: SearchSpace) -> ThresholdTable:
    return ThresholdTable(space)


def enc(
    v: np.ndarray, space: SearchSpace, thresholds: Optional[ThresholdTable] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Split ``v`` into its continuous part and its encoded integer levels.

    ``v`` may be a single vector or a ``(n, n_mi)`` batch.
    """
    if thresholds is None:
        thresholds = build_thresholds(space)
    v = np.asarray(v, dtype=float)
    x = v[..., space.co_index]
    z = np.empty(v.shape[:-1] + (space.n_in,))
    for n, j in enumerate(space.j_in):
        z[..., n] = thresholds.encode_dim(n, v[..., j])
    return x, z


def nearest_thresholds(
    m_coord: float, n: int, thresholds: ThresholdTable
) -> Union[float, Tuple[float, float]]:
    """Thresholds governing the marginal of integer dimension ``n``.

    Returns the single nearest threshold when ``m_coord`` encodes to the
    smallest or largest level, otherwise the bracketing pair
    ``(largest threshold < m, smallest threshold >= m)``.
    """
    thr = thresholds[n]
    idx = thresholds.scalar_level_index(n, m_coord)
    if idx == 0:
        return float(thr[0])
    if idx == len(thr):
        return float(thr[-1])
    return float(thr[idx - 1]), float(thr[idx])


def sym_eig(C: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (clamped at 1e-30) and eigenvectors of a symmetric matrix."""
    d, B = np.linalg.eigh((C + C.T) / 2)
    return np.maximum(d, EIG_FLOOR), B


def check_positive_definite(C: np.ndarray) -> None:
    d = np.linalg.eigvalsh((C + C.T) / 2)
    if d.size and d[0] <= 0:
        raise NotPositiveDefiniteError(
            f"covariance matrix is not positive definite (min eigenvalue {d[0]:.3e})"
        )


def sqrtm_sym(eigvals: np.ndarray, eigvecs: np.ndarray, power: float = 0.5) -> np.ndarray:
    return (eigvecs * eigvals**power) @ eigvecs.T


def sample_categorical(
    q: np.ndarray, offsets: np.ndarray, size: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``size`` one-hot rows from the flat parameter vector ``q``.

    ``offsets`` has one more entry than there are dimensions; block ``n`` is
    ``q[offsets[n]:offsets[n+1]]``.
    """
    n_ca = len(offsets) - 1
    out = np.zeros((size, offsets[-1]))
    u = rng.random((size, n_ca))
    for n in range(n_ca):
        lo, hi = offsets[n], offsets[n + 1]
        cum = np.cumsum(q[lo:hi])
        k = np.minimum(np.searchsorted(cum, u[:, n], side="right"), hi - lo - 1)
        out[np.arange(size), lo + k] = 1.0
    return out


def sample_population(
    gauss,
    cat,
    lam: int,
    rng: np.random.Generator,
    space: SearchSpace,
    thresholds: Optional[ThresholdTable] = None,
) -> List[MixedSolution]:
    """Sample ``lam`` mixed solutions.

    ``gauss`` is a :class:`~mvbbo.cma.GaussianState` (or ``None`` without
    continuous/integer variables) and ``cat`` a
    :class:`~mvbbo.categorical.CategoricalState` (or ``None``).
    """
    if thresholds is None:
        thresholds = build_thresholds(space)
    if space.n_mi > 0:
        eigvals, eigvecs = gauss.eig()
        xi = rng.standard_normal((lam, space.n_mi))
        y = xi @ sqrtm_sym(eigvals, eigvecs)
        v = gauss.m + gauss.sigma * gauss.A * y
        x, z = enc(v, space, thresholds)
    else:
        v = y = np.zeros((lam, 0))
        x = z = np.zeros((lam, 0))
    if space.n_ca > 0:
        flat = sample_categorical(cat.q, cat.offsets, lam, rng)
        bounds = list(zip(cat.offsets[:-1].tolist(), cat.offsets[1:].tolist()))
        cs = [[row[lo:hi] for lo, hi in bounds] for row in flat]
    else:
        cs = [[] for _ in range(lam)]
    return [MixedSolution(x[i], z[i], cs[i], v[i], y[i]) for i in range(lam)]
