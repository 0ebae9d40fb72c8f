"""Margin correction for integer coordinates of the Gaussian.

The correction keeps the probability of sampling a level other than the
one the mean encodes to (the *mutation rate*) at or above ``alpha``. In
``"modified"`` mode a dimension without a successful integer mutation in the
current iteration may not raise its mutation rate above last iteration's
value, which stops it from drifting up while the step-size fluctuates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .sampling import ThresholdTable
from .space import SearchSpace

ORIGINAL = "original"
MODIFIED = "modified"

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# rational approximation of the standard normal quantile (rel. error < 1.2e-9)
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def _lower_quantile_approx(p: float) -> float:
    # valid for 0 < p <= 0.5
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        return num / den
    q = p - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    return num / den


def normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    if p == 0.0:
        return -math.inf
    if p == 1.0:
        return math.inf
    if p > 0.5:
        return -normal_quantile(1.0 - p)
    x = _lower_quantile_approx(p)
    # one Newton step on the lower tail, where erfc keeps full relative accuracy
    x -= (normal_cdf(x) - p) * _SQRT2PI * math.exp(0.5 * x * x)
    return x


def tail_quantile(p: float) -> float:
    """``sqrt(chi2ppf_1(1 - 2p))`` computed from the tail mass ``p`` in (0, 0.5].

    This is the distance, in standard deviations, between the mean and the
    threshold beyond which a Gaussian puts mass ``p``.
    """
    return -normal_quantile(p)


def chi2_quantile_1dof(gamma: float) -> float:
    """``gamma``-quantile of the chi-squared distribution with one degree of freedom."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    return normal_quantile((1.0 - gamma) / 2.0) ** 2


@dataclass(frozen=True)
class MarginConfig:
    alpha: float
    mode: str = MODIFIED
    centering: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 0.5:
            raise ValueError(f"margin alpha must lie in (0, 0.5), got {self.alpha}")
        if self.mode not in (ORIGINAL, MODIFIED):
            raise ValueError(f"unknown margin mode {self.mode!r}")


def promising_alpha(n_in: int, n_ca: int) -> Optional[float]:
    """``1 - 0.73^(1/(n_in + n_ca))``; ``None`` for a purely continuous problem."""
    if n_in + n_ca <= 0:
        return None
    return 1.0 - 0.73 ** (1.0 / (n_in + n_ca))


@dataclass(frozen=True)
class Marginal:
    """Marginal tail probabilities of one integer coordinate.

    ``p_low = Pr(v <= l_low)`` and ``p_up = Pr(v > l_up)``. For an edge level
    both thresholds are the single nearest one and ``p_low + p_up == 1``.
    """

    edge: bool
    l_low: float
    l_up: float
    p_low: float
    p_up: float

    @property
    def p_mid(self) -> float:
        return 1.0 - self.p_low - self.p_up

    @property
    def p_mut(self) -> float:
        if self.edge:
            return min(self.p_low, self.p_up)
        return self.p_low + self.p_up


def _marginal(m: float, sd: float, n: int, thresholds: ThresholdTable) -> Marginal:
    thr = thresholds.threshold_lists[n]
    idx = thresholds.scalar_level_index(n, m)
    if idx == 0 or idx == len(thr):
        ell = thr[0] if idx == 0 else thr[-1]
        return Marginal(True, ell, ell, normal_cdf((ell - m) / sd), normal_cdf((m - ell) / sd))
    lo, up = thr[idx - 1], thr[idx]
    return Marginal(False, lo, up, normal_cdf((lo - m) / sd), normal_cdf((m - up) / sd))


def coordinate_std(gauss, j: int) -> float:
    """Marginal standard deviation ``sigma * A_jj * sqrt(C_jj)`` of coordinate ``j``."""
    return gauss.sigma * gauss.A[j] * math.sqrt(gauss.C[j, j])


def marginal_probabilities(
    gauss, n: int, thresholds: ThresholdTable, space: SearchSpace
) -> Marginal:
    j = space.j_in[n]
    return _marginal(gauss.m[j], coordinate_std(gauss, j), n, thresholds)


def detect_successful_mutation(ranked_z: np.ndarray, m_encoded: np.ndarray) -> np.ndarray:
    """Per integer dimension: did any of the given (top-mu) samples leave Enc(m)?"""
    ranked_z = np.asarray(ranked_z)
    if ranked_z.size == 0:
        return np.zeros(np.size(m_encoded), dtype=bool)
    return np.any(ranked_z != m_encoded, axis=0)


def _restrict(p: float, p_prev: float, alpha: float, relaxed: bool) -> float:
    if relaxed:
        return max(alpha, p)
    return max(alpha, min(p, p_prev))


def margin_correct_edge(
    gauss,
    n: int,
    flag: bool,
    config: MarginConfig,
    thresholds: ThresholdTable,
    space: SearchSpace,
) -> Tuple[float, float, float]:
    """Correction for a mean that encodes to the smallest or largest level.

    Returns the new mean coordinate, the new diagonal entry of ``A`` and the
    mutation rate to remember for the next iteration.
    """
    j = space.j_in[n]
    m = float(gauss.m[j])
    sqrt_c = math.sqrt(gauss.C[j, j])
    marg = _marginal(m, gauss.sigma * gauss.A[j] * sqrt_c, n, thresholds)
    ell = marg.l_low
    relaxed = config.mode == ORIGINAL or flag
    p_mut = _restrict(marg.p_mut, float(gauss.p_mut[n]), config.alpha, relaxed)

    a = float(gauss.A[j])
    if config.centering:
        level = float(thresholds.levels[n][thresholds.scalar_level_index(n, m)])
        a = max(abs(level - ell) / (gauss.sigma * sqrt_c * tail_quantile(config.alpha)), a)

    # the mean stays on the side of the threshold that holds the edge level
    side = -1.0 if m <= ell else 1.0
    m_new = ell + side * gauss.sigma * a * sqrt_c * tail_quantile(p_mut)
    return m_new, a, p_mut


def margin_correct_interior(
    gauss,
    n: int,
    flag: bool,
    config: MarginConfig,
    thresholds: ThresholdTable,
    space: SearchSpace,
) -> Tuple[float, float, float]:
    """Correction for a mean strictly inside the level range.

    Returns the new mean coordinate, the new diagonal entry of ``A`` and the
    mutation rate ``p_low + p_up`` to remember for the next iteration.
    """
    j = space.j_in[n]
    m = float(gauss.m[j])
    sqrt_c = math.sqrt(gauss.C[j, j])
    marg = _marginal(m, gauss.sigma * gauss.A[j] * sqrt_c, n, thresholds)
    alpha = config.alpha
    half = alpha / 2.0
    p_low = max(half, marg.p_low)
    p_up = max(half, marg.p_up)
    p_mid = marg.p_mid
    p_prev = float(gauss.p_mut[n])
    relaxed = config.mode == ORIGINAL or flag
    if relaxed:
        denom = p_low + p_up + p_mid - 3.0 * half
    else:
        p_mid = max(1.0 - p_prev, p_mid)
        denom = p_low + p_up + p_mid - alpha - (1.0 - p_prev)
    delta = (1.0 - p_low - p_up - p_mid) / denom if denom != 0 else 0.0
    # the max() calls are round-off guards; in real arithmetic both stay >= alpha/2
    p_low = max(half, p_low + delta * (p_low - half))
    p_up = max(half, p_up + delta * (p_up - half))
    p_mut = p_low + p_up
    if not relaxed:
        # round-off guard; the bound holds exactly in real arithmetic
        p_mut = min(p_mut, p_prev)

    q_low, q_up = tail_quantile(p_low), tail_quantile(p_up)
    m_new = (marg.l_low * q_up + marg.l_up * q_low) / (q_up + q_low)
    a_new = (marg.l_up - marg.l_low) / (gauss.sigma * sqrt_c * (q_up + q_low))
    return m_new, a_new, p_mut


def apply_margin_correction(
    gauss,
    flags: Sequence[bool],
    config: MarginConfig,
    thresholds: ThresholdTable,
    space: SearchSpace,
) -> None:
    """Correct every integer dimension of ``gauss`` in place."""
    for n in range(space.n_in):
        j = space.j_in[n]
        if thresholds.is_edge(n, gauss.m[j]):
            m_new, a_new, p_mut = margin_correct_edge(gauss, n, bool(flags[n]), config, thresholds, space)
        else:
            m_new, a_new, p_mut = margin_correct_interior(gauss, n, bool(flags[n]), config, thresholds, space)
        gauss.m[j] = m_new
        gauss.A[j] = a_new
        gauss.p_mut[n] = p_mut


def integer_centering(
    ranked_v: np.ndarray,
    ranked_y: np.ndarray,
    ranked_z: np.ndarray,
    m_encoded: np.ndarray,
    gauss,
    space: SearchSpace,
    mu: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """Move successfully mutated integer coordinates of the ``mu`` best samples onto their level.

    Returns corrected copies of ``ranked_v`` and ``ranked_y``; rows that
    needed no change are returned untouched.
    """
    v = np.array(ranked_v, dtype=float)
    y = np.array(ranked_y, dtype=float)
    j_in = space.in_index
    for i in range(min(mu, len(v))):
        mutated = ranked_z[i] != m_encoded
        if not np.any(mutated):
            continue
        v[i, j_in[mutated]] = ranked_z[i][mutated]
        y[i] = (v[i] - gauss.m) / (gauss.sigma * gauss.A)
    return v, y
