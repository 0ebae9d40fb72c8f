"""Categorical distribution updates with adaptive trust-region natural gradient.

All categorical parameters are stored as one flat vector; ``offsets`` marks
where each dimension's block starts (``q[offsets[n]:offsets[n+1]]``). The
Fisher metric used is the diagonal ``1/q`` metric of the full simplex
parameterisation, so ``||G||_F^2 = sum G^2 / q`` and ``F^{1/2} G = G/sqrt(q)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

DEFAULT_ALPHA_SNR = 1.5
DEFAULT_LAMBDA_MIN = 1e-30


class MarginViolation(ValueError):
    pass


def block_offsets(category_counts: Sequence[int]) -> np.ndarray:
    return np.concatenate([[0], np.cumsum(category_counts)]).astype(int)


@dataclass
class CategoricalState:
    q: np.ndarray
    offsets: np.ndarray
    q_min: np.ndarray
    delta: float = 1.0
    s: Optional[np.ndarray] = None
    gamma: float = 0.0
    alpha_snr: float = DEFAULT_ALPHA_SNR

    def __post_init__(self) -> None:
        if self.s is None:
            self.s = np.zeros_like(self.q)

    @classmethod
    def initial(
        cls,
        category_counts: Sequence[int],
        q_min: Sequence[float],
        q0: Optional[np.ndarray] = None,
        alpha_snr: float = DEFAULT_ALPHA_SNR,
    ) -> "CategoricalState":
        offsets = block_offsets(category_counts)
        if q0 is None:
            q = np.concatenate([np.full(k, 1.0 / k) for k in category_counts])
        else:
            q = np.array(q0, dtype=float).ravel()
            if q.size != offsets[-1]:
                raise ValueError(f"q0 has {q.size} entries, expected {offsets[-1]}")
            if np.any(q < 0) or not np.allclose(np.add.reduceat(q, offsets[:-1]), 1.0):
                raise ValueError("every block of q0 must lie on the probability simplex")
        return cls(
            q=q,
            offsets=offsets,
            q_min=np.asarray(q_min, dtype=float),
            alpha_snr=alpha_snr,
        )

    @property
    def category_counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def n_params(self) -> int:
        """Number of free parameters, ``sum_n (K_n - 1)``."""
        return int(self.offsets[-1] - len(self.offsets) + 1)

    def block(self, n: int, arr: Optional[np.ndarray] = None) -> np.ndarray:
        arr = self.q if arr is None else arr
        return arr[self.offsets[n] : self.offsets[n + 1]]

    @property
    def beta(self) -> float:
        # capped at 1 so that sqrt(beta * (2 - beta)) stays real for large delta
        return min(1.0, self.delta / self.n_params)


def natural_gradient(q: np.ndarray, ranked_c: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Monte Carlo natural gradient ``sum_i w_i (c_{i:lam} - q)`` over the rows given.

    ``ranked_c`` holds the flattened one-hot rows of the best samples,
    best first, one row per weight.
    """
    ranked_c = np.asarray(ranked_c, dtype=float)
    return weights @ (ranked_c[: len(weights)] - q)


def fisher_sqrt_times(q: np.ndarray, G: np.ndarray) -> np.ndarray:
    """``F(q)^{1/2} G``."""
    if np.any(q <= 0):
        raise MarginViolation("categorical parameter has a non-positive entry")
    return G / np.sqrt(q)


def fisher_norm_sq(q: np.ndarray, G: np.ndarray) -> float:
    if np.any(q <= 0):
        raise MarginViolation("categorical parameter has a non-positive entry")
    return float(np.sum(G * G / q))


def update_q(state: CategoricalState, G: np.ndarray) -> np.ndarray:
    """Trust-region step ``q + delta * G / ||G||_F``; a zero gradient is a no-op."""
    norm_sq = fisher_norm_sq(state.q, G)
    if norm_sq == 0:
        return state.q.copy()
    return state.q + state.delta * G / math.sqrt(norm_sq)


def update_trust_region(state: CategoricalState, G: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """Signal-to-noise driven update; returns ``(s, gamma, delta)``.

    Uses the pre-update ``q`` and ``delta`` held by ``state``.
    """
    beta = state.beta
    sqF_G = fisher_sqrt_times(state.q, G)
    norm_sq = float(sqF_G @ sqF_G)
    s = (1 - beta) * state.s + math.sqrt(beta * (2 - beta)) * sqF_G
    gamma = (1 - beta) ** 2 * state.gamma + beta * (2 - beta) * norm_sq
    delta = state.delta * math.exp(beta * (float(s @ s) / state.alpha_snr - gamma))
    return s, gamma, delta


def sigma_floor(sigma: float, min_eig_C: float, lambda_min: float = DEFAULT_LAMBDA_MIN) -> float:
    return max(sigma, math.sqrt(lambda_min / min_eig_C))


def q_margin_correction(q: np.ndarray, q_min: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Lift every probability to its floor and renormalise each block.

    After the call every block sums to one and no entry is below
    ``q_min[n]``. A block that is entirely at its floor becomes uniform.
    """
    out = np.array(q, dtype=float)
    for n in range(len(offsets) - 1):
        lo, hi = offsets[n], offsets[n + 1]
        qn = np.maximum(out[lo:hi], q_min[n])
        excess = qn - q_min[n]
        denom = excess.sum()
        if denom <= 0:
            out[lo:hi] = 1.0 / (hi - lo)
            continue
        out[lo:hi] = qn + (1 - qn.sum()) / denom * excess
    return out


def default_q_min(category_counts: Sequence[int], n_in: int) -> np.ndarray:
    """Margin per categorical dimension: ``(1 - 0.73^(1/(n_in+n_ca))) / (K_n - 1)``."""
    n_ca = len(category_counts)
    if n_in + n_ca < 1:
        raise ValueError("need at least one discrete variable")
    budget = 1 - 0.73 ** (1 / (n_in + n_ca))
    return np.array([budget / (k - 1) for k in category_counts], dtype=float)


def step(
    state: CategoricalState, ranked_c: np.ndarray, weights: np.ndarray
) -> CategoricalState:
    """One full categorical iteration: gradient, q step, trust region, margin."""
    G = natural_gradient(state.q, ranked_c, weights)
    q_new = update_q(state, G)
    s, gamma, delta = update_trust_region(state, G)
    state.q = q_margin_correction(q_new, state.q_min, state.offsets)
    state.s, state.gamma, state.delta = s, gamma, delta
    return state
