"""CMA-ES updates for the Gaussian part of the search distribution.

The Gaussian is ``N(m, sigma^2 A C A)`` with ``A`` diagonal (stored as a
vector). ``A`` is only touched by the integer margin correction; everything
here treats it as fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .sampling import EIG_FLOOR, NotPositiveDefiniteError, sqrtm_sym

_EPS = 1e-8


@dataclass
class GaussianState:
    m: np.ndarray
    sigma: float
    C: np.ndarray
    A: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    p_mut: np.ndarray
    t: int = 0
    _eig: Optional[Tuple[np.ndarray, np.ndarray]] = field(
        default=None, repr=False, compare=False
    )
    _inv_sqrt: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @classmethod
    def initial(
        cls, m: np.ndarray, sigma: float, C: Optional[np.ndarray] = None, n_in: int = 0
    ) -> "GaussianState":
        m = np.array(m, dtype=float)
        n = m.size
        C = np.eye(n) if C is None else np.array(C, dtype=float)
        if C.shape != (n, n):
            raise ValueError(f"C has shape {C.shape}, expected {(n, n)}")
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        state = cls(
            m=m,
            sigma=float(sigma),
            C=C,
            A=np.ones(n),
            p_sigma=np.zeros(n),
            p_c=np.zeros(n),
            p_mut=np.ones(n_in),
        )
        state.eig()
        return state

    @property
    def dim(self) -> int:
        return self.m.size

    def eig(self) -> Tuple[np.ndarray, np.ndarray]:
        """Cached ``(eigenvalues, eigenvectors)`` of C.

        Raises if C has a non-positive eigenvalue; positive eigenvalues below
        1e-30 are clamped.
        """
        if self._eig is None:
            d, B = np.linalg.eigh((self.C + self.C.T) / 2)
            if d.size and d[0] <= 0:
                # eigh is only accurate to about n * eps * max|d|; a negative
                # eigenvalue below that is noise of an ill-conditioned C
                noise = d.size * np.finfo(float).eps * abs(d[-1])
                if d[0] < -noise:
                    raise NotPositiveDefiniteError(
                        f"covariance matrix is not positive definite "
                        f"(min eigenvalue {d[0]:.3e})"
                    )
                d = np.maximum(d, max(noise, EIG_FLOOR))
                self.C = (B * d) @ B.T
            self._eig = (np.maximum(d, EIG_FLOOR), B)
        return self._eig

    def invalidate(self) -> None:
        self._eig = None
        self._inv_sqrt = None

    def inv_sqrt_C(self) -> np.ndarray:
        if self._inv_sqrt is None:
            d, B = self.eig()
            self._inv_sqrt = sqrtm_sym(d, B, -0.5)
        return self._inv_sqrt


@dataclass(frozen=True)
class CmaHyperparameters:
    lam: int
    mu: int
    weights: np.ndarray
    mu_w: float
    c_m: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    chi_n: float

    @property
    def positive_weights(self) -> np.ndarray:
        return self.weights[: self.mu]


def expected_norm(n: int) -> float:
    """Approximation of E||N(0, I_n)||."""
    return math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))


def population_size(n_total: int) -> int:
    return 4 + int(math.floor(3 * math.log(n_total)))


def default_hyperparameters(
    n_mi: int, n_total: int, lam: Optional[int] = None, active: bool = True
) -> CmaHyperparameters:
    """Standard CMA-ES constants for a ``n_mi``-dimensional Gaussian.

    The population size follows ``4 + floor(3 ln n_total)`` where
    ``n_total`` counts categorical variables too. With ``active=False`` the
    negative recombination weights are zeroed.
    """
    if lam is None:
        lam = population_size(n_total)
    if lam < 2:
        raise ValueError("population size must be at least 2")
    n = max(n_mi, 1)
    mu = lam // 2
    raw = np.array([math.log((lam + 1) / 2) - math.log(i + 1) for i in range(lam)])
    mu_w = raw[:mu].sum() ** 2 / (raw[:mu] ** 2).sum()
    neg = raw[mu:]
    mu_w_neg = neg.sum() ** 2 / (neg**2).sum() if neg.size and np.any(neg) else 0.0

    alpha_cov = 2.0
    c_1 = alpha_cov / ((n + 1.3) ** 2 + mu_w)
    c_mu = min(
        1 - c_1 - _EPS,
        alpha_cov * (mu_w - 2 + 1 / mu_w) / ((n + 2) ** 2 + alpha_cov * mu_w / 2),
    )
    c_mu = max(c_mu, 0.0)

    weights = np.where(raw >= 0, raw / raw[raw >= 0].sum(), 0.0)
    if active and np.any(raw < 0) and c_mu > 0:
        alpha_neg = min(
            1 + c_1 / c_mu,
            1 + 2 * mu_w_neg / (mu_w + 2),
            (1 - c_1 - c_mu) / (n * c_mu),
        )
        weights = np.where(raw >= 0, weights, alpha_neg * raw / np.abs(raw[raw < 0]).sum())

    c_sigma = (mu_w + 2) / (n + mu_w + 5)
    d_sigma = 1 + 2 * max(0.0, math.sqrt((mu_w - 1) / (n + 1)) - 1) + c_sigma
    c_c = (4 + mu_w / n) / (n + 4 + 2 * mu_w / n)
    return CmaHyperparameters(
        lam=lam,
        mu=mu,
        weights=weights,
        mu_w=mu_w,
        c_m=1.0,
        c_sigma=c_sigma,
        d_sigma=d_sigma,
        c_c=c_c,
        c_1=c_1,
        c_mu=c_mu,
        chi_n=expected_norm(n),
    )


def update_mean(state: GaussianState, hyper: CmaHyperparameters, ranked_y: np.ndarray) -> np.ndarray:
    """``m + c_m * sigma * A * sum_i w_i y_{i:lam}`` over the mu best rows."""
    y_w = hyper.positive_weights @ ranked_y[: hyper.mu]
    return state.m + hyper.c_m * state.sigma * state.A * y_w


def update_paths(
    state: GaussianState, hyper: CmaHyperparameters, ranked_y: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, bool]:
    """Cumulate the evolution paths; returns ``(p_sigma, p_c, h_sigma)``."""
    y_w = hyper.positive_weights @ ranked_y[: hyper.mu]
    c_s, c_c = hyper.c_sigma, hyper.c_c
    p_sigma = (1 - c_s) * state.p_sigma + math.sqrt(
        c_s * (2 - c_s) * hyper.mu_w
    ) * (state.inv_sqrt_C() @ y_w)
    n = state.dim
    lhs = np.linalg.norm(p_sigma) / math.sqrt(1 - (1 - c_s) ** (2 * (state.t + 1)))
    h_sigma = bool(lhs < (1.4 + 2 / (n + 1)) * hyper.chi_n)
    p_c = (1 - c_c) * state.p_c + h_sigma * math.sqrt(c_c * (2 - c_c) * hyper.mu_w) * y_w
    return p_sigma, p_c, h_sigma


def negative_weight_scaling(
    state: GaussianState, hyper: CmaHyperparameters, ranked_y: np.ndarray
) -> np.ndarray:
    """Recombination weights with the negative ones rescaled by ``n/||C^-1/2 y||^2``."""
    w = hyper.weights
    neg = w < 0
    if not np.any(neg):
        return w.copy()
    norms_sq = np.sum((ranked_y[neg] @ state.inv_sqrt_C()) ** 2, axis=1)
    out = w.copy()
    out[neg] = w[neg] * state.dim / np.maximum(norms_sq, 1e-300)
    return out


def update_covariance(
    state: GaussianState,
    hyper: CmaHyperparameters,
    ranked_y: np.ndarray,
    h_sigma: bool,
    p_c: Optional[np.ndarray] = None,
    check: bool = True,
) -> np.ndarray:
    """Rank-one plus (active) rank-mu update of C.

    ``p_c`` is the already-updated path; it defaults to ``state.p_c``. With
    ``check=False`` positive definiteness is left to the caller's next
    eigendecomposition.
    """
    if p_c is None:
        p_c = state.p_c
    c_1, c_mu, c_c = hyper.c_1, hyper.c_mu, hyper.c_c
    w_circ = negative_weight_scaling(state, hyper, ranked_y)
    decay = 1 - c_1 - c_mu * hyper.weights.sum() + (1 - h_sigma) * c_1 * c_c * (2 - c_c)
    C = (
        decay * state.C
        + c_1 * np.outer(p_c, p_c)
        + c_mu * (ranked_y.T * w_circ) @ ranked_y
    )
    C = (C + C.T) / 2
    if not check:
        return C
    d = np.linalg.eigvalsh(C)
    if d.size and d[0] <= 0:
        raise NotPositiveDefiniteError(
            f"covariance update produced eigenvalue {d[0]:.3e}; check learning rates"
        )
    return C


def update_stepsize(
    state: GaussianState, hyper: CmaHyperparameters, p_sigma: np.ndarray
) -> float:
    return state.sigma * math.exp(
        (hyper.c_sigma / hyper.d_sigma) * (np.linalg.norm(p_sigma) / hyper.chi_n - 1)
    )
