"""Ask/tell optimizer for mixed continuous, integer and categorical problems."""

from __future__ import annotations

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import categorical as catmod
from .categorical import CategoricalState
from .cma import (
    GaussianState,
    default_hyperparameters,
    update_covariance,
    update_mean,
    update_paths,
    update_stepsize,
)
from .margin import (
    MODIFIED,
    MarginConfig,
    apply_margin_correction,
    detect_successful_mutation,
    integer_centering,
    promising_alpha,
)
from .sampling import build_thresholds, enc, sample_population
from .space import MixedSolution, ObjectiveFunction, SearchSpace

STAGNATION_TOL = 1e-15


class CatCMAwM:
    """CMA-ES over continuous and integer variables joined with a categorical
    distribution, with margin corrections on both discrete parts.

    Fitness is minimized. The margin ``alpha`` and the categorical floors
    ``q_min`` default to values that keep the chance of sampling a non-optimal
    discrete configuration at about 27% once the distribution has converged.

    Parameters
    ----------
    space:
        The search space; it is validated on construction.
    mean, init_box:
        Initial mean of the Gaussian. When ``mean`` is omitted it is drawn
        uniformly from ``init_box = (lo, hi)`` (scalars or vectors), or set to
        zero without a box.
    margin_mode:
        ``"modified"`` (default) bounds the integer mutation rate of
        dimensions without a successful mutation by last iteration's rate;
        ``"original"`` only enforces the ``alpha`` floor.
    centering:
        Move successfully mutated integer coordinates of the best samples onto
        their level before the update, and keep the edge-level amplitude from
        collapsing.
    """

    def __init__(
        self,
        space: SearchSpace,
        mean: Optional[Sequence[float]] = None,
        sigma: float = 1.0,
        cov: Optional[np.ndarray] = None,
        q0: Optional[Sequence[float]] = None,
        seed: Optional[int] = None,
        lam: Optional[int] = None,
        alpha: Optional[float] = None,
        q_min: Optional[Sequence[float]] = None,
        margin_mode: str = MODIFIED,
        centering: bool = True,
        init_box: Optional[Tuple[object, object]] = None,
        active: bool = True,
        alpha_snr: float = catmod.DEFAULT_ALPHA_SNR,
        lambda_min: float = catmod.DEFAULT_LAMBDA_MIN,
    ):
        self.space = space.check()
        self.rng = np.random.default_rng(seed)
        self.hyper = default_hyperparameters(space.n_mi, space.n_total, lam, active)
        self.thresholds = build_thresholds(space)
        self.lambda_min = lambda_min

        self.gauss: Optional[GaussianState] = None
        if space.n_mi > 0:
            if mean is None:
                if init_box is None:
                    mean = np.zeros(space.n_mi)
                else:
                    lo, hi = init_box
                    mean = self.rng.uniform(lo, hi, size=space.n_mi)
            mean = np.asarray(mean, dtype=float)
            if mean.shape != (space.n_mi,):
                raise ValueError(f"mean has shape {mean.shape}, expected ({space.n_mi},)")
            self.gauss = GaussianState.initial(mean, sigma, cov, space.n_in)

        self.cat: Optional[CategoricalState] = None
        if space.n_ca > 0:
            if q_min is None:
                q_min = catmod.default_q_min(space.category_counts, space.n_in)
            q_min = np.asarray(q_min, dtype=float)
            if np.any(q_min * np.asarray(space.category_counts) >= 1):
                raise ValueError("q_min must stay below 1/K for every categorical dimension")
            self.cat = CategoricalState.initial(space.category_counts, q_min, q0, alpha_snr)

        self.margin: Optional[MarginConfig] = None
        if space.n_in > 0:
            if alpha is None:
                alpha = promising_alpha(space.n_in, space.n_ca)
            self.margin = MarginConfig(alpha, margin_mode, centering)

        self._t = 0
        self.evaluations = 0
        self.best_fitness = math.inf
        self.best_solution: Optional[MixedSolution] = None
        self._last_improvement = 0
        # per-integer-dimension bookkeeping of the latest tell
        self.last_flags = np.zeros(space.n_in, dtype=bool)
        self.last_p_mut_prev = np.ones(space.n_in)

    @property
    def population_size(self) -> int:
        return self.hyper.lam

    @property
    def t(self) -> int:
        return self._t

    @property
    def sigma(self) -> float:
        return self.gauss.sigma if self.gauss is not None else 0.0

    def ask(self) -> List[MixedSolution]:
        return sample_population(
            self.gauss, self.cat, self.hyper.lam, self.rng, self.space, self.thresholds
        )

    def tell(
        self,
        solutions: Sequence[MixedSolution],
        values: Optional[Sequence[float]] = None,
        minimize: bool = True,
    ) -> None:
        """Update the distribution from one evaluated population.

        ``values`` defaults to each solution's ``fitness``. Ties are ranked by
        position in ``solutions``.
        """
        hyper, space = self.hyper, self.space
        if len(solutions) != hyper.lam:
            raise ValueError(f"expected {hyper.lam} solutions, got {len(solutions)}")
        if values is None:
            values = [s.fitness for s in solutions]
        if any(v is None for v in values):
            raise ValueError("every solution needs a fitness value")
        f = np.array([float(np.asarray(v).reshape(-1)[0]) for v in values])
        if not minimize:
            f = -f
        order = np.argsort(f, kind="stable")
        ranked = [solutions[i] for i in order]
        self.evaluations += hyper.lam
        if f[order[0]] < self.best_fitness:
            self.best_fitness = float(f[order[0]])
            self.best_solution = ranked[0]
            self._last_improvement = self.evaluations

        mu = hyper.mu
        gauss = self.gauss
        flags = np.zeros(space.n_in, dtype=bool)
        if gauss is not None:
            if any(s.v is None or s.y is None for s in ranked):
                raise ValueError("solutions must carry their pre-encoding v and y")
            V = np.array([s.v for s in ranked], dtype=float)
            Y = np.array([s.y for s in ranked], dtype=float)
            if space.n_in > 0:
                Z = np.array([s.z for s in ranked], dtype=float)
                m_enc_z = enc(gauss.m, space, self.thresholds)[1]
                flags = detect_successful_mutation(Z[:mu], m_enc_z)
                if self.margin.centering:
                    V, Y = integer_centering(V, Y, Z, m_enc_z, gauss, space, mu)
            m_new = update_mean(gauss, hyper, Y)
            p_sigma, p_c, h_sigma = update_paths(gauss, hyper, Y)
            C_new = update_covariance(gauss, hyper, Y, h_sigma, p_c, check=False)
            sigma_new = update_stepsize(gauss, hyper, p_sigma)

        if self.cat is not None:
            rows = np.array([np.concatenate(s.c) for s in ranked[:mu]])
            catmod.step(self.cat, rows, hyper.positive_weights)

        if gauss is not None:
            gauss.m, gauss.p_sigma, gauss.p_c = m_new, p_sigma, p_c
            gauss.C, gauss.sigma = C_new, sigma_new
            gauss.invalidate()
            eigvals, _ = gauss.eig()
            gauss.sigma = catmod.sigma_floor(gauss.sigma, eigvals[0], self.lambda_min)
            self.last_p_mut_prev = gauss.p_mut.copy()
            if space.n_in > 0:
                apply_margin_correction(gauss, flags, self.margin, self.thresholds, space)
            gauss.t += 1
        self.last_flags = flags
        self._t += 1

    def should_stop(
        self, budget: Optional[int] = None, target: Optional[float] = None
    ) -> Optional[str]:
        """Reason to stop (``"budget"``, ``"target"``, ``"stagnation"``) or ``None``.

        The budget is exhausted once another full population would exceed it.
        """
        if budget is not None and self.evaluations + self.hyper.lam > budget:
            return "budget"
        if target is not None and self.best_fitness <= target:
            return "target"
        collapsed = (self.gauss is not None and self.gauss.sigma < STAGNATION_TOL) or (
            self.cat is not None and self.cat.delta < STAGNATION_TOL
        )
        if collapsed and self.evaluations - self._last_improvement >= 100 * self.hyper.lam:
            return "stagnation"
        return None

    def optimize(
        self,
        objective: ObjectiveFunction,
        budget: int,
        target: Optional[float] = None,
        callback=None,
    ) -> str:
        """Run ask/evaluate/tell until :meth:`should_stop` fires; returns the reason."""
        while True:
            reason = self.should_stop(budget, target)
            if reason is not None:
                return reason
            pop = self.ask()
            for s in pop:
                s.fitness = objective.evaluate(s)
            self.tell(pop)
            if callback is not None:
                callback(self)

    def check_invariants(self) -> None:
        """Assert the state invariants that must hold between iterations."""
        if self.gauss is not None:
            g = self.gauss
            assert g.sigma > 0
            assert np.all(g.A > 0)
            assert np.max(np.abs(g.C - g.C.T)) < 1e-12
            assert g.eig()[0][0] > 0
            if self.margin is not None:
                assert np.all(g.p_mut >= self.margin.alpha * (1 - 1e-12))
                assert np.all(g.p_mut <= 1.0)
        if self.cat is not None:
            c = self.cat
            sums = np.add.reduceat(c.q, c.offsets[:-1])
            assert np.all(np.abs(sums - 1) < 1e-12)
            floors = np.repeat(c.q_min, c.category_counts)
            assert np.all(c.q >= floors * (1 - 1e-12))
            assert c.delta > 0 and c.gamma >= 0
