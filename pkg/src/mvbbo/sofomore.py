"""Bi-objective optimization with several single-objective kernels.

Each kernel is a :class:`~mvbbo.optimizer.CatCMAwM` instance. Kernels are
updated one after another in random order; a kernel ranks its samples by
their uncrowded hypervolume improvement over the other kernels' incumbents.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .indicators import ParetoArchive, uhvi_many
from .optimizer import CatCMAwM
from .sampling import enc
from .space import MixedSolution, ObjectiveFunction


def incumbent(kernel: CatCMAwM, rng: np.random.Generator) -> MixedSolution:
    """Enc(m) for the continuous and integer part; the most likely category
    otherwise, with ties broken uniformly at random."""
    space = kernel.space
    if kernel.gauss is not None:
        m = kernel.gauss.m.copy()
        x, z = enc(m, space, kernel.thresholds)
    else:
        m = np.zeros(0)
        x = z = np.zeros(0)
    cs = []
    if kernel.cat is not None:
        for n, k in enumerate(space.category_counts):
            qn = kernel.cat.block(n)
            best = np.flatnonzero(qn == qn.max())
            choice = best[0] if len(best) == 1 else rng.choice(best)
            c = np.zeros(k)
            c[choice] = 1.0
            cs.append(c)
    return MixedSolution(x, z, cs, m, np.zeros_like(m))


def box_transform(
    x: np.ndarray, bounds: Sequence[Tuple[float, float]], xi: float = 1.0
) -> Tuple[np.ndarray, float]:
    """Clamp ``x`` into the box and return the quadratic penalty of the repair.

    The penalty is ``xi * sum(((x - clamped) / (hi - lo))**2)``.
    """
    b = np.asarray(bounds, dtype=float).reshape(-1, 2)
    lo, hi = b[:, 0], b[:, 1]
    if np.all(x >= lo) and np.all(x <= hi):
        return np.array(x, dtype=float), 0.0
    clamped = np.clip(x, lo, hi)
    penalty = xi * float(np.sum(((x - clamped) / (hi - lo)) ** 2))
    return clamped, penalty


def evaluate_bounded(
    objective: ObjectiveFunction, solution: MixedSolution, xi: float = 1.0, bounds=None
) -> np.ndarray:
    """Objective vector of ``solution``; out-of-box continuous values are
    repaired and the penalty is added to every component.

    ``bounds`` defaults to the space's continuous bounds; passing a
    pre-built ``(n, 2)`` array saves the conversion.
    """
    if bounds is None:
        bounds = objective.space.continuous_bounds
    if bounds is None or len(solution.x) == 0:
        return objective(solution.x, solution.z, solution.c)
    x, penalty = box_transform(solution.x, bounds, xi)
    return objective(x, solution.z, solution.c) + penalty


@dataclass
class KernelSet:
    kernels: List[CatCMAwM]
    incumbents: List[MixedSolution] = field(default_factory=list)
    values: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.kernels)

    def others(self, i: int) -> np.ndarray:
        return np.delete(self.values, i, axis=0)


class ComoCatCMAwM:
    """Sofomore loop over ``n_kernels`` CatCMAwM kernels maximizing UHVI.

    Every evaluation (samples and refreshed incumbents) is counted and stored
    in :attr:`archive`, whose hypervolume is the reported progress measure.
    Keyword arguments not listed are passed on to every kernel.
    """

    def __init__(
        self,
        objective: ObjectiveFunction,
        reference_point: Sequence[float],
        n_kernels: int = 5,
        sigma: float = 1.0,
        init_box: Optional[Tuple[object, object]] = None,
        seed: Optional[int] = None,
        xi: float = 1.0,
        **kernel_kwargs,
    ):
        if objective.arity != 2:
            raise ValueError("only bi-objective problems are supported")
        if n_kernels < 1:
            raise ValueError("need at least one kernel")
        self.objective = objective
        self.reference_point = np.asarray(reference_point, dtype=float)
        self.xi = xi
        bounds = objective.space.continuous_bounds
        self._bounds = None if bounds is None else np.asarray(bounds, dtype=float)
        self.archive = ParetoArchive(self.reference_point)
        seeds = np.random.SeedSequence(seed).spawn(n_kernels + 1)
        self.rng = np.random.default_rng(seeds[-1])
        kernels = [
            CatCMAwM(
                objective.space,
                sigma=sigma,
                init_box=init_box,
                seed=np.random.default_rng(s).integers(2**63),
                **kernel_kwargs,
            )
            for s in seeds[:-1]
        ]
        self.kernels = KernelSet(kernels)
        self.evaluations = 0
        incs = [incumbent(k, self.rng) for k in kernels]
        self.kernels.incumbents = incs
        self.kernels.values = np.array([self._evaluate(s) for s in incs])
        self.archive.add(self.kernels.values)

    def _evaluate(self, solution: MixedSolution) -> np.ndarray:
        self.evaluations += 1
        f = evaluate_bounded(self.objective, solution, self.xi, self._bounds)
        solution.fitness = f
        return f

    @property
    def evaluations_per_step(self) -> int:
        return sum(k.population_size + 1 for k in self.kernels.kernels)

    def step(self) -> None:
        ks = self.kernels
        for i in self.rng.permutation(len(ks)):
            kernel = ks.kernels[i]
            others = ks.others(i)
            pop = kernel.ask()
            values = np.array([self._evaluate(s) for s in pop])
            fitness = -uhvi_many(values, others, self.reference_point)
            kernel.tell(pop, fitness)
            inc = incumbent(kernel, self.rng)
            ks.incumbents[i] = inc
            ks.values[i] = self._evaluate(inc)
            self.archive.add(np.vstack([values, ks.values[i]]))

    def hypervolume(self) -> float:
        return self.archive.hypervolume()

    def run(self, budget: int, callback=None) -> None:
        """Step while a whole step still fits into ``budget`` evaluations."""
        while self.evaluations + self.evaluations_per_step <= budget:
            self.step()
            if callback is not None:
                callback(self)
