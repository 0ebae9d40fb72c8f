"""Mixed-variable search spaces, sampled solutions and objective functions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np


class SpaceError(ValueError):
    """Raised when a search space violates one of its invariants."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid search space: " + "; ".join(self.problems))


@dataclass(frozen=True)
class SearchSpace:
    """Continuous, integer and categorical dimensions of a mixed problem.

    Integer variables are given by their ordered levels, which need not be
    unit-spaced (``[0.01, 0.1, 1]`` is a valid domain). Continuous and integer
    variables share one coordinate vector of length ``n_co + n_in``; ``j_co``
    and ``j_in`` give each variable's slot in it (0-based). By default the
    continuous variables come first.
    """

    n_co: int = 0
    integer_domains: Tuple[Tuple[float, ...], ...] = ()
    category_counts: Tuple[int, ...] = ()
    continuous_bounds: Optional[Tuple[Tuple[float, float], ...]] = None
    j_co: Optional[Tuple[int, ...]] = None
    j_in: Optional[Tuple[int, ...]] = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "integer_domains",
            tuple(tuple(float(z) for z in dom) for dom in self.integer_domains),
        )
        object.__setattr__(
            self, "category_counts", tuple(int(k) for k in self.category_counts)
        )
        if self.continuous_bounds is not None:
            object.__setattr__(
                self,
                "continuous_bounds",
                tuple((float(lo), float(hi)) for lo, hi in self.continuous_bounds),
            )
        if self.j_co is None:
            object.__setattr__(self, "j_co", tuple(range(self.n_co)))
        if self.j_in is None:
            object.__setattr__(
                self, "j_in", tuple(range(self.n_co, self.n_co + self.n_in))
            )

    @property
    def n_in(self) -> int:
        return len(self.integer_domains)

    @property
    def n_ca(self) -> int:
        return len(self.category_counts)

    @property
    def n_mi(self) -> int:
        """Length of the joint continuous + integer coordinate vector."""
        return self.n_co + self.n_in

    @property
    def n_total(self) -> int:
        return self.n_co + self.n_in + self.n_ca

    @property
    def co_index(self) -> np.ndarray:
        return np.asarray(self.j_co, dtype=int)

    @property
    def in_index(self) -> np.ndarray:
        return np.asarray(self.j_in, dtype=int)

    def check(self) -> "SearchSpace":
        """Raise :class:`SpaceError` unless the space is well formed."""
        problems = validate_space(self)
        if problems:
            raise SpaceError(problems)
        return self


def validate_space(space: SearchSpace) -> List[str]:
    """Return every violated invariant of ``space``; an empty list means ok."""
    problems: List[str] = []
    if space.n_co < 0:
        problems.append("n_co must be non-negative")
    for n, dom in enumerate(space.integer_domains):
        if len(dom) < 2:
            problems.append(f"integer domain {n} has fewer than 2 levels")
        if not all(np.isfinite(dom)):
            problems.append(f"integer domain {n} has non-finite levels")
        if any(b <= a for a, b in zip(dom, dom[1:])):
            problems.append(f"integer domain {n}: domain not increasing")
    for n, k in enumerate(space.category_counts):
        if k < 2:
            problems.append(f"categorical dimension {n}: category count < 2")
    if space.continuous_bounds is not None:
        if len(space.continuous_bounds) != space.n_co:
            problems.append(
                f"continuous_bounds has {len(space.continuous_bounds)} rows, "
                f"expected {space.n_co}"
            )
        for n, (lo, hi) in enumerate(space.continuous_bounds):
            if not lo < hi:
                problems.append(f"continuous bound {n}: lo >= hi ({lo} >= {hi})")
    j_co, j_in = list(space.j_co or ()), list(space.j_in or ())
    if len(j_co) != space.n_co:
        problems.append(f"j_co has {len(j_co)} entries, expected {space.n_co}")
    if len(j_in) != space.n_in:
        problems.append(f"j_in has {len(j_in)} entries, expected {space.n_in}")
    if sorted(j_co + j_in) != list(range(space.n_mi)):
        problems.append("j_co and j_in do not partition the joint coordinate slots")
    if space.n_total == 0:
        problems.append("space has no variables")
    return problems


def one_hot(index: int, size: int) -> np.ndarray:
    """One-hot vector of length ``size`` with a 1 at 1-based position ``index``."""
    if not 1 <= index <= size:
        raise IndexError(f"category index {index} out of range 1..{size}")
    out = np.zeros(size)
    out[index - 1] = 1.0
    return out


@dataclass
class MixedSolution:
    """One sampled candidate.

    ``v`` is the pre-encoding Gaussian sample and ``y`` its whitened
    counterpart (``v = m + sigma * A @ y``); both are kept for the update.
    """

    x: np.ndarray
    z: np.ndarray
    c: List[np.ndarray]
    v: np.ndarray
    y: np.ndarray
    fitness: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def categories(self) -> np.ndarray:
        """0-based index of the active category in every categorical dimension."""
        return np.array([int(np.argmax(cn)) for cn in self.c], dtype=int)


@dataclass(frozen=True)
class ObjectiveFunction:
    """A deterministic, vector-valued objective over a :class:`SearchSpace`.

    ``func`` receives ``(x, z, categories)`` where ``categories`` holds the
    0-based active category per categorical dimension, and returns ``arity``
    values (a scalar is accepted when ``arity == 1``).
    """

    space: SearchSpace
    func: Callable[[np.ndarray, np.ndarray, np.ndarray], object]
    arity: int = 1
    name: str = "objective"

    def __call__(self, x: np.ndarray, z: np.ndarray, c: Sequence[np.ndarray]) -> np.ndarray:
        cats = np.array([cn.argmax() for cn in c], dtype=int)
        out = np.atleast_1d(np.asarray(self.func(x, z, cats), dtype=float))
        if out.shape != (self.arity,):
            raise ValueError(
                f"{self.name} returned shape {out.shape}, expected ({self.arity},)"
            )
        return out

    def evaluate(self, solution: MixedSolution) -> np.ndarray:
        return self(solution.x, solution.z, solution.c)
