"""Empirical measures and total-variation distance.

An :class:`EmpiricalMeasure` is the uniform probability measure on the N
particle positions of an ensemble snapshot (duplicates kept as separate
atoms, each of weight 1/N). Lattice states are tuples and bin exactly;
continuous states bin by exact coordinate equality, which is the intended
semantics for measures produced by a common discretization.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import math

import numpy as np


def _freeze(state) -> tuple:
    """Hashable key for a state (lattice tuple or coordinate array)."""
    if isinstance(state, tuple):
        return state
    return tuple(float(c) for c in np.asarray(state).ravel())


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform measure on ``states``; every atom carries weight 1/len."""

    states: tuple

    def __post_init__(self):
        if len(self.states) == 0:
            raise ValueError("an empirical measure needs at least one atom")

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def atoms(self) -> list[tuple]:
        w = 1.0 / self.n
        return [(s, w) for s in self.states]

    def total_mass(self) -> float:
        return sum(w for _, w in self.atoms)

    def integral(self, f: Callable) -> float:
        """(1/N) sum of f over atoms; rejects non-finite values of f."""
        total = 0.0
        for s in self.states:
            v = float(f(s))
            if not math.isfinite(v):
                raise ValueError(f"test function is non-finite at state {s!r}")
            total += v
        return total / self.n

    def counts(self) -> dict:
        return dict(Counter(_freeze(s) for s in self.states))

    def distribution(self) -> dict:
        n = self.n
        return {k: c / n for k, c in self.counts().items()}


def empirical_integral(measure: EmpiricalMeasure, f: Callable) -> float:
    return measure.integral(f)


def pool_measures(measures: Iterable[EmpiricalMeasure]) -> dict:
    """Merge snapshots into one distribution (total counts / total atoms)."""
    counts: Counter = Counter()
    total = 0
    for m in measures:
        counts.update(Counter(_freeze(s) for s in m.states))
        total += m.n
    if total == 0:
        raise ValueError("no atoms to pool")
    return {k: c / total for k, c in counts.items()}


def as_distribution(obj) -> dict:
    """Coerce a measure-like object to a dict state-key -> probability.

    Accepts an :class:`EmpiricalMeasure`, a mapping, or a
    ``(support, weights)`` pair. Rejects unnormalized input.
    """
    if isinstance(obj, EmpiricalMeasure):
        return obj.distribution()
    if isinstance(obj, Mapping):
        dist = {_freeze(k): float(v) for k, v in obj.items()}
    else:
        support, weights = obj
        weights = np.asarray(weights, dtype=float)
        if len(support) != weights.shape[0]:
            raise ValueError("support and weight vector lengths differ")
        dist = {_freeze(s): float(w) for s, w in zip(support, weights)}
    total = sum(dist.values())
    if not math.isfinite(total) or abs(total - 1.0) > 1e-8:
        raise ValueError(f"distribution is not normalized (mass {total!r})")
    if any(v < -1e-12 for v in dist.values()):
        raise ValueError("distribution has negative mass")
    return dist


def tv_distance(p, q) -> float:
    """Total variation distance (1/2) sum |p - q| over the union support."""
    dp = as_distribution(p)
    dq = as_distribution(q)
    keys = set(dp) | set(dq)
    return 0.5 * sum(abs(dp.get(k, 0.0) - dq.get(k, 0.0)) for k in keys)
