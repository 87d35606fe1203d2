"""N-particle Fleming-Viot system with uniform rebirth.

Each of the N particles runs the killed dynamics; at the instant a
particle dies it jumps onto the position of one of the other N-1
particles, chosen uniformly, and the run continues (a "rebirth"). The
empirical measure of the ensemble estimates the law of the killed process
conditioned on survival, and its long-time samples estimate the
quasi-stationary distribution.

Stream layout: the ensemble seed splits into one stream per particle plus
one event stream (rebirth targets and tie ordering). A particle consumes
its own stream exactly as a lone killed trajectory would, so with
kappa == 0 the ensemble reproduces N independent ``simulate_killed`` runs
bit for bit.

An ensemble is sequential by nature (rebirths couple the particles);
replicas run concurrently on disjoint streams.
"""

from __future__ import annotations

import heapq
import math
import warnings
from typing import Callable, Optional, Sequence

import numpy as np

from .measures import EmpiricalMeasure, empirical_integral, pool_measures  # noqa: F401
from .process import (
    DiffusionDynamics,
    KilledModel,
    _euler_step,
    _is_weighted_pair,
    _sample_initial,
    sample_holding_and_jump,
)
from .streams import TAG_EVENT, TAG_INIT, TAG_PARTICLE, substream

_TIME_EPS = 1e-12


class ParticleEnsemble:
    """Mutable state of one Fleming-Viot run.

    Construct through :func:`fv_init`. The model object is shared
    read-only; everything else (positions, clocks, streams, counters)
    belongs to this ensemble and advances in place.
    """

    def __init__(self, model: KilledModel, n: int, states: list, seed: int,
                 record_paths: bool = False):
        self.model = model
        self.n = n
        self.time = 0.0
        self.rebirth_count = 0
        self.seed = seed
        self._record_paths = record_paths
        self._x = list(states)
        self._rngs = [substream(seed, TAG_PARTICLE, i) for i in range(n)]
        self._event_rng = substream(seed, TAG_EVENT)
        self.paths = [[(0.0, s)] for s in states] if record_paths else None
        if model.is_jump:
            self._init_jump_clocks()

    # -- jump bookkeeping ---------------------------------------------------
    # Per particle: the Exp(1) kill threshold zeta, the hazard consumed up
    # to the particle's last own event, that event's time, and the absolute
    # times of its pending jump and kill. Clocks are redrawn only when the
    # particle's own state changes (memorylessness makes that exact).

    def _init_jump_clocks(self):
        n = self.n
        self._zeta = [0.0] * n
        self._hazard = [0.0] * n
        self._last_touch = [0.0] * n
        self._next_jump_time = [math.inf] * n
        self._next_target = list(self._x)
        self._kill_time = [math.inf] * n
        self._version = [0] * n
        self._heap: list = []
        self._push_seq = 0
        for i in range(n):
            rng = self._rngs[i]
            self._zeta[i] = rng.exponential(1.0)
            holding, target = sample_holding_and_jump(self.model.dynamics, self._x[i], rng)
            self._next_jump_time[i] = holding
            self._next_target[i] = target
            k = self.model.killing.rate(self._x[i])
            self._kill_time[i] = self._zeta[i] / k if k > 0.0 else math.inf
            self._push(i)

    def _push(self, i: int):
        t = self._next_jump_time[i]
        kt = self._kill_time[i]
        if kt < t:
            t = kt
        if t == math.inf:
            return
        self._push_seq += 1
        heapq.heappush(self._heap, (t, self._push_seq, i, self._version[i]))

    @property
    def positions(self) -> tuple:
        if self.model.is_jump:
            return tuple(self._x)
        return tuple(x.copy() for x in self._x)

    def snapshot(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(states=self.positions)

    # -- core advance ---------------------------------------------------------

    def _advance(self, dt: float):
        if not (dt > 0):
            raise ValueError("dt must be positive")
        target_time = self.time + dt
        if self.model.is_jump:
            self._advance_jump(target_time)
        else:
            self._advance_diffusion(target_time)
        self.time = target_time

    def _advance_jump(self, target_time: float):
        heap = self._heap
        version = self._version
        njt = self._next_jump_time
        kt = self._kill_time
        while heap:
            t_ev, _, i, ver = heap[0]
            if t_ev > target_time:
                break
            heapq.heappop(heap)
            if ver != version[i]:
                continue
            # Simultaneous events are possible only through floating-point
            # coincidence; they are processed in uniformly random order.
            batch = [i]
            while heap and heap[0][0] == t_ev:
                _, _, j, verj = heapq.heappop(heap)
                if verj == version[j]:
                    batch.append(j)
            if len(batch) > 1:
                order = self._event_rng.permutation(len(batch))
                batch = [batch[k] for k in order]
            for j in batch:
                if kt[j] <= njt[j]:
                    self._process_kill(j, kt[j])
                else:
                    self._process_jump(j, njt[j])

    def _process_jump(self, i: int, t_ev: float):
        x_old = self._x[i]
        self._hazard[i] += self.model.killing.rate(x_old) * (t_ev - self._last_touch[i])
        self._x[i] = self._next_target[i]
        self._last_touch[i] = t_ev
        self._redraw_clocks(i, t_ev)
        if self.paths is not None:
            self.paths[i].append((t_ev, self._x[i]))

    def _process_kill(self, i: int, t_ev: float):
        j = int(self._event_rng.integers(self.n - 1))
        if j >= i:
            j += 1
        self._x[i] = self._x[j]
        self.rebirth_count += 1
        self._last_touch[i] = t_ev
        self._zeta[i] = self._rngs[i].exponential(1.0)
        self._hazard[i] = 0.0
        self._redraw_clocks(i, t_ev)
        if self.paths is not None:
            self.paths[i].append((t_ev, self._x[i]))

    def _redraw_clocks(self, i: int, t_ev: float):
        rng = self._rngs[i]
        holding, target = sample_holding_and_jump(self.model.dynamics, self._x[i], rng)
        self._next_jump_time[i] = t_ev + holding
        self._next_target[i] = target
        k = self.model.killing.rate(self._x[i])
        self._kill_time[i] = (
            t_ev + (self._zeta[i] - self._hazard[i]) / k if k > 0.0 else math.inf
        )
        self._version[i] += 1
        self._push(i)

    def _advance_diffusion(self, target_time: float):
        dyn: DiffusionDynamics = self.model.dynamics
        killing = self.model.killing
        t = self.time
        while target_time - t > _TIME_EPS * max(1.0, target_time):
            h_eff = min(dyn.step_size, target_time - t)
            killed = []
            for i in range(self.n):
                rng = self._rngs[i]
                u = rng.random()
                k = killing.rate(self._x[i])
                if u < -math.expm1(-k * h_eff):
                    killed.append(i)
                else:
                    self._x[i] = _euler_step(dyn, self._x[i], h_eff, rng)
            t += h_eff
            if killed:
                # Multiple deaths inside one step are an artifact of the
                # discretization; rebirths run in uniformly random order and
                # later ones may land on earlier ones' new positions.
                if len(killed) > 1:
                    order = self._event_rng.permutation(len(killed))
                    killed = [killed[k] for k in order]
                for i in killed:
                    j = int(self._event_rng.integers(self.n - 1))
                    if j >= i:
                        j += 1
                    self._x[i] = self._x[j].copy()
                    self.rebirth_count += 1
            if self.paths is not None:
                for i in range(self.n):
                    self.paths[i].append((t, self._x[i].copy()))


def fv_init(
    model: KilledModel,
    n: int,
    initial,
    seed: int,
    record_paths: bool = False,
    certificate=None,
) -> ParticleEnsemble:
    """Build an ensemble of ``n`` particles at time 0.

    ``initial`` is a list of n states, a single state (broadcast), or a
    list of (state, probability) pairs sampled per particle from
    ``substream(seed, TAG_INIT)``. Rebirth needs a surviving partner, so
    n >= 2. When a drift certificate is supplied and n is at or below
    lambda1 / (lambda1 - kappa_sup), the ergodicity threshold of the
    particle system, a warning is issued (not an error).
    """
    if n < 2:
        raise ValueError("a Fleming-Viot ensemble needs at least 2 particles")
    if isinstance(initial, list) and initial and all(_is_weighted_pair(el) for el in initial):
        init_rng = substream(seed, TAG_INIT)
        states = [_sample_initial(initial, init_rng) for _ in range(n)]
    elif isinstance(initial, list):
        states = list(initial)
        if len(states) != n:
            raise ValueError(f"got {len(states)} initial states for n={n}")
    else:
        states = [initial] * n
    for s in states:
        model.space.require(s)
    if not model.is_jump:
        states = [np.array(s, dtype=float) for s in states]
    if certificate is not None:
        lam1, ksup = certificate.lambda1, certificate.kappa_sup
        if ksup > 0 and lam1 > ksup and n <= lam1 / (lam1 - ksup):
            warnings.warn(
                f"n={n} is at or below the ergodicity threshold "
                f"{lam1 / (lam1 - ksup):.3g} of the particle system",
                stacklevel=2,
            )
    return ParticleEnsemble(model, n, states, seed, record_paths=record_paths)


def fv_advance(ens: ParticleEnsemble, dt: float) -> ParticleEnsemble:
    """Advance the ensemble clock by exactly ``dt`` (in place)."""
    ens._advance(dt)
    return ens


def fv_run(
    ens: ParticleEnsemble,
    horizon: float,
    observation_times: Sequence[float],
) -> list:
    """Advance to ``horizon`` snapshotting at the requested times.

    Observation times must be sorted and lie in [ens.time, horizon].
    Returns [(time, EmpiricalMeasure), ...]; the ensemble ends at horizon.
    """
    times = list(observation_times)
    if any(t2 < t1 for t1, t2 in zip(times, times[1:])):
        raise ValueError("observation times must be sorted")
    if times and (times[0] < ens.time - _TIME_EPS or times[-1] > horizon + _TIME_EPS):
        raise ValueError("observation times must lie within [current time, horizon]")
    out = []
    for t in times:
        if t > ens.time:
            fv_advance(ens, t - ens.time)
        out.append((t, ens.snapshot()))
    if horizon > ens.time:
        fv_advance(ens, horizon - ens.time)
    return out


def stationary_samples(
    model: KilledModel,
    n: int,
    burn_in: float,
    sample_gap: float,
    sample_count: int,
    seed: int,
    initial,
    certificate=None,
) -> list:
    """Snapshots of a single long run, every ``sample_gap`` after ``burn_in``.

    Successive samples are correlated (one trajectory of the ensemble);
    error bars over them should use batch means.
    """
    if not (burn_in > 0 and sample_gap > 0):
        raise ValueError("burn_in and sample_gap must be positive")
    if sample_count == 0:
        return []
    ens = fv_init(model, n, initial, seed, certificate=certificate)
    fv_advance(ens, burn_in)
    out = [ens.snapshot()]
    for _ in range(sample_count - 1):
        fv_advance(ens, sample_gap)
        out.append(ens.snapshot())
    return out
