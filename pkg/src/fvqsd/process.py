"""Killed-process semantics and single-trajectory simulation.

A model pairs dynamics with a bounded killing rate kappa. The killed
process follows the dynamics and dies when the accumulated hazard
``integral kappa(X_s) ds`` crosses an independent Exp(1) threshold.

Two dynamics variants are supported and each is tied to a state variant:

* pure-jump dynamics on a non-negative integer lattice (states are tuples
  of ints, the origin is excluded: absorption is always expressed through
  kappa, never through a cemetery state), simulated exactly;
* diffusions on R^d (states are float arrays), discretized by explicit
  Euler-Maruyama with per-step Bernoulli killing.

Random-draw order is part of the contract (the particle system relies on
it to reduce bitwise to independent trajectories when kappa == 0):

  jump models:  Exp(1) kill threshold first, then per visited state one
                exponential holding time plus one uniform when more than
                one jump is enabled;
  diffusions:   per step one uniform (kill check at the step's start
                point), then the Gaussian increment if the step survives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ModelDefinitionError, SimulationError

ALIVE = "alive-at-horizon"
KILLED = "killed"

LatticeState = tuple
JumpList = list  # list of (target state, rate)


# ---------------------------------------------------------------------------
# state spaces


@dataclass(frozen=True)
class LatticeSpace:
    """Non-negative integer vectors of fixed dimension, origin excluded."""

    dim: int

    def contains(self, x) -> bool:
        return (
            isinstance(x, tuple)
            and len(x) == self.dim
            and all(isinstance(c, (int, np.integer)) and c >= 0 for c in x)
            and any(c > 0 for c in x)
        )

    def require(self, x):
        if not self.contains(x):
            raise ModelDefinitionError(
                f"state {x!r} is not a dimension-{self.dim} lattice state in E"
            )


@dataclass(frozen=True)
class ContinuousSpace:
    """R^d with finite coordinates."""

    dim: int

    def contains(self, x) -> bool:
        arr = np.asarray(x, dtype=float)
        return arr.shape == (self.dim,) and bool(np.all(np.isfinite(arr)))

    def require(self, x):
        if not self.contains(x):
            raise ModelDefinitionError(
                f"state {x!r} is not a finite point of R^{self.dim}"
            )


# ---------------------------------------------------------------------------
# dynamics and killing


@dataclass(frozen=True)
class JumpDynamics:
    """Pure-jump dynamics given by a per-state jump enumerator.

    ``enumerate_jumps(x)`` returns the finite list of (target, rate) pairs
    with targets inside E. ``rate_bound_hint`` is a diagnostic upper bound
    on the total rate; it is never used to drive the simulation.
    """

    enumerate_jumps: Callable[[LatticeState], JumpList]
    rate_bound_hint: Optional[Callable[[LatticeState], float]] = None


@dataclass(frozen=True)
class DiffusionDynamics:
    """Euler-Maruyama discretized SDE dX = b(X) dt + sigma(X) dB."""

    drift: Callable[[np.ndarray], np.ndarray]
    dispersion: Callable[[np.ndarray], np.ndarray]  # d x r matrix
    step_size: float
    dim: int
    noise_dim: int

    def __post_init__(self):
        if not (self.step_size > 0):
            raise ModelDefinitionError("step_size must be positive")


@dataclass(frozen=True)
class KillingRate:
    """State-dependent killing rate with a declared finite sup bound."""

    kappa: Callable[[object], float]
    sup_bound: float

    def __post_init__(self):
        if not (math.isfinite(self.sup_bound) and self.sup_bound >= 0):
            raise ModelDefinitionError("killing sup bound must be finite and >= 0")

    def rate(self, x) -> float:
        k = float(self.kappa(x))
        if not (0.0 <= k <= self.sup_bound * (1 + 1e-12) + 1e-300):
            raise ModelDefinitionError(
                f"kappa({x!r}) = {k} violates 0 <= kappa <= {self.sup_bound}"
            )
        return k


def constant_killing(rate: float) -> KillingRate:
    return KillingRate(kappa=lambda _x: rate, sup_bound=rate)


@dataclass(frozen=True)
class KilledModel:
    """Dynamics plus killing on a matching state space."""

    dynamics: JumpDynamics | DiffusionDynamics
    killing: KillingRate
    space: LatticeSpace | ContinuousSpace

    def __post_init__(self):
        jump = isinstance(self.dynamics, JumpDynamics)
        lattice = isinstance(self.space, LatticeSpace)
        if jump != lattice:
            raise ModelDefinitionError(
                "jump dynamics require a lattice space and diffusions a "
                "continuous space; mixed variants are rejected"
            )

    @property
    def is_jump(self) -> bool:
        return isinstance(self.dynamics, JumpDynamics)

    @property
    def dim(self) -> int:
        return self.space.dim


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class KilledTrajectory:
    """Sampled path of one killed run.

    ``path`` holds (time, state) at the start and after every state change
    (every jump, or every Euler step for diffusions); nothing is recorded
    after the kill. ``final_state`` is the state at the horizon (alive) or
    just before death (killed).
    """

    path: list
    status: str
    kill_time: Optional[float]
    final_state: object

    @property
    def killed(self) -> bool:
        return self.status == KILLED

    def state_at(self, t: float):
        """State at time t (last recorded sample at or before t)."""
        if self.killed and self.kill_time is not None and t >= self.kill_time:
            raise ValueError(f"trajectory is dead at time {t}")
        out = None
        for ts, s in self.path:
            if ts > t:
                break
            out = s
        if out is None:
            raise ValueError(f"time {t} precedes the trajectory start")
        return out


# ---------------------------------------------------------------------------
# elementary moves


def sample_holding_and_jump(dyn: JumpDynamics, x, rng: np.random.Generator):
    """Exact realization of one jump: (holding time, next state).

    Returns ``(inf, x)`` without consuming randomness when no jump is
    enabled. Draw order: one exponential, then one uniform if more than
    one target is enabled.
    """
    jumps = dyn.enumerate_jumps(x)
    total = 0.0
    for target, rate in jumps:
        r = float(rate)
        if not math.isfinite(r) or r < 0.0:
            raise ModelDefinitionError(
                f"enumerate_jumps({x!r}) returned invalid rate {rate!r} for {target!r}"
            )
        total += r
    if total == 0.0:
        return math.inf, x
    holding = rng.exponential(1.0 / total)
    if len(jumps) == 1:
        return holding, jumps[0][0]
    u = rng.random() * total
    acc = 0.0
    for target, rate in jumps:
        acc += rate
        if u < acc:
            return holding, target
    return holding, jumps[-1][0]  # u landed on the top boundary


def _euler_step(dyn: DiffusionDynamics, x: np.ndarray, h: float, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(dyn.noise_dim)
    drift = np.asarray(dyn.drift(x), dtype=float)
    disp = np.asarray(dyn.dispersion(x), dtype=float).reshape(dyn.dim, dyn.noise_dim)
    out = x + drift * h + disp @ z * math.sqrt(h)
    if not np.all(np.isfinite(out)):
        raise SimulationError(
            f"diffusion step produced a non-finite state from {x!r} (h={h})"
        )
    return out


def step_diffusion(dyn: DiffusionDynamics, x, rng: np.random.Generator) -> np.ndarray:
    """One Euler-Maruyama step of length ``dyn.step_size``."""
    return _euler_step(dyn, np.asarray(x, dtype=float), dyn.step_size, rng)


# ---------------------------------------------------------------------------
# killed trajectories

_TIME_EPS = 1e-12


def simulate_killed(
    model: KilledModel,
    x0,
    horizon: float,
    rng: np.random.Generator,
    record_path: bool = True,
) -> KilledTrajectory:
    """Simulate the killed process from ``x0`` up to ``horizon``.

    Jump models integrate the hazard exactly segment by segment (kappa is
    constant between jumps) against one Exp(1) threshold and solve the
    crossing time in closed form, so killing carries no discretization
    bias. Diffusions kill per step with probability 1 - exp(-kappa(x) h),
    kappa evaluated at the step's start point.
    """
    if not (horizon > 0):
        raise ValueError("horizon must be positive")
    model.space.require(x0)
    if model.is_jump:
        return _simulate_killed_jump(model, x0, horizon, rng, record_path)
    return _simulate_killed_diffusion(model, x0, horizon, rng, record_path)


def _simulate_killed_jump(model, x0, horizon, rng, record_path):
    dyn = model.dynamics
    killing = model.killing
    zeta = rng.exponential(1.0)
    hazard = 0.0
    t = 0.0
    x = x0
    path = [(0.0, x0)]
    while True:
        holding, nxt = sample_holding_and_jump(dyn, x, rng)
        seg_end = min(t + holding, horizon)
        k = killing.rate(x)
        if k > 0.0 and hazard + k * (seg_end - t) >= zeta:
            kill_time = t + (zeta - hazard) / k
            return KilledTrajectory(path=path if record_path else path[:1],
                                    status=KILLED, kill_time=kill_time, final_state=x)
        hazard += k * (seg_end - t)
        if t + holding >= horizon:
            return KilledTrajectory(path=path if record_path else path[:1],
                                    status=ALIVE, kill_time=None, final_state=x)
        t += holding
        x = nxt
        if record_path:
            path.append((t, x))


def _simulate_killed_diffusion(model, x0, horizon, rng, record_path):
    dyn = model.dynamics
    killing = model.killing
    h = dyn.step_size
    t = 0.0
    x = np.asarray(x0, dtype=float)
    path = [(0.0, x.copy())]
    while horizon - t > _TIME_EPS * max(1.0, horizon):
        h_eff = min(h, horizon - t)
        u = rng.random()
        k = killing.rate(x)
        if u < -math.expm1(-k * h_eff):
            return KilledTrajectory(path=path if record_path else path[:1],
                                    status=KILLED, kill_time=t + h_eff, final_state=x)
        x = _euler_step(dyn, x, h_eff, rng)
        t += h_eff
        if record_path:
            path.append((t, x.copy()))
    return KilledTrajectory(path=path if record_path else path[:1],
                            status=ALIVE, kill_time=None, final_state=x)


def _is_weighted_pair(el) -> bool:
    """True when ``el`` looks like a (state, probability) pair."""
    return (
        isinstance(el, tuple)
        and len(el) == 2
        and isinstance(el[0], (tuple, list, np.ndarray))
        and isinstance(el[1], (int, float))
        and not isinstance(el[1], bool)
    )


def _sample_initial(initial, rng):
    """Draw one starting state from an initial condition spec.

    Accepts a single state or a list of (state, probability) pairs.
    """
    if isinstance(initial, list) and initial and all(_is_weighted_pair(el) for el in initial):
        probs = [p for _, p in initial]
        total = sum(probs)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"initial distribution mass {total} != 1")
        u = rng.random()
        acc = 0.0
        for state, p in initial:
            acc += p
            if u < acc:
                return state
        return initial[-1][0]
    return initial


def conditional_law_estimate(
    model: KilledModel,
    initial,
    t: float,
    replicas: int,
    seed: int,
):
    """Empirical law of survivors at time t over independent killed runs.

    Returns ``(measure, survivor_count)``; the measure is ``None`` when no
    replica survives (degenerate conditioning: the caller decides how to
    react, typically by increasing ``replicas``).

    Replica r draws from ``substream(seed, TAG_REPLICA, r)``, so estimates
    are reproducible and independent of any execution order.
    """
    from .measures import EmpiricalMeasure
    from .streams import TAG_REPLICA, substream

    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    survivors = []
    for r in range(replicas):
        rng = substream(seed, TAG_REPLICA, r)
        x0 = _sample_initial(initial, rng)
        if t == 0.0:
            survivors.append(x0)
            continue
        traj = simulate_killed(model, x0, t, rng, record_path=False)
        if not traj.killed:
            survivors.append(traj.final_state)
    if not survivors:
        return None, 0
    return EmpiricalMeasure(states=tuple(survivors)), len(survivors)
