"""Exact QSD and conditioned-semigroup computations on finite truncations.

For a lattice jump model restricted to a finite support, the killed
generator becomes a sub-Markovian matrix A: off-diagonal entries are the
in-support jump rates, and each diagonal absorbs the full outflow (jumps
leaving the truncation count as extra killing) plus kappa. Its leading
left eigenvector is the quasi-stationary distribution on the truncation,
the leading eigenvalue is -lambda0, and the distance between the two
largest real parts is exported as the operational spectral gap.

These quantities are the ground truth the simulation side is tested
against. The truncation bias direction is known (lambda0 is overestimated)
and monitored through the per-state outflow that leaves the support.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ConditioningDegenerateError, ConvergenceError, ModelDefinitionError
from .measures import tv_distance  # noqa: F401  (re-exported: oracle callers bin through here)
from .process import KilledModel


@dataclass(frozen=True)
class TruncatedGenerator:
    """Killed generator restricted to an explicit finite support."""

    support: tuple
    index: dict
    matrix: sp.csr_matrix
    truncation_outflow: np.ndarray  # per-state rate mass leaving the support
    kappa: np.ndarray

    @property
    def size(self) -> int:
        return len(self.support)

    def in_support_rates(self) -> np.ndarray:
        """Per-state jump rate mass staying inside the truncation."""
        diag = self.matrix.diagonal()
        return np.asarray(self.matrix.sum(axis=1)).ravel() - diag

    def total_jump_rates(self) -> np.ndarray:
        """Total jump rate out of each state (in-support plus leaving)."""
        return self.in_support_rates() + self.truncation_outflow

    def vector_from(self, dist) -> np.ndarray:
        """Probability vector aligned to the support from a mapping."""
        v = np.zeros(self.size)
        for state, mass in dict(dist).items():
            key = state if isinstance(state, tuple) else tuple(state)
            if key not in self.index:
                raise ValueError(f"state {state!r} lies outside the truncation")
            v[self.index[key]] = mass
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"initial distribution mass {v.sum()} != 1")
        return v


@dataclass(frozen=True)
class QsdSolution:
    """Leading eigentriple of a truncated killed generator.

    ``nu`` is the QSD on the truncation (left eigenvector, mass 1),
    ``eta`` the survival profile (right eigenvector, eta = 1 at the
    reference state), ``lambda0`` the decay rate and ``gamma`` the spectral
    gap surrogate (None when the truncation has a single state or the
    deflated iteration does not isolate a real subdominant eigenvalue).
    """

    support: tuple
    nu: np.ndarray
    lambda0: float
    gamma: Optional[float]
    eta: np.ndarray
    residual: float
    truncation_outflow_max: float
    iterations: int

    @property
    def size(self) -> int:
        return len(self.support)

    def distribution(self) -> dict:
        return {s: float(p) for s, p in zip(self.support, self.nu)}

    def qsd_integral(self, f: Callable) -> float:
        return float(sum(p * f(s) for s, p in zip(self.support, self.nu)))

    def to_rows(self) -> list:
        """(state coords..., nu, eta) rows for serialization."""
        return [tuple(s) + (float(n), float(e))
                for s, n, e in zip(self.support, self.nu, self.eta)]

    def header(self) -> dict:
        return {
            "lambda0": self.lambda0,
            "gamma": self.gamma,
            "residual": self.residual,
            "truncation_size": self.size,
            "truncation_outflow_max": self.truncation_outflow_max,
        }


def build_truncated_generator(model: KilledModel, support: Sequence[tuple]) -> TruncatedGenerator:
    """Restrict a lattice jump model's killed generator to ``support``.

    Jumps exiting the truncation contribute to the diagonal (extra
    killing) and are tallied per state in ``truncation_outflow``.
    """
    if not model.is_jump:
        raise ModelDefinitionError("the truncated generator requires a lattice jump model")
    support = list(support)
    if not support:
        raise ValueError("support must be non-empty")
    index: dict = {}
    for s in support:
        model.space.require(s)
        if s in index:
            raise ValueError(f"duplicate support state {s!r}")
        index[s] = len(index)
    size = len(support)
    rows, cols, vals = [], [], []
    outflow = np.zeros(size)
    kappa = np.zeros(size)
    for i, s in enumerate(support):
        total = 0.0
        for target, rate in model.dynamics.enumerate_jumps(s):
            rate = float(rate)
            if not math.isfinite(rate) or rate < 0:
                raise ModelDefinitionError(f"invalid rate {rate!r} from {s!r}")
            total += rate
            j = index.get(target)
            if j is None:
                outflow[i] += rate
            else:
                rows.append(i)
                cols.append(j)
                vals.append(rate)
        kappa[i] = model.killing.rate(s)
        rows.append(i)
        cols.append(i)
        vals.append(-total - kappa[i])
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
    return TruncatedGenerator(
        support=tuple(support), index=index, matrix=matrix,
        truncation_outflow=outflow, kappa=kappa,
    )


# ---------------------------------------------------------------------------
# leading eigentriple by shifted power iteration


def _dominant_component(gen: TruncatedGenerator) -> TruncatedGenerator:
    """Restrict a reducible generator to its dominant irreducible class."""
    offdiag = gen.matrix - sp.diags(gen.matrix.diagonal())
    ncomp, labels = connected_components(offdiag, directed=True, connection="strong")
    if ncomp == 1:
        return gen
    warnings.warn(
        f"support is reducible ({ncomp} strongly connected classes); "
        "restricting to the class with the largest leading eigenvalue",
        stacklevel=3,
    )
    best = None
    for c in range(ncomp):
        members = [s for s, l in zip(gen.support, labels) if l == c]
        sub = _restrict(gen, members)
        theta = _rough_leading(sub)
        if best is None or theta > best[0]:
            best = (theta, sub)
    return best[1]


def _restrict(gen: TruncatedGenerator, members: list) -> TruncatedGenerator:
    idx = [gen.index[s] for s in members]
    sub = gen.matrix[np.ix_(idx, idx)].tocsr()
    # rates toward dropped states become truncation outflow
    lost = np.asarray(gen.matrix[idx, :].sum(axis=1)).ravel() - np.asarray(sub.sum(axis=1)).ravel()
    new_out = gen.truncation_outflow[idx] + lost
    sub = sp.csr_matrix(sub - sp.diags(lost))
    return TruncatedGenerator(
        support=tuple(members),
        index={s: k for k, s in enumerate(members)},
        matrix=sub,
        truncation_outflow=new_out,
        kappa=gen.kappa[idx],
    )


def _rough_leading(gen: TruncatedGenerator, iters: int = 2000) -> float:
    s = float(gen.total_jump_rates().max() + gen.kappa.max() + 1.0)
    m = (gen.matrix + s * sp.eye(gen.size)).tocsr()
    v = np.full(gen.size, 1.0 / gen.size)
    theta = s
    for _ in range(iters):
        w = m.T @ v
        theta = w.sum()
        if theta <= 0:
            break
        v = w / theta
    return theta


def leading_eigentriple(
    gen: TruncatedGenerator,
    tol: float = 1e-10,
    max_iter: int = 500_000,
) -> QsdSolution:
    """QSD, decay rate, survival profile and spectral gap of ``gen``.

    Power iteration on A + sI with s = max total outflow + max kappa + 1:
    the shift makes the matrix non-negative with positive diagonal, so the
    iteration converges to the Perron pair. The gap is estimated by a
    deflated iteration under a doubled shift (which makes the whole
    spectrum positive, so modulus order equals real-part order for the
    real spectra of the shipped models).
    """
    gen = _dominant_component(gen)
    size = gen.size
    a = gen.matrix
    shift = float(gen.total_jump_rates().max() + gen.kappa.max() + 1.0)
    m = (a + shift * sp.eye(size)).tocsr()
    mt = m.T.tocsr()

    nu = np.full(size, 1.0 / size)
    eta = np.ones(size)
    theta = shift
    res_left = math.inf
    iterations = 0
    check_every = 10
    while iterations < max_iter:
        for _ in range(check_every):
            w = mt @ nu
            theta = float(w.sum())
            nu = w / theta
            u = m @ eta
            eta = u / float(np.abs(u).max())
            iterations += 1
        res_left = float(np.abs(mt @ nu - theta * nu).sum())
        if res_left <= tol:
            break
    if res_left > tol:
        raise ConvergenceError(
            f"power iteration did not reach residual {tol} in {max_iter} iterations "
            f"(last residual {res_left:.3e})",
            last_iterate=nu,
            residual=res_left,
        )
    lambda0 = shift - theta
    eta = eta / eta[0]  # survival profile normalized at the reference state

    gamma = None
    if size > 1:
        gamma = _spectral_gap(gen, nu, eta, lambda0, max_iter)

    return QsdSolution(
        support=gen.support,
        nu=nu,
        lambda0=lambda0,
        gamma=gamma,
        eta=eta,
        residual=res_left,
        truncation_outflow_max=float(gen.truncation_outflow.max()),
        iterations=iterations,
    )


def _spectral_gap(gen, nu, eta, lambda0, max_iter) -> Optional[float]:
    """Second decay rate minus lambda0, by deflated power iteration."""
    size = gen.size
    shift2 = float(2.0 * gen.total_jump_rates().max() + gen.kappa.max() + 1.0)
    m2 = (gen.matrix + shift2 * sp.eye(size)).tocsr()
    theta1 = shift2 - lambda0
    scale = float(nu @ eta)
    if scale <= 0:
        return None

    def apply(v):
        return m2 @ v - (theta1 / scale) * eta * float(nu @ v)

    rng = np.random.default_rng(0)  # fixed: deterministic linear algebra
    w = rng.standard_normal(size)
    w /= np.abs(w).max()
    theta2 = 0.0
    tol2 = 1e-9
    iterations = 0
    check_every = 20
    while iterations < max_iter:
        for _ in range(check_every):
            v = apply(w)
            norm = float(np.abs(v).max())
            if norm == 0.0:
                return None
            w = v / norm
            iterations += 1
        v = apply(w)
        theta2 = float(w @ v) / float(w @ w)
        if float(np.abs(v - theta2 * w).max()) <= tol2 * max(1.0, abs(theta2)):
            break
    else:
        return None  # complex subdominant pair or too slow: report absent
    lambda2 = shift2 - theta2
    gap = lambda2 - lambda0
    return gap if gap > 0 else None


# ---------------------------------------------------------------------------
# conditioned semigroup by uniformization

_MASS_FLOOR_LOG = math.log(1e-300)


def _uniformized_action(gen: TruncatedGenerator, mu0: np.ndarray, t: float):
    """(vector, log_scale) with vector * exp(log_scale) = mu0^T e^{At}.

    Uniformization with scaled time stepping: A = s (P - I) with P
    sub-stochastic; each substep applies a Poisson-weighted series of P
    truncated when the accumulated Poisson mass reaches 1 - 1e-15, and the
    vector is rescaled through a log accumulator to dodge underflow.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return mu0.copy(), 0.0
    size = gen.size
    s = float((gen.total_jump_rates() + gen.kappa).max())
    if s == 0.0:
        return mu0.copy(), 0.0
    pt = (sp.eye(size) + gen.matrix / s).T.tocsr()
    n_steps = max(1, math.ceil(s * t / 30.0))
    tau = t / n_steps
    lam = s * tau
    log_scale = 0.0
    v = mu0.copy()
    for _ in range(n_steps):
        pmf = math.exp(-lam)
        acc = pmf * v
        cum = pmf
        term = v
        k = 0
        while cum < 1.0 - 1e-15:
            k += 1
            term = pt @ term
            pmf *= lam / k
            acc = acc + pmf * term
            cum += pmf
        v = acc
        mass = float(v.sum())
        if mass <= 0.0 or log_scale + math.log(max(mass, 1e-320)) < _MASS_FLOOR_LOG:
            raise ConditioningDegenerateError(
                f"surviving mass underflowed below 1e-300 at t={t}"
            )
        if mass < 1e-30:
            v = v / mass
            log_scale += math.log(mass)
    return v, log_scale


def conditioned_law(gen: TruncatedGenerator, mu0, t: float) -> np.ndarray:
    """Law of Y_t given survival, started from mu0, on the truncation."""
    vec = mu0 if isinstance(mu0, np.ndarray) else gen.vector_from(mu0)
    if vec.shape != (gen.size,):
        raise ValueError("mu0 has the wrong length for this truncation")
    if abs(float(vec.sum()) - 1.0) > 1e-9 or np.any(vec < -1e-15):
        raise ValueError("mu0 must be a probability vector on the truncation")
    v, _ = _uniformized_action(gen, vec, t)
    return v / float(v.sum())


def survival_probability(gen: TruncatedGenerator, mu0, t: float) -> float:
    """P(t < death) started from mu0, within the truncation."""
    vec = mu0 if isinstance(mu0, np.ndarray) else gen.vector_from(mu0)
    if abs(float(vec.sum()) - 1.0) > 1e-9 or np.any(vec < -1e-15):
        raise ValueError("mu0 must be a probability vector on the truncation")
    v, log_scale = _uniformized_action(gen, vec, t)
    return float(v.sum()) * math.exp(log_scale) if log_scale != 0.0 else float(v.sum())


def survival_ratio_probe(
    gen: TruncatedGenerator,
    states: Sequence[tuple],
    times: Sequence[float],
) -> float:
    """Empirical floor of inf_x P_x(alive) / sup_x P_x(alive) over ``states``.

    A diagnostic probe of the survival-comparability condition on a
    compact set; reported, never asserted as a proof.
    """
    floor = math.inf
    idx = [gen.index[s] for s in states]
    for t in times:
        probs = []
        for i in idx:
            mu = np.zeros(gen.size)
            mu[i] = 1.0
            probs.append(survival_probability(gen, mu, t))
        hi = max(probs)
        lo = min(probs)
        if hi > 0:
            floor = min(floor, lo / hi)
    return floor


# ---------------------------------------------------------------------------
# truncation growth until the decay rate stabilizes


def solve_qsd(
    model: KilledModel,
    level_states: Callable[[int], Sequence[tuple]],
    start_size: int = 50,
    growth: float = 2.0,
    lambda_tol: float = 1e-4,
    tol: float = 1e-10,
    max_size: int = 200_000,
) -> QsdSolution:
    """Grow the truncation geometrically until lambda0 stabilizes.

    ``level_states(k)`` must return a Lyapunov level set containing at
    least k states (level sets nest, so successive supports are nested and
    lambda0 decreases weakly toward its limit).
    """
    size = start_size
    prev = None
    solution = None
    while size <= max_size:
        support = level_states(size)
        gen = build_truncated_generator(model, support)
        solution = leading_eigentriple(gen, tol=tol)
        if prev is not None and abs(solution.lambda0 - prev) < lambda_tol:
            return solution
        prev = solution.lambda0
        size = int(math.ceil(size * growth))
    warnings.warn(
        f"lambda0 did not stabilize within {lambda_tol} below support size {max_size}",
        stacklevel=2,
    )
    return solution
