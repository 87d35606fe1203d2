"""Shipped model families and their Lyapunov drift certificates.

Four families are provided, each built as a killed model (absorption into
the lattice origin is always recast as soft killing: the jumps that would
hit the origin are removed from the dynamics and their rate becomes
kappa, which keeps one uniform killed-process code path):

* birth-death chains on Z_+^d minus the origin,
* continuous-time Galton-Watson (reproduction at rate 1, offspring law p),
* multi-type Galton-Watson with per-type rates and offspring laws,
* diffusions with soft killing on R^d.

Each builder returns a :class:`ModelBundle` holding the model, a
:class:`DriftCertificate` (a norm-like V with constants lambda1 > sup
kappa and C such that LV <= -lambda1 V + C on a probed region), the
reference state and the level-set enumerator the oracle truncates with.

Asymptotic criteria are evaluated on finite growing windows and reported
as PASS / INCONCLUSIVE / FAIL; they are a numerical trend heuristic, not
proofs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ModelDefinitionError
from .process import (
    ContinuousSpace,
    DiffusionDynamics,
    JumpDynamics,
    KilledModel,
    KillingRate,
    LatticeSpace,
)

PASS = "PASS"
INCONCLUSIVE = "INCONCLUSIVE"
FAIL = "FAIL"


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class DriftVerdict:
    passed: bool
    max_slack: float
    argmax_state: object
    region: str
    states_checked: int

    @property
    def label(self) -> str:
        return PASS if self.passed else FAIL


@dataclass(frozen=True)
class DriftCertificate:
    """Norm-like V with constants (lambda1, C) and a checkable verdict.

    ``apply_generator`` is the analytic LV used for diffusions; for jump
    models LV is summed exactly from the jump enumerator.
    """

    V: Callable[[object], float]
    lambda1: float
    C: float
    kappa_sup: float
    family: str
    criterion: Optional[str] = None
    epsilon: Optional[float] = None
    apply_generator: Optional[Callable[[object], float]] = None
    verdict: Optional[DriftVerdict] = None

    def __post_init__(self):
        if not (self.lambda1 > self.kappa_sup):
            raise ModelDefinitionError(
                f"certificate needs lambda1 > sup kappa, got "
                f"lambda1={self.lambda1}, kappa_sup={self.kappa_sup}"
            )
        if self.C < 0:
            raise ModelDefinitionError("C must be >= 0")


@dataclass(frozen=True)
class CriterionReport:
    """Trend of a rate criterion along growing window radii."""

    name: str
    verdict: str
    radii: tuple
    values: tuple  # worst-case criterion value per radius
    delta: Optional[float] = None


@dataclass(frozen=True)
class ModelBundle:
    name: str
    model: KilledModel
    certificate: DriftCertificate
    anchor: object
    params: dict
    level_states: Optional[Callable[[int], list]] = None
    probe_states: tuple = ()
    criteria: tuple = ()

    def min_particles(self) -> int:
        return min_particles(self.certificate)


def jump_generator_apply(model: KilledModel, V: Callable, x) -> float:
    """Exact LV(x) from the jump enumerator of the dynamics kept in E."""
    vx = float(V(x))
    total = 0.0
    for target, rate in model.dynamics.enumerate_jumps(x):
        total += rate * (float(V(target)) - vx)
    return total


def drift_check(model: KilledModel, cert: DriftCertificate, probe: Sequence) -> DriftVerdict:
    """Max of LV + lambda1 V - C over the probe; PASS iff <= 1e-9 (1+|C|).

    Rejected before probing when the certificate's strict inequality
    lambda1 > sup kappa does not hold (certificates enforce it at
    construction, so this guards hand-built ones only).
    """
    if not (cert.lambda1 > cert.kappa_sup):
        raise ModelDefinitionError("lambda1 must exceed sup kappa")
    probe = list(probe)
    if not probe:
        raise ValueError("probe must be non-empty")
    worst = -math.inf
    arg = None
    for x in probe:
        vx = float(cert.V(x))
        if not math.isfinite(vx):
            raise ModelDefinitionError(f"V is non-finite at {x!r}")
        if cert.apply_generator is not None:
            lv = float(cert.apply_generator(x))
        else:
            lv = jump_generator_apply(model, cert.V, x)
        slack = lv + cert.lambda1 * vx - cert.C
        if slack > worst:
            worst = slack
            arg = x
    tol = 1e-9 * (1.0 + abs(cert.C))
    return DriftVerdict(
        passed=worst <= tol,
        max_slack=worst,
        argmax_state=arg,
        region=f"{len(probe)} probe states",
        states_checked=len(probe),
    )


def min_particles(cert: DriftCertificate) -> int:
    """Smallest particle count above lambda1 / (lambda1 - sup kappa).

    This is the exact ergodicity threshold of the particle system; the
    result is floored at 2, the structural minimum for rebirth.
    """
    ratio = cert.lambda1 / (cert.lambda1 - cert.kappa_sup)
    return max(2, math.floor(ratio + 1e-12) + 1)


# ---------------------------------------------------------------------------
# lattice enumeration helpers


def lattice_ball(weights: Sequence[float], cutoff: float) -> list:
    """States x in Z_+^d minus the origin with weights . x <= cutoff."""
    w = [float(c) for c in weights]
    if any(c <= 0 for c in w):
        raise ValueError("weights must be positive")
    d = len(w)
    maxes = [int(math.floor(cutoff / c)) for c in w]
    out = []
    for x in product(*(range(m + 1) for m in maxes)):
        if any(x) and sum(c * xi for c, xi in zip(w, x)) <= cutoff + 1e-12:
            out.append(x)
    out.sort()
    return out


def weighted_level_enumerator(weights: Sequence[float]) -> Callable[[int], list]:
    """Level-set enumerator returning at least ``min_size`` states.

    Level sets of any V that is increasing in weights . x nest, so the
    oracle's geometric truncation growth over these supports is monotone.
    """
    w = list(weights)

    def level_states(min_size: int) -> list:
        cutoff = float(min(w))
        states = lattice_ball(w, cutoff)
        while len(states) < min_size:
            cutoff *= 1.5
            states = lattice_ball(w, cutoff)
        return states

    return level_states


def _sphere_states(dim: int, radius: int) -> list:
    """Lattice states with |x|_1 == radius (worst-case probe shell)."""
    return [x for x in lattice_ball([1.0] * dim, radius)
            if sum(x) == radius]


# ---------------------------------------------------------------------------
# birth-death family


@dataclass(frozen=True)
class BirthDeathParams:
    """Coordinate birth/death rates b_i(x), d_i(x) on Z_+^d minus 0.

    ``birth(x, i)`` must be positive everywhere; ``death(x, i)`` must be
    positive whenever x_i >= 1 (its value at the unit vectors is the
    absorption rate that becomes kappa).
    """

    dimension: int
    birth: Callable[[tuple, int], float]
    death: Callable[[tuple, int], float]

    def __post_init__(self):
        if self.dimension < 1:
            raise ModelDefinitionError("dimension must be >= 1")


def evaluate_drift_ratio_criterion(
    params: BirthDeathParams, radii: Sequence[int] = (4, 8, 16, 32, 64)
) -> CriterionReport:
    """Trend of the normalized net death rate (1/|x|) sum_i (d_i - b_i).

    The criterion requires divergence, so PASS demands sustained geometric
    growth across window doublings; flattening positive values are
    INCONCLUSIVE and decaying or negative edge values FAIL.
    """
    values = []
    for r in radii:
        worst = math.inf
        for x in _sphere_states(params.dimension, r):
            s = sum(
                params.death(x, i) - params.birth(x, i)
                for i in range(params.dimension)
            ) / float(r)
            worst = min(worst, s)
        values.append(worst)
    v = values
    if v[-1] <= 0 or v[-1] < 0.7 * v[-2]:
        verdict = FAIL
    elif v[-1] >= 1.3 * v[-2] > 0 and v[-2] >= 1.3 * v[-3] > 0:
        verdict = PASS
    else:
        verdict = INCONCLUSIVE
    return CriterionReport("drift-ratio", verdict, tuple(radii), tuple(values))


def evaluate_delta_excess_criterion(
    params: BirthDeathParams,
    radii: Sequence[int] = (4, 8, 16, 32, 64),
    deltas: Sequence[float] = (1.05, 1.1, 1.25, 1.5, 2.0, 3.0, 4.0),
) -> CriterionReport:
    """Trend of sum_i (d_i - delta b_i) for some delta > 1.

    PASS accepts a positive non-decreasing trend (a positive constant
    counts: it certifies the exponential-V drift even when the sum is
    merely bounded below rather than divergent).
    """
    best = None
    for delta in deltas:
        values = []
        for r in radii:
            worst = math.inf
            for x in _sphere_states(params.dimension, r):
                s = sum(
                    params.death(x, i) - delta * params.birth(x, i)
                    for i in range(params.dimension)
                )
                worst = min(worst, s)
            values.append(worst)
        slack = 1e-9 * (1.0 + abs(values[-2]))
        if values[-1] > 0 and values[-1] >= values[-2] - slack:
            if best is None or values[-1] > best[1][-1]:
                best = (delta, values)
    if best is not None:
        delta, values = best
        return CriterionReport("delta-excess", PASS, tuple(radii), tuple(values), delta)
    # report the most favorable delta even on failure
    delta = deltas[0]
    values = []
    for r in radii:
        worst = min(
            sum(params.death(x, i) - delta * params.birth(x, i)
                for i in range(params.dimension))
            for x in _sphere_states(params.dimension, r)
        )
        values.append(worst)
    verdict = FAIL if values[-1] <= 0 else INCONCLUSIVE
    return CriterionReport("delta-excess", verdict, tuple(radii), tuple(values), delta)


def _bd_dynamics(params: BirthDeathParams):
    d = params.dimension
    basis = [tuple(1 if j == i else 0 for j in range(d)) for i in range(d)]

    def enumerate_jumps(x):
        out = []
        for i in range(d):
            b = params.birth(x, i)
            up = tuple(x[j] + basis[i][j] for j in range(d))
            out.append((up, b))
            if x[i] >= 1:
                down = tuple(x[j] - basis[i][j] for j in range(d))
                if any(down):
                    out.append((down, params.death(x, i)))
        return out

    def kappa(x):
        for i in range(d):
            if x == basis[i]:
                return params.death(x, i)
        return 0.0

    sup = max(params.death(e, i) for i, e in enumerate(basis))
    return enumerate_jumps, kappa, sup, basis


def build_bd(
    params: BirthDeathParams,
    probe_radius: int = 48,
    name: str = "birth-death",
    epsilon_bounds: tuple = (1e-4, 3.0),
) -> ModelBundle:
    """Birth-death model with absorption recast as killing, plus certificate.

    The Lyapunov family follows the criterion that holds on the probe
    window: |x| under a divergent drift ratio, exp(eps |x|_1) under a
    delta-dominated excess (eps tuned by golden-section search on the
    worst drift ratio). Construction is refused when neither criterion is
    numerically plausible.
    """
    d = params.dimension
    enumerate_jumps, kappa, kappa_sup, basis = _bd_dynamics(params)
    probe = lattice_ball([1.0] * d, probe_radius)
    for x in probe[: min(len(probe), 512)]:
        for i in range(d):
            if params.birth(x, i) <= 0:
                raise ModelDefinitionError(f"birth rate must be positive, b_{i}({x}) <= 0")
            # a zero death rate at a unit vector is allowed: it encodes a
            # model with no absorption (kappa == 0)
            if x[i] >= 1 and params.death(x, i) <= 0 and x not in basis:
                raise ModelDefinitionError(f"death rate must be positive, d_{i}({x}) <= 0")

    model = KilledModel(
        dynamics=JumpDynamics(enumerate_jumps=enumerate_jumps),
        killing=KillingRate(kappa=kappa, sup_bound=kappa_sup),
        space=LatticeSpace(dim=d),
    )

    ratio_report = evaluate_drift_ratio_criterion(params)
    excess_report = evaluate_delta_excess_criterion(params)
    outer = [x for x in probe if sum(x) >= probe_radius // 2]

    def fit(V):
        rate_edge = -max(jump_generator_apply(model, V, x) / V(x) for x in outer)
        return rate_edge

    chosen = None
    if ratio_report.verdict == PASS:
        V = lambda x: float(sum(x))  # noqa: E731
        r_hat = fit(V)
        if r_hat > kappa_sup:
            chosen = ("linear-norm", "drift-ratio", V, None, r_hat)
    if chosen is None and excess_report.verdict == PASS:
        def exp_v(eps):
            return lambda x: math.exp(eps * sum(x))

        def edge_rate(eps):
            return fit(exp_v(eps))

        eps = _golden_max(edge_rate, *epsilon_bounds)
        r_hat = edge_rate(eps)
        if r_hat > kappa_sup:
            chosen = ("exp-norm", "delta-excess", exp_v(eps), eps, r_hat)
    if chosen is None:
        raise ModelDefinitionError(
            "no drift criterion is numerically plausible on the probe window: "
            f"drift-ratio {ratio_report.verdict} {ratio_report.values}, "
            f"delta-excess {excess_report.verdict} {excess_report.values}"
        )

    family, criterion, V, eps, r_hat = chosen
    lambda1 = 0.5 * (kappa_sup + r_hat)
    c_fit = max(0.0, max(jump_generator_apply(model, V, x) + lambda1 * V(x) for x in probe)) + 1.0
    cert = DriftCertificate(
        V=V, lambda1=lambda1, C=c_fit, kappa_sup=kappa_sup,
        family=family, criterion=criterion, epsilon=eps,
    )
    cert = replace(cert, verdict=drift_check(model, cert, probe))
    return ModelBundle(
        name=name,
        model=model,
        certificate=cert,
        anchor=basis[0],
        params={"dimension": d, "kappa_sup": kappa_sup},
        level_states=weighted_level_enumerator([1.0] * d),
        probe_states=tuple(probe),
        criteria=(ratio_report, excess_report),
    )


def _golden_max(f: Callable[[float], float], lo: float, hi: float, iters: int = 60) -> float:
    """Scalar golden-section maximizer (unimodal objective assumed)."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# Galton-Watson family


@dataclass(frozen=True)
class GaltonWatsonParams:
    """Offspring law p with finite support, and the V = x^alpha moment order.

    Requires p(0) > 0, mass on {2, 3, ...}, subcritical mean m in (0, 1)
    and alpha > p(0) / (1 - m).
    """

    offspring: dict
    alpha: float

    def __post_init__(self):
        p = {int(k): float(v) for k, v in self.offspring.items()}
        if any(k < 0 or v < 0 for k, v in p.items()):
            raise ModelDefinitionError("offspring law needs non-negative support and mass")
        if abs(sum(p.values()) - 1.0) > 1e-12:
            raise ModelDefinitionError("offspring law must sum to 1")
        if p.get(0, 0.0) <= 0.0:
            raise ModelDefinitionError("offspring law needs p(0) > 0")
        if sum(v for k, v in p.items() if k >= 2) <= 0.0:
            raise ModelDefinitionError("offspring law needs mass on {2, 3, ...}")
        m = sum(k * v for k, v in p.items())
        if not (0.0 < m < 1.0):
            raise ModelDefinitionError(f"offspring mean must lie in (0, 1), got m={m}")
        if not (self.alpha > p[0] / (1.0 - m)):
            raise ModelDefinitionError(
                f"alpha must exceed p(0)/(1-m) = {p[0] / (1.0 - m)}, got {self.alpha}"
            )
        object.__setattr__(self, "offspring", p)

    @property
    def m(self) -> float:
        return sum(k * v for k, v in self.offspring.items())

    @property
    def p0(self) -> float:
        return self.offspring[0]


def build_gw(
    params: GaltonWatsonParams,
    probe_max: int = 2000,
    name: str = "galton-watson",
) -> ModelBundle:
    """Galton-Watson model (individuals reproduce at rate 1) plus certificate.

    kappa(x) = p(0) 1_{x=1} with sup exactly p(0): the only absorbing jump
    is the last individual dying childless. V(x) = x^alpha, lambda1 the
    midpoint of (p(0), alpha (1 - m)), C fitted on {1..probe_max}.
    """
    p = params.offspring
    alpha = params.alpha
    m = params.m
    items = sorted((k, v) for k, v in p.items() if v > 0)

    def enumerate_jumps(x):
        k = x[0]
        out = []
        for n, prob in items:
            if n == 1:
                continue  # progeny replaces the parent: no state change
            tgt = k + n - 1
            if tgt == 0:
                continue  # absorption carried by kappa
            out.append(((tgt,), k * prob))
        return out

    p0 = params.p0
    kappa = lambda x: p0 if x[0] == 1 else 0.0  # noqa: E731
    model = KilledModel(
        dynamics=JumpDynamics(
            enumerate_jumps=enumerate_jumps,
            rate_bound_hint=lambda x: float(x[0]),
        ),
        killing=KillingRate(kappa=kappa, sup_bound=p0),
        space=LatticeSpace(dim=1),
    )
    V = lambda x: float(x[0]) ** alpha  # noqa: E731
    decay = alpha * (1.0 - m)
    lambda1 = 0.5 * (p0 + decay)
    probe = [(x,) for x in range(1, probe_max + 1)]
    c_fit = max(0.0, max(jump_generator_apply(model, V, x) + lambda1 * V(x) for x in probe)) + 1.0
    cert = DriftCertificate(
        V=V, lambda1=lambda1, C=c_fit, kappa_sup=p0, family="power", criterion=None,
    )
    cert = replace(cert, verdict=drift_check(model, cert, probe))
    return ModelBundle(
        name=name,
        model=model,
        certificate=cert,
        anchor=(1,),
        params={"offspring": dict(items), "alpha": alpha, "m": m},
        level_states=weighted_level_enumerator([1.0]),
        probe_states=tuple(probe),
    )


# ---------------------------------------------------------------------------
# multi-type Galton-Watson family


def perron(q: np.ndarray, tol: float = 1e-12, max_iter: int = 100_000):
    """Perron pair (rho, v) of a matrix with non-negative off-diagonals.

    Shifted power iteration on Q + sI with s = max |diagonal| + 1; v is the
    positive right eigenvector with unit l1 norm. The off-diagonal support
    must be strongly connected.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    if q.shape != (n, n):
        raise ValueError("Q must be square")
    off = q - np.diag(np.diag(q))
    if np.any(off < 0):
        raise ModelDefinitionError("off-diagonal entries must be non-negative")
    if n > 1:
        from scipy.sparse.csgraph import connected_components

        ncomp, _ = connected_components(
            (off > 0).astype(int), directed=True, connection="strong"
        )
        if ncomp != 1:
            raise ModelDefinitionError("off-diagonal support is reducible")
    s = float(np.abs(np.diag(q)).max()) + 1.0
    m = q + s * np.eye(n)
    v = np.full(n, 1.0 / n)
    theta = s
    for _ in range(max_iter):
        w = m @ v
        theta = float(w.sum())
        v = w / theta
        if float(np.abs(m @ v - theta * v).max()) <= tol * max(1.0, theta):
            break
    else:
        raise ModelDefinitionError("Perron iteration did not converge")
    return theta - s, v


@dataclass(frozen=True)
class MultiTypeGWParams:
    """Per-type reproduction rates and offspring laws on lattice vectors.

    Derived: mean matrix M_ij = rate_i * E[offspring_j under p_i],
    Q = M - diag(rates), and the Perron pair (rho, v) of Q. Requires
    rho < 0 (subcritical) and alpha > max_i p_i(0) / (-rho).
    """

    rates: tuple
    offspring: tuple  # per type: dict mapping offspring vectors to probs
    alpha: float

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        if any(r <= 0 for r in rates):
            raise ModelDefinitionError("reproduction rates must be positive")
        d = len(rates)
        laws = []
        for i, law in enumerate(self.offspring):
            clean = {}
            for n, prob in dict(law).items():
                key = tuple(int(c) for c in n)
                if len(key) != d or any(c < 0 for c in key) or prob < 0:
                    raise ModelDefinitionError(f"invalid offspring entry {n!r} for type {i}")
                clean[key] = clean.get(key, 0.0) + float(prob)
            if abs(sum(clean.values()) - 1.0) > 1e-12:
                raise ModelDefinitionError(f"offspring law of type {i} must sum to 1")
            laws.append(clean)
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "offspring", tuple(laws))
        object.__setattr__(self, "_derived", _mtgw_derived(rates, laws, self.alpha))

    @property
    def dimension(self) -> int:
        return len(self.rates)

    @property
    def mean_matrix(self) -> np.ndarray:
        return self._derived[0]

    @property
    def q_matrix(self) -> np.ndarray:
        return self._derived[1]

    @property
    def rho(self) -> float:
        return self._derived[2]

    @property
    def perron_vector(self) -> np.ndarray:
        return self._derived[3]


def _mtgw_derived(rates, laws, alpha):
    d = len(rates)
    m = np.zeros((d, d))
    for i in range(d):
        for n, prob in laws[i].items():
            for j in range(d):
                m[i, j] += rates[i] * n[j] * prob
    q = m - np.diag(rates)
    rho, v = perron(q)
    if rho >= 0:
        raise ModelDefinitionError(f"the mean growth matrix must be subcritical, rho={rho}")
    zero = tuple(0 for _ in range(d))
    p0_max = max(law.get(zero, 0.0) for law in laws)
    if not (alpha > p0_max / (-rho)):
        raise ModelDefinitionError(
            f"alpha must exceed max_i p_i(0)/(-rho) = {p0_max / (-rho)}, got {alpha}"
        )
    return m, q, rho, v


def check_mtgw_irreducibility(params: MultiTypeGWParams, window: int = 20) -> bool:
    """Reachability scan on {|x|_1 <= window}; warns when inconclusive.

    Checks that every window state is forward- and backward-reachable from
    the first unit vector through in-window paths. Paths that detour
    outside the window are invisible here, so a negative answer is a
    warning, not an error.
    """
    d = params.dimension
    states = lattice_ball([1.0] * d, window)
    index = {s: k for k, s in enumerate(states)}
    fwd = {k: [] for k in range(len(states))}
    bwd = {k: [] for k in range(len(states))}
    for s, k in index.items():
        for target, rate in _mtgw_jumps(params, s):
            j = index.get(target)
            if j is not None and rate > 0:
                fwd[k].append(j)
                bwd[j].append(k)
    start = index[tuple(1 if i == 0 else 0 for i in range(d))]

    def reach(adj):
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    ok = len(reach(fwd)) == len(states) and len(reach(bwd)) == len(states)
    if not ok:
        warnings.warn(
            "irreducibility scan inconclusive: not all states within the "
            f"|x|_1 <= {window} window are reachable both ways",
            stacklevel=2,
        )
    return ok


def _mtgw_jumps(params: MultiTypeGWParams, x):
    d = params.dimension
    out = []
    for i in range(d):
        if x[i] == 0:
            continue
        base = params.rates[i] * x[i]
        for n, prob in params.offspring[i].items():
            tgt = tuple(x[j] + n[j] - (1 if j == i else 0) for j in range(d))
            if not any(tgt):
                continue  # absorption carried by kappa
            if tgt == x:
                continue  # progeny replaces parent in kind: no state change
            out.append((tgt, base * prob))
    return out


def build_mtgw(
    params: MultiTypeGWParams,
    probe_radius: int = 64,
    name: str = "multitype-galton-watson",
) -> ModelBundle:
    """Multi-type Galton-Watson model plus certificate.

    kappa(x) = rate_i p_i(0) at the unit vector of type i (the final
    individual dying childless); V(x) = (v . x)^alpha rescaled so the
    minimum over E is 1, lambda1 the midpoint of (sup kappa, alpha (-rho)).
    """
    d = params.dimension
    rho, v = params.rho, params.perron_vector
    zero = tuple(0 for _ in range(d))
    basis = [tuple(1 if j == i else 0 for j in range(d)) for i in range(d)]
    absorb = {basis[i]: params.rates[i] * params.offspring[i].get(zero, 0.0) for i in range(d)}
    kappa_sup = max(absorb.values())
    decay = params.alpha * (-rho)
    if not (decay > kappa_sup):
        raise ModelDefinitionError(
            f"alpha(-rho) = {decay} must exceed sup kappa = {kappa_sup}; raise alpha"
        )
    check_mtgw_irreducibility(params)

    def kappa(x):
        return absorb.get(x, 0.0)

    model = KilledModel(
        dynamics=JumpDynamics(enumerate_jumps=lambda x: _mtgw_jumps(params, x)),
        killing=KillingRate(kappa=kappa, sup_bound=kappa_sup),
        space=LatticeSpace(dim=d),
    )
    vmin = float(v.min())
    alpha = params.alpha

    def V(x):
        return (float(sum(vi * xi for vi, xi in zip(v, x))) / vmin) ** alpha

    lambda1 = 0.5 * (kappa_sup + decay)
    probe = lattice_ball([1.0] * d, probe_radius)
    c_fit = max(0.0, max(jump_generator_apply(model, V, x) + lambda1 * V(x) for x in probe)) + 1.0
    cert = DriftCertificate(
        V=V, lambda1=lambda1, C=c_fit, kappa_sup=kappa_sup, family="weighted-power",
    )
    cert = replace(cert, verdict=drift_check(model, cert, probe))
    return ModelBundle(
        name=name,
        model=model,
        certificate=cert,
        anchor=basis[0],
        params={
            "rates": list(params.rates),
            "alpha": alpha,
            "rho": rho,
            "perron_vector": [float(c) for c in v],
        },
        level_states=weighted_level_enumerator([float(c) for c in v]),
        probe_states=tuple(probe),
    )


# ---------------------------------------------------------------------------
# diffusions with soft killing


@dataclass(frozen=True)
class DiffusionParams:
    """Drift/dispersion pair with inward drift strength and ellipticity bound.

    ``beta`` bounds <b(x), x>/|x| from above by -beta for large |x|;
    ``gamma_ell`` bounds sum_ij a_ij x_i x_j by gamma_ell |x|^2. Requires
    beta^2 > 2 gamma_ell sup kappa and rho with
    rho^2 gamma_ell / 2 + sup kappa < beta rho.
    """

    dimension: int
    drift: Callable[[np.ndarray], np.ndarray]
    dispersion: Callable[[np.ndarray], np.ndarray]
    kappa: Callable[[np.ndarray], float]
    kappa_sup: float
    beta: float
    gamma_ell: float
    rho: float
    step_size: float = 0.01
    noise_dim: Optional[int] = None

    def __post_init__(self):
        if self.beta <= 0 or self.gamma_ell <= 0 or self.rho <= 0:
            raise ModelDefinitionError("beta, gamma_ell and rho must be positive")
        if not (self.beta ** 2 > 2.0 * self.gamma_ell * self.kappa_sup):
            raise ModelDefinitionError(
                "need beta^2 > 2 gamma_ell sup kappa for an admissible Lyapunov exponent"
            )
        if not (self.rho ** 2 * self.gamma_ell / 2.0 + self.kappa_sup < self.beta * self.rho):
            raise ModelDefinitionError(
                "rho violates rho^2 gamma/2 + sup kappa < beta rho"
            )
        if self.noise_dim is None:
            object.__setattr__(self, "noise_dim", self.dimension)


def radial_exp_generator(params: DiffusionParams) -> Callable[[np.ndarray], float]:
    """Analytic LV for V = exp(rho |x|) (exact away from the origin)."""
    rho = params.rho
    d = params.dimension

    def lv(x):
        x = np.asarray(x, dtype=float)
        r = float(np.linalg.norm(x))
        if r <= 0:
            raise ModelDefinitionError("LV of the radial exponential is singular at 0")
        vx = math.exp(rho * r)
        b = np.asarray(params.drift(x), dtype=float)
        sig = np.asarray(params.dispersion(x), dtype=float).reshape(d, params.noise_dim)
        a = sig @ sig.T
        grad = rho * vx * float(b @ x) / r
        xx = np.outer(x, x)
        hess = rho * vx * (rho * xx / r**2 - xx / r**3 + np.eye(d) / r)
        return grad + 0.5 * float(np.sum(a * hess))

    return lv


def diffusion_probe_states(
    dim: int, r_min: float = 0.1, r_max: float = 50.0, n_radii: int = 120
) -> list:
    """Radial probe grid: axis and diagonal directions at log-spaced radii.

    The radial exponential V is not twice differentiable at the origin, so
    the checked region is an annulus.
    """
    radii = np.geomspace(r_min, r_max, n_radii)
    dirs = []
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        dirs.extend([e, -e])
    if dim > 1:
        ones = np.ones(dim) / math.sqrt(dim)
        dirs.extend([ones, -ones])
    return [r * u for r in radii for u in dirs]


def build_diffusion(
    params: DiffusionParams,
    probe: Optional[list] = None,
    name: str = "diffusion",
) -> ModelBundle:
    """Killed diffusion plus certificate V = exp(rho |x|).

    The drift margin epsilon solves (beta - 2 eps) rho = rho^2 gamma/2 +
    sup kappa by bisection; half the root is used so the inequality stays
    strict, and lambda1 = sup kappa + eps rho. C is fitted on an annular
    probe where the asymptotic bound is not yet active.
    """
    rho, beta, gamma_ell = params.rho, params.beta, params.gamma_ell
    target = rho**2 * gamma_ell / 2.0 + params.kappa_sup

    def margin(eps):
        return (beta - 2.0 * eps) * rho - target

    lo, hi = 0.0, beta / 2.0
    if margin(lo) <= 0:
        raise ModelDefinitionError("no admissible drift margin epsilon")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if margin(mid) > 0:
            lo = mid
        else:
            hi = mid
    epsilon = 0.5 * lo
    lambda1 = params.kappa_sup + epsilon * rho

    model = KilledModel(
        dynamics=DiffusionDynamics(
            drift=params.drift,
            dispersion=params.dispersion,
            step_size=params.step_size,
            dim=params.dimension,
            noise_dim=params.noise_dim,
        ),
        killing=KillingRate(kappa=params.kappa, sup_bound=params.kappa_sup),
        space=ContinuousSpace(dim=params.dimension),
    )
    lv = radial_exp_generator(params)
    V = lambda x: math.exp(rho * float(np.linalg.norm(np.asarray(x, dtype=float))))  # noqa: E731
    probe = probe if probe is not None else diffusion_probe_states(params.dimension)
    r_edge = max(float(np.linalg.norm(np.asarray(x))) for x in probe)
    outer = [x for x in probe if float(np.linalg.norm(np.asarray(x))) >= 0.5 * r_edge]
    rate_edge = -max(lv(x) / V(x) for x in outer)
    if rate_edge <= lambda1:
        raise ModelDefinitionError(
            "the declared inward drift strength is not visible on the probe: "
            f"edge decay rate {rate_edge:.6g} <= lambda1 {lambda1:.6g}"
        )
    c_fit = max(0.0, max(lv(x) + lambda1 * V(x) for x in probe)) + 1.0
    cert = DriftCertificate(
        V=V, lambda1=lambda1, C=c_fit, kappa_sup=params.kappa_sup,
        family="radial-exp", epsilon=epsilon, apply_generator=lv,
    )
    cert = replace(cert, verdict=drift_check(model, cert, probe))
    return ModelBundle(
        name=name,
        model=model,
        certificate=cert,
        anchor=np.zeros(params.dimension),
        params={
            "dimension": params.dimension,
            "beta": beta,
            "gamma_ell": gamma_ell,
            "rho": rho,
            "kappa_sup": params.kappa_sup,
            "step_size": params.step_size,
            "epsilon": epsilon,
        },
        probe_states=tuple(np.asarray(x) for x in probe),
    )


# ---------------------------------------------------------------------------
# documented default instances


def default_gw() -> ModelBundle:
    """Offspring 0 w.p. 0.6 and 2 w.p. 0.4 (m = 0.8), V = x^4."""
    return build_gw(GaltonWatsonParams(offspring={0: 0.6, 2: 0.4}, alpha=4.0))


def default_bd_linear() -> ModelBundle:
    """2-d, b_i = 1, d_i = x_i^2: divergent drift ratio, V = |x|."""
    p = BirthDeathParams(
        dimension=2,
        birth=lambda x, i: 1.0,
        death=lambda x, i: float(x[i]) ** 2,
    )
    return build_bd(p, name="bd-superlinear-death")


def default_bd_exponential() -> ModelBundle:
    """2-d, b_i = 1, d_i = x_i: delta-dominated excess, V = exp(eps |x|_1)."""
    p = BirthDeathParams(
        dimension=2,
        birth=lambda x, i: 1.0,
        death=lambda x, i: float(x[i]),
    )
    return build_bd(p, name="bd-linear-death")


def bd_remark_power(b: float = 1.0, d: float = 2.0, a: float = 1.0) -> ModelBundle:
    """1-d, b_x = b x^a, d_x = d x^a with b < d."""
    if not (0 < b < d):
        raise ModelDefinitionError("needs 0 < b < d")
    p = BirthDeathParams(
        dimension=1,
        birth=lambda x, i: b * float(x[0]) ** a,
        death=lambda x, i: d * float(x[0]) ** a,
    )
    return build_bd(p, name="bd-power-rates")


def bd_remark_constant(
    b: float = 1.0, d: float = 2.0, d1: float = 0.15, b1: float = 1.0
) -> ModelBundle:
    """1-d, constant rates b < d away from 1, absorption rate d1 at 1.

    Admissible when (sqrt(d) - sqrt(b))^2 > d1, which bounds the best
    exponential-V drift rate from below.
    """
    if not (0 < b < d and d1 > 0 and b1 > 0):
        raise ModelDefinitionError("needs 0 < b < d and positive d1, b1")
    p = BirthDeathParams(
        dimension=1,
        birth=lambda x, i: b1 if x[0] == 1 else b,
        death=lambda x, i: d1 if x[0] == 1 else d,
    )
    return build_bd(p, name="bd-constant-rates")


def bd_remark_oscillating() -> ModelBundle:
    """1-d, b_x = |sin(x pi / 2)| x + 1, d_x = 4x (oscillating births)."""
    p = BirthDeathParams(
        dimension=1,
        birth=lambda x, i: abs(math.sin(x[0] * math.pi / 2.0)) * x[0] + 1.0,
        death=lambda x, i: 4.0 * float(x[0]),
    )
    return build_bd(p, name="bd-oscillating-rates")


def default_mtgw() -> ModelBundle:
    """Two types feeding each other: p_i = {0: 0.6, 2 e_other: 0.4}."""
    params = MultiTypeGWParams(
        rates=(1.0, 1.0),
        offspring=(
            {(0, 0): 0.6, (0, 2): 0.4},
            {(0, 0): 0.6, (2, 0): 0.4},
        ),
        alpha=4.0,
    )
    return build_mtgw(params)


def default_diffusion(step_size: float = 0.01) -> ModelBundle:
    """1-d Ornstein-Uhlenbeck drift, unit noise, constant killing 0.1."""
    params = DiffusionParams(
        dimension=1,
        drift=lambda x: -x,
        dispersion=lambda x: np.ones((1, 1)),
        kappa=lambda x: 0.1,
        kappa_sup=0.1,
        beta=1.0,
        gamma_ell=1.0,
        rho=0.2,
        step_size=step_size,
    )
    return build_diffusion(params)
