"""Shared execution layer behind the CLI and the HTTP service.

Every entry point takes a validated :class:`ConfigDocument` and returns a
pydantic result model (plus, where a file artifact is defined, the
deterministic :class:`ResultTable` the CLI writes to disk). Keeping this
layer pure of I/O makes the CLI a thin client of the same surface the
service exposes.
"""

from __future__ import annotations

import math
import warnings
from typing import Optional

import numpy as np
from pydantic import BaseModel

from .config import (
    BirthDeathSection,
    ConfigDocument,
    DiffusionSection,
    GaltonWatsonSection,
    MultiTypeGWSection,
    TestFunctionSection,
)
from .errors import ConfigError, ModelDefinitionError
from .experiments import (
    OracleRef,
    ResultTable,
    TestFunction,
    base_meta,
    constant_function,
    identity_function,
    indicator_leq,
    make_oracle,
    run_conditional_decay,
    run_martingale_check,
    run_moment_bound,
    run_qsd_convergence,
    run_unconditioned_vs_fv,
)
from .fv import fv_init, fv_run
from .measures import EmpiricalMeasure
from .zoo import (
    BirthDeathParams,
    DiffusionParams,
    GaltonWatsonParams,
    ModelBundle,
    MultiTypeGWParams,
    build_bd,
    build_diffusion,
    build_gw,
    build_mtgw,
    min_particles,
)


# ---------------------------------------------------------------------------
# model construction from config


def _rate_callable(spec, override: Optional[float], dimension: int):
    basis = {tuple(1 if j == i else 0 for j in range(dimension)): i for i in range(dimension)}

    def base(x, i):
        if spec.kind == "constant":
            return spec.coeff
        if spec.kind == "coordinate-power":
            return spec.coeff * float(x[i]) ** spec.exponent
        return spec.coeff * abs(math.sin(x[i] * math.pi / 2.0)) * x[i] + spec.offset

    if override is None:
        return base

    def with_override(x, i):
        if basis.get(x) == i:
            return override
        return base(x, i)

    return with_override


def build_bundle(section) -> ModelBundle:
    """Instantiate the model family a config section describes."""
    if isinstance(section, GaltonWatsonSection):
        return build_gw(GaltonWatsonParams(offspring=section.offspring, alpha=section.alpha))
    if isinstance(section, BirthDeathSection):
        d = section.dimension
        params = BirthDeathParams(
            dimension=d,
            birth=_rate_callable(section.birth, None, d),
            death=_rate_callable(section.death, section.absorption_override, d),
        )
        return build_bd(params)
    if isinstance(section, MultiTypeGWSection):
        laws = tuple(
            {tuple(entry.n): entry.p for entry in law} for law in section.offspring
        )
        return build_mtgw(
            MultiTypeGWParams(rates=tuple(section.rates), offspring=laws, alpha=section.alpha)
        )
    if isinstance(section, DiffusionSection):
        d = section.dimension
        c_drift, c_disp, c_kappa = section.drift_coeff, section.dispersion, section.killing_rate
        params = DiffusionParams(
            dimension=d,
            drift=lambda x: c_drift * x,
            dispersion=lambda x: c_disp * np.eye(d),
            kappa=lambda x: c_kappa,
            kappa_sup=c_kappa,
            beta=section.beta,
            gamma_ell=section.gamma_ell,
            rho=section.rho,
            step_size=section.step_size,
        )
        return build_diffusion(params)
    raise ConfigError(f"unsupported model section {type(section).__name__}")


def build_test_function(section: TestFunctionSection) -> TestFunction:
    if section.kind == "indicator-leq":
        return indicator_leq(section.threshold)
    if section.kind == "identity":
        return identity_function()
    return constant_function(section.value)


def _oracle_for(doc: ConfigDocument, bundle: ModelBundle) -> OracleRef:
    o = doc.oracle
    if bundle.level_states is None:
        raise ConfigError(
            f"model {bundle.name} has no exact truncation oracle (lattice models only)"
        )
    oracle = make_oracle(
        bundle,
        start_size=o.start_size,
        growth=o.growth,
        lambda_tol=o.lambda_tol,
        tol=o.residual_tol,
        fixed_size=o.fixed_size,
    )
    if o.fixed_size is not None and oracle.solution.truncation_outflow_max > 0:
        warnings.warn(
            "fixed truncation override: rate mass up to "
            f"{oracle.solution.truncation_outflow_max:.6g} per state leaves the "
            "support, so lambda0 is overestimated",
            stacklevel=2,
        )
    return oracle


# ---------------------------------------------------------------------------
# response models


class CriterionInfo(BaseModel):
    name: str
    verdict: str
    radii: list[int]
    values: list[float]
    delta: Optional[float] = None


class VerdictInfo(BaseModel):
    passed: bool
    max_slack: float
    region: str
    states_checked: int


class CertificateInfo(BaseModel):
    family: str
    criterion: Optional[str]
    epsilon: Optional[float]
    lambda1: float
    C: float
    kappa_sup: float
    min_particles: int
    verdict: VerdictInfo


class CheckResult(BaseModel):
    model: str
    status: str  # PASS | FAIL
    certificate: Optional[CertificateInfo] = None
    criteria: list[CriterionInfo] = []
    message: Optional[str] = None


class QsdHeader(BaseModel):
    lambda0: float
    gamma: Optional[float]
    residual: float
    truncation_size: int
    truncation_outflow_max: float


class QsdResult(BaseModel):
    model: str
    header: QsdHeader
    states: list[list[int]]
    nu: list[float]
    eta: list[float]


class SnapshotInfo(BaseModel):
    time: float
    atoms: list[list[float]]
    counts: list[int]


class FvResult(BaseModel):
    model: str
    n: int
    horizon: float
    rebirth_count: int
    snapshots: list[SnapshotInfo]


class ExperimentResult(BaseModel):
    kind: str
    columns: list[str]
    rows: list[list]
    meta: dict


# ---------------------------------------------------------------------------
# entry points


def run_check(doc: ConfigDocument) -> CheckResult:
    """Build the model, evaluate its criteria and drift certificate."""
    try:
        bundle = build_bundle(doc.model)
    except ModelDefinitionError as err:
        return CheckResult(model=doc.model.family, status="FAIL", message=str(err))
    cert = bundle.certificate
    info = CertificateInfo(
        family=cert.family,
        criterion=cert.criterion,
        epsilon=cert.epsilon,
        lambda1=cert.lambda1,
        C=cert.C,
        kappa_sup=cert.kappa_sup,
        min_particles=min_particles(cert),
        verdict=VerdictInfo(
            passed=cert.verdict.passed,
            max_slack=cert.verdict.max_slack,
            region=cert.verdict.region,
            states_checked=cert.verdict.states_checked,
        ),
    )
    criteria = [
        CriterionInfo(
            name=r.name,
            verdict=r.verdict,
            radii=list(r.radii),
            values=[float(v) for v in r.values],
            delta=r.delta,
        )
        for r in bundle.criteria
    ]
    status = "PASS" if cert.verdict.passed else "FAIL"
    return CheckResult(model=bundle.name, status=status, certificate=info, criteria=criteria)


def run_qsd(doc: ConfigDocument) -> tuple[QsdResult, ResultTable]:
    """Solve the QSD oracle; returns the result and its file table."""
    bundle = build_bundle(doc.model)
    oracle = _oracle_for(doc, bundle)
    sol = oracle.solution
    dim = bundle.model.dim
    result = QsdResult(
        model=bundle.name,
        header=QsdHeader(**sol.header()),
        states=[list(s) for s in sol.support],
        nu=[float(v) for v in sol.nu],
        eta=[float(v) for v in sol.eta],
    )
    columns = tuple(f"x{i}" for i in range(dim)) + ("nu", "eta")
    rows = [tuple(int(c) for c in s) + (float(n), float(e))
            for s, n, e in zip(sol.support, sol.nu, sol.eta)]
    meta = base_meta("qsd-solution", bundle, doc.runtime.seed, **sol.header())
    table = ResultTable(kind="qsd-solution", columns=columns, rows=rows, meta=meta)
    return result, table


def run_fv(doc: ConfigDocument) -> tuple[FvResult, ResultTable]:
    """Run one ensemble and snapshot its empirical measures."""
    if doc.fv is None:
        raise ConfigError("the document has no fv section")
    bundle = build_bundle(doc.model)
    spec = doc.fv
    if spec.initial is None:
        initial = bundle.anchor
    elif bundle.model.is_jump:
        initial = tuple(int(c) for c in spec.initial)
    else:
        initial = np.asarray(spec.initial, dtype=float)
    ens = fv_init(bundle.model, spec.n, initial, seed=doc.runtime.seed,
                  certificate=bundle.certificate)
    snaps = fv_run(ens, spec.horizon, spec.observation_times)
    infos = []
    rows = []
    dim = bundle.model.dim
    for t, measure in snaps:
        counts = sorted(measure.counts().items())
        infos.append(SnapshotInfo(
            time=t,
            atoms=[[float(c) for c in s] for s, _ in counts],
            counts=[c for _, c in counts],
        ))
        for s, c in counts:
            rows.append((float(t),) + tuple(float(x) for x in s) + (int(c), c / measure.n))
    columns = ("time",) + tuple(f"x{i}" for i in range(dim)) + ("count", "weight")
    meta = base_meta("fv-snapshots", bundle, doc.runtime.seed,
                     n=spec.n, horizon=spec.horizon, rebirth_count=ens.rebirth_count)
    table = ResultTable(kind="fv-snapshots", columns=columns, rows=rows, meta=meta)
    result = FvResult(
        model=bundle.name, n=spec.n, horizon=spec.horizon,
        rebirth_count=ens.rebirth_count, snapshots=infos,
    )
    return result, table


def run_experiment(doc: ConfigDocument) -> ResultTable:
    """Dispatch the experiment section onto the harness."""
    if doc.experiment is None:
        raise ConfigError("the document has no experiment section")
    bundle = build_bundle(doc.model)
    exp = doc.experiment
    seed = doc.runtime.seed
    threads = doc.runtime.threads
    kind = exp.kind
    if kind == "conditional-decay":
        oracle = _oracle_for(doc, bundle)
        if exp.mode == "mc" and exp.replicas < 1:
            raise ConfigError("mc mode needs replicas >= 1")
        return run_conditional_decay(
            bundle, oracle, exp.times, mode=exp.mode, replicas=exp.replicas, seed=seed,
        )
    if kind == "martingale":
        if "m" not in bundle.params:
            raise ConfigError(
                f"the martingale experiment applies to Galton-Watson models, not {bundle.name}"
            )
        return run_martingale_check(
            bundle, exp.x0, exp.times, exp.replicas, seed=seed, threads=threads,
        )
    if kind == "moment-bound":
        burn_in = exp.burn_in
        if burn_in is None:
            oracle = _oracle_for(doc, bundle)
            gamma = oracle.solution.gamma or 0.1
            burn_in = 10.0 / gamma
        if burn_in >= exp.horizon:
            raise ConfigError("burn_in must be smaller than the horizon")
        return run_moment_bound(bundle, exp.n, burn_in, exp.horizon, seed=seed)
    if kind == "qsd-convergence":
        oracle = _oracle_for(doc, bundle)
        return run_qsd_convergence(
            bundle, oracle, build_test_function(exp.f), exp.n_grid, exp.samples_per_n,
            seed=seed, threads=threads, burn_in=exp.burn_in, sample_gap=exp.sample_gap,
        )
    if kind == "chaos-scaling":
        oracle = _oracle_for(doc, bundle)
        return run_unconditioned_vs_fv(
            bundle, oracle, exp.n_grid, exp.times, build_test_function(exp.f),
            exp.replicas, seed=seed, threads=threads,
        )
    raise ConfigError(f"unknown experiment kind {kind!r}")


def experiment_result(table: ResultTable) -> ExperimentResult:
    return ExperimentResult(
        kind=table.kind,
        columns=list(table.columns),
        rows=[list(r) for r in table.rows],
        meta=table.meta,
    )
