"""Harness experiments and deterministic result serialization."""

import math

import numpy as np
import pytest

from conftest import geom_chain_model
from fvqsd.experiments import (
    ResultTable,
    batch_stderr,
    constant_function,
    emit,
    fit_line,
    indicator_leq,
    identity_function,
    make_oracle,
    model_digest,
    parallel_map,
    run_conditional_decay,
    run_martingale_check,
    run_moment_bound,
    run_qsd_convergence,
    run_unconditioned_vs_fv,
)
from fvqsd.process import JumpDynamics, KilledModel, KillingRate, LatticeSpace
from fvqsd.zoo import DriftCertificate, ModelBundle, drift_check


# ---------------------------------------------------------------------------
# tables


def sample_table():
    return ResultTable(
        kind="demo",
        columns=("n", "value", "label", "flag"),
        rows=[(25, 0.1, "a", True), (50, 1.0 / 3.0, "b", False), (100, None, "c", True)],
        meta={"seed": 7, "toolkit_version": "0.1.0", "nested": {"x": 0.25}},
    )


def test_round_trip_json(tmp_path):
    table = sample_table()
    path = tmp_path / "t.json"
    emit(table, "json", path)
    parsed = ResultTable.parse_json(path.read_text())
    assert parsed == table


def test_round_trip_csv(tmp_path):
    table = sample_table()
    path = tmp_path / "t.csv"
    emit(table, "csv", path)
    parsed = ResultTable.parse_csv(path.read_text())
    assert parsed == table


def test_emit_deterministic_bytes(tmp_path):
    table = sample_table()
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    emit(table, "csv", p1)
    emit(table, "csv", p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_empty_table_header_only(tmp_path):
    table = ResultTable(kind="demo", columns=("a", "b"), rows=[], meta={"seed": 0})
    path = tmp_path / "empty.csv"
    emit(table, "csv", path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2 and lines[1] == "a,b"
    assert ResultTable.parse_csv(path.read_text()) == table


def test_unknown_format_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit(sample_table(), "xml", tmp_path / "t.xml")


def test_float_17_digits(tmp_path):
    table = ResultTable(kind="demo", columns=("v",), rows=[(0.1 + 0.2,)], meta={})
    path = tmp_path / "f.csv"
    emit(table, "csv", path)
    assert "0.30000000000000004" in path.read_text()


def test_model_digest_stable():
    assert model_digest({"a": 1.0, "b": [1, 2]}) == model_digest({"b": [1, 2], "a": 1.0})
    assert model_digest({"a": 1.0}) != model_digest({"a": 2.0})


# ---------------------------------------------------------------------------
# numerics helpers


def test_fit_line():
    slope, intercept = fit_line([0, 1, 2, 3], [1.0, 3.0, 5.0, 7.0])
    assert slope == pytest.approx(2.0) and intercept == pytest.approx(1.0)


def test_batch_stderr_iid_scale():
    rng = np.random.default_rng(0)
    series = rng.normal(size=4000)
    se = batch_stderr(series, batches=20)
    assert 0.2 / math.sqrt(4000) <= se <= 5.0 / math.sqrt(4000)


def test_parallel_map_is_order_preserving():
    items = list(range(50))
    assert parallel_map(lambda x: x * x, items, threads=4) == [x * x for x in items]


def test_function_factories():
    f = indicator_leq(3)
    assert f.fn((3,)) == 1.0 and f.fn((4,)) == 0.0 and f.sup == 1.0
    g = identity_function()
    assert g.fn((5,)) == 5.0 and g.sup is None
    c = constant_function(2.5)
    assert c.fn((9,)) == 2.5


# ---------------------------------------------------------------------------
# conditional decay


def test_decay_fixed_point_rows(gw_bundle, gw_oracle):
    table = run_conditional_decay(
        gw_bundle, gw_oracle, times=[1.0, 5.0, 10.0],
        mu0=gw_oracle.solution.distribution(), mode="oracle",
    )
    for tv in table.column("tv_to_qsd"):
        assert tv <= 1e-8


def test_decay_oracle_mode_slope(gw_bundle, gw_oracle):
    table = run_conditional_decay(
        gw_bundle, gw_oracle, times=[2, 4, 6, 8, 10, 12, 14, 16, 18, 20], mode="oracle",
    )
    gamma_hat = table.meta["gamma_hat"]
    gamma = table.meta["gamma_oracle"]
    assert gamma_hat > 0
    assert abs(gamma_hat - gamma) <= 0.2 * gamma
    tvs = table.column("tv_to_qsd")
    assert all(b < a for a, b in zip(tvs, tvs[1:]))


def test_decay_mc_mode_close_to_oracle(gw_bundle, gw_oracle):
    table = run_conditional_decay(
        gw_bundle, gw_oracle, times=[2.0, 5.0], mode="mc", replicas=30_000, seed=5,
    )
    oracle_table = run_conditional_decay(gw_bundle, gw_oracle, times=[2.0, 5.0], mode="oracle")
    for mc, ex in zip(table.column("tv_to_qsd"), oracle_table.column("tv_to_qsd")):
        assert abs(mc - ex) <= 0.03


def test_decay_mc_drops_degenerate_times():
    from conftest import frozen_model

    model = frozen_model(5.0)
    bundle = ModelBundle(
        name="frozen", model=model,
        certificate=DriftCertificate(V=lambda s: 1.0, lambda1=6.0, C=7.0,
                                     kappa_sup=5.0, family="t"),
        anchor=(1,), params={},
        level_states=lambda k: [(1,)],
    )
    oracle = make_oracle(bundle, fixed_size=1)
    with pytest.warns(UserWarning, match="no survivors"):
        table = run_conditional_decay(
            bundle, oracle, times=[0.5, 40.0], mode="mc", replicas=50, seed=0,
        )
    assert table.column("t") == [0.5]


# ---------------------------------------------------------------------------
# martingale identity


def test_martingale_t0_exact(gw_bundle):
    table = run_martingale_check(gw_bundle, x0_list=[5], times=[0.0], replicas=10)
    row = table.rows[0]
    assert row[2] == pytest.approx(5.0) and row[3] == 0.0


def test_martingale_identity_small(gw_bundle):
    table = run_martingale_check(
        gw_bundle, x0_list=[5], times=[1.0, 3.0], replicas=20_000, seed=2,
    )
    for row in table.rows:
        x0, t, est, se, dev, z = row
        assert abs(z) <= 5.0
    stderrs = table.column("stderr")
    assert stderrs[0] < stderrs[1]  # variance inflates with t (diagnostic)


def test_martingale_rejects_non_gw(bd_bundle):
    with pytest.raises(ValueError, match="Galton-Watson"):
        run_martingale_check(bd_bundle, x0_list=[1], times=[1.0], replicas=10)


# ---------------------------------------------------------------------------
# moment bound


GEOM_EPS = 0.5 * math.log(2.0)  # optimal exponential drift for rates 1 up, 2 down


def _geom_chain_bundle():
    model = geom_chain_model()
    # V(x) = exp(eps x): LV/V = (e^eps - 1) + 2 (e^-eps - 1) = -(sqrt2 - 1)^2
    cert = DriftCertificate(
        V=lambda s: math.exp(GEOM_EPS * s[0]), lambda1=0.15, C=0.9,
        kappa_sup=0.0, family="exp-norm", epsilon=GEOM_EPS,
    )
    verdict = drift_check(model, cert, [(x,) for x in range(1, 200)])
    assert verdict.passed
    return ModelBundle(name="geom-chain", model=model, certificate=cert,
                       anchor=(1,), params={"chain": "geom"})


def test_moment_bound_no_killing_matches_stationary_mean():
    bundle = _geom_chain_bundle()
    n = 50
    table = run_moment_bound(bundle, n=n, burn_in=30.0, horizon=330.0, seed=6)
    # detailed balance: pi(x) = 2^-x, so E_pi[V] = sum (e^eps / 2)^x = 1 + sqrt(2)
    expected = n * (1.0 + math.sqrt(2.0))
    avg = table.meta["time_average"]
    se = table.meta["stderr"]
    assert abs(avg - expected) <= 5 * se
    assert table.meta["rebirths"] == 0
    # the per-particle drift constants sum over the ensemble: the summed
    # bound holds even when the unscaled one is smaller than n
    assert avg <= table.meta["bound_summed"] + 3 * se


def test_moment_bound_refuses_small_n(gw_bundle):
    with pytest.raises(ValueError, match="threshold"):
        run_moment_bound(gw_bundle, n=7, burn_in=1.0, horizon=10.0)


def test_moment_bound_gw_passes(gw_bundle):
    table = run_moment_bound(gw_bundle, n=20, burn_in=50.0, horizon=250.0, seed=3)
    assert table.meta["passed"]
    assert table.meta["time_average"] <= table.meta["bound"]


# ---------------------------------------------------------------------------
# N-grid convergence and chaos scaling


def test_qsd_convergence_constant_function(gw_bundle, gw_oracle):
    table = run_qsd_convergence(
        gw_bundle, gw_oracle, constant_function(2.0), n_grid=[10, 20],
        samples_per_n=5, seed=1, burn_in=5.0, sample_gap=2.0,
    )
    for err in table.column("mean_abs_error"):
        assert err <= 1e-12


def test_qsd_convergence_reports_rates(gw_bundle, gw_oracle):
    table = run_qsd_convergence(
        gw_bundle, gw_oracle, indicator_leq(3), n_grid=[25, 100],
        samples_per_n=20, seed=2,
    )
    assert table.meta["alpha_theory"] == pytest.approx(
        gw_oracle.solution.gamma / (2 * (0.6 + gw_oracle.solution.gamma)), rel=1e-9
    )
    errs = table.column("mean_abs_error")
    assert errs[1] < errs[0]  # N=100 beats N=25 at this noise level
    assert all(e <= 1.0 for e in errs)  # trivial TV bound for an indicator


def test_chaos_scaling_t0_is_zero(gw_bundle, gw_oracle):
    table = run_unconditioned_vs_fv(
        gw_bundle, gw_oracle, n_values=[25], t_grid=[0.0, 1.0],
        f=indicator_leq(3), replicas=20, seed=3,
    )
    first = table.rows[0]
    assert first[1] == 0.0 and first[2] == pytest.approx(0.0, abs=1e-15)
    assert "t_star" in table.meta and table.meta["d0_hat"] > 0


def test_thread_count_does_not_change_results(gw_bundle, gw_oracle):
    kwargs = dict(n_values=[25], t_grid=[2.0], f=indicator_leq(3), replicas=30, seed=9)
    serial = run_unconditioned_vs_fv(gw_bundle, gw_oracle, threads=1, **kwargs)
    threaded = run_unconditioned_vs_fv(gw_bundle, gw_oracle, threads=4, **kwargs)
    assert serial.to_csv_text() == threaded.to_csv_text()
