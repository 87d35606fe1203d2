"""Fleming-Viot engine: rebirths, snapshots, the kappa == 0 reduction."""

import math
import warnings

import numpy as np
import pytest

from conftest import frozen_model, geom_chain_model, zero_killing
from fvqsd.fv import fv_advance, fv_init, fv_run, stationary_samples
from fvqsd.measures import EmpiricalMeasure, empirical_integral, pool_measures
from fvqsd.process import simulate_killed
from fvqsd.streams import TAG_PARTICLE, substream
from fvqsd.zoo import default_diffusion


# ---------------------------------------------------------------------------
# construction


def test_init_validations(gw_bundle):
    with pytest.raises(ValueError):
        fv_init(gw_bundle.model, 1, (1,), seed=0)
    with pytest.raises(Exception):
        fv_init(gw_bundle.model, 4, (0,), seed=0)  # origin is not in E
    ens = fv_init(gw_bundle.model, 2, (1,), seed=0)
    assert ens.positions == ((1,), (1,))
    ens = fv_init(gw_bundle.model, 100, (5,), seed=0)
    assert ens.snapshot().counts() == {(5,): 100}


def test_init_threshold_warning(gw_bundle):
    cert = gw_bundle.certificate  # threshold: smallest n strictly above 7
    with pytest.warns(UserWarning, match="threshold"):
        fv_init(gw_bundle.model, 7, (1,), seed=0, certificate=cert)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fv_init(gw_bundle.model, 8, (1,), seed=0, certificate=cert)


def test_init_from_distribution(gw_bundle):
    ens = fv_init(gw_bundle.model, 50, [((1,), 0.5), ((4,), 0.5)], seed=3)
    counts = ens.snapshot().counts()
    assert set(counts) <= {(1,), (4,)}
    assert sum(counts.values()) == 50


# ---------------------------------------------------------------------------
# the kappa == 0 reduction (per-particle streams match lone trajectories)


def test_zero_killing_reduction_jump(gw_bundle):
    model = zero_killing(gw_bundle.model)
    n, horizon, seed = 8, 30.0, 1234
    ens = fv_init(model, n, (3,), seed, record_paths=True)
    fv_advance(ens, horizon)
    assert ens.rebirth_count == 0
    for i in range(n):
        solo = simulate_killed(model, (3,), horizon, substream(seed, TAG_PARTICLE, i))
        assert solo.path == ens.paths[i]


def test_zero_killing_reduction_diffusion():
    bundle = default_diffusion(step_size=0.05)
    model = zero_killing(bundle.model)
    n, horizon, seed = 5, 2.0, 77
    ens = fv_init(model, n, np.array([0.5]), seed, record_paths=True)
    fv_advance(ens, horizon)
    assert ens.rebirth_count == 0
    for i in range(n):
        solo = simulate_killed(model, np.array([0.5]), horizon, substream(seed, TAG_PARTICLE, i))
        assert len(solo.path) == len(ens.paths[i])
        for (ts, xs), (te, xe) in zip(solo.path, ens.paths[i]):
            assert ts == te and np.array_equal(xs, xe)


def test_advance_split_invariance(gw_bundle):
    # pending clocks persist across calls: one advance equals two halves
    a = fv_init(gw_bundle.model, 20, (2,), seed=5)
    b = fv_init(gw_bundle.model, 20, (2,), seed=5)
    fv_advance(a, 40.0)
    fv_advance(b, 17.0)
    fv_advance(b, 23.0)
    assert a.positions == b.positions
    assert a.rebirth_count == b.rebirth_count


def test_determinism_same_seed(gw_bundle):
    a = fv_init(gw_bundle.model, 30, (1,), seed=9)
    b = fv_init(gw_bundle.model, 30, (1,), seed=9)
    fv_advance(a, 25.0)
    fv_advance(b, 25.0)
    assert a.positions == b.positions and a.rebirth_count == b.rebirth_count


# ---------------------------------------------------------------------------
# rebirth mechanics


def test_two_frozen_particles_coalesce():
    model = frozen_model(0.5)
    ens = fv_init(model, 2, [(1,), (9,)], seed=21)
    fv_advance(ens, 30.0)
    assert ens.rebirth_count >= 1
    # after the first rebirth both particles sit on one point forever
    assert ens.positions[0] == ens.positions[1]
    pos = set(ens.positions)
    fv_advance(ens, 30.0)
    assert set(ens.positions) == pos


def test_rebirth_rate_bounded(gw_bundle):
    n, horizon = 100, 50.0
    ens = fv_init(gw_bundle.model, n, (5,), seed=7)
    fv_advance(ens, horizon)
    rate = ens.rebirth_count / horizon
    slack = 4.0 * math.sqrt(max(ens.rebirth_count, 1)) / horizon
    assert rate <= n * gw_bundle.model.killing.sup_bound + slack
    assert ens.rebirth_count > 0


def test_positions_stay_in_state_space(gw_bundle):
    ens = fv_init(gw_bundle.model, 40, (1,), seed=13)
    for _ in range(10):
        fv_advance(ens, 5.0)
        for s in ens.positions:
            assert gw_bundle.model.space.contains(s)


# ---------------------------------------------------------------------------
# runs and snapshots


def test_fv_run_empty_observations(gw_bundle):
    ens = fv_init(gw_bundle.model, 10, (1,), seed=1)
    out = fv_run(ens, 5.0, [])
    assert out == []
    assert ens.time == 5.0


def test_fv_run_snapshot_at_current_time(gw_bundle):
    ens = fv_init(gw_bundle.model, 10, (1,), seed=1)
    current = ens.snapshot()
    out = fv_run(ens, 5.0, [0.0])
    assert out[0][0] == 0.0
    assert out[0][1].states == current.states


def test_fv_run_masses_and_times(gw_bundle):
    ens = fv_init(gw_bundle.model, 100, (1,), seed=2)
    out = fv_run(ens, 30.0, [10.0, 20.0, 30.0])
    assert [t for t, _ in out] == [10.0, 20.0, 30.0]
    for _, measure in out:
        assert abs(measure.total_mass() - 1.0) <= 1e-12
        assert measure.n == 100


def test_fv_run_rejects_bad_times(gw_bundle):
    ens = fv_init(gw_bundle.model, 5, (1,), seed=2)
    with pytest.raises(ValueError):
        fv_run(ens, 10.0, [5.0, 3.0])
    with pytest.raises(ValueError):
        fv_run(ens, 10.0, [11.0])


# ---------------------------------------------------------------------------
# stationary sampling


def test_stationary_samples_empty():
    model = geom_chain_model()
    assert stationary_samples(model, 10, 1.0, 1.0, 0, seed=0, initial=(1,)) == []


def test_stationary_samples_no_killing_matches_detailed_balance():
    # pi(x) = 2^-x on {1, 2, ...}: mean 2, and the FV run never rebirths
    model = geom_chain_model()
    samples = stationary_samples(model, 50, 50.0, 2.0, 60, seed=8, initial=(1,))
    assert len(samples) == 60
    means = [s.integral(lambda x: float(x[0])) for s in samples]
    est = float(np.mean(means))
    se = float(np.std(means, ddof=1) / math.sqrt(len(means)))
    assert abs(est - 2.0) <= 5 * max(se, 1e-3)


def test_stationary_moment_against_certificate_bound(gw_bundle, gw_oracle):
    cert = gw_bundle.certificate
    gamma = gw_oracle.solution.gamma
    n = 100
    samples = stationary_samples(
        gw_bundle.model, n, 10.0 / gamma, 5.0 / gamma, 40, seed=4, initial=(1,),
        certificate=cert,
    )
    mu_v = [s.integral(cert.V) for s in samples]
    bound = cert.C / (cert.lambda1 - cert.kappa_sup * n / (n - 1)) / n
    se = float(np.std(mu_v, ddof=1) / math.sqrt(len(mu_v)))
    assert float(np.mean(mu_v)) <= bound + 3 * se


# ---------------------------------------------------------------------------
# empirical measures


def test_empirical_integral_basics():
    m = EmpiricalMeasure(states=tuple([(3,)] * 100))
    assert empirical_integral(m, lambda s: 1.0) == pytest.approx(1.0)
    assert empirical_integral(m, lambda s: float(s[0] <= 2)) == 0.0
    assert empirical_integral(m, lambda s: float(s[0]) ** 2) == pytest.approx(9.0)


def test_empirical_integral_rejects_nonfinite():
    m = EmpiricalMeasure(states=((1,),))
    with pytest.raises(ValueError):
        empirical_integral(m, lambda s: math.inf)


def test_pool_measures():
    a = EmpiricalMeasure(states=((1,), (2,)))
    b = EmpiricalMeasure(states=((2,), (2,)))
    pooled = pool_measures([a, b])
    assert pooled == {(1,): 0.25, (2,): 0.75}
