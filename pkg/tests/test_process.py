"""Killed-process semantics: exact jump clocks, Euler steps, killing."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import frozen_model, zero_killing
from fvqsd.errors import ModelDefinitionError
from fvqsd.measures import tv_distance
from fvqsd.oracle import survival_probability
from fvqsd.process import (
    ALIVE,
    KILLED,
    ContinuousSpace,
    DiffusionDynamics,
    JumpDynamics,
    KilledModel,
    KillingRate,
    LatticeSpace,
    conditional_law_estimate,
    sample_holding_and_jump,
    simulate_killed,
    step_diffusion,
)
from fvqsd.streams import substream


# ---------------------------------------------------------------------------
# spaces and model pairing


def test_lattice_space_membership():
    space = LatticeSpace(dim=2)
    assert space.contains((1, 0))
    assert not space.contains((0, 0))  # origin excluded
    assert not space.contains((1, -1))
    assert not space.contains((1,))
    assert not space.contains((1.5, 0))


def test_mixed_variant_rejected():
    jd = JumpDynamics(enumerate_jumps=lambda x: [])
    with pytest.raises(ModelDefinitionError):
        KilledModel(dynamics=jd, killing=KillingRate(lambda x: 0.0, 0.0),
                    space=ContinuousSpace(dim=1))
    dd = DiffusionDynamics(drift=lambda x: -x, dispersion=lambda x: np.eye(1),
                           step_size=0.1, dim=1, noise_dim=1)
    with pytest.raises(ModelDefinitionError):
        KilledModel(dynamics=dd, killing=KillingRate(lambda x: 0.0, 0.0),
                    space=LatticeSpace(dim=1))


def test_killing_rate_sup_violation_detected():
    killing = KillingRate(kappa=lambda x: 2.0, sup_bound=1.0)
    with pytest.raises(ModelDefinitionError):
        killing.rate((1,))


# ---------------------------------------------------------------------------
# jump clock


def test_single_enabled_jump_deterministic_target():
    # birth-death at x=1 with birth 1 and the death folded into killing
    dyn = JumpDynamics(enumerate_jumps=lambda x: [((x[0] + 1,), 1.0)])
    rng = substream(0)
    holdings = []
    for _ in range(100_000):
        h, nxt = sample_holding_and_jump(dyn, (1,), rng)
        assert nxt == (2,)
        holdings.append(h)
    mean = float(np.mean(holdings))
    se = float(np.std(holdings, ddof=1) / math.sqrt(len(holdings)))
    assert abs(mean - 1.0) <= 4 * se


def test_gw_rates_at_three(gw_bundle):
    # total rate 3 at x=3; offspring 0 moves down, offspring 2 moves up
    dyn = gw_bundle.model.dynamics
    jumps = dict(dyn.enumerate_jumps((3,)))
    assert jumps == {(2,): pytest.approx(1.8), (4,): pytest.approx(1.2)}
    rng = substream(1)
    draws = [sample_holding_and_jump(dyn, (3,), rng) for _ in range(50_000)]
    mean_holding = float(np.mean([h for h, _ in draws]))
    up = sum(1 for _, nxt in draws if nxt == (4,)) / len(draws)
    assert abs(mean_holding - 1.0 / 3.0) <= 4 * (1.0 / 3.0) / math.sqrt(len(draws))
    assert abs(up - 0.4) <= 4 * math.sqrt(0.4 * 0.6 / len(draws))


def test_empty_jump_list_returns_inf_without_consuming():
    dyn = JumpDynamics(enumerate_jumps=lambda x: [])
    rng = substream(5)
    h, nxt = sample_holding_and_jump(dyn, (7,), rng)
    assert h == math.inf and nxt == (7,)
    # no randomness consumed: the next draw equals a fresh stream's first
    assert rng.random() == substream(5).random()


def test_invalid_rate_rejected():
    dyn = JumpDynamics(enumerate_jumps=lambda x: [((2,), -1.0)])
    with pytest.raises(ModelDefinitionError):
        sample_holding_and_jump(dyn, (1,), substream(0))
    dyn = JumpDynamics(enumerate_jumps=lambda x: [((2,), math.inf)])
    with pytest.raises(ModelDefinitionError):
        sample_holding_and_jump(dyn, (1,), substream(0))


# ---------------------------------------------------------------------------
# diffusion steps


def _ou(step=0.01, sigma=1.0):
    return DiffusionDynamics(
        drift=lambda x: -x,
        dispersion=lambda x: sigma * np.eye(1),
        step_size=step,
        dim=1,
        noise_dim=1,
    )


def test_frozen_dynamics_identity():
    dyn = DiffusionDynamics(drift=lambda x: np.zeros(1), dispersion=lambda x: np.zeros((1, 1)),
                            step_size=0.5, dim=1, noise_dim=1)
    out = step_diffusion(dyn, np.array([2.5]), substream(0))
    assert out[0] == 2.5


def test_deterministic_flow_exact():
    dyn = _ou(step=0.01, sigma=0.0)
    out = step_diffusion(dyn, np.array([1.0]), substream(0))
    assert out[0] == pytest.approx(0.99, abs=0.0)


def test_one_step_moments_monte_carlo():
    dyn = _ou(step=0.01, sigma=1.0)
    rng = substream(3)
    draws = np.array([step_diffusion(dyn, np.array([0.0]), rng)[0] for _ in range(100_000)])
    sigma_one_step = math.sqrt(0.01)
    assert abs(draws.mean()) <= 3 * sigma_one_step / math.sqrt(draws.size)
    assert abs(draws.std() - sigma_one_step) <= 3 * sigma_one_step / math.sqrt(draws.size)


def test_nonfinite_step_reported():
    dyn = DiffusionDynamics(drift=lambda x: np.array([math.inf]),
                            dispersion=lambda x: np.eye(1),
                            step_size=0.1, dim=1, noise_dim=1)
    from fvqsd.errors import SimulationError

    with pytest.raises(SimulationError):
        step_diffusion(dyn, np.array([1.0]), substream(0))


# ---------------------------------------------------------------------------
# killed trajectories


def test_no_killing_always_alive(gw_bundle):
    model = zero_killing(gw_bundle.model)
    for seed in range(20):
        traj = simulate_killed(model, (2,), 10.0, substream(seed))
        assert traj.status == ALIVE and traj.kill_time is None


def test_frozen_dynamics_exponential_kill_time():
    c = 0.7
    model = frozen_model(c)
    kills = []
    for seed in range(100_000):
        traj = simulate_killed(model, (1,), 1000.0, substream(seed), record_path=False)
        assert traj.status == KILLED
        kills.append(traj.kill_time)
    mean = float(np.mean(kills))
    se = float(np.std(kills, ddof=1) / math.sqrt(len(kills)))
    assert abs(mean - 1.0 / c) <= 3 * se


def test_survival_matches_oracle(gw_bundle, gw_oracle):
    t, replicas = 10.0, 40_000
    alive = 0
    for r in range(replicas):
        traj = simulate_killed(gw_bundle.model, (1,), t, substream(9, 0, r), record_path=False)
        alive += not traj.killed
    p_hat = alive / replicas
    p_exact = survival_probability(gw_oracle.gen, {(1,): 1.0}, t)
    se = math.sqrt(p_exact * (1 - p_exact) / replicas)
    assert abs(p_hat - p_exact) <= 4 * se


def test_survival_lower_bound(gw_bundle):
    # single-particle version of the bounded-rebirth-rate property
    t, replicas = 5.0, 20_000
    alive = sum(
        not simulate_killed(gw_bundle.model, (1,), t, substream(11, 0, r), record_path=False).killed
        for r in range(replicas)
    )
    p_hat = alive / replicas
    floor = math.exp(-gw_bundle.model.killing.sup_bound * t)
    se = math.sqrt(max(p_hat * (1 - p_hat), 1e-6) / replicas)
    assert p_hat >= floor - 4 * se


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000),
       c1=st.floats(min_value=0.01, max_value=2.0),
       extra=st.floats(min_value=0.0, max_value=2.0))
def test_killing_monotonicity_under_coupling(gw_bundle, seed, c1, extra):
    # same draws, pointwise larger rate: death cannot come later
    dynamics = gw_bundle.model.dynamics
    space = gw_bundle.model.space

    def with_rate(c):
        return KilledModel(
            dynamics=dynamics,
            killing=KillingRate(kappa=lambda x: c / x[0], sup_bound=c),
            space=space,
        )

    t1 = simulate_killed(with_rate(c1), (2,), 50.0, substream(seed), record_path=False)
    t2 = simulate_killed(with_rate(c1 + extra), (2,), 50.0, substream(seed), record_path=False)
    k1 = t1.kill_time if t1.killed else math.inf
    k2 = t2.kill_time if t2.killed else math.inf
    assert k2 <= k1 + 1e-12


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_trajectory_invariants(gw_bundle, seed):
    traj = simulate_killed(gw_bundle.model, (3,), 8.0, substream(seed))
    times = [t for t, _ in traj.path]
    assert times[0] == 0.0
    assert all(t2 > t1 for t1, t2 in zip(times, times[1:]))
    if traj.killed:
        assert traj.kill_time <= 8.0
        assert all(t <= traj.kill_time for t in times)
    for _, s in traj.path:
        assert gw_bundle.model.space.contains(s)


def test_state_at():
    model = frozen_model(0.0)
    traj = simulate_killed(model, (4,), 2.0, substream(0))
    assert traj.state_at(1.0) == (4,)
    with pytest.raises(ValueError):
        traj.state_at(-0.5)


# ---------------------------------------------------------------------------
# conditioned-law estimation


def test_conditional_law_no_killing_t0(gw_bundle):
    model = zero_killing(gw_bundle.model)
    measure, survivors = conditional_law_estimate(model, (5,), 0.0, 500, seed=1)
    assert survivors == 500
    assert measure.distribution() == {(5,): 1.0}


def test_conditional_law_state_independent_killing():
    # constant kappa cancels under conditioning: the law stays the initial law
    model = frozen_model(0.5)
    measure, survivors = conditional_law_estimate(model, (3,), 2.0, 2000, seed=2)
    assert 0 < survivors < 2000
    assert measure.distribution() == {(3,): 1.0}


def test_conditional_law_matches_oracle(gw_bundle, gw_oracle):
    from fvqsd.oracle import conditioned_law

    t = 5.0
    measure, survivors = conditional_law_estimate(gw_bundle.model, (1,), t, 100_000, seed=3)
    law = conditioned_law(gw_oracle.gen, gw_oracle.gen.vector_from({(1,): 1.0}), t)
    assert tv_distance(measure, (gw_oracle.solution.support, law)) <= 0.02


def test_conditional_law_degenerate():
    model = frozen_model(50.0)
    measure, survivors = conditional_law_estimate(model, (1,), 5.0, 200, seed=4)
    assert survivors == 0 and measure is None
