"""Shared fixtures: default model bundles and their oracles."""

import pytest

from fvqsd.experiments import make_oracle
from fvqsd.process import JumpDynamics, KilledModel, KillingRate, LatticeSpace
from fvqsd.zoo import bd_remark_constant, default_gw


@pytest.fixture(scope="session")
def gw_bundle():
    return default_gw()


@pytest.fixture(scope="session")
def gw_oracle(gw_bundle):
    return make_oracle(gw_bundle)


@pytest.fixture(scope="session")
def bd_bundle():
    return bd_remark_constant()


@pytest.fixture(scope="session")
def bd_oracle(bd_bundle):
    return make_oracle(bd_bundle)


def frozen_model(rate: float) -> KilledModel:
    """No jumps at all; the state is absorbing within E."""
    return KilledModel(
        dynamics=JumpDynamics(enumerate_jumps=lambda x: []),
        killing=KillingRate(kappa=lambda x: rate, sup_bound=rate),
        space=LatticeSpace(dim=1),
    )


def geom_chain_model() -> KilledModel:
    """Positive recurrent chain on {1, 2, ...} with no killing.

    Birth rate 1, death rate 2 for x >= 2: detailed balance gives the
    stationary law pi(x) = 2^-x with mean exactly 2.
    """

    def jumps(x):
        k = x[0]
        out = [((k + 1,), 1.0)]
        if k >= 2:
            out.append(((k - 1,), 2.0))
        return out

    return KilledModel(
        dynamics=JumpDynamics(enumerate_jumps=jumps),
        killing=KillingRate(kappa=lambda x: 0.0, sup_bound=0.0),
        space=LatticeSpace(dim=1),
    )


def zero_killing(model: KilledModel) -> KilledModel:
    return KilledModel(
        dynamics=model.dynamics,
        killing=KillingRate(kappa=lambda x: 0.0, sup_bound=0.0),
        space=model.space,
    )
