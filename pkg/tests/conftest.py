"""Shared lab objects: the two reference eigensolves, built once."""

import pytest

from qsdlab import (TruncationDomain, build_and_solve, drift_from_growth,
                    logistic_growth, ou_drift, yaglom_measure)

LOGISTIC_DOMAIN = TruncationDomain(x_min=1e-3, x_max=6.0, n=4096,
                                   grid_kind="sqrt")
OU_DOMAIN = TruncationDomain(x_min=1e-4, x_max=8.0, n=4096,
                             grid_kind="uniform")


@pytest.fixture(scope="session")
def logistic_sd():
    # population preset r=1, c=1, gamma=1 with 32 modes
    d = drift_from_growth(logistic_growth(1.0, 1.0, 1.0))
    return build_and_solve(d, LOGISTIC_DOMAIN, K=32)


@pytest.fixture(scope="session")
def logistic_ym(logistic_sd):
    return yaglom_measure(logistic_sd)


@pytest.fixture(scope="session")
def ou_sd():
    # confining drift q(x) = x; 16 modes keep the kernel honest at t=1
    return build_and_solve(ou_drift(1.0), OU_DOMAIN, K=16)
