import pytest

from pgupdate.grid import GridSpec
from pgupdate.truncation import thresholds_from_proportions
from pgupdate.variogram import Structure, VariogramModel

# Five-domain proportions used throughout (rounded percentages renormalise
# inside thresholds_from_proportions).
PROPORTIONS = (0.1420, 0.4004, 0.3648, 0.0692, 0.0233)
DOMAINS = ("VOLC", "HEM", "DOLM", "DOLT", "SKRN")


@pytest.fixture
def grid2d():
    return GridSpec(10, 8, 1, 5.0, 5.0, 5.0)


@pytest.fixture
def grid3d():
    return GridSpec(6, 5, 4, 2.0, 2.0, 2.0)


@pytest.fixture
def sph_model():
    return VariogramModel(0.0, (Structure("spherical", 1.0, (10.0, 10.0, 10.0)),))


@pytest.fixture
def five_domain_rule():
    return thresholds_from_proportions(DOMAINS, PROPORTIONS)


def normal_quantile_oracle(p: float, tol: float = 1e-12) -> float:
    """Bisection inverse of the normal CDF via math.erf; independent of scipy."""
    import math

    def cdf(x):
        return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))

    lo, hi = -40.0, 40.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
