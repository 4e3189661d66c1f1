import math

import numpy as np
import pytest


def ks_critical(n: int, m: int, alpha: float = 0.01) -> float:
    """Asymptotic two-sample Kolmogorov-Smirnov critical value."""
    c = math.sqrt(-0.5 * math.log(alpha / 2))
    return c * math.sqrt((n + m) / (n * m))


@pytest.fixture
def ref_rng():
    # independent reference generator (PCG64), never used by the package itself
    return np.random.default_rng(987654321)
