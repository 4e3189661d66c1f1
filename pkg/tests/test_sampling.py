import math

import numpy as np
import pytest
from scipy import stats

from sllnlab.errors import EmptyRequestError, ParameterError
from sllnlab.sampling import (QuantileRep, SeededStream, draw_exponentials, draw_normals,
                              log_uniform_order_stats, sample_weibull_domain, uniform_order_stats)

from conftest import ks_critical


def test_exponentials_deterministic():
    a = draw_exponentials(SeededStream(11), 1000)
    b = draw_exponentials(SeededStream(11), 1000)
    assert np.array_equal(a, b)


def test_counter_advances_by_n_and_resumes():
    s = SeededStream(5)
    first = draw_exponentials(s, 7)
    assert s.counter == 7
    rest = draw_exponentials(s, 13)
    assert s.counter == 20
    whole = draw_exponentials(SeededStream(5), 20)
    assert np.array_equal(np.concatenate([first, rest]), whole)


def test_same_seed_and_counter_same_variate():
    s = SeededStream(3, counter=1234)
    assert draw_exponentials(s.fork(), 1)[0] == draw_exponentials(SeededStream(3, 1234), 1)[0]


def test_zero_request_errors():
    with pytest.raises(EmptyRequestError):
        draw_exponentials(SeededStream(1), 0)
    with pytest.raises(EmptyRequestError):
        uniform_order_stats(SeededStream(1), 0)


def test_exponential_mean_and_survival(ref_rng):
    e = draw_exponentials(SeededStream(2024), 10**6)
    assert abs(e.mean() - 1.0) < 0.01
    assert abs((e > 1).mean() - math.exp(-1)) < 0.005
    # agrees in law with an independent reference generator
    ref = ref_rng.standard_exponential(10**5)
    assert stats.ks_2samp(e[:10**5], ref).statistic < ks_critical(10**5, 10**5)


def test_normals_standard():
    z = draw_normals(SeededStream(8), 10**5)
    assert abs(z.mean()) < 3 / math.sqrt(10**5)
    assert abs(z.var() - 1) < 0.02


def test_distinct_seeds_uncorrelated():
    a = draw_exponentials(SeededStream(1), 10**5)
    b = draw_exponentials(SeededStream(2), 10**5)
    assert abs(np.corrcoef(a, b)[0, 1]) < 3 / math.sqrt(10**5)


def test_single_order_stat_uniform():
    vals = np.array([uniform_order_stats(SeededStream(s), 1).values[0] for s in range(10**5)])
    assert abs(vals.mean() - 0.5) < 0.005


def test_order_stats_sorted():
    u = uniform_order_stats(SeededStream(3), 1000).values
    assert np.all(np.diff(u) > 0)
    assert u[0] > 0 and u[-1] < 1


def test_order_stats_ks_against_sorted_uniforms(ref_rng):
    reps, n = 10**4, 50
    ours = np.vstack([uniform_order_stats(SeededStream(s), n).values for s in range(reps)])
    ref = np.sort(ref_rng.random((reps, n)), axis=1)
    crit = ks_critical(reps, reps)
    for j in (0, 9, 24, 49):
        assert stats.ks_2samp(ours[:, j], ref[:, j]).statistic < crit


def test_malmquist_spacings_unit_exponential():
    n = 10**5
    logu = log_uniform_order_stats(SeededStream(77), n)
    j = np.arange(1, n)
    spacings = j * (logu[1:] - logu[:-1])
    se = spacings.std(ddof=1) / math.sqrt(spacings.size)
    assert abs(spacings.mean() - 1) < 3 * se


def test_log_order_stats_representable_for_large_n():
    logu = log_uniform_order_stats(SeededStream(1), 10**6)
    assert np.all(np.isfinite(logu))
    assert logu[0] < -10


def test_quantile_rep_validation():
    with pytest.raises(ParameterError):
        QuantileRep(c=0).validate()
    with pytest.raises(ParameterError):
        QuantileRep(gamma=-1).validate()
    with pytest.raises(ParameterError):
        QuantileRep(exponent_mode="other").validate()
    with pytest.raises(ParameterError):
        QuantileRep(p=lambda u: 0 * u + 1.0).validate()
    QuantileRep(p=lambda u: u, b=lambda u: u**2).validate()


def test_quantile_reduces_to_power():
    rep = QuantileRep(y0=0.0, c=1.0, gamma=2.0)
    u = np.array([0.1, 0.5, 0.9])
    assert np.allclose(rep.quantile_upper(u), -(u**2))
    inv = QuantileRep(y0=1.0, gamma=2.0, exponent_mode="inverse_gamma")
    assert np.allclose(inv.quantile_upper(u), 1 - np.sqrt(u))


def test_quantile_with_b_integral():
    # b(t) = t gives int_u^1 dt = 1 - u
    rep = QuantileRep(gamma=1.0, b=lambda t: t)
    u = np.array([0.25, 0.5, 0.01])
    assert np.allclose(rep.distance_to_endpoint(u), u * np.exp(1 - u), rtol=1e-8)


def test_weibull_sample_reduces_to_negated_uniform():
    y = sample_weibull_domain(SeededStream(4), 10**5, QuantileRep(gamma=1.0)).values
    assert abs(y.mean() + 0.5) < 0.005


def test_weibull_sample_sorted_below_endpoint():
    y = sample_weibull_domain(SeededStream(9), 1000, QuantileRep(y0=2.5, gamma=3.0)).values
    assert np.all(np.diff(y) >= 0)
    assert np.all(y < 2.5)


def test_weibull_max_approaches_endpoint():
    n = 10**5
    bound = (10 * math.log(n) / n) ** 2
    hits = sum(-sample_weibull_domain(SeededStream(s), n, QuantileRep(gamma=2.0)).values[-1] <= bound
               for s in range(100))
    assert hits >= 99


def test_weibull_invalid_rep():
    with pytest.raises(ParameterError):
        sample_weibull_domain(SeededStream(1), 10, QuantileRep(c=-1.0))
