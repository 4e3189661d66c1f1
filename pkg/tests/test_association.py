import math

import numpy as np
import pytest

from sllnlab.association import (AssocGenerator, check_monotone_maps, check_newman_lemma,
                                 empirical_cov_model, gaussian_factor, generate,
                                 load_correlation_csv, replicate)
from sllnlab.conditions import EmpiricalModel, eval_kolmogorov
from sllnlab.errors import ContractError, DecompositionError, ParameterError
from sllnlab.process import product_cov
from sllnlab.sampling import SeededStream, draw_exponentials, draw_normals


def geometric_corr(i, j):
    return 0.5 ** np.abs(i - j)


def test_generator_deterministic():
    g = AssocGenerator.gaussian(rule=geometric_corr)
    a = generate(g, SeededStream(3), 20)
    b = generate(g, SeededStream(3), 20)
    assert np.array_equal(a, b)
    r = replicate(g, 5, 3, base_seed=10)
    assert np.array_equal(r[2], generate(g, SeededStream.for_replicate(10, 2), 5))


def test_iid_lag_one_uncorrelated():
    x = generate(AssocGenerator.iid("exponential"), SeededStream(1), 10**5)
    c = (x[:-1] - x.mean()) * (x[1:] - x.mean())
    se = c.std(ddof=1) / math.sqrt(c.size)
    assert abs(c.mean()) < 3 * se


def test_gaussian_factor_reproduces_matrix():
    i = np.arange(1, 31)
    corr = geometric_corr(i[:, None], i[None, :])
    b = gaussian_factor(corr)
    assert np.allclose(b @ b.T, corr, atol=1e-12)


def test_gaussian_covariance_empirical():
    x = replicate(AssocGenerator.gaussian(rule=geometric_corr), 4, 20000, base_seed=5)
    model = empirical_cov_model(x)
    i = np.arange(1, 5)
    exact = geometric_corr(i[:, None], i[None, :])
    assert np.all(np.abs(model.matrix_ - exact) < 3.5 * model.se)


def test_partial_sums_variance_linear():
    n, reps = 50, 4000
    x = replicate(AssocGenerator.partial_sums(AssocGenerator.iid("normal")), n, reps)
    last = x[:, -1]
    v = last.var(ddof=1) / n
    # variance of a sample variance of normals is 2 sigma**4 / (R - 1)
    se = math.sqrt(2.0 / (reps - 1))
    assert abs(v - 1.0) < 3 * se
    assert np.all(empirical_cov_model(x[:, :5]).matrix_ > 0)


def test_monotone_transform_keeps_positive_covariances():
    base = AssocGenerator.gaussian(rule=geometric_corr)
    g = AssocGenerator.transform(base, np.tanh)
    model = empirical_cov_model(replicate(g, 4, 5000))
    assert np.all(model.matrix_ > -3 * model.se)
    grid = np.sort(np.random.default_rng(0).normal(size=(50, 4)), axis=0)
    assert check_monotone_maps(np.tanh, grid)
    assert not check_monotone_maps(np.sin, 4 * grid)


def test_negatively_associated_generators():
    m = empirical_cov_model(replicate(AssocGenerator.multinomial(10, [0.2, 0.3, 0.5]), 3, 5000))
    off = ~np.eye(3, dtype=bool)
    assert np.all(m.matrix_[off] < 0)
    # multinomial: Cov(N_1, N_2) = -n p_1 p_2
    assert abs(m.matrix_[0, 1] + 10 * 0.2 * 0.3) < 3 * m.se[0, 1]
    p = empirical_cov_model(replicate(AssocGenerator.permutation([1.0, 2.0, 3.0, 4.0]), 4, 5000))
    assert np.all(p.matrix_[~np.eye(4, dtype=bool)] < 0)
    assert np.allclose(np.sort(generate(AssocGenerator.permutation([3, 1, 2]), SeededStream(1), 3)),
                       [1, 2, 3])


def test_decomposition_errors_carry_indices():
    bad = np.array([[1.0, 0.9, 0.0], [0.9, 1.0, 0.9], [0.0, 0.9, 1.0]])
    with pytest.raises(DecompositionError) as e:
        gaussian_factor(bad)
    assert e.value.indices == (1, 2, 3)
    neg = np.eye(3)
    neg[0, 2] = neg[2, 0] = -0.1
    with pytest.raises(DecompositionError) as e:
        gaussian_factor(neg)
    assert e.value.indices == (1, 3)
    asym = np.eye(2)
    asym[0, 1] = 0.3
    with pytest.raises(DecompositionError) as e:
        gaussian_factor(asym)
    assert set(e.value.indices) == {1, 2}


def test_generator_validation():
    with pytest.raises(ParameterError):
        AssocGenerator.iid("cauchy")
    with pytest.raises(ParameterError):
        AssocGenerator.gaussian()
    with pytest.raises(ParameterError):
        AssocGenerator.multinomial(5, [0.5, 0.6])
    with pytest.raises(ParameterError):
        AssocGenerator.partial_sums(AssocGenerator.gaussian(rule=geometric_corr))
    with pytest.raises(ParameterError):
        generate(AssocGenerator.iid(), SeededStream(1), 0)
    with pytest.raises(ParameterError):
        AssocGenerator.gaussian(matrix=np.eye(2)).correlation(3)


def test_empirical_model_degenerate_and_warnings():
    x = np.ones((50, 3))
    m = empirical_cov_model(x)
    assert np.all(m.matrix_ == 0) and np.all(m.se == 0)
    assert isinstance(m, EmpiricalModel)
    with pytest.raises(ParameterError):
        empirical_cov_model(np.ones((1, 3)))
    with pytest.warns(UserWarning):
        empirical_cov_model(np.random.default_rng(0).normal(size=(10, 3)))


def test_empirical_model_iid_is_diagonal():
    x = replicate(AssocGenerator.iid("normal"), 5, 20000)
    m = empirical_cov_model(x)
    assert np.all(np.abs(m.matrix_ - np.eye(5)) < 3.5 * m.se + 1e-12)
    rep = eval_kolmogorov(m, 5)
    assert rep.condition_id


def test_load_correlation_csv(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("# corr\n1,0.5\n0.5,1\n")
    c = load_correlation_csv(p)
    assert c.tolist() == [[1.0, 0.5], [0.5, 1.0]]
    x = generate(AssocGenerator.gaussian(matrix=c), SeededStream(1), 2)
    assert x.shape == (2,)
    p.write_text("1,0.5\n")
    with pytest.raises(ParameterError):
        load_correlation_csv(p)


def same_normal(stream, reps):
    z = draw_normals(stream, reps)
    return z, z


def test_newman_identity_and_sine():
    ident = check_newman_lemma(same_normal, lambda x: x, lambda y: y, 1.0, 1.0, 20000)
    assert ident.holds and ident.cov_fg == pytest.approx(ident.cov_xy)
    s = check_newman_lemma(same_normal, np.sin, np.sin, 1.0, 1.0, 20000, base_seed=4)
    assert s.holds
    assert abs(s.cov_fg - (1 - math.exp(-2)) / 2) < 3 * s.cov_fg_se
    assert s.bound == pytest.approx(s.cov_xy)


def block_products(i, j, k, gamma):
    h = np.arange(i, k, dtype=np.float64)

    def sampler(stream, reps):
        e = draw_exponentials(stream, reps * h.size).reshape(reps, h.size) / h
        x = np.exp(-gamma * e.sum(axis=1))
        y = np.exp(-gamma * e[:, j - i:].sum(axis=1))
        return x, y

    return sampler


def test_newman_block_products_against_exact_covariance():
    i, j, k, gamma = 3, 6, 12, 1.5
    exact = product_cov(i, j, k, gamma)
    chk = check_newman_lemma(block_products(i, j, k, gamma), lambda x: x, lambda y: y, 1.0, 1.0, 50000)
    assert abs(chk.cov_xy - exact) < 3 * chk.cov_xy_se
    sq = check_newman_lemma(block_products(i, j, k, gamma), np.square, np.log1p, 2.0, 1.0, 50000,
                            exact_cov_xy=exact)
    assert sq.holds and sq.cov_xy_se == 0.0


def test_newman_rejects_small_reps_and_negative_pairs():
    with pytest.raises(ParameterError):
        check_newman_lemma(same_normal, np.sin, np.sin, 1, 1, 999)

    def opposite(stream, reps):
        z = draw_normals(stream, reps)
        return z, -z

    with pytest.raises(ContractError):
        check_newman_lemma(opposite, np.sin, np.sin, 1, 1, 5000)
