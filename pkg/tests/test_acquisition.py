from collections import Counter
from itertools import combinations

import numpy as np
import pytest
from scipy.stats import chisquare

from llmpe.acquisition import (ACQUISITIONS, AcquisitionError, CandidatePool, QueryHistory,
                               boltzmann, double_thompson_sample, infomax, random_pair,
                               select_query)
from llmpe.domain import CourseCatalog


def eye_pool(n, d=6):
    X = np.zeros((n, d))
    for i in range(n):
        X[i, i % d] = 1
        if i >= d:
            X[i, (i + 1) % d] = 1
    return CandidatePool(X)


def test_history_is_unordered():
    h = QueryHistory()
    a, b = np.array([1, 0, 0]), np.array([0, 1, 0])
    h.add(a, b)
    assert (b, a) in h and (a, b) in h and len(h) == 1


def test_pool_rejects_duplicates():
    with pytest.raises(ValueError):
        CandidatePool(np.zeros((2, 3)))


def test_full_pool_enumerates_catalog():
    assert len(CandidatePool.full(CourseCatalog(5, 2))) == 16


def test_dts_identical_members_gives_argmax_and_runner_up():
    pool = eye_pool(5)
    u = np.tile([0.1, 0.9, 0.5, 0.7, 0.2], (3, 1))
    for seed in range(5):
        assert double_thompson_sample(u, pool, QueryHistory(), np.random.default_rng(seed)) == (1, 3)


def test_dts_disjoint_argmaxes_pairs_them_often():
    pool = eye_pool(4)
    u = np.array([[1.0, 0.0, 0.5, 0.2], [0.0, 1.0, 0.5, 0.2]])
    rng = np.random.default_rng(0)
    hits = sum(set(double_thompson_sample(u, pool, QueryHistory(), rng)) == {0, 1}
               for _ in range(2000))
    assert hits / 2000 >= 0.5


@pytest.mark.parametrize("selector", [double_thompson_sample, infomax, boltzmann])
def test_pool_of_two_returns_that_pair(selector):
    pool = eye_pool(2)
    u = np.array([[0.3, 0.6], [0.2, 0.1]])
    assert set(selector(u, pool, QueryHistory(), np.random.default_rng(0))) == {0, 1}


def test_random_pool_of_two_and_last_pair():
    pool = eye_pool(4)
    assert set(random_pair(eye_pool(2), QueryHistory(), np.random.default_rng(0))) == {0, 1}
    h = QueryHistory()
    for i, j in combinations(range(4), 2):
        if (i, j) != (1, 3):
            h.add(pool.X[i], pool.X[j])
    assert set(random_pair(pool, h, np.random.default_rng(0))) == {1, 3}
    h.add(pool.X[1], pool.X[3])
    with pytest.raises(AcquisitionError):
        random_pair(pool, h, np.random.default_rng(0))


def test_random_pair_is_uniform():
    pool = eye_pool(4)
    rng = np.random.default_rng(1)
    counts = Counter(frozenset(random_pair(pool, QueryHistory(), rng)) for _ in range(10_000))
    assert len(counts) == 6
    sigma = np.sqrt(10_000 * (1 / 6) * (5 / 6))
    assert all(abs(c - 10_000 / 6) < 3 * sigma for c in counts.values())


def test_infomax_identical_members_returns_first_pair():
    pool = eye_pool(3)
    u = np.tile([0.1, 0.2, 0.3], (4, 1))
    assert infomax(u, pool, QueryHistory(), np.random.default_rng(0)) == (0, 1)


def test_infomax_prefers_disagreement():
    pool = eye_pool(4)
    # members agree that 2 > 3 but disagree on 0 vs 1
    u = np.array([[2.0, -2.0, 1.0, 0.0], [-2.0, 2.0, 1.0, 0.0]])
    assert set(infomax(u, pool, QueryHistory(), np.random.default_rng(0))) == {0, 1}


def test_infomax_skips_history():
    pool = eye_pool(4)
    u = np.array([[2.0, -2.0, 1.0, 0.0], [-2.0, 2.0, 1.0, 0.0]])
    h = QueryHistory()
    h.add(pool.X[0], pool.X[1])
    assert set(infomax(u, pool, h, np.random.default_rng(0))) != {0, 1}


def test_boltzmann_high_temperature_is_uniform():
    pool = eye_pool(3)
    u = np.array([[0.0, 1.0, 2.0]])
    rng = np.random.default_rng(0)
    firsts = [boltzmann(u, pool, QueryHistory(), rng, temperature=1e9)[0] for _ in range(10_000)]
    counts = np.bincount(firsts, minlength=3)
    assert chisquare(counts).pvalue > 1e-3


def test_boltzmann_low_temperature_picks_top_two():
    pool = eye_pool(5)
    u = np.array([[0.0, 3.0, 1.0, 2.5, 0.5]])
    rng = np.random.default_rng(0)
    for _ in range(100):
        assert set(boltzmann(u, pool, QueryHistory(), rng, temperature=1e-3)) == {1, 3}


def test_boltzmann_default_temperature_flat_utilities():
    pool = eye_pool(4)
    i, j = boltzmann(np.zeros((2, 4)), pool, QueryHistory(), np.random.default_rng(0))
    assert i != j


@pytest.mark.parametrize("kind", ACQUISITIONS)
def test_select_query_is_reproducible_and_admissible(kind):
    cat = CourseCatalog()
    w = np.random.default_rng(0).uniform(size=(3, 25))

    def run(seed):
        rng = np.random.default_rng(seed)
        h = QueryHistory()
        out = []
        for _ in range(20):
            a, b = select_query(kind, lambda X: w @ X.T, lambda r: CandidatePool.sample(cat, 64, r),
                                h, rng)
            assert not np.array_equal(a, b) and (a, b) not in h
            cat.validate(np.stack([a, b]))
            h.add(a, b)
            out.append((a.tobytes(), b.tobytes()))
        return out

    assert run(3) == run(3)


def test_select_query_unknown_kind():
    with pytest.raises(ValueError):
        select_query("ucb", None, None, QueryHistory(), np.random.default_rng(0))


def test_select_query_gives_up_on_exhausted_pool():
    pool = eye_pool(2)
    h = QueryHistory()
    h.add(pool.X[0], pool.X[1])
    with pytest.raises(AcquisitionError):
        select_query("random", None, lambda r: pool, h, np.random.default_rng(0), max_retries=2)
