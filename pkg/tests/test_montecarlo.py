import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfourier import montecarlo
from qfourier.errors import ArgumentError
from qfourier.gaussian import CorrelatedGaussianSource


def test_chunk_counts():
    assert montecarlo.chunk_counts(0) == []
    assert montecarlo.chunk_counts(10, 4) == [4, 4, 2]
    assert montecarlo.chunk_counts(8, 4) == [4, 4]
    with pytest.raises(ArgumentError):
        montecarlo.chunk_counts(-1)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**63), st.integers(1, 20_000), st.integers(2, 6))
def test_thread_count_does_not_change_samples(seed, n, threads):
    def draw(rng, k):
        return rng.standard_normal(k)

    one = montecarlo.sample_values(draw, n, seed, stream=3, threads=1)
    many = montecarlo.sample_values(draw, n, seed, stream=3, threads=threads)
    assert one.shape == (n,) and np.array_equal(one, many)


def test_streams_and_seeds_differ():
    draw = lambda rng, k: rng.standard_normal(k)
    a = montecarlo.sample_values(draw, 100, 1, stream=0)
    assert not np.array_equal(a, montecarlo.sample_values(draw, 100, 1, stream=1))
    assert not np.array_equal(a, montecarlo.sample_values(draw, 100, 2, stream=0))


def test_stream_id_is_stable():
    assert montecarlo.stream_id("pipeline", "forward") == montecarlo.stream_id("pipeline", "forward")
    assert montecarlo.stream_id("a", "bc") != montecarlo.stream_id("ab", "c")
    assert 0 <= montecarlo.stream_id("x") < 2**61 - 1


def test_mean_and_se():
    m, se = montecarlo.mean_and_se([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5
    assert se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert montecarlo.mean_and_se([5.0]) == (5.0, math.inf)
    with pytest.raises(ArgumentError):
        montecarlo.mean_and_se([])


def test_default_threads(monkeypatch):
    monkeypatch.delenv("QFOURIER_THREADS", raising=False)
    assert montecarlo.default_threads() == 1
    montecarlo.set_default_threads(5)
    try:
        monkeypatch.setenv("QFOURIER_THREADS", "2")
        assert montecarlo.default_threads() == 5
    finally:
        montecarlo.set_default_threads(None)
    assert montecarlo.default_threads() == 2


@pytest.mark.parametrize("rho", [0.0, 0.3, 0.7, 1.0])
def test_correlated_sources(rho):
    src = CorrelatedGaussianSource(3, rho, seed=11)
    prod = src.map(lambda g, h: g * h, 200_000)
    m, se = montecarlo.mean_and_se(prod[:, 0])
    assert abs(m - rho) <= 3 * se
    signs = src.map_signs(lambda s, t: s * t, 200_000)
    assert set(np.unique(signs)) <= {-1.0, 1.0}
    m, se = montecarlo.mean_and_se(signs[:, 1])
    assert abs(m - rho) <= 3 * se


def test_source_rejects_negative_correlation():
    with pytest.raises(ArgumentError):
        CorrelatedGaussianSource(1, -0.5, seed=0)
