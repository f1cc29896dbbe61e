import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from slosh.batchfile import EmbeddingBatch
from slosh.poolings import (
    CovConfig,
    FsPoolConfig,
    GemConfig,
    PoolingEmbedder,
    cov_pool,
    fspool_di,
    gem_pool,
)

point_sets = st.integers(1, 4).flatmap(
    lambda d: arrays(np.float64, st.tuples(st.integers(2, 25), st.just(d)),
                     elements=st.floats(-100, 100, allow_nan=False)))


class TestGem:
    def test_mean(self):
        np.testing.assert_array_equal(gem_pool([[1.0], [3.0]], GemConfig(1)), [2.0])

    def test_second_moment(self):
        np.testing.assert_allclose(gem_pool([[1.0], [3.0]], GemConfig(2)), [2.0, np.sqrt(5.0)],
                                   rtol=1e-15)

    @pytest.mark.parametrize("p", [1, 2, 5])
    def test_constant_set(self, p):
        out = gem_pool(np.full((7, 1), 2.5), GemConfig(p))
        np.testing.assert_allclose(out, np.full(p, 2.5), rtol=1e-14)

    def test_negative_coordinates_use_abs(self):
        np.testing.assert_array_equal(gem_pool([[-1.0], [-3.0]]), [2.0])

    def test_length(self, rng):
        assert gem_pool(rng.standard_normal((5, 3)), GemConfig(4)).shape == (12,)

    def test_invalid(self):
        with pytest.raises(ValueError):
            GemConfig(0)
        with pytest.raises(ValueError):
            gem_pool(np.empty((0, 2)))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 3)),
                  elements=st.floats(0, 50, allow_nan=False)))
    def test_power_mean_monotone(self, x):
        out = gem_pool(x, GemConfig(4)).reshape(4, -1)
        assert np.all(np.diff(out, axis=0) >= -1e-12 * (1 + out[1:]))


class TestCov:
    def test_two_points(self):
        np.testing.assert_array_equal(cov_pool([[0.0, 0.0], [2.0, 0.0]]), [2, 0, 0, 0])

    def test_trace_regularizer(self):
        out = cov_pool([[0.0, 0.0], [2.0, 0.0]], CovConfig(0.5))
        np.testing.assert_array_equal(out, [3, 0, 0, 1])

    def test_identical_points(self):
        np.testing.assert_array_equal(cov_pool(np.ones((4, 3))), np.zeros(9))

    def test_rejects_single_point(self):
        with pytest.raises(ValueError):
            cov_pool([[1.0, 2.0]])

    def test_rejects_negative_lambda(self):
        with pytest.raises(ValueError):
            CovConfig(-0.1)

    @settings(max_examples=50, deadline=None)
    @given(point_sets)
    def test_symmetric(self, x):
        d = x.shape[1]
        c = cov_pool(x).reshape(d, d)
        np.testing.assert_array_equal(c, c.T)

    def test_spd_with_lambda(self, rng):
        for _ in range(20):
            d = rng.integers(1, 6)
            x = rng.standard_normal((rng.integers(2, 4), d))
            c = cov_pool(x, CovConfig(0.1)).reshape(d, d)
            assert np.linalg.eigvalsh(c).min() > 1e-10


class TestFsPool:
    def test_sorting(self):
        np.testing.assert_array_equal(fspool_di([[3.0], [1.0]], FsPoolConfig(2)), [1, 3])

    def test_interpolated_grid(self):
        np.testing.assert_array_equal(fspool_di([[1.0], [3.0]], FsPoolConfig(4)), [1, 1, 2, 3])

    def test_feature_major(self):
        x = np.array([[1.0, 10.0], [2.0, 20.0]])
        np.testing.assert_array_equal(fspool_di(x, FsPoolConfig(2)), [1, 2, 10, 20])

    def test_invalid(self):
        with pytest.raises(ValueError):
            FsPoolConfig(0)
        with pytest.raises(ValueError):
            fspool_di(np.empty((0, 1)))

    @settings(max_examples=50, deadline=None)
    @given(point_sets)
    def test_grid_equal_to_n_returns_sorted(self, x):
        n, d = x.shape
        out = fspool_di(x, FsPoolConfig(n)).reshape(d, n).T
        np.testing.assert_array_equal(out, np.sort(x, axis=0))


@settings(max_examples=50, deadline=None)
@given(point_sets, st.randoms(use_true_random=False))
def test_permutation_invariance(x, rnd):
    idx = list(range(x.shape[0]))
    rnd.shuffle(idx)
    y = x[idx]
    for name, cfg in [("gem", GemConfig(3)), ("cov", CovConfig(0.2)), ("fspool_di", FsPoolConfig(5))]:
        emb = PoolingEmbedder(name, cfg)
        np.testing.assert_array_equal(emb(x), emb(y))


def test_unknown_pooling():
    with pytest.raises(ValueError):
        PoolingEmbedder("vlad", None)


def test_pool_batch_round_trip(rng):
    sets = [rng.standard_normal((5, 3)) for _ in range(3)]
    emb = PoolingEmbedder("gem", GemConfig(2))
    vecs = emb.many(sets).astype(np.float32)
    b = EmbeddingBatch(vecs, np.arange(3), np.zeros(3, int), 1, 6, 3, method="gem:p=2;abs")
    data = b.to_bytes()
    assert data[:4] == b"POOL"
    c = EmbeddingBatch.from_bytes(data)
    assert c.method == "gem:p=2;abs"
    np.testing.assert_array_equal(c.vectors, vecs)
