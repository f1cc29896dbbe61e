import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slosh.batchfile import EmbeddingBatch
from slosh.errors import FormatError
from slosh.ot_core import gsw_estimate
from slosh.poolings import FsPoolConfig, fspool_di
from slosh.slicing import axis_slicers, project, sample_slicers
from slosh.swe import (
    ReferenceSet,
    SweEmbedder,
    embed,
    embed_many,
    embed_matrix,
    monge_coupling,
    pairwise_distance,
)


def make_ref(rng, M, d, L, seed=0):
    bank = sample_slicers(d, L, seed)
    return bank, ReferenceSet.build(rng.standard_normal((M, d)), bank)


class TestMongeCoupling:
    def test_two_point_example(self):
        bank = axis_slicers(1)
        ref = ReferenceSet.build([[-0.5], [0.5]], bank)
        np.testing.assert_array_equal(ref.rank[:, 0], [0, 1])
        T = monge_coupling(np.array([[20.0], [10.0]]), ref)
        np.testing.assert_array_equal(T[:, 0], [10.0, 20.0])

    def test_reference_onto_itself_is_identity(self, rng):
        bank, ref = make_ref(rng, 17, 3, 9)
        T = monge_coupling(project(bank, ref.points), ref)
        np.testing.assert_array_equal(T, ref.projections)

    def test_single_point_set(self, rng):
        bank, ref = make_ref(rng, 6, 2, 5)
        p = project(bank, rng.standard_normal((1, 2)))
        T = monge_coupling(p, ref)
        np.testing.assert_array_equal(T, np.broadcast_to(p, T.shape))

    def test_equal_size_gives_order_statistics(self, rng):
        bank, ref = make_ref(rng, 12, 3, 7)
        p = project(bank, rng.standard_normal((12, 3)))
        T = monge_coupling(p, ref)
        s = np.sort(p, axis=0)
        np.testing.assert_array_equal(T, np.take_along_axis(s, ref.rank, axis=0))

    def test_entries_within_slice_range(self, rng):
        bank, ref = make_ref(rng, 20, 3, 11)
        p = project(bank, rng.standard_normal((7, 3)))
        T = monge_coupling(p, ref)
        assert np.all(T >= p.min(axis=0)) and np.all(T <= p.max(axis=0))

    def test_errors(self, rng):
        bank, ref = make_ref(rng, 5, 2, 4)
        with pytest.raises(ValueError):
            monge_coupling(np.empty((0, 4)), ref)
        with pytest.raises(ValueError):
            monge_coupling(np.ones((3, 5)), ref)


class TestReferenceSet:
    def test_projections_match_recomputation(self, rng):
        bank, ref = make_ref(rng, 30, 4, 16)
        np.testing.assert_allclose(ref.projections, ref.points @ bank.directions.T, atol=1e-12)

    def test_rank_inverts_perm(self, rng):
        _, ref = make_ref(rng, 30, 4, 16)
        for l in range(ref.L):
            assert sorted(ref.perm[:, l]) == list(range(ref.M))
            np.testing.assert_array_equal(ref.rank[ref.perm[:, l], l], np.arange(ref.M))

    def test_immutable(self, rng):
        _, ref = make_ref(rng, 5, 2, 3)
        with pytest.raises(ValueError):
            ref.points[0, 0] = 1.0

    def test_wrong_bank_rejected(self, rng):
        _, ref = make_ref(rng, 5, 2, 3, seed=0)
        with pytest.raises(ValueError):
            embed(rng.standard_normal((5, 2)), ref, sample_slicers(2, 3, seed=1))

    def test_bad_provenance(self, rng):
        with pytest.raises(ValueError):
            ReferenceSet.build(np.zeros((2, 2)), sample_slicers(2, 2), provenance="magic")


class TestEmbed:
    def test_layout_and_length(self, rng):
        bank, ref = make_ref(rng, 6, 3, 4)
        x = rng.standard_normal((9, 3))
        v = embed(x, ref, bank)
        assert len(v) == 24
        mat = embed_matrix(x, ref, bank)
        for l in range(4):
            np.testing.assert_allclose(v.slice_block(l), mat[:, l] * v.scale, rtol=0, atol=1e-15)

    def test_reference_embeds_to_zero(self, rng):
        bank, ref = make_ref(rng, 40, 3, 32)
        assert np.linalg.norm(embed(ref.points, ref, bank).vector) <= 1e-10

    def test_translation(self, rng):
        bank, ref = make_ref(rng, 25, 3, 8)
        c = np.array([0.3, -1.2, 2.0])
        v = embed(ref.points + c, ref, bank).vector
        expect = np.repeat(bank.directions @ c, ref.M) / np.sqrt(bank.L * ref.M)
        np.testing.assert_allclose(v, expect, atol=1e-12)

    def test_single_atom_reference_gives_max(self, rng):
        bank = axis_slicers(1)
        ref = ReferenceSet.build([[0.0]], bank)
        x = rng.standard_normal((13, 1))
        assert embed(x, ref, bank).vector[0] == x.max()

    def test_dimension_mismatch(self, rng):
        bank, ref = make_ref(rng, 5, 3, 4)
        with pytest.raises(ValueError):
            embed(rng.standard_normal((5, 2)), ref, bank)

    def test_permutation_invariance_bit_exact(self, rng):
        bank, ref = make_ref(rng, 16, 3, 32)
        x = rng.standard_normal((23, 3))
        a = embed(x, ref, bank).vector
        b = embed(x[rng.permutation(23)], ref, bank).vector
        np.testing.assert_array_equal(a, b)

    def test_recomputation_distance_zero(self, rng):
        bank, ref = make_ref(rng, 16, 3, 8)
        x = rng.standard_normal((16, 3))
        assert pairwise_distance(embed(x, ref, bank), embed(x.copy(), ref, bank)) <= 1e-12

    def test_threads_do_not_change_result(self, rng):
        bank, ref = make_ref(rng, 10, 2, 8)
        sets = [rng.standard_normal((rng.integers(1, 20), 2)) for _ in range(12)]
        np.testing.assert_array_equal(embed_many(sets, ref, bank, 1), embed_many(sets, ref, bank, 4))

    def test_embedder_wrapper(self, rng):
        bank, ref = make_ref(rng, 10, 2, 8)
        emb = SweEmbedder(bank, ref)
        x = rng.standard_normal((7, 2))
        assert emb.dim == 80
        np.testing.assert_array_equal(emb(x), embed(x, ref, bank).vector)


class TestIsometry:
    @settings(max_examples=40, deadline=None)
    @given(M=st.integers(1, 40), d=st.integers(1, 5), L=st.integers(1, 40),
           seed=st.integers(0, 2**31 - 1))
    def test_distance_equals_gsw(self, M, d, L, seed):
        rng = np.random.default_rng(seed)
        bank, ref = make_ref(rng, M, d, L, seed)
        x, y = rng.standard_normal((M, d)), 2.0 * rng.standard_normal((M, d)) + 1.0
        dist = pairwise_distance(embed(x, ref, bank), embed(y, ref, bank))
        assert dist == pytest.approx(gsw_estimate(x, y, bank).value, rel=1e-9, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(M=st.integers(1, 40), d=st.integers(1, 5), L=st.integers(1, 40),
           seed=st.integers(0, 2**31 - 1))
    def test_norm_equals_gsw_to_reference(self, M, d, L, seed):
        rng = np.random.default_rng(seed)
        bank, ref = make_ref(rng, M, d, L, seed)
        x = rng.uniform(-3, 3, (M, d))
        norm = np.linalg.norm(embed(x, ref, bank).vector)
        assert norm == pytest.approx(gsw_estimate(x, ref.points, bank).value, rel=1e-9, abs=1e-12)

    def test_distance_length_mismatch(self):
        with pytest.raises(ValueError):
            pairwise_distance(np.zeros(3), np.zeros(4))

    def test_self_distance_zero(self, rng):
        bank, ref = make_ref(rng, 5, 2, 3)
        e = embed(rng.standard_normal((5, 2)), ref, bank)
        assert pairwise_distance(e, e) == 0.0


class TestFsPoolReduction:
    @pytest.mark.parametrize("N,M", [(8, 8), (5, 16), (30, 7), (1, 4)])
    def test_axis_bank_sorted_reference(self, rng, N, M):
        d = 3
        bank = axis_slicers(d)
        # strictly increasing along every axis, so the reference order is the identity
        ref_pts = np.cumsum(rng.uniform(0.1, 1.0, (M, d)), axis=0)
        ref = ReferenceSet.build(ref_pts, bank)
        np.testing.assert_array_equal(ref.rank, np.tile(np.arange(M)[:, None], (1, d)))
        x = rng.standard_normal((N, d))
        T = monge_coupling(project(bank, x), ref)
        pooled = fspool_di(x, FsPoolConfig(M)).reshape(d, M).T
        assert np.max(np.abs(T - pooled)) <= 1e-9


class TestBatchFile:
    def test_round_trip(self, tmp_path, rng):
        vecs = rng.standard_normal((4, 6)).astype(np.float32)
        b = EmbeddingBatch(vecs, np.arange(4) * 10, np.array([0, 1, -1, 2]), 2, 3, 5, 7,
                           bytes(range(32)))
        p = tmp_path / "e.swe"
        b.save(p)
        data = p.read_bytes()
        assert data[:4] == b"SWE1"
        assert len(data) == 4 + 8 + 4 * 3 + 8 + 32 + 4 * (8 + 4 + 6 * 4)
        c = EmbeddingBatch.load(p)
        np.testing.assert_array_equal(c.vectors, vecs)
        np.testing.assert_array_equal(c.ids, b.ids)
        np.testing.assert_array_equal(c.labels, b.labels)
        assert (c.L, c.M, c.d, c.seed, c.reference_digest, c.method) == (2, 3, 5, 7, bytes(range(32)), None)

    def test_no_seed(self):
        b = EmbeddingBatch(np.zeros((1, 1), np.float32), np.array([0]), np.array([-1]), 1, 1, 1)
        assert EmbeddingBatch.from_bytes(b.to_bytes()).seed is None

    def test_width_mismatch(self):
        b = EmbeddingBatch(np.zeros((1, 5), np.float32), np.array([0]), np.array([0]), 2, 3, 1)
        with pytest.raises(ValueError):
            b.to_bytes()

    def test_corrupt(self):
        b = EmbeddingBatch(np.zeros((2, 2), np.float32), np.array([0, 1]), np.array([0, 0]), 1, 2, 1)
        data = b.to_bytes()
        with pytest.raises(FormatError):
            EmbeddingBatch.from_bytes(b"XXXX" + data[4:])
        with pytest.raises(FormatError):
            EmbeddingBatch.from_bytes(data[:-1])


class TestInternals:
    def test_rational_positions_match_float_quantiles(self, rng):
        from slosh.ot_core import _interp_rows, quantile_sorted
        s = np.sort(rng.standard_normal((4, 9)), axis=1)
        for M in (1, 4, 9, 13, 40):
            grid = np.arange(1, M + 1)
            rows = _interp_rows(s, grid * 9, M)
            cols = quantile_sorted(s.T, grid[:, None] / M).T
            np.testing.assert_allclose(rows, cols, rtol=0, atol=1e-14)

    def test_signed_zero_permutation(self):
        bank = axis_slicers(1)
        ref = ReferenceSet.build([[0.0], [1.0], [2.0]], bank)
        a = embed(np.array([[0.0], [-0.0], [1.0]]), ref, bank).vector
        b = embed(np.array([[-0.0], [1.0], [0.0]]), ref, bank).vector
        assert a.tobytes() == b.tobytes()

    @pytest.mark.parametrize("block", [1, 7, 1 << 15])
    def test_slice_blocking_changes_no_bits(self, rng, monkeypatch, block):
        import slosh.swe as swe
        bank, ref = make_ref(rng, 11, 3, 20)
        x = rng.standard_normal((29, 3))
        full = embed(x, ref, bank).vector
        monkeypatch.setattr(swe, "_BLOCK_DOUBLES", block)
        np.testing.assert_array_equal(embed(x, ref, bank).vector, full)


def test_time_sweep_shape():
    from slosh.bench import doubling_ratios, run_bench, time_sweep
    times = time_sweep("swe", [32, 64], 4, 2, reps=5)
    assert len(times) == 2 and min(times) > 0
    rows = run_bench([32, 64], [4], 2, ("swe", "gem"))
    assert [(r.method, r.N) for r in rows] == [("swe", 32), ("swe", 64), ("gem", 32), ("gem", 64)]
    assert len(doubling_ratios(rows[:2])) == 1
    with pytest.raises(ValueError):
        time_sweep("swe", [32], 4, 2, reps=2)
