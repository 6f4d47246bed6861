import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hanam import Adjacency, check_stability, row_normalize, spectral_norm
from hanam.exceptions import (
    BadShapeError,
    NegativeEntryError,
    NonzeroDiagonalError,
)


class TestAdjacency:
    def test_rejects_negative_entry(self):
        with pytest.raises(NegativeEntryError):
            Adjacency([[0.0, -1.0], [1.0, 0.0]])

    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(NonzeroDiagonalError):
            Adjacency([[0.5, 1.0], [1.0, 0.0]])

    def test_rejects_single_node(self):
        with pytest.raises(BadShapeError):
            Adjacency([[0.0]])

    def test_rejects_nonsquare(self):
        with pytest.raises(BadShapeError):
            Adjacency(np.zeros((2, 3)))

    def test_accepts_weighted_entries(self):
        adj = Adjacency([[0.0, 2.5], [0.3, 0.0]])
        assert adj.n == 2
        assert adj.binary().tolist() == [[0.0, 1.0], [1.0, 0.0]]


class TestRowNormalize:
    def test_permutation_rows_unchanged(self):
        net = row_normalize(Adjacency([[0, 1], [1, 0]]))
        assert np.array_equal(net.A, [[0.0, 1.0], [1.0, 0.0]])
        assert net.isolated == frozenset()

    def test_equal_split(self):
        net = row_normalize(Adjacency([[0, 1, 1], [1, 0, 0], [1, 0, 0]]))
        assert np.array_equal(net.A[0], [0.0, 0.5, 0.5])

    def test_zero_row_recorded_as_isolated(self):
        net = row_normalize(Adjacency([[0, 0, 0], [1, 0, 1], [0, 1, 0]]))
        assert net.isolated == frozenset({0})
        assert np.array_equal(net.A[0], [0.0, 0.0, 0.0])

    def test_nonzero_rows_sum_to_exactly_one(self):
        rng = np.random.default_rng(0)
        raw = rng.uniform(size=(30, 30)) * 5
        np.fill_diagonal(raw, 0.0)
        net = row_normalize(Adjacency(raw))
        assert np.all(net.A.sum(axis=1) == 1.0)

    @settings(max_examples=50, deadline=None)
    @given(
        arrays(
            np.float64,
            (5, 5),
            elements=st.floats(0.0, 100.0, allow_nan=False),
        )
    )
    def test_idempotent(self, raw):
        np.fill_diagonal(raw, 0.0)
        once = row_normalize(Adjacency(raw))
        twice = row_normalize(Adjacency(once.A))
        assert np.array_equal(once.A, twice.A)
        assert once.isolated == twice.isolated


class TestSpectralNorm:
    def test_permutation_matrix(self, two_cycle):
        assert spectral_norm(two_cycle) == pytest.approx(1.0, abs=1e-10)

    def test_matches_svd_oracle_10_nodes(self):
        rng = np.random.default_rng(7)
        raw = rng.uniform(size=(10, 10))
        np.fill_diagonal(raw, 0.0)
        net = row_normalize(Adjacency(raw))
        oracle = np.linalg.svd(net.A, compute_uv=False)[0]
        assert spectral_norm(net) == pytest.approx(oracle, abs=1e-8)

    def test_isolated_row_plus_two_cycle(self):
        net = row_normalize(
            Adjacency([[0, 0, 0], [0, 0, 1], [0, 1, 0]])
        )
        assert spectral_norm(net) == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("n,seed", [(5, 1), (20, 2), (50, 3), (50, 4)])
    def test_svd_oracle_various_sizes(self, n, seed):
        rng = np.random.default_rng(seed)
        raw = (rng.uniform(size=(n, n)) < 0.2).astype(float) * rng.uniform(
            0.5, 2.0, size=(n, n)
        )
        np.fill_diagonal(raw, 0.0)
        net = row_normalize(Adjacency(raw))
        oracle = np.linalg.svd(net.A, compute_uv=False)[0]
        value = spectral_norm(net)
        assert value == pytest.approx(oracle, abs=1e-8)
        max_row_norm = np.linalg.norm(net.A, axis=1).max()
        assert value >= max_row_norm - 1e-12


class TestCheckStability:
    def test_half_on_two_cycle(self, two_cycle):
        assert check_stability(0.5, two_cycle)

    def test_boundary_excluded(self, two_cycle):
        assert not check_stability(1.0, two_cycle)

    def test_zero_rho_always_stable(self, small_net):
        assert check_stability(0.0, small_net)

    @settings(max_examples=50, deadline=None)
    @given(
        rho1=st.floats(-0.999, 0.999),
        shrink=st.floats(0.0, 1.0),
    )
    def test_monotone_in_abs_rho(self, two_cycle, rho1, shrink):
        rho2 = rho1 * shrink
        if check_stability(rho1, two_cycle):
            assert check_stability(rho2, two_cycle)
