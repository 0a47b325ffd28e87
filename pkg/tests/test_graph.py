import numpy as np
import pytest

from disenreason.data import AccountSequence, Dataset, build_interaction_matrix
from disenreason.graph import (
    init_embeddings,
    lookup_sequence,
    normalize_adjacency,
    propagate,
    propagate_backward,
)
from disenreason.selftest import dense_propagate_oracle


def matrix_from_incidence(incidence):
    ds_pairs = np.argwhere(np.asarray(incidence) == 1)
    from disenreason.data import InteractionMatrix

    incidence = np.asarray(incidence)
    return InteractionMatrix(
        n_accounts=incidence.shape[0],
        n_items=incidence.shape[1],
        pairs=ds_pairs.astype(np.int64) if len(ds_pairs) else np.zeros((0, 2), np.int64),
        account_degrees=incidence.sum(axis=1).astype(np.int64),
        item_degrees=incidence.sum(axis=0).astype(np.int64),
    )


class TestNormalizeAdjacency:
    def test_single_edge(self):
        adj = normalize_adjacency(matrix_from_incidence([[1]]))
        np.testing.assert_allclose(adj.toarray(), [[1.0]])

    def test_degree_two_account(self):
        adj = normalize_adjacency(matrix_from_incidence([[1, 1]]))
        np.testing.assert_allclose(adj.toarray(), [[2 ** -0.5, 2 ** -0.5]])

    def test_isolated_item_column_zero(self):
        adj = normalize_adjacency(matrix_from_incidence([[1, 0], [1, 0]]))
        np.testing.assert_allclose(adj.toarray()[:, 1], [0.0, 0.0])

    def test_entries_bounded(self):
        rng = np.random.default_rng(0)
        incidence = (rng.random((6, 9)) < 0.4).astype(int)
        adj = normalize_adjacency(matrix_from_incidence(incidence)).toarray()
        assert np.all(adj >= 0) and np.all(adj <= 1.0 + 1e-15)
        assert np.all((adj > 0) == (incidence == 1))


class TestPropagate:
    def test_one_layer_single_edge(self):
        adj = normalize_adjacency(matrix_from_incidence([[1]]))
        accounts = np.array([[2.0, 0.0]])
        items = np.array([[0.0, 3.0], [9.0, 9.0]])  # second row = padding
        h_a, h_v = propagate(accounts, items, adj, layers=1)
        np.testing.assert_allclose(h_a, [[0.0, 3.0]])
        np.testing.assert_allclose(h_v[0], [2.0, 0.0])
        np.testing.assert_allclose(h_v[1], [9.0, 9.0])

    def test_zero_items_one_layer_zero_accounts(self):
        adj = normalize_adjacency(matrix_from_incidence([[1, 1], [0, 1]]))
        accounts = np.random.default_rng(1).standard_normal((2, 3))
        items = np.zeros((3, 3))
        h_a, _ = propagate(accounts, items, adj, layers=1)
        np.testing.assert_allclose(h_a, 0.0)

    def test_matches_dense_oracle_on_random_graphs(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            m, n = rng.integers(1, 6, size=2)
            incidence = (rng.random((m, n)) < 0.5).astype(int)
            adj = normalize_adjacency(matrix_from_incidence(incidence))
            accounts = rng.standard_normal((m, 4))
            items = rng.standard_normal((n + 1, 4))
            for layers in (1, 2, 3):
                h_a, h_v = propagate(accounts, items, adj, layers)
                o_a, o_v = dense_propagate_oracle(accounts, items[:n], incidence, layers)
                np.testing.assert_allclose(h_a, o_a, atol=1e-10)
                np.testing.assert_allclose(h_v[:n], o_v, atol=1e-10)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        incidence = (rng.random((4, 5)) < 0.5).astype(int)
        adj = normalize_adjacency(matrix_from_incidence(incidence))
        a = rng.standard_normal((4, 3))
        v = rng.standard_normal((6, 3))
        h_a1, h_v1 = propagate(a, v, adj, 3)
        h_a2, h_v2 = propagate(2 * a, 2 * v, adj, 3)
        np.testing.assert_allclose(h_a2, 2 * h_a1, atol=1e-12)
        np.testing.assert_allclose(h_v2, 2 * h_v1, atol=1e-12)

    def test_invalid_layers(self):
        adj = normalize_adjacency(matrix_from_incidence([[1]]))
        with pytest.raises(ValueError):
            propagate(np.zeros((1, 2)), np.zeros((2, 2)), adj, layers=0)

    def test_padding_row_never_altered(self):
        rng = np.random.default_rng(4)
        incidence = (rng.random((3, 4)) < 0.6).astype(int)
        adj = normalize_adjacency(matrix_from_incidence(incidence))
        items = rng.standard_normal((5, 2))
        _, h_v = propagate(rng.standard_normal((3, 2)), items, adj, 3)
        np.testing.assert_array_equal(h_v[4], items[4])

    def test_include_layer0_average(self):
        adj = normalize_adjacency(matrix_from_incidence([[1]]))
        accounts = np.array([[4.0]])
        items = np.array([[2.0], [0.0]])
        h_a, h_v = propagate(accounts, items, adj, 1, include_layer0=True)
        # average of layer0 (4) and layer1 (2) for the account
        np.testing.assert_allclose(h_a, [[3.0]])
        np.testing.assert_allclose(h_v[0], [3.0])


class TestPropagateBackward:
    def test_adjoint_identity(self):
        # <propagate(x), y> == <x, propagate_backward(y)> for linear maps
        rng = np.random.default_rng(5)
        incidence = (rng.random((4, 6)) < 0.5).astype(int)
        adj = normalize_adjacency(matrix_from_incidence(incidence))
        for layers in (1, 2, 4):
            for include_layer0 in (False, True):
                a = rng.standard_normal((4, 3))
                v = rng.standard_normal((7, 3))
                ga = rng.standard_normal((4, 3))
                gv = rng.standard_normal((7, 3))
                h_a, h_v = propagate(a, v, adj, layers, include_layer0)
                ba, bv = propagate_backward(ga, gv, adj, layers, include_layer0)
                lhs = np.sum(h_a * ga) + np.sum(h_v * gv)
                rhs = np.sum(a * ba) + np.sum(v * bv)
                assert lhs == pytest.approx(rhs, rel=1e-10)


class TestLookup:
    def test_single_row(self):
        h = np.arange(12.0).reshape(4, 3)
        np.testing.assert_array_equal(lookup_sequence(h, np.array([3])), [h[3]])

    def test_all_padding(self):
        h = np.arange(12.0).reshape(4, 3)
        out = lookup_sequence(h, np.array([3, 3, 3]))
        np.testing.assert_array_equal(out, np.stack([h[3]] * 3))

    def test_positionwise_permutation(self):
        h = np.random.default_rng(6).standard_normal((5, 2))
        ids = np.array([0, 2, 4])
        perm = np.array([2, 0, 1])
        np.testing.assert_array_equal(
            lookup_sequence(h, ids[perm]), lookup_sequence(h, ids)[perm]
        )

    def test_out_of_range_rejected(self):
        h = np.zeros((4, 2))
        with pytest.raises(ValueError):
            lookup_sequence(h, np.array([4]))
        with pytest.raises(ValueError):
            lookup_sequence(h, np.array([-1]))


class TestInit:
    def test_bounds_and_shapes(self):
        rng = np.random.default_rng(7)
        accounts, items = init_embeddings(5, 11, 16, rng)
        assert accounts.shape == (5, 16) and items.shape == (12, 16)
        bound = 1 / 4.0
        assert np.all(np.abs(accounts) <= bound) and np.all(np.abs(items) <= bound)
