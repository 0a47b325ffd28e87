"""Bipartite graph propagation of account and item embeddings.

The propagation is the LightGCN-style alternating product with symmetric
degree normalization: accounts aggregate their items and items aggregate
their accounts, simultaneously, for L layers, and the outputs are the
averages of layers 1..L. The padding embedding row encodes absence, not an
item, so it never enters the graph: propagation passes it through
untouched.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .data import InteractionMatrix

__all__ = [
    "normalize_adjacency",
    "propagate",
    "propagate_backward",
    "lookup_sequence",
    "init_embeddings",
]


def normalize_adjacency(matrix: InteractionMatrix) -> sp.csr_matrix:
    """Symmetrically normalized incidence: entry (i, j) is
    1/sqrt(deg_account(i) * deg_item(j)) where account i interacted with
    item j, else 0. Isolated rows/columns stay all-zero, so there is no
    division by zero anywhere.
    """
    rows = matrix.pairs[:, 0]
    cols = matrix.pairs[:, 1]
    deg_a = matrix.account_degrees[rows].astype(np.float64)
    deg_v = matrix.item_degrees[cols].astype(np.float64)
    values = 1.0 / np.sqrt(deg_a * deg_v)
    return sp.csr_matrix(
        (values, (rows, cols)),
        shape=(matrix.n_accounts, matrix.n_items),
        dtype=np.float64,
    )


def propagate(
    accounts: np.ndarray,
    items: np.ndarray,
    adjacency: sp.csr_matrix,
    layers: int,
    include_layer0: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Propagate collaborative signal for ``layers`` rounds and average.

    ``items`` carries n+1 rows; the final row is the padding embedding and
    is copied to the output verbatim. By default the average covers layers
    1..L; ``include_layer0`` widens it to 0..L for the ablation reading.

    Returns (propagated accounts m x d, propagated items (n+1) x d).
    """
    if layers < 1:
        raise ValueError("layers must be >= 1")
    m, n = adjacency.shape
    if accounts.shape[0] != m or items.shape[0] != n + 1:
        raise ValueError(
            f"embedding shapes {accounts.shape}/{items.shape} do not match "
            f"graph of {m} accounts and {n} items"
        )
    a = accounts
    v = items[:n]
    sum_a = a.copy() if include_layer0 else np.zeros_like(a)
    sum_v = v.copy() if include_layer0 else np.zeros_like(v)
    for _ in range(layers):
        a, v = adjacency @ v, adjacency.T @ a
        sum_a += a
        sum_v += v
    denom = layers + 1 if include_layer0 else layers
    h_accounts = sum_a / denom
    h_items = np.empty_like(items)
    h_items[:n] = sum_v / denom
    h_items[n] = items[n]
    return h_accounts, h_items


def propagate_backward(
    grad_h_accounts: np.ndarray,
    grad_h_items: np.ndarray,
    adjacency: sp.csr_matrix,
    layers: int,
    include_layer0: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint of :func:`propagate`: maps output-side gradients back to the
    initial embedding tables. Exact because propagation is linear in the
    embeddings for a fixed graph.
    """
    if layers < 1:
        raise ValueError("layers must be >= 1")
    m, n = adjacency.shape
    denom = layers + 1 if include_layer0 else layers
    ga = grad_h_accounts / denom
    gv = grad_h_items[:n] / denom
    # d_a[l], d_v[l]: gradient wrt the layer-l embeddings. Every layer in the
    # average receives ga/gv directly; the recursion A_{l+1} = M V_l,
    # V_{l+1} = M^T A_l sends d_a[l+1] to d_v[l] and d_v[l+1] to d_a[l].
    acc_a = ga.copy()
    acc_v = gv.copy()
    for _ in range(layers - 1):
        acc_a, acc_v = ga + adjacency @ acc_v, gv + adjacency.T @ acc_a
    grad_accounts = adjacency @ acc_v
    grad_items = np.empty_like(grad_h_items)
    grad_items[:n] = adjacency.T @ acc_a
    grad_items[n] = grad_h_items[n]
    if include_layer0:
        grad_accounts += ga
        grad_items[:n] += gv
    return grad_accounts, grad_items


def lookup_sequence(h_items: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Row lookup: position t of the result is the embedding of item t.

    Padding ids map to the padding row like any other index.
    """
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= h_items.shape[0]):
        raise ValueError(
            f"sequence ids must lie in [0, {h_items.shape[0]}), got "
            f"[{ids.min()}, {ids.max()}]"
        )
    return h_items[ids]


def init_embeddings(
    n_accounts: int, n_items: int, dim: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform [-1/sqrt(d), 1/sqrt(d)] initial tables; the item table has an
    extra padding row drawn the same way."""
    bound = 1.0 / np.sqrt(dim)
    accounts = rng.uniform(-bound, bound, size=(n_accounts, dim))
    items = rng.uniform(-bound, bound, size=(n_items + 1, dim))
    return accounts, items
