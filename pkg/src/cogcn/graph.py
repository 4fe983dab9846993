"""Cosine-similarity and temporal graphs over frame features.

Two frames are connected when their feature vectors point in a similar
direction: s[i, j] = <x_i, x_j> / (|x_i| |x_j|), with an edge wherever the
similarity clears a threshold. The temporal variant instead chains
consecutive frames. Self-loops are never stored; they enter through the
degree term degree_hat[i] = 1 + (number of neighbours), and aggregation
weights are the symmetric normalization 1 / sqrt(degree_hat[i] * degree_hat[j])
over each node's neighbourhood plus itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .util import write_text_atomic

# Raw similarities may exceed [-1, 1] by at most this before clamping.
CLAMP_EPS = 1e-12


@dataclass(frozen=True)
class Graph:
    """Node features plus a symmetric, self-loop-free boolean adjacency."""

    features: np.ndarray  # (n, d) float64
    adjacency: np.ndarray  # (n, n) bool, zero diagonal
    degree_hat: np.ndarray  # (n,) float64, 1 + neighbour count

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edge list, ascending (i, j) with i < j."""
        ii, jj = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(ii.tolist(), jj.tolist()))


def _as_feature_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"feature matrix must be 2-d, got shape {x.shape}")
    if x.shape[0] < 1:
        raise ValueError("feature matrix needs at least one row")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature value")
    return x


def cosine_similarity_matrix(x) -> np.ndarray:
    """Pairwise cosine similarities, exactly symmetric and clamped to [-1, 1].

    Rows with zero norm get similarity 0 everywhere, including the diagonal:
    an all-zero frame carries no directional information. The diagonal of
    every other row is exactly 1. Symmetry is exact because each unordered
    pair is computed once and mirrored.
    """
    x = _as_feature_matrix(x)
    norms_sq = np.einsum("ij,ij->i", x, x)
    # sqrt of the product (not product of sqrts): one rounding step, so
    # integer-valued collinear pairs come out exactly 1
    denom = np.sqrt(np.outer(norms_sq, norms_sq))
    sim = np.where(denom > 0.0, (x @ x.T) / np.where(denom > 0.0, denom, 1.0), 0.0)
    sim = np.triu(sim) + np.triu(sim, 1).T
    np.fill_diagonal(sim, np.where(norms_sq > 0.0, 1.0, 0.0))
    np.clip(sim, -1.0, 1.0, out=sim)
    return sim


def build_cosine_graph(x, gamma: float) -> Graph:
    """Threshold the similarity matrix at ``gamma``.

    ``gamma`` must lie in (-1, 1]; anything <= -1 would yield a complete
    graph and is rejected as a misconfiguration.
    """
    if not -1.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (-1, 1], got {gamma}")
    x = _as_feature_matrix(x)
    sim = cosine_similarity_matrix(x)
    adjacency = sim >= gamma
    np.fill_diagonal(adjacency, False)
    degree_hat = 1.0 + adjacency.sum(axis=1).astype(np.float64)
    return Graph(x, adjacency, degree_hat)


def build_temporal_graph(x) -> Graph:
    """Chain graph: frame i is connected to frames i-1 and i+1."""
    x = _as_feature_matrix(x)
    n = x.shape[0]
    adjacency = np.zeros((n, n), dtype=bool)
    idx = np.arange(n - 1)
    adjacency[idx, idx + 1] = True
    adjacency[idx + 1, idx] = True
    degree_hat = 1.0 + adjacency.sum(axis=1).astype(np.float64)
    return Graph(x, adjacency, degree_hat)


def norm_coefficients(g: Graph, include_self: bool = True) -> np.ndarray:
    """Aggregation coefficients c[i, j] = 1 / sqrt(degree_hat[i] * degree_hat[j]).

    Nonzero on the adjacency support and, when ``include_self`` (the
    default), on the diagonal, so that aggregation runs over each node's
    neighbourhood plus the node itself. Returned dense; off-support entries
    are exactly zero.
    """
    inv_sqrt = 1.0 / np.sqrt(g.degree_hat)
    coeffs = np.where(g.adjacency, np.outer(inv_sqrt, inv_sqrt), 0.0)
    if include_self:
        np.fill_diagonal(coeffs, inv_sqrt * inv_sqrt)
    return coeffs


def export_dot(g: Graph, path: str | Path) -> None:
    """Write the graph as Graphviz DOT, nodes then edges in ascending order."""
    lines = ["graph g {"]
    lines += [f"  {i};" for i in range(g.n_nodes)]
    lines += [f"  {i} -- {j};" for i, j in g.edges()]
    lines.append("}")
    write_text_atomic(path, "\n".join(lines) + "\n")


def graph_to_json_dict(g: Graph) -> dict:
    return {
        "n": g.n_nodes,
        "edges": [[i, j] for i, j in g.edges()],
        "degree_hat": g.degree_hat.tolist(),
    }


def export_graph_json(g: Graph, path: str | Path) -> None:
    write_text_atomic(path, json.dumps(graph_to_json_dict(g)) + "\n")
