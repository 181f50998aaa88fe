"""Communication topologies and their doubly-stochastic mixing matrices.

Graphs are undirected, unweighted and connected.  Mixing weights follow the
Laplacian rule W = I - (2 / (3 * lambda_max(L))) * L with L = D - A, which
is symmetric, doubly stochastic and entrywise nonnegative for every
connected graph.  The contraction rate of a consensus step is the second
largest eigenvalue magnitude of W, strictly below one iff the graph is
connected.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .rng import derive_rng

__all__ = [
    "CommGraph",
    "GraphError",
    "PoorMixingWarning",
    "connected",
    "gen_erdos_renyi",
    "graph_from_json",
    "graph_to_json",
    "laplacian_lambda_max",
    "mixing_matrix",
    "spectral_gap",
]

# Entries of W this close to zero are snapped to exactly zero so sparsity
# pattern checks are exact.
_ZERO_CLAMP = 1e-15

# Stream label for the power-iteration start vector (all-ones is the
# Laplacian null vector, so a fixed pseudo-random start is used instead).
_POWER_START_STREAM = 0x1A57


class GraphError(ValueError):
    """Invalid topology or failed graph construction."""


class PoorMixingWarning(UserWarning):
    """Mixing matrix does not contract: disconnected or periodic weights."""


@dataclass(frozen=True)
class CommGraph:
    """Connected communication graph with its mixing matrix.

    Attributes:
        n_nodes: number of nodes.
        adjacency: symmetric boolean matrix, zero diagonal.
        weights: doubly stochastic mixing matrix (Laplacian rule).
        beta: second largest eigenvalue magnitude of ``weights``.
        seed: seed the topology was sampled from.
    """

    n_nodes: int
    adjacency: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    beta: float
    seed: int

    def __post_init__(self) -> None:
        adj = self.adjacency
        w = self.weights
        n = self.n_nodes
        if adj.shape != (n, n) or w.shape != (n, n):
            raise GraphError("adjacency and weights must be n_nodes x n_nodes")
        if adj.dtype != bool:
            raise GraphError("adjacency must be boolean")
        if adj.diagonal().any() or not np.array_equal(adj, adj.T):
            raise GraphError("adjacency must be symmetric with a zero diagonal")
        if not connected(adj):
            raise GraphError("graph must be connected")
        ones = np.ones(n)
        if np.max(np.abs(w @ ones - ones)) > 1e-12 or np.max(np.abs(w.T @ ones - ones)) > 1e-12:
            raise GraphError("weights must be doubly stochastic (1e-12)")
        if w.min() < -_ZERO_CLAMP:
            raise GraphError("weights must be nonnegative")
        off_support = w.copy()
        np.fill_diagonal(off_support, 0.0)
        if np.any((off_support != 0.0) & ~adj):
            raise GraphError("weights must vanish on non-edges")
        if not 0.0 <= self.beta < 1.0:
            raise GraphError(f"beta must lie in [0, 1) for a connected graph, got {self.beta}")

    @property
    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(i.tolist(), j.tolist()))

    @property
    def neighbor_lists(self) -> list[np.ndarray]:
        return [np.nonzero(self.adjacency[i])[0] for i in range(self.n_nodes)]


def connected(adjacency: np.ndarray) -> bool:
    """Whether the graph has a single component (BFS from node 0)."""
    n = adjacency.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    frontier = [0]
    while frontier:
        nxt = np.nonzero(adjacency[frontier].any(axis=0) & ~seen)[0]
        seen[nxt] = True
        frontier = nxt.tolist()
    return bool(seen.all())


def _build_graph(adjacency: np.ndarray, seed: int) -> CommGraph:
    weights = _laplacian_mixing(adjacency)
    beta = spectral_gap(weights)
    return CommGraph(
        n_nodes=adjacency.shape[0],
        adjacency=adjacency,
        weights=weights,
        beta=beta,
        seed=seed,
    )


def gen_erdos_renyi(
    n: int, p_c: float, seed: int, max_attempts: int = 10_000
) -> CommGraph:
    """Sample a connected Erdos-Renyi graph G(n, p_c).

    Each unordered pair is an edge independently with probability ``p_c``.
    Disconnected samples are rejected and redrawn (the attempt counter is
    mixed into the stream), so the law is Erdos-Renyi conditioned on
    connectivity.  Deterministic given ``(n, p_c, seed)``.

    Raises:
        GraphError: if n < 2, p_c is not in (0, 1], or no connected sample
            appears within ``max_attempts`` draws (p_c too small for n).
    """
    if n < 2:
        raise GraphError(f"need n >= 2 nodes, got {n}")
    if not 0.0 < p_c <= 1.0:
        raise GraphError(f"edge probability must lie in (0, 1], got {p_c}")
    for attempt in range(max_attempts):
        rng = derive_rng(seed, attempt)
        upper = np.triu(rng.random((n, n)) < p_c, 1)
        adjacency = upper | upper.T
        if connected(adjacency):
            return _build_graph(adjacency, seed)
    raise GraphError(
        f"no connected G({n}, {p_c}) sample in {max_attempts} attempts; "
        "edge probability is too small for this node count"
    )


def laplacian_lambda_max(
    adjacency: np.ndarray, rel_tol: float = 1e-10, max_iters: int = 10_000
) -> float:
    """Largest Laplacian eigenvalue by power iteration.

    Uses a fixed pseudo-random start vector (the all-ones vector is the
    Laplacian's null vector) and a Rayleigh quotient with residual-based
    stopping at ``rel_tol``.  Falls back to a dense symmetric
    eigendecomposition in the (pathological) event the iteration has not
    certified convergence after ``max_iters`` steps.
    """
    degrees = adjacency.sum(axis=1).astype(float)
    lap = np.diag(degrees) - adjacency.astype(float)
    n = lap.shape[0]
    v = derive_rng(_POWER_START_STREAM, n).standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        lv = lap @ v
        lam = float(v @ lv)
        residual = np.linalg.norm(lv - lam * v)
        if residual <= rel_tol * max(lam, 1.0):
            return lam
        norm = np.linalg.norm(lv)
        if norm == 0.0:  # start vector landed in the null space
            v = derive_rng(_POWER_START_STREAM, n, 1).standard_normal(n)
            v /= np.linalg.norm(v)
            continue
        v = lv / norm
    return float(np.linalg.eigvalsh(lap)[-1])


def _laplacian_mixing(adjacency: np.ndarray) -> np.ndarray:
    degrees = adjacency.sum(axis=1).astype(float)
    lam_max = laplacian_lambda_max(adjacency)
    # W = I - scale * (D - A): diagonal 1 - scale*deg, off-diagonal +scale*A.
    scale = 2.0 / (3.0 * lam_max)
    weights = scale * adjacency.astype(float)
    np.fill_diagonal(weights, 1.0 - scale * degrees)
    weights[np.abs(weights) < _ZERO_CLAMP] = 0.0
    return weights


def mixing_matrix(graph: CommGraph) -> np.ndarray:
    """Recompute W = I - (2 / (3 * lambda_max(L))) * L from the adjacency."""
    if not connected(graph.adjacency):
        raise GraphError("mixing matrix requires a connected graph")
    return _laplacian_mixing(graph.adjacency)


def spectral_gap(weights: np.ndarray, abs_tol: float = 1e-9) -> float:
    """Second largest eigenvalue magnitude of a symmetric stochastic matrix.

    Computed by dense symmetric eigendecomposition: the eigenvalue closest
    to one is the stochastic (consensus) direction; the contraction rate is
    the largest magnitude among the rest.  A result >= 1 - 1e-9 means the
    weights do not mix (disconnected or periodic); a
    :class:`PoorMixingWarning` is emitted and the value returned.
    """
    eigenvalues = np.linalg.eigvalsh(weights)
    top = int(np.argmin(np.abs(eigenvalues - 1.0)))
    rest = np.delete(eigenvalues, top)
    beta = float(np.max(np.abs(rest))) if rest.size else 0.0
    if beta >= 1.0 - abs_tol:
        warnings.warn(
            f"spectral gap {beta:.3e} >= 1 - 1e-9: disconnected or periodic weights",
            PoorMixingWarning,
            stacklevel=2,
        )
    return beta


def graph_to_json(graph: CommGraph) -> dict:
    """JSON-serializable topology: ``{n, edges, seed}``.

    The mixing matrix is recomputed on load, never serialized, so stored
    graphs cannot drift from the weight rule.
    """
    return {
        "n": graph.n_nodes,
        "edges": [[int(i), int(j)] for i, j in graph.edges],
        "seed": int(graph.seed),
    }


def graph_from_json(payload: dict) -> CommGraph:
    """Rebuild a graph (and recompute its weights) from :func:`graph_to_json`."""
    n = int(payload["n"])
    adjacency = np.zeros((n, n), dtype=bool)
    for i, j in payload["edges"]:
        adjacency[i, j] = adjacency[j, i] = True
    return _build_graph(adjacency, int(payload["seed"]))
