#!/usr/bin/env python3
"""
Graph Model - mixed DAGs with latent sources and their path matrices

Node numbering used throughout: observed nodes are 0..p-1, latent L_j is
node p+j. A latent has no parents and at least two observed children.

Provides:
- LatentDag / ParamSet / PathMatrix value types
- B = (I - Lambda)^-1 (I, Gamma) and its inverse
- exog, sibling and confounder sets
- Counting and enumeration of all compatible path matrices
"""

import logging
from dataclasses import dataclass
from itertools import product
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

import networkx as nx
import numpy as np
from networkx.algorithms.connectivity import local_node_connectivity

from .errors import InvalidArgumentError, InvalidModelError, InvalidSwapError

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]

_SINK = "sink"


@dataclass(frozen=True)
class LatentDag:
    """Observed DAG on p nodes plus ell parentless latent sources

    observed_edges holds (j, i) for X_j -> X_i, latent_edges holds (j, i)
    for L_j -> X_i.
    """
    p: int
    ell: int
    observed_edges: FrozenSet[Edge]
    latent_edges: FrozenSet[Edge]

    def __post_init__(self):
        object.__setattr__(self, "observed_edges", frozenset(tuple(e) for e in self.observed_edges))
        object.__setattr__(self, "latent_edges", frozenset(tuple(e) for e in self.latent_edges))
        if self.p < 1 or self.ell < 0:
            raise InvalidModelError(f"Need p >= 1 and ell >= 0, got p={self.p}, ell={self.ell}")
        for j, i in self.observed_edges:
            if not (0 <= j < self.p and 0 <= i < self.p) or i == j:
                raise InvalidModelError(f"Invalid observed edge {j} -> {i} for p={self.p}")
        for j, i in self.latent_edges:
            if not (0 <= j < self.ell and 0 <= i < self.p):
                raise InvalidModelError(f"Invalid latent edge L{j} -> {i} for p={self.p}, ell={self.ell}")
        if not nx.is_directed_acyclic_graph(self.observed_graph()):
            raise InvalidModelError("Observed subgraph contains a cycle")
        for j in range(self.ell):
            if len(self.latent_children(j)) < 2:
                raise InvalidModelError(f"Latent L{j} must have at least two observed children")

    def observed_graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.p))
        graph.add_edges_from(self.observed_edges)
        return graph

    def to_networkx(self) -> nx.DiGraph:
        """Full graph with latent L_j as node p+j"""
        graph = self.observed_graph()
        graph.add_nodes_from(range(self.p, self.p + self.ell))
        graph.add_edges_from((self.p + j, i) for j, i in self.latent_edges)
        return graph

    def latent_children(self, j: int) -> Set[int]:
        return {i for (jj, i) in self.latent_edges if jj == j}

    def observed_children(self, v: int) -> Set[int]:
        return {i for (j, i) in self.observed_edges if j == v}

    def observed_parents(self, v: int) -> Set[int]:
        return {j for (j, i) in self.observed_edges if i == v}

    def latent_parents(self, v: int) -> Set[int]:
        return {j for (j, i) in self.latent_edges if i == v}

    def topological_order(self) -> List[int]:
        """Causal order of observed nodes, ties broken by smallest index"""
        return list(nx.lexicographical_topological_sort(self.observed_graph()))

    def descendants(self, v: int) -> Set[int]:
        """Observed descendants of X_v, including v"""
        return nx.descendants(self.observed_graph(), v) | {v}

    def latent_descendants(self, j: int) -> Set[int]:
        graph = self.observed_graph()
        reached: Set[int] = set()
        for child in self.latent_children(j):
            reached |= nx.descendants(graph, child) | {child}
        return reached

    def oldest_child(self, j: int) -> int:
        children = self.latent_children(j)
        return next(v for v in self.topological_order() if v in children)

    def relabeled(self, permutation: Iterable[int]) -> "LatentDag":
        """Observed node i becomes permutation[i]"""
        perm = list(permutation)
        return LatentDag(
            self.p, self.ell,
            frozenset((perm[j], perm[i]) for j, i in self.observed_edges),
            frozenset((j, perm[i]) for j, i in self.latent_edges),
        )


@dataclass
class ParamSet:
    """Edge weights: lam[i, j] for X_j -> X_i, gamma[i, j] for L_j -> X_i"""
    lam: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        if self.lam.ndim != 2 or self.lam.shape[0] != self.lam.shape[1]:
            raise InvalidModelError(f"Lambda must be square, got shape {self.lam.shape}")
        gamma = np.asarray(self.gamma, dtype=float)
        self.gamma = np.zeros((self.p, 0)) if gamma.size == 0 else gamma.reshape(self.p, -1)

    @property
    def p(self) -> int:
        return self.lam.shape[0]

    @property
    def ell(self) -> int:
        return self.gamma.shape[1]

    def graph(self, tol: float = 0.0) -> LatentDag:
        """Graph encoding the support of (Lambda, Gamma)"""
        observed = {(j, i) for i, j in zip(*np.nonzero(np.abs(self.lam) > tol)) if i != j}
        latent = {(j, i) for i, j in zip(*np.nonzero(np.abs(self.gamma) > tol))}
        return LatentDag(self.p, self.ell, frozenset(observed), frozenset(latent))

    def support(self, tol: float = 0.0) -> Tuple[FrozenSet[Edge], FrozenSet[Edge]]:
        g = self.graph(tol)
        return g.observed_edges, g.latent_edges


@dataclass
class PathMatrix:
    """Total effects of the p noises and ell latents on the p observed nodes"""
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] < self.values.shape[0]:
            raise InvalidArgumentError(f"Path matrix must be p x (p+ell), got shape {self.values.shape}")

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def ell(self) -> int:
        return self.values.shape[1] - self.values.shape[0]

    @property
    def observed_block(self) -> np.ndarray:
        return self.values[:, :self.p]

    @property
    def latent_block(self) -> np.ndarray:
        return self.values[:, self.p:]

    def column_normalized(self) -> np.ndarray:
        """Each column divided by its entry of largest absolute value"""
        normalized = self.values.copy()
        for c in range(normalized.shape[1]):
            column = normalized[:, c]
            pivot = column[np.argmax(np.abs(column))]
            if pivot != 0:
                normalized[:, c] = column / pivot
        return normalized

    def swapped(self, v: int, j: int) -> "PathMatrix":
        """Exchange the noise column of X_v with the column of latent L_j"""
        values = self.values.copy()
        values[:, [v, self.p + j]] = values[:, [self.p + j, v]]
        return PathMatrix(values)


# ============================================================================
# Parameter <-> path matrix
# ============================================================================

def path_matrix(params: ParamSet) -> PathMatrix:
    """B = (I - Lambda)^-1 (I, Gamma)"""
    p = params.p
    eye = np.eye(p)
    try:
        inverse = np.linalg.inv(eye - params.lam)
    except np.linalg.LinAlgError as e:
        raise InvalidModelError(f"I - Lambda is singular: {e}") from e
    return PathMatrix(inverse @ np.hstack([eye, params.gamma]))


def recover_params(B: PathMatrix) -> ParamSet:
    """Lambda = I - B_obs^-1, Gamma = (I - Lambda) B_lat"""
    p = B.p
    try:
        inverse = np.linalg.inv(B.observed_block)
    except np.linalg.LinAlgError as e:
        raise InvalidArgumentError(f"Observed block of the path matrix is singular: {e}") from e
    lam = np.eye(p) - inverse
    np.fill_diagonal(lam, 0.0)
    return ParamSet(lam, inverse @ B.latent_block)


def normalize_params(params: ParamSet, g: Optional[LatentDag] = None) -> Tuple[ParamSet, np.ndarray]:
    """Rescale each latent so its edge to the oldest child has weight 1

    Returns the rescaled parameters and the per-latent factors; latent L_j
    of the original model equals factor_j^-1 times the rescaled latent, so
    its cumulants of order k are multiplied by factor_j^k.
    """
    g = g or params.graph()
    gamma = params.gamma.copy()
    factors = np.ones(params.ell)
    for j in range(params.ell):
        factors[j] = gamma[g.oldest_child(j), j]
        gamma[:, j] /= factors[j]
    return ParamSet(params.lam.copy(), gamma), factors


def infer_graph(B: PathMatrix, tol: float) -> LatentDag:
    """Support of the recovered (Lambda, Gamma) with entries above tol"""
    return recover_params(B).graph(tol)


# ============================================================================
# Node sets
# ============================================================================

def exog_set(g: LatentDag, v: int) -> Set[int]:
    """Latent parents of X_v whose observed descendants are exactly those of X_v"""
    target = g.descendants(v)
    return {j for j in g.latent_parents(v) if g.latent_descendants(j) == target}


def sib_set(g: LatentDag, v: int) -> Set[int]:
    """Observed nodes sharing an observed or latent parent with X_v"""
    siblings: Set[int] = set()
    for parent in g.observed_parents(v):
        siblings |= g.observed_children(parent)
    for j in g.latent_parents(v):
        siblings |= g.latent_children(j)
    siblings.discard(v)
    return siblings


def conf_set(g: LatentDag, v: int, w: int) -> Set[int]:
    """Nodes (observed i, or latent as p+j) with node-disjoint directed paths to X_v and X_w"""
    if v == w:
        raise InvalidArgumentError(f"Confounder set needs two distinct nodes, got {v} twice")
    graph = g.to_networkx()
    graph.add_edge(v, _SINK)
    graph.add_edge(w, _SINK)
    confounders = set()
    for z in range(g.p + g.ell):
        if z in (v, w):
            continue
        if local_node_connectivity(graph, z, _SINK) >= 2:
            confounders.add(z)
    return confounders


# ============================================================================
# Compatible path matrices
# ============================================================================

def count_compatible(g: LatentDag) -> int:
    """n_G = prod over observed v of (|exog(v)| + 1)"""
    count = 1
    for v in range(g.p):
        count *= len(exog_set(g, v)) + 1
    return count


def sparse_swap(g: LatentDag, v: int, j: int) -> bool:
    """Whether exchanging eps_v and L_j keeps the support of (Lambda, Gamma)

    The swap adds v -> i for every child i != v of L_j, and k -> i for every
    other parent k of X_v; both must already be edges.
    """
    reach = g.latent_children(j) - {v}
    if not reach <= g.observed_children(v):
        return False
    for parent in g.observed_parents(v):
        if not reach <= g.observed_children(parent):
            return False
    for other in g.latent_parents(v) - {j}:
        if not reach <= g.latent_children(other):
            return False
    return True


def count_sparsest(g: LatentDag) -> int:
    """Number of support-preserving parameterizations among the compatible ones"""
    count = 1
    for v in range(g.p):
        count *= sum(1 for j in exog_set(g, v) if sparse_swap(g, v, j)) + 1
    return count


def swap_choices(g: LatentDag) -> List[Tuple[Optional[int], ...]]:
    """Per-node latent swapped with each noise (None: no swap), in enumeration order"""
    return list(product(*[[None] + sorted(exog_set(g, v)) for v in range(g.p)]))


def support_preserving(g: LatentDag) -> List[bool]:
    """For each compatible matrix, whether its (Lambda, Gamma) has the support of g"""
    return [all(j is None or sparse_swap(g, v, j) for v, j in enumerate(choice)) for choice in swap_choices(g)]


def _renormalize(values: np.ndarray, p: int, order: List[int], tol: float) -> np.ndarray:
    normalized = values.copy()
    for v in range(p):
        if normalized[v, v] != 0:
            normalized[:, v] /= normalized[v, v]
    for c in range(p, normalized.shape[1]):
        column = normalized[:, c]
        scale = np.max(np.abs(column))
        oldest = next((v for v in order if abs(column[v]) > tol * max(scale, 1.0)), None)
        if oldest is not None:
            normalized[:, c] = column / column[oldest]
    return normalized


def enumerate_compatible(B: PathMatrix, g: LatentDag, tol: float = 1e-9) -> List[PathMatrix]:
    """All path matrices obtained by at most one noise/latent column swap per node

    The first element is B itself (rescaled to the oldest-child convention).
    """
    if (B.p, B.ell) != (g.p, g.ell):
        raise InvalidArgumentError(
            f"Path matrix shape {B.values.shape} does not match graph with p={g.p}, ell={g.ell}"
        )
    order = g.topological_order()
    options = [[None] + sorted(exog_set(g, v)) for v in range(g.p)]
    candidates = []
    for choice in product(*options):
        values = B.values.copy()
        for v, j in enumerate(choice):
            if j is not None:
                values[:, [v, g.p + j]] = values[:, [g.p + j, v]]
        candidates.append(PathMatrix(_renormalize(values, g.p, order, tol)))
    logger.debug(f"Enumerated {len(candidates)} compatible path matrices")
    return candidates


def swap_params(params: ParamSet, v: int, w: int) -> ParamSet:
    """Parameters after exchanging eps_v with latent L_w, in closed form

    Requires L_w in exog(v) and gamma[v, w] == 1.
    """
    g = params.graph()
    if w not in exog_set(g, v):
        raise InvalidSwapError(f"L{w} is not in exog(X{v})")
    if not np.isclose(params.gamma[v, w], 1.0):
        raise InvalidSwapError(f"gamma[{v}, {w}] = {params.gamma[v, w]} is not normalized to 1")
    p = params.p
    e_v = np.zeros(p)
    e_v[v] = 1.0
    direction = params.gamma[:, w] - e_v
    lam = params.lam + np.outer(direction, e_v - params.lam[v, :])
    gamma = params.gamma - np.outer(direction, params.gamma[v, :])
    gamma[:, w] = -params.gamma[:, w] + 2 * e_v
    return ParamSet(lam, gamma)


# ============================================================================
# Reference graphs
# ============================================================================

def graph_from_edges(p: int, observed: Iterable[Edge], latent_children: Iterable[Iterable[int]]) -> LatentDag:
    """Build a LatentDag from observed edges and one child list per latent"""
    latent_children = [list(children) for children in latent_children]
    latent = {(j, i) for j, children in enumerate(latent_children) for i in children}
    return LatentDag(p, len(latent_children), frozenset(observed), frozenset(latent))


_REFERENCE_GRAPHS: Dict[str, Tuple[int, List[Edge], List[List[int]]]] = {
    "two_node": (2, [(0, 1)], [[0, 1]]),
    "chain_two_latents": (3, [(0, 1), (1, 2)], [[0, 1], [0, 2]]),
    "fork_two_latents": (3, [(0, 1), (0, 2)], [[0, 1], [0, 2]]),
    "triangle_one_latent": (3, [(0, 1), (1, 2), (0, 2)], [[0, 1, 2]]),
    "underdetermined": (3, [(0, 1), (0, 2), (1, 2)], [[0, 1], [0, 1]]),
    "a": (2, [(0, 1)], [[0, 1]]),
    "b": (3, [(0, 1), (1, 2)], [[1, 2]]),
    "c": (3, [(0, 1), (1, 2)], [[0, 1], [1, 2]]),
    "d": (3, [(0, 1), (0, 2), (1, 2)], [[0, 1, 2]]),
    "e": (3, [(0, 1), (1, 2), (0, 2)], [[0, 1, 2], [0, 1, 2]]),
    "f": (5, [(0, 1), (0, 2), (1, 4), (1, 3)], [[0, 1, 3], [1, 4]]),
}

SETTINGS = ("a", "b", "c", "d", "e", "f")


def reference_graph(name: str) -> LatentDag:
    """Named example graphs and the benchmark settings a-f"""
    if name not in _REFERENCE_GRAPHS:
        raise InvalidArgumentError(f"Unknown graph {name!r}; choose from {sorted(_REFERENCE_GRAPHS)}")
    p, observed, latent = _REFERENCE_GRAPHS[name]
    return graph_from_edges(p, observed, latent)
