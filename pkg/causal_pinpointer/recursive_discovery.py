#!/usr/bin/env python3
"""
Recursive Discovery - source-by-source recovery of the path matrix

Each iteration:
1. rank-test every ordered pair of remaining nodes and pick the source
2. estimate effect candidates and source cumulants for every (source, w)
3. align candidate cumulant vectors across pairs into latent groups
4. fill the source and latent columns of B
5. solve for the cumulants of the source noise and its latents
6. subtract their contribution from the cumulants and drop the source

Afterwards all compatible path matrices are enumerated from the estimate.
"""

import logging
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    AlignmentError,
    DegenerateDataError,
    DiscoveryFailure,
    EstimationFailure,
    InvalidArgumentError,
    InvalidModelError,
    UnderdeterminedError,
)
from .graph_model import LatentDag, PathMatrix, enumerate_compatible, infer_graph, support_preserving
from .pairwise_estimation import IMAG_TOL, SEPARATION_TOL, PairwiseEstimate, estimate_pair
from .rank_tests import PairConfounding, estimate_pair_confounding, minimal_orders, threshold_schedule
from .tensor_cumulants import (
    MAX_ORDER,
    CumulantSet,
    Dataset,
    SourceCumulantVector,
    marginal_cumulants,
    sample_cumulants,
    subtract_component_cumulants,
)

logger = logging.getLogger(__name__)

WIDENING_FACTOR = 2.0
MAX_WIDENINGS = 3


@dataclass
class DiscoveryOptions:
    """Tuning knobs of the recursion; None fields take mode-dependent defaults"""
    ell_max: int = 1
    k_max: Optional[int] = None
    exact: bool = False
    threshold: Optional[float] = None
    threshold_scale: float = 1.0
    exact_threshold: float = 1e-7
    match_tol: Optional[float] = None
    im_tol: float = IMAG_TOL
    sep_tol: float = SEPARATION_TOL
    rank_tol: float = 1e-8
    support_tol: Optional[float] = None
    ratio_tol: Optional[float] = None
    max_designations: int = 4096

    def __post_init__(self):
        if self.ell_max < 0:
            raise InvalidArgumentError(f"ell_max must be non-negative, got {self.ell_max}")
        required = minimal_orders(self.ell_max).k2
        if required > MAX_ORDER:
            raise InvalidArgumentError(f"ell_max={self.ell_max} needs cumulants of order {required} > {MAX_ORDER}")
        if self.k_max is None:
            self.k_max = required
        elif self.k_max < required:
            logger.warning(f"k_max={self.k_max} is below {required} required for ell_max={self.ell_max}; raising it")
            self.k_max = required
        if self.k_max > MAX_ORDER:
            raise InvalidArgumentError(f"k_max must be at most {MAX_ORDER}, got {self.k_max}")
        if self.match_tol is None:
            self.match_tol = 1e-5 if self.exact else 0.1
        if self.support_tol is None:
            self.support_tol = 1e-6 if self.exact else 1e-3
        if self.ratio_tol is None:
            self.ratio_tol = 1e-6 if self.exact else 0.05

    def threshold_for(self, n: Optional[int], iteration: int) -> float:
        if self.threshold is not None:
            return self.threshold
        if self.exact:
            return self.exact_threshold
        if n is None:
            raise InvalidArgumentError("Sample size is required for the threshold schedule")
        return threshold_schedule(n, iteration) * self.threshold_scale


@dataclass
class LatentGroup:
    """Candidates from several pairs attributed to one exogenous source

    members maps target node w to the candidate index in pair (s, w).
    """
    members: Dict[int, int]
    vectors: Dict[int, np.ndarray] = field(repr=False)
    effects: Dict[int, float] = field(default_factory=dict)

    @property
    def cumulant_vector(self) -> np.ndarray:
        return np.mean(list(self.vectors.values()), axis=0)

    @property
    def spread(self) -> float:
        center = self.cumulant_vector
        return max(float(np.linalg.norm(v - center)) for v in self.vectors.values())

    @property
    def single_pair(self) -> bool:
        return len(self.members) == 1

    def to_dict(self) -> dict:
        return {
            "members": {str(w): j for w, j in sorted(self.members.items())},
            "effects": {str(w): b for w, b in sorted(self.effects.items())},
            "cumulant_vector": self.cumulant_vector.tolist(),
            "single_pair": self.single_pair,
        }


@dataclass
class Alignment:
    """Latent groups plus, per pair, the candidate standing for the source noise"""
    groups: List[LatentGroup]
    noise_choice: Dict[int, int]
    orders: List[int]
    residual: Optional[float] = None
    flags: List[str] = field(default_factory=list)


@dataclass
class SourceSelection:
    source: int
    pair_ells: Dict[int, int]
    all_ells: Dict[Tuple[int, int], Optional[int]]
    tests: List[PairConfounding]
    threshold: float
    flags: List[str] = field(default_factory=list)


@dataclass
class IterationReport:
    iteration: int
    source: int
    pair_ells: Dict[int, int]
    groups: List[dict]
    condition_numbers: Dict[str, List[float]]
    threshold: float
    tests: List[dict] = field(default_factory=list)
    estimates: List[dict] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)


@dataclass
class DiscoveryState:
    """Working state; cumulant index i refers to observed node remaining[i]"""
    p: int
    remaining: List[int]
    cumulants: CumulantSet
    observed_columns: np.ndarray
    n: Optional[int] = None
    iteration: int = 1
    order: List[int] = field(default_factory=list)
    latent_columns: List[np.ndarray] = field(default_factory=list)
    latent_sources: List[int] = field(default_factory=list)
    omegas: Dict[str, SourceCumulantVector] = field(default_factory=dict)
    pair_lmax_cache: Dict[Tuple[int, int], int] = field(default_factory=dict)

    @classmethod
    def initial(cls, cumulants: CumulantSet, n: Optional[int] = None) -> "DiscoveryState":
        p = cumulants.dim
        return cls(p, list(range(p)), cumulants, np.zeros((p, p)), n)

    def index_of(self, node: int) -> int:
        return self.remaining.index(node)

    @property
    def B_hat(self) -> PathMatrix:
        return PathMatrix(np.column_stack([self.observed_columns] + self.latent_columns)
                          if self.latent_columns else self.observed_columns.copy())

    def source_columns(self, source: int) -> np.ndarray:
        """Columns of the source noise and its latents, restricted to remaining rows"""
        columns = [self.observed_columns[:, source]]
        columns += [col for col, s in zip(self.latent_columns, self.latent_sources) if s == source]
        return np.column_stack(columns)[self.remaining, :]


@dataclass
class DiscoveryResult:
    order: List[int]
    B_hat: PathMatrix
    candidates: List[PathMatrix]
    graph: Optional[LatentDag]
    iterations: List[IterationReport]
    source_cumulants: List[SourceCumulantVector]
    flags: List[str] = field(default_factory=list)
    candidate_sparse: List[bool] = field(default_factory=list)

    @property
    def ell_hat(self) -> int:
        return self.B_hat.ell


# ============================================================================
# Source selection
# ============================================================================

def _first_accepted(result: PairConfounding, threshold: float) -> Optional[int]:
    for test in result.tests:
        if test.decision.vacuous or test.decision.ratio <= threshold:
            return test.ell
    return None


def _widen(results: Dict[Tuple[int, int], PairConfounding], threshold: float) -> Optional[float]:
    """Smallest loosened threshold at which some pair drops rank; updates the results in place"""
    for step in range(1, MAX_WIDENINGS + 1):
        wider = threshold * WIDENING_FACTOR ** step
        ells = {pair: _first_accepted(result, wider) for pair, result in results.items()}
        if any(ell is not None for ell in ells.values()):
            for pair, result in results.items():
                result.ell = ells[pair]
                for test in result.tests:
                    test.decision.threshold = wider
                    test.decision.accepted = test.decision.vacuous or test.decision.ratio <= wider
            return wider
    return None


def find_source(C: CumulantSet, remaining: Sequence[int], pair_lmax_cache: Dict[Tuple[int, int], int],
                n: Optional[int], iteration: int, options: DiscoveryOptions) -> SourceSelection:
    """Node minimizing the summed pairwise confounder counts

    A cached cap is trusted only when the capped test finds a drop; otherwise
    the pair is retested up to ell_max. Absent counts enter the sum as
    ell_max+1. Ties go to the lowest average ratio. When no pair drops rank
    under a scheduled threshold, the threshold is doubled up to
    MAX_WIDENINGS times before giving up.
    """
    if len(remaining) < 2:
        raise InvalidArgumentError("Source selection needs at least two remaining nodes")
    standardized = C.standardized()
    threshold = options.threshold_for(n, iteration)
    flags: List[str] = []
    results: Dict[Tuple[int, int], PairConfounding] = {}
    for iv, v in enumerate(remaining):
        for iw, w in enumerate(remaining):
            if v == w:
                continue
            cap = min(pair_lmax_cache.get((v, w), options.ell_max), options.ell_max)
            result = estimate_pair_confounding(standardized, iv, iw, cap, threshold=threshold)
            if result.ell is None and cap < options.ell_max:
                logger.debug(f"Cached cap {cap} for X{v}->X{w} not confirmed; testing up to {options.ell_max}")
                result = estimate_pair_confounding(standardized, iv, iw, options.ell_max, threshold=threshold)
            result.v, result.w = v, w
            for diagnostic in result.tests:
                diagnostic.v, diagnostic.w = v, w
            results[(v, w)] = result

    if all(r.ell is None for r in results.values()) and options.threshold is None and not options.exact:
        wider = _widen(results, threshold)
        if wider is not None:
            logger.warning(f"Iteration {iteration}: no rank drop at threshold {threshold:.3g}; using {wider:.3g}")
            flags.append(f"widened-threshold:{wider:.3g}")
            threshold = wider

    tests = list(results.values())
    all_ells = {pair: r.ell for pair, r in results.items()}
    if all(ell is None for ell in all_ells.values()):
        raise DiscoveryFailure(
            f"No pair shows a rank drop up to ell_max={options.ell_max}",
            iteration=iteration,
            diagnostics=[d.to_dict() for t in tests for d in t.tests],
        )

    scores = []
    for v in remaining:
        pairs = [results[(v, w)] for w in remaining if w != v]
        total = sum(options.ell_max + 1 if r.ell is None else r.ell for r in pairs)
        scores.append((total, float(np.mean([r.ratio for r in pairs])), v))
    total, _, source = min(scores)
    logger.info(f"Iteration {iteration}: source X{source} (confounding sum {total})")

    pair_ells = {}
    for w in remaining:
        if w == source:
            continue
        ell = all_ells[(source, w)]
        if ell is None:
            ell = options.ell_max
            flags.append(f"absent:{source}->{w}")
            logger.warning(f"No rank drop for X{source}->X{w} up to ell_max; using ell={ell}")
        pair_ells[w] = ell
    return SourceSelection(source, pair_ells, all_ells, tests, threshold, flags)


# ============================================================================
# Pairwise estimation with degradation
# ============================================================================

def estimate_source_pairs(C: CumulantSet, remaining: Sequence[int], source: int, pair_ells: Dict[int, int],
                          options: DiscoveryOptions) -> Dict[int, PairwiseEstimate]:
    """PairwiseEstimate for every (source, w), lowering ell when estimation fails"""
    s_idx = list(remaining).index(source)
    estimates = {}
    for w, ell in pair_ells.items():
        pair = marginal_cumulants(C, [s_idx, list(remaining).index(w)])
        last_error: Optional[EstimationFailure] = None
        for attempt in range(ell, -1, -1):
            try:
                estimate = estimate_pair(pair, source, w, attempt, options.k_max, options.im_tol, options.sep_tol)
            except EstimationFailure as e:
                last_error = e
                logger.warning(f"Estimation failed for X{source}->X{w} at ell={attempt}: {e}")
                continue
            estimate.degraded = attempt != ell
            estimates[w] = estimate
            break
        else:
            raise DiscoveryFailure(f"Effect estimation failed for pair X{source}->X{w}: {last_error}")
    return estimates


# ============================================================================
# Latent alignment
# ============================================================================

def _candidate_vectors(per_pair: Dict[int, PairwiseEstimate], scale: float) -> Tuple[List[int], Dict]:
    k_max = min(max(omega.orders) for est in per_pair.values() for omega in est.omegas)
    start = max(2, max(est.ell + 1 for est in per_pair.values()))
    orders = list(range(start, k_max + 1))
    vectors = {}
    for w, est in per_pair.items():
        for j, omega in enumerate(est.omegas):
            vectors[(w, j)] = np.array([omega.values[k] / scale ** k for k in orders])
    return orders, vectors


def _cluster(per_pair: Dict[int, PairwiseEstimate], vectors: Dict, tol: float,
             flags: List[str]) -> List[Dict[int, int]]:
    clusters: List[Dict[int, int]] = []

    def center(cluster):
        return np.mean([vectors[(w, j)] for w, j in cluster.items()], axis=0)

    for w in sorted(per_pair):
        candidates = list(range(len(per_pair[w].effects)))
        assigned = set()
        if clusters:
            centers = [center(c) for c in clusters]
            cost = np.array([[np.linalg.norm(vectors[(w, j)] - c) for c in centers] for j in candidates])
            rows, cols = linear_sum_assignment(cost)
            for r, c in zip(rows, cols):
                if cost[r, c] <= tol:
                    clusters[c][w] = candidates[r]
                    assigned.add(candidates[r])
            near = (cost <= tol).sum(axis=0)
            if np.any(near > 1):
                flags.append(f"ambiguous-alignment:{w}")
        for j in candidates:
            if j not in assigned:
                clusters.append({w: j})
    return clusters


def _designations(per_pair: Dict[int, PairwiseEstimate], clusters: List[Dict[int, int]],
                  limit: int) -> List[frozenset]:
    """Cluster sets holding exactly one candidate of every pair"""
    cluster_of = {(w, j): c for c, members in enumerate(clusters) for w, j in members.items()}
    pairs = sorted(per_pair)
    options = [[cluster_of[(w, j)] for j in range(len(per_pair[w].effects))] for w in pairs]
    total = int(np.prod([len(o) for o in options]))
    if total <= limit:
        seen, valid = set(), []
        for choice in product(*options):
            chosen = frozenset(choice)
            if chosen in seen:
                continue
            seen.add(chosen)
            if all(sum(c in chosen for c in opts) == 1 for opts in options):
                valid.append(chosen)
        if valid:
            return valid

    # greedy: unmatched first, then the worst-matching cluster, propagating choices
    chosen, decided = set(), set()
    for w, opts in zip(pairs, options):
        if w in decided:
            continue
        singles = [c for c in opts if len(clusters[c]) == 1]
        pick = singles[0] if singles else opts[-1]
        chosen.add(pick)
        decided |= set(clusters[pick])
    return [frozenset(chosen)]


def _design_columns(per_pair: Dict[int, PairwiseEstimate], clusters: List[Dict[int, int]],
                    chosen: frozenset, remaining: Sequence[int], source: int) -> Tuple[np.ndarray, List[int]]:
    remaining = list(remaining)
    noise = np.zeros(len(remaining))
    noise[remaining.index(source)] = 1.0
    for c in chosen:
        for w, j in clusters[c].items():
            noise[remaining.index(w)] = per_pair[w].effects[j]
    columns = [noise]
    latent_ids = [c for c in range(len(clusters)) if c not in chosen]
    for c in latent_ids:
        column = noise.copy()
        for w, j in clusters[c].items():
            column[remaining.index(w)] = per_pair[w].effects[j]
        columns.append(column)
    return np.column_stack(columns), latent_ids


def _solve_omegas(columns: np.ndarray, C: CumulantSet, s_idx: int) -> Tuple[np.ndarray, int, float]:
    """Per-order cumulants of the source's exogenous variables: rows order 2..k_max"""
    omegas = []
    for k in range(2, C.max_order + 1):
        rhs = np.array([C[k][(s_idx,) * (k - 1) + (i,)] for i in range(C.dim)])
        omega, *_ = np.linalg.lstsq(columns, rhs, rcond=None)
        omegas.append(omega)
    singular_values = np.linalg.svd(columns, compute_uv=False)
    return np.array(omegas), int(np.sum(singular_values > 0)), float(np.linalg.cond(columns))


def _cross_residual(columns: np.ndarray, omegas: np.ndarray, C: CumulantSet, s_idx: int) -> float:
    """Relative misfit of c_{s..s w w'} (orders >= 3) predicted by the designated columns"""
    others = [i for i in range(C.dim) if i != s_idx]
    predicted, actual = [], []
    for row, k in enumerate(range(2, C.max_order + 1)):
        if k < 3:
            continue
        for a, i in enumerate(others):
            for j in others[a:]:
                actual.append(C[k][(s_idx,) * (k - 2) + (i, j)])
                predicted.append(float(np.sum(omegas[row] * columns[i] * columns[j])))
    if not actual:
        return 0.0
    actual, predicted = np.array(actual), np.array(predicted)
    return float(np.linalg.norm(predicted - actual) / (np.linalg.norm(actual) + 1e-300))


def align_latents(per_pair: Dict[int, PairwiseEstimate], tol: float, cumulants: Optional[CumulantSet] = None,
                  remaining: Optional[Sequence[int]] = None, source: Optional[int] = None,
                  scale: float = 1.0, max_designations: int = 4096) -> Alignment:
    """Group candidate cumulant vectors across pairs and attribute one candidate per pair to the source noise

    Vectors are compared over the orders every pair could estimate, after
    dividing order-k entries by scale^k. Among the consistent
    attributions, unmatched candidates are preferred for the noise role;
    remaining ties are broken by how well the filled columns reproduce the
    source's cross cumulants (when `cumulants` is given), then by the
    largest within-group spread.
    """
    if not per_pair:
        return Alignment([], {}, [])
    flags: List[str] = []
    orders, vectors = _candidate_vectors(per_pair, scale)
    clusters = _cluster(per_pair, vectors, tol, flags)
    designations = _designations(per_pair, clusters, max_designations)

    def penalty(chosen):
        return sum(len(clusters[c]) for c in chosen if len(clusters[c]) > 1)

    def spread(chosen):
        return sum(LatentGroup(clusters[c], {wj[0]: vectors[wj] for wj in clusters[c].items()}).spread
                   for c in chosen)

    best_penalty = min(penalty(d) for d in designations)
    designations = [d for d in designations if penalty(d) == best_penalty]
    residuals = {d: 0.0 for d in designations}
    if cumulants is not None and len(designations) > 1:
        s_idx = list(remaining).index(source)
        for d in designations:
            columns, _ = _design_columns(per_pair, clusters, d, remaining, source)
            omegas, _, _ = _solve_omegas(columns, cumulants, s_idx)
            residuals[d] = _cross_residual(columns, omegas, cumulants, s_idx)
        least = min(residuals.values())
        designations = [d for d in designations if residuals[d] <= least + 1e-9 + 1e-6 * least]
    chosen = max(designations, key=spread)
    if len(designations) > 1:
        flags.append("interchangeable-roles")

    noise_choice = {w: j for c in chosen for w, j in clusters[c].items()}
    groups = []
    for c, members in enumerate(clusters):
        if c in chosen:
            continue
        groups.append(LatentGroup(
            dict(members),
            {w: vectors[(w, j)] for w, j in members.items()},
            {w: per_pair[w].effects[j] for w, j in members.items()},
        ))
    for group in groups:
        if group.single_pair:
            flags.append(f"single-pair-latent:{next(iter(group.members))}")
    return Alignment(groups, noise_choice, orders, residuals.get(chosen), flags)


# ============================================================================
# Columns, source cumulants, removal
# ============================================================================

def fill_B_columns(state: DiscoveryState, source: int, alignment: Alignment,
                   per_pair: Dict[int, PairwiseEstimate]) -> DiscoveryState:
    """Write the source column and one column per latent group into B

    Rows of pairs where a latent does not appear take the source's effect,
    since every path from such a latent passes through the source.
    """
    for w, est in per_pair.items():
        attributed = sum(1 for g in alignment.groups if w in g.members) + 1
        if attributed != est.ell + 1 or w not in alignment.noise_choice:
            raise AlignmentError(
                f"Pair X{source}->X{w} has {est.ell + 1} candidates but {attributed} were attributed"
            )
    column = np.zeros(state.p)
    column[source] = 1.0
    for w, j in alignment.noise_choice.items():
        column[w] = per_pair[w].effects[j]
    state.observed_columns[:, source] = column
    for group in alignment.groups:
        latent = column.copy()
        for w, b in group.effects.items():
            latent[w] = b
        state.latent_columns.append(latent)
        state.latent_sources.append(source)
    return state


def estimate_overall_source_cumulants(state: DiscoveryState, source: int,
                                      groups: Sequence[LatentGroup], rank_tol: float = 1e-8) -> List[SourceCumulantVector]:
    """Cumulants of eps_s and each attached latent for all orders 2..k_max

    Raises UnderdeterminedError when the filled columns are linearly
    dependent on the remaining rows.
    """
    columns = state.source_columns(source)
    unknowns = len(groups) + 1
    if columns.shape[1] != unknowns:
        raise AlignmentError(f"Expected {unknowns} columns for X{source}, found {columns.shape[1]}")
    singular_values = np.linalg.svd(columns, compute_uv=False)
    rank = int(np.sum(singular_values > rank_tol * singular_values[0]))
    if rank < unknowns:
        raise UnderdeterminedError(
            f"Source cumulant system for X{source} has rank {rank} < {unknowns} unknowns",
            iteration=state.iteration, rank=rank, unknowns=unknowns,
        )
    omegas, _, _ = _solve_omegas(columns, state.cumulants, state.index_of(source))
    orders = range(2, state.cumulants.max_order + 1)
    vectors = [SourceCumulantVector(f"eps{source}", {k: float(omegas[r, 0]) for r, k in enumerate(orders)})]
    first_latent = len(state.latent_columns) - len(groups)
    for g in range(len(groups)):
        vectors.append(SourceCumulantVector(
            f"L{first_latent + g}", {k: float(omegas[r, g + 1]) for r, k in enumerate(orders)}
        ))
    return vectors


def _common_confounder(latent: np.ndarray, others: Sequence[np.ndarray], v: int, w: int, tol: float) -> bool:
    """Whether a removed latent column confounds (v, w) by a ratio b_w/b_v no other removed column shares

    A latent reaching w only through v has the same ratio as every other
    source doing so; such a latent does not lower the pair's confounding.
    """
    a = np.array([latent[v], latent[w]])
    for other in others:
        b = np.array([other[v], other[w]])
        scale = np.linalg.norm(a) * np.linalg.norm(b)
        if scale > 0 and abs(a[0] * b[1] - a[1] * b[0]) <= tol * scale:
            return False
    return True


def remove_source(state: DiscoveryState, source: int, groups: Sequence[LatentGroup],
                  omegas: Sequence[SourceCumulantVector],
                  all_ells: Optional[Dict[Tuple[int, int], Optional[int]]] = None,
                  ell_max: Optional[int] = None, ratio_tol: float = 1e-6) -> DiscoveryState:
    """Subtract the source's exogenous contributions and drop it from the cumulants

    The confounding cap of every remaining pair (v, w) becomes the count
    found this iteration minus the removed latents that are common
    confounders of v and w.
    """
    columns = state.source_columns(source)
    cumulants = subtract_component_cumulants(
        state.cumulants, [columns[:, j] for j in range(columns.shape[1])], omegas, drop=state.index_of(source)
    )
    full_columns = [state.observed_columns[:, source]] + state.latent_columns[len(state.latent_columns) - len(groups):]
    cache = dict(state.pair_lmax_cache)
    if all_ells is not None:
        for (v, w), ell in all_ells.items():
            if source in (v, w):
                continue
            base = ell if ell is not None else cache.get((v, w), ell_max)
            if base is None:
                continue
            shared = 0
            for g, group in enumerate(groups):
                if v not in group.members or w not in group.members:
                    continue
                others = [c for j, c in enumerate(full_columns) if j != g + 1]
                if _common_confounder(full_columns[g + 1], others, v, w, ratio_tol):
                    shared += 1
            cache[(v, w)] = max(0, base - shared)
    for omega in omegas:
        state.omegas[omega.owner] = omega
    return DiscoveryState(
        p=state.p,
        remaining=[v for v in state.remaining if v != source],
        cumulants=cumulants,
        observed_columns=state.observed_columns,
        n=state.n,
        iteration=state.iteration + 1,
        order=state.order + [source],
        latent_columns=state.latent_columns,
        latent_sources=state.latent_sources,
        omegas=state.omegas,
        pair_lmax_cache={k: v for k, v in cache.items() if source not in k},
    )


# ============================================================================
# Driver
# ============================================================================

def run_iteration(state: DiscoveryState, options: DiscoveryOptions) -> Tuple[DiscoveryState, IterationReport]:
    C = state.cumulants
    try:
        selection = find_source(C, state.remaining, state.pair_lmax_cache, state.n, state.iteration, options)
    except DegenerateDataError as e:
        raise DiscoveryFailure(f"Residual cumulants degenerate: {e}", iteration=state.iteration) from e
    source = selection.source
    per_pair = estimate_source_pairs(C, state.remaining, source, selection.pair_ells, options)
    s_idx = state.index_of(source)
    alignment = align_latents(
        per_pair, options.match_tol, cumulants=C, remaining=state.remaining, source=source,
        scale=float(np.sqrt(C[2][(s_idx, s_idx)])), max_designations=options.max_designations,
    )
    state = fill_B_columns(state, source, alignment, per_pair)
    omegas = estimate_overall_source_cumulants(state, source, alignment.groups, options.rank_tol)
    _, _, system_condition = _solve_omegas(state.source_columns(source), C, s_idx)
    if alignment.groups:
        logger.info(f"Iteration {state.iteration}: {len(alignment.groups)} latent(s) attached to X{source}")

    flags = selection.flags + alignment.flags
    flags += [f"degraded:{source}->{w}" for w, est in per_pair.items() if est.degraded]
    report = IterationReport(
        iteration=state.iteration,
        source=source,
        pair_ells={w: est.ell for w, est in per_pair.items()},
        groups=[g.to_dict() for g in alignment.groups],
        condition_numbers={**{str(w): est.condition_numbers for w, est in per_pair.items()},
                           "source_system": [system_condition]},
        threshold=selection.threshold,
        tests=[d.to_dict() for t in selection.tests for d in t.tests],
        estimates=[est.diagnostics() for est in per_pair.values()],
        flags=flags,
    )
    state = remove_source(state, source, alignment.groups, omegas, selection.all_ells, options.ell_max,
                          options.ratio_tol)
    return state, report


def discover(data_or_cumulants: Union[Dataset, CumulantSet], options: Optional[DiscoveryOptions] = None,
             n: Optional[int] = None) -> DiscoveryResult:
    """Recover the causal order, the latents and all compatible path matrices

    Accepts raw data or a cumulant set (pass n for the threshold schedule
    unless options.exact is set).
    """
    options = options or DiscoveryOptions()
    if isinstance(data_or_cumulants, Dataset):
        data = data_or_cumulants
        if data.n < data.p + 1:
            raise InvalidArgumentError(f"Need at least p+1={data.p + 1} samples, got {data.n}")
        cumulants = sample_cumulants(data, options.k_max)
        n = data.n
    else:
        cumulants = data_or_cumulants
        if cumulants.max_order < options.k_max:
            raise InvalidArgumentError(
                f"Cumulants up to order {options.k_max} required, got {cumulants.max_order}"
            )
        cumulants = cumulants.truncated(options.k_max)
        if n is None and not options.exact and options.threshold is None:
            raise InvalidArgumentError("Sample size n is required for cumulant input outside exact mode")

    state = DiscoveryState.initial(cumulants, n)
    reports = []
    while len(state.remaining) > 1:
        try:
            state, report = run_iteration(state, options)
        except UnderdeterminedError as e:
            if e.iteration is None:
                e.iteration = state.iteration
            raise
        reports.append(report)

    last = state.remaining[0]
    state.observed_columns[last, last] = 1.0
    state.omegas[f"eps{last}"] = SourceCumulantVector(
        f"eps{last}", {k: state.cumulants[k][(0,) * k] for k in range(2, state.cumulants.max_order + 1)}
    )
    order = state.order + [last]
    B_hat = state.B_hat
    source_cumulants = [state.omegas[f"eps{v}"] for v in range(state.p)]
    source_cumulants += [state.omegas[f"L{j}"] for j in range(len(state.latent_columns))]

    flags = [flag for r in reports for flag in r.flags]
    try:
        graph = infer_graph(B_hat, options.support_tol)
        candidates = enumerate_compatible(B_hat, graph)
        sparse = support_preserving(graph)
    except InvalidModelError as e:
        logger.warning(f"Could not derive a graph from the estimate ({e}); returning it alone")
        graph, candidates, sparse = None, [B_hat], [True]
        flags.append("no-graph")
    logger.info(f"Discovered order {order} with {B_hat.ell} latent(s), {len(candidates)} compatible matrices")
    return DiscoveryResult(order, B_hat, candidates, graph, reports, source_cumulants, flags, sparse)
