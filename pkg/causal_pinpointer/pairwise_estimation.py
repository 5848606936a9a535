#!/usr/bin/env python3
"""
Pairwise Estimation - effect candidates and exogenous-source cumulants of a pair

For a source X_1 of a pair (X_1, X_2) confounded by ell latents, the total
effects {b_21, b_2L1, ..., b_2Lell} are the roots of the minors of the
extended matrix (1, b, ..., b^(ell+1)) over A. Given the effects, the
source cumulants follow from power-matrix systems, one per order.
"""

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import EstimationFailure, IllConditionedSystemError, InvalidArgumentError
from .rank_tests import OrderPair, build_A, minimal_orders
from .tensor_cumulants import CumulantSet, SourceCumulantVector

logger = logging.getLogger(__name__)

IMAG_TOL = 1e-6
SEPARATION_TOL = 1e-8


@dataclass
class EffectPolynomial:
    """Coefficients in ascending powers of b; minor_rows are rows of the extended matrix (0 = symbolic row)"""
    coefficients: np.ndarray
    minor_rows: Tuple[int, ...]

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def roots(self) -> np.ndarray:
        return P.polyroots(self.coefficients)

    def __call__(self, b: float) -> float:
        return float(P.polyval(b, self.coefficients))


@dataclass
class PairwiseEstimate:
    """Effect candidates and per-candidate source cumulants for source s and target w"""
    source: int
    target: int
    ell: int
    effects: List[float]
    omegas: List[SourceCumulantVector]
    polynomials: List[EffectPolynomial] = field(default_factory=list)
    condition_numbers: List[float] = field(default_factory=list)
    degraded: bool = False

    def diagnostics(self) -> dict:
        return {
            "source": self.source,
            "target": self.target,
            "ell": self.ell,
            "effects": list(self.effects),
            "polynomials": [p.coefficients.tolist() for p in self.polynomials],
            "condition_numbers": list(self.condition_numbers),
            "degraded": self.degraded,
        }


def _row_orders(orders: OrderPair) -> List[int]:
    rows = []
    for k in range(orders.k1, orders.k2 + 1):
        rows.extend([k] * (k - orders.k1 + 1))
    return rows


def extended_matrix(A: np.ndarray, b: float) -> np.ndarray:
    """A with the row (1, b, ..., b^(cols-1)) on top"""
    A = np.asarray(A, dtype=float)
    return np.vstack([b ** np.arange(A.shape[1]), A])


def effect_polynomials(A: np.ndarray, ell: int, orders: Optional[OrderPair] = None,
                       count: int = 2) -> List[EffectPolynomial]:
    """Polynomials in b from the (ell+2)-minors of the extended matrix that contain the symbolic row

    Row sets are ranked by the total cumulant order of their rows and the
    `count` lowest are used. For ell=0 these are the covariance regression
    and its third-order counterpart.
    """
    A = np.asarray(A, dtype=float)
    size = ell + 1
    if A.ndim != 2 or A.shape[1] != ell + 2:
        raise InvalidArgumentError(f"A must have {ell + 2} columns for ell={ell}, got shape {A.shape}")
    if A.shape[0] < size:
        raise InvalidArgumentError(f"A needs at least {size} rows for ell={ell}, got {A.shape[0]}")
    orders = orders or minimal_orders(ell)
    row_orders = _row_orders(orders)
    if len(row_orders) != A.shape[0]:
        row_orders = list(range(A.shape[0]))
    ranked = sorted(combinations(range(A.shape[0]), size),
                    key=lambda rows: (sum(row_orders[r] for r in rows), rows))
    polynomials = []
    for rows in ranked[:count]:
        sub = A[list(rows), :]
        coefficients = np.array([
            (-1) ** j * np.linalg.det(np.delete(sub, j, axis=1)) for j in range(ell + 2)
        ])
        polynomials.append(EffectPolynomial(coefficients, (0,) + tuple(r + 1 for r in rows)))
    return polynomials


def _real_roots(poly: EffectPolynomial, im_tol: float) -> np.ndarray:
    roots = poly.roots()
    usable = np.abs(roots.imag) <= im_tol * (1 + np.abs(roots.real))
    return np.sort(roots[usable].real)


def _match(base: np.ndarray, other: np.ndarray) -> np.ndarray:
    """Reorder `other` to pair greedily with `base` by nearest distance"""
    distances = np.abs(base[:, None] - other[None, :])
    matched = np.empty_like(base)
    free_base, free_other = set(range(len(base))), set(range(len(other)))
    while free_base:
        i, j = min(((i, j) for i in free_base for j in free_other), key=lambda ij: distances[ij])
        matched[i] = other[j]
        free_base.discard(i)
        free_other.discard(j)
    return matched


def solve_effects(polys: Sequence[EffectPolynomial], ell: int, im_tol: float = IMAG_TOL) -> List[float]:
    """Averaged real roots of the effect polynomials, sorted ascending"""
    if not polys:
        raise InvalidArgumentError("No effect polynomials given")
    root_sets = []
    for poly in polys:
        roots = _real_roots(poly, im_tol)
        if len(roots) < ell + 1:
            raise EstimationFailure(
                f"Effect polynomial of degree {poly.degree} gave {len(roots)} usable real roots, need {ell + 1}",
                diagnostics={"coefficients": poly.coefficients.tolist(),
                             "roots": [complex(r) for r in poly.roots()]},
            )
        root_sets.append(roots[:ell + 1])
    base = root_sets[0]
    total = base.copy()
    for roots in root_sets[1:]:
        total += _match(base, roots)
    return sorted((total / len(root_sets)).tolist())


def power_matrix(effects: Sequence[float], k: int) -> np.ndarray:
    """Rows b^0 .. b^(k-1), one column per effect"""
    return np.asarray(effects, dtype=float)[None, :] ** np.arange(k)[:, None]


def latent_source_cumulants(effects: Sequence[float], C: CumulantSet, k_max: Optional[int] = None,
                            sep_tol: float = SEPARATION_TOL) -> Tuple[List[SourceCumulantVector], List[float]]:
    """Cumulants of the exogenous sources of a pair from its effect candidates

    C is the pairwise cumulant set with the source as index 0. For each
    order k >= max(2, ell+1) the entries c_{0..0}, c_{0..01}, ..., c_{01..1}
    equal the power matrix times omega^(k). Returns one vector per
    candidate and the condition number of each order's system.
    """
    effects = np.asarray(effects, dtype=float)
    k_max = k_max or C.max_order
    m = len(effects)
    if k_max < m:
        raise InvalidArgumentError(f"k_max={k_max} is below the {m} unknowns per order")
    if m > 1:
        gaps = np.abs(effects[:, None] - effects[None, :])[np.triu_indices(m, 1)]
        if gaps.min() < sep_tol:
            raise IllConditionedSystemError(
                f"Effect candidates {effects.tolist()} are closer than {sep_tol}",
                diagnostics={"effects": effects.tolist()},
            )
    values = [{} for _ in range(m)]
    conditions = []
    for k in range(max(2, m), k_max + 1):
        V = power_matrix(effects, k)
        rhs = np.array([C[k][(0,) * (k - r) + (1,) * r] for r in range(k)])
        omega, *_ = np.linalg.lstsq(V, rhs, rcond=None)
        conditions.append(float(np.linalg.cond(V)))
        for j in range(m):
            values[j][k] = float(omega[j])
    return [SourceCumulantVector(f"candidate{j}", values[j]) for j in range(m)], conditions


def estimate_pair(C: CumulantSet, source: int, target: int, ell: int, k_max: Optional[int] = None,
                  im_tol: float = IMAG_TOL, sep_tol: float = SEPARATION_TOL) -> PairwiseEstimate:
    """Effects and source cumulants for the marginal model of (source, target) with ell latents

    C is the pairwise cumulant set, source at index 0. Raises
    EstimationFailure when the effects cannot be determined.
    """
    orders = minimal_orders(ell)
    A = build_A(C, (0, 1), orders)
    polynomials = effect_polynomials(A, ell, orders)
    effects = solve_effects(polynomials, ell, im_tol)
    omegas, conditions = latent_source_cumulants(effects, C, k_max, sep_tol)
    return PairwiseEstimate(source, target, ell, effects, omegas, polynomials, conditions)
