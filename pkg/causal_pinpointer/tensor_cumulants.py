#!/usr/bin/env python3
"""
Tensor Cumulants - symmetric moment/cumulant tensors and their arithmetic

Provides:
- SymmetricTensor storage keyed by non-decreasing multi-index
- Plug-in sample moments and cumulants (set-partition formula, orders <= 8)
- Exact population cumulants of X = B eta for known path matrices
- Flattenings, marginalization and removal of independent components
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations_with_replacement
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DataFormatError, DegenerateDataError, InvalidArgumentError

logger = logging.getLogger(__name__)

MAX_ORDER = 8

MultiIndex = Tuple[int, ...]


def multi_indices(dim: int, order: int) -> List[MultiIndex]:
    """All non-decreasing multi-indices of length `order` over range(dim), lexicographic"""
    return list(combinations_with_replacement(range(dim), order))


def multiset_count(dim: int, order: int) -> int:
    return math.comb(dim + order - 1, order)


@dataclass(frozen=True)
class SymmetricTensor:
    """Order-k symmetric tensor over `dim` variables, one entry per sorted multi-index"""
    order: int
    dim: int
    entries: Dict[MultiIndex, float] = field(repr=False)

    def __post_init__(self):
        if self.order < 1 or self.order > MAX_ORDER:
            raise InvalidArgumentError(f"Tensor order must be in 1..{MAX_ORDER}, got {self.order}")
        if self.dim < 1:
            raise InvalidArgumentError(f"Tensor dimension must be positive, got {self.dim}")
        expected = multiset_count(self.dim, self.order)
        if len(self.entries) != expected:
            raise InvalidArgumentError(
                f"Order-{self.order} tensor over {self.dim} variables needs {expected} entries, "
                f"got {len(self.entries)}"
            )

    def __getitem__(self, index: Iterable[int]) -> float:
        return self.entries[tuple(sorted(index))]

    @classmethod
    def zeros(cls, order: int, dim: int) -> "SymmetricTensor":
        return cls(order, dim, {idx: 0.0 for idx in multi_indices(dim, order)})

    @classmethod
    def from_function(cls, order: int, dim: int, fn) -> "SymmetricTensor":
        return cls(order, dim, {idx: float(fn(idx)) for idx in multi_indices(dim, order)})

    def keys(self) -> List[MultiIndex]:
        return list(self.entries.keys())

    def max_abs_diff(self, other: "SymmetricTensor") -> float:
        if (self.order, self.dim) != (other.order, other.dim):
            raise InvalidArgumentError("Cannot compare tensors of different shape")
        return max(abs(v - other.entries[k]) for k, v in self.entries.items())

    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.entries.values())


@dataclass(frozen=True)
class CumulantSet:
    """Cumulant tensors of orders 2..max_order for one set of variables"""
    dim: int
    tensors: Dict[int, SymmetricTensor] = field(repr=False)

    def __post_init__(self):
        if not self.tensors:
            raise InvalidArgumentError("CumulantSet needs at least the order-2 tensor")
        orders = sorted(self.tensors)
        if orders != list(range(2, orders[-1] + 1)):
            raise InvalidArgumentError(f"Cumulant orders must be contiguous from 2, got {orders}")
        for order, tensor in self.tensors.items():
            if tensor.dim != self.dim or tensor.order != order:
                raise InvalidArgumentError(
                    f"Tensor stored under order {order} has shape (order={tensor.order}, dim={tensor.dim}), "
                    f"expected dim {self.dim}"
                )

    @property
    def max_order(self) -> int:
        return max(self.tensors)

    def __getitem__(self, order: int) -> SymmetricTensor:
        if order not in self.tensors:
            raise InvalidArgumentError(f"Order {order} not available (max order {self.max_order})")
        return self.tensors[order]

    def value(self, index: Sequence[int]) -> float:
        return self[len(index)][index]

    def variances(self) -> np.ndarray:
        return np.array([self.tensors[2][(i, i)] for i in range(self.dim)])

    def standardized(self) -> "CumulantSet":
        """Cumulants of the variables divided by their standard deviations"""
        variances = self.variances()
        if np.any(~np.isfinite(variances)) or np.any(variances <= 0):
            raise DegenerateDataError(f"Cannot standardize cumulants with variances {variances.tolist()}")
        inv_sd = 1.0 / np.sqrt(variances)
        tensors = {}
        for order, tensor in self.tensors.items():
            tensors[order] = SymmetricTensor(order, self.dim, {
                idx: value * float(np.prod(inv_sd[list(idx)])) for idx, value in tensor.entries.items()
            })
        return CumulantSet(self.dim, tensors)

    def truncated(self, max_order: int) -> "CumulantSet":
        if max_order < 2 or max_order > self.max_order:
            raise InvalidArgumentError(f"Cannot truncate order {self.max_order} set to {max_order}")
        return CumulantSet(self.dim, {k: t for k, t in self.tensors.items() if k <= max_order})


@dataclass
class Dataset:
    """n x p sample matrix"""
    values: np.ndarray
    names: Optional[List[str]] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values.reshape(-1, 1)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise InvalidArgumentError(f"Dataset must be a non-empty n x p matrix, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgumentError("Dataset contains missing or non-finite values")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def centered(self) -> "Dataset":
        return Dataset(self.values - self.values.mean(axis=0), self.names)

    @classmethod
    def from_csv(cls, path: Union[str, Path], header: Optional[bool] = None) -> "Dataset":
        """Read a comma-separated file, one row per sample

        With header=None the first line is treated as a header when it does
        not parse as numbers.
        """
        path = Path(path)
        with open(path, "r", encoding="utf-8") as f:
            first_line = f.readline().strip()
        if not first_line:
            raise DataFormatError(f"{path} is empty")
        names = None
        if header is None:
            try:
                [float(cell) for cell in first_line.split(",")]
                header = False
            except ValueError:
                header = True
        if header:
            names = [cell.strip() for cell in first_line.split(",")]
        try:
            values = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2, encoding="utf-8")
        except ValueError as e:
            raise DataFormatError(f"Failed to parse {path}: {e}") from e
        return cls(values, names)


@dataclass(frozen=True)
class SourceCumulantVector:
    """Cumulants omega^(k) of one exogenous source over a contiguous order range"""
    owner: str
    values: Dict[int, float]

    def __post_init__(self):
        orders = sorted(self.values)
        if not orders:
            raise InvalidArgumentError(f"Source {self.owner!r} has no cumulants")
        if orders[0] < 2 or orders[-1] > MAX_ORDER or orders != list(range(orders[0], orders[-1] + 1)):
            raise InvalidArgumentError(f"Source {self.owner!r} has invalid order range {orders}")

    @property
    def orders(self) -> List[int]:
        return sorted(self.values)

    def vector(self, orders: Iterable[int]) -> np.ndarray:
        return np.array([self.values[k] for k in orders])

    def scaled(self, factor: float) -> "SourceCumulantVector":
        """Cumulants of factor * source"""
        return SourceCumulantVector(self.owner, {k: v * factor ** k for k, v in self.values.items()})


# ============================================================================
# Moments and cumulants
# ============================================================================

def _moment_tensors(values: np.ndarray, max_order: int, min_order: int = 2) -> Dict[int, SymmetricTensor]:
    n, m = values.shape
    entries: Dict[int, Dict[MultiIndex, float]] = {k: {} for k in range(min_order, max_order + 1)}

    # depth-first over sorted prefixes so each product column is built once
    def extend(prefix: MultiIndex, start: int, product: np.ndarray):
        depth = len(prefix)
        if depth >= min_order:
            entries[depth][prefix] = float(product.mean())
        if depth == max_order:
            return
        for i in range(start, m):
            extend(prefix + (i,), i, product * values[:, i])

    extend((), 0, np.ones(n))
    return {k: SymmetricTensor(k, m, e) for k, e in entries.items()}


def sample_moments(data: Dataset, k: int) -> SymmetricTensor:
    """Order-k moment tensor: entry (i_1..i_k) = mean over rows of the product of those columns"""
    if k < 2 or k > MAX_ORDER:
        raise InvalidArgumentError(f"Moment order must be in 2..{MAX_ORDER}, got {k}")
    if data.n < 1:
        raise InvalidArgumentError("Cannot compute moments of an empty dataset")
    return _moment_tensors(data.values, k, min_order=k)[k]


@lru_cache(maxsize=None)
def set_partitions(k: int) -> Tuple[Tuple[MultiIndex, ...], ...]:
    """All set partitions of range(k), blocks as increasing position tuples"""
    if k == 0:
        return ((),)
    partitions = []
    for partial in set_partitions(k - 1):
        for b in range(len(partial)):
            partitions.append(partial[:b] + (partial[b] + (k - 1,),) + partial[b + 1:])
        partitions.append(partial + ((k - 1,),))
    return tuple(partitions)


@lru_cache(maxsize=None)
def _weighted_partitions(k: int, centered: bool) -> Tuple[Tuple[float, Tuple[MultiIndex, ...]], ...]:
    weighted = []
    for partition in set_partitions(k):
        if centered and any(len(block) == 1 for block in partition):
            continue
        h = len(partition)
        weighted.append(((-1) ** (h - 1) * math.factorial(h - 1), partition))
    return tuple(weighted)


def cumulants_from_moments(moments: Sequence[SymmetricTensor]) -> SymmetricTensor:
    """Order-k cumulant tensor from moment tensors of orders 1..k

    k is the largest order supplied. The order-1 tensor may be omitted for
    centered data; every order 2..k must be present.
    """
    by_order = {t.order: t for t in moments}
    if not by_order:
        raise InvalidArgumentError("No moment tensors supplied")
    k = max(by_order)
    missing = [order for order in range(2, k + 1) if order not in by_order]
    if missing:
        raise InvalidArgumentError(f"Missing moment tensors of orders {missing}")
    dims = {t.dim for t in by_order.values()}
    if len(dims) != 1:
        raise InvalidArgumentError(f"Moment tensors disagree on dimension: {sorted(dims)}")
    dim = dims.pop()

    centered = 1 not in by_order or by_order[1].is_zero()
    weighted = _weighted_partitions(k, centered)
    entries = {}
    for idx in multi_indices(dim, k):
        total = 0.0
        for weight, partition in weighted:
            term = weight
            for block in partition:
                # idx is sorted and block positions increase, so the sub-index is sorted too
                term *= by_order[len(block)].entries[tuple(idx[i] for i in block)]
            total += term
        entries[idx] = total
    return SymmetricTensor(k, dim, entries)


def sample_cumulants(data: Dataset, k_max: int) -> CumulantSet:
    """Plug-in cumulants of orders 2..k_max of the centered data"""
    if k_max < 2 or k_max > MAX_ORDER:
        raise InvalidArgumentError(f"k_max must be in 2..{MAX_ORDER}, got {k_max}")
    centered = data.centered()
    moments = _moment_tensors(centered.values, k_max)
    tensors = {}
    for k in range(2, k_max + 1):
        tensors[k] = cumulants_from_moments([moments[j] for j in range(2, k + 1)])
    logger.debug(f"Computed cumulants up to order {k_max} for n={data.n}, p={data.p}")
    return CumulantSet(data.p, tensors)


def standardize(data: Dataset) -> Dataset:
    """Center each column and scale it to unit empirical variance"""
    centered = data.centered()
    sd = centered.values.std(axis=0)
    zero = np.where(sd == 0)[0]
    if zero.size:
        raise DegenerateDataError(f"Columns {zero.tolist()} have zero variance")
    return Dataset(centered.values / sd, data.names)


def flatten(T: SymmetricTensor, h: int) -> np.ndarray:
    """h-th flattening: rows by sorted (i_{h+1}..i_k), columns by sorted (i_1..i_h)"""
    if h < 1 or h > T.order:
        raise InvalidArgumentError(f"Flattening index must be in 1..{T.order}, got {h}")
    rows = multi_indices(T.dim, T.order - h)
    cols = multi_indices(T.dim, h)
    matrix = np.empty((len(rows), len(cols)))
    for r, row in enumerate(rows):
        for c, col in enumerate(cols):
            matrix[r, c] = T[col + row]
    return matrix


# ============================================================================
# Exact cumulants and cumulant arithmetic
# ============================================================================

def _as_matrix(B) -> np.ndarray:
    return np.asarray(getattr(B, "values", B), dtype=float)


def _omega_matrix(omegas: Sequence[SourceCumulantVector], orders: Sequence[int]) -> np.ndarray:
    rows = []
    for omega in omegas:
        missing = [k for k in orders if k not in omega.values]
        if missing:
            raise InvalidArgumentError(f"Source {omega.owner!r} lacks cumulants of orders {missing}")
        rows.append([omega.values[k] for k in orders])
    return np.array(rows).reshape(len(omegas), len(orders))


def _component_tensor(matrix: np.ndarray, omega: np.ndarray, order: int,
                      indices: Optional[Sequence[MultiIndex]] = None) -> Dict[MultiIndex, float]:
    """sum_j omega_j * prod_r matrix[i_r, j] for each multi-index"""
    if indices is None:
        indices = multi_indices(matrix.shape[0], order)
    if matrix.shape[1] == 0:
        return {idx: 0.0 for idx in indices}
    idx_array = np.array(indices, dtype=int).reshape(len(indices), order)
    products = np.prod(matrix[idx_array], axis=1)
    values = products @ omega
    return {idx: float(v) for idx, v in zip(indices, values)}


def exact_model_cumulants(B, source_cumulants: Sequence[SourceCumulantVector], k_max: int) -> CumulantSet:
    """Population cumulants of X = B eta with independent sources eta_j"""
    matrix = _as_matrix(B)
    if k_max < 2 or k_max > MAX_ORDER:
        raise InvalidArgumentError(f"k_max must be in 2..{MAX_ORDER}, got {k_max}")
    if len(source_cumulants) != matrix.shape[1]:
        raise InvalidArgumentError(
            f"Path matrix has {matrix.shape[1]} columns but {len(source_cumulants)} source cumulant vectors were given"
        )
    orders = list(range(2, k_max + 1))
    omega = _omega_matrix(source_cumulants, orders)
    dim = matrix.shape[0]
    tensors = {k: SymmetricTensor(k, dim, _component_tensor(matrix, omega[:, i], k))
               for i, k in enumerate(orders)}
    return CumulantSet(dim, tensors)


def subtract_component_cumulants(C: CumulantSet, columns: Sequence[Sequence[float]],
                                 omegas: Sequence[SourceCumulantVector],
                                 drop: Optional[int] = None) -> CumulantSet:
    """Remove independent components X -> X - sum_j columns[j] * eta_j

    By independence the cumulants of the remainder are the originals minus
    sum_j omega_j^(k) prod b_{i j}. With `drop`, the index of the removed
    source is then marginalized out.
    """
    if len(columns) != len(omegas):
        raise InvalidArgumentError(f"{len(columns)} columns but {len(omegas)} cumulant vectors")
    matrix = np.column_stack([np.asarray(c, dtype=float) for c in columns]) if columns \
        else np.zeros((C.dim, 0))
    if matrix.shape[0] != C.dim:
        raise InvalidArgumentError(f"Columns have length {matrix.shape[0]}, cumulants have dimension {C.dim}")
    if drop is not None and not 0 <= drop < C.dim:
        raise InvalidArgumentError(f"Index {drop} out of range for dimension {C.dim}")
    orders = list(range(2, C.max_order + 1))
    omega = _omega_matrix(omegas, orders)

    keep = [i for i in range(C.dim) if i != drop]
    if not keep:
        raise InvalidArgumentError("Cannot drop the only remaining variable")
    tensors = {}
    for i, k in enumerate(orders):
        new_indices = multi_indices(len(keep), k)
        old_indices = [tuple(keep[j] for j in idx) for idx in new_indices]
        removed = _component_tensor(matrix, omega[:, i], k, old_indices)
        tensors[k] = SymmetricTensor(k, len(keep), {
            new: C[k].entries[old] - removed[old] for new, old in zip(new_indices, old_indices)
        })
    return CumulantSet(len(keep), tensors)


def marginal_cumulants(C: CumulantSet, indices: Sequence[int]) -> CumulantSet:
    """Cumulants of the sub-vector X_indices, relabeled 0..len(indices)-1 in the given order"""
    indices = list(indices)
    if len(set(indices)) != len(indices):
        raise InvalidArgumentError(f"Duplicate indices in {indices}")
    if any(not 0 <= i < C.dim for i in indices):
        raise InvalidArgumentError(f"Indices {indices} out of range for dimension {C.dim}")
    tensors = {}
    for k, tensor in C.tensors.items():
        tensors[k] = SymmetricTensor(k, len(indices), {
            idx: tensor[[indices[j] for j in idx]] for idx in multi_indices(len(indices), k)
        })
    return CumulantSet(len(indices), tensors)
