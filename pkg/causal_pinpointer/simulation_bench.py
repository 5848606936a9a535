#!/usr/bin/env python3
"""
Simulation Bench - synthetic latent-variable models, replicated runs and scoring

Models follow the benchmark protocol: edge weights uniform on
[-0.9, -0.5] U [0.5, 0.9], observed labels randomly permuted, and i.i.d.
noise from a centered, unit-variance gamma, log-normal or beta family.
Runs are scored by RMSE against the closest compatible path matrix and
by precision/recall of the implied causal paths.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import permutations
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from prometheus_client import CollectorRegistry, Counter, Histogram
from scipy import stats
from scipy.special import comb

from .errors import (
    AlignmentError,
    CausalPinpointerError,
    DegenerateDataError,
    DiscoveryFailure,
    EstimationFailure,
    InvalidArgumentError,
    NumericError,
    UnderdeterminedError,
)
from .graph_model import LatentDag, ParamSet, PathMatrix, graph_from_edges, path_matrix, reference_graph
from .recursive_discovery import DiscoveryOptions, discover
from .schemas import ExperimentConfig, GraphModel, MetricsSummaryModel
from .tensor_cumulants import (
    CumulantSet,
    Dataset,
    SourceCumulantVector,
    SymmetricTensor,
    cumulants_from_moments,
    exact_model_cumulants,
)

logger = logging.getLogger(__name__)

WEIGHT_RANGE = (0.5, 0.9)
ORACLE_SCALE_RANGE = (0.5, 1.5)

# family -> (scipy distribution, default shape parameters)
NOISE_FAMILIES = {
    "gamma": (stats.gamma, {"a": 2.0}),
    "lognormal": (stats.lognorm, {"s": 0.5}),
    "beta": (stats.beta, {"a": 2.0, "b": 5.0}),
}

# error class -> status label in reports
FAILURE_STATUS = [
    (UnderdeterminedError, "underdetermined"),
    (AlignmentError, "alignment_error"),
    (EstimationFailure, "estimation_failure"),
    (DegenerateDataError, "degenerate"),
    (NumericError, "numeric_error"),
    (DiscoveryFailure, "discovery_failure"),
    (CausalPinpointerError, "error"),
]

NoiseSampler = Callable[[Tuple[int, int], np.random.Generator], np.ndarray]


# ============================================================================
# Models
# ============================================================================

def noise_distribution(noise: str, params: Optional[Dict[str, float]] = None):
    """Frozen scipy distribution of a noise family; params override its default shape"""
    if noise not in NOISE_FAMILIES:
        raise InvalidArgumentError(f"Unknown noise family {noise!r}; choose from {sorted(NOISE_FAMILIES)}")
    family, defaults = NOISE_FAMILIES[noise]
    params = params or {}
    unknown = set(params) - set(defaults)
    if unknown:
        raise InvalidArgumentError(f"{noise} noise takes shape parameters {sorted(defaults)}, got {sorted(unknown)}")
    if any(value <= 0 for value in params.values()):
        raise InvalidArgumentError(f"Shape parameters must be positive, got {params}")
    return family(**{**defaults, **params})


def family_cumulants(noise: str, k_max: int, params: Optional[Dict[str, float]] = None) -> SourceCumulantVector:
    """Exact cumulants of orders 2..k_max of the standardized noise family"""
    dist = noise_distribution(noise, params)
    raw = [1.0] + [float(dist.moment(r)) for r in range(1, k_max + 1)]
    mean = raw[1]
    central = {
        r: sum(comb(r, i, exact=True) * raw[i] * (-mean) ** (r - i) for i in range(r + 1))
        for r in range(2, k_max + 1)
    }
    moments = [SymmetricTensor(r, 1, {(0,) * r: central[r]}) for r in range(2, k_max + 1)]
    values = {}
    for k in range(2, k_max + 1):
        cumulant = cumulants_from_moments(moments[:k - 1]).entries[(0,) * k]
        values[k] = cumulant / central[2] ** (k / 2)
    return SourceCumulantVector(noise, values)


def two_node_graph(ell: int, edge: bool = True) -> LatentDag:
    """X_0 -> X_1 (optional) with ell latents pointing to both"""
    return graph_from_edges(2, [(0, 1)] if edge else [], [[0, 1]] * ell)


def random_latent_dag(p: int, ell: int, rng: np.random.Generator, edge_prob: float = 0.5) -> LatentDag:
    """Random DAG over a random order plus ell latents with at least two children each"""
    if ell and p < 2:
        raise InvalidArgumentError("Latents need at least two observed nodes")
    order = rng.permutation(p)
    observed = [(int(order[a]), int(order[b])) for a in range(p) for b in range(a + 1, p)
                if rng.random() < edge_prob]
    latent_children = []
    for _ in range(ell):
        size = int(rng.integers(2, p + 1))
        latent_children.append(sorted(int(v) for v in rng.choice(p, size=size, replace=False)))
    return graph_from_edges(p, observed, latent_children)


def _random_weights(rng: np.random.Generator, size) -> np.ndarray:
    magnitude = rng.uniform(*WEIGHT_RANGE, size=size)
    return magnitude * rng.choice([-1.0, 1.0], size=size)


def _resolve_graph(setting: Union[str, LatentDag]) -> LatentDag:
    if isinstance(setting, LatentDag):
        return setting
    if setting.endswith(".json"):
        return GraphModel.load(setting).to_graph()
    return reference_graph(setting)


def sample_model(setting: Union[str, LatentDag], rng: np.random.Generator,
                 permute: bool = True) -> Tuple[LatentDag, ParamSet]:
    """Random weights on the setting's graph, with observed labels permuted"""
    g = _resolve_graph(setting)
    if permute:
        g = g.relabeled(rng.permutation(g.p))
    lam = np.zeros((g.p, g.p))
    gamma = np.zeros((g.p, g.ell))
    for j, i in sorted(g.observed_edges):
        lam[i, j] = _random_weights(rng, None)
    for j, i in sorted(g.latent_edges):
        gamma[i, j] = _random_weights(rng, None)
    return g, ParamSet(lam, gamma)


@dataclass
class SemModel:
    """Linear SEM with latent sources; scales are per-source standard deviations"""
    graph: LatentDag
    params: ParamSet
    noise: str = "gamma"
    scales: Optional[np.ndarray] = None
    omegas: Optional[List[SourceCumulantVector]] = None
    noise_params: Optional[Dict[str, float]] = None

    @property
    def B(self) -> PathMatrix:
        return path_matrix(self.params)

    @property
    def source_count(self) -> int:
        return self.graph.p + self.graph.ell

    def source_scales(self) -> np.ndarray:
        if self.scales is None:
            return np.ones(self.source_count)
        return np.asarray(self.scales, dtype=float)

    def source_cumulants(self, k_max: int) -> List[SourceCumulantVector]:
        if self.omegas is not None:
            vectors = []
            for omega in self.omegas:
                missing = [k for k in range(2, k_max + 1) if k not in omega.values]
                if missing:
                    raise InvalidArgumentError(f"Source {omega.owner!r} lacks cumulants of orders {missing}")
                vectors.append(SourceCumulantVector(omega.owner, {k: omega.values[k] for k in range(2, k_max + 1)}))
            return vectors
        base = family_cumulants(self.noise, k_max, self.noise_params)
        owners = [f"eps{v}" for v in range(self.graph.p)] + [f"L{j}" for j in range(self.graph.ell)]
        return [SourceCumulantVector(owner, base.scaled(s).values)
                for owner, s in zip(owners, self.source_scales())]


def exact_cumulants_for(model: SemModel, k_max: int) -> CumulantSet:
    return exact_model_cumulants(model.B, model.source_cumulants(k_max), k_max)


def sample_data(model: SemModel, n: int, rng: np.random.Generator,
                noise: Union[str, NoiseSampler, None] = None) -> Dataset:
    """n draws of X = B eta with centered, unit-variance (then scaled) sources"""
    if n < 1:
        raise InvalidArgumentError(f"n must be positive, got {n}")
    noise = noise or model.noise
    shape = (model.source_count, n)
    if callable(noise):
        eta = np.asarray(noise(shape, rng), dtype=float)
    else:
        dist = noise_distribution(noise, model.noise_params if noise == model.noise else None)
        eta = (dist.rvs(size=shape, random_state=rng) - dist.mean()) / dist.std()
    eta = eta * model.source_scales()[:, None]
    return Dataset((model.B.values @ eta).T)


# ============================================================================
# Metrics
# ============================================================================

def _padded(values: np.ndarray, columns: int) -> np.ndarray:
    return np.hstack([values, np.zeros((values.shape[0], columns - values.shape[1]))])


def _aligned_differences(B_true: PathMatrix, candidate: PathMatrix):
    """Normalized difference matrices over latent-column permutations of the candidate"""
    if candidate.p != B_true.p:
        raise InvalidArgumentError(f"Candidate has {candidate.p} rows, truth has {B_true.p}")
    columns = max(B_true.values.shape[1], candidate.values.shape[1])
    truth = _padded(B_true.column_normalized(), columns)
    estimate = _padded(candidate.column_normalized(), columns)
    p = B_true.p
    for perm in permutations(range(p, columns)):
        yield truth - estimate[:, list(range(p)) + list(perm)]


def rmse_metric(B_true: PathMatrix, candidates: Sequence[PathMatrix]) -> float:
    """Smallest RMSE between normalized truth and any candidate, zero-padding missing columns"""
    if not candidates:
        raise InvalidArgumentError("No candidate path matrices to compare")
    return min(float(np.sqrt(np.mean(diff ** 2)))
               for candidate in candidates for diff in _aligned_differences(B_true, candidate))


def max_abs_match_error(B_true: PathMatrix, candidates: Sequence[PathMatrix]) -> float:
    """Smallest max-abs entry difference to a candidate of the same shape (inf if none)"""
    errors = [float(np.max(np.abs(diff)))
              for candidate in candidates if candidate.values.shape == B_true.values.shape
              for diff in _aligned_differences(B_true, candidate)]
    return min(errors) if errors else float("inf")


def best_candidate(B_true: PathMatrix, candidates: Sequence[PathMatrix]) -> PathMatrix:
    return min(candidates, key=lambda c: rmse_metric(B_true, [c]))


def path_precision_recall(g_true: LatentDag, B_hat: PathMatrix, tol: float = 1e-3) -> Tuple[float, float]:
    """Precision and recall of directed paths v ~> w read off |b_wv| > tol

    Precision is 1 when no path is predicted, recall is 1 when the true
    graph has no paths.
    """
    normalized = B_hat.column_normalized()
    p = g_true.p
    predicted = {(v, w) for v in range(p) for w in range(p) if v != w and abs(normalized[w, v]) > tol}
    truth = {(v, w) for v in range(p) for w in g_true.descendants(v) if w != v}
    hits = len(predicted & truth)
    precision = hits / len(predicted) if predicted else 1.0
    recall = hits / len(truth) if truth else 1.0
    return precision, recall


# ============================================================================
# Experiments
# ============================================================================

@dataclass
class ReplicationResult:
    rep: int
    status: str
    seconds: float
    rmse: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _status_for(error: Exception) -> str:
    return next(label for cls, label in FAILURE_STATUS if isinstance(error, cls))


def discovery_options(config: ExperimentConfig) -> DiscoveryOptions:
    return DiscoveryOptions(
        ell_max=config.resolved_ell_max(),
        k_max=config.k_max,
        exact=config.exact,
        threshold_scale=config.threshold_scale,
        match_tol=None if config.exact else config.match_tol,
    )


def run_replication(config: ExperimentConfig, rep: int) -> ReplicationResult:
    """Sample, discover and score one replication; failures become a status"""
    started = time.perf_counter()
    rng = np.random.default_rng([config.seed, rep])
    options = discovery_options(config)
    g, params = sample_model(config.setting, rng)
    scale_range = config.source_scales or (ORACLE_SCALE_RANGE if config.exact else None)
    scales = rng.uniform(*scale_range, size=g.p + g.ell) if scale_range else None
    model = SemModel(g, params, config.noise, scales, noise_params=config.noise_params)
    try:
        if config.exact:
            result = discover(exact_cumulants_for(model, options.k_max), options)
        else:
            result = discover(sample_data(model, config.n, rng), options)
    except CausalPinpointerError as e:
        logger.debug(f"rep {rep} failed: {e}")
        return ReplicationResult(rep, _status_for(e), time.perf_counter() - started, message=str(e))
    B_true = model.B
    rmse = rmse_metric(B_true, result.candidates)
    precision, recall = path_precision_recall(g, best_candidate(B_true, result.candidates), config.path_tol)
    return ReplicationResult(rep, "ok", time.perf_counter() - started, rmse, precision, recall)


@dataclass
class MetricsReport:
    config: ExperimentConfig
    replications: List[ReplicationResult]
    registry: Optional[CollectorRegistry] = field(default=None, repr=False)

    def _values(self, name: str) -> List[float]:
        return [getattr(r, name) for r in self.replications if r.ok]

    @property
    def successes(self) -> int:
        return sum(1 for r in self.replications if r.ok)

    @property
    def failure_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for r in self.replications:
            if not r.ok:
                counts[r.status] = counts.get(r.status, 0) + 1
        return counts

    def aggregate(self, name: str) -> Tuple[Optional[float], Optional[float]]:
        """(median, mean) over successful replications"""
        values = self._values(name)
        if not values:
            return None, None
        return float(np.median(values)), float(np.mean(values))

    def summary(self) -> MetricsSummaryModel:
        rmse = self.aggregate("rmse")
        precision = self.aggregate("precision")
        recall = self.aggregate("recall")
        return MetricsSummaryModel(
            setting=self.config.setting,
            noise=self.config.noise,
            n=self.config.n,
            reps=self.config.reps,
            successes=self.successes,
            rmse_median=rmse[0], rmse_mean=rmse[1],
            precision_median=precision[0], precision_mean=precision[1],
            recall_median=recall[0], recall_mean=recall[1],
            failure_counts=self.failure_counts,
        )

    def rows(self) -> List[dict]:
        return [{
            "setting": self.config.setting,
            "noise": self.config.noise,
            "n": self.config.n,
            "rep": r.rep,
            "rmse": r.rmse,
            "precision": r.precision,
            "recall": r.recall,
            "status": r.status,
        } for r in self.replications]


def run_experiment(config: ExperimentConfig) -> MetricsReport:
    """All replications of one grid cell, in worker processes when config.jobs > 1"""
    noise_distribution(config.noise, config.noise_params)
    registry = CollectorRegistry()
    outcomes = Counter(
        "causal_pinpointer_replications_total",
        "Benchmark replications by outcome",
        ["status"],
        registry=registry,
    )
    duration = Histogram(
        "causal_pinpointer_replication_seconds",
        "Wall time per replication",
        registry=registry,
    )
    logger.info(f"Running {config.reps} replications of setting {config.setting} "
                f"({config.noise}, n={config.n}, exact={config.exact})")
    reps = range(config.reps)
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(run_replication, [config] * config.reps, reps))
    else:
        results = [run_replication(config, rep) for rep in reps]
    for result in results:
        outcomes.labels(status=result.status).inc()
        duration.observe(result.seconds)
    report = MetricsReport(config, sorted(results, key=lambda r: r.rep), registry)
    logger.info(f"{report.successes}/{config.reps} replications succeeded")
    return report
